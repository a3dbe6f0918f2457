"""Rock-Paper-Scissors+ as a sequential game.

P1 moves first without revealing its choice; P2 then moves. Ordinary RPS
payoffs, except that any win or loss involving Scissors is worth 2.
"""

from __future__ import annotations

from .tree import CHANCE, P1, P2, TERMINAL

MOVES = ("R", "P", "S")
_BEATS = {"R": "S", "P": "R", "S": "P"}


def rps_payoff(a: str, b: str) -> float:
    """Payoff to the player choosing ``a`` against ``b``."""
    if a == b:
        return 0.0
    stake = 2.0 if "S" in (a, b) else 1.0
    return stake if _BEATS[a] == b else -stake


class RPSPlus:
    name = "rps_plus"
    big_blind = 1.0

    def initial_state(self):
        return ()

    def actor(self, state):
        return (P1, P2, TERMINAL)[len(state)]

    def legal_actions(self, state):
        return list(MOVES)

    def chance_outcomes(self, state):
        raise ValueError("RPS+ has no chance nodes")

    def next_state(self, state, action):
        return state + (action,)

    def utility(self, state):
        return rps_payoff(state[0], state[1])

    def infoset_key(self, state, player):
        if player == P1:
            return "P1:" + (state[0] if state else "") + "|" + "?" * len(state)
        return "P2:|" + "?" * len(state)

    def public_key(self, state):
        return "?" * len(state)

    def round_of(self, state):
        return len(state)

    def pot(self, state):
        return 2
