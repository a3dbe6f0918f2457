"""Kuhn poker: three cards, one-chip ante, one betting round with a single bet."""

from __future__ import annotations

from itertools import permutations

from .tree import CHANCE, P1, P2, TERMINAL

RANKS = "JQK"


class KuhnPoker:
    name = "kuhn"

    def __init__(self, ante: int = 1, bet: int = 1, deck: str = RANKS):
        if ante <= 0 or bet <= 0:
            raise ValueError("ante and bet must be positive")
        if len(deck) < 2:
            raise ValueError("Kuhn poker needs at least two cards")
        self.ante, self.bet, self.deck = ante, bet, deck
        self.big_blind = float(ante)

    def initial_state(self):
        return (None, ())

    def actor(self, state):
        deal, hist = state
        if deal is None:
            return CHANCE
        if self._terminal(hist):
            return TERMINAL
        return P1 if len(hist) % 2 == 0 else P2

    @staticmethod
    def _terminal(hist):
        return hist in (("c", "c"), ("b", "f"), ("b", "c"), ("c", "b", "f"), ("c", "b", "c"))

    def legal_actions(self, state):
        _, hist = state
        if hist and hist[-1] == "b":
            return ["f", "c"]
        return ["c", "b"]

    def chance_outcomes(self, state):
        deals = list(permutations(self.deck, 2))
        return [(a + b, 1.0 / len(deals)) for a, b in deals]

    def next_state(self, state, action):
        deal, hist = state
        if deal is None:
            return (action, ())
        return (deal, hist + (action,))

    def utility(self, state):
        deal, hist = state
        if hist[-1] == "f":
            # the player who folded forfeits the ante
            folder = len(hist) - 1
            return -self.ante if folder % 2 == 0 else self.ante
        stake = self.ante + (self.bet if "b" in hist else 0)
        return stake if self.deck.index(deal[0]) > self.deck.index(deal[1]) else -stake

    def infoset_key(self, state, player):
        deal, hist = state
        card = deal[player] if deal else ""
        return f"P{player + 1}:{card}|{''.join(hist)}" if deal else f"P{player + 1}:|-"

    def public_key(self, state):
        deal, hist = state
        return "".join(hist) if deal else "-"

    def round_of(self, state):
        return 0

    def pot(self, state):
        _, hist = state
        total, facing = 2 * self.ante, False
        for a in hist:
            if a == "b":
                total, facing = total + self.bet, True
            elif a == "c" and facing:
                total += self.bet
        return total
