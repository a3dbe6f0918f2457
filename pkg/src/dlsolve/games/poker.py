"""Two-round hold'em style games: Leduc (limit) and scaled no-limit flop hold'em.

Both share one betting-state machine. Each player holds one private card;
community cards are dealt between rounds. Hands are ranked by rank
multiplicity (pairs, trips, ...) then kickers; suits only make cards
distinct, there are no flushes or straights in these small decks.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import combinations, permutations
from math import comb, floor

from .tree import CHANCE, P1, P2, TERMINAL, GameError

RANK_CHARS = "23456789TJQKA"
SUIT_CHARS = "shdc"


def card_labels(n_ranks: int, n_suits: int) -> list[str]:
    ranks = RANK_CHARS[-n_ranks:]
    return [r + s for r in ranks for s in SUIT_CHARS[:n_suits]]


def hand_strength(cards, n_suits: int) -> tuple:
    """Comparable strength: (count, rank) pairs sorted best-first."""
    counts: dict[int, int] = {}
    for c in cards:
        r = c // n_suits
        counts[r] = counts.get(r, 0) + 1
    return tuple(sorted(((n, r) for r, n in counts.items()), reverse=True))


@dataclass(frozen=True)
class BetState:
    hole: tuple | None = None
    board: tuple = ()
    round: int = 0
    actions: tuple = ((),)
    contrib: tuple = (0, 0)
    to_act: int = P1
    raises: int = 0
    n_acted: int = 0
    last_inc: int = 0
    folded: int = -1
    phase: str = "deal"  # deal | bet | showdown | fold


class _TwoRoundPoker:
    """Shared machinery; subclasses define blinds, bet sizes and board sizes."""

    n_rounds = 2
    first_actor = (P1, P1)

    def __init__(self, n_ranks, n_suits, board_cards):
        if n_ranks < 1 or n_suits < 1:
            raise GameError("deck must have at least one rank and one suit")
        self.n_ranks, self.n_suits = n_ranks, n_suits
        self.deck = list(range(n_ranks * n_suits))
        self.labels = card_labels(n_ranks, n_suits)
        self.board_cards = tuple(board_cards)
        if len(self.deck) < 2 + sum(self.board_cards):
            raise GameError(f"deck of {len(self.deck)} cards is too small")

    # -- rules interface ------------------------------------------------------

    def initial_state(self):
        return BetState(contrib=self.blinds(), actions=((),))

    def actor(self, s: BetState):
        if s.phase == "deal":
            return CHANCE
        if s.phase in ("fold", "showdown"):
            return TERMINAL
        return s.to_act

    def chance_outcomes(self, s: BetState):
        if s.hole is None:
            deals = list(permutations(self.deck, 2))
            return [(self.labels[a] + self.labels[b], 1.0 / len(deals)) for a, b in deals]
        remaining = [c for c in self.deck if c not in s.hole and c not in s.board]
        k = self.board_cards[s.round - 1]
        boards = list(combinations(remaining, k))
        return [("".join(self.labels[c] for c in b), 1.0 / len(boards)) for b in boards]

    def _parse_cards(self, label):
        return tuple(self.labels.index(label[i:i + 2]) for i in range(0, len(label), 2))

    def next_state(self, s: BetState, action: str):
        if s.phase == "deal":
            cards = self._parse_cards(action)
            if s.hole is None:
                s = replace(s, hole=cards)
                return self._start_round(s, 0)
            s = replace(s, board=s.board + cards)
            return self._start_round(s, s.round)
        return self._apply_bet(s, action)

    def _start_round(self, s: BetState, rnd: int):
        s = replace(s, round=rnd, to_act=self.first_actor[rnd], raises=0, n_acted=0,
                    last_inc=self.big_blind_chips, phase="bet")
        if self.all_in(s):
            return self._end_round(s)
        return s

    def all_in(self, s: BetState) -> bool:
        return False

    def _end_round(self, s: BetState):
        if s.round + 1 >= self.n_rounds:
            return replace(s, phase="showdown")
        return replace(s, round=s.round + 1, actions=s.actions + ((),), phase="deal")

    def _apply_bet(self, s: BetState, action: str):
        if action not in self.legal_actions(s):
            raise GameError(f"illegal action {action!r}")
        p, o = s.to_act, 1 - s.to_act
        acts = s.actions[:-1] + (s.actions[-1] + (action,),)
        contrib = list(s.contrib)
        if action == "f":
            return replace(s, actions=acts, folded=p, phase="fold")
        raises, last_inc = s.raises, s.last_inc
        if action == "c":
            contrib[p] = min(contrib[o], self.stack_limit())
        else:
            new = self.bet_total(s, action)
            last_inc = max(last_inc, new - contrib[o])
            contrib[p] = new
            raises += 1
        s = replace(s, actions=acts, contrib=tuple(contrib), to_act=o, raises=raises,
                    n_acted=s.n_acted + 1, last_inc=last_inc)
        if s.n_acted >= 2 and contrib[0] == contrib[1]:
            return self._end_round(s)
        return s

    def utility(self, s: BetState):
        if s.phase == "fold":
            return -s.contrib[P1] if s.folded == P1 else s.contrib[P2]
        h1 = hand_strength((s.hole[0],) + s.board, self.n_suits)
        h2 = hand_strength((s.hole[1],) + s.board, self.n_suits)
        if h1 > h2:
            return s.contrib[P2]
        if h2 > h1:
            return -s.contrib[P1]
        return 0.0

    def public_key(self, s: BetState):
        parts = [".".join(s.actions[0])]
        for r in range(1, len(s.actions)):
            seen = sum(self.board_cards[:r])
            board = "".join(self.labels[c] for c in s.board[:seen])
            parts.append(board)
            parts.append(".".join(s.actions[r]))
        return "/".join(parts) if s.hole is not None else "~"

    def infoset_key(self, s: BetState, player: int):
        card = self.labels[s.hole[player]] if s.hole is not None else ""
        return f"P{player + 1}:{card}|{self.public_key(s)}"

    def round_of(self, s: BetState):
        return s.round

    def pot(self, s: BetState):
        return s.contrib[0] + s.contrib[1]

    def stack_limit(self):
        return 10 ** 9


class LeducPoker(_TwoRoundPoker):
    """Leduc hold'em: 3 ranks x 2 suits, one private and one board card,
    fixed bets of 2 then 4 with at most one raise after the bet per round."""

    name = "leduc"

    def __init__(self, n_ranks=3, n_suits=2, ante=1, bets=(2, 4), max_raises=2):
        super().__init__(n_ranks, n_suits, (1,))
        if ante <= 0 or min(bets) <= 0:
            raise GameError("ante and bet sizes must be positive")
        self.ante, self.bets, self.max_raises = ante, tuple(bets), max_raises
        self.big_blind = float(ante)
        self.big_blind_chips = 0

    def blinds(self):
        return (self.ante, self.ante)

    def legal_actions(self, s: BetState):
        facing = s.contrib[1 - s.to_act] > s.contrib[s.to_act]
        acts = ["f"] if facing else []
        acts.append("c")
        if s.raises < self.max_raises:
            acts.append("b")
        return acts

    def bet_total(self, s: BetState, action):
        return s.contrib[1 - s.to_act] + self.bets[s.round]


class FlopHoldem(_TwoRoundPoker):
    """Scaled heads-up no-limit flop hold'em.

    P1 posts the big blind and P2 the small blind; P2 acts first before the
    flop and P1 first after it. Bets are pot fractions ("b50" is half the pot
    after calling), plus an optional all-in ("a"). ``first_action_fractions``
    adds extra sizes available only to the very first action of the game.
    """

    name = "nlfh"
    first_actor = (P2, P1)

    def __init__(self, n_ranks=3, n_suits=2, stack=20, small_blind=1, big_blind=2,
                 bet_fractions=(0.5, 1.0), allow_allin=True, max_raises=2,
                 board_cards=3, first_action_fractions=()):
        super().__init__(n_ranks, n_suits, (board_cards,))
        if stack <= 0 or small_blind <= 0 or big_blind <= 0:
            raise GameError("stack and blinds must be positive")
        if big_blind > stack:
            raise GameError("big blind exceeds stack")
        if not bet_fractions:
            raise GameError("bet abstraction must be nonempty")
        if min(bet_fractions) <= 0:
            raise GameError("bet fractions must be positive")
        self.stack = int(stack)
        self.sb, self.bb = int(small_blind), int(big_blind)
        self.big_blind = float(big_blind)
        self.big_blind_chips = self.bb
        self.fractions = tuple(sorted(float(f) for f in bet_fractions))
        self.first_fractions = tuple(sorted(float(f) for f in first_action_fractions))
        self.allow_allin = allow_allin
        self.max_raises = max_raises

    def blinds(self):
        return (self.bb, self.sb)

    def stack_limit(self):
        return self.stack

    def all_in(self, s: BetState) -> bool:
        return max(s.contrib) >= self.stack

    @staticmethod
    def frac_label(f: float) -> str:
        return f"b{int(round(f * 100))}"

    def _sizes(self, s: BetState):
        first = s.round == 0 and not s.actions[0]
        fr = sorted(set(self.fractions) | (set(self.first_fractions) if first else set()))
        return fr

    def bet_total(self, s: BetState, action):
        p, o = s.to_act, 1 - s.to_act
        if action == "a":
            return self.stack
        frac = int(action[1:]) / 100.0
        to_call = s.contrib[o] - s.contrib[p]
        pot_after_call = s.contrib[o] * 2
        inc = max(int(floor(frac * pot_after_call + 0.5)), s.last_inc, self.bb)
        return min(s.contrib[p] + to_call + inc, self.stack)

    def legal_actions(self, s: BetState):
        p, o = s.to_act, 1 - s.to_act
        facing = s.contrib[o] > s.contrib[p]
        acts = ["f"] if facing else []
        acts.append("c")
        can_raise = (s.raises < self.max_raises and s.contrib[o] < self.stack)
        if can_raise:
            seen = set()
            for f in self._sizes(s):
                lab = self.frac_label(f)
                total = self.bet_total(s, lab)
                if total >= self.stack and self.allow_allin:
                    continue
                if total in seen:
                    continue
                seen.add(total)
                acts.append(lab)
            if self.allow_allin:
                acts.append("a")
        return acts

    def n_boards(self, hole_dealt: int = 2) -> int:
        return comb(len(self.deck) - hole_dealt, self.board_cards[0])
