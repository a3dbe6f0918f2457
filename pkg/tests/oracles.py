"""Independent reference computations used by the tests.

Nothing here imports the library's tree or solver code: Kuhn poker is
re-derived from its rules, RPS+ is a literal payoff matrix, and the flop
hold'em node count comes from a separate recursive betting enumerator.
"""

from __future__ import annotations

from itertools import permutations, product
from math import comb, floor

import numpy as np

# -- RPS+ ----------------------------------------------------------------------------

# rows: P1 plays R, P, S; columns: P2 plays R, P, S; entries: P1 payoff
RPS_PLUS = np.array([
    [0.0, -1.0, 2.0],
    [1.0, 0.0, -2.0],
    [-2.0, 2.0, 0.0],
])


def rps_br_vs_p1(x) -> float:
    """P2's best-response payoff against P1 mix x."""
    return float(np.max(-(np.asarray(x) @ RPS_PLUS)))


def rps_br_vs_p2(y) -> float:
    return float(np.max(RPS_PLUS @ np.asarray(y)))


# -- Kuhn poker ------------------------------------------------------------------------

CARDS = "JQK"
DEALS = list(permutations(range(3), 2))
# decision points by public history: (acting player, action labels)
KUHN_NODES = {"": (0, ("c", "b")), "c": (1, ("c", "b")), "b": (1, ("f", "c")), "cb": (0, ("f", "c"))}


def kuhn_key(player: int, card: int, public: str) -> str:
    return f"P{player + 1}:{CARDS[card]}|{public}"


def kuhn_keys(player: int) -> list[str]:
    return [kuhn_key(player, c, pub) for pub, (p, _) in KUHN_NODES.items() if p == player for c in range(3)]


def kuhn_payoff(deal, public: str) -> float:
    """P1 payoff at a terminal public history."""
    win = 1.0 if deal[0] > deal[1] else -1.0
    return {"cc": win, "bf": 1.0, "bc": 2.0 * win, "cbf": -1.0, "cbc": 2.0 * win}[public]


def _walk(deal, public, policy):
    """Expected P1 payoff below ``public``; ``policy(player, key)`` gives the action vector."""
    if public not in KUHN_NODES:
        return kuhn_payoff(deal, public)
    p, labels = KUHN_NODES[public]
    vec = policy(p, kuhn_key(p, deal[p], public))
    return sum(pr * _walk(deal, public + a, policy) for a, pr in zip(labels, vec) if pr > 0)


def kuhn_value(s1: dict, s2: dict) -> float:
    """P1 expected value of a behavioral profile (dicts key -> vector)."""
    pol = lambda p, k: (s1 if p == 0 else s2)[k]  # noqa: E731
    return sum(_walk(d, "", pol) for d in DEALS) / len(DEALS)


def kuhn_pure_strategies(player: int):
    keys = kuhn_keys(player)
    for choice in product((0, 1), repeat=len(keys)):
        yield {k: np.eye(2)[a] for k, a in zip(keys, choice)}


def kuhn_br_enumeration(opp: dict, responder: int):
    """Best response by exhaustive enumeration of the responder's 64 pure strategies.

    Returns (root value to the responder, infoset -> counterfactual value of
    the best pure continuation), both in responder utility.
    """
    sign = 1.0 if responder == 0 else -1.0
    best_root = -np.inf
    best_info = {k: -np.inf for k in kuhn_keys(responder)}
    for pure in kuhn_pure_strategies(responder):
        def pol(p, k):
            return pure[k] if p == responder else opp[k]
        best_root = max(best_root, sign * sum(_walk(d, "", pol) for d in DEALS) / len(DEALS))
        for k in best_info:
            card = CARDS.index(k[3])
            public = k.split("|")[1]
            cf = 0.0
            for d in DEALS:
                if d[responder] != card:
                    continue
                reach = _opp_reach(d, public, opp, responder)
                if reach > 0:
                    cf += reach / len(DEALS) * sign * _walk(d, public, pol)
            best_info[k] = max(best_info[k], cf)
    return best_root, best_info


def _opp_reach(deal, public, opp, responder) -> float:
    r = 1.0
    for i in range(len(public)):
        p, labels = KUHN_NODES[public[:i]]
        if p != responder:
            r *= opp[kuhn_key(p, deal[p], public[:i])][labels.index(public[i])]
    return r


def kuhn_equilibrium(alpha: float) -> tuple[dict, dict]:
    """The known one-parameter family of Kuhn equilibria, 0 <= alpha <= 1/3."""
    b = lambda p: np.array([1 - p, p])  # noqa: E731  (second action probability p)
    s1 = {
        "P1:J|": b(alpha), "P1:Q|": b(0.0), "P1:K|": b(3 * alpha),
        "P1:J|cb": b(0.0), "P1:Q|cb": b(alpha + 1 / 3), "P1:K|cb": b(1.0),
    }
    s2 = {
        "P2:J|c": b(1 / 3), "P2:Q|c": b(0.0), "P2:K|c": b(1.0),
        "P2:J|b": b(0.0), "P2:Q|b": b(1 / 3), "P2:K|b": b(1.0),
    }
    return s1, s2


KUHN_VALUE = -1.0 / 18.0


# -- scaled flop hold'em node count ----------------------------------------------------------


def flop_holdem_nodes(n_cards=6, board=3, stack=20, sb=1, bb=2, fractions=(0.5, 1.0), allin=True,
                      max_raises=3, first_fractions=()) -> dict:
    """Count nodes of the heads-up two-round game by direct recursion over chip states.

    Returns total nodes, terminals and chance nodes.
    """
    n_deals = n_cards * (n_cards - 1)
    n_boards = comb(n_cards - 2, board)
    counts = {"nodes": 0, "terminal": 0, "chance": 0}

    def sizes(first):
        return sorted(set(fractions) | (set(first_fractions) if first else set()))

    def options(c, p, raises, last_inc, first):
        o = 1 - p
        opts = []
        if c[o] > c[p]:
            opts.append(("f", None))
        opts.append(("c", None))
        if raises < max_raises and c[o] < stack:
            totals = set()
            for f in sizes(first):
                inc = max(int(floor(f * 2 * c[o] + 0.5)), last_inc, bb)
                total = min(c[p] + (c[o] - c[p]) + inc, stack)
                if (allin and total >= stack) or total in totals:
                    continue
                totals.add(total)
                opts.append(("r", total))
            if allin:
                opts.append(("r", stack))
        return opts

    def betting(c, p, raises, last_inc, acted, rnd, first, mult):
        counts["nodes"] += mult
        for kind, total in options(c, p, raises, last_inc, first):
            o = 1 - p
            if kind == "f":
                counts["nodes"] += mult
                counts["terminal"] += mult
                continue
            nc = list(c)
            nr, ni = raises, last_inc
            if kind == "c":
                nc[p] = min(c[o], stack)
            else:
                ni = max(last_inc, total - c[o])
                nc[p] = total
                nr += 1
            if acted + 1 >= 2 and nc[0] == nc[1]:
                round_end(tuple(nc), rnd, mult)
            else:
                betting(tuple(nc), o, nr, ni, acted + 1, rnd, False, mult)

    def round_end(c, rnd, mult):
        if rnd == 1:
            counts["nodes"] += mult
            counts["terminal"] += mult
            return
        counts["nodes"] += mult
        counts["chance"] += mult
        kids = mult * n_boards
        if max(c) >= stack:
            counts["nodes"] += kids
            counts["terminal"] += kids
        else:
            betting(c, 0, 0, bb, 0, 1, False, kids)

    counts["nodes"] += 1
    counts["chance"] += 1
    betting((bb, sb), 1, 0, bb, 0, 0, True, n_deals)
    return counts
