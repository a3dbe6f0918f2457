"""Exact best responses and exploitability.

The responder's choice at an infoset depends only on counterfactual values
below it, so one bottom-up sweep over tree levels suffices (all nodes of an
infoset sit at the same depth in every tree this library builds).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from .games.tree import P1, P2, GameTree, opponent
from .strategy import BehavioralStrategy, PureStrategy, StrategyProfile

TIE_TOL = 1e-12


@dataclass(frozen=True)
class BestResponseResult:
    strategy: PureStrategy
    value: float
    infoset_values: Mapping[str, float]
    node_values: np.ndarray  # counterfactual (opponent x chance weighted) values
    cf_reach: np.ndarray


def _sweep(tree: GameTree, sigma: np.ndarray, responder: int):
    r = tree.reach(sigma)
    cf = r[opponent(responder)] * r[2]
    sign = 1.0 if responder == P1 else -1.0
    W = np.where(tree.actor == -1, cf * sign * tree.utility, 0.0)
    choice = np.zeros(tree.n_infosets, dtype=np.int64)
    q_best = np.zeros(tree.n_infosets)
    resp_node = tree.actor == responder
    for lv in range(tree.max_depth - 1, -1, -1):
        lo, hi, internal, rel = tree._levels[lv]
        if len(internal) == 0:
            continue
        nlo, nhi = tree.level_start[lv + 1], tree.level_start[lv + 2]
        W[internal] = np.add.reduceat(W[nlo:nhi], rel)
        resp = internal[resp_node[internal]]
        if len(resp) == 0:
            continue
        kids = np.arange(nlo, nhi)
        kids = kids[resp_node[tree.parent[kids]]]
        seqs = tree.edge_seq[kids]
        q = np.bincount(seqs, weights=W[kids], minlength=tree.n_seqs)
        for j in np.unique(tree.node_infoset[resp]):
            I = tree.infosets[j]
            qi = q[I.seqs]
            m = qi.max()
            tol = TIE_TOL * max(1.0, abs(m))
            a = int(np.argmax(qi >= m - tol))
            choice[j] = a
            q_best[j] = qi[a]
        W[resp] = W[tree.first_child[resp] + choice[tree.node_infoset[resp]]]
    return W, cf, choice, q_best


def best_response(tree: GameTree, opp_strategy: BehavioralStrategy, responder: int) -> BestResponseResult:
    """Pure best response of ``responder`` to a fixed opponent strategy.

    Ties go to the lowest action index.
    """
    opp = opponent(responder)
    for I in tree.infosets:
        if I.player == opp and I.key not in opp_strategy:
            raise KeyError(f"opponent strategy missing infoset {I.key!r}")
    sigma = tree.pack(opp_strategy, default="uniform")
    W, cf, choice, q_best = _sweep(tree, sigma, responder)
    pure, values = {}, {}
    for j, I in enumerate(tree.infosets):
        if I.player == responder:
            pure[I.key] = int(choice[j])
            values[I.key] = float(q_best[j])
    return BestResponseResult(PureStrategy(pure, responder), float(W[0]), values, W, cf)


@dataclass(frozen=True)
class ExploitabilityReport:
    br_vs_p1: float  # P2's best-response value against P1's strategy
    br_vs_p2: float  # P1's best-response value against P2's strategy
    big_blind: float
    game_value: float | None = None

    @property
    def exploitability(self) -> float:
        return 0.5 * (self.br_vs_p1 + self.br_vs_p2)

    @property
    def mbbg(self) -> float:
        return self.exploitability * 1000.0 / self.big_blind

    @property
    def p1_exploitability(self) -> float | None:
        """One-sided: how much worse P1 does against a best response than the game value."""
        if self.game_value is None:
            return None
        return self.br_vs_p1 + self.game_value

    @property
    def p2_exploitability(self) -> float | None:
        if self.game_value is None:
            return None
        return self.br_vs_p2 - self.game_value

    def as_dict(self) -> dict:
        d = {
            "br_vs_p1": self.br_vs_p1,
            "br_vs_p2": self.br_vs_p2,
            "exploitability_chips": self.exploitability,
            "exploitability_mbbg": self.mbbg,
        }
        if self.game_value is not None:
            d.update(game_value=self.game_value, p1_exploitability=self.p1_exploitability,
                     p2_exploitability=self.p2_exploitability)
        return d


def exploitability(tree: GameTree, profile: StrategyProfile,
                   game_value: float | None = None) -> ExploitabilityReport:
    br2 = best_response(tree, profile.p1, P2).value
    br1 = best_response(tree, profile.p2, P1).value
    return ExploitabilityReport(br2, br1, tree.big_blind, game_value)


def br_value(tree: GameTree, strategy: BehavioralStrategy, responder: int) -> float:
    return best_response(tree, strategy, responder).value


def obs_br_values(tree: GameTree, result: BestResponseResult, player: int,
                  keys: Iterable[str]) -> dict[str, float]:
    """Belief-normalized best-response values at arbitrary observation keys.

    Keys whose states all have zero reach keep the unnormalized
    counterfactual value (a zero-weight sum).
    """
    out = {}
    for k in keys:
        nodes = tree.nodes_with_obs(player, k)
        if len(nodes) == 0:
            raise KeyError(f"no states with observation {k!r}")
        num = result.node_values[nodes].sum()
        den = result.cf_reach[nodes].sum()
        out[k] = float(num / den) if den > 0 else float(num)
    return out


def root_infoset_br_values(tree: GameTree, solver_strategy: BehavioralStrategy,
                           roots: Iterable[str], responder: int = P2) -> dict[str, float]:
    """Responder's best-response value at each root infoset, conditioned on reaching it."""
    res = best_response(tree, solver_strategy, responder)
    return obs_br_values(tree, res, responder, roots)
