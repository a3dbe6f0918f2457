"""Counterfactual regret minimization: vanilla CFR, modified CFR+, external-sampling MCCFR.

All variants run over a materialized :class:`~dlsolve.games.tree.GameTree`.
The full-width variants are vectorized over tree levels. The modified CFR+
variant alternates player updates inside each iteration, clamps regrets at
zero, discounts all regrets by sqrt(T)/sqrt(T+1) after each of the first
``discount_iterations`` iterations, and averages (linearly weighted) only the
iterations after the first ``average_skip_fraction`` of the run.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from .games.tree import CHANCE, P1, P2, TERMINAL, GameTree
from .strategy import StrategyProfile

log = logging.getLogger(__name__)

VARIANTS = ("vanilla_cfr", "cfr_plus_modified", "mccfr_external")


class SolverError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    variant: str = "cfr_plus_modified"
    iterations: int = 1000
    average_skip_fraction: float = 0.5
    discount_iterations: int = 30
    seed: int = 0
    linear_averaging: bool = True

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise SolverError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.iterations < 1:
            raise SolverError("iterations must be >= 1")
        if not 0.0 <= self.average_skip_fraction < 1.0:
            raise SolverError("average_skip_fraction must lie in [0, 1)")
        if self.discount_iterations < 0:
            raise SolverError("discount_iterations must be >= 0")

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


def iteration_schedule(pot: float, stack: float, lo: int = 150, hi: int = 1000) -> int:
    """Iteration budget growing linearly with the pot's share of the stack."""
    frac = min(max(pot / (2.0 * stack), 0.0), 1.0)
    return int(round(lo + (hi - lo) * frac))


def regret_matching(regrets) -> np.ndarray:
    """Positive-part normalization; uniform when no regret is positive."""
    r = np.asarray(regrets, dtype=np.float64)
    pos = np.maximum(r, 0.0)
    s = pos.sum()
    if s > 0:
        return pos / s
    return np.full(len(r), 1.0 / len(r))


@dataclass
class RegretStore:
    regrets: np.ndarray
    avg_accumulator: np.ndarray
    iteration: int = 0
    fingerprint: str = ""

    @classmethod
    def empty(cls, tree: GameTree) -> "RegretStore":
        return cls(np.zeros(tree.n_seqs), np.zeros(tree.n_seqs), 0, tree.fingerprint())

    def copy(self) -> "RegretStore":
        return RegretStore(self.regrets.copy(), self.avg_accumulator.copy(), self.iteration,
                           self.fingerprint)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps({
            "iteration": self.iteration,
            "fingerprint": self.fingerprint,
            "regrets": self.regrets.tolist(),
            "avg_accumulator": self.avg_accumulator.tolist(),
        }))

    @classmethod
    def load(cls, path: str | Path) -> "RegretStore":
        d = json.loads(Path(path).read_text())
        return cls(np.asarray(d["regrets"]), np.asarray(d["avg_accumulator"]),
                   d["iteration"], d["fingerprint"])


def _regret_match_flat(tree: GameTree, regrets: np.ndarray) -> np.ndarray:
    pos = np.maximum(regrets, 0.0)
    sums = np.add.reduceat(pos, tree.infoset_offsets)[tree.seq_infoset]
    uniform = 1.0 / tree.infoset_sizes[tree.seq_infoset]
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(sums > 0, pos / safe, uniform)


def normalize_average(tree: GameTree, acc: np.ndarray) -> np.ndarray:
    sums = np.add.reduceat(acc, tree.infoset_offsets)[tree.seq_infoset]
    uniform = 1.0 / tree.infoset_sizes[tree.seq_infoset]
    safe = np.where(sums > 0, sums, 1.0)
    return np.where(sums > 0, acc / safe, uniform)


class CFRSolver:
    """Iterative solver owning one :class:`RegretStore`.

    ``iterate()`` performs one iteration; ``run()`` performs the configured
    number, optionally reporting to ``callback(iteration, solver)``.
    """

    def __init__(self, tree: GameTree, config: SolverConfig = SolverConfig(),
                 store: RegretStore | None = None):
        if tree.n_infosets == 0:
            raise SolverError("target has no decision infosets")
        self.tree = tree
        self.config = config
        self.store = store if store is not None else RegretStore.empty(tree)
        if self.store.fingerprint and self.store.fingerprint != tree.fingerprint():
            raise SolverError("regret store was produced on a different tree")
        self.rng = np.random.default_rng(config.seed)
        self._edges = {}
        for p in (P1, P2):
            kids = np.nonzero((tree.edge_seq >= 0) & (tree.parent_actor == p))[0]
            self._edges[p] = (kids, tree.parent[kids], tree.edge_seq[kids])
        self._player_seqs = {p: tree.seq_player == p for p in (P1, P2)}
        if config.variant == "mccfr_external":
            self._mc = _MCCFRTables(tree)

    @property
    def skip_iterations(self) -> int:
        return int(math.floor(self.config.average_skip_fraction * self.config.iterations))

    def current_strategy(self) -> np.ndarray:
        return _regret_match_flat(self.tree, self.store.regrets)

    def average_strategy(self) -> np.ndarray:
        return normalize_average(self.tree, self.store.avg_accumulator)

    def average_profile(self) -> StrategyProfile:
        return StrategyProfile.from_flat(self.tree, self.average_strategy())

    def current_profile(self) -> StrategyProfile:
        return StrategyProfile.from_flat(self.tree, self.current_strategy())

    # -- iterations -------------------------------------------------------------

    def _update_player(self, p: int, sigma: np.ndarray, avg_weight: float):
        tree, st = self.tree, self.store
        r = tree.reach(sigma)
        v = tree.values(sigma)
        if p == P2:
            v = -v
        kids, par, seqs = self._edges[p]
        cf = r[1 - p, par] * r[2, par]
        inst = np.bincount(seqs, weights=cf * (v[kids] - v[par]), minlength=tree.n_seqs)
        mask = self._player_seqs[p]
        if avg_weight > 0:
            own = r[p, tree.infoset_rep][tree.seq_infoset]
            st.avg_accumulator[mask] += avg_weight * (own * sigma)[mask]
        st.regrets[mask] += inst[mask]

    def iterate(self):
        cfg, st, tree = self.config, self.store, self.tree
        st.iteration += 1
        T = st.iteration
        if cfg.variant == "vanilla_cfr":
            sigma = self.current_strategy()
            for p in (P1, P2):
                self._update_player(p, sigma, 1.0)
        elif cfg.variant == "cfr_plus_modified":
            skip = self.skip_iterations
            w = 0.0
            if T > skip:
                w = float(T - skip) if cfg.linear_averaging else 1.0
            for p in (P1, P2):
                sigma = self.current_strategy()
                self._update_player(p, sigma, w)
                mask = self._player_seqs[p]
                np.maximum(st.regrets, 0.0, out=st.regrets, where=mask)
            if T <= cfg.discount_iterations:
                st.regrets *= math.sqrt(T) / math.sqrt(T + 1)
        else:
            w = float(T) if cfg.linear_averaging else 1.0
            for p in (P1, P2):
                self._mc.traverse(p, st, self.rng, w)

    def run(self, iterations: int | None = None,
            callback: Callable[[int, "CFRSolver"], None] | None = None,
            every: int = 0) -> StrategyProfile:
        n = self.config.iterations if iterations is None else iterations
        for _ in range(n):
            self.iterate()
            if callback is not None and every and self.store.iteration % every == 0:
                callback(self.store.iteration, self)
        return self.average_profile()


class _MCCFRTables:
    """Python-list mirror of the tree for fast scalar external sampling."""

    def __init__(self, tree: GameTree):
        self.actor = tree.actor.tolist()
        self.first = tree.first_child.tolist()
        self.nkids = tree.n_children.tolist()
        self.util = tree.utility.tolist()
        self.infoset = tree.node_infoset.tolist()
        self.offset = tree.infoset_offsets.tolist()
        self.size = tree.infoset_sizes.tolist()
        cum = []
        for n in range(tree.n_nodes):
            if self.actor[n] == CHANCE:
                fc, k = self.first[n], self.nkids[n]
                cum.append(np.cumsum(tree.chance_prob[fc:fc + k]).tolist())
            else:
                cum.append(None)
        self.chance_cum = cum

    def traverse(self, player: int, store: RegretStore, rng, weight: float):
        R = store.regrets
        A = store.avg_accumulator
        actor, first, nkids, util = self.actor, self.first, self.nkids, self.util
        infoset, offset, size = self.infoset, self.offset, self.size
        chance_cum = self.chance_cum
        sign = 1.0 if player == P1 else -1.0
        rand = rng.random

        def sigma_at(off, k):
            pos = [r if r > 0 else 0.0 for r in R[off:off + k].tolist()]
            s = sum(pos)
            return [x / s for x in pos] if s > 0 else [1.0 / k] * k

        def pick(cum):
            u = rand() * cum[-1]
            for i, c in enumerate(cum):
                if u < c:
                    return i
            return len(cum) - 1

        def walk(n):
            a = actor[n]
            if a == TERMINAL:
                return sign * util[n]
            if a == CHANCE:
                return walk(first[n] + pick(chance_cum[n]))
            j = infoset[n]
            off, k = offset[j], size[j]
            sig = sigma_at(off, k)
            fc = first[n]
            if a == player:
                vals = [walk(fc + i) for i in range(k)]
                ev = sum(s * v for s, v in zip(sig, vals))
                R[off:off + k] += np.asarray(vals) - ev
                return ev
            A[off:off + k] += weight * np.asarray(sig)
            cum, acc = [], 0.0
            for s in sig:
                acc += s
                cum.append(acc)
            return walk(fc + pick(cum))

        walk(0)


def run_solver(target, config: SolverConfig = SolverConfig(),
               callback: Callable[[int, CFRSolver], None] | None = None,
               every: int = 0) -> StrategyProfile:
    """Average strategy of a solver run on a game tree or augmented subgame."""
    tree = getattr(target, "tree", target)
    if not isinstance(tree, GameTree):
        raise SolverError("target must be a GameTree or expose one as .tree")
    solver = CFRSolver(tree, config)
    return solver.run(callback=callback, every=every)


# -- exact solving ------------------------------------------------------------------


def _sequence_form(tree: GameTree):
    """Constraint matrices and payoff matrix of the sequence-form representation.

    Sequence ids per player are the tree's flat sequence ids of that player,
    plus one trailing id for the empty sequence.
    """
    from scipy import sparse

    n = tree.n_nodes
    last = np.full((2, n), -1, dtype=np.int64)
    for lv in range(1, tree.max_depth + 1):
        lo, hi = tree.level_start[lv], tree.level_start[lv + 1]
        par = tree.parent[lo:hi]
        for p in (P1, P2):
            own = tree.parent_actor[lo:hi] == p
            last[p, lo:hi] = np.where(own, tree.edge_seq[lo:hi], last[p, par])
    seq_ids, local = [], []
    for p in (P1, P2):
        ids = np.nonzero(tree.seq_player == p)[0]
        m = np.full(tree.n_seqs + 1, len(ids), dtype=np.int64)  # -1 -> empty
        m[ids] = np.arange(len(ids))
        seq_ids.append(ids)
        local.append(m)
    cons = []
    for p in (P1, P2):
        infos = [I for I in tree.infosets if I.player == p]
        rows, cols, vals = [len(infos)], [len(seq_ids[p])], [1.0]
        for r, I in enumerate(infos):
            parent_seq = local[p][last[p, I.nodes[0]]]
            rows.append(r)
            cols.append(parent_seq)
            vals.append(-1.0)
            for s in range(I.offset, I.offset + I.n_actions):
                rows.append(r)
                cols.append(local[p][s])
                vals.append(1.0)
        shape = (len(infos) + 1, len(seq_ids[p]) + 1)
        rhs = np.zeros(shape[0])
        rhs[-1] = 1.0
        cons.append((sparse.csr_matrix((vals, (rows, cols)), shape=shape), rhs, infos))
    term = tree.terminal_nodes()
    r = tree.reach(tree.uniform())
    A = sparse.coo_matrix((r[2, term] * tree.utility[term],
                           (local[P1][last[P1, term]], local[P2][last[P2, term]])),
                          shape=(len(seq_ids[P1]) + 1, len(seq_ids[P2]) + 1)).tocsr()
    return cons, A, local, last


def solve_exact(tree: GameTree) -> tuple[StrategyProfile, float]:
    """Equilibrium profile and P1 game value by linear programming on the sequence form."""
    from scipy import sparse
    from scipy.optimize import linprog

    cons, A, local, last = _sequence_form(tree)
    (E, e, infos1), (F, f, infos2) = cons
    plans = []
    value = 0.0
    for p in (P1, P2):
        # maximize the player's guaranteed payoff: max f.q s.t. F^T q <= M^T x, E x = e, x >= 0
        X, xr = (E, e) if p == P1 else (F, f)
        Y, yr = (F, f) if p == P1 else (E, e)
        M = A if p == P1 else -A.T
        nx, nq = X.shape[1], Y.shape[0]
        c = np.concatenate([np.zeros(nx), -yr])
        A_ub = sparse.hstack([-M.T, Y.T]).tocsr()
        b_ub = np.zeros(A_ub.shape[0])
        A_eq = sparse.hstack([X, sparse.csr_matrix((X.shape[0], nq))]).tocsr()
        bounds = [(0, None)] * nx + [(None, None)] * nq
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=xr, bounds=bounds, method="highs")
        if res.status != 0:
            raise SolverError(f"sequence-form LP failed: {res.message}")
        plans.append(res.x[:nx])
        if p == P1:
            value = -res.fun
    flat = tree.uniform()
    for p, plan, infos in ((P1, plans[0], infos1), (P2, plans[1], infos2)):
        for I in infos:
            par = plan[local[p][last[p, I.nodes[0]]]]
            xs = np.maximum(plan[[local[p][s] for s in range(I.offset, I.offset + I.n_actions)]], 0.0)
            if par > 1e-12 and xs.sum() > 0:
                flat[I.seqs] = xs / xs.sum()
    return StrategyProfile.from_flat(tree, flat), float(value)
