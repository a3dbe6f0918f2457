"""Depth-limited subgames with multi-valued leaf states.

At the depth limit the opponent of the solving player gets one last choice:
which of N continuation strategies to play for the rest of the game. The
choice is a decision node appended below every leaf state; leaves sharing an
opponent infoset share the appended infoset, so the opponent cannot pick a
different continuation per hidden state.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .best_response import best_response
from .cfr import SolverConfig, run_solver
from .games.tree import CHANCE, P1, P2, TERMINAL, GameError, GameTree, TreeBuilder, opponent
from .strategy import BehavioralStrategy, StrategyProfile, bias_strategy

log = logging.getLogger(__name__)

CONT_SUFFIX = "#cont"
DEFAULT_ROLLOUTS = 3
DEFAULT_BIAS = (("fold", 10.0), ("check_call", 10.0), ("bet_raise", 10.0))


class SubgameError(ValueError):
    pass


# -- subgame specification ----------------------------------------------------


@dataclass(frozen=True)
class DepthLimit:
    """Leaves are the first states ``value`` plies below the subgame root
    ("ply"), or the first states of a betting round after ``value`` ("round")."""

    kind: str = "round"
    value: int = 0

    def __post_init__(self):
        if self.kind not in ("ply", "round"):
            raise SubgameError(f"unknown depth-limit kind {self.kind!r}")


@dataclass(frozen=True)
class SubgameSpec:
    roots: tuple[int, ...]
    weights: tuple[float, ...] | None = None
    depth_limit: DepthLimit | None = None

    def is_leaf(self, tree: GameTree, node: int, root_depth: int) -> bool:
        lim = self.depth_limit
        if lim is None or tree.actor[node] == TERMINAL:
            return False
        if lim.kind == "ply":
            return tree.depth[node] - root_depth >= lim.value
        return tree.round[node] > lim.value


def public_subgame(tree: GameTree, public, depth_limit: DepthLimit | None = None,
                   weights=None) -> SubgameSpec:
    """Subgame rooted at every state of one public situation."""
    if isinstance(public, str):
        try:
            pid = tree.public_keys.index(public)
        except ValueError:
            raise SubgameError(f"unknown public situation {public!r}") from None
    else:
        pid = int(tree.public_id[int(public)])
    roots = tuple(int(n) for n in np.nonzero(tree.public_id == pid)[0])
    return SubgameSpec(roots, None if weights is None else tuple(weights), depth_limit)


def subgame_nodes(tree: GameTree, spec: SubgameSpec) -> tuple[np.ndarray, np.ndarray]:
    """(interior-or-terminal nodes, leaf nodes) of the subgame."""
    inside, leaves = [], []
    stack = list(spec.roots)
    root_depth = {r: int(tree.depth[r]) for r in spec.roots}
    depth_of = {}
    for r in spec.roots:
        depth_of[r] = root_depth[r]
    while stack:
        n = stack.pop()
        d0 = depth_of[n]
        if spec.is_leaf(tree, n, d0) and n not in root_depth:
            leaves.append(n)
            continue
        inside.append(n)
        for c in tree.children(n):
            depth_of[c] = d0
            stack.append(c)
    return np.array(sorted(inside), dtype=np.int64), np.array(sorted(leaves), dtype=np.int64)


def check_closure(tree: GameTree, spec: SubgameSpec) -> None:
    """Raise unless the subgame never splits an infoset and is contiguous."""
    inside, leaves = subgame_nodes(tree, spec)
    members = np.zeros(tree.n_nodes, dtype=bool)
    members[inside] = True
    members[leaves] = True
    for p in (P1, P2):
        obs = tree.obs[p]
        nonterm = np.concatenate([inside, leaves])
        nonterm = nonterm[obs[nonterm] >= 0]
        keys = np.unique(obs[nonterm])
        all_nodes = np.isin(obs, keys)
        if (all_nodes & ~members).any():
            bad = int(np.argmax(all_nodes & ~members))
            raise SubgameError(f"subgame splits infoset {tree.infoset_key(bad, p)!r}")
    roots = set(spec.roots)
    for r in spec.roots:
        n = int(tree.parent[r])
        while n >= 0:
            if n in roots:
                raise SubgameError("subgame roots must not be ancestors of one another")
            n = int(tree.parent[n])


# -- continuation sets and value tables --------------------------------------------


@dataclass(frozen=True)
class ContinuationSet:
    """Opponent strategies selectable at the depth limit; index 0 is the blueprint."""

    strategies: tuple[BehavioralStrategy, ...]
    provenance: tuple[str, ...]

    def __post_init__(self):
        if len(self.strategies) < 1:
            raise SubgameError("a continuation set needs at least the blueprint")
        if len(self.provenance) != len(self.strategies):
            raise SubgameError("one provenance label per strategy")
        if self.provenance[0] != "blueprint":
            raise SubgameError("index 0 must be the blueprint continuation")

    def __len__(self):
        return len(self.strategies)

    def __getitem__(self, i) -> BehavioralStrategy:
        return self.strategies[i]

    def prefix(self, n: int) -> "ContinuationSet":
        return ContinuationSet(self.strategies[:n], self.provenance[:n])

    def append(self, strategy: BehavioralStrategy, label: str) -> "ContinuationSet":
        return ContinuationSet(self.strategies + (strategy,), self.provenance + (label,))

    @classmethod
    def blueprint_only(cls, blueprint_opp: BehavioralStrategy) -> "ContinuationSet":
        return cls((blueprint_opp,), ("blueprint",))

    def quantized(self, mode: str = "byte", seed: int = 0) -> "ContinuationSet":
        return ContinuationSet(tuple(quantize_strategy(s, mode, seed + i)
                                     for i, s in enumerate(self.strategies)), self.provenance)


def quantize_strategy(strategy: BehavioralStrategy, mode: str = "byte", seed: int = 0) -> BehavioralStrategy:
    """Compact storage: "byte" keeps each probability in 1/255 steps; "action"
    pre-samples a single action per infoset."""
    rng = np.random.default_rng(seed)
    table = {}
    for k, v in sorted(strategy.items()):
        if mode == "byte":
            q = np.round(v * 255.0)
            if q.sum() == 0:
                q[np.argmax(v)] = 1.0
            table[k] = q / q.sum()
        elif mode == "action":
            q = np.zeros(len(v))
            q[rng.choice(len(v), p=v)] = 1.0
            table[k] = q
        else:
            raise SubgameError(f"unknown quantization mode {mode!r}")
    return BehavioralStrategy(table, strategy.actions, strategy.player)


@dataclass
class ValueTable:
    """Leaf history -> length-N vector of P1 values, one per continuation."""

    entries: dict[str, np.ndarray]
    n: int
    units: str = "chips"  # or "pot_fraction"
    provenance: tuple[str, ...] = ()
    game_hash: str = ""

    def __post_init__(self):
        for h, v in self.entries.items():
            if len(v) != self.n:
                raise SubgameError(f"leaf {h!r} has {len(v)} values, expected {self.n}")

    def vector(self, history: str, pot: float = 1.0) -> np.ndarray:
        v = self.entries[history]
        return v * pot if self.units == "pot_fraction" else v.copy()

    def to_units(self, tree: GameTree, units: str) -> "ValueTable":
        if units == self.units:
            return self
        out = {}
        for h, v in self.entries.items():
            pot = tree.pot[tree.node_by_history(h)]
            out[h] = v / pot if units == "pot_fraction" else v * pot
        return ValueTable(out, self.n, units, self.provenance, self.game_hash)

    def prefix(self, n: int) -> "ValueTable":
        return ValueTable({h: v[:n].copy() for h, v in self.entries.items()}, n, self.units,
                          self.provenance[:n], self.game_hash)

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps({
            "header": {"game_hash": self.game_hash, "units": self.units, "n": self.n,
                       "provenance": list(self.provenance)},
            "records": {h: [float(x) for x in v] for h, v in sorted(self.entries.items())},
        }, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "ValueTable":
        d = json.loads(Path(path).read_text())
        hd = d["header"]
        return cls({h: np.asarray(v, dtype=np.float64) for h, v in d["records"].items()},
                   hd["n"], hd["units"], tuple(hd["provenance"]), hd["game_hash"])


def continuation_profile(solver: int, solver_strategy: BehavioralStrategy,
                         opp_strategy: BehavioralStrategy) -> StrategyProfile:
    return (StrategyProfile(solver_strategy, opp_strategy) if solver == P1
            else StrategyProfile(opp_strategy, solver_strategy))


def compute_value_table(game: GameTree, blueprint_solver: BehavioralStrategy,
                        continuation: ContinuationSet, leaves: Iterable[int],
                        solver: int = P1, units: str = "chips") -> ValueTable:
    """Exact P1 value of every leaf under (solver blueprint, continuation n)."""
    leaves = np.asarray(list(leaves), dtype=np.int64)
    cols = []
    for n, strat in enumerate(continuation.strategies):
        prof = continuation_profile(solver, blueprint_solver, strat)
        try:
            sigma = prof.pack(game)
        except KeyError as e:
            raise SubgameError(f"continuation {n} undefined below the leaves: {e}") from None
        cols.append(game.values(sigma)[leaves])
    mat = np.stack(cols, axis=1) if cols else np.zeros((len(leaves), 0))
    entries = {game.history[h]: mat[i].copy() for i, h in enumerate(leaves)}
    table = ValueTable(entries, len(continuation), "chips", continuation.provenance, game.fingerprint())
    return table.to_units(game, units)


def leaf_beliefs(game: GameTree, blueprint_solver: BehavioralStrategy, leaves: Sequence[int],
                 solver: int = P1) -> dict[str, dict[int, float]]:
    """Opponent leaf infoset -> normalized belief over its leaves (solver blueprint x chance)."""
    opp = opponent(solver)
    sigma = game.pack(blueprint_solver, default="uniform")
    r = game.reach(sigma)
    groups: dict[str, list[int]] = {}
    for h in leaves:
        groups.setdefault(game.infoset_key(int(h), opp), []).append(int(h))
    out = {}
    for key, hs in groups.items():
        w = np.array([r[solver, h] * r[2, h] for h in hs])
        if w.sum() <= 0:
            w = np.ones(len(hs))
        w = w / w.sum()
        out[key] = dict(zip(hs, w))
    return out


def weaken(values: ValueTable, game: GameTree, beliefs: Mapping[str, Mapping[int, float]],
           solver: int = P1, blueprint_index: int = 0, pot_margin: float = 0.0) -> ValueTable:
    """Lower each non-blueprint continuation so that, at every opponent leaf
    infoset, it is worth no more to the opponent than the blueprint
    continuation under the given beliefs.

    ``pot_margin`` additionally lowers non-blueprint opponent values by that
    fraction of the pot (off by default).
    """
    opp = opponent(solver)
    sgn = 1.0 if opp == P1 else -1.0  # P1 values -> opponent values
    chips = values.to_units(game, "chips")
    out = {h: v.copy() for h, v in chips.entries.items()}
    for key, bel in beliefs.items():
        hist = [game.history[h] for h in bel]
        p = np.array(list(bel.values()))
        mat = sgn * np.stack([out[h] for h in hist])  # opponent values
        if pot_margin > 0:
            pots = np.array([game.pot[h] for h in bel])
            mask = np.ones(values.n, dtype=bool)
            mask[blueprint_index] = False
            mat[:, mask] -= pot_margin * pots[:, None]
        inf_vals = p @ mat
        delta = inf_vals - inf_vals[blueprint_index]
        delta[blueprint_index] = 0.0
        delta = np.maximum(delta, 0.0)
        mat = mat - delta[None, :]
        for i, h in enumerate(hist):
            out[h] = sgn * mat[i]
    res = ValueTable(out, values.n, "chips", values.provenance, values.game_hash)
    return res.to_units(game, values.units)


# -- value providers ----------------------------------------------------------------


class ValueProvider(Protocol):
    n: int

    def __call__(self, game: GameTree, node: int) -> np.ndarray: ...


@dataclass
class TableProvider:
    table: ValueTable

    @property
    def n(self):
        return self.table.n

    def __call__(self, game: GameTree, node: int) -> np.ndarray:
        h = game.history[node]
        if h not in self.table.entries:
            raise SubgameError(f"value table does not cover leaf {h!r}")
        return self.table.vector(h, game.pot[node])


def continuation_values(game: GameTree, blueprint_solver: BehavioralStrategy,
                        continuation: ContinuationSet, solver: int = P1) -> np.ndarray:
    """P1 values at every node, one row per continuation (shape N x nodes)."""
    rows = []
    for strat in continuation.strategies:
        prof = continuation_profile(solver, blueprint_solver, strat)
        rows.append(game.values(prof.pack(game, default="uniform")))
    return np.stack(rows)


@dataclass
class NodeValueProvider:
    """Precomputed per-node continuation values on one tree."""

    tree: GameTree
    values: np.ndarray  # N x nodes

    @property
    def n(self):
        return self.values.shape[0]

    def __call__(self, game: GameTree, node: int) -> np.ndarray:
        if game is not self.tree:
            raise SubgameError("node values were computed on a different tree")
        return self.values[:, node].copy()

    def prefix(self, n: int) -> "NodeValueProvider":
        return NodeValueProvider(self.tree, self.values[:n])


class _Sampler:
    """Scalar tree walker for Monte Carlo rollouts."""

    def __init__(self, tree: GameTree):
        self.actor = tree.actor.tolist()
        self.first = tree.first_child.tolist()
        self.nkids = tree.n_children.tolist()
        self.util = tree.utility.tolist()
        self.infoset = tree.node_infoset.tolist()
        self.prob = tree.chance_prob.tolist()

    def rollout(self, node: int, sigma_cum: list, rng) -> float:
        actor, first, nkids = self.actor, self.first, self.nkids
        while actor[node] != TERMINAL:
            fc, k = first[node], nkids[node]
            u = rng.random()
            if actor[node] == CHANCE:
                acc = 0.0
                pick = k - 1
                for i in range(k):
                    acc += self.prob[fc + i]
                    if u < acc:
                        pick = i
                        break
            else:
                cum = sigma_cum[self.infoset[node]]
                pick = k - 1
                for i in range(k):
                    if u < cum[i]:
                        pick = i
                        break
            node = fc + pick
        return self.util[node]


_samplers: dict[int, _Sampler] = {}


def _sampler(tree: GameTree) -> _Sampler:
    s = _samplers.get(id(tree))
    if s is None:
        s = _samplers[id(tree)] = _Sampler(tree)
    return s


def _cum_tables(tree: GameTree, sigma: np.ndarray) -> list:
    return [np.cumsum(sigma[I.seqs]).tolist() for I in tree.infosets]


def rollout_estimate(game: GameTree, blueprint_solver: BehavioralStrategy,
                     continuation: ContinuationSet, leaf: int,
                     samples: int = DEFAULT_ROLLOUTS, seed: int = 0,
                     solver: int = P1) -> np.ndarray:
    """Monte Carlo estimate of each continuation's P1 value below ``leaf``."""
    if samples < 1:
        raise SubgameError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    smp = _sampler(game)
    out = np.empty(len(continuation))
    for n, strat in enumerate(continuation.strategies):
        sigma = continuation_profile(solver, blueprint_solver, strat).pack(game, default="uniform")
        cum = _cum_tables(game, sigma)
        out[n] = sum(smp.rollout(leaf, cum, rng) for _ in range(samples)) / samples
    return out


@dataclass
class RolloutProvider:
    """Estimates leaf values by rollouts of the stored strategies; deterministic per (seed, leaf)."""

    blueprint_solver: BehavioralStrategy
    continuation: ContinuationSet
    samples: int = DEFAULT_ROLLOUTS
    seed: int = 0
    solver: int = P1
    _cum: dict = field(default_factory=dict, repr=False)

    @property
    def n(self):
        return len(self.continuation)

    def __call__(self, game: GameTree, node: int) -> np.ndarray:
        key = id(game)
        if key not in self._cum:
            tabs = []
            for strat in self.continuation.strategies:
                prof = continuation_profile(self.solver, self.blueprint_solver, strat)
                tabs.append(_cum_tables(game, prof.pack(game, default="uniform")))
            self._cum[key] = tabs
        rng = np.random.default_rng([self.seed, int(node)])
        smp = _sampler(game)
        return np.array([sum(smp.rollout(node, cum, rng) for _ in range(self.samples)) / self.samples
                         for cum in self._cum[key]])


N_FEATURES = 34
_ACTION_CODE = {"f": 0.1, "c": 0.2, "k": 0.2, "p": 0.2, "b": 1.0, "r": 1.0, "a": 3.0}


def state_features(game: GameTree, node: int) -> np.ndarray:
    """Fixed-length numeric description of a state for value predictors."""
    f = np.zeros(N_FEATURES)
    f[0] = game.pot[node]
    f[1] = game.round[node]
    f[2] = game.depth[node]
    hist = game.history[node].split(";")
    # the deal label (if any) is the first history element; encode its characters
    deal = hist[0] if hist and hist[0] else ""
    for i, ch in enumerate(deal[:12]):
        f[3 + i] = ord(ch) / 128.0
    tail = hist[1:]
    for i, a in enumerate(tail[-18:]):
        f[15 + i] = _ACTION_CODE.get(a[:1], 0.5) + (int(a[1:]) / 100.0 if a[1:].isdigit() else 0.0)
    f[33] = len(tail)
    return f


@dataclass
class PredictorProvider:
    """Wraps any ``fn(features) -> N values (pot fractions)``."""

    fn: Callable[[np.ndarray], np.ndarray]
    n: int
    featurize: Callable[[GameTree, int], np.ndarray] = state_features

    def __call__(self, game: GameTree, node: int) -> np.ndarray:
        out = np.asarray(self.fn(self.featurize(game, node)), dtype=np.float64)
        if out.shape != (self.n,):
            raise SubgameError(f"predictor returned shape {out.shape}, expected ({self.n},)")
        return out * game.pot[node]


class LookupPredictor:
    """Reference predictor: inverse-distance interpolation over stored examples."""

    def __init__(self, features: np.ndarray, targets: np.ndarray, k: int = 1):
        self.X = np.asarray(features, dtype=np.float64)
        self.Y = np.asarray(targets, dtype=np.float64)
        self.k = k

    @classmethod
    def from_table(cls, game: GameTree, table: ValueTable, k: int = 1) -> "LookupPredictor":
        frac = table.to_units(game, "pot_fraction")
        hs = sorted(frac.entries)
        X = np.stack([state_features(game, game.node_by_history(h)) for h in hs])
        Y = np.stack([frac.entries[h] for h in hs])
        return cls(X, Y, k)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        d = np.linalg.norm(self.X - x[None, :], axis=1)
        idx = np.argsort(d, kind="stable")[: self.k]
        if d[idx[0]] == 0:
            return self.Y[idx[0]].copy()
        w = 1.0 / d[idx]
        return (w[:, None] * self.Y[idx]).sum(0) / w.sum()


# -- augmented subgame construction ------------------------------------------------------


@dataclass
class DepthLimitedSubgame:
    tree: GameTree
    spec: SubgameSpec
    solver: int
    leaf_infosets: tuple[str, ...]
    continuation: ContinuationSet | None
    provider: object
    orig: np.ndarray  # augmented node -> original node (-1 for synthetic nodes)
    leaves: np.ndarray  # original leaf nodes

    def original_keys(self) -> set[str]:
        return {I.key for I in self.tree.infosets if "#" not in I.key}

    def solver_strategy(self, profile: StrategyProfile) -> BehavioralStrategy:
        """Solver's part of a subgame solution, on original infoset keys only."""
        return profile[self.solver].restrict(self.original_keys())


def _copy_below(b: TreeBuilder, game: GameTree, spec: SubgameSpec, root: int, parent: int,
                label: str, prob: float, leaf_fn, orig: list, root_depth: int, action_filter=None):
    """Copy the subtree at ``root`` into the builder, expanding leaves with ``leaf_fn``.

    ``action_filter(game, node)`` may return the subset of player actions to keep.
    """
    stack = [(root, parent, label, prob)]
    while stack:
        n, par, lab, pr = stack.pop()
        a = int(game.actor[n])
        common = dict(parent=par, label=lab, prob=pr, history=game.history[n],
                      round=int(game.round[n]), pot=float(game.pot[n]),
                      public=game.public_keys[game.public_id[n]])
        if a == TERMINAL:
            orig.append(n)
            b.add(actor=TERMINAL, utility=float(game.utility[n]), **common)
            continue
        obs = (game.infoset_key(n, P1), game.infoset_key(n, P2))
        if n != root and spec.is_leaf(game, n, root_depth):
            leaf_fn(b, n, common, obs)
            continue
        orig.append(n)
        idx = b.add(actor=a, obs=obs, **common)
        kids = list(game.children(n))
        if action_filter is not None and a != CHANCE:
            keep = action_filter(game, n)
            if keep is not None:
                keep = set(keep)
                kids = [c for c in kids if game.edge_label[c] in keep]
                if not kids:
                    raise SubgameError(f"action filter removed every action at {game.history[n]!r}")
        for c in reversed(kids):
            stack.append((c, idx, game.edge_label[c], float(game.chance_prob[c])))


def build_depth_limited(game: GameTree, spec: SubgameSpec, continuation: ContinuationSet | None,
                        provider, solver: int = P1, check: bool = True,
                        root_builder=None, action_filter=None) -> DepthLimitedSubgame:
    """Augmented game: subgame body plus an N-way opponent choice at each leaf.

    With a single root and no weights the root is copied directly; otherwise a
    chance node enters the roots in proportion to ``spec.weights``.
    ``root_builder`` lets callers (the safety gadget) supply their own entry
    structure: ``root_builder(b, copy_root)`` must build the top and call
    ``copy_root(root, parent, label, prob)`` for each subgame root.
    """
    if check:
        check_closure(game, spec)
    opp = opponent(solver)
    orig: list[int] = []
    leaf_keys: dict[str, None] = {}
    leaves: list[int] = []
    n_values = provider.n if provider is not None else 0

    def leaf_fn(b: TreeBuilder, n: int, common: dict, obs):
        if provider is None:
            raise SubgameError("depth-limited subgame needs a value provider for its leaves")
        vals = np.asarray(provider(game, n), dtype=np.float64)
        if vals.shape != (n_values,):
            raise SubgameError(f"provider returned {vals.shape} at {game.history[n]!r}")
        leaves.append(n)
        leaf_keys[obs[opp]] = None
        if n_values == 1:
            orig.append(n)
            b.add(actor=TERMINAL, utility=float(vals[0]), **common)
            return
        orig.append(n)
        cobs = (obs[0] + CONT_SUFFIX, obs[1] + CONT_SUFFIX)
        idx = b.add(actor=opp, obs=cobs, **common)
        for i in range(n_values):
            orig.append(-1)
            b.add(actor=TERMINAL, parent=idx, label=f"n{i}", utility=float(vals[i]),
                  history=common["history"] + f";n{i}", round=common["round"],
                  pot=common["pot"], public=common["public"] + f"#n{i}")

    b = TreeBuilder()

    def copy_root(root, parent=-1, label="", prob=1.0):
        _copy_below(b, game, spec, root, parent, label, prob, leaf_fn, orig, int(game.depth[root]),
                    action_filter)

    if root_builder is not None:
        root_builder(b, copy_root, orig)
    elif len(spec.roots) == 1 and spec.weights is None:
        copy_root(spec.roots[0])
    else:
        w = np.ones(len(spec.roots)) if spec.weights is None else np.asarray(spec.weights, dtype=np.float64)
        if (w < 0).any() or w.sum() <= 0:
            raise SubgameError("entry weights must be nonnegative with positive total")
        p = w / w.sum()
        orig.append(-1)
        root = b.add(actor=CHANCE, obs=("P1:@root", "P2:@root"), history="@root", public="@root")
        for i, pi in enumerate(p):
            # zero-weight roots stay in the tree so the solution covers them
            copy_root(spec.roots[i], root, f"e{i}", float(pi))
    tree = b.finalize(f"{game.name}/dl", game.big_blind, {"parent": game.name})
    orig_arr = _reorder_orig(b, orig)
    return DepthLimitedSubgame(tree, spec, solver, tuple(leaf_keys), continuation, provider,
                               orig_arr, np.asarray(sorted(set(leaves)), dtype=np.int64))


def _reorder_orig(b: TreeBuilder, orig: list[int]) -> np.ndarray:
    # builder ids -> finalized BFS ids, mirroring TreeBuilder.finalize
    from collections import deque
    order, q = [], deque([0])
    while q:
        n = q.popleft()
        order.append(n)
        q.extend(b.children[n])
    return np.asarray(orig, dtype=np.int64)[np.asarray(order, dtype=np.int64)]


def solve_subgame(subgame: DepthLimitedSubgame, config: SolverConfig = SolverConfig()) -> StrategyProfile:
    """Average-strategy profile over the augmented subgame."""
    if subgame.provider is None and len(subgame.leaves):
        raise SubgameError("subgame leaves have no values")
    return run_solver(subgame.tree, config)


def stitch(base: BehavioralStrategy, subgame: DepthLimitedSubgame,
           profile: StrategyProfile) -> BehavioralStrategy:
    """Base strategy with the subgame solution substituted inside the subgame."""
    return base.override(subgame.solver_strategy(profile))


# -- opponent strategy sets ---------------------------------------------------------------


def generate_bias_set(blueprint_opp: BehavioralStrategy,
                      specs: Sequence[tuple[str, float]] = DEFAULT_BIAS) -> ContinuationSet:
    """Blueprint followed by one biased copy per (action class, multiplier)."""
    strategies = [blueprint_opp]
    labels = ["blueprint"]
    for cls, mult in specs:
        if mult <= 0:
            raise SubgameError("bias multipliers must be positive")
        strategies.append(bias_strategy(blueprint_opp, cls, mult))
        labels.append(f"bias({cls}x{mult:g})")
    return ContinuationSet(tuple(strategies), tuple(labels))


@dataclass
class SelfPlayTrace:
    continuation: ContinuationSet
    subgame_solutions: list[BehavioralStrategy]


def generate_self_play_set(game: GameTree, blueprint: StrategyProfile, spec: SubgameSpec, k: int,
                           solver: int = P1, config: SolverConfig = SolverConfig(),
                           trace: bool = False):
    """Grow the opponent set by repeated best responses to the depth-limited solution.

    Each round solves the depth-limited subgame with the current set, plays
    that solution inside the subgame and the blueprint elsewhere, and appends
    the opponent's exact best response to this combined strategy.
    """
    if k < 1:
        raise SubgameError("k must be >= 1")
    opp = opponent(solver)
    cont = ContinuationSet.blueprint_only(blueprint[opp])
    _, leaves = subgame_nodes(game, spec)
    cols = []
    solutions = []
    bp_solver = blueprint[solver]
    check_closure(game, spec)
    while True:
        for n in range(len(cols), len(cont)):
            cols.append(compute_value_table(game, bp_solver, ContinuationSet((cont[n],), ("blueprint",)),
                                            leaves, solver))
        if len(cont) >= k and not trace:
            break
        table = _merge_columns(cols, cont.provenance)
        dl = build_depth_limited(game, spec, cont, TableProvider(table), solver, check=False)
        sol = solve_subgame(dl, config)
        combined = stitch(bp_solver, dl, sol)
        solutions.append(combined)
        if len(cont) >= k:
            break
        br = best_response(game, combined, opp)
        cont = cont.append(br.strategy.as_behavioral(game), f"self_generated({len(cont)})")
        log.debug("self-play round %d: opponent BR value %.6f", len(cont) - 1, br.value)
    if trace:
        return SelfPlayTrace(cont, solutions)
    return cont


def _merge_columns(cols: list[ValueTable], provenance) -> ValueTable:
    hs = cols[0].entries.keys()
    entries = {h: np.concatenate([c.entries[h] for c in cols]) for h in hs}
    return ValueTable(entries, len(cols), "chips", tuple(provenance), cols[0].game_hash)
