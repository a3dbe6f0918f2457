"""Strategy representations, expected values, beliefs and strategy transforms."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .games.tree import P1, P2, GameError, GameTree, action_class

DRIFT_RENORMALIZE = 1e-9
DRIFT_FATAL = 1e-6


class StrategyError(ValueError):
    pass


def _clean(key: str, vec) -> np.ndarray:
    v = np.array(vec, dtype=np.float64)
    if v.ndim != 1 or len(v) == 0:
        raise StrategyError(f"{key!r}: strategy vector must be a nonempty 1-d array")
    if (v < -DRIFT_FATAL).any():
        raise StrategyError(f"{key!r}: negative probability {v.min()}")
    v = np.maximum(v, 0.0)
    s = v.sum()
    if abs(s - 1.0) > DRIFT_FATAL:
        raise StrategyError(f"{key!r}: probabilities sum to {s}")
    if abs(s - 1.0) > DRIFT_RENORMALIZE:
        v = v / s
    v.setflags(write=False)
    return v


@dataclass(frozen=True)
class BehavioralStrategy:
    """Infoset key -> probability vector aligned with that infoset's actions.

    ``actions`` optionally records the action labels per key; transforms that
    act on action semantics (biasing) need it.
    """

    table: Mapping[str, np.ndarray]
    actions: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    player: int | None = None

    def __post_init__(self):
        clean = {k: _clean(k, v) for k, v in self.table.items()}
        object.__setattr__(self, "table", MappingProxyType(clean))
        object.__setattr__(self, "actions", MappingProxyType(dict(self.actions)))

    def __getitem__(self, key: str) -> np.ndarray:
        try:
            return self.table[key]
        except KeyError:
            raise KeyError(f"strategy has no infoset {key!r}") from None

    def __contains__(self, key) -> bool:
        return key in self.table

    def __len__(self) -> int:
        return len(self.table)

    def keys(self):
        return self.table.keys()

    def items(self):
        return self.table.items()

    def get(self, key, default=None):
        return self.table.get(key, default)

    @classmethod
    def from_flat(cls, tree: GameTree, flat: np.ndarray, player: int) -> "BehavioralStrategy":
        table, acts = {}, {}
        for I in tree.infosets:
            if I.player == player:
                table[I.key] = flat[I.seqs]
                acts[I.key] = I.actions
        return cls(table, acts, player)

    @classmethod
    def uniform(cls, tree: GameTree, player: int) -> "BehavioralStrategy":
        return cls.from_flat(tree, tree.uniform(), player)

    def override(self, other: "BehavioralStrategy | Mapping") -> "BehavioralStrategy":
        """Copy of self with ``other``'s entries taking precedence."""
        table = dict(self.table)
        acts = dict(self.actions)
        table.update(getattr(other, "table", other))
        acts.update(getattr(other, "actions", {}))
        return BehavioralStrategy(table, acts, self.player)

    def restrict(self, keys: Iterable[str]) -> "BehavioralStrategy":
        keys = set(keys)
        return BehavioralStrategy({k: v for k, v in self.table.items() if k in keys},
                                  {k: v for k, v in self.actions.items() if k in keys},
                                  self.player)

    def is_pure(self) -> bool:
        return all(np.all((v == 0) | (v == 1)) for v in self.table.values())

    def to_dict(self) -> dict:
        return {
            "player": self.player,
            "strategy": {k: [float(x) for x in v] for k, v in sorted(self.table.items())},
            "actions": {k: list(v) for k, v in sorted(self.actions.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BehavioralStrategy":
        acts = {k: tuple(v) for k, v in d.get("actions", {}).items()}
        return cls(d["strategy"], acts, d.get("player"))


@dataclass(frozen=True)
class PureStrategy:
    """Infoset key -> chosen action index."""

    table: Mapping[str, int]
    player: int | None = None

    def as_behavioral(self, tree: GameTree) -> BehavioralStrategy:
        table, acts = {}, {}
        for k, a in self.table.items():
            I = tree.infoset(k)
            v = np.zeros(I.n_actions)
            v[a] = 1.0
            table[k] = v
            acts[k] = I.actions
        return BehavioralStrategy(table, acts, self.player)


@dataclass(frozen=True)
class StrategyProfile:
    p1: BehavioralStrategy
    p2: BehavioralStrategy

    def __getitem__(self, player: int) -> BehavioralStrategy:
        return self.p1 if int(player) == P1 else self.p2

    def replace(self, player: int, strategy: BehavioralStrategy) -> "StrategyProfile":
        return StrategyProfile(strategy, self.p2) if int(player) == P1 else StrategyProfile(self.p1, strategy)

    def pack(self, tree: GameTree, default: str = "error") -> np.ndarray:
        return tree.pack(self.p1, self.p2, default=default)

    @classmethod
    def from_flat(cls, tree: GameTree, flat: np.ndarray) -> "StrategyProfile":
        return cls(BehavioralStrategy.from_flat(tree, flat, P1),
                   BehavioralStrategy.from_flat(tree, flat, P2))

    @classmethod
    def uniform(cls, tree: GameTree) -> "StrategyProfile":
        return cls.from_flat(tree, tree.uniform())

    def to_dict(self) -> dict:
        return {"p1": self.p1.to_dict(), "p2": self.p2.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "StrategyProfile":
        return cls(BehavioralStrategy.from_dict(d["p1"]), BehavioralStrategy.from_dict(d["p2"]))

    def save(self, path: str | Path, **meta):
        payload = {"meta": meta, **self.to_dict()}
        Path(path).write_text(json.dumps(payload, indent=1))

    @classmethod
    def load(cls, path: str | Path) -> "StrategyProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class BeliefState:
    """Nonnegative reach weights over the states of one public situation."""

    weights: Mapping[int, float]

    def total(self) -> float:
        return float(sum(self.weights.values()))

    def normalized(self) -> dict[int, float]:
        t = self.total()
        if t <= 0:
            raise StrategyError("belief has zero total weight")
        return {h: w / t for h, w in self.weights.items()}


# -- evaluation ---------------------------------------------------------------


def _pack_covering(tree: GameTree, profile, below: Sequence[int]) -> np.ndarray:
    """Pack a profile, requiring coverage of every infoset under ``below``."""
    sigma = tree.pack(profile.p1, profile.p2, default="uniform")
    nodes = tree.descendants(below)
    needed = np.unique(tree.node_infoset[nodes])
    for j in needed[needed >= 0]:
        I = tree.infosets[j]
        if I.key not in profile[I.player]:
            raise KeyError(f"profile missing infoset {I.key!r}")
    return sigma


def state_value(profile: StrategyProfile, tree: GameTree, state: int, player: int) -> float:
    """Exact expected payoff to ``player`` from ``state`` under ``profile``."""
    sigma = _pack_covering(tree, profile, [state])
    v = float(tree.values(sigma)[state])
    return v if player == P1 else -v


def all_state_values(profile: StrategyProfile, tree: GameTree) -> np.ndarray:
    """P1 values at every node (profile must cover the whole tree)."""
    return tree.values(profile.pack(tree))


def infoset_value(profile: StrategyProfile, tree: GameTree, infoset: str,
                  beliefs: BeliefState | Mapping[int, float]) -> float:
    """Belief-weighted value to the infoset's owner."""
    weights = beliefs.weights if isinstance(beliefs, BeliefState) else beliefs
    player = P1 if infoset.startswith("P1:") else P2
    members = set(int(h) for h in tree.nodes_with_obs(player, infoset))
    if set(int(h) for h in weights) != members:
        raise StrategyError(f"beliefs must cover exactly the states of {infoset!r}")
    p = BeliefState(dict(weights)).normalized()
    sigma = _pack_covering(tree, profile, list(members))
    v = tree.values(sigma)
    sign = 1.0 if player == P1 else -1.0
    return sign * sum(w * v[h] for h, w in p.items())


def reach_weights(profile: StrategyProfile, tree: GameTree, public_situation) -> dict[int, BeliefState]:
    """Each player's unnormalized belief over the states of a public situation.

    ``public_situation`` is a public key string, a public id, or an explicit
    node list. Player i's weight on h is the product of the other player's and
    chance's probabilities along the history of h.
    """
    if isinstance(public_situation, str):
        pid = tree.public_keys.index(public_situation)
        nodes = np.nonzero(tree.public_id == pid)[0]
    elif isinstance(public_situation, (int, np.integer)):
        nodes = np.nonzero(tree.public_id == public_situation)[0]
    else:
        nodes = np.asarray(list(public_situation), dtype=np.int64)
    sigma = tree.pack(profile.p1, profile.p2, default="uniform")
    r = tree.reach(sigma)
    out = {}
    for p in (P1, P2):
        w = r[1 - p, nodes] * r[2, nodes]
        out[p] = BeliefState({int(h): float(x) for h, x in zip(nodes, w)})
    return out


# -- transforms -----------------------------------------------------------------


def _class_predicate(action_cls) -> Callable[[str], bool]:
    if callable(action_cls):
        return action_cls
    if action_cls is None:
        return lambda label: False
    wanted = {action_cls} if isinstance(action_cls, str) else set(action_cls)
    return lambda label: action_class(label) in wanted


def bias_strategy(strategy: BehavioralStrategy, action_cls, multiplier: float) -> BehavioralStrategy:
    """Scale the probability of matching actions, then renormalize each infoset."""
    if multiplier <= 0:
        raise StrategyError("bias multiplier must be positive")
    match = _class_predicate(action_cls)
    table = {}
    for key, vec in strategy.items():
        labels = strategy.actions.get(key)
        if labels is None:
            raise StrategyError(f"no action labels recorded for {key!r}")
        scale = np.array([multiplier if match(a) else 1.0 for a in labels])
        v = vec * scale
        table[key] = v / v.sum()
    return BehavioralStrategy(table, strategy.actions, strategy.player)


def mix_strategies(components: Sequence[BehavioralStrategy], weights: Sequence[float]) -> BehavioralStrategy:
    """Per-infoset convex combination of strategies sharing one scope.

    This is the behavioral mixture; it agrees with the realization-weighted
    mixture only where the components reach each infoset equally often, which
    includes mixtures of pure strategies compared at the root.
    """
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(components) or len(w) == 0:
        raise StrategyError("need one weight per component")
    if (w < 0).any() or abs(w.sum() - 1) > 1e-9:
        raise StrategyError("mixture weights must be a probability vector")
    keys = set(components[0].keys())
    for c in components[1:]:
        if set(c.keys()) != keys:
            raise StrategyError("components do not share a scope")
    table = {k: sum(wi * c[k] for wi, c in zip(w, components)) for k in keys}
    return BehavioralStrategy(table, components[0].actions, components[0].player)


def realization_mixture(tree: GameTree, components: Sequence[BehavioralStrategy],
                        weights: Sequence[float], player: int) -> BehavioralStrategy:
    """Behavioral equivalent of picking component i with probability w_i once,
    before the game, then following it throughout."""
    w = np.asarray(weights, dtype=np.float64)
    if len(w) != len(components) or len(w) == 0:
        raise StrategyError("need one weight per component")
    if (w < 0).any() or abs(w.sum() - 1) > 1e-9:
        raise StrategyError("mixture weights must be a probability vector")
    flats = [tree.pack(c, default="uniform") for c in components]
    own = [tree.reach(f)[player] for f in flats]
    table, acts = {}, {}
    for I in tree.player_infosets(player):
        rep = I.nodes[0]
        num = sum(wi * r[rep] * f[I.seqs] for wi, r, f in zip(w, own, flats))
        den = sum(wi * r[rep] for wi, r in zip(w, own))
        table[I.key] = num / den if den > 0 else sum(wi * f[I.seqs] for wi, f in zip(w, flats))
        acts[I.key] = I.actions
    return BehavioralStrategy(table, acts, player)


def sample_action(strategy: BehavioralStrategy, infoset: str, rng_seed) -> int:
    """Draw an action index from the infoset's vector."""
    vec = strategy[infoset]
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return int(min(np.searchsorted(np.cumsum(vec), rng.random(), side="right"), len(vec) - 1))
