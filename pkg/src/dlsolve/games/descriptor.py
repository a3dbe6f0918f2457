"""Game descriptors: named, parameterized recipes for building game trees."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .kuhn import KuhnPoker
from .poker import FlopHoldem, LeducPoker
from .rps import RPSPlus
from .tree import GameError, GameTree, build_tree

_GAMES = {
    "rps_plus": RPSPlus,
    "kuhn": KuhnPoker,
    "leduc": LeducPoker,
    "nlfh": FlopHoldem,
}

# desk-scale flop hold'em used throughout the experiments
MINI_NLFH = dict(n_ranks=3, n_suits=2, stack=20, small_blind=1, big_blind=2,
                 bet_fractions=(0.5, 1.0), allow_allin=True, max_raises=3)


@dataclass(frozen=True)
class GameDescriptor:
    name: str
    params: dict[str, Any] = field(default_factory=dict)

    def rules(self):
        try:
            cls = _GAMES[self.name]
        except KeyError:
            raise GameError(f"unknown game {self.name!r}; choose from {sorted(_GAMES)}") from None
        params = dict(self.params)
        for k in ("bet_fractions", "first_action_fractions", "bets"):
            if k in params:
                params[k] = tuple(params[k])
        try:
            return cls(**params)
        except TypeError as e:
            raise GameError(f"bad parameters for {self.name}: {e}") from None

    def key(self) -> str:
        items = ",".join(f"{k}={self.params[k]!r}" for k in sorted(self.params))
        return f"{self.name}({items})"

    @classmethod
    def from_dict(cls, d: dict) -> "GameDescriptor":
        d = dict(d)
        name = d.pop("name", None) or d.pop("game", None)
        if name is None:
            raise GameError("game descriptor needs a 'name'")
        params = d.pop("params", {})
        params.update(d)
        return cls(name, params)


_cache: dict[str, GameTree] = {}


def build_game(descriptor: GameDescriptor | str, **params) -> GameTree:
    """Build (or fetch from the per-process cache) the tree for a descriptor."""
    if isinstance(descriptor, str):
        descriptor = GameDescriptor(descriptor, params)
    k = descriptor.key()
    tree = _cache.get(k)
    if tree is None:
        tree = build_tree(descriptor.rules(), meta={"descriptor": descriptor})
        _cache[k] = tree
    return tree


def mini_nlfh(**overrides) -> GameDescriptor:
    p = dict(MINI_NLFH)
    p.update(overrides)
    return GameDescriptor("nlfh", p)
