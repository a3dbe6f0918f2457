"""Online play: nested unsafe and safe resolving, off-tree actions and agents."""

from __future__ import annotations

import json
import logging
import sys
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from .best_response import root_infoset_br_values
from .cfr import SolverConfig, iteration_schedule, run_solver, solve_exact
from .depth_limited import (
    CONT_SUFFIX,
    ContinuationSet,
    DepthLimit,
    DepthLimitedSubgame,
    NodeValueProvider,
    RolloutProvider,
    SubgameSpec,
    build_depth_limited,
    continuation_values,
    generate_bias_set,
    generate_self_play_set,
    solve_subgame,
)
from .games.tree import CHANCE, P1, P2, TERMINAL, GameTree, opponent
from .strategy import BehavioralStrategy, BeliefState, StrategyProfile

log = logging.getLogger(__name__)

GADGET_SUFFIX = "#gadget"


class ResolveError(ValueError):
    pass


class IllegalActionError(ResolveError):
    pass


class MappingError(ResolveError):
    pass


class ProtocolError(RuntimeError):
    def __init__(self, message: str, transcript=None):
        super().__init__(message)
        self.transcript = transcript


def original_part(strategy: BehavioralStrategy) -> BehavioralStrategy:
    """Drop the synthetic infosets (continuation and gadget choices)."""
    return strategy.restrict(k for k in strategy.keys() if "#" not in k)


# -- resolve context -------------------------------------------------------------------


@dataclass(frozen=True)
class ResolveContext:
    """States of the current public situation with per-player reach.

    ``reach`` has shape (3, len(states)): rows P1, P2 and chance.
    """

    game: GameTree
    states: tuple[int, ...]
    reach: np.ndarray
    mode: str = "unsafe"
    alt_values: Mapping[str, float] = field(default_factory=dict)
    solver: int = P1

    def __post_init__(self):
        if self.mode not in ("unsafe", "safe_gadget"):
            raise ResolveError(f"unknown resolve mode {self.mode!r}")
        if len(self.states) == 0:
            raise ResolveError("context needs at least one state")
        if self.mode == "safe_gadget":
            opp = opponent(self.solver)
            missing = {self.game.infoset_key(h, opp) for h in self.states} - set(self.alt_values)
            if missing:
                raise ResolveError(f"missing alt values for {sorted(missing)}")

    @property
    def public_history(self) -> str:
        return self.game.public_keys[self.game.public_id[self.states[0]]]

    @property
    def beliefs(self) -> dict[int, BeliefState]:
        out = {}
        for p in (P1, P2):
            w = self.reach[1 - p] * self.reach[2]
            out[p] = BeliefState({h: float(x) for h, x in zip(self.states, w)})
        return out

    def joint(self) -> np.ndarray:
        return self.reach.prod(axis=0)

    @classmethod
    def from_profile(cls, game: GameTree, states: Iterable[int], profile: StrategyProfile | None = None,
                     **kw) -> "ResolveContext":
        states = tuple(int(h) for h in states)
        sigma = game.uniform() if profile is None else profile.pack(game, default="uniform")
        r = game.reach(sigma)[:, list(states)]
        return cls(game, states, r, **kw)

    @classmethod
    def at_public(cls, game: GameTree, public: str | int, profile: StrategyProfile | None = None,
                  **kw) -> "ResolveContext":
        pid = game.public_keys.index(public) if isinstance(public, str) else int(game.public_id[public])
        return cls.from_profile(game, np.nonzero(game.public_id == pid)[0], profile, **kw)

    @classmethod
    def initial(cls, game: GameTree, **kw) -> "ResolveContext":
        """Context at the first player decision (after any opening chance node)."""
        node = 0
        while game.actor[node] == CHANCE:
            node = int(game.first_child[node])
        return cls.at_public(game, int(node), None, **kw)

    def advance(self, action: str, prob: Callable[[str, str], float] | None = None) -> "ResolveContext":
        """Bayes update after a public action.

        ``prob(infoset_key, label)`` gives the actor's modeled probability of
        the action. Observing an action the model never plays resets the
        actor's reach to 1 on every consistent state.
        """
        g = self.game
        actor = int(g.actor[self.states[0]])
        if actor == TERMINAL:
            raise ResolveError("cannot advance past a terminal state")
        kids, rows = [], []
        for i, h in enumerate(self.states):
            c = _child_or_none(g, h, action)
            if c is None:
                if actor == CHANCE:
                    continue
                raise IllegalActionError(f"action {action!r} illegal at {g.history[h]!r}")
            kids.append(c)
            rows.append(i)
        if not kids:
            raise IllegalActionError(f"chance outcome {action!r} impossible here")
        r = self.reach[:, rows].copy()
        if actor == CHANCE:
            r[2] *= g.chance_prob[kids]
        elif prob is not None:
            p = np.array([prob(g.infoset_key(self.states[i], actor), action) for i in rows])
            if (p < 0).any():
                raise ResolveError("negative action probability")
            r[actor] *= p
            if r.prod(axis=0).sum() <= 0:
                r[actor] = 1.0
        return ResolveContext(g, tuple(kids), r, "unsafe", {}, self.solver)


def _child_or_none(g: GameTree, h: int, label: str):
    for c in g.children(h):
        if g.edge_label[c] == label:
            return c
    return None


# -- safety gadget ------------------------------------------------------------------------


@dataclass
class AugmentedSubgame:
    subgame: DepthLimitedSubgame
    alt_values: dict[str, float]
    entry_weights: dict[int, float]  # root -> chance probability of its entry node
    gadget_keys: tuple[str, ...]

    @property
    def tree(self) -> GameTree:
        return self.subgame.tree

    def solver_strategy(self, profile: StrategyProfile) -> BehavioralStrategy:
        return self.subgame.solver_strategy(profile)


def build_gadget(game: GameTree, spec: SubgameSpec, reach_weights, alt_values: Mapping[str, float],
                 continuation: ContinuationSet | None = None, provider=None, solver: int = P1,
                 margin: float = 0.0, action_filter=None, check: bool = True) -> AugmentedSubgame:
    """Subgame preceded by an opponent choice between a fixed "alt" payoff and entering.

    ``reach_weights`` (root -> weight, or a sequence aligned with
    ``spec.roots``) should be the solver's reach times chance: the probability
    of reaching each root if the opponent tried to. Alt values are in the
    opponent's units and ``margin`` is added to each.
    """
    opp = opponent(solver)
    if isinstance(reach_weights, Mapping):
        w = np.array([float(reach_weights.get(r, 0.0)) for r in spec.roots])
    else:
        w = np.asarray(reach_weights, dtype=np.float64)
    if len(w) != len(spec.roots):
        raise ResolveError("one reach weight per root")
    if (w < 0).any():
        raise ResolveError("reach weights must be nonnegative")
    if w.sum() <= 0:
        raise ResolveError("gadget entry weights have zero total reach")
    keys = [game.infoset_key(r, opp) for r in spec.roots]
    missing = sorted(set(keys) - set(alt_values))
    if missing:
        raise ResolveError(f"missing alt values for {missing}")
    probs = w / w.sum()
    sign = -1.0 if opp == P2 else 1.0  # opponent payoff -> P1 utility
    entry = {}

    def root_builder(b, copy_root, orig):
        orig.append(-1)
        top = b.add(actor=CHANCE, obs=("P1:@gadget", "P2:@gadget"), history="@gadget", public="@gadget")
        for i, (r, p, key) in enumerate(zip(spec.roots, probs, keys)):
            entry[r] = float(p)
            obs = [game.infoset_key(r, P1) + GADGET_SUFFIX, game.infoset_key(r, P2) + GADGET_SUFFIX]
            orig.append(-1)
            hp = b.add(actor=opp, parent=top, label=f"e{i}", prob=float(p), obs=tuple(obs),
                       history=f"@gadget;{i}", public="@gadget;entry", pot=float(game.pot[r]))
            orig.append(-1)
            b.add(actor=TERMINAL, parent=hp, label="alt", utility=sign * (alt_values[key] + margin),
                  history=f"@gadget;{i};alt", public="@gadget;alt")
            copy_root(r, hp, "enter", 1.0)

    sub = build_depth_limited(game, spec, continuation, provider, solver, check=check,
                              root_builder=root_builder, action_filter=action_filter)
    gkeys = tuple(sorted({k + GADGET_SUFFIX for k in keys}))
    used = {k: float(alt_values[k]) for k in set(keys)}
    return AugmentedSubgame(sub, used, entry, gkeys)


def gadget_alt_values(game: GameTree, roots: Sequence[int], solver_reach: np.ndarray,
                      opp_values: np.ndarray, opp: int) -> dict[str, float]:
    """Belief-normalized opponent values per root infoset.

    ``solver_reach`` is solver reach times chance at each root and
    ``opp_values`` the opponent's value at each root.
    """
    groups: dict[str, list[int]] = {}
    for i, r in enumerate(roots):
        groups.setdefault(game.infoset_key(int(r), opp), []).append(i)
    out = {}
    for k, idx in groups.items():
        b = solver_reach[idx]
        b = b / b.sum() if b.sum() > 0 else np.full(len(idx), 1.0 / len(idx))
        out[k] = float(b @ opp_values[idx])
    return out


def promised_values(game: GameTree, roots: Sequence[int], solver: int, dl_profile: StrategyProfile,
                    provider) -> np.ndarray:
    """Opponent value at each root under the continuation mix chosen in the
    previous depth-limited solve (the choice made at the root's parent leaf)."""
    opp = opponent(solver)
    sign = -1.0 if opp == P2 else 1.0
    vals = np.empty(len(roots))
    for i, r in enumerate(roots):
        v = sign * np.asarray(provider(game, int(r)), dtype=np.float64)
        rho = None
        if len(v) > 1:
            rho = dl_profile[opp].get(game.infoset_key(int(game.parent[r]), opp) + CONT_SUFFIX)
        vals[i] = float(rho @ v) if rho is not None else float(v[0])
    return vals


def solve_next_round(game: GameTree, roots: Sequence[int], reach: np.ndarray, solver: int,
                     dl_profile: StrategyProfile, provider, mode: str = "safe_gadget",
                     config: SolverConfig | None = SolverConfig(), margin: float = 0.0) -> BehavioralStrategy:
    """Solve from the start of a new round to the end of the game.

    ``reach`` (3 x roots) comes from the previous solution. In "safe_gadget"
    mode the opponent may instead take the value the previous depth-limited
    solve promised; "unsafe" enters the roots by joint reach.
    """
    roots = tuple(int(x) for x in roots)
    if mode == "safe_gadget":
        b = reach[solver] * reach[2]
        if b.sum() <= 0:
            b = reach[2].copy()
        alt = gadget_alt_values(game, roots, b, promised_values(game, roots, solver, dl_profile, provider),
                                opponent(solver))
        sub = build_gadget(game, SubgameSpec(roots), b, alt, solver=solver, margin=margin, check=False)
    elif mode == "unsafe":
        w = reach.prod(axis=0)
        if w.sum() <= 0:
            w = reach[2].copy()
        sub = build_depth_limited(game, SubgameSpec(roots, tuple(w)), None, None, solver=solver, check=False)
    else:
        raise ResolveError(f"unknown late-round mode {mode!r}")
    return sub.solver_strategy(_solve(sub.tree, config))


@dataclass(frozen=True)
class ResolveResult:
    strategy: BehavioralStrategy  # base strategy with the subgame part replaced
    subgame_strategy: BehavioralStrategy
    roots: tuple[int, ...]
    alt_values: dict[str, float]
    mode: str


def public_roots(game: GameTree, public: str) -> tuple[int, ...]:
    try:
        pid = game.public_keys.index(public)
    except ValueError:
        raise ResolveError(f"no public situation {public!r}") from None
    return tuple(int(h) for h in np.nonzero(game.public_id == pid)[0])


def resolve_public(game: GameTree, base: StrategyProfile, public: str, solver: int = P1,
                   mode: str = "safe_gadget", depth_limit: DepthLimit | None = None,
                   continuation: ContinuationSet | None = None, provider=None,
                   config: SolverConfig | None = None, margin: float = 0.0) -> ResolveResult:
    """Re-solve the solver's play in one public situation of a finished strategy.

    In "safe_gadget" mode the opponent keeps the option of its best-response
    value against ``base`` at each of its root infosets, so the result cannot do
    worse against a best response (up to solver error). ``config=None``
    solves exactly.
    """
    roots = public_roots(game, public)
    if game.actor[roots[0]] not in (P1, P2):
        raise ResolveError(f"public situation {public!r} is not a decision point")
    opp = opponent(solver)
    sigma = base.pack(game, default="uniform")
    reach = game.reach(sigma)[:, list(roots)]
    alt = {}
    if mode == "safe_gadget":
        b = reach[solver] * reach[2]
        # the opponent's best response to the base strategy is always
        # available to it, so those values are the safe alternatives
        keys = sorted({game.infoset_key(r, opp) for r in roots})
        alt = root_infoset_br_values(game, base[solver], keys, opp)
        sub = build_gadget(game, SubgameSpec(roots, None, depth_limit), b, alt, continuation, provider,
                           solver, margin)
    elif mode == "unsafe":
        w = reach.prod(axis=0)
        if w.sum() <= 0:
            raise ResolveError("public situation has zero joint reach")
        sub = build_depth_limited(game, SubgameSpec(roots, tuple(w), depth_limit), continuation, provider,
                                  solver=solver)
    else:
        raise ResolveError(f"unknown resolve mode {mode!r}")
    own = sub.solver_strategy(_solve(sub.tree, config))
    return ResolveResult(base[solver].override(own), own, roots, alt, mode)


# -- unsafe resolving ------------------------------------------------------------------------


def _solve(tree: GameTree, config: SolverConfig | None) -> StrategyProfile:
    if config is None:
        return solve_exact(tree)[0]
    return run_solver(tree, config)


def unsafe_resolve(ctx: ResolveContext, observed_action: str, solver_config: SolverConfig | None = SolverConfig(),
                   depth_limit: DepthLimit | None = None, continuation: ContinuationSet | None = None,
                   provider=None, abstraction: Callable[[GameTree, int], Iterable[str]] | None = None):
    """Resolve from just before an opponent action, with that action added to the abstraction.

    The subgame is entered in proportion to both players' reach and chance.
    Returns the subgame solution (including any continuation choices) and the
    context after the observed action, updated by Bayes' rule with the
    solution's probability of that action. ``solver_config=None`` solves
    exactly by linear programming.
    """
    g = ctx.game
    actor = int(g.actor[ctx.states[0]])
    if actor not in (P1, P2):
        raise ResolveError("resolving needs a player decision at the subgame root")
    for h in ctx.states:
        if _child_or_none(g, h, observed_action) is None:
            raise IllegalActionError(f"action {observed_action!r} illegal at {g.history[h]!r}")
    solver = opponent(actor)
    roots = set(ctx.states)
    filt = None
    if abstraction is not None:
        def filt(game, n):
            allowed = set(abstraction(game, n))
            if n in roots:
                allowed.add(observed_action)
            return allowed
    joint = ctx.joint()
    if joint.sum() <= 0:
        joint = np.ones(len(ctx.states))
    spec = SubgameSpec(ctx.states, tuple(joint), depth_limit)
    sub = build_depth_limited(g, spec, continuation, provider, solver=solver, action_filter=filt)
    profile = _solve(sub.tree, solver_config)
    opp_strat = profile[actor]

    def prob(key, label):
        I = sub.tree.infoset(key)
        return float(opp_strat[key][I.actions.index(label)])

    return profile, ctx.advance(observed_action, prob)


# -- off-tree mapping ----------------------------------------------------------------------


def bet_fraction(label: str) -> float | None:
    """Pot fraction of a bet label; all-in counts as infinitely large."""
    if label == "a":
        return float("inf")
    if label[:1] in ("b", "r") and label[1:].isdigit():
        return int(label[1:]) / 100.0
    return None


def mean_split(lower: str, upper: str, x: float, lo: float, hi: float, node: int):
    return [(lower, 0.5), (upper, 0.5)]


class OffTreeMapper:
    """Maps states of a real game onto states of its action abstraction by action sequence.

    A bet strictly between two abstraction sizes maps to both neighbors (by
    default with equal weight); a bet outside the abstraction's range maps to
    the nearest size.
    """

    def __init__(self, real: GameTree, abstract: GameTree, split=mean_split):
        self.real, self.abstract, self.split = real, abstract, split
        self._cache: dict[int, list[tuple[int, float]]] = {}

    def translate(self, abs_node: int, label: str, split=None) -> list[tuple[str, float]]:
        a = self.abstract
        if a.actor[abs_node] == TERMINAL:
            raise MappingError(f"no abstract counterpart below terminal {a.history[abs_node]!r}")
        labels = a.legal_actions(abs_node)
        if label in labels:
            return [(label, 1.0)]
        x = bet_fraction(label)
        bets = sorted((f, lab) for lab in labels if (f := bet_fraction(lab)) is not None)
        if x is None or a.actor[abs_node] == CHANCE or not bets:
            raise MappingError(f"no abstract action matches {label!r} at {a.history[abs_node]!r}")
        below = [b for b in bets if b[0] <= x]
        above = [b for b in bets if b[0] >= x]
        if below and above:
            (lo, lo_lab), (hi, hi_lab) = below[-1], above[0]
            return (split or self.split)(lo_lab, hi_lab, x, lo, hi, abs_node)
        return [(below[-1][1] if below else above[0][1], 1.0)]

    def map(self, node: int, split=None) -> list[tuple[int, float]]:
        """Abstract states (with weights summing to 1) corresponding to ``node``."""
        if split is None and node in self._cache:
            return self._cache[node]
        hist = self.real.history[node]
        frontier = {0: 1.0}
        for label in (hist.split(";") if hist else []):
            nxt: dict[int, float] = {}
            for a, w in frontier.items():
                for lab, wl in self.translate(a, label, split):
                    c = _child_or_none(self.abstract, a, lab)
                    if c is None:
                        raise MappingError(f"no abstract action {lab!r} at {self.abstract.history[a]!r}")
                    nxt[c] = nxt.get(c, 0.0) + w * wl
            frontier = nxt
        out = sorted(frontier.items())
        if split is None:
            self._cache[node] = out
        return out


def map_off_tree_leaves(real: GameTree, abstract: GameTree, leaves: Iterable[int],
                        mapper: OffTreeMapper | None = None) -> dict[int, list[tuple[int, float]]]:
    mapper = mapper or OffTreeMapper(real, abstract)
    return {int(h): mapper.map(int(h)) for h in leaves}


def mapped_vector(real: GameTree, abstract: GameTree, node: int, sources, value_fn) -> np.ndarray:
    """Combine abstract value vectors as pot fractions, rescaled to the real pot."""
    if len(sources) == 1 and abstract.pot[sources[0][0]] == real.pot[node]:
        return np.asarray(value_fn(sources[0][0]), dtype=np.float64)
    total = 0.0
    for a, w in sources:
        v = np.asarray(value_fn(a), dtype=np.float64)
        pa = abstract.pot[a]
        total = total + w * (v / pa if pa > 0 else v)
    return total * real.pot[node] if all(abstract.pot[a] > 0 for a, _ in sources) else total


@dataclass
class MappedProvider:
    """Leaf values for a real game taken from providers on its abstraction."""

    mapper: OffTreeMapper
    inner: object  # provider on the abstract tree

    @property
    def n(self):
        return self.inner.n

    def __call__(self, game: GameTree, node: int) -> np.ndarray:
        if game is not self.mapper.real:
            raise ResolveError("mapped provider used on a different real game")
        ab = self.mapper.abstract
        return mapped_vector(game, ab, node, self.mapper.map(node), lambda a: self.inner(ab, a))


def project_strategy(real: GameTree, abstract: GameTree, strategy: BehavioralStrategy, player: int,
                     split=None) -> BehavioralStrategy:
    """The abstract strategy played in the real game by translating every state.

    ``split`` must choose a single neighbor (weight 1) for each off-tree
    action; the abstract action at the translated state is played under the
    same label, or the nearest real bet size when that label is unavailable.
    """
    mapper = OffTreeMapper(real, abstract)
    table, acts = {}, {}
    for I in real.player_infosets(player):
        src = mapper.map(int(I.nodes[0]), split)
        if len(src) != 1:
            raise MappingError("projection needs a deterministic translation")
        a = src[0][0]
        avec = strategy[abstract.infoset_key(a, player)]
        vec = np.zeros(I.n_actions)
        for lab, p in zip(abstract.legal_actions(a), avec):
            if lab in I.actions:
                vec[I.actions.index(lab)] += p
                continue
            x = bet_fraction(lab)
            cands = [(abs((bet_fraction(r) or 0) - x), i) for i, r in enumerate(I.actions)
                     if bet_fraction(r) is not None] if x is not None else []
            if not cands:
                raise MappingError(f"no real action for abstract {lab!r} at {I.key!r}")
            vec[min(cands)[1]] += p
        table[I.key] = vec
        acts[I.key] = I.actions
    return BehavioralStrategy(table, acts, player)


# -- action translation -----------------------------------------------------------------


def rpat_probability(x: float, lower: float, upper: float) -> float:
    """Probability of mapping bet ``x`` (pot fraction) down to ``lower``."""
    if not lower <= x <= upper:
        raise ResolveError(f"bet {x} outside [{lower}, {upper}]")
    if upper == lower:
        return 1.0
    return (upper - x) * (1 + lower) / ((upper - lower) * (1 + x))


def rpat_map(off_tree_size: float, lower: float, upper: float, rng_seed) -> float:
    f = rpat_probability(off_tree_size, lower, upper)
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return lower if rng.random() < f else upper


def fixed_split(choice: str) -> Callable:
    """Translation that always picks the lower or the upper neighbor."""
    if choice not in ("lower", "upper"):
        raise ResolveError("choice must be 'lower' or 'upper'")

    def split(lo_lab, hi_lab, x, lo, hi, node):
        return [(lo_lab if choice == "lower" else hi_lab, 1.0)]
    return split


# -- agents -----------------------------------------------------------------------------------


class Agent(Protocol):
    name: str

    def new_hand(self, seed: int, seat: int) -> None: ...
    def observe(self, action: str) -> None: ...
    def act(self) -> str: ...


def _matches(label: str, view: str) -> bool:
    return len(label) == len(view) and all(v == "?" or v == c for c, v in zip(label, view))


def private_view(label: str, seat: int) -> str:
    """A player's view of an opening deal label: the opponent's half is masked."""
    half = len(label) // 2
    return label[:half] + "?" * half if seat == P1 else "?" * half + label[half:]


class TreeAgent:
    """Tracks the states consistent with its own observations of the real game.

    Observations are player action labels, ``deal:<view>`` for the opening
    private deal (opponent's cards masked by "?") and ``board:<label>`` for
    public cards.
    """

    name = "tree"

    def __init__(self, game: GameTree):
        self.game = game
        self.seat = P1
        self.states: list[int] = [0]
        self.rng = np.random.default_rng(0)

    def new_hand(self, seed: int, seat: int) -> None:
        if seat not in (P1, P2):
            raise ProtocolError(f"bad seat {seat!r}")
        self.seat = int(seat)
        self.rng = np.random.default_rng([int(seed), int(seat)])
        self.states = [0]

    def observe(self, action: str) -> None:
        g = self.game
        if action.startswith(("deal:", "board:")):
            view = action.split(":", 1)[1]
            nxt = [c for h in self.states if g.actor[h] == CHANCE
                   for c in g.children(h) if _matches(g.edge_label[c], view)]
        else:
            nxt = [c for h in self.states if (c := _child_or_none(g, h, action)) is not None]
        if not nxt:
            raise ProtocolError(f"observation {action!r} inconsistent with {g.history[self.states[0]]!r}")
        self.states = nxt
        self._after_observe(action)

    def _after_observe(self, action: str) -> None:
        pass

    def infoset_key(self) -> str:
        h = self.states[0]
        if self.game.actor[h] != self.seat:
            raise ProtocolError(f"{self.name} asked to act out of turn at {self.game.history[h]!r}")
        return self.game.infoset_key(h, self.seat)

    def policy(self, key: str) -> np.ndarray:
        raise NotImplementedError

    def act(self) -> str:
        key = self.infoset_key()
        vec = self.policy(key)
        labels = self.game.infoset(key).actions
        i = int(min(np.searchsorted(np.cumsum(vec), self.rng.random(), side="right"), len(vec) - 1))
        return labels[i]


class BlueprintAgent(TreeAgent):
    """Plays a fixed profile; off-tree opponent bets are translated by RPAT."""

    name = "blueprint"

    def __init__(self, game: GameTree, blueprint: StrategyProfile, abstract: GameTree | None = None):
        super().__init__(game)
        self.blueprint = blueprint
        self.abstract = abstract if abstract is not None else game
        self._abs_states: list[int] = [0]
        self._mapper = OffTreeMapper(game, self.abstract) if self.abstract is not game else None

    def new_hand(self, seed, seat):
        super().new_hand(seed, seat)
        self._abs_states = [0]

    def _after_observe(self, action):
        if self._mapper is None:
            return
        a = self.abstract
        if action.startswith(("deal:", "board:")):
            view = action.split(":", 1)[1]
            self._abs_states = [c for h in self._abs_states for c in a.children(h)
                                if _matches(a.edge_label[c], view)]
            return
        h = self._abs_states[0]
        label = action
        if _child_or_none(a, h, action) is None:
            rng = self.rng

            def rpat(lo_lab, hi_lab, x, lo, hi, node):
                if hi == float("inf"):
                    return [(lo_lab, 1.0)]
                return [(lo_lab if rpat_map(x, lo, hi, rng) == lo else hi_lab, 1.0)]
            label = self._mapper.translate(h, action, rpat)[0][0]
        self._abs_states = [c for s in self._abs_states if (c := _child_or_none(a, s, label)) is not None]

    def act(self) -> str:
        if self._mapper is None:
            return super().act()
        self.infoset_key()
        a = self.abstract
        key = a.infoset_key(self._abs_states[0], self.seat)
        vec = self.blueprint[self.seat][key]
        i = int(min(np.searchsorted(np.cumsum(vec), self.rng.random(), side="right"), len(vec) - 1))
        return a.infoset(key).actions[i]

    def policy(self, key):
        return self.blueprint[self.seat][key]


class FoldAgent(TreeAgent):
    """Folds whenever folding is legal, otherwise checks."""

    name = "always_fold"

    def act(self) -> str:
        acts = self.game.infoset(self.infoset_key()).actions
        return "f" if "f" in acts else ("c" if "c" in acts else acts[0])


@dataclass(frozen=True)
class DLAgentConfig:
    approach: str = "bias"  # or "selfgen"
    k: int = 4
    value_mode: str = "exact"  # or "rollout"
    rollout_samples: int = 3
    preflop_config: SolverConfig = SolverConfig(iterations=1000)
    selfgen_config: SolverConfig = SolverConfig(iterations=300)
    late_mode: str = "safe_gadget"  # or "unsafe"
    iter_lo: int = 150
    iter_hi: int = 1000
    alt_margin: float = 0.0
    seed: int = 0


class DepthLimitedAgent(TreeAgent):
    """First round: depth-limited solve with multi-valued leaves (cached per seat).
    Later rounds: endgame solving on entry, cached per public situation."""

    name = "depth_limited"

    def __init__(self, game: GameTree, blueprint: StrategyProfile, config: DLAgentConfig = DLAgentConfig(),
                 abstract: GameTree | None = None):
        super().__init__(game)
        self.blueprint = blueprint
        self.config = config
        self.abstract = abstract if abstract is not None else game
        self._seat_cache: dict[int, dict] = {}
        self._late_cache: dict[tuple[int, str], BehavioralStrategy] = {}
        self._current: BehavioralStrategy | None = None
        self.cache_hits = 0

    # cached first-round solution
    def _prepare(self, seat: int) -> dict:
        if seat in self._seat_cache:
            return self._seat_cache[seat]
        cfg, g, ab = self.config, self.game, self.abstract
        opp = opponent(seat)
        first = ResolveContext.initial(ab)
        spec_ab = SubgameSpec(first.states, tuple(first.joint()), DepthLimit("round", 0))
        if cfg.approach == "bias":
            cont = generate_bias_set(self.blueprint[opp]) if cfg.k > 1 else ContinuationSet.blueprint_only(self.blueprint[opp])
            cont = cont.prefix(cfg.k)
        elif cfg.approach == "selfgen":
            cont = generate_self_play_set(ab, self.blueprint, spec_ab, cfg.k, seat, cfg.selfgen_config)
        else:
            raise ResolveError(f"unknown continuation approach {cfg.approach!r}")
        if cfg.value_mode == "exact":
            inner = NodeValueProvider(ab, continuation_values(ab, self.blueprint[seat], cont, seat))
        elif cfg.value_mode == "rollout":
            inner = RolloutProvider(self.blueprint[seat], cont, cfg.rollout_samples, cfg.seed, seat)
        else:
            raise ResolveError(f"unknown value mode {cfg.value_mode!r}")
        provider = inner if ab is g else MappedProvider(OffTreeMapper(g, ab), inner)
        ctx = ResolveContext.initial(g)
        spec = SubgameSpec(ctx.states, tuple(ctx.joint()), DepthLimit("round", 0))
        dl = build_depth_limited(g, spec, cont, provider, solver=seat)
        prof = solve_subgame(dl, cfg.preflop_config)
        own = prof[seat].restrict(dl.original_keys())
        opp_model = prof[opp].restrict(dl.original_keys())
        model = StrategyProfile(own, opp_model) if seat == P1 else StrategyProfile(opp_model, own)
        reach = g.reach(model.pack(g, default="uniform"))
        entry = dict(dl=dl, profile=prof, own=own, provider=provider, reach=reach, continuation=cont)
        self._seat_cache[seat] = entry
        log.debug("prepared first-round solution for seat %d (%d continuations)", seat, len(cont))
        return entry

    def new_hand(self, seed, seat):
        super().new_hand(seed, seat)
        self._prepare(self.seat)
        self._current = None

    def _after_observe(self, action):
        g = self.game
        h = self.states[0]
        if g.actor[h] in (P1, P2) and g.round[h] > 0 and self._current is None:
            self._current = self._solve_late(h)

    def _solve_late(self, h: int) -> BehavioralStrategy:
        g, cfg, seat = self.game, self.config, self.seat
        key = (seat, g.public_keys[g.public_id[h]])
        if key in self._late_cache:
            self.cache_hits += 1
            return self._late_cache[key]
        entry = self._prepare(seat)
        roots = np.nonzero(g.public_id == g.public_id[h])[0]
        iters = iteration_schedule(float(g.pot[h]), float(g.pot.max()) / 2, cfg.iter_lo, cfg.iter_hi)
        strat = solve_next_round(g, roots, entry["reach"][:, roots], seat, entry["profile"], entry["provider"],
                                 cfg.late_mode, SolverConfig(iterations=iters, seed=cfg.seed), cfg.alt_margin)
        self._late_cache[key] = strat
        return strat

    def full_strategy(self, seat: int) -> BehavioralStrategy:
        """The agent's complete behavioral strategy in one seat, solving every
        later-round public situation it could face."""
        g = self.game
        entry = self._prepare(seat)
        out = self.blueprint[seat].override(entry["own"])
        seen = set()
        saved = self.seat
        self.seat = seat
        try:
            for I in g.player_infosets(seat):
                h = int(I.nodes[0])
                if g.round[h] == 0:
                    continue
                # first decision of the round in this public situation
                first = h
                while g.round[int(g.parent[first])] == g.round[h] and g.actor[int(g.parent[first])] != CHANCE:
                    first = int(g.parent[first])
                pid = int(g.public_id[first])
                if pid in seen:
                    continue
                seen.add(pid)
                out = out.override(self._solve_late(first))
        finally:
            self.seat = saved
        return out

    def policy(self, key: str) -> np.ndarray:
        if self._current is not None and key in self._current:
            return self._current[key]
        own = self._seat_cache[self.seat]["own"]
        if key in own:
            return own[key]
        return self.blueprint[self.seat][key]


# -- hand play --------------------------------------------------------------------------------


@dataclass
class HandResult:
    payoff: float  # to the agent in seat P1
    transcript: dict


def play_hand(game: GameTree, agents: Sequence[Agent], seed: int, hand_id: int = 0) -> HandResult:
    """Play one hand between ``agents[P1]`` and ``agents[P2]``; chance is keyed by seed."""
    for seat, ag in enumerate(agents):
        ag.new_hand(seed, seat)
    node, n_chance, events = 0, 0, []
    transcript = {"hand": hand_id, "seed": int(seed), "agents": [getattr(a, "name", "?") for a in agents],
                  "events": events}
    while game.actor[node] != TERMINAL:
        a = int(game.actor[node])
        if a == CHANCE:
            rng = np.random.default_rng([int(seed), n_chance, 7])
            probs = game.chance_distribution(node)
            i = int(min(np.searchsorted(np.cumsum(probs), rng.random(), side="right"), len(probs) - 1))
            child = int(game.first_child[node]) + i
            label = game.edge_label[child]
            events.append({"actor": "chance", "action": label})
            for seat, ag in enumerate(agents):
                view = private_view(label, seat) if n_chance == 0 else label
                _safe(lambda: ag.observe(("deal:" if n_chance == 0 else "board:") + view), transcript)
            n_chance += 1
            node = child
            continue
        label = _safe(agents[a].act, transcript)
        child = _child_or_none(game, node, label) if isinstance(label, str) else None
        if child is None:
            raise ProtocolError(f"P{a + 1} played illegal action {label!r} at {game.history[node]!r}",
                                transcript)
        events.append({"actor": f"P{a + 1}", "action": label})
        for ag in agents:
            _safe(lambda: ag.observe(label), transcript)
        node = child
    transcript["payoff_p1"] = float(game.utility[node])
    return HandResult(float(game.utility[node]), transcript)


def _safe(fn, transcript):
    try:
        return fn()
    except ProtocolError as e:
        raise ProtocolError(str(e), transcript) from None


def replay(game: GameTree, transcript: dict) -> float:
    """Re-walk a transcript and return P1's payoff; raises on any mismatch."""
    node = 0
    for ev in transcript["events"]:
        c = _child_or_none(game, node, ev["action"])
        if c is None:
            raise ProtocolError(f"transcript action {ev['action']!r} illegal", transcript)
        node = c
    if game.actor[node] != TERMINAL:
        raise ProtocolError("transcript ends before a terminal state", transcript)
    u = float(game.utility[node])
    if "payoff_p1" in transcript and transcript["payoff_p1"] != u:
        raise ProtocolError("transcript payoff mismatch", transcript)
    return u


def play_duplicate(game: GameTree, agent_a: Agent, agent_b: Agent, pairs: int, seed: int = 0,
                   keep_transcripts: bool = False):
    """Each deal is played twice with seats swapped. Returns per-hand chips won by
    ``agent_a`` (shape pairs x 2: a as P1, a as P2) and optional transcripts."""
    out = np.empty((pairs, 2))
    transcripts = []
    ss = np.random.SeedSequence(seed)
    hand_seeds = ss.generate_state(pairs, dtype=np.uint32)
    for i, s in enumerate(hand_seeds):
        r1 = play_hand(game, (agent_a, agent_b), int(s), 2 * i)
        r2 = play_hand(game, (agent_b, agent_a), int(s), 2 * i + 1)
        out[i] = (r1.payoff, -r2.payoff)
        if keep_transcripts:
            transcripts.extend([r1.transcript, r2.transcript])
    return out, transcripts


# -- text protocol ------------------------------------------------------------------------------


def serve_agent(agent: Agent, inp=None, out=None) -> None:
    """Newline-delimited JSON commands: new_hand / observe / act / quit."""
    inp = inp or sys.stdin
    out = out or sys.stdout
    for line in inp:
        line = line.strip()
        if not line:
            continue
        try:
            msg = json.loads(line)
            cmd = msg.get("cmd")
            if cmd == "new_hand":
                agent.new_hand(int(msg["seed"]), int(msg["seat"]))
                reply = {"ok": True}
            elif cmd == "observe":
                agent.observe(str(msg["action"]))
                reply = {"ok": True}
            elif cmd == "act":
                reply = {"action": agent.act()}
            elif cmd == "quit":
                out.write(json.dumps({"ok": True}) + "\n")
                out.flush()
                return
            else:
                reply = {"error": "protocol", "message": f"unknown command {cmd!r}"}
        except (ProtocolError, KeyError, ValueError, TypeError) as e:
            reply = {"error": "protocol", "message": str(e)}
        out.write(json.dumps(reply) + "\n")
        out.flush()


class PipeAgent:
    """Client side of :func:`serve_agent` over a pair of text streams."""

    name = "pipe"

    def __init__(self, send, recv):
        self._send, self._recv = send, recv

    def _call(self, msg: dict) -> dict:
        self._send.write(json.dumps(msg) + "\n")
        self._send.flush()
        reply = json.loads(self._recv.readline())
        if "error" in reply:
            raise ProtocolError(reply.get("message", "agent error"))
        return reply

    def new_hand(self, seed, seat):
        self._call({"cmd": "new_hand", "seed": int(seed), "seat": int(seat)})

    def observe(self, action):
        self._call({"cmd": "observe", "action": action})

    def act(self):
        return self._call({"cmd": "act"})["action"]
