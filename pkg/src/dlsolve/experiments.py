"""Experiment drivers: off-tree response curve, RPS+ demo and match statistics."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .best_response import best_response, exploitability
from .cfr import SolverConfig, iteration_schedule, run_solver, solve_exact
from .depth_limited import (
    ContinuationSet,
    DepthLimit,
    NodeValueProvider,
    SubgameSpec,
    TableProvider,
    build_depth_limited,
    compute_value_table,
    continuation_values,
    generate_self_play_set,
    solve_subgame,
    stitch,
    subgame_nodes,
)
from .games import build_game, mini_nlfh
from .games.poker import FlopHoldem
from .games.tree import P1, P2, GameTree
from .nested_resolver import (
    MappedProvider,
    OffTreeMapper,
    ResolveContext,
    fixed_split,
    play_duplicate,
    project_strategy,
    rpat_probability,
    solve_next_round,
)
from .strategy import BehavioralStrategy, StrategyProfile, realization_mixture

log = logging.getLogger(__name__)


class ExperimentError(ValueError):
    pass


# -- match statistics --------------------------------------------------------------------


@dataclass(frozen=True)
class MatchReport:
    hands: int
    mean_mbbg: float
    ci95: float
    per_seat: dict
    seeds: dict
    total_chips: float

    def as_dict(self) -> dict:
        return asdict(self)


def match_report(chips: np.ndarray, big_blind: float, seed: int = 0) -> MatchReport:
    """Statistics of duplicate results: ``chips`` is pairs x 2 (seat P1, seat P2)."""
    chips = np.asarray(chips, dtype=np.float64)
    if chips.ndim != 2 or chips.shape[1] != 2 or len(chips) < 1:
        raise ExperimentError("expected one (P1 seat, P2 seat) result per duplicate pair")
    hands = chips.size
    total = float(chips.sum())
    mean = total * 1000.0 / (big_blind * hands)
    pair_mbb = chips.mean(axis=1) * 1000.0 / big_blind
    se = float(pair_mbb.std(ddof=1) / math.sqrt(len(pair_mbb))) if len(pair_mbb) > 1 else float("inf")
    per_seat = {f"P{s + 1}": float(chips[:, s].mean() * 1000.0 / big_blind) for s in (P1, P2)}
    return MatchReport(hands, mean, 1.96 * se, per_seat, {"match_seed": seed}, total)


def run_match(game: GameTree, agent_a, agent_b, hands: int, seed: int = 0) -> MatchReport:
    if hands < 2 or hands % 2:
        raise ExperimentError("hands must be an even number >= 2 (duplicate pairs)")
    chips, _ = play_duplicate(game, agent_a, agent_b, hands // 2, seed)
    return match_report(chips, game.big_blind, seed)


# -- off-tree response experiment ------------------------------------------------------------


@dataclass(frozen=True)
class OffTreeConfig:
    game_params: dict = field(default_factory=dict)
    off_tree_size: float = 0.75
    value_counts: tuple[int, ...] = (1, 2, 4, 8, 16)
    blueprint_iterations: int = 1000
    selfgen_iterations: int = 500
    resolve_iterations: int = 1000
    reference_iterations: int = 4000
    late_mode: str = "safe_gadget"
    iter_lo: int = 150
    iter_hi: int = 1000
    alt_margin: float = 0.0
    leaf_values: str = "projected"  # or "mapped"
    seed: int = 0


@dataclass
class ExperimentCurve:
    points: list[tuple[int, float]]
    baselines: dict[str, float]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        ns = [n for n, _ in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ExperimentError("curve points must have strictly increasing N")

    def value_at(self, n: int) -> float:
        return dict(self.points)[n]

    def as_dict(self) -> dict:
        return {"points": [[n, v] for n, v in self.points], "baselines": dict(self.baselines),
                "meta": dict(self.meta)}

    def to_tsv(self) -> str:
        rows = ["n_values\texploitability_mbbg"] + [f"{n}\t{v!r}" for n, v in self.points]
        rows += [f"# {k}\t{v!r}" for k, v in self.baselines.items()]
        return "\n".join(rows) + "\n"


def _first_round_spec(game: GameTree) -> SubgameSpec:
    ctx = ResolveContext.initial(game)
    return SubgameSpec(ctx.states, tuple(ctx.joint()), DepthLimit("round", 0))


def _late_roots(game: GameTree, keep) -> list[np.ndarray]:
    """Root sets of each later-round public situation whose history passes ``keep``."""
    out, seen = [], set()
    for h in np.nonzero((game.round > 0) & (game.actor >= 0) & (game.actor <= 1))[0]:
        par = int(game.parent[h])
        if game.actor[par] != 2 or not keep(game.history[h]):
            continue
        pid = int(game.public_id[h])
        if pid not in seen:
            seen.add(pid)
            out.append(np.nonzero(game.public_id == pid)[0])
    return out


def run_offtree_experiment(cfg: OffTreeConfig = OffTreeConfig()) -> ExperimentCurve:
    """Exploitability of the response to an opponent bet outside the abstraction.

    The opponent (P2, first to act) opens with ``off_tree_size`` x pot, which
    the blueprint's abstraction lacks. P1 plays the blueprint elsewhere; in the
    off-tree branch it plays, per curve point, a depth-limited first-round
    solve with N self-generated values per leaf (mapped from neighboring
    abstraction sizes) followed by endgame solving. Exploitability is P1's
    one-sided exploitability in the game that contains the off-tree bet.
    """
    if not cfg.value_counts:
        raise ExperimentError("value_counts must be nonempty")
    counts = sorted(set(int(n) for n in cfg.value_counts))
    if counts[0] < 1:
        raise ExperimentError("value counts must be >= 1")
    abs_desc = mini_nlfh(**cfg.game_params)
    fracs = sorted(abs_desc.params["bet_fractions"])
    x = float(cfg.off_tree_size)
    lower = max((f for f in fracs if f < x), default=None)
    upper = min((f for f in fracs if f > x), default=None)
    if lower is None or upper is None:
        raise ExperimentError(f"off-tree size {x} must lie strictly between two abstraction sizes {fracs}")
    G = build_game(abs_desc)
    Gs = build_game(mini_nlfh(**cfg.game_params, first_action_fractions=(x,)))
    label = FlopHoldem.frac_label(x)
    off = lambda hist: len(hist.split(";")) > 1 and hist.split(";")[1] == label  # noqa: E731
    scale = 1000.0 / Gs.big_blind

    bp = run_solver(G, SolverConfig(iterations=cfg.blueprint_iterations, seed=cfg.seed))
    ref = run_solver(Gs, SolverConfig(iterations=cfg.reference_iterations, seed=cfg.seed))
    rep = exploitability(Gs, ref)
    v1 = 0.5 * (rep.br_vs_p2 - rep.br_vs_p1)  # game value estimate for P1

    def expl(s: BehavioralStrategy) -> float:
        return (best_response(Gs, s, P2).value + v1) * scale

    off_keys = {I.key for I in Gs.player_infosets(P1) if off(Gs.history[I.nodes[0]])}
    base = bp.p1
    lo_s = project_strategy(Gs, G, bp.p1, P1, fixed_split("lower"))
    hi_s = project_strategy(Gs, G, bp.p1, P1, fixed_split("upper"))
    f = rpat_probability(x, lower, upper)
    rpat = realization_mixture(Gs, [lo_s, hi_s], [f, 1 - f], P1)
    baselines = {"rpat": expl(rpat), "in_abstraction": expl(ref.p1),
                 "blueprint_abstraction_mbbg": exploitability(G, bp).mbbg}

    cont = generate_self_play_set(G, bp, _first_round_spec(G), counts[-1], P1,
                                  SolverConfig(iterations=cfg.selfgen_iterations, seed=cfg.seed))
    if cfg.leaf_values == "mapped":
        mapper = OffTreeMapper(Gs, G)
        V = continuation_values(G, bp.p1, cont, P1)
        make_provider = lambda n: MappedProvider(mapper, NodeValueProvider(G, V[:n]))  # noqa: E731
    elif cfg.leaf_values == "projected":
        # play each continuation in the real game by translating states, as a rollout would
        def translated(strat, player):
            parts = [project_strategy(Gs, G, strat, player, fixed_split(side)) for side in ("lower", "upper")]
            return realization_mixture(Gs, parts, [f, 1 - f], player)
        real_cont = ContinuationSet(tuple(translated(c, P2) for c in cont.strategies), cont.provenance)
        V = continuation_values(Gs, rpat, real_cont, P1)
        make_provider = lambda n: NodeValueProvider(Gs, V[:n])  # noqa: E731
    else:
        raise ExperimentError(f"unknown leaf value source {cfg.leaf_values!r}")
    roots_spec = _first_round_spec(Gs)
    late = _late_roots(Gs, off)
    points = []
    for n in counts:
        provider = make_provider(n)
        dl = build_depth_limited(Gs, roots_spec, cont.prefix(n), provider, solver=P1)
        prof = solve_subgame(dl, SolverConfig(iterations=cfg.resolve_iterations, seed=cfg.seed))
        own = dl.solver_strategy(prof)
        s = base.override(own.restrict(off_keys))
        model = StrategyProfile(s, bp.p2.override(prof[P2].restrict(dl.original_keys())))
        reach = Gs.reach(model.pack(Gs, default="uniform"))
        for roots in late:
            h = int(roots[0])
            iters = iteration_schedule(float(Gs.pot[h]), float(Gs.pot.max()) / 2, cfg.iter_lo, cfg.iter_hi)
            strat = solve_next_round(Gs, roots, reach[:, roots], P1, prof, provider, cfg.late_mode,
                                     SolverConfig(iterations=iters, seed=cfg.seed), cfg.alt_margin)
            s = s.override(strat)
        points.append((n, expl(s)))
        log.info("N=%d exploitability %.3f mbb/g", n, points[-1][1])
    meta = {"off_tree_size": x, "lower": lower, "upper": upper, "rpat_lower_probability": f,
            "game_value_p1": v1, "reference_gap_mbbg": rep.mbbg, "seed": cfg.seed,
            "continuations": list(cont.provenance)}
    return ExperimentCurve(points, baselines, meta)


# -- RPS+ demonstration ---------------------------------------------------------------------


def demo_rps(iterations: int = 2000) -> dict:
    """Single-valued vs multi-valued depth-limited solving on RPS+."""
    g = build_game("rps_plus")
    full, _ = solve_exact(g)
    spec = SubgameSpec((0,), None, DepthLimit("ply", 1))
    _, leaves = subgame_nodes(g, spec)
    key = g.infoset_key(0, P1)

    # single-valued leaves: values of the equilibrium continuation (all zero)
    single = ContinuationSet.blueprint_only(full.p2)
    dl1 = build_depth_limited(g, spec, single, TableProvider(compute_value_table(g, full.p1, single, leaves)))
    # every P1 strategy is optimal in this subgame; the pure-Rock solution shows why that is useless
    rock = BehavioralStrategy({key: [1.0, 0.0, 0.0]}, {key: g.infoset(key).actions}, P1)
    single_expl = best_response(g, rock, P2).value

    pures = []
    p2key = g.player_infosets(P2)[0].key
    for i, m in enumerate("RPS"):
        vec = np.zeros(3)
        vec[i] = 1.0
        pures.append(BehavioralStrategy({p2key: vec}, {p2key: g.infoset(p2key).actions}, P2))
    multi = ContinuationSet(tuple([full.p2] + pures), ("blueprint", "pure(R)", "pure(P)", "pure(S)"))
    dl3 = build_depth_limited(g, spec, multi, TableProvider(compute_value_table(g, full.p1, multi, leaves)))
    prof = run_solver(dl3.tree, SolverConfig(iterations=iterations))
    multi_s = stitch(full.p1, dl3, prof)
    cfr_full = run_solver(g, SolverConfig(iterations=iterations))
    return {
        "single_valued": {"strategy": [1.0, 0.0, 0.0], "exploitability": single_expl,
                          "subgame_value": float(dl1.tree.values(dl1.tree.pack(rock, default="uniform"))[0])},
        "multi_valued": {"strategy": [float(p) for p in multi_s[key]],
                         "exploitability": best_response(g, multi_s, P2).value},
        "full_game": {"strategy": [float(p) for p in cfr_full.p1[key]],
                      "exploitability": exploitability(g, cfr_full).exploitability},
    }
