"""Command-line entry point: ``dlsolve <subcommand> [options]``.

Every subcommand prints a JSON document on stdout. Failures print
``{"error": <category>, "message": ...}`` on stderr and exit nonzero.
Options come from (lowest to highest precedence) built-in defaults, the
``[<subcommand>]`` table of the ``--config`` TOML file, and the command line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import tomli

from .best_response import best_response, exploitability, root_infoset_br_values
from .cfr import SolverConfig, SolverError, run_solver, CFRSolver
from .depth_limited import (
    ContinuationSet,
    DepthLimit,
    RolloutProvider,
    SubgameError,
    SubgameSpec,
    ValueTable,
    NodeValueProvider,
    compute_value_table,
    continuation_values,
    generate_bias_set,
    generate_self_play_set,
    leaf_beliefs,
    subgame_nodes,
    weaken,
)
from .experiments import ExperimentError, OffTreeConfig, demo_rps, run_match, run_offtree_experiment
from .games import GameDescriptor, GameError, build_game, mini_nlfh
from .games.tree import P1, P2, GameTree
from .nested_resolver import (
    BlueprintAgent,
    DepthLimitedAgent,
    DLAgentConfig,
    FoldAgent,
    MappingError,
    ProtocolError,
    ResolveContext,
    ResolveError,
    resolve_public,
)
from .strategy import StrategyError, StrategyProfile

log = logging.getLogger("dlsolve")

EXIT_CODES = {"usage": 2, "config": 3, "io": 4, "precondition": 5, "protocol": 6, "internal": 1}


class CLIError(Exception):
    def __init__(self, category: str, message: str, **extra):
        super().__init__(message)
        self.category = category
        self.extra = extra


# -- option plumbing -----------------------------------------------------------------------


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except OSError as e:
        raise CLIError("io", f"cannot read config {path}: {e}") from None
    except tomli.TOMLDecodeError as e:
        raise CLIError("config", f"bad TOML in {path}: {e}") from None


def _options(args: argparse.Namespace, config: dict, defaults: dict) -> dict:
    section = config.get(args.command, {})
    if not isinstance(section, dict):
        raise CLIError("config", f"[{args.command}] must be a table")
    unknown = set(section) - set(defaults) - {"game"}
    if unknown:
        raise CLIError("config", f"unknown keys in [{args.command}]: {sorted(unknown)}")
    opts = dict(defaults)
    opts.update({k: v for k, v in section.items() if k != "game"})
    opts.update({k: v for k, v in vars(args).items() if k in defaults and v is not None})
    opts["seed"] = args.seed if args.seed is not None else config.get("seed", 0)
    return opts


def _game(args: argparse.Namespace, config: dict) -> GameTree:
    spec = args.game or config.get(args.command, {}).get("game") or config.get("game") or "kuhn"
    if isinstance(spec, str):
        desc = mini_nlfh() if spec == "mini_nlfh" else GameDescriptor(spec, {})
    elif isinstance(spec, dict):
        spec = dict(spec)
        if spec.get("name") == "mini_nlfh":
            spec.pop("name")
            desc = mini_nlfh(**spec.pop("params", {}), **spec)
        else:
            desc = GameDescriptor.from_dict(spec)
    else:
        raise CLIError("config", "game must be a name or a table")
    return build_game(desc)


def _write(path, text: str):
    try:
        Path(path).write_text(text)
    except OSError as e:
        raise CLIError("io", f"cannot write {path}: {e}") from None


def _load_profile(path, game: GameTree) -> StrategyProfile:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as e:
        raise CLIError("io", f"cannot read strategy {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise CLIError("config", f"strategy file {path} is not JSON: {e}") from None
    fp = raw.get("meta", {}).get("fingerprint")
    if fp and fp != game.fingerprint():
        raise CLIError("precondition", f"strategy {path} was computed for a different game")
    try:
        return StrategyProfile.from_dict(raw)
    except (KeyError, TypeError, StrategyError) as e:
        raise CLIError("config", f"malformed strategy file {path}: {e}") from None


def _save_profile(path, profile: StrategyProfile, game: GameTree, **meta):
    try:
        profile.save(path, game=game.name, fingerprint=game.fingerprint(), **meta)
    except OSError as e:
        raise CLIError("io", f"cannot write {path}: {e}") from None


def _solver_config(opts: dict) -> SolverConfig:
    return SolverConfig(variant=opts["variant"], iterations=int(opts["iters"]),
                        average_skip_fraction=float(opts["skip_frac"]),
                        discount_iterations=int(opts["discount_iters"]), seed=int(opts["seed"]))


def _depth_limit(text: str | None, game: GameTree) -> DepthLimit:
    if text is None:
        return DepthLimit("round", 0) if game.round.max() > 0 else DepthLimit("ply", 1)
    kind, _, val = text.partition(":")
    try:
        return DepthLimit(kind, int(val))
    except (ValueError, SubgameError) as e:
        raise CLIError("config", f"bad depth limit {text!r} (expected ply:N or round:N): {e}") from None


def _solver_seat(text) -> int:
    s = str(text).upper()
    if s not in ("P1", "P2"):
        raise CLIError("config", f"solver must be P1 or P2, got {text!r}")
    return P1 if s == "P1" else P2


def _first_spec(game: GameTree, limit: DepthLimit) -> SubgameSpec:
    ctx = ResolveContext.initial(game)
    return SubgameSpec(ctx.states, tuple(ctx.joint()), limit)


def _continuation(game, blueprint, spec, approach, k, solver, seed, iters) -> ContinuationSet:
    opp = 1 - solver
    if k < 1:
        raise CLIError("config", "k must be >= 1")
    if approach == "bias":
        cont = generate_bias_set(blueprint[opp])
        if k > len(cont):
            raise CLIError("config", f"the bias approach provides at most {len(cont)} continuations")
        return cont.prefix(k)
    if approach == "selfgen":
        return generate_self_play_set(game, blueprint, spec, k, solver, SolverConfig(iterations=iters, seed=seed))
    raise CLIError("config", f"unknown approach {approach!r}")


# -- subcommands ---------------------------------------------------------------------------


TRAIN = dict(iters=1000, variant="cfr_plus_modified", skip_frac=0.5, discount_iters=30, checkpoint=0)


def cmd_train(game: GameTree, opts: dict, out) -> dict:
    if int(opts["iters"]) < 1:
        raise CLIError("precondition", "iterations must be >= 1")
    cfg = _solver_config(opts)
    checkpoints = []

    def report(it, solver: CFRSolver):
        rep = exploitability(game, solver.average_profile())
        checkpoints.append({"iteration": it, "exploitability_mbbg": rep.mbbg})
        print(json.dumps(checkpoints[-1]), file=sys.stderr)

    every = int(opts["checkpoint"])
    profile = run_solver(game, cfg, report if every else None, every)
    rep = exploitability(game, profile)
    if out:
        _save_profile(out, profile, game, iterations=cfg.iterations, variant=cfg.variant, seed=cfg.seed)
    return {"game": game.name, "iterations": cfg.iterations, "variant": cfg.variant,
            "checkpoints": checkpoints, "exploitability": rep.as_dict(), "out": out}


VALUES = dict(blueprint=None, mode="exact", samples=3, k=1, approach="bias", units="chips",
              depth_limit=None, solver="P1", selfgen_iters=300, weaken=False, weaken_pot_margin=0.0)


def cmd_values(game: GameTree, opts: dict, out) -> dict:
    if opts["blueprint"] is None:
        raise CLIError("config", "values needs --blueprint")
    bp = _load_profile(opts["blueprint"], game)
    solver = _solver_seat(opts["solver"])
    spec = _first_spec(game, _depth_limit(opts["depth_limit"], game))
    _, leaves = subgame_nodes(game, spec)
    if len(leaves) == 0:
        raise CLIError("precondition", "the depth limit leaves no leaves")
    cont = _continuation(game, bp, spec, opts["approach"], int(opts["k"]), solver, int(opts["seed"]),
                         int(opts["selfgen_iters"]))
    if opts["mode"] == "exact":
        table = compute_value_table(game, bp[solver], cont, leaves, solver)
    elif opts["mode"] == "rollout":
        if int(opts["samples"]) < 1:
            raise CLIError("config", "samples must be >= 1")
        prov = RolloutProvider(bp[solver], cont, int(opts["samples"]), int(opts["seed"]), solver)
        table = ValueTable({game.history[h]: prov(game, int(h)) for h in leaves}, len(cont), "chips",
                           cont.provenance, game.fingerprint())
    else:
        raise CLIError("config", f"unknown value mode {opts['mode']!r}")
    if opts["weaken"] or float(opts["weaken_pot_margin"]) > 0:
        beliefs = leaf_beliefs(game, bp[solver], leaves, solver)
        table = weaken(table, game, beliefs, solver, pot_margin=float(opts["weaken_pot_margin"]))
    if opts["units"] not in ("chips", "pot_fraction"):
        raise CLIError("config", f"unknown units {opts['units']!r}")
    table = table.to_units(game, opts["units"])
    if out:
        try:
            table.save(out)
        except OSError as e:
            raise CLIError("io", f"cannot write {out}: {e}") from None
    return {"game": game.name, "leaves": len(leaves), "n": table.n, "units": table.units,
            "mode": opts["mode"], "provenance": list(table.provenance),
            "weakened": bool(opts["weaken"] or float(opts["weaken_pot_margin"]) > 0), "out": out}


RESOLVE = dict(blueprint=None, public=None, mode="safe_gadget", solver="P1", iters=0, margin=0.0,
               depth_limit=None, k=1, approach="bias", selfgen_iters=300)


def cmd_resolve(game: GameTree, opts: dict, out) -> dict:
    if opts["blueprint"] is None or opts["public"] is None:
        raise CLIError("config", "resolve needs --blueprint and --public")
    bp = _load_profile(opts["blueprint"], game)
    solver = _solver_seat(opts["solver"])
    limit, cont, provider = None, None, None
    if opts["depth_limit"] is not None:
        limit = _depth_limit(opts["depth_limit"], game)
        spec = _first_spec(game, limit)
        cont = _continuation(game, bp, spec, opts["approach"], int(opts["k"]), solver, int(opts["seed"]),
                             int(opts["selfgen_iters"]))
        provider = NodeValueProvider(game, continuation_values(game, bp[solver], cont, solver))
    iters = int(opts["iters"])
    cfg = SolverConfig(iterations=iters, seed=int(opts["seed"])) if iters > 0 else None
    res = resolve_public(game, bp, opts["public"], solver, opts["mode"], limit, cont, provider, cfg,
                         float(opts["margin"]))
    before = exploitability(game, bp)
    after = exploitability(game, bp.replace(solver, res.strategy))
    root_keys = sorted({game.infoset_key(r, 1 - solver) for r in res.roots})
    if out:
        _save_profile(out, bp.replace(solver, res.strategy), game, resolved=opts["public"], mode=res.mode)
    return {"game": game.name, "public": opts["public"], "mode": res.mode, "solver": f"P{solver + 1}",
            "alt_values": res.alt_values,
            "root_br_values": root_infoset_br_values(game, res.strategy, root_keys, 1 - solver),
            "exploitability_before": before.as_dict(), "exploitability_after": after.as_dict(), "out": out}


MATCH = dict(agent_a="depth_limited", agent_b="blueprint", blueprint=None, hands=1000, approach="selfgen",
             k=8, late_mode="safe_gadget", value_mode="exact", preflop_iters=1000, selfgen_iters=300)


def _agent(kind: str, game: GameTree, bp, opts: dict):
    if kind in ("fold", "always_fold"):
        return FoldAgent(game)
    if bp is None:
        raise CLIError("config", f"agent {kind!r} needs --blueprint")
    if kind == "blueprint":
        return BlueprintAgent(game, bp)
    if kind == "depth_limited":
        cfg = DLAgentConfig(approach=opts["approach"], k=int(opts["k"]), value_mode=opts["value_mode"],
                            late_mode=opts["late_mode"], seed=int(opts["seed"]),
                            preflop_config=SolverConfig(iterations=int(opts["preflop_iters"]), seed=int(opts["seed"])),
                            selfgen_config=SolverConfig(iterations=int(opts["selfgen_iters"]), seed=int(opts["seed"])))
        return DepthLimitedAgent(game, bp, cfg)
    raise CLIError("config", f"unknown agent {kind!r} (blueprint, depth_limited, fold)")


def cmd_match(game: GameTree, opts: dict, out) -> dict:
    hands = int(opts["hands"])
    if hands < 2 or hands % 2:
        raise CLIError("precondition", "hands must be an even number >= 2")
    bp = _load_profile(opts["blueprint"], game) if opts["blueprint"] else None
    a = _agent(opts["agent_a"], game, bp, opts)
    b = _agent(opts["agent_b"], game, bp, opts)
    rep = run_match(game, a, b, hands, int(opts["seed"]))
    d = rep.as_dict()
    d.update(agent_a=opts["agent_a"], agent_b=opts["agent_b"], game=game.name)
    if out:
        _write(out, json.dumps(d, indent=1))
    return d


EXPLOIT = dict(strategy=None)


def cmd_exploit(game: GameTree, opts: dict, out) -> dict:
    files = opts["strategy"]
    if not files or len(files) > 2:
        raise CLIError("config", "exploit takes one profile file, or one file per player (P1 then P2)")
    prof = _load_profile(files[0], game)
    if len(files) == 2:
        prof = prof.replace(P2, _load_profile(files[1], game).p2)
    d = exploitability(game, prof).as_dict()
    if out:
        _write(out, json.dumps(d, indent=1))
    return d


OFFTREE = dict(value_counts="1,2,4,8,16", off_tree_size=0.75, blueprint_iters=1000, selfgen_iters=500,
               resolve_iters=1000, late_mode="safe_gadget", leaf_values="projected")


def cmd_offtree(game_params: dict, opts: dict, out) -> dict:
    counts = opts["value_counts"]
    if isinstance(counts, str):
        try:
            counts = [int(x) for x in counts.split(",") if x.strip()]
        except ValueError:
            raise CLIError("config", f"bad value counts {opts['value_counts']!r}") from None
    if not counts:
        raise CLIError("precondition", "value_counts must be nonempty")
    cfg = OffTreeConfig(game_params=game_params, off_tree_size=float(opts["off_tree_size"]),
                        value_counts=tuple(counts), blueprint_iterations=int(opts["blueprint_iters"]),
                        selfgen_iterations=int(opts["selfgen_iters"]), resolve_iterations=int(opts["resolve_iters"]),
                        late_mode=opts["late_mode"], leaf_values=opts["leaf_values"], seed=int(opts["seed"]))
    curve = run_offtree_experiment(cfg)
    if out:
        _write(out, curve.to_tsv() if str(out).endswith(".tsv") else json.dumps(curve.as_dict(), indent=1))
    for n, v in curve.points:
        print(f"N={n:<3d} {v:10.3f} mbb/g", file=sys.stderr)
    for k, v in curve.baselines.items():
        print(f"{k:<27s}{v:10.3f} mbb/g", file=sys.stderr)
    return curve.as_dict()


DEMO = dict(iters=2000)


def cmd_demo(opts: dict, out) -> dict:
    d = demo_rps(int(opts["iters"]))
    fmt = lambda s: "(" + ", ".join(f"{p:.3f}" for p in s) + ")"  # noqa: E731
    print("RPS+: P1 commits first, P2 responds (scissors pays double)", file=sys.stderr)
    print(f"  single-valued leaves: strategy {fmt(d['single_valued']['strategy'])}  "
          f"exploitability {d['single_valued']['exploitability']:.4f}", file=sys.stderr)
    print(f"  multi-valued leaves:  strategy {fmt(d['multi_valued']['strategy'])}  "
          f"exploitability {d['multi_valued']['exploitability']:.4f}", file=sys.stderr)
    print(f"  full-game CFR+:       strategy {fmt(d['full_game']['strategy'])}  "
          f"exploitability {d['full_game']['exploitability']:.4f}", file=sys.stderr)
    if out:
        _write(out, json.dumps(d, indent=1))
    return d


# -- parser ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; the [<subcommand>] table supplies option defaults")
    common.add_argument("--seed", type=int, help="seed for every random choice (default 0)")
    common.add_argument("--out", help="output file")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dlsolve", description="Depth-limited solving for imperfect-information games.")
    sub = p.add_subparsers(dest="command", required=True)

    def game_arg(sp):
        sp.add_argument("--game", help="rps_plus, kuhn, leduc or mini_nlfh (default kuhn)")

    sp = sub.add_parser("train", parents=[common], help="compute a blueprint with CFR")
    game_arg(sp)
    sp.add_argument("--iters", type=int)
    sp.add_argument("--variant", choices=("cfr_plus_modified", "vanilla_cfr", "mccfr_external"))
    sp.add_argument("--skip-frac", dest="skip_frac", type=float, help="fraction of iterations left out of the average")
    sp.add_argument("--discount-iters", dest="discount_iters", type=int)
    sp.add_argument("--checkpoint", type=int, help="report exploitability every N iterations")

    sp = sub.add_parser("values", parents=[common], help="leaf value table for the first-round subgame")
    game_arg(sp)
    sp.add_argument("--blueprint")
    sp.add_argument("--mode", choices=("exact", "rollout"))
    sp.add_argument("--samples", type=int)
    sp.add_argument("--k", type=int)
    sp.add_argument("--approach", choices=("bias", "selfgen"))
    sp.add_argument("--units", choices=("chips", "pot_fraction"))
    sp.add_argument("--depth-limit", dest="depth_limit", help="ply:N or round:N")
    sp.add_argument("--solver", choices=("P1", "P2"))
    sp.add_argument("--selfgen-iters", dest="selfgen_iters", type=int)
    sp.add_argument("--weaken", action="store_const", const=True,
                    help="lower non-blueprint continuations to the blueprint's value per leaf infoset")
    sp.add_argument("--weaken-pot-margin", dest="weaken_pot_margin", type=float,
                    help="extra weakening as a fraction of the pot")

    sp = sub.add_parser("resolve", parents=[common], help="re-solve one public situation of a blueprint")
    game_arg(sp)
    sp.add_argument("--blueprint")
    sp.add_argument("--public", help="public history key, e.g. 'c' in Kuhn")
    sp.add_argument("--mode", choices=("safe_gadget", "unsafe"))
    sp.add_argument("--solver", choices=("P1", "P2"))
    sp.add_argument("--iters", type=int, help="CFR+ iterations; 0 solves exactly (default)")
    sp.add_argument("--margin", type=float)
    sp.add_argument("--depth-limit", dest="depth_limit")
    sp.add_argument("--k", type=int)
    sp.add_argument("--approach", choices=("bias", "selfgen"))
    sp.add_argument("--selfgen-iters", dest="selfgen_iters", type=int)

    sp = sub.add_parser("match", parents=[common], help="duplicate match between two agents")
    game_arg(sp)
    sp.add_argument("--agent-a", dest="agent_a")
    sp.add_argument("--agent-b", dest="agent_b")
    sp.add_argument("--blueprint")
    sp.add_argument("--hands", type=int)
    sp.add_argument("--approach", choices=("bias", "selfgen"))
    sp.add_argument("--k", type=int)
    sp.add_argument("--late-mode", dest="late_mode", choices=("safe_gadget", "unsafe"))
    sp.add_argument("--value-mode", dest="value_mode", choices=("exact", "rollout"))
    sp.add_argument("--preflop-iters", dest="preflop_iters", type=int)
    sp.add_argument("--selfgen-iters", dest="selfgen_iters", type=int)

    sp = sub.add_parser("exploit", parents=[common], help="exploitability of a strategy profile")
    game_arg(sp)
    sp.add_argument("strategy", nargs="*")

    sp = sub.add_parser("offtree-experiment", parents=[common], help="exploitability vs number of leaf values")
    sp.add_argument("--value-counts", dest="value_counts")
    sp.add_argument("--off-tree-size", dest="off_tree_size", type=float)
    sp.add_argument("--blueprint-iters", dest="blueprint_iters", type=int)
    sp.add_argument("--selfgen-iters", dest="selfgen_iters", type=int)
    sp.add_argument("--resolve-iters", dest="resolve_iters", type=int)
    sp.add_argument("--late-mode", dest="late_mode", choices=("safe_gadget", "unsafe"))
    sp.add_argument("--leaf-values", dest="leaf_values", choices=("projected", "mapped"))

    sp = sub.add_parser("demo-rps", parents=[common], help="single- vs multi-valued leaves on RPS+")
    sp.add_argument("--iters", type=int)
    return p


def _run(args: argparse.Namespace) -> dict:
    config = _load_config(args.config)
    cmd = args.command
    if cmd == "demo-rps":
        return cmd_demo(_options(args, config, DEMO), args.out)
    if cmd == "offtree-experiment":
        opts = _options(args, config, OFFTREE)
        params = config.get(cmd, {}).get("game", {})
        if not isinstance(params, dict):
            raise CLIError("config", "[offtree-experiment].game must be a table of mini_nlfh parameters")
        return cmd_offtree(params, opts, args.out)
    game = _game(args, config)
    table = {"train": (cmd_train, TRAIN), "values": (cmd_values, VALUES), "resolve": (cmd_resolve, RESOLVE),
             "match": (cmd_match, MATCH), "exploit": (cmd_exploit, EXPLOIT)}
    fn, defaults = table[cmd]
    return fn(game, _options(args, config, defaults), args.out)


def _category(exc: Exception) -> str:
    if isinstance(exc, CLIError):
        return exc.category
    if isinstance(exc, ProtocolError):
        return "protocol"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, (SolverError, SubgameError, ResolveError, MappingError, ExperimentError, GameError,
                        StrategyError, ValueError, KeyError)):
        return "precondition"
    return "internal"


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = _run(args)
    except Exception as exc:  # every failure becomes one machine-readable line
        cat = _category(exc)
        err = {"error": cat, "message": str(exc)}
        if isinstance(exc, ProtocolError) and exc.transcript is not None:
            err["transcript"] = exc.transcript
        if isinstance(exc, CLIError):
            err.update(exc.extra)
        if cat == "internal":
            log.exception("unexpected failure")
        print(json.dumps(err, default=str), file=sys.stderr)
        return EXIT_CODES[cat]
    print(json.dumps(result, indent=1, default=_json_default))
    return 0


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    return str(x)


if __name__ == "__main__":
    sys.exit(main())
