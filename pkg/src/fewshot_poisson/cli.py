"""Command-line interface.

Every successful command prints exactly one JSON document on stdout;
diagnostics and human summaries go to stderr. Exit codes: 0 success,
1 data error, 2 config error, 3 numerical error.

Any flag can also be given in a ``--config`` file as ``dest=value`` (for
example ``knn_k=10`` or ``distractor=true``); explicit flags win over the
file, which wins over built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .calibration import preprocess
from .config import SolverConfig, _KEY_ALIASES, _coerce, read_config_file
from .contrastive import load_views, ut_loss_and_grad, ContrastiveBatch
from .data import load_feature_file, load_pool, save_pool, validate_episode
from .episodes import EpisodeSpec, NMode, run_benchmark
from .errors import ConfigError, DataError, FewShotError
from .graph import build_graph
from .mbo import effective_k
from .pipeline import Method, infer
from .poisson import build_source, poisson_converge, poisson_solve_dense
from .synthetic import gaussian_blobs

log = logging.getLogger("fewshot_poisson")

_SOLVER_DESTS = ("mu", "m1", "m2", "m3", "phi", "clip_lo", "clip_hi", "knn_k", "tp_max", "tau",
                 "lam", "seed", "lp_alpha", "lp_max_iter", "lp_tol", "normalize", "renormalize_queries")


def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--mu", type=float, help="source weight (default 1.5)")
    g.add_argument("--m1", type=int, help="outer MBO iterations (default 20)")
    g.add_argument("--m2", type=int, help="gradient steps per outer iteration (default 40)")
    g.add_argument("--m3", type=int, help="volume-fit steps per outer iteration (default 100)")
    g.add_argument("--phi", type=float, help="volume-fit time step (default 10)")
    g.add_argument("--clip-lo", dest="clip_lo", type=float, help="lower clip for class weights (default 0.5)")
    g.add_argument("--clip-hi", dest="clip_hi", type=float, help="upper clip for class weights (default 1.0)")
    g.add_argument("--knn-k", dest="knn_k", type=int, help="neighbours per vertex (default 30)")
    g.add_argument("--tp-max", dest="tp_max", type=int, help="cap on Poisson steps (default 100)")
    g.add_argument("--tau", type=float, help="contrastive temperature (default 0.1)")
    g.add_argument("--lambda", dest="lam", type=float, help="KL weight (default 1)")
    g.add_argument("--seed", type=int, help="root seed (default 0)")
    g.add_argument("--alpha", dest="lp_alpha", type=float, help="label-propagation alpha in (0,1) (default 0.99)")
    g.add_argument("--lp-max-iter", dest="lp_max_iter", type=int, help="label-propagation iteration cap")
    g.add_argument("--lp-tol", dest="lp_tol", type=float, help="label-propagation tolerance")
    g.add_argument("--no-normalize", dest="normalize", action="store_const", const=False,
                   help="skip L2 normalization of features")
    g.add_argument("--renormalize-queries", dest="renormalize_queries", action="store_const", const=True,
                   help="L2-normalize queries again after calibration")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat key=value config file")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(prog="fewshot-poisson", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    subs: dict[str, argparse.ArgumentParser] = {}

    p = sub.add_parser("infer", help="predict query labels for one episode")
    _add_common(p)
    p.add_argument("--features", type=Path, help="episode feature CSV (required)")
    p.add_argument("--method", default="dpn", help="ptn | dpn | poisson | lp (default dpn)")
    p.add_argument("--prior", default="uniform", help="'uniform' or a file of C class fractions")
    p.add_argument("--no-calibration", dest="no_calibration", action="store_true",
                   help="disable query feature calibration")
    p.add_argument("--dump-graph", dest="dump_graph", type=Path, help="write the graph edge list here")
    p.add_argument("--dump-diagnostics", dest="dump_diagnostics", type=Path,
                   help="write per-iteration MBO diagnostics CSV here")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_infer)
    subs["infer"] = p

    p = sub.add_parser("episodes", help="benchmark a method over sampled episodes")
    _add_common(p)
    p.add_argument("--pool", type=Path, help="labeled pool CSV (required)")
    p.add_argument("--ways", type=int, default=5)
    p.add_argument("--shots", type=int, default=1)
    p.add_argument("--queries", type=int, default=15, help="queries per class")
    p.add_argument("--unlabeled", type=int, default=0, help="extra unlabeled count N")
    p.add_argument("--n-mode", dest="n_mode", default="per-class", choices=[m.value for m in NMode])
    p.add_argument("--distractor", action="store_true", help="draw unlabeled points from other classes")
    p.add_argument("--episodes", type=int, default=600)
    p.add_argument("--method", default="dpn", help="ptn | dpn | poisson | lp (default dpn)")
    p.add_argument("--prior", default="uniform")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: CPU count)")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_episodes)
    subs["episodes"] = p

    p = sub.add_parser("loss", help="contrastive transfer loss tools")
    loss_sub = p.add_subparsers(dest="loss_command", required=True)
    q = loss_sub.add_parser("eval", help="evaluate loss and gradient norm on a two-view CSV")
    _add_common(q)
    q.add_argument("--views", type=Path, help="CSV with header pair,view,f0,... (required)")
    q.add_argument("--tau", type=float, default=0.1)
    q.add_argument("--lambda", dest="lam", type=float, default=1.0)
    q.set_defaults(func=cmd_loss)
    subs["loss eval"] = q

    p = sub.add_parser("validate", help="report episode invariant violations")
    _add_common(p)
    p.add_argument("--features", type=Path, help="episode feature CSV (required)")
    p.set_defaults(func=cmd_validate)
    subs["validate"] = p

    p = sub.add_parser("oracle", help="compare the iterative Poisson solve with the dense oracle")
    _add_common(p)
    p.add_argument("--features", type=Path, help="episode feature CSV (required)")
    p.add_argument("--no-calibration", dest="no_calibration", action="store_true")
    p.add_argument("--tol", type=float, default=1e-10, help="iterative residual tolerance")
    _add_solver_flags(p)
    p.set_defaults(func=cmd_oracle)
    subs["oracle"] = p

    p = sub.add_parser("synth", help="write a Gaussian-blob pool CSV")
    _add_common(p)
    p.add_argument("--out", type=Path, help="destination CSV (required)")
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", dest="per_class", type=int, default=200)
    p.add_argument("--dim", type=int, default=16)
    p.add_argument("--sigma", type=float, default=0.3)
    p.add_argument("--separation", type=float, default=1.0)
    p.add_argument("--offset", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p
    return parser, subs


def _all_dests(subs: dict[str, argparse.ArgumentParser]) -> set[str]:
    return {a.dest for p in subs.values() for a in p._actions}


def apply_config_file(sub: argparse.ArgumentParser, path: Path, known_anywhere: set[str]) -> None:
    """Install file values as parser defaults so explicit flags still override them."""
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    for key, raw in read_config_file(path).items():
        dest = _KEY_ALIASES.get(key, key)
        action = actions.get(dest)
        if action is None:
            if dest in known_anywhere:
                continue
            raise ConfigError(f"{path}: unknown config key {key!r}")
        if action.nargs == 0:
            value: Any = _coerce(key, raw, "bool")
        elif action.type is not None:
            try:
                value = action.type(raw)
            except (TypeError, ValueError):
                raise ConfigError(f"{path}: cannot parse {key}={raw!r}") from None
        else:
            value = raw
        sub.set_defaults(**{dest: value})


def solver_config(args: argparse.Namespace) -> SolverConfig:
    given = {d: getattr(args, d) for d in _SOLVER_DESTS if getattr(args, d, None) is not None}
    key_of = {v: k for k, v in _KEY_ALIASES.items()}
    return SolverConfig.from_mapping({key_of.get(k, k): v for k, v in given.items()})


def _require(args: argparse.Namespace, dest: str) -> Path:
    """Paths may come from a flag or the config file, so argparse cannot enforce them."""
    value = getattr(args, dest)
    if value is None:
        raise ConfigError(f"--{dest} is required (flag or config key {dest})")
    return Path(value)


def read_prior(value: str, num_classes: int | None = None):
    if value is None or str(value).strip().lower() == "uniform":
        return None
    path = Path(value)
    try:
        text = path.read_text()
    except OSError as exc:
        raise DataError(f"cannot read prior file {path}: {exc.strerror}") from None
    try:
        o = np.array([float(t) for t in text.replace(",", " ").split()])
    except ValueError:
        raise DataError(f"prior file {path} must contain numbers only") from None
    if num_classes is not None and o.size != num_classes:
        raise DataError(f"prior file {path} has {o.size} entries, expected {num_classes}")
    return o


def cmd_infer(args: argparse.Namespace) -> dict[str, Any]:
    config = solver_config(args)
    method = Method.parse(args.method)
    features = _require(args, "features")
    if not features.exists():
        raise DataError(f"feature file not found: {features}")
    episode = load_feature_file(features)
    prior = read_prior(args.prior, episode.num_classes)
    calibrate = False if args.no_calibration else None
    start = time.perf_counter()
    result = infer(episode, method, config, prior, calibrate=calibrate)
    elapsed = time.perf_counter() - start
    if args.dump_graph:
        result.graph.dump_edges(args.dump_graph)
    if args.dump_diagnostics:
        if result.trace is None:
            raise ConfigError("--dump-diagnostics needs an MBO method (ptn, dpn or poisson)")
        result.trace.write_csv(args.dump_diagnostics)
    calibrated = method in (Method.PTN, Method.DPN) and not args.no_calibration
    return {
        "method": method.value,
        "predictions": {qid: int(c) for qid, c in zip(result.query_ids, result.predictions)},
        "num_queries": len(result.query_ids),
        "num_classes": episode.num_classes,
        "poisson_steps": result.poisson_steps,
        "calibrated": calibrated,
        "timing": {"seconds": elapsed},
    }


def cmd_episodes(args: argparse.Namespace) -> dict[str, Any]:
    config = solver_config(args)
    method = Method.parse(args.method)
    spec = EpisodeSpec(ways=args.ways, shots=args.shots, queries=args.queries, unlabeled=args.unlabeled,
                       n_mode=NMode(args.n_mode), distractor=args.distractor,
                       num_episodes=args.episodes, seed=config.seed)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise ConfigError(f"--jobs must be >= 1, got {jobs}")
    pool_path = _require(args, "pool")
    if not pool_path.exists():
        raise DataError(f"pool file not found: {pool_path}")
    pool = load_pool(pool_path)
    prior = read_prior(args.prior, spec.ways)
    report = run_benchmark(pool, spec, method, config, prior, jobs=jobs)
    print(f"{method.value}: {report.summary()} over {report.num_episodes} episodes", file=sys.stderr)
    return report.to_dict()


def cmd_loss(args: argparse.Namespace) -> dict[str, Any]:
    if not args.tau > 0:
        raise ConfigError(f"--tau must be > 0, got {args.tau}")
    batch: ContrastiveBatch = load_views(_require(args, "views"))
    loss, (g_t, g_tp) = ut_loss_and_grad(batch, args.tau, args.lam)
    grad_norm = float(np.sqrt(np.sum(g_t**2) + np.sum(g_tp**2)))
    return {"loss": loss, "grad_norm": grad_norm, "n": batch.n, "d": batch.d,
            "tau": args.tau, "lambda": args.lam}


def cmd_validate(args: argparse.Namespace) -> dict[str, Any]:
    episode = load_feature_file(_require(args, "features"), strict=False)
    violations = validate_episode(episode)
    return {"valid": not violations, "violations": violations, "m": episode.m,
            "num_classes": episode.num_classes, "shots": episode.shots,
            "n_unlabeled": episode.n_unlabeled, "n_query": episode.n_query}


def cmd_oracle(args: argparse.Namespace) -> dict[str, Any]:
    config = solver_config(args)
    episode = load_feature_file(_require(args, "features"))
    feats = preprocess(episode, normalize=config.normalize, with_calibration=not args.no_calibration,
                       renormalize=config.renormalize_queries)
    graph = build_graph(feats.features, effective_k(config, episode.m))
    source = build_source(episode)
    dense = poisson_solve_dense(graph, source)
    G, steps = poisson_converge(graph, source, tol=args.tol)
    return {
        "m": episode.m,
        "max_abs_diff": float(np.max(np.abs(G - dense))),
        "iterative_steps": steps,
        "dense_residual": float(np.max(np.abs(graph.laplacian @ dense - source.entries))),
        "iterative_residual": float(np.max(np.abs(graph.laplacian @ G - source.entries))),
    }


def cmd_synth(args: argparse.Namespace) -> dict[str, Any]:
    if args.classes < 2 or args.per_class < 1 or args.dim < args.classes or args.sigma < 0:
        raise ConfigError("synth needs classes >= 2, per-class >= 1, dim >= classes, sigma >= 0")
    pool = gaussian_blobs(args.classes, args.per_class, args.dim, args.sigma,
                          args.separation, args.offset, args.seed)
    out = _require(args, "out")
    save_pool(pool, out)
    return {"path": str(out), "num_points": len(pool), "num_classes": args.classes, "dim": args.dim}


def _subparser_for(args: argparse.Namespace, subs: dict[str, argparse.ArgumentParser]):
    if args.command == "loss":
        return subs["loss eval"]
    return subs[args.command]


def resolve_args(argv: Sequence[str]) -> argparse.Namespace:
    """Parse ``argv``; a ``--config`` file fills in anything not given as a flag."""
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is not None:
        apply_config_file(_subparser_for(args, subs), args.config, _all_dests(subs))
        args = parser.parse_args(argv)
    return args


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = resolve_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        document = args.func(args)
    except FewShotError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    sys.stdout.write(json.dumps(document) + "\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
