"""Command-line front door: gen, train, solve, compare, plot.

Exit codes: 0 success, 2 usage or configuration error, 3 runtime failure.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as mio
from .baselines import RansacConfig, lo_ransac, ransac
from .datagen import GenSpec, generate
from .errors import BudgetExhausted, ContractError, FormatError, SolverError
from .minimax import minimax_fit
from .model import MODEL_KINDS
from .refine import local_tree_refinement
from .report import (METHODS, RESULT_COLUMNS, SUMMARY_COLUMNS, TIMING_COLUMNS,
                     CompareSettings, compare, plot_report, read_csv, write_csv)
from .search import SearchResult, optimal_search, random_rollout
from .training import TrainConfig, Trainer, evaluate_policy, train

log = logging.getLogger("maxcon_rl")

SEED_ENV = "MAXCON_SEED"
EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


def _instance_seed(seed, i):
    return int(np.random.SeedSequence([seed, i]).generate_state(1)[0])


def _load_instance(path, epsilon=None):
    path = Path(path)
    if not path.exists():
        raise UsageError(f"no such file: {path}")
    if path.suffix.lower() == ".csv":
        return mio.load_correspondences(path, 0.01 if epsilon is None else epsilon)
    ds = mio.load_dataset(path)
    return ds if epsilon is None else ds.with_epsilon(epsilon)


def _load_params(path, dataset=None):
    if path is None:
        raise UsageError("this method needs --checkpoint")
    if not Path(path).exists():
        raise UsageError(f"checkpoint not found: {path}")
    ckpt = mio.load_checkpoint(path)
    if dataset is not None and ckpt.config.model_kind != dataset.model_kind:
        raise UsageError(f"checkpoint was trained on {ckpt.config.model_kind}, "
                         f"dataset is {dataset.model_kind}")
    return ckpt


def _result_record(method, res, dataset, extra=None):
    rec = {
        "method": method,
        "model_kind": dataset.model_kind,
        "N": dataset.N,
        "consensus": int(res.consensus),
        "removals": int(res.removals),
        "nodes_expanded": int(res.nodes_expanded),
        "gamma": float(res.gamma),
        "theta": [float(x) for x in res.theta],
        "inliers": [int(i) for i in res.consensus_indices],
        "wall_time_s": float(res.wall_time),
    }
    rec.update(extra or {})
    return rec


# -- gen ---------------------------------------------------------------------

def cmd_gen(args):
    if not 0 <= args.rate < 1:
        raise UsageError(f"--rate must lie in [0, 1), got {args.rate}")
    if args.count < 1 or args.n < 1:
        raise UsageError("--count and --n must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        spec = GenSpec(model_kind=args.model, N=args.n, outlier_rate=args.rate,
                       seed=_instance_seed(args.seed, i), epsilon=args.epsilon,
                       inlier_noise=args.inlier_noise)
        ds = generate(spec)
        path = out / f"instance_{i:04d}.json"
        mio.save_dataset(ds, path)
        print(f"{path}\tseed={spec.seed}\tN={ds.N}\toutliers={spec.n_outliers}")
    return 0


# -- train -------------------------------------------------------------------

TRAIN_FIELDS = ("episodes", "n_points", "outlier_lo", "outlier_hi", "beta", "lr",
                "batch_size", "eps_start", "eps_end", "eps_decay", "replay_capacity",
                "target_sync", "warmup", "model_kind", "epsilon", "k")


def _state_path(ckpt_path):
    return Path(str(ckpt_path) + ".state.npz")


def _save_all(trainer, path):
    mio.save_checkpoint(trainer.checkpoint(), path)
    mio.save_trainer_state(trainer.state_dict(), _state_path(path))


def cmd_train(args):
    out = Path(args.out)
    if args.resume is not None:
        rpath = Path(args.resume)
        if not rpath.exists() or not _state_path(rpath).exists():
            raise UsageError(f"cannot resume: {rpath} or its trainer state is missing")
        ckpt = mio.load_checkpoint(rpath)
        cfg = ckpt.config
        if args.episodes is not None:
            cfg = TrainConfig.from_dict({**cfg.to_dict(), "episodes": args.episodes})
        trainer = Trainer(cfg, ckpt.params)
        trainer.load_state_dict(mio.load_trainer_state(_state_path(rpath)))
        trainer.config = cfg
    else:
        fields = {f: getattr(args, f) for f in TRAIN_FIELDS if getattr(args, f) is not None}
        fields["seed"] = args.seed
        cfg = TrainConfig(**fields)
        trainer = Trainer(cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    logf = open(args.log, "a" if args.resume else "w") if args.log else None

    def callback(rec, tr):
        if logf is not None:
            logf.write(json.dumps(rec, sort_keys=True) + "\n")
            logf.flush()
        if args.checkpoint_every and tr.episode % args.checkpoint_every == 0:
            _save_all(tr, out)

    try:
        train(cfg, callback=callback, trainer=trainer)
    finally:
        if logf is not None:
            logf.close()
    _save_all(trainer, out)
    print(json.dumps({"checkpoint": str(out), "episode": trainer.episode, **trainer.stats()},
                     sort_keys=True))
    return 0


# -- solve -------------------------------------------------------------------

def _baseline_config(args, seed):
    if args.budget_seconds is not None:
        return RansacConfig(iterations=None, seconds=args.budget_seconds, seed=seed)
    return RansacConfig(iterations=args.iters, seed=seed)


def cmd_solve(args):
    ds = _load_instance(args.dataset, args.epsilon)
    m = args.method
    extra = {}
    if m in ("rl", "rl+refine"):
        ckpt = _load_params(args.checkpoint, ds)
        pol = evaluate_policy(ds, ckpt.params, ckpt.config.beta)
        res = pol.result
        extra["episode_return"] = pol.episode_return
        if m == "rl+refine":
            inl = local_tree_refinement(ds, res.consensus_indices)
            extra["rl_consensus"] = res.consensus
            fit = minimax_fit(ds, inl)
            res = SearchResult(inl, ds.N - len(inl), fit.theta, res.nodes_expanded,
                               res.wall_time, fit.gamma, res.removal_order)
    elif m == "oracle":
        res = optimal_search(ds, node_budget=args.node_budget)
    elif m == "random":
        res = random_rollout(ds, args.seed)
    elif m == "ransac":
        res = ransac(ds, _baseline_config(args, args.seed))
    else:
        res = lo_ransac(ds, _baseline_config(args, args.seed))
    rec = _result_record(m, res, ds, extra)
    if not args.timing:
        rec.pop("wall_time_s")
    text = json.dumps(rec, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


# -- compare / plot ------------------------------------------------------------

def _collect_instances(args):
    if args.data:
        files = sorted(p for p in Path(args.data).iterdir()
                       if p.suffix.lower() in (".json", ".csv"))
        if not files:
            raise UsageError(f"no dataset files in {args.data}")
        return [(p.stem, _load_instance(p, args.epsilon)) for p in files]
    if not 0 <= args.rate < 1:
        raise UsageError(f"--rate must lie in [0, 1), got {args.rate}")
    out = []
    for i in range(args.count):
        spec = GenSpec(model_kind=args.model, N=args.n, outlier_rate=args.rate,
                       seed=_instance_seed(args.seed, i),
                       epsilon=0.1 if args.epsilon is None else args.epsilon,
                       inlier_noise=args.inlier_noise)
        out.append((f"instance_{i:04d}", generate(spec)))
    return out


def _write_outputs(report, out):
    rows = report.rows
    cols = RESULT_COLUMNS
    if all(r["gap_to_oracle"] == "" for r in rows):
        cols = [c for c in cols if c != "gap_to_oracle"]
    write_csv(rows, cols, out / "results.csv")
    write_csv(report.summary(), SUMMARY_COLUMNS, out / "summary.csv")
    write_csv(report.timings, TIMING_COLUMNS, out / "timings.csv")
    plot_report(rows, report.timings, out)


def cmd_compare(args):
    methods = tuple(m.strip() for m in args.methods.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise UsageError(f"unknown methods {bad}; choose from {','.join(METHODS)}")
    if args.reps < 1:
        raise UsageError("--reps must be positive")
    instances = _collect_instances(args)
    params = None
    if any(m.startswith("rl") for m in methods):
        ckpt = _load_params(args.checkpoint, instances[0][1])
        params = ckpt.params
    elif args.parity == "time":
        raise UsageError("--parity time needs the rl method to measure agent time")
    settings = CompareSettings(methods=methods, reps=args.reps, seed=args.seed,
                               parity=args.parity, ransac_iters=args.iters,
                               oracle_budget=args.node_budget)
    report = compare(instances, params, settings, jobs=args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_outputs(report, out)
    for iid in report.skipped_oracle:
        print(f"oracle skipped: {iid}")
    for row in report.summary():
        print(f"{row['method']}\t{row['metric']}\tmedian={row['median']:g}\t"
              f"q1={row['q1']:g}\tq3={row['q3']:g}")
    return 0


def cmd_plot(args):
    src = Path(args.results)
    if not src.exists():
        raise UsageError(f"no such file: {src}")
    rows = read_csv(src)
    if rows and "gap_to_oracle" not in rows[0]:
        for r in rows:
            r["gap_to_oracle"] = ""
    tpath = Path(args.timings) if args.timings else src.with_name("timings.csv")
    timings = read_csv(tpath) if tpath.exists() else []
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for p in plot_report(rows, timings, out):
        print(p)
    return 0


# -- parser --------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="maxcon-rl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None,
                        help=f"random seed (env {SEED_ENV} applies when omitted)")
        sp.add_argument("--config", default=None, help="JSON file of flag defaults")

    g = sub.add_parser("gen", help="generate synthetic datasets")
    common(g)
    g.add_argument("--model", choices=MODEL_KINDS, default="line2d")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--rate", type=float, default=0.2)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--epsilon", type=float, default=0.1)
    g.add_argument("--inlier-noise", type=float, default=0.1,
                   help="half-width of the inlier noise band (0 = exact inliers)")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    t = sub.add_parser("train", help="train the Q-network")
    common(t)
    for f in TRAIN_FIELDS:
        kind = type(getattr(TrainConfig, f))
        if f == "model_kind":
            t.add_argument("--model", dest=f, choices=MODEL_KINDS, default=None)
        elif f == "n_points":
            t.add_argument("--n", dest=f, type=int, default=None)
        else:
            t.add_argument("--" + f.replace("_", "-"), dest=f, type=kind, default=None)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--checkpoint-every", type=int, default=100)
    t.add_argument("--log", default=None, help="JSON-lines progress log")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("solve", help="run one method on one dataset")
    common(s)
    s.add_argument("dataset", help="dataset JSON or correspondence CSV")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--checkpoint", default=None)
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--iters", type=int, default=1000, help="RANSAC iteration budget")
    s.add_argument("--budget-seconds", type=float, default=None,
                   help="RANSAC wall-clock budget (replaces --iters)")
    s.add_argument("--node-budget", type=int, default=200_000)
    s.add_argument("--timing", action="store_true", help="include wall time in the record")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="benchmark methods over instances")
    common(c)
    c.add_argument("--data", default=None, help="directory of dataset files")
    c.add_argument("--model", choices=MODEL_KINDS, default="line2d")
    c.add_argument("--n", type=int, default=30)
    c.add_argument("--rate", type=float, default=0.1)
    c.add_argument("--count", type=int, default=10)
    c.add_argument("--epsilon", type=float, default=None)
    c.add_argument("--inlier-noise", type=float, default=0.1)
    c.add_argument("--methods", default=",".join(METHODS))
    c.add_argument("--checkpoint", default=None)
    c.add_argument("--reps", type=int, default=100)
    c.add_argument("--parity", choices=("iters", "time"), default="iters")
    c.add_argument("--iters", type=int, default=1000)
    c.add_argument("--node-budget", type=int, default=200_000)
    c.add_argument("--jobs", type=int, default=1)
    c.add_argument("--out", required=True, help="output directory")
    c.set_defaults(func=cmd_compare)

    pl = sub.add_parser("plot", help="redraw SVG boxplots from results CSV")
    common(pl)
    pl.add_argument("results")
    pl.add_argument("--timings", default=None)
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p, sub.choices


def parse_args(argv=None):
    """Flags > config file > defaults; the seed env var sits between flags and config."""
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    cfg = {}
    if args.config:
        try:
            with open(args.config) as f:
                cfg = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            parser.error(f"cannot read config {args.config}: {exc}")
        if not isinstance(cfg, dict):
            parser.error("config file must hold a JSON object")
        sp = subs[args.command]
        known = {a.dest for a in sp._actions}
        unknown = sorted(set(cfg) - known)
        if unknown:
            parser.error(f"unknown config keys: {', '.join(unknown)}")
        seed_cfg = cfg.pop("seed", None)
        sp.set_defaults(**cfg)
        args = parser.parse_args(argv)
        cfg["seed"] = seed_cfg
    if args.seed is None:
        env = os.environ.get(SEED_ENV)
        if env is not None:
            try:
                args.seed = int(env)
            except ValueError:
                parser.error(f"{SEED_ENV} must be an integer, got {env!r}")
        elif cfg.get("seed") is not None:
            args.seed = int(cfg["seed"])
        else:
            args.seed = 0
    return parser, args


def main(argv=None):
    parser, args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ContractError, FormatError) as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SolverError, BudgetExhausted, FloatingPointError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
