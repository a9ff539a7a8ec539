"""Method comparison over instances: tidy CSV rows, summary statistics, SVG boxplots."""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baselines import RansacConfig, lo_ransac, ransac
from .errors import BudgetExhausted
from .refine import local_tree_refinement
from .search import optimal_search, random_rollout
from .training import evaluate_policy

log = logging.getLogger(__name__)

METHODS = ("rl", "rl+refine", "ransac", "loransac", "oracle", "random")
RESULT_COLUMNS = ["instance_id", "method", "rep", "seed", "consensus", "gap_to_oracle",
                  "removals", "nodes"]
TIMING_COLUMNS = ["instance_id", "method", "rep", "wall_time_s"]
SUMMARY_COLUMNS = ["method", "metric", "n", "median", "q1", "q3", "min", "max"]

ORACLE_MAX_N = 30
ORACLE_MAX_OUTLIERS = 6


@dataclass
class CompareSettings:
    methods: tuple = METHODS
    reps: int = 100
    seed: int = 0
    parity: str = "iters"           # "iters" (deterministic) or "time"
    ransac_iters: int = 1000
    lo_inner_iterations: int = 10
    oracle_budget: int = 200_000
    beta: float = 0.99


@dataclass
class CompareReport:
    rows: list = field(default_factory=list)
    timings: list = field(default_factory=list)
    skipped_oracle: list = field(default_factory=list)

    def summary(self):
        out = []
        methods = []
        for r in self.rows:
            if r["method"] not in methods:
                methods.append(r["method"])
        for m in methods:
            rows = [r for r in self.rows if r["method"] == m]
            gaps = [r["gap_to_oracle"] for r in rows if r["gap_to_oracle"] != ""]
            if gaps and len(gaps) == len(rows):
                metric, vals = "gap_to_oracle", np.array(gaps, dtype=float)
            else:
                metric, vals = "consensus", np.array([r["consensus"] for r in rows], dtype=float)
            q1, med, q3 = np.percentile(vals, [25, 50, 75])
            out.append({"method": m, "metric": metric, "n": len(vals), "median": med,
                        "q1": q1, "q3": q3, "min": vals.min(), "max": vals.max()})
        return out


def oracle_feasible(dataset):
    if dataset.N > ORACLE_MAX_N:
        return False
    if dataset.planted is None:
        return False
    return len(dataset.planted.outlier_indices) <= ORACLE_MAX_OUTLIERS


def rep_seed(seed, instance, rep):
    return int(np.random.SeedSequence([seed, instance, rep]).generate_state(1)[0])


def _run_instance(args):
    """All (method, rep) cells of one instance; returns (rows, timings, oracle_skipped)."""
    pos, inst_id, dataset, params, settings = args
    s = settings
    # the oracle also runs when not listed as a method: gaps are measured against it
    oracle = None
    if oracle_feasible(dataset):
        try:
            oracle = optimal_search(dataset, node_budget=s.oracle_budget)
        except BudgetExhausted:
            log.warning("oracle budget exhausted on %s", inst_id)
    skipped = oracle is None
    agent = None
    refined = None
    if params is not None and ("rl" in s.methods or "rl+refine" in s.methods):
        agent = evaluate_policy(dataset, params, s.beta).result
        if "rl+refine" in s.methods:
            refined = local_tree_refinement(dataset, agent.consensus_indices)
    rows, timings = [], []
    for method in s.methods:
        if method == "oracle" and oracle is None:
            continue
        for rep in range(s.reps):
            seed = rep_seed(s.seed, pos, rep)
            if method == "oracle":
                res, wall = oracle, oracle.wall_time
            elif method == "rl":
                res, wall = agent, agent.wall_time
            elif method == "rl+refine":
                res, wall = None, agent.wall_time
            elif method == "random":
                res = random_rollout(dataset, seed)
                wall = res.wall_time
            else:
                if s.parity == "time" and agent is not None:
                    cfg = RansacConfig(iterations=None, seconds=max(agent.wall_time, 1e-6),
                                       seed=seed, lo_inner_iterations=s.lo_inner_iterations)
                else:
                    cfg = RansacConfig(iterations=s.ransac_iters, seed=seed,
                                       lo_inner_iterations=s.lo_inner_iterations)
                res = lo_ransac(dataset, cfg) if method == "loransac" else ransac(dataset, cfg)
                wall = res.wall_time
            if method == "rl+refine":
                cons, removals, nodes = len(refined), dataset.N - len(refined), agent.nodes_expanded
            else:
                cons, removals, nodes = res.consensus, res.removals, res.nodes_expanded
            gap = "" if oracle is None else oracle.consensus - cons
            rows.append({"instance_id": inst_id, "method": method, "rep": rep, "seed": seed,
                         "consensus": cons, "gap_to_oracle": gap, "removals": removals,
                         "nodes": nodes})
            timings.append({"instance_id": inst_id, "method": method, "rep": rep,
                            "wall_time_s": wall})
    return rows, timings, skipped


def compare(instances, params, settings, jobs=1):
    """Run every method over ``instances`` (list of (id, Dataset))."""
    work = [(i, iid, ds, params, settings) for i, (iid, ds) in enumerate(instances)]
    report = CompareReport()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_instance, work))
    else:
        results = [_run_instance(w) for w in work]
    for (iid, _), (rows, timings, skipped) in zip(instances, results):
        report.rows.extend(rows)
        report.timings.extend(timings)
        if skipped:
            report.skipped_oracle.append(iid)
    return report


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_csv(rows, columns, path):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _fmt(r[c]) for c in columns})


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def boxplot_svg(groups, path, ylabel, title=""):
    """Boxplots (median, quartiles, 1.5 IQR whiskers) of {label: values} to SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    labels = [k for k, v in groups.items() if len(v)]
    data = [np.asarray(groups[k], dtype=float) for k in labels]
    with matplotlib.rc_context({"svg.hashsalt": "maxcon-rl", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(1.2 * max(len(labels), 3) + 1, 3.5))
        if data:
            ax.boxplot(data, tick_labels=labels)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)


def plot_report(rows, timings, out_dir):
    """Write gap_to_oracle.svg (when gaps exist) and wall_time.svg; return paths."""
    import os

    paths = []
    gaps = {}
    for r in rows:
        if r["gap_to_oracle"] not in ("", None):
            gaps.setdefault(r["method"], []).append(float(r["gap_to_oracle"]))
    if gaps:
        p = os.path.join(out_dir, "gap_to_oracle.svg")
        boxplot_svg(gaps, p, "oracle consensus - method consensus")
        paths.append(p)
    times = {}
    for t in timings:
        times.setdefault(t["method"], []).append(float(t["wall_time_s"]))
    if times:
        p = os.path.join(out_dir, "wall_time.svg")
        boxplot_svg(times, p, "wall time (s)")
        paths.append(p)
    return paths
