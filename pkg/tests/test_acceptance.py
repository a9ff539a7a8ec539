"""Acceptance suite: ten criteria at their stated tolerances.

Each test records one PASS/FAIL line; the lines are printed in the pytest
terminal summary, or directly when run as ``python tests/test_acceptance.py``.
The trained agent of criteria 6 and 9 is cached under ``tests/.cache`` keyed
by the training config and the source of the modules it depends on; set
MAXCON_RETRAIN=1 to force retraining.
"""

import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gradcheck import finite_difference_check, tiny_problem  # noqa: E402
from oracles import chebyshev_vertex_oracle, maxcon_subsets  # noqa: E402

import maxcon_rl  # noqa: E402
from maxcon_rl import io as mio  # noqa: E402
from maxcon_rl.baselines import RansacConfig, lo_ransac, ransac  # noqa: E402
from maxcon_rl.cli import main as cli_main  # noqa: E402
from maxcon_rl.datagen import GenSpec, generate  # noqa: E402
from maxcon_rl.minimax import min_max_residual, minimax_fit  # noqa: E402
from maxcon_rl.model import Dataset  # noqa: E402
from maxcon_rl.network import backward_batch, encode_state, forward_batch  # noqa: E402
from maxcon_rl.refine import local_tree_refinement  # noqa: E402
from maxcon_rl.search import (actions, apply_action, initial_state, is_goal,  # noqa: E402
                              optimal_search, random_rollout)
from maxcon_rl.training import TrainConfig, evaluate_policy, train  # noqa: E402

REPORT = {}

TITLES = {
    1: "minimax LP matches candidate-basis oracle",
    2: "basis removal strictly decreases gamma",
    3: "exact search equals subset enumeration",
    4: "backward pass matches finite differences",
    5: "per-point Q is permutation equivariant",
    6: "learning signal on held-out suite",
    7: "refinement properties",
    8: "RANSAC / LO-RANSAC sanity",
    9: "rollout cost vs exact search",
    10: "CLI outputs are bit-identical across runs",
}


def record(n, ok, detail):
    REPORT[n] = f"[{'PASS' if ok else 'FAIL'}] criterion {n:2d}: {TITLES[n]} ({detail})"
    print(REPORT[n])
    return ok


def random_walk_state(ds, rng, max_depth):
    """Walk a random number of uniformly chosen basis removals from the root."""
    s = initial_state(ds)
    for _ in range(int(rng.integers(0, max_depth + 1))):
        if is_goal(s, ds.epsilon):
            break
        acts = actions(s)
        s = apply_action(ds, s, acts[int(rng.integers(len(acts)))])
    return s


# -- 1 -------------------------------------------------------------------------

def test_criterion_01_minimax_oracle():
    rng = np.random.default_rng(101)
    worst = 0.0
    lp_time = 0.0
    for _ in range(1000):
        n = int(rng.integers(3, 11))
        A = np.column_stack([rng.uniform(-1, 1, n), np.ones(n)])
        b = rng.uniform(-2, 2, n)
        ds = Dataset(A, b, 0.1, "line2d")
        t0 = time.perf_counter()
        g = minimax_fit(ds).gamma
        lp_time += time.perf_counter() - t0
        worst = max(worst, abs(g - chebyshev_vertex_oracle(A, b)))
    ok = worst <= 1e-8 and lp_time < 10
    assert record(1, ok, f"max |dgamma| = {worst:.2e}, LP time {lp_time:.2f} s")


# -- 2 -------------------------------------------------------------------------

def test_criterion_02_strict_decrease():
    rng = np.random.default_rng(202)
    violations = checked = 0
    for i in range(500):
        kind = "line2d" if i % 2 == 0 else "plane3d"
        n = int(rng.integers(8, 21))
        ds = generate(GenSpec(kind, n, float(rng.uniform(0, 0.4)), seed=int(rng.integers(2**32))))
        s = random_walk_state(ds, rng, 6)
        if s.gamma <= 1e-7:
            continue
        for j in actions(s):
            checked += 1
            violations += apply_action(ds, s, j).gamma >= s.gamma
    assert record(2, violations == 0, f"{violations} violations over {checked} removals")


# -- 3 -------------------------------------------------------------------------

def test_criterion_03_exact_search():
    rng = np.random.default_rng(303)
    mismatches = 0
    search_time = 0.0
    for _ in range(200):
        n = int(rng.integers(5, 13))
        n_out = int(rng.integers(0, min(4, n - 3) + 1))
        ds = generate(GenSpec("line2d", n, n_out / n, seed=int(rng.integers(2**32))))
        t0 = time.perf_counter()
        res = optimal_search(ds)
        search_time += time.perf_counter() - t0
        mismatches += res.consensus != maxcon_subsets(ds.A, ds.b, ds.epsilon)
    ok = mismatches == 0 and search_time < 60
    assert record(3, ok, f"{mismatches} mismatches, search time {search_time:.2f} s")


# -- 4 -------------------------------------------------------------------------

def test_criterion_04_gradient_check():
    worst = 0.0
    checked = skipped = 0
    for seed in range(20):
        X, params, dq = tiny_problem(1000 + seed, n=8)
        _, cache = forward_batch(X, params, keep_cache=True)
        grads = backward_batch(dq, params, cache)
        w, c, s = finite_difference_check(X, params, dq, grads, h=1e-4)
        worst, checked, skipped = max(worst, w), checked + c, skipped + s
    ok = worst <= 1e-4 and checked > 0
    assert record(4, ok, f"max rel. error {worst:.2e} over {checked} parameters, "
                         f"{skipped} skipped at activation kinks")


# -- 5 -------------------------------------------------------------------------

def test_criterion_05_permutation():
    rng = np.random.default_rng(505)
    worst = 0.0
    kinds = ("line2d", "plane3d", "fundamental_linearized")
    for i in range(100):
        kind = kinds[i % 3]
        n = int(rng.integers(12, 41))
        ds = generate(GenSpec(kind, n, float(rng.uniform(0, 0.3)), seed=int(rng.integers(2**32))))
        params = TrainConfig(model_kind=kind, seed=i).init_params()
        enc = encode_state(ds, random_walk_state(ds, rng, 4))
        perm = rng.permutation(n)
        q, _ = forward_batch(enc.inputs[None], params)
        qp, _ = forward_batch(enc.inputs[perm][None], params)
        worst = max(worst, float(np.abs(qp[0] - q[0][perm]).max()))
    assert record(5, worst <= 1e-6, f"max deviation {worst:.2e}")


# -- 6 and 9: trained agent -----------------------------------------------------------

AGENT_CONFIG = TrainConfig(episodes=3000, n_points=30, outlier_lo=0.01, outlier_hi=0.20, seed=0)
CACHE = Path(__file__).parent / ".cache"
SOURCES = ("model.py", "simplex.py", "minimax.py", "search.py", "network.py", "training.py",
           "datagen.py", "io.py")


def _cache_key(cfg):
    h = hashlib.sha256(json.dumps(cfg.to_dict(), sort_keys=True).encode())
    src = Path(maxcon_rl.__file__).parent
    for name in SOURCES:
        h.update((src / name).read_bytes())
    return h.hexdigest()[:16]


@pytest.fixture(scope="module")
def trained_agent():
    cfg = AGENT_CONFIG
    CACHE.mkdir(exist_ok=True)
    key = _cache_key(cfg)
    path = CACHE / f"agent_{key}.bin"
    meta = CACHE / f"agent_{key}.json"
    if path.exists() and meta.exists() and os.environ.get("MAXCON_RETRAIN") != "1":
        return mio.load_checkpoint(path), json.loads(meta.read_text())
    t0 = time.perf_counter()
    ckpt = train(cfg)
    info = {"episodes": ckpt.episode, "train_seconds": time.perf_counter() - t0}
    mio.save_checkpoint(ckpt, path)
    meta.write_text(json.dumps(info))
    return ckpt, info


@pytest.fixture(scope="module")
def heldout(trained_agent):
    """Per instance: oracle, greedy agent, random rollout and refined agent results."""
    ckpt, _ = trained_agent
    rng = np.random.default_rng(606)
    rows = []
    for i in range(100):
        n_out = int(rng.integers(1, 7))
        ds = generate(GenSpec("line2d", 30, n_out / 30, seed=10_000 + i))
        oracle = optimal_search(ds)
        agent = evaluate_policy(ds, ckpt.params, ckpt.config.beta).result
        rnd = random_rollout(ds, 20_000 + i)
        refined = local_tree_refinement(ds, agent.consensus_indices)
        rows.append({"oracle": oracle, "agent": agent, "random": rnd, "refined": len(refined)})
    return rows


def test_criterion_06_learning_signal(trained_agent, heldout):
    _, info = trained_agent
    gap = np.median([r["oracle"].consensus - r["agent"].consensus for r in heldout])
    agent_rm = np.median([r["agent"].removals for r in heldout])
    rand_rm = np.median([r["random"].removals for r in heldout])
    ref_gap = np.median([r["oracle"].consensus - r["refined"] for r in heldout])
    budget_ok = info["episodes"] <= 20_000 and info["train_seconds"] <= 7200
    ok = gap <= 1 and agent_rm < rand_rm and ref_gap <= gap and budget_ok
    assert record(6, ok, f"median gap {gap:g}, removals agent {agent_rm:g} < random {rand_rm:g}, "
                         f"refined gap {ref_gap:g}; {info['episodes']} episodes in "
                         f"{info['train_seconds'] / 60:.1f} min")


# -- 7 -------------------------------------------------------------------------

def test_criterion_07_refinement():
    rng = np.random.default_rng(707)
    violations = 0
    for i in range(300):
        kind = "line2d" if i % 2 == 0 else "plane3d"
        n = int(rng.integers(8, 21))
        ds = generate(GenSpec(kind, n, float(rng.uniform(0.1, 0.4)),
                              seed=int(rng.integers(2**32))))
        start = random_rollout(ds, int(rng.integers(2**32))).consensus_indices
        drop = int(rng.integers(0, min(3, len(start) - 1) + 1))
        start = np.sort(rng.choice(start, size=len(start) - drop, replace=False))
        out = local_tree_refinement(ds, start)
        bad = not set(start.tolist()) <= set(out.tolist())
        bad |= min_max_residual(ds, out) > ds.epsilon
        bad |= any(min_max_residual(ds, list(out) + [j]) <= ds.epsilon
                   for j in range(ds.N) if j not in set(out.tolist()))
        bad |= local_tree_refinement(ds, out).tolist() != out.tolist()
        violations += bad
    assert record(7, violations == 0, f"{violations} violations over 300 pairs")


# -- 8 -------------------------------------------------------------------------

def test_criterion_08_ransac():
    # outlier-free planted model with exact inliers: every non-degenerate sample fits all
    full = 0
    for seed in range(100):
        ds = generate(GenSpec("line2d", 100, 0.0, seed=seed, inlier_noise=0.0))
        full += ransac(ds, RansacConfig(iterations=50, seed=seed)).consensus == 100
    noisy = 0
    for seed in range(100):
        ds = generate(GenSpec("line2d", 100, 0.0, seed=seed))
        noisy += ransac(ds, RansacConfig(iterations=50, seed=seed)).consensus == 100
    rng = np.random.default_rng(808)
    wins = 0
    for i in range(200):
        ds = generate(GenSpec("line2d", 100, float(rng.uniform(0.1, 0.5)), seed=50_000 + i))
        cfg = RansacConfig(iterations=100, seed=i)
        wins += lo_ransac(ds, cfg).consensus >= ransac(ds, cfg).consensus
    ok = full == 100 and wins >= 190
    assert record(8, ok, f"full consensus {full}/100 (with +-0.1 inlier noise: {noisy}/100), "
                         f"LO >= RANSAC on {wins}/200")


# -- 9 -------------------------------------------------------------------------

def test_criterion_09_rollout_cost(trained_agent, heldout):
    ckpt, _ = trained_agent
    over = sum(r["agent"].nodes_expanded > r["oracle"].nodes_expanded for r in heldout)
    ratio = np.median([r["oracle"].nodes_expanded / r["agent"].nodes_expanded for r in heldout])
    ds = generate(GenSpec("line2d", 100, 0.2, seed=90_000))
    evaluate_policy(ds, ckpt.params)                      # warm-up
    t0 = time.perf_counter()
    res = evaluate_policy(ds, ckpt.params).result
    wall = time.perf_counter() - t0
    ok = over == 0 and wall < 1.0
    assert record(9, ok, f"agent nodes > oracle nodes on {over}/100 instances "
                         f"(median ratio {ratio:.1f}x), N=100 rollout {wall:.3f} s "
                         f"with {res.removals} removals")


# -- 10 ------------------------------------------------------------------------

def _pipeline(root):
    def run(*argv):
        assert cli_main([str(a) for a in argv]) == 0

    run("gen", "--n", 20, "--rate", 0.2, "--count", 3, "--seed", 4, "--out", root / "data")
    run("train", "--n", 20, "--episodes", 15, "--warmup", 20, "--batch-size", 8, "--seed", 4,
        "--out", root / "agent.bin", "--log", root / "train.jsonl")
    run("solve", root / "data" / "instance_0000.json", "--method", "rl+refine",
        "--checkpoint", root / "agent.bin", "--out", root / "solve_rl.json")
    run("solve", root / "data" / "instance_0001.json", "--method", "loransac", "--seed", 4,
        "--out", root / "solve_lo.json")
    run("compare", "--data", root / "data", "--checkpoint", root / "agent.bin", "--reps", 3,
        "--iters", 100, "--seed", 4, "--out", root / "cmp")
    # wall-clock outputs and the zipped resume state (entry timestamps) are excluded
    skip = {"timings.csv", "wall_time.svg", "agent.bin.state.npz"}
    return sorted(p.relative_to(root) for p in root.rglob("*")
                  if p.is_file() and p.name not in skip)


def test_criterion_10_determinism(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    files_a, files_b = _pipeline(a), _pipeline(b)
    capsys.readouterr()
    differ = [str(f) for f in files_a if (a / f).read_bytes() != (b / f).read_bytes()]
    ok = files_a == files_b and not differ and any(f.suffix == ".csv" for f in files_a)
    assert record(10, ok, f"{len(files_a)} files compared, {len(differ)} differ")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q", "-p", "no:cacheprovider"])
    print()
    for k in sorted(REPORT):
        print(REPORT[k])
    sys.exit(code)
