"""Acceptance criteria, one test each.

Every test records a ``PASS``/``FAIL`` line; the lines are printed as they
happen and again in the pytest terminal summary. Run directly with
``python3 tests/test_acceptance.py`` for the lines alone.
"""
import time
from collections import defaultdict

import numpy as np
import pytest

from tsic.agent import select_scheduling_action
from tsic.cache import LfuMemory, ensure_capacity
from tsic.harness import metrics_csv, preset_fig3, preset_fig4, run_experiment
from tsic.model import Image
from tsic.qnet import double_dqn_target

from conftest import make_node
from gradcheck import max_relative_error, random_case
from oracles import (
    lfu_eviction_oracle,
    masked_argmax_oracle,
    random_cache_instance,
    strict_greater_oracle,
)

RESULTS = []


def report(num, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {detail}"
    RESULTS.append(line)
    print(line, flush=True)
    assert ok, line


_cache = {}


def fig4_rows():
    """The fig4 preset at |N|=5: all policies, 5 seeds, 3 training episodes."""
    if "fig4_n5" not in _cache:
        cfg = preset_fig4()
        cfg.sweep_values = [5]
        t = time.perf_counter()
        rows = run_experiment(cfg)
        _cache["fig4_n5"] = (cfg, rows, time.perf_counter() - t)
    return _cache["fig4_n5"]


def by_seed(rows, field):
    out = defaultdict(dict)
    for r in rows:
        out[r.seed][r.policy] = getattr(r, field)
    return out


def test_c1_masked_action_selection():
    rng = np.random.default_rng(2024)
    t = time.perf_counter()
    bad = 0
    for _ in range(10_000):
        n = int(rng.integers(1, 10))
        q = rng.integers(-4, 5, n) / 4.0  # coarse values force ties
        mask = (rng.random(n) < 0.5).astype(np.int8)
        mask[rng.integers(n)] = 1
        c = select_scheduling_action(q, mask, 0.0, rng)
        want = masked_argmax_oracle(q, mask)
        if c.node != want or c.unscheduled.tolist() != strict_greater_oracle(q, want):
            bad += 1
    dt = time.perf_counter() - t
    report(1, bad == 0 and dt < 10, f"{10_000 - bad}/10000 exact matches in {dt:.2f}s (limit 10s)")


def test_c2_lfu_oracle():
    rng = np.random.default_rng(77)
    t = time.perf_counter()
    bad = checked = 0
    while checked < 10_000:
        sizes, records, incoming, capacity = random_cache_instance(rng)
        images = [Image(i, s) for i, s in enumerate(sizes)]
        node = make_node(num_images=len(sizes), storage=capacity)
        lfu = LfuMemory(1)
        for m, f in records:
            node.add_image(images[m])
            lfu.record(0, m, f)
        checked += 1
        got = ensure_capacity(node, lfu, images[incoming], images)
        if got != lfu_eviction_oracle(records, sizes, sizes[incoming], capacity):
            bad += 1
    dt = time.perf_counter() - t
    report(2, bad == 0 and dt < 30, f"{checked - bad}/{checked} eviction sequences match in {dt:.2f}s (limit 30s)")


def test_c3_gradient_check():
    rng = np.random.default_rng(3)
    errs = [max_relative_error(*random_case(rng)) for _ in range(50)]
    worst = max(errs)
    report(3, worst < 1e-4, f"worst relative error {worst:.2e} over 50 networks (limit 1e-4)")


def test_c4_double_dqn_target():
    y = double_dqn_target(1.0, [0.2, 0.8], [0.5, 0.3], 0.5)
    y0 = double_dqn_target(1.0, [0.2, 0.8], [0.5, 0.3], 0.0)
    report(4, y == 1.15 and y0 == 1.0, f"y={y!r} (want 1.15), gamma=0 gives {y0!r} (want 1.0)")


def test_c5_end_to_end_ordering():
    _, rows, dt = fig4_rows()
    tot = by_seed(rows, "total_s")
    wins = sum(tot[s]["TSIC"] <= tot[s]["GRD"] and tot[s]["TSIC"] <= tot[s]["RR"] for s in tot)
    mean = {p: np.mean([tot[s][p] for s in tot]) for p in ("TSIC", "GRD", "RR")}
    margin = 1.0 - mean["TSIC"] / mean["RR"]
    ok = wins >= 4 and margin >= 0.10 and dt < 300
    report(5, ok, f"TSIC best on {wins}/5 seeds; mean total TSIC {mean['TSIC']:.3f}s GRD {mean['GRD']:.3f}s "
                  f"RR {mean['RR']:.3f}s, {100 * margin:.1f}% below RR (need 10%); {dt:.0f}s (limit 300s)")


def test_c6_waiting_delay_least():
    _, rows, _ = fig4_rows()
    wait = by_seed(rows, "wait_s")
    wins = sum(wait[s]["TSIC"] < min(wait[s]["GRD"], wait[s]["RR"]) for s in wait)
    report(6, wins >= 4, f"TSIC waiting strictly smallest on {wins}/5 seeds (need 4)")


def test_c7_cache_variant_ordering():
    cfg = preset_fig3()
    rows = run_experiment(cfg)
    acc = defaultdict(list)
    for r in rows:
        acc[r.cache].append(r.wait_s)
    mean = {c: float(np.mean(v)) for c, v in acc.items()}
    lfu = {c: v for c, v in mean.items() if c.startswith("LFU-")}
    best = min(lfu, key=lfu.get)
    ok = mean["ADP"] <= mean["ADP-FRQ"] and mean["ADP"] <= lfu[best]
    report(7, ok, f"mean waiting ADP {mean['ADP']:.3f}s, ADP-FRQ {mean['ADP-FRQ']:.3f}s, "
                  f"best fixed {best} {lfu[best]:.3f}s")


def test_c8_waiting_trend_over_nodes():
    cfg = preset_fig4()
    cfg.policies = ["TSIC"]
    rows = run_experiment(cfg)
    acc = defaultdict(list)
    for r in rows:
        acc[r.sweep_value].append(r.wait_s)
    nodes = sorted(acc)
    w = [float(np.mean(acc[n])) for n in nodes]
    ok = all(b <= a * 1.10 for a, b in zip(w, w[1:]))
    trend = ", ".join(f"N={n}: {v:.3f}s" for n, v in zip(nodes, w))
    report(8, ok, f"seed-averaged TSIC waiting {trend} (each step may rise at most 10%)")


def test_c9_determinism():
    cfg, rows, _ = fig4_rows()
    first = metrics_csv(rows)
    again = metrics_csv(run_experiment(cfg))
    f3 = preset_fig3()
    f3.sweep_values, f3.seeds = [4], [0]
    f3_same = metrics_csv(run_experiment(f3)) == metrics_csv(run_experiment(f3))
    report(9, first == again and f3_same,
           f"repeated fig4 (N=5) CSV identical: {first == again}; repeated fig3 slice identical: {f3_same}")


if __name__ == "__main__":
    import sys

    fails = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c") and callable(fn):
            try:
                fn()
            except AssertionError:
                fails += 1
    sys.exit(1 if fails else 0)
