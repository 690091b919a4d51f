"""Compare the compiled and pure-Python kernel backends.

Micro: mlp_forward + mlp_backward at batch 1 (acting) and 32 (training),
masked_argmax and argmin_priority. Macro: one TSIC training episode with
each backend swapped in.

    python3 benchmarks/bench_kernels.py [--repeat 2000] [--episode-tasks 200] [--episode-repeat 3]
"""
import argparse
import time
import timeit

import numpy as np

from tsic import kernels
from tsic.agent import TsicAgent, run_episode
from tsic.qnet import StateLayout, TrainConfig
from tsic.sim import SimConfig, Simulator, generate_workload

KERNELS = ("masked_argmax", "argmin_priority", "mlp_forward", "mlp_backward")


def micro(backend, repeat, rng):
    k = kernels.get_backend(backend)
    out = {}
    for batch in (1, 32):
        x = rng.random((batch, 99))
        w1, b1 = rng.normal(size=(99, 64)), rng.normal(size=64)
        w2, b2 = rng.normal(size=(64, 64)), rng.normal(size=64)
        h1, h2 = k.mlp_forward(x, w1, b1, w2, b2)
        dh = rng.normal(size=h2.shape)

        def step():
            a, b = k.mlp_forward(x, w1, b1, w2, b2)
            k.mlp_backward(x, a, b, w2, dh)

        out[f"mlp fwd+bwd b={batch}"] = min(timeit.repeat(step, number=repeat, repeat=3)) / repeat
    q = rng.random(8)
    mask = (rng.random(8) < 0.5).astype(np.int8)
    out["masked_argmax n=8"] = min(timeit.repeat(lambda: k.masked_argmax(q, mask), number=repeat, repeat=3)) / repeat
    f, z = rng.integers(0, 9, 6).astype(float), rng.uniform(253.07, 458.73, 6)
    out["argmin_priority n=6"] = min(timeit.repeat(lambda: k.argmin_priority(f, z, True), number=repeat, repeat=3)) / repeat
    return out


def episode(backend, num_tasks):
    impl = kernels.get_backend(backend)
    saved = {name: getattr(kernels, name) for name in KERNELS}
    for name in KERNELS:
        setattr(kernels, name, getattr(impl, name))
    try:
        cfg = SimConfig(num_tasks=num_tasks)
        agent = TsicAgent(StateLayout(cfg.num_nodes, cfg.num_images, cfg.num_services), TrainConfig())
        t = time.perf_counter()
        res = run_episode(Simulator(cfg), generate_workload(cfg, stream=1), agent)
        return time.perf_counter() - t, res.mean_delays()[3]
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--episode-tasks", type=int, default=200)
    ap.add_argument("--episode-repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = ["python"]
    try:
        kernels.get_backend("cython")
        backends.insert(0, "cython")
    except ImportError:
        print("compiled backend unavailable; timing the fallback only")
    rng = np.random.default_rng(0)
    res = {b: micro(b, args.repeat, rng) for b in backends}
    print(f"{'kernel':24s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name in res["python"]:
        cells = "".join(f"{res[b][name] * 1e6:10.2f}us" for b in backends)
        extra = f"{res['python'][name] / res['cython'][name]:11.2f}x" if len(backends) == 2 else ""
        print(f"{name:24s}{cells}{extra}")
    ep = {}
    for _ in range(args.episode_repeat):  # alternate backends, keep the best time
        for b in backends:
            t, delay = episode(b, args.episode_tasks)
            ep[b] = (min(t, ep.get(b, (t,))[0]), delay)
    cells = "".join(f"{ep[b][0]:11.2f}s" for b in backends)
    extra = f"{ep['python'][0] / ep['cython'][0]:11.2f}x" if len(backends) == 2 else ""
    print(f"{'TSIC training episode':24s}{cells}{extra}")
    if len(backends) == 2:
        diff = abs(ep["python"][1] - ep["cython"][1])
        print(f"episode mean total delay differs by {diff:.3g} s between backends")


if __name__ == "__main__":
    main()
