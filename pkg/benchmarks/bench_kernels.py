"""Time the numba and numpy kernels side by side on a synthetic graph.

    python benchmarks/bench_kernels.py --n 200000 --repeat 5
"""

import argparse
import time

import numpy as np

from agegraph import kernels
from agegraph.graph import DEFAULT_SCHEME, split_ground_truth
from agegraph.labeling import compute_quotas
from agegraph.propagation import init_state
from agegraph.synth import SynthConfig, generate, labeled_subset


def best_of(fn, repeat):
    fn()  # warm-up, also triggers JIT compilation
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000)
    ap.add_argument("--mean-degree", type=float, default=6.0)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    sg = generate(SynthConfig(n=args.n, mean_degree=args.mean_degree, rng_seed=args.seed))
    g = sg.graph
    labels = np.full(g.n, -1)
    picked = labeled_subset(sg, 0.2, args.seed)
    labels[picked] = DEFAULT_SCHEME.categorize(sg.ages[picked])
    p = split_ground_truth(labels, 0.75, args.seed, 4)
    state = init_state(g, p)
    weights = np.ones_like(g.weights)
    out = np.empty_like(state.current)
    inf_out = np.empty_like(state.informed)

    table = np.random.default_rng(args.seed).dirichlet(np.ones(4), size=g.n)
    order = np.argsort(-table.ravel(), kind="stable")
    quotas = compute_quotas([0.25] * 4, g.n).counts

    cases = {
        "propagate_step": lambda impl: lambda: impl(
            g.offsets, g.neighbors, weights, state.current, state.initial, state.informed,
            True, 0.5, out, inf_out),
        "multi_source_bfs": lambda impl: lambda: impl(g.offsets, g.neighbors, p.is_seed),
        "pps_scan": lambda impl: lambda: impl(order // 4, order % 4, quotas, g.n),
    }
    flavours = ["numpy"] + (["numba"] if kernels.HAVE_NUMBA else [])
    print(f"graph: {g.n} nodes, {g.edge_count} edges; best of {args.repeat}")
    print(f"{'kernel':<18}" + "".join(f"{f:>12}" for f in flavours) + f"{'speedup':>10}")
    for name, make in cases.items():
        row = {f: best_of(make(getattr(kernels, f"{name}_{f}")), args.repeat) for f in flavours}
        speed = row["numpy"] / row["numba"] if "numba" in row else float("nan")
        print(f"{name:<18}" + "".join(f"{row[f] * 1e3:>10.1f}ms" for f in flavours)
              + f"{speed:>9.1f}x")


if __name__ == "__main__":
    main()
