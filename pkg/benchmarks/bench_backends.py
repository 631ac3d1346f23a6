#!/usr/bin/env python3
"""Benchmark the numba kernel against the pure-numpy fallback.

The package's hot path is batched analysis-mode evaluation of small dense
networks: thousands of forward calls inside the sampled Lipschitz estimator,
the per-cell bound estimates, and the finite-difference batteries.  This
script times both backends across the regimes that matter (small batches of
many calls vs. one large batch) and checks that they agree numerically.

Run:  python3 benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from lipcap import LayerSpec, NetworkSpec, NormalizerCfg, validate_network
from lipcap import kernels


def build_net(depth: int, width: int, norm: str, seed: int) -> NetworkSpec:
    rng = np.random.default_rng(seed)
    layers = []
    for k in range(depth):
        if norm == "bn":
            cfg = NormalizerCfg.bn(rng.normal(size=width), rng.uniform(0.5, 2.0, width), eps=1e-3)
        elif norm == "ln":
            cfg = NormalizerCfg.ln(eps=1e-3)
        elif norm == "gn":
            groups = tuple(tuple(range(i, i + 2)) for i in range(0, width, 2))
            cfg = NormalizerCfg.gn(groups, eps=1e-3)
        else:
            cfg = NormalizerCfg.none()
        layers.append(LayerSpec(W=rng.normal(size=(width, width)) * 0.5))
        layers[-1].norm = cfg
    return validate_network(NetworkSpec(width, layers))


def time_fn(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if kernels.forward_batch_numba is None:
        print("numba backend unavailable; nothing to compare")
        return 1

    cases = [
        # (depth, width, norm, batch, calls)
        (4, 8, "none", 4, 500),
        (4, 8, "bn", 4, 500),
        (4, 8, "ln", 4, 500),
        (6, 32, "bn", 128, 50),
        (4, 8, "gn", 10000, 1),
        (6, 32, "none", 10000, 1),
    ]
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.backend()}  (override with LIPCAP_BACKEND)")
    print(f"{'net':<22} {'workload':<16} {'numpy':>10} {'numba':>10} {'speedup':>8}  max|diff|")
    for depth, width, norm, batch, calls in cases:
        spec = build_net(depth, width, norm, seed=1)
        X = rng.normal(size=(batch, width))
        kernels.forward_batch_numba(spec, X)  # compile outside the timing

        def run_numpy():
            for _ in range(calls):
                kernels.forward_batch_numpy(spec, X)

        def run_numba():
            for _ in range(calls):
                kernels.forward_batch_numba(spec, X)

        t_np = time_fn(run_numpy, args.repeats)
        t_nb = time_fn(run_numba, args.repeats)
        diff = np.abs(
            kernels.forward_batch_numpy(spec, X) - kernels.forward_batch_numba(spec, X)
        ).max()
        label = f"d{depth} w{width} {norm}"
        workload = f"{calls}x batch {batch}"
        print(
            f"{label:<22} {workload:<16} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
            f"{t_np / t_nb:>7.1f}x  {diff:.2e}"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
