#!/usr/bin/env python3
"""Benchmark the compiled kernels against the pure numpy fallback.

Runs the same seeded chains on both backends and reports steps/second.
The compiled backend matters most for long low-dimensional chains, where
per-step numpy dispatch overhead dominates the arithmetic.

Usage: python benchmarks/bench_backends.py [--steps N]
"""

import argparse
import time

import atmc
from atmc import backend


def chain_config(method, d, steps, h):
    return atmc.SamplerConfig(
        method=method,
        kinetics=atmc.KineticsSpec.gaussian(1.0),
        schedule=atmc.StepSizeSchedule.constant(h),
        momentum_noise=1.0,
        total_steps=steps,
        burn_in_steps=0,
        seed=1234,
    )


def time_chain(which, method, d, steps):
    backend.select(which)
    target = atmc.GaussianTarget.standard(d)
    config = chain_config(method, d, steps, 0.01)
    t0 = time.perf_counter()
    result = atmc.run_chain(config, target, atmc.NoiseModel.gaussian(1.0))
    elapsed = time.perf_counter() - t0
    assert not result.aborted
    return elapsed


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--steps", type=int, default=200_000)
    args = parser.parse_args()

    if not backend.COMPILED_AVAILABLE:
        print("compiled backend unavailable; nothing to compare")
        return

    cases = [
        (atmc.Method.ATMC, 1),
        (atmc.Method.ATMC, 16),
        (atmc.Method.ATMC, 256),
        (atmc.Method.SGLD, 16),
    ]
    print(f"{'case':<16}{'python steps/s':>16}{'compiled steps/s':>18}{'speedup':>9}")
    for method, d in cases:
        steps = args.steps if d <= 16 else max(args.steps // 8, 1)
        t_py = time_chain("py", method, d, steps)
        t_c = time_chain("c", method, d, steps)
        print(f"{method.value + f' d={d}':<16}{steps / t_py:>16.0f}{steps / t_c:>18.0f}"
              f"{t_py / t_c:>9.1f}")
    backend.select("auto")


if __name__ == "__main__":
    main()
