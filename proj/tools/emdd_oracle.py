"""Independent fine-grid estimate of the expected maximum drawdown of mu*t + sigma*W_t.

Used once to pin the reference value in the acceptance test; not part of the build.
"""
import argparse

import numpy as np


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mu", type=float, default=0.0)
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--paths", type=int, default=100_000)
    ap.add_argument("--steps", type=int, default=10_000)
    ap.add_argument("--chunk", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    a = ap.parse_args()

    rng = np.random.default_rng(a.seed)
    dt = a.horizon / a.steps
    dd = np.empty(a.paths)
    done = 0
    while done < a.paths:
        m = min(a.chunk, a.paths - done)
        incr = a.mu * dt + a.sigma * np.sqrt(dt) * rng.standard_normal((m, a.steps))
        x = np.cumsum(incr, axis=1)
        x = np.concatenate([np.zeros((m, 1)), x], axis=1)  # path starts at 0
        peak = np.maximum.accumulate(x, axis=1)
        dd[done:done + m] = (peak - x).max(axis=1)
        done += m
    mean = dd.mean()
    se = dd.std(ddof=1) / np.sqrt(a.paths)
    print(f"paths={a.paths} steps={a.steps} emdd={mean:.6f} se={se:.6f} "
          f"continuous_zero_drift={np.sqrt(np.pi / 2) * a.sigma * np.sqrt(a.horizon):.6f}")


if __name__ == "__main__":
    main()
