"""Distribution of the first cycle at which a steered pair breaks the phase bound.

Runs independent seeds concurrently and prints quantiles of the first
violation cycle, plus the share of seeds that never violated.
"""
import argparse
from concurrent.futures import ProcessPoolExecutor
from functools import partial

import numpy as np

from logsync.steering import AimingPoint, DriftModel, simulate_network_steering


def first_violation(seed, delta, sigma, eta, n_cycles):
    tr = simulate_network_steering(delta, DriftModel(sigma, sigma), AimingPoint(eta=eta),
                                   n_cycles=n_cycles, seed=seed)
    return tr.first_violation


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=1000)
    ap.add_argument("--delta", type=int, default=4)
    ap.add_argument("--sigma", type=float, default=0.05)
    ap.add_argument("--eta", type=float, default=0.3)
    ap.add_argument("--n-cycles", type=int, default=5000)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    job = partial(first_violation, delta=args.delta, sigma=args.sigma, eta=args.eta, n_cycles=args.n_cycles)
    with ProcessPoolExecutor(args.workers) as pool:
        firsts = list(pool.map(job, range(args.seeds), chunksize=16))
    hit = np.array([f for f in firsts if f is not None], float)
    print(f"seeds {args.seeds}, delta {args.delta}, sigma {args.sigma}, eta {args.eta}")
    print(f"never violated within {args.n_cycles} cycles: {args.seeds - len(hit)}")
    if len(hit):
        qs = np.quantile(hit, [0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0])
        print("first violation quantiles (0, 10, 25, 50, 75, 90, 100 %):", " ".join(f"{q:.0f}" for q in qs))
        print(f"mean {hit.mean():.1f}, std {hit.std():.1f}, distinct values {len(set(hit))}")


if __name__ == "__main__":
    main()
