"""How the curvature mismatch of the complete five-machine cluster spreads.

First holds nine channels at null phase and reports the phase left on
the tenth, then minimizes the largest phase over growing channel sets.
"""
import argparse
import math

from logsync.arrangements import complete_five_arrangement, distribute_mismatch, null_nine_phase
from logsync.geometry import C


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--p-tau", type=float, default=1e-6)
    ap.add_argument("--mu-tilde", type=float, default=1e-4)
    args = ap.parse_args()

    mu = args.mu_tilde / (args.N * args.p_tau * C) ** 2
    scale = args.N * args.mu_tilde
    tenth, _ = null_nine_phase(mu, args.N, args.p_tau)
    print(f"nine channels at null phase: tenth carries {tenth:.6e} cycles = {tenth / scale:.5f} N mu_tilde")

    arr = complete_five_arrangement(mu, args.N, args.p_tau)
    res = distribute_mismatch(arr)
    print(f"{'|S|':>4} {'max |phase|':>13} {'/ (N mu_tilde)':>15}")
    for S, v in zip(res.sets, res.max_phase):
        rel = f"{v / scale:15.5f}" if math.isfinite(v) else f"{'infeasible':>15}"
        print(f"{len(S):4d} {v:13.5e} {rel}")


if __name__ == "__main__":
    main()
