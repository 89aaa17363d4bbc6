"""Smallest proper period and bit rate for a cluster around a central mass.

With ``--scan`` the five-machine cluster of fixed size L is solved over
a grid of periods around the bound, printing the closed-form and the
numeric ring phase with the audit verdict for each.
"""
import argparse

import numpy as np

from logsync.arrangements import (audit_cluster_phase, cluster_N_for_length, max_bit_rate, min_proper_period,
                                  solve_five_complete)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--mass", type=float, default=5.98e24)
    ap.add_argument("--radius", type=float, default=3.0e7)
    ap.add_argument("--L", type=float, default=6.0e6)
    ap.add_argument("--eta", type=float, default=0.05)
    ap.add_argument("--scan", action="store_true")
    args = ap.parse_args()

    p = min_proper_period(args.mass, args.radius, args.L)
    print(f"closed-form bound p_tau > {p:.4e} s, bit rate < {max_bit_rate(p):.4e} bit/s")
    if not args.scan:
        return
    print(f"{'p_tau/bound':>11} {'N':>12} {'phi closed':>11} {'ok':>3} {'phi numeric':>12} {'ok':>3}")
    for factor in np.geomspace(0.6, 1.6, 11):
        pt = p * factor
        N = cluster_N_for_length(args.L, pt)
        rep = solve_five_complete(args.mass, args.radius, N, pt, enforce_precondition=False)
        cf, num = rep.extras["phi_closed_form"], rep.extras["phi_numeric"]
        print(f"{factor:11.3f} {N:12d} {cf:11.4f} {'y' if audit_cluster_phase(cf, args.eta) else 'n':>3} "
              f"{num:12.4f} {'y' if audit_cluster_phase(num, args.eta) else 'n':>3}")


if __name__ == "__main__":
    main()
