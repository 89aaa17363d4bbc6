"""Numeric ring phase against the first-order closed form as mu_tilde halves.

Prints one row per step; the last column is the ratio of successive
residuals, which settles at 4 for a quadratic remainder and 2 for a
linear one.
"""
import argparse

from logsync.arrangements import cluster_phase_numeric
from logsync.geometry import C, first_order_cluster_geometry


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--p-tau", type=float, default=1e-6)
    ap.add_argument("--top", type=float, default=1e-4)
    ap.add_argument("--halvings", type=int, default=10)
    args = ap.parse_args()

    scale = args.N * args.p_tau * C
    prev = None
    print(f"{'mu_tilde':>12} {'numeric':>14} {'closed':>14} {'coeff':>10} {'ratio':>7}")
    for k in range(args.halvings + 1):
        mt = args.top / 2 ** k
        mu = mt / scale ** 2
        num = cluster_phase_numeric(mu, args.N, args.p_tau).phi
        cf = first_order_cluster_geometry(0.0, 1.0, args.N, args.p_tau, mu=mu).phi
        res = abs(num - cf)
        ratio = f"{prev / res:7.3f}" if prev else " " * 7
        print(f"{mt:12.4e} {num:14.6e} {cf:14.6e} {num / (args.N * mt):10.5f} {ratio}")
        prev = res


if __name__ == "__main__":
    main()
