"""Independent high-precision oracles.

These evaluate the full square-root integrand with mpmath and solve the
placements with mpmath root finding, sharing no code with the package.
Values frozen into the tests were produced by running this module.
"""

import mpmath as mp

mp.mp.dps = 40


def tof(mu, a, b):
    """c * time of flight along the straight segment a -> b (units with c = 1)."""
    a = [mp.mpf(v) for v in a]
    d = [mp.mpf(b[i]) - a[i] for i in range(3)]

    def f(s):
        x, y, z = (a[i] + s * d[i] for i in range(3))
        dx, dy, dz = d
        space = ((1 + mu * (y * y + z * z) / 3) * dx * dx + (1 + mu * (x * x - 2 * z * z) / 3) * dy * dy
                 + (1 + mu * (x * x - 2 * y * y) / 3) * dz * dz
                 - (2 * mu / 3) * (x * z * dx * dz + x * y * dx * dy - 2 * y * z * dy * dz))
        lapse2 = 1 + mu * (y * y + z * z - 2 * x * x)
        return mp.sqrt(space / lapse2)

    return mp.quad(f, [0, 1])


def cluster(mu_tilde, N=1):
    """Cluster solved in units N p_tau c = 1; returns (x_B1, y0, phi, p_t) with p_tau = 1/N."""
    mu = mp.mpf(mu_tilde)
    p_tau = mp.mpf(1) / N
    x1 = mp.mpf(1)
    for _ in range(40):
        p_t = p_tau / mp.sqrt(1 - 2 * mu * x1 ** 2)
        x_new = mp.findroot(lambda u: tof(mu, (-u, 0, 0), (u, 0, 0)) - 2 * N * p_t, x1)
        if abs(x_new - x1) < mp.mpf(10) ** (-35):
            x1 = x_new
            break
        x1 = x_new
    p_t = p_tau / mp.sqrt(1 - 2 * mu * x1 ** 2)
    y0 = mp.findroot(lambda v: tof(mu, (x1, 0, 0), (0, v, 0)) - 2 * N * p_t, mp.sqrt(3))
    t = tof(mu, (0, -mp.sqrt(3) / 2 * y0, y0 / 2), (0, mp.sqrt(3) / 2 * y0, y0 / 2))
    return x1, y0, t / p_t - 3 * N, p_t


if __name__ == "__main__":
    for m in ("1e-4", "5e-5", "2.5e-5", "1e-6"):
        x1, y0, ph, pt = cluster(m)
        m = mp.mpf(m)
        print(m, mp.nstr((x1 / pt - 1) / m, 15), mp.nstr((y0 / (mp.sqrt(3) * pt) - 1) / m, 15),
              mp.nstr(ph / m, 15))
    print("tof", mp.nstr(tof(mp.mpf("1e-3"), (0.1, 0.2, -0.3), (0.5, -0.4, 0.2)), 30))
