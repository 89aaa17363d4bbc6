"""Signal-propagation hypotheses: flat and weak-field Fermi-normal metrics.

Positions are static chart coordinates in meters with x the radial axis.
Null curves are integrated along straight coordinate segments, which is
exact in the flat case and correct to first order in the curvature
parameter ``mu`` otherwise.

Time of flight is carried as ``|b - a| / c * (1 + excess)`` with the
excess integrated directly, so curvature corrections far below double
precision relative to the flat delay are still resolved.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import integrate

from .errors import CurvatureTooStrongError, NumericalError, WeakFieldDomainError

C = 299_792_458.0  # m/s
G = 6.674e-11  # m^3 kg^-1 s^-2

#: mu * |p|^2 must stay below this for the first-order metric to be trusted.
WEAK_FIELD_GUARD = 1e-3

DEFAULT_RTOL = 1e-12


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ValueError(f"non-finite position {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "Position":
        x, y, z = (float(v) for v in arr)
        return cls(x, y, z)


PointLike = Union[Position, Sequence[float], np.ndarray]


def _vec(p: PointLike) -> np.ndarray:
    if isinstance(p, Position):
        return p.as_array()
    arr = np.asarray(p, dtype=float)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("non-finite position")
    return arr


@dataclass(frozen=True)
class Metric:
    """Static metric hypothesis.

    ``kind`` is ``"flat"`` or ``"fermi"``; flat is evaluated through the
    same code path with ``mu = 0`` so the two agree bit for bit.
    """

    kind: str = "flat"
    mu: float = 0.0
    c: float = C

    def __post_init__(self):
        if self.kind not in ("flat", "fermi"):
            raise ValueError(f"unknown metric kind {self.kind!r}")
        if self.kind == "flat" and self.mu != 0.0:
            raise ValueError("flat metric must have mu = 0")
        if not (self.mu >= 0.0 and math.isfinite(self.mu)):
            raise ValueError(f"mu must be finite and >= 0, got {self.mu}")

    @classmethod
    def flat(cls) -> "Metric":
        return cls("flat", 0.0)

    @classmethod
    def fermi(cls, mu: float) -> "Metric":
        return cls("fermi", float(mu))

    @classmethod
    def from_mass(cls, mass: float, radius: float) -> "Metric":
        """Tidal metric at Schwarzschild radius ``radius`` from ``mass``."""
        return cls.fermi(mu_from_mass(mass, radius))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu": self.mu, "c": self.c}

    @classmethod
    def from_dict(cls, d: dict) -> "Metric":
        return cls(d.get("kind", "flat"), float(d.get("mu", 0.0)), float(d.get("c", C)))


def mu_from_mass(mass: float, radius: float) -> float:
    return G * mass / (C**2 * radius**3)


def check_weak_field(metric: Metric, p: PointLike) -> None:
    v = _vec(p)
    if metric.mu * float(v @ v) >= WEAK_FIELD_GUARD:
        raise WeakFieldDomainError(
            f"mu*|p|^2 = {metric.mu * float(v @ v):.3g} >= {WEAK_FIELD_GUARD} at {v}"
        )


def lapse_squared(metric: Metric, p: PointLike) -> float:
    """-g_tt / c^2 at ``p``."""
    x, y, z = _vec(p)
    return 1.0 + metric.mu * (y * y + z * z - 2.0 * x * x)


def proper_rate(metric: Metric, p: PointLike) -> float:
    """d(tau)/dt for a clock at rest at ``p``."""
    check_weak_field(metric, p)
    return math.sqrt(lapse_squared(metric, p))


def metric_components(metric: Metric, p: PointLike) -> np.ndarray:
    """Symmetric g_ab in chart order (t, x, y, z).

    Off-diagonal entries are half the coefficient of the corresponding
    mixed term in the line element.
    """
    check_weak_field(metric, p)
    x, y, z = _vec(p)
    mu, c = metric.mu, metric.c
    g = np.zeros((4, 4))
    g[0, 0] = -(c**2) * (1.0 + mu * (y * y + z * z - 2.0 * x * x))
    g[1, 1] = 1.0 + mu * (y * y + z * z) / 3.0
    g[2, 2] = 1.0 + mu * (x * x - 2.0 * z * z) / 3.0
    g[3, 3] = 1.0 + mu * (x * x - 2.0 * y * y) / 3.0
    g[1, 3] = g[3, 1] = -mu * x * z / 3.0
    g[1, 2] = g[2, 1] = -mu * x * y / 3.0
    g[2, 3] = g[3, 2] = 2.0 * mu * y * z / 3.0
    return g


def _excess_integrand(s: float, a: np.ndarray, d: np.ndarray, u: np.ndarray, mu: float) -> float:
    x, y, z = a + s * d
    ux, uy, uz = u
    q_space = ((y * y + z * z) * ux * ux + (x * x - 2 * z * z) * uy * uy
               + (x * x - 2 * y * y) * uz * uz) / 3.0 \
        - (2.0 / 3.0) * (x * z * ux * uz + x * y * ux * uy - 2 * y * z * uy * uz)
    q_time = y * y + z * z - 2 * x * x
    h = 1.0 + mu * q_space
    f = 1.0 + mu * q_time
    # sqrt(h/f) - 1 without cancellation
    return mu * (q_space - q_time) / (f * (1.0 + math.sqrt(h / f)))


def tof_excess(metric: Metric, a: PointLike, b: PointLike, rtol: float = DEFAULT_RTOL) -> float:
    """Relative excess of the null time of flight over the flat value."""
    a, b = _vec(a), _vec(b)
    d = b - a
    length = math.sqrt(float(d @ d))
    if length == 0.0:
        raise ValueError("time of flight needs distinct endpoints")
    check_weak_field(metric, a)
    check_weak_field(metric, b)
    if metric.mu == 0.0:
        return 0.0
    u = d / length
    # integrand magnitude is at most ~ 3 mu |p|^2; first-order cancellation
    # along the segment can leave a result far smaller than that
    floor = 1e-15 * metric.mu * 3.0 * max(float(a @ a), float(b @ b))
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        val, err = integrate.quad(
            _excess_integrand, 0.0, 1.0, args=(a, d, u, metric.mu),
            epsabs=floor, epsrel=rtol, limit=200,
        )
    # QUADPACK flags roundoff when a smooth integrand is already at machine
    # precision; accept that case only if the error estimate backs it up
    if not math.isfinite(val) or err > max(10 * rtol * abs(val), 10 * floor, 1e-300):
        detail = f": {caught[0].message}" if caught else ""
        raise NumericalError(f"quadrature error estimate {err:.3g} for value {val:.3g}{detail}")
    return val


def null_tof(metric: Metric, a: PointLike, b: PointLike, rtol: float = DEFAULT_RTOL) -> float:
    """Coordinate-time delay of a null curve along the segment a -> b (s)."""
    a, b = _vec(a), _vec(b)
    d = b - a
    length = math.sqrt(float(d @ d))
    return length / metric.c * (1.0 + tof_excess(metric, a, b, rtol))


def radar_distance(metric: Metric, a: PointLike, b: PointLike, rtol: float = DEFAULT_RTOL) -> float:
    """Half the round-trip proper time at ``a``, times c (m)."""
    return metric.c * null_tof(metric, a, b, rtol) * proper_rate(metric, a)


# ----------------------------------------------------------------------------
# Five-machine cluster, first-order closed forms


@dataclass(frozen=True)
class ClusterGeometry:
    p_t: float
    x_B1: float
    y_A0: float
    t_AA: float
    phi: float
    mu: float
    N: int
    p_tau: float

    @property
    def mu_tilde(self) -> float:
        """Dimensionless curvature mu * (N p_tau c)^2."""
        return self.mu * (self.N * self.p_tau * C) ** 2

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("p_t", "x_B1", "y_A0", "t_AA", "phi", "mu", "N", "p_tau")}


def cluster_strength(mu: float, N: int, p_tau: float, c: float = C) -> float:
    """27 mu c^2 N^3 p_tau^2 / 4; the closed forms need this below 1."""
    return 27.0 * mu * c**2 * N**3 * p_tau**2 / 4.0


def _cluster_mu(mass, radius, mu):
    if mu is not None:
        return float(mu)
    if mass < 0 or radius <= 0:
        raise ValueError("mass must be >= 0 and radius > 0")
    return mu_from_mass(mass, radius)


def first_order_cluster_geometry(
    M_central: float, r: float, N: int, p_tau: float, *, mu: float | None = None
) -> ClusterGeometry:
    """Closed-form cluster placement and A-ring phase to first order in mu.

    ``mu`` overrides the value computed from ``M_central`` and ``r``.
    """
    if N <= 0 or p_tau <= 0:
        raise ValueError("N and p_tau must be positive")
    mu = _cluster_mu(M_central, r, mu)
    c = C
    if cluster_strength(mu, N, p_tau) >= 1.0:
        raise CurvatureTooStrongError(
            f"27 G M N^3 p_tau^2/(4 r^3) = {cluster_strength(mu, N, p_tau):.4g} >= 1"
        )
    p_t = (1.0 + mu * N**2 * p_tau**2 * c**2) * p_tau
    k_t = mu * N**2 * p_t**2 * c**2
    x_B1 = N * p_t * c * (1.0 - k_t / 3.0)
    y_A0 = math.sqrt(3.0) * N * p_t * c * (1.0 + k_t / 8.0)
    t_AA = 3.0 * N * p_t * (1.0 - 9.0 * k_t / 8.0)
    # G M / r^3 == mu c^2
    phi = -27.0 * mu * c**2 * N**3 * p_tau**2 / 8.0
    return ClusterGeometry(p_t, x_B1, y_A0, t_AA, phi, mu, int(N), float(p_tau))


def linearized_cluster_geometry(
    M_central: float, r: float, N: int, p_tau: float, *, mu: float | None = None
) -> ClusterGeometry:
    """First-order series obtained by expanding the straight-segment TOF integrals.

    Shares p_t and x_B1 with :func:`first_order_cluster_geometry`; the
    radius, A-to-A delay and phase coefficients are the ones the
    integrals actually produce (+1/6, -5/6 and -5/2 respectively).
    """
    if N <= 0 or p_tau <= 0:
        raise ValueError("N and p_tau must be positive")
    mu = _cluster_mu(M_central, r, mu)
    c = C
    k_tau = mu * N**2 * p_tau**2 * c**2
    if 5.0 * N * k_tau >= 1.0:
        raise CurvatureTooStrongError(f"|phi| = {2.5 * N * k_tau:.4g} reaches 1/2")
    p_t = (1.0 + k_tau) * p_tau
    k_t = mu * N**2 * p_t**2 * c**2
    x_B1 = N * p_t * c * (1.0 - k_t / 3.0)
    y_A0 = math.sqrt(3.0) * N * p_t * c * (1.0 + k_t / 6.0)
    t_AA = 3.0 * N * p_t * (1.0 - 5.0 * k_t / 6.0)
    phi = -2.5 * N * k_tau
    return ClusterGeometry(p_t, x_B1, y_A0, t_AA, phi, mu, int(N), float(p_tau))
