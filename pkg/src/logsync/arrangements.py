"""Placement solvers for machines whose channels have prescribed echo counts.

All machines are static in the chart and, unless stated otherwise, share
the coordinate period ``p_t`` fixed by the anchored machine's proper
period. A two-way channel between X and Y then has echo count
``2 * tof(X, Y) / p_t``, the same seen from either end.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .errors import (ConfigError, CurvatureTooStrongError, GeometryError, SolverError,
                     WeakFieldDomainError)
from .geometry import (C, G, Metric, Position, _vec, check_weak_field, cluster_strength,
                       first_order_cluster_geometry, lapse_squared, mu_from_mass, null_tof,
                       proper_rate, tof_excess)
from .worldline import Clocking, Lacing, Worldline, build_lacing

__all__ = [
    "Arrangement", "SolverReport", "solve_two_machine", "build_lacing", "solve_tetrahedron",
    "extend_fifth", "solve_five_complete", "cluster_phase_numeric", "min_proper_period",
    "max_bit_rate", "freeze_test", "audit_report", "distribute_mismatch", "Lacing",
]

SOLVER_TOL = 1e-12  # cycles


def _wrap(dev: float) -> float:
    """Deviation folded into (-1/2, 1/2]."""
    return dev - math.ceil(dev - 0.5)


@dataclass(frozen=True)
class Arrangement:
    """Static machines, target two-way channels and one anchored proper period.

    ``target_channels`` holds ``(from, to, echo_count, phase)`` tuples; the
    echo count is two-way and the phase is that of the one-way reception.
    """

    machines: tuple[tuple[str, Position], ...]
    anchor: tuple[str, float]
    target_channels: tuple[tuple[str, str, float, float], ...] = ()
    metric: Metric = field(default_factory=Metric.flat)

    def __post_init__(self):
        names = [n for n, _ in self.machines]
        if len(set(names)) != len(names):
            raise ConfigError("machine names must be unique")
        if self.anchor[0] not in names:
            raise ConfigError(f"anchor {self.anchor[0]!r} is not a machine")
        if self.anchor[1] <= 0:
            raise ConfigError("anchored proper period must be positive")
        for a, b, *_ in self.target_channels:
            if a not in names or b not in names or a == b:
                raise ConfigError(f"bad channel {a}-{b}")
        for _, p in self.machines:
            check_weak_field(self.metric, p)

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.machines]

    def position(self, name: str) -> np.ndarray:
        return dict(self.machines)[name].as_array()

    @property
    def p_t(self) -> float:
        name, p_tau = self.anchor
        return p_tau / proper_rate(self.metric, self.position(name))

    def echo_count(self, a: str, b: str) -> float:
        return 2.0 * null_tof(self.metric, self.position(a), self.position(b)) / self.p_t

    def with_positions(self, positions: dict[str, np.ndarray]) -> "Arrangement":
        ms = tuple((n, Position.from_array(positions.get(n, p.as_array()))) for n, p in self.machines)
        return Arrangement(ms, self.anchor, self.target_channels, self.metric)

    def to_dict(self) -> dict:
        return {
            "machines": [{"name": n, "position": [p.x, p.y, p.z]} for n, p in self.machines],
            "anchor": {"machine": self.anchor[0], "p_tau": self.anchor[1]},
            "target_channels": [list(t) for t in self.target_channels],
            "metric": self.metric.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Arrangement":
        return cls(
            tuple((m["name"], Position(*m["position"])) for m in d["machines"]),
            (d["anchor"]["machine"], float(d["anchor"]["p_tau"])),
            tuple((a, b, float(e), float(ph)) for a, b, e, ph in d.get("target_channels", [])),
            Metric.from_dict(d.get("metric", {})),
        )


@dataclass
class SolverReport:
    positions: dict[str, Position]
    echo_counts: dict[str, float]
    phases: dict[str, float]
    residuals: dict[str, float]
    p_t: float
    metric: Metric = field(default_factory=Metric.flat)
    N: int = 1
    p_tau: float = 1.0
    extras: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max((abs(v) for v in self.residuals.values()), default=0.0)

    def to_dict(self) -> dict:
        return {
            "positions": {k: [p.x, p.y, p.z] for k, p in self.positions.items()},
            "echo_counts": dict(self.echo_counts),
            "phases": dict(self.phases),
            "residuals": dict(self.residuals),
            "p_t": self.p_t,
            "metric": self.metric.to_dict(),
            "N": self.N,
            "p_tau": self.p_tau,
            "extras": dict(self.extras),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def echo_table_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["channel", "echo_count", "phase", "residual"])
        for k in sorted(self.echo_counts):
            w.writerow([k, repr(self.echo_counts[k]), repr(self.phases.get(k, 0.0)),
                        repr(self.residuals.get(k, 0.0))])
        return buf.getvalue()


def _key(a: str, b: str) -> str:
    return f"{a}-{b}"


# ----------------------------------------------------------------------------
# Two machines in a flat 1+1 chart


def solve_two_machine(a_events, delta: int, c: float = C) -> tuple[np.ndarray, np.ndarray]:
    """B tick events with echo count ``delta`` at both ends, left and right of A.

    ``a_events`` is an ``(n, 2)`` array of A's tick events ``(t, x)`` or a
    :class:`Clocking`. B's tick ``m`` receives A's tick ``m`` and is
    echoed back to A's tick ``m + delta``. Returns ``(left, right)``
    arrays of B events.
    """
    if int(delta) != delta or delta <= 0:
        raise ConfigError(f"delta must be a positive integer, got {delta}")
    delta = int(delta)
    if isinstance(a_events, Clocking):
        t = np.asarray(a_events.times)
        x = np.asarray(a_events.worldline.position(t))
    else:
        ev = np.asarray(a_events, float)
        if ev.ndim != 2 or ev.shape[1] != 2:
            raise ConfigError("A events must be an (n, 2) array of (t, x)")
        t, x = ev[:, 0], ev[:, 1]
    if len(t) <= delta:
        raise ConfigError("need more than delta A ticks")
    if np.any(np.diff(t) <= 0) or np.any(np.abs(np.diff(x)) >= c * np.diff(t)):
        raise GeometryError("A events are not timelike ordered")
    t0, x0, t1, x1 = t[:-delta], x[:-delta], t[delta:], x[delta:]
    tb = 0.5 * (t0 + t1)
    right = np.column_stack([tb + (x1 - x0) / (2 * c), 0.5 * (x0 + x1 + c * (t1 - t0))])
    left = np.column_stack([tb - (x1 - x0) / (2 * c), 0.5 * (x0 + x1 - c * (t1 - t0))])
    return left, right


# ----------------------------------------------------------------------------
# Potatoid solvers


def _tof_cycles(metric: Metric, a, b, p_t: float) -> float:
    return null_tof(metric, a, b) / p_t


def _solve_point(metric: Metric, anchors: Sequence[np.ndarray], target: float, p_t: float,
                 guess: np.ndarray, basis: np.ndarray, scale: float) -> np.ndarray:
    """Point ``guess + basis @ s`` whose one-way delay to every anchor is ``target`` cycles."""

    def resid(s):
        p = guess + basis @ (s * scale)
        try:
            return np.array([_tof_cycles(metric, a, p, p_t) - target for a in anchors])
        except WeakFieldDomainError as exc:
            raise SolverError(f"solver left the weak-field domain: {exc}") from exc

    sol = optimize.root(resid, np.zeros(basis.shape[1]), method="hybr",
                        options={"xtol": 1e-15, "maxfev": 2000})
    r = resid(sol.x)
    if not np.all(np.isfinite(r)) or np.max(np.abs(r)) > max(SOLVER_TOL, 1e-15 * target):
        raise SolverError(f"potatoid intersection did not converge (residual {np.max(np.abs(r)):.3g})")
    return guess + basis @ (sol.x * scale)


def _solve_on_ray(metric: Metric, origin: np.ndarray, direction: np.ndarray, target: float,
                  p_t: float, scale: float) -> np.ndarray:
    u = direction / np.linalg.norm(direction)

    def g(s):
        return _tof_cycles(metric, origin, origin + s * u, p_t) - target

    lo, hi = 0.5 * scale, 1.5 * scale
    try:
        if g(lo) * g(hi) > 0:
            raise SolverError("radar distance not bracketed along the ray")
        s = optimize.brentq(g, lo, hi, xtol=1e-15 * scale, rtol=4 * np.finfo(float).eps, maxiter=200)
    except (ValueError, WeakFieldDomainError) as exc:
        raise SolverError(str(exc)) from exc
    return origin + s * u


def _pair_report(metric: Metric, pos: dict[str, np.ndarray], pairs, target: float, p_t: float):
    echoes, phases, resid = {}, {}, {}
    for a, b in pairs:
        one = _tof_cycles(metric, pos[a], pos[b], p_t)
        k = _key(a, b)
        echoes[k] = 2.0 * one
        phases[k] = _wrap(one - target)
        resid[k] = 2.0 * one - 2.0 * target
    return echoes, phases, resid


TETRA_NAMES = ("V1", "V2", "V3", "V4")


def solve_tetrahedron(metric: Metric, p_tau: float, N: int, *, origin=(0.0, 0.0, 0.0)) -> SolverReport:
    """Four machines with all six echo counts ``2N``.

    V1 is anchored at ``origin`` with proper period ``p_tau``; every
    machine ticks with the same coordinate period. V2 is found on V1's
    potatoid along +x, V3 on the ring of two potatoids in the z = const
    plane, V4 on the triple intersection with z above the base.
    """
    if N < 1 or p_tau <= 0:
        raise ConfigError("N must be a positive integer and p_tau positive")
    v1 = _vec(origin)
    p_t = p_tau / proper_rate(metric, v1)
    L = metric.c * N * p_t
    ex, ey, ez = np.eye(3)
    v2 = _solve_on_ray(metric, v1, ex, N, p_t, L)
    g3 = v1 + L * np.array([0.5, math.sqrt(3) / 2, 0.0])
    v3 = _solve_point(metric, [v1, v2], N, p_t, g3, np.column_stack([ex, ey]), L)
    g4 = (v1 + v2 + v3) / 3 + L * math.sqrt(2.0 / 3.0) * ez
    v4 = _solve_point(metric, [v1, v2, v3], N, p_t, g4, np.eye(3), L)
    pos = dict(zip(TETRA_NAMES, (v1, v2, v3, v4)))
    echoes, phases, resid = _pair_report(metric, pos, itertools.combinations(TETRA_NAMES, 2), N, p_t)
    return SolverReport({k: Position.from_array(v) for k, v in pos.items()}, echoes, phases, resid,
                        p_t, metric, int(N), float(p_tau), {"edge_flat": L})


def extend_fifth(report: SolverReport) -> SolverReport:
    """Add V5 on the triple intersection of V1..V3 opposite V4.

    The apex-to-apex channel is left free; its echo count and the
    deviation from the flat-space value ``4 * sqrt(2/3) * N`` are reported
    in ``extras``.
    """
    if set(TETRA_NAMES) - set(report.positions):
        raise SolverError("report does not hold a tetrahedron")
    metric, p_t, N = report.metric, report.p_t, report.N
    pos = {k: report.positions[k].as_array() for k in TETRA_NAMES}
    v1, v2, v3, v4 = (pos[k] for k in TETRA_NAMES)
    n = np.cross(v2 - v1, v3 - v1)
    n /= np.linalg.norm(n)
    guess = v4 - 2.0 * float((v4 - v1) @ n) * n
    L = metric.c * N * p_t
    pos["V5"] = _solve_point(metric, [v1, v2, v3], N, p_t, guess, np.eye(3), L)
    pairs = [p for p in itertools.combinations(TETRA_NAMES + ("V5",), 2) if p != ("V4", "V5")]
    echoes, phases, resid = _pair_report(metric, pos, pairs, N, p_t)
    apex = 2.0 * _tof_cycles(metric, v4, pos["V5"], p_t)
    flat = 4.0 * math.sqrt(2.0 / 3.0) * N
    extras = dict(report.extras, apex_echo=apex, apex_flat_expectation=flat,
                  apex_deviation=apex - flat)
    return SolverReport({k: Position.from_array(v) for k, v in pos.items()}, echoes, phases, resid,
                        p_t, metric, N, report.p_tau, extras)


# ----------------------------------------------------------------------------
# Five-machine complete cluster


B_NAMES = ("B1", "B2")
A_NAMES = ("A0", "A1", "A2")


def _ring(v: float) -> dict[str, np.ndarray]:
    return {f"A{i}": np.array([0.0, v * math.cos(2 * math.pi * i / 3), v * math.sin(2 * math.pi * i / 3)])
            for i in range(3)}


@dataclass(frozen=True)
class ClusterSolution:
    """Perturbation variables of the numerically solved cluster.

    ``x_B1 = N p_tau c (1 + alpha)``, ``y0 = sqrt(3) N p_tau c (1 + beta)``
    and ``p_t = p_tau (1 + gamma)``; ``phi`` is the A-ring phase.
    """

    alpha: float
    beta: float
    gamma: float
    phi: float
    e_bb: float
    e_ba: float
    e_aa: float
    iterations: int


def _gamma(mu: float, u: float) -> float:
    s = 2.0 * mu * u * u
    if s >= 1.0:
        raise CurvatureTooStrongError("anchor lies beyond the static region")
    # 1/sqrt(1 - s) - 1
    return s / (math.sqrt(1.0 - s) * (1.0 + math.sqrt(1.0 - s)))


def cluster_phase_numeric(mu: float, N: int, p_tau: float, c: float = C, *,
                          max_iter: int = 100) -> ClusterSolution:
    """Solve the cluster placement by fixed-point iteration on the TOF integrals.

    B1 carries proper period ``p_tau``; the B1-B2 and B-A one-way delays
    are held at ``2N`` cycles. The A-ring phase is returned as computed,
    not imposed.
    """
    if N < 1 or p_tau <= 0 or mu < 0:
        raise ConfigError("need N >= 1, p_tau > 0 and mu >= 0")
    metric = Metric("fermi", mu, c=c) if mu > 0 else Metric("flat", 0.0, c=c)
    scale = N * p_tau * c
    alpha = beta = 0.0
    for it in range(1, max_iter + 1):
        u = scale * (1.0 + alpha)
        v = math.sqrt(3.0) * scale * (1.0 + beta)
        b1, b2 = np.array([u, 0, 0.0]), np.array([-u, 0, 0.0])
        ring = _ring(v)
        gamma = _gamma(mu, u)
        e1 = tof_excess(metric, b2, b1)
        e2 = tof_excess(metric, b1, ring["A0"])
        a_new = (gamma - e1) / (1.0 + e1)
        rho = (gamma - e2) / (1.0 + e2)
        q = rho * (2.0 + rho)
        c0 = 2.0 * a_new + a_new * a_new - 4.0 * q
        b_new = (-c0 / 3.0) / (1.0 + math.sqrt(1.0 - c0 / 3.0))
        done = abs(a_new - alpha) <= 1e-14 * abs(a_new) and abs(b_new - beta) <= 1e-14 * abs(b_new)
        alpha, beta = a_new, b_new
        if done or mu == 0.0:
            break
    else:
        raise SolverError("cluster fixed point did not converge")
    u = scale * (1.0 + alpha)
    v = math.sqrt(3.0) * scale * (1.0 + beta)
    ring = _ring(v)
    gamma = _gamma(mu, u)
    e1 = tof_excess(metric, np.array([-u, 0, 0.0]), np.array([u, 0, 0.0]))
    e2 = tof_excess(metric, np.array([u, 0, 0.0]), ring["A0"])
    e3 = tof_excess(metric, ring["A1"], ring["A2"])
    phi = 3.0 * N * (beta + e3 + beta * e3 - gamma) / (1.0 + gamma)
    return ClusterSolution(alpha, beta, gamma, phi, e1, e2, e3, it)


def solve_five_complete(M_central: float, r: float, N: int, p_tau: float, *, mu: float | None = None,
                        enforce_precondition: bool = True) -> SolverReport:
    """Complete five-machine cluster: B1, B2 on the x axis, A0..A2 on the x = 0 circle.

    The seven channels touching a B machine are solved to null phase; the
    three A-ring channels carry the common phase reported both from the
    numeric pipeline (``phi_numeric``) and from the first-order closed
    form (``phi_closed_form``). The A proper period is reported from the
    closed-form convention and as actually computed.
    """
    if mu is None:
        if M_central < 0 or r <= 0:
            raise ConfigError("mass must be >= 0 and radius > 0")
        mu = mu_from_mass(M_central, r)
    strength = cluster_strength(mu, N, p_tau)
    if enforce_precondition and strength >= 1.0:
        raise CurvatureTooStrongError(f"27 G M N^3 p_tau^2/(4 r^3) = {strength:.4g} >= 1")
    sol = cluster_phase_numeric(mu, N, p_tau)
    metric = Metric.fermi(mu) if mu > 0 else Metric.flat()
    c = metric.c
    scale = N * p_tau * c
    u = scale * (1.0 + sol.alpha)
    v = math.sqrt(3.0) * scale * (1.0 + sol.beta)
    pos = {"B1": np.array([u, 0, 0.0]), "B2": np.array([-u, 0, 0.0]), **_ring(v)}
    p_t = p_tau * (1.0 + sol.gamma)

    echoes, phases, resid = {}, {}, {}

    def add(a, b, target, dev):
        k = _key(a, b)
        phases[k] = dev
        echoes[k] = 2.0 * (target + dev)
        resid[k] = dev

    # each one-way delay in cycles is T * (1 + s) (1 + e) / (1 + gamma); deviations kept exact
    e = tof_excess(metric, pos["B2"], pos["B1"])
    add("B1", "B2", 2 * N, 2 * N * (sol.alpha + e + sol.alpha * e - sol.gamma) / (1 + sol.gamma))
    s = ((2 * sol.alpha + sol.alpha ** 2) + 3 * (2 * sol.beta + sol.beta ** 2)) / 4.0
    sig = s / (1.0 + math.sqrt(1.0 + s))
    for bn in B_NAMES:
        for an in A_NAMES:
            e = tof_excess(metric, pos[bn], pos[an])
            add(bn, an, 2 * N, 2 * N * (sig + e + sig * e - sol.gamma) / (1 + sol.gamma))
    for a, b in itertools.combinations(A_NAMES, 2):
        e = tof_excess(metric, pos[a], pos[b])
        add(a, b, 3 * N, 3 * N * (sol.beta + e + sol.beta * e - sol.gamma) / (1 + sol.gamma))
        del resid[_key(a, b)]  # the ring phase is an outcome, not a solver residual

    phi_cf = -27.0 * mu * c ** 2 * N ** 3 * p_tau ** 2 / 8.0
    if strength < 1.0:
        phi_cf = first_order_cluster_geometry(0.0, 1.0, N, p_tau, mu=mu).phi
    k_tau = mu * scale ** 2
    extras = {
        "phi_closed_form": phi_cf,
        "phi_numeric": sol.phi,
        "precondition_strength": strength,
        "A_proper_period_closed_form": p_tau * (1.0 - k_tau),
        "A_proper_period_numeric": p_t * math.sqrt(lapse_squared(metric, pos["A0"])),
        "alpha": sol.alpha, "beta": sol.beta, "gamma": sol.gamma,
        "iterations": sol.iterations,
    }
    return SolverReport({k: Position.from_array(p) for k, p in pos.items()}, echoes, phases, resid,
                        p_t, metric, int(N), float(p_tau), extras)


def audit_cluster_phase(phi: float, eta: float) -> bool:
    """True iff an A-ring reception ``phi`` cycles off its target passes the writing-phase gate.

    The deviation is taken unwrapped: a delay that slipped by more than
    half a cycle has the wrong echo count even if its phase looks small.
    """
    if not 0.0 < eta < 1.0:
        raise ConfigError("eta must lie in (0, 1)")
    return abs(phi) < (1.0 - eta) / 2.0


def audit_report(report: SolverReport, eta: float) -> list[str]:
    """Channels whose achieved one-way delay misses its target by ``(1 - eta)/2`` or more."""
    return sorted(k for k, dev in report.phases.items() if not audit_cluster_phase(dev, eta))


# ----------------------------------------------------------------------------
# Bit-rate bound


def min_proper_period(M_central: float, r: float, L: float) -> float:
    """Smallest proper period keeping the A-ring phase below 1/2: 27 G M L^3 / (32 r^3 c^3)."""
    if M_central < 0 or r <= 0 or L <= 0:
        raise ConfigError("need M >= 0, r > 0 and L > 0")
    return 27.0 * G * M_central * L ** 3 / (32.0 * r ** 3 * C ** 3)


def max_bit_rate(p_tau: float, b: float = 1.0) -> float:
    if p_tau <= 0 or b <= 0:
        raise ConfigError("p_tau and b must be positive")
    return b / p_tau


def cluster_N_for_length(L: float, p_tau: float, c: float = C) -> int:
    """Echo-count scale N with B1-B2 radar distance ``L = 2 N p_tau c``."""
    return max(1, round(L / (2.0 * c * p_tau)))


# ----------------------------------------------------------------------------
# Frozen-ness


@dataclass
class FreezeResult:
    frozen: bool
    sensitivity: np.ndarray
    singular_values: np.ndarray
    ratio: float
    channels: list[tuple[str, str]]
    null_vector: np.ndarray | None

    def to_dict(self) -> dict:
        return {
            "frozen": self.frozen,
            "ratio": self.ratio,
            "singular_values": self.singular_values.tolist(),
            "channels": [list(c) for c in self.channels],
            "null_vector": None if self.null_vector is None else self.null_vector.tolist(),
            "sensitivity": self.sensitivity.tolist(),
        }


def echo_jacobian(arr: Arrangement, step: float = 1e-6) -> tuple[np.ndarray, list[tuple[str, str]]]:
    """d(echo count) / d(machine coordinates), one row per target channel.

    The flat part is analytic; the curvature part of each delay and the
    anchor's coordinate period are differenced with relative step ``step``.
    """
    chans = [(a, b) for a, b, *_ in arr.target_channels]
    names = arr.names
    col = {n: 3 * i for i, n in enumerate(names)}
    pos = {n: arr.position(n) for n in names}
    metric, p_t, c = arr.metric, arr.p_t, arr.metric.c
    scale = max(np.linalg.norm(pos[a] - pos[b]) for a, b in chans)
    h = step * scale
    J = np.zeros((len(chans), 3 * len(names)))
    for i, (a, b) in enumerate(chans):
        d = pos[b] - pos[a]
        Ln = np.linalg.norm(d)
        u = d / Ln
        e0 = tof_excess(metric, pos[a], pos[b])
        grad_b = u * (1.0 + e0)
        grad_a = -grad_b.copy()
        if metric.mu > 0:
            for k in range(3):
                dk = np.zeros(3)
                dk[k] = h
                grad_b[k] += Ln * (tof_excess(metric, pos[a], pos[b] + dk)
                                   - tof_excess(metric, pos[a], pos[b] - dk)) / (2 * h)
                grad_a[k] += Ln * (tof_excess(metric, pos[a] + dk, pos[b])
                                   - tof_excess(metric, pos[a] - dk, pos[b])) / (2 * h)
        J[i, col[a]:col[a] + 3] += 2.0 * grad_a / (c * p_t)
        J[i, col[b]:col[b] + 3] += 2.0 * grad_b / (c * p_t)
        # coordinate period depends on where the anchor sits
        an = arr.anchor[0]
        if metric.mu > 0:
            tof = Ln / c * (1.0 + e0)
            x = pos[an]
            dlog = -0.5 * metric.mu * np.array([-4 * x[0], 2 * x[1], 2 * x[2]]) / lapse_squared(metric, x)
            # p_t = p_tau / sqrt(f)  =>  d p_t / p_t = dlog
            J[i, col[an]:col[an] + 3] += -2.0 * tof / p_t * dlog
    return J, chans


def freeze_test(arr: Arrangement, *, threshold: float = 1e-6) -> FreezeResult:
    """Decide whether some echo count is tied to the others.

    Clocks run at the common coordinate period set by the anchor, so the
    admissible perturbations are machine displacements. The arrangement
    is frozen when the echo-count sensitivity matrix loses rank (smallest
    to largest singular value below ``threshold``, counting one singular
    value per channel) and the dependency ties two counts measured at a
    shared machine.
    """
    J, chans = echo_jacobian(arr)
    sv = np.linalg.svd(J, compute_uv=False)
    padded = np.zeros(len(chans))
    padded[:min(len(sv), len(chans))] = sv[:len(chans)]
    ratio = float(padded.min() / padded.max()) if padded.max() > 0 else 0.0
    null = None
    frozen = False
    if ratio < threshold:
        u, s, _ = np.linalg.svd(J)
        null = u[:, -1]
        support = [chans[i] for i in np.flatnonzero(np.abs(null) > 1e-8)]
        touching = {}
        for a, b in support:
            for m in (a, b):
                touching[m] = touching.get(m, 0) + 1
        frozen = any(v >= 2 for v in touching.values())
    return FreezeResult(frozen, J, sv, ratio, chans, null)


def five_machine_arrangement(report: SolverReport, ten: bool, N: int | None = None) -> Arrangement:
    """Arrangement of an extended-tetrahedron report with 9 or 10 target channels."""
    N = report.N if N is None else N
    names = TETRA_NAMES + ("V5",)
    pairs = list(itertools.combinations(names, 2))
    if not ten:
        pairs.remove(("V4", "V5"))
    targets = tuple((a, b, float(report.echo_counts.get(_key(a, b), 2 * N)), 0.0) for a, b in pairs)
    return Arrangement(tuple((n, report.positions[n]) for n in names), ("V1", report.p_tau), targets,
                       report.metric)


def tetra_arrangement(report: SolverReport) -> Arrangement:
    pairs = itertools.combinations(TETRA_NAMES, 2)
    targets = tuple((a, b, float(2 * report.N), 0.0) for a, b in pairs)
    return Arrangement(tuple((n, report.positions[n]) for n in TETRA_NAMES), ("V1", report.p_tau),
                       targets, report.metric)


# ----------------------------------------------------------------------------
# Curvature mismatch on the complete five-machine graph


def complete_five_arrangement(mu: float, N: int, p_tau: float) -> Arrangement:
    """Complete five-graph at the flat cluster placement, evaluated in the curved chart.

    B1, B2 sit at ``(+-N p_tau c, 0, 0)`` and A0..A2 on the x = 0 circle
    of radius ``sqrt(3) N p_tau c``, which in flat space gives one-way
    delays of ``2N`` cycles on the seven channels touching a B machine
    and ``3N`` on the A ring. B1 is anchored.
    """
    metric = Metric.fermi(mu) if mu > 0 else Metric.flat()
    scale = N * p_tau * metric.c
    pos = {"B1": np.array([scale, 0, 0.0]), "B2": np.array([-scale, 0, 0.0]), **_ring(math.sqrt(3) * scale)}
    names = B_NAMES + A_NAMES
    targets = []
    for a, b in itertools.combinations(names, 2):
        ring = a in A_NAMES and b in A_NAMES
        targets.append((a, b, float(6 * N if ring else 4 * N), 0.0))
    return Arrangement(tuple((n, Position.from_array(pos[n])) for n in names), ("B1", p_tau),
                       tuple(targets), metric)


def channel_phases(arr: Arrangement, positions: dict[str, np.ndarray] | None = None) -> np.ndarray:
    """One-way delay deviations (cycles) from each target's half echo count."""
    a2 = arr if positions is None else arr.with_positions(positions)
    return np.array([a2.echo_count(a, b) / 2.0 - t / 2.0 for a, b, t, _ in arr.target_channels])


@dataclass
class MismatchResult:
    sets: list[list[int]]
    max_phase: list[float]
    displacements: list[np.ndarray]


def distribute_mismatch(arr: Arrangement, order: Sequence[int] | None = None,
                        fixed: Sequence[str] = ("B1",)) -> MismatchResult:
    """Minimize max |phase| over a growing set S_m of channels, the rest held at zero.

    The phases are linearized in the machine displacements around the
    given placement, which holds to first order in the curvature. Each
    stage is a linear program; since S_m grows, any optimum for S_m is
    feasible for S_(m+1) and the optimum cannot increase. Channels
    outside S_m are held at zero only where the linear system allows it;
    when the remaining equalities are infeasible the problem reports inf.
    """
    base = channel_phases(arr)
    J, chans = echo_jacobian(arr)
    J = J / 2.0  # one-way
    names = arr.names
    keep_cols = [3 * i + k for i, n in enumerate(names) if n not in fixed for k in range(3)]
    A = J[:, keep_cols]
    n_ch = len(chans)
    order = list(range(n_ch)) if order is None else list(order)
    sets, best, disp = [], [], []
    scale = np.abs(A).max()
    for m in range(1, n_ch + 1):
        S = order[:m]
        rest = [i for i in range(n_ch) if i not in S]
        nv = A.shape[1]
        # variables: displacements (scaled) and the bound t
        cost = np.zeros(nv + 1)
        cost[-1] = 1.0
        As = A / scale
        A_ub = []
        b_ub = []
        for i in S:
            row = np.concatenate([As[i], [-1.0]])
            A_ub += [row, np.concatenate([-As[i], [-1.0]])]
            b_ub += [-base[i], base[i]]
        A_eq = [np.concatenate([As[i], [0.0]]) for i in rest] or None
        b_eq = [-base[i] for i in rest] or None
        res = optimize.linprog(cost, A_ub=np.array(A_ub), b_ub=np.array(b_ub),
                               A_eq=None if A_eq is None else np.array(A_eq), b_eq=b_eq,
                               bounds=[(None, None)] * nv + [(0, None)], method="highs")
        sets.append(S)
        if res.status == 2:
            best.append(math.inf)
            disp.append(np.full(nv, np.nan))
            continue
        if not res.success:
            raise SolverError(f"mismatch LP failed: {res.message}")
        best.append(float(res.x[-1]))
        disp.append(res.x[:-1] / scale)
    return MismatchResult(sets, best, disp)


def null_nine_phase(mu: float, N: int, p_tau: float, free: int | None = None) -> tuple[float, np.ndarray]:
    """Hold nine channels of the complete five-graph at null phase; return the tenth's phase.

    Positions are moved by Gauss-Newton (minimum-norm steps) from the flat
    placement. ``free`` indexes the unconstrained channel (default A1-A2).
    """
    arr = complete_five_arrangement(mu, N, p_tau)
    names = arr.names
    chans = [(a, b) for a, b, *_ in arr.target_channels]
    free = chans.index(("A1", "A2")) if free is None else free
    held = [i for i in range(len(chans)) if i != free]
    pos = {n: arr.position(n) for n in names}
    cols = [3 * i + k for i, n in enumerate(names) if n != "B1" for k in range(3)]
    for _ in range(20):
        cur = arr.with_positions(pos)
        ph = channel_phases(arr, pos)
        if np.max(np.abs(ph[held])) < 1e-13 * N:
            break
        J, _ = echo_jacobian(cur)
        step = np.linalg.lstsq(J[held][:, cols] / 2.0, -ph[held], rcond=None)[0]
        flat = np.zeros(3 * len(names))
        flat[cols] = step
        pos = {n: pos[n] + flat[3 * i:3 * i + 3] for i, n in enumerate(names)}
    else:
        raise SolverError("null-phase Gauss-Newton did not converge")
    ph = channel_phases(arr, pos)
    return float(ph[free]), ph
