"""Timelike worldlines and light rays in a flat 1+1 chart."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import GeometryError, InvalidChoiceError
from .geometry import C


@dataclass(frozen=True)
class Worldline:
    """Image of a worldline as a polyline of events ``(t_i, x_i)``."""

    t: tuple[float, ...]
    x: tuple[float, ...]
    c: float = C

    def __post_init__(self):
        t, x = np.asarray(self.t, float), np.asarray(self.x, float)
        if t.shape != x.shape or t.ndim != 1 or len(t) < 2:
            raise GeometryError("worldline needs at least two events")
        dt, dx = np.diff(t), np.diff(x)
        if np.any(dt <= 0):
            raise GeometryError("worldline events must be strictly ordered in time")
        if np.any(np.abs(dx) >= self.c * dt):
            raise GeometryError("worldline is not timelike")

    @classmethod
    def from_arrays(cls, t, x, c: float = C) -> "Worldline":
        return cls(tuple(float(v) for v in t), tuple(float(v) for v in x), c)

    @classmethod
    def static(cls, x0: float, t0: float, t1: float, c: float = C) -> "Worldline":
        return cls((float(t0), float(t1)), (float(x0), float(x0)), c)

    @property
    def span(self) -> tuple[float, float]:
        return self.t[0], self.t[-1]

    def contains(self, t: float) -> bool:
        return self.t[0] <= t <= self.t[-1]

    def position(self, t):
        ts = np.asarray(t, float)
        if np.any(ts < self.t[0]) or np.any(ts > self.t[-1]):
            raise GeometryError(f"time {t} outside worldline span {self.span}")
        return np.interp(ts, self.t, self.x)

    def event(self, t: float) -> tuple[float, float]:
        return float(t), float(self.position(t))

    def ray_hit(self, t0: float, x0: float, future: bool = True) -> tuple[float, float]:
        """Event where a light ray from ``(t0, x0)`` meets this worldline.

        The ray heads toward the worldline; ``future=False`` follows the
        past light cone instead.
        """
        t = np.asarray(self.t)
        x = np.asarray(self.x)
        tau = 1.0 if future else -1.0
        if not self.contains(t0):
            raise GeometryError(f"emission time {t0} outside the target's span")
        side = np.sign(float(self.position(t0)) - x0)
        if side == 0:
            raise GeometryError("emission event lies on the target worldline")
        # g(t) = side*(x(t) - x0) - c*tau*(t - t0) is strictly monotone along the target
        g = side * (x - x0) - self.c * tau * (t - t0)
        for i in range(len(t) - 1):
            g0, g1 = g[i], g[i + 1]
            if g0 == 0.0 and tau * (t[i] - t0) > 0:
                return float(t[i]), float(x[i])
            if g0 * g1 < 0 or g1 == 0.0:
                s = g0 / (g0 - g1)
                th = t[i] + s * (t[i + 1] - t[i])
                if tau * (th - t0) > 0:
                    return float(th), float(x[i] + s * (x[i + 1] - x[i]))
        raise GeometryError("light ray leaves the target worldline's span (not radar linkable here)")


def check_separated(a: Worldline, b: Worldline) -> int:
    """Side of ``b`` relative to ``a`` (+1 right, -1 left) over their common span."""
    lo, hi = max(a.t[0], b.t[0]), min(a.t[-1], b.t[-1])
    if lo >= hi:
        raise GeometryError("worldlines share no time span")
    ts = np.union1d(np.asarray(a.t), np.asarray(b.t))
    ts = ts[(ts >= lo) & (ts <= hi)]
    diff = b.position(ts) - a.position(ts)
    if np.all(diff > 0):
        return 1
    if np.all(diff < 0):
        return -1
    raise GeometryError("worldline images cross; not radar linkable")


@dataclass(frozen=True)
class Clocking:
    """Integer-reading tick events on a worldline; readings interpolate linearly between ticks."""

    worldline: Worldline
    first: int
    times: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise GeometryError("clocking needs at least two strictly increasing ticks")

    @property
    def readings(self) -> range:
        return range(self.first, self.first + len(self.times))

    def tick(self, k: int) -> tuple[float, float]:
        if k not in self.readings:
            raise GeometryError(f"tick {k} outside clocked range {self.readings}")
        return self.worldline.event(self.times[k - self.first])

    def reading_at(self, t):
        ts = np.asarray(self.times)
        if np.any(np.asarray(t) < ts[0]) or np.any(np.asarray(t) > ts[-1]):
            raise GeometryError(f"time {t} outside clocked span")
        return np.interp(t, ts, np.arange(self.first, self.first + len(ts), dtype=float))

    def time_at(self, reading):
        r = np.asarray(reading, float)
        lo, hi = self.readings[0], self.readings[-1]
        if np.any(r < lo) or np.any(r > hi):
            raise GeometryError(f"reading {reading} outside clocked range [{lo}, {hi}]")
        return np.interp(r, np.arange(lo, hi + 1, dtype=float), np.asarray(self.times))


@dataclass(frozen=True)
class Lacing:
    """Clockings of A and B whose two-way channels both have echo count ``N``.

    The ray leaving A at tick ``k`` meets B at B's tick ``k``; the ray
    leaving B at tick ``k`` meets A at A's tick ``k + N``.
    """

    a: Clocking
    b: Clocking
    N: int


def _lace(a: Worldline, b: Worldline, t0: float) -> tuple[list, list]:
    """A-touches and B-touches of the zigzag through A's event at ``t0``.

    Returns ``(a_steps, b_steps)`` as ``{step: t}`` lists indexed so that
    A-touch ``l`` emits toward B-touch ``l``.
    """
    a_t, b_t = {0: t0}, {}
    ell, t = 0, t0
    while True:
        try:
            tb, xb = b.ray_hit(t, float(a.position(t)), future=True)
            b_t[ell] = tb
            ta, _ = a.ray_hit(tb, xb, future=True)
        except GeometryError:
            break
        ell += 1
        a_t[ell] = t = ta
    ell, t = 0, t0
    while True:
        try:
            tb, xb = b.ray_hit(t, float(a.position(t)), future=False)
            ta, _ = a.ray_hit(tb, xb, future=False)
        except GeometryError:
            break
        ell -= 1
        b_t[ell] = tb
        a_t[ell] = t = ta
    return a_t, b_t


def next_touch(a: Worldline, b: Worldline, t0: float) -> float:
    """Time at which the lacing through A's event ``t0`` next returns to A."""
    tb, xb = b.ray_hit(t0, float(a.position(t0)), future=True)
    return a.ray_hit(tb, xb, future=True)[0]


def build_lacing(image_a: Worldline, image_b: Worldline, a0: float, N: int,
                 interior: Sequence[float] = ()) -> Lacing:
    """Lace ``N`` interleaved zigzags through ``a0`` and the interior A events.

    ``a0`` and ``interior`` are coordinate times on A's image. Only steps
    where every zigzag stays inside both images are kept.
    """
    if N < 1 or int(N) != N:
        raise ValueError("N must be a positive integer")
    check_separated(image_a, image_b)
    interior = [float(t) for t in interior]
    if len(interior) != N - 1:
        raise InvalidChoiceError(f"need {N - 1} interior events, got {len(interior)}")
    seeds = [float(a0)] + interior
    if N > 1:
        t_echo = next_touch(image_a, image_b, a0)
        if np.any(np.diff(seeds) <= 0) or seeds[-1] >= t_echo:
            raise InvalidChoiceError("interior events must increase strictly between a0 and its echo")
    laced = [_lace(image_a, image_b, s) for s in seeds]
    # common step range in which every zigzag has both touches
    lo = max(min(set(at) & set(bt)) for at, bt in laced)
    hi = min(max(set(at) & set(bt)) for at, bt in laced)
    if hi <= lo:
        raise GeometryError("images too short for two lacing steps")
    a_ticks, b_ticks = {}, {}
    for j, (at, bt) in enumerate(laced):
        for ell in range(lo, hi + 1):
            a_ticks[j + ell * N] = at[ell]
            b_ticks[j + ell * N] = bt[ell]
    ks = sorted(a_ticks)
    return Lacing(
        Clocking(image_a, ks[0], tuple(a_ticks[k] for k in ks)),
        Clocking(image_b, ks[0], tuple(b_ticks[k] for k in ks)),
        int(N),
    )
