"""Piecewise-linear clock adjustments and the lacing-invariance subgroup.

An adjustment ``f`` relabels a clock: the event the original clock reads
``zeta`` is read ``f(zeta)`` afterwards. Adjustments compose, invert and
act on transmission readings; a pair ``(f_A, f_B)`` belongs to K(A, B)
when the adjusted clockings regenerate exactly the same two-way channel
pairs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .channels import ChannelPair, RepeatingChannel
from .errors import GeometryError, InvalidChoiceError
from .openmachine import Reading
from .worldline import Clocking, Lacing, Worldline, build_lacing, next_touch


@dataclass(frozen=True)
class ClockAdjustment:
    """Monotone piecewise-linear map, extended linearly past its end breakpoints.

    ``domain`` optionally bounds the readings on which the map was
    actually specified; ``None`` means the whole line.
    """

    breakpoints: tuple[float, ...]
    values: tuple[float, ...]
    domain: tuple[float, float] | None = None

    def __post_init__(self):
        b = np.asarray(self.breakpoints, float)
        v = np.asarray(self.values, float)
        if b.ndim != 1 or b.shape != v.shape or len(b) < 2:
            raise ValueError("adjustment needs matching breakpoint/value arrays of length >= 2")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(v))):
            raise ValueError("non-finite adjustment data")
        if np.any(np.diff(b) <= 0) or np.any(np.diff(v) <= 0):
            raise ValueError("breakpoints and values must be strictly increasing")
        if self.domain is not None and not self.domain[0] < self.domain[1]:
            raise ValueError("empty adjustment domain")

    @classmethod
    def from_arrays(cls, breakpoints, values, domain=None) -> "ClockAdjustment":
        dom = None if domain is None else (float(domain[0]), float(domain[1]))
        return cls(tuple(float(x) for x in breakpoints), tuple(float(x) for x in values), dom)

    def covers(self, zeta: float) -> bool:
        return self.domain is None or self.domain[0] <= zeta <= self.domain[1]

    @classmethod
    def identity(cls) -> "ClockAdjustment":
        return cls((0.0, 1.0), (0.0, 1.0))

    @classmethod
    def scale(cls, factor: float, about: float = 0.0) -> "ClockAdjustment":
        if factor <= 0:
            raise ValueError("scale factor must be positive")
        return cls((about, about + 1.0), (about, about + factor))

    @classmethod
    def shift(cls, delta: float) -> "ClockAdjustment":
        return cls((0.0, 1.0), (delta, 1.0 + delta))

    def _arrays(self):
        return np.asarray(self.breakpoints), np.asarray(self.values)

    def __call__(self, zeta):
        return apply(self, zeta)

    def slopes(self) -> np.ndarray:
        b, v = self._arrays()
        return np.diff(v) / np.diff(b)

    def to_json(self) -> str:
        d = {"breakpoints": list(self.breakpoints), "values": list(self.values)}
        if self.domain is not None:
            d["domain"] = list(self.domain)
        return json.dumps(d)

    @classmethod
    def from_json(cls, text: str) -> "ClockAdjustment":
        d = json.loads(text)
        return cls.from_arrays(d["breakpoints"], d["values"], d.get("domain"))


def _pl(x, xp: np.ndarray, fp: np.ndarray):
    x = np.asarray(x, float)
    y = np.interp(x, xp, fp)
    lo_s = (fp[1] - fp[0]) / (xp[1] - xp[0])
    hi_s = (fp[-1] - fp[-2]) / (xp[-1] - xp[-2])
    y = np.where(x < xp[0], fp[0] + lo_s * (x - xp[0]), y)
    y = np.where(x > xp[-1], fp[-1] + hi_s * (x - xp[-1]), y)
    return float(y) if y.ndim == 0 else y


def apply(f: ClockAdjustment, zeta):
    b, v = f._arrays()
    return _pl(zeta, b, v)


def invert(f: ClockAdjustment) -> ClockAdjustment:
    dom = None if f.domain is None else (float(apply(f, f.domain[0])), float(apply(f, f.domain[1])))
    return ClockAdjustment(f.values, f.breakpoints, dom)


def _compose_domain(f: ClockAdjustment, g: ClockAdjustment):
    lo, hi = -np.inf, np.inf
    if g.domain is not None:
        lo, hi = g.domain
    if f.domain is not None:
        gi = invert(ClockAdjustment(g.breakpoints, g.values))
        lo = max(lo, float(apply(gi, f.domain[0])))
        hi = min(hi, float(apply(gi, f.domain[1])))
    if lo == -np.inf and hi == np.inf:
        return None
    if not lo < hi:
        raise ValueError("composed adjustments have disjoint domains")
    return (lo, hi)


def compose(f: ClockAdjustment, g: ClockAdjustment) -> ClockAdjustment:
    """``f o g``: apply ``g`` first."""
    gb, _ = g._arrays()
    fb, _ = f._arrays()
    pts = np.union1d(gb, apply(invert(g), fb))
    # one extra point on each side pins the end slopes of the product
    span = pts[-1] - pts[0]
    pts = np.concatenate([[pts[0] - span], pts, [pts[-1] + span]])
    vals = apply(f, apply(g, pts))
    # merge points closer than rounding can separate
    eps = 8 * np.finfo(float).eps
    keep = [0]
    for i in range(1, len(pts)):
        j = keep[-1]
        if (pts[i] - pts[j] > eps * max(1.0, abs(pts[i]))
                and vals[i] - vals[j] > eps * max(1.0, abs(vals[i]))):
            keep.append(i)
    if keep[-1] != len(pts) - 1:
        keep[-1] = len(pts) - 1
    pts, vals = pts[keep], vals[keep]
    # drop collinear interior points so repeated composition stays small
    slope = np.diff(vals) / np.diff(pts)
    bend = np.abs(np.diff(slope)) > 1e-13 * np.maximum(np.abs(slope[1:]), np.abs(slope[:-1]))
    mask = np.concatenate([[True], bend, [True]])
    return ClockAdjustment.from_arrays(pts[mask], vals[mask], _compose_domain(f, g))


def remap_transmissions(f: ClockAdjustment, original_readings: Iterable[float]) -> list[float]:
    """Adjusted readings ``f^-1(zeta)`` at which the original transmissions now occur."""
    inv = invert(f)
    return [float(apply(inv, z)) for z in original_readings]


def adjustments_equal(f: ClockAdjustment, g: ClockAdjustment, grid, tol: float = 1e-12) -> bool:
    a, b = apply(f, grid), apply(g, grid)
    return bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(a))))


# ----------------------------------------------------------------------------
# Lacing invariance


@dataclass(frozen=True)
class LacingSpec:
    """Two worldline images, an anchor time ``a0`` on A and ``N - 1`` interior A times."""

    image_a: Worldline
    image_b: Worldline
    a0: float
    N: int
    interior: tuple[float, ...] = ()

    def __post_init__(self):
        if self.N < 1:
            raise ValueError("N must be positive")
        if len(self.interior) != self.N - 1:
            raise InvalidChoiceError(f"need {self.N - 1} interior events")

    @classmethod
    def evenly_spaced(cls, image_a: Worldline, image_b: Worldline, a0: float, N: int) -> "LacingSpec":
        t1 = next_touch(image_a, image_b, a0)
        interior = tuple(a0 + (t1 - a0) * i / N for i in range(1, N))
        return cls(image_a, image_b, float(a0), int(N), interior)

    def lacing(self) -> Lacing:
        return build_lacing(self.image_a, self.image_b, self.a0, self.N, self.interior)


def lacing_channels(N: int, sender: str = "A", receiver: str = "B") -> tuple[RepeatingChannel, RepeatingChannel]:
    """The two endless null-phase channels of a lacing with echo count ``N``."""
    return (RepeatingChannel(sender, receiver, 0, 0, ell_range=None),
            RepeatingChannel(receiver, sender, 0, N, ell_range=None))


def construct_K_pair(spec: LacingSpec, choice_f0: float, choice_interior: Sequence[float] = (),
                     base: tuple[ClockAdjustment, ClockAdjustment] | None = None
                     ) -> tuple[ClockAdjustment, ClockAdjustment]:
    """Member of K(A, B) that newly labels 0 the event A read ``choice_f0``.

    ``choice_interior`` are the original A readings to be read
    ``1 .. N-1``. The B adjustment is induced by the new lacing.

    With ``base`` the choices are readings of the clocks already adjusted
    by ``base`` and the result acts on those clocks, so composing it
    after ``base`` gives a member for the original clocks.
    """
    if base is not None:
        inv_a = invert(base[0])
        orig = [float(apply(inv_a, c)) for c in [choice_f0, *choice_interior]]
        f_a, f_b = construct_K_pair(spec, orig[0], orig[1:])
        return compose(f_a, inv_a), compose(f_b, invert(base[1]))
    lac = spec.lacing()
    ca, cb = lac.a, lac.b
    N = spec.N
    choices = [float(choice_f0)] + [float(c) for c in choice_interior]
    if len(choices) != N:
        raise InvalidChoiceError(f"need {N - 1} interior choices, got {len(choices) - 1}")
    try:
        t0 = float(ca.time_at(choices[0]))
        echo = float(ca.reading_at(next_touch(spec.image_a, spec.image_b, t0)))
    except GeometryError as exc:
        raise InvalidChoiceError(f"choice outside the clocked span: {exc}") from exc
    if np.any(np.diff(choices) <= 0):
        raise InvalidChoiceError("choices must increase strictly")
    if choices[-1] >= echo:
        raise InvalidChoiceError(f"last choice {choices[-1]} must precede the echo at {echo}")
    times = [float(ca.time_at(c)) for c in choices]
    new = build_lacing(spec.image_a, spec.image_b, times[0], N, times[1:])
    ks = np.arange(new.a.first, new.a.first + len(new.a.times), dtype=float)
    # restrict to ticks the original clockings can read
    za = _readable(ca, new.a.times)
    zb = _readable(cb, new.b.times)
    keep = ~np.isnan(za) & ~np.isnan(zb)
    if keep.sum() < 2:
        raise InvalidChoiceError("new lacing leaves the originally clocked span")
    # outside the kept ticks the maps are extrapolations, not lacing ticks
    f_a = ClockAdjustment.from_arrays(za[keep], ks[keep], (za[keep][0], za[keep][-1]))
    f_b = ClockAdjustment.from_arrays(zb[keep], ks[keep], (zb[keep][0], zb[keep][-1]))
    return f_a, f_b


def _readable(clock: Clocking, times) -> np.ndarray:
    lo, hi = clock.times[0], clock.times[-1]
    t = np.asarray(times, float)
    out = np.full(t.shape, np.nan)
    ok = (t >= lo) & (t <= hi)
    out[ok] = clock.reading_at(t[ok])
    return out


def regenerate_pairs(pair: tuple[ClockAdjustment, ClockAdjustment], spec: LacingSpec
                     ) -> tuple[list[ChannelPair], list[ChannelPair]]:
    """Reading pairs of signals sent at each adjusted integer tick of A and of B.

    Each tick is located on its image through the original clocking,
    traced by a light ray to the other machine, and read there with the
    adjusted clock. Ticks whose signal leaves the clocked span, or the
    domain of either adjustment, are skipped.
    """
    f_a, f_b = pair
    lac = spec.lacing()
    out = []
    for f_s, f_r, c_s, c_r in ((f_a, f_b, lac.a, lac.b), (f_b, f_a, lac.b, lac.a)):
        lo = int(np.ceil(apply(f_s, c_s.readings[0])))
        hi = int(np.floor(apply(f_s, c_s.readings[-1])))
        pairs = []
        for k in range(lo, hi + 1):
            zs = float(apply(invert(f_s), k))
            if not f_s.covers(zs):
                continue
            t = float(c_s.time_at(min(max(zs, c_s.readings[0]), c_s.readings[-1])))
            try:
                tr, _ = c_r.worldline.ray_hit(t, float(c_s.worldline.position(t)), future=True)
                z = float(c_r.reading_at(tr))
            except GeometryError:
                continue
            if not f_r.covers(z):
                continue
            pairs.append(ChannelPair(Reading(k), Reading.from_value(float(apply(f_r, z)))))
        out.append(pairs)
    return out[0], out[1]


def verify_invariance(pair: tuple[ClockAdjustment, ClockAdjustment],
                      channels: tuple[RepeatingChannel, RepeatingChannel],
                      spec: LacingSpec, tol: float = 1e-9) -> bool:
    """True iff the adjusted clockings regenerate the channels' reading pairs."""
    regenerated = regenerate_pairs(pair, spec)
    for ch, pairs in zip(channels, regenerated):
        if len(pairs) < 2:
            return False
        for p in pairs:
            ell = p.sent.cycle - ch.m
            if ell % ch.j:
                return False
            want = ch.pair(ell // ch.j)
            if abs(p.received.value - want.received.value) > tol:
                return False
    return True
