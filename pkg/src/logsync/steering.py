"""Feedback loops that keep clocks on an aiming point.

Two toy loops:

* an atomic clock, where an oscillator is steered so that the detection
  rate through a resonance sits on the flank of the resonance curve;
* a two-machine network, where B corrects its clock rate from the
  phases it measures and its position from A's phase reports, which
  arrive only after a transport delay.

Both are deterministic given a seed. Drift noise and detection noise use
separate generator streams so that runs with and without feedback see
the same drift.
"""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import asdict, dataclass, field

import numpy as np

from .channels import phase_threshold
from .errors import ConfigError
from .geometry import Metric

CESIUM_HZ = 9_192_631_770.0


@dataclass(frozen=True)
class OscillatorModel:
    true_frequency: float
    drift_sigma: float = 0.0  # Hz per cycle, random walk
    knob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.true_frequency > 0:
            raise ConfigError("oscillator frequency must be positive")
        if self.drift_sigma < 0:
            raise ConfigError("drift sigma must be >= 0")


@dataclass(frozen=True)
class ResonanceModel:
    """Resonance curve; ``width`` is the full width at half maximum."""

    center: float
    width: float
    peak_rate: float
    imagined_0K: float
    shape: str = "lorentzian"

    def __post_init__(self):
        if self.width <= 0 or self.peak_rate <= 0:
            raise ConfigError("width and peak rate must be positive")
        if self.shape not in ("lorentzian", "gaussian"):
            raise ConfigError(f"unknown resonance shape {self.shape!r}")

    @classmethod
    def cesium(cls, shift: float = 0.05, width: float = 1.0, peak_rate: float = 1e4) -> "ResonanceModel":
        """Cesium preset; ``shift`` offsets the observed peak from the defined frequency."""
        return cls(CESIUM_HZ + shift, width, peak_rate, CESIUM_HZ)

    def _x(self, nu):
        return (np.asarray(nu, float) - self.center) / (self.width / 2.0)

    def rate(self, nu):
        x = self._x(nu)
        if self.shape == "lorentzian":
            return self.peak_rate / (1.0 + x * x)
        return self.peak_rate * np.exp(-math.log(2.0) * x * x)

    def slope(self, nu):
        x = self._x(nu)
        dx = 2.0 / self.width
        if self.shape == "lorentzian":
            return -self.peak_rate * 2.0 * x / (1.0 + x * x) ** 2 * dx
        return -2.0 * math.log(2.0) * x * self.rate(nu) * dx

    def half_max_frequency(self, side: int = 1) -> float:
        return self.center + math.copysign(self.width / 2.0, side)


@dataclass(frozen=True)
class AimingPoint:
    """Aiming point for either loop.

    ``target`` is a detection rate (clock loop, default: half maximum on
    the ``side`` flank) or the reception phase ``phi0`` (network loop).
    """

    target: float | None = None
    eta: float = 0.1
    gain: float = 0.5
    predictor_horizon: int = 16
    side: int = 1
    clock_gain: float = 0.3
    clock_integral_gain: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.eta < 1.0:
            raise ConfigError("tolerance eta must lie in (0, 1)")
        if self.gain <= 0:
            raise ConfigError("gain must be positive")
        if self.predictor_horizon < 1:
            raise ConfigError("predictor horizon must be at least one cycle")


def _streams(seed: int):
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


# ----------------------------------------------------------------------------
# Atomic clock


@dataclass
class ClockTrace:
    cycle: np.ndarray
    frequency_error: np.ndarray  # Hz, oscillator minus aiming frequency
    detections: np.ndarray
    knob: np.ndarray
    output_frequency: np.ndarray
    deviation: np.ndarray  # fractional frequency deviation inferred from detections
    true_deviation: np.ndarray
    readings: np.ndarray  # time error of the output (s) at the start of each cycle
    aim_frequency: float
    cycle_time: float

    def summary(self) -> dict:
        fe = self.frequency_error
        return {"rms_frequency_error": float(np.sqrt(np.mean(fe ** 2))),
                "peak_frequency_error": float(np.max(np.abs(fe))),
                "final_knob": float(self.knob[-1]), "n_cycles": int(len(fe))}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["cycle", "frequency_error", "detections", "knob", "output_frequency", "deviation", "reading"]
        w.writerow(cols)
        for row in zip(self.cycle, self.frequency_error, self.detections, self.knob,
                       self.output_frequency, self.deviation, self.readings):
            w.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


def aim_frequency(res: ResonanceModel, aim: AimingPoint) -> float:
    if aim.target is None:
        return res.half_max_frequency(aim.side)
    if not 0.0 < aim.target < res.peak_rate:
        raise ConfigError("target detection rate must lie strictly between 0 and the peak")
    ratio = res.peak_rate / aim.target
    if res.shape == "lorentzian":
        x = math.sqrt(ratio - 1.0)
    else:
        x = math.sqrt(math.log(ratio) / math.log(2.0))
    return res.center + math.copysign(x * res.width / 2.0, aim.side)


def simulate_atomic_clock(osc: OscillatorModel, res: ResonanceModel, aim: AimingPoint, n_cycles: int,
                          *, feedback: bool = True, noiseless: bool = False,
                          cycle_time: float = 1.0) -> ClockTrace:
    """Steer the oscillator so the detection rate holds the aiming rate.

    Each cycle the oscillator frequency takes a random-walk step, the
    detector counts Poisson events at the resonance rate (or exactly the
    expected rate when ``noiseless``), and the integral controller moves
    the knob by ``gain * error / slope``.
    """
    if n_cycles < 1:
        raise ConfigError("n_cycles must be positive")
    nu_aim = aim_frequency(res, aim)
    r_aim = float(res.rate(nu_aim))
    slope = float(res.slope(nu_aim))
    if abs(slope) < 1e-9 * res.peak_rate / res.width:
        raise ConfigError("aiming point sits at zero slope of the resonance")
    drift_rng, count_rng = _streams(osc.seed)
    steps = drift_rng.normal(0.0, osc.drift_sigma, n_cycles) if osc.drift_sigma > 0 else np.zeros(n_cycles)
    walk = osc.true_frequency - nu_aim
    knob = osc.knob
    fe = np.empty(n_cycles)
    det = np.empty(n_cycles)
    kn = np.empty(n_cycles)
    est = np.empty(n_cycles)
    for n in range(n_cycles):
        walk += steps[n]
        err_hz = walk + knob
        expected = float(res.rate(nu_aim + err_hz))
        d = expected if noiseless else float(count_rng.poisson(expected))
        fe[n], det[n] = err_hz, d
        est[n] = (d - r_aim) / slope  # linear estimate of the frequency error
        if feedback:
            knob -= aim.gain * (d - r_aim) / slope
        kn[n] = knob
    true_dev = fe / nu_aim
    readings = np.concatenate([[0.0], np.cumsum(true_dev)[:-1]]) * cycle_time
    output = (nu_aim + fe) * (res.imagined_0K / nu_aim)
    return ClockTrace(np.arange(n_cycles), fe, det, kn, output, est / nu_aim, true_dev, readings,
                      nu_aim, cycle_time)


def retro_correct(trace: ClockTrace) -> np.ndarray:
    """Readings with the integral of the recorded rate deviations removed."""
    dev = np.asarray(trace.deviation, float)
    prior = np.concatenate([[0.0], np.cumsum(dev)[:-1]])
    return np.asarray(trace.readings, float) - prior * trace.cycle_time


def allan_variance(phase: np.ndarray, m: int, tau0: float = 1.0) -> float:
    """Overlapping Allan variance of phase (time-error) data at averaging factor ``m``."""
    x = np.asarray(phase, float)
    if m < 1 or len(x) < 2 * m + 1:
        raise ValueError("series too short for this averaging factor")
    d = x[2 * m:] - 2.0 * x[m:-m] + x[:-2 * m]
    return float(np.mean(d * d) / (2.0 * (m * tau0) ** 2))


# ----------------------------------------------------------------------------
# Two-machine network


@dataclass(frozen=True)
class DriftModel:
    """Per-cycle disturbances in cycles.

    ``rate_sigma`` and ``position_sigma`` are random-walk step sizes of
    B's clock phase and of the one-way delay; ``rate_drift`` and
    ``position_drift`` are deterministic per-cycle increments.
    """

    rate_sigma: float = 0.0
    position_sigma: float = 0.0
    rate_drift: float = 0.0
    position_drift: float = 0.0

    def __post_init__(self):
        if self.rate_sigma < 0 or self.position_sigma < 0:
            raise ConfigError("drift sigmas must be >= 0")


@dataclass
class NetworkTrace:
    cycle: np.ndarray
    delta_A: np.ndarray
    delta_B: np.ndarray
    position_move: np.ndarray
    rate_move: np.ndarray
    violations_A: np.ndarray
    violations_B: np.ndarray
    loss_of_sync: np.ndarray
    phi0: float
    eta: float
    meta: dict = field(default_factory=dict)

    @property
    def peak(self) -> float:
        return float(max(np.max(np.abs(self.delta_A)), np.max(np.abs(self.delta_B))))

    @property
    def n_violations(self) -> int:
        return int(self.violations_A.sum() + self.violations_B.sum())

    @property
    def first_violation(self) -> int | None:
        hits = np.flatnonzero(self.violations_A | self.violations_B)
        return int(hits[0]) if len(hits) else None

    def summary(self) -> dict:
        both = np.concatenate([self.delta_A, self.delta_B])
        return {"rms": float(np.sqrt(np.mean(both ** 2))), "peak": self.peak,
                "violations": self.n_violations, "first_violation_cycle": self.first_violation,
                "loss_of_sync_cycles": int(self.loss_of_sync.sum()), **self.meta}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cycle", "delta_A", "delta_B", "position_move", "rate_move", "violation_A",
                    "violation_B", "loss_of_sync"])
        for i in range(len(self.cycle)):
            w.writerow([int(self.cycle[i]), repr(float(self.delta_A[i])), repr(float(self.delta_B[i])),
                        repr(float(self.position_move[i])), repr(float(self.rate_move[i])),
                        int(self.violations_A[i]), int(self.violations_B[i]), int(self.loss_of_sync[i])])
        return buf.getvalue()


class _DelayedLink:
    """A-to-B report channel that delivers a report no sooner than ``delay`` cycles after sending."""

    def __init__(self, delay: int):
        self.delay = delay
        self.queue: deque = deque()

    def send(self, cycle: int, value: float) -> None:
        self.queue.append((cycle + self.delay, cycle, value))

    def receive(self, now: int) -> list[tuple[int, float]]:
        out = []
        while self.queue and self.queue[0][0] <= now:
            _, sent, value = self.queue.popleft()
            if now - sent < self.delay:
                raise AssertionError("causality: report younger than the transport delay")
            out.append((sent, value))
        return out


def simulate_network_steering(delta_BAB: int, drift: DriftModel, aim: AimingPoint, *,
                              predictor: str = "none", n_cycles: int = 1000, seed: int = 0,
                              feedback: bool = True, metric: Metric | None = None,
                              initial: tuple[float, float] = (0.0, 0.0)) -> NetworkTrace:
    """Steer B against the fixed reference A; phases in cycles, deviations from ``phi0``.

    B's clock offset ``eps`` and the one-way delay deviation ``xi`` give
    reception deviations ``delta_B = eps + xi`` measured at B now and
    ``delta_A = xi - eps`` measured at A, which reach B ``delta_BAB``
    cycles later. B estimates the present delay from the latest report
    plus its own later moves (plus ``delta_BAB`` times the fitted drift
    velocity with the linear predictor), moves to cancel it, and runs a
    PI loop on its clock offset. The model is linear in small
    deviations, so ``metric`` only labels the run.
    """
    if delta_BAB < 1 or int(delta_BAB) != delta_BAB:
        raise ConfigError("delta_BAB must be an integer >= 1")
    if predictor not in ("none", "linear"):
        raise ConfigError(f"unknown predictor {predictor!r}")
    D = int(delta_BAB)
    phi0 = 0.0 if aim.target is None else float(aim.target)
    limit = phase_threshold(aim.eta)
    drift_rng, _ = _streams(seed)
    n = int(n_cycles)
    rate_noise = drift_rng.normal(0.0, drift.rate_sigma, n) if drift.rate_sigma > 0 else np.zeros(n)
    pos_noise = drift_rng.normal(0.0, drift.position_sigma, n) if drift.position_sigma > 0 else np.zeros(n)

    eps, xi = initial
    dA = np.empty(n)
    dB = np.empty(n)
    upos = np.zeros(n)
    urate = np.zeros(n)
    xi_rec = np.empty(n)  # delay deviations reconstructed once A's reports arrive
    link = _DelayedLink(D)
    newest = -1
    integ = 0.0
    g_x, g_p, g_i = aim.gain, aim.clock_gain, aim.clock_integral_gain
    for k in range(n):
        dB[k] = eps + xi
        dA[k] = xi - eps
        link.send(k, dA[k])
        for sent, reported in link.receive(k):
            xi_rec[sent] = 0.5 * (reported + dB[sent])
            newest = sent
        if feedback:
            if newest >= 0:
                xi_hat = xi_rec[newest] + upos[newest:k].sum()
                v_hat = 0.0
                if predictor == "linear" and newest >= 1:
                    lo = max(0, newest - aim.predictor_horizon)
                    inc = np.diff(xi_rec[lo:newest + 1]) - upos[lo:newest]
                    v_hat = float(inc.mean())
                    xi_hat += D * v_hat
                upos[k] = -g_x * xi_hat - v_hat
                eps_hat = dB[k] - xi_hat
            else:
                eps_hat = dB[k]
            integ += eps_hat
            urate[k] = -g_p * eps_hat - g_i * integ
        eps += drift.rate_drift + rate_noise[k] + urate[k]
        xi += drift.position_drift + pos_noise[k] + upos[k]

    viol_A = np.abs(phi0 + dA) >= limit
    viol_B = np.abs(phi0 + dB) >= limit
    lost = (np.abs(phi0 + dA) > 0.5) | (np.abs(phi0 + dB) > 0.5)
    meta = {"delta_BAB": D, "predictor": predictor, "feedback": feedback, "seed": seed,
            "metric": (metric or Metric.flat()).kind, "drift": asdict(drift)}
    return NetworkTrace(np.arange(n), dA, dB, upos, urate, viol_A, viol_B, lost, phi0, aim.eta, meta)


def steady_state_deviation(delta_BAB: int, position_drift: float, gain: float, predictor: str = "none"
                           ) -> tuple[float, float]:
    """Closed-form steady ``(delta_A, delta_B)`` under constant delay drift ``d`` per cycle.

    Without prediction the delay estimate lags the truth by ``D d``; the
    clock loop absorbs the lag into B's offset, leaving
    ``delta_B = d / g`` and ``delta_A = d (2 D + 1 / g)``. The linear
    predictor removes the lag and both vanish.
    """
    if predictor == "linear":
        return 0.0, 0.0
    d, D = position_drift, delta_BAB
    return d * (2 * D + 1.0 / gain), d / gain
