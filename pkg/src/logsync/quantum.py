"""Parametrized probability measures and finite-dimensional quantum models of them.

A knob is a ``(prep, meas)`` pair. A model assigns a density matrix to
each preparation label and a POVM to each measurement label; its PPM is
``alpha(k, w) = tr[rho(prep) E(meas, w)]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Hashable, Mapping, Sequence

import numpy as np

from .errors import DomainError, ModelValidationError, UnsupportedError

ROW_TOL = 1e-12
MODEL_TOL = 1e-10

Knob = tuple[str, str]


@dataclass(frozen=True)
class PPM:
    knobs: tuple[Knob, ...]
    outcomes: tuple[Hashable, ...]
    table: Mapping[Knob, tuple[float, ...]]

    def __post_init__(self):
        if set(self.table) != set(self.knobs):
            raise ModelValidationError("table keys must equal the knob set")
        for k, row in self.table.items():
            r = np.asarray(row, float)
            if r.shape != (len(self.outcomes),):
                raise ModelValidationError(f"row {k} has the wrong length")
            if np.any(r < -ROW_TOL) or np.any(r > 1 + ROW_TOL) or abs(r.sum() - 1.0) > ROW_TOL:
                raise ModelValidationError(f"row {k} is not a probability vector")

    @classmethod
    def from_rows(cls, rows: Mapping[Knob, Sequence[float]], outcomes: Sequence = (0, 1)) -> "PPM":
        return cls(tuple(rows), tuple(outcomes), {k: tuple(float(v) for v in r) for k, r in rows.items()})

    def row(self, knob: Knob) -> np.ndarray:
        return np.asarray(self.table[knob], float)

    def prob(self, knob: Knob, outcome) -> float:
        return float(self.table[knob][self.outcomes.index(outcome)])

    def restrict(self, knobs: Sequence[Knob]) -> "PPM":
        return PPM(tuple(knobs), self.outcomes, {k: self.table[k] for k in knobs})

    def to_json(self) -> str:
        return json.dumps({"outcomes": list(self.outcomes),
                           "rows": [{"knob": list(k), "p": list(self.table[k])} for k in self.knobs]})

    @classmethod
    def from_json(cls, text: str) -> "PPM":
        d = json.loads(text)
        rows = {tuple(r["knob"]): r["p"] for r in d["rows"]}
        return cls.from_rows(rows, d["outcomes"])


def _as_matrix(m) -> np.ndarray:
    return np.asarray(m, dtype=complex)


@dataclass(frozen=True)
class QuantumModel:
    dim: int
    rho: Mapping[str, np.ndarray]
    povm: Mapping[str, Mapping[Hashable, np.ndarray]]

    def validate(self, tol: float = MODEL_TOL) -> "QuantumModel":
        d = self.dim
        if d < 1:
            raise ModelValidationError("dimension must be positive")
        for name, r in self.rho.items():
            r = _as_matrix(r)
            if r.shape != (d, d):
                raise ModelValidationError(f"rho[{name}] has shape {r.shape}")
            if np.max(np.abs(r - r.conj().T)) > tol:
                raise ModelValidationError(f"rho[{name}] is not Hermitian")
            if abs(np.trace(r) - 1.0) > tol:
                raise ModelValidationError(f"rho[{name}] does not have unit trace")
            if np.min(np.linalg.eigvalsh(0.5 * (r + r.conj().T))) < -tol:
                raise ModelValidationError(f"rho[{name}] is not positive semidefinite")
        for name, effects in self.povm.items():
            total = np.zeros((d, d), complex)
            for w, e in effects.items():
                e = _as_matrix(e)
                if e.shape != (d, d):
                    raise ModelValidationError(f"POVM {name}[{w}] has shape {e.shape}")
                if np.max(np.abs(e - e.conj().T)) > tol:
                    raise ModelValidationError(f"POVM {name}[{w}] is not Hermitian")
                if np.min(np.linalg.eigvalsh(0.5 * (e + e.conj().T))) < -tol:
                    raise ModelValidationError(f"POVM {name}[{w}] is not positive")
                total += e
            if np.max(np.abs(total - np.eye(d))) > tol:
                raise ModelValidationError(f"POVM {name} does not sum to the identity")
        return self

    def knobs(self) -> tuple[Knob, ...]:
        return tuple((p, m) for p in self.rho for m in self.povm)

    def to_json(self) -> str:
        def enc(m):
            m = _as_matrix(m)
            return [[[float(z.real), float(z.imag)] for z in row] for row in m]

        return json.dumps({
            "dim": self.dim,
            "rho": {k: enc(v) for k, v in self.rho.items()},
            "povm": {k: [{"outcome": w, "effect": enc(e)} for w, e in v.items()] for k, v in self.povm.items()},
        })

    @classmethod
    def from_json(cls, text: str) -> "QuantumModel":
        d = json.loads(text)

        def dec(m):
            return np.array([[complex(re, im) for re, im in row] for row in m])

        return cls(d["dim"], {k: dec(v) for k, v in d["rho"].items()},
                   {k: {e["outcome"]: dec(e["effect"]) for e in v} for k, v in d["povm"].items()})


def evaluate_ppm(model: QuantumModel, knobs: Sequence[Knob] | None = None) -> PPM:
    model.validate()
    knobs = model.knobs() if knobs is None else tuple(knobs)
    outcomes: list = []
    for _, m in knobs:
        for w in model.povm[m]:
            if w not in outcomes:
                outcomes.append(w)
    rows = {}
    for p, m in knobs:
        r = _as_matrix(model.rho[p])
        vals = []
        for w in outcomes:
            e = model.povm[m].get(w)
            vals.append(0.0 if e is None else float(np.real(np.trace(r @ _as_matrix(e)))))
        rows[(p, m)] = tuple(min(1.0, max(0.0, v)) for v in vals)
    return PPM.from_rows(rows, outcomes)


def metric_deviation(p: PPM, q: PPM) -> float:
    """Max over knobs of the total-variation distance, missing outcomes counted as 0."""
    if set(p.knobs) != set(q.knobs):
        raise DomainError("PPMs have different knob domains")
    outs = list(p.outcomes) + [w for w in q.outcomes if w not in p.outcomes]

    def padded(ppm, k):
        return np.array([ppm.prob(k, w) if w in ppm.outcomes else 0.0 for w in outs])

    return max(0.5 * float(np.abs(padded(p, k) - padded(q, k)).sum()) for k in p.knobs)


# ----------------------------------------------------------------------------
# Distinct models of one PPM

_KET0 = np.array([1.0, 0.0], complex)
_Z0 = np.diag([1.0, 0.0]).astype(complex)
_Z1 = np.diag([0.0, 1.0]).astype(complex)


def _two_outcome_effects(e0: np.ndarray, outcomes) -> dict:
    d = e0.shape[0]
    return {outcomes[0]: e0, outcomes[1]: np.eye(d, dtype=complex) - e0}


def _extension_label(ppm: PPM, base: str) -> str:
    used = {m for _, m in ppm.knobs}
    label = base
    while label in used:
        label += "'"
    return label


def construct_distinct_models(ppm: PPM) -> tuple[QuantumModel, QuantumModel, Knob, float]:
    """Two models reproducing ``ppm`` that disagree on one added measurement knob.

    Supported: one preparation label and two outcomes per row. Generic
    rows use a pure qubit with rotated projective measurements against a
    maximally mixed qubit with diagonal effects; the added knob measures
    Z. If every row is deterministic the second model carries a
    maximally mixed ancilla (dimension 4) and the added knob measures
    ZZ parity.
    """
    preps = {p for p, _ in ppm.knobs}
    if len(preps) != 1 or len(ppm.outcomes) != 2:
        raise UnsupportedError("only one preparation label with two-outcome rows is supported")
    prep = preps.pop()
    o = ppm.outcomes
    probs = {m: ppm.prob((prep, m), o[0]) for _, m in ppm.knobs}
    deterministic = all(min(p, 1 - p) <= ROW_TOL for p in probs.values())

    povm1, povm2 = {}, {}
    if not deterministic:
        for m, p in probs.items():
            theta = np.arccos(np.clip(2 * p - 1, -1, 1))
            psi = np.array([np.cos(theta / 2), np.sin(theta / 2)], complex)
            povm1[m] = _two_outcome_effects(np.outer(psi, psi.conj()), o)
            povm2[m] = _two_outcome_effects(np.diag([min(1.0, 2 * p), max(0.0, 2 * p - 1)]).astype(complex), o)
        ext = _extension_label(ppm, "Z")
        povm1[ext] = _two_outcome_effects(_Z0, o)
        povm2[ext] = _two_outcome_effects(_Z0, o)
        m1 = QuantumModel(2, {prep: np.outer(_KET0, _KET0)}, povm1)
        m2 = QuantumModel(2, {prep: np.eye(2, dtype=complex) / 2}, povm2)
    else:
        for m, p in probs.items():
            e = _Z0 if p > 0.5 else _Z1
            povm1[m] = _two_outcome_effects(e, o)
            povm2[m] = _two_outcome_effects(np.kron(e, np.eye(2)), o)
        ext = _extension_label(ppm, "parity")
        even = np.kron(_Z0, _Z0) + np.kron(_Z1, _Z1)
        povm1[ext] = _two_outcome_effects(_Z0, o)
        povm2[ext] = _two_outcome_effects(even, o)
        m1 = QuantumModel(2, {prep: np.outer(_KET0, _KET0)}, povm1)
        m2 = QuantumModel(4, {prep: np.kron(np.outer(_KET0, _KET0), np.eye(2) / 2)}, povm2)
    knob = (prep, ext)
    dev = require_distinct(m1, m2, tuple(ppm.knobs) + (knob,))
    return m1.validate(), m2.validate(), knob, dev


def require_distinct(m1: QuantumModel, m2: QuantumModel, knobs: Sequence[Knob],
                     minimum: float = 0.1) -> float:
    """Deviation of the two models' PPMs on ``knobs``; rejects pairs closer than ``minimum``."""
    dev = metric_deviation(evaluate_ppm(m1, knobs), evaluate_ppm(m2, knobs))
    if dev < minimum:
        raise ModelValidationError(f"models are not metrically distinct (deviation {dev:.3g})")
    return dev
