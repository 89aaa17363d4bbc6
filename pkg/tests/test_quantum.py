import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from logsync.errors import DomainError, ModelValidationError, UnsupportedError
from logsync.quantum import (PPM, QuantumModel, construct_distinct_models, evaluate_ppm, metric_deviation,
                             require_distinct)

KET0 = np.array([1, 0], complex)
PLUS = np.array([1, 1], complex) / np.sqrt(2)
MINUS = np.array([1, -1], complex) / np.sqrt(2)


def proj(v):
    return np.outer(v, v.conj())


def coin():
    return PPM.from_rows({("s", "m"): (0.5, 0.5)})


class TestEvaluate:
    def test_mixed_state_gives_normalized_traces(self):
        e0 = np.diag([0.7, 0.2, 0.1]).astype(complex)
        model = QuantumModel(3, {"s": np.eye(3) / 3}, {"m": {0: e0, 1: np.eye(3) - e0}})
        assert evaluate_ppm(model).row(("s", "m")) == pytest.approx([1.0 / 3, 2.0 / 3])

    def test_zero_in_x_basis(self):
        model = QuantumModel(2, {"s": proj(KET0)}, {"x": {"+": proj(PLUS), "-": proj(MINUS)}})
        ppm = evaluate_ppm(model)
        assert ppm.prob(("s", "x"), "+") == pytest.approx(0.5, abs=1e-15)

    def test_eigenstate_is_deterministic(self):
        model = QuantumModel(2, {"s": proj(PLUS)}, {"x": {"+": proj(PLUS), "-": proj(MINUS)}})
        assert evaluate_ppm(model).row(("s", "x")) == pytest.approx([1.0, 0.0], abs=1e-15)


class TestDeviation:
    def test_self_and_extremes(self):
        p = coin()
        assert metric_deviation(p, p) == 0.0
        det = PPM.from_rows({("s", "m"): (1.0, 0.0)})
        assert metric_deviation(det, p) == pytest.approx(0.5)

    def test_padding_across_detector_domains(self):
        p = PPM.from_rows({("s", "m"): (1.0, 0.0)}, outcomes=("a", "b"))
        q = PPM.from_rows({("s", "m"): (0.5, 0.5)}, outcomes=("a", "c"))
        assert metric_deviation(p, q) == pytest.approx(0.5)

    def test_domain_mismatch(self):
        with pytest.raises(DomainError):
            metric_deviation(coin(), PPM.from_rows({("s", "other"): (0.5, 0.5)}))


class TestConstruction:
    def test_coin(self):
        ppm = coin()
        m1, m2, knob, dev = construct_distinct_models(ppm)
        assert knob == ("s", "Z")
        assert dev == pytest.approx(0.5, abs=1e-12)
        for m in (m1, m2):
            assert metric_deviation(evaluate_ppm(m, ppm.knobs), ppm) < 1e-10
        # pure zero state measured in the X basis against the maximally mixed state in Z
        assert np.allclose(m1.rho["s"], proj(KET0))
        assert np.allclose(m1.povm["m"][0], proj(PLUS))
        assert np.allclose(m2.rho["s"], np.eye(2) / 2)
        assert np.allclose(m2.povm["m"][0], np.diag([1, 0]))
        assert evaluate_ppm(m1, [knob]).row(knob) == pytest.approx([1.0, 0.0])
        assert evaluate_ppm(m2, [knob]).row(knob) == pytest.approx([0.5, 0.5])

    def test_deterministic_rows_need_an_ancilla(self):
        ppm = PPM.from_rows({("s", "a"): (1.0, 0.0), ("s", "b"): (0.0, 1.0)})
        m1, m2, knob, dev = construct_distinct_models(ppm)
        assert (m1.dim, m2.dim) == (2, 4)
        assert knob == ("s", "parity")
        assert dev >= 0.1
        for m in (m1, m2):
            assert metric_deviation(evaluate_ppm(m, ppm.knobs), ppm) < 1e-10

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=5))
    def test_round_trip_and_distinct(self, probs):
        ppm = PPM.from_rows({("s", f"m{i}"): (p, 1.0 - p) for i, p in enumerate(probs)})
        m1, m2, knob, dev = construct_distinct_models(ppm)
        for m in (m1, m2):
            assert metric_deviation(evaluate_ppm(m, ppm.knobs), ppm) < 1e-10
        assert dev >= 0.1
        assert knob not in ppm.knobs

    def test_extension_label_avoids_existing(self):
        ppm = PPM.from_rows({("s", "Z"): (0.3, 0.7)})
        assert construct_distinct_models(ppm)[2] == ("s", "Z'")

    @pytest.mark.parametrize("rows, outcomes", [
        ({("s", "m"): (0.2, 0.3, 0.5)}, (0, 1, 2)),
        ({("s", "m"): (0.5, 0.5), ("t", "m"): (0.1, 0.9)}, (0, 1)),
    ])
    def test_unsupported(self, rows, outcomes):
        with pytest.raises(UnsupportedError):
            construct_distinct_models(PPM.from_rows(rows, outcomes))

    def test_identical_models_rejected(self):
        m1, _, knob, _ = construct_distinct_models(coin())
        with pytest.raises(ModelValidationError):
            require_distinct(m1, m1, [("s", "m"), knob])


class TestValidation:
    def test_rows(self):
        with pytest.raises(ModelValidationError):
            PPM.from_rows({("s", "m"): (0.6, 0.6)})
        with pytest.raises(ModelValidationError):
            PPM.from_rows({("s", "m"): (1.2, -0.2)})

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-6, 1.0), st.floats(0.0, 2 * np.pi))
    def test_non_psd_rho_rejected(self, eps, th):
        v = np.array([np.cos(th), np.sin(th)], complex)
        rho = proj(KET0) - eps * proj(v) + eps * proj(np.array([-np.sin(th), np.cos(th)], complex))
        # unit trace and Hermitian, but an eigenvalue below zero
        if np.min(np.linalg.eigvalsh(rho)) > -1e-9:
            return
        m = QuantumModel(2, {"s": rho}, {"z": {0: proj(KET0), 1: np.eye(2) - proj(KET0)}})
        with pytest.raises(ModelValidationError):
            m.validate()

    @settings(max_examples=50, deadline=None)
    @given(st.floats(1e-6, 0.5))
    def test_incomplete_povm_rejected(self, eps):
        m = QuantumModel(2, {"s": proj(KET0)}, {"z": {0: proj(KET0), 1: (1 - eps) * (np.eye(2) - proj(KET0))}})
        with pytest.raises(ModelValidationError):
            m.validate()

    def test_trace_and_shape(self):
        with pytest.raises(ModelValidationError):
            QuantumModel(2, {"s": 2 * proj(KET0)}, {}).validate()
        with pytest.raises(ModelValidationError):
            QuantumModel(3, {"s": proj(KET0)}, {}).validate()


def test_json_round_trips():
    m1, m2, knob, _ = construct_distinct_models(PPM.from_rows({("s", "m"): (0.3, 0.7)}))
    for m in (m1, m2):
        back = QuantumModel.from_json(m.to_json())
        assert metric_deviation(evaluate_ppm(back), evaluate_ppm(m)) < 1e-15
    ppm = PPM.from_rows({("s", "m"): (0.3, 0.7)}, outcomes=("up", "down"))
    assert PPM.from_json(ppm.to_json()) == ppm
