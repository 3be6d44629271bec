import numpy as np
import pytest

from rhfe.models import FaultConfig, PredictorModel
from rhfe.zeros import Verdict, invariant_zeros, unbiasedness_check


def det_root_zeros(phi, etilde, c, g):
    """Independent oracle: roots of det([[phi - z I, etilde], [c, g]]) for a
    square Rosenbrock matrix, via polynomial interpolation of the
    determinant."""
    n = phi.shape[0]
    deg = n
    pts = np.exp(2j * np.pi * np.arange(deg + 1) / (deg + 1)) * 2.0
    vals = []
    for z in pts:
        m = np.block([[phi - z * np.eye(n), etilde], [c, g]])
        vals.append(np.linalg.det(m))
    # the determinant polynomial has real coefficients; dropping the tiny
    # imaginary interpolation noise keeps the roots exactly real/conjugate
    coeffs = np.polyfit(pts, vals, deg).real
    roots = np.roots(coeffs)
    return sorted(roots.real[abs(roots.imag) < 1e-9])


def _fixture_predictor(b):
    """2-state single-output predictor whose single actuator channel has
    Etilde = [0, b]^T and direct term 1."""
    phi = np.array([[0.6, 1.0], [0.0, 0.3]])
    c = np.array([[1.0, 0.0]])
    return PredictorModel(
        Phi=phi,
        Btilde=np.array([[0.0], [b]]),
        Etilde=np.zeros((2, 1)),
        K=np.zeros((2, 1)),
        C=c,
        D=np.array([[1.0]]),
        G=np.zeros((1, 1)),
        Sigma_e=np.eye(1),
    )


@pytest.mark.parametrize(
    "b,expected_zeros,verdict",
    [
        (-0.54, [-0.3, 1.2], Verdict.BIASED),
        (0.02, [0.4, 0.5], Verdict.ASYMPTOTICALLY_UNBIASED),
    ],
)
def test_fixture_verdicts_with_det_oracle(b, expected_zeros, verdict):
    pred = _fixture_predictor(b)
    cfg = FaultConfig.actuator(1)
    report = unbiasedness_check(pred, cfg)
    assert report.relative_degree == 0
    oracle = det_root_zeros(
        pred.Phi, np.array([[0.0], [b]]), pred.C, np.array([[1.0]])
    )
    assert np.allclose(oracle, expected_zeros, atol=1e-9)
    got = sorted(z.real for z in report.transmission_zeros)
    assert np.allclose(got, expected_zeros, atol=1e-7)
    assert report.verdict == verdict


def test_invariant_zeros_square_pencil_matches_oracle():
    rng = np.random.default_rng(2)
    phi = np.diag([0.5, -0.2, 0.1]) + 0.1 * rng.standard_normal((3, 3))
    et = rng.standard_normal((3, 1))
    c = rng.standard_normal((1, 3))
    g = np.array([[0.7]])
    p0 = np.block([[phi, et], [c, g]])
    p1 = np.zeros_like(p0)
    p1[:3, :3] = np.eye(3)
    zeros = sorted(z.real for z in invariant_zeros(p0, p1) if abs(z.imag) < 1e-9)
    oracle = det_root_zeros(phi, et, c, g)
    assert len(zeros) == len(oracle)
    assert np.allclose(zeros, oracle, atol=1e-7)


def test_vtol_sensor_subsystem_not_biased(vtol_predictor):
    report = unbiasedness_check(vtol_predictor, FaultConfig(sensors=(1, 2)))
    assert report.verdict != Verdict.BIASED
    assert report.relative_degree == 0


def test_vtol_actuator_subsystem_not_biased(vtol_predictor):
    report = unbiasedness_check(vtol_predictor, FaultConfig(actuators=(1, 2)))
    assert report.verdict != Verdict.BIASED
    assert report.relative_degree == 1
    assert report.min_horizon >= report.observability_index + 1
