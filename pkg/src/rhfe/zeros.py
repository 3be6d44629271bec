"""Invariant zeros of the fault subsystem and the unbiasedness verdict.

The fault estimate is unbiased for every admissible horizon exactly when the
fault subsystem pencil

    [ Phi - lambda*I   Etilde ]
    [ O_{tau+1}        Hf_tau ]

has no transmission zeros; asymptotically unbiased when all its transmission
zeros are strictly inside the unit circle.  Invariant zeros split into
unobservable modes (null vector with zero fault component, harmless) and
transmission zeros (nonzero fault component).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _linalg as la
from .errors import NumericalRankAmbiguity
from .models import FaultConfig, MarkovSet, PredictorModel, fault_matrices, markov_parameters, relative_degree

_PROJECTION_SEEDS = (0x5EED0, 0x5EED1)
# A rank decision this close (as a ratio) to the threshold is refused.
_AMBIGUITY_BAND = 3.0


class Verdict(enum.Enum):
    UNBIASED = "Unbiased"
    ASYMPTOTICALLY_UNBIASED = "AsymptoticallyUnbiased"
    BIASED = "Biased"


@dataclass(frozen=True)
class UnbiasednessReport:
    transmission_zeros: tuple
    unobservable_modes: tuple
    observability_index: int
    relative_degree: int
    verdict: Verdict
    min_horizon: int = field(default=0)


def _fault_pencil(predictor: PredictorModel, etilde, g, tau):
    """P0, P1 of the Rosenbrock pencil P0 - lambda*P1 of the fault subsystem."""
    n = predictor.n
    c, phi = predictor.C, predictor.Phi
    obs = la.observability_matrix(phi, c, tau + 1)
    # Stacked H_0^f..H_tau^f; blocks below tau are zero by the relative degree.
    hf_blocks = [g]
    c_phi = c.copy()
    for _ in range(tau):
        hf_blocks.append(c_phi @ etilde)
        c_phi = c_phi @ phi
    hf = np.vstack(hf_blocks)
    p0 = np.block([[phi, etilde], [obs, hf]])
    p1 = np.zeros_like(p0)
    p1[:n, :n] = np.eye(n)
    return p0, p1


def _candidate_zeros(p0, p1):
    """Generalized eigenvalues of seeded square compressions of the pencil."""
    rows, cols = p0.shape
    cands = []
    for seed in _PROJECTION_SEEDS:
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((rows, cols)))
        a, b = q.T @ p0, q.T @ p1
        ab, _ = scipy.linalg.eig(a, b, homogeneous_eigvals=True)
        for al, be in zip(ab[0], ab[1]):
            if abs(be) > 1e-8 * max(1.0, abs(al)):
                cands.append(al / be)
    return cands


def _pencil_smin(p0, p1, lam):
    m = p0 - lam * p1
    return np.linalg.svd(m, compute_uv=False)[-1]


def invariant_zeros(p0: np.ndarray, p1: np.ndarray):
    """Confirmed invariant zeros of a (possibly non-square) pencil.

    Candidates come from seeded orthonormal compressions to square; each is
    confirmed by a column-rank test on the original pencil, which removes
    projection artifacts.
    """
    scale = la.spectral_norm(p0) + la.spectral_norm(p1)
    thr = max(p0.shape) * scale * la.RANK_RTOL
    confirmed = []
    for lam in _candidate_zeros(p0, p1):
        lam_thr = thr * max(1.0, abs(lam))
        smin = _pencil_smin(p0, p1, lam)
        if smin < lam_thr:
            if any(abs(lam - z) <= 1e-7 * max(1.0, abs(z)) for z in confirmed):
                continue
            confirmed.append(lam)
        elif smin < lam_thr * _AMBIGUITY_BAND:
            raise NumericalRankAmbiguity(
                f"zero candidate {lam}: smallest singular value {smin:.3e} within "
                f"the ambiguity band of threshold {lam_thr:.3e}"
            )
    return confirmed


def unbiasedness_check(
    predictor: PredictorModel, cfg: FaultConfig, tau: int | None = None
) -> UnbiasednessReport:
    """Classify the configured fault subsystem per the transmission-zero
    criterion for (asymptotic) unbiasedness.
    """
    _, g, etilde = fault_matrices(predictor, cfg)
    if tau is None:
        markov = markov_parameters(predictor, cfg, count=2 * predictor.n + 2)
        tau = relative_degree(markov, cfg.n_f)
    p0, p1 = _fault_pencil(predictor, etilde, g, tau)
    zeros = invariant_zeros(p0, p1)

    n = predictor.n
    scale = la.spectral_norm(p0) + la.spectral_norm(p1)
    modes, tzeros = [], []
    for lam in zeros:
        pencil = p0 - lam * p1
        _, _, vh = np.linalg.svd(pencil)
        v = vh.conj().T[:, -1]
        f_part = v[n:]
        if np.linalg.norm(f_part) <= 1e-7 * np.linalg.norm(v):
            modes.append(lam)
        else:
            tzeros.append(lam)

    if not tzeros:
        verdict = Verdict.UNBIASED
    elif all(abs(z) < 1.0 for z in tzeros):
        verdict = Verdict.ASYMPTOTICALLY_UNBIASED
    else:
        verdict = Verdict.BIASED

    nu = la.observability_index(predictor.Phi, predictor.C)
    return UnbiasednessReport(
        transmission_zeros=tuple(tzeros),
        unobservable_modes=tuple(modes),
        observability_index=nu,
        relative_degree=tau,
        verdict=verdict,
        min_horizon=nu + tau,
    )
