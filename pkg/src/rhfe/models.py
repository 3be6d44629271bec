"""System and predictor representations, fault channels, Markov parameters.

The original state-space model drives simulation; its innovation (predictor)
form, obtained through the steady-state Kalman gain, is what the data-driven
estimators are parameterized by.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la
from .errors import (
    IndexOutOfRange,
    NoNonzeroMarkov,
    NonConvergentRiccati,
    RankDeficientFaultChannel,
    ShapeMismatch,
)

RICCATI_RTOL = 1e-12
RICCATI_MAX_ITER = 100_000


def _as_matrix(x, rows=None, cols=None, name="matrix") -> np.ndarray:
    m = np.atleast_2d(np.asarray(x, dtype=float))
    if rows is not None and m.shape[0] != rows:
        raise ShapeMismatch(f"{name}: expected {rows} rows, got {m.shape[0]}")
    if cols is not None and m.shape[1] != cols:
        raise ShapeMismatch(f"{name}: expected {cols} cols, got {m.shape[1]}")
    return m


@dataclass(frozen=True)
class StateSpaceModel:
    """Discrete-time LTI plant with additive faults and Gaussian noises.

    x(k+1) = A x + B u + E f + F w,   y = C x + D u + G f + v,
    with cov(w) = Q, cov(v) = R.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        n = self.A.shape[0]
        _as_matrix(self.A, n, n, "A")
        n_u = self.B.shape[1]
        _as_matrix(self.B, n, n_u, "B")
        n_y = self.C.shape[0]
        _as_matrix(self.C, n_y, n, "C")
        _as_matrix(self.D, n_y, n_u, "D")
        _as_matrix(self.E, n, None, "E")
        n_f = self.E.shape[1]
        _as_matrix(self.G, n_y, n_f, "G")
        n_w = self.F.shape[1]
        _as_matrix(self.F, n, n_w, "F")
        _as_matrix(self.Q, n_w, n_w, "Q")
        _as_matrix(self.R, n_y, n_y, "R")
        if not la.is_psd(self.Q):
            raise ValueError("Q must be symmetric positive semidefinite")
        if np.linalg.eigvalsh(la.symmetrize(self.R)).min() <= 0:
            raise ValueError("R must be positive definite")
        self._check_detectable()
        self._check_unit_circle_controllable()

    # PBH tests on the closed-loop-relevant pairs; violations are
    # constructor errors because no steady-state Kalman gain would exist.
    def _check_detectable(self):
        n = self.n
        for lam in np.linalg.eigvals(self.A):
            if abs(lam) >= 1.0 - la.UNIT_CIRCLE_TOL:
                pencil = np.vstack([self.A - lam * np.eye(n), self.C])
                if la.numerical_rank(pencil) < n:
                    raise ValueError(f"(C, A) not detectable: mode {lam} unobservable")

    def _check_unit_circle_controllable(self):
        n = self.n
        q_half = la.psd_sqrt(self.Q)
        fq = self.F @ q_half
        for lam in np.linalg.eigvals(self.A):
            if abs(1.0 - abs(lam)) < la.UNIT_CIRCLE_TOL:
                pencil = np.hstack([self.A - lam * np.eye(n), fq])
                if la.numerical_rank(pencil) < n:
                    raise ValueError(
                        f"(A, F Q^1/2) has uncontrollable unit-circle mode {lam}"
                    )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_f(self) -> int:
        return self.E.shape[1]

    @property
    def n_w(self) -> int:
        return self.F.shape[1]


@dataclass(frozen=True)
class PredictorModel:
    """One-step-ahead innovation form: x(k+1) = Phi x + Btilde u + Etilde f + K y."""

    Phi: np.ndarray
    Btilde: np.ndarray
    Etilde: np.ndarray
    K: np.ndarray
    C: np.ndarray
    D: np.ndarray
    G: np.ndarray
    Sigma_e: np.ndarray

    def __post_init__(self):
        rho = max(abs(np.linalg.eigvals(self.Phi)))
        if rho >= 1.0:
            raise ValueError(f"predictor matrix unstable: spectral radius {rho:.6g}")
        if np.linalg.eigvalsh(la.symmetrize(self.Sigma_e)).min() <= 0:
            raise ValueError("innovation covariance must be positive definite")

    @property
    def n(self) -> int:
        return self.Phi.shape[0]

    @property
    def n_u(self) -> int:
        return self.Btilde.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    @property
    def n_f(self) -> int:
        return self.Etilde.shape[1]

    @property
    def spectral_radius(self) -> float:
        return float(max(abs(np.linalg.eigvals(self.Phi))))


@dataclass(frozen=True)
class FaultConfig:
    """Which sensor/actuator channels carry additive faults.

    Indices are 1-based.  A single sensor fault is ``FaultConfig(sensors=(j,))``;
    the two-actuator benchmark scenario is ``FaultConfig(actuators=(1, 2))``.
    Columns are ordered sensors first, then actuators.
    """

    sensors: tuple = ()
    actuators: tuple = ()

    def __post_init__(self):
        if not self.sensors and not self.actuators:
            raise ValueError("at least one fault channel required")
        object.__setattr__(self, "sensors", tuple(int(j) for j in self.sensors))
        object.__setattr__(self, "actuators", tuple(int(l) for l in self.actuators))

    @classmethod
    def sensor(cls, j: int) -> "FaultConfig":
        return cls(sensors=(j,))

    @classmethod
    def actuator(cls, l: int) -> "FaultConfig":
        return cls(actuators=(l,))

    @classmethod
    def simultaneous(cls, j: int, l: int) -> "FaultConfig":
        return cls(sensors=(j,), actuators=(l,))

    @property
    def n_f(self) -> int:
        return len(self.sensors) + len(self.actuators)

    @property
    def sensor_only(self) -> bool:
        return not self.actuators

    def validate(self, n_y: int, n_u: int):
        for j in self.sensors:
            if not 1 <= j <= n_y:
                raise IndexOutOfRange(f"sensor index {j} outside 1..{n_y}")
        for l in self.actuators:
            if not 1 <= l <= n_u:
                raise IndexOutOfRange(f"actuator index {l} outside 1..{n_u}")


@dataclass
class MarkovSet:
    """Impulse-response blocks H_i of the predictor, plus (for identified
    sets) the error-sensitivity blocks M_i that map identification
    innovations to parameter errors.

    Blocks beyond ``i_max`` read as zero; for identified sets this encodes
    the past-window truncation (parameters beyond p are taken as zero,
    which is the main modeling approximation of the data-driven pipeline).
    """

    H_u: list
    H_y: list
    H_f: list
    sigma_e: np.ndarray
    M_u: list | None = None
    M_y: list | None = None
    M_f: list | None = None
    p: int | None = None  # truncation index for identified sets
    n_columns: int | None = None  # N-bar of the identification batch

    def __post_init__(self):
        if not (len(self.H_u) == len(self.H_y) == len(self.H_f)):
            raise ShapeMismatch("H_u, H_y, H_f must have equal length")

    @property
    def i_max(self) -> int:
        return len(self.H_u) - 1

    @property
    def n_y(self) -> int:
        return self.H_y[1].shape[0] if len(self.H_y) > 1 else self.H_u[0].shape[0]

    @property
    def n_u(self) -> int:
        return self.H_u[0].shape[1]

    @property
    def n_f(self) -> int:
        return self.H_f[0].shape[1]

    def _get(self, seq: list, i: int, cols: int) -> np.ndarray:
        if i < 0:
            raise IndexError("negative Markov index")
        if i < len(seq):
            return seq[i]
        return np.zeros((self.n_y, cols))

    def hu(self, i: int) -> np.ndarray:
        return self._get(self.H_u, i, self.n_u)

    def hy(self, i: int) -> np.ndarray:
        return self._get(self.H_y, i, self.n_y)

    def hf(self, i: int) -> np.ndarray:
        return self._get(self.H_f, i, self.n_f)

    def _getm(self, seq, i, cols):
        if seq is None:
            raise ValueError("sensitivity blocks not available (true Markov set)")
        if i < len(seq):
            return seq[i]
        return np.zeros((self.n_columns, cols))

    def mu(self, i: int) -> np.ndarray:
        return self._getm(self.M_u, i, self.n_u)

    def my(self, i: int) -> np.ndarray:
        return self._getm(self.M_y, i, self.n_y)

    def mf(self, i: int) -> np.ndarray:
        return self._getm(self.M_f, i, self.n_f)

    @property
    def has_sensitivities(self) -> bool:
        return self.M_u is not None


def steady_state_predictor(model: StateSpaceModel) -> PredictorModel:
    """Predictor form of the plant via the steady-state filtering Riccati
    fixed point, iterated to relative tolerance ``RICCATI_RTOL``.
    """
    a, c = model.A, model.C
    fqf = model.F @ model.Q @ model.F.T
    r = model.R
    p = fqf.copy()
    for _ in range(RICCATI_MAX_ITER):
        s = c @ p @ c.T + r
        apc = a @ p @ c.T
        p_next = a @ p @ a.T - apc @ np.linalg.solve(s, apc.T) + fqf
        p_next = la.symmetrize(p_next)
        delta = np.linalg.norm(p_next - p, "fro")
        p = p_next
        if delta <= RICCATI_RTOL * max(1.0, np.linalg.norm(p, "fro")):
            break
    else:
        raise NonConvergentRiccati(
            "filtering Riccati iteration did not converge; check Assumption on "
            "detectability / unit-circle controllability"
        )
    s = c @ p @ c.T + r
    k = a @ p @ c.T @ np.linalg.inv(s)
    phi = a - k @ c
    return PredictorModel(
        Phi=phi,
        Btilde=model.B - k @ model.D,
        Etilde=model.E - k @ model.G,
        K=k,
        C=c,
        D=model.D,
        G=model.G,
        Sigma_e=la.symmetrize(s),
    )


def fault_matrices(predictor: PredictorModel, cfg: FaultConfig):
    """Per-channel fault input matrices (E, G, Etilde) for the configured
    sensor/actuator channels, columns ordered sensors then actuators.
    """
    cfg.validate(predictor.n_y, predictor.n_u)
    n, n_y = predictor.n, predictor.n_y
    b = predictor.Btilde + predictor.K @ predictor.D  # original B
    e_cols, g_cols, et_cols = [], [], []
    for j in cfg.sensors:
        e_cols.append(np.zeros(n))
        g_cols.append(np.eye(n_y)[:, j - 1])
        et_cols.append(-predictor.K[:, j - 1])
    for l in cfg.actuators:
        e_cols.append(b[:, l - 1])
        g_cols.append(predictor.D[:, l - 1])
        et_cols.append(predictor.Btilde[:, l - 1])
    return (
        np.column_stack(e_cols),
        np.column_stack(g_cols),
        np.column_stack(et_cols),
    )


def markov_parameters(
    predictor: PredictorModel, cfg: FaultConfig, count: int
) -> MarkovSet:
    """True predictor Markov parameters H_0..H_count for inputs, outputs and
    the configured fault channels.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    _, g, etilde = fault_matrices(predictor, cfg)
    c, phi = predictor.C, predictor.Phi
    h_u = [predictor.D.copy()]
    h_y = [np.zeros((predictor.n_y, predictor.n_y))]
    h_f = [g]
    c_phi = c.copy()
    for _ in range(count):
        h_u.append(c_phi @ predictor.Btilde)
        h_y.append(c_phi @ predictor.K)
        h_f.append(c_phi @ etilde)
        c_phi = c_phi @ phi
    return MarkovSet(H_u=h_u, H_y=h_y, H_f=h_f, sigma_e=predictor.Sigma_e.copy())


def relative_degree(markov: MarkovSet, n_f: int | None = None) -> int:
    """Smallest i with a numerically nonzero fault Markov block; also checks
    that block has full column rank.
    """
    if n_f is None:
        n_f = markov.n_f
    scale = max(la.spectral_norm(h) for h in markov.H_f)
    if scale <= 0:
        raise NoNonzeroMarkov("all fault Markov blocks are zero")
    thr = max(markov.H_f[0].shape + (1,)) * scale * la.RANK_RTOL
    for i, h in enumerate(markov.H_f):
        if la.spectral_norm(h) > thr:
            s = np.linalg.svd(h, compute_uv=False)
            rank = int(np.sum(s > max(h.shape) * s[0] * la.RANK_RTOL))
            if rank < n_f:
                raise RankDeficientFaultChannel(
                    f"H_{i}^f has rank {rank} < n_f = {n_f}"
                )
            return i
    raise NoNonzeroMarkov("all fault Markov blocks are numerically zero")
