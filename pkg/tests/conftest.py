import numpy as np
import pytest

from rhfe.identify import identify
from rhfe.models import FaultConfig, StateSpaceModel, steady_state_predictor
from rhfe.simulate import FaultProfile, simulate_closed_loop, vtol_model


def quiet_profile(n_f: int) -> FaultProfile:
    return FaultProfile(onset=10**9, channels=tuple(("zero",) for _ in range(n_f)))


@pytest.fixture(scope="session")
def small_model():
    """Stable 3-state plant with 2 outputs and 1 input, cheap to simulate."""
    a = np.array([[0.7, 0.2, 0.0], [0.0, 0.5, 0.1], [0.1, 0.0, 0.4]])
    b = np.array([[1.0], [0.4], [0.0]])
    c = np.array([[1.0, 0.0, 0.5], [0.0, 1.0, 0.0]])
    d = np.zeros((2, 1))
    return StateSpaceModel(
        A=a,
        B=b,
        C=c,
        D=d,
        E=b.copy(),
        F=np.eye(3),
        G=np.zeros((2, 1)),
        Q=0.1 * np.eye(3),
        R=0.2 * np.eye(2),
    )


@pytest.fixture(scope="session")
def small_predictor(small_model):
    return steady_state_predictor(small_model)


@pytest.fixture(scope="session")
def vtol():
    return vtol_model()


@pytest.fixture(scope="session")
def vtol_predictor(vtol):
    model, _ = vtol
    return steady_state_predictor(model)


@pytest.fixture(scope="session")
def vtol_actuator_cfg():
    return FaultConfig(actuators=(1, 2))


@pytest.fixture(scope="session")
def vtol_sensor_cfg():
    return FaultConfig(sensors=(1, 2))


@pytest.fixture(scope="session")
def vtol_ident(vtol, vtol_actuator_cfg):
    """Shared small identification batch on the benchmark model (N=600)."""
    model, ctrl = vtol
    cfg = vtol_actuator_cfg
    traj = simulate_closed_loop(
        model,
        ctrl.with_reference(cov=np.eye(2)),
        quiet_profile(cfg.n_f),
        cfg,
        T=600 + 10,
        seed=12345,
    )
    return identify(traj, 10, cfg)
