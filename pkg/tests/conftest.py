import numpy as np
import pytest

from nlcancel.basis import build_data_matrices, monomials_up_to_degree, taylor_remainder
from nlcancel.simlab import DisturbanceSpec, ExperimentConfig, get_model, simulate

ACCEPTANCE = {}


def record(criterion, passed, detail=""):
    ACCEPTANCE[criterion] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


def experiment(name, T=10, seed=1, mode="discrete", library=None, disturbance=None, **kw):
    model, dist = get_model(name)
    lib = library or model.library
    traj = simulate(model, disturbance or dist, ExperimentConfig(T=T, seed=seed, **kw))
    return model, lib, traj, build_data_matrices(traj, lib, mode)


@pytest.fixture(scope="session")
def pendulum_data():
    return experiment("pendulum", T=10, seed=1)


@pytest.fixture(scope="session")
def poly2_data():
    return experiment("poly2", T=10, seed=1)


@pytest.fixture(scope="session")
def poly4_data():
    return experiment("poly4", T=10, seed=1)


@pytest.fixture(scope="session")
def pendulum_noisy_data():
    model, _ = get_model("pendulum")
    lib = taylor_remainder(model.library)[1]
    return experiment("pendulum", T=30, seed=0, library=lib, disturbance=DisturbanceSpec("uniform", delta=0.01))


@pytest.fixture(scope="session")
def poly10_data():
    lib = monomials_up_to_degree(2, 4)
    return experiment("poly10", T=20, seed=1, mode="output", library=lib)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
