import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from nlcancel.basis import eval_Z, monomials_up_to_degree, taylor_remainder
from nlcancel.estimators import (
    CancellingController,
    DictionaryFeatures,
    DynamicCancellingController,
    NormalFormController,
    RobustCancellingController,
)
from nlcancel.exceptions import InfeasibleError, InputError
from nlcancel.simlab import DisturbanceSpec, ExperimentConfig, get_model, simulate


def _xu(name, T=10, seed=1, dist=None):
    model, d = get_model(name)
    traj = simulate(model, dist or d, ExperimentConfig(T=T, seed=seed))
    return model, traj


def test_features_transform():
    lib = monomials_up_to_degree(2, 3)
    X = np.random.default_rng(0).normal(size=(5, 2))
    feats = DictionaryFeatures(lib).fit(X)
    np.testing.assert_allclose(feats.transform(X), eval_Z(lib, X.T).T)
    assert list(feats.get_feature_names_out()) == lib.labels
    with pytest.raises(InputError):
        feats.transform(np.zeros((2, 3)))


def test_params_and_clone():
    lib = monomials_up_to_degree(2, 3)
    est = CancellingController(lib, method="sparse", regularize_linear=True)
    assert est.get_params()["method"] == "sparse"
    c = clone(est)
    assert c.get_params()["regularize_linear"] is True
    c.set_params(method="exact")
    assert c.method == "exact" and est.method == "sparse"


def test_fit_predict_pendulum():
    model, traj = _xu("pendulum")
    est = CancellingController(model.library, method="exact").fit(traj.states, traj.inputs)
    assert est.result_.entry("sin(x1)") == pytest.approx(-9.8, abs=1e-6)
    X = np.array([[0.1, 0.2], [-0.3, 0.0]])
    np.testing.assert_allclose(est.predict(X), (est.K_ @ eval_Z(model.library, X.T)).T)


def test_predict_before_fit():
    with pytest.raises(NotFittedError):
        CancellingController(monomials_up_to_degree(2, 3)).predict(np.zeros((1, 2)))


def test_input_validation():
    model, traj = _xu("pendulum")
    est = CancellingController(model.library)
    with pytest.raises(InputError):
        est.fit(traj.states, traj.inputs[:-1])
    with pytest.raises(ValueError):
        est.fit(np.full_like(traj.states, np.nan), traj.inputs)
    with pytest.raises(InputError):
        CancellingController(model.library, method="magic").fit(traj.states, traj.inputs)


def test_infeasible_propagates():
    model, traj = _xu("poly4")
    with pytest.raises(InfeasibleError):
        CancellingController(model.library, method="exact").fit(traj.states, traj.inputs)


def test_ct_fit_uses_derivatives():
    model, traj = _xu("pendulum-ct")
    est = CancellingController(model.library, method="ct").fit(traj.states, traj.inputs, traj.derivatives)
    assert est.result_.entry("sin(x1)") == pytest.approx(-9.8, abs=1e-5)


def test_robust_estimator():
    model, traj = _xu("pendulum", T=30, seed=0, dist=DisturbanceSpec("uniform", delta=0.01))
    lib = taylor_remainder(model.library)[1]
    est = RobustCancellingController(lib, delta=0.01, lambda1=0.1, lambda2=0.1, E=model.E)
    est.fit(traj.states, traj.inputs)
    assert est.result_.robust.delta_norm == pytest.approx(0.01 * np.sqrt(30))
    assert est.result_.spectral_radius() < 1


def test_dynamic_estimator():
    model, traj = _xu("pendulum-cos", T=11, seed=3)
    lib = taylor_remainder(model.library)[1]
    est = DynamicCancellingController(lib).fit(traj.states, traj.inputs)
    assert est.predict(np.array([[0.1, 0.0, 0.0]])).shape == (1, 1)


def test_normal_form_estimator():
    model, traj = _xu("poly10", T=20)
    lib = monomials_up_to_degree(2, 4)
    est = NormalFormController(lib).fit(traj.states, traj.inputs, traj.outputs)
    assert -1 < est.k1_ < 1
    assert est.predict(np.zeros((1, 4))).shape == (1, 1)
    with pytest.raises(InputError):
        NormalFormController(lib).fit(traj.states, traj.inputs)
