"""scikit-learn style wrappers: fit on one experiment, predict control inputs.

``fit(X, U)`` takes the state samples x(0..T) as rows of ``X`` (shape
(T+1, n)) and the inputs u(0..T-1) as rows of ``U``; ``predict(X)`` returns
u = K Z(x) row by row. Prebuilt (for instance averaged) data matrices go
through ``fit_data``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .basis import Trajectory, build_data_matrices, eval_Z
from .exceptions import InputError
from .synth import (
    RobustParams,
    synth_ct,
    synth_exact,
    synth_extended,
    synth_min_norm,
    synth_normal_form,
    synth_robust,
    synth_sparse,
    verify_given_K,
)


def _trajectory(X, U, **extra):
    X = check_array(X, ensure_min_samples=2)
    U = check_array(U, ensure_2d=False)
    U = U.reshape(len(U), -1)
    if len(U) != len(X) - 1:
        raise InputError(f"expected {len(X) - 1} input rows for {len(X)} state rows, got {len(U)}")
    return Trajectory(states=X, inputs=U, **extra)


class DictionaryFeatures(TransformerMixin, BaseEstimator):
    """Map rows x to rows Z(x) = [x, Q(x)]."""

    def __init__(self, library):
        self.library = library

    def fit(self, X, y=None):
        X = check_array(X)
        if X.shape[1] != self.library.dim:
            raise InputError(f"expected {self.library.dim} features, got {X.shape[1]}")
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise InputError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return eval_Z(self.library, X.T).T

    def get_feature_names_out(self, input_features=None):
        return np.asarray(self.library.labels, dtype=object)


class _ControllerBase(BaseEstimator):
    _mode = "discrete"

    def _finish(self, data, result):
        self.data_ = data
        self.result_ = result
        self.K_ = result.K
        self.P1_ = result.P1
        self.M_ = result.M
        self.N_ = result.N
        self.n_features_in_ = self.library.dim
        return self

    def fit(self, X, U, Xdot=None):
        extra = {"derivatives": Xdot} if Xdot is not None else {}
        traj = _trajectory(X, U, **extra)
        return self.fit_data(build_data_matrices(traj, self.library, self._mode_for()))

    def _mode_for(self):
        return self._mode

    def predict(self, X):
        check_is_fitted(self, "K_")
        X = check_array(X)
        if X.shape[1] != self.library.dim:
            raise InputError(f"expected {self.library.dim} coordinates, got {X.shape[1]}")
        return (self.K_ @ eval_Z(self.library, X.T)).T


class CancellingController(_ControllerBase):
    """Static controller u = K Z(x) from one of the nominal programs.

    method: "exact", "minnorm", "sparse", "ct" (derivative data) or "verify"
    (certify ``K_given``; None certifies the open loop).
    """

    def __init__(self, library, method="minnorm", norm="spectral", regularize_linear=False, K_given=None, solver=None):
        self.library = library
        self.method = method
        self.norm = norm
        self.regularize_linear = regularize_linear
        self.K_given = K_given
        self.solver = solver

    def _mode_for(self):
        return "continuous" if self.method == "ct" else "discrete"

    def fit_data(self, data):
        m = self.method
        if m == "exact":
            res = synth_exact(data, solver=self.solver)
        elif m == "minnorm":
            res = synth_min_norm(data, self.norm, self.library, self.solver)
        elif m == "sparse":
            res = synth_sparse(data, self.regularize_linear, self.library, self.solver)
        elif m == "ct":
            res = synth_ct(data, self.norm, self.library, self.solver)
        elif m == "verify":
            res = verify_given_K(data, self.K_given, self.norm, self.solver)
        else:
            raise InputError(f"unknown method {m!r}")
        return self._finish(data, res)


class RobustCancellingController(_ControllerBase):
    """Robust design for data corrupted by a process disturbance |d| <= delta.

    ``Delta`` defaults to delta * sqrt(T) * I_s; ``E`` defaults to I_n.
    """

    def __init__(self, library, delta=0.0, Delta=None, Omega=None, lambda1=0.0, lambda2=0.0, E=None, norm="spectral", solver=None):
        self.library = library
        self.delta = delta
        self.Delta = Delta
        self.Omega = Omega
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.E = E
        self.norm = norm
        self.solver = solver

    def params_for(self, data):
        n = data.n_lin
        E = np.eye(n) if self.E is None else np.atleast_2d(np.asarray(self.E, dtype=float))
        s = E.shape[1]
        Delta = self.delta * np.sqrt(data.T) * np.eye(s) if self.Delta is None else self.Delta
        Delta = np.asarray(Delta, dtype=float)
        if Delta.ndim == 0:
            Delta = Delta * np.eye(s)
        Omega = np.eye(n) if self.Omega is None else self.Omega
        return RobustParams(Delta, Omega, self.lambda1, self.lambda2, E)

    def fit_data(self, data):
        return self._finish(data, synth_robust(data, self.params_for(data), self.norm, self.solver))


class DynamicCancellingController(_ControllerBase):
    """Dynamic controller u+ = K [xi; Q(xi)] with xi = (x, u).

    ``library`` acts on (x, u). ``predict`` takes rows (x, u) and returns u+.
    """

    _mode = "extended"

    def __init__(self, library, norm="spectral", solver=None):
        self.library = library
        self.norm = norm
        self.solver = solver

    def fit_data(self, data):
        return self._finish(data, synth_extended(data, self.norm, self.library, self.solver))


class NormalFormController(_ControllerBase):
    """Linearising controller u = K [w; Q(x)] in output coordinates w.

    ``fit(X, U, y)`` needs the measured outputs y(k); ``predict`` takes rows
    of [w, x] and returns u.
    """

    _mode = "output"

    def __init__(self, library, solver=None):
        self.library = library
        self.solver = solver

    def fit(self, X, U, y=None):
        if y is None:
            raise InputError("normal-form design needs the output samples y")
        traj = _trajectory(X, U, outputs=np.asarray(y, dtype=float).ravel())
        return self.fit_data(build_data_matrices(traj, self.library, "output"))

    def fit_data(self, data):
        res = synth_normal_form(data, self.solver)
        self.k1_ = res.k1
        return self._finish(data, res)

    def predict(self, WX):
        check_is_fitted(self, "K_")
        WX = check_array(WX)
        n = self.library.n
        if WX.shape[1] != 2 * n:
            raise InputError(f"expected rows [w, x] with {2 * n} entries")
        W, X = WX[:, :n].T, WX[:, n:].T
        return (self.K_ @ np.vstack([W, self.library.eval_Q(X)])).T
