"""Ground-truth models, experiments, closed-loop rollouts and data averaging.

Everything here is harness code: the synthesis routines never see ``A``,
``B`` or the recorded disturbances.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.integrate import solve_ivp

from .basis import (
    BasisFunction,
    BasisLibrary,
    Cosine,
    DataMatrices,
    Monomial,
    ScaledProduct,
    Sine,
    SineRemainder,
    Trajectory,
    eval_Z,
    monomials_up_to_degree,
)
from .exceptions import DivergenceError, InputError

CONV_EPS = 1e-6
CONV_DWELL = 10
DIVERGENCE_NORM = 1e6


@dataclass(frozen=True)
class SystemModel:
    """x+ (or xdot) = A Z(x[, u]) + B u + E d.

    When ``library.m > 0`` the dictionary is evaluated on (x, u), which is how
    state-dependent input fields such as cos(x1) u are expressed.
    """

    name: str
    A: np.ndarray
    B: np.ndarray
    library: BasisLibrary
    E: np.ndarray | None = None
    time: str = "discrete"
    output_index: int | None = None
    Ts: float = 0.1

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float).reshape(A.shape[0], -1)
        E = np.eye(A.shape[0]) if self.E is None else np.asarray(self.E, dtype=float).reshape(A.shape[0], -1)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "E", E)
        if A.shape[1] != self.library.S:
            raise InputError(f"A has {A.shape[1]} columns, dictionary has {self.library.S} entries")
        if A.shape[0] != self.library.n:
            raise InputError("A row count must equal the state dimension")
        if self.library.m and self.library.m != B.shape[1]:
            raise InputError("input dimension of the dictionary and of B disagree")
        if self.time not in ("discrete", "continuous"):
            raise InputError(f"unknown time semantics {self.time!r}")

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def s(self):
        return self.E.shape[1]

    def vector_field(self, X, U, D=None):
        """Right-hand side for column batches X (n, N), U (m, N), D (s, N)."""
        coords = np.vstack([X, U]) if self.library.m else X
        out = self.A @ eval_Z(self.library, coords) + self.B @ U
        if D is not None:
            out = out + self.E @ D
        return out

    def coefficients_in(self, library, box=1.0, samples=400, seed=0):
        """Express A Z(x) in another dictionary: returns A' with A Z = A' Z'.

        Fitted by least squares on random points; raises if the dictionary
        cannot represent the drift exactly.
        """
        if library.dim != self.library.dim:
            raise InputError("dictionaries act on different coordinates")
        rng = np.random.default_rng(seed)
        P = rng.uniform(-box, box, size=(library.dim, samples))
        target = self.A @ eval_Z(self.library, P)
        Zp = eval_Z(library, P)
        coef = np.linalg.lstsq(Zp.T, target.T, rcond=None)[0].T
        if np.max(np.abs(coef @ Zp - target)) > 1e-9 * max(1.0, np.max(np.abs(target))):
            raise InputError(f"dictionary cannot represent the dynamics of {self.name}")
        coef[np.abs(coef) < 1e-12] = 0.0
        return coef


@dataclass(frozen=True)
class DisturbanceSpec:
    """Law for d(k): none, uniform(delta), gaussian(cov) or state_dependent(fns).

    ``uniform`` samples each of the s components in [-delta/sqrt(s), delta/sqrt(s)]
    so that |d| <= delta holds surely. ``state_dependent`` holds one basis
    function per component, d_i = f_i(x).
    """

    law: str = "none"
    delta: float = 0.0
    cov: np.ndarray | None = None
    functions: tuple[BasisFunction, ...] = ()

    def __post_init__(self):
        if self.law not in ("none", "uniform", "gaussian", "state_dependent"):
            raise InputError(f"unknown disturbance law {self.law!r}")
        if self.delta < 0:
            raise InputError("delta must be non-negative")
        if self.law == "gaussian":
            cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
            if not np.allclose(cov, cov.T) or np.min(np.linalg.eigvalsh(cov)) < -1e-12:
                raise InputError("gaussian covariance must be symmetric PSD")
            object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "functions", tuple(self.functions))

    def sample(self, rng, s, count, X=None):
        """Return an (s, count) disturbance block."""
        if self.law == "none":
            return np.zeros((s, count))
        if self.law == "uniform":
            a = self.delta / np.sqrt(s)
            return rng.uniform(-a, a, size=(s, count))
        if self.law == "gaussian":
            if self.cov.shape != (s, s):
                raise InputError(f"covariance must be {s}x{s}")
            return rng.multivariate_normal(np.zeros(s), self.cov, size=count, method="cholesky").T
        if len(self.functions) != s:
            raise InputError(f"state-dependent law needs {s} functions")
        return np.vstack([f(X) for f in self.functions])

    def covariance(self, s):
        """Covariance of one sample (uniform: (delta^2 / s) / 3 per component)."""
        if self.law == "uniform":
            return np.eye(s) * (self.delta**2 / s) / 3.0
        if self.law == "gaussian":
            return self.cov
        return np.zeros((s, s))


@dataclass(frozen=True)
class ExperimentConfig:
    T: int = 10
    input_range: tuple[float, float] = (-0.5, 0.5)
    x0_range: tuple[float, float] = (-0.5, 0.5)
    seed: int = 0
    reps: int = 1

    def __post_init__(self):
        if self.T < 1 or self.reps < 1:
            raise InputError("T and reps must be >= 1")
        for lo, hi in (self.input_range, self.x0_range):
            if not lo <= hi:
                raise InputError("intervals must satisfy low <= high")

    def to_dict(self):
        return asdict(self)


def _input_rng(config):
    return np.random.default_rng(np.random.SeedSequence([config.seed, 0]))


def _disturbance_rng(config, rep):
    return np.random.default_rng(np.random.SeedSequence([config.seed, 1, rep]))


def simulate(model, disturbance=None, config=None, rep=0, x0=None, inputs=None):
    """Run one open-loop experiment and record the ground-truth disturbance.

    Inputs and the initial state depend only on ``config.seed``, so all
    repetitions share the same input pattern; each repetition draws its own
    disturbance sequence.
    """
    disturbance = disturbance or DisturbanceSpec()
    config = config or ExperimentConfig()
    n, m, s, T = model.n, model.m, model.s, config.T
    rng = _input_rng(config)
    x0_draw = rng.uniform(*config.x0_range, size=n)
    u_draw = rng.uniform(*config.input_range, size=(m, T))
    x = np.asarray(x0_draw if x0 is None else x0, dtype=float).reshape(n)
    U = u_draw if inputs is None else np.asarray(inputs, dtype=float).reshape(m, T)
    drng = _disturbance_rng(config, rep)

    X = np.zeros((n, T + 1))
    X[:, 0] = x
    D = np.zeros((s, T))
    Xdot = np.zeros((n, T)) if model.time == "continuous" else None
    for k in range(T):
        xk = X[:, k : k + 1]
        D[:, k : k + 1] = disturbance.sample(drng, s, 1, xk)
        rhs = model.vector_field(xk, U[:, k : k + 1], D[:, k : k + 1])
        if model.time == "discrete":
            X[:, k + 1] = rhs[:, 0]
        else:
            Xdot[:, k] = rhs[:, 0]
            X[:, k + 1] = _integrate(model, xk[:, 0], U[:, k], D[:, k], model.Ts)
        if not np.all(np.isfinite(X[:, k + 1])) or np.linalg.norm(X[:, k + 1]) > DIVERGENCE_NORM:
            raise DivergenceError(k + 1, float(np.linalg.norm(X[:, k + 1])))

    outputs = X[model.output_index] if model.output_index is not None else None
    return Trajectory(
        states=X.T,
        inputs=U.T,
        derivatives=None if Xdot is None else Xdot.T,
        disturbances=D.T,
        outputs=outputs,
        meta={"model": model.name, "rep": rep, "config": config.to_dict(), "disturbance": disturbance.law},
    )


def _integrate(model, x, u, d, dt):
    # zero-order hold on u and d over one sampling interval
    def f(_, z):
        return model.vector_field(z[:, None], u[:, None], d[:, None])[:, 0]

    sol = solve_ivp(f, (0.0, dt), x, rtol=1e-10, atol=1e-12)
    return sol.y[:, -1]


def simulate_repeated(model, disturbance, config):
    return [simulate(model, disturbance, config, rep=r) for r in range(config.reps)]


def average_datasets(datasets):
    """Entrywise mean of U0, X0, X1, Z0 (and D0 when every dataset has it)."""
    datasets = list(datasets)
    if not datasets:
        raise InputError("nothing to average")
    ref = datasets[0]
    for d in datasets[1:]:
        if d.mode != ref.mode or any(getattr(d, k).shape != getattr(ref, k).shape for k in ("U0", "X0", "X1", "Z0")):
            raise InputError("datasets must share mode and shapes")
    mean = lambda key: np.mean([getattr(d, key) for d in datasets], axis=0)
    has_d = all(d.D0 is not None for d in datasets)
    return DataMatrices(
        U0=mean("U0"),
        X0=mean("X0"),
        X1=mean("X1"),
        Z0=mean("Z0"),
        mode=ref.mode,
        n_lin=ref.n_lin,
        D0=mean("D0") if has_d else None,
        labels=ref.labels,
    )


# ---------------------------------------------------------------------------
# closed loop


@dataclass(frozen=True)
class Controller:
    """u = K Z(x) (static) or u+ = K Z(x, u) (dynamic, u is an extra state)."""

    K: np.ndarray
    library: BasisLibrary
    dynamic: bool = False

    def __post_init__(self):
        K = np.atleast_2d(np.asarray(self.K, dtype=float))
        object.__setattr__(self, "K", K)
        if K.shape[1] != self.library.S:
            raise InputError(f"K has {K.shape[1]} columns, controller dictionary has {self.library.S}")
        if self.dynamic and self.library.m != K.shape[0]:
            raise InputError("a dynamic controller needs a dictionary over (x, u)")

    def __call__(self, coords):
        return self.K @ eval_Z(self.library, coords)


@dataclass
class ClosedLoopRun:
    trajectory: Trajectory
    verdict: str
    step: int | None = None
    extra: dict = field(default_factory=dict)


def _closed_loop_step(model, ctrl, X, Ucur, D):
    """One step for batches. Returns (X+, U+, applied u)."""
    if ctrl.dynamic:
        u = Ucur
        Xn = model.vector_field(X, u, D)
        Un = ctrl(np.vstack([X, u]))
    else:
        u = ctrl(X)
        Xn = model.vector_field(X, u, D)
        Un = u
    return Xn, Un, u


def _ct_step(model, ctrl, x, d, dt):
    def f(_, z):
        return model.vector_field(z[:, None], ctrl(z[:, None]), d[:, None])[:, 0]

    sol = solve_ivp(f, (0.0, dt), x, rtol=1e-9, atol=1e-12)
    return sol.y[:, -1]


def simulate_closed_loop(model, controller, x0, steps=200, disturbance=None, seed=0, u0=None):
    """Roll the closed loop from x0 and classify the outcome.

    converged: |state| < 1e-6 over the final 10 steps; diverged: |state| > 1e6
    (the run stops there); bounded otherwise. For dynamic controllers the
    state includes the integrator.
    """
    disturbance = disturbance or DisturbanceSpec()
    rng = np.random.default_rng(seed)
    n, m, s = model.n, model.m, model.s
    x = np.asarray(x0, dtype=float).reshape(n, 1)
    u = np.zeros((m, 1)) if u0 is None else np.asarray(u0, dtype=float).reshape(m, 1)
    X, U, D = [x[:, 0]], [], []
    verdict, when = "bounded", None
    for k in range(steps):
        d = disturbance.sample(rng, s, 1, x)
        if model.time == "continuous":
            ua = controller(x)
            xn = _ct_step(model, controller, x[:, 0], d[:, 0], model.Ts)[:, None]
            un = ua
        else:
            xn, un, ua = _closed_loop_step(model, controller, x, u, d)
        U.append(ua[:, 0])
        D.append(d[:, 0])
        x, u = xn, un
        X.append(x[:, 0])
        norm = np.linalg.norm(np.vstack([x, u]) if controller.dynamic else x)
        if not np.isfinite(norm) or norm > DIVERGENCE_NORM:
            verdict, when = "diverged", k + 1
            break
    states = np.array(X)
    if verdict != "diverged":
        tail = states[-CONV_DWELL:]
        if len(states) > CONV_DWELL and np.all(np.linalg.norm(tail, axis=1) < CONV_EPS):
            below = np.linalg.norm(states, axis=1) < CONV_EPS
            first = len(below) - np.argmax(~below[::-1]) if not below.all() else 0
            verdict, when = "converged", int(first)
    traj = Trajectory(
        states=states,
        inputs=np.array(U).reshape(len(U), m),
        disturbances=np.array(D).reshape(len(D), s),
        meta={"model": model.name},
    )
    return ClosedLoopRun(traj, verdict, when)


def rollout_batch(model, controller, X0, steps, disturbance=None, seed=0, observer=None):
    """Vectorised discrete closed-loop rollouts from the columns of X0.

    ``observer(k, X)`` is called on every state batch (k = 0..steps) and may
    accumulate statistics. Returns the final states (inf where a run blew up)
    and a boolean "diverged" mask.
    """
    if model.time != "discrete":
        raise InputError("batched rollouts are implemented for discrete-time models")
    disturbance = disturbance or DisturbanceSpec()
    rng = np.random.default_rng(seed)
    X = np.array(X0, dtype=float)
    Nb = X.shape[1]
    U = np.zeros((model.m, Nb))
    dead = np.zeros(Nb, dtype=bool)
    if observer:
        observer(0, X)
    for k in range(steps):
        D = disturbance.sample(rng, model.s, Nb, X)
        with np.errstate(over="ignore", invalid="ignore"):
            X, U, _ = _closed_loop_step(model, controller, X, U, D)
        bad = ~np.all(np.isfinite(X), axis=0) | (np.linalg.norm(np.nan_to_num(X, nan=np.inf), axis=0) > DIVERGENCE_NORM)
        dead |= bad
        X[:, dead] = 0.0
        U[:, dead] = 0.0
        if observer:
            observer(k + 1, np.where(dead, np.nan, X))
    X[:, dead] = np.inf
    return X, dead


# ---------------------------------------------------------------------------
# catalog

PENDULUM = {"Ts": 0.1, "m": 1.0, "l": 1.0, "g": 9.8, "mu": 0.01}


def _pendulum_rows(p):
    Ts, m, l, g, mu = p["Ts"], p["m"], p["l"], p["g"], p["mu"]
    return Ts * g / l, 1.0 - Ts * mu / (m * l**2), Ts / (m * l**2)


def pendulum(**over):
    p = {**PENDULUM, **over}
    a, b, c = _pendulum_rows(p)
    lib = BasisLibrary(2, (Sine(0),))
    A = [[1.0, p["Ts"], 0.0], [0.0, b, a]]
    return SystemModel("pendulum", A, [[0.0], [c]], lib, E=[[0.0], [1.0]], Ts=p["Ts"])


def pendulum_ct(**over):
    p = {**PENDULUM, **over}
    m, l, g, mu = p["m"], p["l"], p["g"], p["mu"]
    lib = BasisLibrary(2, (Sine(0),))
    A = [[0.0, 1.0, 0.0], [0.0, -mu / (m * l**2), g / l]]
    return SystemModel("pendulum-ct", A, [[0.0], [1.0 / (m * l**2)]], lib, E=[[0.0], [1.0]], time="continuous", Ts=p["Ts"])


def pendulum_cos(**over):
    """Force applied at the base: input field Ts/(m l) cos(x1)."""
    p = {**PENDULUM, **over}
    a, b, _ = _pendulum_rows(p)
    cu = ScaledProduct(1.0, (Cosine(0), Monomial((0, 0, 1))))
    lib = BasisLibrary(2, (Sine(0), cu), m=1)
    A = [[1.0, p["Ts"], 0.0, 0.0, 0.0], [0.0, b, 0.0, a, p["Ts"] / (p["m"] * p["l"])]]
    return SystemModel("pendulum-cos", A, [[0.0], [0.0]], lib, E=[[0.0], [1.0]], Ts=p["Ts"])


def pendulum_linear(**over):
    """Linearised pendulum; the sine remainder enters as a disturbance."""
    p = {**PENDULUM, **over}
    a, b, c = _pendulum_rows(p)
    A = [[1.0, p["Ts"]], [a, b]]
    return SystemModel("pendulum-neglected", A, [[0.0], [c]], BasisLibrary(2), E=[[0.0], [1.0]], Ts=p["Ts"])


def neglected_sine_disturbance(**over):
    p = {**PENDULUM, **over}
    a = p["Ts"] * p["g"] / p["l"]
    return DisturbanceSpec("state_dependent", functions=(ScaledProduct(a, (SineRemainder(0),)),))


def _poly(rows, name, output_index=None):
    lib = monomials_up_to_degree(2, 3)
    labels = lib.labels
    A = np.zeros((2, lib.S))
    for i, row in enumerate(rows):
        for lab, v in row.items():
            A[i, labels.index(lab)] = v
    return SystemModel(name, A, [[1.0], [0.0]], lib, E=np.eye(2), output_index=output_index)


def poly2():
    return _poly([{"x2": 1.0, "x1^3": 1.0}, {"x1": 0.5}], "poly2")


def poly4():
    return _poly([{"x2": 1.0, "x1^3": 1.0}, {"x1": 0.5, "x2^2": 0.2}], "poly4")


def poly10():
    return _poly([{"x2^2": 1.0, "x1^3": 1.0}, {"x1": 0.5, "x2^2": 0.2}], "poly10", output_index=1)


CATALOG = {
    "pendulum": (pendulum, lambda: DisturbanceSpec()),
    "pendulum-ct": (pendulum_ct, lambda: DisturbanceSpec()),
    "pendulum-cos": (pendulum_cos, lambda: DisturbanceSpec()),
    "pendulum-neglected": (pendulum_linear, neglected_sine_disturbance),
    "pendulum-noisy": (pendulum, lambda: DisturbanceSpec("uniform", delta=0.01)),
    "poly2": (poly2, lambda: DisturbanceSpec()),
    "poly4": (poly4, lambda: DisturbanceSpec()),
    # each of the two components uniform in [-0.001, 0.001]
    "poly4-noisy": (poly4, lambda: DisturbanceSpec("uniform", delta=0.001 * np.sqrt(2))),
    "poly10": (poly10, lambda: DisturbanceSpec()),
}


def get_model(name):
    """Return (model, default disturbance) for a catalog name."""
    try:
        model_fn, dist_fn = CATALOG[name]
    except KeyError:
        raise InputError(f"unknown model {name!r}; known: {', '.join(sorted(CATALOG))}") from None
    return model_fn(), dist_fn()


def manifest(model, disturbance, config, files=()):
    """Provenance record for an experiment run."""
    return {
        "model": model.name,
        "disturbance": {
            "law": disturbance.law,
            "delta": disturbance.delta,
            "cov": None if disturbance.cov is None else np.asarray(disturbance.cov).tolist(),
            "functions": [f.to_dict() for f in disturbance.functions],
        },
        "config": config.to_dict(),
        "files": list(files),
    }


def dump_manifest(doc, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
