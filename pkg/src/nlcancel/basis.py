"""Function dictionaries Z(x) = [x; Q(x)], trajectories and data matrices.

A dictionary is a closed vocabulary of scalar basis functions so that values
and gradients at the origin are known analytically. Every basis function
evaluates column-wise: a point array of shape ``(dim,)`` gives a float, an
array of shape ``(dim, N)`` gives ``N`` values.

Monomial ordering
-----------------
``monomials_up_to_degree`` lists, for each total degree ``d = 2..D``, the pure
powers ``x1^d, ..., xn^d`` first and then the mixed monomials in ascending
lexicographic order of their exponent vectors. For two variables this gives
``x1^2, x2^2, x1*x2, x1^3, x2^3, x1*x2^2, x1^2*x2, ...``.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import InputError, TransformationError

RANK_RTOL = 1e-8


def _as_columns(points):
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        return P[:, None], True
    if P.ndim != 2:
        raise InputError(f"points must be 1-D or 2-D, got shape {P.shape}")
    return P, False


class BasisFunction:
    """Scalar function of the coordinate vector, evaluated column-wise."""

    kind: str = ""

    def __call__(self, points):
        P, single = _as_columns(points)
        out = self._eval(P)
        return float(out[0]) if single else out

    def _eval(self, P):
        raise NotImplementedError

    def value_at_zero(self, dim):
        return float(self._eval(np.zeros((dim, 1)))[0])

    def grad_at_zero(self, dim):
        raise NotImplementedError

    def max_index(self):
        raise NotImplementedError

    def label(self, names):
        raise NotImplementedError

    def to_dict(self):
        raise NotImplementedError

    def is_superlinear(self, dim):
        """True when |f(x)|/|x| -> 0 at the origin (all kinds are smooth)."""
        return abs(self.value_at_zero(dim)) == 0.0 and not np.any(self.grad_at_zero(dim))


@dataclass(frozen=True)
class Monomial(BasisFunction):
    exponents: tuple[int, ...]
    kind = "monomial"

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(int(e) for e in self.exponents))
        if any(e < 0 for e in self.exponents):
            raise InputError("monomial exponents must be non-negative")

    @property
    def degree(self):
        return sum(self.exponents)

    def _eval(self, P):
        out = np.ones(P.shape[1])
        for i, e in enumerate(self.exponents):
            if e:
                out = out * P[i] ** e
        return out

    def grad_at_zero(self, dim):
        g = np.zeros(dim)
        if self.degree == 1:
            g[self.exponents.index(1)] = 1.0
        return g

    def max_index(self):
        return len(self.exponents) - 1

    def label(self, names):
        parts = []
        for i, e in enumerate(self.exponents):
            if e == 1:
                parts.append(names[i])
            elif e > 1:
                parts.append(f"{names[i]}^{e}")
        return "*".join(parts) if parts else "1"

    def to_dict(self):
        return {"kind": self.kind, "exponents": list(self.exponents)}


@dataclass(frozen=True)
class Sine(BasisFunction):
    index: int
    kind = "sine"

    def _eval(self, P):
        return np.sin(P[self.index])

    def grad_at_zero(self, dim):
        g = np.zeros(dim)
        g[self.index] = 1.0
        return g

    def max_index(self):
        return self.index

    def label(self, names):
        return f"sin({names[self.index]})"

    def to_dict(self):
        return {"kind": self.kind, "index": self.index}


@dataclass(frozen=True)
class Cosine(BasisFunction):
    index: int
    kind = "cosine"

    def _eval(self, P):
        return np.cos(P[self.index])

    def grad_at_zero(self, dim):
        return np.zeros(dim)

    def max_index(self):
        return self.index

    def label(self, names):
        return f"cos({names[self.index]})"

    def to_dict(self):
        return {"kind": self.kind, "index": self.index}


@dataclass(frozen=True)
class SineRemainder(BasisFunction):
    """sin(x_i) - x_i."""

    index: int
    kind = "sine_remainder"

    def _eval(self, P):
        x = P[self.index]
        return np.sin(x) - x

    def grad_at_zero(self, dim):
        return np.zeros(dim)

    def max_index(self):
        return self.index

    def label(self, names):
        return f"sin({names[self.index]})-{names[self.index]}"

    def to_dict(self):
        return {"kind": self.kind, "index": self.index}


@dataclass(frozen=True)
class CosineRemainderProduct(BasisFunction):
    """(cos(x_i) - 1) * x_j."""

    index: int
    other: int
    kind = "cosine_remainder_product"

    def _eval(self, P):
        return (np.cos(P[self.index]) - 1.0) * P[self.other]

    def grad_at_zero(self, dim):
        return np.zeros(dim)

    def max_index(self):
        return max(self.index, self.other)

    def label(self, names):
        return f"(cos({names[self.index]})-1)*{names[self.other]}"

    def to_dict(self):
        return {"kind": self.kind, "index": self.index, "other": self.other}


@dataclass(frozen=True)
class ScaledProduct(BasisFunction):
    """coefficient * f_1(x) * ... * f_k(x)."""

    coefficient: float
    factors: tuple[BasisFunction, ...]
    kind = "scaled_product"

    def __post_init__(self):
        object.__setattr__(self, "coefficient", float(self.coefficient))
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise InputError("scaled_product needs at least one factor")

    def _eval(self, P):
        out = np.full(P.shape[1], self.coefficient)
        for f in self.factors:
            out = out * f._eval(P)
        return out

    def grad_at_zero(self, dim):
        values = [f.value_at_zero(dim) for f in self.factors]
        g = np.zeros(dim)
        for i, f in enumerate(self.factors):
            rest = np.prod([v for j, v in enumerate(values) if j != i])
            if rest:
                g = g + rest * f.grad_at_zero(dim)
        return self.coefficient * g

    def max_index(self):
        return max(f.max_index() for f in self.factors)

    def label(self, names):
        body = "*".join(
            f"({f.label(names)})" if isinstance(f, (SineRemainder, ScaledProduct, LinearRemainder)) else f.label(names)
            for f in self.factors
        )
        return body if self.coefficient == 1.0 else f"{self.coefficient:g}*{body}"

    def to_dict(self):
        return {
            "kind": self.kind,
            "coefficient": self.coefficient,
            "factors": [f.to_dict() for f in self.factors],
        }


@dataclass(frozen=True)
class LinearRemainder(BasisFunction):
    """base(x) - gradient . x; produced by ``taylor_remainder`` for kinds
    without a dedicated remainder form."""

    base: BasisFunction
    gradient: tuple[float, ...]
    kind = "linear_remainder"

    def __post_init__(self):
        object.__setattr__(self, "gradient", tuple(float(g) for g in self.gradient))

    def _eval(self, P):
        g = np.asarray(self.gradient)
        return self.base._eval(P) - g @ P[: len(g)]

    def grad_at_zero(self, dim):
        return self.base.grad_at_zero(dim) - np.pad(np.asarray(self.gradient), (0, dim - len(self.gradient)))

    def max_index(self):
        return max(self.base.max_index(), len(self.gradient) - 1)

    def label(self, names):
        lin = " - ".join(f"{g:g}*{names[i]}" for i, g in enumerate(self.gradient) if g)
        return f"{self.base.label(names)} - {lin}" if lin else self.base.label(names)

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "gradient": list(self.gradient)}


_KINDS = {
    "monomial": lambda d: Monomial(tuple(d["exponents"])),
    "sine": lambda d: Sine(int(d["index"])),
    "cosine": lambda d: Cosine(int(d["index"])),
    "sine_remainder": lambda d: SineRemainder(int(d["index"])),
    "cosine_remainder_product": lambda d: CosineRemainderProduct(int(d["index"]), int(d["other"])),
    "scaled_product": lambda d: ScaledProduct(
        float(d.get("coefficient", 1.0)), tuple(basis_function_from_dict(f) for f in d["factors"])
    ),
    "linear_remainder": lambda d: LinearRemainder(basis_function_from_dict(d["base"]), tuple(d["gradient"])),
}


def basis_function_from_dict(d):
    try:
        return _KINDS[d["kind"]](d)
    except KeyError as exc:
        raise InputError(f"unknown or incomplete basis function spec {d!r}") from exc


def _is_linear(f, dim, rng=np.random.default_rng(0)):
    if f.value_at_zero(dim) != 0.0:
        return False
    P = rng.uniform(-1.5, 1.5, size=(dim, 16))
    return bool(np.allclose(f._eval(P), f.grad_at_zero(dim) @ P, rtol=0, atol=1e-12))


@dataclass(frozen=True)
class BasisLibrary:
    """Dictionary Z = [coordinates; Q(coordinates)].

    ``n`` is the state dimension; ``m > 0`` marks an extended dictionary whose
    coordinates are (x, u).
    """

    n: int
    Q: tuple[BasisFunction, ...] = ()
    m: int = 0
    names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "Q", tuple(self.Q))
        if self.n < 1 or self.m < 0:
            raise InputError("library needs n >= 1 and m >= 0")
        if self.names is None:
            names = tuple(f"x{i + 1}" for i in range(self.n)) + tuple(f"u{i + 1}" for i in range(self.m))
            object.__setattr__(self, "names", names)
        elif len(self.names) != self.dim:
            raise InputError("names must match the coordinate dimension")
        for f in self.Q:
            if f.max_index() >= self.dim:
                raise InputError(f"{f!r} references a coordinate beyond dimension {self.dim}")
            if _is_linear(f, self.dim):
                raise InputError(f"Q entry {f.label(self.names)} is linear and duplicates the identity block")

    @property
    def dim(self):
        return self.n + self.m

    @property
    def S(self):
        return self.dim + len(self.Q)

    @property
    def labels(self):
        return list(self.names) + [f.label(self.names) for f in self.Q]

    def eval_Q(self, points):
        P, single = _as_columns(points)
        if P.shape[0] != self.dim:
            raise InputError(f"point dimension {P.shape[0]} != library dimension {self.dim}")
        out = np.vstack([f._eval(P) for f in self.Q]) if self.Q else np.zeros((0, P.shape[1]))
        return out[:, 0] if single else out

    def __call__(self, points):
        return eval_Z(self, points)

    def is_superlinear(self):
        return all(f.is_superlinear(self.dim) for f in self.Q)

    def to_dict(self):
        return {"n": self.n, "m": self.m, "names": list(self.names), "Q": [f.to_dict() for f in self.Q]}

    @classmethod
    def from_dict(cls, d):
        names = d.get("names")
        return cls(
            n=int(d["n"]),
            m=int(d.get("m", 0)),
            Q=tuple(basis_function_from_dict(f) for f in d.get("Q", [])),
            names=tuple(names) if names else None,
        )


def eval_Z(library, point):
    """Stack the coordinates over Q evaluated in library order."""
    P, single = _as_columns(point)
    if P.shape[0] != library.dim:
        raise InputError(f"point dimension {P.shape[0]} != library dimension {library.dim}")
    Z = np.vstack([P, library.eval_Q(P)])
    return Z[:, 0] if single else Z


def _ordered_exponents(n, degree):
    exps = [e for e in itertools.product(range(degree + 1), repeat=n) if sum(e) == degree]
    pure = [tuple(degree if j == i else 0 for j in range(n)) for i in range(n)]
    mixed = sorted(e for e in exps if e not in pure)
    return pure + mixed


def monomials_up_to_degree(n, d, names=None):
    """Library whose Q holds every monomial of total degree 2..d."""
    if n < 1:
        raise InputError("n must be >= 1")
    if d < 2:
        raise InputError("degree must be >= 2, otherwise Q is empty")
    Q = [Monomial(e) for deg in range(2, d + 1) for e in _ordered_exponents(n, deg)]
    return BasisLibrary(n=n, Q=tuple(Q), names=names)


def _remainder_of(f, dim, grad):
    if not np.any(grad):
        return f
    if isinstance(f, Sine):
        return SineRemainder(f.index)
    if isinstance(f, ScaledProduct) and f.coefficient == 1.0 and len(f.factors) == 2:
        a, b = f.factors
        if isinstance(b, Cosine):
            a, b = b, a
        if isinstance(a, Cosine) and isinstance(b, Monomial) and b.degree == 1:
            return CosineRemainderProduct(a.index, b.exponents.index(1))
    return LinearRemainder(f, tuple(grad))


def taylor_remainder(library):
    """Split Q(x) = F x + r(x) at the origin.

    Returns ``(F, remainder_library)`` where ``F`` is the Jacobian of Q at 0
    and the new library's Q is r.
    """
    dim = library.dim
    rows, remainders = [], []
    for f in library.Q:
        name = f.label(library.names)
        v0 = f.value_at_zero(dim)
        if v0 != 0.0:
            raise TransformationError(f"{name} does not vanish at the origin (value {v0:g})")
        grad = f.grad_at_zero(dim)
        if not np.all(np.isfinite(grad)):
            raise TransformationError(f"{name} is not differentiable at the origin")
        rows.append(grad)
        remainders.append(_remainder_of(f, dim, grad))
    F = np.array(rows).reshape(len(rows), dim)
    return F, BasisLibrary(n=library.n, m=library.m, Q=tuple(remainders), names=library.names)


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class Trajectory:
    """Samples x(0..T) with inputs u(0..T-1) and optional side channels.

    Arrays are time-major: ``states`` has shape (T+1, n), ``inputs`` (T, m).
    ``derivatives`` (T, n) holds xdot(k) in continuous-time experiments,
    ``disturbances`` (T, s) the ground-truth d(k) (harness only) and
    ``outputs`` (T+1,) the measured y(k).
    """

    states: np.ndarray
    inputs: np.ndarray
    derivatives: np.ndarray | None = None
    disturbances: np.ndarray | None = None
    outputs: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.states, dtype=float))
        u = np.asarray(self.inputs, dtype=float)
        u = u.reshape(len(u), -1) if u.size else u.reshape(x.shape[0] - 1, 0)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u)
        T = x.shape[0] - 1
        if T < 1:
            raise InputError("a trajectory needs at least one transition")
        if u.shape[0] != T:
            raise InputError(f"{u.shape[0]} inputs for {T} transitions")
        for name in ("derivatives", "disturbances"):
            a = getattr(self, name)
            if a is not None:
                a = np.asarray(a, dtype=float)
                a = a.reshape(len(a), -1)
                if a.shape[0] < T:
                    raise InputError(f"{name} has {a.shape[0]} rows, need {T}")
                object.__setattr__(self, name, a[:T])
        if self.outputs is not None:
            y = np.asarray(self.outputs, dtype=float).ravel()
            if y.shape[0] != T + 1:
                raise InputError(f"outputs has {y.shape[0]} samples, need {T + 1}")
            object.__setattr__(self, "outputs", y)
        for name in ("states", "inputs", "derivatives", "disturbances", "outputs"):
            a = getattr(self, name)
            if a is not None and not np.all(np.isfinite(a)):
                raise InputError(f"{name} contains non-finite entries")

    @property
    def T(self):
        return self.states.shape[0] - 1

    @property
    def n(self):
        return self.states.shape[1]

    @property
    def m(self):
        return self.inputs.shape[1]

    def to_csv(self, path):
        n, m, T = self.n, self.m, self.T
        header = ["k"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
        if self.derivatives is not None:
            header += [f"xdot{i + 1}" for i in range(n)]
        if self.disturbances is not None:
            header += [f"d{i + 1}" for i in range(self.disturbances.shape[1])]
        if self.outputs is not None:
            header.append("y")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for k in range(T + 1):
                row = [str(k)] + [repr(float(v)) for v in self.states[k]]
                for arr in (self.inputs, self.derivatives, self.disturbances):
                    if arr is None:
                        continue
                    row += [repr(float(v)) for v in arr[k]] if k < T else [""] * arr.shape[1]
                if self.outputs is not None:
                    row.append(repr(float(self.outputs[k])))
                w.writerow(row)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not header or header[0] != "k":
            raise InputError(f"{path}: first column must be 'k'")

        def cols(prefix):
            idx = [i for i, h in enumerate(header) if h.startswith(prefix) and h[len(prefix):].isdigit()]
            return sorted(idx, key=lambda i: int(header[i][len(prefix):]))

        def grab(idx, nrows):
            return np.array([[float(r[i]) for i in idx] for r in body[:nrows]]) if idx else None

        T = len(body) - 1
        xi = cols("x")
        if not xi:
            raise InputError(f"{path}: no state columns")
        states = grab(xi, T + 1)
        inputs = grab(cols("u"), T)
        y = [i for i, h in enumerate(header) if h == "y"]
        return cls(
            states=states,
            inputs=inputs if inputs is not None else np.zeros((T, 0)),
            derivatives=grab(cols("xdot"), T),
            disturbances=grab(cols("d"), T),
            outputs=np.array([float(r[y[0]]) for r in body]) if y else None,
        )


# ---------------------------------------------------------------------------
# data matrices

MODES = ("discrete", "continuous", "extended", "output")


@dataclass(frozen=True)
class DataMatrices:
    """Column-wise data matrices U0, X0, X1, Z0.

    The same four slots hold the mode-specific variants: in ``extended``
    mode they are V0, Xi0, Xi1 and the extended Z0; in ``output`` mode X0/X1
    are W0/W1 and Z0 = [W0; Q0]. ``n_lin`` is the size of the identity block.
    ``D0`` is the ground-truth disturbance matrix when the harness knows it.
    """

    U0: np.ndarray
    X0: np.ndarray
    X1: np.ndarray
    Z0: np.ndarray
    mode: str = "discrete"
    n_lin: int | None = None
    D0: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise InputError(f"unknown mode {self.mode!r}")
        for name in ("U0", "X0", "X1", "Z0"):
            object.__setattr__(self, name, np.atleast_2d(np.asarray(getattr(self, name), dtype=float)))
        T = self.X0.shape[1]
        if any(getattr(self, k).shape[1] != T for k in ("U0", "X1", "Z0")):
            raise InputError("data matrices must share the column count T")
        if self.n_lin is None:
            object.__setattr__(self, "n_lin", self.X0.shape[0])
        if self.D0 is not None:
            object.__setattr__(self, "D0", np.atleast_2d(np.asarray(self.D0, dtype=float)))

    @property
    def T(self):
        return self.X0.shape[1]

    @property
    def S(self):
        return self.Z0.shape[0]

    @property
    def n(self):
        return self.n_lin

    @property
    def m(self):
        return self.U0.shape[0]

    @property
    def derivative_data(self):
        return self.mode == "continuous"

    # mode aliases
    V0 = property(lambda self: self.U0)
    Xi0 = property(lambda self: self.X0)
    Xi1 = property(lambda self: self.X1)
    W0 = property(lambda self: self.X0)
    W1 = property(lambda self: self.X1)
    Q0 = property(lambda self: self.Z0[self.n_lin :])


def data_matrices_to_csv(data, path):
    """One row per column k; headers are prefixed U0:, X0:, X1:, Z0: and D0:."""
    labels = list(data.labels) if data.labels else [f"z{i + 1}" for i in range(data.S)]
    blocks = [("U0", data.U0, [f"u{i + 1}" for i in range(data.m)]),
              ("X0", data.X0, [f"x{i + 1}" for i in range(data.X0.shape[0])]),
              ("X1", data.X1, [f"x{i + 1}" for i in range(data.X1.shape[0])]),
              ("Z0", data.Z0, labels)]
    if data.D0 is not None:
        blocks.append(("D0", data.D0, [f"d{i + 1}" for i in range(data.D0.shape[0])]))
    header = ["k"] + [f"{b}:{name}" for b, _, names in blocks for name in names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"#mode={data.mode}", f"n_lin={data.n_lin}"])
        w.writerow(header)
        for k in range(data.T):
            w.writerow([str(k)] + [repr(float(v)) for _, M, _ in blocks for v in M[:, k]])


def data_matrices_from_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    meta = dict(c.lstrip("#").split("=", 1) for c in rows[0])
    header, body = rows[1], np.array([[float(v) for v in r] for r in rows[2:]])
    def block(prefix):
        idx = [i for i, h in enumerate(header) if h.startswith(prefix + ":")]
        return (body[:, idx].T if idx else None), [header[i].split(":", 1)[1] for i in idx]
    U0, _ = block("U0")
    Z0, labels = block("Z0")
    D0, _ = block("D0")
    return DataMatrices(U0=U0 if U0 is not None else np.zeros((0, body.shape[0])), X0=block("X0")[0],
                        X1=block("X1")[0], Z0=Z0, mode=meta["mode"], n_lin=int(meta["n_lin"]), D0=D0,
                        labels=tuple(labels))


def is_data_matrices_csv(path):
    with open(path, encoding="utf-8") as fh:
        return fh.readline().startswith("#mode=")


def build_data_matrices(traj, library, mode="discrete"):
    """Assemble DataMatrices from one trajectory."""
    if mode not in MODES:
        raise InputError(f"unknown mode {mode!r}")
    T, n = traj.T, traj.n
    d = traj.disturbances
    if mode == "extended":
        if library.m != traj.m or library.n != n:
            raise InputError("extended mode needs a library over (x, u) matching the trajectory")
        if T < 2:
            raise InputError("extended mode needs at least two transitions")
        xi = np.hstack([traj.states[:T], traj.inputs]).T  # xi(0..T-1)
        Xi0, Xi1 = xi[:, :-1], xi[:, 1:]
        return DataMatrices(
            U0=traj.inputs[1:].T,
            X0=Xi0,
            X1=Xi1,
            Z0=eval_Z(library, Xi0),
            mode=mode,
            n_lin=library.dim,
            D0=None if d is None else d[: T - 1].T,
            labels=tuple(library.labels),
        )
    if library.m != 0 or library.n != n:
        raise InputError(f"library dimension {library.dim} does not match state dimension {n}")
    if mode == "output":
        if traj.outputs is None:
            raise InputError("output mode needs output samples y(k)")
        Tc = T - n + 1
        if Tc < 1:
            raise InputError("not enough output samples for the requested state dimension")
        y = traj.outputs
        W0 = np.vstack([y[i : i + Tc] for i in range(n)])
        W1 = np.vstack([y[i + 1 : i + 1 + Tc] for i in range(n)])
        Q0 = library.eval_Q(traj.states[:Tc].T)
        labels = tuple(f"w{i + 1}" for i in range(n)) + tuple(library.labels[n:])
        return DataMatrices(
            U0=traj.inputs[:Tc].T,
            X0=W0,
            X1=W1,
            Z0=np.vstack([W0, Q0]),
            mode=mode,
            n_lin=n,
            D0=None if d is None else d[:Tc].T,
            labels=labels,
        )
    X0 = traj.states[:-1].T
    if mode == "continuous":
        if traj.derivatives is None:
            raise InputError("continuous mode needs derivative samples xdot(k)")
        X1 = traj.derivatives.T
    else:
        X1 = traj.states[1:].T
    return DataMatrices(
        U0=traj.inputs.T,
        X0=X0,
        X1=X1,
        Z0=eval_Z(library, X0),
        mode=mode,
        n_lin=n,
        D0=None if d is None else d.T,
        labels=tuple(library.labels),
    )


@dataclass(frozen=True)
class RankReport:
    rows: int
    rank: int
    singular_values: np.ndarray

    @property
    def full_row_rank(self):
        return self.rank == self.rows

    def __str__(self):
        return "full_row_rank" if self.full_row_rank else f"deficient({self.rank}/{self.rows})"


def rank_richness_check(matrix, tol=RANK_RTOL):
    """Numerical row rank: singular values below tol * max count as zero."""
    A = np.atleast_2d(np.asarray(matrix, dtype=float))
    s = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0
    return RankReport(rows=A.shape[0], rank=rank, singular_values=s)


def richness_report(data, tol=RANK_RTOL):
    """Both checks: Z0 (needed for feasibility) and [U0; Z0] (parametrization)."""
    return {
        "Z0": rank_richness_check(data.Z0, tol),
        "U0Z0": rank_richness_check(np.vstack([data.U0, data.Z0]), tol),
    }


def stack_points(points: Sequence[np.ndarray]):
    return np.column_stack(points)
