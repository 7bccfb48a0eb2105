"""Lyapunov decrement bounds, grid-certified regions and probability bounds.

Region estimates are computed on a finite grid. A grid pass is evidence, not a
proof: the decrement is never checked between grid nodes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import sqrtm

from .basis import BasisFunction, BasisLibrary
from .exceptions import CertificateRefused, InputError

BISECT_RTOL = 1e-3
BISECT_ITERS = 40
GRID_POINTS = 201
GRID_BOX = 2.0
GRID_CAP = 1_000_000


@dataclass(frozen=True)
class QuadLyapunov:
    """V(x) = x' Pinv x."""

    Pinv: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.Pinv, dtype=float))
        if np.max(np.abs(P - P.T)) > 1e-10 * max(1.0, np.max(np.abs(P))):
            raise InputError("Lyapunov matrix must be symmetric")
        P = 0.5 * (P + P.T)
        if np.min(np.linalg.eigvalsh(P)) <= 0:
            raise InputError("Lyapunov matrix must be positive definite")
        object.__setattr__(self, "Pinv", P)

    @classmethod
    def from_result(cls, result):
        return cls(np.linalg.inv(result.P1))

    @property
    def P(self):
        return np.linalg.inv(self.Pinv)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return float(X @ self.Pinv @ X)
        return np.einsum("ik,ij,jk->k", X, self.Pinv, X)

    def box_gamma(self, lower, upper):
        """Largest gamma with {V <= gamma} inside the box lower <= x <= upper."""
        lower, upper = np.asarray(lower, float), np.asarray(upper, float)
        reach = np.minimum(upper, -lower)
        if np.any(reach <= 0):
            return 0.0
        return float(np.min(reach**2 / np.diag(self.P)))


def _cols(X):
    X = np.asarray(X, dtype=float)
    return (X[:, None], True) if X.ndim == 1 else (X, False)


def _out(v, single):
    return float(v[0]) if single else v


@dataclass(frozen=True)
class NominalDecrement:
    """h(x) = (Mx + N Q(x))' Pinv (Mx + N Q(x)) - x' Pinv x."""

    M: np.ndarray
    N: np.ndarray
    Pinv: np.ndarray
    library: BasisLibrary

    @classmethod
    def from_result(cls, result, library):
        return cls(result.M, result.N, np.linalg.inv(result.P1), library)

    def successor(self, X):
        X, single = _cols(X)
        Xn = self.M @ X + (self.N @ self.library.eval_Q(X) if self.N.size else 0.0)
        return Xn[:, 0] if single else Xn

    def __call__(self, X):
        X, single = _cols(X)
        Xn = self.successor(X)
        v = np.einsum("ik,ij,jk->k", Xn, self.Pinv, Xn) - np.einsum("ik,ij,jk->k", X, self.Pinv, X)
        return _out(v, single)


def decrement_h(x, model):
    return model(x)


@dataclass(frozen=True)
class AbsBound:
    """State-dependent disturbance bound delta(x) = scale * |f(x)|."""

    function: BasisFunction
    scale: float = 1.0

    def __call__(self, X):
        return self.scale * np.abs(self.function(X))


@dataclass(frozen=True)
class NoisyDecrement:
    """Data-computable upper bounds l(x) and g(x, delta) on V(x+) - V(x).

    Built from the robust design: X1, G1, G2, P1^-1, E, Delta and Omega.
    """

    X1: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    Pinv: np.ndarray
    E: np.ndarray
    Delta: np.ndarray
    Omega: np.ndarray
    library: BasisLibrary
    Phi_low: np.ndarray = field(init=False)
    r3: float = field(init=False)
    delta_norm: float = field(init=False)

    def __post_init__(self):
        Pinv = 0.5 * (self.Pinv + self.Pinv.T)
        object.__setattr__(self, "Pinv", Pinv)
        E = np.atleast_2d(self.E)
        object.__setattr__(self, "E", E)
        object.__setattr__(self, "Phi_low", Pinv @ self.Omega @ Pinv)
        object.__setattr__(self, "r3", float(np.linalg.norm(E.T @ Pinv @ E, 2)))
        object.__setattr__(self, "delta_norm", float(np.linalg.norm(np.atleast_2d(self.Delta), 2)))
        if self.G1.shape[0] != self.X1.shape[1] or self.Pinv.shape[0] != self.X1.shape[0]:
            raise InputError("noisy decrement blocks are inconsistent")

    @classmethod
    def from_result(cls, result, data, library):
        rp = result.robust
        if rp is None:
            raise InputError("result carries no robust parameters")
        E = np.eye(result.n_lin) if rp.E is None else rp.E
        return cls(data.X1, result.G1, result.G2, np.linalg.inv(result.P1), E, rp.Delta, rp.Omega, library)

    def _parts(self, X):
        Q = self.library.eval_Q(X)
        M = self.X1 @ self.G1
        NQ = self.X1 @ (self.G2 @ Q) if self.G2.size else np.zeros_like(X)
        GQ = self.G2 @ Q if self.G2.size else np.zeros((self.G1.shape[0], X.shape[1]))
        G1x = self.G1 @ X
        return M @ X, NQ, G1x, GQ

    def ell(self, X):
        X, single = _cols(X)
        Mx, NQ, G1x, GQ = self._parts(X)
        a = 2 * Mx + NQ
        b = np.linalg.norm(2 * G1x + GQ, axis=0)
        c = np.linalg.norm(GQ, axis=0)
        PE = self.Pinv @ self.E
        l0 = -np.einsum("ik,ij,jk->k", X, self.Phi_low, X)
        l1 = np.einsum("ik,ij,jk->k", a, self.Pinv, NQ)
        l2 = self.delta_norm * np.linalg.norm(PE.T @ a, axis=0) * c
        l3 = self.delta_norm * b * np.linalg.norm(PE.T @ NQ, axis=0)
        l4 = self.delta_norm**2 * self.r3 * b * c
        return _out(l0 + l1 + l2 + l3 + l4, single)

    def g(self, X, delta):
        X, single = _cols(X)
        Mx, NQ, G1x, GQ = self._parts(X)
        dl = delta(X) if callable(delta) else np.broadcast_to(np.asarray(delta, dtype=float), (X.shape[1],))
        r1 = 2 * np.linalg.norm((self.E.T @ self.Pinv) @ (Mx + NQ), axis=0)
        r2 = 2 * self.delta_norm * self.r3 * np.linalg.norm(G1x + GQ, axis=0)
        return _out(r1 * dl + r2 * dl + self.r3 * dl**2, single)

    def bound(self, X, delta=0.0):
        X, single = _cols(X)
        return _out(self.ell(X) + self.g(X, delta), single)

    def __call__(self, X):
        return self.ell(X)


def decrement_ell(x, model):
    return model.ell(x)


def g_of_x(x, delta, model):
    return model.g(x, delta)


# ---------------------------------------------------------------------------
# grids and regions


@dataclass(frozen=True)
class GridSpec:
    lower: tuple
    upper: tuple
    points: int = GRID_POINTS
    cap: int = GRID_CAP

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi):
            raise InputError("grid bounds differ in dimension")
        if any(not (a <= 0 <= b) or a == b for a, b in zip(lo, hi)):
            raise InputError("grid box must contain the origin")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        if self.per_dim < 3:
            raise InputError("grid needs at least 3 points per dimension")

    @classmethod
    def box(cls, n, half_width=GRID_BOX, points=GRID_POINTS, cap=GRID_CAP):
        return cls((-half_width,) * n, (half_width,) * n, points, cap)

    @property
    def dim(self):
        return len(self.lower)

    @property
    def per_dim(self):
        k = self.points
        while k**self.dim > self.cap and k > 3:
            k -= 1
        return k

    def axes(self):
        return [np.linspace(a, b, self.per_dim) for a, b in zip(self.lower, self.upper)]

    def nodes(self):
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.vstack([m.ravel() for m in mesh])

    def cell_area(self):
        return float(np.prod([(b - a) / (self.per_dim - 1) for a, b in zip(self.lower, self.upper)]))


@dataclass
class RegionEstimate:
    """Sublevel-set certificate {V <= gamma} checked on a grid."""

    kind: str
    gamma: float
    lyap: QuadLyapunov
    grid: GridSpec
    points: np.ndarray
    V: np.ndarray
    decrement: np.ndarray
    gamma_interval: tuple | None = None
    max_z_value: float | None = None
    bounded_by: str = ""
    containment: dict | None = None
    notes: list = field(default_factory=list)

    certified_by = "grid"

    @property
    def empty(self):
        return self.kind == "empty" or self.gamma <= 0

    @property
    def in_R(self):
        return self.V <= self.gamma

    @property
    def in_X(self):
        return self.decrement <= 0

    @property
    def in_Z(self):
        return self.in_R & ~self.in_X

    def area(self):
        """Grid estimate of the volume of {V <= gamma}."""
        return 0.0 if self.empty else float(np.count_nonzero(self.in_R) * self.grid.cell_area())

    def contains(self, X):
        return self.lyap(X) <= self.gamma

    def summary(self):
        return {
            "kind": self.kind,
            "gamma": self.gamma,
            "gamma_interval": None if self.gamma_interval is None else list(self.gamma_interval),
            "max_V_plus_bound_on_Z": self.max_z_value,
            "bounded_by": self.bounded_by,
            "certified_by": "grid estimate (decrement checked at grid nodes only)",
            "grid": {"lower": list(self.grid.lower), "upper": list(self.grid.upper), "per_dim": self.grid.per_dim},
            "Pinv": self.lyap.Pinv.tolist(),
            "area": self.area(),
            "containment": self.containment,
            "notes": list(self.notes),
        }

    def to_csv(self, path):
        n = self.points.shape[0]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{i + 1}" for i in range(n)] + ["V", "decrement", "in_X", "in_R", "in_Z"])
            inX, inR, inZ = self.in_X, self.in_R, self.in_Z
            for k in range(self.points.shape[1]):
                w.writerow(
                    [repr(float(v)) for v in self.points[:, k]]
                    + [repr(float(self.V[k])), repr(float(self.decrement[k])), int(inX[k]), int(inR[k]), int(inZ[k])]
                )


def _evaluate(lyap, decrement, grid):
    X = grid.nodes()
    if X.shape[0] != lyap.Pinv.shape[0]:
        raise InputError("grid dimension does not match the Lyapunov function")
    return X, lyap(X), np.asarray(decrement(X), dtype=float)


def estimate_roa(lyap, decrement, grid, kind="ROA"):
    """Largest gamma (bisection, rel. tol 1e-3) with decrement < 0 on {V <= gamma} minus 0.

    gamma is also capped so the sublevel set stays inside the grid box. An
    uncertifiable grid yields kind "empty" with gamma 0.
    """
    X, V, dec = _evaluate(lyap, decrement, grid)
    origin = np.all(X == 0, axis=0)
    bad = (dec >= 0) & ~origin
    g_box = lyap.box_gamma(grid.lower, grid.upper)

    def ok(gamma):
        return not np.any(bad & (V <= gamma))

    if ok(g_box):
        return RegionEstimate(kind, g_box, lyap, grid, X, V, dec, bounded_by="box")
    lo, hi = 0.0, g_box
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
        if lo > 0 and hi - lo <= BISECT_RTOL * lo:
            break
    # lo must also enclose at least one non-origin grid node to count
    if lo <= 0 or not np.any((V <= lo) & ~origin):
        return RegionEstimate("empty", 0.0, lyap, grid, X, V, dec, bounded_by="decrement")
    return RegionEstimate(kind, lo, lyap, grid, X, V, dec, bounded_by="decrement")


def _rpi_intervals(V, F, g_cap):
    """Valid gammas for: V + F <= gamma on {V <= gamma, F > 0}, 0 < gamma <= g_cap.

    Exact on the grid: between consecutive breakpoints of V over the
    positive-F nodes the running maximum of V + F is constant. Returns merged
    closed intervals (lo, hi).
    """
    pos = F > 0
    order = np.argsort(V[pos], kind="stable")
    v = V[pos][order]
    cm = np.maximum.accumulate((V[pos] + F[pos])[order]) if v.size else v
    edges = np.concatenate([[0.0], v, [np.inf]])
    caps = np.concatenate([[-np.inf], cm])
    spans = []  # (lo, hi, hi_closed)
    for k in range(len(edges) - 1):
        lo, hi = max(edges[k], caps[k], 0.0), edges[k + 1]
        if hi > g_cap:
            if lo <= g_cap:
                spans.append((lo, g_cap, True))
            break
        if lo < hi:
            spans.append((lo, hi, False))
    merged = []
    for lo, hi, closed in spans:
        if merged and not merged[-1][2] and merged[-1][1] == lo:
            merged[-1] = (merged[-1][0], hi, closed)
        else:
            merged.append((lo, hi, closed))
    out = []
    for lo, hi, closed in merged:
        top = hi if closed else np.nextafter(hi, 0.0)
        if top > 0 and top >= lo:
            out.append((float(lo), float(top)))
    return out


def certify_rpi(lyap, model, delta, grid, kind="RPI"):
    """Largest certified sublevel set with its contiguous gamma interval.

    For each gamma, Z = {V <= gamma} minus X with X = {l + g <= 0}; the set is
    certified when V + l + g <= gamma on Z (Z empty means {V <= gamma} inside X).
    """
    X = grid.nodes()
    V = lyap(X)
    F = model.bound(X, delta)
    g_cap = lyap.box_gamma(grid.lower, grid.upper)
    ivs = _rpi_intervals(V, F, g_cap)
    if not ivs:
        return RegionEstimate("empty", 0.0, lyap, grid, X, V, F, bounded_by="bound")
    # the grid splits the valid set into many slivers near breakpoints; report
    # the widest contiguous interval, every gamma in it passes the check
    a, b = max(ivs, key=lambda iv: iv[1] - iv[0])
    zmask = (V <= b) & (F > 0)
    zmax = float(np.max(V[zmask] + F[zmask])) if np.any(zmask) else None
    return RegionEstimate(
        kind, float(b), lyap, grid, X, V, F, gamma_interval=(float(a), float(b)), max_z_value=zmax,
        bounded_by="box" if b >= g_cap else "bound",
        notes=[f"{len(ivs)} valid gamma interval(s) on the grid; largest valid gamma {ivs[-1][1]:.6g}"],
    )


def rpi_certified(lyap, model, delta, grid, gamma):
    """Direct check of the invariance condition for one gamma on the grid."""
    X = grid.nodes()
    V = lyap(X)
    F = model.bound(X, delta)
    z = (V <= gamma) & (F > 0)
    return gamma <= lyap.box_gamma(grid.lower, grid.upper) and bool(np.all(V[z] + F[z] <= gamma))


def certify_pi_neglected(lyap, model, delta, q_lower, q_upper, grid, states=None):
    """Invariance under a neglected nonlinearity bounded by delta on the box Q.

    The certified gamma is additionally capped so {V <= gamma} lies in Q; if
    even the smallest certified gamma leaves Q the certificate is refused.
    """
    lo, hi = np.asarray(q_lower, float), np.asarray(q_upper, float)
    if states is not None:
        S = np.atleast_2d(states)
        S = S if S.shape[0] == lo.size else S.T
        if np.any(S < lo[:, None]) or np.any(S > hi[:, None]):
            raise InputError("experiment states leave the region Q where the disturbance bound holds")
    est = certify_rpi(lyap, model, delta, grid, kind="PI")
    gq = lyap.box_gamma(lo, hi)
    outside = np.any((est.points < lo[:, None]) | (est.points > hi[:, None]), axis=0)
    if est.empty:
        return est
    a, b = est.gamma_interval
    if a > gq:
        # axis-extreme points of {V <= a} plus any grid nodes, outside Q
        P = lyap.P
        ext = np.hstack([np.sqrt(a) * P[:, [i]] / np.sqrt(P[i, i]) * sgn for i in range(lo.size) for sgn in (1, -1)])
        ext = ext[:, np.any((ext < lo[:, None]) | (ext > hi[:, None]), axis=0)]
        viol = np.hstack([ext, est.points[:, (est.V <= a) & outside]])
        raise CertificateRefused(
            f"smallest certified sublevel set (gamma={a:.4g}) is not contained in Q (needs gamma <= {gq:.4g})",
            violating_points=viol,
        )
    est.gamma = min(b, gq)
    est.gamma_interval = (a, est.gamma)
    est.containment = {
        "gamma_Q": gq,
        "grid_violations": int(np.count_nonzero((est.V <= est.gamma) & outside)),
        "Q_lower": lo.tolist(),
        "Q_upper": hi.tolist(),
    }
    if b > gq:
        est.bounded_by = "Q"
    return est


# ---------------------------------------------------------------------------
# probability


def prob_bound_bounded(delta, sigma_norm, T, N, mu, s=1):
    """Bound on ||mean D0||_2 for bounded i.i.d. disturbances and its probability."""
    if min(delta, T, N, mu) <= 0 or sigma_norm < 0 or s < 1:
        raise InputError("arguments must be positive and s >= 1")
    bound = np.sqrt(T * (sigma_norm / N + mu))
    prob = 1.0 - 2.0 * s * np.exp(-T * N * mu**2 / (2.0 * delta**2 * (sigma_norm + N * mu)))
    return float(bound), float(prob)


def prob_bound_gaussian(Sigma, T, N, mu):
    """Bound on ||mean D0||_2 for Gaussian disturbances and its probability."""
    S = np.atleast_2d(np.asarray(Sigma, dtype=float))
    if not np.allclose(S, S.T) or np.min(np.linalg.eigvalsh(S)) < -1e-12:
        raise InputError("Sigma must be symmetric PSD")
    root = np.real(sqrtm(S)) if np.any(S) else S
    lam = float(np.max(np.linalg.eigvalsh(0.5 * (root + root.T)))) if np.any(S) else 0.0
    bound = np.sqrt(T / N) * (lam * (1 + mu) + np.sqrt(np.trace(S) / T))
    return float(bound), float(1.0 - np.exp(-T * mu**2 / 2.0))


def stability_probability(result, p):
    """Attach 'stabilizing with probability >= p' to a robust result."""
    if not 0.0 <= p <= 1.0:
        raise InputError("probability must lie in [0, 1]")
    result.annotations["stability_probability"] = {
        "p": float(p),
        "statement": f"stabilizing with probability >= {p:.4g}",
        "deterministic": p == 1.0,
    }
    return result
