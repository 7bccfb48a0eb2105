"""Thin conic-program layer over cvxpy.

Programs declare matrix blocks, affine equalities and LMIs; strict LMIs are
posed as ``expr >= margin * I``. After a solve the layer reports the largest
equality residual and the smallest LMI eigenvalue so callers can audit the
numerical solution rather than trusting the status string.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from ..exceptions import InfeasibleError, SolverError

DEFAULT_SOLVER = "CLARABEL"
DEFAULT_TOL = 1e-8

_CLARABEL_KEYS = ("tol_gap_abs", "tol_gap_rel", "tol_feas", "tol_infeas_abs", "tol_infeas_rel", "tol_ktratio")


def solver_settings():
    """Backend name and tolerance; NLCANCEL_SOLVER / NLCANCEL_SOLVER_TOL override."""
    name = os.environ.get("NLCANCEL_SOLVER", DEFAULT_SOLVER).upper()
    tol = float(os.environ.get("NLCANCEL_SOLVER_TOL", DEFAULT_TOL))
    return name, tol


def _solver_kwargs(name, tol):
    if name == "CLARABEL":
        kw = {k: tol for k in _CLARABEL_KEYS[:3]}
        kw.update(max_iter=500)
        return kw
    if name == "SCS":
        return {"eps": tol, "max_iters": 100000}
    if name == "CVXOPT":
        return {"abstol": tol, "reltol": tol, "feastol": tol}
    return {}


def sym(expr):
    return 0.5 * (expr + expr.T)


@dataclass
class ConicSolution:
    status: str
    objective: float
    values: dict
    eq_residual: float
    min_lmi_eig: float
    solver: str
    solve_time: float | None = None
    iterations: int | None = None

    def __getitem__(self, key):
        return self.values[key]

    def stats(self):
        return {
            "status": self.status,
            "solver": self.solver,
            "objective": self.objective,
            "max_equality_residual": self.eq_residual,
            "min_lmi_eigenvalue": self.min_lmi_eig,
            "solve_time": self.solve_time,
            "iterations": self.iterations,
        }


@dataclass
class ConicProgram:
    name: str = "program"
    variables: dict = field(default_factory=dict)
    equalities: list = field(default_factory=list)
    lmis: list = field(default_factory=list)
    extra: list = field(default_factory=list)
    objective: object = None

    def matrix(self, name, shape, symmetric=False):
        if name in self.variables:
            raise ValueError(f"block {name!r} declared twice")
        v = cp.Variable(shape, name=name, symmetric=symmetric)
        self.variables[name] = v
        return v

    def scalar(self, name, lower=None):
        v = cp.Variable(name=name)
        self.variables[name] = v
        if lower is not None:
            self.extra.append(v >= lower)
        return v

    def equal(self, lhs, rhs):
        self.equalities.append((lhs, rhs))

    def lmi(self, expr, margin=0.0):
        """Require sym(expr) - margin*I to be PSD."""
        E = sym(expr)
        self.lmis.append((E, margin))

    def constrain(self, c):
        self.extra.append(c)

    def minimize(self, expr):
        self.objective = expr

    def spectral_epigraph(self, expr, name):
        """t >= ||expr||_2 through [[tI, expr], [expr', tI]] >= 0."""
        r, c = expr.shape
        t = self.scalar(name)
        self.lmi(cp.bmat([[t * np.eye(r), expr], [expr.T, t * np.eye(c)]]))
        return t

    def _constraints(self):
        cons = [lhs == rhs for lhs, rhs in self.equalities]
        for E, margin in self.lmis:
            cons.append(E - margin * np.eye(E.shape[0]) >> 0 if margin else E >> 0)
        return cons + list(self.extra)

    def solve(self, solver=None, tol=None):
        name, default_tol = solver_settings()
        name = (solver or name).upper()
        tol = default_tol if tol is None else tol
        obj = cp.Minimize(self.objective if self.objective is not None else 0)
        prob = cp.Problem(obj, self._constraints())
        try:
            prob.solve(solver=name, **_solver_kwargs(name, tol))
        except cp.error.SolverError as exc:
            raise SolverError(f"{self.name}: backend {name} failed: {exc}") from exc
        status = prob.status
        if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
            raise InfeasibleError(f"{self.name}: infeasible ({status})", status=status)
        if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            raise SolverError(f"{self.name}: solver returned status {status}")
        values = {k: np.array(v.value, dtype=float) for k, v in self.variables.items()}
        eq = max((float(np.max(np.abs(np.asarray(l.value) - np.asarray(r.value if hasattr(r, "value") else r))))
                  for l, r in self.equalities), default=0.0)
        eig = min((float(np.min(np.linalg.eigvalsh(np.asarray(E.value)))) for E, _ in self.lmis), default=np.inf)
        st = prob.solver_stats
        return ConicSolution(
            status=status,
            objective=float(prob.value) if self.objective is not None else 0.0,
            values=values,
            eq_residual=eq,
            min_lmi_eig=eig,
            solver=name,
            solve_time=getattr(st, "solve_time", None),
            iterations=getattr(st, "num_iters", None),
        )
