"""Data-driven cancellation programs.

All programs share the parametrisation [K; I_S] = [U0; Z0] G with
G = [Y1 P1^-1, G2], so that the closed loop reads x+ = M x + N Q(x) with
M = X1 G1 and N = X1 G2.
"""

from __future__ import annotations

import warnings

import cvxpy as cp
import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from ..basis import rank_richness_check
from ..exceptions import InfeasibleError, InputError, SolverError
from .conic import ConicProgram
from .result import RobustParams, SynthesisResult

MARGIN = 1e-7
EPS_FLOOR = 1e-9
K1_MARGIN = 1e-6
CONSISTENCY_TOL = 1e-6
ZERO_COST = 1e-6


def _scale(data):
    return max(1.0, float(np.max(np.abs(data.X1))), float(np.max(np.abs(data.Z0))))


def _selector(S, n, top):
    """[I_n; 0] when top, else [0; I_{S-n}]."""
    if top:
        return np.vstack([np.eye(n), np.zeros((S - n, n))])
    return np.vstack([np.zeros((n, S - n)), np.eye(S - n)])


def _require_consistent(lhs, rhs, what):
    """Raise InfeasibleError when lhs @ G = rhs has no solution."""
    G = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    res = np.max(np.abs(lhs @ G - rhs)) if rhs.size else 0.0
    if res > CONSISTENCY_TOL * max(1.0, np.max(np.abs(rhs))):
        raise InfeasibleError(f"{what} has no solution (least-squares residual {res:.3g})", status="inconsistent")


def _rank_warnings(data):
    rep = rank_richness_check(data.Z0)
    if not rep.full_row_rank:
        return [f"Z0 is rank deficient ({rep.rank}/{rep.rows}); the identity Z0 G = I cannot hold"]
    return []


def _check_mode(data, allowed):
    if data.mode not in allowed:
        raise InputError(f"program expects {' or '.join(allowed)} data, got {data.mode!r}")


def _core(prog, data, normalize=True):
    """Blocks P1, Y1, G2 with Z0 Y1 = [P1; 0] and Z0 G2 = [0; I]."""
    n, S, T = data.n_lin, data.S, data.T
    P1 = prog.matrix("P1", (n, n), symmetric=True)
    Y1 = prog.matrix("Y1", (T, n))
    rhs = P1 if S == n else cp.vstack([P1, np.zeros((S - n, n))])
    prog.equal(data.Z0 @ Y1, rhs)
    G2 = None
    if S > n:
        G2 = prog.matrix("G2", (T, S - n))
        prog.equal(data.Z0 @ G2, _selector(S, n, top=False))
    if normalize:
        # the nominal constraints are homogeneous in (P1, Y1); fix the scale
        prog.lmi(P1 - np.eye(n))
    return P1, Y1, G2


def _lyapunov(prog, data, P1, Y1, margin, continuous=False):
    XY = data.X1 @ Y1
    if continuous:
        prog.lmi(-(XY + XY.T), margin)
    else:
        prog.lmi(cp.bmat([[P1, XY.T], [XY, P1]]), margin)


def _norm_objective(prog, expr, norm, name="t_N"):
    if norm == "spectral":
        return prog.spectral_epigraph(expr, name)
    if norm == "frobenius":
        return cp.norm(expr, "fro")
    raise InputError(f"unknown norm {norm!r}")


def _extract(data, sol, mode, continuous=False, **kw):
    n, S, T = data.n_lin, data.S, data.T
    P1 = 0.5 * (sol["P1"] + sol["P1"].T)
    Y1 = sol["Y1"].reshape(T, n)
    G1 = np.linalg.solve(P1, Y1.T).T
    G2 = sol.values.get("G2", np.zeros((T, 0))).reshape(T, S - n)
    G = np.hstack([G1, G2])
    K = data.U0 @ G
    M = data.X1 @ G1
    N = data.X1 @ G2
    eigs = np.linalg.eigvals(M) if M.size else np.zeros(0)
    residuals = {
        "max_equality_residual": sol.eq_residual,
        "min_lmi_eigenvalue": sol.min_lmi_eig,
        "consistency": float(np.max(np.abs(data.Z0 @ G - np.eye(S)))),
        "spectral_radius": float(np.max(np.abs(eigs))) if eigs.size else 0.0,
        "max_real_eig": float(np.max(eigs.real)) if eigs.size else 0.0,
    }
    if continuous:
        ok = residuals["max_real_eig"] < -1e-9
    else:
        ok = residuals["spectral_radius"] < 1 - 1e-9
    if not ok:
        raise SolverError(f"{mode}: returned M fails the stability check ({residuals})")
    return SynthesisResult(
        mode=mode,
        K=K,
        P1=P1,
        G1=G1,
        G2=G2,
        M=M,
        N=N,
        objective=float(sol.objective),
        status=sol.status,
        residuals=residuals,
        n_lin=n,
        labels=data.labels,
        Y1=Y1,
        solver=sol.stats(),
        **kw,
    )


def _claim(res, data, library):
    notes = _rank_warnings(data)
    zero = res.objective <= ZERO_COST * _scale(data) or not res.N.size
    if zero:
        res.claim = "global"
    elif library is not None and not library.is_superlinear():
        res.claim = "unverified"
        notes.append("dictionary has Q entries that are not o(|x|) at the origin; only the linear part is certified")
    else:
        res.claim = "local"
    for w in notes:
        warnings.warn(w, stacklevel=3)
    res.warnings.extend(notes)
    return res


# ---------------------------------------------------------------------------
# nominal programs


def synth_exact(data, solver=None):
    """Exact cancellation: X1 G2 = 0 together with the Lyapunov LMI."""
    _check_mode(data, ("discrete",))
    n, S = data.n_lin, data.S
    if S <= n:
        raise InputError("exact cancellation needs a nonlinear dictionary (S > n)")
    _require_consistent(
        np.vstack([data.Z0, data.X1]),
        np.vstack([_selector(S, n, top=False), np.zeros((n, S - n))]),
        "Z0 G2 = [0; I], X1 G2 = 0",
    )
    prog = ConicProgram("exact")
    P1, Y1, G2 = _core(prog, data)
    _lyapunov(prog, data, P1, Y1, MARGIN * _scale(data))
    prog.equal(data.X1 @ G2, np.zeros((n, S - n)))
    res = _extract(data, prog.solve(solver), "exact")
    res.claim = "global"
    res.warnings.extend(_rank_warnings(data))
    return res


def synth_min_norm(data, norm="spectral", library=None, solver=None):
    """Minimise ||X1 G2|| subject to the Lyapunov LMI and Z0 G = I."""
    _check_mode(data, ("discrete",))
    return _min_norm(data, norm, library, solver, "minnorm")


def _min_norm(data, norm, library, solver, mode, continuous=False):
    n, S = data.n_lin, data.S
    if S > n:
        _require_consistent(data.Z0, _selector(S, n, top=False), "Z0 G2 = [0; I]")
    prog = ConicProgram(mode)
    P1, Y1, G2 = _core(prog, data)
    _lyapunov(prog, data, P1, Y1, MARGIN * _scale(data), continuous)
    if G2 is not None:
        prog.minimize(_norm_objective(prog, data.X1 @ G2, norm))
    res = _extract(data, prog.solve(solver), mode, continuous)
    if G2 is not None:
        res.objective = float(np.linalg.norm(res.N, 2 if norm == "spectral" else "fro"))
    return _claim(res, data, library)


def synth_sparse(data, regularize_linear=False, library=None, solver=None):
    """Trace heuristic for a sparse closed-loop nonlinear term X1 G2."""
    _check_mode(data, ("discrete",))
    n, S = data.n_lin, data.S
    if S <= n:
        raise InputError("the sparse program needs a nonlinear dictionary (S > n)")
    _require_consistent(data.Z0, _selector(S, n, top=False), "Z0 G2 = [0; I]")
    prog = ConicProgram("sparse")
    P1, Y1, G2 = _core(prog, data)
    _lyapunov(prog, data, P1, Y1, MARGIN * _scale(data))
    XG = data.X1 @ G2
    X = prog.matrix("X", (n, n), symmetric=True)
    V = prog.matrix("V", (S - n, S - n), symmetric=True)
    prog.lmi(cp.bmat([[X, XG], [XG.T, V]]))
    obj = cp.trace(X) + cp.trace(V)
    if regularize_linear:
        XY = data.X1 @ Y1
        Xl = prog.matrix("X_lin", (n, n), symmetric=True)
        Vl = prog.matrix("V_lin", (n, n), symmetric=True)
        prog.lmi(cp.bmat([[Xl, XY], [XY.T, Vl]]))
        obj = obj + cp.trace(Xl) + cp.trace(Vl)
    prog.minimize(obj)
    res = _extract(data, prog.solve(solver), "sparse")
    res.annotations["trace_objective"] = res.objective
    res.objective = float(np.linalg.norm(res.N, 2))
    return _claim(res, data, library)


def synth_ct(data, norm="spectral", library=None, solver=None):
    """Continuous time: X1 holds derivatives and X1 Y1 + (X1 Y1)' < 0."""
    _check_mode(data, ("continuous",))
    return _min_norm(data, norm, library, solver, "ct", continuous=True)


def synth_extended(data, norm="spectral", library=None, solver=None):
    """Dynamic controller u+ = K [xi; Q(xi)] from integrator-extended data."""
    _check_mode(data, ("extended",))
    res = _min_norm(data, norm, library, solver, "extended")
    vg = data.U0 @ res.G2
    res.annotations["V0G2_norm"] = float(np.linalg.norm(vg, 2)) if vg.size else 0.0
    return res


def verify_given_K(data, K=None, norm="spectral", solver=None):
    """Certify a given K (None means open loop) with a quadratic Lyapunov function."""
    _check_mode(data, ("discrete",))
    n, S, m = data.n_lin, data.S, data.m
    Kv = np.zeros((m, S)) if K is None else np.atleast_2d(np.asarray(K, dtype=float))
    if Kv.shape != (m, S):
        raise InputError(f"K must be {m}x{S}")
    Kbar, Khat = Kv[:, :n], Kv[:, n:]
    if S > n:
        _require_consistent(
            np.vstack([data.Z0, data.U0]), np.vstack([_selector(S, n, top=False), Khat]), "Z0 G2 = [0; I], U0 G2 = K_hat"
        )
    prog = ConicProgram("verify")
    P1, Y1, G2 = _core(prog, data)
    _lyapunov(prog, data, P1, Y1, MARGIN * _scale(data))
    prog.equal(data.U0 @ Y1, Kbar @ P1)
    if G2 is not None:
        prog.equal(data.U0 @ G2, Khat)
        prog.minimize(_norm_objective(prog, data.X1 @ G2, norm))
    res = _extract(data, prog.solve(solver), "verify" if K is not None else "open_loop")
    if G2 is not None:
        res.objective = float(np.linalg.norm(res.N, 2 if norm == "spectral" else "fro"))
    res.annotations["K_given"] = Kv.tolist()
    res.warnings.extend(_rank_warnings(data))
    return res


# ---------------------------------------------------------------------------
# robust program


def petersen_block(P1, Y1, X1, E, Delta, Omega, eps):
    """[[P1 - Omega, (X1 Y1)', Y1'], [X1 Y1, P1 - eps E Delta Delta' E', 0], [Y1, 0, eps I_T]].

    Works on numpy arrays and on cvxpy expressions alike.
    """
    T, n = Y1.shape
    E = np.atleast_2d(E)
    Delta = np.atleast_2d(Delta)
    EDDE = E @ Delta @ Delta.T @ E.T
    XY = X1 @ Y1
    symbolic = any(isinstance(a, cp.Expression) for a in (P1, Y1, eps))
    if symbolic:
        return cp.bmat(
            [
                [P1 - Omega, XY.T, Y1.T],
                [XY, P1 - eps * EDDE, np.zeros((n, T))],
                [Y1, np.zeros((T, n)), eps * np.eye(T)],
            ]
        )
    return np.block(
        [
            [P1 - Omega, XY.T, Y1.T],
            [XY, P1 - eps * EDDE, np.zeros((n, T))],
            [Y1, np.zeros((T, n)), eps * np.eye(T)],
        ]
    )


def synth_robust(data, params, norm="spectral", solver=None):
    """Minimise ||X1 G2|| + l1 ||P1|| + l2 ||G2|| under the Petersen LMI."""
    _check_mode(data, ("discrete",))
    n, S = data.n_lin, data.S
    E = np.eye(n) if params.E is None else params.E
    if E.shape[0] != n or E.shape[1] != params.Delta.shape[0]:
        raise InputError(f"E must be {n}x{params.Delta.shape[0]}")
    if params.Omega.shape != (n, n):
        raise InputError(f"Omega must be {n}x{n}")
    if S > n:
        _require_consistent(data.Z0, _selector(S, n, top=False), "Z0 G2 = [0; I]")
    prog = ConicProgram("robust")
    P1, Y1, G2 = _core(prog, data, normalize=False)
    eps = prog.scalar("eps", lower=EPS_FLOOR)
    prog.lmi(petersen_block(P1, Y1, data.X1, E, params.Delta, params.Omega, eps), MARGIN * _scale(data))
    obj = 0
    if G2 is not None:
        obj = _norm_objective(prog, data.X1 @ G2, norm)
        if params.lambda2:
            obj = obj + params.lambda2 * prog.spectral_epigraph(G2, "t_G2")
    if params.lambda1:
        t = prog.scalar("t_P1")
        prog.lmi(t * np.eye(n) - P1)
        obj = obj + params.lambda1 * t
    prog.minimize(obj)
    sol = prog.solve(solver)
    res = _extract(data, sol, "robust", robust=RobustParams(params.Delta, params.Omega, params.lambda1, params.lambda2, E))
    res.objective = float(sol.objective)
    res.annotations["eps"] = float(sol["eps"])
    res.annotations["N_norm"] = float(np.linalg.norm(res.N, 2)) if res.N.size else 0.0
    if sol["eps"] < 10 * EPS_FLOOR:
        msg = f"Petersen multiplier eps collapsed to {float(sol['eps']):.3g}"
        warnings.warn(msg, stacklevel=2)
        res.warnings.append(msg)
    res.claim = "robust"
    res.warnings.extend(_rank_warnings(data))
    return res


# ---------------------------------------------------------------------------
# normal form


def brunovsky(n):
    Ac = np.eye(n, k=1)
    Bc = np.zeros((n, 1))
    Bc[-1, 0] = 1.0
    return Ac, Bc


def synth_normal_form(data, solver=None, k1=None):
    """Exact linearisation in output coordinates w = (y, y+, ...).

    Feasibility LP: Z0 G1 = [I; 0], W1 G1 = Ac + Bc [k1 0 ... 0], |k1| < 1,
    Z0 G2 = [0; I], W1 G2 = 0. Returns K = U0 G over [w; Q(x)]. A given
    ``k1`` fixes the closed-loop characteristic polynomial instead of leaving
    it to the solver.
    """
    _check_mode(data, ("output",))
    n, S, T = data.n_lin, data.S, data.T
    if S <= n:
        raise InputError("the normal-form program needs a nonlinear Q")
    rep = rank_richness_check(data.Z0)
    if not rep.full_row_rank:
        raise InfeasibleError(
            f"Z0 = [W0; Q0] is rank deficient ({rep.rank}/{rep.rows}); "
            "Q must not contain functions that are linear combinations of the output window, "
            "e.g. the plain state coordinates",
            status="rank_deficient",
        )
    _require_consistent(
        np.vstack([data.Z0, data.X1]),
        np.vstack([_selector(S, n, top=False), np.zeros((n, S - n))]),
        "Z0 G2 = [0; I], W1 G2 = 0",
    )
    Ac, Bc = brunovsky(n)
    prog = ConicProgram("normal_form")
    G1 = prog.matrix("G1", (T, n))
    G2 = prog.matrix("G2", (T, S - n))
    if k1 is not None and not -1 < k1 < 1:
        raise InputError("k1 must lie in (-1, 1)")
    k1_fixed = k1
    k1 = prog.scalar("k1")
    e1 = np.zeros((1, n))
    e1[0, 0] = 1.0
    prog.equal(data.Z0 @ G1, _selector(S, n, top=True))
    prog.equal(data.X1 @ G1, Ac + Bc @ (k1 * e1))
    prog.equal(data.Z0 @ G2, _selector(S, n, top=False))
    prog.equal(data.X1 @ G2, np.zeros((n, S - n)))
    prog.constrain(k1 >= -1 + K1_MARGIN)
    prog.constrain(k1 <= 1 - K1_MARGIN)
    if k1_fixed is not None:
        prog.constrain(k1 == k1_fixed)
    sol = prog.solve(solver)
    G1v, G2v = sol["G1"].reshape(T, n), sol["G2"].reshape(T, S - n)
    G = np.hstack([G1v, G2v])
    M = data.X1 @ G1v
    k1v = float(sol["k1"])
    # V(w) = w' P1^-1 w with M' P1^-1 M - P1^-1 = -I
    P1 = np.linalg.inv(solve_discrete_lyapunov(M.T, np.eye(n)))
    eigs = np.linalg.eigvals(M)
    residuals = {
        "max_equality_residual": sol.eq_residual,
        "min_lmi_eigenvalue": None,
        "consistency": float(np.max(np.abs(data.Z0 @ G - np.eye(S)))),
        "spectral_radius": float(np.max(np.abs(eigs))),
        "max_real_eig": float(np.max(eigs.real)),
    }
    return SynthesisResult(
        mode="normal_form",
        K=data.U0 @ G,
        P1=P1,
        G1=G1v,
        G2=G2v,
        M=M,
        N=data.X1 @ G2v,
        objective=0.0,
        status=sol.status,
        residuals=residuals,
        n_lin=n,
        labels=data.labels,
        Y1=G1v @ P1,
        k1=k1v,
        claim="global",
        solver=sol.stats(),
    )
