"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run directly with ``python3 tests/test_acceptance.py`` or through pytest; in
both cases a summary with one line per criterion is printed.
"""

import time

import numpy as np
import pytest
from scipy.signal import place_poles

from nlcancel.basis import build_data_matrices, monomials_up_to_degree, taylor_remainder
from nlcancel.certify import (
    GridSpec,
    NoisyDecrement,
    NominalDecrement,
    QuadLyapunov,
    certify_rpi,
    decrement_h,
    estimate_roa,
    prob_bound_bounded,
)
from nlcancel.exceptions import DivergenceError, InfeasibleError
from nlcancel.simlab import (
    Controller,
    DisturbanceSpec,
    ExperimentConfig,
    SystemModel,
    average_datasets,
    get_model,
    simulate,
    simulate_closed_loop,
    simulate_repeated,
)
from nlcancel.synth import (
    RobustParams,
    petersen_block,
    synth_exact,
    synth_min_norm,
    synth_normal_form,
    synth_robust,
    verify_given_K,
)

try:
    from conftest import experiment, record
except ImportError:  # pragma: no cover - direct execution from the repo root
    from tests.conftest import experiment, record


def _report(criterion, ok, detail):
    record(criterion, ok, detail)
    print(f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


# --------------------------------------------------------------------------- 1


def test_c01_pendulum_exact_cancellation():
    t0 = time.perf_counter()
    model, lib, _, data = experiment("pendulum", T=10, seed=1)
    res = synth_exact(data)
    elapsed = time.perf_counter() - t0
    k_sin = res.entry("sin(x1)")
    ok = abs(k_sin + 9.8) <= 1e-4 and elapsed < 5.0
    _report(1, ok, f"sin(x1) entry {k_sin:.8f} (target -9.8 +- 1e-4), {elapsed:.2f} s")


# --------------------------------------------------------------------------- 2


def test_c02_polynomial_exact_cancellation():
    _, lib, _, data = experiment("poly2", T=10, seed=1)
    res = synth_exact(data)
    k_cube = res.entry("x1^3")
    others = [abs(res.entry(lab)) for lab in lib.labels[2:] if lab != "x1^3"]
    ok = abs(k_cube + 1) <= 1e-4 and max(others) <= 1e-3
    _report(2, ok, f"x1^3 entry {k_cube:.8f}, max other nonlinear |entry| {max(others):.2e}")


# --------------------------------------------------------------------------- 3


def test_c03_minimum_norm_value():
    _, lib, _, data = experiment("poly4", T=10, seed=1)
    res = synth_min_norm(data, library=lib)
    try:
        synth_exact(data)
        exact_infeasible = False
    except InfeasibleError:
        exact_infeasible = True
    ok = abs(res.objective - 0.2) <= 1e-3 and exact_infeasible
    _report(3, ok, f"min ||N|| = {res.objective:.7f}; exact program infeasible: {exact_infeasible}")


# --------------------------------------------------------------------------- 4


def _exact_roa(X):
    # closed loop with K = [0 -1 0 0 0 -1 0 0 0]: x1+ = 0, x2+ = 0.5 x1 + 0.2 x2^2
    return np.abs(0.5 * X[0] + 0.2 * X[1] ** 2) < 5.0


def test_c04_exact_roa_containment():
    model, lib, _, data = experiment("poly4", T=10, seed=1)
    K29 = np.zeros((1, lib.S))
    K29[0, lib.labels.index("x2")] = -1.0
    K29[0, lib.labels.index("x1^3")] = -1.0
    res = verify_given_K(data, K29)
    lyap = QuadLyapunov.from_result(res)
    roa = estimate_roa(lyap, NominalDecrement.from_result(res, lib), GridSpec.box(2, 10.0, 201))
    inside = roa.points[:, roa.in_R]
    contained = bool(np.all(_exact_roa(inside)))

    rng = np.random.default_rng(4)
    ctrl = Controller(K29, lib)
    # 500 points sampled uniformly in the ellipsoid {V <= gamma}
    L = np.linalg.cholesky(lyap.P * roa.gamma)
    d = rng.normal(size=(2, 500))
    d /= np.linalg.norm(d, axis=0)
    X0 = L @ (d * rng.uniform(0, 1, 500) ** 0.5)
    invariant, converged = True, True
    for x0 in X0.T:
        run = simulate_closed_loop(model, ctrl, x0, steps=200)
        V = lyap(run.trajectory.states.T)
        invariant &= bool(np.all(V <= roa.gamma * (1 + 1e-12)))
        converged &= run.verdict == "converged"
    outside = np.array([12.0, 0.0])
    diverges = simulate_closed_loop(model, ctrl, outside, steps=200).verdict == "diverged"
    ok = contained and invariant and converged and diverges and not _exact_roa(outside[:, None])[0]
    _report(
        4, ok,
        f"gamma {roa.gamma:.3f}: grid set inside exact ROA {contained}; 500 rollouts invariant {invariant}, "
        f"converged {converged}; x0 = (12, 0) diverges {diverges}",
    )


# --------------------------------------------------------------------------- 5


def test_c05_probability_formulas():
    bound, p = prob_bound_bounded(0.01, 0.01**2 / 3, 30, 100, 4e-5, 1)
    ok = abs(bound - 0.0348) <= 1e-3 and abs(p - 0.9948) <= 1e-3
    _report(5, ok, f"bound {bound:.6f} (0.0348), probability {p:.6f} (0.9948)")


# --------------------------------------------------------------------------- 6


def test_c06_normal_form_entries():
    lib = monomials_up_to_degree(2, 4)
    model, _, traj, data = experiment("poly10", T=20, seed=1, mode="output", library=lib)
    res = synth_normal_form(data)
    targets = {"x1^2": -0.1, "x2^2": -1.0, "x1^3": -1.0, "x1*x2^2": -0.08, "x2^4": -0.016}
    err = max(abs(res.entry(k) - v) for k, v in targets.items())
    others = max(abs(res.entry(k)) for k in res.labels[2:] if k not in targets)
    lam = np.abs(np.linalg.eigvals(res.M))
    n = res.n_lin
    eig_err = float(np.max(np.abs(lam**n - abs(res.k1))))
    ok = err <= 1e-3 and -1 < res.k1 < 1 and eig_err <= 1e-6

    # a nondegenerate characteristic polynomial, fixed away from the centre
    res2 = synth_normal_form(data, k1=0.372)
    lam2 = np.abs(np.linalg.eigvals(res2.M))
    eig_err2 = float(np.max(np.abs(lam2**n - abs(res2.k1))))
    ok = ok and eig_err2 <= 1e-6
    _report(
        6, ok,
        f"max forced-entry error {err:.2e} (other entries <= {others:.1e}); k1 = {res.k1:.3g}; "
        f"| |lambda|^n - |k1| | = {eig_err:.1e}, with k1 = 0.372: {eig_err2:.1e}",
    )


# --------------------------------------------------------------------------- 7


def _rollout_stays(model, K, lib, lyap, gamma, delta, rng, points=60, steps=200):
    L = np.linalg.cholesky(lyap.P * gamma)
    d = rng.normal(size=(2, points))
    d /= np.linalg.norm(d, axis=0)
    # half on the boundary of {V <= gamma}, half inside
    r = np.concatenate([np.ones(points // 2), rng.uniform(0, 1, points - points // 2) ** 0.5])
    X = L @ (d * r)
    ctrl = Controller(K, lib)
    worst = float(np.max(lyap(X)))
    for _ in range(steps):
        # extreme disturbances on half of the runs
        D = np.where(rng.uniform(size=points) < 0.5, rng.choice([-delta, delta], size=points),
                     rng.uniform(-delta, delta, size=points))[None, :]
        X = model.vector_field(X, ctrl(X), D)
        worst = max(worst, float(np.max(lyap(X))))
    return worst <= gamma * (1 + 1e-9), worst


def test_c07_robust_pipeline_property():
    model, _ = get_model("pendulum")
    lib = taylor_remainder(model.library)[1]
    delta = 0.01
    dist = DisturbanceSpec("uniform", delta=delta)
    rng = np.random.default_rng(7)
    grid = GridSpec.box(2, 8.0, 201)
    feasible, failures = 0, []
    gammas = []
    for seed in range(100):
        traj = simulate(model, dist, ExperimentConfig(T=30, seed=seed))
        data = build_data_matrices(traj, lib)
        params = RobustParams.from_delta(delta, 30, 1, 2, 0.1, 0.1, E=model.E)
        try:
            res = synth_robust(data, params)
        except InfeasibleError:
            continue
        feasible += 1
        Psi = (data.X1 - model.E @ data.D0) @ res.G1
        rho = float(np.max(np.abs(np.linalg.eigvals(Psi))))
        lyap = QuadLyapunov.from_result(res)
        noisy = NoisyDecrement.from_result(res, data, lib)
        cert = certify_rpi(lyap, noisy, delta, grid)
        gammas.append(cert.gamma)
        stays, worst = _rollout_stays(model, res.K, lib, lyap, cert.gamma, delta, rng) if not cert.empty else (False, np.inf)
        if not (rho < 1 and cert.gamma > 0.05 and stays):
            failures.append((seed, rho, cert.gamma, worst))
    ok = feasible >= 95 and not failures
    _report(
        7, ok,
        f"{feasible}/100 feasible; min gamma {min(gammas):.3f}; failures {failures[:3]}",
    )


# --------------------------------------------------------------------------- 8


def _petersen_instance(rng):
    n = int(rng.integers(1, 5))
    s = int(rng.integers(1, n + 1))
    T = int(rng.integers(n + 1, 12))
    X1 = rng.normal(size=(n, T))
    Y1 = 0.3 * rng.normal(size=(T, n))
    E = rng.normal(size=(n, s))
    Delta = rng.uniform(0.01, 0.5) * np.eye(s) if rng.uniform() < 0.5 else 0.3 * rng.normal(size=(s, s))
    A = rng.normal(size=(n, n))
    Omega = A @ A.T + 0.1 * np.eye(n)
    eps = float(10 ** rng.uniform(-2, 1))
    R = rng.normal(size=(n, n))
    shape = R @ R.T / n + np.eye(n)

    def margin(alpha):
        return np.min(np.linalg.eigvalsh(petersen_block(alpha * shape, Y1, X1, E, Delta, Omega, eps)))

    hi = 1.0
    while margin(hi) <= 0:
        hi *= 2.0
    lo = 0.0
    # push P1 = alpha * shape to the boundary of the LMI so the check is tight
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        lo, hi = (lo, mid) if margin(mid) > 0 else (mid, hi)
    return hi * shape, Y1, X1, E, Delta, Omega


def _sample_D(rng, Delta, T, count):
    """D = Delta W with ||W|| <= 1, so D D' <= Delta Delta'; half on the boundary."""
    s = Delta.shape[0]
    out = []
    for k in range(count):
        W = rng.normal(size=(s, T))
        W /= np.linalg.norm(W, 2)
        if k % 2:
            W *= rng.uniform() ** 0.5
        out.append(Delta @ W)
    return out


def test_c08_petersen_soundness():
    rng = np.random.default_rng(8)
    worst = np.inf
    for _ in range(1000):
        P1, Y1, X1, E, Delta, Omega = _petersen_instance(rng)
        Pinv = np.linalg.inv(P1)
        T = X1.shape[1]
        Ds = np.stack(_sample_D(rng, Delta, T, 1000))
        Cl = (X1[None] - E[None] @ Ds) @ Y1[None]
        Qm = np.swapaxes(Cl, 1, 2) @ Pinv[None] @ Cl - P1[None] + Omega[None]
        worst = min(worst, float(np.min(-np.linalg.eigvalsh(0.5 * (Qm + np.swapaxes(Qm, 1, 2))).max(axis=1))))
    lemma_worst = np.inf
    for _ in range(1000):
        n, p, q = (int(v) for v in rng.integers(1, 6, size=3))
        B = rng.normal(size=(n, p))
        C = rng.normal(size=(q, n))
        Delta = rng.normal(size=(q, q))
        W = rng.normal(size=(q, p))
        W /= max(np.linalg.norm(W, 2), 1e-12)
        D = Delta @ W
        eps = float(10 ** rng.uniform(-2, 2))
        lhs = B @ D.T @ C + C.T @ D @ B.T
        rhs = B @ B.T / eps + eps * C.T @ Delta @ Delta.T @ C
        lemma_worst = min(lemma_worst, float(np.min(np.linalg.eigvalsh(rhs - lhs))) / max(1.0, np.linalg.norm(rhs, 2)))
    ok = worst >= -1e-9 and lemma_worst >= -1e-9
    _report(8, ok, f"min margin over 1e6 (instance, D) pairs {worst:.3e}; completion-of-squares min {lemma_worst:.3e}")


# --------------------------------------------------------------------------- 9


def _random_system(rng, linearizable):
    n = int(rng.integers(2, 4))
    m = int(rng.integers(1, n + 1))
    lib = monomials_up_to_degree(n, 2)
    q = lib.S - n
    Abar = rng.normal(size=(n, n)) * 0.6
    B = rng.normal(size=(n, m))
    if linearizable:
        H = 0.1 * rng.normal(size=(m, q))
        Ahat = B @ H
    else:
        Ahat = 0.1 * rng.normal(size=(n, q))
    poles = rng.uniform(-0.6, 0.6, size=n)
    Kbar = -place_poles(Abar, B, poles).gain_matrix
    model = SystemModel("random", np.hstack([Abar, Ahat]), B, lib, E=np.eye(n))
    return model, lib, Kbar


def test_c09_parametrization_feasibility():
    rng = np.random.default_rng(9)
    done, failures = 0, []
    while done < 50:
        linearizable = done % 2 == 0
        model, lib, Kbar = _random_system(rng, linearizable)
        try:
            traj = simulate(model, None, ExperimentConfig(T=lib.S + model.m + 4, seed=int(rng.integers(1 << 30)),
                                                          input_range=(-0.3, 0.3), x0_range=(-0.3, 0.3)))
        except DivergenceError:
            continue
        data = build_data_matrices(traj, lib)
        if np.linalg.matrix_rank(np.vstack([data.U0, data.Z0])) < data.S + data.m:
            continue
        assert np.max(np.abs(np.linalg.eigvals(model.A[:, : model.n] + model.B @ Kbar))) < 1
        try:
            (synth_exact if linearizable else synth_min_norm)(data)
        except InfeasibleError as exc:
            failures.append((done, linearizable, str(exc)))
        done += 1
    ok = not failures
    _report(9, ok, f"50 random systems (25 linearizable, 25 not): {len(failures)} infeasible {failures[:2]}")


# --------------------------------------------------------------------------- 10


def test_c10_decrement_oracles():
    rng = np.random.default_rng(10)
    model, lib, _, data = experiment("poly4", T=10, seed=1)
    res = synth_min_norm(data, library=lib)
    lyap = QuadLyapunov.from_result(res)
    h = NominalDecrement.from_result(res, lib)
    ctrl = Controller(res.K, lib)
    X = rng.uniform(-1, 1, size=(2, 1000))
    Xn = model.vector_field(X, ctrl(X))
    err_h = float(np.max(np.abs(decrement_h(X, h) - (lyap(Xn) - lyap(X)))))

    pmodel, _ = get_model("pendulum")
    rlib = taylor_remainder(pmodel.library)[1]
    delta = 0.01
    traj = simulate(pmodel, DisturbanceSpec("uniform", delta=delta), ExperimentConfig(T=30, seed=0))
    rdata = build_data_matrices(traj, rlib)
    rres = synth_robust(rdata, RobustParams.from_delta(delta, 30, 1, 2, 0.1, 0.1, E=pmodel.E))
    rlyap = QuadLyapunov.from_result(rres)
    noisy = NoisyDecrement.from_result(rres, rdata, rlib)
    rctrl = Controller(rres.K, rlib)
    Xs = rng.uniform(-3, 3, size=(2, 1000))
    D = rng.uniform(-delta, delta, size=(1, 1000))
    D[0, ::2] = np.sign(D[0, ::2]) * delta
    Xsn = pmodel.vector_field(Xs, rctrl(Xs), D)
    diff = rlyap(Xsn) - rlyap(Xs)
    bound = noisy.bound(Xs, np.abs(D[0]))
    slack = float(np.min(bound - diff))
    ok = err_h <= 1e-10 and slack >= 0
    _report(10, ok, f"max |h - dV| = {err_h:.2e}; min (l + g - dV) over 1000 (x, d) = {slack:.3e}")


# --------------------------------------------------------------------------- 11


def _rpi_area(model, lib, seed, reps, delta, T=50):
    exp = ExperimentConfig(T=T, seed=seed, reps=reps)
    dist = DisturbanceSpec("uniform", delta=delta)
    mats = [build_data_matrices(t, lib) for t in simulate_repeated(model, dist, exp)]
    data = mats[0] if reps == 1 else average_datasets(mats)
    if reps == 1:
        Delta = delta * np.sqrt(T) * np.eye(2)
    else:
        Delta = prob_bound_bounded(delta, delta**2 / 2 / 3, T, reps, 5e-7, 2)[0] * np.eye(2)
    try:
        res = synth_robust(data, RobustParams(Delta, np.eye(2), 0.1, 0.1, np.eye(2)))
    except InfeasibleError:
        return 0.0
    cert = certify_rpi(QuadLyapunov.from_result(res), NoisyDecrement.from_result(res, data, lib), delta,
                       GridSpec.box(2, 3.0, 201))
    return cert.area()


def test_c11_averaging_improves_area():
    model, _ = get_model("poly4")
    lib = model.library
    delta = 0.001 * np.sqrt(2)  # each component in [-0.001, 0.001]
    seeds, a1, a10 = [], [], []
    seed = 0
    while len(seeds) < 20:
        try:
            simulate_repeated(model, DisturbanceSpec("uniform", delta=delta), ExperimentConfig(T=50, seed=seed, reps=10))
        except DivergenceError:
            seed += 1
            continue
        seeds.append(seed)
        a1.append(_rpi_area(model, lib, seed, 1, delta))
        a10.append(_rpi_area(model, lib, seed, 10, delta))
        seed += 1
    m1, m10 = float(np.median(a1)), float(np.median(a10))
    _report(11, m10 > m1, f"median RPI area N=1 {m1:.3f}, N=10 {m10:.3f} over seeds {seeds}")


if __name__ == "__main__":  # pragma: no cover
    import sys

    sys.exit(pytest.main([__file__, "-q", "-s"]))
