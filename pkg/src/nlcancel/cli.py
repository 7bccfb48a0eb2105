"""Command-line pipelines: simulate, synth, certify, demo and sweep.

Exit codes: 0 success (an empty or refused certificate included), 1 usage or
input error, 2 simulation divergence, 3 infeasible program, 4 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import itertools
import json
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .basis import (
    BasisLibrary,
    Trajectory,
    basis_function_from_dict,
    build_data_matrices,
    data_matrices_from_csv,
    data_matrices_to_csv,
    is_data_matrices_csv,
    monomials_up_to_degree,
    taylor_remainder,
)
from .certify import (
    AbsBound,
    GridSpec,
    NoisyDecrement,
    NominalDecrement,
    QuadLyapunov,
    certify_pi_neglected,
    certify_rpi,
    estimate_roa,
    prob_bound_bounded,
    prob_bound_gaussian,
    stability_probability,
)
from .exceptions import (
    CertificateRefused,
    DivergenceError,
    InfeasibleError,
    InputError,
    NLCancelError,
    SolverError,
    TransformationError,
)
from .simlab import (
    DisturbanceSpec,
    ExperimentConfig,
    average_datasets,
    get_model,
    manifest,
    simulate_repeated,
)
from .synth import (
    RobustParams,
    SynthesisResult,
    synth_ct,
    synth_exact,
    synth_extended,
    synth_min_norm,
    synth_normal_form,
    synth_robust,
    synth_sparse,
    verify_given_K,
)

EXIT_OK, EXIT_INPUT, EXIT_DIVERGED, EXIT_INFEASIBLE, EXIT_SOLVER = 0, 1, 2, 3, 4
MODES = ("exact", "minnorm", "sparse", "ct", "extended", "robust", "normal_form", "verify")
DATA_MODE = {"ct": "continuous", "extended": "extended", "normal_form": "output"}
DEFAULT_TOL = 1e-3
# fields that vary between identical runs and are kept out of output documents
VOLATILE = ("solve_time",)


def exit_code(exc):
    if isinstance(exc, DivergenceError):
        return EXIT_DIVERGED
    if isinstance(exc, InfeasibleError):
        return EXIT_INFEASIBLE
    if isinstance(exc, SolverError):
        return EXIT_SOLVER
    return EXIT_INPUT


# ---------------------------------------------------------------------------
# configuration


def load_config(path):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"config file {path} does not exist")
    with open(p, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise InputError(f"{path}: expected a mapping at the top level")
    return cfg


def example_config(example_id):
    if not 1 <= int(example_id) <= 10:
        raise InputError("example id must be in 1..10")
    text = resources.files("nlcancel.configs").joinpath(f"example{int(example_id):02d}.yaml").read_text("utf-8")
    return yaml.safe_load(text)


def merge(base, over):
    out = copy.deepcopy(base)
    for k, v in (over or {}).items():
        out[k] = merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else copy.deepcopy(v)
    return out


def stages(cfg):
    """(name, config) per stage; a config without stages is a single stage."""
    base = {k: v for k, v in cfg.items() if k not in ("stages", "reference")}
    specs = cfg.get("stages") or [{"name": "main"}]
    out = []
    for i, s in enumerate(specs):
        over = {k: v for k, v in s.items() if k != "name"}
        merged = merge(base, over)
        # a certification section is replaced whole: keys of different kinds
        # (delta_x of a W-ROA next to the constant delta of a PI set) must not mix
        if "certification" in over:
            merged["certification"] = copy.deepcopy(over["certification"])
        out.append((s.get("name", f"stage{i}"), merged))
    return out


def set_path(cfg, dotted, value):
    node = cfg
    keys = dotted.split(".")
    for k in keys[:-1]:
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()


def file_hash(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items() if k not in VOLATILE}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(doc, path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------------------
# pipeline pieces


def resolve_model(cfg):
    name = cfg.get("model")
    if not name:
        raise InputError("config names no model")
    return get_model(name)


def build_library(spec, model):
    spec = spec or {"type": "model"}
    kind = spec.get("type", "model")
    if kind == "model":
        return model.library
    if kind == "remainder":
        return taylor_remainder(model.library)[1]
    if kind == "linear":
        return BasisLibrary(model.n, m=model.library.m)
    if kind == "monomials":
        return monomials_up_to_degree(model.n, int(spec.get("degree", 3)))
    if kind == "custom":
        return BasisLibrary.from_dict(spec["library"])
    raise InputError(f"unknown dictionary type {kind!r}")


def build_disturbance(spec, default):
    if spec is None:
        return default
    law = spec.get("law", "none")
    if law == "gaussian":
        return DisturbanceSpec("gaussian", cov=np.atleast_2d(spec["cov"]))
    if law == "state_dependent":
        return DisturbanceSpec("state_dependent", functions=tuple(basis_function_from_dict(f) for f in spec["functions"]))
    return DisturbanceSpec(law, delta=float(spec.get("delta", 0.0)))


def build_experiment(spec):
    spec = dict(spec or {})
    for key in ("input_range", "x0_range"):
        if key in spec:
            spec[key] = tuple(float(v) for v in spec[key])
    try:
        return ExperimentConfig(**spec)
    except TypeError as exc:
        raise InputError(f"bad experiment section: {exc}") from None


def data_mode(cfg):
    return DATA_MODE.get((cfg.get("synthesis") or {}).get("mode", "minnorm"), "discrete")


@dataclass
class Dataset:
    data: object
    trajectories: list = field(default_factory=list)
    reps: int = 1
    digest: str = ""


def collect_data(cfg, model, disturbance, library):
    exp = build_experiment(cfg.get("experiment"))
    trajs = simulate_repeated(model, disturbance, exp)
    mode = data_mode(cfg)
    mats = [build_data_matrices(t, library, mode) for t in trajs]
    data = mats[0] if len(mats) == 1 else average_datasets(mats)
    return Dataset(data, trajs, len(mats), _data_digest(data))


def _data_digest(data):
    h = hashlib.sha256()
    for key in ("U0", "X0", "X1", "Z0"):
        h.update(np.ascontiguousarray(getattr(data, key), dtype=float).tobytes())
    return h.hexdigest()


def load_data(paths, library, mode):
    """Read trajectory CSVs or data-matrix CSVs; several files are averaged."""
    mats, trajs = [], []
    for p in paths:
        if not Path(p).is_file():
            raise InputError(f"data file {p} does not exist")
        if is_data_matrices_csv(p):
            mats.append(data_matrices_from_csv(p))
        else:
            t = Trajectory.from_csv(p)
            trajs.append(t)
            mats.append(build_data_matrices(t, library, mode))
    data = mats[0] if len(mats) == 1 else average_datasets(mats)
    if data.S != library.S:
        raise InputError(f"data has {data.S} dictionary rows, the dictionary has {library.S}")
    return Dataset(data, trajs, len(mats), _data_digest(data))


def robust_params(spec, dataset, model, disturbance):
    """RobustParams plus the probability attached to the choice of Delta."""
    spec = spec or {}
    data = dataset.data
    n = data.n_lin
    Ecfg = spec.get("E", "model")
    if Ecfg == "model":
        E = model.E if model.E.shape[0] == n else np.eye(n)
    elif Ecfg == "identity":
        E = np.eye(n)
    else:
        E = np.atleast_2d(np.asarray(Ecfg, dtype=float))
    s = E.shape[1]
    Omega = spec.get("Omega", 1.0)
    Omega = float(Omega) * np.eye(n) if np.isscalar(Omega) else np.asarray(Omega, dtype=float)
    dspec = spec.get("Delta", {"kind": "worst_case"})
    kind = dspec.get("kind", "worst_case")
    delta = float(dspec.get("delta", disturbance.delta))
    prob = None
    info = {"kind": kind}
    if kind == "worst_case":
        norm = delta * np.sqrt(data.T)
    elif kind == "value":
        norm = None
        Delta = np.atleast_2d(np.asarray(dspec["value"], dtype=float))
    elif kind == "bounded_probability":
        sigma = float(dspec.get("sigma_norm", np.linalg.norm(disturbance.covariance(s), 2)))
        norm, prob = prob_bound_bounded(delta, sigma, data.T, dataset.reps, float(dspec["mu"]), s)
        info.update(sigma_norm=sigma, mu=float(dspec["mu"]), N=dataset.reps, delta=delta)
    elif kind == "gaussian_probability":
        norm, prob = prob_bound_gaussian(disturbance.covariance(s), data.T, dataset.reps, float(dspec["mu"]))
        info.update(mu=float(dspec["mu"]), N=dataset.reps)
    else:
        raise InputError(f"unknown Delta kind {kind!r}")
    if norm is not None:
        Delta = norm * np.eye(s)
        info["bound"] = float(norm)
    if Delta.size == 1:
        Delta = float(Delta.ravel()[0]) * np.eye(s)
    params = RobustParams(Delta, Omega, float(spec.get("lambda1", 0.0)), float(spec.get("lambda2", 0.0)), E)
    return params, prob, info


def run_synthesis(cfg, dataset, library, model, disturbance):
    spec = cfg.get("synthesis") or {}
    mode = spec.get("mode", "minnorm")
    if mode not in MODES:
        raise InputError(f"unknown synthesis mode {mode!r}; choose from {', '.join(MODES)}")
    data, norm, solver = dataset.data, spec.get("norm", "spectral"), spec.get("solver")
    if mode == "exact":
        res = synth_exact(data, solver)
    elif mode == "minnorm":
        res = synth_min_norm(data, norm, library, solver)
    elif mode == "sparse":
        res = synth_sparse(data, bool(spec.get("regularize_linear", False)), library, solver)
    elif mode == "ct":
        res = synth_ct(data, norm, library, solver)
    elif mode == "extended":
        res = synth_extended(data, norm, library, solver)
    elif mode == "normal_form":
        res = synth_normal_form(data, solver, spec.get("k1"))
    elif mode == "verify":
        K = spec.get("K")
        if isinstance(K, dict):
            labels = library.labels
            unknown = set(K) - set(labels)
            if unknown:
                raise InputError(f"K names unknown dictionary entries: {sorted(unknown)}")
            K = np.array([[float(K.get(lab, 0.0)) for lab in labels]])
        res = verify_given_K(data, K, norm, solver)
    else:
        params, prob, info = robust_params(spec.get("robust"), dataset, model, disturbance)
        res = synth_robust(data, params, norm, solver)
        res.annotations["Delta"] = info
        if prob is not None:
            stability_probability(res, max(prob, 0.0))
    return res


def _grid(spec, dim):
    spec = spec or {}
    if "lower" in spec:
        return GridSpec(tuple(spec["lower"]), tuple(spec["upper"]), int(spec.get("points", 201)))
    return GridSpec.box(dim, float(spec.get("half_width", 2.0)), int(spec.get("points", 201)))


def _delta_spec(spec):
    dx = spec.get("delta_x")
    if dx is not None:
        return AbsBound(basis_function_from_dict(dx["function"]), float(dx.get("scale", 1.0)))
    return float(spec.get("delta", 0.0))


def run_certification(cfg, result, dataset, library):
    """Region certificate for the configured kind; None when kind is 'none'."""
    spec = cfg.get("certification") or {}
    kind = spec.get("kind", "none")
    if kind == "none":
        return None
    lyap = QuadLyapunov.from_result(result)
    grid = _grid(spec.get("grid"), result.n_lin)
    if kind == "roa":
        if result.robust is not None:
            noisy = NoisyDecrement.from_result(result, dataset.data, library)
            d = _delta_spec(spec)
            return estimate_roa(lyap, lambda X: noisy.bound(X, d), grid, "ROA")
        return estimate_roa(lyap, NominalDecrement.from_result(result, library), grid, "ROA")
    noisy = NoisyDecrement.from_result(result, dataset.data, library)
    if kind == "w":
        d = _delta_spec(spec)
        return estimate_roa(lyap, lambda X: noisy.bound(X, d), grid, "W-ROA")
    if kind == "rpi":
        return certify_rpi(lyap, noisy, _delta_spec(spec), grid)
    if kind == "pi":
        box = spec.get("Q_box") or {}
        if "lower" not in box or "upper" not in box:
            raise InputError("pi certification needs Q_box.lower and Q_box.upper")
        states = np.hstack([t.states.T for t in dataset.trajectories]) if dataset.trajectories else dataset.data.X0
        return certify_pi_neglected(lyap, noisy, _delta_spec(spec), box["lower"], box["upper"], grid, states)
    raise InputError(f"unknown certification kind {kind!r}")


def run_checks(names, result, region, dataset):
    out = {}
    for name in names or ():
        if name not in CHECKS:
            raise InputError(f"unknown check {name!r}")
        out[name] = CHECKS[name](result, region, dataset)
    return out


def _exact_roa_example4(result, region, dataset):
    # exact ROA of the closed loop x1+ = -x2 ... is {|0.5 x1 + 0.2 x2^2| < 5}
    if region is None or region.empty:
        return False
    P = region.points[:, region.in_R]
    return bool(np.all(np.abs(0.5 * P[0] + 0.2 * P[1] ** 2) < 5.0))


CHECKS = {"exact_roa_example4": _exact_roa_example4}


def result_document(result, library, cfg, dataset):
    doc = result.to_dict()
    doc["library"] = library.to_dict()
    doc["provenance"] = {
        "config_sha256": config_hash(cfg),
        "dataset_sha256": dataset.digest,
        "version": __version__,
        "reps": dataset.reps,
    }
    return doc


def certificate_document(region, result_doc, refused=None):
    if refused is not None:
        return {
            "kind": "refused",
            "reason": str(refused),
            "violating_points": np.asarray(refused.violating_points).T.tolist()
            if refused.violating_points is not None else [],
            "provenance": result_doc.get("provenance", {}),
        }
    doc = region.summary()
    doc["provenance"] = result_doc.get("provenance", {})
    return doc


# ---------------------------------------------------------------------------
# stage runner shared by demo and sweep


@dataclass
class StageOutcome:
    name: str
    status: str
    result: SynthesisResult | None = None
    region: object = None
    dataset: Dataset | None = None
    library: BasisLibrary | None = None
    refused: CertificateRefused | None = None
    checks: dict = field(default_factory=dict)
    error: NLCancelError | None = None

    def quantity(self, key):
        r, reg = self.result, self.region
        if key == "status":
            return self.status
        if key.startswith("K:"):
            return None if r is None else r.entry(key[2:])
        if key in self.checks:
            return self.checks[key]
        if r is None:
            return None
        if key == "objective":
            return r.objective
        if key == "k1":
            return r.k1
        if key == "spectral_radius":
            return r.spectral_radius()
        if key in ("prob_bound", "prob_p"):
            info = r.annotations.get("Delta", {})
            if key == "prob_bound":
                return info.get("bound")
            sp = r.annotations.get("stability_probability")
            return None if sp is None else sp["p"]
        if key == "D0_norm":
            d = self.dataset.data.D0
            return None if d is None else float(np.linalg.norm(d, 2))
        if key in r.annotations:
            return r.annotations[key]
        if reg is None:
            return None
        if key == "gamma":
            return 0.0 if reg.empty else reg.gamma
        if key == "gamma_min":
            return None if reg.gamma_interval is None else reg.gamma_interval[0]
        if key == "area":
            return reg.area()
        if key == "kind":
            return reg.kind
        raise InputError(f"unknown quantity {key!r}")


def run_stage(name, cfg, outdir=None):
    model, default_dist = resolve_model(cfg)
    dist = build_disturbance(cfg.get("disturbance"), default_dist)
    library = build_library(cfg.get("dictionary"), model)
    dataset = collect_data(cfg, model, dist, library)
    out = StageOutcome(name, "feasible", dataset=dataset, library=library)
    if outdir is not None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        files = []
        for i, t in enumerate(dataset.trajectories):
            t.to_csv(outdir / f"data_rep{i:03d}.csv")
            files.append(f"data_rep{i:03d}.csv")
        data_matrices_to_csv(dataset.data, outdir / "data_matrices.csv")
        exp = build_experiment(cfg.get("experiment"))
        write_json(manifest(model, dist, exp, files), outdir / "manifest.json")
    try:
        res = run_synthesis(cfg, dataset, library, model, dist)
    except InfeasibleError as exc:
        if (cfg.get("expect") or "feasible") != "infeasible":
            raise
        out.status, out.error = "infeasible", exc
        return out
    out.result = res
    doc = result_document(res, library, cfg, dataset)
    if outdir is not None:
        write_json(doc, outdir / "result.json")
    try:
        out.region = run_certification(cfg, res, dataset, library)
    except CertificateRefused as exc:
        out.refused = exc
    if outdir is not None and (out.region is not None or out.refused is not None):
        write_json(certificate_document(out.region, doc, out.refused), outdir / "certificate.json")
        if out.region is not None:
            out.region.to_csv(outdir / "region.csv")
    out.checks = run_checks(cfg.get("checks"), res, out.region, dataset)
    return out


# ---------------------------------------------------------------------------
# comparison table


def compare(reference, outcomes):
    """Rows (quantity, ours, reference, verdict) for each reference entry."""
    by_name = {o.name: o for o in outcomes}
    rows = []
    for ref in reference or ():
        key = ref["quantity"]
        stage, _, q = key.rpartition(".")
        if stage and stage not in by_name:
            # labels such as 'x1*x2^2' contain no dots, stage names never do
            stage, q = "", key
        o = by_name[stage] if stage else outcomes[0]
        ours = o.quantity(q)
        target = ref.get("value")
        verdict = "info"
        if "greater_than" in ref:
            other_stage, _, other_q = ref["greater_than"].rpartition(".")
            other = (by_name[other_stage] if other_stage else outcomes[0]).quantity(other_q)
            target = f"> {ref['greater_than']}"
            verdict = "pass" if ours is not None and other is not None and ours > other else "FAIL"
        elif ref.get("forced", False):
            if isinstance(target, (bool, str)):
                verdict = "pass" if ours == target else "FAIL"
            elif "range" in ref:
                lo, hi = ref["range"]
                verdict = "pass" if ours is not None and lo < ours < hi else "FAIL"
            else:
                tol = float(ref.get("tol", DEFAULT_TOL))
                verdict = "pass" if ours is not None and abs(ours - target) <= tol else "FAIL"
        rows.append((key, ours, target, verdict, ref.get("note", "")))
    return rows


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, (bool, np.bool_, str)):
        return str(v)
    return f"{float(v):.6g}"


def format_table(rows):
    head = ("quantity", "ours", "reference", "check", "note")
    body = [(k, _fmt(o), _fmt(p), v, n) for k, o, p, v, n in rows]
    widths = [max(len(str(r[i])) for r in [head, *body]) for i in range(5)]
    line = lambda r: "  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
    return "\n".join([line(head), line(tuple("-" * w for w in widths)), *map(line, body)])


# ---------------------------------------------------------------------------
# commands


def _experiment_from_args(cfg, args):
    exp = dict(cfg.get("experiment") or {})
    for key in ("T", "seed", "reps"):
        v = getattr(args, key, None)
        if v is not None:
            exp[key] = v
    for key in ("input_range", "x0_range"):
        v = getattr(args, key, None)
        if v is not None:
            exp[key] = list(v)
    cfg["experiment"] = exp
    return cfg


def cmd_simulate(args):
    cfg = load_config(args.config) if args.config else {}
    if args.example:
        cfg["model"] = args.example
    cfg = _experiment_from_args(cfg, args)
    model, default_dist = resolve_model(cfg)
    dist = build_disturbance(cfg.get("disturbance"), default_dist)
    if args.delta is not None:
        dist = DisturbanceSpec("uniform", delta=args.delta)
    exp = build_experiment(cfg.get("experiment"))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    trajs = simulate_repeated(model, dist, exp)
    files = []
    for i, t in enumerate(trajs):
        name = "data.csv" if len(trajs) == 1 else f"data_rep{i:03d}.csv"
        t.to_csv(out / name)
        files.append(name)
    if len(trajs) > 1:
        library = build_library(cfg.get("dictionary"), model)
        mode = "continuous" if model.time == "continuous" else data_mode(cfg)
        mean = average_datasets([build_data_matrices(t, library, mode) for t in trajs])
        data_matrices_to_csv(mean, out / "data_mean.csv")
        files.append("data_mean.csv")
    doc = manifest(model, dist, exp, files)
    doc["file_sha256"] = {f: file_hash(out / f) for f in files}
    doc["config_sha256"] = config_hash(cfg)
    write_json(doc, out / "manifest.json")
    print(f"wrote {len(files)} file(s) to {out}")
    return EXIT_OK


def _config_for(args):
    if args.config:
        cfg = load_config(args.config)
    elif getattr(args, "example_id", None):
        cfg = example_config(args.example_id)
    else:
        raise InputError("give --config FILE or --example-id N")
    stage = getattr(args, "stage", None)
    pairs = stages(cfg)
    if stage is None:
        return pairs[0][1]
    for name, c in pairs:
        if name == stage:
            return c
    raise InputError(f"config has no stage {stage!r}")


def cmd_synth(args):
    cfg = _config_for(args)
    if args.mode:
        cfg.setdefault("synthesis", {})["mode"] = args.mode
    model, default_dist = resolve_model(cfg)
    dist = build_disturbance(cfg.get("disturbance"), default_dist)
    library = build_library(cfg.get("dictionary"), model)
    if args.data:
        dataset = load_data(args.data, library, data_mode(cfg))
    else:
        dataset = collect_data(cfg, model, dist, library)
    try:
        res = run_synthesis(cfg, dataset, library, model, dist)
    except InfeasibleError as exc:
        doc = {"status": "infeasible", "detail": str(exc), "solver_status": exc.status,
               "provenance": {"config_sha256": config_hash(cfg), "dataset_sha256": dataset.digest}}
        write_json(doc, args.out)
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    doc = result_document(res, library, cfg, dataset)
    write_json(doc, args.out)
    K = res.displayed_K()
    print("K =", ", ".join(f"{lab}: {v:.6g}" for lab, v in zip(doc["labels"], K[0])))
    if res.mode not in ("normal_form",):
        print(f"objective = {res.objective:.6g}, claim = {res.claim}")
    for w in res.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_OK


def cmd_certify(args):
    cfg = _config_for(args)
    if not Path(args.result).is_file():
        raise InputError(f"result file {args.result} does not exist")
    with open(args.result, encoding="utf-8") as fh:
        rdoc = json.load(fh)
    if rdoc.get("status") == "infeasible":
        raise InputError("the result document records an infeasible program")
    res = SynthesisResult.from_dict(rdoc)
    library = BasisLibrary.from_dict(rdoc["library"])
    if args.data:
        dataset = load_data(args.data, library, data_mode(cfg))
    else:
        model, default_dist = resolve_model(cfg)
        dataset = collect_data(cfg, model, build_disturbance(cfg.get("disturbance"), default_dist), library)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    prob = (cfg.get("certification") or {}).get("probability")
    if prob is not None:
        stability_probability(res, float(prob))
        rdoc["annotations"] = res.annotations
    try:
        region = run_certification(cfg, res, dataset, library)
    except CertificateRefused as exc:
        write_json(certificate_document(None, rdoc, exc), out / "certificate.json")
        print(f"refused: {exc}")
        return EXIT_OK
    if region is None:
        raise InputError("certification kind is 'none'")
    doc = certificate_document(region, rdoc)
    if "stability_probability" in res.annotations:
        doc["stability_probability"] = res.annotations["stability_probability"]
    write_json(doc, out / "certificate.json")
    region.to_csv(out / "region.csv")
    iv = region.gamma_interval
    print(f"{region.kind}: gamma = {region.gamma:.6g}" + (f", interval [{iv[0]:.4g}, {iv[1]:.4g}]" if iv else ""))
    return EXIT_OK


def cmd_demo(args):
    cfg = example_config(args.example_id)
    root = Path(args.out) / cfg.get("name", f"example{args.example_id:02d}")
    outcomes = []
    for name, scfg in stages(cfg):
        sub = root if len(cfg.get("stages") or []) < 2 else root / name
        outcomes.append(run_stage(name, scfg, sub))
    rows = compare(cfg.get("reference"), outcomes)
    print(f"{cfg.get('name')}: {cfg.get('title', '')}")
    for o in outcomes:
        if o.refused is not None:
            print(f"  [{o.name}] certificate refused: {o.refused}")
        elif o.region is not None:
            iv = o.region.gamma_interval
            print(f"  [{o.name}] {o.region.kind}: gamma = {o.region.gamma:.6g}"
                  + (f" interval [{iv[0]:.4g}, {iv[1]:.4g}]" if iv else ""))
    print(format_table(rows))
    write_json({"rows": [dict(zip(("quantity", "ours", "reference", "check", "note"), r)) for r in rows],
                "config_sha256": config_hash(cfg)}, root / "comparison.json")
    return EXIT_OK


def _parse_values(text):
    return [yaml.safe_load(v) for v in text.split(",")]


def _parse_seeds(text):
    if ":" in text:
        a, b = text.split(":")
        return list(range(int(a), int(b)))
    return [int(v) for v in text.split(",")]


def cmd_sweep(args):
    cfg = _config_for(args)
    axes = []
    for item in args.set or ():
        if "=" not in item:
            raise InputError(f"--set expects path=v1,v2; got {item!r}")
        path, vals = item.split("=", 1)
        axes.append((path, _parse_values(vals)))
    if args.seeds:
        axes.append(("experiment.seed", _parse_seeds(args.seeds)))
    keys = [a for a, _ in axes]
    lines = []
    for combo in itertools.product(*[v for _, v in axes]):
        run = copy.deepcopy(cfg)
        for k, v in zip(keys, combo):
            set_path(run, k, v)
        rec = {"params": dict(zip(keys, combo))}
        try:
            o = run_stage("sweep", run)
            # an expected infeasibility is still an infeasible program for scripts
            rec.update(exit=EXIT_INFEASIBLE if o.status == "infeasible" else EXIT_OK, status=o.status)
            if o.result is not None:
                rec.update(objective=o.result.objective, spectral_radius=o.result.spectral_radius(),
                           K=o.result.displayed_K().tolist())
            if o.refused is not None:
                rec["certificate"] = "refused"
            elif o.region is not None:
                rec.update(certificate=o.region.kind, gamma=o.region.gamma, area=o.region.area(),
                           gamma_interval=o.region.gamma_interval)
        except NLCancelError as exc:
            rec.update(exit=exit_code(exc), error=type(exc).__name__, detail=str(exc))
        lines.append(json.dumps(_clean(rec), sort_keys=True))
        print(lines[-1])
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INPUT)


def _range(text):
    lo, hi = (float(v) for v in text.split(","))
    return lo, hi


def build_parser():
    p = _Parser(prog="nlcancel", description="Data-driven nonlinearity cancellation pipelines.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run open-loop experiments and write trajectory CSVs")
    s.add_argument("--example", help="catalog model name, e.g. pendulum")
    s.add_argument("--config", help="YAML config with model/experiment/disturbance sections")
    s.add_argument("--T", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--reps", type=int)
    s.add_argument("--delta", type=float, help="uniform disturbance bound |d| <= delta")
    s.add_argument("--input-range", type=_range, metavar="LO,HI")
    s.add_argument("--x0-range", type=_range, metavar="LO,HI")
    s.add_argument("--out", default="runs/simulate")
    s.set_defaults(func=cmd_simulate)

    def common(q):
        q.add_argument("--config", help="YAML run config")
        q.add_argument("--example-id", type=int, help="use the shipped config of example N")
        q.add_argument("--stage", help="stage name inside a multi-stage config")

    s = sub.add_parser("synth", help="solve the synthesis program and write a result JSON")
    common(s)
    s.add_argument("--data", nargs="+", help="trajectory or data-matrix CSV(s); several are averaged")
    s.add_argument("--mode", choices=MODES)
    s.add_argument("--out", default="result.json")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("certify", help="certify a region for a result JSON")
    common(s)
    s.add_argument("--result", required=True)
    s.add_argument("--data", nargs="+")
    s.add_argument("--out", default="certificate")
    s.set_defaults(func=cmd_certify)

    s = sub.add_parser("demo", help="reproduce one of the ten worked examples")
    s.add_argument("example_id", type=int, choices=range(1, 11), metavar="N")
    s.add_argument("--out", default="runs")
    s.set_defaults(func=cmd_demo)

    s = sub.add_parser("sweep", help="run a config over parameter grids and seeds")
    common(s)
    s.add_argument("--set", action="append", metavar="PATH=V1,V2", help="dotted config path and values")
    s.add_argument("--seeds", help="A:B range or comma list")
    s.add_argument("--out", help="JSON-lines output file")
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (NLCancelError, TransformationError) as exc:
        code = exit_code(exc)
        if isinstance(exc, DivergenceError):
            print(f"diverged: {exc} (step {exc.step})", file=sys.stderr)
        else:
            print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
