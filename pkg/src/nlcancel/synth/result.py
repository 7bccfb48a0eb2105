"""Synthesis outputs and robust design parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import InputError

ZERO_DISPLAY = 1e-6


@dataclass(frozen=True)
class RobustParams:
    """Uncertainty set {D : D D' <= Delta Delta'} and design weights."""

    Delta: np.ndarray
    Omega: np.ndarray
    lambda1: float = 0.0
    lambda2: float = 0.0
    E: np.ndarray | None = None

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.Delta, dtype=float))
        O = np.atleast_2d(np.asarray(self.Omega, dtype=float))
        if not np.all(np.isfinite(D)):
            raise InputError("Delta must be finite")
        if not np.allclose(O, O.T) or np.min(np.linalg.eigvalsh(O)) <= 0:
            raise InputError("Omega must be symmetric positive definite")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("regularization weights must be non-negative")
        object.__setattr__(self, "Delta", D)
        object.__setattr__(self, "Omega", O)
        if self.E is not None:
            object.__setattr__(self, "E", np.atleast_2d(np.asarray(self.E, dtype=float)))

    @classmethod
    def from_delta(cls, delta, T, s, n, lambda1=0.0, lambda2=0.0, Omega=None, E=None):
        """Delta = delta * sqrt(T) * I_s, the bound implied by |d| <= delta."""
        return cls(delta * np.sqrt(T) * np.eye(s), np.eye(n) if Omega is None else Omega, lambda1, lambda2, E)

    @property
    def delta_norm(self):
        return float(np.linalg.norm(self.Delta, 2))


@dataclass
class SynthesisResult:
    mode: str
    K: np.ndarray
    P1: np.ndarray
    G1: np.ndarray
    G2: np.ndarray
    M: np.ndarray
    N: np.ndarray
    objective: float
    status: str
    residuals: dict
    n_lin: int
    labels: tuple | None = None
    Y1: np.ndarray | None = None
    k1: float | None = None
    robust: RobustParams | None = None
    claim: str = ""
    warnings: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    annotations: dict = field(default_factory=dict)

    @property
    def Kbar(self):
        return self.K[:, : self.n_lin]

    @property
    def Khat(self):
        return self.K[:, self.n_lin :]

    @property
    def Pinv(self):
        return np.linalg.inv(self.P1)

    @property
    def G(self):
        return np.hstack([self.G1, self.G2])

    def spectral_radius(self):
        return float(np.max(np.abs(np.linalg.eigvals(self.M)))) if self.M.size else 0.0

    def displayed_K(self):
        """K with entries below 1e-6 * max|K| shown as zero; the raw K is kept."""
        K = self.K.copy()
        scale = np.max(np.abs(K)) if K.size else 0.0
        K[np.abs(K) < ZERO_DISPLAY * scale] = 0.0
        return K

    def entry(self, label, row=0):
        if self.labels is None:
            raise InputError("result carries no dictionary labels")
        return float(self.K[row, list(self.labels).index(label)])

    def to_dict(self):
        def arr(a):
            return None if a is None else np.asarray(a).tolist()

        labels = list(self.labels) if self.labels is not None else [f"z{i + 1}" for i in range(self.K.shape[1])]
        doc = {
            "mode": self.mode,
            "labels": labels,
            "K": arr(self.K),
            "K_display": arr(self.displayed_K()),
            "P1": arr(self.P1),
            "G1": arr(self.G1),
            "G2": arr(self.G2),
            "M": arr(self.M),
            "N": arr(self.N),
            "objective": self.objective,
            "status": self.status,
            "residuals": self.residuals,
            "n_lin": self.n_lin,
            "claim": self.claim,
            "warnings": list(self.warnings),
            "solver": self.solver,
            "annotations": self.annotations,
        }
        if self.k1 is not None:
            doc["k1"] = self.k1
        if self.robust is not None:
            doc["robust"] = {
                "Delta": arr(self.robust.Delta),
                "Omega": arr(self.robust.Omega),
                "lambda1": self.robust.lambda1,
                "lambda2": self.robust.lambda2,
                "E": arr(self.robust.E),
            }
        return doc

    @classmethod
    def from_dict(cls, d):
        rob = d.get("robust")
        return cls(
            mode=d["mode"],
            K=np.array(d["K"], dtype=float),
            P1=np.array(d["P1"], dtype=float),
            G1=np.array(d["G1"], dtype=float),
            G2=np.array(d["G2"], dtype=float).reshape(len(d["G1"]), -1),
            M=np.array(d["M"], dtype=float),
            N=np.array(d["N"], dtype=float).reshape(len(d["M"]), -1),
            objective=d["objective"],
            status=d["status"],
            residuals=d["residuals"],
            n_lin=d["n_lin"],
            labels=tuple(d["labels"]),
            k1=d.get("k1"),
            robust=None
            if rob is None
            else RobustParams(rob["Delta"], rob["Omega"], rob["lambda1"], rob["lambda2"], rob.get("E")),
            claim=d.get("claim", ""),
            warnings=list(d.get("warnings", [])),
            solver=d.get("solver", {}),
            annotations=d.get("annotations", {}),
        )
