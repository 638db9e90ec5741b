"""Parameter identification for the three force models and test-set evaluation.

The first-principles fits minimize the squared error metric as a nonlinear
least-squares problem (trust-region reflective, Gauss-Newton curvature) with a
central-difference Jacobian. Constraints are built into the parametrization:
the stiffness matrix is ``K = C C^T`` with a lower-triangular Cholesky factor
(of a diagonally rescaled ``K``, for conditioning), and the material constants
are optimized as ``ln C1`` and ``ln C2``.

The lumped residual is linear in ``K``, so its fit is convex. Besides the
prescribed start ``K0``, the solver also starts from the unconstrained
least-squares ``K`` (moved into the PD cone) and, when that is indefinite,
from the best rank-one ``K`` on the cone boundary; the lowest cost wins.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Union

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from . import continuum, lumped, neural
from .continuum import MaterialParams
from .core import Dataset, FreeModelError, RecordArrays, error_from_arrays
from .lumped import StiffnessMatrix
from .neural import NetworkParams, TrainConfig

ModelParams = Union[StiffnessMatrix, MaterialParams, NetworkParams]
Predictor = Callable[[RecordArrays], tuple]

MODEL_TAGS = ("lumped", "continuum", "neural")
FIT_SCHEMA = "freebench.fit/1"
FAILED_RECORD_PENALTY = 1e6
LUMPED_K0 = np.array([[1.0, 1.0], [1.0, 1.0]]) + 1e-6 * np.eye(2)
CONTINUUM_INIT = MaterialParams(1e5, 1e6)
FD_REL_STEP = 1e-6
MAX_ITER = 500
_PENALTY_ENTRY = math.sqrt(FAILED_RECORD_PENALTY / 2.0)


@dataclass
class FitResult:
    params: ModelParams
    training_error_E: float
    iterations: int
    converged: bool
    seed: int = 0
    diagnostics: dict = field(default_factory=dict)
    history: list = field(default_factory=list)

    @property
    def model(self) -> str:
        return model_tag(self.params)

    def to_json(self) -> dict:
        return {
            "schema": FIT_SCHEMA,
            "model": self.model,
            "params": self.params.to_json(),
            "training_error_E": self.training_error_E,
            "iterations": self.iterations,
            "converged": self.converged,
            "seed": self.seed,
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FitResult":
        return cls(
            params=params_from_json(obj["model"], obj["params"]),
            training_error_E=float(obj["training_error_E"]),
            iterations=int(obj["iterations"]),
            converged=bool(obj["converged"]),
            seed=int(obj.get("seed", 0)),
            diagnostics=dict(obj.get("diagnostics", {})),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


def model_tag(params) -> str:
    if isinstance(params, StiffnessMatrix):
        return "lumped"
    if isinstance(params, MaterialParams):
        return "continuum"
    if isinstance(params, NetworkParams):
        return "neural"
    raise TypeError(f"unknown parameter type {type(params).__name__}")


def params_from_json(tag: str, obj: dict) -> ModelParams:
    if tag == "lumped":
        return StiffnessMatrix.from_json(obj)
    if tag == "continuum":
        return MaterialParams.from_json(obj)
    if tag == "neural":
        return NetworkParams.from_json(obj)
    raise ValueError(f"unknown model tag {tag!r}")


def load_params(path) -> ModelParams:
    """Parameters from a fit result file or a bare ``{"model", "params"}`` object."""
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return params_from_json(obj["model"], obj["params"])


def save_params(params: ModelParams, path) -> None:
    obj = {"model": model_tag(params), "params": params.to_json()}
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def predictor_for(params) -> Predictor:
    """Vectorized ``arrays -> (F, M, ok)`` for a parameter object or a custom callable."""
    if isinstance(params, StiffnessMatrix):
        return lambda a: lumped.predict_arrays(a, params)
    if isinstance(params, MaterialParams):
        return lambda a: continuum.predict_arrays(a, params)
    if isinstance(params, NetworkParams):
        return lambda a: neural.predict_arrays(a, params)
    if callable(params):
        return params
    raise TypeError(f"cannot build a predictor from {type(params).__name__}")


def evaluate(params, test: Dataset, penalty: float = 1.0, diagnostics: dict | None = None) -> float:
    """Error metric of a model on a test set.

    Records the model cannot evaluate count with a normalized residual of
    ``penalty`` in both components; their number goes to ``diagnostics``.
    """
    view = test.unbuckled()
    if len(view) == 0:
        raise ValueError("no admissible records")
    a = view.arrays
    F, M, ok = predictor_for(params)(a)
    F_max, M_max = view.maxima()
    F = np.where(ok, F, a.F - penalty * F_max)
    M = np.where(ok, M, a.M - penalty * M_max)
    if diagnostics is not None:
        diagnostics["n_records"] = len(view)
        diagnostics["n_failed"] = int(np.count_nonzero(~ok))
    return error_from_arrays(F, M, a.F, a.M, F_max, M_max)


def central_jacobian(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
                     rel_step: float = FD_REL_STEP) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        h = rel_step * max(abs(x[i]), 1.0)
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2.0 * h))
    return np.column_stack(cols)


class _Trace:
    """Residual wrapper recording the objective at every accepted point.

    The solver accepts a trial point exactly when it lowers the objective, and
    Jacobian probes bypass the trace, so the running minimum over trial points
    is the accepted-step sequence.
    """

    def __init__(self, resid: Callable[[np.ndarray], np.ndarray]):
        self.resid = resid
        self.history: list[float] = []

    def __call__(self, x: np.ndarray) -> np.ndarray:
        r = self.resid(x)
        v = float(r @ r)
        if not self.history or v < self.history[-1]:
            self.history.append(v)
        return r


def _minimize(resid: Callable[[np.ndarray], np.ndarray], x0: np.ndarray):
    """Minimize ``sum(resid**2)``; returns the solver result and accepted objective values."""
    trace = _Trace(resid)
    res = least_squares(
        trace, np.asarray(x0, dtype=float), jac=lambda x: central_jacobian(resid, x),
        method="trf", x_scale="jac", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=MAX_ITER,
    )
    return res, trace.history


def _prepare(train: Dataset, min_records: int = 3) -> tuple[Dataset, int]:
    """Admissible records and their number of distinct kinematic states."""
    view = train.unbuckled()
    if len(view) < min_records:
        raise ValueError(f"need at least {min_records} admissible training records, got {len(view)}")
    a = view.arrays
    n_states = len(set(zip(a.l.tolist(), a.phi.tolist())))
    if n_states < 2:
        warnings.warn("training records share one kinematic state; parameters may be unidentifiable",
                      stacklevel=3)
    return view, n_states


def _theta_to_K(theta: np.ndarray, S: np.ndarray) -> StiffnessMatrix:
    # K = S^-1 (C C^T) S^-1 with C lower triangular. The diagonal is kept
    # linear: a log-diagonal stalls when the start is close to singular.
    l11, l21, l22 = theta
    return StiffnessMatrix(
        float(l11 * l11 / (S[0] * S[0])),
        float((l21 * l21 + l22 * l22) / (S[1] * S[1])),
        float(l11 * l21 / (S[0] * S[1])),
    )


def _K_to_theta(K: np.ndarray, S: np.ndarray) -> np.ndarray:
    c = np.linalg.cholesky(S[:, None] * K * S[None, :])
    return np.array([c[0, 0], c[1, 0], c[1, 1]])


def _congruence_scale(dl, dphi, F_max, M_max) -> np.ndarray:
    """Diagonal ``S`` making each wall-force column of order one in normalized units."""
    s_l = math.sqrt(float(np.mean(dl * dl))) or 1.0
    s_p = math.sqrt(float(np.mean(dphi * dphi))) or 1.0
    return np.sqrt(np.array([s_l / F_max, s_p / M_max]))


def _linear_lstsq(yF, yM, dl, dphi, F_max, M_max) -> np.ndarray:
    """Unconstrained minimizer ``[[k_a, k_c], [k_c, k_b]]`` of the lumped residual."""
    m = len(dl)
    A = np.zeros((2 * m, 3))
    A[:m, 0], A[:m, 2] = dl / F_max, dphi / F_max
    A[m:, 1], A[m:, 2] = dphi / M_max, dl / M_max
    rhs = -np.concatenate([yF / F_max, yM / M_max])
    col = np.linalg.norm(A, axis=0)
    col[col == 0] = 1.0
    k = np.linalg.lstsq(A / col, rhs, rcond=None)[0] / col
    return np.array([[k[0], k[2]], [k[2], k[1]]])


def _rank_one_lstsq(yF, yM, dl, dphi, F_max, M_max, S, n_scan: int = 3600) -> np.ndarray:
    """Best ``K = s u u^T`` with ``s >= 0``: scan the direction of ``u``, closed-form ``s``."""
    bF, bM = yF / F_max, yM / M_max

    def solve(t):
        u = np.array([math.cos(t), math.sin(t)]) / S
        g = u[0] * dl + u[1] * dphi
        aF, aM = u[0] * g / F_max, u[1] * g / M_max
        den = float(aF @ aF + aM @ aM)
        s = max(-float(aF @ bF + aM @ bM) / den, 0.0) if den > 0 else 0.0
        cost = float(np.sum((bF + s * aF) ** 2) + np.sum((bM + s * aM) ** 2))
        return cost, s * np.outer(u, u)

    ts = np.linspace(0.0, math.pi, n_scan, endpoint=False)
    k = int(np.argmin([solve(t)[0] for t in ts]))
    step = math.pi / n_scan
    t = minimize_scalar(lambda t: solve(t)[0], bounds=(ts[k] - step, ts[k] + step), method="bounded",
                        options={"xatol": 1e-14}).x
    return solve(t)[1]


def _nearest_pd(M: np.ndarray, rel_floor: float = 1e-9) -> np.ndarray:
    """Symmetric ``M`` with eigenvalues raised to a small positive floor."""
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    floor = rel_floor * max(float(np.abs(w).max()), 1e-300)
    return (V * np.maximum(w, floor)) @ V.T


def fit_lumped(train: Dataset, seed: int = 0) -> FitResult:
    view, n_states = _prepare(train)
    a = view.arrays
    fF, fM, dl, dphi, ok = lumped.fluid_forces_arrays(a)
    if not ok.any():
        raise FreeModelError("all training records are at a singular or overstretched configuration")
    n = len(a)
    n_fail = int(np.count_nonzero(~ok))
    F_max, M_max = view.maxima()
    # measured minus fluid part; the wall term -K dq must account for the rest
    yF, yM = (a.F - fF)[ok], (a.M - fM)[ok]
    dl, dphi = dl[ok], dphi[ok]
    S = _congruence_scale(dl, dphi, F_max, M_max)

    pen = np.full(2 * n_fail, _PENALTY_ENTRY)
    root_n = math.sqrt(n)

    def resid(theta):
        K = _theta_to_K(theta, S)
        rF = (yF + K.k_a * dl + K.k_c * dphi) / F_max
        rM = (yM + K.k_c * dl + K.k_b * dphi) / M_max
        return np.concatenate([rF / root_n, rM / root_n, pen])

    # the residual is linear in K, so the fit is convex; besides K0, start from
    # the unconstrained least-squares K pulled into the PD cone
    K_ls = _linear_lstsq(yF, yM, dl, dphi, F_max, M_max)
    starts = [("K0", LUMPED_K0)]
    if np.all(np.isfinite(K_ls)) and np.any(K_ls != 0):
        starts.append(("least_squares", _nearest_pd(K_ls)))
        if np.linalg.eigvalsh(K_ls)[0] <= 0:
            # the optimum then lies on the singular boundary of the PD cone
            starts.append(("boundary", _nearest_pd(_rank_one_lstsq(yF, yM, dl, dphi, F_max, M_max, S))))
    runs, labels = [], []
    for label, K0 in starts:
        try:
            theta0 = _K_to_theta(K0, S)
        except np.linalg.LinAlgError:
            continue
        runs.append(_minimize(resid, theta0))
        labels.append(label)
    best = int(np.argmin([run[0].cost for run in runs]))
    res, history = runs[best]
    K = _theta_to_K(res.x, S)
    E = evaluate(K, view)
    return FitResult(
        params=K,
        training_error_E=E,
        iterations=int(sum(run[0].nfev for run in runs)),
        # a single state leaves the wall stiffness without data
        converged=bool(res.success) and n_fail == 0 and n_states > 1,
        seed=seed,
        diagnostics={"n_records": n, "n_failed": n_fail, "n_states": n_states,
                     "start": labels[best],
                     "optimizer_message": str(res.message)},
        history=[math.sqrt(max(h - FAILED_RECORD_PENALTY * n_fail, 0.0)) for h in history],
    )


def fit_continuum(train: Dataset, seed: int = 0, init: MaterialParams = CONTINUUM_INIT) -> FitResult:
    view, n_states = _prepare(train)
    a = view.arrays
    n = len(a)
    F_max, M_max = view.maxima()
    failures: list[int] = []

    root_n = math.sqrt(n)

    def resid(theta):
        p = MaterialParams(math.exp(theta[0]), math.exp(theta[1]))
        F, M, ok = continuum.predict_arrays(a, p)
        rF = np.where(ok, (a.F - F) / (F_max * root_n), _PENALTY_ENTRY)
        rM = np.where(ok, (a.M - M) / (M_max * root_n), _PENALTY_ENTRY)
        failures.append(n - int(np.count_nonzero(ok)))
        return np.concatenate([rF, rM])

    theta0 = np.log([init.C1, init.C2])
    res, history = _minimize(resid, theta0)
    params = MaterialParams(math.exp(res.x[0]), math.exp(res.x[1]))
    diag: dict = {}
    E = evaluate(params, view, diagnostics=diag)
    diag["candidates_with_failures"] = int(sum(1 for f in failures if f))
    diag["n_states"] = n_states
    diag["optimizer_message"] = str(res.message)
    return FitResult(
        params=params,
        training_error_E=E,
        iterations=int(res.nfev),
        converged=bool(res.success) and diag["n_failed"] == 0,
        seed=seed,
        diagnostics=diag,
        history=[math.sqrt(h) if h < FAILED_RECORD_PENALTY else math.inf for h in history],
    )


def fit_neural(train: Dataset, validation: Dataset, seed: int = 0,
               config: TrainConfig | None = None) -> FitResult:
    params, log = neural.fit_network(train, validation, seed, config)
    E = evaluate(params, train.unbuckled())
    return FitResult(
        params=params,
        training_error_E=E,
        iterations=log.epochs,
        converged=log.stop_reason in ("min_grad", "validation_stop"),
        seed=seed,
        diagnostics={"stop_reason": log.stop_reason, "best_epoch": log.best_epoch,
                     "best_val_E": log.best_val_E, "final_val_E": log.final_val_E,
                     "attempt": log.attempt},
        history=list(log.train_E),
    )


def fit_model(tag: str, train: Dataset, seed: int = 0, validation: Dataset | None = None,
              val_frac: float = 0.16) -> FitResult:
    """Fit by model tag; the network holds out ``val_frac`` of ``train`` when no validation set is given."""
    if tag == "lumped":
        return fit_lumped(train, seed)
    if tag == "continuum":
        return fit_continuum(train, seed)
    if tag == "neural":
        if validation is None:
            from .core import partition
            train, _, validation = partition(train, (1.0 - val_frac, 0.0, val_frac), seed)
        return fit_neural(train, validation, seed)
    raise ValueError(f"unknown model tag {tag!r}; expected one of {MODEL_TAGS}")
