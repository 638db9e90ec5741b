"""Shallow tanh network (7 inputs, 6 hidden units, 2 linear outputs) trained by Levenberg-Marquardt.

Inputs are ``[l, phi, P, gamma, L, Ri, Ro]`` in SI units, min-max scaled to
[-1, 1] on the training set. Features that are constant over the training
set (the design inputs of a single-sample set) are frozen at zero and their
input weights are left out of the optimization.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, FreeDesign, GeneralizedForce, KinematicState, RecordArrays

N_IN, N_HIDDEN, N_OUT = 7, 6, 2
N_PARAMS = N_HIDDEN * N_IN + N_HIDDEN + N_OUT * N_HIDDEN + N_OUT  # 62
SCHEMA = "freebench.network/1"
FEATURES = ("l", "phi", "P", "gamma", "L", "Ri", "Ro")


class ExtrapolationWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class NetworkParams:
    w: np.ndarray        # (6, 7) input weights
    o: np.ndarray        # (6,) hidden biases
    u: np.ndarray        # (2, 6) output weights
    b: np.ndarray        # (2,) output biases
    in_min: np.ndarray
    in_max: np.ndarray
    out_min: np.ndarray
    out_max: np.ndarray

    def __post_init__(self):
        shapes = {"w": (N_HIDDEN, N_IN), "o": (N_HIDDEN,), "u": (N_OUT, N_HIDDEN), "b": (N_OUT,),
                  "in_min": (N_IN,), "in_max": (N_IN,), "out_min": (N_OUT,), "out_max": (N_OUT,)}
        for name, shape in shapes.items():
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.in_max < self.in_min):
            raise ValueError("input normalizer has min > max")
        if np.any(self.out_max <= self.out_min):
            raise ValueError("output normalizer needs min < max")

    @property
    def active(self) -> np.ndarray:
        """Input features with a non-degenerate normalizer."""
        return self.in_max > self.in_min

    def flat(self) -> np.ndarray:
        return np.concatenate([self.w.ravel(), self.o, self.u.ravel(), self.b])

    def with_flat(self, theta: np.ndarray) -> "NetworkParams":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (N_PARAMS,):
            raise ValueError(f"expected {N_PARAMS} parameters, got {theta.shape}")
        i = 0
        parts = []
        for size, shape in ((42, (6, 7)), (6, (6,)), (12, (2, 6)), (2, (2,))):
            parts.append(theta[i:i + size].reshape(shape))
            i += size
        return NetworkParams(*parts, self.in_min, self.in_max, self.out_min, self.out_max)

    def to_json(self) -> dict:
        return {
            "schema": SCHEMA,
            "n_inputs": N_IN, "n_hidden": N_HIDDEN, "n_outputs": N_OUT,
            "features": list(FEATURES),
            "input_weights": self.w.ravel().tolist(),
            "hidden_biases": self.o.tolist(),
            "output_weights": self.u.ravel().tolist(),
            "output_biases": self.b.tolist(),
            "input_min": self.in_min.tolist(), "input_max": self.in_max.tolist(),
            "output_min": self.out_min.tolist(), "output_max": self.out_max.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "NetworkParams":
        if obj.get("schema") != SCHEMA:
            raise ValueError(f"unsupported network schema {obj.get('schema')!r}")
        if (obj["n_inputs"], obj["n_hidden"], obj["n_outputs"]) != (N_IN, N_HIDDEN, N_OUT):
            raise ValueError("network topology does not match 7-6-2")
        return cls(
            np.reshape(obj["input_weights"], (N_HIDDEN, N_IN)),
            np.asarray(obj["hidden_biases"]),
            np.reshape(obj["output_weights"], (N_OUT, N_HIDDEN)),
            np.asarray(obj["output_biases"]),
            np.asarray(obj["input_min"]), np.asarray(obj["input_max"]),
            np.asarray(obj["output_min"]), np.asarray(obj["output_max"]),
        )


def features(a: RecordArrays) -> np.ndarray:
    return np.column_stack([a.l, a.phi, a.P, a.gamma, a.L, a.Ri, a.Ro])


def feature_vector(q: KinematicState, P: float, design: FreeDesign) -> np.ndarray:
    return np.array([q.length_l, q.twist_phi, P, design.gamma, design.length_L,
                     design.inner_radius_Ri, design.outer_radius_Ro])


def normalize_inputs(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    span = params.in_max - params.in_min
    active = span > 0
    safe = np.where(active, span, 1.0)
    return np.where(active, 2.0 * (X - params.in_min) / safe - 1.0, 0.0)


def extrapolated(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Rows with any input beyond half a range outside the training interval."""
    span = params.in_max - params.in_min
    slack = 0.5 * span + 1e-12 * np.maximum(np.abs(params.in_min), np.abs(params.in_max))
    outside = (X < params.in_min - slack) | (X > params.in_max + slack)
    return np.any(np.atleast_2d(outside), axis=1)


def _hidden(params: NetworkParams, Xn: np.ndarray) -> np.ndarray:
    return np.tanh(Xn @ params.w.T + params.o)


def forward_arrays(params: NetworkParams, X: np.ndarray) -> np.ndarray:
    """Outputs ``(n, 2)`` of physical ``[F, M]`` for feature rows ``X``."""
    Xn = normalize_inputs(params, np.atleast_2d(X))
    Yn = _hidden(params, Xn) @ params.u.T + params.b
    return params.out_min + 0.5 * (Yn + 1.0) * (params.out_max - params.out_min)


def forward_with_flag(q: KinematicState, P: float, design: FreeDesign, params: NetworkParams
                      ) -> tuple[GeneralizedForce, bool]:
    x = feature_vector(q, P, design)[None, :]
    y = forward_arrays(params, x)[0]
    return GeneralizedForce(float(y[0]), float(y[1])), bool(extrapolated(params, x)[0])


def forward(q: KinematicState, P: float, design: FreeDesign, params: NetworkParams) -> GeneralizedForce:
    tau, flag = forward_with_flag(q, P, design, params)
    if flag:
        warnings.warn("network input lies outside the training range", ExtrapolationWarning, stacklevel=2)
    return tau


def predict_arrays(a: RecordArrays, params: NetworkParams):
    Y = forward_arrays(params, features(a))
    return Y[:, 0], Y[:, 1], np.ones(len(a), dtype=bool)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    max_epochs: int = 1000
    max_fail: int = 6
    mu: float = 1e-3
    mu_inc: float = 10.0
    mu_dec: float = 0.1
    mu_min: float = 1e-12
    mu_max: float = 1e12
    min_grad: float = 1e-10
    init_scale: float = 0.5
    restarts: int = 5


@dataclass
class TrainingLog:
    epochs: int = 0
    stop_reason: str = ""
    train_E: list = field(default_factory=list)
    val_E: list = field(default_factory=list)
    best_epoch: int = 0
    final_val_E: float = math.nan
    best_val_E: float = math.nan
    attempt: int = 0


def _normalizers(X: np.ndarray, T: np.ndarray):
    in_min, in_max = X.min(axis=0), X.max(axis=0)
    # exact constants are frozen; guard against spans at rounding level
    tiny = in_max - in_min <= 1e-12 * np.maximum(np.abs(in_max), 1e-300)
    in_max = np.where(tiny, in_min, in_max)
    out_min, out_max = T.min(axis=0), T.max(axis=0)
    flat = out_max <= out_min
    out_min = np.where(flat, out_min - 0.5, out_min)
    out_max = np.where(flat, out_max + 0.5, out_max)
    return in_min, in_max, out_min, out_max


def init_params(X: np.ndarray, T: np.ndarray, rng: np.random.Generator, scale: float = 0.5
                ) -> NetworkParams:
    """Uniform weights in ``[-scale, scale]`` divided by the square root of the fan-in."""
    in_min, in_max, out_min, out_max = _normalizers(X, T)
    active = in_max > in_min
    fan_in = max(int(active.sum()), 1)
    w = rng.uniform(-scale, scale, (N_HIDDEN, N_IN)) / math.sqrt(fan_in)
    w[:, ~active] = 0.0
    o = rng.uniform(-scale, scale, N_HIDDEN)
    u = rng.uniform(-scale, scale, (N_OUT, N_HIDDEN)) / math.sqrt(N_HIDDEN)
    b = rng.uniform(-scale, scale, N_OUT)
    return NetworkParams(w, o, u, b, in_min, in_max, out_min, out_max)


def free_mask(params: NetworkParams) -> np.ndarray:
    mask = np.ones(N_PARAMS, dtype=bool)
    wmask = np.broadcast_to(params.active, (N_HIDDEN, N_IN))
    mask[:N_HIDDEN * N_IN] = wmask.ravel()
    return mask


class _Objective:
    """Residuals ``r`` with ``|r|^2 = E^2`` on a fixed data set, and their Jacobian."""

    def __init__(self, params: NetworkParams, X: np.ndarray, T: np.ndarray, F_max: float, M_max: float):
        self.template = params
        self.Xn = normalize_inputs(params, X)
        self.T = T
        n = len(T)
        self.scale = (params.out_max - params.out_min) / 2.0 / np.array([F_max, M_max]) / math.sqrt(n)
        self.T_scaled = (T - params.out_min) / (params.out_max - params.out_min) * 2.0 - 1.0

    def residuals(self, theta: np.ndarray) -> np.ndarray:
        p = self.template.with_flat(theta)
        Yn = _hidden(p, self.Xn) @ p.u.T + p.b
        return ((Yn - self.T_scaled) * self.scale).T.ravel()

    def jacobian(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        p = self.template.with_flat(theta)
        Xn = self.Xn
        n = len(Xn)
        H = _hidden(p, Xn)                      # (n, 6)
        Yn = H @ p.u.T + p.b
        r = ((Yn - self.T_scaled) * self.scale).T.ravel()
        dH = 1.0 - H * H                         # (n, 6)
        J = np.zeros((N_OUT * n, N_PARAMS))
        for k in range(N_OUT):
            rows = slice(k * n, (k + 1) * n)
            g = dH * p.u[k]                      # d yn_k / d z_j
            J[rows, :42] = (g[:, :, None] * Xn[:, None, :]).reshape(n, 42)
            J[rows, 42:48] = g
            J[rows, 48 + 6 * k:48 + 6 * (k + 1)] = H
            J[rows, 60 + k] = 1.0
            J[rows] *= self.scale[k]
        return J, r


def _sq(r: np.ndarray) -> float:
    return float(r @ r)


def _lm_run(params: NetworkParams, obj: _Objective, vobj: _Objective, cfg: TrainConfig
            ) -> tuple[np.ndarray, TrainingLog, float]:
    mask = free_mask(params)
    theta = params.flat()
    theta[~mask] = 0.0
    mu = cfg.mu
    log = TrainingLog()
    cur = _sq(obj.residuals(theta))
    best_val = prev_val = _sq(vobj.residuals(theta))
    best_theta = theta.copy()
    log.train_E.append(math.sqrt(cur))
    log.val_E.append(math.sqrt(best_val))
    fails = 0
    eye = np.eye(int(mask.sum()))
    reason = "max_epochs"
    for epoch in range(1, cfg.max_epochs + 1):
        J, r = obj.jacobian(theta)
        J = J[:, mask]
        grad = J.T @ r
        if np.linalg.norm(grad) < cfg.min_grad:
            reason = "min_grad"
            break
        JTJ = J.T @ J
        accepted = False
        while mu <= cfg.mu_max:
            try:
                step = np.linalg.solve(JTJ + mu * eye, -grad)
            except np.linalg.LinAlgError:
                mu *= cfg.mu_inc
                continue
            trial = theta.copy()
            trial[mask] += step
            new = _sq(obj.residuals(trial))
            if new < cur:
                theta, cur = trial, new
                mu = max(mu * cfg.mu_dec, cfg.mu_min)
                accepted = True
                break
            mu *= cfg.mu_inc
        if not accepted:
            reason = "mu_max"
            break
        val = _sq(vobj.residuals(theta))
        log.epochs = epoch
        log.train_E.append(math.sqrt(cur))
        log.val_E.append(math.sqrt(val))
        if val < best_val:
            best_val = val
            best_theta = theta.copy()
            log.best_epoch = epoch
        fails = fails + 1 if val > prev_val else 0
        prev_val = val
        if fails >= cfg.max_fail:
            reason = "validation_stop"
            break
    log.stop_reason = reason
    log.final_val_E = math.sqrt(_sq(vobj.residuals(theta)))
    log.best_val_E = math.sqrt(best_val)
    return best_theta, log, best_val


def fit_network(train_set: Dataset, validation_set: Dataset, seed: int,
                config: TrainConfig | None = None, init: NetworkParams | None = None
                ) -> tuple[NetworkParams, TrainingLog]:
    """Levenberg-Marquardt on ``E^2`` with early stopping on the validation set.

    Each of ``config.restarts`` runs starts from weights drawn with a seed
    spawned from ``seed``; the run with the lowest validation error wins and
    its best-validation parameters are returned with that run's log.
    """
    cfg = config or TrainConfig()
    train_set = train_set.unbuckled()
    validation_set = validation_set.unbuckled()
    if len(train_set) == 0:
        raise ValueError("training set is empty")
    if len(validation_set) == 0:
        raise ValueError("validation set is empty")
    ids_train = {id(r) for r in train_set.records}
    if any(id(r) in ids_train for r in validation_set.records):
        raise ValueError("training and validation sets overlap")

    a, v = train_set.arrays, validation_set.arrays
    X, T = features(a), np.column_stack([a.F, a.M])
    Xv, Tv = features(v), np.column_stack([v.F, v.M])
    F_max, M_max = train_set.maxima()
    Fv_max, Mv_max = validation_set.maxima()
    if not (F_max > 0 and M_max > 0 and Fv_max > 0 and Mv_max > 0):
        raise ValueError("degenerate normalization")

    if init is not None:
        starts = [init]
    else:
        seqs = np.random.SeedSequence(seed).spawn(max(cfg.restarts, 1))
        starts = [init_params(X, T, np.random.default_rng(s), cfg.init_scale) for s in seqs]
    n_free = int(free_mask(starts[0]).sum())
    if len(train_set) < n_free:
        warnings.warn(f"{len(train_set)} training records for {n_free} free parameters; under-determined",
                      stacklevel=2)

    best = None
    for attempt, start in enumerate(starts):
        obj = _Objective(start, X, T, F_max, M_max)
        vobj = _Objective(start, Xv, Tv, Fv_max, Mv_max)
        theta, log, val = _lm_run(start, obj, vobj, cfg)
        if best is None or val < best[2]:
            best = (start.with_flat(theta), log, val, attempt)
    params, log, _, attempt = best
    log.attempt = attempt
    return params, log


def train(train_set: Dataset, validation_set: Dataset, seed: int,
          config: TrainConfig | None = None) -> NetworkParams:
    params, _ = fit_network(train_set, validation_set, seed, config)
    return params
