"""Point-trajectory predictors, their base loss, and joint training with the surrogate."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, standardization_stats, standardize_trajectory
from .errors import ConfigError, DataError, NumericError, SchemaError
from .gpr import PARAM_FLOOR, GprSurrogate, KernelParams, grad_l2, sq_dist

log = logging.getLogger(__name__)

MODEL_FORMAT = "cuqds-model/1"


@dataclass(frozen=True, eq=False)
class PredictorOutput:
    """``K`` candidate futures ``(K, J, D)``, sorted by descending probability."""

    modes: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        modes = np.asarray(self.modes, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if modes.ndim != 3 or modes.shape[0] < 1:
            raise SchemaError(f"modes must be (K, J, D) with K >= 1, got {modes.shape}")
        if probs.shape != (modes.shape[0],):
            raise SchemaError(f"probs shape {probs.shape} does not match K={modes.shape[0]}")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise SchemaError("probs must be nonnegative and sum to 1")
        if probs[0] < probs.max():
            raise SchemaError("mode 0 must be the most probable")
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def single(cls, traj: np.ndarray) -> "PredictorOutput":
        return cls(np.asarray(traj, dtype=float)[None], np.ones(1))

    @property
    def mean(self) -> np.ndarray:
        """Mode 0, used as the Gaussian mean downstream."""
        return self.modes[0]


def predict_constant_velocity(x: np.ndarray, J: int) -> PredictorOutput:
    """Repeat the last observed displacement ``J`` times."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise DataError("constant-velocity prediction needs L >= 2")
    step = x[-1] - x[-2]
    j = np.arange(1, J + 1)[:, None]
    return PredictorOutput.single(x[-1] + j * step)


@dataclass(frozen=True)
class ConstantVelocityPredictor:
    J: int

    def predict(self, x: np.ndarray) -> PredictorOutput:
        return predict_constant_velocity(x, self.J)


@dataclass(eq=False)
class LinearPredictor:
    """Affine map from the standardized history to the standardized future.

    The output is de-standardized with the history's own per-dimension mean
    and std, which makes predictions translation equivariant.  ``weight`` has
    shape ``(J*D, L*D)``; both sides are flattened time-major.
    """

    L: int
    J: int
    D: int
    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weight.shape != (self.J * self.D, self.L * self.D):
            raise SchemaError(f"weight shape {self.weight.shape} != {(self.J * self.D, self.L * self.D)}")
        if self.bias.shape != (self.J * self.D,):
            raise SchemaError(f"bias shape {self.bias.shape} != {(self.J * self.D,)}")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise NumericError("linear predictor parameters must be finite")

    @classmethod
    def zeros(cls, L: int, J: int, D: int) -> "LinearPredictor":
        return cls(L, J, D, np.zeros((J * D, L * D)), np.zeros(J * D))

    @classmethod
    def constant_velocity(cls, L: int, J: int, D: int) -> "LinearPredictor":
        """Weights that reproduce constant-velocity extrapolation exactly."""
        if L < 2:
            raise ConfigError("constant-velocity weights need L >= 2")
        w = np.zeros((J * D, L * D))
        for j in range(1, J + 1):
            for d in range(D):
                row = (j - 1) * D + d
                w[row, (L - 1) * D + d] = 1.0 + j
                w[row, (L - 2) * D + d] = -float(j)
        return cls(L, J, D, w, np.zeros(J * D))

    @classmethod
    def fit_least_squares(cls, train: Dataset, ridge: float = 1e-6) -> "LinearPredictor":
        """Closed-form minimizer of the MSE loss (plus a small ridge term).

        The de-standardization makes the absolute-coordinate MSE a weighted
        least-squares problem per output dimension with weights ``std**2``.
        """
        if len(train) == 0:
            raise DataError("cannot fit on an empty dataset")
        L, J, D = train.dims
        b = _Batch.of(train)
        n = len(b.z)
        feats = np.hstack([b.z, np.ones((n, 1))])
        weight = np.zeros((J * D, L * D))
        bias = np.zeros(J * D)
        for d in range(D):
            target = (b.y[:, :, d] - b.mean[:, None, d]) / b.std[:, None, d]
            wts = b.std[:, d] ** 2
            gram = feats.T @ (feats * wts[:, None])
            reg = ridge * max(np.trace(gram) / gram.shape[0], 1.0)
            coef = np.linalg.solve(gram + reg * np.eye(gram.shape[0]), feats.T @ (target * wts[:, None]))
            weight[d::D] = coef[:-1].T
            bias[d::D] = coef[-1]
        return cls(L, J, D, weight, bias)

    def copy(self) -> "LinearPredictor":
        return LinearPredictor(self.L, self.J, self.D, self.weight.copy(), self.bias.copy())

    def predict(self, x: np.ndarray) -> PredictorOutput:
        return predict_linear(self, x)

    def predict_batch(self, xs: np.ndarray) -> np.ndarray:
        """Mode-0 predictions for a stack ``(N, L, D)`` -> ``(N, J, D)``."""
        xs = np.asarray(xs, dtype=float)
        if xs.shape[1:] != (self.L, self.D):
            raise SchemaError(f"input shape {xs.shape[1:]} != {(self.L, self.D)}")
        mean, std = standardization_stats(xs)
        z = ((xs - mean[:, None, :]) / std[:, None, :]).reshape(len(xs), -1)
        u = (z @ self.weight.T + self.bias).reshape(len(xs), self.J, self.D)
        return u * std[:, None, :] + mean[:, None, :]


def predict_linear(model: LinearPredictor, x: np.ndarray) -> PredictorOutput:
    x = np.asarray(x, dtype=float)
    if x.shape != (model.L, model.D):
        raise SchemaError(f"input shape {x.shape} != {(model.L, model.D)}")
    return PredictorOutput.single(model.predict_batch(x[None])[0])


def loss_l1(pred: PredictorOutput | np.ndarray, y: np.ndarray) -> float:
    """Mean squared error of mode 0 over all ``J * D`` coordinates."""
    mean = pred.mean if isinstance(pred, PredictorOutput) else np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if mean.shape != y.shape:
        raise SchemaError(f"prediction shape {mean.shape} != target shape {y.shape}")
    return float(np.mean((y - mean) ** 2))


# --------------------------------------------------------------------------
# Joint training
# --------------------------------------------------------------------------


def softplus(x: float) -> float:
    return max(x, 0.0) + math.log1p(math.exp(-abs(x)))


def softplus_inv(y: float) -> float:
    if y > 30.0:
        return y
    return math.log(math.expm1(y))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def to_positive(raw: float) -> float:
    return PARAM_FLOOR + softplus(raw)


def from_positive(value: float) -> float:
    return softplus_inv(max(value - PARAM_FLOOR, 1e-12))


@dataclass
class TrainConfig:
    """Hyperparameters of the full-batch joint descent.

    ``lr`` steps the predictor weights and ``lr_omega`` the raw (softplus)
    surrogate parameters.  Both are upper bounds: a rejected step halves them,
    an accepted one grows them by ``growth`` back toward the bound.
    """

    epochs: int = 200
    lr: float = 0.02
    lr_omega: float = 5.0
    w1: float = 1.0
    w2: float = 0.1
    growth: float = 1.5
    max_halvings: int = 40
    tolerance: float = 1e-12
    train_theta: bool = True
    train_omega: bool = True

    def validate(self) -> None:
        if self.epochs < 0 or self.lr <= 0 or self.lr_omega <= 0:
            raise ConfigError("epochs must be >= 0 and learning rates > 0")
        if self.w1 < 0 or self.w2 < 0:
            raise ConfigError("loss weights must be nonnegative")


@dataclass
class TrainResult:
    model: LinearPredictor
    surrogate: GprSurrogate
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0


@dataclass
class _Batch:
    xs_std: np.ndarray  # (N, L, D)
    z: np.ndarray  # (N, L*D)
    mean: np.ndarray  # (N, D)
    std: np.ndarray  # (N, D)
    y: np.ndarray  # (N, J, D)
    sq_dists: np.ndarray | None = None  # (N, M), inducing set is fixed during training

    @classmethod
    def of(cls, ds: Dataset, inducing: np.ndarray | None = None) -> "_Batch":
        xs = ds.observed_array()
        mean, std = standardization_stats(xs)
        xs_std = (xs - mean[:, None, :]) / std[:, None, :]
        d2 = None if inducing is None else sq_dist(xs_std, inducing)
        return cls(xs_std, xs_std.reshape(len(xs), -1), mean, std, ds.future_array(), d2)


def _joint_loss(model: LinearPredictor, g: GprSurrogate, b: _Batch, cfg: TrainConfig,
                need_grad: bool):
    # overflow surfaces as a non-finite loss, which train_joint reports
    with np.errstate(over="ignore", invalid="ignore"):
        return _joint_loss_inner(model, g, b, cfg, need_grad)


def _joint_loss_inner(model, g, b, cfg, need_grad):
    n = len(b.z)
    u = b.z @ model.weight.T + model.bias
    u = u.reshape(n, model.J, model.D)
    pred = u * b.std[:, None, :] + b.mean[:, None, :]
    resid = b.y - pred
    l1 = float(np.mean(resid**2))
    gl2 = grad_l2(g, b.xs_std, resid, b.sq_dists)
    total = cfg.w1 * l1 + cfg.w2 * gl2.loss
    if not need_grad:
        return total, None
    # d total / d pred, then through de-standardization to the affine output
    d_pred = -(cfg.w1 * 2.0 * resid / resid[0].size / n + cfg.w2 * gl2.d_residuals)
    d_u = (d_pred * b.std[:, None, :]).reshape(n, -1)
    grads = {
        "weight": d_u.T @ b.z,
        "bias": d_u.sum(axis=0),
        "l1": cfg.w2 * gl2.d_l1,
        "l2": cfg.w2 * gl2.d_l2,
        "noise": cfg.w2 * gl2.d_noise,
    }
    return total, grads


def train_joint(model: LinearPredictor, gpr: GprSurrogate, train: Dataset, val: Dataset,
                cfg: TrainConfig | None = None) -> TrainResult:
    """Minimize ``w1 * L1 + w2 * L2`` over predictor weights and surrogate params.

    Full-batch gradient descent with step halving whenever the training loss
    would increase.  Returns the epoch with the lowest validation loss.  Epoch
    0 in the curves is the initial state.
    """
    cfg = cfg or TrainConfig()
    cfg.validate()
    if len(train) == 0 or len(val) == 0:
        raise DataError("training and validation sets must be nonempty")
    if train.dims != (model.L, model.J, model.D) or val.dims != train.dims:
        raise SchemaError(f"dataset dims {train.dims} do not match model {(model.L, model.J, model.D)}")
    tb, vb = _Batch.of(train, gpr.inducing), _Batch.of(val, gpr.inducing)

    model = model.copy()
    raw = np.array([from_positive(gpr.kernel.l1), from_positive(gpr.kernel.l2),
                    from_positive(gpr.noise_std)])
    lr_theta, lr_omega = cfg.lr, cfg.lr_omega

    def surrogate_of(r):
        return gpr.with_params(*(to_positive(v) for v in r))

    def check(value, epoch, what):
        if not math.isfinite(value):
            raise NumericError(
                f"non-finite {what} at epoch {epoch}: l1={g.kernel.l1:.6g} "
                f"l2={g.kernel.l2:.6g} noise={g.noise_std:.6g} "
                f"|W|={np.linalg.norm(model.weight):.6g}"
            )

    g = surrogate_of(raw)
    loss, grads = _joint_loss(model, g, tb, cfg, need_grad=True)
    vloss, _ = _joint_loss(model, g, vb, cfg, need_grad=False)
    check(loss, 0, "training loss")
    check(vloss, 0, "validation loss")
    result = TrainResult(model.copy(), g, [loss], [vloss], 0)
    best = vloss

    for epoch in range(1, cfg.epochs + 1):
        jac = np.array([sigmoid(v) for v in raw])
        d_raw = np.array([grads["l1"], grads["l2"], grads["noise"]]) * jac
        accepted = False
        for _ in range(cfg.max_halvings):
            cand = model.copy()
            if cfg.train_theta:
                cand.weight -= lr_theta * grads["weight"]
                cand.bias -= lr_theta * grads["bias"]
            cand_raw = raw - lr_omega * d_raw if cfg.train_omega else raw
            try:
                cand_g = surrogate_of(cand_raw)
                cand_loss, _ = _joint_loss(cand, cand_g, tb, cfg, need_grad=False)
            except NumericError:
                cand_loss = math.inf
            if cand_loss <= loss + cfg.tolerance * max(1.0, abs(loss)):
                accepted = True
                break
            lr_theta *= 0.5
            lr_omega *= 0.5
        if not accepted:
            log.info("epoch %d: no descent step found, stopping", epoch)
            break
        model, raw, g = cand, cand_raw, cand_g
        loss, grads = _joint_loss(model, g, tb, cfg, need_grad=True)
        vloss, _ = _joint_loss(model, g, vb, cfg, need_grad=False)
        check(loss, epoch, "training loss")
        check(vloss, epoch, "validation loss")
        result.train_loss.append(loss)
        result.val_loss.append(vloss)
        if vloss < best:
            best = vloss
            result.model, result.surrogate, result.best_epoch = model.copy(), g, epoch
        lr_theta = min(cfg.lr, lr_theta * cfg.growth)
        lr_omega = min(cfg.lr_omega, lr_omega * cfg.growth)
    return result


# --------------------------------------------------------------------------
# Persistence
# --------------------------------------------------------------------------


def model_to_dict(model: LinearPredictor | ConstantVelocityPredictor, gpr: GprSurrogate,
                  L: int | None = None, D: int | None = None) -> dict:
    """Self-describing model record; floats are written with full precision."""
    if isinstance(model, LinearPredictor):
        pred = {"kind": "linear", "weight": model.weight.tolist(), "bias": model.bias.tolist()}
        L, J, D = model.L, model.J, model.D
    else:
        pred = {"kind": "constant-velocity"}
        J = model.J
        L, D = gpr.input_shape
    return {
        "format": MODEL_FORMAT,
        "L": L,
        "J": J,
        "D": D,
        "predictor": pred,
        "gpr": {
            "l1": gpr.kernel.l1,
            "l2": gpr.kernel.l2,
            "noise_std": gpr.noise_std,
            "inducing": gpr.inducing.tolist(),
        },
    }


def model_from_dict(rec: dict):
    if rec.get("format") != MODEL_FORMAT:
        raise SchemaError(f"unsupported model format {rec.get('format')!r}")
    try:
        L, J, D = int(rec["L"]), int(rec["J"]), int(rec["D"])
        p = rec["predictor"]
        if p["kind"] == "linear":
            model = LinearPredictor(L, J, D, np.array(p["weight"]), np.array(p["bias"]))
        elif p["kind"] == "constant-velocity":
            model = ConstantVelocityPredictor(J)
        else:
            raise SchemaError(f"unknown predictor kind {p['kind']!r}")
        gp = rec["gpr"]
        gpr = GprSurrogate(KernelParams(float(gp["l1"]), float(gp["l2"])),
                           float(gp["noise_std"]), np.array(gp["inducing"], dtype=float))
    except KeyError as exc:
        raise SchemaError(f"model file is missing {exc}") from None
    if gpr.input_shape != (L, D):
        raise SchemaError(f"inducing shape {gpr.input_shape} does not match L, D = {(L, D)}")
    return model, gpr


def save_model(path, model, gpr: GprSurrogate) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model, gpr), fh, indent=1)
        fh.write("\n")


def load_model(path):
    """Return ``(predictor, surrogate)`` from a file written by :func:`save_model`."""
    with open(path, encoding="utf-8") as fh:
        try:
            rec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: invalid model file ({exc.msg})") from None
    return model_from_dict(rec)
