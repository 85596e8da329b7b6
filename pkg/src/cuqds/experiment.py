"""End-to-end wiring shared by the CLI, the scripts and the acceptance suite."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .conformal import (ConformalState, StreamRecord, run_stream, split_cp_quantile,
                        validation_scores, warmup_validation)
from .data import Dataset
from .gpr import GprSurrogate, fit_inducing, initial_surrogate
from .metrics import gaussian_nll, min_ade
from .predictors import (ConstantVelocityPredictor, LinearPredictor, TrainConfig, TrainResult,
                         train_joint)


def train_config(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(epochs=cfg.epochs, lr=cfg.lr, lr_omega=cfg.lr_omega, w1=cfg.w1, w2=cfg.w2,
                       train_theta=cfg.predictor == "linear")


def initial_models(cfg: RunConfig, train: Dataset) -> tuple[LinearPredictor, GprSurrogate]:
    L, J, D = train.dims
    inducing, _ = fit_inducing(train, cfg.m_inducing)
    gpr = initial_surrogate(inducing, cfg.l1_init, cfg.l2_init or None, cfg.noise_init)
    if cfg.predictor == "constant-velocity" or cfg.init == "constant-velocity":
        model = LinearPredictor.constant_velocity(L, J, D)
    elif cfg.init == "zeros":
        model = LinearPredictor.zeros(L, J, D)
    else:
        model = LinearPredictor.fit_least_squares(train)
    return model, gpr


def train_models(cfg: RunConfig, train: Dataset, val: Dataset):
    """Fit inducing variables, then jointly train predictor and surrogate.

    Returns ``(predictor, surrogate, TrainResult)``.  With the
    constant-velocity predictor only the surrogate parameters are trained.
    """
    model, gpr = initial_models(cfg, train)
    result = train_joint(model, gpr, train, val, train_config(cfg))
    predictor = (ConstantVelocityPredictor(train.dims[1]) if cfg.predictor == "constant-velocity"
                 else result.model)
    return predictor, result.surrogate, result


def warm_state(cfg: RunConfig, val: Dataset, predictor, surrogate) -> ConformalState:
    state = ConformalState(cfg.alpha, cfg.beta, 1.0, cfg.window)
    return warmup_validation(state, val, predictor, surrogate, cfg.warmup_epochs)


def stream_state(cfg: RunConfig, val: Dataset | None, predictor, surrogate,
                 warmed: ConformalState | None) -> tuple[ConformalState, bool]:
    """Initial state for the chosen calibrator and whether it adapts."""
    if cfg.calibrator == "p-control":
        if warmed is None:
            warmed = warm_state(cfg, val, predictor, surrogate)
        rec = warmed.to_dict()
        rec.update(alpha=cfg.alpha, beta=cfg.beta, window=cfg.window)
        return ConformalState.from_dict(rec), True
    if cfg.calibrator == "split-cp":
        q = split_cp_quantile(validation_scores(val, predictor, surrogate), cfg.alpha)
        return ConformalState(cfg.alpha, cfg.beta, q, cfg.window), False
    return ConformalState(cfg.alpha, cfg.beta, 1.0, cfg.window), False


def stream(cfg: RunConfig, test: Dataset, val: Dataset | None, predictor, surrogate,
           warmed: ConformalState | None = None) -> tuple[list[StreamRecord], ConformalState]:
    state, adapt = stream_state(cfg, val, predictor, surrogate, warmed)
    records = run_stream(state, test, predictor, surrogate, adapt=adapt)
    return records, state


def coverage_of(records, start: int = 0) -> float:
    errs = [r.error for r in records[start:]]
    return 1.0 - float(np.mean(errs)) if errs else math.nan


@dataclass
class ValidationSummary:
    min_ade_1: float
    nll: float
    mean_sigma: float
    rmse: float

    def to_text(self) -> str:
        return (f"val_minADE_1 = {self.min_ade_1!r}\nval_NLL = {self.nll!r}\n"
                f"val_mean_sigma = {self.mean_sigma!r}\nval_rmse = {self.rmse!r}\n")


def validation_summary(val: Dataset, predictor, surrogate: GprSurrogate) -> ValidationSummary:
    """Mode-0 accuracy and NLL (uncalibrated surrogate sigma) on ``val``."""
    ades, nlls, sigmas, sq = [], [], [], []
    for s in val:
        pred = predictor.predict(s.observed).mean
        sigma = float(surrogate.sigma(s.observed))
        ades.append(min_ade(pred, s.future, 1))
        nlls.append(gaussian_nll(s.future, pred, sigma))
        sigmas.append(sigma)
        sq.append(np.mean((pred - s.future) ** 2))
    return ValidationSummary(float(np.mean(ades)), float(np.mean(nlls)), float(np.mean(sigmas)),
                             float(np.sqrt(np.mean(sq))))

