"""Online conformal calibration of the surrogate std (proportional control).

The calibrated interval at step ``t`` is ``yhat +/- q * sigma`` with ``q`` the
quantile carried over from step ``t - 1``.  After the truth arrives the
normalized score ``s`` and miss indicator ``e`` are appended and ``q`` moves
by ``beta * max(S) * (mean(E) - alpha)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .data import Dataset, check_stream_order
from .errors import ConfigError, DataError, NumericError

SIGMA_FLOOR = 1e-6
DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 0.05


def conformal_score(y: np.ndarray, yhat: np.ndarray, sigma: float) -> float:
    """Mean absolute residual over all coordinates divided by ``sigma``."""
    if not sigma >= SIGMA_FLOOR:
        raise NumericError(f"sigma {sigma!r} is below the floor {SIGMA_FLOOR}")
    return float(np.mean(np.abs(np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float))) / sigma)


def coverage_error(score: float, q: float) -> int:
    """1 if the truth falls outside the interval (``score > q``), else 0."""
    return int(score > q)


@dataclass(frozen=True, eq=False)
class Interval:
    """Band ``center +/- q * sigma``; membership is decided through the score."""

    lower: np.ndarray
    upper: np.ndarray
    center: np.ndarray
    sigma: float
    q: float

    @property
    def half_width(self) -> float:
        return self.q * self.sigma

    def contains(self, y: np.ndarray) -> bool:
        return coverage_error(conformal_score(y, self.center, self.sigma), self.q) == 0


def make_interval(yhat: np.ndarray, sigma: float, q: float) -> Interval:
    if not sigma > 0 or not q >= 0:
        raise ConfigError(f"interval needs sigma > 0 and q >= 0 (got {sigma}, {q})")
    yhat = np.asarray(yhat, dtype=float)
    hw = q * sigma
    return Interval(yhat - hw, yhat + hw, yhat, float(sigma), float(q))


class ConformalState:
    """Quantile, score set and error set of the P-control calibrator.

    ``window=0`` keeps every score and error (the sets grow without bound);
    a positive window keeps only the most recent ``window`` entries for both
    ``max(S)`` and ``mean(E)``.
    """

    def __init__(self, alpha: float = DEFAULT_ALPHA, beta: float = DEFAULT_BETA,
                 q: float = 1.0, window: int = 0):
        if not 0.0 < alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
        if not beta > 0.0:
            raise ConfigError(f"beta must be positive, got {beta}")
        if window < 0:
            raise ConfigError(f"window must be >= 0, got {window}")
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.q = max(0.0, float(q))
        self.window = int(window)
        self.t = 0
        self.reset_sets()

    def reset_sets(self) -> None:
        maxlen = self.window or None
        self.scores: deque[float] = deque(maxlen=maxlen)
        self.errors: deque[int] = deque(maxlen=maxlen)
        self._err_sum = 0
        self._max = -math.inf

    @property
    def max_score(self) -> float:
        if not self.scores:
            raise DataError("score set is empty")
        return self._max

    @property
    def error_mean(self) -> float:
        return self._err_sum / len(self.errors)

    def record(self, score: float, error: int) -> None:
        """Append ``(score, error)`` to the sets without moving ``q``."""
        score = float(score)
        error = int(error)
        evicted_score = None
        if self.window and len(self.scores) == self.window:
            evicted_score = self.scores[0]
            self._err_sum -= self.errors[0]
        self.scores.append(score)
        self.errors.append(error)
        self._err_sum += error
        if evicted_score is not None and evicted_score >= self._max:
            self._max = max(self.scores)
        else:
            self._max = max(self._max, score)
        self.t += 1

    def update(self, score: float, error: int) -> float:
        """Append ``(score, error)`` then apply one control step; returns new ``q``."""
        self.record(score, error)
        eta = self.beta * self._max
        self.q = max(0.0, self.q + eta * (self.error_mean - self.alpha))
        return self.q

    def copy(self) -> "ConformalState":
        return ConformalState.from_dict(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "beta": self.beta,
            "q": self.q,
            "window": self.window,
            "t": self.t,
            "scores": list(self.scores),
            "errors": list(self.errors),
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "ConformalState":
        try:
            state = cls(rec["alpha"], rec["beta"], rec["q"], rec.get("window", 0))
            scores, errors = rec["scores"], rec["errors"]
        except KeyError as exc:
            raise DataError(f"calibrator state is missing {exc}") from None
        if len(scores) != len(errors):
            raise DataError("calibrator state has |S| != |E|")
        state.scores.extend(float(s) for s in scores)
        state.errors.extend(int(e) for e in errors)
        state._err_sum = sum(state.errors)
        state._max = max(state.scores) if state.scores else -math.inf
        state.t = int(rec.get("t", len(scores)))
        return state

    def __repr__(self):
        return (f"ConformalState(q={self.q:.6g}, alpha={self.alpha}, beta={self.beta}, "
                f"window={self.window}, n={len(self.scores)}, t={self.t})")


def update_quantile(state: ConformalState, score: float, error: int) -> ConformalState:
    """Apply one control step in place and return ``state``."""
    state.update(score, error)
    return state


@dataclass(frozen=True, eq=False)
class StreamRecord:
    """Audit entry for one calibrated prediction."""

    id: str
    t: int
    modes: np.ndarray
    probs: np.ndarray
    truth: np.ndarray
    sigma: float
    q: float
    lower: np.ndarray
    upper: np.ndarray
    score: float
    error: int
    coverage: float

    @property
    def prediction(self) -> np.ndarray:
        return self.modes[0]

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "t": self.t,
            "modes": self.modes.tolist(),
            "probs": self.probs.tolist(),
            "truth": self.truth.tolist(),
            "sigma": self.sigma,
            "q": self.q,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "score": self.score,
            "error": self.error,
            "coverage": self.coverage,
        }

    @classmethod
    def from_dict(cls, rec: dict) -> "StreamRecord":
        arr = lambda v: np.asarray(v, dtype=float)  # noqa: E731
        return cls(str(rec["id"]), int(rec["t"]), arr(rec["modes"]), arr(rec["probs"]),
                   arr(rec["truth"]), float(rec["sigma"]), float(rec["q"]), arr(rec["lower"]),
                   arr(rec["upper"]), float(rec["score"]), int(rec["error"]),
                   float(rec["coverage"]))


def _calibrate(state: ConformalState, data: Iterable, predictor, surrogate,
               adapt: bool) -> Iterator[StreamRecord]:
    misses = 0
    for n, sample in enumerate(data, start=1):
        out = predictor.predict(sample.observed)
        sigma = float(surrogate.sigma(sample.observed))
        q_prev = state.q
        interval = make_interval(out.mean, sigma, q_prev)
        s = conformal_score(sample.future, out.mean, sigma)
        e = coverage_error(s, q_prev)
        if adapt:
            state.update(s, e)
        else:
            state.record(s, e)
        misses += e
        yield StreamRecord(sample.id, sample.timestamp, out.modes, out.probs, sample.future,
                           sigma, q_prev, interval.lower, interval.upper, s, e,
                           1.0 - misses / n)


def warmup_validation(state: ConformalState, val: Dataset, predictor, surrogate,
                      epochs: int = 1) -> ConformalState:
    """Initialize ``q``, ``S`` and ``E`` by streaming the validation set in time order.

    ``S`` and ``E`` are cleared at the start of every pass while ``q`` carries
    over; the state after the last pass is returned (mutated in place).
    """
    if len(val) == 0:
        raise DataError("validation set is empty")
    samples = sorted(val.samples, key=lambda s: s.timestamp)
    for _ in range(max(1, epochs)):
        state.reset_sets()
        for _rec in _calibrate(state, samples, predictor, surrogate, adapt=True):
            pass
    return state


def run_stream(state: ConformalState, test: Dataset, predictor, surrogate,
               adapt: bool = True) -> list[StreamRecord]:
    """Calibrate every test sample in order; ``state`` is updated in place.

    With ``adapt=False`` the quantile stays fixed (split-CP or no calibration)
    while scores and errors are still logged.
    """
    check_stream_order(test.samples)
    return list(_calibrate(state, test.samples, predictor, surrogate, adapt))


def validation_scores(val: Dataset, predictor, surrogate) -> np.ndarray:
    out = []
    for sample in val:
        pred = predictor.predict(sample.observed).mean
        out.append(conformal_score(sample.future, pred, float(surrogate.sigma(sample.observed))))
    return np.asarray(out)


def split_cp_quantile(scores, alpha: float) -> float:
    """The ``ceil((n + 1)(1 - alpha))``-th smallest score, or ``inf`` if that exceeds ``n``."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")
    scores = np.sort(np.asarray(scores, dtype=float))
    n = len(scores)
    if n == 0:
        raise DataError("split conformal needs at least one score")
    # guard against (n+1)(1-alpha) landing a hair above an integer
    k = math.ceil((n + 1) * (1.0 - alpha) - 1e-9)
    if k > n:
        return math.inf
    return float(scores[k - 1])
