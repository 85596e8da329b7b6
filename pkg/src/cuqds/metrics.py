"""Motion-forecasting accuracy and uncertainty metrics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

MISS_THRESHOLD = 2.0


def _top_k(modes: np.ndarray, k: int) -> np.ndarray:
    modes = np.asarray(modes, dtype=float)
    if modes.ndim == 2:
        modes = modes[None]
    if not 1 <= k <= modes.shape[0]:
        raise ConfigError(f"k={k} is outside [1, K={modes.shape[0]}]")
    return modes[:k]


def min_ade(modes: np.ndarray, y: np.ndarray, k: int = 1) -> float:
    """Best mean Euclidean displacement over the ``k`` most probable modes."""
    disp = np.linalg.norm(_top_k(modes, k) - np.asarray(y, dtype=float), axis=-1)
    return float(disp.mean(axis=1).min())


def min_fde(modes: np.ndarray, y: np.ndarray, k: int = 1) -> float:
    """Best final-step Euclidean displacement over the top ``k`` modes."""
    final = _top_k(modes, k)[:, -1] - np.asarray(y, dtype=float)[-1]
    return float(np.linalg.norm(final, axis=-1).min())


def miss_rate(samples: Iterable[tuple[np.ndarray, np.ndarray]], k: int = 1,
              threshold: float = MISS_THRESHOLD) -> float:
    """Fraction of ``(modes, y)`` pairs whose ``min_fde`` exceeds ``threshold``."""
    misses = [min_fde(m, y, k) > threshold for m, y in samples]
    if not misses:
        raise DataError("miss rate of an empty sample set is undefined")
    return float(np.mean(misses))


def gaussian_nll(y: np.ndarray, yhat: np.ndarray, sigma: float) -> float:
    """Per-coordinate Gaussian NLL with one scalar ``sigma`` for the whole trajectory."""
    z = (np.asarray(y, dtype=float) - np.asarray(yhat, dtype=float)) / sigma
    return float(np.mean(0.5 * z**2) + 0.5 * math.log(2.0 * math.pi * sigma**2))


def coverage_rate(records: Sequence) -> float:
    """``1 - mean(error)`` over stream records."""
    if len(records) == 0:
        raise DataError("coverage rate of an empty stream is undefined")
    return 1.0 - float(np.mean([r.error for r in records]))


@dataclass
class MetricReport:
    count: int
    min_ade: dict[int, float] = field(default_factory=dict)
    min_fde: dict[int, float] = field(default_factory=dict)
    miss_rate: dict[int, float] = field(default_factory=dict)
    nll: float = math.nan
    coverage: float = math.nan
    miss_threshold: float = MISS_THRESHOLD

    def as_flat(self) -> dict:
        out = {"count": self.count}
        for k in sorted(self.min_ade):
            out[f"minADE_{k}"] = self.min_ade[k]
            out[f"minFDE_{k}"] = self.min_fde[k]
            out[f"MR_{k}"] = self.miss_rate[k]
        out["NLL"] = self.nll
        out["CR"] = self.coverage
        out["miss_threshold"] = self.miss_threshold
        return out

    def to_text(self) -> str:
        return "".join(f"{k} = {v!r}\n" for k, v in self.as_flat().items())

    def to_json_line(self) -> str:
        return json.dumps(self.as_flat()) + "\n"


def evaluate_records(records: Sequence, ks: Sequence[int] = (1,),
                     threshold: float = MISS_THRESHOLD) -> MetricReport:
    """Aggregate a stream log into a :class:`MetricReport`.

    ``k`` values larger than the number of logged modes are skipped.  The NLL
    uses the surrogate's uncalibrated sigma around mode 0.
    """
    if len(records) == 0:
        raise DataError("cannot evaluate an empty stream log")
    n_modes = min(len(r.modes) for r in records)
    report = MetricReport(count=len(records), miss_threshold=threshold)
    for k in ks:
        if k > n_modes:
            continue
        report.min_ade[k] = float(np.mean([min_ade(r.modes, r.truth, k) for r in records]))
        report.min_fde[k] = float(np.mean([min_fde(r.modes, r.truth, k) for r in records]))
        report.miss_rate[k] = miss_rate(((r.modes, r.truth) for r in records), k, threshold)
    report.nll = float(np.mean([gaussian_nll(r.truth, r.modes[0], r.sigma) for r in records]))
    report.coverage = coverage_rate(records)
    return report
