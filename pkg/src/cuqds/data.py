"""Trajectory samples, synthetic scenarios with regime shift, splits and I/O.

A trajectory is a float array of shape ``(T, D)``: ``T`` time steps of
``D``-dimensional positions in meters.  Observed histories have ``T = L`` and
futures ``T = J``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, SchemaError, StreamOrderError
from .rng import stream_rng

ROLES = ("train", "validation", "test")
STD_FLOOR = 1e-9


def as_trajectory(points, length: int | None = None, name: str = "trajectory") -> np.ndarray:
    """Validate ``points`` as a read-only ``(T, D)`` float array."""
    arr = np.array(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise SchemaError(f"{name} must have shape (T, D), got {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise SchemaError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise SchemaError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Sample:
    """One input/output pair ``(x^t, y^t)`` observed at step ``timestamp``."""

    id: str
    observed: np.ndarray
    future: np.ndarray
    timestamp: int

    def __post_init__(self):
        obs = as_trajectory(self.observed, name="observed")
        fut = as_trajectory(self.future, name="future")
        if obs.shape[1] != fut.shape[1]:
            raise SchemaError(
                f"sample {self.id}: observed D={obs.shape[1]} but future D={fut.shape[1]}"
            )
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "future", fut)
        object.__setattr__(self, "timestamp", int(self.timestamp))

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return (
            self.id == other.id
            and self.timestamp == other.timestamp
            and np.array_equal(self.observed, other.observed)
            and np.array_equal(self.future, other.future)
        )


@dataclass(frozen=True)
class Dataset:
    """An ordered collection of samples sharing ``(L, J, D)``.

    Test datasets are streams and must be strictly increasing in timestamp.
    """

    samples: tuple[Sample, ...]
    role: str = "train"

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        if self.role not in ROLES:
            raise ConfigError(f"unknown dataset role {self.role!r}")
        if self.samples:
            ref = self.samples[0]
            shape = (ref.observed.shape, ref.future.shape)
            for s in self.samples[1:]:
                if (s.observed.shape, s.future.shape) != shape:
                    raise SchemaError(
                        f"sample {s.id} has shapes {(s.observed.shape, s.future.shape)}, "
                        f"expected {shape}"
                    )
        if self.role == "test":
            check_stream_order(self.samples)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(L, J, D)`` of the samples."""
        if not self.samples:
            raise DataError("empty dataset has no dimensions")
        s = self.samples[0]
        return s.observed.shape[0], s.future.shape[0], s.observed.shape[1]

    def observed_array(self) -> np.ndarray:
        return np.stack([s.observed for s in self.samples])

    def future_array(self) -> np.ndarray:
        return np.stack([s.future for s in self.samples])

    def with_role(self, role: str) -> "Dataset":
        return Dataset(self.samples, role)


def check_stream_order(samples: Sequence[Sample]) -> None:
    for prev, cur in zip(samples, samples[1:]):
        if cur.timestamp <= prev.timestamp:
            raise StreamOrderError(
                f"timestamp {cur.timestamp} of sample {cur.id} does not follow {prev.timestamp}"
            )


# --------------------------------------------------------------------------
# Synthetic scenarios
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Regime:
    """Kinematic regime: constant speed and turn rate per rollout, plus noise.

    Speeds are in m/step, turn rates in rad/step, noise std in meters.
    """

    speed: tuple[float, float] = (0.5, 2.0)
    turn_rate: tuple[float, float] = (-0.03, 0.03)
    noise_std: float = 0.15


DEFAULT_REGIMES = (
    Regime(),
    Regime(speed=(1.0, 2.5), turn_rate=(-0.06, 0.06), noise_std=0.3),
)


@dataclass(frozen=True)
class ScenarioConfig:
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 4000
    L: int = 20
    J: int = 30
    D: int = 2
    regimes: tuple[Regime, ...] = DEFAULT_REGIMES
    shift: tuple[tuple[float, int], ...] = ((0.0, 0), (0.5, 1))
    seed: int = 0
    arena: float = 100.0

    def validate(self) -> None:
        if not self.regimes:
            raise ConfigError("at least one motion regime is required")
        if self.L < 1 or self.J < 1 or self.D < 1:
            raise ConfigError(f"L, J, D must be >= 1 (got {self.L}, {self.J}, {self.D})")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ConfigError("sample counts must be nonnegative")
        for r in self.regimes:
            if r.speed[0] > r.speed[1] or r.turn_rate[0] > r.turn_rate[1]:
                raise ConfigError(f"regime ranges must be (low, high): {r}")
            if r.speed[0] < 0 or r.noise_std < 0:
                raise ConfigError(f"regime speed and noise must be nonnegative: {r}")
        fracs = [f for f, _ in self.shift]
        if not fracs:
            raise ConfigError("shift schedule must not be empty")
        if any(not 0.0 <= f < 1.0 for f in fracs):
            raise ConfigError(f"shift fractions must lie in [0, 1): {fracs}")
        if any(b <= a for a, b in zip(fracs, fracs[1:])):
            raise ConfigError(f"shift fractions must be strictly increasing: {fracs}")
        for _, idx in self.shift:
            if not 0 <= idx < len(self.regimes):
                raise ConfigError(f"shift schedule refers to unknown regime {idx}")


def rollout(start, heading: float, speed: float, turn_rate: float, n: int) -> np.ndarray:
    """Noise-free constant-speed, constant-turn-rate path of ``n`` points.

    Step ``k`` moves by ``speed`` along heading ``heading + k * turn_rate``.
    Motion lives in the first two coordinates; for ``D == 1`` the point moves
    along the sign of ``cos(heading)`` and the turn rate is ignored.  Extra
    coordinates beyond the second stay at their start value.
    """
    start = np.asarray(start, dtype=float)
    D = start.shape[0]
    k = np.arange(n - 1)
    steps = np.zeros((n - 1, D))
    if D == 1:
        steps[:, 0] = speed * (1.0 if math.cos(heading) >= 0 else -1.0)
    else:
        angles = heading + k * turn_rate
        steps[:, 0] = speed * np.cos(angles)
        steps[:, 1] = speed * np.sin(angles)
    path = np.empty((n, D))
    path[0] = start
    path[1:] = start + np.cumsum(steps, axis=0)
    return path


def _draw_sample(rng: np.random.Generator, cfg: ScenarioConfig, regime: Regime,
                 sid: str, t: int) -> Sample:
    start = rng.uniform(-cfg.arena, cfg.arena, size=cfg.D)
    heading = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(*regime.speed)
    turn = rng.uniform(*regime.turn_rate)
    n = cfg.L + cfg.J
    path = rollout(start, heading, speed, turn, n)
    noise = rng.normal(0.0, 1.0, size=path.shape) * regime.noise_std
    path = path + noise
    return Sample(sid, path[: cfg.L], path[cfg.L:], t)


def regime_at(schedule: Sequence[tuple[float, int]], frac: float) -> int:
    """Regime index active at stream position ``frac`` in [0, 1)."""
    active = 0
    for start, idx in schedule:
        if start <= frac:
            active = idx
    return active


def generate_scenario(cfg: ScenarioConfig) -> tuple[Dataset, Dataset, Dataset]:
    """Draw (train, validation, test) datasets.

    Train and validation come from regime 0; test follows ``cfg.shift``.
    Timestamps are contiguous and disjoint across the three splits.
    """
    cfg.validate()
    base = cfg.regimes[0]
    rng = stream_rng(cfg.seed, "data/train")
    train = [_draw_sample(rng, cfg, base, f"train-{i:06d}", i) for i in range(cfg.n_train)]
    offset = cfg.n_train
    rng = stream_rng(cfg.seed, "data/validation")
    val = [_draw_sample(rng, cfg, base, f"val-{i:06d}", offset + i) for i in range(cfg.n_val)]
    offset += cfg.n_val
    rng = stream_rng(cfg.seed, "data/test")
    test = []
    for i in range(cfg.n_test):
        regime = cfg.regimes[regime_at(cfg.shift, i / cfg.n_test)]
        test.append(_draw_sample(rng, cfg, regime, f"test-{i:06d}", offset + i))
    return Dataset(train, "train"), Dataset(val, "validation"), Dataset(test, "test")


def split_dataset(ds: Dataset, ratios: tuple[float, float]) -> tuple[Dataset, Dataset]:
    """Contiguous split into ``(train, validation)`` with ``floor(N * r1)`` in train."""
    r1, r2 = ratios
    if not r1 > 0 or abs(r1 + r2 - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must satisfy 0 < r1 and r1 + r2 = 1, got {ratios}")
    if len(ds) == 0:
        raise DataError("cannot split an empty dataset")
    n1 = math.floor(len(ds) * r1)
    return Dataset(ds.samples[:n1], "train"), Dataset(ds.samples[n1:], "validation")


# --------------------------------------------------------------------------
# Standardization
# --------------------------------------------------------------------------


def standardization_stats(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension time mean and population std (floored to 1 when ~0)."""
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=-2)
    std = x.std(axis=-2)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return mean, std


def standardize_trajectory(x: np.ndarray) -> np.ndarray:
    """Standardize each dimension of ``x`` by its own mean and std over time.

    Works on a single ``(L, D)`` trajectory or a stack ``(N, L, D)``.
    Constant dimensions map to zeros.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-2] < 2:
        raise DataError("standardization needs at least two time steps")
    mean, std = standardization_stats(x)
    return (x - mean[..., None, :]) / std[..., None, :]


# --------------------------------------------------------------------------
# Line-delimited sample records
# --------------------------------------------------------------------------

_FIELDS = ("id", "t", "obs", "fut")


def sample_to_record(s: Sample) -> dict:
    return {"id": s.id, "t": s.timestamp, "obs": s.observed.tolist(), "fut": s.future.tolist()}


def write_samples(ds: Iterable[Sample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds:
            fh.write(json.dumps(sample_to_record(s)))
            fh.write("\n")


def read_samples(path, role: str = "test") -> Dataset:
    """Read a line-delimited sample file; blank lines are skipped."""
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", lineno) from None
            if not isinstance(rec, dict):
                raise ParseError("record is not an object", lineno)
            for key in _FIELDS:
                if key not in rec:
                    raise ParseError(f"missing field {key!r}", lineno)
            if not isinstance(rec["t"], int):
                raise ParseError("field 't' must be an integer", lineno)
            try:
                samples.append(Sample(str(rec["id"]), rec["obs"], rec["fut"], rec["t"]))
            except (SchemaError, ValueError, TypeError) as exc:
                raise SchemaError(f"line {lineno}: {exc}") from None
    try:
        return Dataset(samples, role)
    except SchemaError as exc:
        raise SchemaError(f"{Path(path).name}: {exc}") from None
