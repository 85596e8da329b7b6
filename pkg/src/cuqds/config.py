"""Run configuration: a flat ``key = value`` file plus command-line overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from .data import DEFAULT_REGIMES, Regime, ScenarioConfig
from .errors import ConfigError

PREDICTORS = ("linear", "constant-velocity")
CALIBRATORS = ("p-control", "split-cp", "none")
INITS = ("least-squares", "constant-velocity", "zeros")


def parse_regimes(text: str) -> tuple[Regime, ...]:
    """``"lo:hi:turn_lo:turn_hi:noise; ..."`` -> regimes."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        parts = chunk.split(":")
        if len(parts) != 5:
            raise ConfigError(f"regime {chunk!r} needs 5 ':'-separated numbers")
        try:
            s0, s1, t0, t1, noise = (float(p) for p in parts)
        except ValueError:
            raise ConfigError(f"regime {chunk!r} is not numeric") from None
        out.append(Regime((s0, s1), (t0, t1), noise))
    return tuple(out)


def format_regimes(regimes) -> str:
    return "; ".join(
        f"{r.speed[0]!r}:{r.speed[1]!r}:{r.turn_rate[0]!r}:{r.turn_rate[1]!r}:{r.noise_std!r}"
        for r in regimes
    )


def parse_shift(text: str) -> tuple[tuple[float, int], ...]:
    """``"0.0:0, 0.5:1"`` -> ((0.0, 0), (0.5, 1))."""
    out = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            frac, idx = chunk.split(":")
            out.append((float(frac), int(idx)))
        except ValueError:
            raise ConfigError(f"shift entry {chunk!r} must look like 'fraction:regime'") from None
    return tuple(out)


def format_shift(shift) -> str:
    return ", ".join(f"{f!r}:{i}" for f, i in shift)


@dataclass
class RunConfig:
    # paths; empty data_dir/model mean "use out"
    out: str = "runs/default"
    data: str = ""
    model: str = ""
    # scenario
    n_train: int = 2000
    n_val: int = 500
    n_test: int = 4000
    L: int = 20
    J: int = 30
    D: int = 2
    regimes: tuple = DEFAULT_REGIMES
    shift: tuple = ((0.0, 0), (0.5, 1))
    # model and training
    predictor: str = "linear"
    init: str = "least-squares"
    m_inducing: int = 16
    w1: float = 1.0
    w2: float = 0.1
    epochs: int = 200
    lr: float = 0.02
    lr_omega: float = 5.0
    l1_init: float = 1.0
    l2_init: float = 0.0  # 0 -> sqrt(L * D)
    noise_init: float = 0.1
    # calibration
    alpha: float = 0.1
    beta: float = 0.05
    window: int = 0
    warmup_epochs: int = 1
    calibrator: str = "p-control"
    miss_threshold: float = 2.0
    seed: int = 0

    @property
    def out_dir(self) -> Path:
        return Path(self.out)

    @property
    def data_dir(self) -> Path:
        return Path(self.data or self.out)

    @property
    def model_path(self) -> Path:
        return Path(self.model) if self.model else self.out_dir / "model.json"

    def scenario(self) -> ScenarioConfig:
        return ScenarioConfig(self.n_train, self.n_val, self.n_test, self.L, self.J, self.D,
                              tuple(self.regimes), tuple(self.shift), self.seed)

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.beta > 0.0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.window < 0 or self.m_inducing < 1 or self.epochs < 0:
            raise ConfigError("window and epochs must be >= 0 and m_inducing >= 1")
        if self.predictor not in PREDICTORS:
            raise ConfigError(f"predictor must be one of {PREDICTORS}")
        if self.calibrator not in CALIBRATORS:
            raise ConfigError(f"calibrator must be one of {CALIBRATORS}")
        if self.init not in INITS:
            raise ConfigError(f"init must be one of {INITS}")
        if not self.out:
            raise ConfigError("an output directory is required")
        self.scenario().validate()

    def set(self, key: str, value: str) -> None:
        """Assign ``key`` from its text form, coercing to the field's type."""
        key = key.strip().replace("-", "_")
        fields = {f.name: f for f in dataclasses.fields(self)}
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        value = value.strip()
        if key == "regimes":
            setattr(self, key, parse_regimes(value))
        elif key == "shift":
            setattr(self, key, parse_shift(value))
        else:
            kind = type(getattr(RunConfig, key))
            try:
                setattr(self, key, kind(value))
            except ValueError:
                raise ConfigError(f"{key} = {value!r} is not a valid {kind.__name__}") from None

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "regimes":
                v = format_regimes(v)
            elif f.name == "shift":
                v = format_shift(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def read_config(path, cfg: RunConfig | None = None) -> RunConfig:
    """Apply a ``key = value`` file on top of ``cfg`` (defaults if None).

    Blank lines and ``#`` comments are ignored.
    """
    cfg = cfg or RunConfig()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        try:
            cfg.set(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return cfg
