"""Run configuration and its canonical JSON file form."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .denoiser import Dims
from .errors import InvalidConfigError
from .schedule import NoiseSchedule, make_schedule
from .training import TrainConfig


@dataclass
class DataConfig:
    H: int = 8
    W: int = 8
    K: int = 3
    context_dim: int = 0
    corpus_size: int = 256
    corpus_seed: int = 0
    corpus_path: str | None = None


@dataclass
class ScheduleConfig:
    family: str = "linear"
    T: int = 200
    beta_min: float = 1e-4
    beta_max: float = 0.05
    s: float = 0.008
    variance: str = "posterior"


@dataclass
class ModelConfig:
    hidden: int = 256
    layers: int = 3
    time_dim: int = 32


@dataclass
class EvalConfig:
    t_star_fraction: float = 0.4
    eval_size: int = 32
    eval_seed: int = 1
    seed: int = 0
    sample_n: int = 16


@dataclass
class SweepConfig:
    factors: list[float] = field(default_factory=lambda: [0.25, 0.5, 1.0, 2.0, 4.0])


@dataclass
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def make_schedule(self) -> NoiseSchedule:
        s = self.schedule
        return make_schedule(s.family, s.T, s.beta_min, s.beta_max, s.s)

    def dims(self) -> Dims:
        d, m = self.data, self.model
        return Dims(d.K, d.H, d.W, self.schedule.T, m.hidden, m.layers, m.time_dim, d.context_dim)

    def t_star(self, T: int | None = None) -> int:
        T = self.schedule.T if T is None else T
        return max(1, min(T, round(self.eval.t_star_fraction * T)))

    def validate(self) -> "RunConfig":
        self.make_schedule()
        self.dims()
        if self.schedule.variance not in ("posterior", "beta"):
            raise InvalidConfigError(f"unknown variance {self.schedule.variance!r}")
        if not 0 < self.eval.t_star_fraction <= 1:
            raise InvalidConfigError("t_star_fraction must be in (0, 1]")
        if self.eval.eval_size < 1 or self.data.corpus_size < 1:
            raise InvalidConfigError("corpus and eval sizes must be >= 1")
        t = self.training
        if t.steps < 0 or t.batch_size < 1 or t.lam < 0 or t.temperature <= 0 or t.lr <= 0:
            raise InvalidConfigError("invalid training settings")
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        if not isinstance(raw, dict):
            raise InvalidConfigError("config root must be an object")
        sections = {}
        for f in dataclasses.fields(cls):
            section_cls = type(f.default_factory())
            values = raw.get(f.name, {})
            if not isinstance(values, dict):
                raise InvalidConfigError(f"section {f.name!r} must be an object")
            known = {sf.name for sf in dataclasses.fields(section_cls)}
            unknown = set(values) - known
            if unknown:
                raise InvalidConfigError(f"unknown keys in {f.name!r}: {sorted(unknown)}")
            sections[f.name] = section_cls(**values)
        unknown = set(raw) - set(sections)
        if unknown:
            raise InvalidConfigError(f"unknown config sections: {sorted(unknown)}")
        return cls(**sections).validate()


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def loads(text: str) -> RunConfig:
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidConfigError(f"config is not valid JSON: {exc}") from None
    try:
        return RunConfig.from_dict(raw)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from None


def load(path) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text)


def save(cfg: RunConfig, path) -> None:
    Path(path).write_text(dumps(cfg), encoding="utf-8")
