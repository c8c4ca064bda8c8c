"""Strict TOML configuration for the command-line runs.

Unknown keys are errors.  The resolved configuration (defaults filled in) is
echoed into every report, and its hash stamps every output file.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .kernels import ERLANG, EXPONENTIAL, H_INFINITY, H_LAMBDA, Kernel, ScalingRegime
from .simulate import DEFAULT_MAX_EVENTS


class ConfigError(ValueError):
    pass


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class RunSection(_Section):
    seed: int = Field(20241015, ge=0, lt=2**64)
    max_events: int = Field(DEFAULT_MAX_EVENTS, gt=0)
    export_csv: bool = True


class KernelSection(_Section):
    family: Literal["exponential", "erlang"] = EXPONENTIAL
    rate: float = Field(1.0, gt=0)
    shape: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _shape(self):
        if self.family == EXPONENTIAL and self.shape != 1:
            raise ValueError("exponential kernel requires shape = 1")
        return self

    def build(self) -> Kernel:
        if self.family == ERLANG:
            return Kernel.erlang(self.shape, self.rate)
        return Kernel.exponential(self.rate)


class RegimeSection(_Section):
    tag: Literal["h_lambda", "h_infinity"] = H_LAMBDA
    value: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _range(self):
        if self.tag == H_INFINITY and not self.value < 1:
            raise ValueError("h_infinity needs value (alpha) in (0, 1)")
        return self

    def build(self) -> ScalingRegime:
        return ScalingRegime(self.tag, self.value)


class RenewalSection(_Section):
    a: Optional[float] = None
    T: Optional[float] = Field(None, gt=0)
    mu: float = Field(1.0, gt=0)
    step: Optional[float] = Field(None, gt=0)
    horizon: Optional[float] = Field(None, gt=0)
    every: int = Field(1, ge=1)

    @field_validator("a")
    @classmethod
    def _a(cls, v):
        if v is not None and not v > 0:
            raise ValueError("a must be positive")
        return v


class SimulateSection(_Section):
    mu: float = Field(1.0, gt=0)
    a: float = 1.2
    horizon: float = Field(5.0, gt=0)
    paths: int = Field(100, ge=1)
    algorithm: Literal["thinning", "cluster", "both"] = "thinning"
    export_paths: int = Field(1, ge=0)
    diagnostics_step: float = Field(0.05, gt=0)
    renewal_step: Optional[float] = Field(None, gt=0)

    @field_validator("a")
    @classmethod
    def _a(cls, v):
        if not (v == 0 or v > 1):
            raise ValueError("a must be 0 (Poisson mode) or exceed 1")
        return v


class CIRSection(_Section):
    mu: float = Field(1.0, gt=0)
    lam: Optional[float] = Field(None, gt=0)
    m: Optional[float] = Field(None, gt=0)
    step: float = Field(1.0 / 512, gt=0)
    t_end: float = Field(1.0, gt=0)
    paths: int = Field(1000, ge=1)
    scheme: Literal["euler", "exact", "both"] = "euler"
    diffusion: bool = True
    export_paths: int = Field(1, ge=0)
    checkpoints: list[float] = [0.25, 0.5, 1.0]


class ExperimentSection(_Section):
    mu: float = Field(1.0, gt=0)
    horizons: list[float] = [100.0, 400.0, 800.0]
    replications: int = Field(500, ge=2)
    checkpoints: list[float] = [round(0.1 * j, 12) for j in range(1, 11)]
    renewal_step: Optional[float] = Field(None, gt=0)
    cir_step: float = Field(1.0 / 256, gt=0)
    reference_size: Optional[int] = Field(None, ge=2)
    algorithm: Literal["thinning", "cluster"] = "thinning"
    poisson_oracle: bool = False

    @field_validator("checkpoints")
    @classmethod
    def _round(cls, v):
        return [round(float(x), 12) for x in v]


class ThresholdSection(_Section):
    ks_alpha: float = Field(0.01, gt=0, lt=1)
    se_flag: float = Field(2.0, gt=0)
    mean_se: float = Field(4.0, gt=0)
    cir_mean_se: float = Field(3.0, gt=0)
    chi2_alpha: float = Field(0.01, gt=0, lt=1)
    clt_mean_tol: float = Field(0.1, gt=0)
    clt_var_tol: float = Field(0.25, gt=0)
    min_checkpoints: int = Field(10, ge=1)


class VerifySection(_Section):
    criteria: list[int] = list(range(1, 14))
    repro_criteria: list[int] = [1, 2, 3, 4, 5, 6, 7, 8, 11, 12]

    @field_validator("criteria", "repro_criteria")
    @classmethod
    def _ids(cls, v):
        bad = [c for c in v if not 1 <= c <= 13]
        if bad:
            raise ValueError(f"unknown criterion ids {bad}")
        return v


class Config(_Section):
    run: RunSection = RunSection()
    kernel: KernelSection = KernelSection()
    regime: RegimeSection = RegimeSection()
    renewal: RenewalSection = RenewalSection()
    simulate: SimulateSection = SimulateSection()
    cir: CIRSection = CIRSection()
    experiment: ExperimentSection = ExperimentSection()
    thresholds: ThresholdSection = ThresholdSection()
    verify: VerifySection = VerifySection()

    def with_seed(self, seed: int | None) -> "Config":
        if seed is None:
            return self
        return self.model_copy(update={"run": self.run.model_copy(update={"seed": seed})})

    def canonical(self) -> dict:
        return self.model_dump(mode="json")

    def digest(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _describe(err: ValidationError) -> str:
    lines = []
    for e in err.errors():
        key = ".".join(str(p) for p in e["loc"])
        lines.append(f"{key}: {e['msg']}")
    return "; ".join(lines)


def parse_config(text: str) -> Config:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    try:
        return Config.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_describe(exc)) from None


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def to_toml(cfg: Config) -> str:
    """Render a resolved config back to TOML (``None`` entries are omitted)."""
    out = []
    for section, values in cfg.canonical().items():
        out.append(f"[{section}]")
        for key, val in values.items():
            if val is None:
                continue
            out.append(f"{key} = {_toml_value(val)}")
        out.append("")
    return "\n".join(out)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, list):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise TypeError(type(v))
