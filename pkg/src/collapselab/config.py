"""
Scenario configuration: a JSON document validated against a strict schema.

Unknown keys, type mismatches and constraint violations are reported with
the dotted key path of the offending entry (e.g. ``grw.sigma``).
"""
from __future__ import annotations

import difflib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

SUBCOMMANDS = ("evolve", "bohm", "grw", "decohere", "measure")


class ConfigError(ValueError):
    def __init__(self, key_path: str, reason: str):
        self.key_path = key_path
        self.reason = reason
        super().__init__(f"{key_path}: {reason}" if key_path else reason)


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class PacketConfig(_Strict):
    center: float = 0.0
    width: float = Field(1.0, gt=0)
    k0: float = 0.0
    amplitude: float = 1.0


class GridConfig(_Strict):
    points: int = Field(512, ge=16)
    extent: tuple[float, float] = (-20.0, 20.0)
    mass: float = Field(1.0, gt=0)

    @field_validator("points")
    @classmethod
    def _pow2(cls, v):
        if v & (v - 1):
            raise ValueError("must be a power of two")
        return v

    @field_validator("extent")
    @classmethod
    def _ordered(cls, v):
        if not v[0] < v[1]:
            raise ValueError("extent must be ordered [min, max]")
        return v


class PotentialConfig(_Strict):
    kind: Literal["free", "harmonic", "double_well"] = "free"
    omega: float = 1.0
    a: float = Field(1.0, gt=0)
    depth: float = 1.0


class OutputConfig(_Strict):
    dir: str = "out"
    format: Literal["csv", "json"] = "csv"
    figures: bool = True


class EvolveConfig(_Strict):
    packets: list[PacketConfig] = Field(default_factory=lambda: [PacketConfig()])
    dt: float = Field(0.01, gt=0)
    steps: int = Field(200, ge=1)
    snapshots: int = Field(5, ge=1)


class BohmConfig(_Strict):
    packets: list[PacketConfig] = Field(default_factory=lambda: [PacketConfig()])
    trajectories: int = Field(10000, ge=1)
    dt: float = Field(0.01, gt=0)
    checkpoints: list[float] = Field(default_factory=lambda: [0.5, 1.0, 2.0])
    record: int = Field(40, ge=0)
    bins: int = Field(128, ge=4)

    @field_validator("checkpoints")
    @classmethod
    def _positive(cls, v):
        if not v or any(t <= 0 for t in v):
            raise ValueError("checkpoints must be a non-empty list of positive times")
        return sorted(v)


class GrwConfig(_Strict):
    lambda_: float = Field(1.0, alias="lambda", ge=0)
    sigma: float = Field(1.0, gt=0)
    mass_proportional: bool = False
    n_particles: int = Field(1, ge=1, description="constituents sharing the body's centre-of-mass rate")
    horizon: float = Field(5.0, gt=0)
    dt: float = Field(0.05, gt=0)
    realizations: int = Field(200, ge=1)
    packets: list[PacketConfig] = Field(default_factory=lambda: [
        PacketConfig(center=-5.0, width=0.7), PacketConfig(center=5.0, width=0.7)])
    master_check: bool = True


class DecohereConfig(_Strict):
    alpha: float = Field(0.8366600265340756, ge=0, le=1)
    beta: Optional[float] = Field(None, ge=0, le=1)
    theta: float = 0.3
    n_env: list[int] = Field(default_factory=lambda: list(range(0, 21)))

    @model_validator(mode="after")
    def _norm(self):
        if self.beta is not None and abs(self.alpha ** 2 + self.beta ** 2 - 1.0) > 1e-9:
            raise ValueError("alpha^2 + beta^2 must equal 1")
        if any(n < 0 for n in self.n_env):
            raise ValueError("n_env entries must be >= 0")
        return self


class MeasureConfig(_Strict):
    pointer_positions: int = Field(3, ge=3)
    hidden_dim: int = Field(4, ge=1)
    error_rate: float = Field(0.05, ge=0, lt=0.5)
    eta: float = Field(0.05, gt=0, lt=1.4142135623730951)
    n_samples: int = Field(1000, ge=1000)


class ScenarioConfig(_Strict):
    subcommand: Literal["evolve", "bohm", "grw", "decohere", "measure"]
    seed: int = Field(0, ge=0, lt=2 ** 64)
    workers: int = Field(1, ge=1)
    grid: GridConfig = Field(default_factory=GridConfig)
    potential: PotentialConfig = Field(default_factory=PotentialConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)
    evolve: EvolveConfig = Field(default_factory=EvolveConfig)
    bohm: BohmConfig = Field(default_factory=BohmConfig)
    grw: GrwConfig = Field(default_factory=GrwConfig)
    decohere: DecohereConfig = Field(default_factory=DecohereConfig)
    measure: MeasureConfig = Field(default_factory=MeasureConfig)

    def with_overrides(self, **kw) -> "ScenarioConfig":
        data = self.model_dump(by_alias=True)
        for key, value in kw.items():
            if value is None:
                continue
            node = data
            *head, last = key.split(".")
            for h in head:
                node = node[h]
            node[last] = value
        return _validate(data)


def _model_for(loc) -> type[BaseModel] | None:
    model: type[BaseModel] = ScenarioConfig
    for part in loc:
        if isinstance(part, int):
            continue
        field = None
        for name, f in model.model_fields.items():
            if part in (name, f.alias):
                field = f
                break
        if field is None:
            return None
        ann = field.annotation
        args = getattr(ann, "__args__", ()) or ()
        inner = next((a for a in (ann, *args) if isinstance(a, type) and issubclass(a, BaseModel)), None)
        if inner is None:
            return None
        model = inner
    return model


def _known_keys(model: type[BaseModel]) -> list[str]:
    return [f.alias or name for name, f in model.model_fields.items()]


def _first_error(exc: ValidationError) -> ConfigError:
    err = exc.errors()[0]
    loc = tuple(err["loc"])
    path = ".".join(str(p) for p in loc)
    if err["type"] == "extra_forbidden":
        parent = _model_for(loc[:-1])
        hint = ""
        if parent is not None:
            close = difflib.get_close_matches(str(loc[-1]), _known_keys(parent), n=1)
            if close:
                hint = f"; did you mean {'.'.join(str(p) for p in (*loc[:-1], close[0]))!r}?"
        return ConfigError(path, f"unknown key{hint}")
    return ConfigError(path, err["msg"])


def _validate(data) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("", "configuration must be a JSON object")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        raise _first_error(exc) from None


def parse_config(source, subcommand: str | None = None) -> ScenarioConfig:
    """Validate a config given as a path, JSON text or a dict.

    ``subcommand`` fills in (or must agree with) the ``subcommand`` key.
    """
    if isinstance(source, dict):
        data = dict(source)
    else:
        text = str(source)
        p = Path(text)
        if not text.lstrip().startswith("{") and p.exists():
            text = p.read_text(encoding="utf-8")
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"malformed JSON: {exc}") from None
    if subcommand is not None and isinstance(data, dict):
        given = data.get("subcommand", subcommand)
        if given != subcommand:
            raise ConfigError("subcommand", f"config is for {given!r}, not {subcommand!r}")
        data["subcommand"] = subcommand
    return _validate(data)


def config_schema() -> dict:
    """JSON schema of the scenario configuration."""
    return ScenarioConfig.model_json_schema(by_alias=True)
