from __future__ import annotations

import json
import logging
import os
from typing import Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import load_output_dir
from app.errors import ConfigError, Soft2HardError
from app.fd_solver import SpaceTimeGrid
from app.heat_modal import DEFAULT_TRUNCATION, HeatProblem
from app.rocket import RocketProblem
from app.rules import evaluate_rule, is_mismatch_rule, parse_sine_combination
from app.spectrum import SineSpectrum, sine_coefficients
from app.sweep import (
    HEAT_FD,
    HEAT_MODAL,
    DEFAULT_HEAT_ALPHAS,
    ROCKET_ALPHA_RANGE,
    ROCKET_ANALYTIC,
    ROCKET_FD,
    Experiment,
    alpha_grid,
    parse_alpha_grid_spec,
)

logger = logging.getLogger(__name__)

DEFAULT_THETAS = [0.0, 0.25, 0.5, 1.0]

SpectrumSource = Union[float, str, list[float], None]


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(populate_by_name=True, extra="forbid")

    kind: Literal["rocket", "heat"] = "heat"
    horizon: float = Field(1.0, alias="T", gt=0, allow_inf_nan=False)
    target: SpectrumSource = None
    initial: Union[str, list[float], None] = None
    rule: str | None = None
    samples: str | None = None
    solver: Literal["rocket-analytic", "rocket-fd", "heat-modal", "heat-fd"] | None = None
    alpha_grid: Union[str, list[float], None] = None
    modes: int = Field(DEFAULT_TRUNCATION, ge=1)
    nx: int = Field(63, ge=3)
    nt: int = Field(80, ge=2)
    thetas: list[float] = Field(default_factory=lambda: list(DEFAULT_THETAS))
    out: str = Field(default_factory=load_output_dir)
    format: Literal["csv", "json"] | None = None
    strict: bool = False
    budget: float = Field(2e-3, gt=0)
    refinements: int = Field(2, ge=0, le=4)
    trajectory: bool = False

    @field_validator("thetas")
    @classmethod
    def _thetas_in_range(cls, v: list[float]) -> list[float]:
        for theta in v:
            if not 0.0 <= theta <= 1.0:
                raise ValueError(f"theta {theta!r} outside [0, 1]")
        return sorted(set(v))

    @field_validator("samples")
    @classmethod
    def _samples_exist(cls, v: str | None) -> str | None:
        if v is not None and not os.path.isfile(v):
            raise ValueError(f"file not found: {v}")
        return v

    @model_validator(mode="after")
    def _check_kind(self) -> ExperimentConfig:
        if self.solver is None:
            self.solver = ROCKET_ANALYTIC if self.kind == "rocket" else HEAT_MODAL
        if self.kind == "rocket":
            if self.solver not in (ROCKET_ANALYTIC, ROCKET_FD):
                raise ValueError(f"solver: {self.solver!r} is not a rocket solver")
            if self.target is None:
                self.target = 1.0
            if not isinstance(self.target, (int, float)):
                raise ValueError("target: rocket target must be a number (terminal position y_T)")
        else:
            if self.solver not in (HEAT_MODAL, HEAT_FD):
                raise ValueError(f"solver: {self.solver!r} is not a heat solver")
            sources = [s for s in (self.target, self.rule, self.samples) if s is not None]
            if len(sources) != 1:
                raise ValueError("target: heat problems need exactly one of target, rule, samples")
        return self


def _error_key(err: dict) -> tuple[str, str]:
    msg = str(err.get("msg", "invalid value")).removeprefix("Value error, ")
    loc = [str(p) for p in err.get("loc", ()) if not isinstance(p, int)]
    if loc:
        # report the key the user writes (T), whichever name pydantic echoes back
        field = ExperimentConfig.model_fields.get(loc[0])
        if field is not None and field.alias:
            loc[0] = field.alias
        return ".".join(loc), msg
    # model-level checks prefix the message with the key
    key, sep, rest = msg.partition(": ")
    if sep and key.isidentifier():
        return key, rest
    return "config", msg


def parse_config(path: str | None = None, overrides: dict | None = None) -> ExperimentConfig:
    """JSON file (keys = ExperimentConfig fields) overlaid with non-None flag values."""
    data: dict = {}
    if path:
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path} must hold a JSON object")
    for k, v in (overrides or {}).items():
        if v is not None:
            data[k] = v
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        key, msg = _error_key(exc.errors()[0])
        raise ConfigError(key, msg) from exc


# --- problem construction ----------------------------------------------------------------


def _spectrum_from(source: str | list[float] | float | None, truncation: int, key: str) -> SineSpectrum:
    try:
        if source is None:
            return SineSpectrum.zeros(truncation)
        if isinstance(source, (int, float)):
            raise ConfigError(key, "a heat spectrum cannot be a single number")
        if isinstance(source, list):
            return SineSpectrum(np.asarray(source, dtype=float))
        if is_mismatch_rule(source):
            return SineSpectrum(evaluate_rule(source, truncation))
        return parse_sine_combination(source, truncation)
    except ConfigError:
        raise
    except Soft2HardError as exc:
        raise ConfigError(key, str(exc)) from exc


def build_rocket_problem(cfg: ExperimentConfig) -> RocketProblem:
    return RocketProblem(horizon=cfg.horizon, target=float(cfg.target))


def build_heat_problem(cfg: ExperimentConfig) -> HeatProblem:
    initial = _spectrum_from(cfg.initial, cfg.modes, "initial")
    if cfg.rule is not None:
        try:
            d = evaluate_rule(cfg.rule, cfg.modes)
        except Soft2HardError as exc:
            raise ConfigError("rule", str(exc)) from exc
        if cfg.initial is None:
            return HeatProblem.from_mismatch_rule(d, cfg.horizon)
        # d_n given with nonzero y0: y_T,n = d_n + exp(-lambda_n T) y_0,n
        lam = (np.arange(1, cfg.modes + 1) * np.pi) ** 2
        target = d + np.exp(-lam * cfg.horizon) * initial.padded(cfg.modes)
        return HeatProblem(cfg.horizon, initial, SineSpectrum(target))
    if cfg.samples is not None:
        try:
            values = np.loadtxt(cfg.samples, dtype=float).reshape(-1)
            target = sine_coefficients(values, cfg.modes)
        except OSError as exc:
            raise ConfigError("samples", f"cannot read {cfg.samples}: {exc}") from exc
        except (Soft2HardError, ValueError) as exc:
            raise ConfigError("samples", str(exc)) from exc
        return HeatProblem(cfg.horizon, initial, target)
    target = _spectrum_from(cfg.target, cfg.modes, "target")
    if target.truncation < cfg.modes:
        target = SineSpectrum(target.padded(cfg.modes))
    return HeatProblem(cfg.horizon, initial, target)


def resolved_alphas(cfg: ExperimentConfig) -> list[float]:
    try:
        if cfg.alpha_grid is None:
            if cfg.kind == "rocket":
                lo, hi, count = ROCKET_ALPHA_RANGE
                return alpha_grid(lo, hi, count, spacing="log")
            return list(DEFAULT_HEAT_ALPHAS)
        if isinstance(cfg.alpha_grid, list):
            return alpha_grid(values=cfg.alpha_grid, spacing="explicit")
        return parse_alpha_grid_spec(cfg.alpha_grid)
    except Soft2HardError as exc:
        raise ConfigError("alpha_grid", str(exc)) from exc


def build_grid(cfg: ExperimentConfig) -> SpaceTimeGrid:
    return SpaceTimeGrid(nx=cfg.nx, nt=cfg.nt, horizon=cfg.horizon)


def build_experiment(cfg: ExperimentConfig, solver: str | None = None) -> Experiment:
    tag = solver or cfg.solver
    if cfg.kind == "rocket":
        return Experiment(build_rocket_problem(cfg), tag, nt=cfg.nt)
    problem = build_heat_problem(cfg)
    grid = build_grid(cfg) if tag == HEAT_FD else None
    return Experiment(problem, tag, grid=grid)
