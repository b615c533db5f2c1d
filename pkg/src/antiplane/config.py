"""Run configuration: schema, loading and diagnostics.

A configuration is a JSON document with the top-level keys ``grid``,
``material``, ``traction``, ``solver`` and ``output``, plus an optional
``sweep`` block used by ``antiplane sweep``. Unknown keys are rejected so a
misspelled option never silently falls back to its default.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Annotated, Literal, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .fields import Grid2, Traction, side_traction, stress_traction
from .materials import MaterialModel, PowerLaw, QuadExp

__all__ = ["RunConfig", "load_config", "parse_config"]

Side = Literal["left", "right", "bottom", "top"]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    nx: int = Field(ge=2)
    ny: int = Field(ge=2)
    lx: float = Field(1.0, gt=0)
    ly: float = Field(1.0, gt=0)
    origin: tuple[float, float] = (0.0, 0.0)
    dirichlet: list[Side] = Field(default_factory=lambda: ["left"], min_length=1)
    # regions removed from the domain: rectangles [x0, x1, y0, y1] and disks [cx, cy, r]
    holes: list[tuple[float, float, float, float]] = Field(default_factory=list)
    disks: list[tuple[float, float, float]] = Field(default_factory=list)

    def build(self) -> Grid2:
        mask = None
        if self.holes or self.disks:
            holes, disks = self.holes, self.disks

            def mask(X, Y):
                keep = np.ones(X.shape, dtype=bool)
                for x0, x1, y0, y1 in holes:
                    keep &= ~((X > x0) & (X < x1) & (Y > y0) & (Y < y1))
                for cx, cy, r in disks:
                    keep &= (X - cx) ** 2 + (Y - cy) ** 2 > r * r
                return keep

        return Grid2.rectangle(self.nx, self.ny, self.lx, self.ly, self.origin, tuple(self.dirichlet), mask)


class QuadExpConfig(_Strict):
    kind: Literal["quad_exp"]
    mu: float
    nu: float


class PowerLawConfig(_Strict):
    kind: Literal["power_law"]
    mu: float
    b: float
    p: float
    eps: float = 0.0


MaterialConfig = Annotated[Union[QuadExpConfig, PowerLawConfig], Field(discriminator="kind")]


class TractionConfig(_Strict):
    """Either per-side values or a constant stress whose normal component is applied."""

    sides: dict[Side, float] | None = None
    stress: tuple[float, float] | None = None

    @model_validator(mode="after")
    def _one_kind(self):
        if (self.sides is None) == (self.stress is None):
            raise ValueError("give exactly one of 'sides' or 'stress'")
        return self

    def build(self) -> Traction:
        if self.sides is not None:
            return side_traction(**self.sides)
        return stress_traction(self.stress)


class Tolerances(_Strict):
    admissible: float = Field(1e-10, gt=0)
    compatibility: float = Field(1e-6, gt=0)
    duality_gap: float = Field(1e-6, gt=0)
    oracle: float = Field(1e-9, gt=0)
    oracle_field: float = Field(1e-3, gt=0)
    oracle_energy: float = Field(1e-6, gt=0)


class SolverConfig(_Strict):
    tolerances: Tolerances = Tolerances()
    scan_points: int = Field(512, ge=16)
    oracle: bool = True
    oracle_max_iter: int = Field(5000, ge=1)


class OutputConfig(_Strict):
    dir: str = "out"
    formats: list[Literal["json", "csv"]] = Field(default_factory=lambda: ["json", "csv"])


class SweepConfig(_Strict):
    parameter: str = "tau_sq"
    start: float
    stop: float
    steps: int = Field(ge=1)
    # fixed |tau|^2 while a material parameter is swept
    tau_sq: float | None = Field(None, ge=0)
    curve_points: int = Field(400, ge=2)


class RunConfig(_Strict):
    grid: GridConfig
    material: MaterialConfig
    traction: TractionConfig
    solver: SolverConfig = SolverConfig()
    output: OutputConfig = OutputConfig()
    sweep: SweepConfig | None = None

    def build_material(self) -> MaterialModel:
        d = self.material
        try:
            if isinstance(d, QuadExpConfig):
                return QuadExp(d.mu, d.nu)
            return PowerLaw(d.mu, d.b, d.p, d.eps)
        except ConfigError as exc:
            raise ConfigError(f"material: {exc}") from None


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        loc = ".".join(str(p) for p in err["loc"]) or "<root>"
        lines.append(f"{loc}: {err['msg']}")
    return "; ".join(lines)


def parse_config(doc: dict) -> RunConfig:
    """Validate a decoded document.

    Raises
    ------
    ConfigError
        Naming every offending key as a dotted path.
    """
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None
    cfg.build_material()
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a JSON config file.

    Raises
    ------
    ConfigError
        For unreadable files, JSON syntax errors (with line and column) and
        schema violations.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(doc)
