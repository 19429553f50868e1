"""Table configuration schema: pydantic models, exact fraction parsing,
and the shipped presets.

Rectangle dimensions travel as fraction strings ("1/2") and are parsed
exactly; no float round-trip happens between a config file and the engine.
"""

from __future__ import annotations

import json
from fractions import Fraction
from typing import Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, field_validator, model_validator

from .table import (AnnulusPatched, Constant, EMPTY, Explicit, IidRandom,
                    ObstacleSpec, Table, TableError)


def parse_fraction(text: Union[str, int]) -> Fraction:
    try:
        return Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"invalid exact fraction {text!r}: {exc}") from None


class ObstacleModel(BaseModel):
    shape: Literal["empty", "rect", "disk", "five_disk"] = "empty"
    dims: Optional[Tuple[str, str]] = None
    radius: Optional[float] = None
    center_radius: Optional[float] = None
    corner_radius: Optional[float] = None

    @model_validator(mode="after")
    def _check_fields(self):
        if self.shape == "rect":
            if self.dims is None:
                raise ValueError("rect obstacle needs dims [\"p/q\", \"r/s\"]")
            parse_fraction(self.dims[0])
            parse_fraction(self.dims[1])
        elif self.shape == "disk":
            if not self.radius or self.radius <= 0:
                raise ValueError("disk obstacle needs a positive radius")
        elif self.shape == "five_disk":
            if not self.center_radius or not self.corner_radius:
                raise ValueError("five_disk needs center_radius and corner_radius")
        return self

    def to_spec(self) -> ObstacleSpec:
        if self.shape == "empty":
            return EMPTY
        if self.shape == "rect":
            return ObstacleSpec(kind="rect",
                                dims=(parse_fraction(self.dims[0]),
                                      parse_fraction(self.dims[1])))
        if self.shape == "disk":
            return ObstacleSpec(kind="disk", radius=self.radius)
        return ObstacleSpec(kind="five_disk",
                            center_radius=self.center_radius,
                            corner_radius=self.corner_radius)


class PatchEntry(BaseModel):
    site: Tuple[int, int]
    spec: ObstacleModel


class WeightedEntry(BaseModel):
    spec: ObstacleModel
    weight: float = Field(gt=0)


class GeneratorModel(BaseModel):
    kind: Literal["constant", "iid", "annulus", "explicit"]
    spec: Optional[ObstacleModel] = None          # constant
    entries: Optional[List[WeightedEntry]] = None  # iid
    seed: int = 0                                  # iid
    base: Optional[ObstacleModel] = None           # annulus
    annuli: Optional[List[Tuple[int, int]]] = None
    patch: List[PatchEntry] = Field(default_factory=list)
    cells: List[PatchEntry] = Field(default_factory=list)  # explicit
    default: ObstacleModel = Field(default_factory=ObstacleModel)

    @model_validator(mode="after")
    def _check_kind(self):
        if self.kind == "constant" and self.spec is None:
            raise ValueError("constant generator needs a spec")
        if self.kind == "iid" and not self.entries:
            raise ValueError("iid generator needs weighted entries")
        if self.kind == "annulus" and (self.base is None or not self.annuli):
            raise ValueError("annulus generator needs base and annuli")
        return self

    def to_generator(self):
        if self.kind == "constant":
            return Constant(self.spec.to_spec())
        if self.kind == "iid":
            return IidRandom(tuple((e.spec.to_spec(), e.weight)
                                   for e in self.entries), seed=self.seed)
        if self.kind == "annulus":
            return AnnulusPatched(self.base.to_spec(),
                                  tuple(tuple(a) for a in self.annuli),
                                  patch={tuple(p.site): p.spec.to_spec()
                                         for p in self.patch},
                                  default=self.default.to_spec())
        return Explicit({tuple(p.site): p.spec.to_spec() for p in self.cells},
                        default=self.default.to_spec())


class TableModel(BaseModel):
    lattice: Literal["square", "triangular"] = "square"
    generator: GeneratorModel

    def to_table(self) -> Table:
        return Table(self.lattice, self.generator.to_generator())


def _rect_model(a: str, b: str) -> ObstacleModel:
    return ObstacleModel(shape="rect", dims=(a, b))


PRESETS: Dict[str, TableModel] = {
    # Full-occupancy table with the (1/2, 1/2) obstacle everywhere.
    "full-half": TableModel(generator=GeneratorModel(
        kind="constant", spec=_rect_model("1/2", "1/2"))),
    # Random half/empty mix of (1/2, 1/2) rectangles and empty cells.
    "random-half-empty": TableModel(generator=GeneratorModel(
        kind="iid", seed=0,
        entries=[WeightedEntry(spec=_rect_model("1/2", "1/2"), weight=1.0),
                 WeightedEntry(spec=ObstacleModel(), weight=1.0)])),
    # Annulus of (1/2, 1/2) rectangles around ring 8, empty elsewhere.
    "annulus-experiment": TableModel(generator=GeneratorModel(
        kind="annulus", base=_rect_model("1/2", "1/2"), annuli=[(4, 12)])),
    # Full-occupancy triangular disk gas, radius at the separation margin.
    "lorentz-triangular": TableModel(lattice="triangular",
                                     generator=GeneratorModel(
        kind="constant",
        spec=ObstacleModel(shape="disk", radius=0.49))),
    # Square-lattice five-disk clusters (one center disk, four corner disks).
    "lorentz-five-disk": TableModel(generator=GeneratorModel(
        kind="constant",
        spec=ObstacleModel(shape="five_disk", center_radius=0.4,
                           corner_radius=0.15))),
}


def load_table_model(source: str) -> TableModel:
    """Load a table config from a ``preset:<name>`` reference or a JSON file.

    JSON syntax errors surface with line/column diagnostics; schema errors
    name the offending field.
    """
    if source.startswith("preset:"):
        name = source.split(":", 1)[1]
        if name not in PRESETS:
            raise TableError(f"unknown preset {name!r}; "
                             f"available: {', '.join(sorted(PRESETS))}")
        return PRESETS[name]
    with open(source, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return TableModel.model_validate(data)
