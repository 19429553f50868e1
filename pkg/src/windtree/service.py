"""HTTP service exposing the simulator: one POST endpoint per experiment
kind, with pydantic request/response models.

The service is stateless; every request carries its full table config, so a
response is a pure function of the request body.  The CLI is a thin client
of this app (in-process by default, remote with --server).
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import List, Literal, Optional, Tuple, Union

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .config import TableModel, parse_fraction
from .flow import (BUDGET, Budget, COLLISION, PhasePoint, SINGULAR,
                   flow_until)
from .lorentz import horizon_probe, lorentz_recurrence, min_obstacle_separation
from .periodic import (annulus_periodicity, check_direction_periodicity,
                       exact_orbit, make_annulus_experiment,
                       scan_periodic_directions)
from .section import find_annulus_width, recurrence_fraction
from .table import Table, TableError


class BudgetModel(BaseModel):
    max_collisions: int = Field(default=10 ** 6, gt=0)
    max_path_length: float = Field(default=10.0 ** 6, gt=0)
    max_radius: float = Field(default=10.0 ** 3, gt=0)

    def to_budget(self) -> Budget:
        return Budget(self.max_collisions, self.max_path_length,
                      self.max_radius)


class StartModel(BaseModel):
    """Launch phase point.  Coordinates accept exact fraction strings; the
    exact engine requires them together with a rational direction."""

    x: Union[str, float]
    y: Union[str, float]
    dx: Union[str, float]
    dy: Union[str, float]


class SimulateRequest(BaseModel):
    config: TableModel
    start: StartModel
    engine: Literal["float", "exact"] = "float"
    budget: BudgetModel = Field(default_factory=BudgetModel)


class EventModel(BaseModel):
    kind: str
    time: float
    x: float
    y: float
    dx: float
    dy: float
    site: Optional[Tuple[int, int]] = None
    reason: str = ""


class SimulateResponse(BaseModel):
    status: str
    n_collisions: int
    path_length: float
    events: List[EventModel]
    final: StartModel


class RecurrenceRequest(BaseModel):
    config: TableModel
    n_ring: int = Field(ge=1)
    m_list: List[int]
    samples: int = Field(ge=1)
    seed: int = 0
    engine: Literal["float", "exact"] = "float"
    threads: int = Field(default=1, ge=1)
    budget: BudgetModel = Field(default_factory=BudgetModel)


class RecurrenceResponse(BaseModel):
    records: List[dict]


class AnnulusRequest(BaseModel):
    dims: Tuple[str, str] = ("1/2", "1/2")
    n_ring: int = Field(default=1, ge=1)
    epsilon: float
    samples: int = Field(ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    max_doublings: int = Field(default=7, ge=1)
    budget: BudgetModel = Field(default_factory=BudgetModel)


class AnnulusResponse(BaseModel):
    certified: bool
    record: dict


class PeriodicRequest(BaseModel):
    mode: Literal["orbit", "direction", "scan", "annulus"]
    config: Optional[TableModel] = None
    start: Optional[StartModel] = None        # orbit
    slope: Optional[str] = None               # "p/q": orbit, direction, annulus
    bound: int = Field(default=16, ge=1)
    max_q: int = Field(default=8, ge=1)       # scan
    samples: int = Field(default=100, ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    dims: Tuple[str, str] = ("1/2", "1/2")    # annulus experiment
    mid_ring: int = Field(default=8, ge=2)
    margin: int = Field(default=4, ge=1)
    budget: BudgetModel = Field(default_factory=BudgetModel)


class PeriodicResponse(BaseModel):
    records: List[dict]


class LorentzRequest(BaseModel):
    config: TableModel
    mode: Literal["horizon", "recurrence"]
    n_lines: int = Field(default=200, ge=1)
    probe_len: float = Field(default=50.0, gt=0)
    n_ring: int = Field(default=2, ge=1)
    m_list: List[int] = Field(default_factory=lambda: [8])
    samples: int = Field(default=1000, ge=1)
    seed: int = 0
    threads: int = Field(default=1, ge=1)
    budget: BudgetModel = Field(default_factory=BudgetModel)


class LorentzResponse(BaseModel):
    records: List[dict]


def _parse_slope(text: str) -> Tuple[int, int]:
    f = parse_fraction(text)
    if f < 0:
        raise ValueError("slope must be non-negative")
    return (f.numerator, f.denominator)


def _exact_direction(dx: Fraction, dy: Fraction) -> Tuple[int, int]:
    lcm = math.lcm(dx.denominator, dy.denominator)
    return (int(dx * lcm), int(dy * lcm))


def create_app() -> FastAPI:
    app = FastAPI(title="windtree service", version=__version__)

    def bad_request(exc: Exception):
        return HTTPException(status_code=422, detail=str(exc))

    @app.get("/health")
    def health():
        return {"status": "ok", "version": __version__}

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(req: SimulateRequest):
        try:
            table = req.config.to_table()
            budget = req.budget.to_budget()
            if req.engine == "exact":
                x = parse_fraction(req.start.x)
                y = parse_fraction(req.start.y)
                d = _exact_direction(parse_fraction(req.start.dx),
                                     parse_fraction(req.start.dy))
                phase = PhasePoint(x, y, d[0], d[1])
            else:
                phase = PhasePoint(float(parse_fraction(req.start.x)),
                                   float(parse_fraction(req.start.y)),
                                   float(parse_fraction(req.start.dx)),
                                   float(parse_fraction(req.start.dy)))
            res = flow_until(table, phase, lambda ev: False, budget,
                             engine=req.engine)
        except (TableError, ValueError, ZeroDivisionError) as exc:
            raise bad_request(exc)
        events = []
        # Track the motion direction after each event for the dump.
        dxv, dyv = float(phase.dx), float(phase.dy)
        nrm = math.hypot(dxv, dyv)
        dxv, dyv = dxv / nrm, dyv / nrm
        from .geometry import reflect_disk, reflect_rect
        for ev in res.events:
            if ev.kind == COLLISION:
                if abs(ev.normal[0]) in (0, 1) and abs(ev.normal[1]) in (0, 1):
                    dxv, dyv = reflect_rect((dxv, dyv), ev.normal)
                else:
                    rx, ry = reflect_disk((dxv, dyv), ev.normal)
                    nn = math.hypot(rx, ry)
                    dxv, dyv = rx / nn, ry / nn
            events.append(EventModel(
                kind=ev.kind, time=ev.time, x=float(ev.point[0]),
                y=float(ev.point[1]), dx=dxv, dy=dyv,
                site=ev.site if isinstance(ev.site, tuple) else None,
                reason=ev.reason))
        final = StartModel(x=str(res.final.x), y=str(res.final.y),
                           dx=str(res.final.dx), dy=str(res.final.dy))
        return SimulateResponse(status=res.status,
                                n_collisions=res.n_collisions,
                                path_length=res.path_length,
                                events=events, final=final)

    @app.post("/recurrence", response_model=RecurrenceResponse)
    def recurrence(req: RecurrenceRequest):
        try:
            table = req.config.to_table()
            budget = req.budget.to_budget()
            records = []
            for m in req.m_list:
                est = recurrence_fraction(table, req.n_ring, m, req.samples,
                                          req.seed, budget=budget,
                                          engine=req.engine,
                                          threads=req.threads)
                records.append(est.record())
        except (TableError, ValueError) as exc:
            raise bad_request(exc)
        return RecurrenceResponse(records=records)

    @app.post("/annulus", response_model=AnnulusResponse)
    def annulus(req: AnnulusRequest):
        try:
            from .table import constant_table, is_odd_even_dims
            a = parse_fraction(req.dims[0])
            b = parse_fraction(req.dims[1])
            if not is_odd_even_dims(a, b):
                raise ValueError(
                    f"dims ({a}, {b}) fail the odd-numerator/even-denominator "
                    f"condition required of the reference table")
            table = constant_table(a, b)
            cert = find_annulus_width(table, req.n_ring, req.epsilon,
                                      req.samples, req.seed,
                                      budget=req.budget.to_budget(),
                                      max_doublings=req.max_doublings,
                                      threads=req.threads)
        except (TableError, ValueError) as exc:
            raise bad_request(exc)
        return AnnulusResponse(certified=cert.certified, record=cert.record())

    @app.post("/periodic", response_model=PeriodicResponse)
    def periodic(req: PeriodicRequest):
        try:
            budget = req.budget.to_budget()
            if req.mode == "orbit":
                table = req.config.to_table()
                x = parse_fraction(req.start.x)
                y = parse_fraction(req.start.y)
                d = _exact_direction(parse_fraction(req.start.dx),
                                     parse_fraction(req.start.dy))
                res = exact_orbit(table, x, y, d, req.bound, budget)
                return PeriodicResponse(records=[res.record()])
            if req.mode == "direction":
                table = req.config.to_table()
                rep = check_direction_periodicity(
                    table, _parse_slope(req.slope), req.samples, req.bound,
                    req.seed, budget)
                return PeriodicResponse(records=[rep.record()])
            if req.mode == "scan":
                table = req.config.to_table()
                reports = scan_periodic_directions(
                    table, req.max_q, req.samples, req.bound, req.seed,
                    budget, threads=req.threads)
                return PeriodicResponse(records=[r.record() for r in reports])
            dims = (parse_fraction(req.dims[0]), parse_fraction(req.dims[1]))
            exp = make_annulus_experiment(dims, req.mid_ring, req.margin)
            rep = annulus_periodicity(exp, _parse_slope(req.slope),
                                      req.samples, req.seed, budget)
            rec = rep.record()
            rec.update({"mid_ring": req.mid_ring, "margin": req.margin,
                        "inner": exp.inner, "outer": exp.outer})
            return PeriodicResponse(records=[rec])
        except (TableError, ValueError, AttributeError) as exc:
            raise bad_request(exc)

    @app.post("/lorentz", response_model=LorentzResponse)
    def lorentz(req: LorentzRequest):
        try:
            table = req.config.to_table()
            if req.mode == "horizon":
                rep = horizon_probe(table, req.n_lines, req.probe_len,
                                    req.seed)
                return LorentzResponse(records=[rep.record()])
            records = []
            for m in req.m_list:
                est = lorentz_recurrence(table, req.n_ring, m, req.samples,
                                         req.seed,
                                         budget=req.budget.to_budget(),
                                         threads=req.threads)
                records.append(est.record())
            return LorentzResponse(records=records)
        except (TableError, ValueError) as exc:
            raise bad_request(exc)

    return app


app = create_app()
