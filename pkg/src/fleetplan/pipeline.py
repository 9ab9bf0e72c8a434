"""Planner and post-processing configuration, and the glue that runs them."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .mapf import HighwaySet, Objective, plan_cbs, plan_ecbs, suggest_highways
from .post import (
    DEFAULT_EPSILON,
    DEFAULT_TOL,
    Kinematics,
    Schedule,
    Tpg,
    augment_tpg,
    build_stn,
    build_tpg,
    maximize_safety,
    solve_stn_earliest,
)
from .stn import Stn
from .tapf import plan_cbm, tapf_to_mapf
from .world import DiscretePlan, Graph, InvalidInput, MapfInstance, TapfInstance

PLANNERS = ("cbs", "ecbs", "cbm")


@dataclass
class PlannerConfig:
    algorithm: str = "ecbs"
    objective: str = "makespan"
    w: float = 1.5
    # list of (u, v) vertex names, "auto", "reversed" (auto, flipped) or None
    highways: str | Sequence[tuple[str, str]] | None = None
    timeout: float | None = None

    def __post_init__(self):
        if self.algorithm not in PLANNERS:
            raise InvalidInput(f"unknown planner {self.algorithm!r}")
        Objective(self.objective)
        if self.w < 1:
            raise InvalidInput("w must be >= 1")


@dataclass
class PostConfig:
    delta: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    kinematics: Kinematics = field(default_factory=Kinematics)
    makespan_cap: float | None = None
    mode: str = "min_makespan"  # | "max_safety"
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        if self.mode not in ("min_makespan", "max_safety"):
            raise InvalidInput(f"unknown post mode {self.mode!r}")
        if self.delta < 0 or self.epsilon < 0:
            raise InvalidInput("delta and epsilon must be >= 0")


def resolve_highways(spec, instance: MapfInstance) -> HighwaySet | None:
    if spec is None or spec == "none":
        return None
    if spec == "auto":
        return suggest_highways(instance)
    if spec == "reversed":
        return suggest_highways(instance).reversed()
    if isinstance(spec, str):
        raise InvalidInput(f"unknown highways setting {spec!r}")
    g = instance.graph
    try:
        return HighwaySet([(g.vid(u), g.vid(v)) for u, v in spec], g)
    except ValueError as exc:
        raise InvalidInput(str(exc)) from exc


def as_mapf(instance: MapfInstance | TapfInstance) -> MapfInstance:
    """TAPF instances made of singleton teams are plain MAPF instances."""
    if isinstance(instance, MapfInstance):
        return instance
    if any(len(t.starts) != 1 for t in instance.teams):
        raise InvalidInput("this planner needs fixed targets; use cbm for teams")
    return tapf_to_mapf(instance, {t.id: list(t.targets) for t in instance.teams})


def plan_instance(instance: MapfInstance | TapfInstance, cfg: PlannerConfig) -> DiscretePlan:
    if cfg.algorithm == "cbm":
        if isinstance(instance, MapfInstance):
            from .tapf import mapf_to_tapf
            instance = mapf_to_tapf(instance)
        return plan_cbm(instance, timeout=cfg.timeout)
    mapf = as_mapf(instance)
    if cfg.algorithm == "cbs":
        return plan_cbs(mapf, cfg.objective, timeout=cfg.timeout)
    return plan_ecbs(mapf, cfg.objective, cfg.w, resolve_highways(cfg.highways, mapf), timeout=cfg.timeout)


def timed_plan(instance, cfg: PlannerConfig) -> tuple[DiscretePlan, float]:
    t0 = time.perf_counter()
    plan = plan_instance(instance, cfg)
    return plan, time.perf_counter() - t0


@dataclass
class PostResult:
    delta: float
    tpg: Tpg
    aug: Tpg
    stn: Stn
    schedule: Schedule


def post_plan(plan: DiscretePlan, graph: Graph, cfg: PostConfig) -> PostResult:
    """Raises ValueError for a bad delta/cap and StnInconsistent for an infeasible cap."""
    tpg = build_tpg(plan, graph)
    delta = cfg.delta
    if cfg.mode == "max_safety":
        delta, _ = maximize_safety(tpg, cfg.kinematics, graph, cfg.makespan_cap, cfg.epsilon, cfg.tol)
    aug = augment_tpg(tpg, delta, graph)
    stn = build_stn(aug, cfg.kinematics, graph, cfg.epsilon, cfg.makespan_cap)
    return PostResult(delta, tpg, aug, stn, solve_stn_earliest(stn, aug))
