"""Multi-robot path planning, kinematic post-processing and execution."""
from .mapf import HighwaySet, Infeasible, PlanningTimeout, highway_fraction, plan_cbs, plan_ecbs, suggest_highways
from .pipeline import PlannerConfig, PostConfig, plan_instance, post_plan
from .post import (
    Kinematics,
    Schedule,
    augment_tpg,
    build_stn,
    build_tpg,
    maximize_safety,
    solve_stn_earliest,
    stn_slack,
)
from .sim import DelayModel, Metrics, SimConfig, monitor_and_recover, run, simulate, step
from .stn import Stn, StnInconsistent, earliest_times, latest_times
from .tapf import plan_cbm, plan_team_flow, tapf_to_mapf
from .world import (
    DiscretePlan,
    Graph,
    InvalidInput,
    MapfInstance,
    PlanError,
    Robot,
    TapfInstance,
    Team,
    check_plan,
    detect_conflicts,
    parse_grid_map,
    serialize_grid_map,
)

__version__ = "0.1.0"
