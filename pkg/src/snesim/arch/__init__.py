from .config import SneConfig
from .sim import (
    CycleDelta,
    PlanOverflowError,
    RouteError,
    SimDeadlock,
    SimError,
    SimInstance,
    XbarRoute,
    configure,
    dispatch_event,
    pipeline_route,
    run_inference,
)
from .trace import SimTrace, Tally
from .runner import NetworkRun, collector_merge, merge_pass_outputs, run_network

__all__ = [
    "SneConfig", "SimInstance", "SimTrace", "Tally", "XbarRoute", "CycleDelta",
    "SimError", "SimDeadlock", "PlanOverflowError", "RouteError",
    "configure", "dispatch_event", "pipeline_route", "run_inference",
    "NetworkRun", "run_network", "merge_pass_outputs", "collector_merge",
]
