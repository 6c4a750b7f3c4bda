"""Multi-agent path planning for spatially extended agents on road networks."""

from .agents import Constraint, Move, Plan, SEAgent, Wait, build_plan, occupancy, plan_cost
from .roadnet import Edge, Location, RoadNetwork, build_grid, shortest_path

__all__ = [
    "Constraint",
    "Edge",
    "Location",
    "Move",
    "Plan",
    "RoadNetwork",
    "SEAgent",
    "Wait",
    "build_grid",
    "build_plan",
    "occupancy",
    "plan_cost",
    "shortest_path",
]

__version__ = "0.1.0"
