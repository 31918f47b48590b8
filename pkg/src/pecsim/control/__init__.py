from .baseline import reactive_controller, schedule_controller
from .mpc import ForecastBundle, MPCController, Plan, export_plan_csv, mpc_plan
from .solver import TrajectoryProblem, TrajectorySolution, solve_trajectory
from .spot import SpotState, spot_react

CONTROLLERS = ("schedule", "reactive", "ns", "sa")
PREDICTIVE = ("ns", "sa")

__all__ = [
    "CONTROLLERS", "PREDICTIVE", "ForecastBundle", "MPCController", "Plan", "SpotState",
    "TrajectoryProblem", "TrajectorySolution", "export_plan_csv", "mpc_plan",
    "reactive_controller", "schedule_controller", "solve_trajectory", "spot_react",
]
