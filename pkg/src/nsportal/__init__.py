"""Nonstationary RL under episodic low-rank MDPs: PORTAL, E2U and Ada-PORTAL."""

from .ada import feasible_sets, run_ada_portal
from .env import Environment, ScenarioConfig, build_scenario, variation_budgets
from .learning import ModelClass, e2u, random_model_class
from .metrics import gap_ave
from .portal import PortalHyperparams, run_portal

__version__ = "0.1.0"

__all__ = [
    "Environment", "ModelClass", "PortalHyperparams", "ScenarioConfig", "build_scenario", "e2u",
    "feasible_sets", "gap_ave", "random_model_class", "run_ada_portal", "run_portal", "variation_budgets",
]
