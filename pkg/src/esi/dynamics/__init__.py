"""Multi-machine power-system simulator and linearization oracle."""
from .cases import available_cases, load_case
from .dae import AlgebraicError, algebraic_residual
from .equilibrium import Equilibrium, EquilibriumError, GeneratorState, power_flow, solve_equilibrium
from .linearize import Linearization, jacobian_fd, linearize, modal_participation
from .network import (Generator, GeneratorParams, Line, Load, NetworkConfigError, NetworkModel,
                      build_network)
from .pmu import ChannelError, add_noise, resolve_channels, sample_pmu
from .simulate import (Event, Scenario, ScenarioError, SimulationError, TrajectoryRecord,
                       ambient_load_scenario, pulse_scenario, scenario_from_config, simulate)

__all__ = [
    "AlgebraicError", "ChannelError", "Equilibrium", "EquilibriumError", "Event", "Generator",
    "GeneratorParams", "GeneratorState", "Line", "Linearization", "Load", "NetworkConfigError",
    "NetworkModel", "Scenario", "ScenarioError", "SimulationError", "TrajectoryRecord",
    "add_noise", "algebraic_residual", "ambient_load_scenario", "available_cases", "build_network",
    "jacobian_fd", "linearize", "load_case", "modal_participation", "power_flow",
    "pulse_scenario", "resolve_channels", "sample_pmu", "scenario_from_config", "simulate",
    "solve_equilibrium",
]
