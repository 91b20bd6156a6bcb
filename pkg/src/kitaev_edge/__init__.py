"""Statevector simulation of chiral edge dynamics in the Kitaev honeycomb model."""

from .config import ExperimentConfig, load_config, parse_config, preset_config
from .correlators import exact_correlator, measure_energy_terms, mitarai_correlator
from .evolution import analytic_times, build_step_circuit, evolve, optimize_t_junction
from .hamiltonian import PRESETS, HamiltonianSpec, build_hamiltonian, ground_state_exact
from .lattice import build_lattice, build_t_junction
from .pauli import PauliString, commutes, multiply
from .prep import new_ansatz, optimize, prepare_state
from .statevector import Circuit, StateVector, run_circuit

__version__ = "0.1.0"

__all__ = [
    "ExperimentConfig", "load_config", "parse_config", "preset_config",
    "exact_correlator", "measure_energy_terms", "mitarai_correlator",
    "analytic_times", "build_step_circuit", "evolve", "optimize_t_junction",
    "PRESETS", "HamiltonianSpec", "build_hamiltonian", "ground_state_exact",
    "build_lattice", "build_t_junction",
    "PauliString", "commutes", "multiply",
    "new_ansatz", "optimize", "prepare_state",
    "Circuit", "StateVector", "run_circuit",
]
