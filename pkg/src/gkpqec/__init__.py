"""Simulation and feedback training of small-BIG-small error correction for GKP codes."""
from .backend import BACKEND
from .fock import HilbertConfig
from .gkp import CodeLattice, GkpStateSpec, logical_ket, logical_state, pauli_operator
from .lindblad import IntegratorConfig, NoiseModel
from .policies import make_policy
from .sbs import Engine, HalfCycleParams, Schedule, enumerate_branches, expected_return, run_trajectory

__version__ = "0.1.0"

__all__ = ["BACKEND", "CodeLattice", "Engine", "GkpStateSpec", "HalfCycleParams", "HilbertConfig",
           "IntegratorConfig", "NoiseModel", "Schedule", "enumerate_branches", "expected_return",
           "logical_ket", "logical_state", "make_policy", "pauli_operator", "run_trajectory"]
