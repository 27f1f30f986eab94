"""Quantum gate synthesis under Markovian and noise-qubit dynamics.

Piecewise-constant control fields are optimised with BFGS using exact
gradients of the matrix exponential.  The modules build the models
(:mod:`~robustgates.model`), fields (:mod:`~robustgates.controls`),
propagators (:mod:`~robustgates.propagate`), gate errors
(:mod:`~robustgates.objectives`), the optimiser
(:mod:`~robustgates.optimize`) and multi-start studies
(:mod:`~robustgates.experiments`).
"""

from .controls import ControlField, fluence, max_amplitude, sample_initial_field
from .model import (
    Actuator,
    LindbladChannel,
    LindbladSpec,
    QubitNetworkSpec,
    chain_network,
    noise_network,
    target_gate,
)
from .objectives import GateProblem, hamiltonian_problem, markovian_problem
from .optimize import OptimizerOptions, RunRecord, bfgs_minimize

__version__ = "0.1.0"

__all__ = [
    "Actuator",
    "ControlField",
    "GateProblem",
    "LindbladChannel",
    "LindbladSpec",
    "OptimizerOptions",
    "QubitNetworkSpec",
    "RunRecord",
    "bfgs_minimize",
    "chain_network",
    "fluence",
    "hamiltonian_problem",
    "markovian_problem",
    "max_amplitude",
    "noise_network",
    "sample_initial_field",
    "target_gate",
]
