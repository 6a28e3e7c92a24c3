"""Magnus-expansion propagators for driven, coupled spin systems, with circuit compilation."""

from .circuit import CircuitIR, CostReport, closed_form_cost, count_gates, simulate
from .integrators import METHODS, MethodSpec, PropagationResult, propagate, step_unitaries
from .pulses import ChirpParams, ControlSpec, GaussianParams, constant_control, pulse_control, sampled_control
from .reference import propagator_error, reference_propagator, reference_result
from .spin_algebra import InteractionTensor, build_hamiltonian
from .systems import SpinSystem, example1, example2

__all__ = [
    "CircuitIR", "CostReport", "closed_form_cost", "count_gates", "simulate",
    "METHODS", "MethodSpec", "PropagationResult", "propagate", "step_unitaries",
    "ChirpParams", "ControlSpec", "GaussianParams", "constant_control", "pulse_control", "sampled_control",
    "propagator_error", "reference_propagator", "reference_result",
    "InteractionTensor", "build_hamiltonian", "SpinSystem", "example1", "example2",
]
__version__ = "0.1.0"
