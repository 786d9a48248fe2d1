"""Simulation of M/G/1 symmetric queues and their heavy-traffic scalings."""

from .disciplines import Discipline, InvalidDisciplineError, insertion_position, rates, validate
from .engine import (
    ArrivalStream,
    CycleBatch,
    CycleStats,
    QueueState,
    SamplePath,
    advance,
    arrive,
    busy_cycles,
    depart,
    next_departure,
    simulate,
)
from .rbm import RBMParams, rbm_params_from_queue, rbm_transition_cdf, simulate_rbm
from .scaling import ScalingParams, diffusion_scale, heavy_tail_scale, lambda_r
from .service import (
    Deterministic,
    Erlang,
    Exponential,
    HyperExp,
    Pareto,
    ParetoLog,
    ServiceDistribution,
    solve_cr,
)

__version__ = "0.1.0"

__all__ = [
    "ArrivalStream", "CycleBatch", "CycleStats", "Deterministic", "Discipline", "Erlang",
    "Exponential", "HyperExp", "InvalidDisciplineError", "Pareto", "ParetoLog", "QueueState",
    "RBMParams", "SamplePath", "ScalingParams", "ServiceDistribution", "advance", "arrive",
    "busy_cycles", "depart", "diffusion_scale", "heavy_tail_scale", "insertion_position",
    "lambda_r", "next_departure", "rates", "rbm_params_from_queue", "rbm_transition_cdf",
    "simulate", "simulate_rbm", "solve_cr", "validate",
]
