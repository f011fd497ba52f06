"""Periodic orbits of prescribed energy on flat tori.

A variational toolkit built around the free-period action functional:
loops carry a free period, critical points are periodic orbits of the
prescribed energy, and the Mane critical values organize which search
strategy applies at a given energy.
"""

__version__ = "0.1.0"

from .action import (
    DescentOptions,
    DescentResult,
    FunctionalContext,
    PSDiagnosis,
    PSKind,
    Termination,
    action,
    descend,
    differential,
    gradient,
    ps_classify,
)
from .critical_values import (
    CriticalValueEstimates,
    estimate_c0,
    estimate_critical_values,
    estimate_cu,
    estimate_e0,
    witness_negative_action,
)
from .geometry import (
    DiscreteLoop,
    TangentVector,
    constant_loop,
    loop_length,
    make_loop,
    pairing,
    precondition,
    sobolev_inner,
)
from .lagrangian import BoundsEstimate, TonelliModel, TrigSeries, estimate_bounds
from .minimax_engine import (
    EuclideanObjective,
    MinimaxFlag,
    MinimaxPath,
    MinimaxReport,
    MountainPassOptions,
    deform,
    mountain_pass,
    struwe_sweep,
    two_lyapunov_flow,
)
from .orbits import (
    LoopObjective,
    OrbitCandidate,
    isoperimetric_check,
    lower_bound_a,
    minimize_in_class,
    mountain_pass_orbit,
    negative_length_check,
)
from .verify import VerificationReport, VerifyTolerances, integrate_el, verify_orbit
