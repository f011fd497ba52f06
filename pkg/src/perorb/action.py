"""The free-period action functional on discrete loops.

For a loop (x, T) the functional is S_kappa(x, T) = T * mean_i [ L(m_i,
d_i/T) + kappa ] with segment midpoints m_i and velocities d_i of the
piecewise-linear lift (midpoint quadrature, second-order accurate).  Its
critical points approximate periodic orbits of energy kappa.  The
differential is computed in closed form; the gradient is its Sobolev
Riesz representative.  Descent runs explicit Euler steps on the
normalized negative gradient with an Armijo backtracking line search, and
classifies every termination against the known behaviors of the
functional (shrinking loops land at level zero, periods can escape only
below the lowest Mane critical value).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    BadParameters,
    InsufficientTail,
    LineSearchStall,
    ShrinkLevelViolation,
)
from .geometry import DiscreteLoop, TangentVector, pairing, precondition
from .lagrangian import BoundsEstimate, TonelliModel, estimate_bounds


@dataclass(frozen=True, eq=False)
class FunctionalContext:
    """A (model, kappa) pair with growth bounds and flow guards."""

    model: TonelliModel
    kappa: float
    bounds: BoundsEstimate
    trunc_level: float | None = None
    T_floor: float = 1e-6

    def __post_init__(self):
        if not math.isfinite(self.kappa):
            raise BadParameters("kappa must be finite")
        if self.T_floor <= 0:
            raise BadParameters("T_floor must be positive")

    @classmethod
    def create(
        cls,
        model: TonelliModel,
        kappa: float,
        bounds: BoundsEstimate | None = None,
        trunc_level: float | None = None,
        T_floor: float = 1e-6,
        resolution: int = 64,
    ) -> "FunctionalContext":
        if bounds is None:
            bounds = estimate_bounds(model, resolution)
        return cls(model=model, kappa=kappa, bounds=bounds, trunc_level=trunc_level, T_floor=T_floor)

    def at_kappa(self, kappa: float) -> "FunctionalContext":
        return FunctionalContext(
            model=self.model,
            kappa=kappa,
            bounds=self.bounds,
            trunc_level=self.trunc_level,
            T_floor=self.T_floor,
        )


def action(ctx: FunctionalContext, loop: DiscreteLoop) -> float:
    """Midpoint-rule value of the free-period action."""
    m = loop.midpoints()
    v = loop.velocity() / loop.T
    return float(loop.T * (np.mean(ctx.model.eval_L(m, v)) + ctx.kappa))


def action_parts(ctx: FunctionalContext, loop: DiscreteLoop) -> tuple[float, float, float]:
    """Decompose S(T') = A/T' + B + (kappa - Vbar) T' for the loop's shape.

    A is the mean kinetic quadratic, B the magnetic line integral and Vbar
    the mean potential along the loop, all under the same quadrature as
    :func:`action`.  The period enters the action only through this
    profile, which makes the optimal period available in closed form.
    """
    m = loop.midpoints()
    d = loop.velocity()
    A = 0.5 * float(np.mean(np.sum(d * d, axis=-1)))
    B = float(np.mean(np.sum(ctx.model.theta_at(m) * d, axis=-1)))
    vbar = float(np.mean(ctx.model.V.value(m)))
    return A, B, vbar


def best_period_action(
    ctx: FunctionalContext, loop: DiscreteLoop, T_max: float = 1e6
) -> tuple[float, float]:
    """Minimize the action of the loop's shape over the period.

    Returns (value, argmin period).  When the linear coefficient
    kappa - Vbar is not positive the infimum sits at the period ceiling.
    """
    A, B, vbar = action_parts(ctx, loop)
    C = ctx.kappa - vbar
    if C > 0 and A > 0:
        T_best = min(math.sqrt(A / C), T_max)
    elif C > 0:
        T_best = ctx.T_floor
    else:
        T_best = T_max
    value = A / T_best + B + C * T_best
    return float(value), float(T_best)


def differential(ctx: FunctionalContext, loop: DiscreteLoop) -> TangentVector:
    """Exact differential of the discrete action, as covector data.

    The loop part is the gradient of the quadrature with respect to the
    samples under the (1/N)-weighted pairing (the discrete Euler-Lagrange
    residual).  The period part is the discrete mean of kappa - E along
    the loop, which is the exact T-derivative of the quadrature.
    """
    N, T = loop.N, loop.T
    m = loop.midpoints()
    v = loop.velocity() / T
    dx = ctx.model.dxL(m, v)
    dv = ctx.model.dvL(m, v)
    dual_q = 0.5 * T * (dx + np.roll(dx, 1, axis=0)) + N * (np.roll(dv, 1, axis=0) - dv)
    dual_T = float(np.mean(ctx.kappa - ctx.model.eval_E(m, v)))
    return TangentVector(xi=dual_q, tau=dual_T)


def gradient(ctx: FunctionalContext, loop: DiscreteLoop) -> tuple[TangentVector, float]:
    """Sobolev gradient and its norm (the dual norm of the differential)."""
    dual = differential(ctx, loop)
    grad = precondition(loop, dual)
    norm_sq = pairing(dual, grad)
    return grad, math.sqrt(max(norm_sq, 0.0))


class Termination(str, enum.Enum):
    CRITICAL_POINT = "CriticalPoint"
    SHRANK_TO_POINT = "ShrankToPoint"
    PERIOD_DIVERGED = "PeriodDiverged"
    TRUNCATED = "Truncated"
    MAX_ITERS = "MaxIters"


@dataclass
class DescentOptions:
    max_iters: int = 500
    grad_tol: float = 1e-6
    step_init: float = 0.25
    step_growth: float = 2.0
    step_shrink: float = 0.5
    step_max: float = 64.0
    step_min: float = 1e-14
    armijo: float = 1e-4
    T_ceiling: float = 1e3


@dataclass
class DescentResult:
    loop: DiscreteLoop
    iterations: int
    termination: Termination
    actions: list[float] = field(default_factory=list)
    grad_norms: list[float] = field(default_factory=list)
    periods: list[float] = field(default_factory=list)
    final_grad_norm: float = float("nan")

    def tail(self, length: int = 10) -> list[tuple[float, float, float]]:
        """Last iterates as (period, action, gradient-norm) records."""
        rows = list(zip(self.periods, self.actions, self.grad_norms))
        return rows[-length:]

    def trace_rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (i, a, g, t)
            for i, (a, g, t) in enumerate(zip(self.actions, self.grad_norms, self.periods))
        ]


def _move(loop: DiscreteLoop, direction: TangentVector, h: float, T_floor: float) -> DiscreteLoop:
    return loop.with_updates(q=loop.q + h * direction.xi, T=max(loop.T + h * direction.tau, T_floor))


def descend(ctx: FunctionalContext, loop: DiscreteLoop, opts: DescentOptions | None = None) -> DescentResult:
    """Line-searched descent along the normalized negative Sobolev gradient.

    The action trace is non-increasing.  Termination is classified:
    CriticalPoint below grad_tol; ShrankToPoint when the period reaches the
    floor region, in which case |action| < 1e-3 is asserted (shrinking
    families must land at level zero -- a violation is raised, not
    accepted); PeriodDiverged past the ceiling; Truncated when the
    trajectory enters the configured sublevel.
    """
    if opts is None:
        opts = DescentOptions()
    if opts.grad_tol <= 0:
        raise BadParameters("grad_tol must be positive")

    S = action(ctx, loop)
    result = DescentResult(loop=loop, iterations=0, termination=Termination.MAX_ITERS)
    h = opts.step_init
    shrink_region = 10.0 * ctx.T_floor

    for it in range(opts.max_iters):
        grad, gnorm = gradient(ctx, loop)
        result.actions.append(S)
        result.grad_norms.append(gnorm)
        result.periods.append(loop.T)
        result.iterations = it
        result.final_grad_norm = gnorm
        result.loop = loop

        if ctx.trunc_level is not None and S <= ctx.trunc_level:
            result.termination = Termination.TRUNCATED
            return result
        if loop.T <= shrink_region:
            result.termination = Termination.SHRANK_TO_POINT
            if abs(S) >= 1e-3:
                raise ShrinkLevelViolation(
                    f"period hit the floor at level {S:.3e}; shrinking families must reach level 0"
                )
            return result
        if gnorm < opts.grad_tol:
            result.termination = Termination.CRITICAL_POINT
            return result
        if loop.T >= opts.T_ceiling:
            result.termination = Termination.PERIOD_DIVERGED
            return result

        denom = math.sqrt(gnorm * gnorm + 1.0)
        direction = TangentVector(xi=-grad.xi / denom, tau=-grad.tau / denom)
        slope = gnorm * gnorm / denom

        h = min(h * opts.step_growth, opts.step_max)
        accepted = False
        while h >= opts.step_min:
            candidate = _move(loop, direction, h, ctx.T_floor)
            S_new = action(ctx, candidate)
            clamped = candidate.T == ctx.T_floor
            if S_new <= S - opts.armijo * h * slope or (clamped and S_new < S):
                accepted = True
                break
            h *= opts.step_shrink
        if not accepted:
            raise LineSearchStall(
                f"no decrease at machine step (S={S:.6e}, |grad|={gnorm:.3e})"
            )
        loop, S = candidate, S_new

    result.loop = loop
    result.actions.append(S)
    grad, gnorm = gradient(ctx, loop)
    result.grad_norms.append(gnorm)
    result.periods.append(loop.T)
    result.final_grad_norm = gnorm
    result.iterations = opts.max_iters
    result.termination = Termination.MAX_ITERS
    return result


class PSKind(str, enum.Enum):
    COMPACT_CANDIDATE = "CompactCandidate"
    SHRINKING_FAMILY = "ShrinkingFamily"
    ESCAPING_PERIODS = "EscapingPeriods"


@dataclass
class PSDiagnosis:
    kind: PSKind
    consistent: bool
    message: str
    period_bracket: tuple[float, float] | None = None


def ps_classify(
    ctx: FunctionalContext,
    tail: Sequence[tuple[float, float, float]],
    cu_estimate: float | None = None,
) -> PSDiagnosis:
    """Classify a near-critical trajectory tail of (period, action, grad) rows.

    Periods in a bracket predict a compact limit; periods shrinking to
    zero force the levels to zero (asserted); periods escaping upward are
    admissible only at energies below the c_u estimate, otherwise the
    diagnosis flags a contradiction.
    """
    if len(tail) < 10:
        raise InsufficientTail(f"need >= 10 iterates, got {len(tail)}")
    Ts = np.array([row[0] for row in tail], dtype=float)
    Ss = np.array([row[1] for row in tail], dtype=float)

    ratio = float(Ts.max() / max(Ts.min(), 1e-300))
    if ratio <= 2.0 and Ts.min() > 10.0 * ctx.T_floor:
        return PSDiagnosis(
            kind=PSKind.COMPACT_CANDIDATE,
            consistent=True,
            message="periods confined to a bracket; compact limit expected",
            period_bracket=(float(Ts.min()), float(Ts.max())),
        )
    if Ts[-1] < Ts[0]:
        level_ok = abs(Ss[-1]) < 1e-3
        msg = "periods shrink; levels tend to zero" if level_ok else (
            f"periods shrink but level {Ss[-1]:.3e} is bounded away from zero"
        )
        return PSDiagnosis(kind=PSKind.SHRINKING_FAMILY, consistent=level_ok, message=msg)
    if cu_estimate is not None and ctx.kappa > cu_estimate:
        return PSDiagnosis(
            kind=PSKind.ESCAPING_PERIODS,
            consistent=False,
            message=(
                f"periods escape at kappa={ctx.kappa:.6g} above the c_u estimate "
                f"{cu_estimate:.6g}; bounded-period compactness is contradicted"
            ),
        )
    return PSDiagnosis(
        kind=PSKind.ESCAPING_PERIODS,
        consistent=True,
        message="periods escape; admissible below the c_u estimate",
    )
