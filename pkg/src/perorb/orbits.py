"""High-level periodic-orbit solvers on loop space.

Three routes to orbits of prescribed energy kappa:

* class minimization for kappa above the c_u bracket: multi-seed descent
  inside a fixed winding class (the winding vector is constant along any
  continuous deformation, so the class never needs re-projection);
* the mountain pass between a frozen constant loop and a negative-action
  witness, available on (e0, c_u), with the level certified from below by
  the isoperimetric constants;
* extraction from the monotone energy sweep (see
  :func:`perorb.minimax_engine.struwe_sweep`).

Every candidate is polished by root-finding on the discrete stationarity
equations and re-verified independently against the Euler-Lagrange flow.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .action import (
    DescentOptions,
    FunctionalContext,
    Termination,
    action,
    differential,
    gradient,
)
from .action import descend as _descend
from .critical_values import WitnessSearchOptions, argmax_potential, witness_negative_action
from .errors import (
    BadParameters,
    ClaimViolated,
    DivergenceBelowCu,
    LoopLeavesChart,
    NoWitness,
    RadiusTooLarge,
    TruncationInfeasible,
    ZeroWinding,
)
from .geometry import (
    DiscreteLoop,
    TangentVector,
    constant_loop,
    loop_length,
    make_loop,
    resample_loop,
    sobolev_inner,
)
from .lagrangian import BoundsEstimate, TonelliModel, TrigSeries
from .minimax_engine import (
    FixedSet,
    MinimaxFlag,
    MinimaxPath,
    MinimaxReport,
    MountainPassOptions,
    mountain_pass,
    path_from_endpoints,
)
from .parallel import fanout
from .verify import VerificationReport, VerifyTolerances, verify_orbit


class LoopObjective:
    """The free-period action as a domain for the minimax engine."""

    def __init__(self, ctx: FunctionalContext):
        self.ctx = ctx

    def value(self, loop: DiscreteLoop) -> float:
        return action(self.ctx, loop)

    def gradient(self, loop: DiscreteLoop) -> tuple[TangentVector, float]:
        return gradient(self.ctx, loop)

    def move(self, loop: DiscreteLoop, tv: TangentVector, h: float) -> DiscreteLoop:
        return loop.with_updates(q=loop.q + h * tv.xi, T=max(loop.T + h * tv.tau, self.ctx.T_floor))

    def inner(self, loop: DiscreteLoop, a: TangentVector, b: TangentVector) -> float:
        return sobolev_inner(loop, a, b)

    def dist(self, l1: DiscreteLoop, l2: DiscreteLoop) -> float:
        diff = TangentVector(xi=l1.q - l2.q, tau=l1.T - l2.T)
        return math.sqrt(max(sobolev_inner(l1, diff, diff), 0.0))

    def interp(self, l1: DiscreteLoop, l2: DiscreteLoop, t: float) -> DiscreteLoop:
        if np.any(l1.k != l2.k):
            raise BadParameters("cannot interpolate loops in different winding classes")
        return DiscreteLoop(
            q=(1.0 - t) * l1.q + t * l2.q,
            T=max((1.0 - t) * l1.T + t * l2.T, self.ctx.T_floor),
            k=l1.k,
        )

    def coord(self, loop: DiscreteLoop) -> float:
        return loop.T

    def sobolev_size(self, loop: DiscreteLoop) -> float:
        tv = TangentVector(xi=loop.q - np.mean(loop.q, axis=0), tau=0.0)
        return math.sqrt(max(sobolev_inner(loop, tv, tv), 0.0))


class Provenance(str, enum.Enum):
    CLASS_MIN = "ClassMin"
    MOUNTAIN_PASS = "MountainPass"
    STRUWE_SWEEP = "StruweSweep"
    TWO_LYAPUNOV = "TwoLyapunov"


@dataclass
class OrbitCandidate:
    loop: DiscreteLoop
    kappa: float
    action: float
    grad_norm: float
    provenance: Provenance
    verification: VerificationReport | None = None

    def to_dict(self) -> dict:
        return {
            "loop": self.loop.to_dict(),
            "kappa": self.kappa,
            "action": self.action,
            "grad_norm": self.grad_norm,
            "provenance": self.provenance.value,
            "verification": self.verification.to_dict() if self.verification else None,
        }


# ---------------------------------------------------------------------------
# stationarity polish
# ---------------------------------------------------------------------------


def polish_stationary(
    ctx: FunctionalContext, loop: DiscreteLoop, max_nfev: int | None = None
) -> DiscreteLoop:
    """Drive the discrete stationarity equations to a root near the loop.

    Levenberg-Marquardt on the covector data (loop part and period part);
    tolerant of the near-null directions that reparametrization and
    translation symmetries leave in the Jacobian.  Falls back to the input
    loop when the solve does not improve the residual.
    """
    N, n = loop.N, loop.n

    def residual(z: np.ndarray) -> np.ndarray:
        cand = loop.with_updates(q=z[:-1].reshape(N, n), T=max(z[-1], ctx.T_floor))
        dual = differential(ctx, cand)
        return np.concatenate([dual.xi.ravel() / N, [dual.tau]])

    z0 = np.concatenate([loop.q.ravel(), [loop.T]])
    if max_nfev is None:
        max_nfev = 40 * (z0.size + 1)  # finite-difference Jacobians cost z0.size evals each
    try:
        sol = optimize.least_squares(
            residual, z0, method="lm", max_nfev=max_nfev, xtol=1e-14, ftol=1e-14, gtol=1e-14
        )
    except Exception:
        return loop
    before = float(np.linalg.norm(residual(z0)))
    after = float(np.linalg.norm(sol.fun))
    if not np.isfinite(after) or after >= before or sol.x[-1] <= ctx.T_floor:
        return loop
    return loop.with_updates(q=sol.x[:-1].reshape(N, n), T=float(sol.x[-1]))


# ---------------------------------------------------------------------------
# class minimization (kappa above the c_u bracket)
# ---------------------------------------------------------------------------


def winding_seed_loops(
    model: TonelliModel,
    kappa: float,
    winding: np.ndarray,
    N: int,
    count: int,
    rng: np.random.Generator,
) -> list[DiscreteLoop]:
    """Straight lifts in the class plus Fourier noise, periods near l/sqrt(2k)."""
    n = model.n
    ell = float(np.linalg.norm(winding))
    T_guess = ell / math.sqrt(2.0 * max(kappa, 1e-3))
    s = np.arange(N) / N
    seeds = []
    for i in range(count):
        base = rng.random(n) if i else np.zeros(n)
        pts = base + np.outer(s, winding.astype(float))
        if i:
            amp = rng.uniform(0.0, 0.1, size=n)
            phase = rng.uniform(0.0, 2.0 * np.pi, size=n)
            pts = pts + amp * np.sin(2.0 * np.pi * s[:, None] + phase)
        T = T_guess * float(rng.uniform(0.6, 1.6)) if i else T_guess
        seeds.append(make_loop(np.mod(pts, 1.0), T))
    return seeds


def minimize_in_class(
    model: TonelliModel,
    kappa: float,
    winding,
    seeds: int = 8,
    N: int = 128,
    bounds: BoundsEstimate | None = None,
    cu_upper_hint: float | None = None,
    opts: DescentOptions | None = None,
    seed: int = 0,
) -> OrbitCandidate:
    """Action minimizer in a non-trivial winding class.

    The winding is preserved automatically along descent, the period
    stays inside a bracket (short periods blow the action up when the
    class is non-trivial), and the best of the multi-seed runs is
    polished and returned.
    """
    winding = np.asarray(winding, dtype=int)
    if not np.any(winding != 0):
        raise ZeroWinding("class minimization needs a non-zero winding vector")
    if cu_upper_hint is not None and kappa <= cu_upper_hint:
        warnings.warn(
            f"kappa={kappa:.6g} is not above the c_u bracket ({cu_upper_hint:.6g}); "
            "minimization may diverge",
            stacklevel=2,
        )
    from .lagrangian import estimate_bounds

    if bounds is None:
        bounds = estimate_bounds(model)
    ctx = FunctionalContext(model=model, kappa=kappa, bounds=bounds)
    opts = opts or DescentOptions(max_iters=2000, grad_tol=1e-9)
    rng = np.random.default_rng(seed)
    pool = winding_seed_loops(model, kappa, winding, N, seeds, rng)

    def run(loop: DiscreteLoop):
        try:
            return _descend(ctx, loop, opts)
        except Exception:
            return None

    results = [r for r in fanout(run, pool) if r is not None]
    if not results:
        raise BadParameters("all descents failed in the winding class")
    diverged = [r for r in results if r.termination == Termination.PERIOD_DIVERGED]
    finished = [r for r in results if r.termination == Termination.CRITICAL_POINT]
    if not finished:
        if diverged and (cu_upper_hint is None or kappa < cu_upper_hint):
            raise DivergenceBelowCu(
                f"periods exceeded the ceiling at kappa={kappa:.6g}; "
                "the energy is likely below c_u"
            )
        raise BadParameters("no descent reached a critical point; increase max_iters")

    best = min(finished, key=lambda r: action(ctx, r.loop))
    loop = polish_stationary(ctx, best.loop)
    if not (100.0 * ctx.T_floor < loop.T < opts.T_ceiling):
        raise BadParameters(f"minimizer period {loop.T:.3e} escaped the trusted bracket")
    _, gnorm = gradient(ctx, loop)
    return OrbitCandidate(
        loop=loop,
        kappa=kappa,
        action=action(ctx, loop),
        grad_norm=gnorm,
        provenance=Provenance.CLASS_MIN,
    )


# ---------------------------------------------------------------------------
# isoperimetric constants of the low-energy range
# ---------------------------------------------------------------------------


def lower_bound_a(
    bounds: BoundsEstimate, kappa: float, e0: float, r: float, r0: float = 0.4
) -> tuple[float, float]:
    """Critical radius r1 and the level bound a of the mountain-pass range.

    r1 = min(r0, sqrt(L0 (kappa - e0)) / Theta) and
    a = r (sqrt(L0 (kappa - e0)) - Theta r), positive for 0 < r < r1.
    """
    if kappa <= e0:
        raise BadParameters("the level bound needs kappa > e0")
    if not 0.0 < r0 < 0.5:
        raise BadParameters("chart radius r0 must lie in (0, 1/2)")
    root = math.sqrt(bounds.L0 * (kappa - e0))
    r1 = r0 if bounds.Theta == 0.0 else min(r0, root / bounds.Theta)
    if not 0.0 < r < r1:
        raise RadiusTooLarge(f"need 0 < r < r1 = {r1:.6g}, got {r:.6g}")
    a = r * (root - bounds.Theta * r)
    return r1, a


@dataclass
class LengthCheckRecord:
    length: float
    r1: float
    margin: float


def negative_length_check(
    ctx: FunctionalContext, loop: DiscreteLoop, e0: float, r0: float = 0.4
) -> LengthCheckRecord:
    """Negative-action loops must be longer than the critical radius r1.

    A failure indicates a bug or miscalibrated growth constants and is
    fatal (ClaimViolated).
    """
    S = action(ctx, loop)
    if S >= 0.0:
        raise BadParameters(f"loop action {S:.6g} is not negative")
    if ctx.kappa <= e0:
        raise BadParameters("the length bound needs kappa > e0")
    root = math.sqrt(ctx.bounds.L0 * (ctx.kappa - e0))
    r1 = r0 if ctx.bounds.Theta == 0.0 else min(r0, root / ctx.bounds.Theta)
    ell = loop_length(loop)
    if ell <= r1:
        raise ClaimViolated(
            f"negative-action loop of length {ell:.6g} <= r1 = {r1:.6g}; "
            "bounds are miscalibrated or the action is wrong"
        )
    return LengthCheckRecord(length=ell, r1=r1, margin=ell - r1)


@dataclass
class IsoperimetricRecord:
    line_integral: float
    bound: float
    margin: float
    length: float


def isoperimetric_check(
    theta: tuple[TrigSeries, ...],
    chart_radius: float,
    loop: DiscreteLoop,
    dtheta_max: float | None = None,
    grid_resolution: int = 256,
) -> IsoperimetricRecord:
    """Assert |loop integral of theta| <= (max|dtheta|/4) length^2 in a chart.

    The line integral uses midpoint quadrature; the bound carries an
    O(N^-2) quadrature slack.  The loop must stay inside a ball of the
    given radius (< 1/2, so it lies in a single torus chart).
    """
    if not 0.0 < chart_radius < 0.5:
        raise BadParameters("chart radius must lie in (0, 1/2)")
    center = np.mean(loop.q, axis=0)
    radii = np.linalg.norm(loop.q - center, axis=1)
    if float(np.max(radii)) > chart_radius:
        raise LoopLeavesChart(
            f"sample at distance {float(np.max(radii)):.6g} from the chart center "
            f"(radius {chart_radius:.6g})"
        )
    n = loop.n
    if dtheta_max is None:
        from .lagrangian import _torus_grid

        grid = _torus_grid(n, grid_resolution)
        jac = np.stack([c.grad(grid) for c in theta], axis=-2)
        B = np.swapaxes(jac, -1, -2) - jac
        dtheta_max = float(np.max(np.linalg.norm(B, ord=2, axis=(-2, -1)), initial=0.0))

    m = loop.midpoints()
    gaps = loop.gaps()
    theta_m = np.stack([c.value(m) for c in theta], axis=-1)
    line_integral = float(np.sum(theta_m * gaps))
    ell = loop_length(loop)
    bound = 0.25 * dtheta_max * ell * ell + 10.0 / (loop.N * loop.N)
    if abs(line_integral) > bound:
        raise ClaimViolated(
            f"|loop integral| = {abs(line_integral):.6g} exceeds the bound {bound:.6g}"
        )
    return IsoperimetricRecord(
        line_integral=line_integral, bound=bound, margin=bound - abs(line_integral), length=ell
    )


# ---------------------------------------------------------------------------
# mountain pass on (e0, c_u)
# ---------------------------------------------------------------------------


@dataclass
class MountainPassOrbitOptions:
    N: int = 128
    nodes: int = 25
    r: float | None = None  # radius for the level bound; default r1/2
    r0: float = 0.4
    grad_tol: float = 5e-3  # classification only; candidates are polished and re-verified
    max_sweeps: int = 400
    T_ceiling: float = 200.0
    size_ceiling: float = 50.0
    verify_tolerances: VerifyTolerances = field(default_factory=VerifyTolerances)
    polish: bool = True
    witness: WitnessSearchOptions = field(default_factory=WitnessSearchOptions)
    seed: int = 0


def build_pass_path(
    objective: LoopObjective,
    witness: DiscreteLoop,
    x_star: np.ndarray,
    trunc_level: float,
    kappa: float,
    e0: float,
    nodes: int,
    N: int,
) -> MinimaxPath:
    """Path of the mountain-pass class: frozen tiny constant loop to witness.

    The constant endpoint's period is chosen so small that its action
    T (kappa - e0) sits below the truncation level; the witness endpoint
    has negative action.  Both are therefore fixed points of the
    truncated flow.
    """
    if kappa <= e0:
        raise BadParameters("mountain-pass geometry needs kappa > e0")
    T0 = min(0.5 * trunc_level / (kappa - e0), witness.T)
    start = constant_loop(x_star, T0, N)
    wit = resample_loop(witness, N)
    path = path_from_endpoints(
        objective,
        start,
        wit,
        nodes,
        start_policy=FixedSet(predicate=lambda lp: objective.value(lp) <= trunc_level),
        end_policy=FixedSet(predicate=lambda lp: objective.value(lp) < 0.0),
    )
    return path


def mountain_pass_orbit(
    model: TonelliModel,
    kappa: float,
    e0: float,
    bounds: BoundsEstimate | None = None,
    witness: DiscreteLoop | None = None,
    opts: MountainPassOrbitOptions | None = None,
) -> tuple[MinimaxReport, OrbitCandidate | None]:
    """Mountain pass between the constant loops and the negative sublevel.

    Runs the truncated deformation on a path from a frozen constant loop
    to a negative-action witness, checks the minimax estimate against the
    certified level bound a, and, when the argmax carries a small
    gradient, polishes and independently verifies the orbit.
    """
    opts = opts or MountainPassOrbitOptions()
    from .lagrangian import estimate_bounds

    if bounds is None:
        bounds = estimate_bounds(model)
    if kappa <= e0:
        raise BadParameters(f"kappa={kappa:.6g} must exceed the e0 estimate {e0:.6g}")
    ctx = FunctionalContext(model=model, kappa=kappa, bounds=bounds)
    if witness is None:
        witness = witness_negative_action(
            ctx, opts=opts.witness, rng=np.random.default_rng(opts.seed)
        )
        if witness is None:
            raise NoWitness(f"no negative-action contractible loop found at kappa={kappa:.6g}")
    if np.any(witness.k != 0):
        raise BadParameters("the witness must be contractible")
    w_action = action(ctx, witness)
    if w_action >= 0.0:
        raise NoWitness(f"provided witness has non-negative action {w_action:.6g}")

    root = math.sqrt(bounds.L0 * (kappa - e0))
    r1 = opts.r0 if bounds.Theta == 0.0 else min(opts.r0, root / bounds.Theta)
    r = opts.r if opts.r is not None else 0.5 * r1
    _, a = lower_bound_a(bounds, kappa, e0, r, opts.r0)
    trunc = 0.5 * a
    if not w_action < trunc:
        raise TruncationInfeasible(
            f"witness action {w_action:.6g} does not sit below the truncation level {trunc:.6g}"
        )

    objective = LoopObjective(ctx)
    x_star = argmax_potential(model)
    path = build_pass_path(objective, witness, x_star, trunc, kappa, e0, opts.nodes, opts.N)

    mp_opts = MountainPassOptions(
        max_sweeps=opts.max_sweeps,
        grad_tol=opts.grad_tol,
        trunc_level=trunc,
        escape=lambda lp: lp.T > opts.T_ceiling or objective.sobolev_size(lp) > opts.size_ceiling,
        coord=objective.coord,
    )
    report = mountain_pass(objective, path, mp_opts)
    if report.c_estimate < a - 1e-6:
        raise ClaimViolated(
            f"minimax estimate {report.c_estimate:.6g} fell below the certified level "
            f"bound {a:.6g}"
        )

    candidate = None
    if report.ps_flag == MinimaxFlag.CANDIDATE_FOUND:
        loop = report.argmax
        if opts.polish:
            loop = polish_stationary(ctx, loop)
        _, gnorm = gradient(ctx, loop)
        verification = verify_orbit(
            model, loop, kappa, tolerances=opts.verify_tolerances, bounds=bounds
        )
        candidate = OrbitCandidate(
            loop=loop,
            kappa=kappa,
            action=action(ctx, loop),
            grad_norm=gnorm,
            provenance=Provenance.MOUNTAIN_PASS,
            verification=verification,
        )
    return report, candidate


def zeta_path_factory(
    model: TonelliModel,
    bounds: BoundsEstimate,
    e0: float,
    witness_corpus: list[DiscreteLoop],
    nodes: int,
    N: int,
    r0: float = 0.4,
):
    """Factory of mountain-pass paths for the energy sweep.

    For each kappa, picks the stored witness whose period-optimized action
    is most negative, rebuilds the frozen endpoints, and re-uses the
    previous deformed interior when one is supplied.
    """
    from .action import best_period_action

    x_star = argmax_potential(model)

    def factory(kappa: float, warm_nodes: list | None):
        ctx = FunctionalContext(model=model, kappa=kappa, bounds=bounds)
        objective = LoopObjective(ctx)
        best, best_val = None, np.inf
        for stored in witness_corpus:
            value, T_best = best_period_action(ctx, stored)
            if value < best_val:
                best, best_val = stored.with_updates(T=T_best), value
        if best is None or best_val >= 0.0:
            raise NoWitness(f"no stored witness stays negative at kappa={kappa:.6g}")
        root = math.sqrt(bounds.L0 * (kappa - e0))
        r1 = r0 if bounds.Theta == 0.0 else min(r0, root / bounds.Theta)
        _, a = lower_bound_a(bounds, kappa, e0, 0.5 * r1, r0)
        trunc = 0.5 * a
        path = build_pass_path(objective, best, x_star, trunc, kappa, e0, nodes, N)
        if warm_nodes is not None and len(warm_nodes) == nodes:
            interior = [
                lp for lp in warm_nodes[1:-1] if objective.value(lp) > trunc
            ]
            if len(interior) == nodes - 2:
                path.nodes[1:-1] = interior
                path.node_values = []
        return path, trunc

    return factory
