"""Discretized-path minimax over any objective with a gradient oracle.

A minimax path is a chain of points in the objective's domain (a string
of nodes).  Deformation sweeps advance each node along the truncated,
normalized negative gradient with a line search, keep the endpoints on
their prescribed sets, and redistribute the nodes by arclength so the
resolution stays near the pass.  The path maximum never increases, nodes
below the truncation level never move, and the minimax estimate is
refined by a one-dimensional maximization along each segment of the
final path.

The engine is domain-agnostic: objectives expose value / gradient / move
/ inner / dist / interp (see :class:`EuclideanObjective` for the plain
vector-space case; loop-space objectives live in :mod:`perorb.orbits`).
Escape of the argmax (the signature of a Palais-Smale failure) is
detected through an injected monitor, because what "running away" means
is domain-specific: coordinates sliding to infinity for functions on the
plane, periods or Sobolev norms blowing up for loops.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from scipy import optimize

from .errors import BadParameters, EmptyInterval, TruncationAboveMax


# ---------------------------------------------------------------------------
# objectives
# ---------------------------------------------------------------------------


class EuclideanObjective:
    """Adapter for a smooth function on R^d with an explicit gradient."""

    def __init__(self, f: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray]):
        self.f = f
        self._grad = grad

    def value(self, p: np.ndarray) -> float:
        return float(self.f(np.asarray(p, dtype=float)))

    def gradient(self, p: np.ndarray) -> tuple[np.ndarray, float]:
        g = np.asarray(self._grad(np.asarray(p, dtype=float)), dtype=float)
        return g, float(np.linalg.norm(g))

    def move(self, p: np.ndarray, tangent: np.ndarray, h: float) -> np.ndarray:
        return np.asarray(p, dtype=float) + h * tangent

    def inner(self, p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.dot(np.ravel(a), np.ravel(b)))

    def dist(self, p1: np.ndarray, p2: np.ndarray) -> float:
        return float(np.linalg.norm(np.asarray(p1) - np.asarray(p2)))

    def interp(self, p1: np.ndarray, p2: np.ndarray, t: float) -> np.ndarray:
        return (1.0 - t) * np.asarray(p1, dtype=float) + t * np.asarray(p2, dtype=float)


# ---------------------------------------------------------------------------
# paths and endpoint policies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Free:
    """Endpoint moves with the flow like any interior node."""


@dataclass(frozen=True)
class FixedSet:
    """Endpoint constrained to a set: predicate to check, projection to re-impose."""

    predicate: Callable[[object], bool]
    projection: Callable[[object], object] = staticmethod(lambda p: p)


EndpointPolicy = Free | FixedSet


@dataclass
class MinimaxPath:
    """Ordered chain of domain points subject to truncated-flow deformation."""

    nodes: list
    start_policy: EndpointPolicy = field(default_factory=Free)
    end_policy: EndpointPolicy = field(default_factory=Free)
    history: list[float] = field(default_factory=list)
    node_values: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.nodes)


def path_from_endpoints(objective, a, b, count: int, start_policy=None, end_policy=None) -> MinimaxPath:
    """Linear interpolation between two domain points."""
    if count < 3:
        raise BadParameters("a path needs at least 3 nodes")
    ts = np.linspace(0.0, 1.0, count)
    nodes = [objective.interp(a, b, float(t)) for t in ts]
    return MinimaxPath(
        nodes=nodes,
        start_policy=start_policy or Free(),
        end_policy=end_policy or Free(),
    )


@dataclass
class DeformOptions:
    step_init: float = 0.2
    step_growth: float = 1.5
    step_shrink: float = 0.5
    step_max: float = 1.0
    step_min: float = 1e-14
    armijo: float = 1e-4
    redistribute: bool = True
    refine_samples: int = 16


def _policy_for(path: MinimaxPath, index: int) -> EndpointPolicy | None:
    if index == 0:
        return path.start_policy
    if index == len(path.nodes) - 1:
        return path.end_policy
    return None


def _line_search_node(objective, point, value, opts: DeformOptions, h0: float, b: float | None):
    """One normalized negative-gradient step with Armijo backtracking.

    The truncated flow never crosses below the level b: a step that would
    jump past it is bisected to land essentially at the level, after which
    the node is a fixed point of the flow.  Returns (new_point, new_value,
    step, moved).
    """
    grad, norm = objective.gradient(point)
    if norm == 0.0:
        return point, value, h0, False
    denom = math.sqrt(norm * norm + 1.0)
    direction = _scale_tangent(grad, -1.0 / denom)
    slope = norm * norm / denom
    h = min(h0 * opts.step_growth, opts.step_max)
    while h >= opts.step_min:
        cand = objective.move(point, direction, h)
        v = objective.value(cand)
        if v <= value - opts.armijo * h * slope:
            if b is not None and v < b:
                cand, v, h = _land_on_level(objective, point, direction, h, v, b)
            return cand, v, h, True
        h *= opts.step_shrink
    return point, value, h0, False


def _land_on_level(objective, point, direction, h_over, v_over, b: float):
    """Bisect the step length so the node lands just below the level b."""
    tol = 1e-9 * max(1.0, abs(b))
    lo, hi = 0.0, h_over
    cand, v = objective.move(point, direction, h_over), v_over
    for _ in range(60):
        if b - tol <= v <= b:
            break
        mid = 0.5 * (lo + hi)
        cand_mid = objective.move(point, direction, mid)
        v_mid = objective.value(cand_mid)
        if v_mid < b - tol:
            hi = mid
        else:
            lo, cand, v = mid, cand_mid, v_mid
            if v <= b:
                break
    if v > b:  # numerical corner: accept the overshooting step
        return objective.move(point, direction, h_over), v_over, h_over
    return cand, v, max(lo, 1e-12)


def _scale_tangent(tangent, a: float):
    if hasattr(tangent, "scaled"):
        return tangent.scaled(a)
    return a * np.asarray(tangent, dtype=float)


def _sample_chain(objective, nodes: list, positions: np.ndarray, cum: np.ndarray) -> list:
    """Points of the PL path at the given arclength positions."""
    out = []
    seg = 0
    last = len(nodes) - 2
    for target in positions:
        while seg < last and cum[seg + 1] < target:
            seg += 1
        width = cum[seg + 1] - cum[seg]
        t = 0.0 if width <= 0.0 else min(max((target - cum[seg]) / width, 0.0), 1.0)
        out.append(objective.interp(nodes[seg], nodes[seg + 1], float(t)))
    return out


def _redistribute(objective, nodes: list, values: list[float], trunc_level: float | None):
    """Resample nodes along the PL path to prevent clustering.

    Without truncation the spacing is uniform in arclength.  With
    truncation active, a fixed share of the nodes is always allocated to
    the window spanning the above-level region: the sublevel tails can
    grow without bound and would otherwise starve the pass of resolution,
    while nodes that settle at the level must keep being replaced by
    fresh interior samples.  Every new node lies on the existing path, so
    the path maximum is never exceeded.
    """
    count = len(nodes)
    dists = [objective.dist(nodes[i], nodes[i + 1]) for i in range(count - 1)]
    total = sum(dists)
    if total <= 0.0:
        return nodes, values
    cum = np.concatenate([[0.0], np.cumsum(dists)])

    if trunc_level is None:
        positions = np.linspace(0.0, total, count)[1:-1]
        new_nodes = [nodes[0]] + _sample_chain(objective, nodes, positions, cum) + [nodes[-1]]
        new_values = [values[0]] + [objective.value(p) for p in new_nodes[1:-1]] + [values[-1]]
        return new_nodes, new_values

    active = [i for i, v in enumerate(values) if v > trunc_level]
    if not active:
        return nodes, values
    i0 = max(active[0] - 1, 0)
    i1 = min(active[-1] + 1, count - 1)
    s_lo, s_hi = cum[i0], cum[i1]
    interior = count - 2
    m_act = min(interior, max(int(math.ceil(0.6 * interior)), min(interior, 8)))
    m_tail = interior - m_act
    tail_lo_len = s_lo
    tail_hi_len = total - s_hi
    tail_total = tail_lo_len + tail_hi_len
    if tail_total <= 0.0:
        m_lo = m_hi = 0
        m_act = interior
    else:
        m_lo = int(round(m_tail * tail_lo_len / tail_total))
        m_hi = m_tail - m_lo
    positions = np.concatenate(
        [
            np.linspace(0.0, s_lo, m_lo + 2)[1:-1] if m_lo else np.empty(0),
            np.linspace(s_lo, s_hi, m_act + 2)[1:-1],
            np.linspace(s_hi, total, m_hi + 2)[1:-1] if m_hi else np.empty(0),
        ]
    )
    new_nodes = [nodes[0]] + _sample_chain(objective, nodes, positions, cum) + [nodes[-1]]
    new_values = [values[0]] + [objective.value(p) for p in new_nodes[1:-1]] + [values[-1]]
    return new_nodes, new_values


def deform(
    path: MinimaxPath,
    objective,
    trunc_level: float | None,
    sweeps: int = 1,
    opts: DeformOptions | None = None,
    step_state: dict | None = None,
) -> MinimaxPath:
    """Advance every node along the truncated normalized negative gradient.

    Nodes at or below the truncation level are fixed points of the flow
    and move only by redistribution.  The maximum over nodes never
    increases: redistribution is reverted whenever interpolation would
    push a node above the pre-sweep maximum.
    """
    opts = opts or DeformOptions()
    nodes = list(path.nodes)
    values = path.node_values or [objective.value(p) for p in nodes]
    values = list(values)
    history = list(path.history)
    steps = step_state if step_state is not None else {}

    for _ in range(sweeps):
        current_max = max(values)
        if trunc_level is not None and trunc_level >= current_max:
            raise TruncationAboveMax(
                f"truncation level {trunc_level:.6g} is not below the path maximum {current_max:.6g}"
            )
        moved_any = False
        for i, point in enumerate(nodes):
            if trunc_level is not None and values[i] <= trunc_level:
                continue
            h0 = steps.get(i, opts.step_init)
            new_point, new_value, h_used, moved = _line_search_node(
                objective, point, values[i], opts, h0, trunc_level
            )
            steps[i] = h_used
            policy = _policy_for(path, i)
            if moved and isinstance(policy, FixedSet):
                new_point = policy.projection(new_point)
                new_value = objective.value(new_point)
                if not policy.predicate(new_point) or new_value > values[i]:
                    continue  # keep the old endpoint rather than leave its set
            if moved:
                nodes[i], values[i] = new_point, new_value
                moved_any = True

        if moved_any and opts.redistribute:
            # node moves only lower values; the sampled max can drop below the
            # true path max when nodes slide off the pass, and redistribution
            # restores resolution there.  New nodes lie on the existing
            # piecewise-linear path, so its maximum is never exceeded.
            nodes, values = _redistribute(objective, nodes, values, trunc_level)
        history.append(max(values))

    return replace(path, nodes=nodes, node_values=values, history=history)


def refine_path_max(path: MinimaxPath, objective, samples: int = 16):
    """Maximum of the objective over the PL path, refined within segments.

    The node maximum under-resolves a pass that falls between nodes; a
    bounded 1-d maximization along the best segments recovers it.
    Returns (value, point).
    """
    nodes = path.nodes
    values = path.node_values or [objective.value(p) for p in nodes]
    best_val = max(values)
    best_point = nodes[int(np.argmax(values))]

    seg_scores = []
    for i in range(len(nodes) - 1):
        ts = np.linspace(0.0, 1.0, samples + 1)
        vals = [objective.value(objective.interp(nodes[i], nodes[i + 1], float(t))) for t in ts]
        seg_scores.append((max(vals), i))
    seg_scores.sort(reverse=True)

    for _, i in seg_scores[:3]:
        res = optimize.minimize_scalar(
            lambda t: -objective.value(objective.interp(nodes[i], nodes[i + 1], float(t))),
            bounds=(0.0, 1.0),
            method="bounded",
            options={"xatol": 1e-12},
        )
        if -res.fun > best_val:
            best_val = float(-res.fun)
            best_point = objective.interp(nodes[i], nodes[i + 1], float(res.x))
    return best_val, best_point


# ---------------------------------------------------------------------------
# mountain pass
# ---------------------------------------------------------------------------


class MinimaxFlag(str, enum.Enum):
    CANDIDATE_FOUND = "CandidateFound"
    PS_ESCAPE = "PSEscape"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class MountainPassOptions:
    max_sweeps: int = 300
    grad_tol: float = 1e-2
    stall_rtol: float = 1e-4
    stall_atol: float = 1e-9
    patience: int = 10
    trunc_level: float | None = None
    escape: Callable[[object], bool] | None = None
    coord: Callable[[object], float] | None = None
    deform: DeformOptions = field(default_factory=DeformOptions)


@dataclass
class MinimaxReport:
    c_estimate: float
    argmax: object
    grad_norm: float
    ps_flag: MinimaxFlag
    escape_trace: list[tuple[int, float, float | None]] = field(default_factory=list)
    sweeps: int = 0
    path: MinimaxPath | None = None


def mountain_pass(objective, path: MinimaxPath, opts: MountainPassOptions | None = None) -> MinimaxReport:
    """Deform the path until the minimax level stabilizes, then classify.

    The argmax of the final path either carries a small gradient (a
    critical-point candidate at the minimax level), or it escapes through
    the injected monitor while the gradient still vanishes -- the
    Palais-Smale failure mode -- or the run is inconclusive.
    """
    opts = opts or MountainPassOptions()
    values = [objective.value(p) for p in path.nodes]
    c_prev = max(values)
    if not (values[0] < c_prev and values[-1] < c_prev):
        raise BadParameters("endpoints must start strictly below the path maximum")
    path = replace(path, node_values=values)

    trace: list[tuple[int, float, float | None]] = []
    steps: dict = {}
    streak = 0
    sweep = 0
    escaped = False
    for sweep in range(1, opts.max_sweeps + 1):
        path = deform(path, objective, opts.trunc_level, 1, opts.deform, steps)
        c = path.history[-1]
        arg = path.nodes[int(np.argmax(path.node_values))]
        coord = opts.coord(arg) if opts.coord else None
        trace.append((sweep, c, coord))
        if opts.escape is not None and opts.escape(arg):
            escaped = True
            break
        if abs(c_prev - c) <= max(opts.stall_atol, opts.stall_rtol * abs(c)):
            streak += 1
            if streak >= opts.patience:
                break
        else:
            streak = 0
        c_prev = c

    c_refined, argmax = refine_path_max(path, objective, opts.deform.refine_samples)
    _, grad_norm = objective.gradient(argmax)
    if opts.escape is not None and (escaped or opts.escape(argmax)):
        flag = MinimaxFlag.PS_ESCAPE
    elif grad_norm < opts.grad_tol:
        flag = MinimaxFlag.CANDIDATE_FOUND
    else:
        flag = MinimaxFlag.INCONCLUSIVE
    return MinimaxReport(
        c_estimate=c_refined,
        argmax=argmax,
        grad_norm=grad_norm,
        ps_flag=flag,
        escape_trace=trace,
        sweeps=sweep,
        path=path,
    )


# ---------------------------------------------------------------------------
# monotone sweep in the energy parameter (Struwe argument, discretized)
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    kappa: float
    c_estimate: float
    argmax_coord: float | None
    grad_norm: float
    ps_flag: MinimaxFlag


@dataclass
class StruweResult:
    rows: list[SweepRow]
    kappa_bar: float | None
    quotient: float | None
    period_cap: float | None
    report_at_bar: MinimaxReport | None
    candidates: list


def struwe_sweep(
    family: Callable[[float], object],
    gamma_factory: Callable[[float, list | None], tuple[MinimaxPath, float | None]],
    kappa_grid: Sequence[float],
    interval: tuple[float, float],
    opts: MountainPassOptions | None = None,
    quotient_bound: float = 50.0,
) -> StruweResult:
    """Minimax levels c(kappa) across a grid, plus extraction at a regular point.

    The grid is swept in increasing order with warm-started paths.  The
    reported levels are made weakly increasing by a backward pass: a
    deformed path obtained at a higher energy is an admissible competitor
    at every lower energy (its endpoint actions only decrease), so c at
    kappa_j is the minimum over later paths of their maximum at kappa_j.
    A level kappa_bar whose forward difference quotient is bounded by
    ``quotient_bound`` is selected (the discrete stand-in for a point of
    linear modulus of continuity); there a mountain pass runs with the
    period capped at quotient + 2, and the bounded near-critical points
    are returned as candidates.
    """
    opts = opts or MountainPassOptions()
    lo, hi = interval
    if not lo < hi:
        raise EmptyInterval(f"energy interval ({lo:.6g}, {hi:.6g}) is empty")
    grid = sorted(float(k) for k in kappa_grid)
    if grid and (grid[0] <= lo or grid[-1] >= hi):
        raise BadParameters("kappa grid must lie strictly inside the interval")

    paths: list[MinimaxPath] = []
    objectives = []
    warm: list | None = None
    for kappa in grid:
        objective = family(kappa)
        path, trunc = gamma_factory(kappa, warm)
        sub_opts = replace(opts, trunc_level=trunc)
        report = mountain_pass(objective, path, sub_opts)
        paths.append(report.path)
        objectives.append(objective)
        warm = report.path.nodes

    # backward min-pass: evaluate every later path at each kappa
    rows: list[SweepRow] = []
    maxima = np.full((len(grid), len(grid)), np.inf)  # maxima[l, j]: path l at kappa j
    for l, path in enumerate(paths):
        for j in range(l + 1):
            vals = [objectives[j].value(p) for p in path.nodes]
            maxima[l, j] = max(vals)
    for j, kappa in enumerate(grid):
        col = maxima[j:, j]
        l_best = j + int(np.argmin(col))
        c_j = float(col.min())
        vals = [objectives[j].value(p) for p in paths[l_best].nodes]
        arg = paths[l_best].nodes[int(np.argmax(vals))]
        _, gnorm = objectives[j].gradient(arg)
        coord = opts.coord(arg) if opts.coord else None
        flag = MinimaxFlag.CANDIDATE_FOUND if gnorm < opts.grad_tol else MinimaxFlag.INCONCLUSIVE
        rows.append(SweepRow(kappa=kappa, c_estimate=c_j, argmax_coord=coord, grad_norm=gnorm, ps_flag=flag))

    # selection by bounded forward difference quotients
    kappa_bar, quotient = None, None
    best_q = np.inf
    for j in range(len(grid) - 1):
        dq = (rows[j + 1].c_estimate - rows[j].c_estimate) / (grid[j + 1] - grid[j])
        if dq <= quotient_bound and dq < best_q:
            best_q, kappa_bar = dq, grid[j]
    report_at_bar = None
    candidates: list = []
    cap = None
    if kappa_bar is not None:
        quotient = best_q
        cap = max(best_q, 0.0) + 2.0
        objective = family(kappa_bar)
        path, trunc = gamma_factory(kappa_bar, warm)
        coord_fn = opts.coord or (lambda p: 0.0)
        bar_opts = replace(
            opts,
            trunc_level=trunc,
            escape=lambda p: coord_fn(p) > cap,
        )
        report_at_bar = mountain_pass(objective, path, bar_opts)
        if coord_fn(report_at_bar.argmax) <= cap:
            candidates.append(report_at_bar.argmax)
    return StruweResult(
        rows=rows,
        kappa_bar=kappa_bar,
        quotient=quotient,
        period_cap=cap,
        report_at_bar=report_at_bar,
        candidates=candidates,
    )


# ---------------------------------------------------------------------------
# two Lyapunov functions flow
# ---------------------------------------------------------------------------


def smoothstep(x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    return x * x * (3.0 - 2.0 * x)


class FlowOutcomeKind(str, enum.Enum):
    CANDIDATE = "candidate"
    FROZEN = "frozen"
    TRAPPED = "trapped"
    STALLED = "stalled"
    VIOLATION = "violation"
    EXHAUSTED = "exhausted"


@dataclass
class TwoLyapunovOptions:
    kappa_gap: float = 0.0  # kappa_star - kappa_bar, must be positive
    a: float = 1.0  # upper level bound of the region A
    d: float = 1.0  # trap level for the second functional
    T_star: float = 1.0  # period threshold of A
    rho_level: float | None = None  # rho reaches 1 above this level (default a/4)
    grad_tol: float = 1e-6
    max_iters: int = 300
    step_init: float = 0.2
    step_max: float = 2.0
    step_min: float = 1e-14
    armijo: float = 1e-4


@dataclass
class FlowOutcome:
    kind: FlowOutcomeKind
    point: object
    s_bar_trace: list[float]
    s_star_trace: list[float]
    coord_trace: list[float]
    in_A_trace: list[bool]
    period_bound: float | None = None
    message: str = ""


def two_lyapunov_flow(
    obj_bar,
    obj_star,
    seeds: Sequence,
    coord: Callable[[object], float],
    opts: TwoLyapunovOptions,
) -> list[FlowOutcome]:
    """Flow seeds along the combined pseudo-gradient of two action levels.

    The field is W = -rho * (G_bar + chi * (|G_bar|/|G_star|) G_star),
    normalized for completeness; rho vanishes on the non-positive sublevel
    of the first functional and chi is a smoothstep equal to 1 exactly on
    the region A = {coord > T*} and {0 < S_bar < a} (the ramp sits outside
    A, so inside A the Cauchy-Schwarz inequality makes both functionals
    non-increasing).  Entering {S_star < d} certifies the period bound
    coord < d / kappa_gap while S_bar stays positive.
    """
    if opts.kappa_gap <= 0.0:
        raise BadParameters("kappa_star must exceed kappa_bar")
    if opts.T_star <= 0.0 or opts.a <= 0.0 or opts.d <= 0.0:
        raise BadParameters("T_star, a and d must be positive")
    rho_level = opts.rho_level if opts.rho_level is not None else opts.a / 4.0
    bound = opts.d / opts.kappa_gap

    def chi_at(c: float, s_bar: float) -> float:
        up = smoothstep((c - 0.9 * opts.T_star) / (0.1 * opts.T_star))
        low = smoothstep(1.0 + s_bar / (0.1 * opts.a))
        high = smoothstep((1.1 * opts.a - s_bar) / (0.1 * opts.a))
        return up * low * high

    outcomes: list[FlowOutcome] = []
    for seed in seeds:
        point = seed
        s_bar_trace: list[float] = []
        s_star_trace: list[float] = []
        coord_trace: list[float] = []
        in_A_trace: list[bool] = []
        kind = FlowOutcomeKind.EXHAUSTED
        message = ""
        period_bound = None
        h = opts.step_init

        for _ in range(opts.max_iters):
            s_bar = obj_bar.value(point)
            s_star = obj_star.value(point)
            c = coord(point)
            in_A = (c > opts.T_star) and (0.0 < s_bar < opts.a)
            s_bar_trace.append(s_bar)
            s_star_trace.append(s_star)
            coord_trace.append(c)
            in_A_trace.append(in_A)

            if s_star < opts.d and s_bar > 0.0:
                period_bound = bound
                if c > bound + 1e-9:
                    kind = FlowOutcomeKind.VIOLATION
                    message = f"period {c:.6g} exceeds the certified bound {bound:.6g}"
                    break
            if s_bar <= 0.0:
                kind = FlowOutcomeKind.FROZEN
                message = "field vanishes on the non-positive sublevel"
                break
            g_bar, n_bar = obj_bar.gradient(point)
            if n_bar < opts.grad_tol:
                kind = FlowOutcomeKind.CANDIDATE
                message = "gradient below tolerance"
                break

            rho = smoothstep(s_bar / rho_level)
            chi = chi_at(c, s_bar)
            if chi > 0.0:
                g_star, n_star = obj_star.gradient(point)
                if n_star <= 1e-300:
                    combined = g_bar
                else:
                    combined = _add_tangent(g_bar, _scale_tangent(g_star, chi * n_bar / n_star))
            else:
                combined = g_bar
            norm_sq = obj_bar.inner(point, combined, combined)
            denom = math.sqrt(norm_sq + 1.0)
            direction = _scale_tangent(combined, -rho / denom)
            slope = rho * obj_bar.inner(point, g_bar, combined) / denom
            if slope <= 1e-15:
                kind = FlowOutcomeKind.STALLED
                message = "combined field is orthogonal to the first gradient"
                break

            accepted = False
            h = min(h * 1.5, opts.step_max)
            while h >= opts.step_min:
                cand = obj_bar.move(point, direction, h)
                v_bar = obj_bar.value(cand)
                ok = v_bar <= s_bar - opts.armijo * h * slope
                if ok and in_A:
                    ok = obj_star.value(cand) <= s_star + 1e-12
                if ok:
                    accepted = True
                    break
                h *= 0.5
            if not accepted:
                kind = FlowOutcomeKind.STALLED
                message = "no step satisfies both Lyapunov decreases"
                break
            point = cand

        if kind == FlowOutcomeKind.EXHAUSTED and period_bound is not None:
            kind = FlowOutcomeKind.TRAPPED
            message = "trajectory confined to the trap sublevel"
        outcomes.append(
            FlowOutcome(
                kind=kind,
                point=point,
                s_bar_trace=s_bar_trace,
                s_star_trace=s_star_trace,
                coord_trace=coord_trace,
                in_A_trace=in_A_trace,
                period_bound=period_bound,
                message=message,
            )
        )
    return outcomes


def _add_tangent(a, b):
    if hasattr(a, "xi"):
        from .geometry import TangentVector

        return TangentVector(xi=a.xi + b.xi, tau=a.tau + b.tau)
    return np.asarray(a, dtype=float) + np.asarray(b, dtype=float)
