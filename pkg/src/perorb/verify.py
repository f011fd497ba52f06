"""Independent verification of orbit candidates.

Deliberately uses a different discretization than the solvers: candidates
are checked by classical RK4 time integration of the Euler-Lagrange
equations from initial data reconstructed off the loop, so agreement is
evidence rather than a shared bug.  The stationarity identities (discrete
Euler-Lagrange residual and the mean-energy identity for the period
derivative) are evaluated directly on the loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .action import FunctionalContext, differential
from .errors import BadParameters
from .geometry import DiscreteLoop
from .lagrangian import BoundsEstimate, TonelliModel

# placeholder growth constants: the consistency cross-check below only
# evaluates the differential, which never touches the bounds
_UNIT_BOUNDS = BoundsEstimate(L0=0.25, L1=0.0, L2=1.0, L3=0.0, E0=0.5, E1=0.0, Theta=0.0)


@dataclass
class ELTrajectory:
    times: np.ndarray
    xs: np.ndarray  # (steps+1, n)
    vs: np.ndarray  # (steps+1, n)
    energies: np.ndarray
    drift: float  # max |E(t) - E(0)|


def integrate_el(
    model: TonelliModel,
    x0: np.ndarray,
    v0: np.ndarray,
    T: float,
    steps: int = 1000,
) -> ELTrajectory:
    """RK4 integration of x' = v, v' = a(x, v) over [0, T]."""
    if steps < 100:
        raise BadParameters("need at least 100 integration steps")
    x = np.asarray(x0, dtype=float).copy()
    v = np.asarray(v0, dtype=float).copy()
    h = T / steps
    xs = np.empty((steps + 1, x.size))
    vs = np.empty((steps + 1, v.size))
    xs[0], vs[0] = x, v

    rhs = model.el_rhs
    for i in range(steps):
        k1x, k1v = v, rhs(x, v)
        k2x, k2v = v + 0.5 * h * k1v, rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = v + 0.5 * h * k2v, rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = v + h * k3v, rhs(x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        xs[i + 1], vs[i + 1] = x, v

    energies = model.eval_E(xs, vs)
    drift = float(np.max(np.abs(energies - energies[0])))
    times = np.linspace(0.0, T, steps + 1)
    return ELTrajectory(times=times, xs=xs, vs=vs, energies=energies, drift=drift)


@dataclass
class VerifyTolerances:
    closure: float = 1e-3
    energy: float = 1e-3
    el_residual: float = 1e-2
    dT_residual: float = 1e-3


@dataclass
class VerificationReport:
    closure_error: float
    energy_mean: float
    energy_std: float
    el_residual: float
    dT_residual: float
    passed: bool
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "closure_error": self.closure_error,
            "energy_mean": self.energy_mean,
            "energy_std": self.energy_std,
            "el_residual": self.el_residual,
            "dT_residual": self.dT_residual,
            "passed": self.passed,
            "details": self.details,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def initial_data(loop: DiscreteLoop) -> tuple[np.ndarray, np.ndarray]:
    """gamma(0) and gamma'(0) from the lift, 4th-order central differences."""
    q, k, N, T = loop.q, loop.k, loop.N, loop.T
    x0 = q[0]
    xp = (-q[2] + 8.0 * q[1] - 8.0 * (q[N - 1] - k) + (q[N - 2] - k)) * (N / 12.0)
    return x0, xp / T


def loop_velocities(loop: DiscreteLoop) -> np.ndarray:
    """Central-difference curve velocities at the nodes, scaled by 1/T."""
    q_plus = np.roll(loop.q, -1, axis=0).astype(float)
    q_plus[-1] += loop.k
    q_minus = np.roll(loop.q, 1, axis=0).astype(float)
    q_minus[0] -= loop.k
    return (q_plus - q_minus) * (loop.N / (2.0 * loop.T))


def el_residual(model: TonelliModel, loop: DiscreteLoop) -> float:
    """Max norm of the discrete Euler-Lagrange residual at the loop nodes.

    d/dt(d_v L) - d_x L with central differences in time; independent of
    the quadrature used by the action differential.
    """
    v = loop_velocities(loop)
    p = model.dvL(loop.q, v)
    p_plus = np.roll(p, -1, axis=0)
    p_minus = np.roll(p, 1, axis=0)
    dpdt = (p_plus - p_minus) * (loop.N / (2.0 * loop.T))
    residual = dpdt - model.dxL(loop.q, v)
    return float(np.max(np.linalg.norm(residual, axis=1)))


def mean_energy_residual(model: TonelliModel, loop: DiscreteLoop, kappa: float) -> float:
    """|mean (kappa - E)| along the loop, segment-midpoint quadrature."""
    m = loop.midpoints()
    v = loop.velocity() / loop.T
    return float(abs(np.mean(kappa - model.eval_E(m, v))))


def verify_orbit(
    model: TonelliModel,
    loop: DiscreteLoop,
    kappa: float,
    tolerances: VerifyTolerances | None = None,
    steps: int | None = None,
    bounds=None,
) -> VerificationReport:
    """Check a candidate loop against the Euler-Lagrange dynamics.

    Integrates from reconstructed initial data over one period and fills
    the report: torus closure error plus velocity mismatch, energy
    statistics along the trajectory, the discrete Euler-Lagrange residual
    of the loop itself and the period-stationarity residual.  Failures are
    reported, never thrown.
    """
    tols = tolerances or VerifyTolerances()
    if steps is None:
        steps = max(1000, min(int(loop.T / 1e-3), 200_000))
    x0, v0 = initial_data(loop)
    traj = integrate_el(model, x0, v0, loop.T, steps)

    end_gap = traj.xs[-1] - x0
    end_gap = end_gap - np.round(end_gap)
    closure = float(np.linalg.norm(end_gap) + np.linalg.norm(traj.vs[-1] - v0))

    dT_res = mean_energy_residual(model, loop, kappa)
    # cross-check against the analytic period derivative of the action
    ctx = FunctionalContext(model=model, kappa=kappa, bounds=bounds or _UNIT_BOUNDS)
    dT_from_diff = abs(differential(ctx, loop).tau)
    dT_consistency = abs(dT_res - dT_from_diff)

    el_res = el_residual(model, loop)
    e_mean = float(np.mean(traj.energies))
    e_std = float(np.std(traj.energies))

    passed = (
        closure < tols.closure
        and abs(e_mean - kappa) < tols.energy
        and el_res < tols.el_residual
        and dT_res < tols.dT_residual
    )
    return VerificationReport(
        closure_error=closure,
        energy_mean=e_mean,
        energy_std=e_std,
        el_residual=el_res,
        dT_residual=dT_res,
        passed=passed,
        details={
            "kappa": kappa,
            "steps": steps,
            "energy_drift": traj.drift,
            "dT_consistency": dT_consistency,
            "energy_gap": abs(e_mean - kappa),
        },
    )
