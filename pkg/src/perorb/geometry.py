"""Flat-torus loop discretization and the discrete Sobolev (W^{1,2}) metric.

Loops on the torus R^n/Z^n are stored through a continuous lift: N sample
points in the universal cover R^n together with the winding vector k, so
that the lift closes up as q_{i+N} = q_i + k.  The winding vector is the
complete free-homotopy invariant on the torus, which keeps every homotopy
statement checkable with integer arithmetic.

The tangent metric is the discrete analogue of the W^{1,2} inner product
on loops (values plus first derivatives) times the Euclidean line in the
period direction.  Gradients of functionals are preconditioned by solving
(Id - Laplacian) on the periodic grid, which is a circulant system and is
solved exactly with an FFT.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import (
    BadParameters,
    DimensionMismatch,
    GapTooLarge,
    NonPositivePeriod,
    SolveFailure,
)


@dataclass(frozen=True, eq=False)
class DiscreteLoop:
    """A closed loop on the flat torus: lifted samples, winding, period.

    ``q`` holds N points of the lift in R^n (the sample at parameter i/N),
    ``k`` the integer winding vector and ``T`` the positive period.
    Instances are immutable; derived quantities are recomputed on demand.
    """

    q: np.ndarray  # (N, n) lift samples
    T: float
    k: np.ndarray  # (n,) integer winding vector

    @property
    def N(self) -> int:
        return self.q.shape[0]

    @property
    def n(self) -> int:
        return self.q.shape[1]

    def q_next(self) -> np.ndarray:
        """Samples shifted by one, using the lift closure q_N = q_0 + k."""
        return np.concatenate([self.q[1:], (self.q[0] + self.k)[None, :]], axis=0)

    def gaps(self) -> np.ndarray:
        return self.q_next() - self.q

    def velocity(self) -> np.ndarray:
        """Derivative of the piecewise-linear lift in the loop parameter."""
        return self.N * self.gaps()

    def midpoints(self) -> np.ndarray:
        return self.q + 0.5 * self.gaps()

    def with_updates(self, q: np.ndarray | None = None, T: float | None = None) -> "DiscreteLoop":
        return DiscreteLoop(
            q=self.q if q is None else np.asarray(q, dtype=float),
            T=self.T if T is None else float(T),
            k=self.k,
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "N": self.N,
            "T": self.T,
            "k": [int(v) for v in self.k],
            "q": self.q.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteLoop":
        q = np.asarray(data["q"], dtype=float)
        k = np.asarray(data["k"], dtype=int)
        loop = cls(q=q, T=float(data["T"]), k=k)
        if loop.n != int(data["n"]) or loop.N != int(data["N"]):
            raise DimensionMismatch("loop dict shape fields disagree with q")
        return loop

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "DiscreteLoop":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Variation of a loop: N periodic sample displacements plus a period shift.

    The same container is used for covector (dual) data produced by the
    functional differential; see :func:`pairing`.
    """

    xi: np.ndarray  # (N, n)
    tau: float = 0.0

    @classmethod
    def zero(cls, N: int, n: int) -> "TangentVector":
        return cls(xi=np.zeros((N, n)), tau=0.0)

    def scaled(self, a: float) -> "TangentVector":
        return TangentVector(xi=a * self.xi, tau=a * self.tau)


def _wrap_to_nearest(d: np.ndarray) -> np.ndarray:
    """Nearest representative of d mod Z^n, component-wise."""
    return d - np.round(d)


def make_loop(samples: Sequence[Sequence[float]] | np.ndarray, T: float) -> DiscreteLoop:
    """Build a loop from torus samples by constructing the continuous lift.

    Consecutive samples must be less than 1/2 apart (mod Z^n, Euclidean
    norm of the nearest representative); at exactly 1/2 the nearest
    representative is ambiguous.  The winding vector is the total lattice
    displacement of the lift.  Re-encoding a returned loop's samples is
    idempotent.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 2:
        raise DimensionMismatch("samples must be an (N, n) array")
    N = samples.shape[0]
    if N < 8:
        raise BadParameters(f"need at least 8 samples, got {N}")
    if not np.isfinite(T) or T <= 0:
        raise NonPositivePeriod(f"period must be positive, got {T}")

    steps = _wrap_to_nearest(np.diff(samples, axis=0))
    norms = np.linalg.norm(steps, axis=1)
    bad = np.flatnonzero(norms >= 0.5)
    if bad.size:
        raise GapTooLarge(f"gap {norms[bad[0]]:.6g} at segment {bad[0]} (needs < 1/2)")

    q = samples[0] + np.concatenate([np.zeros((1, samples.shape[1])), np.cumsum(steps, axis=0)])
    closing = samples[0] - q[-1]
    wrap_step = _wrap_to_nearest(closing)
    if np.linalg.norm(wrap_step) >= 0.5:
        raise GapTooLarge(f"closing gap {np.linalg.norm(wrap_step):.6g} (needs < 1/2)")
    k = -np.round(closing).astype(int)
    return DiscreteLoop(q=q, T=float(T), k=k)


def constant_loop(point: Sequence[float] | np.ndarray, T: float, N: int = 64) -> DiscreteLoop:
    point = np.asarray(point, dtype=float)
    return make_loop(np.tile(point, (N, 1)), T)


def loop_length(loop: DiscreteLoop) -> float:
    """Piecewise-linear length of the lift; independent of the period."""
    return float(np.sum(np.linalg.norm(loop.gaps(), axis=1)))


def _check_tangent(loop: DiscreteLoop, tv: TangentVector) -> None:
    if tv.xi.shape != (loop.N, loop.n):
        raise DimensionMismatch(
            f"tangent shape {tv.xi.shape} does not match loop ({loop.N}, {loop.n})"
        )


def _forward_diff(xi: np.ndarray) -> np.ndarray:
    """Forward difference of a periodic variation, scaled to a derivative."""
    return xi.shape[0] * (np.roll(xi, -1, axis=0) - xi)


def sobolev_inner(loop: DiscreteLoop, a: TangentVector, b: TangentVector) -> float:
    """Discrete W^{1,2} product on variations plus the Euclidean period slot.

    (1/N) sum_i [xi_i . eta_i + Dxi_i . Deta_i] + tau_a tau_b, with D the
    forward difference scaled by N.
    """
    _check_tangent(loop, a)
    _check_tangent(loop, b)
    value = np.mean(np.sum(a.xi * b.xi, axis=1))
    value += np.mean(np.sum(_forward_diff(a.xi) * _forward_diff(b.xi), axis=1))
    return float(value + a.tau * b.tau)


def pairing(dual: TangentVector, tv: TangentVector) -> float:
    """Duality pairing of covector data against a variation.

    Dual data lives under the (1/N)-weighted dot product on the samples and
    the plain product in the period slot, i.e. the L^2-type pairing used by
    the action differential.
    """
    if dual.xi.shape != tv.xi.shape:
        raise DimensionMismatch(f"dual shape {dual.xi.shape} vs tangent {tv.xi.shape}")
    return float(np.mean(np.sum(dual.xi * tv.xi, axis=1)) + dual.tau * tv.tau)


def laplacian_symbol(N: int) -> np.ndarray:
    """Eigenvalues of -Laplacian on the periodic grid for rfft frequencies."""
    m = np.arange(N // 2 + 1)
    return N * N * (2.0 - 2.0 * np.cos(2.0 * np.pi * m / N))


def precondition(loop: DiscreteLoop, dual: TangentVector) -> TangentVector:
    """Riesz representative of dual data in the Sobolev metric.

    Solves (Id - Laplacian) xi = dual on the circulant grid by FFT, so that
    sobolev_inner(loop, xi, eta) == pairing(dual, eta) for every eta.  The
    period component carries the identity.
    """
    _check_tangent(loop, dual)
    lam = laplacian_symbol(loop.N)
    xi_hat = np.fft.rfft(dual.xi, axis=0) / (1.0 + lam)[:, None]
    xi = np.fft.irfft(xi_hat, n=loop.N, axis=0)
    if not np.all(np.isfinite(xi)):
        raise SolveFailure("preconditioner produced non-finite values")
    return TangentVector(xi=xi, tau=dual.tau)


def apply_metric_operator(loop: DiscreteLoop, tv: TangentVector) -> TangentVector:
    """Apply (Id - Laplacian) to a variation; inverse of :func:`precondition`."""
    _check_tangent(loop, tv)
    xi = tv.xi
    lap = loop.N * loop.N * (np.roll(xi, -1, axis=0) - 2.0 * xi + np.roll(xi, 1, axis=0))
    return TangentVector(xi=xi - lap, tau=tv.tau)


def resample_loop(loop: DiscreteLoop, N_new: int) -> DiscreteLoop:
    """Resample the piecewise-linear lift at N_new uniform parameters."""
    if N_new < 8:
        raise BadParameters("resampled loop needs at least 8 samples")
    s_old = np.arange(loop.N + 1) / loop.N
    q_ext = np.concatenate([loop.q, (loop.q[0] + loop.k)[None, :]], axis=0)
    s_new = np.arange(N_new) / N_new
    q_new = np.column_stack(
        [np.interp(s_new, s_old, q_ext[:, j]) for j in range(loop.n)]
    )
    return DiscreteLoop(q=q_new, T=loop.T, k=loop.k)


def iterate_loop(loop: DiscreteLoop, times: int, N_new: int | None = None) -> DiscreteLoop:
    """The h-fold iterate: traverse the loop ``times`` times in period h*T."""
    if times < 1:
        raise BadParameters("iterate count must be >= 1")
    N_new = N_new or loop.N
    s_old = np.arange(loop.N + 1) / loop.N
    q_ext = np.concatenate([loop.q, (loop.q[0] + loop.k)[None, :]], axis=0)
    s_new = np.arange(N_new) / N_new
    hs = times * s_new
    frac, whole = np.modf(hs)
    q_new = np.column_stack(
        [np.interp(frac, s_old, q_ext[:, j]) for j in range(loop.n)]
    )
    q_new += whole[:, None] * loop.k[None, :]
    return DiscreteLoop(q=q_new, T=times * loop.T, k=(times * loop.k).astype(int))
