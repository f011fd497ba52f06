"""Electromagnetic Tonelli models on the flat torus.

A model is L(x, v) = |v|^2/2 + theta(x)[v] - V(x) with the magnetic
one-form theta and the scalar potential V given as finite trigonometric
series, so that every derivative used by the solvers is analytic.  The
energy is E(x, v) = |v|^2/2 + V(x), the Legendre-dual Hamiltonian is
H(x, p) = |p - theta(x)|^2/2 + V(x), and the Euler-Lagrange acceleration
is the Lorentz force of d(theta) minus the potential gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .errors import BadParameters, DimensionMismatch, ModelFormatError

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True, eq=False)
class TrigSeries:
    """Finite real trigonometric series on the torus R^n/Z^n.

    f(x) = sum_m [ c_m cos(2 pi m.x) + s_m sin(2 pi m.x) ] over integer
    mode vectors m.
    """

    n: int
    modes: np.ndarray  # (M, n) int
    cos: np.ndarray  # (M,)
    sin: np.ndarray  # (M,)

    @classmethod
    def zero(cls, n: int) -> "TrigSeries":
        return cls(n=n, modes=np.zeros((0, n), dtype=int), cos=np.zeros(0), sin=np.zeros(0))

    @classmethod
    def constant(cls, n: int, value: float) -> "TrigSeries":
        return cls.from_terms(n, [((0,) * n, value, 0.0)])

    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[Sequence[int], float, float]]) -> "TrigSeries":
        merged: dict[tuple[int, ...], list[float]] = {}
        for mode, c, s in terms:
            key = tuple(int(v) for v in mode)
            if len(key) != n:
                raise DimensionMismatch(f"mode {key} has wrong dimension (expected {n})")
            acc = merged.setdefault(key, [0.0, 0.0])
            acc[0] += float(c)
            acc[1] += float(s)
        if not merged:
            return cls.zero(n)
        modes = np.array(sorted(merged), dtype=int)
        cs = np.array([merged[tuple(m)] for m in modes])
        return cls(n=n, modes=modes, cos=cs[:, 0].copy(), sin=cs[:, 1].copy())

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.modes.shape[0] == 0:
            return np.zeros(x.shape[:-1])
        phases = TWO_PI * (x @ self.modes.T.astype(float))
        return np.cos(phases) @ self.cos + np.sin(phases) @ self.sin

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.modes.shape[0] == 0:
            return np.zeros(x.shape)
        m = self.modes.astype(float)
        phases = TWO_PI * (x @ m.T)
        weights = -np.sin(phases) * self.cos + np.cos(phases) * self.sin
        return TWO_PI * (weights @ m)

    def partial(self, j: int) -> "TrigSeries":
        """The series of the partial derivative with respect to x_j."""
        factor = TWO_PI * self.modes[:, j].astype(float)
        return TrigSeries(
            n=self.n, modes=self.modes.copy(), cos=factor * self.sin, sin=-factor * self.cos
        )

    def plus(self, other: "TrigSeries") -> "TrigSeries":
        if other.n != self.n:
            raise DimensionMismatch("series dimensions differ")
        terms = [(tuple(m), c, s) for m, c, s in zip(self.modes, self.cos, self.sin)]
        terms += [(tuple(m), c, s) for m, c, s in zip(other.modes, other.cos, other.sin)]
        return TrigSeries.from_terms(self.n, terms)

    def scaled(self, a: float) -> "TrigSeries":
        return TrigSeries(n=self.n, modes=self.modes.copy(), cos=a * self.cos, sin=a * self.sin)

    def shifted(self, c: float) -> "TrigSeries":
        return self.plus(TrigSeries.constant(self.n, c))

    def linf_bound(self) -> float:
        """Certified bound on max |f|: sum of mode amplitudes."""
        return float(np.sum(np.hypot(self.cos, self.sin)))

    def grad_linf_bound(self) -> float:
        """Certified bound on max |grad f|_2."""
        norms = np.linalg.norm(self.modes.astype(float), axis=1)
        return float(TWO_PI * np.sum(norms * np.hypot(self.cos, self.sin)))

    def to_dict(self) -> dict:
        return {
            "coeffs": [
                {"mode": [int(v) for v in m], "cos": float(c), "sin": float(s)}
                for m, c, s in zip(self.modes, self.cos, self.sin)
            ]
        }

    @classmethod
    def from_dict(cls, n: int, data: dict, where: str) -> "TrigSeries":
        if not isinstance(data, dict) or "coeffs" not in data:
            raise ModelFormatError(where, "expected an object with a 'coeffs' list")
        terms = []
        for i, entry in enumerate(data["coeffs"]):
            spot = f"{where}.coeffs[{i}]"
            if not isinstance(entry, dict) or "mode" not in entry:
                raise ModelFormatError(spot, "expected an object with a 'mode' list")
            mode = entry["mode"]
            if len(mode) != n or not all(float(v).is_integer() for v in mode):
                raise ModelFormatError(f"{spot}.mode", f"expected {n} integers")
            try:
                c = float(entry.get("cos", 0.0))
                s = float(entry.get("sin", 0.0))
            except (TypeError, ValueError) as exc:
                raise ModelFormatError(spot, f"bad coefficient: {exc}") from None
            terms.append((mode, c, s))
        return cls.from_terms(n, terms)


def _refined_extremum(series: TrigSeries, resolution: int, maximize: bool) -> float:
    """Grid scan of a series followed by a local polish of the best points."""
    if series.modes.shape[0] == 0:
        return 0.0
    grid = _torus_grid(series.n, resolution)
    vals = series.value(grid)
    sign = -1.0 if maximize else 1.0
    order = np.argsort(sign * vals)
    best = sign * vals[order[0]]
    for idx in order[:3]:
        res = optimize.minimize(
            lambda x: sign * series.value(x),
            grid[idx],
            jac=lambda x: sign * series.grad(x),
            method="BFGS",
            options={"gtol": 1e-12},
        )
        best = min(best, res.fun)
    return float(sign * best)


def _torus_grid(n: int, resolution: int) -> np.ndarray:
    axes = [np.arange(resolution) / resolution] * n
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, n)


@dataclass(frozen=True, eq=False)
class TonelliModel:
    """Electromagnetic Lagrangian on the flat torus."""

    n: int
    theta: tuple[TrigSeries, ...]
    V: TrigSeries

    def __post_init__(self):
        if len(self.theta) != self.n:
            raise DimensionMismatch("theta needs one component series per dimension")

    # -- pointwise evaluations (vectorized over leading axes) -------------

    def theta_at(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.stack([c.value(x) for c in self.theta], axis=-1)

    def theta_jacobian(self, x: np.ndarray) -> np.ndarray:
        """J[..., j, k] = d theta_j / d x_k."""
        x = np.asarray(x, dtype=float)
        return np.stack([c.grad(x) for c in self.theta], axis=-2)

    def eval_L(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        kinetic = 0.5 * np.sum(v * v, axis=-1)
        magnetic = np.sum(self.theta_at(x) * v, axis=-1)
        return kinetic + magnetic - self.V.value(x)

    def eval_E(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Energy d_v L[v] - L; reduces to |v|^2/2 + V for this model class."""
        v = np.asarray(v, dtype=float)
        return 0.5 * np.sum(v * v, axis=-1) + self.V.value(np.asarray(x, dtype=float))

    def dvL(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        return np.asarray(v, dtype=float) + self.theta_at(x)

    def dxL(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        jac = self.theta_jacobian(x)
        return np.einsum("...jk,...j->...k", jac, v) - self.V.grad(x)

    def legendre_H(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """Legendre-dual Hamiltonian max_v (p[v] - L)."""
        diff = np.asarray(p, dtype=float) - self.theta_at(x)
        return 0.5 * np.sum(diff * diff, axis=-1) + self.V.value(np.asarray(x, dtype=float))

    def magnetic_matrix(self, x: np.ndarray) -> np.ndarray:
        """Antisymmetric matrix of d(theta): B_jk = d_j theta_k - d_k theta_j."""
        jac = self.theta_jacobian(x)
        return np.swapaxes(jac, -1, -2) - jac

    def el_rhs(self, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Euler-Lagrange acceleration a = B(x) v - grad V(x)."""
        v = np.asarray(v, dtype=float)
        B = self.magnetic_matrix(x)
        return np.einsum("...jk,...k->...j", B, v) - self.V.grad(x)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "theta": [c.to_dict() for c in self.theta],
            "V": self.V.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TonelliModel":
        if not isinstance(data, dict):
            raise ModelFormatError("<root>", "model must be a JSON object")
        if "n" not in data:
            raise ModelFormatError("n", "missing dimension")
        try:
            n = int(data["n"])
        except (TypeError, ValueError):
            raise ModelFormatError("n", "dimension must be an integer") from None
        if n < 1:
            raise ModelFormatError("n", "dimension must be >= 1")
        theta_data = data.get("theta")
        if not isinstance(theta_data, list) or len(theta_data) != n:
            raise ModelFormatError("theta", f"expected a list of {n} component series")
        theta = tuple(
            TrigSeries.from_dict(n, comp, f"theta[{j}]") for j, comp in enumerate(theta_data)
        )
        if "V" not in data:
            raise ModelFormatError("V", "missing potential series")
        V = TrigSeries.from_dict(n, data["V"], "V")
        return cls(n=n, theta=theta, V=V)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TonelliModel":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path: str) -> "TonelliModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class BoundsEstimate:
    """Growth constants for L and E plus the isoperimetric constant.

    L >= L0 |v|^2 - L1, L <= L2 |v|^2 + L3, E >= E0 |v|^2 - E1 hold on a
    verification grid (L0, L1 also analytically, by completing the square),
    and Theta = max|d theta|/4 bounds loop integrals of theta in chart
    balls by Theta * length^2.
    """

    L0: float
    L1: float
    L2: float
    L3: float
    E0: float
    E1: float
    Theta: float
    diagnostics: dict = field(default_factory=dict, repr=False)


def estimate_bounds(model: TonelliModel, resolution: int = 64) -> BoundsEstimate:
    """Derive growth constants on a grid, certified for the electromagnetic form.

    With the square completed against the magnetic term, L0 = 1/4 and
    L1 = max V + max|theta|^2 always work (L0 = 1/2 when theta vanishes);
    the remaining constants come from potential extrema.  The inequalities
    are re-checked empirically on the grid before returning.
    """
    if resolution < 32:
        raise BadParameters("bounds grid needs at least 32 points per axis")
    grid = _torus_grid(model.n, resolution)
    v_grid = model.V.value(grid)
    theta_vals = model.theta_at(grid)
    theta_sq = np.sum(theta_vals * theta_vals, axis=-1)

    max_v = max(_refined_extremum(model.V, resolution, maximize=True), float(np.max(v_grid, initial=0.0)))
    min_v = min(_refined_extremum(model.V, resolution, maximize=False), float(np.min(v_grid, initial=0.0)))
    max_theta_sq = float(np.max(theta_sq, initial=0.0))
    if max_theta_sq > 0:
        # polish |theta|^2 from the best grid point
        idx = int(np.argmax(theta_sq))
        res = optimize.minimize(
            lambda x: -float(np.sum(model.theta_at(x) ** 2)),
            grid[idx],
            method="Nelder-Mead",
            options={"xatol": 1e-10, "fatol": 1e-14},
        )
        max_theta_sq = max(max_theta_sq, -float(res.fun))

    B = model.magnetic_matrix(grid)
    max_dtheta = float(np.max(np.linalg.norm(B, ord=2, axis=(-2, -1)), initial=0.0)) if B.size else 0.0

    magnetic = max_theta_sq > 0
    L0 = 0.25 if magnetic else 0.5
    L1 = max_v + max_theta_sq
    L2 = 0.75 if magnetic else 0.5
    L3 = max_theta_sq - min_v
    E0 = 0.5
    E1 = -min_v
    Theta = 0.25 * max_dtheta

    # empirical verification of the growth inequalities on the grid
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(8, model.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    margins = {"lower": np.inf, "upper": np.inf, "energy": np.inf}
    for speed in (0.0, 0.5, 1.0, 2.0, 5.0, 10.0):
        for d in dirs:
            v = np.broadcast_to(speed * d, grid.shape)
            Lv = model.eval_L(grid, v)
            Ev = model.eval_E(grid, v)
            vv = speed * speed
            margins["lower"] = min(margins["lower"], float(np.min(Lv - (L0 * vv - L1))))
            margins["upper"] = min(margins["upper"], float(np.min((L2 * vv + L3) - Lv)))
            margins["energy"] = min(margins["energy"], float(np.min(Ev - (E0 * vv - E1))))
    worst = min(margins.values())
    if worst < -1e-9:
        raise BadParameters(f"growth bounds failed on the verification grid by {worst:.3e}")

    # companion constants E >= C0 L - C1, recorded for diagnostics only
    C0 = E0 / L2
    C1 = E0 * L3 / L2 + E1
    diagnostics = {
        "resolution": resolution,
        "max_V": max_v,
        "min_V": min_v,
        "max_theta_sq": max_theta_sq,
        "max_dtheta": max_dtheta,
        "margins": margins,
        "C0": C0,
        "C1": C1,
    }
    return BoundsEstimate(L0=L0, L1=L1, L2=L2, L3=L3, E0=E0, E1=E1, Theta=Theta, diagnostics=diagnostics)
