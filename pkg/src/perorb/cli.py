"""Experiment runner: model loading, subcommand dispatch, reproducible runs.

Subcommands: critical-values, minimize, mountain-pass, sweep,
two-lyapunov, verify, selftest.  Structured results are written as JSON,
traces and sweep tables as CSV; every artifact embeds the configuration
hash and the master seed, and reruns with the same configuration and a
fixed worker count reproduce the outputs bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .action import DescentOptions, FunctionalContext, action, gradient
from .critical_values import (
    WitnessSearchOptions,
    estimate_critical_values,
    estimate_e0,
    witness_negative_action,
)
from .errors import ModelFormatError, PerorbError
from .geometry import DiscreteLoop
from .lagrangian import TonelliModel, estimate_bounds
from .minimax_engine import (
    MountainPassOptions,
    TwoLyapunovOptions,
    struwe_sweep,
    two_lyapunov_flow,
)
from .orbits import (
    LoopObjective,
    MountainPassOrbitOptions,
    OrbitCandidate,
    Provenance,
    minimize_in_class,
    mountain_pass_orbit,
    polish_stationary,
    zeta_path_factory,
)
from .verify import VerifyTolerances, verify_orbit


@dataclass
class ExperimentConfig:
    command: str
    model_path: str
    out_dir: str
    seed: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        N = self.params.get("N")
        if N is not None and (N < 64 or N & (N - 1)):
            raise PerorbError(f"N must be a power of two >= 64, got {N}")
        for key, value in self.params.items():
            if key.endswith("tol") and value is not None and value <= 0:
                raise PerorbError(f"{key} must be positive")

    def hash(self) -> str:
        payload = json.dumps(
            {
                "command": self.command,
                "model": self.model_path,
                "seed": self.seed,
                "params": self.params,
            },
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def stamp(self) -> dict:
        return {"config_hash": self.hash(), "seed": self.seed, "version": __version__}


def _write_json(path: Path, payload: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
    print(f"wrote {path}")


def _write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    print(f"wrote {path}")


def _load_model(path: str) -> TonelliModel:
    with open(path) as fh:
        data = json.load(fh)
    return TonelliModel.from_dict(data)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_critical_values(args) -> int:
    config = ExperimentConfig(
        command="critical-values",
        model_path=args.model,
        out_dir=args.out,
        seed=args.seed,
        params={"tol": args.tol, "resolution": args.resolution},
    )
    model = _load_model(args.model)
    report = estimate_critical_values(
        model, tol=args.tol, resolution=args.resolution, seed=args.seed
    )
    payload = {
        **config.stamp(),
        "e0": report.e0,
        "cu_bracket": list(report.cu_bracket),
        "c0_upper": report.c0_upper,
        "c0_estimate": report.c0_estimate,
        "ordering_ok": report.ordering_ok(args.tol),
        "diagnostics": report.diagnostics,
    }
    out = Path(args.out)
    _write_json(out / "critical_values.json", payload)
    _write_csv(
        out / "cu_bisection.csv",
        ["kappa", "witness_found"],
        [(k, int(found)) for k, found in report.diagnostics["cu_history"]],
    )
    print(
        f"e0={report.e0:.6g}  cu=[{report.cu_bracket[0]:.6g}, {report.cu_bracket[1]:.6g}]  "
        f"c0<={report.c0_upper:.6g}"
    )
    return 0


def cmd_minimize(args) -> int:
    winding = [int(v) for v in args.winding.split(",")]
    config = ExperimentConfig(
        command="minimize",
        model_path=args.model,
        out_dir=args.out,
        seed=args.seed,
        params={"kappa": args.kappa, "winding": winding, "N": args.N, "seeds": args.seeds},
    )
    model = _load_model(args.model)
    candidate = minimize_in_class(
        model, args.kappa, winding, seeds=args.seeds, N=args.N, seed=args.seed
    )
    verification = verify_orbit(model, candidate.loop, args.kappa)
    candidate.verification = verification
    payload = {**config.stamp(), "candidate": candidate.to_dict()}
    _write_json(Path(args.out) / "orbit.json", payload)
    print(
        f"action={candidate.action:.6g}  T={candidate.loop.T:.6g}  "
        f"grad={candidate.grad_norm:.3g}  verified={verification.passed}"
    )
    return 0


def cmd_mountain_pass(args) -> int:
    config = ExperimentConfig(
        command="mountain-pass",
        model_path=args.model,
        out_dir=args.out,
        seed=args.seed,
        params={"kappa": args.kappa, "N": args.N, "nodes": args.nodes},
    )
    model = _load_model(args.model)
    bounds = estimate_bounds(model)
    e0 = estimate_e0(model)
    opts = MountainPassOrbitOptions(N=args.N, nodes=args.nodes, seed=args.seed)
    report, candidate = mountain_pass_orbit(model, args.kappa, e0, bounds=bounds, opts=opts)
    payload = {
        **config.stamp(),
        "kappa": args.kappa,
        "e0": e0,
        "c_estimate": report.c_estimate,
        "grad_norm": report.grad_norm,
        "ps_flag": report.ps_flag.value,
        "candidate": candidate.to_dict() if candidate else None,
    }
    _write_json(Path(args.out) / "mountain_pass.json", payload)
    _write_csv(
        Path(args.out) / "mountain_pass_trace.csv",
        ["sweep", "c_estimate", "argmax_T"],
        report.escape_trace,
    )
    print(f"c={report.c_estimate:.6g}  flag={report.ps_flag.value}")
    return 0


def cmd_sweep(args) -> int:
    config = ExperimentConfig(
        command="sweep",
        model_path=args.model,
        out_dir=args.out,
        seed=args.seed,
        params={"grid": args.grid, "N": args.N, "nodes": args.nodes, "tol": args.tol},
    )
    model = _load_model(args.model)
    bounds = estimate_bounds(model)
    report = estimate_critical_values(model, tol=args.tol, bounds=bounds, seed=args.seed)
    e0 = report.e0
    cu_lo = report.cu_bracket[0]
    if not e0 < cu_lo:
        raise PerorbError(
            f"energy interval (e0={e0:.6g}, cu_lo={cu_lo:.6g}) is empty; nothing to sweep"
        )
    corpus = []
    if report.diagnostics.get("cu_witness"):
        corpus.append(DiscreteLoop.from_dict(report.diagnostics["cu_witness"]))
    ctx0 = FunctionalContext(model=model, kappa=0.5 * (e0 + cu_lo), bounds=bounds)
    extra = witness_negative_action(ctx0, rng=np.random.default_rng(args.seed))
    if extra is not None:
        corpus.append(extra)

    width = cu_lo - e0
    grid = [e0 + width * (j + 1) / (args.grid + 1) for j in range(args.grid)]
    family = lambda kappa: LoopObjective(
        FunctionalContext(model=model, kappa=kappa, bounds=bounds)
    )
    factory = zeta_path_factory(model, bounds, e0, corpus, args.nodes, args.N)
    mp_opts = MountainPassOptions(
        max_sweeps=args.sweeps, grad_tol=1e-3, coord=lambda lp: lp.T
    )
    result = struwe_sweep(family, factory, grid, (e0, cu_lo), mp_opts)

    rows = [
        (r.kappa, r.c_estimate, r.argmax_coord, r.grad_norm, r.ps_flag.value)
        for r in result.rows
    ]
    _write_csv(
        Path(args.out) / "sweep.csv",
        ["kappa", "c_estimate", "argmax_T", "grad_norm", "ps_flag"],
        rows,
    )
    candidates_payload = []
    for loop in result.candidates:
        ctx = FunctionalContext(model=model, kappa=result.kappa_bar, bounds=bounds)
        polished = polish_stationary(ctx, loop)
        _, gnorm = gradient(ctx, polished)
        verification = verify_orbit(model, polished, result.kappa_bar, bounds=bounds)
        candidates_payload.append(
            OrbitCandidate(
                loop=polished,
                kappa=result.kappa_bar,
                action=action(ctx, polished),
                grad_norm=gnorm,
                provenance=Provenance.STRUWE_SWEEP,
                verification=verification,
            ).to_dict()
        )
    payload = {
        **config.stamp(),
        "e0": e0,
        "cu_bracket": list(report.cu_bracket),
        "kappa_bar": result.kappa_bar,
        "quotient": result.quotient,
        "period_cap": result.period_cap,
        "candidates": candidates_payload,
    }
    _write_json(Path(args.out) / "sweep.json", payload)
    print(f"kappa_bar={result.kappa_bar}  candidates={len(candidates_payload)}")
    return 0


def cmd_two_lyapunov(args) -> int:
    config = ExperimentConfig(
        command="two-lyapunov",
        model_path=args.model,
        out_dir=args.out,
        seed=args.seed,
        params={
            "kappa_bar": args.kappa_bar,
            "kappa_star": args.kappa_star,
            "T_star": args.t_star,
            "a": args.a,
            "d": args.d,
        },
    )
    model = _load_model(args.model)
    bounds = estimate_bounds(model)
    ctx_bar = FunctionalContext(model=model, kappa=args.kappa_bar, bounds=bounds)
    ctx_star = FunctionalContext(model=model, kappa=args.kappa_star, bounds=bounds)
    gap = args.kappa_star - args.kappa_bar
    a = args.a if args.a is not None else 0.05
    d = args.d if args.d is not None else 1.2 * (a + gap * args.t_star)

    rng = np.random.default_rng(args.seed)
    seeds = []
    witness = witness_negative_action(ctx_bar, rng=rng)
    if witness is not None:
        seeds.append(witness)  # frozen seed: action <= 0
        stretched = witness.with_updates(T=max(2.0 * args.t_star, witness.T))
        seeds.append(stretched)
    if not seeds:
        raise PerorbError("no seeds available; supply a lower kappa_bar")

    outcomes = two_lyapunov_flow(
        LoopObjective(ctx_bar),
        LoopObjective(ctx_star),
        seeds,
        coord=lambda lp: lp.T,
        opts=TwoLyapunovOptions(kappa_gap=gap, a=a, d=d, T_star=args.t_star),
    )
    payload = {
        **config.stamp(),
        "kappa_bar": args.kappa_bar,
        "kappa_star": args.kappa_star,
        "a": a,
        "d": d,
        "outcomes": [
            {
                "kind": o.kind.value,
                "message": o.message,
                "period_bound": o.period_bound,
                "final_S_bar": o.s_bar_trace[-1] if o.s_bar_trace else None,
                "final_S_star": o.s_star_trace[-1] if o.s_star_trace else None,
                "final_T": o.coord_trace[-1] if o.coord_trace else None,
            }
            for o in outcomes
        ],
    }
    _write_json(Path(args.out) / "two_lyapunov.json", payload)
    for o in outcomes:
        print(f"outcome={o.kind.value}  {o.message}")
    return 0


def cmd_verify(args) -> int:
    config = ExperimentConfig(
        command="verify",
        model_path=args.model,
        out_dir=args.out,
        seed=args.seed,
        params={"kappa": args.kappa, "tol": args.tol, "orbit": args.orbit},
    )
    model = _load_model(args.model)
    with open(args.orbit) as fh:
        data = json.load(fh)
    loop_data = data.get("candidate", {}).get("loop") or data.get("loop") or data
    loop = DiscreteLoop.from_dict(loop_data)
    tols = VerifyTolerances(closure=args.tol, energy=args.tol)
    report = verify_orbit(model, loop, args.kappa, tolerances=tols)
    payload = {**config.stamp(), "report": report.to_dict()}
    _write_json(Path(args.out) / "verification.json", payload)
    print(
        f"passed={report.passed}  closure={report.closure_error:.3g}  "
        f"energy_mean={report.energy_mean:.6g}"
    )
    return 0 if report.passed else 1


def builtin_models() -> dict[str, TonelliModel]:
    """The three reference models used by the self test."""
    from .lagrangian import TrigSeries

    kinetic = TonelliModel(
        n=2, theta=(TrigSeries.zero(2), TrigSeries.zero(2)), V=TrigSeries.zero(2)
    )
    cosine = TonelliModel(
        n=2,
        theta=(TrigSeries.zero(2), TrigSeries.zero(2)),
        V=TrigSeries.from_terms(2, [((1, 0), 0.3, 0.0)]),
    )
    magnetic = TonelliModel(
        n=2,
        theta=(
            TrigSeries.zero(2),
            TrigSeries.from_terms(2, [((1, 0), 0.0, 1.0 / (2.0 * math.pi))]),
        ),
        V=TrigSeries.zero(2),
    )
    return {"kinetic": kinetic, "cosine": cosine, "magnetic": magnetic}


def cmd_selftest(args) -> int:
    """Quick internal consistency checks on built-in models."""
    from .action import differential
    from .geometry import TangentVector, make_loop, pairing
    from .verify import integrate_el

    rng = np.random.default_rng(args.seed)
    failures = []

    def check(name: str, ok: bool, detail: str = "") -> None:
        print(f"[{'PASS' if ok else 'FAIL'}] {name} {detail}")
        if not ok:
            failures.append(name)

    models = builtin_models()
    for name, model in models.items():
        bounds = estimate_bounds(model)
        ctx = FunctionalContext(model=model, kappa=0.37, bounds=bounds)
        worst = 0.0
        for _ in range(3):
            base = rng.random(2)
            s = np.arange(64) / 64
            pts = base + 0.1 * np.sin(
                2 * np.pi * s[:, None] + rng.uniform(0, 2 * np.pi, size=2)
            )
            loop = make_loop(np.mod(pts, 1.0), float(rng.uniform(0.5, 2.0)))
            dual = differential(ctx, loop)
            for _ in range(2):
                eta = TangentVector(
                    xi=rng.standard_normal(loop.q.shape), tau=float(rng.standard_normal())
                )
                eps = 1e-6
                up = action(ctx, loop.with_updates(q=loop.q + eps * eta.xi, T=loop.T + eps * eta.tau))
                dn = action(ctx, loop.with_updates(q=loop.q - eps * eta.xi, T=loop.T - eps * eta.tau))
                fd = (up - dn) / (2 * eps)
                an = pairing(dual, eta)
                worst = max(worst, abs(an - fd) / max(abs(fd), 1e-12))
        check(f"differential-vs-fd[{name}]", worst < 1e-6, f"rel={worst:.2e}")

    traj = integrate_el(
        models["cosine"], np.array([0.1, 0.2]), np.array([0.7, -0.3]), 1.0, steps=1000
    )
    check("energy-drift", traj.drift < 1e-9, f"drift={traj.drift:.2e}")

    return 1 if failures else 0


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="perorb",
        description="Periodic orbits of prescribed energy on flat tori",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--model", required=True, help="model JSON file")
        p.add_argument("--out", default="perorb_out", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="master RNG seed")

    p = sub.add_parser(
        "critical-values",
        help="estimate e0, the c_u bracket and the c0 upper bound",
        epilog="CSV columns: kappa, witness_found (bisection history)",
    )
    common(p)
    p.add_argument("--tol", type=float, default=1e-3, help="c_u bracket width")
    p.add_argument("--resolution", type=int, default=64, help="grid points per axis")
    p.set_defaults(fn=cmd_critical_values)

    p = sub.add_parser("minimize", help="action minimizer in a winding class")
    common(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--winding", required=True, help="comma-separated integers, e.g. 1,0")
    p.add_argument("--N", type=int, default=128, help="samples per loop (power of two)")
    p.add_argument("--seeds", type=int, default=8)
    p.set_defaults(fn=cmd_minimize)

    p = sub.add_parser("mountain-pass", help="minimax orbit in (e0, c_u)")
    common(p)
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--N", type=int, default=128)
    p.add_argument("--nodes", type=int, default=25)
    p.set_defaults(fn=cmd_mountain_pass)

    p = sub.add_parser(
        "sweep",
        help="minimax level c(kappa) across (e0, c_u) with candidate extraction",
        epilog="CSV columns: kappa, c_estimate, argmax_T, grad_norm, ps_flag",
    )
    common(p)
    p.add_argument("--grid", type=int, default=16, help="number of kappa grid points")
    p.add_argument("--N", type=int, default=64)
    p.add_argument("--nodes", type=int, default=17)
    p.add_argument("--sweeps", type=int, default=200)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("two-lyapunov", help="combined descent of two action levels")
    common(p)
    p.add_argument("--kappa-bar", type=float, required=True)
    p.add_argument("--kappa-star", type=float, required=True)
    p.add_argument("--t-star", type=float, default=10.0)
    p.add_argument("--a", type=float, default=None, help="region level bound (default 0.05)")
    p.add_argument("--d", type=float, default=None, help="trap level (default derived)")
    p.set_defaults(fn=cmd_two_lyapunov)

    p = sub.add_parser("verify", help="independent Euler-Lagrange verification")
    common(p)
    p.add_argument("--orbit", required=True, help="orbit JSON (loop or candidate)")
    p.add_argument("--kappa", type=float, required=True)
    p.add_argument("--tol", type=float, default=1e-3)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("selftest", help="quick internal consistency checks")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_selftest)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ModelFormatError as exc:
        print(json.dumps({"error": {"type": "ModelFormatError", "field": exc.field, "message": str(exc)}}))
        return 2
    except (PerorbError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        return 2


if __name__ == "__main__":
    sys.exit(main())
