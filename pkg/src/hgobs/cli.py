"""Command-line entry point: ``hgobs {design-gains,simulate,sensitivity,vdp-bench}``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 simulation divergence.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import vdp
from .canon import STANDARD, GainLadder, ObserverSpec
from .config import load_config
from .errors import ConfigError, HgobsError
from .gainsynth import assign_gains, refine_ladder
from .matstack import Polynomial, poly_from_roots
from .senslin import LinearPlant, sensitivity_sweep, write_sweep_csv
from .sim import (
    SimConfig,
    SinusoidSignal,
    asymptotic_error,
    cosimulate,
    decay_fit,
    linear_plant_rhs,
    peak_error,
    sinusoid_disturbance,
)

log = logging.getLogger("hgobs")


def _roots_to_complex(roots):
    return [complex(r[0], r[1]) if isinstance(r, (tuple, list)) else complex(r) for r in roots]


def _target(cfg) -> Polynomial:
    if cfg.roots is not None:
        return poly_from_roots(_roots_to_complex(cfg.roots))
    return Polynomial.monic(cfg.coeffs)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2))


def cmd_design_gains(cfg, out: Path, seed: int) -> int:
    target = _target(cfg)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        report = assign_gains(target)
        if cfg.roots is not None:
            report = refine_ladder(report, _roots_to_complex(cfg.roots))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    eig = report.eigenvalues()
    print(f"target      : {list(target.coeffs)}")
    for i, (k1, k2) in enumerate(report.ladder.pairs, start=1):
        print(f"K{i}          : ({k1:.6g}, {k2:.6g})")
    print(f"positivity  : {report.positivity}")
    print(f"residual    : {report.residual:.3e}")
    print("eigenvalues : " + ", ".join(f"{z.real:.6g}{z.imag:+.3g}j" for z in eig))
    _write_json(
        out / "gains.json",
        {
            "target": list(target.coeffs),
            "ladder": [list(p) for p in report.ladder.pairs],
            "positivity": report.positivity,
            "residual": report.residual,
            "eigenvalues": [[z.real, z.imag] for z in eig],
            "stages": [
                {"stage": s.stage, "k1": s.k1, "k2": s.k2, "candidates": list(s.candidates),
                 "reduced": list(s.reduced.coeffs), "sigma1_residual": s.sigma1_residual}
                for s in report.steps
            ],
        },
    )
    return 0


def _observer_gains(oc, n):
    if oc.gains is not None:
        return oc.gains
    target = poly_from_roots(_roots_to_complex(oc.roots))
    if oc.kind == STANDARD:
        if target.degree != n:
            raise ConfigError(f"standard observer needs {n} roots, got {target.degree}")
        return list(target.tail)
    if target.degree != 2 * n - 2:
        raise ConfigError(f"limited observer needs {2 * n - 2} roots, got {target.degree}")
    return assign_gains(target).ladder


def _observer_init(oc, spec, x_true, rng):
    if isinstance(oc.init, list):
        return np.asarray(oc.init, dtype=float)
    if oc.init == "zero":
        return np.zeros(spec.dim)
    if oc.init == "random":
        return rng.standard_normal(spec.dim)
    if spec.kind == STANDARD:
        return np.array(x_true, dtype=float)
    return np.array([[x_true[i], x_true[i + 1]] for i in range(spec.n - 1)]).ravel()


def cmd_simulate(cfg, out: Path, seed: int) -> int:
    rng = np.random.default_rng(seed)
    if cfg.plant.kind == "linear":
        n = len(cfg.plant.Phi)
        phi_row = np.array(cfg.plant.Phi)
        phi = lambda x: float(phi_row @ x)  # noqa: E731
        rhs, output, default_bound = linear_plant_rhs(phi_row), None, np.inf
        x_true = np.asarray(cfg.x0, dtype=float)
    else:
        n = 5
        p = vdp.VdpParams(cfg.plant.alpha, cfg.plant.beta)
        phi = vdp.phi5
        rhs = lambda t, s: vdp.vdp_rhs(s, p)  # noqa: E731
        output = lambda s: vdp.jet_extend(s, p)  # noqa: E731
        default_bound = vdp.saturation_bound(p, cfg.x0)
        x_true = output(np.asarray(cfg.x0, dtype=float))

    observers, inits = {}, {}
    for k, oc in enumerate(cfg.observers):
        label = oc.label or f"obs{k}"
        bound = oc.bound if oc.bound is not None else default_bound
        try:
            spec = ObserverSpec(oc.kind, oc.ell, _observer_gains(oc, n), bound, phi)
        except ValueError as exc:
            raise ConfigError(f"observer {label!r}: {exc}") from exc
        observers[label] = spec
        inits[label] = _observer_init(oc, spec, x_true, rng)

    d = cfg.disturbance
    try:
        sc = SimConfig(cfg.sim.h, cfg.sim.T, cfg.sim.stride, cfg.sim.steady_fraction)
        trace = cosimulate(
            rhs,
            observers,
            SinusoidSignal(cfg.noise.amplitude, cfg.noise.omega, cfg.noise.phase),
            sinusoid_disturbance(d.amplitudes, d.omegas),
            cfg.x0,
            inits,
            sc,
            plant_output=output,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    out.mkdir(parents=True, exist_ok=True)
    trace.to_csv(out / "trace.csv")
    summary = {}
    for name in trace.estimates:
        entry = {
            "peak": peak_error(trace, name),
            "asymptotic": [asymptotic_error(trace, c, name) for c in range(1, n + 1)],
        }
        try:
            entry["decay_rate"], entry["decay_prefactor"] = decay_fit(trace, name)
        except HgobsError as exc:
            entry["decay_rate"] = None
            entry["decay_note"] = str(exc)
        summary[name] = entry
        print(f"{name:>8}: peak {entry['peak']:.4g}  decay rate {entry['decay_rate']}")
    _write_json(out / "summary.json", summary)
    return 0


def cmd_sensitivity(cfg, out: Path, seed: int) -> int:
    plant = LinearPlant(cfg.Phi)
    n = plant.n
    K = cfg.K if cfg.K is not None else list(poly_from_roots(_roots_to_complex(cfg.roots_std)).tail)
    if len(K) != n:
        raise ConfigError(f"K needs {n} entries, got {len(K)}")
    if cfg.ladder is not None:
        g = GainLadder(cfg.ladder)
    else:
        g = assign_gains(poly_from_roots(_roots_to_complex(cfg.roots_new))).ladder
    omegas = np.geomspace(cfg.omega.min, cfg.omega.max, cfg.omega.points)
    channels = sensitivity_sweep(plant, K, g, cfg.ell, omegas)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for ch in channels:
        write_sweep_csv(ch, out / f"sensitivity_ch{ch['channel']}.csv")
        summary.append({k: ch[k] for k in ("channel", "slope", "r_std", "r_new", "r_prime")})
        print(
            f"channel {ch['channel']}: slope {ch['slope']:+.3f}  r' {ch['r_prime']}  "
            f"relative degree std {ch['r_std']} new {ch['r_new']}"
        )
    _write_json(out / "sensitivity_summary.json", {"ladder": [list(p) for p in g.pairs],
                                                  "K": list(K), "channels": summary})
    return 0


def cmd_vdp_bench(cfg, out: Path, seed: int, *, no_noise=False, ell=None) -> int:
    values = cfg.model_dump()
    for key in ("ladder", "K5"):
        if values[key] is None:
            values.pop(key)
        else:
            values[key] = tuple(tuple(v) if isinstance(v, (list, tuple)) else v for v in values[key])
    values["z0"] = tuple(values["z0"])
    if ell is not None:
        values["ell"] = ell
    bench = vdp.BenchConfig(**{f.name: values[f.name] for f in fields(vdp.BenchConfig) if f.name in values})
    try:
        report = vdp.run_benchmark(bench, out, clean=True, noisy=not no_noise)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    for key, m in report.clean_metrics.items():
        print(f"noise-free {key}: peak {m['peak']:.4g}  final {m['final']:.3g}  rate {m['decay_rate']}")
    if report.table:
        print(f"{'comp':>4} {'std':>12} {'xhat_p':>10} {'xhat_pp':>10}")
        for c in range(1, 6):
            row = [report.table[(o, c)] for o in ("std", "xp", "xpp")]
            print(f"{c:>4} {row[0]:>12.4g} {row[1]:>10.4g} {row[2]:>10.4g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, default=None, help="YAML run configuration")
    common.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    common.add_argument("--seed", type=int, default=None, help="seed for randomized inits")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="hgobs", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("design-gains", parents=[common], help="assign eigenvalues of M")
    sub.add_parser("simulate", parents=[common], help="co-simulate plant and observers")
    sub.add_parser("sensitivity", parents=[common], help="linear noise-sensitivity sweep")
    bench = sub.add_parser("vdp-bench", parents=[common], help="Van der Pol benchmark")
    bench.add_argument("--no-noise", action="store_true", help="only the noise-free run")
    bench.add_argument("--l", dest="ell", type=float, default=None, help="override the high gain")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args.command, args.config)
        seed = args.seed if args.seed is not None else getattr(cfg, "seed", 0)
        if args.command == "design-gains":
            return cmd_design_gains(cfg, args.out, seed)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.out, seed)
        if args.command == "sensitivity":
            return cmd_sensitivity(cfg, args.out, seed)
        return cmd_vdp_bench(cfg, args.out, seed, no_noise=args.no_noise, ell=args.ell)
    except HgobsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
