"""Command-line front end.

Subcommands
    check-conditions   certify a preset's hypotheses and print the table
    verify-identity    residual battery for the multiplier identities
    norms              norm inequality suite on random test functions
    solve              one discrete solve from a config, saved to disk
    verify-estimate    estimate sweep for a scenario config
    run                full scenario pipeline with JSON + CSV reports

Exit codes: 0 all asserted checks pass, 1 a check failed, 2 bad config.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .conditions import SampleCloud, certify
from .fields import TestFunction
from .harness import (ConditionsFailed, ConfigError, Scenario, ring_source,
                      run_scenario_file, verify_estimate)
from .multiplier import (divergence_fd, flux_divergences, flux_values,
                         identity_residual_prop21, identity_residual_thm22)
from .norms import ShellQuadrature, lemma_suite
from .presets import PRESET_NAMES, get_preset, random_coefficients
from .solver import (Grid3DSolveSpec, RadialSolveSpec, save_solution,
                     solve_3d, solve_radial)
from .weight import ConstPhi, SurfaceProximity, Weight


def _load_config(path):
    if path is None:
        raise ConfigError("--config is required for this subcommand")
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {path}: {e}")


def cmd_check_conditions(args) -> int:
    preset = get_preset(args.preset)
    cloud = SampleCloud.build(preset.coeffs.n, preset.domain, seed=args.seed)
    report = certify(preset.coeffs, args.mode, preset.domain, cloud,
                     stability_check=args.stability)
    if args.json:
        print(report.to_json())
    else:
        print(report.table())
    return 0 if report.passed else 1


def cmd_verify_identity(args) -> int:
    rng = np.random.default_rng(args.seed)
    pts_per = max(1, args.points // args.trials)
    worst = 0.0
    worst_fd = 0.0
    checked = 0
    for _ in range(args.trials):
        coeffs = random_coefficients(rng)
        v = TestFunction.random(coeffs.n, rng)
        R = rng.uniform(1.0, 3.0)
        psi = Weight(R, coeffs.n)
        phi = ConstPhi(rng.uniform(0.5, 1.5))
        lam, eps = rng.normal(scale=3.0), rng.uniform(0.05, 1.0)
        V = rng.normal()
        done = 0
        while done < pts_per:
            x = rng.normal(scale=2.0, size=coeffs.n)
            try:
                r1, r2 = identity_residual_prop21(
                    v, coeffs, V, psi, phi, x, relative=True,
                    margin=args.surface_margin)
                r3, r4 = identity_residual_thm22(
                    v, coeffs, lam, eps, psi, phi, x, relative=True,
                    margin=args.surface_margin)
            except SurfaceProximity:
                continue
            worst = max(worst, r1, r2, r3, r4)
            if done == 0:
                div_cf, _ = flux_divergences(v, coeffs, V, psi, phi, x)
                div_fd = divergence_fd(
                    lambda Y: flux_values(v, coeffs, V, psi, phi, Y)[0], x)
                worst_fd = max(worst_fd, abs(div_fd - div_cf)
                               / max(abs(div_cf), 1.0))
            done += 1
            checked += 1
    print(f"identity residuals: worst {worst:.3e} over {checked} points "
          f"({args.trials} draws); divergence oracle gap {worst_fd:.3e}")
    ok = worst < args.tol and worst_fd < 1e-6
    print("pass" if ok else "FAIL")
    return 0 if ok else 1


def cmd_norms(args) -> int:
    rng = np.random.default_rng(args.seed)
    quad = ShellQuadrature.build(3)

    def make_v(i):
        return TestFunction.random(3, np.random.default_rng(args.seed + i))

    report = lemma_suite(make_v, None, args.delta, args.trials, quad,
                         quad_slack=args.slack)
    bad = []
    for rec in report:
        mark = "pass" if rec["pass"] else "FAIL"
        if not rec["pass"]:
            bad.append(rec["name"])
        print(f"  {rec['name']:28s} worst ratio "
              f"{rec['worst_ratio']:10.6f}  {mark}")
    return 0 if not bad else 1


def cmd_solve(args) -> int:
    cfg = _load_config(args.config)
    kind = cfg.get("kind", "radial")
    fsrc = ring_source(**cfg.get("source", {}))
    if kind == "radial":
        spec = RadialSolveSpec(
            cfg.get("n", 3), cfg.get("r0", 0.0), cfg.get("Rmax", 200.0),
            cfg.get("m", 20000), lambda r: 1.0,
            lambda r: 0.0, cfg["lambda"], cfg["eps"], fsrc)
        result = solve_radial(spec)
    elif kind == "grid3d":
        preset = get_preset(cfg["preset"], **cfg.get("preset_kwargs", {}))
        spec = Grid3DSolveSpec(
            cfg.get("L", 8.0), cfg.get("h", 0.25), preset.coeffs,
            preset.domain, cfg["lambda"], cfg["eps"],
            lambda X: np.asarray(fsrc(np.linalg.norm(X, axis=1)),
                                 dtype=complex),
            rtol=cfg.get("rtol", 1e-8))
        result = solve_3d(spec)
    else:
        raise ConfigError(f"unknown solve kind {kind!r}")
    print(f"residual {result.relative_residual:.3e} "
          f"iterations {result.iterations}")
    if result.truncation_warning:
        print("warning:", result.truncation_warning)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, cfg.get("name", "solution") + ".hls")
        save_solution(path, result)
        print("saved", path)
    return 0


def cmd_verify_estimate(args) -> int:
    cfg = _load_config(args.config)
    scenario = Scenario.from_dict(cfg)
    if args.seed is not None:
        scenario.seed = args.seed
    try:
        records, summary, report = verify_estimate(scenario,
                                                   force=args.force)
    except ConditionsFailed as e:
        print(str(e))
        return 1
    if args.json:
        from .harness import _record_json
        print(json.dumps({"summary": summary,
                          "records": [_record_json(r) for r in records]},
                         indent=2, sort_keys=True, default=float))
    else:
        for r in records:
            mark = "pass" if r.passed else "FAIL"
            print(f"lambda={r.lam:+.3g} eps={r.eps:.3g}  "
                  f"ratio={r.ratio():.3e}  [{mark}]")
        print(f"max main ratio {summary['max_main_ratio']:.3e}")
    return 0 if summary["all_passed"] else 1


def cmd_run(args) -> int:
    return run_scenario_file(args.config, outdir=args.out, force=args.force,
                             seed=args.seed, emit_json=args.json)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="helmlab",
        description="resolvent-estimate verification lab")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--json", action="store_true",
                   help="emit machine-readable JSON instead of tables")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("check-conditions",
                       help="certify a preset's hypotheses")
    s.add_argument("--preset", required=True, choices=PRESET_NAMES)
    s.add_argument("--mode", default="homogeneous",
                   choices=("homogeneous", "nonhomogeneous"))
    s.add_argument("--stability", action="store_true")
    s.set_defaults(func=cmd_check_conditions)

    s = sub.add_parser("verify-identity",
                       help="multiplier identity residual battery")
    s.add_argument("--trials", type=int, default=5)
    s.add_argument("--points", type=int, default=100)
    s.add_argument("--tol", type=float, default=1e-7)
    s.add_argument("--surface-margin", type=float, default=0.05)
    s.set_defaults(func=cmd_verify_identity)

    s = sub.add_parser("norms", help="norm inequality suite")
    s.add_argument("--trials", type=int, default=20)
    s.add_argument("--delta", type=float, default=0.5)
    s.add_argument("--slack", type=float, default=1e-3)
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("solve", help="one discrete solve from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("verify-estimate",
                       help="estimate sweep for a scenario config")
    s.add_argument("--config", required=True)
    s.add_argument("--force", action="store_true",
                   help="run the sweep even if certification fails")
    s.set_defaults(func=cmd_verify_estimate)

    s = sub.add_parser("run", help="full scenario pipeline with reports")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=None)
    s.add_argument("--force", action="store_true")
    s.set_defaults(func=cmd_run)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
