"""Command-line entry point.

Subcommands: validate-hooke, trajectory, bounds, picard, simulate,
certify.  Configuration is a single JSON document; ``--set key=value``
overrides top-level scalars.  Exit codes: 0 success, 2 config error,
3 numerical failure (step underflow / no confinement), 4 certificate or
hypothesis violation.  All floating output uses 17 significant digits so
values round-trip exactly.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import BoundCertificate, BoundParameters, build_certificate, certify
from .errors import (
    ConfigError,
    DiatomicVlasovError,
    NoConfinementError,
    StepUnderflowError,
)
from .field import ConstantField, ParticleState, zero_field
from .hooke import validate_model
from .picard import dump_iteration_log, iterate
from .simulator import RunConfig, dump_diagnostics_csv, run
from .trajectory import StepControl, TrajectoryPath, detect_events, integrate

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_VIOLATION = 4

_F = "%.17g"


def _fmt(x: float) -> str:
    return _F % x


def _load_config(path: str, overrides) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, _, val = item.partition("=")
        try:
            raw[key] = json.loads(val)
        except json.JSONDecodeError:
            raw[key] = val
    return RunConfig.from_dict(raw)


def _out_dir(cfg: RunConfig, arg: str | None) -> Path:
    out = Path(arg or cfg.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_validate_hooke(cfg: RunConfig, args) -> int:
    model = cfg.build_model()
    report = validate_model(model, grid_size=args.grid)
    print(json.dumps({"passed": report.passed,
                      "failures": list(report.failures),
                      "worst": report.worst,
                      "grid_size": report.grid_size}, indent=2))
    return EXIT_OK if report.passed else EXIT_VIOLATION


def _cmd_trajectory(cfg: RunConfig, args) -> int:
    model = cfg.build_model()
    spec = cfg.trajectory
    seed = spec.get("seed")
    if not seed:
        raise ConfigError("trajectory runs need a trajectory.seed object")
    state = ParticleState(x=float(seed.get("x", 0.0)), v=float(seed.get("v", 0.0)),
                          omega=float(seed["omega"]), eta=float(seed.get("eta", 0.0)))
    T = float(spec.get("T", cfg.T))
    control = StepControl(dt=float(spec.get("dt", cfg.dt_macro)))
    fld = spec.get("field", {"kind": "zero"})
    if fld.get("kind", "zero") == "zero":
        provider = zero_field()
    elif fld["kind"] == "constant":
        provider = ConstantField(float(fld.get("f_plus", 0.0)),
                                 float(fld.get("f_minus", 0.0)))
    else:
        raise ConfigError(f"unknown trajectory field kind {fld['kind']!r}")
    balance = None
    if "balance_level" in spec:
        from .hooke import balance_points
        balance = balance_points(model, float(spec["balance_level"]))
    path = integrate(state, provider, model, 0.0, T, control, balance=balance)
    out = _out_dir(cfg, args.output_dir)
    path.dump_csv(out / "path.csv")
    path.dump_events_csv(out / "events.csv")
    print(f"wrote {out / 'path.csv'} ({len(path)} samples, "
          f"{len(path.events)} events)")
    return EXIT_OK


def _bound_parameters(cfg: RunConfig, model) -> tuple[BoundParameters, tuple, float]:
    spec = cfg.bounds
    if spec.get("support_box"):
        box = tuple(float(c) for c in spec["support_box"])
    else:
        built = cfg.build_datum()
        if isinstance(built, tuple):
            from .datum import sample_datum
            datum, dbox, grid = built
            ens = sample_datum(datum, dbox, grid, model.epsilon)
        else:
            ens = built
        box = ens.support_box()
        spec = dict(spec)
        from .hooke import force as _force
        edge = max(_force(model, box[4]), -_force(model, box[5]), 0.0)
        spec.setdefault("C_minus", 2.0 * ens.total_mass)
        spec.setdefault("C", cfg.c_safety * max(2.0 * ens.total_mass, edge))
    eps = model.epsilon
    eps0 = float(spec.get("epsilon0", min(box[4], eps - box[5], 0.49999 * eps)))
    R = float(spec.get("R", max(abs(box[2]), abs(box[3]),
                                abs(box[6]), abs(box[7]), 1e-9)))
    p = BoundParameters(epsilon=eps, epsilon0=eps0, R=R,
                        C_minus=float(spec["C_minus"]), C=float(spec["C"]),
                        model=model)
    return p, box, float(spec.get("T", cfg.T))


def _cmd_bounds(cfg: RunConfig, args) -> int:
    model = cfg.build_model()
    p, box, T = _bound_parameters(cfg, model)
    cert = build_certificate(p, box, T)
    print(cert.to_json(indent=2))
    if args.output_dir:
        out = _out_dir(cfg, args.output_dir)
        (out / "certificate.json").write_text(cert.to_json(indent=2))
    return EXIT_OK


def _cmd_picard(cfg: RunConfig, args) -> int:
    model = cfg.build_model()
    built = cfg.build_datum()
    if not isinstance(built, tuple):
        raise ConfigError("picard runs need a bump datum")
    datum, box, grid = built
    records = iterate(datum, box, grid, model, T=cfg.T, n_max=cfg.n_max,
                      probe_grid=cfg.probe_grid, control=cfg.build_control(),
                      dt_macro=cfg.dt_macro, tol=cfg.picard_tol)
    out = _out_dir(cfg, args.output_dir)
    dump_iteration_log(records, out / "iteration_log.csv")
    for r in records:
        print(f"n={r.n} sup_delta={_fmt(r.sup_delta)} supF={_fmt(r.sup_F)}")
    return EXIT_OK


def _write_run_outputs(result, out: Path, seed_report: bool) -> None:
    dump_diagnostics_csv(result.series, out / "diagnostics.csv")
    manifest = {
        "version": __version__,
        "config": json.loads(json.dumps(result.config.effective(), default=str)),
        "certificate": result.certificate.to_dict() if result.certificate else None,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    result.final.dump_csv(out / "ensemble_final.csv")
    for k, snap, ens in result.snapshots_dumped:
        snap.dump_csv(out / f"field_{k:06d}.csv")
        ens.dump_csv(out / f"ensemble_{k:06d}.csv")
    if seed_report:
        for i, path in enumerate(result.tracked_paths):
            path.dump_csv(out / f"seed_{i:03d}_path.csv")
            path.dump_events_csv(out / f"seed_{i:03d}_events.csv")
            np.savetxt(out / f"seed_{i:03d}_aux.csv",
                       np.column_stack([path.t, path.f_minus]),
                       delimiter=",", header="t,f_minus", comments="",
                       fmt="%.17g")
        reports = [r.to_dict() for r in result.cert_reports]
        (out / "cert_reports.json").write_text(json.dumps(reports, indent=2))
        (out / "max_field_norm.json").write_text(json.dumps(
            {"max_field_norm": result.tracked_paths[0].max_field_norm
             if result.tracked_paths else 0.0}))


def _cmd_simulate(cfg: RunConfig, args) -> int:
    result = run(cfg)
    out = _out_dir(cfg, args.output_dir)
    _write_run_outputs(result, out, seed_report=args.seed_report)
    n_fail = sum(1 for d in result.series
                 if d.status.value == "fail")
    print(f"simulated T={_fmt(cfg.T)} with {len(result.final)} particles; "
          f"{len(result.series)} diagnostic rows; "
          f"{sum(len(p.events) for p in result.tracked_paths)} events; "
          f"continuation failures: {n_fail}")
    if result.cert_reports and not all(r.passed for r in result.cert_reports):
        print("certificate violations among tracked seeds", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


def _cmd_certify(args) -> int:
    rundir = Path(args.path)
    manifest = json.loads((rundir / "manifest.json").read_text())
    if not manifest.get("certificate"):
        raise ConfigError(f"{rundir}/manifest.json has no certificate")
    cert = BoundCertificate.from_dict(manifest["certificate"])
    norm_file = rundir / "max_field_norm.json"
    max_norm = 0.0
    if norm_file.exists():
        max_norm = float(json.loads(norm_file.read_text())["max_field_norm"])
    control = StepControl(dt=float(manifest["config"].get("dt_macro", 1e-2)))
    reports = []
    any_fail = False
    for pth in sorted(rundir.glob("seed_*_path.csv")):
        data = np.loadtxt(pth, delimiter=",", skiprows=1, ndmin=2)
        aux = np.loadtxt(pth.with_name(pth.name.replace("_path", "_aux")),
                         delimiter=",", skiprows=1, ndmin=2)
        path = TrajectoryPath(
            t=data[:, 0], x=data[:, 1], v=data[:, 2], omega=data[:, 3],
            eta=data[:, 4], f_minus=aux[:, 1],
            min_dt=np.full(data.shape[0], np.nan),
            max_field_norm=max_norm, control=control)
        path.events = detect_events(path, cert.balance)
        rep = certify(path, cert, slack=args.slack)
        reports.append({"seed": pth.name, **rep.to_dict()})
        any_fail = any_fail or not rep.passed
    print(json.dumps(reports, indent=2))
    return EXIT_VIOLATION if any_fail else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="diatomic-vlasov",
        description="1D diatomic Vlasov-Poisson simulator and bound certifier")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--set", action="append", dest="overrides", metavar="KEY=VAL",
                       help="override a top-level config scalar")
        p.add_argument("--output-dir", default=None)

    p = sub.add_parser("validate-hooke", help="check the force hypotheses")
    add_common(p)
    p.add_argument("--grid", type=int, default=1024)

    p = sub.add_parser("trajectory", help="integrate one characteristic")
    add_common(p)

    p = sub.add_parser("bounds", help="print the bound certificate")
    add_common(p)

    p = sub.add_parser("picard", help="run the fixed-point rounds")
    add_common(p)

    p = sub.add_parser("simulate", help="self-consistent run")
    add_common(p)
    p.add_argument("--seed-report", action="store_true",
                   help="emit tracked-seed paths and their certificate reports")

    p = sub.add_parser("certify", help="re-check dumped seed paths")
    p.add_argument("--path", required=True, help="run directory")
    p.add_argument("--slack", type=float, default=1e-6)
    return ap


def dispatch(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "certify":
            return _cmd_certify(args)
        cfg = _load_config(args.config, args.overrides)
        if args.command == "validate-hooke":
            return _cmd_validate_hooke(cfg, args)
        if args.command == "trajectory":
            return _cmd_trajectory(cfg, args)
        if args.command == "bounds":
            return _cmd_bounds(cfg, args)
        if args.command == "picard":
            return _cmd_picard(cfg, args)
        if args.command == "simulate":
            return _cmd_simulate(cfg, args)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepUnderflowError, NoConfinementError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, DiatomicVlasovError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
