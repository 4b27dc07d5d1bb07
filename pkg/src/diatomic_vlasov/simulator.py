"""Self-consistent nonlinear evolution with diagnostics and tracking.

The loop alternates field rebuilds and particle pushes on a macro step:
build the step field from the current particles, record diagnostics,
push every particle one macro step under that frozen field.  Tracked
seeds (the sixteen corners of the initial support box plus interior
low-discrepancy points) advance inside each macro interval at the fine
step and keep full sampled paths for event detection and certificate
replay.  Weights never change, so the particle-carried L1 and transported
max are conserved exactly; the continuation monitor compares the running
support box against the certificate's confinement box.

Everything is deterministic for a fixed config: sampling has no
randomness, reductions run in fixed order, and splitting tracked seeds
across worker threads (env DIATOMIC_VLASOV_THREADS) cannot change results
because seeds are independent and recombined in seed order.
"""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field, replace

import numpy as np
from scipy.stats import qmc

from . import hooke as _hooke
from .bounds import BoundCertificate, BoundParameters, build_certificate, certify
from .datum import BumpDatum, sample_datum
from .errors import ConfigError, EmptyEnsembleError
from .field import Ensemble, FieldSnapshot, StaticField, build_field
from .hooke import HookeModel, tangent_model, load_table_model
from .trajectory import (
    StepControl,
    TrajectoryPath,
    detect_events,
    integrate_batch,
    jacobian_estimate,
)
from .field import ParticleState

__all__ = [
    "RunConfig",
    "Diagnostics",
    "ContinuationStatus",
    "RunResult",
    "run",
    "diagnostics",
    "check_continuation",
    "dump_diagnostics_csv",
]

THREADS_ENV = "DIATOMIC_VLASOV_THREADS"


class ContinuationStatus(enum.Enum):
    PASS = "pass"
    WARN = "warn"
    FAIL = "fail"
    NA = "na"  # no certificate (zero-mass run)


@dataclass(frozen=True)
class Diagnostics:
    """Per-step scalars; the support box is over the live particles."""

    time: float
    L1: float
    Linf: float
    support_box: tuple
    sup_F: float
    E_kin: float
    E_osc: float
    event_count: int
    detJ_err: float
    status: ContinuationStatus = ContinuationStatus.NA
    violated: str = ""


_DATUM_KEYS = {"kind", "centers", "widths", "amplitude", "box", "grid", "path"}
_HOOKE_KEYS = {"kind", "epsilon", "table_path"}
_CONTROL_KEYS = {"dt", "eta_scale", "event_time_tol_factor", "event_eta_tol"}
_TOP_KEYS = {
    "hooke", "datum", "T", "dt_macro", "control", "tracked_boundary",
    "tracked_interior", "c_safety", "snapshot_every", "output_dir",
    "probe_grid", "n_max", "picard_tol", "continuation_margin",
    "detj_seeds", "detj_every", "trajectory", "bounds",
}


@dataclass(frozen=True)
class RunConfig:
    """Validated run configuration; unknown keys are rejected on load."""

    hooke: dict
    datum: dict
    T: float = 1.0
    dt_macro: float = 1e-2
    control: dict = dc_field(default_factory=dict)
    tracked_boundary: int = 16
    tracked_interior: int = 16
    c_safety: float = 1.5
    snapshot_every: int = 0
    output_dir: str | None = None
    probe_grid: int = 4096
    n_max: int = 8
    picard_tol: float = 0.0
    continuation_margin: float = 0.01
    detj_seeds: int = 0
    detj_every: int = 0
    trajectory: dict = dc_field(default_factory=dict)
    bounds: dict = dc_field(default_factory=dict)

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        unknown = set(raw) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        for key, allowed in (("hooke", _HOOKE_KEYS), ("datum", _DATUM_KEYS),
                             ("control", _CONTROL_KEYS)):
            sub = raw.get(key, {})
            if not isinstance(sub, dict):
                raise ConfigError(f"config section {key!r} must be an object")
            bad = set(sub) - allowed
            if bad:
                raise ConfigError(f"unknown keys in {key!r}: {sorted(bad)}")
        if "hooke" not in raw:
            raise ConfigError("config needs a 'hooke' section")
        cfg = cls(**{k: raw[k] for k in raw})
        if cfg.T <= 0.0 or cfg.dt_macro <= 0.0:
            raise ConfigError("T and dt_macro must be positive")
        return cfg

    def effective(self) -> dict:
        """Every effective value including defaults (for the manifest)."""
        out = {}
        for name in sorted(self.__dataclass_fields__):
            out[name] = getattr(self, name)
        return out

    def build_model(self) -> HookeModel:
        kind = self.hooke.get("kind", "tangent")
        eps = float(self.hooke.get("epsilon", 1.0))
        if kind == "tangent":
            return tangent_model(eps)
        if kind == "table":
            path = self.hooke.get("table_path")
            if not path:
                raise ConfigError("table models need hooke.table_path")
            return load_table_model(path, eps)
        raise ConfigError(f"unknown hooke kind {kind!r}")

    def build_control(self) -> StepControl:
        base = {"dt": self.dt_macro}
        base.update(self.control)
        return StepControl(**base)

    def build_datum(self):
        """(BumpDatum, box, grid) for bump data, or a particle Ensemble."""
        kind = self.datum.get("kind", "bumps")
        if kind == "particles":
            path = self.datum.get("path")
            if not path:
                raise ConfigError("particle data need datum.path")
            return Ensemble.load_csv(path)
        if kind != "bumps":
            raise ConfigError(f"unknown datum kind {kind!r}")
        try:
            centers = tuple(float(self.datum["centers"][a]) for a in ("x", "v", "omega", "eta"))
            widths = tuple(float(self.datum["widths"][a]) for a in ("x", "v", "omega", "eta"))
        except KeyError as exc:
            raise ConfigError(f"bump datum needs centers/widths per axis: {exc}") from exc
        amp = float(self.datum.get("amplitude", 1.0))
        datum = BumpDatum(centers=centers, widths=widths, amplitude=amp)
        box = self.datum.get("box")
        if box is None:
            box = datum.support()
        else:
            box = tuple((float(a), float(b)) for a, b in
                        (box[ax] for ax in ("x", "v", "omega", "eta")))
        grid = tuple(int(n) for n in self.datum.get("grid", (8, 8, 8, 8)))
        return datum, box, grid


@dataclass
class RunResult:
    final: Ensemble
    series: list
    tracked_paths: list
    certificate: BoundCertificate | None
    cert_reports: list
    config: RunConfig
    snapshots_dumped: list = dc_field(default_factory=list)


def _oscillatory_energy(ens: Ensemble, model: HookeModel) -> float:
    if len(ens) == 0:
        return 0.0
    u = _hooke.potential_to_midpoint(model, ens.omega)
    return float(np.sum(ens.w * (0.5 * ens.eta**2 + u)))


def diagnostics(ensemble: Ensemble, snapshot: FieldSnapshot, model: HookeModel,
                event_count: int = 0, detj_err: float = math.nan) -> Diagnostics:
    """All per-step scalars of an ensemble/field pair."""
    linf = math.nan
    if ensemble.f_values is not None and len(ensemble) > 0:
        linf = float(np.max(ensemble.f_values))
    return Diagnostics(
        time=ensemble.time,
        L1=ensemble.total_mass,
        Linf=linf,
        support_box=ensemble.support_box(),
        sup_F=snapshot.norms()[0],
        E_kin=float(np.sum(ensemble.w * 0.5 * ensemble.v**2)),
        E_osc=_oscillatory_energy(ensemble, model),
        event_count=event_count,
        detJ_err=detj_err)


def check_continuation(diag: Diagnostics, cert: BoundCertificate | None,
                       margin: float = 0.01) -> tuple[ContinuationStatus, str]:
    """Compare the support box against the certified box.

    Pass when strictly inside with the configured relative margin to
    spare, Warn when inside but within the margin (or exactly on the
    boundary), Fail with the violated coordinate otherwise.
    """
    if cert is None:
        return ContinuationStatus.NA, ""
    x_lo, x_hi, v_lo, v_hi, om_lo, om_hi, et_lo, et_hi = diag.support_box
    conf_width = cert.omega_hi - cert.omega_lo
    checks = (
        ("x_lower", -x_lo, cert.x_bound, margin * cert.x_bound),
        ("x_upper", x_hi, cert.x_bound, margin * cert.x_bound),
        ("v_lower", -v_lo, cert.v_bound, margin * cert.v_bound),
        ("v_upper", v_hi, cert.v_bound, margin * cert.v_bound),
        ("omega_lower", cert.omega_lo - om_lo, 0.0, margin * conf_width),
        ("omega_upper", om_hi - cert.omega_hi, 0.0, margin * conf_width),
        ("eta_lower", -et_lo, cert.H_envelope, margin * cert.H_envelope),
        ("eta_upper", et_hi, cert.H_envelope, margin * cert.H_envelope),
    )
    status = ContinuationStatus.PASS
    worst = ""
    for name, value, bound, m in checks:
        if value > bound:
            return ContinuationStatus.FAIL, name
        if value > bound - m:
            status = ContinuationStatus.WARN
            worst = name
    return status, worst


def _tracked_seeds(box, n_boundary: int, n_interior: int) -> np.ndarray:
    """Corner seeds (extremal for the certificate) plus interior Sobol."""
    x_lo, x_hi, v_lo, v_hi, om_lo, om_hi, et_lo, et_hi = box
    corners = []
    for xs in (x_lo, x_hi):
        for vs in (v_lo, v_hi):
            for os_ in (om_lo, om_hi):
                for es in (et_lo, et_hi):
                    corners.append((xs, vs, os_, es))
    corners = np.asarray(corners, dtype=float)[:n_boundary]
    if n_interior > 0:
        smp = qmc.Sobol(d=4, scramble=False)
        m = max(1, math.ceil(math.log2(max(2, n_interior))))
        pts = smp.random_base2(m)[:n_interior]
        lo = np.array([x_lo, v_lo, om_lo, et_lo])
        hi = np.array([x_hi, v_hi, om_hi, et_hi])
        hi = np.where(hi > lo, hi, lo + 1e-300)
        interior = qmc.scale(pts, lo, hi)
        return np.vstack([corners, interior]) if corners.size else interior
    return corners


def _advance_tracked(z, snap, model, t0, t1, control):
    """Advance tracked seeds one macro interval, recording fine samples.

    Honors DIATOMIC_VLASOV_THREADS by chunking the batch; chunks are
    independent and recombined in order, so the thread count cannot
    change the output.
    """
    n_threads = max(1, int(os.environ.get(THREADS_ENV, "1")))
    prov = StaticField(snap)
    if n_threads == 1 or z.shape[0] < 2 * n_threads:
        return integrate_batch(z, prov, model, t0, t1, control, record=True)
    chunks = np.array_split(np.arange(z.shape[0]), n_threads)
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        parts = list(pool.map(
            lambda idx: integrate_batch(z[idx], prov, model, t0, t1, control,
                                        record=True),
            chunks))
    finals = np.vstack([p[0] for p in parts])
    ts = parts[0][1]
    samples = np.concatenate([p[2] for p in parts], axis=1)
    fminus = np.concatenate([p[3] for p in parts], axis=1)
    return finals, ts, samples, fminus


def run(config: RunConfig):
    """Execute a self-consistent run; see RunResult for the outputs."""
    model = config.build_model()
    control = config.build_control()
    built = config.build_datum()
    if isinstance(built, Ensemble):
        ens = built
    else:
        datum, box, grid = built
        ens = sample_datum(datum, box, grid, model.epsilon)
    if len(ens) == 0:
        raise ConfigError("the sampled datum has no particles")
    g = model.guard
    om_lo, om_hi = float(ens.omega.min()), float(ens.omega.max())
    if not (g < om_lo and om_hi < model.epsilon - g):
        raise ConfigError(
            "datum support must lie strictly inside the omega domain "
            f"(0, {model.epsilon!r}); got [{om_lo!r}, {om_hi!r}]")

    support0 = ens.support_box()
    L1 = ens.total_mass
    cert = None
    if L1 > 0.0:
        eps = model.epsilon
        eps0 = min(om_lo, eps - om_hi, 0.49999 * eps)
        R = max(abs(support0[2]), abs(support0[3]),
                abs(support0[6]), abs(support0[7]), 1e-9)
        # C must dominate both the field bound 2*L1 and the bond-force level
        # at the support edges (else the support is not strictly between the
        # balance points and the excursion analysis cannot anchor there).
        edge = max(_hooke.force(model, om_lo), -_hooke.force(model, om_hi), 0.0)
        p = BoundParameters(epsilon=eps, epsilon0=eps0, R=R,
                            C_minus=2.0 * L1,
                            C=config.c_safety * max(2.0 * L1, edge),
                            model=model)
        cert = build_certificate(p, support0, config.T)

    n_tracked = config.tracked_boundary + config.tracked_interior
    tracked = _tracked_seeds(support0, config.tracked_boundary,
                             config.tracked_interior) if n_tracked > 0 else None

    n_steps = max(1, math.ceil(config.T / config.dt_macro - 1e-12))
    series: list[Diagnostics] = []
    snapshots_dumped = []
    z = np.stack([ens.x, ens.v, ens.omega, ens.eta], axis=1)
    t = 0.0
    track_t: list[np.ndarray] = []
    track_s: list[np.ndarray] = []
    track_f: list[np.ndarray] = []
    max_norm = 0.0
    detj = math.nan

    for k in range(n_steps + 1):
        snap = build_field(ens)
        max_norm = max(max_norm, snap.norms()[1])
        if config.detj_every > 0 and config.detj_seeds > 0 and \
                k % config.detj_every == 0:
            detj = _detj_probe(ens, snap, model, control, config.detj_seeds)
        d = diagnostics(ens, snap, model, detj_err=detj)
        status, violated = check_continuation(d, cert, config.continuation_margin)
        series.append(replace(d, status=status, violated=violated))
        if config.snapshot_every > 0 and k % config.snapshot_every == 0:
            snapshots_dumped.append((k, snap, ens))
        if k == n_steps:
            break
        target = config.T if k == n_steps - 1 else (k + 1) * config.T / n_steps
        if tracked is not None:
            tracked, ts_k, smp_k, fm_k = _advance_tracked(
                tracked, snap, model, t, target, control)
            if track_t:
                track_t.append(ts_k[1:])
                track_s.append(smp_k[1:])
                track_f.append(fm_k)  # boundary value replaced by new snapshot
            else:
                track_t.append(ts_k)
                track_s.append(smp_k)
                track_f.append(fm_k)
        z = integrate_batch(z, StaticField(snap), model, t, target, control)
        t = target
        ens = ens.with_coords(z[:, 0], z[:, 1], z[:, 2], z[:, 3], time=t)

    tracked_paths: list[TrajectoryPath] = []
    cert_reports = []
    if tracked is not None and track_t:
        # Stitch per-interval records: at interval boundaries keep the new
        # snapshot's force value (piecewise-constant-left convention).
        fm_all = _stitch_forces(track_f)
        t_all = np.concatenate(track_t)
        s_all = np.concatenate(track_s, axis=0)
        for i in range(s_all.shape[1]):
            path = TrajectoryPath(
                t=t_all, x=s_all[:, i, 0], v=s_all[:, i, 1],
                omega=s_all[:, i, 2], eta=s_all[:, i, 3],
                f_minus=fm_all[:, i], min_dt=np.full(t_all.shape, math.nan),
                max_field_norm=max_norm, control=control)
            if cert is not None:
                path.events = detect_events(path, cert.balance)
                cert_reports.append(certify(path, cert))
            tracked_paths.append(path)
        counts = _cumulative_event_counts(series, tracked_paths)
        series = [replace(d, event_count=c) for d, c in zip(series, counts)]

    return RunResult(final=ens, series=series, tracked_paths=tracked_paths,
                     certificate=cert, cert_reports=cert_reports, config=config,
                     snapshots_dumped=snapshots_dumped)


def _stitch_forces(track_f: list[np.ndarray]) -> np.ndarray:
    # Interval k's record carries rows for samples [t_k ... t_{k+1}]; the
    # row at t_{k+1} is superseded by interval k+1's first row (built from
    # the rebuilt snapshot), except at the final time.
    parts = [p[:-1] for p in track_f[:-1]] + [track_f[-1]]
    return np.concatenate(parts, axis=0)


def _cumulative_event_counts(series, paths) -> list[int]:
    times = sorted(ev.time for p in paths for ev in p.events)
    out = []
    for d in series:
        out.append(int(np.searchsorted(times, d.time + 1e-15)))
    return out


def _detj_probe(ens: Ensemble, snap, model, control, n_seeds: int) -> float:
    box = ens.support_box()
    seeds = _tracked_seeds(box, 0, n_seeds)
    provider = StaticField(snap)
    worst = 0.0
    for row in seeds:
        st = ParticleState(x=row[0], v=row[1], omega=row[2], eta=row[3])
        det = jacobian_estimate(st, provider, model, t=10 * control.dt,
                                h=1e-5, control=control)
        worst = max(worst, abs(det - 1.0))
    return worst


def dump_diagnostics_csv(series, path) -> None:
    """Stable column set; one row per macro step."""
    cols = ["t", "L1", "Linf", "x_lo", "x_hi", "v_lo", "v_hi", "w_lo", "w_hi",
            "eta_lo", "eta_hi", "supF", "E_kin", "E_osc", "detJ_err", "status"]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(cols)
        for d in series:
            row = [d.time, d.L1, d.Linf, *d.support_box, d.sup_F,
                   d.E_kin, d.E_osc, d.detJ_err]
            wr.writerow([f"{c:.17g}" for c in row] + [d.status.value])
