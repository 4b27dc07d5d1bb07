"""Characteristic integration for single states and lockstep bundles.

The flow is

    x' = v,   v' = Fp(t, x, omega),
    omega' = eta,   eta' = Fm(t, x, omega) + Fh(omega),

with (Fp, Fm) the sum/difference field pair and Fh the bond force.  One
step is a kick-drift-kick split: half-kicks apply the slow field pair,
the drift advances x linearly and the (omega, eta) pair under the bond
force alone.  Because the bond force diverges at the walls, the inner
(omega, eta) advance is sub-cycled: if |Fh|*dt exceeds the configured eta
scale, the pair takes m uniform velocity-Verlet substeps sized so each
substep respects the same bound.  A step whose drift would leave the
guarded bond domain is rejected and retried at dt/2, down to dt/2**10;
past that the step reports a blow-up candidate instead of emitting an
out-of-domain state.

Between stored field snapshots the field is held piecewise constant
(left snapshot), matching the operator-split update order.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import hooke as _hooke
from .errors import (
    DomainError,
    FieldGapError,
    SegmentOutOfRangeError,
    StepUnderflowError,
)
from .field import ParticleState
from .hooke import BalancePoints, HookeModel

__all__ = [
    "StepControl",
    "TrajectoryPath",
    "EventKind",
    "OscillationEvent",
    "push",
    "integrate",
    "integrate_batch",
    "energy_residual",
    "detect_events",
    "jacobian_estimate",
]

# Halvings allowed before a step reports underflow.
MAX_HALVINGS = 10
# Cap on inner substeps per step; beyond this the step is halved instead.
MAX_SUBSTEPS = 4096
# Fraction of the stiffest reachable local period one inner substep may span.
WALL_RESOLUTION = 0.05


@dataclass(frozen=True)
class StepControl:
    """Integrator knobs.

    dt            base step; also the path sampling interval.
    eta_scale     bound on |Fh|*substep, the impulse one inner substep may
                  impart to eta; controls sub-cycling near the walls.
    event_time_tol_factor   event-location tolerance as a fraction of dt.
    event_eta_tol tangency threshold: |eta| below this at a balance-point
                  touch is classified as a turning event.
    """

    dt: float = 1e-3
    eta_scale: float = 0.25
    event_time_tol_factor: float = 1e-3
    event_eta_tol: float = 1e-7

    def __post_init__(self):
        if not (self.dt > 0.0):
            raise DomainError("dt must be positive")
        if not (self.eta_scale > 0.0):
            raise DomainError("eta_scale must be positive")

    @property
    def event_time_tol(self) -> float:
        return self.event_time_tol_factor * self.dt


class EventKind(enum.Enum):
    EXIT_CHAOTIC = "exit"
    STOPPING_TIME = "stopping"
    RETURN_TIME = "return"


@dataclass(frozen=True)
class OscillationEvent:
    kind: EventKind
    time: float
    state: ParticleState
    boundary: str | None = None  # "omega_m" | "omega_M" for balance events


@dataclass
class TrajectoryPath:
    """Sampled characteristic with per-sample force log and events.

    ``f_minus`` holds the difference field at each sample, ``min_dt`` the
    smallest sub-step accepted inside the preceding interval, and
    ``max_field_norm`` the largest sup|F+-| among the snapshots used.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    eta: np.ndarray
    f_minus: np.ndarray
    min_dt: np.ndarray
    max_field_norm: float
    control: StepControl
    events: list = dc_field(default_factory=list)

    def __len__(self) -> int:
        return self.t.size

    def state_at(self, i: int) -> ParticleState:
        return ParticleState(x=float(self.x[i]), v=float(self.v[i]),
                             omega=float(self.omega[i]), eta=float(self.eta[i]))

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "x", "v", "omega", "eta"])
            for i in range(len(self)):
                wr.writerow([f"{c:.17g}" for c in
                             (self.t[i], self.x[i], self.v[i], self.omega[i], self.eta[i])])

    def dump_events_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "kind", "omega", "eta"])
            for ev in self.events:
                wr.writerow([f"{ev.time:.17g}", ev.kind.value,
                             f"{ev.state.omega:.17g}", f"{ev.state.eta:.17g}"])


def _force_scalar(model: HookeModel, om: float) -> float:
    if model.kind is _hooke.HookeKind.TANGENT:
        return -math.tan(math.pi / model.epsilon * (om - 0.5 * model.epsilon))
    return float(model.force_fn(om))


def _substeps_scalar(model: HookeModel, om: float, et: float, dt: float,
                     control: StepControl) -> int:
    """Inner substep count: each substep must respect the impulse bound
    |Fh|*delta <= eta_scale AND, for the tangent law, resolve the stiffest
    local frequency sqrt(|Fh'|) the step can reach.  The smallest
    reachable wall distance is the current one minus the shell-bounded
    travel, floored at the turning clearance of the energy shell (a fast
    bond turns within a thin layer near the wall; jumping over it would
    leave the domain)."""
    fh = abs(_force_scalar(model, om))
    m = max(1, math.ceil(fh * abs(dt) / control.eta_scale))
    if model.kind is _hooke.HookeKind.TANGENT and et != 0.0:
        eps = model.epsilon
        energy = 0.5 * et * et + float(_tangent_potential_scalar(model, om))
        clearance = (eps / math.pi) * math.asin(min(1.0, math.exp(-math.pi * energy / eps)))
        clearance = max(clearance, 0.25 * model.guard)
        travel = abs(dt) * math.sqrt(2.0 * energy)
        outward = et > 0.0 if dt > 0.0 else et < 0.0
        ahead = (eps - om) if outward else om
        u_now = min(om, eps - om)
        u_min = min(max(clearance, min(u_now, ahead - travel)), 0.5 * eps)
        f_max = 1.0 / math.tan(math.pi * u_min / eps)
        freq = math.sqrt((math.pi / eps) * (1.0 + f_max * f_max))
        m = max(m, math.ceil(abs(dt) * freq / WALL_RESOLUTION))
    return int(m)


def _tangent_potential_scalar(model: HookeModel, om: float) -> float:
    eps = model.epsilon
    comp = eps - om if om >= 0.5 * eps else om
    return -(eps / math.pi) * math.log(math.sin(math.pi * comp / eps))


class _Rejected(Exception):
    pass


def _advance_scalar(x, v, om, et, snap, model: HookeModel, dt, control: StepControl,
                    depth: int = 0):
    """One kick-drift-kick step; recursive halving on guard-band exits.

    Returns (x, v, omega, eta, smallest dt accepted).
    """
    lo = model.guard
    hi = model.epsilon - model.guard
    try:
        fp, fm = snap.pm(x, om)
        v1 = v + 0.5 * dt * fp
        e1 = et + 0.5 * dt * fm

        fh = _force_scalar(model, om)
        m = _substeps_scalar(model, om, e1, dt, control)
        if m > MAX_SUBSTEPS:
            raise _Rejected
        d = dt / m
        e1 += 0.5 * d * fh
        om1 = om
        for k in range(m):
            om1 += d * e1
            if not (lo < om1 < hi):
                raise _Rejected
            fh = _force_scalar(model, om1)
            if abs(fh) * abs(d) > control.eta_scale:
                raise _Rejected
            e1 += (d if k < m - 1 else 0.5 * d) * fh
        x1 = x + dt * v1

        fp2, fm2 = snap.pm(x1, om1)
        v2 = v1 + 0.5 * dt * fp2
        e2 = e1 + 0.5 * dt * fm2
        return x1, v2, om1, e2, dt
    except _Rejected:
        if depth >= MAX_HALVINGS:
            raise StepUnderflowError(
                f"step underflow at dt={dt!r}: omega={om!r} keeps leaving the guard band "
                "(blow-up candidate; by the global confinement result this indicates a "
                "discretization artifact)",
                state=ParticleState(x=x, v=v, omega=om, eta=et))
        half = 0.5 * dt
        x, v, om, et, d1 = _advance_scalar(x, v, om, et, snap, model, half, control, depth + 1)
        x, v, om, et, d2 = _advance_scalar(x, v, om, et, snap, model, half, control, depth + 1)
        return x, v, om, et, min(d1, d2)


def push(state: ParticleState, field, model: HookeModel, dt: float,
         control: StepControl | None = None) -> ParticleState:
    """Advance one state by a single step under a frozen field snapshot."""
    if not (dt > 0.0):
        raise DomainError("dt must be positive")
    control = control or StepControl(dt=dt)
    g = model.guard
    if not (g < state.omega < model.epsilon - g):
        raise DomainError(f"omega={state.omega!r} outside the guarded bond domain")
    x, v, om, et, _ = _advance_scalar(state.x, state.v, state.omega, state.eta,
                                      field, model, dt, control)
    return ParticleState(x=x, v=v, omega=om, eta=et, w=state.w)


def _segments(provider, t0: float, t1: float):
    """Split [t0, t1] (either direction) at the provider's breakpoints."""
    brk = np.asarray(getattr(provider, "breakpoints", np.empty(0)), dtype=float)
    a, b = (t0, t1) if t1 >= t0 else (t1, t0)
    cuts = brk[(brk > a) & (brk < b)]
    pts = np.concatenate([[a], cuts, [b]])
    pts = np.unique(pts)
    if t1 >= t0:
        pairs = list(zip(pts[:-1], pts[1:]))
    else:
        pts = pts[::-1]
        pairs = list(zip(pts[:-1], pts[1:]))
    return pairs


def _snapshot_for(provider, lo: float, hi: float):
    # Piecewise-constant-left: the snapshot governing (lo, hi) is the one
    # at the left endpoint, regardless of traversal direction.
    return provider.snapshot_at(min(lo, hi))


def integrate(state: ParticleState, field_provider, model: HookeModel,
              t0: float, t1: float, control: StepControl,
              balance: BalancePoints | None = None) -> TrajectoryPath:
    """Integrate one characteristic from t0 to t1, sampling every control.dt.

    The path records the difference field at each sample and the largest
    field norm seen.  If ``balance`` is given, oscillation events are
    detected on the sampled path (sign-change location between samples).
    Raises FieldGapError if the provider does not cover [t0, t1].
    """
    if t1 <= t0:
        raise DomainError("t1 must exceed t0")
    ts = [t0]
    xs = [state.x]
    vs = [state.v]
    oms = [state.omega]
    ets = [state.eta]
    fms = []
    mds = [math.nan]
    max_norm = 0.0

    x, v, om, et = state.x, state.v, state.omega, state.eta
    for lo, hi in _segments(field_provider, t0, t1):
        snap = _snapshot_for(field_provider, lo, hi)
        max_norm = max(max_norm, snap.norms()[1])
        fms.append(snap.pm(x, om)[1])
        t = lo
        n = max(1, math.ceil((hi - lo) / control.dt - 1e-12))
        for k in range(n):
            target = hi if k == n - 1 else lo + (k + 1) * (hi - lo) / n
            dt = target - t
            x, v, om, et, mind = _advance_scalar(x, v, om, et, snap, model, dt, control)
            t = target
            ts.append(t)
            xs.append(x)
            vs.append(v)
            oms.append(om)
            ets.append(et)
            mds.append(mind)
            if k < n - 1:
                fms.append(snap.pm(x, om)[1])
    # Difference field at the final sample, from the last governing snapshot.
    fms.append(_snapshot_for(field_provider, ts[-2] if len(ts) > 1 else t0, t1).pm(x, om)[1])

    path = TrajectoryPath(
        t=np.asarray(ts), x=np.asarray(xs), v=np.asarray(vs),
        omega=np.asarray(oms), eta=np.asarray(ets),
        f_minus=np.asarray(fms), min_dt=np.asarray(mds),
        max_field_norm=max_norm, control=control)
    if balance is not None:
        path.events = detect_events(path, balance)
    return path


def integrate_batch(states: np.ndarray, field_provider, model: HookeModel,
                    t0: float, t1: float, control: StepControl,
                    record: bool = False):
    """Advance an (n, 4) array of states [x, v, omega, eta] in lockstep.

    Forward (t1 > t0) or backward (t1 < t0).  Vectorized along the batch;
    members whose step is rejected fall back to scalar halving for that
    step only, so lockstep sampling is preserved.  With ``record=True``
    returns (final, t_samples, samples, f_minus) where samples has shape
    (n_samples, n, 4); otherwise returns the final array.
    """
    z = np.array(states, dtype=float)
    if z.ndim != 2 or z.shape[1] != 4:
        raise DomainError("states must be an (n, 4) array")
    lo = model.guard
    hi = model.epsilon - model.guard
    ts = [t0]
    recs = [z.copy()] if record else None
    fmr = [] if record else None

    for seg_lo, seg_hi in _segments(field_provider, t0, t1):
        snap = _snapshot_for(field_provider, seg_lo, seg_hi)
        if record:
            fmr.append(snap.pm(z[:, 0], z[:, 2])[1])
        span = seg_hi - seg_lo
        n = max(1, math.ceil(abs(span) / control.dt - 1e-12))
        t = seg_lo
        for k in range(n):
            target = seg_hi if k == n - 1 else seg_lo + (k + 1) * span / n
            dt = target - t
            z = _advance_batch(z, snap, model, dt, control, lo, hi)
            t = target
            ts.append(t)
            if record:
                recs.append(z.copy())
                if k < n - 1:
                    fmr.append(snap.pm(z[:, 0], z[:, 2])[1])
    if record:
        fmr.append(_snapshot_for(field_provider, ts[-2] if len(ts) > 1 else t0, t1)
                   .pm(z[:, 0], z[:, 2])[1])
        return z, np.asarray(ts), np.stack(recs), np.stack(fmr)
    return z


def _advance_batch(z, snap, model: HookeModel, dt, control: StepControl, lo, hi):
    x, v, om, et = z[:, 0], z[:, 1], z[:, 2], z[:, 3]
    fp, fm = snap.pm(x, om)
    v1 = v + 0.5 * dt * fp
    e1 = et + 0.5 * dt * fm

    fh = _force_array(model, om)
    m = np.maximum(1, np.ceil(np.abs(fh) * abs(dt) / control.eta_scale))
    if model.kind is _hooke.HookeKind.TANGENT:
        eps = model.epsilon
        comp = np.where(om >= 0.5 * eps, eps - om, om)
        energy = 0.5 * e1 * e1 - (eps / np.pi) * np.log(np.sin(np.pi * comp / eps))
        clearance = (eps / np.pi) * np.arcsin(np.minimum(1.0, np.exp(-np.pi * energy / eps)))
        clearance = np.maximum(clearance, 0.25 * model.guard)
        travel = abs(dt) * np.sqrt(2.0 * energy)
        outward = (e1 > 0.0) if dt > 0.0 else (e1 < 0.0)
        ahead = np.where(outward, eps - om, om)
        u_now = np.minimum(om, eps - om)
        u_min = np.minimum(
            np.maximum(clearance, np.minimum(u_now, ahead - travel)), 0.5 * eps)
        f_max = 1.0 / np.tan(np.pi * u_min / eps)
        freq = np.sqrt((np.pi / eps) * (1.0 + f_max * f_max))
        m = np.maximum(m, np.ceil(abs(dt) * freq / WALL_RESOLUTION))
    m = np.minimum(m, 2.0 * MAX_SUBSTEPS).astype(np.int64)
    bad = m > MAX_SUBSTEPS
    om1 = om.copy()
    e1 = e1.copy()
    for mval in np.unique(m[~bad]):
        idx = np.nonzero((m == mval) & ~bad)[0]
        d = dt / mval
        ee = e1[idx] + 0.5 * d * fh[idx]
        oo = om1[idx].copy()
        ok = np.ones(idx.size, dtype=bool)
        for k in range(mval):
            oo = oo + d * ee
            out = ~((oo > lo) & (oo < hi))
            if np.any(out):
                ok &= ~out
                oo = np.where(out, 0.5 * model.epsilon, oo)  # placeholder; redone below
            fhk = _force_array(model, oo)
            over = np.abs(fhk) * abs(d) > control.eta_scale
            if np.any(over & ok):
                ok &= ~over
            ee = ee + (d if k < mval - 1 else 0.5 * d) * fhk
        om1[idx[ok]] = oo[ok]
        e1[idx[ok]] = ee[ok]
        if not np.all(ok):
            bad[idx[~ok]] = True

    x1 = x + dt * v1
    fp2, fm2 = snap.pm(x1, om1)
    v2 = v1 + 0.5 * dt * fp2
    e2 = e1 + 0.5 * dt * fm2
    out = np.stack([x1, v2, om1, e2], axis=1)

    if np.any(bad):
        for i in np.nonzero(bad)[0]:
            xi, vi, oi, ei, _ = _advance_scalar(
                float(x[i]), float(v[i]), float(om[i]), float(et[i]),
                snap, model, dt, control)
            out[i] = (xi, vi, oi, ei)
    return out


def _force_array(model: HookeModel, om: np.ndarray) -> np.ndarray:
    if model.kind is _hooke.HookeKind.TANGENT:
        return -np.tan(np.pi / model.epsilon * (om - 0.5 * model.epsilon))
    return np.asarray(model.force_fn(om), dtype=float)


def energy_residual(path: TrajectoryPath, segment: tuple[float, float],
                    model: HookeModel, field_provider=None) -> float:
    """Defect of the oscillatory energy balance over a path segment.

    Compares the change of eta**2/2 against the work of the difference
    field (trapezoid rule on the samples) plus the bond-potential drop.
    Shrinks as O(dt**2) under step refinement.
    """
    ta, tb = segment
    t = path.t
    tol = 1e-9 * max(1.0, abs(t[-1]) - abs(t[0]))
    if ta < t[0] - tol or tb > t[-1] + tol or tb < ta:
        raise SegmentOutOfRangeError(
            f"segment [{ta!r}, {tb!r}] outside path range [{t[0]!r}, {t[-1]!r}]")
    ia = int(np.searchsorted(t, ta - tol, side="left"))
    ib = int(np.searchsorted(t, tb + tol, side="right")) - 1
    if ib <= ia:
        return 0.0
    sl = slice(ia, ib + 1)
    eta = path.eta[sl]
    if field_provider is not None:
        fm = np.array([field_provider.snapshot_at(tv).pm(xv, ov)[1]
                       for tv, xv, ov in zip(path.t[sl], path.x[sl], path.omega[sl])])
    else:
        fm = path.f_minus[sl]
    work = float(np.trapezoid(eta * fm, path.t[sl]))
    u_a = _hooke.potential_to_midpoint(model, float(path.omega[ia]))
    u_b = _hooke.potential_to_midpoint(model, float(path.omega[ib]))
    dkin = 0.5 * float(path.eta[ib]) ** 2 - 0.5 * float(path.eta[ia]) ** 2
    # Bond-force integral over [omega_a, omega_b] equals U(a) - U(b).
    return dkin - work - (u_a - u_b)


def _interp_state(path: TrajectoryPath, i: int, tq: float) -> ParticleState:
    t0, t1 = path.t[i], path.t[i + 1]
    a = 0.0 if t1 == t0 else (tq - t0) / (t1 - t0)
    return ParticleState(
        x=float((1 - a) * path.x[i] + a * path.x[i + 1]),
        v=float((1 - a) * path.v[i] + a * path.v[i + 1]),
        omega=float((1 - a) * path.omega[i] + a * path.omega[i + 1]),
        eta=float((1 - a) * path.eta[i] + a * path.eta[i + 1]))


def _locate(path: TrajectoryPath, i: int, fn, time_tol: float) -> float:
    """Bisect the linearly interpolated path for a sign change of fn in
    [t_i, t_{i+1}]."""
    lo, hi = float(path.t[i]), float(path.t[i + 1])
    flo = fn(_interp_state(path, i, lo))
    while hi - lo > time_tol:
        mid = 0.5 * (lo + hi)
        fmid = fn(_interp_state(path, i, mid))
        if fmid == 0.0:
            return mid
        if math.copysign(1.0, fmid) == math.copysign(1.0, flo):
            lo, flo = mid, fmid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def detect_events(path: TrajectoryPath, balance: BalancePoints,
                  eta_tol: float | None = None) -> list[OscillationEvent]:
    """Oscillation events of a sampled path relative to the balance points.

    Touching or crossing a balance separation is an exit when the bond is
    opening further (eta pointing outward), a return when it is closing
    (eta pointing back), and a turning event at a tangency (|eta| below
    the tolerance; the exactly-tangent case is genuinely ambiguous and is
    filed with the turning events).  A sign change of eta strictly outside
    the chaotic interval is a turning (stopping-time) event.  Event times
    are located on the interpolated path to the control's time tolerance.
    """
    if len(path) == 0:
        return []
    eta_tol = path.control.event_eta_tol if eta_tol is None else eta_tol
    time_tol = max(path.control.event_time_tol, 1e-15)
    om_m, om_M = balance.omega_m, balance.omega_M
    events: list[OscillationEvent] = []

    def classify_touch(t: float, st: ParticleState, which: str):
        outward = st.eta > eta_tol if which == "omega_M" else st.eta < -eta_tol
        inward = st.eta < -eta_tol if which == "omega_M" else st.eta > eta_tol
        if outward:
            kind = EventKind.EXIT_CHAOTIC
        elif inward:
            kind = EventKind.RETURN_TIME
        else:
            kind = EventKind.STOPPING_TIME
        events.append(OscillationEvent(kind=kind, time=t, state=st, boundary=which))

    # Initial sample sitting on a boundary is itself an event.
    st0 = path.state_at(0)
    g0 = 1e-9 * max(1.0, om_M)
    if abs(st0.omega - om_M) <= g0:
        classify_touch(float(path.t[0]), st0, "omega_M")
    elif abs(st0.omega - om_m) <= g0:
        classify_touch(float(path.t[0]), st0, "omega_m")

    gm = path.omega - om_m
    gM = path.omega - om_M
    h = path.eta
    for i in range(len(path) - 1):
        for which, g in (("omega_m", gm), ("omega_M", gM)):
            if g[i] == 0.0 and i > 0:
                continue  # already handled as the endpoint of the previous pair
            if g[i] * g[i + 1] < 0.0 or (g[i] != 0.0 and g[i + 1] == 0.0):
                level = om_m if which == "omega_m" else om_M
                tq = _locate(path, i, lambda s, lv=level: s.omega - lv, time_tol)
                classify_touch(tq, _interp_state(path, i, tq), which)
        if h[i] * h[i + 1] < 0.0 or (h[i] != 0.0 and h[i + 1] == 0.0):
            tq = _locate(path, i, lambda s: s.eta, time_tol)
            st = _interp_state(path, i, tq)
            if not (om_m < st.omega < om_M):
                events.append(OscillationEvent(
                    kind=EventKind.STOPPING_TIME, time=tq, state=st))

    events.sort(key=lambda e: e.time)
    return events


def jacobian_estimate(seed: ParticleState, field_provider, model: HookeModel,
                      t: float, h: float, control: StepControl,
                      t0: float = 0.0) -> float:
    """Determinant of the flow-map Jacobian at the seed, by central
    differences from eight auxiliary integrations.  The flow is volume
    preserving, so the expected value is 1."""
    z0 = np.array([seed.x, seed.v, seed.omega, seed.eta], dtype=float)
    if t == t0:
        return 1.0
    pert = []
    for j in range(4):
        for sgn in (+1.0, -1.0):
            zp = z0.copy()
            zp[j] += sgn * h
            pert.append(zp)
    out = integrate_batch(np.asarray(pert), field_provider, model, t0, t, control)
    jac = np.empty((4, 4))
    for j in range(4):
        jac[:, j] = (out[2 * j] - out[2 * j + 1]) / (2.0 * h)
    return float(np.linalg.det(jac))
