"""Analytic a-priori bounds on the bond oscillation, and their checker.

Two families of constants are evaluated.  The short-time family controls
(omega, eta) while the bond stays in a band around the midpoint: a
Gronwall pair (C1, C2) built from a linear majorant of the bond force,
the phase and displacement bounds they imply, and the largest horizon t0
for which trajectories started in the band provably stay in the wider
half-band.  The long-time family controls excursions beyond the balance
points: a linear-in-time bound inside the chaotic interval, an energy
envelope on each excursion, return-time and drift-rate bounds through the
potential inverse, and a global envelope plus a confinement interval for
the bond length over any horizon.

Both families share the naming C1/C2 in their usual statements; here the
long-time pair is suffixed ``_sec5`` style as ``drift_rate`` /
``envelope_rate`` fields on the certificate to keep them apart.

``certify`` replays a sampled trajectory against a certificate.  The
certificate never consumes path data for its constants (no circularity):
it is built from the initial support box and the force model alone.
Vacuous bounds (nonpositive denominators) are reported explicitly, never
silently folded into pass/fail.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import hooke as _hooke
from .errors import InvalidCError, NoConfinementError, RangeError, VacuousBoundError
from .hooke import BalancePoints, Branch, HookeModel
from .trajectory import EventKind, TrajectoryPath

__all__ = [
    "BoundParameters",
    "BoundCertificate",
    "CertReport",
    "gronwall_constants",
    "phase_bound",
    "displacement_bound",
    "confinement_time",
    "excursion_envelope",
    "turning_point_band",
    "return_time_lower_bound",
    "drift_rate_bound",
    "chaotic_bound",
    "global_envelope",
    "omega_confinement",
    "build_certificate",
    "certify",
]

DEFAULT_SLACK = 1e-6


@dataclass(frozen=True)
class BoundParameters:
    """Inputs every bound depends on.

    epsilon   bond domain length;
    epsilon0  initial band margin, 0 < 2*epsilon0 < epsilon;
    R         bound on |eta| (and |v|) over the initial support;
    C_minus   uniform bound on the difference field along trajectories;
    C         large field constant for the excursion analysis (must
              dominate sup|F+-|);
    model     the bonding-force law.
    """

    epsilon: float
    epsilon0: float
    R: float
    C_minus: float
    C: float
    model: HookeModel

    def __post_init__(self):
        # equality 2*epsilon0 == epsilon degenerates the initial interval
        # to the midpoint but leaves every formula well-defined
        if not (0.0 < 2.0 * self.epsilon0 <= self.epsilon):
            raise InvalidCError(
                f"need 0 < 2*epsilon0 <= epsilon, got epsilon0={self.epsilon0!r}")
        if not (self.R > 0.0 and self.C_minus >= 0.0 and self.C > 0.0):
            raise InvalidCError("need R > 0, C_minus >= 0, C > 0")
        if abs(self.model.epsilon - self.epsilon) > 1e-12 * self.epsilon:
            raise InvalidCError("model epsilon disagrees with parameters")


def gronwall_constants(p: BoundParameters) -> tuple[float, float]:
    """(C1, C2) of the band Gronwall estimate:
    C1 = max{1, 2|Fh(eps0/2)/(eps0-eps)|},  C2 = C_minus + (eps/2) C1."""
    f_half = _hooke.force(p.model, 0.5 * p.epsilon0)
    c1 = max(1.0, 2.0 * abs(f_half / (p.epsilon0 - p.epsilon)))
    c2 = p.C_minus + 0.5 * p.epsilon * c1
    return c1, c2


def phase_bound(p: BoundParameters, omega: float, eta: float, t: float) -> float:
    """Bound on |Omega(t)| + |H(t)| under the band hypotheses:
    e^{C1 t}(|omega|+|eta|) + C2 (e^{C1 t}-1)/C1."""
    if t < 0.0:
        raise RangeError("t must be nonnegative")
    c1, c2 = gronwall_constants(p)
    e = math.exp(c1 * t)
    return e * (abs(omega) + abs(eta)) + c2 * (e - 1.0) / c1


def displacement_bound(p: BoundParameters, omega: float, eta: float, s: float) -> float:
    """Bound on |Omega(s) - Omega(0)|; exactly s times the phase bound."""
    if s < 0.0:
        raise RangeError("s must be nonnegative")
    return s * phase_bound(p, omega, eta, s)


def _confinement_fn(p: BoundParameters):
    c1, c2 = gronwall_constants(p)
    amp = p.epsilon + p.R

    def f(s: float) -> float:
        e = math.exp(c1 * s)
        return s * e * amp + c2 * s * (e - 1.0) / c1

    return f


def confinement_time(p: BoundParameters) -> float:
    """Largest t0 with s e^{C1 s}(eps+R) + C2 s (e^{C1 s}-1)/C1 below
    eps0/4 on [0, t0]; trajectories started in [eps0, eps-eps0] x [-R, R]
    then stay in the eps0/2 band up to t0.

    The defining function is strictly increasing from 0, so a bracketing
    bisection on it always succeeds.
    """
    f = _confinement_fn(p)
    target = 0.25 * p.epsilon0 * (1.0 - 1e-12)
    hi = 1.0
    while f(hi) < target:
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
        if f(mid) < target:
            lo = mid
        else:
            hi = mid
    return lo


def excursion_envelope(H1: float, p: BoundParameters) -> float:
    """Peak |eta| during one excursion past a balance point:
    sqrt(H1**2 + 4 eps C)."""
    return math.sqrt(H1 * H1 + 4.0 * p.epsilon * p.C)


def _I_M(p: BoundParameters, balance: BalancePoints) -> float:
    return _hooke.potential_to_midpoint(p.model, balance.omega_M)


def _I_m(p: BoundParameters, balance: BalancePoints) -> float:
    return _hooke.potential_to_midpoint(p.model, balance.omega_m)


def turning_point_band(H1: float, p: BoundParameters,
                       balance: BalancePoints | None = None) -> tuple[float, float]:
    """Band that contains the potential level at the excursion's turning
    point: [max(0, H1**2/2 + I_M - eps C), H1**2/2 + I_M + eps C]."""
    balance = balance or _hooke.balance_points(p.model, p.C)
    im = _I_M(p, balance)
    mid = 0.5 * H1 * H1 + im
    return max(0.0, mid - p.epsilon * p.C), mid + p.epsilon * p.C


def return_time_lower_bound(H1: float, p: BoundParameters,
                            balance: BalancePoints | None = None) -> float:
    """Lower bound on the excursion duration,
    2 (hinv(H1**2/2 + I_M - eps C) - Omega_M) / sqrt(H1**2 + 4 eps C);
    reported as 0 when vacuous (nonpositive numerator)."""
    balance = balance or _hooke.balance_points(p.model, p.C)
    level = 0.5 * H1 * H1 + _I_M(p, balance) - p.epsilon * p.C
    if level <= 0.0:
        return 0.0
    turn = _hooke.inverse_potential(p.model, level, Branch.RIGHT)
    num = turn - balance.omega_M
    if num <= 0.0:
        return 0.0
    return 2.0 * num / excursion_envelope(H1, p)


def drift_rate_bound(H1: float, p: BoundParameters,
                     balance: BalancePoints | None = None) -> float:
    """Bound on the per-excursion speed change rate,
    2 eps C / (hinv(H1**2/2 + I_M - eps C) - Omega_M).
    Raises VacuousBoundError when the denominator is nonpositive."""
    balance = balance or _hooke.balance_points(p.model, p.C)
    level = 0.5 * H1 * H1 + _I_M(p, balance) - p.epsilon * p.C
    if level <= 0.0:
        raise VacuousBoundError("potential level below the balance level; bound vacuous")
    turn = _hooke.inverse_potential(p.model, level, Branch.RIGHT)
    den = turn - balance.omega_M
    if den <= 0.0:
        raise VacuousBoundError("nonpositive denominator; bound vacuous")
    return 2.0 * p.epsilon * p.C / den


def chaotic_bound(H1: float, t_minus_t1: float, C: float) -> float:
    """Linear-in-time bound 2C(t - t1) + |H1| valid while the bond stays
    between the balance points."""
    if t_minus_t1 < 0.0:
        raise RangeError("elapsed time must be nonnegative")
    return 2.0 * C * t_minus_t1 + abs(H1)


def global_envelope(p: BoundParameters, eta_M: float, T: float,
                    balance: BalancePoints | None = None) -> tuple[float, float, float]:
    """(C1_exc, C2_exc, envelope) of the horizon-T speed bound.

    C1_exc = 2 eps C / (hinv(eps C + I_M) - Omega_M), C2_exc = max{2C, C1_exc},
    envelope = sqrt((C2_exc T + eta_M)**2 + 4 eps C).
    """
    if T < 0.0:
        raise RangeError("T must be nonnegative")
    balance = balance or _hooke.balance_points(p.model, p.C)
    level = p.epsilon * p.C + _I_M(p, balance)
    try:
        turn = _hooke.inverse_potential(p.model, level, Branch.RIGHT)
    except RangeError as exc:
        raise InvalidCError(f"potential never reaches the excursion level: {exc}") from exc
    den = turn - balance.omega_M
    if den <= 0.0:
        raise InvalidCError("excursion denominator nonpositive; increase C")
    c1 = 2.0 * p.epsilon * p.C / den
    c2 = max(2.0 * p.C, c1)
    env = math.sqrt((c2 * T + eta_M) ** 2 + 4.0 * p.epsilon * p.C)
    return c1, c2, env


def omega_confinement(p: BoundParameters, omega0: float, eta_M: float, T: float,
                      balance: BalancePoints | None = None) -> tuple[float, float]:
    """Confinement interval for the bond length over [0, T].

    The potential level B = C T * envelope + U(omega0) + eta_M**2/2 caps
    U(Omega(t)); inverting U on both branches yields the interval.  Raises
    NoConfinementError when a finite-well model never reaches B.
    """
    _, _, env = global_envelope(p, eta_M, T, balance=balance)
    level = p.C * T * env + _hooke.potential_to_midpoint(p.model, omega0) \
        + 0.5 * eta_M * eta_M
    try:
        lo = _hooke.inverse_potential(p.model, level, Branch.LEFT)
        hi = _hooke.inverse_potential(p.model, level, Branch.RIGHT)
    except RangeError as exc:
        raise NoConfinementError(
            f"potential never reaches level {level!r}; no confinement interval") from exc
    return lo, hi


@dataclass(frozen=True)
class BoundCertificate:
    """All analytic constants for a given initial support box and horizon.

    The band pair (C1, C2) and t0 come from the short-time analysis; the
    excursion pair (C1_exc, C2_exc), the speed envelope and the bond
    confinement interval from the long-time analysis.  x_bound/v_bound are
    the elementary horizon bounds on |x| and |v|.
    """

    epsilon: float
    T: float
    C: float
    C_minus: float
    C1: float
    C2: float
    t0: float
    balance: BalancePoints
    I_M: float
    I_m: float
    C1_exc: float
    C2_exc: float
    eta_M: float
    H_envelope: float
    omega_lo: float
    omega_hi: float
    x_bound: float
    v_bound: float
    support_box: tuple = ()

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon, "T": self.T, "C": self.C,
            "C_minus": self.C_minus, "C1": self.C1, "C2": self.C2,
            "t0": self.t0,
            "balance": {"omega_m": self.balance.omega_m,
                        "omega_M": self.balance.omega_M,
                        "level": self.balance.level},
            "I_M": self.I_M, "I_m": self.I_m,
            "C1_exc": self.C1_exc, "C2_exc": self.C2_exc,
            "eta_M": self.eta_M, "H_envelope": self.H_envelope,
            "omega_confinement": [self.omega_lo, self.omega_hi],
            "x_bound": self.x_bound, "v_bound": self.v_bound,
            "support_box": list(self.support_box),
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d: dict, model: HookeModel | None = None) -> "BoundCertificate":
        bal = BalancePoints(omega_m=d["balance"]["omega_m"],
                            omega_M=d["balance"]["omega_M"],
                            level=d["balance"]["level"])
        return cls(epsilon=d["epsilon"], T=d["T"], C=d["C"], C_minus=d["C_minus"],
                   C1=d["C1"], C2=d["C2"], t0=d["t0"], balance=bal,
                   I_M=d["I_M"], I_m=d["I_m"], C1_exc=d["C1_exc"],
                   C2_exc=d["C2_exc"], eta_M=d["eta_M"],
                   H_envelope=d["H_envelope"],
                   omega_lo=d["omega_confinement"][0],
                   omega_hi=d["omega_confinement"][1],
                   x_bound=d["x_bound"], v_bound=d["v_bound"],
                   support_box=tuple(d.get("support_box", ())))


def build_certificate(p: BoundParameters, support_box, T: float) -> BoundCertificate:
    """Assemble the full certificate for an initial support box.

    ``support_box`` is (x_lo, x_hi, v_lo, v_hi, omega_lo, omega_hi,
    eta_lo, eta_hi).  The constants depend only on the box and the force
    model, never on integrated data.  Requires the omega support to sit
    strictly between the balance points (the excursion analysis anchors
    its first event there); raises InvalidCError otherwise.
    """
    x_lo, x_hi, v_lo, v_hi, om_lo, om_hi, et_lo, et_hi = support_box
    balance = _hooke.balance_points(p.model, p.C)
    if not (balance.omega_m < om_lo and om_hi < balance.omega_M):
        raise InvalidCError(
            "omega support must lie strictly between the balance points; "
            f"got [{om_lo!r}, {om_hi!r}] vs ({balance.omega_m!r}, {balance.omega_M!r})")
    c1, c2 = gronwall_constants(p)
    t0 = confinement_time(p)
    eta_M = max(abs(et_lo), abs(et_hi))
    c1e, c2e, env = global_envelope(p, eta_M, T, balance=balance)
    # The confinement level is driven by the worse potential endpoint.
    u_lo = _hooke.potential_to_midpoint(p.model, om_lo)
    u_hi = _hooke.potential_to_midpoint(p.model, om_hi)
    omega0 = om_lo if u_lo >= u_hi else om_hi
    conf_lo, conf_hi = omega_confinement(p, omega0, eta_M, T, balance=balance)
    x_m = max(abs(x_lo), abs(x_hi))
    v_m = max(abs(v_lo), abs(v_hi))
    return BoundCertificate(
        epsilon=p.epsilon, T=T, C=p.C, C_minus=p.C_minus, C1=c1, C2=c2, t0=t0,
        balance=balance, I_M=_I_M(p, balance), I_m=_I_m(p, balance),
        C1_exc=c1e, C2_exc=c2e, eta_M=eta_M, H_envelope=env,
        omega_lo=conf_lo, omega_hi=conf_hi,
        x_bound=x_m + v_m * T + 0.5 * p.C * T * T,
        v_bound=v_m + p.C * T,
        support_box=tuple(support_box))


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    first_violation: int | None = None
    worst_margin: float = math.inf  # smallest (bound - value) seen
    note: str = ""

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed,
                "first_violation": self.first_violation,
                "worst_margin": self.worst_margin, "note": self.note}


@dataclass(frozen=True)
class CertReport:
    checks: tuple[CheckResult, ...]
    slack: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def first_violation(self) -> int | None:
        hits = [c.first_violation for c in self.checks if c.first_violation is not None]
        return min(hits) if hits else None

    def to_dict(self) -> dict:
        return {"passed": self.passed, "slack": self.slack,
                "checks": [c.to_dict() for c in self.checks]}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _runs(mask: np.ndarray):
    """Maximal index runs where mask is true, as (start, stop) inclusive."""
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return []
    cuts = np.nonzero(np.diff(idx) > 1)[0]
    starts = np.concatenate([[idx[0]], idx[cuts + 1]])
    stops = np.concatenate([idx[cuts], [idx[-1]]])
    return list(zip(starts.tolist(), stops.tolist()))


def certify(path: TrajectoryPath, cert: BoundCertificate, events=None,
            slack: float = DEFAULT_SLACK) -> CertReport:
    """Verify every certificate inequality against a sampled trajectory.

    Checked sample by sample with the given absolute slack: the
    linear-in-time bound inside the chaotic interval (re-anchored at each
    entry), the per-excursion speed envelope across each exit/return pair,
    the global speed envelope, the bond confinement interval, and the
    work bound C*eps on every segment of constant eta sign.  The logged
    field norms must not exceed C (precondition of every bound).
    """
    events = path.events if events is None else events
    om = path.omega
    h = path.eta
    t = path.t
    checks: list[CheckResult] = []

    # Precondition: the fields the path saw were within the certificate's C.
    pre_ok = path.max_field_norm <= cert.C + slack
    checks.append(CheckResult(
        name="field_norm_precondition", passed=bool(pre_ok),
        first_violation=None if pre_ok else 0,
        worst_margin=cert.C - path.max_field_norm,
        note=f"max logged sup|F+-| = {path.max_field_norm!r}"))

    # Chaotic region: |H| <= 2C (t - t_entry) + |H(t_entry)| per inside-run.
    inside = (om > cert.balance.omega_m) & (om < cert.balance.omega_M)
    first_bad = None
    worst = math.inf
    for a, b in _runs(inside):
        bound = 2.0 * cert.C * (t[a:b + 1] - t[a]) + abs(h[a]) + slack
        margin = bound - np.abs(h[a:b + 1])
        worst = min(worst, float(margin.min()))
        bad = np.nonzero(margin < 0.0)[0]
        if bad.size and first_bad is None:
            first_bad = int(a + bad[0])
    checks.append(CheckResult(name="chaotic_bound", passed=first_bad is None,
                              first_violation=first_bad, worst_margin=worst))

    # Excursions: pair each exit with the next return at the same boundary.
    first_bad = None
    worst = math.inf
    n_pairs = 0
    open_exits: dict[str, object] = {}
    for ev in sorted(events, key=lambda e: e.time):
        if ev.kind is EventKind.EXIT_CHAOTIC and ev.boundary is not None:
            open_exits.setdefault(ev.boundary, ev)
        elif ev.kind is EventKind.RETURN_TIME and ev.boundary in open_exits:
            ex = open_exits.pop(ev.boundary)
            n_pairs += 1
            env = math.sqrt(ex.state.eta ** 2 + 4.0 * cert.epsilon * cert.C)
            sel = (t >= ex.time) & (t <= ev.time)
            margin = env + slack - np.abs(h[sel])
            if margin.size:
                worst = min(worst, float(margin.min()))
                bad = np.nonzero(margin < 0.0)[0]
                if bad.size and first_bad is None:
                    first_bad = int(np.nonzero(sel)[0][bad[0]])
    # An excursion still open at the end of the path is checked to the end.
    for ex in open_exits.values():
        env = math.sqrt(ex.state.eta ** 2 + 4.0 * cert.epsilon * cert.C)
        sel = t >= ex.time
        margin = env + slack - np.abs(h[sel])
        if margin.size:
            worst = min(worst, float(margin.min()))
            bad = np.nonzero(margin < 0.0)[0]
            if bad.size and first_bad is None:
                first_bad = int(np.nonzero(sel)[0][bad[0]])
    checks.append(CheckResult(name="excursion_envelope", passed=first_bad is None,
                              first_violation=first_bad, worst_margin=worst,
                              note=f"{n_pairs} exit/return pairs"))

    # Global speed envelope.
    margin = cert.H_envelope + slack - np.abs(h)
    bad = np.nonzero(margin < 0.0)[0]
    checks.append(CheckResult(
        name="global_envelope", passed=bad.size == 0,
        first_violation=int(bad[0]) if bad.size else None,
        worst_margin=float(margin.min())))

    # Bond confinement interval.
    lo_margin = om - (cert.omega_lo - slack)
    hi_margin = (cert.omega_hi + slack) - om
    margin = np.minimum(lo_margin, hi_margin)
    bad = np.nonzero(margin < 0.0)[0]
    checks.append(CheckResult(
        name="omega_confinement", passed=bad.size == 0,
        first_violation=int(bad[0]) if bad.size else None,
        worst_margin=float(margin.min())))

    # Work bound on segments of constant eta sign.  Exact-zero samples are
    # folded into the preceding segment so mixed-sign merges cannot occur.
    first_bad = None
    worst = math.inf
    sign = np.sign(h)
    nz = np.where(sign != 0.0, np.arange(sign.size), 0)
    np.maximum.accumulate(nz, out=nz)
    sign = sign[nz]
    seg_start = 0
    boundaries = list(np.nonzero(sign[:-1] * sign[1:] < 0.0)[0] + 1) + [len(h)]
    for stop in boundaries:
        a, b = seg_start, stop - 1
        seg_start = stop
        if b <= a:
            continue
        work = abs(float(np.trapezoid(h[a:b + 1] * path.f_minus[a:b + 1], t[a:b + 1])))
        m = cert.C * cert.epsilon + slack - work
        worst = min(worst, m)
        if m < 0.0 and first_bad is None:
            first_bad = a
    checks.append(CheckResult(name="work_bound", passed=first_bad is None,
                              first_violation=first_bad, worst_margin=worst))

    return CertReport(checks=tuple(checks), slack=slack)
