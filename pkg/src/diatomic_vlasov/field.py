"""Weighted-particle phase density and its self-consistent step field.

An ensemble carries phase points z = (x, v, omega, eta) with nonnegative
masses w.  The spatial charge density is the x-marginal with a factor 2
(each molecule holds two atoms), so a particle of mass w contributes a
point charge 2w at its center.  The field is the half-difference of the
charge to the right and to the left,

    F(x) = (mass right of x - mass left of x) / 2,

a nonincreasing step function bounded by half the total charge.  Charge
sitting exactly at the query point is split half-and-half between the two
sides, which makes the field odd for symmetric data and removes any order
dependence among coincident particles.

Queries cost O(log N) after an O(N log N) build (stable sort + prefix
sum).  Summation runs in ascending position order so results are
bit-reproducible; the brute-force O(N) check in the tests enforces the
same order and matches exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, EmptyEnsembleError, FieldGapError

__all__ = [
    "ParticleState",
    "Ensemble",
    "FieldSnapshot",
    "build_field",
    "field_at",
    "field_pm",
    "field_norms",
    "StaticField",
    "ConstantField",
    "FieldHistory",
    "zero_field",
]


@dataclass(frozen=True)
class ParticleState:
    """One phase-space point with its statistical mass."""

    x: float
    v: float
    omega: float
    eta: float
    w: float = 0.0

    def __post_init__(self):
        if not (self.w >= 0.0):
            raise DomainError(f"particle mass must be nonnegative, got {self.w!r}")


class Ensemble:
    """Struct-of-arrays particle set representing the phase density.

    Masses never change once sampled; transport moves the phase
    coordinates only.  ``f_values`` optionally carries the density value
    each particle was sampled at (used for the transported-max diagnostic).
    """

    __slots__ = ("x", "v", "omega", "eta", "w", "f_values", "time")

    def __init__(self, x, v, omega, eta, w, f_values=None, time: float = 0.0):
        self.x = np.asarray(x, dtype=float)
        self.v = np.asarray(v, dtype=float)
        self.omega = np.asarray(omega, dtype=float)
        self.eta = np.asarray(eta, dtype=float)
        self.w = np.asarray(w, dtype=float)
        n = self.x.size
        for arr in (self.v, self.omega, self.eta, self.w):
            if arr.shape != (n,):
                raise DomainError("ensemble arrays must be equal-length 1d")
        if np.any(self.w < 0.0):
            raise DomainError("particle masses must be nonnegative")
        self.f_values = None if f_values is None else np.asarray(f_values, dtype=float)
        self.time = float(time)

    def __len__(self) -> int:
        return self.x.size

    def __getitem__(self, i: int) -> ParticleState:
        return ParticleState(x=float(self.x[i]), v=float(self.v[i]),
                             omega=float(self.omega[i]), eta=float(self.eta[i]),
                             w=float(self.w[i]))

    @classmethod
    def from_states(cls, states, time: float = 0.0) -> "Ensemble":
        states = list(states)
        return cls(
            x=[s.x for s in states], v=[s.v for s in states],
            omega=[s.omega for s in states], eta=[s.eta for s in states],
            w=[s.w for s in states], time=time)

    def with_coords(self, x, v, omega, eta, time: float) -> "Ensemble":
        """New ensemble with moved coordinates; masses and values shared."""
        return Ensemble(x, v, omega, eta, self.w, f_values=self.f_values, time=time)

    @property
    def total_mass(self) -> float:
        return float(np.sum(self.w))

    def support_box(self) -> tuple[float, float, float, float, float, float, float, float]:
        """(x_lo, x_hi, v_lo, v_hi, omega_lo, omega_hi, eta_lo, eta_hi)."""
        if len(self) == 0:
            raise EmptyEnsembleError("empty ensemble has no support box")
        return (float(self.x.min()), float(self.x.max()),
                float(self.v.min()), float(self.v.max()),
                float(self.omega.min()), float(self.omega.max()),
                float(self.eta.min()), float(self.eta.max()))

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x", "v", "omega", "eta", "w"])
            for i in range(len(self)):
                wr.writerow([f"{c:.17g}" for c in
                             (self.x[i], self.v[i], self.omega[i], self.eta[i], self.w[i])])

    @classmethod
    def load_csv(cls, path, time: float = 0.0) -> "Ensemble":
        data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=float, ndmin=2)
        if data.shape[1] != 5:
            raise DomainError(f"{path}: expected columns x,v,omega,eta,w")
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], data[:, 4], time=time)


class FieldSnapshot:
    """The frozen field of one ensemble: sorted charge positions with an
    inclusive prefix-sum of charge.  Immutable after construction; safe to
    share across threads."""

    __slots__ = ("positions", "prefix", "total", "time")

    def __init__(self, positions: np.ndarray, charges: np.ndarray, time: float = 0.0):
        order = np.argsort(positions, kind="stable")
        self.positions = np.asarray(positions, dtype=float)[order]
        charges = np.asarray(charges, dtype=float)[order]
        # prefix[k] = charge strictly left of positions[k]; prefix[-1] = total
        self.prefix = np.concatenate([[0.0], np.cumsum(charges)])
        self.total = float(self.prefix[-1])
        self.time = float(time)

    @classmethod
    def empty(cls, time: float = 0.0) -> "FieldSnapshot":
        return cls(np.empty(0), np.empty(0), time=time)

    def at(self, x):
        """Field value(s) at x: half of right mass minus left mass, charge
        at x split evenly between the sides."""
        xq = np.asarray(x, dtype=float)
        il = np.searchsorted(self.positions, xq, side="left")
        ir = np.searchsorted(self.positions, xq, side="right")
        left = self.prefix[il]
        at = self.prefix[ir] - self.prefix[il]
        out = 0.5 * self.total - left - 0.5 * at
        if np.ndim(x) == 0:
            return float(out)
        return out

    def pm(self, x, omega):
        """(F(x+omega)+F(x-omega), F(x+omega)-F(x-omega))."""
        fp_r = self.at(np.asarray(x, dtype=float) + omega)
        fp_l = self.at(np.asarray(x, dtype=float) - omega)
        return fp_r + fp_l, fp_r - fp_l

    def norms(self) -> tuple[float, float]:
        """Exact suprema (sup|F|, sup|F+-|) = (total/2, total)."""
        return 0.5 * self.total, self.total

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["x_sorted", "cum_mass"])
            for i in range(self.positions.size):
                wr.writerow([f"{self.positions[i]:.17g}", f"{self.prefix[i + 1]:.17g}"])


def build_field(ensemble: Ensemble) -> FieldSnapshot:
    """Snapshot of the ensemble's self-consistent field.

    O(N log N): stable sort by position plus one ascending prefix sum.
    Each particle contributes charge 2w at its center.
    """
    if len(ensemble) == 0:
        raise EmptyEnsembleError("cannot build a field from an empty ensemble")
    return FieldSnapshot(ensemble.x, 2.0 * ensemble.w, time=ensemble.time)


def field_at(snapshot: FieldSnapshot, x):
    """Point query of the step field; O(log N) per query."""
    return snapshot.at(x)


def field_pm(snapshot: FieldSnapshot, x, omega):
    """Sum/difference field pair at offsets +-omega around x."""
    om = np.asarray(omega, dtype=float)
    if np.any(om <= 0.0):
        raise DomainError("omega offsets must be positive")
    return snapshot.pm(x, omega)


def field_norms(snapshot: FieldSnapshot) -> tuple[float, float]:
    """(sup|F|, sup|F+-|); exact for the step field."""
    return snapshot.norms()


class StaticField:
    """A provider serving one frozen snapshot for every time."""

    def __init__(self, snapshot: FieldSnapshot):
        self.snapshot = snapshot
        self.breakpoints = np.empty(0)

    def snapshot_at(self, t: float) -> FieldSnapshot:
        return self.snapshot


class _UniformSnapshot:
    """Uniform given fields (F+, F-) = (fp, fm) everywhere; a stand-in
    snapshot for studies of trajectories under prescribed fields."""

    __slots__ = ("fp", "fm", "time")

    def __init__(self, fp: float, fm: float, time: float = 0.0):
        self.fp = float(fp)
        self.fm = float(fm)
        self.time = float(time)

    def at(self, x):
        out = np.full(np.shape(x), 0.5 * self.fp)
        if np.ndim(x) == 0:
            return float(0.5 * self.fp)
        return out

    def pm(self, x, omega):
        if np.ndim(x) == 0:
            return self.fp, self.fm
        shape = np.broadcast_shapes(np.shape(x), np.shape(omega))
        return np.full(shape, self.fp), np.full(shape, self.fm)

    def norms(self) -> tuple[float, float]:
        m = max(abs(self.fp), abs(self.fm))
        return 0.5 * m, m


class ConstantField:
    """Provider with constant prescribed (F+, F-); F- drives the bond."""

    def __init__(self, f_plus: float = 0.0, f_minus: float = 0.0):
        self._snap = _UniformSnapshot(f_plus, f_minus)
        self.breakpoints = np.empty(0)

    def snapshot_at(self, t: float):
        return self._snap


def zero_field() -> StaticField:
    """Provider for the autonomous (field-free) dynamics."""
    return StaticField(FieldSnapshot.empty())


class FieldHistory:
    """Snapshots at increasing times, held piecewise-constant to the right
    (the snapshot taken at t_k serves [t_k, t_{k+1})).  Coverage ends at an
    explicit horizon; queries outside raise FieldGapError."""

    def __init__(self):
        self._times: list[float] = []
        self._snaps: list = []
        self.t_end: float = -math.inf

    def append(self, t: float, snapshot) -> None:
        if self._times and t <= self._times[-1]:
            raise DomainError("history times must be strictly increasing")
        self._times.append(float(t))
        self._snaps.append(snapshot)
        self.t_end = max(self.t_end, float(t))

    def close(self, t_end: float) -> None:
        """Declare coverage up to t_end (the run horizon)."""
        self.t_end = float(t_end)

    @property
    def breakpoints(self) -> np.ndarray:
        return np.asarray(self._times)

    def snapshots(self):
        return iter(self._snaps)

    def snapshot_at(self, t: float):
        if not self._times:
            raise FieldGapError("empty field history")
        t0 = self._times[0]
        tol = 1e-12 * max(1.0, abs(self.t_end), abs(t0))
        if t < t0 - tol or t > self.t_end + tol:
            raise FieldGapError(
                f"field history covers [{t0!r}, {self.t_end!r}], asked for {t!r}")
        idx = int(np.searchsorted(self._times, t + tol, side="right")) - 1
        idx = max(idx, 0)
        return self._snaps[idx]
