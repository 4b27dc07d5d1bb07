import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diatomic_vlasov import (
    DomainError,
    EmptyEnsembleError,
    Ensemble,
    FieldHistory,
    FieldGapError,
    FieldSnapshot,
    build_field,
    field_at,
    field_norms,
    field_pm,
)


def brute_force_field(x_pos, charges, queries):
    """O(N*Q) reference: one ascending pass per ensemble, accumulating the
    left/at sums per query in the same ascending-position order the
    snapshot's prefix sum uses, so agreement is exact."""
    order = np.argsort(x_pos, kind="stable")
    p = np.asarray(x_pos)[order]
    c = np.asarray(charges)[order]
    q = np.asarray(queries)
    left = np.zeros_like(q)
    at = np.zeros_like(q)
    total = 0.0
    for pi, ci in zip(p, c):
        left = left + np.where(pi < q, ci, 0.0)
        at = at + np.where(pi == q, ci, 0.0)
        total = total + ci
    return 0.5 * total - left - 0.5 * at


def single_molecule(w=0.5, x0=0.0):
    return Ensemble([x0], [0.0], [0.5], [0.0], [w])


class TestBuild:
    def test_total_charge(self):
        snap = build_field(single_molecule(w=0.5))
        assert snap.total == 1.0

    def test_symmetric_pair_zero_at_origin(self):
        ens = Ensemble([-1.0, 1.0], [0, 0], [0.5, 0.5], [0, 0], [0.5, 0.5])
        snap = build_field(ens)
        assert snap.total == 2.0
        assert snap.at(0.0) == 0.0

    def test_far_field_half_mass(self, rng):
        ens = Ensemble(rng.normal(size=40), np.zeros(40), np.full(40, 0.5),
                       np.zeros(40), rng.uniform(0.1, 1.0, 40))
        snap = build_field(ens)
        assert snap.at(-1e9) == 0.5 * snap.total
        assert snap.at(+1e9) == -0.5 * snap.total

    def test_empty_rejected(self):
        with pytest.raises(EmptyEnsembleError):
            build_field(Ensemble([], [], [], [], []))


class TestFieldAt:
    def test_step_values_around_single_molecule(self):
        snap = build_field(single_molecule(w=0.5))
        assert field_at(snap, -0.1) == 0.5
        assert field_at(snap, +0.1) == -0.5

    def test_midpoint_convention_at_particle(self):
        snap = build_field(single_molecule(w=0.5))
        assert field_at(snap, 0.0) == 0.0

    def test_midpoint_convention_with_coincident_particles(self):
        ens = Ensemble([0.0, 0.0, 1.0], [0] * 3, [0.5] * 3, [0] * 3,
                       [0.25, 0.25, 0.5])
        snap = build_field(ens)
        # at x=0: left 0, at 1.0, right 1.0 -> (1 + .5) - ... = 0.5*2 - 0 - 0.5
        assert field_at(snap, 0.0) == 0.5
        assert field_at(snap, 1.0) == -0.5

    def test_matches_brute_force_exactly(self, rng):
        for _ in range(20):
            n = rng.integers(1, 60)
            pos = rng.normal(size=n)
            w = rng.uniform(0.0, 1.0, n)
            snap = build_field(Ensemble(pos, np.zeros(n), np.full(n, 0.5),
                                        np.zeros(n), w))
            q = rng.normal(size=50) * 2.0
            expected = brute_force_field(pos, 2.0 * w, q)
            got = snap.at(q)
            assert np.array_equal(got, expected)

    def test_nonincreasing_property(self, rng):
        pos = rng.normal(size=200)
        w = rng.uniform(0, 1, 200)
        snap = build_field(Ensemble(pos, np.zeros(200), np.full(200, 0.5),
                                    np.zeros(200), w))
        q = np.sort(rng.normal(size=500) * 3)
        f = snap.at(q)
        assert np.all(np.diff(f) <= 0.0)

    def test_bounded_by_half_total(self, rng):
        pos = rng.normal(size=100)
        w = rng.uniform(0, 1, 100)
        snap = build_field(Ensemble(pos, np.zeros(100), np.full(100, 0.5),
                                    np.zeros(100), w))
        q = rng.normal(size=300) * 4
        assert np.all(np.abs(snap.at(q)) <= 0.5 * snap.total + 1e-15)

    def test_telescoping_with_dyadic_weights(self):
        # dyadic masses make the telescoping identity exact in floats
        pos = np.array([-2.0, -1.0, 0.5, 3.0])
        w = np.array([0.25, 0.5, 0.125, 0.25])
        snap = build_field(Ensemble(pos, np.zeros(4), np.full(4, 0.5),
                                    np.zeros(4), w))
        x, y = -1.5, 1.0  # strictly between particles
        between = 2.0 * (0.5 + 0.125)
        assert snap.at(x) - snap.at(y) == between


class TestFieldPm:
    def test_symmetric_snapshot_fplus_vanishes(self):
        ens = Ensemble([-1.0, 1.0], [0, 0], [0.5, 0.5], [0, 0], [0.5, 0.5])
        snap = build_field(ens)
        for om in (0.1, 0.4, 2.0):
            fp, _ = field_pm(snap, 0.0, om)
            assert fp == 0.0

    def test_single_molecule_self_difference(self):
        snap = build_field(single_molecule(w=0.5))
        fp, fm = field_pm(snap, 0.0, 0.2)
        assert fp == 0.0
        assert fm == -1.0

    def test_far_field_sum(self):
        snap = build_field(single_molecule(w=0.5))
        fp, fm = field_pm(snap, -1e8, 0.3)
        assert fp == snap.total
        assert fm == 0.0

    def test_domain_check(self):
        snap = build_field(single_molecule())
        with pytest.raises(DomainError):
            field_pm(snap, 0.0, 0.0)


class TestNorms:
    def test_values(self):
        ens = Ensemble([0.0, 1.0], [0, 0], [0.5, 0.5], [0, 0], [0.5, 0.5])
        assert field_norms(build_field(ens)) == (1.0, 2.0)

    def test_zero_mass(self):
        ens = Ensemble([0.0], [0.0], [0.5], [0.0], [0.0])
        assert field_norms(build_field(ens)) == (0.0, 0.0)

    def test_linear_in_mass(self):
        ens = Ensemble([0.0, 1.0], [0, 0], [0.5, 0.5], [0, 0], [1.0, 1.0])
        assert field_norms(build_field(ens)) == (2.0, 4.0)

    @given(total=st.floats(min_value=1e-6, max_value=1e3))
    @settings(max_examples=50, deadline=None)
    def test_sup_bound_attained(self, total):
        ens = Ensemble([0.3], [0.0], [0.5], [0.0], [total / 2.0])
        snap = build_field(ens)
        sup_f, sup_pm = field_norms(snap)
        assert sup_f == snap.at(-1e6)
        fp, _ = field_pm(snap, -1e6, 0.1)
        assert sup_pm == fp


class TestProviders:
    def test_history_left_constant(self):
        h = FieldHistory()
        s0 = FieldSnapshot.empty(time=0.0)
        s1 = build_field(single_molecule())
        h.append(0.0, s0)
        h.append(1.0, s1)
        h.close(2.0)
        assert h.snapshot_at(0.5) is s0
        assert h.snapshot_at(1.0) is s1
        assert h.snapshot_at(1.7) is s1

    def test_history_gap(self):
        h = FieldHistory()
        h.append(0.0, FieldSnapshot.empty())
        h.close(1.0)
        with pytest.raises(FieldGapError):
            h.snapshot_at(1.5)
        with pytest.raises(FieldGapError):
            h.snapshot_at(-0.5)


class TestCsv:
    def test_roundtrip_ensemble(self, tmp_path, rng):
        ens = Ensemble(rng.normal(size=7), rng.normal(size=7),
                       rng.uniform(0.3, 0.7, 7), rng.normal(size=7),
                       rng.uniform(0, 1, 7))
        p = tmp_path / "ens.csv"
        ens.dump_csv(p)
        back = Ensemble.load_csv(p)
        np.testing.assert_array_equal(back.x, ens.x)
        np.testing.assert_array_equal(back.w, ens.w)

    def test_snapshot_columns(self, tmp_path):
        snap = build_field(single_molecule())
        p = tmp_path / "field.csv"
        snap.dump_csv(p)
        header = p.read_text().splitlines()[0]
        assert header == "x_sorted,cum_mass"
