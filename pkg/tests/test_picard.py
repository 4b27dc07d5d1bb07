import math

import numpy as np
import pytest

from diatomic_vlasov import (
    BoundParameters,
    BumpDatum,
    ConfigError,
    Ensemble,
    StaticField,
    StepControl,
    build_field,
    confinement_time,
    custom_model,
    sample_datum,
    solve_linear,
    support_bounds,
    tangent_model,
    zero_field,
)
from diatomic_vlasov.picard import iterate, probe_grid_points


def small_datum(amp=4.0):
    return BumpDatum(centers=(0.0, 0.0, 0.5, 0.0),
                     widths=(0.5, 0.3, 0.08, 0.3), amplitude=amp)


BOX = ((-0.8, 0.8), (-0.5, 0.5), (0.37, 0.63), (-0.5, 0.5))


class TestSampling:
    def test_mass_matches_quadrature(self):
        # product datum: mass factorizes; each bump integrates to 16/15*width
        d = small_datum(amp=1.0)
        ens = sample_datum(d, d.support(), (24, 24, 24, 24), epsilon=1.0)
        expect = (16.0 / 15.0) ** 4 * 0.5 * 0.3 * 0.08 * 0.3
        assert ens.total_mass == pytest.approx(expect, rel=1e-2)

    def test_prunes_zero_cells(self):
        d = small_datum()
        ens = sample_datum(d, BOX, (8, 8, 8, 8), epsilon=1.0)
        assert len(ens) < 8**4
        assert np.all(ens.w > 0)

    def test_omega_box_must_sit_inside_domain(self):
        d = small_datum()
        box = (BOX[0], BOX[1], (-0.1, 0.5), BOX[3])
        with pytest.raises(ConfigError):
            sample_datum(d, box, (4, 4, 4, 4), epsilon=1.0)

    def test_deterministic(self):
        d = small_datum()
        a = sample_datum(d, BOX, (6, 6, 6, 6), epsilon=1.0)
        b = sample_datum(d, BOX, (6, 6, 6, 6), epsilon=1.0)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.w, b.w)


class TestSupportBounds:
    def test_single_particle_degenerate_box(self):
        ens = Ensemble([0.3], [-0.2], [0.55], [0.1], [1.0])
        s = support_bounds(ens)
        assert (s.Px, s.Pv, s.Pomega_minus, s.Pomega_plus, s.Peta) == \
            (0.3, 0.2, 0.55, 0.55, 0.1)

    def test_free_streaming_growth(self):
        # force-free custom model: the x extent grows by exactly Pv * T
        model = custom_model(1.0, lambda w: np.zeros_like(np.asarray(w, dtype=float)))
        ens = Ensemble([0.0, 0.1], [-0.5, 0.5], [0.5, 0.5], [0.0, 0.0], [1.0, 1.0])
        s0 = support_bounds(ens)
        moved, _ = solve_linear(ens, zero_field(), model, T=1.0,
                                control=StepControl(dt=0.05))
        s1 = support_bounds(moved)
        assert s1.Px == pytest.approx(s0.Px + s0.Pv * 1.0, abs=1e-12)


class TestSolveLinear:
    def test_free_streaming_transport(self):
        model = custom_model(1.0, lambda w: np.zeros_like(np.asarray(w, dtype=float)))
        ens = Ensemble([0.0, 1.0], [0.3, -0.2], [0.45, 0.55], [0.02, -0.03],
                       [0.5, 0.5])
        moved, _ = solve_linear(ens, zero_field(), model, T=2.0,
                                control=StepControl(dt=0.1))
        np.testing.assert_allclose(moved.x, [0.6, 0.6], atol=1e-12)
        np.testing.assert_allclose(moved.omega, [0.49, 0.49], atol=1e-12)

    def test_mass_invariant(self, tan1):
        d = small_datum()
        ens = sample_datum(d, BOX, (6, 6, 6, 6), epsilon=1.0)
        prov = StaticField(build_field(ens))
        moved, _ = solve_linear(ens, prov, tan1, T=0.05, control=StepControl(dt=0.01))
        assert moved.total_mass == ens.total_mass  # same float array, same sum
        assert moved.w is ens.w

    def test_sup_preserved_under_transport(self, tan1):
        d = small_datum()
        ens = sample_datum(d, BOX, (6, 6, 6, 6), epsilon=1.0)
        prov = StaticField(build_field(ens))
        moved, _ = solve_linear(ens, prov, tan1, T=0.05, control=StepControl(dt=0.01))
        assert np.max(moved.f_values) == np.max(ens.f_values)

    def test_backward_oracle_matches_datum_at_t0(self, tan1):
        # evaluating at pushed particle positions recovers datum values
        d = small_datum()
        ens = sample_datum(d, BOX, (5, 5, 5, 5), epsilon=1.0)
        prov = StaticField(build_field(ens))
        ctl = StepControl(dt=0.005)
        moved, evaluate = solve_linear(ens, prov, tan1, T=0.05, control=ctl,
                                       datum=d)
        z = np.stack([moved.x, moved.v, moved.omega, moved.eta], axis=1)
        vals = evaluate(z)
        # the backward map inverts the forward one to roundoff
        np.testing.assert_allclose(vals, ens.f_values, rtol=0, atol=1e-7)


class TestIterate:
    def setup_run(self, n_max=4, probe=256):
        d = small_datum()
        model = tangent_model(1.0)
        p = BoundParameters(epsilon=1.0, epsilon0=0.37, R=0.8,
                            C_minus=0.05, C=0.5, model=model)
        t0 = confinement_time(p)
        T = t0 / 2
        recs = iterate(d, BOX, (8, 8, 8, 8), model, T=T, n_max=n_max,
                       probe_grid=probe, control=StepControl(dt=T / 10),
                       dt_macro=T / 10, t0_limit=t0)
        return recs, T

    def test_records_and_decay(self):
        recs, _ = self.setup_run()
        assert [r.n for r in recs] == [1, 2, 3, 4]
        deltas = [r.sup_delta for r in recs]
        assert deltas[0] > 0
        # super-geometric decay: each round shrinks by a growing factor
        nz = [d for d in deltas if d > 0]
        ratios = [nz[i + 1] / nz[i] for i in range(len(nz) - 1)]
        assert all(r < 0.5 for r in ratios)

    def test_n_max_zero_single_record(self):
        d = small_datum()
        recs = iterate(d, BOX, (6, 6, 6, 6), tangent_model(1.0), T=0.01,
                       n_max=0, probe_grid=64)
        assert len(recs) == 1
        assert recs[0].n == 0 and recs[0].sup_delta == 0.0
        assert recs[0].sup_F > 0

    def test_horizon_guard(self):
        d = small_datum()
        with pytest.raises(ConfigError):
            iterate(d, BOX, (4, 4, 4, 4), tangent_model(1.0), T=1.0,
                    n_max=1, t0_limit=0.05)

    def test_support_grows_with_horizon(self):
        d = small_datum()
        model = tangent_model(1.0)
        r1 = iterate(d, BOX, (6, 6, 6, 6), model, T=0.01, n_max=1,
                     probe_grid=64, control=StepControl(dt=0.002), dt_macro=0.002)
        r2 = iterate(d, BOX, (6, 6, 6, 6), model, T=0.02, n_max=1,
                     probe_grid=64, control=StepControl(dt=0.002), dt_macro=0.002)
        assert r2[0].support.Px >= r1[0].support.Px
        assert r2[0].support.Pomega_plus >= r1[0].support.Pomega_plus

    def test_probe_perturbation_agreement(self):
        # scrambled vs plain probe grids must tell the same decay story
        d = small_datum()
        model = tangent_model(1.0)
        kw = dict(T=0.02, n_max=3, probe_grid=512,
                  control=StepControl(dt=0.004), dt_macro=0.004)
        r_plain = iterate(d, BOX, (8, 8, 8, 8), model, **kw)
        r_scram = iterate(d, BOX, (8, 8, 8, 8), model, probe_seed=7, **kw)
        for a, b in zip(r_plain, r_scram):
            if a.sup_delta > 0 and b.sup_delta > 0:
                assert abs(math.log10(a.sup_delta / b.sup_delta)) < 1.0

    def test_field_norm_bounded_by_twice_mass(self):
        recs, _ = self.setup_run(n_max=2)
        d = small_datum()
        ens = sample_datum(d, BOX, (8, 8, 8, 8), epsilon=1.0)
        for r in recs:
            assert r.sup_F_pm <= 2.0 * ens.total_mass + 1e-12


class TestProbeGrid:
    def test_inside_box_and_deterministic(self):
        s = support_bounds(Ensemble([0.0, 0.5], [0.1, -0.1], [0.4, 0.6],
                                    [-0.2, 0.2], [1, 1]))
        a = probe_grid_points(s, 128)
        b = probe_grid_points(s, 128)
        assert np.array_equal(a, b)
        assert np.all(a[:, 2] >= 0.4) and np.all(a[:, 2] <= 0.6)
        assert np.all(np.abs(a[:, 0]) <= 0.5)
