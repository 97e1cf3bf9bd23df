import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from japs.scenario import (
    ChannelSet, PathLossExponents, RegionTooSmall, ScenarioConfig, Topology,
    build_channels, db_to_linear, dbm_to_watt, draw_rician, generate_topology,
    make_scenario, path_loss, steering_vector,
)


def default_cfg(**kw):
    return ScenarioConfig(**kw)


class TestSteeringVector:
    def test_broadside_two_elements(self):
        np.testing.assert_allclose(steering_vector(0.0, 2, 0.5),
                                   np.array([1.0, 1.0]) / np.sqrt(2))

    def test_endfire_two_elements(self):
        # sin(pi/2) = 1, phase 2*pi*0.5 = pi, so e^{j pi} = -1
        np.testing.assert_allclose(steering_vector(np.pi / 2, 2, 0.5),
                                   np.array([1.0, -1.0]) / np.sqrt(2), atol=1e-12)

    @given(angle=st.floats(-np.pi / 2 + 1e-6, np.pi / 2 - 1e-6),
           n=st.integers(1, 32),
           spacing=st.floats(0.05, 2.0))
    @settings(max_examples=200, deadline=None)
    def test_unit_norm(self, angle, n, spacing):
        v = steering_vector(angle, n, spacing)
        assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_rejects_bad_args(self):
        with pytest.raises(ValueError):
            steering_vector(0.0, 0, 0.5)
        with pytest.raises(ValueError):
            steering_vector(0.0, 4, 0.0)


class TestPathLoss:
    def test_reference_distance(self):
        assert path_loss(1.0, 2.4, 1e-3, 1.0) == pytest.approx(1e-3)

    def test_ten_reference_distances(self):
        expected = 1e-3 * 10.0 ** (-2.4)
        assert path_loss(10.0, 2.4, 1e-3, 1.0) == pytest.approx(expected, rel=1e-12)

    def test_zero_exponent(self):
        assert path_loss(321.0, 0.0, 0.42, 1.0) == pytest.approx(0.42)

    def test_rejects_nonpositive_distance(self):
        with pytest.raises(ValueError):
            path_loss(0.0, 2.0, 1e-3, 1.0)


class TestRician:
    def test_los_limit(self):
        rng = np.random.default_rng(0)
        los = steering_vector(0.3, 4, 0.5)
        out = draw_rician(los, 1e12, rng)
        assert np.max(np.abs(out - los)) < 1e-6

    def test_pure_nlos_moments(self):
        rng = np.random.default_rng(1)
        n, trials = 4, 10_000
        draws = np.array([draw_rician(np.ones(n) / 2.0, 0.0, rng) for _ in range(trials)])
        assert np.max(np.abs(draws.mean(axis=0))) < 0.05
        assert np.max(np.abs(np.var(draws, axis=0) - 1.0)) < 0.05

    def test_unit_average_power(self):
        rng = np.random.default_rng(2)
        draws = np.array([draw_rician(np.ones(1), 1.0, rng) for _ in range(10_000)])
        assert abs(np.mean(np.abs(draws) ** 2) - 1.0) < 0.05


class TestTopology:
    def test_circular_radius(self):
        cfg = default_cfg(topology=Topology.CIRCULAR)
        geo = generate_topology(Topology.CIRCULAR, cfg, np.random.default_rng(3))
        d = np.linalg.norm(geo.sbs - geo.pbs, axis=1)
        np.testing.assert_allclose(d, 200.0, rtol=1e-12)

    def test_linear_spacing(self):
        cfg = default_cfg(topology=Topology.LINEAR)
        geo = generate_topology(Topology.LINEAR, cfg, np.random.default_rng(4))
        xs = np.sort(geo.sbs[:, 0])
        np.testing.assert_allclose(np.diff(xs), 60.0, rtol=1e-12)
        # PBS sits 200 m from the SBS line, target 80 m from it
        assert abs(geo.sbs[0, 1] - geo.pbs[1]) == pytest.approx(200.0)
        assert abs(geo.sbs[0, 1] - geo.target[1]) == pytest.approx(80.0)

    def test_random_layout_fixed_points(self):
        cfg = default_cfg()
        geo = generate_topology(Topology.RANDOM, cfg, np.random.default_rng(5))
        np.testing.assert_allclose(geo.pbs, [0.0, 250.0])
        np.testing.assert_allclose(geo.target, [250.0, 250.0])

    def test_preset_ue_angles(self):
        cfg = default_cfg()
        geo = generate_topology(Topology.RANDOM, cfg, np.random.default_rng(6))
        np.testing.assert_allclose(np.degrees(geo.theta_dl), [-55.0, 30.0], atol=1e-9)
        np.testing.assert_allclose(np.degrees(geo.theta_ul_pbs), [-70.0, 20.0], atol=1e-9)

    def test_seeded_determinism(self):
        cfg = default_cfg(seed=77)
        a = generate_topology(Topology.RANDOM, cfg, np.random.default_rng(77))
        b = generate_topology(Topology.RANDOM, cfg, np.random.default_rng(77))
        np.testing.assert_array_equal(a.sbs, b.sbs)
        np.testing.assert_array_equal(a.ul_ue, b.ul_ue)

    def test_region_too_small_for_circle(self):
        cfg = default_cfg(topology=Topology.CIRCULAR, region_size=300.0)
        with pytest.raises(RegionTooSmall):
            generate_topology(Topology.CIRCULAR, cfg, np.random.default_rng(0))

    def test_angles_in_open_halfplane(self):
        for seed in range(5):
            cfg = default_cfg(seed=seed)
            geo = generate_topology(Topology.RANDOM, cfg, np.random.default_rng(seed))
            angles = np.concatenate([[geo.theta], geo.phi, geo.theta_dl,
                                     geo.theta_ul_pbs, geo.theta_ul_sbs.ravel()])
            assert np.all(np.abs(angles) < np.pi / 2)


class TestChannels:
    def test_sensing_blocks_rank_one(self):
        geo, ch = make_scenario(default_cfg(seed=8))
        for blk in ch.a_blocks:
            assert np.linalg.matrix_rank(blk, tol=1e-12) == 1

    def test_block_frobenius_equals_alpha(self):
        geo, ch = make_scenario(default_cfg(seed=9))
        # ||a b^H||_F = ||a|| ||b|| = 1 for unit steering vectors
        for i, blk in enumerate(ch.a_blocks):
            assert np.linalg.norm(blk) == pytest.approx(abs(ch.alpha[i]), rel=1e-12)

    def test_si_entry_magnitudes(self):
        geo, ch = make_scenario(default_cfg(seed=10))
        np.testing.assert_allclose(np.abs(ch.h_si), 10.0 ** (-5.5), rtol=1e-12)

    def test_stacking_and_b0(self):
        geo, ch = make_scenario(default_cfg(seed=11))
        n0, n1 = ch.n0, ch.n1
        np.testing.assert_array_equal(ch.a_stacked[:n0], ch.a_blocks[0])
        for k in range(ch.j):
            np.testing.assert_array_equal(
                ch.a_stacked[n0 + k * n1: n0 + (k + 1) * n1], ch.a_blocks[k + 1])
        np.testing.assert_array_equal(ch.b0, ch.a_stacked + ch.g_effective)
        assert np.all(ch.g_effective[n0:] == 0)

    def test_bit_identical_channels(self):
        cfg = default_cfg(seed=12)
        _, a = make_scenario(cfg)
        _, b = make_scenario(cfg)
        np.testing.assert_array_equal(a.h_dl, b.h_dl)
        np.testing.assert_array_equal(a.h_ul, b.h_ul)
        np.testing.assert_array_equal(a.alpha, b.alpha)
        np.testing.assert_array_equal(a.h_cross, b.h_cross)

    def test_swerling_magnitude_mean(self):
        cfg = default_cfg(seed=13, sigma0=2.5)
        rng = np.random.default_rng(13)
        draws = rng.exponential(cfg.sigma0, size=10_000)
        assert abs(draws.mean() - cfg.sigma0) / cfg.sigma0 < 0.05
        # the per-realization draw feeds alpha = sigma / (2 d)
        geo, ch = make_scenario(cfg)
        np.testing.assert_allclose(np.abs(ch.alpha) * 2.0 * geo.dist_target,
                                   np.abs(ch.alpha * 2.0 * geo.dist_target))


class TestConfig:
    def test_db_conversions(self):
        assert db_to_linear(10.0) == pytest.approx(10.0)
        assert dbm_to_watt(30.0) == pytest.approx(1.0)
        assert dbm_to_watt(-80.0) == pytest.approx(1e-11)

    def test_default_matches_experiment_setup(self):
        cfg = default_cfg()
        assert (cfg.m, cfg.n0, cfg.n1, cfg.j, cfg.d, cfg.u) == (6, 6, 6, 3, 2, 2)
        assert cfg.p_max_pbs == pytest.approx(1.0)
        assert cfg.gamma_sense == pytest.approx(10.0)

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            default_cfg(m=0)
        with pytest.raises(ValueError):
            default_cfg(spacing=-0.5)
        with pytest.raises(ValueError):
            default_cfg(dl_ue_angles_deg=(10.0,))  # wrong length for d=2

    def test_tolerance_validation(self):
        from japs.scenario import Tolerances
        with pytest.raises(ValueError):
            Tolerances(eta_scale=1.5)
        with pytest.raises(ValueError):
            Tolerances(eta1_init=-1.0)


class TestLinearRegionBounds:
    def test_too_many_stations_rejected(self):
        cfg = default_cfg(topology=Topology.LINEAR, j=10)
        with pytest.raises(RegionTooSmall):
            generate_topology(Topology.LINEAR, cfg, np.random.default_rng(0))
