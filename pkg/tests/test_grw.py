import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from collapselab.evolver import PotentialSpec, evolve_grid
from collapselab.grw import (CollapseRejected, GrwMasterEquation, GrwParams, apply_collapse,
                             collapse_center_distribution, coherence_decay_rate, decoherence_kernel,
                             grw_master_step, localization_profile, mass_density, run_grw_trajectory,
                             sample_collapse_center, sample_collapse_schedule, trigger_report)
from collapselab.hilbert import gaussian_packet, gaussian_state, grid_state, inner, norm
from collapselab.rng import stream

FREE = PotentialSpec.free()


def two_packets(D, s=0.5, npts=512, extent=(-20.0, 20.0), c=(1.0, 1.0)):
    lo, hi = extent
    x = lo + np.arange(npts) * (hi - lo) / npts
    left = grid_state([gaussian_packet(x, -D / 2, s)], [extent])
    right = grid_state([gaussian_packet(x, D / 2, s)], [extent])
    both = grid_state([c[0] * left.amplitudes + c[1] * right.amplitudes], [extent])
    return both, left, right


def projector(psi):
    return np.outer(psi.amplitudes, psi.amplitudes.conj()) * psi.cell_volume


class TestParams:
    def test_validation(self):
        with pytest.raises(ValueError):
            GrwParams(-1.0, 1.0)
        with pytest.raises(ValueError):
            GrwParams(1.0, 0.0)

    def test_mass_proportional_rates(self):
        p = GrwParams(2.0, 1.0, mass_proportional=True, nucleon_mass=0.5)
        np.testing.assert_allclose(p.rates([1.0, 2.0]), [4.0, 8.0])
        np.testing.assert_allclose(GrwParams(2.0, 1.0).rates([1.0, 2.0]), [2.0, 2.0])


class TestSchedule:
    def test_zero_rate_is_empty(self):
        assert sample_collapse_schedule(GrwParams(0.0, 1.0), [1.0, 1.0], 10.0, 0) == []

    def test_sorted_and_bounded(self):
        s = sample_collapse_schedule(GrwParams(3.0, 1.0), np.ones(4), 2.0, 1)
        t = [e[0] for e in s]
        assert t == sorted(t)
        assert all(0 <= ti < 2.0 for ti in t)
        assert {e[1] for e in s} <= set(range(4))

    @pytest.mark.parametrize("N", [1, 5])
    def test_poisson_mean(self, N):
        lam, T, runs = 0.7, 3.0, 2000
        counts = [len(sample_collapse_schedule(GrwParams(lam, 1.0), np.ones(N), T, stream(4, "s", r)))
                  for r in range(runs)]
        mean = N * lam * T
        assert abs(np.mean(counts) - mean) < 3 * np.sqrt(mean / runs)
        # Poisson: variance equals mean
        assert np.var(counts) == pytest.approx(mean, rel=0.15)

    def test_per_particle_split(self):
        runs = 1000
        p = GrwParams(1.0, 1.0)
        who = [e[1] for r in range(runs) for e in sample_collapse_schedule(p, np.ones(3), 1.0, stream(2, "p", r))]
        obs = np.bincount(who, minlength=3)
        assert stats.chisquare(obs).pvalue > 1e-3


class TestLocalization:
    def test_profile_square_integrates_to_one(self):
        psi = gaussian_state(512, (-20, 20), 0.0, 1.0)
        for sigma in (0.5, 1.0, 2.0):
            prof = localization_profile(psi, 0, 3.0, sigma)
            assert np.sum(prof ** 2) * psi.spacings[0] == pytest.approx(1.0, abs=1e-9)

    def test_center_distribution_normalized(self):
        psi, _, _ = two_packets(8.0)
        for sigma in (0.3, 1.0, 2.5):
            x, p = collapse_center_distribution(psi, 0, sigma)
            assert np.sum(p) * psi.spacings[0] == pytest.approx(1.0, abs=1e-9)

    def test_center_distribution_matches_direct_norm(self):
        psi, _, _ = two_packets(6.0, c=(1.0, 0.5))
        sigma = 1.0
        xs = np.array([-3.0, -1.0, 0.0, 2.5, 3.0])
        _, p = collapse_center_distribution(psi, 0, sigma, x=xs)
        direct = [norm(psi.with_amplitudes(psi.amplitudes * localization_profile(psi, 0, x, sigma))) ** 2
                  for x in xs]
        np.testing.assert_allclose(p, direct, rtol=1e-10)

    def test_center_distribution_symmetric(self):
        psi, _, _ = two_packets(8.0, npts=512)
        x, p = collapse_center_distribution(psi, 0, 1.0)
        # grid is symmetric about 0 apart from the first point
        np.testing.assert_allclose(p[1:], p[1:][::-1], atol=1e-12)

    @pytest.mark.parametrize("s,sigma", [(0.5, 1.0), (1.0, 0.4), (1.5, 2.0)])
    def test_convolution_width(self, s, sigma):
        psi = gaussian_state(1024, (-40, 40), 0.0, s)
        x, p = collapse_center_distribution(psi, 0, sigma)
        var = np.sum(p * x ** 2) * psi.spacings[0]
        assert var == pytest.approx(s ** 2 + sigma ** 2 / 2, rel=1e-6)

    def test_tail_bound(self):
        psi = gaussian_state(1024, (-30, 30), 0.0, 0.05)
        sigma = 1.0
        for D in (2.0, 3.0, 4.0):
            x, p = collapse_center_distribution(psi, 0, sigma)
            mass = np.sum(p[np.abs(x + D) < 0.5]) * psi.spacings[0]
            assert mass < 10 * np.exp(-(D - 0.5) ** 2 / sigma ** 2)

    def test_sampler_variance_for_narrow_state(self):
        amps = np.zeros(512, dtype=complex)
        amps[256] = 1.0
        psi = grid_state([amps], [(-20, 20)])
        rng = np.random.default_rng(0)
        sigma = 1.0
        xs = np.array([sample_collapse_center(psi, 0, sigma, rng) for _ in range(20000)])
        dx = psi.spacings[0]
        assert np.var(xs) == pytest.approx(sigma ** 2 / 2 + dx ** 2 / 12, rel=0.03)

    def test_sampler_matches_distribution(self):
        psi, _, _ = two_packets(6.0, s=0.7, c=(1.0, 0.6))
        sigma = 0.8
        rng = np.random.default_rng(3)
        n = 20000
        xs = np.array([sample_collapse_center(psi, 0, sigma, rng) for _ in range(n)])
        edges = np.linspace(-8, 8, 33)
        obs, _ = np.histogram(xs, edges)
        fine = np.linspace(-8, 8, 3201)
        _, p = collapse_center_distribution(psi, 0, sigma, x=fine)
        cdf = np.concatenate([[0], np.cumsum(0.5 * (p[1:] + p[:-1]) * np.diff(fine))])
        probs = np.diff(np.interp(edges, fine, cdf))
        exp = probs * n
        keep = exp > 5
        chi2 = np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep])
        assert stats.chi2.sf(chi2, keep.sum() - 1) > 1e-3

    def test_large_sigma_leaves_state_unchanged(self):
        psi = gaussian_state(256, (-10, 10), 0.5, 0.8, k0=1.0)
        out = apply_collapse(psi, 0, 0.0, 1e4)
        assert abs(inner(psi, out)) == pytest.approx(1.0, abs=1e-8)

    def test_collapse_picks_a_packet(self):
        sigma = 1.0
        psi, left, right = two_packets(10 * sigma)
        out = apply_collapse(psi, 0, 5.0, sigma)
        assert norm(out) == pytest.approx(1.0, abs=1e-12)
        x = out.axis(0)
        assert np.sum(out.density()[x > 0]) * out.spacings[0] > 0.99
        # the surviving packet is the right one, only slightly reshaped
        assert abs(inner(right, out)) ** 2 > 0.95

    def test_center_outside_extent_rejected(self):
        psi = gaussian_state(64, (-5, 5), 0.0, 1.0)
        with pytest.raises(ValueError):
            apply_collapse(psi, 0, 7.0, 1.0)

    def test_annihilated_state_rejected(self):
        amps = np.zeros(256, dtype=complex)
        amps[0] = 1.0
        psi = grid_state([amps], [(-100, 100)])
        with pytest.raises(CollapseRejected):
            apply_collapse(psi, 0, 0.0, 0.5)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-9, 9), st.floats(0.3, 3.0))
    def test_collapse_always_normalized(self, x, sigma):
        psi, _, _ = two_packets(4.0, s=1.0, npts=256)
        assert norm(apply_collapse(psi, 0, x, sigma)) == pytest.approx(1.0, abs=1e-12)


class TestTrajectory:
    def test_zero_rate_is_schroedinger(self):
        psi = gaussian_state(256, (-20, 20), -2.0, 1.0, k0=1.0)
        final, events = run_grw_trajectory(psi, FREE, GrwParams(0.0, 1.0), 2.0, 5, dt=0.01)
        ref = evolve_grid(psi, FREE, 0.01, 200)
        assert events == []
        assert np.max(np.abs(final.amplitudes - ref.amplitudes)) < 1e-12

    def test_deterministic(self):
        psi, _, _ = two_packets(8.0, npts=256)
        a = run_grw_trajectory(psi, FREE, GrwParams(2.0, 1.0), 2.0, 17)
        b = run_grw_trajectory(psi, FREE, GrwParams(2.0, 1.0), 2.0, 17)
        assert a[1] == b[1]
        assert np.array_equal(a[0].amplitudes, b[0].amplitudes)

    def test_born_split(self):
        sigma = 1.0
        psi, left, right = two_packets(10.0, s=0.7, npts=256, c=(1.0, np.sqrt(0.5)))
        born_right = 0.5 / 1.5
        runs = 1000
        right_count = 0
        for r in range(runs):
            final, events = run_grw_trajectory(psi, FREE, GrwParams(5.0, sigma), 1.0, stream(1, "born", r), dt=0.05)
            x = final.axis(0)
            right_count += np.sum(final.density()[x > 0]) * final.spacings[0] > 0.5
        se = np.sqrt(born_right * (1 - born_right) / runs)
        assert abs(right_count / runs - born_right) < 3 * se

    def test_microscopic_innocence(self):
        # a single-packet state is barely disturbed by rare wide collapses
        psi = gaussian_state(256, (-20, 20), 0.0, 0.5)
        lam, T = 1e-2, 5.0
        ref = evolve_grid(psi, FREE, 0.05, 100)
        diffs = []
        for r in range(800):
            final, _ = run_grw_trajectory(psi, FREE, GrwParams(lam, 1.0), T, stream(2, "innocent", r), dt=0.05)
            diffs.append(np.linalg.norm(final.amplitudes - ref.amplitudes) * np.sqrt(psi.cell_volume))
        assert np.mean(diffs) < 2 * lam * T


class TestMasterEquation:
    def setup_method(self):
        self.psi, _, _ = two_packets(8.0, s=0.7, npts=32, extent=(-8.0, 8.0), c=(1.0, 0.8))

    def test_zero_rate_is_unitary(self):
        rho = projector(self.psi)
        out = grw_master_step(rho, self.psi, FREE, GrwParams(0.0, 1.0), 0.1)
        ev = np.linalg.eigvalsh(out)
        assert ev.max() == pytest.approx(1.0, abs=1e-12)
        assert np.trace(out @ out).real == pytest.approx(1.0, abs=1e-12)

    def test_trace_and_positivity(self):
        me = GrwMasterEquation(self.psi, FREE, GrwParams(1.0, 1.0), 0.05)
        rho = projector(self.psi)
        for _ in range(100):
            rho = me.step(rho, check_positivity=True)
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.eigvalsh(rho).min() > -1e-12
        assert np.trace(rho @ rho).real < 0.99

    def test_rejects_non_hermitian(self):
        H = np.triu(np.ones((32, 32)))
        with pytest.raises(ValueError):
            GrwMasterEquation(self.psi, H, GrwParams(1.0, 1.0), 0.1)

    def test_rejects_large_grid(self):
        psi = gaussian_state(128, (-8, 8), 0.0, 1.0)
        with pytest.raises(ValueError):
            GrwMasterEquation(psi, None, GrwParams(1.0, 1.0), 0.1)

    def test_kernel_matches_quadrature(self):
        like = gaussian_state(32, (-8, 8), 0.0, 1.0)
        sigma = 1.0
        G = decoherence_kernel(like, sigma)
        q = like.axis(0)

        def lam(y):
            return (np.pi * sigma ** 2) ** -0.25 * np.exp(-y ** 2 / (2 * sigma ** 2))

        for i, j in [(16, 16), (16, 18), (16, 22), (10, 20)]:
            oracle, _ = integrate.quad(lambda x: lam(q[i] - x) * lam(q[j] - x), -np.inf, np.inf)
            assert G[i, j] == pytest.approx(oracle, abs=1e-10)

    @pytest.mark.parametrize("d_cells", [4, 8, 12])
    def test_decay_rate(self, d_cells):
        like = gaussian_state(64, (-16, 16), 0.0, 1.0)
        params = GrwParams(0.5, 1.0)
        rho = np.full((64, 64), 1.0 / 64, dtype=complex)
        me = GrwMasterEquation(like, None, params, 0.01)
        t = 2.0
        out = me.evolve(rho, 200)
        i, j = 20, 20 + d_cells
        d = d_cells * like.spacings[0]
        measured = -np.log(abs(out[i, j]) / abs(rho[i, j])) / t
        assert measured == pytest.approx(coherence_decay_rate(d, params), rel=0.02)

    def test_decay_vanishes_at_short_distance(self):
        params = GrwParams(1.0, 1.0)
        assert coherence_decay_rate(0.0, params) == 0.0
        assert coherence_decay_rate(1e-3, params) < 1e-6
        assert coherence_decay_rate(100.0, params) == pytest.approx(1.0)

    def test_unraveling_small(self):
        lam, T, runs = 1.0, 1.0, 400
        psi = self.psi
        params = GrwParams(lam, 1.0)
        acc = np.zeros((32, 32), dtype=complex)
        for r in range(runs):
            final, _ = run_grw_trajectory(psi, FREE, params, T, stream(9, "unravel-small", r), dt=0.01)
            acc += projector(final)
        me = GrwMasterEquation(psi, FREE, params, 0.001)
        rho = me.evolve(projector(psi), 1000)
        # loose check here; the full-size comparison lives in the acceptance suite
        assert np.max(np.abs(acc / runs - rho)) < 0.05


class TestObservables:
    def test_mass_density_integrals(self):
        psi = gaussian_state(256, (-10, 10), 1.0, 1.0)
        assert mass_density(psi).integral() == pytest.approx(1.0, abs=1e-12)
        x = psi.axis(0)
        two = grid_state([gaussian_packet(x, -2, 1), gaussian_packet(x, 3, 0.5)], [(-10, 10)] * 2, [1.0, 3.0])
        assert mass_density(two).integral() == pytest.approx(2.0, abs=1e-12)
        assert mass_density(two, mass_weighted=True).integral() == pytest.approx(4.0, abs=1e-12)

    def test_mass_density_after_collapse(self):
        sigma = 1.0
        psi, _, _ = two_packets(10.0, s=0.5)
        out = apply_collapse(psi, 0, 5.0, sigma)
        md = mass_density(out)
        inside = np.abs(md.x - 5.0) < 3 * sigma
        assert np.sum(md.values[inside]) * (md.x[1] - md.x[0]) > 0.99

    def test_trigger_report(self):
        p = GrwParams(0.5, 1.0)
        T, runs = 4.0, 1000
        for N in (1, 10):
            evs = []
            for r in range(runs):
                evs.extend(sample_collapse_schedule(p, np.ones(N), T, stream(3, f"trig{N}", r)))
            rep = trigger_report(evs, N, p, T, runs)
            assert rep["expected_rate"] == pytest.approx(N * 0.5)
            assert abs(rep["z_score"]) < 3
