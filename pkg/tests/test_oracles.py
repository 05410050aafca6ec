import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lgfpf.config import load_config, default_config_path
from lgfpf.filter import FilterModel, Representation
from lgfpf.lie import GroupTag, random_quaternions
from lgfpf.oracles import (
    GridDensity,
    OracleError,
    WeightedEnsemble,
    circular_variance,
    fokker_planck,
    grid_moments,
    ks_grid_step,
    sir_step,
    systematic_resample,
)
from lgfpf.rng import NoiseStream
from lgfpf.simulate import generate_truth, run_grid, run_sir


class TestGridMoments:
    def test_uniform_sin(self):
        assert abs(grid_moments(GridDensity.uniform(512), np.sin)) < 1e-12

    def test_one_plus_cos(self):
        p = GridDensity.from_function(lambda th: 1 + np.cos(th), 512)
        assert grid_moments(p, np.cos) == pytest.approx(0.5, abs=1e-10)

    def test_normalized(self):
        p = GridDensity.von_mises(1.0, 3.0, 256)
        assert grid_moments(p, np.ones_like) == pytest.approx(1.0, abs=1e-12)
        assert p.mass() == pytest.approx(1.0, abs=1e-12)

    def test_point(self):
        p = GridDensity.point(math.pi, 64)
        assert grid_moments(p, np.cos) == pytest.approx(-1.0, abs=1e-12)

    def test_too_small(self):
        with pytest.raises(ValueError):
            GridDensity(np.ones(3))


class TestFokkerPlanck:
    def test_mass_conserved(self):
        p = GridDensity.von_mises(0.0, 4.0, 256)
        v = fokker_planck(p.values, np.full(256, 0.7), 0.5, 0.1, p.dtheta)
        assert v.sum() * p.dtheta == pytest.approx(1.0, abs=1e-12)

    def test_heat_kernel_first_moment(self):
        # first circular moment: rotates by omega t, shrinks by exp(-sigma^2 t / 2)
        m, omega, sigma, t = 512, 0.5, 0.8, 1.0
        p = GridDensity.von_mises(0.3, 5.0, m)
        z0 = grid_moments(p, np.cos) + 1j * grid_moments(p, np.sin)
        model = FilterModel(GroupTag.SO2, omega, sigma, np.zeros_like)
        for _ in range(100):
            p = ks_grid_step(p, model, 0.0, t / 100)
        z = grid_moments(p, np.cos) + 1j * grid_moments(p, np.sin)
        expect = z0 * np.exp(1j * omega * t - 0.5 * sigma**2 * t)
        assert abs(z - expect) < 1e-3

    def test_substep_cap(self):
        with pytest.raises(OracleError):
            fokker_planck(np.ones(4096), np.zeros(4096), 50.0, 1.0, 2 * math.pi / 4096)


class TestKSGrid:
    def test_posterior_concentrates(self):
        m = 512
        model = FilterModel(GroupTag.SO2, 0.0, 0.05, np.sin)
        p = GridDensity.von_mises(0.0, 2.0, m)
        rng = np.random.default_rng(0)
        truth, dt = 0.2, 1e-2
        v0 = circular_variance(p)
        for _ in range(300):
            dz = math.sin(truth) * dt + math.sqrt(dt) * rng.standard_normal()
            p = ks_grid_step(p, model, dz, dt)
        assert circular_variance(p) < v0

    def test_rejects_so3(self):
        model = FilterModel(GroupTag.SO3, [0, 0, 0], [0, 0, 0], lambda r: r[:, 0, 0])
        with pytest.raises(ValueError):
            ks_grid_step(GridDensity.uniform(64), model, 0.0, 0.01)

    def test_grid_self_convergence(self):
        cfg = load_config(default_config_path())
        traj = generate_truth(cfg)
        a = run_grid(cfg, traj)
        b = run_grid(cfg.replace(grid_size=2 * cfg.grid_size), traj)
        assert np.abs(a.moments - b.moments).max() < 1e-4


def phase_ensemble(states, n=None):
    states = np.asarray(states, dtype=float)
    return WeightedEnsemble.uniform(Representation.PHASE, states, NoiseStream(0, "sir"), NoiseStream(0, "sir-resample"))


class TestSIR:
    def test_zero_h_keeps_uniform_weights(self):
        model = FilterModel(GroupTag.SO2, 0.1, 0.2, np.zeros_like)
        e = phase_ensemble(np.linspace(0, 6, 50))
        for _ in range(10):
            e = sir_step(e, model, 0.3, 0.01)
            np.testing.assert_allclose(e.weights, 1 / 50, rtol=1e-14)
            assert not e.resampled

    def test_weight_ratio(self):
        model = FilterModel(GroupTag.SO2, 0.0, 0.0, lambda th: (th > 0.5).astype(float))
        e = sir_step(phase_ensemble([0.0, 1.0]), model, 0.1, 0.1)
        # h dZ - h^2 dt / 2 with h = 1, dZ = dt = 0.1
        assert e.weights[1] / e.weights[0] == pytest.approx(math.exp(0.1 - 0.05), rel=1e-14)

    def test_resampling_restores_ess(self):
        model = FilterModel(GroupTag.SO2, 0.0, 0.0, lambda th: 20 * np.cos(th))
        e = sir_step(phase_ensemble(np.linspace(0, 6.2, 100)), model, 2.0, 0.01)
        assert e.resampled
        assert e.ess == pytest.approx(100.0)

    def test_all_weights_vanish(self):
        model = FilterModel(GroupTag.SO2, 0.0, 0.1, lambda th: np.full_like(th, np.inf))
        with pytest.raises(OracleError, match="vanished"):
            sir_step(phase_ensemble([0.0, 1.0]), model, 0.1, 0.01)

    def test_quaternion_particles(self, rng):
        model = FilterModel(GroupTag.SO3, [0.1, 0, 0], [0.2, 0.2, 0.2], lambda r: r[:, 0, 0])
        e = WeightedEnsemble.uniform(
            Representation.QUATERNION, random_quaternions(rng, 100), NoiseStream(0, "sir"), NoiseStream(0, "r")
        )
        e = sir_step(e, model, 0.05, 0.01)
        np.testing.assert_allclose(np.linalg.norm(e.states, axis=1), 1.0, atol=1e-14)
        assert set(e.summary()) == {"q0", "q1", "q2", "q3", "spread"}


class TestSystematicResample:
    def test_uniform_weights_identity(self):
        np.testing.assert_array_equal(systematic_resample(np.full(5, 0.2), 0.5), np.arange(5))

    def test_point_mass(self):
        w = np.array([0.0, 1.0, 0.0])
        np.testing.assert_array_equal(systematic_resample(w, 0.3), [1, 1, 1])

    def test_counts(self):
        w = np.array([0.5, 0.25, 0.25, 0.0])
        for u in (0.0, 0.3, 0.99):
            np.testing.assert_array_equal(np.bincount(systematic_resample(w, u), minlength=4), [2, 1, 1, 0])

    @given(arrays(float, st.integers(1, 40), elements=st.floats(0, 1)).filter(lambda w: w.sum() > 1e-3), st.floats(0, 0.999))
    def test_counts_are_floor_or_ceil(self, w, u):
        w = w / w.sum()
        counts = np.bincount(systematic_resample(w, u), minlength=w.size)
        expect = w.size * w
        assert counts.sum() == w.size
        assert np.all(counts >= np.floor(expect - 1e-9)) and np.all(counts <= np.ceil(expect + 1e-9))


@pytest.mark.slow
def test_sir_matches_grid_within_monte_carlo_error():
    """Time-averaged SIR - grid moment differences over 20 seeds lie in a 3 sigma band around zero."""
    base = load_config(default_config_path())
    diffs = []
    for seed in range(20):
        cfg = base.replace(seed=seed, sir_particles=10_000)
        traj = generate_truth(cfg)
        diffs.append((run_sir(cfg, traj).moments - run_grid(cfg, traj).moments).mean(axis=0))
    diffs = np.array(diffs)
    mean = diffs.mean(axis=0)
    sem = diffs.std(axis=0, ddof=1) / math.sqrt(len(diffs))
    print("SIR - grid mean", mean, "standard error", sem)
    assert np.all(np.abs(mean) <= 3 * sem)
