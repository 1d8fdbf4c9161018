import numpy as np
import pytest
from helpers import const_wf_mean, const_wf_variance, stderr_of_mean, stderr_of_variance

from kimura_lab import catalog, engine
from kimura_lab.engine import PathBundle, SimConfig
from kimura_lab.errors import SingularMatrixError
from kimura_lab.geometry import StatePoint


def _cfg(**kw):
    base = dict(horizon_T=1.0, dt=1e-3, n_paths=100, master_seed=1)
    base.update(kw)
    return SimConfig(**base)


class TestSimConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            _cfg(dt=2.0)  # dt >= horizon
        with pytest.raises(ValueError):
            _cfg(n_paths=0)
        with pytest.raises(ValueError):
            _cfg(clamp_mode="bogus")
        with pytest.raises(ValueError):
            _cfg(dt=3e-4)  # does not divide the horizon
        with pytest.raises(ValueError):
            _cfg(epsilon_floor=-1.0)

    def test_grid(self):
        cfg = _cfg(record_stride=300)
        assert cfg.n_steps == 1000
        ks = cfg.recorded_steps()
        assert ks[0] == 0 and ks[-1] == 1000
        assert set(np.diff(ks)) <= {300, 100}
        assert cfg.times()[-1] == pytest.approx(1.0)


class TestStepStandard:
    def test_deterministic_euler_from_boundary(self):
        model, _ = catalog.build("const-wf-1d", {"b": 1.0, "sigma": 0.0})
        z, pre = engine.step_standard(model, StatePoint([0.0], []), 0.1, np.zeros(1))
        assert z.x[0] == pytest.approx(0.1)
        assert pre.x[0] == pytest.approx(0.1)

    def test_zero_increment_zero_drift_is_identity(self):
        model, _ = catalog.build("const-wf-1d", {"b": 0.0, "sigma": 1.0})
        z0 = StatePoint([0.7], [])
        z, _ = engine.step_standard(model, z0, 0.01, np.zeros(1))
        assert z.x[0] == z0.x[0]

    def test_boundary_kills_diffusion_rows(self):
        # at x = 0 the noise row vanishes, so x' = b dt >= 0 whatever dW is
        model, _ = catalog.build("const-wf-1d", {"b": 0.5, "sigma": 3.0})
        z, pre = engine.step_standard(model, StatePoint([0.0], []), 0.01, np.array([17.0]))
        assert z.x[0] == pytest.approx(0.005)
        assert pre.x[0] == pytest.approx(0.005)

    def test_matches_simulate_single_path(self):
        model, z0 = catalog.build("wf-with-free-coord", {})
        cfg = _cfg(n_paths=1, horizon_T=0.01, dt=1e-3, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        z = z0
        for k in range(cfg.n_steps):
            z, _ = engine.step_standard(model, z, cfg.dt, bundle.increments[0, k])
            expect = bundle.states[0, k + 1]
            assert np.array_equal(np.concatenate([z.x, z.y]), expect)


class TestSimulate:
    def test_ode_polygon_when_noise_off(self):
        model, _ = catalog.build("const-wf-1d", {"b": 2.0, "sigma": 0.0})
        cfg = _cfg(n_paths=1, record_stride=1)
        bundle = engine.simulate_standard(model, cfg, StatePoint([0.25], []))
        expect = 0.25 + 2.0 * bundle.times
        assert np.allclose(bundle.states[0, :, 0], expect, atol=1e-12)

    def test_moment_oracle_medium_scale(self):
        model, z0 = catalog.build("const-wf-1d", {})
        cfg = _cfg(n_paths=20_000, record_stride=1000, master_seed=5)
        xT = engine.simulate_standard(model, cfg, z0).states[:, -1, 0]
        want_mean = const_wf_mean(0.5, 1.0, 1.0)
        want_var = const_wf_variance(0.5, 1.0, 1.0, 1.0)
        assert abs(xT.mean() - want_mean) <= 4 * stderr_of_mean(xT)
        assert abs(xT.var(ddof=1) - want_var) <= 4 * stderr_of_variance(xT)

    def test_support_under_clamp(self):
        model, z0 = catalog.build("const-wf-1d", {"x0": 0.0})
        cfg = _cfg(n_paths=500, record_stride=1, master_seed=9)
        bundle = engine.simulate_standard(model, cfg, z0)
        assert bundle.x.min() >= 0.0

    def test_determinism_across_workers_blocks_and_runs(self):
        model, z0 = catalog.build("wf-with-free-coord", {})
        cfg = _cfg(n_paths=3000, record_stride=250, master_seed=11)
        a = engine.simulate_standard(model, cfg, z0)
        b = engine.simulate_standard(model, cfg, z0, workers=4)
        c = PathBundle.concatenate(list(engine.iter_simulate(model, cfg, z0, block_paths=173)))
        assert np.array_equal(a.states, b.states)
        assert np.array_equal(a.states, c.states)
        assert np.array_equal(a.negativity_log, c.negativity_log)
        assert np.array_equal(a.boundary_hit_count, b.boundary_hit_count)

    def test_horizon_prefix_property(self):
        model, z0 = catalog.build("const-wf-1d", {})
        long = engine.simulate_standard(model, _cfg(horizon_T=1.0, record_stride=1), z0)
        short = engine.simulate_standard(model, _cfg(horizon_T=0.5, record_stride=1), z0)
        assert np.array_equal(long.states[:, :501, :], short.states)

    def test_singular_with_zero_mixing_matches_standard_bitwise(self):
        model, z0 = catalog.build("log-drift", {"f0": 0.0})
        cfg = _cfg(n_paths=200, record_stride=1, retain_increments=True)
        std = engine.simulate_standard(model, cfg, z0)
        sing = engine.simulate_singular(model, cfg, z0)
        assert np.array_equal(std.states, sing.states)
        assert np.array_equal(std.increments, sing.increments)

    def test_singular_requires_mixing_terms(self):
        model, z0 = catalog.build("const-wf-1d", {})
        with pytest.raises(ValueError):
            engine.simulate_singular(model, _cfg(), z0)

    def test_increment_statistics(self):
        model, z0 = catalog.build("const-wf-1d", {})
        cfg = _cfg(n_paths=1000, retain_increments=True, record_stride=1000, master_seed=2)
        bundle = engine.simulate_standard(model, cfg, z0)
        pooled = bundle.increments.reshape(-1) / np.sqrt(cfg.dt)
        count = pooled.size
        assert count == 1_000_000
        assert abs(pooled.mean()) <= 4.0 / np.sqrt(count)
        assert abs(pooled.var() - 1.0) <= 0.01

    def test_per_path_initial_states(self):
        model, _ = catalog.build("const-wf-1d", {"sigma": 0.0})
        x0 = np.linspace(0.0, 1.0, 7)[:, None]
        cfg = _cfg(n_paths=7, horizon_T=0.1, dt=0.05, record_stride=2)
        bundle = engine.simulate_standard(model, cfg, (x0, np.zeros((7, 0))))
        assert np.allclose(bundle.states[:, -1, 0], x0[:, 0] + 0.1)

    def test_after_step_hook_tracks_running_max(self):
        model, z0 = catalog.build("runmax-drift-1d", {})
        cfg = _cfg(n_paths=50, record_stride=1, master_seed=3)
        bundle = engine.simulate_standard(model, cfg, z0)
        x = bundle.states[:, :, 0]
        m = bundle.states[:, :, 1]
        running = np.maximum.accumulate(x, axis=1)
        assert np.allclose(m, np.maximum(running, z0.x[0]), atol=1e-12)


class TestReconstruction:
    def test_interior_steps_recover_increments_exactly(self):
        model, z0 = catalog.build("const-wf-1d", {})
        cfg = _cfg(n_paths=300, record_stride=1, retain_increments=True, master_seed=21)
        bundle = engine.simulate_standard(model, cfg, z0)
        recon = engine.reconstruct_brownian(model, bundle)
        assert recon.interior.mean() > 0.99
        assert recon.max_deviation <= 1e-10

    def test_boundary_steps_contribute_zero(self):
        model, z0 = catalog.build("const-wf-1d", {"x0": 0.0})
        cfg = _cfg(n_paths=50, record_stride=1, retain_increments=True, master_seed=4)
        bundle = engine.simulate_standard(model, cfg, z0)
        recon = engine.reconstruct_brownian(model, bundle)
        boundary = ~recon.interior
        assert boundary.any()  # the start is on the boundary
        assert np.all(recon.increments[boundary] == 0.0)

    def test_singular_dispersion_raises(self):
        model, z0 = catalog.build("const-wf-1d", {"sigma": 0.0})
        cfg = _cfg(n_paths=3, record_stride=1, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        with pytest.raises(SingularMatrixError):
            engine.reconstruct_brownian(model, bundle)

    def test_requires_per_step_states(self):
        model, z0 = catalog.build("const-wf-1d", {})
        cfg = _cfg(n_paths=3, record_stride=10, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        with pytest.raises(ValueError):
            engine.reconstruct_brownian(model, bundle)


class TestCsvExport:
    def test_paths_and_increments_roundtrip(self, tmp_path):
        model, z0 = catalog.build("wf-with-free-coord", {})
        cfg = _cfg(n_paths=3, horizon_T=0.01, dt=5e-3, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        pfile = tmp_path / "paths.csv"
        ifile = tmp_path / "incr.csv"
        engine.write_paths_csv(bundle, pfile)
        engine.write_increments_csv(bundle, ifile)
        rows = pfile.read_text().strip().splitlines()
        assert rows[0] == "path,time,x_1,y_1"
        assert len(rows) == 1 + 3 * len(bundle.times)
        first = rows[1].split(",")
        assert float(first[2]) == bundle.states[0, 0, 0]
        irows = ifile.read_text().strip().splitlines()
        assert irows[0] == "path,time,dW_1,dW_2"
        assert float(irows[1].split(",")[2]) == bundle.increments[0, 0, 0]
