import numpy as np
import pytest

from kimura_lab import catalog, engine, girsanov
from kimura_lab.engine import SimConfig
from kimura_lab.errors import EstimationError, ModelViolationError
from kimura_lab.geometry import StatePoint
from kimura_lab.girsanov import (
    SINGULAR_TO_STANDARD,
    STANDARD_TO_SINGULAR,
    WeightedPathBundle,
    accumulate_log_weight,
    default_lambda,
    drift_change_from_model,
    ess,
    reweighted_expectation,
    theta_eval,
    theta_values,
)
from kimura_lab.model import CoefficientModel, box_samples


def _power_model(q=0.1, f0=1.0, sigma=1.0, b=1.0, K0=1.0):
    """Singular model with f constant and h(s) = s^{-q}."""
    return CoefficientModel(
        n=1, m=0,
        b=lambda x, y: np.full(1, float(b)),
        e=lambda x, y: np.zeros(0),
        sigma=lambda x, y: np.array([[float(sigma)]]),
        f=lambda x, y: np.full((1, 1), float(f0)),
        h=lambda s: (s ** (-q))[..., None, :],
        declared_b0=float(b),
        declared_K=max(float(b), float(sigma)),
        declared_K0=float(K0),
        declared_q=q,
    )


class TestTheta:
    def test_zero_mixing_gives_zero_field(self):
        model = _power_model(f0=0.0)
        th = theta_eval(model, StatePoint([0.5], []), 1e-8)
        assert np.array_equal(th, [0.0])

    def test_power_law_point_value(self):
        model = _power_model(q=0.1)
        th = theta_eval(model, StatePoint([4.0], []), 1e-8)
        assert th[0] == pytest.approx(4.0 ** (-0.1))

    def test_envelope_bound_on_random_interior_points(self):
        q = 0.12
        model = _power_model(q=q, f0=0.8, sigma=2.0)
        samples = box_samples(1, 0, count=64, radius=3.0, x_min=1e-3)
        lam = default_lambda(model, samples)
        assert lam <= model.declared_K0**2 + 1e-12
        for z in samples:
            th = theta_eval(model, z, 0.0)
            envelope = lam * (z.x ** (-q)).sum()
            assert np.linalg.norm(th) <= envelope + 1e-12

    def test_spec_bundle(self):
        model = _power_model()
        spec = drift_change_from_model(model, lambda_bound=2.0)
        x = np.array([[0.25]])
        y = np.zeros((1, 0))
        assert spec.theta(x, y)[0, 0] == pytest.approx(0.25 ** (-0.1))
        assert spec.xi(x, y)[0, 0] == pytest.approx(0.25 ** (-0.1))
        assert spec.lambda_bound == 2.0

    def test_singular_sigma_raises(self):
        model = _power_model(sigma=1.0)
        from dataclasses import replace

        broken = replace(model, sigma=lambda x, y: np.zeros((1, 1)))
        with pytest.raises(ModelViolationError):
            theta_values(broken, np.array([[0.5]]), np.zeros((1, 0)), 1e-8)


def _small_bundle(model, n_paths=64, T=0.05, dt=0.01, seed=3, kind="standard"):
    cfg = SimConfig(
        horizon_T=T, dt=dt, n_paths=n_paths, master_seed=seed,
        record_stride=1, retain_increments=True,
    )
    if kind == "standard":
        return engine.simulate_standard(model, cfg, StatePoint([0.5], []))
    return engine.simulate_singular(model, cfg, StatePoint([0.5], []))


class TestAccumulate:
    def test_zero_mixing_gives_unit_weights(self):
        model = _power_model(f0=0.0)
        wb = accumulate_log_weight(_small_bundle(model), model, STANDARD_TO_SINGULAR)
        assert np.all(wb.log_weights == 0.0)
        assert wb.excluded_fraction == 0.0

    def test_single_step_hand_computation(self):
        model = _power_model(q=0.1)
        bundle = _small_bundle(model, n_paths=1, T=0.02, dt=0.01, seed=9)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        x0 = bundle.states[0, 0, 0]
        th = theta_eval(model, StatePoint([x0], []), bundle.epsilon_floor)[0]
        dw = bundle.increments[0, 0, 0]
        want = th * dw - 0.5 * th * th * bundle.dt
        assert wb.log_weights[0, 1] == pytest.approx(want, abs=1e-14)

    def test_round_trip_cancels_exactly(self):
        model, z0 = catalog.build("log-drift", {})
        cfg = SimConfig(horizon_T=0.2, dt=1e-3, n_paths=100, master_seed=5,
                        record_stride=1, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        fwd = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        back = accumulate_log_weight(bundle, model, SINGULAR_TO_STANDARD)
        assert np.abs(fwd.log_weights + back.log_weights).max() <= 1e-10

    def test_round_trip_on_singular_bundle(self):
        model, z0 = catalog.build("log-drift", {})
        cfg = SimConfig(horizon_T=0.2, dt=1e-3, n_paths=50, master_seed=6,
                        record_stride=1, retain_increments=True)
        bundle = engine.simulate_singular(model, cfg, z0)
        back = accumulate_log_weight(bundle, model, SINGULAR_TO_STANDARD)
        fwd = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        assert np.abs(fwd.log_weights + back.log_weights).max() <= 1e-10

    def test_weight_martingale_at_every_recorded_time(self):
        model, z0 = catalog.build("log-drift", {})
        cfg = SimConfig(horizon_T=0.5, dt=2e-3, n_paths=20_000, master_seed=8,
                        record_stride=1, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        assert wb.excluded_fraction == 0.0
        for r in (50, 125, 250):
            w = np.exp(wb.log_weights[:, r])
            se = w.std(ddof=1) / np.sqrt(w.size)
            assert abs(w.mean() - 1.0) <= 3.0 * se

    def test_requires_increments_and_per_step_states(self):
        model, z0 = catalog.build("log-drift", {})
        cfg = SimConfig(horizon_T=0.1, dt=1e-2, n_paths=4, master_seed=1)
        bundle = engine.simulate_standard(model, cfg, z0)
        with pytest.raises(ValueError):
            accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        with pytest.raises(ValueError):
            accumulate_log_weight(_small_bundle(model), model, "sideways")


class TestReweighted:
    def test_unit_functional_recovers_mean_weight(self):
        model, z0 = catalog.build("log-drift", {})
        cfg = SimConfig(horizon_T=0.5, dt=2e-3, n_paths=5000, master_seed=2,
                        record_stride=1, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        res = reweighted_expectation(wb, lambda b: np.ones(b.n_paths), "raw")
        assert res.estimate == pytest.approx(res.mean_weight)
        assert abs(res.estimate - 1.0) <= 3.0 * res.stderr

    def test_zero_mixing_returns_plain_mean_exactly(self):
        model = _power_model(f0=0.0)
        bundle = _small_bundle(model, n_paths=500)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        functional = lambda b: b.states[:, -1, 0]  # noqa: E731
        raw = reweighted_expectation(wb, functional, "raw")
        sn = reweighted_expectation(wb, functional, "self-normalized")
        plain = bundle.states[:, -1, 0].mean()
        assert raw.estimate == pytest.approx(plain, abs=1e-14)
        assert sn.estimate == pytest.approx(plain, abs=1e-14)
        assert raw.ess == pytest.approx(bundle.n_paths)

    def test_two_constructions_agree(self):
        model, z0 = catalog.build("log-drift", {})
        cfg = SimConfig(horizon_T=0.5, dt=2e-3, n_paths=20_000, master_seed=14,
                        record_stride=1, retain_increments=True)
        bundle = engine.simulate_standard(model, cfg, z0)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        res = reweighted_expectation(wb, lambda b: b.states[:, -1, 0], "raw")
        cfg2 = SimConfig(horizon_T=0.5, dt=2e-3, n_paths=20_000, master_seed=77,
                         record_stride=250)
        direct = engine.simulate_singular(model, cfg2, z0).states[:, -1, 0]
        se_direct = direct.std(ddof=1) / np.sqrt(direct.size)
        gap = abs(res.estimate - direct.mean())
        assert gap <= 3.0 * np.hypot(res.stderr, se_direct)

    def test_all_excluded_raises(self):
        model, z0 = catalog.build("log-drift", {})
        bundle = _small_bundle(model, n_paths=4)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        wb.retained[:] = False
        with pytest.raises(EstimationError):
            reweighted_expectation(wb, lambda b: np.ones(b.n_paths))

    def test_exclusion_accounting(self):
        model, z0 = catalog.build("log-drift", {})
        bundle = _small_bundle(model, n_paths=10)
        wb = accumulate_log_weight(bundle, model, STANDARD_TO_SINGULAR)
        wb.retained[:3] = False
        assert wb.excluded_fraction == pytest.approx(0.3)
        assert wb.weights().shape == (7,)


class TestEss:
    def test_equal_weights(self):
        assert ess(np.ones(40)) == pytest.approx(40.0)

    def test_one_hot(self):
        w = np.zeros(10)
        w[3] = 1.0
        assert ess(w) == pytest.approx(1.0)

    def test_example_values(self):
        assert ess([1.0, 1.0, 2.0]) == pytest.approx(16.0 / 6.0)

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            ess([0.0, 0.0])
        with pytest.raises(ValueError):
            ess([1.0, -0.5])
        with pytest.raises(ValueError):
            ess([np.nan, 1.0])
