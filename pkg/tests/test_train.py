"""Training loop behavior and the energy-distance fit metric."""

import numpy as np
import pytest

import diffbridge as db
from diffbridge.diffusion import SamplerConfig, ddim_sample
from diffbridge.train import (
    TrainConfig,
    TrainingDivergedError,
    energy_distance,
    evaluate_fit,
    train_denoiser,
)


class TestEnergyDistance:
    def test_identical_sets_give_zero(self):
        x = np.random.default_rng(0).standard_normal((50, 2))
        assert energy_distance(x, x.copy()) == pytest.approx(0.0, abs=1e-12)

    def test_separated_sets_give_positive(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((100, 2))
        y = rng.standard_normal((100, 2)) + 5.0
        assert energy_distance(x, y) > 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal((40, 3))
        y = rng.standard_normal((60, 3))
        assert energy_distance(x, y) == pytest.approx(energy_distance(y, x), rel=1e-12)


class TestTrainDenoiser:
    def setup_method(self):
        self.sched = db.linear_schedule(200)
        self.data = np.zeros((64, 2))

    def test_zero_learning_rate_leaves_weights_at_init(self):
        # More epochs of zero-rate training change nothing, and the weights
        # equal a freshly initialized model built from the same seed.
        cfgs = [
            TrainConfig(
                schedule=self.sched, epochs=e, batch_size=32, learning_rate=0.0,
                seed=3, hidden=(8,),
            )
            for e in (1, 5)
        ]
        m1, _ = train_denoiser(self.data, cfgs[0])
        m5, _ = train_denoiser(self.data, cfgs[1])
        for a, b in zip(m1.parameters(), m5.parameters()):
            np.testing.assert_array_equal(a, b)
        init_seed = int(np.random.SeedSequence(3).generate_state(2)[0])
        fresh = db.init_mlp((2,), (8,), steps_total=200, seed=init_seed)
        for a, b in zip(m1.parameters(), fresh.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_single_point_dataset_collapses_samples_to_origin(self):
        cfg = TrainConfig(
            schedule=self.sched, epochs=40, batch_size=32, learning_rate=3e-3,
            seed=3, hidden=(32, 32),
        )
        model, _ = train_denoiser(self.data, cfg)
        untrained = db.init_mlp((2,), (32, 32), steps_total=200, seed=77)
        scfg = SamplerConfig(schedule=self.sched)
        latents = np.random.default_rng(8).standard_normal((60, 2))
        norm_trained = np.mean(
            [np.linalg.norm(ddim_sample(z, model, scfg)) for z in latents]
        )
        norm_untrained = np.mean(
            [np.linalg.norm(ddim_sample(z, untrained, scfg)) for z in latents]
        )
        assert norm_untrained >= 5.0 * norm_trained

    def test_loss_decreases_on_gmm_data(self):
        mix = db.default_gmm_pair().source
        data = db.gmm_sample(mix, 1200, seed=0)
        cfg = TrainConfig(
            schedule=db.linear_schedule(1000), epochs=10, batch_size=128,
            learning_rate=3e-3, seed=1, hidden=(32, 32),
        )
        _, losses = train_denoiser(data, cfg)
        assert losses[-1] < 0.7 * losses[0]

    def test_training_deterministic_under_seed(self):
        cfg = TrainConfig(
            schedule=self.sched, epochs=3, batch_size=16, learning_rate=1e-3,
            seed=11, hidden=(12,),
        )
        data = np.random.default_rng(4).standard_normal((40, 2))
        m1, h1 = train_denoiser(data, cfg)
        m2, h2 = train_denoiser(data, cfg)
        assert h1 == h2
        for a, b in zip(m1.parameters(), m2.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_sgd_option_trains(self):
        mix = db.default_gmm_pair().source
        data = db.gmm_sample(mix, 1200, seed=0)
        cfg = TrainConfig(
            schedule=db.linear_schedule(1000), epochs=10, batch_size=128,
            learning_rate=2e-2, optimizer="sgd", seed=2, hidden=(32,),
        )
        _, losses = train_denoiser(data, cfg)
        assert losses[-1] < 0.8 * losses[0]

    def test_attention_model_trains(self):
        from diffbridge.attention import Priority
        from diffbridge.train import AttentionLayout

        mix = db.default_gmm_pair().source
        data = np.hstack(
            [db.gmm_sample(mix, 400, seed=3), db.gmm_sample(mix, 400, seed=4)]
        )
        cfg = TrainConfig(
            schedule=db.linear_schedule(1000), epochs=8, batch_size=64,
            learning_rate=3e-3, seed=7, hidden=(24,),
            attention=AttentionLayout(token_count=2, heads=2, windows=1,
                                      priority=Priority.GLOBAL_FIRST),
        )
        model, losses = train_denoiser(data, cfg)
        assert model.attention is not None
        assert losses[-1] < 0.8 * losses[0]

    def test_divergence_aborts_with_epoch(self):
        cfg = TrainConfig(
            schedule=self.sched, epochs=3, batch_size=32, learning_rate=1e6,
            optimizer="sgd", seed=1, hidden=(32,),
        )
        with pytest.raises(TrainingDivergedError, match="epoch"):
            train_denoiser(self.data, cfg)

    def test_rejects_empty_data_and_bad_config(self):
        with pytest.raises(ValueError):
            train_denoiser(np.zeros((0, 2)), TrainConfig(schedule=self.sched))
        with pytest.raises(ValueError):
            TrainConfig(schedule=self.sched, optimizer="newton")
        with pytest.raises(ValueError):
            TrainConfig(schedule=self.sched, epochs=0)


class TestEvaluateFit:
    def test_trained_beats_untrained_and_respects_analytic_floor(self):
        sched = db.linear_schedule(200)
        mix = db.default_gmm_pair().source
        data = db.gmm_sample(mix, 600, seed=0)
        cfg = TrainConfig(
            schedule=sched, epochs=12, batch_size=128, learning_rate=3e-3,
            seed=1, hidden=(32, 32),
        )
        model, _ = train_denoiser(data, cfg)
        untrained = db.init_mlp((2,), (32, 32), steps_total=200, seed=42)
        analytic = db.AnalyticGmmEpsilon(mix, sched)
        n = 100
        fit_trained = evaluate_fit(model, mix, n, sched, seed=5)
        fit_untrained = evaluate_fit(untrained, mix, n, sched, seed=5)
        fit_analytic = evaluate_fit(analytic, mix, n, sched, seed=5)
        assert fit_trained < fit_untrained
        # The exact predictor is the floor, up to estimator noise.
        assert fit_trained >= fit_analytic - 0.05
