import numpy as np
from django.test import SimpleTestCase, tag
from scipy.stats import norm

from inference_tool.budget import BudgetLedger, substream
from inference_tool.exact_oracle import exact_likelihood
from inference_tool.exceptions import BudgetExhausted, ObservationError, ParticleTuningError
from inference_tool.model_core import ObservationModel
from inference_tool.smc_filter import (
    bootstrap_filter,
    emission_logdensity,
    loglik_variance,
    multinomial_resample,
    ParticleSet,
    systematic_resample,
    tune_particle_count,
)

from .helpers import ChunkedExecutor, death_dataset, death_network, death_prior, oracle_problem


class EmissionTests(SimpleTestCase):
    def test_missing_entries_contribute_nothing(self):
        model = ObservationModel(2.0, (True, True))
        value = emission_logdensity([1.0, np.nan], [[1.5, 40.0]], model)
        self.assertAlmostEqual(float(value[0]), norm.logpdf(1.0, 1.5, 2.0))

    def test_inferred_sigma_overrides(self):
        model = ObservationModel(None, (True,))
        self.assertAlmostEqual(
            float(emission_logdensity([3.0], [2.0], model, sigma=0.5)), norm.logpdf(3.0, 2.0, 0.5)
        )
        with self.assertRaises(ObservationError):
            emission_logdensity([3.0], [2.0], model)


class ResamplingTests(SimpleTestCase):
    def test_degenerate_weights(self):
        for resample in (multinomial_resample, systematic_resample):
            idx = resample([0.0, 1.0, 0.0], 50, substream(1))
            self.assertTrue((idx == 1).all())

    def test_all_zero_weights(self):
        with self.assertRaises(ValueError):
            multinomial_resample([0.0, 0.0], 3, substream(2))

    def test_particle_set_normalised(self):
        particles = ParticleSet.from_log_weights(np.zeros((3, 1)), [0.0, np.log(2.0), -np.inf])
        np.testing.assert_allclose(particles.weights, [1 / 3, 2 / 3, 0.0])


class BootstrapFilterTests(SimpleTestCase):
    def test_charges_particle_count_once(self):
        ledger = BudgetLedger(100)
        bootstrap_filter(death_network(), [0.7], death_dataset(), 10, death_prior(), substream(3), ledger)
        self.assertEqual(ledger.consumed, 10)

    def test_unaffordable_call_charges_nothing(self):
        ledger = BudgetLedger(5)
        with self.assertRaises(BudgetExhausted):
            bootstrap_filter(death_network(), [0.7], death_dataset(), 10, death_prior(), substream(4), ledger)
        self.assertEqual(ledger.consumed, 0)

    def test_single_observation_is_exact(self):
        data = death_dataset(values=(5.3,), times=(0.0,))
        estimate = bootstrap_filter(
            death_network(), [0.7], data, 3, death_prior(), substream(5), BudgetLedger(3)
        )
        self.assertAlmostEqual(estimate.log_value, norm.logpdf(5.3, 5, 1.0))

    def test_deterministic_and_chunk_independent(self):
        args = (death_network(), [0.7], death_dataset(), 64, death_prior())
        a = bootstrap_filter(*args, substream(6), BudgetLedger(64))
        b = bootstrap_filter(*args, substream(6), BudgetLedger(64), executor=ChunkedExecutor(4))
        self.assertEqual(a.log_value, b.log_value)

    def test_unbiased_on_likelihood_scale(self):
        net, data = death_network(), death_dataset()
        exact = exact_likelihood(net, [0.7], data, [5])
        rng = substream(7)
        ledger = BudgetLedger(200 * 50)
        ratios = [
            np.exp(bootstrap_filter(net, [0.7], data, 50, death_prior(), rng, ledger).log_value - exact)
            for _ in range(200)
        ]
        self.assertAlmostEqual(np.mean(ratios), 1.0, delta=0.1)
        self.assertEqual(ledger.consumed, 200 * 50)


class TuneParticleCountTests(SimpleTestCase):
    def test_low_variance_searches_downward(self):
        ledger = BudgetLedger(10 ** 4)
        n = tune_particle_count(
            death_network(), [0.7], death_dataset(), death_prior(), substream(9), ledger,
            reps=5, start=8,
        )
        self.assertTrue(1 <= n < 8)
        self.assertGreaterEqual(ledger.consumed, 5 * (8 + 4))

    def test_zero_variance_returns_start(self):
        data = death_dataset(values=(5.3,), times=(0.0,))
        ledger = BudgetLedger(10 ** 4)
        with self.assertLogs("inference_tool.smc_filter", level="WARNING"):
            n = tune_particle_count(
                death_network(), [0.7], data, death_prior(), substream(12), ledger,
                reps=5, start=8,
            )
        self.assertEqual(n, 8)
        self.assertEqual(ledger.consumed, 40)

    def test_open_band_keeps_start(self):
        ledger = BudgetLedger(10 ** 4)
        n = tune_particle_count(
            death_network(), [0.7], death_dataset(), death_prior(), substream(13), ledger,
            band=(0.0, np.inf), reps=5, start=8,
        )
        self.assertEqual(n, 8)
        self.assertEqual(ledger.consumed, 40)

    def test_budget_runs_out(self):
        ledger = BudgetLedger(30)
        with self.assertRaises(ParticleTuningError) as ctx:
            tune_particle_count(
                death_network(), [0.7], death_dataset(), death_prior(), substream(10), ledger,
                reps=5, start=8,
            )
        self.assertEqual(ctx.exception.consumed, 24)

    def test_invalid_band(self):
        with self.assertRaises(ValueError):
            tune_particle_count(
                death_network(), [0.7], death_dataset(), death_prior(), substream(11),
                BudgetLedger(100), band=(1.8, 1.5),
            )


class LoglikVarianceTests(SimpleTestCase):
    def test_uninformative_observations_give_zero_variance(self):
        data = death_dataset(values=(5.3, np.nan, np.nan))
        ledger = BudgetLedger(10 ** 4)
        var = loglik_variance(death_network(), [0.7], data, 20, 10, death_prior(), substream(14), ledger)
        self.assertEqual(var, 0.0)
        self.assertEqual(ledger.consumed, 200)

    def test_more_particles_lower_variance(self):
        rng = substream(15)
        ledger = BudgetLedger(10 ** 6)

        def median_variance(n):
            return np.median(
                [
                    loglik_variance(death_network(), [0.7], death_dataset(), n, 10, death_prior(), rng, ledger)
                    for _ in range(7)
                ]
            )

        self.assertLess(median_variance(20), median_variance(5))

    def test_needs_two_repetitions(self):
        with self.assertRaises(ValueError):
            loglik_variance(
                death_network(), [0.7], death_dataset(), 5, 1, death_prior(), substream(16), BudgetLedger(10)
            )


@tag("slow")
class OracleProblemTests(SimpleTestCase):
    def test_unbiased_within_three_standard_errors(self):
        model, data = oracle_problem()
        exact = exact_likelihood(model.network, model.theta, data, model.x0)
        rng = substream(17)
        ledger = BudgetLedger(500 * 100)
        ratios = np.array(
            [
                np.exp(
                    bootstrap_filter(
                        model.network, model.theta, data, 100, model.state_prior, rng, ledger
                    ).log_value
                    - exact
                )
                for _ in range(500)
            ]
        )
        se = ratios.std(ddof=1) / np.sqrt(ratios.size)
        self.assertLess(abs(ratios.mean() - 1.0), 3 * se)
        self.assertEqual(ledger.consumed, 500 * 100)

    def test_tuned_count_lands_in_acceptable_band(self):
        model, data = oracle_problem()
        inside = 0
        for trial in range(20):
            rng = substream(18, trial)
            ledger = BudgetLedger(10 ** 6)
            n = tune_particle_count(model.network, model.theta, data, model.state_prior, rng, ledger)
            var = loglik_variance(model.network, model.theta, data, n, 50, model.state_prior, rng, ledger)
            inside += 0.25 < var < 2.25
        self.assertGreaterEqual(inside, 18)
