import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.stats import binom, norm, poisson

from inference_tool.exact_oracle import (
    build_generator,
    exact_likelihood,
    grid_posterior,
    grid_posterior_from_loglik,
    ks_distance,
    propagate,
    transition_probabilities,
)
from inference_tool.exceptions import TruncationError
from inference_tool.model_core import (
    build_network,
    evaluate_hazards,
    ObservationModel,
    ObservedDataset,
)
from inference_tool.priors import uniform_log_prior

from .helpers import death_dataset, death_network


def immigration_death():
    return build_network([[0], [1]], [[1], [0]], ["X"])


def conversion_decay():
    """X -> Y -> 0; every state has its own total hazard"""
    return build_network([[1, 0], [0, 1]], [[0, 1], [0, 0]], ["X", "Y"])


def path_enumeration_law(net, theta, x0, t):
    """
    P(X_t = x) summed over every jump sequence from ``x0``.

    A sequence with exit rates q_0..q_k and jump hazards h_0..h_{k-1} ends in
    its last state at ``t`` with probability
    prod(h) * sum_i exp(-q_i t) / prod_{j != i} (q_j - q_i), valid when the
    q_i are distinct.
    """
    law = {}

    def walk(x, rates, hazards):
        q = np.array(rates)
        p = np.prod(hazards) * sum(
            np.exp(-q[i] * t) / np.prod(np.delete(q, i) - q[i]) for i in range(q.size)
        )
        key = tuple(int(c) for c in x)
        law[key] = law.get(key, 0.0) + p
        h, _ = evaluate_hazards(net, x, theta)
        for j in np.flatnonzero(h > 0):
            y = x + net.stoichiometry[:, j]
            total = evaluate_hazards(net, y, theta)[1]
            walk(y, rates + [total], hazards + [h[j]])

    x0 = np.asarray(x0, dtype=np.int64)
    walk(x0, [evaluate_hazards(net, x0, theta)[1]], [])
    return law


class GeneratorTests(SimpleTestCase):
    def test_death_chain_is_closed(self):
        space, gen = build_generator(death_network(), [0.7], [5])
        self.assertEqual(space.size, 6)
        self.assertFalse(gen.leaks)
        np.testing.assert_allclose(gen.toarray().sum(axis=1), 0.0, atol=1e-12)

    def test_transition_rows_sum_to_one(self):
        _, gen = build_generator(death_network(), [0.7], [5])
        P = transition_probabilities(gen, 1.3)
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)

    def test_death_is_binomial(self):
        space, gen = build_generator(death_network(), [0.7], [5])
        start = np.zeros(space.size)
        start[space.ordinal([5])] = 1.0
        dist = propagate(start, gen, 1.0)
        expected = binom.pmf(space.states[:, 0], 5, np.exp(-0.7))
        np.testing.assert_allclose(dist, expected, atol=1e-9)

    def test_immigration_death_approaches_poisson(self):
        space, gen = build_generator(immigration_death(), [3.0, 1.0], [40], x0=[0])
        start = np.zeros(space.size)
        start[space.ordinal([0])] = 1.0
        dist = propagate(start, gen, 20.0)
        np.testing.assert_allclose(dist, poisson.pmf(space.states[:, 0], 3.0), atol=1e-6)

    def test_chapman_kolmogorov(self):
        _, gen = build_generator(conversion_decay(), [1.0, 0.3], [3, 3], x0=[3, 0])
        np.testing.assert_allclose(
            transition_probabilities(gen, 1.1),
            transition_probabilities(gen, 0.4) @ transition_probabilities(gen, 0.7),
            atol=1e-9,
        )

    def test_matches_enumerated_paths(self):
        theta = np.array([1.0, 0.3])
        space, gen = build_generator(conversion_decay(), theta, [2, 2], x0=[2, 0])
        start = np.zeros(space.size)
        start[space.ordinal([2, 0])] = 1.0
        dist = propagate(start, gen, 1.5)
        expected = path_enumeration_law(conversion_decay(), theta, [2, 0], 1.5)
        self.assertEqual(set(expected), {tuple(s) for s in space.states.tolist()})
        for state, p in expected.items():
            self.assertAlmostEqual(dist[space.ordinal(state)], p, places=9)

    @override_settings(SKM_ORACLE_STATE_CAP=10)
    def test_state_cap(self):
        with self.assertRaises(TruncationError):
            build_generator(death_network(), [0.7], [50])

    def test_bounds_must_enclose_start(self):
        with self.assertRaises(TruncationError):
            build_generator(death_network(), [0.7], [3], x0=[5])


class ExactLikelihoodTests(SimpleTestCase):
    def test_matches_closed_form(self):
        data = death_dataset(values=(5.3, 2.1), times=(0.0, 1.0))
        k = np.arange(6)
        expected = norm.logpdf(5.3, 5, 1.0) + np.log(
            np.sum(binom.pmf(k, 5, np.exp(-0.7)) * norm.pdf(2.1, k, 1.0))
        )
        self.assertAlmostEqual(exact_likelihood(death_network(), [0.7], data, [5]), expected, places=7)

    def test_requires_known_sigma(self):
        data = death_dataset().with_model(ObservationModel(None, (True,)))
        with self.assertRaises(ValueError):
            exact_likelihood(death_network(), [0.7], data, [5])
        value = exact_likelihood(death_network(), [0.7], data, [5], sigma=1.0)
        self.assertTrue(np.isfinite(value))

    def test_lost_mass_is_reported(self):
        data = ObservedDataset([0.0, 2.0], [[0.0], [9.0]], ObservationModel(1.0, (True,)))
        with self.assertRaises(TruncationError):
            exact_likelihood(immigration_death(), [5.0, 0.1], data, [3], x0=[0])


class GridPosteriorTests(SimpleTestCase):
    def setUp(self):
        self.grid = np.linspace(-3.0, 1.0, 81)
        self.posterior = grid_posterior(
            death_network(),
            death_dataset(),
            uniform_log_prior(-3.0, 1.0, 1).components[0].logpdf,
            self.grid,
            [5],
        )

    def test_weights_normalised(self):
        self.assertAlmostEqual(self.posterior.weights.sum(), 1.0)
        self.assertTrue(self.grid[0] < self.posterior.mean < self.grid[-1])
        self.assertGreater(self.posterior.sd, 0)

    def test_shift_invariant(self):
        loglik = self.posterior.log_likelihood
        prior = np.zeros_like(loglik)
        a = grid_posterior_from_loglik(self.grid, loglik, prior)
        b = grid_posterior_from_loglik(self.grid, loglik + 123.0, prior)
        np.testing.assert_allclose(a.weights, b.weights)

    def test_ks_distance(self):
        rng = np.random.default_rng(12)
        draws = rng.choice(self.grid, size=20000, p=self.posterior.weights)
        self.assertLess(ks_distance(draws, None, self.posterior), 0.15)
        far = np.full(100, self.grid[-1])
        self.assertGreater(ks_distance(far, None, self.posterior), 0.9)

    def test_unsorted_grid(self):
        with self.assertRaises(ValueError):
            grid_posterior_from_loglik([0.0, -1.0], [0.0, 0.0], [0.0, 0.0])

    def test_refined_grid_agrees(self):
        log_prior = uniform_log_prior(-3.0, 1.0, 1).components[0].logpdf
        coarse, fine = (
            grid_posterior(death_network(), death_dataset(), log_prior, np.linspace(-3.0, 1.0, n), [5])
            for n in (200, 400)
        )
        self.assertAlmostEqual(coarse.mean, fine.mean, delta=2e-3)
        self.assertAlmostEqual(coarse.sd, fine.sd, delta=2e-3)
