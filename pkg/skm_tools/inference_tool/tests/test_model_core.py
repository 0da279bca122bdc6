import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy.stats import binom, binomtest, chisquare, expon, kstest

from inference_tool.budget import BudgetLedger, stream_seeds, substream
from inference_tool.exceptions import (
    BudgetExhausted,
    HazardOverflowError,
    NetworkError,
    ObservationError,
)
from inference_tool.harness import (
    builtin_immigration_death,
    builtin_lotka_volterra,
    builtin_pure_death,
    builtin_schlogl,
    simulate_ensemble,
)
from inference_tool.model_core import (
    ObservationModel,
    ObservedDataset,
    ParameterLayout,
    add_noise,
    build_network,
    evaluate_hazards,
    network_from_dict,
    simulate_direct,
    simulate_paths,
    state_at,
)

from .helpers import ChunkedExecutor, death_network


class NetworkTests(SimpleTestCase):
    def test_lotka_volterra_stoichiometry(self):
        net = builtin_lotka_volterra().network
        np.testing.assert_array_equal(net.stoichiometry, [[1, -1, 0], [0, 1, -1]])
        self.assertEqual(net.n_species, 2)
        self.assertEqual(net.n_reactions, 3)

    def test_mismatched_matrices(self):
        with self.assertRaises(NetworkError):
            build_network([[1, 0]], [[1]], ["A", "B"])

    def test_fractional_coefficient(self):
        with self.assertRaises(NetworkError):
            build_network([[0.5]], [[1]], ["A"])

    def test_unknown_species_in_definition(self):
        with self.assertRaises(NetworkError):
            network_from_dict(
                {"species": ["A"], "reactions": [{"reactants": {"B": 1}, "products": {}}]}
            )

    def test_definition_matches_matrices(self):
        net = network_from_dict(
            {
                "species": ["A", "B"],
                "reactions": [
                    {"reactants": {"A": 2}, "products": {"B": 1}, "name": "dimerise"},
                ],
            }
        )
        np.testing.assert_array_equal(net.stoichiometry, [[-2], [1]])
        self.assertEqual(net.reaction_names, ("dimerise",))


class HazardTests(SimpleTestCase):
    def test_lotka_volterra_hazards(self):
        net = builtin_lotka_volterra().network
        h, h0 = evaluate_hazards(net, [50, 100], [1.0, 0.005, 0.6])
        np.testing.assert_allclose(h, [50.0, 25.0, 60.0])
        self.assertAlmostEqual(h0, 135.0)

    def test_second_order_uses_combinations(self):
        net = build_network([[2]], [[0]], ["A"])
        h, _ = evaluate_hazards(net, [5], [1.0])
        self.assertAlmostEqual(h[0], 10.0)

    def test_schlogl_first_reaction(self):
        model = builtin_schlogl()
        x = [250, 100000, 200000]
        h, _ = evaluate_hazards(model.network, x, model.theta)
        self.assertAlmostEqual(h[0] / (model.theta[0] * 250 * 249 / 2 * 100000), 1.0)

    def test_zero_hazard_when_reactant_missing(self):
        h, h0 = evaluate_hazards(death_network(), [0], [2.0])
        self.assertEqual(h0, 0.0)

    def test_overflow(self):
        net = build_network([[3]], [[4]], ["A"])
        with self.assertRaises(HazardOverflowError):
            evaluate_hazards(net, [10 ** 9], [1e300])


class SimulateDirectTests(SimpleTestCase):
    def test_charges_one_unit(self):
        ledger = BudgetLedger(10)
        simulate_direct(death_network(), [0.5], [20], 2.0, substream(1), ledger)
        self.assertEqual(ledger.consumed, 1)

    def test_events_replay_to_final_state(self):
        traj = simulate_direct(death_network(), [0.5], [20], 3.0, substream(2), BudgetLedger(1))
        self.assertTrue(np.all(np.diff(traj.event_times) > 0))
        self.assertTrue(np.all(traj.event_times <= 3.0))
        np.testing.assert_array_equal(traj.states()[-1], traj.final_state)
        self.assertLessEqual(traj.n_events, 20)

    def test_same_stream_same_path(self):
        net = builtin_lotka_volterra().network
        a = simulate_direct(net, [1.0, 0.005, 0.6], [50, 100], 5.0, substream(3), BudgetLedger(1))
        b = simulate_direct(net, [1.0, 0.005, 0.6], [50, 100], 5.0, substream(3), BudgetLedger(1))
        np.testing.assert_array_equal(a.event_times, b.event_times)
        np.testing.assert_array_equal(a.event_reactions, b.event_reactions)

    def test_absorbing_state(self):
        traj = simulate_direct(death_network(), [0.5], [0], 5.0, substream(4), BudgetLedger(1))
        self.assertEqual(traj.n_events, 0)
        np.testing.assert_array_equal(traj.final_state, [0])

    def test_no_charge_when_budget_exhausted(self):
        ledger = BudgetLedger(1)
        simulate_direct(death_network(), [0.5], [5], 1.0, substream(5), ledger)
        with self.assertRaises(BudgetExhausted):
            simulate_direct(death_network(), [0.5], [5], 1.0, substream(5), ledger)
        self.assertEqual(ledger.consumed, 1)

    def test_right_continuous_state(self):
        traj = simulate_direct(death_network(), [1.0], [10], 2.0, substream(6), BudgetLedger(1))
        first = traj.event_times[0]
        np.testing.assert_array_equal(state_at(traj, first), [9])
        np.testing.assert_array_equal(state_at(traj, 0.0), [10])

    def test_streaming_matches_recorded(self):
        net = builtin_lotka_volterra().network
        times = np.arange(0.0, 5.5, 0.5)
        streamed = simulate_direct(
            net, [1.0, 0.005, 0.6], [50, 100], 5.0, substream(7), BudgetLedger(1),
            record_events=False, obs_times=times,
        )
        recorded = simulate_direct(
            net, [1.0, 0.005, 0.6], [50, 100], 5.0, substream(7), BudgetLedger(1), obs_times=times,
        )
        expected = np.array([state_at(recorded, t) for t in times])
        np.testing.assert_array_equal(streamed.obs_states, expected)

    def test_event_cap(self):
        net = build_network([[0]], [[1]], ["X"])
        with self.assertRaises(HazardOverflowError):
            simulate_direct(net, [1000.0], [0], 10.0, substream(8), BudgetLedger(1), max_events=50)


class SimulatePathsTests(SimpleTestCase):
    def test_independent_of_chunking(self):
        net = builtin_lotka_volterra().network
        x0s = np.tile([50, 100], (13, 1))
        seeds = stream_seeds(13, 9)
        times = np.arange(0.0, 6.0)
        serial = simulate_paths(net, [1.0, 0.005, 0.6], x0s, times, seeds)
        chunked = simulate_paths(net, [1.0, 0.005, 0.6], x0s, times, seeds, ChunkedExecutor(3))
        np.testing.assert_array_equal(serial, chunked)
        self.assertEqual(serial.shape, (13, 6, 2))

    @override_settings(SKM_MAX_EVENTS=50)
    def test_failed_rows_marked_when_not_strict(self):
        net = build_network([[0]], [[1]], ["X"])
        thetas = np.array([[1000.0], [0.1]])
        out = simulate_paths(net, thetas, [[0], [0]], [0.0, 1.0], stream_seeds(2, 10), strict=False)
        self.assertTrue((out[0] == -1).all())
        self.assertTrue((out[1] >= 0).all())
        with self.assertRaises(HazardOverflowError):
            simulate_paths(net, thetas, [[0], [0]], [0.0, 1.0], stream_seeds(2, 10))


class ObservationTests(SimpleTestCase):
    def test_noise_only_on_observed_species(self):
        values = add_noise(np.full((4, 2), 10.0), [True, False], 1.0, substream(11))
        self.assertTrue(np.isnan(values[:, 1]).all())
        self.assertFalse(np.isnan(values[:, 0]).any())

    def test_dataset_validation(self):
        model = ObservationModel(1.0, (True,))
        with self.assertRaises(ObservationError):
            ObservedDataset([0.0, 0.0], [[1.0], [2.0]], model)
        with self.assertRaises(ObservationError):
            ObservedDataset([0.0, 1.0], [[1.0]], model)
        with self.assertRaises(ObservationError):
            ObservationModel(1.0, (False, False))

    def test_unobserved_columns_blanked(self):
        data = ObservedDataset([0.0, 1.0], [[1.0, 2.0], [3.0, 4.0]], ObservationModel(1.0, (True, False)))
        self.assertTrue(np.isnan(data.values[:, 1]).all())

    def test_parameter_layout(self):
        layout = ParameterLayout(3, infer_sigma=True)
        theta, sigma = layout.split(np.array([0.0, np.log(2.0), 0.0, np.log(5.0)]))
        np.testing.assert_allclose(theta, [1.0, 2.0, 1.0])
        self.assertAlmostEqual(float(sigma), 5.0)
        self.assertEqual(layout.names[-1], "log_sigma")


class DirectMethodLawTests(SimpleTestCase):
    def test_pure_death_count_is_binomial(self):
        model = builtin_pure_death()
        ledger = BudgetLedger(10 ** 4)
        counts = simulate_ensemble(model, [0.0, 1.0], 10 ** 4, substream(12), ledger)[:, 1, 0]
        self.assertEqual(ledger.consumed, 10 ** 4)
        law = binom(20, np.exp(-0.5))
        edges = np.arange(8, 18)
        observed = np.concatenate(
            [[(counts <= 7).sum()], [(counts == k).sum() for k in edges], [(counts >= 18).sum()]]
        )
        expected = 10 ** 4 * np.concatenate([[law.cdf(7)], law.pmf(edges), [law.sf(17)]])
        self.assertGreater(chisquare(observed, expected).pvalue, 0.01)

    def test_first_waiting_time_is_exponential(self):
        rng = substream(13)
        ledger = BudgetLedger(2000)
        waits = np.array(
            [simulate_direct(death_network(), [0.5], [20], 5.0, rng, ledger).event_times[0] for _ in range(2000)]
        )
        self.assertGreater(kstest(waits, expon(scale=1 / 10.0).cdf).pvalue, 0.01)

    def test_first_reaction_chosen_by_hazard(self):
        net = builtin_immigration_death().network
        rng = substream(14)
        ledger = BudgetLedger(3000)
        first = np.array(
            [simulate_direct(net, [2.0, 0.25], [4], 5.0, rng, ledger).event_reactions[0] for _ in range(3000)]
        )
        immigrations = int((first == 0).sum())
        self.assertGreater(binomtest(immigrations, 3000, 2.0 / 3.0).pvalue, 0.01)
