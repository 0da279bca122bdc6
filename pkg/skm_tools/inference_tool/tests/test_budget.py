import numpy as np
from django.test import SimpleTestCase

from inference_tool.abc_smc import AbcConfig, abc_rejection, pilot_tolerance, run_abc_smc
from inference_tool.budget import BudgetLedger, chunk_bounds, stream_seeds, substream
from inference_tool.exceptions import BudgetExhausted
from inference_tool.model_core import ParameterLayout
from inference_tool.pmcmc import ChainConfig, ProposalSpec, run_chain
from inference_tool.priors import uniform_log_prior
from inference_tool.smc_filter import bootstrap_filter, tune_particle_count

from .helpers import ChunkedExecutor, CountingStatePrior, death_dataset, death_network


class LedgerTests(SimpleTestCase):
    def test_hard_stop(self):
        ledger = BudgetLedger(10)
        ledger.charge(7)
        with self.assertRaises(BudgetExhausted) as ctx:
            ledger.charge(4)
        self.assertEqual(ledger.consumed, 7)
        self.assertEqual(ctx.exception.remaining, 3)
        self.assertTrue(ledger.can_afford(3))

    def test_phases(self):
        ledger = BudgetLedger(100)
        with ledger.phase("pilot"):
            ledger.charge(10)
        ledger.charge(5)
        self.assertEqual(ledger.to_dict()["phases"], {"tuning": 0, "pilot": 10, "main": 5})
        with self.assertRaises(ValueError):
            with ledger.phase("warmup"):
                pass

    def test_capacity_must_be_positive(self):
        with self.assertRaises(ValueError):
            BudgetLedger(0)


class StreamTests(SimpleTestCase):
    def test_substreams_are_keyed(self):
        self.assertEqual(substream(1, 2).integers(10 ** 9), substream(1, 2).integers(10 ** 9))
        self.assertNotEqual(substream(1, 2).integers(10 ** 9), substream(1, 3).integers(10 ** 9))

    def test_row_seeds_do_not_depend_on_count(self):
        np.testing.assert_array_equal(stream_seeds(5, 7)[:3], stream_seeds(3, 7))

    def test_chunks_cover_range(self):
        bounds = chunk_bounds(10, ChunkedExecutor(2))
        self.assertEqual(bounds[0][0], 0)
        self.assertEqual(bounds[-1][1], 10)
        self.assertEqual(sum(b - a for a, b in bounds), 10)


class RealisationCountTests(SimpleTestCase):
    """Every unit on the ledger matches one path handed an initial state"""

    def setUp(self):
        self.prior = uniform_log_prior(-3.0, 1.0, 1)
        self.states = CountingStatePrior()

    def assertLedgerMatches(self, ledger):
        self.assertEqual(self.states.drawn, ledger.consumed)
        self.assertLessEqual(ledger.consumed, ledger.capacity)

    def test_filter(self):
        ledger = BudgetLedger(100)
        for _ in range(3):
            bootstrap_filter(death_network(), [0.7], death_dataset(), 25, self.states, substream(1), ledger)
        with self.assertRaises(BudgetExhausted):
            bootstrap_filter(death_network(), [0.7], death_dataset(), 30, self.states, substream(1), ledger)
        self.assertLedgerMatches(ledger)

    def test_particle_tuning(self):
        ledger = BudgetLedger(10 ** 5)
        tune_particle_count(
            death_network(), [0.7], death_dataset(), self.states, substream(2), ledger, reps=5, start=4
        )
        self.assertLedgerMatches(ledger)

    def test_chain(self):
        ledger = BudgetLedger(503)
        config = ChainConfig(
            death_network(),
            death_dataset(),
            uniform_log_prior(-20.0, 20.0, 1),
            ParameterLayout(1),
            self.states,
            np.array([np.log(0.7)]),
            10,
            ProposalSpec([[0.1 ** 2]]),
        )
        trace = run_chain(config, substream(3), ledger)
        self.assertEqual(len(trace), 50)
        self.assertLedgerMatches(ledger)

    def test_rejection(self):
        ledger = BudgetLedger(250)
        abc_rejection(
            death_network(), self.prior, ParameterLayout(1), death_dataset(), self.states,
            1e-3, 100, substream(4), ledger, batch_size=40,
        )
        self.assertEqual(ledger.remaining, 0)
        self.assertLedgerMatches(ledger)

    def test_pilot(self):
        ledger = BudgetLedger(1000)
        pilot_tolerance(
            death_network(), self.prior, ParameterLayout(1), death_dataset(), self.states,
            200, 0.1, substream(5), ledger,
        )
        self.assertLedgerMatches(ledger)

    def test_abc_smc(self):
        ledger = BudgetLedger(1500)
        config = AbcConfig(
            death_network(), death_dataset(), self.prior, ParameterLayout(1), self.states,
            population_size=50, pilot_size=200, pilot_quantile=0.5, batch_size=40,
        )
        run_abc_smc(config, substream(6), ledger, ChunkedExecutor())
        self.assertLedgerMatches(ledger)
