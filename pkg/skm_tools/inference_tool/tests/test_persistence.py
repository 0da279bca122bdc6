import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from inference_tool import persistence
from inference_tool.abc_smc import Population
from inference_tool.budget import BudgetLedger
from inference_tool.model_core import ObservationModel, ObservedDataset
from inference_tool.pmcmc import ChainTrace


class DatasetFileTests(SimpleTestCase):
    def test_partial_dataset_keeps_mask_and_sigma(self):
        dataset = ObservedDataset(
            [0.0, 2.0], [[51.3, 0.0], [48.25, 0.0]], ObservationModel(9.97, (True, False)), ("prey", "predator")
        )
        with tempfile.TemporaryDirectory() as tmp:
            path = persistence.save_dataset(dataset, Path(tmp) / "D2_p.csv", provenance={"seed": 3})
            loaded = persistence.load_dataset(path)
            meta = persistence.read_json(Path(tmp) / "D2_p.json")
        self.assertEqual(loaded.observation_model.observed_mask, (True, False))
        self.assertEqual(loaded.observation_model.noise_sd, 9.97)
        np.testing.assert_array_equal(loaded.values[:, 0], dataset.values[:, 0])
        self.assertEqual(meta["provenance"], {"seed": 3})

    def test_unknown_sigma(self):
        dataset = ObservedDataset([0.0, 1.0], [[1.0], [2.0]], ObservationModel(None, (True,)))
        with tempfile.TemporaryDirectory() as tmp:
            path = persistence.save_dataset(dataset, Path(tmp) / "D_u.csv")
            self.assertEqual(persistence.read_json(Path(tmp) / "D_u.json")["noise_sd"], "unknown")
            self.assertFalse(persistence.load_dataset(path).observation_model.sigma_known)

    def test_without_sidecar(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "plain.csv"
            path.write_text("time,A,B\n0,1.5,\n1,2.5,\n")
            loaded = persistence.load_dataset(path)
        self.assertEqual(loaded.observation_model.observed_mask, (True, False))
        self.assertIsNone(loaded.observation_model.noise_sd)


class RunFileTests(SimpleTestCase):
    def test_trace_values_survive_exactly(self):
        rng = np.random.default_rng(1)
        trace = ChainTrace(
            samples=rng.normal(size=(25, 2)),
            log_estimates=rng.normal(size=25) * 100,
            accepted=rng.random(25) < 0.3,
            budget_marks=np.arange(1, 26) * 40,
            names=["log_theta_1", "log_theta_2"],
        )
        with tempfile.TemporaryDirectory() as tmp:
            persistence.save_trace(trace, tmp)
            loaded = persistence.load_trace(tmp)
        np.testing.assert_array_equal(loaded.samples, trace.samples)
        np.testing.assert_array_equal(loaded.log_estimates, trace.log_estimates)
        self.assertEqual(loaded.names, trace.names)

    def test_populations_and_manifest(self):
        population = Population(
            np.array([[0.1], [0.3]]), np.array([0.25, 0.75]), np.array([1.5, 2.5]), 3.0,
            generation=2, names=["log_theta_1"], attempts=10, simulated=8, budget_mark=400,
        )
        with tempfile.TemporaryDirectory() as tmp:
            persistence.save_populations([population], tmp)
            self.assertTrue(persistence.has_populations(tmp))
            manifest = persistence.read_json(Path(tmp) / "populations" / "manifest.json")
            loaded = persistence.load_populations(tmp)[0]
        self.assertEqual(manifest["generations"][0]["cumulative_budget"], 400)
        self.assertEqual(loaded.generation, 2)
        np.testing.assert_array_equal(loaded.weights, population.weights)

    def test_ledgers_with_errors(self):
        ledger = BudgetLedger(100)
        with ledger.phase("tuning"):
            ledger.charge(30)
        ledger.charge(20)
        with tempfile.TemporaryDirectory() as tmp:
            persistence.save_ledgers({"pmcmc": ledger}, tmp, {"pmcmc": "budget exhausted"})
            ledgers, errors = persistence.load_ledgers(tmp)
        self.assertEqual(ledgers["pmcmc"].consumed, 50)
        self.assertEqual(ledgers["pmcmc"].by_phase["tuning"], 30)
        self.assertEqual(errors, {"pmcmc": "budget exhausted"})

    def test_non_finite_json(self):
        self.assertEqual(persistence.to_jsonable({"a": np.float64(-np.inf)}), {"a": "-inf"})
        self.assertEqual(persistence.to_jsonable(np.arange(2)), [0, 1])
