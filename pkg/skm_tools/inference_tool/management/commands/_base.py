import logging
from pathlib import Path

import numpy as np
from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from ... import harness, persistence
from ...budget import BudgetLedger, substream
from ...conf import get_setting
from ...exceptions import InferenceError
from ...models import InferenceRun

logger = logging.getLogger(__name__)


def float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


class InferenceCommand(BaseCommand):
    """
    Shared flags (``--model``, ``--budget``, ``--seed``, ``--out``,
    ``--workers``), error translation and run registration.

    Subclasses implement ``run(**options)`` and may return the output
    directory and the ledgers they charged.
    """

    regime_option = False
    default_model = "builtin:lv"

    def add_arguments(self, parser):
        parser.add_argument(
            "--model",
            default=self.default_model,
            help="builtin:lv, builtin:schlogl, builtin:death, builtin:immigration or a JSON file",
        )
        parser.add_argument("--budget", type=int, help="budget in model realisations")
        parser.add_argument(
            "--full-budget", action="store_true", help="use SKM_FULL_BUDGET instead of the desk-scale default"
        )
        parser.add_argument("--seed", type=int, default=0)
        parser.add_argument("--out", help="output directory")
        parser.add_argument("--workers", type=int, help="worker processes for simulation")
        if self.regime_option:
            parser.add_argument("--regime", help="observation regime, e.g. D2, D2_p, D2_u, D2_up")
            parser.add_argument("--dataset", help="dataset CSV instead of generated data")

    def handle(self, *args, **options):
        record = self.register(options)
        try:
            result = self.run(**options) or {}
        except (InferenceError, ValueError, OSError) as exc:
            self.finish(record, InferenceRun.FAILED, message=str(exc))
            raise CommandError(str(exc)) from exc
        ledgers = result.get("ledgers", {})
        self.finish(
            record,
            InferenceRun.FINISHED,
            consumed={name: ledger.consumed for name, ledger in ledgers.items()},
            output_dir=str(result.get("out", "")),
        )

    def run(self, **options):
        raise NotImplementedError

    def model(self, options):
        return harness.load_model(options["model"])

    def regime(self, options, model):
        return model.regime(options.get("regime") or model.regimes[0])

    def dataset(self, options, model, regime):
        return harness.load_experiment_dataset(model, regime, options["seed"], options.get("dataset"))

    def budget(self, options):
        if options.get("full_budget"):
            return get_setting("SKM_FULL_BUDGET")
        return options.get("budget") or get_setting("SKM_DEFAULT_BUDGET")

    def ledger(self, options):
        return BudgetLedger(self.budget(options))

    def rng(self, options):
        return substream(options["seed"], 2)

    def workers(self, options):
        return options.get("workers") or get_setting("SKM_WORKERS")

    def out_dir(self, options, name):
        out = Path(options.get("out") or Path(get_setting("SKM_OUTPUT_DIR")) / name)
        out.mkdir(parents=True, exist_ok=True)
        return out

    def write_config(self, out, options):
        persistence.write_json(
            {k: v for k, v in options.items() if k not in ("stdout", "stderr")},
            out / persistence.CONFIG_FILE,
        )

    def register(self, options):
        regime = options.get("regime") or ""
        if isinstance(regime, list):
            regime = ",".join(regime)
        try:
            return InferenceRun.objects.create(
                command=self.__module__.rsplit(".", 1)[-1],
                model=options.get("model") or "",
                regime=regime,
                seed=options.get("seed"),
                budget=self.budget(options),
            )
        except DatabaseError as exc:
            logger.debug("run not registered: %s", exc)
            return None

    def finish(self, record, status, **fields):
        if record is None:
            return
        record.status = status
        for name, value in fields.items():
            setattr(record, name, value)
        try:
            record.save()
        except DatabaseError as exc:
            logger.debug("run record not updated: %s", exc)


def add_tuning_arguments(parser):
    parser.add_argument(
        "--tuning",
        choices=["cold", "posterior", "population"],
        default="cold",
        help="how theta0, N and the proposal are chosen",
    )
    parser.add_argument("--theta0", type=float_list, help="log-scale starting point (posterior mode)")
    parser.add_argument(
        "--posterior-sd",
        type=float_list,
        help="posterior sd per coordinate; the covariance is taken as diagonal",
    )
    parser.add_argument("--reference-trace", help="trace CSV giving theta0 and the covariance")
    parser.add_argument("--population-run", help="ABC SMC run directory (population mode)")
    parser.add_argument("--particles", type=int, help="posterior mode: use this N instead of searching")
    parser.add_argument("--cold-candidates", type=int, default=100)
    parser.add_argument("--pilot-iterations", type=int, default=500)


def chain_tuning(options, model, regime, dataset, rng, ledger, executor=None):
    """Run ``harness.tune_chain`` with the command-line tuning options"""
    sd = options.get("posterior_sd")
    config = harness.ExperimentConfig(
        model=options["model"],
        regime=regime.label,
        budget=ledger.capacity,
        seed=options["seed"],
        tuning=options["tuning"],
        theta0=options.get("theta0"),
        posterior_cov=np.diag(np.square(sd)).tolist() if sd else None,
        reference_trace=options.get("reference_trace"),
        n_particles=options.get("particles"),
        cold_candidates=options["cold_candidates"],
        pilot_iterations=options["pilot_iterations"],
    )
    population = None
    if options.get("population_run"):
        population = persistence.load_populations(options["population_run"])[-1]
    return harness.tune_chain(config, model, regime, dataset, rng, ledger, executor, population)
