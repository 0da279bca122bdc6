import numpy as np

from ... import harness
from ._base import InferenceCommand, add_tuning_arguments, float_list


class Command(InferenceCommand):
    help = "Run ABC SMC and pMCMC on the same data under equal budgets"

    regime_option = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_tuning_arguments(parser)
        parser.add_argument("--population-size", type=int)
        parser.add_argument("--epsilon0", type=float)
        parser.add_argument("--quantile", type=float)
        parser.add_argument("--pilot-size", type=int)
        parser.add_argument("--schedule", type=float_list)
        parser.add_argument("--max-generations", type=int)
        parser.add_argument("--replicates", type=int, default=1, help="seeds seed, seed+1, ...")

    def run(self, **options):
        model = self.model(options)
        regime = self.regime(options, model)
        sd = options["posterior_sd"]
        config = harness.ExperimentConfig(
            model=options["model"],
            regime=regime.label,
            budget=self.budget(options),
            population_size=options["population_size"],
            seed=options["seed"],
            output_dir=str(self.out_dir(options, "compare")),
            workers=self.workers(options),
            tuning=options["tuning"],
            theta0=options["theta0"],
            posterior_cov=np.diag(np.square(sd)).tolist() if sd else None,
            reference_trace=options["reference_trace"],
            n_particles=options["particles"],
            epsilon0=options["epsilon0"],
            tolerance_quantile=options["quantile"],
            pilot_size=options["pilot_size"],
            schedule=options["schedule"],
            dataset_path=options["dataset"],
            max_generations=options["max_generations"],
            cold_candidates=options["cold_candidates"],
            pilot_iterations=options["pilot_iterations"],
        )
        if options["replicates"] > 1:
            runs = harness.run_replicates(config, options["replicates"])
        else:
            runs = [harness.run_comparison(config)]
        for artifacts in runs:
            spent = ", ".join(f"{k}={v.consumed}" for k, v in artifacts.ledgers.items())
            failed = "; ".join(f"{k}: {v}" for k, v in artifacts.errors.items())
            self.stdout.write(f"{artifacts.output_dir}: {spent}" + (f" (failed {failed})" if failed else ""))
        return {"out": config.output_dir, "ledgers": runs[-1].ledgers}
