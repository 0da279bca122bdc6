from ... import harness, persistence
from ...abc_smc import AbcConfig, run_abc_smc
from ...budget import worker_pool
from ._base import InferenceCommand, float_list


class Command(InferenceCommand):
    help = "Run ABC SMC until the tolerance stops falling or the budget is spent"

    regime_option = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--population-size", type=int)
        parser.add_argument("--epsilon0", type=float, help="skip the pilot run")
        parser.add_argument("--quantile", type=float, help="adaptive tolerance quantile")
        parser.add_argument("--pilot-size", type=int)
        parser.add_argument("--pilot-quantile", type=float)
        parser.add_argument("--schedule", type=float_list, help="fixed nonincreasing tolerances")
        parser.add_argument("--max-generations", type=int)

    def run(self, **options):
        model = self.model(options)
        regime = self.regime(options, model)
        dataset = self.dataset(options, model, regime)
        ledger = self.ledger(options)
        out = self.out_dir(options, "abc_smc")
        self.write_config(out, options)
        config = AbcConfig(
            model.network, dataset, model.prior(regime), model.layout(regime), model.state_prior,
            population_size=options["population_size"], epsilon0=options["epsilon0"],
            quantile=options["quantile"], pilot_size=options["pilot_size"],
            pilot_quantile=options["pilot_quantile"], schedule=options["schedule"],
            max_generations=options["max_generations"],
        )
        with worker_pool(self.workers(options)) as executor:
            populations = run_abc_smc(config, self.rng(options), ledger, executor)
        persistence.save_populations(populations, out)
        persistence.save_ledgers({"abc_smc": ledger}, out)
        harness.summarize_run_directory(out)
        self.stdout.write(
            f"{len(populations)} generations, final epsilon {populations[-1].tolerance:.6g}, "
            f"consumed {ledger.consumed}/{ledger.capacity}"
        )
        return {"out": out, "ledgers": {"abc_smc": ledger}}
