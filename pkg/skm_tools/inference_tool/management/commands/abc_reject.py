from ... import harness, persistence
from ...abc_smc import abc_rejection
from ...budget import worker_pool
from ._base import InferenceCommand


class Command(InferenceCommand):
    help = "Rejection ABC at a fixed tolerance"

    regime_option = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--epsilon", type=float, required=True)
        parser.add_argument("--n-accept", type=int, help="stop after this many acceptances")

    def run(self, **options):
        model = self.model(options)
        regime = self.regime(options, model)
        dataset = self.dataset(options, model, regime)
        ledger = self.ledger(options)
        out = self.out_dir(options, "abc_reject")
        self.write_config(out, options)
        with worker_pool(self.workers(options)) as executor:
            population = abc_rejection(
                model.network, model.prior(regime), model.layout(regime), dataset,
                model.state_prior, options["epsilon"], options["n_accept"] or ledger.capacity,
                self.rng(options), ledger, executor,
            )
        persistence.save_populations([population], out)
        persistence.save_ledgers({"abc_reject": ledger}, out)
        if not population.is_empty:
            harness.summarize_run_directory(out)
        self.stdout.write(
            f"accepted {population.size} of {population.simulated} simulated "
            f"(consumed {ledger.consumed}/{ledger.capacity})"
        )
        return {"out": out, "ledgers": {"abc_reject": ledger}}
