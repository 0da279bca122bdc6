from ... import persistence
from ...budget import worker_pool
from ._base import InferenceCommand, add_tuning_arguments, chain_tuning


class Command(InferenceCommand):
    help = "Choose theta0, the particle count and the proposal for pMCMC"

    regime_option = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_tuning_arguments(parser)

    def run(self, **options):
        model = self.model(options)
        regime = self.regime(options, model)
        dataset = self.dataset(options, model, regime)
        ledger = self.ledger(options)
        out = self.out_dir(options, "tune")
        with worker_pool(self.workers(options)) as executor:
            tuning = chain_tuning(options, model, regime, dataset, self.rng(options), ledger, executor)
        self.write_config(out, options)
        persistence.write_json(tuning.to_dict(), out / persistence.TUNING_FILE)
        persistence.save_ledgers({"pmcmc": ledger}, out)
        self.stdout.write(
            f"N={tuning.n_particles} theta0={tuning.theta0.round(4).tolist()} "
            f"spent {tuning.consumed} units"
        )
        return {"out": out, "ledgers": {"pmcmc": ledger}}
