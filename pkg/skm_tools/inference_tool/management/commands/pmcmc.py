from ... import harness, persistence
from ...budget import worker_pool
from ...pmcmc import ChainConfig, ChainTuning, run_chain, thin_chain
from ._base import InferenceCommand, add_tuning_arguments, chain_tuning


class Command(InferenceCommand):
    help = "Run pseudo-marginal MCMC until the budget is spent"

    regime_option = True

    def add_arguments(self, parser):
        super().add_arguments(parser)
        add_tuning_arguments(parser)
        parser.add_argument("--tuning-file", help="tuning.json written by the tune command")
        parser.add_argument("--max-iterations", type=int)
        parser.add_argument("--resampler", choices=["multinomial", "systematic"], default="multinomial")
        parser.add_argument("--thin", type=int, help="also write a trace thinned to this many samples")

    def run(self, **options):
        model = self.model(options)
        regime = self.regime(options, model)
        dataset = self.dataset(options, model, regime)
        ledger = self.ledger(options)
        rng = self.rng(options)
        out = self.out_dir(options, "pmcmc")
        self.write_config(out, options)
        with worker_pool(self.workers(options)) as executor:
            if options["tuning_file"]:
                tuning = ChainTuning.from_dict(persistence.read_json(options["tuning_file"]))
                # the tune run's spend comes out of this run's budget
                ledger.charge(tuning.consumed, phase="tuning")
            else:
                tuning = chain_tuning(options, model, regime, dataset, rng, ledger, executor)
            persistence.write_json(tuning.to_dict(), out / persistence.TUNING_FILE)
            trace = run_chain(
                ChainConfig(
                    model.network, dataset, model.prior(regime), model.layout(regime),
                    model.state_prior, tuning.theta0, tuning.n_particles, tuning.proposal,
                    max_iterations=options["max_iterations"], resampler=options["resampler"],
                ),
                rng,
                ledger,
                executor,
            )
        persistence.save_trace(trace, out)
        if options["thin"]:
            thinned = thin_chain(trace, min(options["thin"], len(trace)))
            persistence.write_csv(thinned.to_frame(), out / "trace_thinned.csv")
        persistence.save_ledgers({"pmcmc": ledger}, out)
        harness.summarize_run_directory(out)
        self.stdout.write(
            f"{len(trace)} iterations, acceptance {trace.acceptance_rate:.3f}, "
            f"consumed {ledger.consumed}/{ledger.capacity}"
        )
        return {"out": out, "ledgers": {"pmcmc": ledger}}
