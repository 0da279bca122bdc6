import numpy as np
import pandas as pd

from ... import harness, persistence
from ...budget import worker_pool
from ._base import InferenceCommand, float_list


class Command(InferenceCommand):
    help = "Simulate independent Direct-method paths of a model"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--theta", type=float_list, help="comma separated rate constants")
        parser.add_argument("--t-end", type=float, default=4.0)
        parser.add_argument("--reps", type=int, default=100)
        parser.add_argument("--points", type=int, default=21, help="recorded times per path")
        parser.add_argument(
            "--mode-threshold",
            type=float,
            help="classify the first species' final count into two modes at this value",
        )

    def run(self, **options):
        model = self.model(options)
        ledger = self.ledger(options)
        out = self.out_dir(options, "simulate")
        times = np.linspace(0.0, options["t_end"], options["points"])
        with worker_pool(self.workers(options)) as executor:
            states = harness.simulate_ensemble(
                model, times, options["reps"], self.rng(options), ledger,
                theta=options["theta"], executor=executor,
            )
        reps, n_times, _ = states.shape
        frame = pd.DataFrame(
            states.reshape(reps * n_times, -1), columns=list(model.network.species_names)
        )
        frame.insert(0, "time", np.tile(times, reps))
        frame.insert(0, "rep", np.repeat(np.arange(reps), n_times))
        persistence.write_csv(frame, out / "simulations.csv")
        self.write_config(out, options)
        persistence.save_ledgers({"simulate": ledger}, out)
        if options["mode_threshold"] is not None:
            modes = harness.classify_modes(states[:, -1, 0], options["mode_threshold"])
            persistence.write_json(modes, out / "modes.json")
            self.stdout.write(
                f"low={modes['low']} high={modes['high']} "
                f"(high fraction {modes['high_fraction']:.3f})"
            )
        self.stdout.write(f"wrote {reps} paths to {out}")
        return {"out": out, "ledgers": {"simulate": ledger}}
