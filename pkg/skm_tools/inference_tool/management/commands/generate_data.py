import pandas as pd

from ... import harness, persistence
from ...budget import substream
from ._base import InferenceCommand


class Command(InferenceCommand):
    help = "Generate the synthetic datasets of a model, one CSV per regime"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--regime", action="append", help="regime to write (default: all)")

    def run(self, **options):
        model = self.model(options)
        out = self.out_dir(options, "data")
        generated = harness.generate_benchmark_datasets(model, substream(options["seed"], 0))
        labels = options["regime"] or list(generated.datasets)
        for label in labels:
            regime = model.regime(label)
            persistence.save_dataset(
                generated[regime.label],
                out / f"{regime.label}.csv",
                provenance={"seed": options["seed"], "theta": model.theta, "model": options["model"]},
            )
        latent = pd.DataFrame(generated.latent_states, columns=list(model.network.species_names))
        latent.insert(0, "time", generated.latent_times)
        persistence.write_csv(latent, out / "latent.csv")
        self.stdout.write(f"wrote {', '.join(labels)} to {out}")
        return {"out": out}
