from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from ... import harness, persistence
from ...exceptions import InferenceError
from ...pmcmc import thin_chain


def int_list(text):
    return [int(float(v)) for v in text.split(",") if v.strip()]


class Command(BaseCommand):
    help = "Recompute summary.json and brackets.csv of a run directory from its raw files"

    def add_arguments(self, parser):
        parser.add_argument("run_dir")
        parser.add_argument("--marks", type=int_list, help="budget marks of the brackets")
        parser.add_argument("--thin", type=int, help="write a trace thinned to this many samples")

    def handle(self, *args, **options):
        run_dir = Path(options["run_dir"])
        if not run_dir.is_dir():
            raise CommandError(f"{run_dir} is not a directory")
        try:
            summary, brackets = harness.summarize_run_directory(run_dir)
            if options["marks"]:
                trace = persistence.load_trace(run_dir) if persistence.has_trace(run_dir) else None
                populations = (
                    persistence.load_populations(run_dir)
                    if persistence.has_populations(run_dir)
                    else []
                )
                brackets = harness.bracketed_summaries(trace, populations, options["marks"])
                persistence.write_csv(brackets, run_dir / persistence.BRACKETS_FILE)
            if options["thin"]:
                trace = persistence.load_trace(run_dir)
                thinned = thin_chain(trace, min(options["thin"], len(trace)))
                persistence.write_csv(thinned.to_frame(), run_dir / "trace_thinned.csv")
        except (InferenceError, ValueError, OSError) as exc:
            raise CommandError(str(exc)) from exc
        if "pmcmc" in summary:
            for name, stats in summary["pmcmc"]["parameters"].items():
                self.stdout.write(
                    f"pmcmc {name}: mean={stats['mean']:.4f} var={stats['variance']:.4g} ess={stats['ess']}"
                )
        if "abc_smc" in summary:
            final = summary["abc_smc"]["generations"][-1]
            for name, stats in final["parameters"].items():
                self.stdout.write(
                    f"abc generation {final['generation']} {name}: "
                    f"mean={stats['mean']:.4f} var={stats['variance']:.4g}"
                )
        if brackets is not None:
            self.stdout.write(f"{brackets['bracket'].nunique()} brackets written")
