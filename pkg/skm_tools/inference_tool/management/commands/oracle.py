import numpy as np
import pandas as pd

from ... import persistence
from ...exact_oracle import exact_likelihood, grid_posterior, ks_distance
from ._base import InferenceCommand, float_list


class Command(InferenceCommand):
    help = "Exact likelihood and grid posterior of one log rate for a small model"

    regime_option = True
    default_model = "builtin:death"

    def add_arguments(self, parser):
        super().add_arguments(parser)
        parser.add_argument("--bounds", type=float_list, help="per-species truncation bounds")
        parser.add_argument("--parameter", type=int, default=0, help="index of the free rate")
        parser.add_argument("--grid", type=float_list, default=[-2.0, 0.5, 400], help="lo,hi,points")
        parser.add_argument("--run", help="run directory whose samples are scored against the grid posterior")

    def run(self, **options):
        model = self.model(options)
        regime = self.regime(options, model)
        dataset = self.dataset(options, model, regime)
        out = self.out_dir(options, "oracle")
        idx = options["parameter"]
        bounds = (
            np.asarray(options["bounds"], dtype=np.int64)
            if options["bounds"]
            else np.maximum(3 * model.x0, 30)
        )
        x0 = model.x0
        state_prior = model.state_prior

        def theta_of(value):
            theta = model.theta.copy()
            theta[idx] = np.exp(value)
            return theta

        lo, hi, points = options["grid"]
        grid = np.linspace(lo, hi, int(points))
        loglik = exact_likelihood(model.network, model.theta, dataset, bounds, state_prior, x0)
        posterior = grid_posterior(
            model.network, dataset, model.rate_prior.components[idx].logpdf, grid, bounds,
            theta_of=theta_of, state_prior=state_prior, x0=x0,
        )
        result = {
            "log_likelihood_at_truth": loglik,
            "parameter": model.rate_prior.names[idx],
            "posterior_mean": posterior.mean,
            "posterior_sd": posterior.sd,
        }
        if options["run"]:
            result["ks_distance"] = self.score_run(options["run"], idx, posterior)
        persistence.write_csv(
            pd.DataFrame(
                {
                    "log_param": posterior.grid,
                    "density": posterior.density,
                    "weight": posterior.weights,
                    "log_likelihood": posterior.log_likelihood,
                }
            ),
            out / "grid_posterior.csv",
        )
        persistence.write_json(result, out / "oracle.json")
        self.write_config(out, options)
        self.stdout.write(
            f"log-likelihood at truth {loglik:.6f}; posterior mean {posterior.mean:.4f} "
            f"sd {posterior.sd:.4f}"
        )
        return {"out": out}

    def score_run(self, run_dir, idx, posterior):
        scores = {}
        if persistence.has_trace(run_dir):
            trace = persistence.load_trace(run_dir)
            scores["pmcmc"] = ks_distance(trace.samples[:, idx], None, posterior)
        if persistence.has_populations(run_dir):
            populations = persistence.load_populations(run_dir)
            scores["abc_smc_first"] = ks_distance(
                populations[0].particles[:, idx], populations[0].weights, posterior
            )
            scores["abc_smc_final"] = ks_distance(
                populations[-1].particles[:, idx], populations[-1].weights, posterior
            )
        return scores
