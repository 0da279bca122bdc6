"""
Built-in models, observation regimes, experiment orchestration and diagnostics.

``run_comparison`` runs ABC SMC and pMCMC on the same dataset, each against a
fresh ledger of the same capacity, persists the raw output and derives every
summary from the persisted files.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import stats

from . import persistence
from .abc_smc import AbcConfig, run_abc_smc
from .budget import BudgetLedger, stream_seeds, substream, worker_pool
from .conf import get_setting
from .exceptions import BracketError, InferenceError, NetworkError
from .model_core import (
    ObservationModel,
    ObservedDataset,
    ParameterLayout,
    add_noise,
    build_network,
    load_network_file,
    simulate_paths,
)
from .pmcmc import (
    ChainConfig,
    compute_ess,
    run_chain,
    scale_proposal,
    tune_cold_start,
    tune_from_population,
    ChainTuning,
)
from .priors import (
    gaussian_log_prior,
    PointMassPrior,
    PoissonStatePrior,
    uniform_log_prior,
)
from .smc_filter import tune_particle_count

logger = logging.getLogger(__name__)

REGIME_SUFFIXES = {"": (False, True), "_p": (True, True), "_u": (False, False), "_up": (True, False)}
QUANTILES = (0.025, 0.25, 0.5, 0.75, 0.975)


@dataclass(frozen=True)
class ObservationRegime:
    """
    Dataset id plus masking/noise flags, labelled like ``D2``, ``D2_p``,
    ``D2_u`` or ``D2_up``.
    """

    dataset_id: str
    partial: bool = False
    sigma_known: bool = True

    @property
    def label(self):
        for suffix, flags in REGIME_SUFFIXES.items():
            if flags == (self.partial, self.sigma_known):
                return self.dataset_id + suffix

    @classmethod
    def parse(cls, label):
        for suffix in ("_up", "_p", "_u"):
            if label.endswith(suffix):
                partial, known = REGIME_SUFFIXES[suffix]
                return cls(label[: -len(suffix)], partial, known)
        return cls(label)


@dataclass
class BuiltinModel:
    """
    A network with its true rates, initial state, priors and dataset grids.

    ``grids`` maps dataset ids to observation times and ``noise_sd`` maps them
    to the sigma used when generating data. ``partial_mask`` is the species
    mask of the ``_p`` regimes; None disallows them, as ``log_sigma_prior``
    None disallows the ``_u`` ones.
    """

    key: str
    network: object
    theta: np.ndarray
    x0: np.ndarray
    rate_prior: object
    state_prior: object
    grids: dict
    noise_sd: dict
    log_sigma_prior: object = None
    partial_mask: tuple = None

    @property
    def log_theta(self):
        return np.log(self.theta)

    @property
    def regimes(self):
        labels = []
        for dataset_id in self.grids:
            for suffix, (partial, known) in REGIME_SUFFIXES.items():
                if partial and self.partial_mask is None:
                    continue
                if not known and self.log_sigma_prior is None:
                    continue
                labels.append(dataset_id + suffix)
        return labels

    def regime(self, label):
        regime = ObservationRegime.parse(label) if isinstance(label, str) else label
        if regime.label not in self.regimes:
            raise ValueError(
                f"Regime {regime.label!r} is not available for {self.key}; "
                f"choose from {', '.join(self.regimes)}"
            )
        return regime

    def observation_model(self, regime):
        regime = self.regime(regime)
        mask = self.partial_mask if regime.partial else (True,) * self.network.n_species
        sd = self.noise_sd[regime.dataset_id] if regime.sigma_known else None
        return ObservationModel(sd, mask)

    def layout(self, regime):
        return ParameterLayout(self.network.n_reactions, not self.regime(regime).sigma_known)

    def prior(self, regime):
        if self.regime(regime).sigma_known:
            return self.rate_prior
        return self.rate_prior.extended(self.log_sigma_prior, "log_sigma")

    def true_log_params(self, regime):
        regime = self.regime(regime)
        if regime.sigma_known:
            return self.log_theta
        return np.append(self.log_theta, np.log(self.noise_sd[regime.dataset_id]))

    def to_dict(self):
        return {
            "key": self.key,
            "network": self.network.to_dict(),
            "theta": self.theta,
            "x0": self.x0,
            "rate_prior": self.rate_prior.to_dict(),
            "state_prior": self.state_prior.to_dict(),
            "grids": {k: v for k, v in self.grids.items()},
            "noise_sd": self.noise_sd,
            "regimes": self.regimes,
        }


def _log_uniform_sigma(lower, upper):
    return stats.uniform(loc=np.log(lower), scale=np.log(upper) - np.log(lower))


def builtin_lotka_volterra():
    """Predator-prey network with the LV rates, priors and D1/D2/D3 grids"""
    network = build_network(
        [[1, 0], [1, 1], [0, 1]],
        [[2, 0], [0, 2], [0, 0]],
        ["prey", "predator"],
        ["prey_birth", "predation", "predator_death"],
    )
    sigma = float(np.exp(2.3))
    return BuiltinModel(
        key="lv",
        network=network,
        theta=np.array([1.0, 0.005, 0.6]),
        x0=np.array([50, 100]),
        rate_prior=uniform_log_prior(-6.0, 2.0, 3),
        state_prior=PoissonStatePrior([50, 100]),
        grids={
            "D1": np.arange(0.0, 6.0, 1.0),
            "D2": np.arange(0.0, 31.0, 2.0),
            "D3": np.arange(0.0, 50.5, 0.5),
        },
        noise_sd={"D1": sigma, "D2": sigma, "D3": sigma},
        log_sigma_prior=_log_uniform_sigma(0.5, 50.0),
        partial_mask=(True, False),
    )


def builtin_schlogl():
    """Bimodal Schlogl network; both datasets observe one latent path"""
    network = build_network(
        [[2, 1, 0], [3, 0, 0], [0, 0, 1], [1, 0, 0]],
        [[3, 0, 0], [2, 1, 0], [1, 0, 0], [0, 0, 1]],
        ["X1", "A", "B"],
    )
    theta = np.array([3e-7, 1e-4, 0.000773, 3.276])
    x0 = np.array([250, 100000, 200000])
    grid = np.round(np.arange(21) * 0.2, 10)
    return BuiltinModel(
        key="schlogl",
        network=network,
        theta=theta,
        x0=x0,
        rate_prior=gaussian_log_prior(np.log(theta), 0.5),
        state_prior=PointMassPrior(x0),
        grids={"DS1": grid, "DS10": grid},
        noise_sd={"DS1": 1.0, "DS10": float(np.sqrt(10.0))},
    )


def builtin_pure_death():
    """Single-species decay with a known initial state; small enough for the oracle"""
    network = build_network([[1]], [[0]], ["X"], ["death"])
    return BuiltinModel(
        key="death",
        network=network,
        theta=np.array([0.5]),
        x0=np.array([20]),
        rate_prior=uniform_log_prior(-3.0, 1.0, 1),
        state_prior=PointMassPrior([20]),
        grids={"D": np.arange(0.0, 2.5, 0.5)},
        noise_sd={"D": 2.0},
        log_sigma_prior=_log_uniform_sigma(0.5, 10.0),
    )


def builtin_immigration_death():
    """Immigration at rate alpha with per-molecule death"""
    network = build_network([[0], [1]], [[1], [0]], ["X"], ["immigration", "death"])
    return BuiltinModel(
        key="immigration",
        network=network,
        theta=np.array([2.0, 0.5]),
        x0=np.array([4]),
        rate_prior=uniform_log_prior(-3.0, 2.0, 2),
        state_prior=PointMassPrior([4]),
        grids={"D": np.arange(0.0, 5.5, 0.5)},
        noise_sd={"D": 1.0},
    )


BUILTINS = {
    "lv": builtin_lotka_volterra,
    "schlogl": builtin_schlogl,
    "death": builtin_pure_death,
    "immigration": builtin_immigration_death,
}


def model_from_file(path):
    """
    Model from a JSON definition. Besides ``species`` and ``reactions`` the
    file may give ``rates``, ``initial_state``, ``noise_sd``,
    ``observation_times``, ``initial_state_prior`` ("point" or "poisson") and
    ``log_rate_prior`` (``{"uniform": [lo, hi]}`` or ``{"normal": sd}``
    centred on the log rates).
    """
    network, data = load_network_file(path)
    try:
        theta = np.asarray(data.get("rates", np.ones(network.n_reactions)), dtype=float)
        x0 = np.asarray(data.get("initial_state", np.zeros(network.n_species)), dtype=np.int64)
    except (TypeError, ValueError) as exc:
        raise NetworkError(f"Invalid rates or initial state in {path}: {exc}") from exc
    if theta.shape != (network.n_reactions,) or x0.shape != (network.n_species,):
        raise NetworkError("rates and initial_state must match the network dimensions")
    prior_spec = data.get("log_rate_prior", {"uniform": [-6.0, 2.0]})
    if "uniform" in prior_spec:
        lower, upper = prior_spec["uniform"]
        rate_prior = uniform_log_prior(lower, upper, network.n_reactions)
    elif "normal" in prior_spec:
        rate_prior = gaussian_log_prior(np.log(theta), float(prior_spec["normal"]))
    else:
        raise NetworkError(f"Unsupported log_rate_prior {prior_spec!r}")
    if data.get("initial_state_prior", "point") == "poisson":
        state_prior = PoissonStatePrior(x0)
    else:
        state_prior = PointMassPrior(x0)
    times = np.asarray(data.get("observation_times", np.arange(0.0, 11.0)), dtype=float)
    sigma = float(data.get("noise_sd", 1.0))
    return BuiltinModel(
        key=str(path),
        network=network,
        theta=theta,
        x0=x0,
        rate_prior=rate_prior,
        state_prior=state_prior,
        grids={"D": times},
        noise_sd={"D": sigma},
        log_sigma_prior=_log_uniform_sigma(sigma / 10.0, sigma * 10.0),
    )


def load_model(name):
    """``builtin:<key>`` for a built-in model, anything else is a file path"""
    if name.startswith("builtin:"):
        key = name.split(":", 1)[1]
        if key not in BUILTINS:
            raise NetworkError(
                f"Unknown built-in model {key!r}; choose from {', '.join(BUILTINS)}"
            )
        return BUILTINS[key]()
    return model_from_file(name)


@dataclass
class BenchmarkDatasets:
    """Labelled datasets and the latent path they were all observed from"""

    datasets: dict
    latent_times: np.ndarray
    latent_states: np.ndarray
    theta: np.ndarray

    def __getitem__(self, label):
        return self.datasets[label]


def simulate_ensemble(model, times, reps, rng, ledger, theta=None, executor=None):
    """
    ``reps`` independent paths from the model's true initial state, recorded at
    ``times`` (measured from 0). Charges ``reps`` units.

    Returns
    -------
    numpy.ndarray
        reps x len(times) x u species counts
    """
    theta = model.theta if theta is None else np.asarray(theta, dtype=float)
    ledger.charge(reps)
    return simulate_paths(
        model.network,
        theta,
        np.tile(model.x0, (reps, 1)),
        np.asarray(times, dtype=float),
        stream_seeds(reps, int(rng.integers(0, 2 ** 63 - 1))),
        executor,
    )


def generate_benchmark_datasets(model, rng):
    """
    Every regime of ``model`` from a single latent path at the true rates.

    Noise is drawn once per dataset id, so ``D2``, ``D2_p``, ``D2_u`` and
    ``D2_up`` differ only in masking and in whether sigma is flagged unknown.
    """
    latent_times = np.unique(np.concatenate(list(model.grids.values())))
    latent = simulate_ensemble(model, latent_times, 1, rng, BudgetLedger(1))[0]
    datasets = {}
    for dataset_id, times in model.grids.items():
        rows = np.searchsorted(latent_times, times)
        noise_sd = model.noise_sd[dataset_id]
        values = add_noise(latent[rows], np.ones(model.network.n_species, bool), noise_sd, rng)
        for label in model.regimes:
            regime = ObservationRegime.parse(label)
            if regime.dataset_id == dataset_id:
                datasets[label] = ObservedDataset(
                    times, values, model.observation_model(regime), model.network.species_names
                )
    return BenchmarkDatasets(datasets, latent_times, latent, model.theta.copy())


@dataclass
class ExperimentConfig:
    """
    One comparison run. ``tuning`` selects how pMCMC is initialised:
    "posterior" (``theta0`` and ``posterior_cov``, or a ``reference_trace``),
    "cold" (prior search and pilot chain) or "population" (final ABC SMC
    population of the same run).
    """

    model: str = "builtin:lv"
    regime: str = "D2"
    budget: int = None
    population_size: int = None
    seed: int = 0
    output_dir: str = None
    workers: int = None
    tuning: str = "cold"
    theta0: list = None
    posterior_cov: list = None
    reference_trace: str = None
    n_particles: int = None
    epsilon0: float = None
    tolerance_quantile: float = None
    pilot_size: int = None
    schedule: list = None
    dataset_path: str = None
    max_generations: int = None
    cold_candidates: int = 100
    pilot_iterations: int = 500

    def __post_init__(self):
        self.budget = int(self.budget or get_setting("SKM_DEFAULT_BUDGET"))
        self.population_size = int(self.population_size or get_setting("SKM_POPULATION_SIZE"))
        self.workers = int(self.workers or get_setting("SKM_WORKERS"))
        self.output_dir = str(self.output_dir or Path(get_setting("SKM_OUTPUT_DIR")) / "compare")
        if self.budget <= 0:
            raise ValueError("Budget must be positive")
        if self.tuning not in ("posterior", "cold", "population"):
            raise ValueError(f"Unknown tuning mode {self.tuning!r}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(**{k: v for k, v in data.items() if k in cls.__dataclass_fields__})


@dataclass
class RunArtifacts:
    """What a comparison leaves behind, in memory and under ``output_dir``"""

    output_dir: Path
    trace: object = None
    populations: list = field(default_factory=list)
    tuning: object = None
    ledgers: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    brackets: pd.DataFrame = None
    errors: dict = field(default_factory=dict)


def load_experiment_dataset(model, regime, seed, dataset_path=None):
    """The dataset at ``dataset_path``, or the generated one for ``regime``"""
    if dataset_path:
        dataset = persistence.load_dataset(dataset_path)
        if regime.partial or not regime.sigma_known:
            dataset = dataset.with_model(model.observation_model(regime))
        return dataset
    return generate_benchmark_datasets(model, substream(seed, 0))[regime.label]


def tune_chain(config, model, regime, dataset, rng, ledger, executor=None, population=None):
    """Starting point, particle count and proposal by ``config.tuning``"""
    layout = model.layout(regime)
    prior = model.prior(regime)
    if config.tuning == "population":
        if population is None:
            raise ValueError("Population-informed tuning needs an ABC SMC population")
        tuning = tune_from_population(
            model.network, dataset, layout, model.state_prior, population, rng, ledger, executor
        )
    elif config.tuning == "posterior":
        theta0, cov = _posterior_inputs(config, rng)
        start = ledger.consumed
        n = config.n_particles
        if n is None:
            theta, sigma = layout.split(theta0)
            with ledger.phase("tuning"):
                n = tune_particle_count(
                    model.network, theta, dataset, model.state_prior, rng, ledger,
                    sigma=sigma, executor=executor,
                )
        tuning = ChainTuning(theta0, n, scale_proposal(cov), "posterior", ledger.consumed - start)
    else:
        tuning = tune_cold_start(
            model.network, dataset, layout, prior, model.state_prior, rng, ledger,
            n_candidates=config.cold_candidates, pilot_iterations=config.pilot_iterations,
            executor=executor,
        )
    logger.info(
        "pmcmc tuning mode=%s particles=%d consumed=%d", tuning.mode, tuning.n_particles, tuning.consumed
    )
    return tuning


def _posterior_inputs(config, rng):
    if config.reference_trace:
        reference = persistence.load_trace(config.reference_trace)
        theta0 = reference.samples[rng.integers(len(reference))]
        return theta0, np.atleast_2d(np.cov(reference.samples.T))
    if config.theta0 is None or config.posterior_cov is None:
        raise ValueError("Posterior-informed tuning needs theta0 and posterior_cov")
    return np.asarray(config.theta0, dtype=float), np.asarray(config.posterior_cov, dtype=float)


def run_comparison(config, rng=None):
    """
    ABC SMC then pMCMC on the same dataset under equal, separate budgets.

    A failing sampler is recorded in ``errors`` and the other one still runs;
    whatever was produced is persisted and summarised.
    """
    rng = rng or substream(config.seed)
    model = load_model(config.model)
    regime = model.regime(config.regime)
    dataset = load_experiment_dataset(model, regime, config.seed, config.dataset_path)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    persistence.write_json(config.to_dict(), out / persistence.CONFIG_FILE)
    persistence.save_dataset(
        dataset, out / persistence.DATASET_FILE,
        provenance={"seed": config.seed, "theta": model.theta, "regime": regime.label},
    )
    abc_rng, chain_rng = (substream(int(rng.integers(0, 2 ** 63 - 1)), i) for i in (1, 2))
    artifacts = RunArtifacts(out)
    ledgers = {"abc_smc": BudgetLedger(config.budget), "pmcmc": BudgetLedger(config.budget)}
    artifacts.ledgers = ledgers

    with worker_pool(config.workers) as executor:
        try:
            artifacts.populations = run_abc_smc(
                AbcConfig(
                    model.network, dataset, model.prior(regime), model.layout(regime),
                    model.state_prior, population_size=config.population_size,
                    epsilon0=config.epsilon0, quantile=config.tolerance_quantile,
                    pilot_size=config.pilot_size, schedule=config.schedule,
                    max_generations=config.max_generations,
                ),
                abc_rng,
                ledgers["abc_smc"],
                executor,
            )
            persistence.save_populations(artifacts.populations, out)
        except InferenceError as exc:
            logger.error("abc smc failed: %s", exc)
            artifacts.errors["abc_smc"] = str(exc)

        try:
            population = artifacts.populations[-1] if artifacts.populations else None
            artifacts.tuning = tune_chain(
                config, model, regime, dataset, chain_rng, ledgers["pmcmc"], executor, population
            )
            persistence.write_json(artifacts.tuning.to_dict(), out / persistence.TUNING_FILE)
            artifacts.trace = run_chain(
                ChainConfig(
                    model.network, dataset, model.prior(regime), model.layout(regime),
                    model.state_prior, artifacts.tuning.theta0, artifacts.tuning.n_particles,
                    artifacts.tuning.proposal,
                ),
                chain_rng,
                ledgers["pmcmc"],
                executor,
            )
            persistence.save_trace(artifacts.trace, out)
        except (InferenceError, ValueError) as exc:
            logger.error("pmcmc failed: %s", exc)
            artifacts.errors["pmcmc"] = str(exc)

    persistence.save_ledgers(ledgers, out, artifacts.errors)
    artifacts.summary, artifacts.brackets = summarize_run_directory(out)
    return artifacts


def run_replicates(config, replicates=None):
    """``replicates`` comparisons with seeds ``seed, seed + 1, ...`` in ``rep_<i>``"""
    replicates = replicates or get_setting("SKM_REPLICATES")
    results = []
    for i in range(replicates):
        data = config.to_dict()
        data.update(seed=config.seed + i, output_dir=str(Path(config.output_dir) / f"rep_{i}"))
        results.append(run_comparison(ExperimentConfig.from_dict(data)))
    return results


def _weighted_quantiles(values, weights, quantiles):
    order = np.argsort(values)
    cumulative = np.cumsum(weights[order])
    cumulative /= cumulative[-1]
    idx = np.searchsorted(cumulative, quantiles, side="left")
    return values[order][np.minimum(idx, len(values) - 1)]


def chain_summary(trace):
    """Posterior mean, variance, quantiles and ESS per coordinate of a trace"""
    summary = {
        "iterations": len(trace),
        "acceptance_rate": trace.acceptance_rate,
        "final_budget": int(trace.budget_marks[-1]) if len(trace) else 0,
        "parameters": {},
    }
    for i, name in enumerate(trace.names):
        column = trace.samples[:, i]
        summary["parameters"][name] = {
            "mean": float(column.mean()),
            "variance": float(column.var()),
            "quantiles": dict(zip(map(str, QUANTILES), np.quantile(column, QUANTILES).tolist())),
            "ess": compute_ess(column) if len(column) >= 10 else None,
        }
    return summary


def population_summary(population):
    mean, variance = population.mean(), population.variance()
    return {
        "generation": population.generation,
        "tolerance": population.tolerance,
        "size": population.size,
        "acceptance_rate": population.acceptance_rate,
        "cumulative_budget": population.budget_mark,
        "parameters": {
            name: {
                "mean": float(mean[i]),
                "variance": float(variance[i]),
                "quantiles": dict(
                    zip(
                        map(str, QUANTILES),
                        _weighted_quantiles(
                            population.particles[:, i], population.weights, QUANTILES
                        ).tolist(),
                    )
                ),
            }
            for i, name in enumerate(population.names)
        },
    }


def bracketed_summaries(trace, populations, marks=None):
    """
    Both samplers summarised at the same budget marks.

    At each mark the pMCMC columns use every sample recorded by then and the
    ABC columns the latest generation completed by then. Marks default to the
    ABC generation marks.

    Returns
    -------
    pandas.DataFrame
        one row per bracket and parameter
    """
    populations = populations or []
    if marks is None:
        marks = [p.budget_mark for p in populations]
        if not marks and trace is not None and len(trace):
            marks = [int(trace.budget_marks[-1])]
    marks = [int(m) for m in marks]
    if np.any(np.diff(marks) <= 0):
        raise ValueError("Bracket marks must be strictly increasing")
    names = trace.names if trace is not None else (populations[0].names if populations else [])
    rows = []
    for b, mark in enumerate(marks):
        chain = trace.upto(mark) if trace is not None else None
        if chain is not None and len(chain) == 0:
            raise BracketError(f"No pMCMC samples within the first {mark} units")
        done = [p for p in populations if p.budget_mark <= mark]
        generation = done[-1] if done else None
        for i, name in enumerate(names):
            row = {"bracket": b, "budget_mark": mark, "parameter": name}
            if chain is not None:
                column = chain.samples[:, i]
                row.update(
                    pmcmc_samples=len(column),
                    pmcmc_mean=column.mean(),
                    pmcmc_variance=column.var(),
                    pmcmc_ess=compute_ess(column) if len(column) >= 10 else np.nan,
                )
            if generation is not None and i < generation.particles.shape[1]:
                row.update(
                    abc_generation=generation.generation,
                    abc_mean=generation.mean()[i],
                    abc_variance=generation.variance()[i],
                )
            rows.append(row)
    return pd.DataFrame(rows)


def summarize_run_directory(run_dir):
    """
    Rebuild ``summary.json`` and ``brackets.csv`` from the raw files of a run
    directory and return both.
    """
    run_dir = Path(run_dir)
    trace = persistence.load_trace(run_dir) if persistence.has_trace(run_dir) else None
    populations = (
        persistence.load_populations(run_dir) if persistence.has_populations(run_dir) else []
    )
    summary = {}
    if (run_dir / persistence.LEDGER_FILE).exists():
        ledgers, errors = persistence.load_ledgers(run_dir)
        summary["ledgers"] = {name: ledger.to_dict() for name, ledger in ledgers.items()}
        summary["errors"] = errors
    if (run_dir / persistence.TUNING_FILE).exists():
        summary["tuning"] = persistence.read_json(run_dir / persistence.TUNING_FILE)
    if trace is not None and len(trace):
        summary["pmcmc"] = chain_summary(trace)
    if populations:
        summary["abc_smc"] = {
            "tolerances": [p.tolerance for p in populations],
            "generations": [population_summary(p) for p in populations],
        }
    brackets = None
    if (trace is not None and len(trace)) or populations:
        try:
            brackets = bracketed_summaries(trace, populations)
        except BracketError as exc:
            if trace is None:
                raise
            logger.warning("brackets skipped: %s", exc)
            brackets = bracketed_summaries(
                trace, populations,
                [p.budget_mark for p in populations if p.budget_mark >= trace.budget_marks[0]],
            )
        persistence.write_csv(brackets, run_dir / persistence.BRACKETS_FILE)
    persistence.write_json(summary, run_dir / persistence.SUMMARY_FILE)
    return summary, brackets


def classify_modes(values, threshold=None):
    """Split final counts at ``threshold`` into a low and a high mode"""
    threshold = get_setting("SKM_MODE_THRESHOLD") if threshold is None else threshold
    values = np.asarray(values)
    if values.size == 0:
        raise ValueError("No values to classify")
    high = int((values > threshold).sum())
    low = values.size - high
    return {
        "threshold": threshold,
        "low": low,
        "high": high,
        "low_fraction": low / values.size,
        "high_fraction": high / values.size,
    }
