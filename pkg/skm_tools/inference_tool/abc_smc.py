"""
ABC rejection sampling and sequential ABC (ABC SMC) on the log-parameter scale.

Candidates are simulated in fixed-size batches. Batch ``b`` of generation ``t``
draws all of its randomness from substreams keyed by ``(root, t, b)``, and
accepted particles are kept in attempt order, so a population depends only on
the seed and the batch size, never on how many workers simulated it.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from . import model_core
from .budget import root_key, stream_seeds, substream
from .conf import get_setting
from .exceptions import ObservationError, PopulationError

logger = logging.getLogger(__name__)

# generation slot of the pilot run's substreams
PILOT_STREAM = 2 ** 31


def _observed_entries(dataset):
    return dataset.mask[None, :] & ~np.isnan(dataset.values)


def _squared_distance(values, data_values, observed):
    diff = np.where(observed, values - data_values, 0.0)
    return (diff ** 2).sum(axis=(-2, -1))


def distance(D, D_star):
    """
    ``rho(D, D*) = sum_t sum_i (d*_it - d_it)^2`` over observed entries.

    No square root is taken, so tolerances are on the squared scale.
    """
    if not D.same_grid(D_star):
        raise ObservationError("Datasets differ in time grid or observation mask")
    observed = _observed_entries(D) & ~np.isnan(D_star.values)
    return float(_squared_distance(D_star.values, D.values, observed))


def _noise_sd(layout, dataset, sigma):
    if layout.infer_sigma:
        return sigma[:, None, None]
    noise_sd = dataset.observation_model.noise_sd
    if noise_sd is None:
        raise ObservationError("Noise sd is neither known nor part of the parameters")
    return noise_sd


def simulate_candidates(net, log_params, layout, dataset, state_prior, keys, executor=None):
    """
    Noisy candidate datasets for a batch of log-parameter rows; charges nothing.

    Initial states, path seeds and measurement noise come from substreams of
    ``keys``. When sigma is inferred each row is corrupted with its own sigma.
    A row whose path fails is set to +inf on the observed species, so it is
    charged but never accepted.

    Returns
    -------
    numpy.ndarray
        k x T x u values, NaN on unobserved species
    """
    log_params = np.atleast_2d(log_params)
    k = log_params.shape[0]
    theta, sigma = layout.split(log_params)
    x0s = state_prior.sample(substream(*keys, 0), k)
    latent = model_core.simulate_paths(
        net,
        theta,
        x0s,
        dataset.relative_times,
        stream_seeds(k, *keys, 1),
        executor,
        strict=False,
    )
    values = model_core.add_noise(
        latent, dataset.mask, _noise_sd(layout, dataset, sigma), substream(*keys, 2)
    )
    failed = (latent < 0).any(axis=(1, 2))
    values[np.ix_(failed, np.ones(latent.shape[1], bool), dataset.mask)] = np.inf
    return values


def simulate_candidate(net, log_params, layout, dataset, state_prior, rng, ledger):
    """One candidate dataset on the grid of ``dataset``; charges one unit"""
    ledger.charge(1)
    values = simulate_candidates(
        net, log_params, layout, dataset, state_prior, (root_key(rng),)
    )[0]
    return model_core.ObservedDataset(
        dataset.times, values, dataset.observation_model, dataset.species_names
    )


@dataclass
class Population:
    """Weighted ABC particles of one generation, all closer than ``tolerance``"""

    particles: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    tolerance: float
    generation: int = 0
    names: list = field(default_factory=list)
    attempts: int = 0
    simulated: int = 0
    budget_mark: int = 0

    def __post_init__(self):
        self.particles = np.array(self.particles, dtype=float, ndmin=2)
        self.weights = np.asarray(self.weights, dtype=float)
        self.distances = np.asarray(self.distances, dtype=float)
        if self.particles.size == 0:
            self.particles = self.particles.reshape(0, len(self.names))
        if not (len(self.particles) == len(self.weights) == len(self.distances)):
            raise PopulationError("Particles, weights and distances must align")
        if self.size:
            if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > 1e-12:
                raise PopulationError("Population weights must be normalised")
            if not (self.distances < self.tolerance).all():
                raise PopulationError("Every particle must lie within the tolerance")

    @property
    def size(self):
        return len(self.weights)

    @property
    def is_empty(self):
        return self.size == 0

    @property
    def acceptance_rate(self):
        return self.size / self.attempts if self.attempts else 0.0

    def mean(self):
        return self.weights @ self.particles

    def variance(self):
        return self.weights @ (self.particles - self.mean()) ** 2

    def to_frame(self):
        frame = pd.DataFrame({"particle": np.arange(self.size)})
        for i, name in enumerate(self.names):
            frame[name] = self.particles[:, i]
        frame["weight"] = self.weights
        frame["distance"] = self.distances
        return frame

    def manifest_entry(self):
        return {
            "generation": self.generation,
            "tolerance": float(self.tolerance),
            "size": self.size,
            "attempts": self.attempts,
            "simulated": self.simulated,
            "acceptance_rate": self.acceptance_rate,
            "cumulative_budget": self.budget_mark,
        }

    @classmethod
    def from_frame(cls, frame, entry):
        names = [c for c in frame.columns if c not in ("particle", "weight", "distance")]
        return cls(
            particles=frame[names].to_numpy(dtype=float),
            weights=frame["weight"].to_numpy(dtype=float),
            distances=frame["distance"].to_numpy(dtype=float),
            tolerance=float(entry["tolerance"]),
            generation=int(entry["generation"]),
            names=names,
            attempts=int(entry.get("attempts", 0)),
            simulated=int(entry.get("simulated", 0)),
            budget_mark=int(entry.get("cumulative_budget", 0)),
        )


@dataclass
class _Draws:
    particles: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    attempts: int = 0
    simulated: int = 0
    complete: bool = False


def _fill_generation(
    net, prior, layout, dataset, state_prior, propose, epsilon, n_accept,
    keys, ledger, executor, batch_size,
):
    """
    Propose, simulate and accept in batches until ``n_accept`` particles are
    within ``epsilon`` or the ledger runs dry.

    Proposals outside the prior support are dropped before anything is charged.
    """
    observed = _observed_entries(dataset)
    draws = _Draws()
    batch = 0
    while len(draws.particles) < n_accept and ledger.remaining > 0:
        proposals = propose(substream(*keys, batch, 3), batch_size)
        supported = proposals[np.isfinite(prior.logpdf(proposals))]
        attempted = batch_size
        if len(supported) > ledger.remaining:
            supported = supported[: ledger.remaining]
        if len(supported):
            ledger.charge(len(supported))
            values = simulate_candidates(
                net, supported, layout, dataset, state_prior, (*keys, batch), executor
            )
            rho = _squared_distance(values, dataset.values[None], observed[None])
            draws.simulated += len(supported)
            for theta, d in zip(supported, rho):
                if d < epsilon:
                    draws.particles.append(theta)
                    draws.distances.append(d)
                    if len(draws.particles) == n_accept:
                        break
        draws.attempts += attempted
        batch += 1
    draws.complete = len(draws.particles) >= n_accept
    return draws


def _prior_proposals(prior):
    def propose(rng, k):
        return np.atleast_2d(prior.sample(rng, k))

    return propose


def _rejection_generation(
    net, prior, layout, dataset, state_prior, epsilon, n_accept, key, ledger, executor, batch_size
):
    if not epsilon > 0:
        raise ValueError("ABC tolerance must be positive")
    draws = _fill_generation(
        net, prior, layout, dataset, state_prior, _prior_proposals(prior), epsilon,
        n_accept, (key, 0), ledger, executor, batch_size,
    )
    size = len(draws.particles)
    if size == 0:
        logger.warning(
            "abc rejection accepted nothing epsilon=%.6g simulated=%d", epsilon, draws.simulated
        )
    elif not draws.complete:
        logger.warning("abc rejection stopped by the budget after %d of %d particles", size, n_accept)
    return Population(
        particles=np.array(draws.particles).reshape(size, layout.dim),
        weights=np.full(size, 1.0 / size) if size else np.empty(0),
        distances=np.array(draws.distances),
        tolerance=epsilon,
        generation=0,
        names=list(layout.names),
        attempts=draws.attempts,
        simulated=draws.simulated,
        budget_mark=ledger.consumed,
    )


def abc_rejection(
    net, prior, layout, dataset, state_prior, epsilon, n_accept, rng, ledger,
    executor=None, batch_size=None,
):
    """
    Rejection ABC at a fixed tolerance.

    Draws parameters from ``prior``, simulates a candidate dataset for each
    and keeps those with ``distance < epsilon``, until ``n_accept`` are kept or
    the budget is spent. Weights are uniform. A run with no acceptances
    returns an empty population and logs a warning.
    """
    return _rejection_generation(
        net, prior, layout, dataset, state_prior, epsilon, n_accept, root_key(rng),
        ledger, executor, batch_size or get_setting("SKM_ABC_BATCH_SIZE"),
    )


def pilot_tolerance(
    net, prior, layout, dataset, state_prior, n_pilot, quantile, rng, ledger,
    executor=None, key=None,
):
    """
    ``epsilon_0`` as the ``quantile`` of prior-predictive distances.

    Charges ``n_pilot`` units, tagged ``pilot``.
    """
    if n_pilot < 100:
        raise ValueError("The pilot run needs at least 100 candidates")
    if not 0 < quantile <= 1:
        raise ValueError("Pilot quantile must lie in (0, 1]")
    key = root_key(rng) if key is None else key
    with ledger.phase("pilot"):
        ledger.charge(n_pilot)
    proposals = prior.sample(substream(key, PILOT_STREAM, 3), n_pilot)
    values = simulate_candidates(
        net, proposals, layout, dataset, state_prior, (key, PILOT_STREAM), executor
    )
    observed = _observed_entries(dataset)
    rho = _squared_distance(values, dataset.values[None], observed[None])
    epsilon = float(np.quantile(rho, quantile))
    logger.info("abc pilot n=%d quantile=%g epsilon0=%.6g", n_pilot, quantile, epsilon)
    return epsilon


@dataclass
class KernelSpec:
    """Gaussian perturbation kernel ``K_t`` on the log parameters"""

    covariance: np.ndarray

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if not (np.diag(cov) > 0).all():
            raise PopulationError("Kernel variances must be strictly positive")
        if np.linalg.eigvalsh(cov).min() < -1e-12 * np.abs(cov).max():
            raise PopulationError("Kernel covariance must be positive semi-definite")
        self.covariance = cov
        self._density = multivariate_normal(
            mean=np.zeros(cov.shape[0]), cov=cov, allow_singular=True
        )

    def perturb(self, centers, rng):
        return centers + rng.multivariate_normal(
            np.zeros(self.covariance.shape[0]), self.covariance, size=len(centers)
        )

    def logpdf(self, frm, to):
        """log K(to | frm), broadcasting over rows of ``frm``"""
        return np.atleast_1d(self._density.logpdf(np.asarray(to) - np.asarray(frm)))


def adaptive_kernel(population):
    """Twice the weighted empirical covariance of the population"""
    if population.size < 2 or np.ptp(population.particles, axis=0).max() == 0:
        raise PopulationError("Kernel needs at least two distinct particles")
    cov = np.cov(
        population.particles.T, aweights=population.weights, bias=True
    )
    return KernelSpec(2.0 * np.atleast_2d(cov))


def smc_log_weight(theta_new, prior, prev, kernel):
    """
    ``log[ pi(theta) / sum_j w_j K(theta | theta_j) ]``; 0 for generation 0.

    An underflowing denominator gives -inf with a warning.
    """
    if prev is None:
        return 0.0
    log_prior = prior.logpdf(theta_new)
    if log_prior == -np.inf:
        raise ValueError("theta_new has zero prior density")
    with np.errstate(divide="ignore"):
        log_w = np.log(prev.weights)
    denominator = logsumexp(log_w + kernel.logpdf(prev.particles, theta_new))
    if denominator == -np.inf:
        logger.warning("smc weight denominator underflowed; weight set to 0")
        return -np.inf
    return float(log_prior - denominator)


def smc_weight(theta_new, prior, prev, kernel):
    return float(np.exp(smc_log_weight(theta_new, prior, prev, kernel)))


def next_tolerance(population, quantile=None):
    """
    Next tolerance as the ``quantile`` of the accepted distances.

    Returns None when no strictly smaller tolerance is available, which ends
    the run.
    """
    quantile = get_setting("SKM_TOLERANCE_QUANTILE") if quantile is None else quantile
    if population.is_empty or np.ptp(population.distances) == 0:
        return None
    epsilon = float(np.quantile(population.distances, quantile))
    if not epsilon < population.tolerance:
        return None
    return epsilon


@dataclass
class AbcConfig:
    """Inputs of ``run_abc_smc``; ``schedule`` replaces the adaptive rule"""

    network: object
    dataset: object
    prior: object
    layout: object
    state_prior: object
    population_size: int = None
    epsilon0: float = None
    quantile: float = None
    pilot_size: int = None
    pilot_quantile: float = None
    schedule: list = None
    max_generations: int = None
    batch_size: int = None

    def __post_init__(self):
        self.population_size = self.population_size or get_setting("SKM_POPULATION_SIZE")
        self.quantile = self.quantile or get_setting("SKM_TOLERANCE_QUANTILE")
        self.pilot_size = self.pilot_size or get_setting("SKM_PILOT_SIZE")
        self.pilot_quantile = self.pilot_quantile or get_setting("SKM_PILOT_QUANTILE")
        self.batch_size = self.batch_size or get_setting("SKM_ABC_BATCH_SIZE")
        if self.population_size < 2:
            raise ValueError("ABC SMC needs at least two particles per population")
        if self.schedule is not None:
            schedule = np.asarray(self.schedule, dtype=float)
            if schedule.size < 1 or np.any(np.diff(schedule) > 0) or not schedule[-1] > 0:
                raise ValueError("Tolerance schedule must be positive and nonincreasing")
            self.schedule = schedule.tolist()


def run_abc_smc(config, rng, ledger, executor=None):
    """
    Sequential ABC through a decreasing tolerance sequence.

    Generation 0 is rejection ABC at ``epsilon0`` (from the pilot rule unless
    given). Each later generation resamples the previous population by weight,
    perturbs with ``adaptive_kernel``, drops prior-unsupported proposals
    before simulating, accepts candidates closer than the current tolerance and
    weights them with ``smc_log_weight``. The run ends when the tolerance
    cannot decrease, the schedule is used up, or the budget cannot finish a
    generation; an unfinished generation is discarded but its spend stays on
    the ledger.

    Returns
    -------
    list
        completed populations in generation order
    """
    cfg = config
    M = cfg.population_size
    key = root_key(rng)
    if cfg.epsilon0 is not None:
        epsilon = cfg.epsilon0
    elif cfg.schedule:
        epsilon = cfg.schedule[0]
    else:
        epsilon = pilot_tolerance(
            cfg.network, cfg.prior, cfg.layout, cfg.dataset, cfg.state_prior,
            cfg.pilot_size, cfg.pilot_quantile, rng, ledger, executor, key=key,
        )
    gen0 = _rejection_generation(
        cfg.network, cfg.prior, cfg.layout, cfg.dataset, cfg.state_prior, epsilon, M,
        key, ledger, executor, cfg.batch_size,
    )
    if gen0.is_empty:
        raise PopulationError(
            f"generation 0 accepted nothing at epsilon={epsilon:.6g} "
            f"(budget spent: {ledger.consumed} units)"
        )
    _log_generation(gen0, ledger)
    populations = [gen0]
    if gen0.size < M:
        return populations

    t = 1
    while ledger.remaining > 0:
        if cfg.max_generations is not None and t >= cfg.max_generations:
            break
        prev = populations[-1]
        if cfg.schedule is not None:
            if t >= len(cfg.schedule):
                break
            epsilon = cfg.schedule[t]
        else:
            epsilon = next_tolerance(prev, cfg.quantile)
            if epsilon is None:
                logger.info("abc tolerance cannot decrease further; stopping at generation %d", t - 1)
                break
        try:
            kernel = adaptive_kernel(prev)
        except PopulationError as exc:
            logger.warning("abc stopping at generation %d: %s", t - 1, exc)
            break

        def propose(stream, k, prev=prev, kernel=kernel):
            picks = stream.choice(prev.size, size=k, p=prev.weights)
            return kernel.perturb(prev.particles[picks], stream)

        draws = _fill_generation(
            cfg.network, cfg.prior, cfg.layout, cfg.dataset, cfg.state_prior, propose,
            epsilon, M, (key, t), ledger, executor, cfg.batch_size,
        )
        if not draws.complete:
            logger.info(
                "abc budget exhausted in generation %d after %d of %d particles; discarded",
                t, len(draws.particles), M,
            )
            break
        particles = np.array(draws.particles)
        log_w = np.array([smc_log_weight(p, cfg.prior, prev, kernel) for p in particles])
        if np.all(log_w == -np.inf):
            raise PopulationError(f"every weight in generation {t} underflowed")
        weights = np.exp(log_w - logsumexp(log_w))
        population = Population(
            particles=particles,
            weights=weights / weights.sum(),
            distances=np.array(draws.distances),
            tolerance=epsilon,
            generation=t,
            names=list(cfg.layout.names),
            attempts=draws.attempts,
            simulated=draws.simulated,
            budget_mark=ledger.consumed,
        )
        _log_generation(population, ledger)
        populations.append(population)
        t += 1
    return populations


def _log_generation(population, ledger):
    logger.info(
        "abc generation=%d epsilon=%.6g acceptance=%.4f consumed=%d",
        population.generation,
        population.tolerance,
        population.acceptance_rate,
        ledger.consumed,
    )
