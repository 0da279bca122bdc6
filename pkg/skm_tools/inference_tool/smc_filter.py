"""
Bootstrap particle filter and the particle-count tuning rule.

The filter returns an unbiased estimate of the likelihood (on the log scale),
which is all the pseudo-marginal sampler in ``pmcmc`` needs.
"""

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import norm

from . import model_core
from .budget import root_key, stream_seeds, substream
from .conf import get_setting
from .exceptions import BudgetExhausted, ObservationError, ParticleTuningError

logger = logging.getLogger(__name__)


@dataclass
class ParticleSet:
    """N weighted particles ``(x_t^i, pi_t^i)``"""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.states = np.atleast_2d(self.states)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.states.shape[0] < 1:
            raise ValueError("A particle set needs at least one particle")
        if self.weights.shape != (self.states.shape[0],):
            raise ValueError("One weight per particle is required")
        if (self.weights < 0).any() or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError("Particle weights must be nonnegative and sum to 1")

    @property
    def size(self):
        return self.states.shape[0]

    @classmethod
    def from_log_weights(cls, states, log_weights):
        log_weights = np.asarray(log_weights, dtype=float)
        weights = np.exp(log_weights - logsumexp(log_weights))
        return cls(states, weights / weights.sum())


@dataclass
class LogLikEstimate:
    """``log pi_hat(D | theta)`` and its per-observation factors"""

    log_value: float
    per_observation_terms: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def is_rejection(self):
        return self.log_value == -np.inf

    def to_json(self):
        """Diagnostic dump of the per-observation terms"""
        return json.dumps(
            {
                "log_value": _json_float(self.log_value),
                "per_observation_terms": [
                    _json_float(v) for v in self.per_observation_terms
                ],
            },
            indent=2,
        )


def _json_float(value):
    value = float(value)
    return value if np.isfinite(value) else repr(value)


def emission_logdensity(d_t, x, model, sigma=None):
    """
    Gaussian log density of one observation row given latent state(s).

    Parameters
    ----------
    d_t: array_like
        observation row of length u; NaN marks an unobserved entry
    x: array_like
        one state (u,) or many states (n x u)
    model: ObservationModel
    sigma: float, optional
        noise standard deviation when it is being inferred; defaults to the
        model's known value

    Returns
    -------
    float or numpy.ndarray
        one log density per state; missing entries contribute 0
    """
    sigma = model.noise_sd if sigma is None else sigma
    if sigma is None or not sigma > 0:
        raise ObservationError("Emission density needs a positive sigma")
    d_t = np.asarray(d_t, dtype=float)
    observed = np.asarray(model.observed_mask) & ~np.isnan(d_t)
    x = np.asarray(x, dtype=float)
    terms = norm.logpdf(d_t[observed], loc=x[..., observed], scale=sigma)
    return terms.sum(axis=-1)


def multinomial_resample(weights, n, rng):
    """``n`` i.i.d. ancestor indices drawn from the categorical ``weights``"""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        raise ValueError("Cannot resample when all weights are zero")
    cumulative = np.cumsum(weights / total)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, rng.random(n), side="right")


def systematic_resample(weights, n, rng):
    """Low-variance alternative: one uniform offset, ``n`` evenly spaced points"""
    weights = np.asarray(weights, dtype=float)
    total = weights.sum()
    if not total > 0:
        raise ValueError("Cannot resample when all weights are zero")
    cumulative = np.cumsum(weights / total)
    cumulative[-1] = 1.0
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cumulative, positions, side="right")


RESAMPLERS = {
    "multinomial": multinomial_resample,
    "systematic": systematic_resample,
}


def bootstrap_filter(
    net,
    theta,
    dataset,
    n_particles,
    state_prior,
    rng,
    ledger,
    sigma=None,
    resampler="multinomial",
    executor=None,
):
    """
    Unbiased likelihood estimate by the bootstrap particle filter.

    Particles start from ``state_prior``, are weighted by the emission density
    of ``d_0`` and then, for every observation interval, resampled, propagated
    by the Direct method and reweighted. One particle's path over the whole
    observation window costs one budget unit, so a call charges ``n_particles``
    up front and fails before simulating anything if the ledger cannot pay.

    Parameters
    ----------
    net: ReactionNetwork
    theta: array_like
        rate constants
    dataset: ObservedDataset
    n_particles: int
    state_prior: PointMassPrior or PoissonStatePrior
    rng: numpy.random.Generator
    ledger: BudgetLedger
    sigma: float, optional
        noise sd when it is inferred together with theta
    resampler: str, optional
        "multinomial" (default) or "systematic"
    executor: optional
        worker pool from ``budget.worker_pool``

    Returns
    -------
    LogLikEstimate
        ``log_value`` is -inf when every particle gets zero weight
    """
    n = int(n_particles)
    if n < 1:
        raise ValueError("The filter needs at least one particle")
    theta = model_core.as_rates(net, theta)
    model = dataset.observation_model
    resample = RESAMPLERS[resampler]
    ledger.charge(n)
    key = root_key(rng)

    states = state_prior.sample(substream(key, 0), n)
    log_w = emission_logdensity(dataset.values[0], states, model, sigma)
    terms = [logsumexp(log_w) - np.log(n)]
    times = dataset.times
    for t in range(1, dataset.n_times):
        if terms[-1] == -np.inf:
            break
        ancestors = resample(np.exp(log_w - log_w.max()), n, substream(key, t))
        states = model_core.simulate_paths(
            net,
            theta,
            states[ancestors],
            [times[t] - times[t - 1]],
            stream_seeds(n, key, t, 1),
            executor,
        )[:, 0, :]
        log_w = emission_logdensity(dataset.values[t], states, model, sigma)
        terms.append(logsumexp(log_w) - np.log(n))
    terms = np.asarray(terms)
    if terms[-1] == -np.inf:
        return LogLikEstimate(-np.inf, terms)
    return LogLikEstimate(float(terms.sum()), terms)


def loglik_variance(
    net, theta, dataset, n_particles, reps, state_prior, rng, ledger, sigma=None, executor=None
):
    """
    Sample variance of ``reps`` independent log-likelihood estimates.

    Charges ``reps * n_particles`` units. Any -inf estimate makes the variance
    undefined, reported as +inf.
    """
    if reps < 2:
        raise ValueError("At least two repetitions are needed for a variance")
    values = np.array(
        [
            bootstrap_filter(
                net,
                theta,
                dataset,
                n_particles,
                state_prior,
                rng,
                ledger,
                sigma=sigma,
                executor=executor,
            ).log_value
            for _ in range(reps)
        ]
    )
    if not np.isfinite(values).all():
        return np.inf
    return float(np.var(values, ddof=1))


def tune_particle_count(
    net,
    theta0,
    dataset,
    state_prior,
    rng,
    ledger,
    band=None,
    sigma=None,
    reps=None,
    start=None,
    max_particles=None,
    executor=None,
):
    """
    Smallest-effort particle count whose log-likelihood variance falls in ``band``.

    Doubles N from ``start`` until the variance drops below the band's upper
    edge, then bisects between the last two counts. When the variance at
    ``start`` is already below the band, bisects downward over ``[1, start]``
    instead. Every filter run is charged to ``ledger``.

    Raises
    ------
    ParticleTuningError
        when the budget runs out or N would exceed ``max_particles``
    """
    lo, hi = band or get_setting("SKM_TUNING_BAND")
    if not lo < hi:
        raise ValueError(f"Invalid variance band ({lo}, {hi})")
    reps = reps or get_setting("SKM_TUNING_REPS")
    n = start or get_setting("SKM_TUNING_START")
    max_particles = max_particles or get_setting("SKM_MAX_PARTICLES")

    def measure(count):
        try:
            var = loglik_variance(
                net, theta0, dataset, count, reps, state_prior, rng, ledger, sigma, executor
            )
        except BudgetExhausted as exc:
            raise ParticleTuningError(
                f"budget exhausted while measuring N={count}", ledger.consumed
            ) from exc
        logger.info("particle tuning N=%d var=%.4g consumed=%d", count, var, ledger.consumed)
        return var

    var = measure(n)
    if lo < var < hi:
        return n
    if var <= lo:
        if var <= 0:
            logger.warning("variance is zero at N=%d; fewer particles cannot help", n)
            return n
        # zero particles always count as too few
        too_few = 0
    else:
        while True:
            too_few = n
            if 2 * n > max_particles:
                raise ParticleTuningError(
                    f"variance {var:.4g} still above {hi} at the cap N={max_particles}",
                    ledger.consumed,
                )
            n *= 2
            var = measure(n)
            if lo < var < hi:
                return n
            if var <= lo:
                break

    # bisection between too_few (variance above band) and n (below band)
    enough = n
    while enough - too_few > 1:
        mid = (too_few + enough) // 2
        var = measure(mid)
        if lo < var < hi:
            return mid
        if var >= hi:
            too_few = mid
        else:
            enough = mid
    logger.warning("no N hit the band exactly; using N=%d", enough)
    return enough
