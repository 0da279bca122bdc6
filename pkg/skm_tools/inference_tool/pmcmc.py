"""
Pseudo-marginal random-walk Metropolis-Hastings with bootstrap filter estimates.

The likelihood estimate of the current state is computed once, when the state
is accepted, and then reused; recomputing it would break the exactness of the
pseudo-marginal chain.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular

from .budget import substream
from .exceptions import BudgetExhausted, HazardOverflowError, ProposalError
from .smc_filter import bootstrap_filter, tune_particle_count

logger = logging.getLogger(__name__)

OPTIMAL_SCALE = 2.38 ** 2


@dataclass
class ChainState:
    """Current log parameters with the estimate computed when they were accepted"""

    log_theta: np.ndarray
    cached_log_estimate: float
    log_prior: float = 0.0


@dataclass
class ProposalSpec:
    """Gaussian random-walk proposal covariance and its Cholesky factor"""

    covariance: np.ndarray
    cholesky: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        if cov.shape[0] != cov.shape[1]:
            raise ProposalError("Proposal covariance must be square")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
            raise ProposalError("Proposal covariance must be symmetric")
        try:
            self.cholesky = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ProposalError("Proposal covariance is not positive-definite") from exc
        self.covariance = cov

    @property
    def dim(self):
        return self.covariance.shape[0]

    def propose(self, current, rng):
        return current + self.cholesky @ rng.standard_normal(self.dim)

    def logpdf(self, to, frm):
        """log q(to | frm)"""
        z = solve_triangular(self.cholesky, np.asarray(to) - np.asarray(frm), lower=True)
        log_det = 2.0 * np.log(np.diag(self.cholesky)).sum()
        return float(-0.5 * (z @ z) - 0.5 * log_det - 0.5 * self.dim * np.log(2 * np.pi))


def scale_proposal(posterior_cov, d=None):
    """``Sigma_q = (2.38^2 / sqrt(d)) Sigma``"""
    cov = np.atleast_2d(np.asarray(posterior_cov, dtype=float))
    d = d or cov.shape[0]
    return ProposalSpec(OPTIMAL_SCALE / np.sqrt(d) * cov)


def acceptance_log_ratio(current, proposal, log_prior, proposal_logpdf=None):
    """
    Log Metropolis-Hastings ratio with likelihood estimates in place of the
    likelihood.

    ``proposal_logpdf(to, frm)`` is only needed for asymmetric kernels; for
    the symmetric random walk the q terms cancel. A proposal outside the prior
    support, or with a -inf estimate, gives -inf.
    """
    prior_new = log_prior(proposal.log_theta)
    if prior_new == -np.inf or proposal.cached_log_estimate == -np.inf:
        return -np.inf
    prior_old = log_prior(current.log_theta)
    ratio = (proposal.cached_log_estimate + prior_new) - (
        current.cached_log_estimate + prior_old
    )
    if proposal_logpdf is not None:
        ratio += proposal_logpdf(current.log_theta, proposal.log_theta) - proposal_logpdf(
            proposal.log_theta, current.log_theta
        )
    return -np.inf if np.isnan(ratio) else float(ratio)


@dataclass
class ChainTrace:
    """Every iteration of a chain with the ledger reading after it"""

    samples: np.ndarray
    log_estimates: np.ndarray
    accepted: np.ndarray
    budget_marks: np.ndarray
    names: list
    iterations: np.ndarray = None

    def __post_init__(self):
        if self.iterations is None:
            self.iterations = np.arange(len(self.log_estimates))
        lengths = {len(self.samples), len(self.log_estimates), len(self.accepted), len(self.budget_marks)}
        if len(lengths) != 1:
            raise ValueError("Trace columns must have equal lengths")

    def __len__(self):
        return len(self.log_estimates)

    @property
    def acceptance_count(self):
        return int(np.sum(self.accepted))

    @property
    def acceptance_rate(self):
        return self.acceptance_count / max(len(self), 1)

    def to_frame(self):
        frame = pd.DataFrame(
            {"iteration": self.iterations, "cumulative_budget": self.budget_marks}
        )
        for i, name in enumerate(self.names):
            frame[name] = self.samples[:, i]
        frame["log_estimate"] = self.log_estimates
        frame["accepted"] = self.accepted.astype(int)
        return frame

    @classmethod
    def from_frame(cls, frame):
        names = [c for c in frame.columns if c.startswith("log_") and c != "log_estimate"]
        return cls(
            samples=frame[names].to_numpy(dtype=float),
            log_estimates=frame["log_estimate"].to_numpy(dtype=float),
            accepted=frame["accepted"].to_numpy().astype(bool),
            budget_marks=frame["cumulative_budget"].to_numpy(dtype=np.int64),
            names=names,
            iterations=frame["iteration"].to_numpy(dtype=np.int64),
        )

    def upto(self, budget_mark):
        """Samples recorded while at most ``budget_mark`` units had been used"""
        keep = self.budget_marks <= budget_mark
        return self.select(np.flatnonzero(keep))

    def select(self, idx):
        return ChainTrace(
            self.samples[idx],
            self.log_estimates[idx],
            self.accepted[idx],
            self.budget_marks[idx],
            self.names,
            self.iterations[idx],
        )


@dataclass
class ChainConfig:
    """Everything ``run_chain`` needs besides the random stream and the ledger"""

    network: object
    dataset: object
    prior: object
    layout: object
    state_prior: object
    theta0: np.ndarray
    n_particles: int
    proposal: ProposalSpec
    max_iterations: int = None
    resampler: str = "multinomial"
    log_every: int = 1000


def run_chain(config, rng, ledger, executor=None):
    """
    Run the pseudo-marginal chain until the ledger cannot fund another filter.

    Each iteration proposes a Gaussian step on the log parameters, estimates
    the likelihood at the proposal (charging ``n_particles`` units) and accepts
    with the pseudo-marginal Metropolis-Hastings probability. A proposal outside
    the prior support is charged the same units but not simulated. The estimate
    at ``theta0`` is iteration 0.
    """
    n = int(config.n_particles)
    log_prior = config.prior.logpdf
    theta0 = np.asarray(config.theta0, dtype=float)
    if log_prior(theta0) == -np.inf:
        raise ValueError("theta0 lies outside the prior support")
    if not ledger.can_afford(n):
        raise BudgetExhausted(n, ledger.remaining, ledger.consumed)
    if config.proposal.dim != theta0.size:
        raise ProposalError("Proposal dimension does not match theta0")

    def estimate(log_params, stream):
        theta, sigma = config.layout.split(log_params)
        try:
            result = bootstrap_filter(
                config.network,
                theta,
                config.dataset,
                n,
                config.state_prior,
                stream,
                ledger,
                sigma=sigma,
                resampler=config.resampler,
                executor=executor,
            )
        except HazardOverflowError as exc:
            logger.debug("proposal rejected: %s", exc)
            return -np.inf
        return result.log_value

    filter_rng = substream(int(rng.integers(0, 2 ** 63 - 1)), 1)
    move_rng = substream(int(rng.integers(0, 2 ** 63 - 1)), 2)
    current = ChainState(theta0, estimate(theta0, filter_rng), log_prior(theta0))
    samples = [current.log_theta]
    estimates = [current.cached_log_estimate]
    accepted = [True]
    marks = [ledger.consumed]

    while ledger.can_afford(n):
        if config.max_iterations is not None and len(samples) >= config.max_iterations:
            break
        log_theta = config.proposal.propose(current.log_theta, move_rng)
        if log_prior(log_theta) == -np.inf:
            # charged like a filter call, never simulated
            ledger.charge(n)
            proposal = ChainState(log_theta, -np.inf)
        else:
            proposal = ChainState(log_theta, estimate(log_theta, filter_rng))
        log_alpha = acceptance_log_ratio(current, proposal, log_prior)
        move = np.log(move_rng.random()) < log_alpha
        if move:
            proposal.log_prior = log_prior(log_theta)
            current = proposal
        samples.append(current.log_theta)
        estimates.append(current.cached_log_estimate)
        accepted.append(bool(move))
        marks.append(ledger.consumed)
        if len(samples) % config.log_every == 0:
            logger.info(
                "pmcmc iteration=%d acceptance=%.3f consumed=%d",
                len(samples),
                np.mean(accepted),
                ledger.consumed,
            )
    return ChainTrace(
        np.array(samples),
        np.array(estimates),
        np.array(accepted),
        np.array(marks, dtype=np.int64),
        list(config.layout.names),
    )


def _autocorrelation(x):
    n = x.size
    centered = x - x.mean()
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    spectrum = np.fft.rfft(centered, size)
    acov = np.fft.irfft(spectrum * np.conjugate(spectrum), size)[:n]
    return acov / acov[0]


def compute_ess(values):
    """
    Effective sample size ``n / (1 + 2 sum rho_k)`` of one coordinate.

    Autocorrelations are summed in adjacent pairs until a pair turns
    nonpositive, and the pair sums are forced to be nonincreasing (initial
    monotone sequence). A constant chain has ESS 1; the result is capped at n.
    """
    x = np.asarray(values, dtype=float)
    n = x.size
    if n < 10:
        raise ValueError("ESS needs at least 10 samples")
    if np.ptp(x) == 0:
        return 1.0
    rho = _autocorrelation(x)
    pairs = rho[: 2 * (n // 2)].reshape(-1, 2).sum(axis=1)
    total = 0.0
    running_min = np.inf
    for gamma in pairs:
        if gamma <= 0:
            break
        running_min = min(running_min, gamma)
        total += running_min
    tau = -1.0 + 2.0 * total
    if tau <= 0:
        return float(n)
    return float(min(n / tau, n))


def thin_chain(trace, target_size):
    """Evenly strided subsample ``floor(i (L - 1) / (k - 1))`` of ``target_size``"""
    length = len(trace)
    if target_size <= 0:
        raise ValueError("target_size must be positive")
    if target_size > length:
        raise ValueError(f"Cannot thin {length} samples to {target_size}")
    if target_size == 1:
        return trace.select(np.array([0]))
    i = np.arange(target_size)
    return trace.select((i * (length - 1)) // (target_size - 1))


@dataclass
class ChainTuning:
    """Starting point, particle count and proposal for a chain, with their cost"""

    theta0: np.ndarray
    n_particles: int
    proposal: ProposalSpec
    mode: str
    consumed: int = 0

    def to_dict(self):
        return {
            "mode": self.mode,
            "theta0": self.theta0.tolist(),
            "n_particles": int(self.n_particles),
            "proposal_covariance": self.proposal.covariance.tolist(),
            "consumed": int(self.consumed),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            np.asarray(data["theta0"], dtype=float),
            int(data["n_particles"]),
            ProposalSpec(np.asarray(data["proposal_covariance"], dtype=float)),
            data.get("mode", "posterior"),
            int(data.get("consumed", 0)),
        )


def _tune_particles(network, dataset, layout, state_prior, theta0, rng, ledger, executor, band):
    theta, sigma = layout.split(theta0)
    return tune_particle_count(
        network, theta, dataset, state_prior, rng, ledger, band=band, sigma=sigma, executor=executor
    )


def tune_from_posterior(
    network, dataset, layout, state_prior, theta0, posterior_cov, rng, ledger, executor=None, band=None
):
    """
    Tuning from knowledge of the posterior: ``theta0`` is a posterior draw and
    ``posterior_cov`` its covariance. Only the particle count is searched.
    """
    start = ledger.consumed
    with ledger.phase("tuning"):
        n = _tune_particles(network, dataset, layout, state_prior, theta0, rng, ledger, executor, band)
    return ChainTuning(
        np.asarray(theta0, dtype=float),
        n,
        scale_proposal(posterior_cov),
        "posterior",
        ledger.consumed - start,
    )


def tune_from_population(
    network, dataset, layout, state_prior, population, rng, ledger, executor=None, band=None
):
    """
    Tuning informed by an ABC SMC population: ``theta0`` is a weighted draw
    from it and the proposal is scaled from its weighted covariance.
    """
    start = ledger.consumed
    pick = rng.choice(population.size, p=population.weights)
    theta0 = population.particles[pick]
    cov = np.atleast_2d(np.cov(population.particles.T, aweights=population.weights))
    with ledger.phase("tuning"):
        n = _tune_particles(network, dataset, layout, state_prior, theta0, rng, ledger, executor, band)
    return ChainTuning(theta0, n, scale_proposal(cov), "population", ledger.consumed - start)


def tune_cold_start(
    network,
    dataset,
    layout,
    prior,
    state_prior,
    rng,
    ledger,
    n_candidates=100,
    repeats=3,
    search_particles=200,
    pilot_iterations=500,
    executor=None,
    band=None,
):
    """
    Tuning with no posterior knowledge, all spend tagged ``tuning``.

    Draws ``n_candidates`` vectors from the prior, averages ``repeats`` filter
    estimates with ``search_particles`` particles for each and keeps the best;
    tunes N there; runs a pilot chain with a prior-scaled proposal and rescales
    its sample covariance.
    """
    start = ledger.consumed
    with ledger.phase("tuning"):
        candidates = prior.sample(rng, n_candidates)
        scores = np.empty(n_candidates)
        for i, candidate in enumerate(candidates):
            theta, sigma = layout.split(candidate)
            try:
                estimates = [
                    bootstrap_filter(
                        network, theta, dataset, search_particles, state_prior, rng, ledger,
                        sigma=sigma, executor=executor,
                    ).log_value
                    for _ in range(repeats)
                ]
            except HazardOverflowError:
                estimates = [-np.inf]
            scores[i] = np.mean(estimates)
        theta0 = candidates[int(np.argmax(scores))]
        logger.info("cold start theta0=%s score=%.4g", np.round(theta0, 4).tolist(), scores.max())
        n = _tune_particles(network, dataset, layout, state_prior, theta0, rng, ledger, executor, band)
        pilot_cov = np.diag((0.1 * prior.std()) ** 2)
        pilot = run_chain(
            ChainConfig(
                network, dataset, prior, layout, state_prior, theta0, n,
                ProposalSpec(pilot_cov), max_iterations=pilot_iterations,
            ),
            rng,
            ledger,
            executor,
        )
    cov = np.atleast_2d(np.cov(pilot.samples.T))
    if not np.all(np.linalg.eigvalsh(cov) > 0):
        logger.warning("pilot chain covariance is singular; keeping the pilot proposal")
        cov = pilot_cov
    return ChainTuning(
        pilot.samples[-1], n, scale_proposal(cov), "cold", ledger.consumed - start
    )
