"""
Exact likelihoods and grid posteriors for networks with a small state space.

The continuous-time Markov chain is truncated to a box of species counts, its
generator is built explicitly and transition probabilities come from
uniformization. These results are the reference that the particle filter and
both samplers are checked against.
"""

import logging
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.integrate import trapezoid
from scipy.special import logsumexp
from scipy.stats import poisson

from . import model_core
from .conf import get_setting
from .exceptions import TruncationError
from .priors import PointMassPrior
from .smc_filter import emission_logdensity

logger = logging.getLogger(__name__)

MAX_UNIFORMIZATION_TERMS = 10 ** 6


@dataclass
class TruncatedStateSpace:
    """States reachable from ``x0`` inside ``bounds``, in lexicographic order"""

    states: np.ndarray
    bounds: np.ndarray
    index: dict = field(repr=False, default_factory=dict)

    @property
    def size(self):
        return self.states.shape[0]

    def ordinal(self, state):
        return self.index[tuple(int(c) for c in state)]


@dataclass
class GeneratorMatrix:
    """
    Sparse CTMC generator over a truncated space.

    ``exit_rates`` holds, per state, the total hazard of reactions that leave
    the truncation; that probability flow is lost.
    """

    matrix: sparse.csr_matrix
    exit_rates: np.ndarray

    @property
    def leaks(self):
        return bool((self.exit_rates > 0).any())

    def toarray(self):
        return self.matrix.toarray()


def _enumerate(net, theta, x0, bounds, cap):
    seen = {tuple(x0)}
    queue = deque([np.asarray(x0, dtype=np.int64)])
    while queue:
        x = queue.popleft()
        h, _ = model_core.evaluate_hazards(net, x, theta)
        for j in np.flatnonzero(h > 0):
            y = x + net.stoichiometry[:, j]
            key = tuple(int(c) for c in y)
            if key in seen or (y > bounds).any():
                continue
            seen.add(key)
            if len(seen) > cap:
                raise TruncationError(
                    f"Truncated state space exceeds the cap of {cap} states"
                )
            queue.append(y)
    return sorted(seen)


def build_generator(net, theta, bounds, x0=None, cap=None):
    """
    Enumerate the truncated state space and build its generator.

    Parameters
    ----------
    net: ReactionNetwork
    theta: array_like
        rate constants (zeros allowed)
    bounds: array_like
        per-species upper bounds; counts run from 0 to the bound
    x0: array_like, optional
        state the enumeration starts from. Default is ``bounds`` itself, which
        covers the usual case of a network that only consumes molecules.
    cap: int, optional
        maximum number of states

    Returns
    -------
    (TruncatedStateSpace, GeneratorMatrix)
    """
    theta = model_core.as_rates(net, theta)
    bounds = model_core.as_state(net, bounds)
    x0 = bounds.copy() if x0 is None else model_core.as_state(net, x0)
    if (x0 > bounds).any():
        raise TruncationError("Bounds must enclose the initial state")
    cap = cap or get_setting("SKM_ORACLE_STATE_CAP")

    ordered = _enumerate(net, theta, x0, bounds, cap)
    space = TruncatedStateSpace(
        states=np.array(ordered, dtype=np.int64).reshape(len(ordered), net.n_species),
        bounds=bounds,
        index={s: i for i, s in enumerate(ordered)},
    )
    gen = _generator_for(net, theta, space)
    if gen.leaks:
        logger.debug("truncation leaks from %d states", int((gen.exit_rates > 0).sum()))
    return space, gen


def _uniformization_weights(rate_t, tol):
    """Poisson(rate_t) weights up to the point where the tail mass is below tol"""
    k_max = int(poisson.isf(tol, rate_t)) + 1 if rate_t > 0 else 0
    if k_max > MAX_UNIFORMIZATION_TERMS:
        raise TruncationError(
            f"Uniformization needs {k_max} terms for tol={tol}; reduce t or the rates"
        )
    weights = poisson.pmf(np.arange(k_max + 1), rate_t)
    if 1.0 - weights.sum() > tol:
        raise TruncationError(f"Uniformization did not reach tol={tol}")
    return weights


def _uniformized(gen):
    rate = float(-gen.matrix.diagonal().min()) if gen.matrix.shape[0] else 0.0
    if rate <= 0:
        return 0.0, None
    jump = sparse.identity(gen.matrix.shape[0], format="csr") + gen.matrix / rate
    return rate, jump.tocsr()


def propagate(dist, gen, t, tol=None):
    """Row vector ``dist`` times ``exp(G t)`` by uniformization"""
    tol = tol or get_setting("SKM_ORACLE_TOL")
    dist = np.asarray(dist, dtype=float)
    rate, jump = _uniformized(gen)
    if t == 0 or jump is None:
        return dist.copy()
    weights = _uniformization_weights(rate * t, tol)
    out = weights[0] * dist
    term = dist
    for w in weights[1:]:
        term = jump.T @ term
        out += w * term
    return out


def transition_probabilities(gen, t, tol=None):
    """
    ``exp(G t)`` for the truncated generator.

    Rows sum to one minus the mass lost through the truncation, within ``tol``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    tol = tol or get_setting("SKM_ORACLE_TOL")
    n = gen.matrix.shape[0]
    rate, jump = _uniformized(gen)
    if t == 0 or jump is None:
        return np.eye(n)
    weights = _uniformization_weights(rate * t, tol)
    dense_jump = jump.toarray()
    out = weights[0] * np.eye(n)
    power = np.eye(n)
    for w in weights[1:]:
        power = power @ dense_jump
        out += w * power
    return out


def exact_likelihood(
    net, theta, dataset, bounds, state_prior=None, x0=None, sigma=None, tol=None, max_lost=None
):
    """
    ``log pi(D | theta)`` by the forward algorithm on the truncated chain.

    Parameters
    ----------
    net: ReactionNetwork
    theta: array_like
    dataset: ObservedDataset
        Gaussian observations with known (or supplied) sigma
    bounds: array_like
        per-species truncation bounds
    state_prior: optional
        initial-state prior with a ``logpmf``; default is a point mass at ``x0``
    x0: array_like, optional
        start of the enumeration and of the default point-mass prior.
        Default is ``bounds``.

    Raises
    ------
    TruncationError
        when more than ``max_lost`` probability leaves the truncation
    """
    tol = tol or get_setting("SKM_ORACLE_TOL")
    max_lost = max_lost or get_setting("SKM_ORACLE_LOST_MASS")
    model = dataset.observation_model
    if sigma is None and not model.sigma_known:
        raise ValueError("Exact likelihood needs a known noise sd")
    bounds = model_core.as_state(net, bounds)
    x0 = bounds.copy() if x0 is None else model_core.as_state(net, x0)
    state_prior = state_prior or PointMassPrior(x0)

    if isinstance(state_prior, PointMassPrior):
        space, gen = build_generator(net, theta, bounds, state_prior.x0)
    else:
        space, gen = _full_box(net, theta, bounds)
    log_prior = state_prior.logpmf(space.states)
    lost = 1.0 - float(np.exp(logsumexp(log_prior))) if np.isfinite(log_prior).any() else 1.0

    log_alpha = log_prior + emission_logdensity(dataset.values[0], space.states, model, sigma)
    step = logsumexp(log_alpha)
    log_total = step
    times = dataset.times
    for t in range(1, dataset.n_times):
        if step == -np.inf:
            return -np.inf
        # filtered distribution at t-1, normalised
        alpha = np.exp(log_alpha - step)
        predicted = propagate(alpha, gen, times[t] - times[t - 1], tol)
        lost += 1.0 - predicted.sum()
        with np.errstate(divide="ignore"):
            log_alpha = np.log(np.clip(predicted, 0.0, None)) + emission_logdensity(
                dataset.values[t], space.states, model, sigma
            )
        step = logsumexp(log_alpha)
        log_total += step
    if log_total == -np.inf:
        return -np.inf
    if lost > max_lost:
        raise TruncationError(
            f"Truncation lost {lost:.3g} of the probability mass (limit {max_lost})"
        )
    return float(log_total)


def _full_box(net, theta, bounds):
    """Every state in the box, for priors that spread over many starting points"""
    grids = np.meshgrid(*[np.arange(b + 1) for b in bounds], indexing="ij")
    states = np.stack([g.ravel() for g in grids], axis=1)
    cap = get_setting("SKM_ORACLE_STATE_CAP")
    if states.shape[0] > cap:
        raise TruncationError(f"Box holds {states.shape[0]} states, cap is {cap}")
    ordered = sorted({tuple(int(c) for c in s) for s in states})
    space = TruncatedStateSpace(
        states=np.array(ordered, dtype=np.int64),
        bounds=np.asarray(bounds),
        index={s: i for i, s in enumerate(ordered)},
    )
    return space, _generator_for(net, theta, space)


def _generator_for(net, theta, space):
    theta = model_core.as_rates(net, theta)
    rows, cols, vals = [], [], []
    exit_rates = np.zeros(space.size)
    for a, x in enumerate(space.states):
        h, _ = model_core.evaluate_hazards(net, x, theta)
        for j in np.flatnonzero(h > 0):
            b = space.index.get(tuple(int(c) for c in x + net.stoichiometry[:, j]))
            if b is None:
                exit_rates[a] += h[j]
            elif b != a:
                rows.append(a)
                cols.append(b)
                vals.append(h[j])
    n = space.size
    off = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    diag = -(np.asarray(off.sum(axis=1)).ravel() + exit_rates)
    return GeneratorMatrix((off + sparse.diags(diag)).tocsr(), exit_rates)


@dataclass
class GridPosterior:
    """Posterior of one log parameter tabulated on a sorted grid"""

    grid: np.ndarray
    density: np.ndarray
    weights: np.ndarray
    log_likelihood: np.ndarray = None

    @property
    def mean(self):
        return float(np.sum(self.weights * self.grid))

    @property
    def sd(self):
        return float(np.sqrt(np.sum(self.weights * (self.grid - self.mean) ** 2)))

    def cdf(self, x):
        return np.interp(x, self.grid, np.cumsum(self.weights), left=0.0, right=1.0)


def _trapezoid_widths(grid):
    widths = np.zeros_like(grid)
    gaps = np.diff(grid)
    widths[:-1] += gaps / 2
    widths[1:] += gaps / 2
    return widths


def grid_posterior_from_loglik(grid, log_likelihood, log_prior):
    """
    Normalise ``likelihood x prior`` on ``grid`` by the trapezoidal rule.

    Invariant under adding a constant to ``log_likelihood``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("Grid must be sorted with at least two points")
    log_post = np.asarray(log_likelihood, dtype=float) + np.asarray(log_prior, dtype=float)
    if not np.isfinite(log_post).any():
        raise TruncationError("All grid weights underflow; the grid misses the posterior")
    unnormalized = np.exp(log_post - np.max(log_post[np.isfinite(log_post)]))
    area = trapezoid(unnormalized, grid)
    if not area > 0:
        # all mass on one point; treat it as a unit-weight cell
        weights = (unnormalized > 0).astype(float)
        weights /= weights.sum()
        return GridPosterior(grid, weights / _safe_widths(grid, weights), weights)
    density = unnormalized / area
    weights = density * _trapezoid_widths(grid)
    return GridPosterior(grid, density, weights / weights.sum())


def _safe_widths(grid, weights):
    widths = _trapezoid_widths(grid)
    return np.where(weights > 0, widths, 1.0)


def grid_posterior(
    net,
    dataset,
    log_prior,
    grid,
    bounds,
    theta_of=None,
    state_prior=None,
    x0=None,
):
    """
    Exact posterior of a single free log parameter on ``grid``.

    Parameters
    ----------
    log_prior: callable
        log prior density of the scalar log parameter (vectorised)
    grid: array_like
        sorted values of the log parameter
    theta_of: callable, optional
        maps a log-parameter value to the full rate vector. Default exponentiates
        it, for single-reaction networks.
    """
    theta_of = theta_of or (lambda value: np.exp(np.atleast_1d(value)))
    grid = np.asarray(grid, dtype=float)
    loglik = np.array(
        [
            exact_likelihood(net, theta_of(value), dataset, bounds, state_prior, x0)
            for value in grid
        ]
    )
    post = grid_posterior_from_loglik(grid, loglik, log_prior(grid))
    post.log_likelihood = loglik
    return post


def ks_distance(samples, weights, posterior):
    """Kolmogorov-Smirnov distance between a weighted sample and a grid posterior"""
    samples = np.asarray(samples, dtype=float)
    weights = np.ones_like(samples) if weights is None else np.asarray(weights, dtype=float)
    order = np.argsort(samples)
    xs = samples[order]
    cum = np.cumsum(weights[order]) / weights.sum()
    before = np.concatenate([[0.0], cum[:-1]])
    ref = posterior.cdf(xs)
    return float(max(np.max(np.abs(cum - ref)), np.max(np.abs(before - ref))))
