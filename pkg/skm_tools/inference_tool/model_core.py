"""
Reaction networks, mass-action hazards and exact simulation by the Direct method.

The simulator kernel is compiled with numba and draws its random numbers from
numba's own generator, which is reseeded for every path from a seed supplied
by the caller. A path is therefore a pure function of (network, rates, initial
state, seed), whichever process runs it.
"""

import enum
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit
from scipy.special import comb

from .budget import chunk_bounds, SerialExecutor
from .conf import get_setting
from .exceptions import (
    HazardOverflowError,
    NetworkError,
    ObservationError,
    SimulationError,
)

logger = logging.getLogger(__name__)

STATUS_OK = 0
STATUS_OVERFLOW = 1
STATUS_NEGATIVE = 2
STATUS_RUNAWAY = 3


class HazardKind(enum.Enum):
    MASS_ACTION = "mass-action"


@dataclass(frozen=True)
class ReactionNetwork:
    """
    Species/reaction structure of a stochastic kinetic model.

    ``reactants`` (P) and ``products`` (Q) are v x u matrices, one row per
    reaction. The stoichiometry matrix S = (Q - P)' has one column per reaction.
    """

    species_names: tuple
    reactants: np.ndarray
    products: np.ndarray
    stoichiometry: np.ndarray
    hazard_kind: HazardKind = HazardKind.MASS_ACTION
    reaction_names: tuple = ()

    @property
    def n_species(self):
        return len(self.species_names)

    @property
    def n_reactions(self):
        return self.reactants.shape[0]

    def to_dict(self):
        reactions = []
        for i in range(self.n_reactions):
            entry = {
                "reactants": _row_to_counts(self.reactants[i], self.species_names),
                "products": _row_to_counts(self.products[i], self.species_names),
            }
            if self.reaction_names:
                entry["name"] = self.reaction_names[i]
            reactions.append(entry)
        return {"species": list(self.species_names), "reactions": reactions}


def build_network(P, Q, names, reaction_names=None):
    """
    Build a mass-action network from its reactant and product matrices.

    Parameters
    ----------
    P: array_like
        v x u reactant coefficients
    Q: array_like
        v x u product coefficients
    names: list
        species identifiers, length u
    """
    P = np.atleast_2d(np.asarray(P))
    Q = np.atleast_2d(np.asarray(Q))
    if P.shape != Q.shape:
        raise NetworkError(f"P has shape {P.shape} but Q has shape {Q.shape}")
    if P.ndim != 2 or P.shape[0] < 1 or P.shape[1] < 1:
        raise NetworkError("A network needs at least one reaction and one species")
    if len(names) != P.shape[1]:
        raise NetworkError(
            f"{len(names)} species names given for {P.shape[1]} species"
        )
    for matrix in (P, Q):
        if not np.all(np.equal(np.mod(matrix, 1), 0)):
            raise NetworkError("Stoichiometric coefficients must be integers")
    P = P.astype(np.int64)
    Q = Q.astype(np.int64)
    if (P < 0).any() or (Q < 0).any():
        raise NetworkError("Stoichiometric coefficients must be nonnegative")
    if reaction_names is not None and len(reaction_names) != P.shape[0]:
        raise NetworkError("One name per reaction is required")
    S = np.ascontiguousarray((Q - P).T)
    return ReactionNetwork(
        species_names=tuple(names),
        reactants=np.ascontiguousarray(P),
        products=np.ascontiguousarray(Q),
        stoichiometry=S,
        hazard_kind=HazardKind.MASS_ACTION,
        reaction_names=tuple(reaction_names or ()),
    )


def network_from_dict(data):
    """Network from the JSON model definition (``species`` + ``reactions``)"""
    try:
        names = list(data["species"])
        reactions = list(data["reactions"])
    except (KeyError, TypeError) as exc:
        raise NetworkError(f"Model definition is missing {exc}") from exc
    if len(set(names)) != len(names):
        raise NetworkError("Species names must be unique")
    index = {name: j for j, name in enumerate(names)}
    P = np.zeros((len(reactions), len(names)), dtype=np.int64)
    Q = np.zeros_like(P)
    reaction_names = []
    for i, reaction in enumerate(reactions):
        for matrix, key in ((P, "reactants"), (Q, "products")):
            for species, count in (reaction.get(key) or {}).items():
                if species not in index:
                    raise NetworkError(
                        f"Reaction {i + 1} refers to unknown species {species!r}"
                    )
                matrix[i, index[species]] = count
        reaction_names.append(reaction.get("name", f"R{i + 1}"))
    return build_network(P, Q, names, reaction_names)


def load_network_file(path):
    with open(Path(path)) as f:
        data = json.load(f)
    return network_from_dict(data), data


def _row_to_counts(row, names):
    return {names[j]: int(c) for j, c in enumerate(row) if c}


@dataclass(frozen=True)
class RateParameters:
    """Per-reaction rate constants; samplers work with ``log_theta``"""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        if (theta <= 0).any() or not np.isfinite(theta).all():
            raise ValueError("Rate constants must be positive and finite")
        object.__setattr__(self, "theta", theta)

    @classmethod
    def from_log(cls, log_theta):
        return cls(np.exp(np.asarray(log_theta, dtype=float)))

    @property
    def log_theta(self):
        return np.log(self.theta)


def as_rates(net, theta):
    """Validate a rate vector against ``net``; zeros are allowed"""
    theta = getattr(theta, "theta", theta)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (net.n_reactions,):
        raise ValueError(
            f"Expected {net.n_reactions} rate constants, got {theta.shape[0]}"
        )
    if (theta < 0).any():
        raise ValueError("Rate constants must be nonnegative")
    return theta


def as_state(net, x):
    """Validate a species-count vector (a ``SpeciesState``) against ``net``"""
    x = np.atleast_1d(np.asarray(x))
    if x.shape != (net.n_species,):
        raise ValueError(f"Expected {net.n_species} species counts, got {x.shape}")
    if (x < 0).any():
        raise ValueError("Species counts must be nonnegative")
    return x.astype(np.int64)


@dataclass(frozen=True)
class ParameterLayout:
    """
    Coordinates of the sampled vector: log rates, then log sigma when inferred.
    """

    n_rates: int
    infer_sigma: bool = False

    @property
    def dim(self):
        return self.n_rates + int(self.infer_sigma)

    @property
    def names(self):
        names = [f"log_theta_{i + 1}" for i in range(self.n_rates)]
        if self.infer_sigma:
            names.append("log_sigma")
        return names

    def split(self, log_params):
        log_params = np.asarray(log_params, dtype=float)
        theta = np.exp(log_params[..., : self.n_rates])
        sigma = np.exp(log_params[..., self.n_rates]) if self.infer_sigma else None
        return theta, sigma


def evaluate_hazards(net, x, theta):
    """
    Mass-action hazards ``h_i = theta_i * prod_j C(x_j, p_ij)`` and their sum.

    Returns
    -------
    (numpy.ndarray, float)
        the hazard vector h and the total hazard h0
    """
    x = as_state(net, x)
    theta = as_rates(net, theta)
    with np.errstate(over="ignore"):
        h = theta * np.prod(comb(x[None, :], net.reactants), axis=1)
    h0 = float(h.sum())
    if not np.isfinite(h0):
        raise HazardOverflowError(f"Hazards overflow at state {x.tolist()}")
    return h, h0


@njit(cache=True)
def _mass_action(reactants, theta, x, out):
    h0 = 0.0
    for i in range(reactants.shape[0]):
        h = theta[i]
        for j in range(reactants.shape[1]):
            p = reactants[i, j]
            for k in range(p):
                h *= (x[j] - k) / (k + 1.0)
        out[i] = h
        h0 += h
    return h0


@njit(cache=True)
def _direct_method(reactants, stoich, theta, x, t_end, obs_times, obs_out, record, max_events):
    """
    Run one path from time 0 to ``t_end``, updating ``x`` in place.

    States at ``obs_times`` are written to ``obs_out``. Hazards are evaluated at
    the pre-jump state for both the waiting time and the reaction index.
    Reaching ``max_events`` events stops the path with STATUS_RUNAWAY.
    """
    v = reactants.shape[0]
    u = x.shape[0]
    hazards = np.empty(v)
    capacity = 64 if record else 1
    ev_times = np.empty(capacity)
    ev_reactions = np.empty(capacity, dtype=np.int64)
    n_events = 0
    k = 0
    n_obs = obs_times.shape[0]
    t = 0.0
    while True:
        h0 = _mass_action(reactants, theta, x, hazards)
        if not np.isfinite(h0):
            return n_events, STATUS_OVERFLOW, ev_times, ev_reactions
        if h0 > 0.0:
            t_next = t - np.log(1.0 - np.random.random()) / h0
        else:
            t_next = np.inf
        while k < n_obs and obs_times[k] < t_next:
            for s in range(u):
                obs_out[k, s] = x[s]
            k += 1
        if t_next > t_end:
            break
        target = np.random.random() * h0
        j = 0
        acc = hazards[0]
        while acc <= target and j < v - 1:
            j += 1
            acc += hazards[j]
        while hazards[j] <= 0.0 and j > 0:
            j -= 1
        for s in range(u):
            x[s] += stoich[s, j]
            if x[s] < 0:
                return n_events, STATUS_NEGATIVE, ev_times, ev_reactions
        if record:
            if n_events == ev_times.shape[0]:
                grown_times = np.empty(2 * n_events)
                grown_reactions = np.empty(2 * n_events, dtype=np.int64)
                grown_times[:n_events] = ev_times
                grown_reactions[:n_events] = ev_reactions
                ev_times = grown_times
                ev_reactions = grown_reactions
            ev_times[n_events] = t_next
            ev_reactions[n_events] = j
        n_events += 1
        if n_events >= max_events:
            return n_events, STATUS_RUNAWAY, ev_times, ev_reactions
        t = t_next
    return n_events, STATUS_OK, ev_times, ev_reactions


@njit(cache=True)
def _seeded_path(seed, reactants, stoich, theta, x, t_end, obs_times, obs_out, record, max_events):
    np.random.seed(seed)
    return _direct_method(
        reactants, stoich, theta, x, t_end, obs_times, obs_out, record, max_events
    )


@njit(cache=True)
def _observe_batch(reactants, stoich, thetas, x0s, obs_times, seeds, max_events):
    n = x0s.shape[0]
    u = x0s.shape[1]
    out = np.empty((n, obs_times.shape[0], u), dtype=np.int64)
    status = np.zeros(n, dtype=np.int64)
    t_end = obs_times[-1]
    for i in range(n):
        np.random.seed(seeds[i])
        x = x0s[i].copy()
        _, st, _, _ = _direct_method(
            reactants, stoich, thetas[i], x, t_end, obs_times, out[i], False, max_events
        )
        status[i] = st
    return out, status


def _observe_chunk(task):
    return _observe_batch(*task)


@dataclass
class Trajectory:
    """
    Exact event-driven path. The state is piecewise constant and right
    continuous between events.

    With ``event_times`` set to None the path was simulated in streaming mode
    and only the states at ``obs_times`` were kept.
    """

    initial_state: np.ndarray
    end_time: float
    final_state: np.ndarray
    n_events: int
    stoichiometry: np.ndarray
    event_times: np.ndarray = None
    event_reactions: np.ndarray = None
    obs_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    obs_states: np.ndarray = None

    @property
    def has_events(self):
        return self.event_times is not None

    def states(self):
        """State after each event, starting with the initial state"""
        if not self.has_events:
            raise SimulationError("Trajectory was simulated without its event list")
        jumps = self.stoichiometry[:, self.event_reactions].T
        return np.vstack(
            [self.initial_state, self.initial_state + np.cumsum(jumps, axis=0)]
        )


def simulate_direct(
    net, theta, x0, t_end, rng, ledger, record_events=True, obs_times=None, max_events=None
):
    """
    Simulate one exact path by the Direct method, charging one budget unit.

    Parameters
    ----------
    net: ReactionNetwork
    theta: array_like or RateParameters
        rate constants, one per reaction
    x0: array_like
        initial species counts
    t_end: float
        simulation horizon
    rng: numpy.random.Generator
        stream the path seed is drawn from
    ledger: BudgetLedger
    record_events: bool, optional
        keep the full event list. Samplers use streaming mode (False) with
        ``obs_times``.
    obs_times: array_like, optional
        times in [0, t_end] at which to keep the state
    max_events: int, optional
        event cap of the path. Default is SKM_MAX_EVENTS.
    """
    theta = as_rates(net, theta)
    x = as_state(net, x0).copy()
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    obs = np.asarray(obs_times if obs_times is not None else [], dtype=float)
    if obs.size and (obs.min() < 0 or obs.max() > t_end or np.any(np.diff(obs) < 0)):
        raise ValueError("Observation times must be sorted and within [0, t_end]")
    ledger.charge(1)
    seed = int(rng.integers(0, 2 ** 32))
    obs_out = np.zeros((obs.size, net.n_species), dtype=np.int64)
    n_events, status, ev_times, ev_reactions = _seeded_path(
        seed,
        net.reactants,
        net.stoichiometry,
        theta,
        x,
        float(t_end),
        obs,
        obs_out,
        record_events,
        int(max_events or get_setting("SKM_MAX_EVENTS")),
    )
    _check_status(status, x)
    trajectory = Trajectory(
        initial_state=as_state(net, x0),
        end_time=float(t_end),
        final_state=x,
        n_events=int(n_events),
        stoichiometry=net.stoichiometry,
        obs_times=obs,
        obs_states=obs_out,
    )
    if record_events:
        trajectory.event_times = ev_times[:n_events].copy()
        trajectory.event_reactions = ev_reactions[:n_events].copy()
    return trajectory


def simulate_paths(net, thetas, x0s, obs_times, seeds, executor=None, strict=True):
    """
    Streaming realisations for many rows at once; charges nothing.

    Row ``i`` starts at ``x0s[i]`` with rates ``thetas[i]`` and the compiled
    generator seeded by ``seeds[i]``; the result holds its states at every
    ``obs_times`` entry (relative to the start, last entry is the horizon).
    Callers charge the ledger before calling.

    With ``strict`` False a row whose path fails (hazard overflow, event cap)
    is filled with -1 instead of raising.

    Returns
    -------
    numpy.ndarray
        n x len(obs_times) x u species counts
    """
    x0s = np.ascontiguousarray(np.atleast_2d(x0s), dtype=np.int64)
    n = x0s.shape[0]
    thetas = np.asarray(thetas, dtype=float)
    if thetas.ndim == 1:
        thetas = np.tile(thetas, (n, 1))
    thetas = np.ascontiguousarray(thetas)
    obs_times = np.ascontiguousarray(np.atleast_1d(obs_times), dtype=float)
    seeds = np.ascontiguousarray(seeds, dtype=np.int64)
    if n == 0:
        return np.empty((0, obs_times.size, net.n_species), dtype=np.int64)
    executor = executor or SerialExecutor()
    max_events = int(get_setting("SKM_MAX_EVENTS"))
    tasks = [
        (
            net.reactants, net.stoichiometry, thetas[a:b], x0s[a:b], obs_times, seeds[a:b],
            max_events,
        )
        for a, b in chunk_bounds(n, executor)
    ]
    results = executor.map(_observe_chunk, tasks)
    out = np.concatenate([r[0] for r in results])
    status = np.concatenate([r[1] for r in results])
    bad = np.flatnonzero(status != STATUS_OK)
    if bad.size and strict:
        _check_status(status[bad[0]], x0s[bad[0]])
    out[bad] = -1
    return out


def _check_status(status, x):
    if status == STATUS_OVERFLOW:
        raise HazardOverflowError(f"Hazards overflow near state {np.asarray(x).tolist()}")
    if status == STATUS_RUNAWAY:
        raise HazardOverflowError(
            f"Path from {np.asarray(x).tolist()} reached the event cap SKM_MAX_EVENTS"
        )
    if status == STATUS_NEGATIVE:
        raise SimulationError(
            f"Reaction produced a negative count near {np.asarray(x).tolist()}"
        )


def state_at(traj, t):
    """Right-continuous state of ``traj`` at time ``t``"""
    if t < 0 or t > traj.end_time:
        raise ValueError(f"t={t} is outside [0, {traj.end_time}]")
    if traj.has_events:
        k = int(np.searchsorted(traj.event_times, t, side="right"))
        if k == 0:
            return traj.initial_state.copy()
        jumps = traj.stoichiometry[:, traj.event_reactions[:k]].sum(axis=1)
        return traj.initial_state + jumps
    hit = np.flatnonzero(traj.obs_times == t)
    if not hit.size:
        raise SimulationError(
            f"Streaming trajectory holds no state for t={t}; "
            "simulate with record_events=True"
        )
    return traj.obs_states[hit[0]].copy()


@dataclass(frozen=True)
class ObservationModel:
    """
    Gaussian measurement error on a subset of species.

    ``noise_sd`` is None when sigma is unknown and has to be inferred.
    """

    noise_sd: float = None
    observed_mask: tuple = ()

    def __post_init__(self):
        mask = tuple(bool(m) for m in self.observed_mask)
        if not any(mask):
            raise ObservationError("At least one species must be observed")
        if self.noise_sd is not None and not self.noise_sd > 0:
            raise ObservationError("Known noise_sd must be positive")
        object.__setattr__(self, "observed_mask", mask)

    @property
    def sigma_known(self):
        return self.noise_sd is not None

    def with_mask(self, mask):
        return ObservationModel(self.noise_sd, tuple(mask))

    def with_unknown_sigma(self):
        return ObservationModel(None, self.observed_mask)


@dataclass
class ObservedDataset:
    """
    Noisy discrete-time observations ``d_0 .. d_T``.

    ``values`` has one row per time and one column per species; unobserved
    entries are NaN.
    """

    times: np.ndarray
    values: np.ndarray
    observation_model: ObservationModel
    species_names: tuple = ()

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.array(self.values, dtype=float, ndmin=2)
        if self.times.ndim != 1 or self.times.size < 1:
            raise ObservationError("A dataset needs at least one observation time")
        if np.any(np.diff(self.times) <= 0):
            raise ObservationError("Observation times must be strictly increasing")
        if self.values.shape[0] != self.times.size:
            raise ObservationError("One row of values per observation time")
        if self.values.shape[1] != len(self.observation_model.observed_mask):
            raise ObservationError("Row width must equal the number of species")
        mask = np.asarray(self.observation_model.observed_mask)
        self.values[:, ~mask] = np.nan

    @property
    def mask(self):
        return np.asarray(self.observation_model.observed_mask)

    @property
    def n_times(self):
        return self.times.size

    @property
    def relative_times(self):
        """Observation times measured from the first one"""
        return self.times - self.times[0]

    def with_model(self, model):
        return ObservedDataset(
            self.times.copy(), self.values.copy(), model, self.species_names
        )

    def same_grid(self, other):
        return (
            self.times.shape == other.times.shape
            and np.allclose(self.times, other.times, rtol=0, atol=1e-12)
            and self.observation_model.observed_mask
            == other.observation_model.observed_mask
        )


def add_noise(states, mask, sigma, rng):
    """Gaussian-corrupt latent ``states`` (... x u) on observed species"""
    states = np.asarray(states, dtype=float)
    values = states + rng.normal(0.0, sigma, size=states.shape)
    values[..., ~np.asarray(mask, dtype=bool)] = np.nan
    return values


def observe_dataset(traj, times, model, rng):
    """Noisy, possibly partial observations of ``traj`` at ``times``"""
    times = np.asarray(times, dtype=float)
    if times.min() < 0 or times.max() > traj.end_time:
        raise ValueError("Observation times must lie within the trajectory")
    if not model.sigma_known:
        raise ObservationError("Generating data requires a known noise_sd")
    states = np.array([state_at(traj, t) for t in times])
    values = add_noise(states, model.observed_mask, model.noise_sd, rng)
    return ObservedDataset(times, values, model)
