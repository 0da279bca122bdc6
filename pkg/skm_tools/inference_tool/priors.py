"""
Prior distributions over log parameters and over initial species states.

Parameter priors are placed directly on the log scale, so the samplers never
need a Jacobian term.
"""

import numpy as np
from scipy import stats


class LogPrior:
    """
    Independent product prior over a vector of log parameters.

    Parameters
    ----------
    components: list
        frozen ``scipy.stats`` distributions, one per coordinate
    names: list, optional
        coordinate names used in persisted files
    """

    def __init__(self, components, names=None):
        self.components = list(components)
        if not self.components:
            raise ValueError("A prior needs at least one component")
        self.names = list(names) if names is not None else [
            f"log_theta_{i + 1}" for i in range(len(self.components))
        ]

    @property
    def dim(self):
        return len(self.components)

    def logpdf(self, log_params):
        log_params = np.asarray(log_params, dtype=float)
        if log_params.shape[-1] != self.dim:
            raise ValueError(
                f"Expected {self.dim} coordinates, got {log_params.shape[-1]}"
            )
        total = np.zeros(log_params.shape[:-1])
        for i, dist in enumerate(self.components):
            total = total + dist.logpdf(log_params[..., i])
        return total if total.ndim else float(total)

    def in_support(self, log_params):
        return np.isfinite(self.logpdf(log_params))

    def sample(self, rng, n=None):
        size = 1 if n is None else n
        draws = np.column_stack(
            [dist.rvs(size=size, random_state=rng) for dist in self.components]
        )
        return draws[0] if n is None else draws

    def mean(self):
        return np.array([dist.mean() for dist in self.components])

    def std(self):
        return np.array([dist.std() for dist in self.components])

    def extended(self, component, name):
        """New prior with one more coordinate appended (e.g. log sigma)"""
        return LogPrior(self.components + [component], self.names + [name])

    def to_dict(self):
        return {
            "names": self.names,
            "components": [_describe(dist) for dist in self.components],
        }


class PointMassLogPrior:
    """Degenerate prior: all mass at one log-parameter vector"""

    def __init__(self, value, names=None):
        self.value = np.atleast_1d(np.asarray(value, dtype=float))
        self.names = list(names) if names is not None else [
            f"log_theta_{i + 1}" for i in range(self.value.size)
        ]

    @property
    def dim(self):
        return self.value.size

    def logpdf(self, log_params):
        log_params = np.asarray(log_params, dtype=float)
        hit = np.all(log_params == self.value, axis=-1)
        out = np.where(hit, 0.0, -np.inf)
        return out if out.ndim else float(out)

    def in_support(self, log_params):
        return np.isfinite(self.logpdf(log_params))

    def sample(self, rng, n=None):
        if n is None:
            return self.value.copy()
        return np.tile(self.value, (n, 1))

    def mean(self):
        return self.value.copy()

    def std(self):
        return np.zeros_like(self.value)

    def to_dict(self):
        return {"names": self.names, "point_mass": self.value.tolist()}


def uniform_log_prior(lower, upper, dim, names=None):
    """``log(theta_i) ~ U(lower, upper)`` independently for ``dim`` coordinates"""
    return LogPrior(
        [stats.uniform(loc=lower, scale=upper - lower) for _ in range(dim)], names
    )


def gaussian_log_prior(centers, sd, names=None):
    """Gaussian prior on the log scale, centered at ``centers``"""
    return LogPrior([stats.norm(loc=c, scale=sd) for c in centers], names)


def _describe(dist):
    name = dist.dist.name
    if name == "uniform":
        lower = float(dist.kwds.get("loc", 0.0))
        return {"uniform": [lower, lower + float(dist.kwds.get("scale", 1.0))]}
    if name == "norm":
        return {
            "normal": [float(dist.kwds.get("loc", 0.0)), float(dist.kwds.get("scale", 1.0))]
        }
    return {name: dict(dist.kwds)}


class PointMassPrior:
    """Initial state known exactly"""

    def __init__(self, x0):
        self.x0 = np.asarray(x0, dtype=np.int64)

    @property
    def n_species(self):
        return self.x0.size

    def sample(self, rng, n):
        return np.tile(self.x0, (n, 1))

    def logpmf(self, states):
        states = np.atleast_2d(states)
        hit = np.all(states == self.x0, axis=1)
        return np.where(hit, 0.0, -np.inf)

    def to_dict(self):
        return {"point_mass": self.x0.tolist()}


class PoissonStatePrior:
    """Independent Poisson prior on each initial species count"""

    def __init__(self, means):
        self.means = np.asarray(means, dtype=float)

    @property
    def n_species(self):
        return self.means.size

    def sample(self, rng, n):
        return rng.poisson(self.means, size=(n, self.means.size)).astype(np.int64)

    def logpmf(self, states):
        states = np.atleast_2d(states)
        return stats.poisson.logpmf(states, self.means).sum(axis=1)

    def to_dict(self):
        return {"poisson": self.means.tolist()}
