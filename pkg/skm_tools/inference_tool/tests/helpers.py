import numpy as np

from inference_tool.budget import substream
from inference_tool.harness import builtin_pure_death, generate_benchmark_datasets
from inference_tool.model_core import ObservationModel, ObservedDataset, build_network
from inference_tool.priors import PointMassPrior


class ChunkedExecutor:
    """Serial executor that still makes ``chunk_bounds`` split the work"""

    def __init__(self, processes=4):
        self.processes = processes

    def map(self, func, iterable, chunksize=None):
        return list(map(func, iterable))


def death_network():
    return build_network([[1]], [[0]], ["X"], ["death"])


def death_dataset(values=(5.3, 3.8, 2.1), times=(0.0, 0.5, 1.0), sigma=1.0):
    return ObservedDataset(
        np.asarray(times), np.asarray(values, dtype=float)[:, None], ObservationModel(sigma, (True,))
    )


def death_prior(x0=5):
    return PointMassPrior([x0])


class CountingStatePrior:
    """Point-mass prior that counts every initial state it hands out"""

    def __init__(self, x0=5):
        self.inner = PointMassPrior([x0])
        self.drawn = 0

    @property
    def n_species(self):
        return self.inner.n_species

    def sample(self, rng, n):
        self.drawn += n
        return self.inner.sample(rng, n)

    def logpmf(self, states):
        return self.inner.logpmf(states)

    def to_dict(self):
        return self.inner.to_dict()


def oracle_problem(seed=20):
    """Pure-death benchmark and its regime D dataset"""
    model = builtin_pure_death()
    return model, generate_benchmark_datasets(model, substream(seed))["D"]
