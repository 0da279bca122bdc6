"""
Computational budget accounting, random substreams and the worker pool.

One budget unit is one model realisation by the Direct method. Every sampler
charges a ``BudgetLedger`` before it simulates, so the ledger is the single
record of how much compute a run has used.
"""

import logging
import threading
from collections import defaultdict
from contextlib import contextmanager
from multiprocessing import Pool

import numpy as np

from .exceptions import BudgetExhausted

logger = logging.getLogger(__name__)

PHASES = ("tuning", "pilot", "main")


class BudgetLedger:
    """
    Count of model realisations consumed against a fixed capacity.

    Parameters
    ----------
    capacity: int
        total number of units this ledger may ever hand out
    phase: str, optional
        tag charged when no phase is active. Default is "main".
    """

    def __init__(self, capacity, phase="main"):
        capacity = int(capacity)
        if capacity <= 0:
            raise ValueError("Budget capacity must be positive")
        self.capacity = capacity
        self.consumed = 0
        self.by_phase = defaultdict(int)
        self._phase = phase
        self._lock = threading.Lock()

    @property
    def remaining(self):
        return self.capacity - self.consumed

    @property
    def active_phase(self):
        return self._phase

    def can_afford(self, units):
        return units <= self.remaining

    def charge(self, units=1, phase=None):
        """
        Consume ``units`` realisations, or raise without consuming anything.

        Returns the cumulative consumption after the charge.
        """
        units = int(units)
        if units < 0:
            raise ValueError("Cannot charge a negative number of units")
        with self._lock:
            if units > self.capacity - self.consumed:
                raise BudgetExhausted(
                    units, self.capacity - self.consumed, self.consumed
                )
            self.consumed += units
            self.by_phase[phase or self._phase] += units
            return self.consumed

    @contextmanager
    def phase(self, name):
        """Tag every charge made inside the block with ``name``"""
        if name not in PHASES:
            raise ValueError(f"Unknown budget phase {name!r}")
        previous, self._phase = self._phase, name
        try:
            yield self
        finally:
            self._phase = previous

    def to_dict(self):
        return {
            "capacity": self.capacity,
            "consumed": self.consumed,
            "phases": {name: self.by_phase.get(name, 0) for name in PHASES},
        }

    @classmethod
    def from_dict(cls, data):
        ledger = cls(data["capacity"])
        ledger.consumed = int(data["consumed"])
        for name, units in data.get("phases", {}).items():
            if units:
                ledger.by_phase[name] = int(units)
        return ledger

    def __repr__(self):
        return f"BudgetLedger(consumed={self.consumed}, capacity={self.capacity})"


def substream(*keys):
    """Independent ``numpy.random.Generator`` keyed by a tuple of integers"""
    return np.random.default_rng(np.random.SeedSequence([int(k) for k in keys]))


def stream_seeds(n, *keys):
    """
    ``n`` 32-bit seeds for the compiled simulator, one per row.

    Row ``i`` always gets the same seed for the same keys, whatever the number
    of workers that later consumes them.
    """
    if n == 0:
        return np.empty(0, dtype=np.int64)
    seq = np.random.SeedSequence([int(k) for k in keys])
    return seq.generate_state(n, dtype=np.uint32).astype(np.int64)


def root_key(rng):
    """Draw the root key under which a sampler derives all its substreams"""
    return int(rng.integers(0, 2 ** 63 - 1))


class SerialExecutor:
    """In-process stand-in for ``multiprocessing.Pool`` with the same ``map``"""

    processes = 1

    def map(self, func, iterable, chunksize=None):
        return list(map(func, iterable))


@contextmanager
def worker_pool(workers=1):
    """
    Yield an executor with an ordered ``map``.

    ``workers <= 1`` runs in-process; otherwise a process pool is used. Results
    never depend on the choice because every task carries its own seeds.
    """
    if workers is None or workers <= 1:
        yield SerialExecutor()
        return
    logger.debug("starting worker pool processes=%d", workers)
    with Pool(processes=workers) as pool:
        yield pool


def chunk_bounds(n, executor):
    """Split ``range(n)`` into contiguous chunks for ``executor``"""
    processes = getattr(executor, "processes", None) or getattr(
        executor, "_processes", 1
    )
    n_chunks = max(1, min(n, 4 * int(processes)))
    edges = np.linspace(0, n, n_chunks + 1).astype(int)
    return [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
