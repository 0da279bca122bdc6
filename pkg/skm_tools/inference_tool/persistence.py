"""
Reading and writing datasets and run directories.

Numbers are written with 17 significant digits and read back with pandas'
round-trip float parser, so anything recomputed from these files matches the
in-memory values exactly.
"""

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .abc_smc import Population
from .budget import BudgetLedger
from .exceptions import ObservationError
from .model_core import ObservationModel, ObservedDataset
from .pmcmc import ChainTrace

logger = logging.getLogger(__name__)

CONFIG_FILE = "config.json"
LEDGER_FILE = "ledger.json"
TUNING_FILE = "tuning.json"
TRACE_FILE = "trace.csv"
POPULATIONS_DIR = "populations"
MANIFEST_FILE = "manifest.json"
SUMMARY_FILE = "summary.json"
BRACKETS_FILE = "brackets.csv"
DATASET_FILE = "dataset.csv"


def write_csv(frame, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n", na_rep="")


def read_csv(path):
    return pd.read_csv(path, float_precision="round_trip")


def to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if np.isfinite(value) else repr(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(data, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        json.dump(to_jsonable(data), f, indent=2, sort_keys=True)
        f.write("\n")


def read_json(path):
    with open(path) as f:
        return json.load(f)


def _sidecar(path):
    path = Path(path)
    return path.with_name(path.stem + ".json")


def save_dataset(dataset, path, species_names=None, provenance=None):
    """
    Write ``dataset`` as ``time,<species...>`` CSV with a JSON sidecar.

    The sidecar records sigma ("unknown" when it is inferred), the observed
    species and any provenance such as the seed and true rates.
    """
    names = list(species_names or dataset.species_names)
    if len(names) != dataset.values.shape[1]:
        names = [f"X{j + 1}" for j in range(dataset.values.shape[1])]
    frame = pd.DataFrame(dataset.values, columns=names)
    frame.insert(0, "time", dataset.times)
    write_csv(frame, path)
    model = dataset.observation_model
    write_json(
        {
            "noise_sd": model.noise_sd if model.sigma_known else "unknown",
            "observed": [n for n, m in zip(names, model.observed_mask) if m],
            "species": names,
            "provenance": provenance or {},
        },
        _sidecar(path),
    )
    return Path(path)


def load_dataset(path):
    """
    Dataset from CSV. Without a sidecar every column holding a value counts as
    observed and sigma is unknown.
    """
    frame = read_csv(path)
    if "time" not in frame.columns:
        raise ObservationError(f"{path} has no time column")
    names = [c for c in frame.columns if c != "time"]
    values = frame[names].to_numpy(dtype=float)
    sidecar = _sidecar(path)
    if sidecar.exists():
        meta = read_json(sidecar)
        observed = set(meta.get("observed", names))
        noise_sd = meta.get("noise_sd", "unknown")
        noise_sd = None if noise_sd == "unknown" else float(noise_sd)
        mask = tuple(n in observed for n in names)
    else:
        mask = tuple(bool(np.isfinite(values[:, j]).any()) for j in range(len(names)))
        noise_sd = None
    model = ObservationModel(noise_sd, mask)
    return ObservedDataset(frame["time"].to_numpy(dtype=float), values, model, tuple(names))


def save_trace(trace, run_dir):
    path = Path(run_dir) / TRACE_FILE
    write_csv(trace.to_frame(), path)
    return path


def load_trace(path):
    path = Path(path)
    if path.is_dir():
        path = path / TRACE_FILE
    return ChainTrace.from_frame(read_csv(path))


def save_populations(populations, run_dir):
    """One ``gen_<t>.csv`` per generation plus ``manifest.json``"""
    directory = Path(run_dir) / POPULATIONS_DIR
    for population in populations:
        write_csv(population.to_frame(), directory / f"gen_{population.generation}.csv")
    write_json(
        {"generations": [p.manifest_entry() for p in populations]},
        directory / MANIFEST_FILE,
    )
    return directory


def load_populations(run_dir):
    directory = Path(run_dir) / POPULATIONS_DIR
    manifest = read_json(directory / MANIFEST_FILE)
    return [
        Population.from_frame(read_csv(directory / f"gen_{entry['generation']}.csv"), entry)
        for entry in manifest["generations"]
    ]


def save_ledgers(ledgers, run_dir, errors=None):
    """``ledger.json``: one entry per sampler, with the error that stopped it"""
    errors = errors or {}
    data = {}
    for name, ledger in ledgers.items():
        entry = ledger.to_dict()
        entry["error"] = errors.get(name)
        data[name] = entry
    write_json(data, Path(run_dir) / LEDGER_FILE)


def load_ledgers(run_dir):
    data = read_json(Path(run_dir) / LEDGER_FILE)
    ledgers = {name: BudgetLedger.from_dict(entry) for name, entry in data.items()}
    errors = {name: entry.get("error") for name, entry in data.items() if entry.get("error")}
    return ledgers, errors


def has_trace(run_dir):
    return (Path(run_dir) / TRACE_FILE).exists()


def has_populations(run_dir):
    return (Path(run_dir) / POPULATIONS_DIR / MANIFEST_FILE).exists()
