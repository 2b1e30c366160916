"""Pipeline optimisation and error attribution.

Thin wrapper over the native ``_pipegrader`` module. Report-producing calls
return plain dictionaries decoded from the JSON the C++ core emits, so the
structure matches the files written by the ``pipegrader`` CLI.
"""

from __future__ import annotations

import json
from typing import Iterable, Mapping, Optional, Sequence

from . import _pipegrader as _core
from ._pipegrader import (  # noqa: F401  (re-exported)
    CoverageError,
    DatasetError,
    EvaluationError,
    SpecError,
    dataset,
    default_spec,
    grid_keys,
    grid_size,
    spearman,
)

__version__ = _core.__version__

__all__ = [
    "CoverageError",
    "DatasetError",
    "EvaluationError",
    "SpecError",
    "contributions",
    "dataset",
    "default_spec",
    "grid_keys",
    "grid_size",
    "pipeline_search",
    "propagation",
    "search",
    "solve_propagation",
    "spearman",
]


def search(table: Mapping[str, float], optimizer: str = "grid", path: Optional[str] = None,
           budget: int = 0, patience: int = 0, seed: int = 0,
           spec: Optional[str] = None) -> dict:
    """Search a lookup table keyed by canonical configuration keys."""
    return json.loads(_core.lookup_search(dict(table), optimizer, path, budget, patience, seed,
                                          spec))


def contributions(table: Mapping[str, float], scope: str = "steps", optimizer: str = "grid",
                  path: Optional[str] = None, targets: Sequence[str] = (), budget: int = 0,
                  patience: int = 0, seeds: Iterable[int] = (0,), allow_partial: bool = False,
                  spec: Optional[str] = None) -> dict:
    return json.loads(_core.lookup_contributions(dict(table), scope, optimizer, path,
                                                 list(targets), budget, patience, list(seeds),
                                                 allow_partial, spec))


def propagation(table: Mapping[str, float], scope: str = "steps", optimizer: str = "grid",
                path: Optional[str] = None, targets: Sequence[str] = (), budget: int = 0,
                patience: int = 0, seeds: Iterable[int] = (0,), epsilon: float = 1e-9,
                spec: Optional[str] = None) -> dict:
    """Naive-benchmark propagation report. The table must cover naive configurations."""
    return json.loads(_core.lookup_propagation(dict(table), scope, optimizer, path,
                                               list(targets), budget, patience, list(seeds),
                                               epsilon, spec))


def solve_propagation(delta_e1: float, delta_e2: float, delta_e3: float,
                      epsilon: float = 1e-9) -> dict:
    return json.loads(_core.solve_propagation(delta_e1, delta_e2, delta_e3, epsilon))


def pipeline_search(preset: str = "balanced-small", dataset_seed: int = 0,
                    path: str = "cnn_frozen,pca,rf", optimizer: str = "random", budget: int = 10,
                    patience: int = 0, seed: int = 0, folds: int = 5, jobs: int = 1) -> dict:
    """Search one path of the image pipeline on a synthetic texture dataset."""
    return json.loads(_core.pipeline_search(preset, dataset_seed, path, optimizer, budget,
                                            patience, seed, folds, jobs))
