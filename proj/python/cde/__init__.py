"""Conditional density estimation: simulators, estimators and metrics.

Configs are plain dicts; they are passed to the native core as JSON.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    DomainError,
    Error,
    Estimator,
    NumericalError,
    ParseError,
    ShapeError,
    Simulator,
    avg_log_likelihood,
    estimator_names,
    rmse_mean,
    rmse_std,
    simulator_names,
)

__all__ = [
    "ConfigError", "DomainError", "Error", "Estimator", "NumericalError", "ParseError", "ShapeError",
    "Simulator", "avg_log_likelihood", "default_config", "estimator_names", "fit", "hellinger",
    "load_model", "make_simulator", "rmse_mean", "rmse_std", "run_benchmark", "simulator_names",
]


def _dump(obj):
    return "" if obj is None else json.dumps(obj)


def make_simulator(name, params=None):
    return _core.make_simulator(name, _dump(params))


def default_config(name):
    return json.loads(_core.default_estimator_config(name))


def fit(name, x=None, y=None, config=None, seed=None, simulator=None):
    """Fits a registered estimator; "oracle" needs only `simulator`."""
    import numpy as np

    x = np.empty((0, 1)) if x is None else x
    y = np.empty((0, 1)) if y is None else y
    return _core.fit(name, x, y, _dump(config), seed, simulator)


def load_model(model):
    """Accepts the dict or the string produced by Estimator.to_json()."""
    return _core.load_model(model if isinstance(model, str) else json.dumps(model))


def hellinger(estimator, simulator, protocol=None):
    return _core.hellinger(estimator, simulator, _dump(protocol))


def run_benchmark(config, threads=1):
    """Returns (runs_csv, aggregate_csv) as strings."""
    return _core.run_benchmark(json.dumps(config), threads)
