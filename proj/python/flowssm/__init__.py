"""Flow-based statistical shape models.

Meshes are passed as ``(vertices, faces)`` tuples of ``N x 3`` float and
``F x 3`` int arrays. Configs are plain dicts with the same keys as the CLI
run config sections.
"""

import json

from . import _core
from ._core import (
    ConfigError,
    ConnectivityMismatch,
    DataError,
    DegenerateLabels,
    Error,
    InvalidArgument,
    IoError,
    Model,
    NonFiniteGradient,
    NonFiniteLoss,
    NonFiniteValue,
    ParseError,
    ShapeMismatch,
    TopologyError,
    assd,
    chamfer_distance,
    classify_monte_carlo,
    icp_align,
    load_mesh,
    normalize_to_unit_box,
    paired_t_test,
    sample_surface,
    save_mesh,
    self_intersections,
)

__version__ = _core.__version__


def generate_family(spec, n):
    """Synthetic shape family; returns (members, parameters, template)."""
    return _core.generate_family(json.dumps(spec), n)


def train(shapes, template, config=None, progress=None):
    """Trains a model on normalized meshes; returns (Model, loss curve)."""
    return _core.train(shapes, template, json.dumps(config or {}), progress)


__all__ = [
    "ConfigError",
    "ConnectivityMismatch",
    "DataError",
    "DegenerateLabels",
    "Error",
    "InvalidArgument",
    "IoError",
    "Model",
    "NonFiniteGradient",
    "NonFiniteLoss",
    "NonFiniteValue",
    "ParseError",
    "ShapeMismatch",
    "TopologyError",
    "assd",
    "chamfer_distance",
    "classify_monte_carlo",
    "generate_family",
    "icp_align",
    "load_mesh",
    "normalize_to_unit_box",
    "paired_t_test",
    "sample_surface",
    "save_mesh",
    "self_intersections",
    "train",
]
