"""Spectral-flow detection of bifurcation from the trivial branch along the
constraint family H_t = {u : u(t) = 0}."""

import json

from . import _core
from ._core import (
    Error,
    Mesh,
    Problem,
    Space,
    constrained_basis,
    constrained_gradient,
    dual_norm,
    evaluation_map,
    explicit_T_apply,
    find_branch,
    functional_value,
    gap_distance,
    gradient,
    hessian,
    morse_criterion,
    presets,
    projection,
    relative_morse_index,
    restricted_spectrum,
    run_cli,
    spectral_flow,
    validate,
)

__all__ = [
    "Error",
    "Mesh",
    "Problem",
    "Space",
    "constrained_basis",
    "constrained_gradient",
    "detect",
    "dual_norm",
    "evaluation_map",
    "explicit_T_apply",
    "find_branch",
    "functional_value",
    "gap_distance",
    "gradient",
    "hessian",
    "morse_criterion",
    "presets",
    "projection",
    "relative_morse_index",
    "restricted_spectrum",
    "run_cli",
    "spectral_flow",
    "validate",
    "verify",
]


def detect(space, problem, a, b, **kwargs):
    """Bifurcation report over [a, b] as a dict."""
    return json.loads(_core.detect(space, problem, a, b, **kwargs))


def verify(space, problem, report, steps=8):
    """Branch verification for every candidate of `report` (dict or JSON text)."""
    text = report if isinstance(report, str) else json.dumps(report)
    return _core.verify(space, problem, text, steps)
