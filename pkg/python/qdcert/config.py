"""
Effective configuration of a qdcert run: every tunable with its default, read from parsed command-line arguments
and a few environment overrides.
"""

import logging
from argparse import Namespace
from os import environ
from typing import Any, Callable, Dict, Optional, Tuple

from qdcert import SpecificationError
from qdcert.kernels import DEFAULT_GUARD, DEFAULT_SWITCHOVER
from qdcert.leveldeform import DEFAULT_GRID, DEFAULT_X_MAX
from qdcert.matrix_chain import DEFAULT_RANK_TOLERANCE, DEFAULT_SINGULAR_CONDITION
from qdcert.numcore import DEFAULT_TOLERANCE
from qdcert.positivity import DEFAULT_VIOLATION_FACTOR
from qdcert.spherical import DEFAULT_SPHERE_SAMPLES

__all__ = ["Configuration", "ENVIRONMENT_OVERRIDES"]

logger = logging.getLogger(__name__)

DEFAULT_MAX_ITER = 50
DEFAULT_SAMPLES = 32
DEFAULT_SEED = 1

# Environment variable -> (attribute, parser).
ENVIRONMENT_OVERRIDES: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "QDCERT_TOL": ("tol", float),
    "QDCERT_MAX_ITER": ("max_iter", int),
    "QDCERT_SEED": ("seed", int),
    "QDCERT_GUARD": ("guard", float),
}


def _given(args, name: str, default):
    """The attribute of ``args``, or ``default`` when it is missing or None. Explicit zeros are kept."""
    value = getattr(args, name, None)
    return default if value is None else value


class Configuration:
    tol: float
    max_iter: int
    samples: int
    seed: int
    guard: float

    # None means derived from the domain: the sample band is [2 R0, 4 R0] and the norm cap 4 (R0 + 1).
    band: Optional[Tuple[float, float]]
    norm_cap: Optional[float]

    switchover: float
    rank_tol: float
    singular_cond: float
    sampled_violation_factor: float
    grid_n: int
    x_max: float
    sphere_n: int

    def __init__(self, args=Namespace(), env=None):
        self.tol = _given(args, "tol", DEFAULT_TOLERANCE)
        self.max_iter = _given(args, "max_iter", DEFAULT_MAX_ITER)
        self.samples = _given(args, "samples", DEFAULT_SAMPLES)
        self.seed = _given(args, "seed", DEFAULT_SEED)
        self.guard = _given(args, "guard", DEFAULT_GUARD)
        self.band = getattr(args, "band", None)
        self.norm_cap = getattr(args, "norm_cap", None)
        self.switchover = _given(args, "switchover", DEFAULT_SWITCHOVER)
        self.rank_tol = _given(args, "rank_tol", DEFAULT_RANK_TOLERANCE)
        self.singular_cond = _given(args, "singular_cond", DEFAULT_SINGULAR_CONDITION)
        self.sampled_violation_factor = _given(args, "violation_factor", DEFAULT_VIOLATION_FACTOR)
        self.grid_n = _given(args, "n", DEFAULT_GRID)
        self.x_max = _given(args, "x_max", DEFAULT_X_MAX)
        self.sphere_n = _given(args, "sphere_n", DEFAULT_SPHERE_SAMPLES)

        self._apply_environment(environ if env is None else env)
        self._validate()

    def _apply_environment(self, env) -> None:
        for name, (attribute, parse) in ENVIRONMENT_OVERRIDES.items():
            if name not in env:
                continue
            try:
                setattr(self, attribute, parse(env[name]))
            except ValueError:
                logger.warning(f"Failed to parse value provided in environment variable {name}: {env.get(name)}")

    def _validate(self) -> None:
        for name in ("tol", "rank_tol", "singular_cond", "sampled_violation_factor"):
            if not getattr(self, name) > 0:
                raise SpecificationError(f"{name} must be positive, got {getattr(self, name)}")

    def as_dict(self) -> Dict[str, Any]:
        return {
            "tol": self.tol,
            "max_iter": self.max_iter,
            "samples": self.samples,
            "seed": self.seed,
            "guard": self.guard,
            "band": None if self.band is None else list(self.band),
            "norm_cap": self.norm_cap,
            "switchover": self.switchover,
            "rank_tol": self.rank_tol,
            "singular_cond": self.singular_cond,
            "sampled_violation_factor": self.sampled_violation_factor,
            "grid_n": self.grid_n,
            "x_max": self.x_max,
            "sphere_n": self.sphere_n,
        }

    def __repr__(self):
        return f"Configuration({self.as_dict()})"
