"""
Sample plans for Gram-matrix certificates and the reports their eigen-checks produce.

A plan discretizes "every finite collection of points off the support" by points in a circular band
R_lo <= |z| <= R_hi around the origin: low-discrepancy angles and radii (an additive recurrence on the plastic
number) shifted by a small seeded jitter, so that equal seeds give bit-identical points.
"""

import logging
from enum import Enum
from typing import Dict, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from qdcert import GuardError, SpecificationError
from qdcert.numcore import DEFAULT_TOLERANCE, herm_min_eig

__all__ = ["GramReport", "GramVerdict", "MIN_SAMPLES", "SamplePlan", "gram_report"]

logger = logging.getLogger(__name__)

MIN_SAMPLES = 8

_PLASTIC = 1.324717957244746
_ALPHA_ANGLE = 1 / _PLASTIC
_ALPHA_RADIUS = 1 / _PLASTIC ** 2


class SamplePlan(NamedTuple):
    """Points (w_k, z_k) for Gram assembly."""

    count: int

    # (R_lo, R_hi).
    band: Tuple[float, float]

    seed: int

    # Explicit (w, z) pairs; when given they replace the generated points.
    pairs: Optional[Tuple[Tuple[complex, complex], ...]] = None

    @classmethod
    def create(cls, count: int, band: Tuple[float, float], seed: int) -> "SamplePlan":
        if count < MIN_SAMPLES:
            raise SpecificationError(f"a sample plan needs at least {MIN_SAMPLES} points, got {count}")
        lo, hi = float(band[0]), float(band[1])
        if not 0 < lo <= hi:
            raise SpecificationError(f"invalid radial band [{lo}, {hi}]")
        return cls(int(count), (lo, hi), int(seed))

    @classmethod
    def for_evaluator(cls, ev, n: int, seed: int, band: Optional[Tuple[float, float]] = None) -> "SamplePlan":
        """
        A plan for the kernels of ``ev``. The default band is [2 R0, 4 R0], raised to the guard radius if needed.

        :raises GuardError: if an explicit band reaches into the guarded region.
        """
        guard_radius = ev.guard_radius
        if band is None:
            lo = max(2 * ev.bounding_radius, guard_radius)
            band = (lo, max(4 * ev.bounding_radius, lo))
        elif band[0] < guard_radius * (1 - 1e-12):
            raise GuardError(f"band [{band[0]}, {band[1]}] reaches inside the guard radius {guard_radius:.6g}")
        return cls.create(n, band, seed)

    @classmethod
    def from_points(cls, pairs: Sequence[Tuple[complex, complex]], seed: int = 0) -> "SamplePlan":
        pairs = tuple((complex(w), complex(z)) for w, z in pairs)
        if not pairs:
            raise SpecificationError("a sample plan needs at least one point")
        radii = [abs(p) for pair in pairs for p in pair]
        return cls(len(pairs), (min(radii), max(radii)), seed, pairs)

    def with_seed(self, seed: int) -> "SamplePlan":
        return self._replace(seed=int(seed))

    def with_count(self, count: int) -> "SamplePlan":
        return SamplePlan.create(count, self.band, self.seed)

    def _ring(self, rng: np.random.Generator, phase: float) -> np.ndarray:
        lo, hi = self.band
        k = np.arange(self.count)
        jitter = rng.uniform(0.0, 0.25 / self.count, size=(2, self.count))
        angle = 2 * np.pi * np.mod(phase + k * _ALPHA_ANGLE + jitter[0], 1.0)
        radius = lo + (hi - lo) * np.mod(0.5 + k * _ALPHA_RADIUS + jitter[1], 1.0)
        return radius * np.exp(1j * angle)

    def sample_pairs(self) -> Tuple[np.ndarray, np.ndarray]:
        """The (w, z) arguments of four-argument kernels."""
        if self.pairs is not None:
            w, z = zip(*self.pairs)
            return np.array(w, dtype=np.complex128), np.array(z, dtype=np.complex128)
        rng = np.random.default_rng(self.seed)
        return self._ring(rng, 0.0), self._ring(rng, 0.5)

    def sample_points(self) -> np.ndarray:
        """The points lambda_k of two-point kernels: the first coordinate of each pair."""
        return self.sample_pairs()[0]

    def as_dict(self) -> Dict:
        return {"n": self.count, "band": list(self.band), "seed": self.seed, "explicit": self.pairs is not None}


class GramVerdict(Enum):
    PSD = "PSD"
    NOT_PSD = "NOT_PSD"


class GramReport(NamedTuple):
    """Eigen-check of one sampled Gram matrix."""

    kernel: str
    size: int
    min_eig: float
    max_eig: float
    verdict: GramVerdict

    # Relative PSD tolerance (scaled by max(1, spectral radius) in the verdict).
    tolerance: float

    @property
    def psd(self) -> bool:
        return self.verdict is GramVerdict.PSD

    @property
    def threshold(self) -> float:
        return self.tolerance * max(1.0, abs(self.min_eig), abs(self.max_eig))

    def violates(self, factor: float) -> bool:
        """A negative eigenvalue beyond ``factor`` times the PSD threshold."""
        return self.min_eig < -factor * self.threshold

    def as_dict(self) -> Dict:
        return {
            "kernel": self.kernel,
            "n": self.size,
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "verdict": self.verdict.value,
        }


def gram_report(kernel: str, matrix, tol: float = DEFAULT_TOLERANCE) -> GramReport:
    report = herm_min_eig(matrix, tol)
    verdict = GramVerdict.PSD if report.psd else GramVerdict.NOT_PSD
    logger.debug("gram %s n=%d min_eig=%.3e -> %s", kernel, len(report.eigenvalues), report.min_eig, verdict.value)
    return GramReport(
        kernel=kernel,
        size=len(report.eigenvalues),
        min_eig=report.min_eig,
        max_eig=float(report.eigenvalues[-1]),
        verdict=verdict,
        tolerance=tol,
    )
