"""
Geometric specifications of islands and their algebraic data.

A union of disks D(a_j, r_j) is a quadrature domain with node polynomial ``P(w) = prod_j (w - a_j)`` and defining
hermitian kernel ``Q(w, z) = prod_j ((w - a_j)(conj(z) - conj(a_j)) - r_j**2)``. Kernels are stored as coefficient
matrices ``c[j, k]`` of ``w**j * conj(z)**k``. General quadrature domains can be given directly by (P, Q).
"""

import cmath
import functools
import logging
import math
from collections import namedtuple
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.signal

from qdcert import GuardError, SpecificationError

__all__ = [
    "ArchipelagoSpec",
    "DiskSpec",
    "HermitianPolynomialKernel",
    "NodePolynomial",
    "QuadratureDomain",
    "boundary_points",
    "defining_data",
    "make_archipelago",
    "pairwise_disjoint",
    "parse_archipelago",
    "parse_complex",
    "parse_quadrature_domain",
    "schwarz_disk",
    "two_disk_closed_form",
]

logger = logging.getLogger(__name__)

HERMITIAN_TOLERANCE = 1e-12

# Ray scan used to bound the support of raw (P, Q) input.
_RAY_COUNT = 256
_RAY_SAMPLES = 4096


class DiskSpec(namedtuple("DiskSpec", ["center", "radius"])):
    """A closed disk D(a, r), carrying a quadrature node a with weight pi*r**2."""

    __slots__ = ()

    # The centre a.
    center: complex

    # The radius r, positive and finite.
    radius: float

    def __new__(cls, center, radius):
        center = complex(center)
        radius = float(radius)
        if not cmath.isfinite(center):
            raise SpecificationError(f"disk center must be finite, got {center}")
        if not (math.isfinite(radius) and radius > 0):
            raise SpecificationError(f"disk radius must be positive and finite, got {radius}")
        return super().__new__(cls, center, radius)

    @property
    def area(self) -> float:
        return math.pi * self.radius ** 2

    def contains(self, z: complex) -> bool:
        return abs(z - self.center) <= self.radius


class ArchipelagoSpec(namedtuple("ArchipelagoSpec", ["disks", "bounding_radius"])):
    """A non-empty family of disks defining the density g = sum of their indicators."""

    __slots__ = ()

    disks: Tuple[DiskSpec, ...]

    # R0 = max(|a_j| + r_j), the radius of a centred disk containing every island.
    bounding_radius: float

    def __len__(self):
        return len(self.disks)

    @property
    def area(self) -> float:
        return sum(d.area for d in self.disks)


class NodePolynomial:
    """Monic polynomial P(w) = sum_k p_k w**k with ascending coefficients (the top one is 1)."""

    coefficients: np.ndarray

    def __init__(self, coefficients: Sequence[complex]):
        coefficients = np.array(coefficients, dtype=np.complex128)
        if coefficients.ndim != 1 or len(coefficients) < 2:
            raise SpecificationError("a node polynomial needs degree at least 1")
        if abs(coefficients[-1] - 1) > HERMITIAN_TOLERANCE:
            raise SpecificationError(f"node polynomial must be monic, top coefficient is {coefficients[-1]}")
        if not np.all(np.isfinite(coefficients)):
            raise SpecificationError("node polynomial has non-finite coefficients")
        coefficients[-1] = 1
        self.coefficients = coefficients

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def __call__(self, w):
        return npoly.polyval(w, self.coefficients)

    def conj_eval(self, z):
        """conj(P(z)), a polynomial in conj(z) with conjugated coefficients."""
        return np.conj(self(z))

    def roots(self) -> np.ndarray:
        return npoly.polyroots(self.coefficients)

    def __repr__(self):
        return f"NodePolynomial({self.coefficients.tolist()})"


class HermitianPolynomialKernel:
    """
    Q(w, z) = sum_{j,k} c[j, k] w**j conj(z)**k with a hermitian coefficient matrix.

    The diagonal ``Q(z, z)`` is the real polynomial R(z, conj(z)) whose sub-level set {R < 0} is the domain.
    """

    coeffs: np.ndarray

    def __init__(self, coeffs, *, defining: bool = True):
        coeffs = np.array(coeffs, dtype=np.complex128)
        if coeffs.ndim != 2 or coeffs.shape[0] != coeffs.shape[1] or coeffs.shape[0] < 2:
            raise SpecificationError(f"kernel coefficients must be a square matrix of size >= 2, got {coeffs.shape}")
        if not np.all(np.isfinite(coeffs)):
            raise SpecificationError("kernel has non-finite coefficients")
        asymmetry = float(np.max(np.abs(coeffs - coeffs.conj().T)))
        scale = max(1.0, float(np.max(np.abs(coeffs))))
        if asymmetry > HERMITIAN_TOLERANCE * scale:
            raise SpecificationError(f"kernel coefficients are not hermitian (asymmetry {asymmetry:.3e})")
        if defining and abs(coeffs[-1, -1] - 1) > HERMITIAN_TOLERANCE:
            raise SpecificationError(f"defining kernel must have top coefficient 1, got {coeffs[-1, -1]}")
        self.coeffs = coeffs

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def __call__(self, w, z):
        return npoly.polyval2d(w, np.conj(z), self.coeffs)

    def diagonal(self, z):
        return np.real(self(z, z))

    def __repr__(self):
        return f"HermitianPolynomialKernel(size={self.size})"


def make_archipelago(disks: Iterable[Union[DiskSpec, Tuple[complex, float]]]) -> ArchipelagoSpec:
    specs = tuple(d if isinstance(d, DiskSpec) else DiskSpec(*d) for d in disks)
    if not specs:
        raise SpecificationError("an archipelago needs at least one disk")
    centers = [d.center for d in specs]
    if len(set(centers)) != len(centers):
        logger.info("archipelago has coincident centers; the node polynomial gets a multiple root")
    return ArchipelagoSpec(specs, max(abs(d.center) + d.radius for d in specs))


def _disk_factor(d: DiskSpec) -> np.ndarray:
    a = d.center
    return np.array([[abs(a) ** 2 - d.radius ** 2, -a], [-a.conjugate(), 1]], dtype=np.complex128)


def defining_data(arch: ArchipelagoSpec) -> Tuple[NodePolynomial, HermitianPolynomialKernel]:
    """Expand P and Q for a disk union, multiplying the per-disk factors in input order."""
    p = functools.reduce(npoly.polymul, ([-d.center, 1] for d in arch.disks), np.array([1], dtype=np.complex128))
    q = functools.reduce(scipy.signal.convolve2d, (_disk_factor(d) for d in arch.disks))
    return NodePolynomial(p), HermitianPolynomialKernel(q)


def schwarz_disk(d: DiskSpec, z: complex) -> complex:
    """S(z) = conj(a) + r**2/(z - a), equal to conj(z) on the boundary circle."""
    if z == d.center:
        raise GuardError(f"the Schwarz function of {d} has a pole at its center")
    return d.center.conjugate() + d.radius ** 2 / (z - d.center)


def boundary_points(d: DiskSpec, n: int) -> np.ndarray:
    theta = 2 * np.pi * (np.arange(n) + 0.5) / n
    return d.center + d.radius * np.exp(1j * theta)


def pairwise_disjoint(arch: ArchipelagoSpec, rel_tol: float = 1e-12) -> bool:
    """True when no two disks share interior points (tangency allowed)."""
    for i, first in enumerate(arch.disks):
        for second in arch.disks[i + 1 :]:
            gap = abs(first.center - second.center) - (first.radius + second.radius)
            if gap < -rel_tol * (1 + first.radius + second.radius):
                return False
    return True


class QuadratureDomain:
    """
    Algebraic data (P, Q) of a quadrature domain together with a bounding radius R0 of its support.

    Built either from an archipelago of disks or from raw coefficients.
    """

    node_polynomial: NodePolynomial
    kernel: HermitianPolynomialKernel
    bounding_radius: float
    archipelago: Optional[ArchipelagoSpec]

    def __init__(
        self,
        node_polynomial: NodePolynomial,
        kernel: HermitianPolynomialKernel,
        bounding_radius: Optional[float] = None,
        archipelago: Optional[ArchipelagoSpec] = None,
    ):
        if kernel.size != node_polynomial.degree + 1:
            raise SpecificationError(
                f"kernel of size {kernel.size} does not match a node polynomial of degree {node_polynomial.degree}"
            )
        self.node_polynomial = node_polynomial
        self.kernel = kernel
        self.archipelago = archipelago
        if bounding_radius is None:
            bounding_radius = _estimate_bounding_radius(node_polynomial, kernel)
        self.bounding_radius = float(bounding_radius)

    @classmethod
    def from_archipelago(cls, arch: ArchipelagoSpec) -> "QuadratureDomain":
        p, q = defining_data(arch)
        return cls(p, q, arch.bounding_radius, arch)

    @classmethod
    def from_coefficients(cls, p, q) -> "QuadratureDomain":
        """
        :param p: ascending coefficients of P, either p_0..p_{d-1} (monic top implied) or p_0..p_d.
        :param q: (d+1)x(d+1) coefficient matrix of Q.
        """
        p = list(p)
        q = np.array(q, dtype=np.complex128)
        if q.ndim == 2 and len(p) == q.shape[0] - 1:
            p.append(1)
        return cls(NodePolynomial(p), HermitianPolynomialKernel(q))

    @property
    def degree(self) -> int:
        return self.node_polynomial.degree

    @property
    def disks(self) -> Tuple[DiskSpec, ...]:
        return self.archipelago.disks if self.archipelago is not None else ()

    def __repr__(self):
        source = f"{len(self.disks)} disks" if self.archipelago is not None else "raw (P, Q)"
        return f"QuadratureDomain(d={self.degree}, R0={self.bounding_radius:.6g}, {source})"


def _estimate_bounding_radius(p: NodePolynomial, q: HermitianPolynomialKernel) -> float:
    # Q(z, z) > 0 once |z| exceeds the Cauchy-type radius, since the top term |z|^(2d) dominates.
    lower_terms = np.abs(q.coeffs).sum() - abs(q.coeffs[-1, -1])
    cauchy_radius = max(1.0, float(lower_terms))
    radii = np.linspace(0.0, cauchy_radius, _RAY_SAMPLES)
    angles = 2 * np.pi * np.arange(_RAY_COUNT) / _RAY_COUNT
    points = radii[None, :] * np.exp(1j * angles)[:, None]
    inside = q.diagonal(points) <= 0
    estimate = 0.0
    if np.any(inside):
        outermost = np.max(np.where(inside, radii[None, :], 0.0))
        estimate = float(outermost + radii[1])
    else:
        logger.warning("Q(z, z) is positive on every sampled ray; the domain looks empty")
    return max(estimate, float(np.max(np.abs(p.roots()))))


def parse_complex(value) -> complex:
    """Accept a number, a [re, im] pair or a Python complex literal string."""
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise SpecificationError(f"complex numbers are [re, im] pairs, got {value!r}")
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        try:
            return complex(value.replace(" ", ""))
        except ValueError as e:
            raise SpecificationError(f"cannot parse complex number {value!r}") from e
    if isinstance(value, (int, float, complex)) and not isinstance(value, bool):
        return complex(value)
    raise SpecificationError(f"cannot parse complex number {value!r}")


def parse_archipelago(obj) -> ArchipelagoSpec:
    """
    Parse ``{"disks": [{"cx": .., "cy": .., "r": ..}, ...]}`` or a list of ``[cx, cy, r]`` triples.
    """
    if isinstance(obj, dict):
        if "disks" not in obj:
            raise SpecificationError("archipelago JSON needs a 'disks' list")
        entries = obj["disks"]
    else:
        entries = obj
    if not isinstance(entries, list):
        raise SpecificationError("disks must be given as a list")
    disks: List[DiskSpec] = []
    for entry in entries:
        try:
            if isinstance(entry, dict):
                disks.append(DiskSpec(complex(float(entry["cx"]), float(entry["cy"])), float(entry["r"])))
            else:
                cx, cy, r = entry
                disks.append(DiskSpec(complex(float(cx), float(cy)), float(r)))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SpecificationError):
                raise
            raise SpecificationError(f"malformed disk entry {entry!r}") from e
    return make_archipelago(disks)


def parse_quadrature_domain(obj) -> QuadratureDomain:
    """Parse ``{"P": [...], "Q": [[...], ...]}`` with complex entries as [re, im] pairs, or a disk archipelago."""
    if not isinstance(obj, dict):
        return QuadratureDomain.from_archipelago(parse_archipelago(obj))
    if "P" in obj or "Q" in obj:
        try:
            p = [parse_complex(c) for c in obj["P"]]
            q = [[parse_complex(c) for c in row] for row in obj["Q"]]
        except (KeyError, TypeError) as e:
            raise SpecificationError("raw quadrature-domain input needs both 'P' and 'Q'") from e
        return QuadratureDomain.from_coefficients(p, q)
    return QuadratureDomain.from_archipelago(parse_archipelago(obj))


def two_disk_closed_form(d1: DiskSpec, d2: DiskSpec) -> bool:
    """r1**2 + r2**2 <= |a1 - a2|**2, equality included: the exact condition for 1 - E to be positive semi-definite."""
    lhs = d1.radius ** 2 + d2.radius ** 2
    rhs = abs(d1.center - d2.center) ** 2
    return lhs <= rhs * (1 + 1e-12)
