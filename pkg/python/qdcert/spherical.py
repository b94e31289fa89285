"""
Spherical geometry of disks on the Riemann sphere: rigid Mobius rotations z -> (a z + b)/(-conj(b) z + conj(a)),
the chordal distance, spherical areas under the form 4 dx dy/(1 + |z|**2)**2, and the orthogonal pair
D(-1, sqrt 2), D(1, sqrt 2), which the rotation w = (z + i)/(z - i) sends to two half-planes bounded by the lines
Re w = -Im w and Re w = Im w.

The point at infinity is the value :data:`INFINITY`.
"""

import cmath
import logging
import math
from enum import Enum
from typing import NamedTuple, Union

import numpy as np

from qdcert import GuardError, SpecificationError
from qdcert.domains import DiskSpec

__all__ = [
    "INFINITY",
    "MobiusTransform",
    "OrthogonalPairReport",
    "SphericalAreaReport",
    "chordal_distance",
    "geodesic_center",
    "image_circle",
    "mobius_apply",
    "mobius_compose",
    "mobius_inverse",
    "orthogonal_halfplane_check",
    "spherical_area",
]

logger = logging.getLogger(__name__)

DEFAULT_SPHERE_SAMPLES = 512
MIN_AREA_SAMPLES = 512
MIN_BOUNDARY_SAMPLES = 100
SQRT2 = math.sqrt(2)

# Boundary samples this close to a pole of the w-map are skipped; their images lie near infinity.
_POLE_DISTANCE = 1e-6


class Extended(Enum):
    INFINITY = "infinity"


INFINITY = Extended.INFINITY

ExtendedPoint = Union[complex, Extended]


class MobiusTransform(NamedTuple):
    """The rotation of the sphere with coefficients (a, b), |a|**2 + |b|**2 > 0."""

    a: complex
    b: complex

    @classmethod
    def create(cls, a, b) -> "MobiusTransform":
        a, b = complex(a), complex(b)
        if abs(a) ** 2 + abs(b) ** 2 == 0:
            raise SpecificationError("a rigid Mobius transform needs (a, b) != (0, 0)")
        return cls(a, b)

    @classmethod
    def w_map(cls) -> "MobiusTransform":
        """w = (z + i)/(z - i): the intersection points +-i go to infinity and 0."""
        phase = cmath.exp(1j * math.pi / 4)
        return cls(phase, 1j * phase)

    @classmethod
    def u_map(cls) -> "MobiusTransform":
        """u = (z - (sqrt 2 - 1))/((sqrt 2 - 1) z + 1), moving sqrt 2 - 1 to 0 and -1 - sqrt 2 to infinity."""
        return cls(1.0 + 0j, -(SQRT2 - 1) + 0j)

    @classmethod
    def moving_to_origin(cls, c: complex) -> "MobiusTransform":
        return cls(1.0 + 0j, -complex(c))

    def matrix(self) -> np.ndarray:
        return np.array([[self.a, self.b], [-self.b.conjugate(), self.a.conjugate()]], dtype=np.complex128)


def mobius_apply(m: MobiusTransform, z: ExtendedPoint) -> ExtendedPoint:
    c = -m.b.conjugate()
    d = m.a.conjugate()
    if z is INFINITY:
        return INFINITY if c == 0 else m.a / c
    z = complex(z)
    denominator = c * z + d
    if denominator == 0:
        return INFINITY
    return (m.a * z + m.b) / denominator


def mobius_compose(first: MobiusTransform, second: MobiusTransform) -> MobiusTransform:
    """first o second."""
    product = first.matrix() @ second.matrix()
    return MobiusTransform(complex(product[0, 0]), complex(product[0, 1]))


def mobius_inverse(m: MobiusTransform) -> MobiusTransform:
    return MobiusTransform(m.a.conjugate(), -m.b)


def chordal_distance(z1: ExtendedPoint, z2: ExtendedPoint) -> float:
    """Distance on the unit sphere: antipodal points are 2 apart."""
    if z1 is INFINITY and z2 is INFINITY:
        return 0.0
    if z1 is INFINITY or z2 is INFINITY:
        finite = complex(z2 if z1 is INFINITY else z1)
        return 2 / math.sqrt(1 + abs(finite) ** 2)
    z1, z2 = complex(z1), complex(z2)
    return 2 * abs(z1 - z2) / math.sqrt((1 + abs(z1) ** 2) * (1 + abs(z2) ** 2))


def geodesic_center(d: DiskSpec) -> complex:
    """
    The point c inside ``d`` whose rotation to the origin turns the boundary of ``d`` into a centred circle. On the
    ray through the Euclidean centre a = s e^(i phi), c = x e^(i phi) with s x**2 - (s**2 - r**2 - 1) x - s = 0.
    """
    s = abs(d.center)
    if s == 0:
        return 0j
    direction = d.center / s
    b = -(s ** 2 - d.radius ** 2 - 1)
    q = -0.5 * (b + math.copysign(math.sqrt(b * b + 4 * s * s), b))
    roots = (q / s, -s / q)
    x = min(roots, key=lambda root: abs(root - s))
    return x * direction


def image_circle(m: MobiusTransform, d: DiskSpec) -> DiskSpec:
    """
    The circle through the images of three boundary points of ``d``.

    :raises GuardError: when the image is a line, i.e. the boundary passes through the pole of ``m``.
    """
    points = [d.center + d.radius * cmath.exp(2j * math.pi * k / 3) for k in range(3)]
    images = [mobius_apply(m, p) for p in points]
    if any(p is INFINITY for p in images):
        raise GuardError(f"the image of the boundary of {d} passes through infinity")
    z1, z2, z3 = images
    w = (z3 - z1) / (z2 - z1)
    if abs(w.imag) < 1e-12 * max(1.0, abs(w)):
        raise GuardError(f"the image of the boundary of {d} is a line")
    center = z1 + (z2 - z1) * (w - abs(w) ** 2) / (w - w.conjugate())
    return DiskSpec(center, abs(center - z1))


class SphericalAreaReport(NamedTuple):
    region: str
    closed_form: float
    numeric: float

    @property
    def abs_err(self) -> float:
        return abs(self.closed_form - self.numeric)

    def as_dict(self):
        return {
            "region": self.region,
            "closed_form": self.closed_form,
            "numeric": self.numeric,
            "abs_err": self.abs_err,
        }


def _centered_area(radius: float) -> float:
    return 4 * math.pi * radius ** 2 / (1 + radius ** 2)


def _numeric_area(d: DiskSpec, n: int) -> float:
    """Gauss-Legendre in the radius times the trapezoid rule in the angle, polar about the Euclidean centre."""
    nodes, weights = np.polynomial.legendre.leggauss(max(n // 4, 32))
    rho = d.radius * (nodes + 1) / 2
    rho_weights = weights * d.radius / 2
    theta = 2 * np.pi * np.arange(n) / n
    z = d.center + rho[:, None] * np.exp(1j * theta)[None, :]
    density = 4 / (1 + np.abs(z) ** 2) ** 2
    radial = (density.mean(axis=1) * 2 * np.pi) * rho
    return float(np.sum(rho_weights * radial))


def spherical_area(d: DiskSpec, n: int = DEFAULT_SPHERE_SAMPLES) -> SphericalAreaReport:
    """
    Spherical area of a disk in closed form, by rotating its geodesic centre to the origin, and by direct
    quadrature of the area form.
    """
    if n < MIN_AREA_SAMPLES:
        raise SpecificationError(f"spherical area quadrature needs n >= {MIN_AREA_SAMPLES}, got {n}")
    c = geodesic_center(d)
    if c == 0:
        closed = _centered_area(d.radius)
    else:
        image = image_circle(MobiusTransform.moving_to_origin(c), d)
        logger.debug("rotated boundary of %s: centre %s, radius %.15g", d, image.center, image.radius)
        closed = _centered_area(image.radius)
    numeric = _numeric_area(d, n)
    report = SphericalAreaReport(f"D({d.center}, {d.radius})", closed, numeric)
    logger.debug("spherical area of %s: %.15g (numeric %.15g)", d, closed, numeric)
    return report


class OrthogonalPairReport(NamedTuple):
    """Residuals of the half-plane picture of the orthogonal disks D(-1, sqrt 2) and D(1, sqrt 2)."""

    # max |Re w - Im w| / max(1, |w|) on the image of the boundary of D(1, sqrt 2), and |Re w + Im w| for D(-1, ...).
    line_plus: float
    line_minus: float

    # Spherical areas with multiplicity, closed form and numeric, against 4 pi.
    area_sum: float
    area_residual: float
    numeric_area_residual: float

    # sqrt 2 - 1 is the geodesic centre of D(1, sqrt 2) and lies on the boundary of D(-1, sqrt 2).
    center_residual: float
    boundary_residual: float

    # The u-map sends sqrt 2 - 1 to 0 and -1 - sqrt 2 to infinity.
    mirror_ok: bool

    samples: int

    def passed(self, line_tol: float = 1e-10, area_tol: float = 1e-6) -> bool:
        return (
            max(self.line_plus, self.line_minus) <= line_tol
            and self.area_residual <= area_tol
            and self.numeric_area_residual <= area_tol
            and max(self.center_residual, self.boundary_residual) <= 1e-12
            and self.mirror_ok
        )

    def as_dict(self):
        return self._asdict()


def _line_residual(d: DiskSpec, n: int, sign: float) -> float:
    m = MobiusTransform.w_map()
    residual = 0.0
    for k in range(n):
        z = d.center + d.radius * cmath.exp(2j * math.pi * k / n)
        if min(abs(z - 1j), abs(z + 1j)) < _POLE_DISTANCE:
            continue
        w = mobius_apply(m, z)
        if w is INFINITY:
            continue
        residual = max(residual, abs(w.real + sign * w.imag) / max(1.0, abs(w)))
    return residual


def orthogonal_halfplane_check(n: int = DEFAULT_SPHERE_SAMPLES) -> OrthogonalPairReport:
    if n < MIN_BOUNDARY_SAMPLES:
        raise SpecificationError(f"need at least {MIN_BOUNDARY_SAMPLES} boundary samples, got {n}")
    right = DiskSpec(1.0, SQRT2)
    left = DiskSpec(-1.0, SQRT2)
    areas = [spherical_area(d, max(n, MIN_AREA_SAMPLES)) for d in (left, right)]
    area_sum = sum(a.closed_form for a in areas)
    numeric_sum = sum(a.numeric for a in areas)

    center = geodesic_center(right)
    u_map = MobiusTransform.u_map()
    mirror_ok = (
        chordal_distance(mobius_apply(u_map, SQRT2 - 1), 0) <= 1e-12
        and chordal_distance(mobius_apply(u_map, -1 - SQRT2), INFINITY) <= 1e-12
    )
    report = OrthogonalPairReport(
        line_plus=_line_residual(right, n, -1.0),
        line_minus=_line_residual(left, n, 1.0),
        area_sum=area_sum,
        area_residual=abs(area_sum - 4 * math.pi),
        numeric_area_residual=abs(numeric_sum - 4 * math.pi),
        center_residual=abs(center - (SQRT2 - 1)),
        boundary_residual=abs(abs((SQRT2 - 1) - left.center) - left.radius),
        mirror_ok=bool(mirror_ok),
        samples=n,
    )
    logger.info("orthogonal pair check: %s", "passed" if report.passed() else "failed")
    return report
