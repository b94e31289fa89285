"""
The deformation of the two orthogonal disks D(-1, sqrt 2) and D(1, sqrt 2) through the sub-level sets

    Omega(t) = {Q(z) < t},  Q(z) = |z|**4 - 4|z|**2 - z**2 - conj(z)**2 + 1,  0 <= t <= 1.

Q is the product of the two circle equations, so Omega(0) is the symmetric difference of the disks and the lens
between them is the hole. The integer density g_t equals 1 on Omega(t) and 2 on the bounded hole; every g_t has
the quadrature identity of the two disks, the integral of h g_t being 2 pi (h(-1) + h(1)) for harmonic h. At t = 1
the hole has shrunk to the origin and Omega(1) is the Neumann oval.

Grids are classified and integrated by numba kernels, one row per parallel iteration.
"""

import cmath
import logging
import math
from pathlib import Path
from typing import NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pyarrow
import pyarrow.csv
from numba import jit, prange

from qdcert import GuardError, SpecificationError

__all__ = [
    "BranchPoints",
    "DensityField",
    "HarmonicFunction",
    "QuadratureCheckReport",
    "branch_points",
    "density_field",
    "eval_Q",
    "harmonic_function",
    "interface_fidelity",
    "level_curve_points",
    "quadrature_identity_check",
    "schwarz_branches",
]

logger = logging.getLogger(__name__)

DEFAULT_GRID = 2000
DEFAULT_X_MAX = 2.6
MIN_GRID = 256
MIN_X_MAX = 1 + math.sqrt(2)
CUT_DISTANCE = 1e-6

VALUE_OUTSIDE = 0
VALUE_INSIDE = 1
VALUE_HOLE = 2


def _supported(t: float) -> bool:
    return 0.0 <= t <= 1.0


def eval_Q(z):
    """Q(z, conj z); real for scalars and arrays alike."""
    z = np.asarray(z, dtype=np.complex128)
    r2 = (z * z.conj()).real
    value = r2 ** 2 - 4 * r2 - 2 * (z * z).real + 1
    if value.ndim == 0:
        return float(value)
    return value


def _grad_Q(z):
    """|grad Q| = 2 |dQ/dconj(z)|."""
    z = np.asarray(z, dtype=np.complex128)
    return 2 * np.abs(2 * z * z * z.conj() - 4 * z - 2 * z.conj())


@jit(nopython=True, parallel=True)
def _classify(n, x_max, t, values):
    h = 2 * x_max / n
    for i in prange(n):
        y = -x_max + (i + 0.5) * h
        for j in range(n):
            x = -x_max + (j + 0.5) * h
            r2 = x * x + y * y
            q = r2 * r2 - 4 * r2 - 2 * (x * x - y * y) + 1
            values[i, j] = 1 if q < t else 0


@jit(nopython=True)
def _flood_fill(inside, start_row, start_col):
    """Component of the zero cells of ``inside`` containing the start cell (4-connected)."""
    rows, cols = inside.shape
    component = np.zeros((rows, cols), dtype=np.bool_)
    if inside[start_row, start_col] != 0:
        return component, False
    offsets_row = np.array([1, -1, 0, 0])
    offsets_col = np.array([0, 0, 1, -1])
    queue = np.empty(rows * cols, dtype=np.int64)
    queue[0] = start_row * cols + start_col
    component[start_row, start_col] = True
    head = 0
    tail = 1
    touched = False
    while head < tail:
        cell = queue[head]
        head += 1
        r = cell // cols
        c = cell % cols
        if r == 0 or c == 0 or r == rows - 1 or c == cols - 1:
            touched = True
        for k in range(4):
            nr = r + offsets_row[k]
            nc = c + offsets_col[k]
            if 0 <= nr < rows and 0 <= nc < cols and not component[nr, nc] and inside[nr, nc] == 0:
                component[nr, nc] = True
                queue[tail] = nr * cols + nc
                tail += 1
    return component, touched


@jit(nopython=True, parallel=True)
def _integrate_polynomial(values, x_max, coefficients):
    n = values.shape[0]
    h = 2 * x_max / n
    rows = np.zeros(n, dtype=np.complex128)
    degree = len(coefficients) - 1
    for i in prange(n):
        y = -x_max + (i + 0.5) * h
        acc = 0j
        for j in range(n):
            g = values[i, j]
            if g != 0:
                z = (-x_max + (j + 0.5) * h) + 1j * y
                p = coefficients[degree] + 0j
                for k in range(degree - 1, -1, -1):
                    p = p * z + coefficients[k]
                acc += g * p
        rows[i] = acc
    return rows.sum() * h * h


class DensityField(NamedTuple):
    """The density g_t sampled at the centres of an n x n grid on [-x_max, x_max]**2; rows run along y."""

    t: float
    n: int
    x_max: float

    # int8 values in {0, 1, 2}.
    values: np.ndarray

    # t outside [0, 1]: the signs are still classified but the density has no quadrature identity.
    unsupported: bool = False

    @property
    def cell_size(self) -> float:
        return 2 * self.x_max / self.n

    @property
    def cell_area(self) -> float:
        return self.cell_size ** 2

    @property
    def mass(self) -> float:
        return float(self.values.sum(dtype=np.int64)) * self.cell_area

    @property
    def hole_cells(self) -> int:
        return int(np.count_nonzero(self.values == VALUE_HOLE))

    def axis(self) -> np.ndarray:
        return -self.x_max + (np.arange(self.n) + 0.5) * self.cell_size

    def centers(self) -> np.ndarray:
        axis = self.axis()
        return axis[None, :] + 1j * axis[:, None]

    def to_table(self) -> pyarrow.Table:
        axis = self.axis()
        x = np.tile(axis, self.n)
        y = np.repeat(axis, self.n)
        return pyarrow.table({"x": x, "y": y, "value": self.values.ravel().astype(np.int8)})

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        pyarrow.csv.write_csv(self.to_table(), str(path))
        logger.info("density grid written to %s", path)
        return path


def density_field(t: float, n: int = DEFAULT_GRID, x_max: float = DEFAULT_X_MAX) -> DensityField:
    """
    Classify cells by the sign of Q - t and mark the bounded component of {Q >= t} around the origin as the hole.
    """
    if n < MIN_GRID:
        raise SpecificationError(f"density grid needs n >= {MIN_GRID}, got {n}")
    if x_max < MIN_X_MAX:
        raise SpecificationError(f"grid half-width must be at least 1 + sqrt(2), got {x_max}")
    unsupported = not _supported(t)
    if unsupported:
        logger.warning("t = %g lies outside [0, 1]; the density is computed from signs only", t)

    values = np.empty((n, n), dtype=np.int8)
    _classify(n, float(x_max), float(t), values)
    hole, touched = _flood_fill(values, n // 2, n // 2)
    if touched:
        logger.warning("the component of the origin reaches the grid border at t = %g; no hole is marked", t)
    else:
        values[hole] = VALUE_HOLE
    logger.debug("density field t=%g n=%d: %d hole cells", t, n, int(np.count_nonzero(hole)) if not touched else 0)
    return DensityField(float(t), int(n), float(x_max), values, unsupported)


def interface_fidelity(field: DensityField) -> float:
    """
    max |Q - t| / (h |grad Q|) over the cells of Omega(t) next to a cell outside it. Sits near or below 1 wherever
    the level curve is regular.
    """
    inside = field.values == VALUE_INSIDE
    outside = field.values == VALUE_OUTSIDE
    neighbour_outside = np.zeros_like(inside)
    neighbour_outside[1:, :] |= outside[:-1, :]
    neighbour_outside[:-1, :] |= outside[1:, :]
    neighbour_outside[:, 1:] |= outside[:, :-1]
    neighbour_outside[:, :-1] |= outside[:, 1:]
    interface = inside & neighbour_outside
    if not np.any(interface):
        return 0.0
    z = field.centers()[interface]
    ratio = np.abs(eval_Q(z) - field.t) / (field.cell_size * _grad_Q(z))
    return float(np.max(ratio))


class BranchPoints(NamedTuple):
    """Branch points +-iA (inner) and +-iB (outer) of the Schwarz function of Omega(t)."""

    t: float
    inner: float
    outer: float

    # t outside (0, 1): the pairs have fused and the limit values are returned.
    fused: bool = False

    def points(self) -> Tuple[complex, complex, complex, complex]:
        return 1j * self.inner, -1j * self.inner, 1j * self.outer, -1j * self.outer


def branch_points(t: float) -> BranchPoints:
    """
    The zeros of z**4 + (2 + t) z**2 + 1 - t, where the two sheets of the Schwarz function meet: A**2 and B**2 are
    (2 + t -+ sqrt(t (t + 8)))/2.
    """
    fused = not 0 < t < 1
    if fused:
        if not _supported(t):
            logger.warning("t = %g lies outside [0, 1]; returning the fused limit", t)
        t_eff = min(max(float(t), 0.0), 1.0)
    else:
        t_eff = float(t)
    root = math.sqrt(t_eff * (t_eff + 8))
    inner = math.sqrt(max((2 + t_eff - root) / 2, 0.0))
    outer = math.sqrt((2 + t_eff + root) / 2)
    return BranchPoints(float(t), inner, outer, fused)


def _schwarz_radical(z: complex, bp: BranchPoints) -> complex:
    """sqrt((z**2 + A**2)(z**2 + B**2)), cut along [-iA, iA] and the vertical rays beyond +-iB."""
    return z * cmath.sqrt(1 + bp.inner ** 2 / (z * z)) * cmath.sqrt(z * z + bp.outer ** 2)


def schwarz_branches(t: float, z: complex) -> Tuple[complex, complex]:
    """
    The two values (2z +- r(z))/(z**2 - 1) of the Schwarz function S_t, r(z)**2 = (z**2 + 1)**2 + t (z**2 - 1).
    For real z > 1 the first branch is the one equal to conj(z) on the outer boundary.

    :raises GuardError: at the poles +-1 or within 1e-6 of a branch cut.
    """
    z = complex(z)
    bp = branch_points(t)
    if abs(z - 1) < CUT_DISTANCE or abs(z + 1) < CUT_DISTANCE:
        raise GuardError(f"{z} is a pole of the Schwarz function")
    on_axis = abs(z.real) < CUT_DISTANCE
    if on_axis and (abs(z.imag) <= bp.inner + CUT_DISTANCE or abs(z.imag) >= bp.outer - CUT_DISTANCE):
        raise GuardError(f"{z} lies on a branch cut of the Schwarz function")
    r = _schwarz_radical(z, bp)
    denominator = z * z - 1
    return (2 * z + r) / denominator, (2 * z - r) / denominator


def level_curve_points(t: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Points of the outer boundary and of the hole boundary of Omega(t) on n rays: |z|**2 solves
    s**2 - (4 + 2 cos 2 theta) s + 1 - t = 0. The hole boundary is empty for t >= 1.
    """
    if n < 1:
        raise SpecificationError(f"need at least one ray, got {n}")
    theta = 2 * np.pi * np.arange(n) / n
    b = 4 + 2 * np.cos(2 * theta)
    root = np.sqrt(b ** 2 - 4 * (1 - t))
    direction = np.exp(1j * theta)
    outer = np.sqrt((b + root) / 2) * direction
    if t >= 1:
        return outer, np.empty(0, dtype=np.complex128)
    hole = np.sqrt((b - root) / 2) * direction
    return outer, hole


class HarmonicFunction(NamedTuple):
    """A harmonic test function: a polynomial in z, or the real part of one."""

    tag: str

    # Ascending coefficients.
    coefficients: Tuple[complex, ...]

    real_part: bool = False

    def __call__(self, z):
        value = np.polynomial.polynomial.polyval(z, np.array(self.coefficients, dtype=np.complex128))
        return np.real(value) if self.real_part else value


_NAMED_FUNCTIONS = {
    "1": HarmonicFunction("1", (1,)),
    "z": HarmonicFunction("z", (0, 1)),
    "z2": HarmonicFunction("z2", (0, 0, 1)),
    "z3": HarmonicFunction("z3", (0, 0, 0, 1)),
    "re_z2": HarmonicFunction("re_z2", (0, 0, 1), real_part=True),
}


def harmonic_function(tag: Union[str, Sequence[complex]]) -> HarmonicFunction:
    """
    Look up a harmonic test function by tag (1, z, z2, z3, re_z2) or build one from polynomial coefficients.

    :raises SpecificationError: for unknown tags; functions such as |z|**2 are not harmonic and have no tag.
    """
    if isinstance(tag, str):
        key = tag.strip().replace("^", "").replace("**", "").replace("²", "2").replace("³", "3")
        if key not in _NAMED_FUNCTIONS:
            raise SpecificationError(
                f"unknown or non-harmonic test function {tag!r}; expected one of {', '.join(_NAMED_FUNCTIONS)}"
            )
        return _NAMED_FUNCTIONS[key]
    coefficients = tuple(complex(c) for c in tag)
    if not coefficients:
        raise SpecificationError("a polynomial test function needs coefficients")
    return HarmonicFunction("custom", coefficients)


class QuadratureCheckReport(NamedTuple):
    t: float
    function: str
    lhs: complex
    rhs: complex
    abs_err: float

    # Absolute error over max(|rhs|, 4 pi).
    rel_err: float

    n: int

    def as_dict(self):
        return {
            "t": self.t,
            "h": self.function,
            "lhs": [self.lhs.real, self.lhs.imag],
            "rhs": [self.rhs.real, self.rhs.imag],
            "abs_err": self.abs_err,
            "rel_err": self.rel_err,
            "n": self.n,
        }


def quadrature_identity_check(
    t: float,
    h: Union[str, HarmonicFunction, Sequence[complex]],
    n: int = DEFAULT_GRID,
    x_max: float = DEFAULT_X_MAX,
    field: Optional[DensityField] = None,
) -> QuadratureCheckReport:
    """Midpoint-rule integral of h g_t against 2 pi (h(-1) + h(1)). A precomputed ``field`` replaces t, n and x_max."""
    function = h if isinstance(h, HarmonicFunction) else harmonic_function(h)
    if field is None:
        field = density_field(t, n, x_max)
    t, n = field.t, field.n
    coefficients = np.array(function.coefficients, dtype=np.complex128)
    lhs = complex(_integrate_polynomial(field.values, field.x_max, coefficients))
    rhs = 2 * np.pi * complex(function(-1.0 + 0j) + function(1.0 + 0j))
    if function.real_part:
        lhs = complex(lhs.real, 0.0)
    abs_err = abs(lhs - rhs)
    rel_err = abs_err / max(abs(rhs), 4 * np.pi)
    logger.debug("quadrature identity t=%g h=%s: lhs=%s rhs=%s rel_err=%.3e", t, function.tag, lhs, rhs, rel_err)
    return QuadratureCheckReport(float(t), function.tag, lhs, rhs, float(abs_err), float(rel_err), int(n))
