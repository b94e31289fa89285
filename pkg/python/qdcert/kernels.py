"""
Closed-form evaluation of the exponential transform E of a quadrature domain, the four-argument kernel

    L(w, z; u, v) = (E(v, z) E(w, u) - E(w, z) E(v, u)) / ((v - w) (conj(u) - conj(z)) E(w, u)),

the kernels M = 1 - E and N = 1/E - 1, and the algebraic identities tying the kernels of a union of islands to the
kernels of its parts.

E is analytic in w and anti-analytic in z. Divided differences are taken in the variables x = w and y = conj(z)
through the bidiagonal matrix calculus: for J = [[x0, 1], [0, x1]], f(J) = [[f(x0), f[x0, x1]], [0, f(x1)]]. With
X = J_x (x) I and Y = I (x) J_y, the 4x4 matrix E(X, Y) holds every value and divided difference of E on the nodes
{w, v} x {conj(z), conj(u)}, including coincident nodes.
"""

import logging
from enum import Enum
from typing import NamedTuple, Optional, Union

import numpy as np
import numpy.polynomial.polynomial as npoly
import scipy.linalg
import scipy.signal

from qdcert import GuardError, NumericalError, SpecificationError
from qdcert.domains import (
    ArchipelagoSpec,
    DiskSpec,
    HermitianPolynomialKernel,
    NodePolynomial,
    QuadratureDomain,
    make_archipelago,
)

__all__ = [
    "DEFAULT_GUARD",
    "DEFAULT_SWITCHOVER",
    "EvaluationPath",
    "IdentityResiduals",
    "KernelEvaluator",
    "PointQuad",
    "antidiagonal_L",
    "divided_table",
    "exp_transform",
    "identity_suite",
    "kernel_L",
    "kernel_LE",
    "kernel_L_disk_closed",
    "kernel_M_N",
    "quotient_L",
    "union_evaluator",
]

logger = logging.getLogger(__name__)

DEFAULT_GUARD = 1.05
DEFAULT_SWITCHOVER = 1e-6

REVERSE_CAUCHY_SCHWARZ_SLACK = 1e-12

_I2 = np.eye(2, dtype=np.complex128)
_I4 = np.eye(4, dtype=np.complex128)


class PointQuad(NamedTuple):
    """Arguments of L(w, z; u, v)."""

    w: complex
    z: complex
    u: complex
    v: complex

    @classmethod
    def of(cls, w, z, u, v) -> "PointQuad":
        return cls(complex(w), complex(z), complex(u), complex(v))

    def swapped(self) -> "PointQuad":
        """The quadruple (u, v; w, z), at which L takes the conjugate value."""
        return PointQuad(self.u, self.v, self.w, self.z)


class EvaluationPath(Enum):
    AUTO = "auto"
    QUOTIENT = "quotient"
    DIVIDED = "divided"


class KernelEvaluator:
    """
    Evaluates E and its derived kernels for a quadrature domain, outside the guarded disk of radius guard * R0.

    Disk unions use the per-disk factors 1 - r**2/((w - a)(conj(z) - conj(a))); raw (P, Q) input uses
    E = Q(w, z)/(P(w) conj(P(z))).
    """

    domain: QuadratureDomain
    guard: float
    switchover: float

    def __init__(
        self,
        domain: Union[QuadratureDomain, ArchipelagoSpec],
        guard: float = DEFAULT_GUARD,
        switchover: float = DEFAULT_SWITCHOVER,
    ):
        if isinstance(domain, ArchipelagoSpec):
            domain = QuadratureDomain.from_archipelago(domain)
        if not guard >= 1.05:
            raise SpecificationError(f"guard factor must be at least 1.05, got {guard}")
        self.domain = domain
        self.guard = float(guard)
        self.switchover = float(switchover)

    @property
    def bounding_radius(self) -> float:
        return self.domain.bounding_radius

    @property
    def guard_radius(self) -> float:
        return self.guard * self.domain.bounding_radius

    @property
    def disks(self):
        return self.domain.disks

    @property
    def is_disk_union(self) -> bool:
        return self.domain.archipelago is not None

    def with_guard(self, guard: float) -> "KernelEvaluator":
        return KernelEvaluator(self.domain, guard, self.switchover)

    def check_guard(self, *points) -> None:
        limit = self.guard_radius * (1 - 1e-12)
        for p in points:
            if np.any(np.abs(p) < limit):
                raise GuardError(f"argument {p} lies inside the guarded region |z| < {self.guard_radius:.6g}")

    def __repr__(self):
        return f"KernelEvaluator({self.domain!r}, guard={self.guard})"


def union_evaluator(ev1: KernelEvaluator, ev2: KernelEvaluator) -> KernelEvaluator:
    """The evaluator of the union of two islands, whose transform is the product E1 * E2."""
    guard = max(ev1.guard, ev2.guard)
    if ev1.is_disk_union and ev2.is_disk_union:
        return KernelEvaluator(make_archipelago(ev1.disks + ev2.disks), guard, ev1.switchover)
    p = npoly.polymul(ev1.domain.node_polynomial.coefficients, ev2.domain.node_polynomial.coefficients)
    q = scipy.signal.convolve2d(ev1.domain.kernel.coeffs, ev2.domain.kernel.coeffs)
    radius = max(ev1.bounding_radius, ev2.bounding_radius)
    return KernelEvaluator(QuadratureDomain(NodePolynomial(p), HermitianPolynomialKernel(q), radius), guard)


def _exp_transform_unchecked(ev: KernelEvaluator, w, z):
    if ev.is_disk_union:
        result = np.ones(np.broadcast(w, z).shape, dtype=np.complex128)
        for d in ev.disks:
            result = result * (1 - d.radius ** 2 / ((w - d.center) * np.conj(z - d.center)))
    else:
        p = ev.domain.node_polynomial
        result = ev.domain.kernel(w, z) / (p(w) * p.conj_eval(z))
    if np.ndim(result) == 0:
        return complex(result)
    return result


def exp_transform(ev: KernelEvaluator, w, z):
    """E(w, z). Accepts scalars or broadcastable arrays."""
    ev.check_guard(w, z)
    return _exp_transform_unchecked(ev, w, z)


def _bidiagonal(x0: complex, x1: complex) -> np.ndarray:
    return np.array([[x0, 1], [0, x1]], dtype=np.complex128)


def _shifted_inverse(x0: complex, x1: complex, a: complex) -> np.ndarray:
    d0, d1 = x0 - a, x1 - a
    return np.array([[1 / d0, -1 / (d0 * d1)], [0, 1 / d1]], dtype=np.complex128)


def _matrix_polynomial(coefficients, j: np.ndarray) -> np.ndarray:
    result = np.zeros_like(j)
    for c in coefficients[::-1]:
        result = result @ j + c * np.eye(len(j))
    return result


def divided_table(ev: KernelEvaluator, q: PointQuad) -> np.ndarray:
    """
    The 4x4 matrix E(X, Y) on the nodes x in {w, v}, y in {conj(z), conj(u)}.

    Entries: [0, 0] = E(w, z), [1, 1] = E(w, u), [2, 2] = E(v, z), [3, 3] = E(v, u), [0, 1] = E(w, [z, u]),
    [0, 2] = E([w, v], z), [1, 3] = E([w, v], u), [0, 3] = E([w, v], [z, u]).
    """
    w, z, u, v = q
    zb, ub = z.conjugate(), u.conjugate()
    if ev.is_disk_union:
        table = _I4.copy()
        for d in ev.disks:
            a = d.center
            factor = _I4 - d.radius ** 2 * np.kron(_shifted_inverse(w, v, a), _shifted_inverse(zb, ub, a.conjugate()))
            table = table @ factor
        return table

    jx = _bidiagonal(w, v)
    jy = _bidiagonal(zb, ub)
    x = np.kron(jx, _I2)
    y = np.kron(_I2, jy)
    c = ev.domain.kernel.coeffs
    size = c.shape[0]
    x_powers = [np.linalg.matrix_power(x, j) for j in range(size)]
    y_powers = [np.linalg.matrix_power(y, k) for k in range(size)]
    numerator = sum(c[j, k] * (x_powers[j] @ y_powers[k]) for j in range(size) for k in range(size))
    p = ev.domain.node_polynomial.coefficients
    denominator = np.kron(_matrix_polynomial(p, jx), _matrix_polynomial(np.conj(p), jy))
    try:
        return numerator @ scipy.linalg.inv(denominator)
    except (scipy.linalg.LinAlgError, ValueError) as e:
        raise NumericalError(f"node polynomial vanishes at an argument of {q}") from e


def _l_quotient(ev: KernelEvaluator, q: PointQuad) -> complex:
    w, z, u, v = q
    e_wu = _exp_transform_unchecked(ev, w, u)
    if e_wu == 0:
        raise NumericalError(f"E(w, u) vanishes at {q}")
    numerator = _exp_transform_unchecked(ev, v, z) * e_wu - _exp_transform_unchecked(
        ev, w, z
    ) * _exp_transform_unchecked(ev, v, u)
    return numerator / ((v - w) * (u.conjugate() - z.conjugate()) * e_wu)


def _l_divided(ev: KernelEvaluator, q: PointQuad) -> complex:
    table = divided_table(ev, q)
    e_wu = table[1, 1]
    if e_wu == 0:
        raise NumericalError(f"E(w, u) vanishes at {q}")
    return -(table[0, 3] * e_wu - table[0, 1] * table[1, 3]) / e_wu


def _choose_path(ev: KernelEvaluator, q: PointQuad) -> EvaluationPath:
    w, z, u, v = q
    threshold = ev.switchover * max(1.0, abs(v), abs(w))
    if abs(v - w) < threshold or abs(u - z) < threshold:
        return EvaluationPath.DIVIDED
    return EvaluationPath.QUOTIENT


def kernel_L(ev: KernelEvaluator, q: PointQuad, path: Union[EvaluationPath, str] = EvaluationPath.AUTO) -> complex:
    """
    L(w, z; u, v).

    The quotient form is 0/0 on v = w or u = z; near those loci (or when ``path`` asks for it) the determinant of
    divided differences -det[[E([w, v], [z, u]), E(w, [z, u])], [E([w, v], u), E(w, u)]] / E(w, u) is used.
    """
    q = PointQuad.of(*q)
    ev.check_guard(*q)
    path = EvaluationPath(path)
    if path is EvaluationPath.AUTO:
        path = _choose_path(ev, q)
    if path is EvaluationPath.QUOTIENT:
        value = _l_quotient(ev, q)
    else:
        value = _l_divided(ev, q)
    if not np.isfinite(value):
        raise NumericalError(f"L is not finite at {q}")
    return complex(value)


def quotient_L(ev: KernelEvaluator, q: PointQuad) -> complex:
    """L(w, z; u, v)/E(v, z)."""
    q = PointQuad.of(*q)
    e_vz = exp_transform(ev, q.v, q.z)
    if e_vz == 0:
        raise NumericalError(f"E(v, z) vanishes at {q}")
    return kernel_L(ev, q) / e_vz


def kernel_LE(ev: KernelEvaluator, q: PointQuad) -> complex:
    """L(w, z; u, v) E(w, u), the double finite difference of E."""
    q = PointQuad.of(*q)
    return kernel_L(ev, q) * exp_transform(ev, q.w, q.u)


def kernel_L_disk_closed(d: DiskSpec, q: PointQuad) -> complex:
    """The kernel of a single disk in closed form."""
    w, z, u, v = PointQuad.of(*q)
    a = d.center
    for p in (w, z, u, v):
        if abs(p - a) <= d.radius:
            raise GuardError(f"argument {p} lies in the closed disk {d}")
    r2 = d.radius ** 2
    cross = (w - a) * (u - a).conjugate()
    if cross == r2:
        raise NumericalError(f"pole of the disk kernel at {q}")
    return r2 / ((w - a) * (z - a).conjugate() * (v - a) * (u - a).conjugate()) / (1 - r2 / cross)


def antidiagonal_L(ev: KernelEvaluator, w: complex, z: complex) -> complex:
    """
    L(w, z; z, w) = -E(w, z) d/dw (d/dconj(z) E / E)(w, z).

    For disks the logarithmic derivative splits into the sum over disks of -r**2/((w - a)(conj(z) - conj(a)) - r**2)**2.
    Raw input goes through the confluent divided-difference table.
    """
    w, z = complex(w), complex(z)
    ev.check_guard(w, z)
    if not ev.is_disk_union:
        return kernel_L(ev, PointQuad(w, z, z, w), EvaluationPath.DIVIDED)
    total = 0j
    for d in ev.disks:
        cross = (w - d.center) * (z - d.center).conjugate()
        if cross == d.radius ** 2:
            raise NumericalError(f"E vanishes at ({w}, {z})")
        total += d.radius ** 2 / (cross - d.radius ** 2) ** 2
    return complex(_exp_transform_unchecked(ev, w, z) * total)


def kernel_M_N(ev: KernelEvaluator, w, z):
    """(M, N) = (1 - E, 1/E - 1)."""
    e = exp_transform(ev, w, z)
    if np.any(e == 0):
        raise NumericalError(f"E vanishes at ({w}, {z})")
    return 1 - e, 1 / e - 1


class IdentityResiduals(NamedTuple):
    """Absolute residuals of the merging identities at one quadruple."""

    merging_1: float
    merging_2: float
    merging_3: float
    merging_4: float
    merging_5: float

    # 1 + N = (1 + N1)(1 + N2), at (w, z).
    n_product: float

    # 1 - M = (1 - M1)(1 - M2), at (w, z).
    m_complement: float

    # |E(w, z)|**2 - E(w, w) E(z, z) for the union; must be non-negative.
    reverse_cauchy_schwarz: float

    @property
    def max_residual(self) -> float:
        return max(
            self.merging_1,
            self.merging_2,
            self.merging_3,
            self.merging_4,
            self.merging_5,
            self.n_product,
            self.m_complement,
        )

    def passed(self, tol: float = 1e-12) -> bool:
        return self.max_residual <= tol and self.reverse_cauchy_schwarz >= -REVERSE_CAUCHY_SCHWARZ_SLACK


class _Parts(NamedTuple):
    L: complex
    e_vz: complex
    e_wu: complex
    e_wz: complex
    e_vu: complex


def _parts(ev: Optional[KernelEvaluator], q: PointQuad) -> _Parts:
    if ev is None:
        return _Parts(0j, 1 + 0j, 1 + 0j, 1 + 0j, 1 + 0j)
    w, z, u, v = q
    return _Parts(
        kernel_L(ev, q),
        _exp_transform_unchecked(ev, v, z),
        _exp_transform_unchecked(ev, w, u),
        _exp_transform_unchecked(ev, w, z),
        _exp_transform_unchecked(ev, v, u),
    )


def identity_suite(ev1: KernelEvaluator, ev2: Optional[KernelEvaluator], q: PointQuad) -> IdentityResiduals:
    """
    Residuals of the merging identities between the union of two islands and its parts.

    ``ev2 = None`` stands for an empty second island (L2 = 0, E2 = 1).
    """
    q = PointQuad.of(*q)
    w, z, u, v = q
    union = ev1 if ev2 is None else union_evaluator(ev1, ev2)
    union.check_guard(*q)
    whole = _parts(union, q)
    first = _parts(ev1, q)
    second = _parts(ev2, q)
    delta = (v - w) * (u.conjugate() - z.conjugate())

    merging_1 = first.L * second.e_vz + second.L * first.e_vz - delta * first.L * second.L
    lq, lq1, lq2 = whole.L / whole.e_vz, first.L / first.e_vz, second.L / second.e_vz
    merging_2 = lq1 + lq2 - delta * lq1 * lq2
    carry = first.e_wz * first.e_vu / first.e_wu
    merging_3 = first.L * second.e_vz + carry * second.L
    merging_4 = lq1 + carry / first.e_vz * lq2
    merging_5 = (first.L * first.e_wu) * second.e_vz * second.e_wu + (second.L * second.e_wu) * first.e_wz * first.e_vu

    n1, n2, n = 1 / first.e_wz - 1, 1 / second.e_wz - 1, 1 / whole.e_wz - 1
    m1, m2, m = 1 - first.e_wz, 1 - second.e_wz, 1 - whole.e_wz

    e_ww = _exp_transform_unchecked(union, w, w)
    e_zz = _exp_transform_unchecked(union, z, z)
    reverse_cs = abs(whole.e_wz) ** 2 - (e_ww * e_zz).real

    residuals = IdentityResiduals(
        merging_1=abs(whole.L - merging_1),
        merging_2=abs(lq - merging_2),
        merging_3=abs(whole.L - merging_3),
        merging_4=abs(lq - merging_4),
        merging_5=abs(whole.L * whole.e_wu - merging_5),
        n_product=abs(n - (n1 + n2 + n1 * n2)),
        m_complement=abs((1 - m) - (1 - m1) * (1 - m2)),
        reverse_cauchy_schwarz=float(reverse_cs),
    )
    logger.debug("identity residuals at %s: %s", q, residuals)
    return residuals
