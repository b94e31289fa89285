"""
The constructive certificate for quadrature domains: a hyponormal operator T with rank-one self-commutator
[T*, T] = xi xi*, built as a lower block-bidiagonal matrix

        | D_0                 |
    T = | A_0  D_1            |
        |      A_1  D_2       |
        |           ...  ...  |

from a sums-of-squares seed (D_0, xi) of P(w) conj(P(z)) (1 - E(w, z)) and the recurrence

    A_k**2 = A_{k-1}**2 - [D_k*, D_k],  A_{-1}**2 = xi xi*,  D_{k+1} = A_k**-1 D_k A_k.

Chain step 0 checks the seed; step s >= 1 forms A_{s-1}**2, checks it is PSD, takes its square root and produces
D_s. The union of islands is a quadrature domain of the expected kind only while every A_k**2 stays PSD and the D_k
stay bounded.
"""

import logging
from enum import Enum
from pathlib import Path
from typing import List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pyarrow
import pyarrow.csv
import scipy.linalg

from qdcert import ChainError, GuardError, NumericalError, SpecificationError
from qdcert.domains import (
    DiskSpec,
    HermitianPolynomialKernel,
    NodePolynomial,
    QuadratureDomain,
    make_archipelago,
    two_disk_closed_form,
)
from qdcert.kernels import KernelEvaluator, PointQuad, exp_transform
from qdcert.numcore import (
    DEFAULT_TOLERANCE,
    hermitize,
    herm_min_eig,
    psd_inverse,
    psd_sqrt,
    psd_threshold,
    spectral_norm,
)
from qdcert.sampling import GramReport, SamplePlan, gram_report

__all__ = [
    "ChainHistory",
    "ChainReport",
    "ChainState",
    "ChainVerdict",
    "EllipseProbeReport",
    "FailureMode",
    "MergingResiduals",
    "NeumannResult",
    "SeedData",
    "TruncatedOperator",
    "assemble_truncated",
    "chain_run",
    "chain_trace_table",
    "ellipse_negativity_probe",
    "merging_gram_residual",
    "neumann_L",
    "numerator_direct",
    "operator_L",
    "operator_model",
    "pade_numerator",
    "resolvent_pair",
    "seed_L",
    "seed_coefficients",
    "seed_from_domain",
    "sos_seed",
    "two_disk_seed",
    "two_disk_threshold_table",
    "write_chain_trace",
]

logger = logging.getLogger(__name__)

DEFAULT_RANK_TOLERANCE = 1e-10
DEFAULT_SINGULAR_CONDITION = 1e12
OPERATOR_GUARD = 1.5
THRESHOLD_PRECISION = 1e-12
DEFAULT_FIXED_POINT_TOLERANCE = 1e-7

_SEED_SOLVE_TOLERANCE = 1e-8


class SeedData(NamedTuple):
    """The sums-of-squares seed of a quadrature domain; ``d0`` and ``xi`` are None when ``coeffs`` is not PSD."""

    node_polynomial: NodePolynomial
    kernel: HermitianPolynomialKernel

    # d x d coefficients of w**j conj(z)**k in P(w) conj(P(z)) - Q(w, z).
    coeffs: np.ndarray

    min_eig: float
    psd: bool

    # r x d factor with coeffs = v* v; column k is v_k.
    v: Optional[np.ndarray]

    d0: Optional[np.ndarray]
    xi: Optional[np.ndarray]

    bounding_radius: float

    @property
    def degree(self) -> int:
        return self.node_polynomial.degree

    @property
    def block_size(self) -> int:
        return 0 if self.xi is None else len(self.xi)

    @property
    def xi_norm2(self) -> float:
        return float(np.vdot(self.xi, self.xi).real)

    def reconstruction_residual(self, points: Sequence[complex]) -> float:
        """max |<(D0* - conj z)^-1 xi, (D0* - conj w)^-1 xi> conj(P(z)) P(w) - sum c_jk w^j conj(z)^k| on a grid."""
        if not self.psd:
            raise ChainError("the seed is not PSD and has no factorization")
        residual = 0.0
        eye = np.eye(self.block_size)
        p = self.node_polynomial
        for w in points:
            rw = scipy.linalg.solve(self.d0.conj().T - np.conj(w) * eye, self.xi)
            for z in points:
                rz = scipy.linalg.solve(self.d0.conj().T - np.conj(z) * eye, self.xi)
                lhs = np.vdot(rw, rz) * p.conj_eval(z) * p(w)
                rhs = np.polynomial.polynomial.polyval2d(w, np.conj(z), self.coeffs)
                residual = max(residual, abs(lhs - rhs))
        return residual


class FailureMode(Enum):
    SEED_NOT_PSD = "SEED_NOT_PSD"
    A_SQUARED_NOT_PSD = "A_SQUARED_NOT_PSD"
    A_SINGULAR = "A_SINGULAR"
    NORM_BLOWUP = "NORM_BLOWUP"


class ChainVerdict(Enum):
    CERTIFIED_UP_TO_K = "CERTIFIED_UP_TO_K"
    FAILED = "FAILED"


class ChainState(NamedTuple):
    """Step s of the chain: D_s together with the A_{s-1} it was produced from (None at step 0)."""

    step: int
    d: np.ndarray
    a: Optional[np.ndarray]
    a_squared: Optional[np.ndarray]

    # At step 0 these describe the seed coefficient matrix and xi.
    min_eig_a2: float
    trace_a2: float

    norm_d: float

    # A repeat of the state at the step where the chain reached its fixed point.
    frozen: bool = False


class ChainReport(NamedTuple):
    verdict: ChainVerdict

    # Number of steps requested.
    steps: int

    failed_step: Optional[int] = None
    mode: Optional[FailureMode] = None

    # The matrix that exhibits the failure: the seed coefficients, A**2, A or D.
    witness: Optional[np.ndarray] = None

    min_eig: Optional[float] = None
    tolerance: float = DEFAULT_TOLERANCE
    norm_cap: float = np.inf
    singular_cond: float = DEFAULT_SINGULAR_CONDITION

    # First step whose state is repeated for the rest of the run, when the chain converged.
    fixed_point: Optional[int] = None

    @property
    def certified(self) -> bool:
        return self.verdict is ChainVerdict.CERTIFIED_UP_TO_K

    @property
    def label(self) -> str:
        if self.certified:
            return f"CERTIFIED_UP_TO_K({self.steps})"
        return f"FAILED_AT({self.failed_step}, {self.mode.value})"

    def survived_through(self, step: int) -> bool:
        """Whether the PSD check of ``step`` was reached and passed."""
        if self.certified:
            return step <= self.steps
        if self.failed_step > step:
            return True
        return self.failed_step == step and self.mode in (FailureMode.A_SINGULAR, FailureMode.NORM_BLOWUP)

    def recheck(self) -> bool:
        """Re-evaluate the failure on the recorded witness."""
        if self.certified:
            return False
        if self.mode in (FailureMode.SEED_NOT_PSD, FailureMode.A_SQUARED_NOT_PSD):
            return not herm_min_eig(self.witness, self.tolerance).psd
        if self.mode is FailureMode.A_SINGULAR:
            try:
                psd_inverse(self.witness, self.singular_cond, self.tolerance)
            except NumericalError:
                return True
            return False
        return spectral_norm(self.witness) > self.norm_cap

    def as_dict(self):
        return {
            "verdict": self.label,
            "steps": self.steps,
            "failed_step": self.failed_step,
            "mode": None if self.mode is None else self.mode.value,
            "min_eig": self.min_eig,
            "norm_cap": self.norm_cap,
            "fixed_point": self.fixed_point,
        }


class ChainHistory:
    """The seed and the successful chain states, D_0..D_K and A_0..A_{K-1}."""

    seed: SeedData
    states: List[ChainState]

    def __init__(self, seed: SeedData, states: Optional[List[ChainState]] = None):
        self.seed = seed
        self.states = states or []

    @property
    def steps(self) -> int:
        return len(self.states) - 1

    @property
    def d_blocks(self) -> List[np.ndarray]:
        return [s.d for s in self.states]

    @property
    def a_blocks(self) -> List[np.ndarray]:
        return [s.a for s in self.states[1:]]

    def __len__(self):
        return len(self.states)


def seed_coefficients(p: NodePolynomial, q: HermitianPolynomialKernel) -> np.ndarray:
    """
    The d x d hermitian coefficient matrix of P(w) conj(P(z)) - Q(w, z).

    :raises SpecificationError: if the top row of the difference does not vanish, i.e. Q does not define a
        quadrature domain with nodes P.
    """
    d = p.degree
    if q.size != d + 1:
        raise SpecificationError(f"kernel of size {q.size} does not match degree {d}")
    c = np.outer(p.coefficients, np.conj(p.coefficients)) - q.coeffs
    edge = max(float(np.max(np.abs(c[d, :]))), float(np.max(np.abs(c[:, d]))))
    scale = max(1.0, float(np.max(np.abs(q.coeffs))))
    if edge > 1e-9 * scale:
        raise SpecificationError(f"P conj(P) - Q has a nonzero top row ({edge:.3e}); Q does not match P")
    return hermitize(c[:d, :d])


def sos_seed(
    p: NodePolynomial,
    q: HermitianPolynomialKernel,
    tol: float = DEFAULT_TOLERANCE,
    rank_tol: float = DEFAULT_RANK_TOLERANCE,
    bounding_radius: Optional[float] = None,
) -> SeedData:
    """
    Factor P(w) conj(P(z)) - Q(w, z) = sum_jk <v_k, v_j> w^j conj(z)^k and solve D0* v_k = v_{k-1} + conj(p_k) xi.

    The factor is a reversed Cholesky factor: v_{d-1} = -xi points along the first basis vector, and eigenvalues
    of the coefficient matrix below ``rank_tol`` are dropped.

    :raises ChainError: DEGENERATE_SEED when the coefficient matching has no solution.
    """
    if bounding_radius is None:
        bounding_radius = QuadratureDomain(p, q).bounding_radius
    c = seed_coefficients(p, q)
    values, vectors = scipy.linalg.eigh(c)
    min_eig = float(values[0])
    if min_eig < -psd_threshold(values, tol):
        logger.info("seed coefficient matrix is not PSD: min eigenvalue %.6e", min_eig)
        return SeedData(p, q, c, min_eig, False, None, None, None, bounding_radius)

    d = p.degree
    keep = values > rank_tol * max(1.0, float(values[-1]))
    factor = np.sqrt(values[keep])[:, None] * vectors[:, keep].conj().T
    _, r = scipy.linalg.qr(factor[:, ::-1], mode="economic")
    diagonal = np.diagonal(r)
    magnitude = np.abs(diagonal)
    phases = np.where(magnitude > 0, diagonal / np.where(magnitude > 0, magnitude, 1.0), 1.0)
    r = phases.conj()[:, None] * r
    v = -r[:, ::-1]
    xi = -v[:, d - 1]
    if np.linalg.norm(xi) == 0:
        raise ChainError("DEGENERATE_SEED: the leading column of the factor vanishes")

    coefficients = p.coefficients
    w = np.empty_like(v)
    for k in range(d):
        w[:, k] = np.conj(coefficients[k]) * xi
        if k > 0:
            w[:, k] += v[:, k - 1]
    d0_star_t, *_ = scipy.linalg.lstsq(v.T, w.T)
    d0_star = d0_star_t.T
    residual = float(np.linalg.norm(d0_star @ v - w))
    if residual > _SEED_SOLVE_TOLERANCE * max(1.0, float(np.linalg.norm(w))):
        raise ChainError(f"DEGENERATE_SEED: coefficient matching is inconsistent (residual {residual:.3e})")
    logger.debug("seed of rank %d with |xi|^2 = %.12g", len(xi), float(np.vdot(xi, xi).real))
    return SeedData(p, q, c, min_eig, True, v, d0_star.conj().T, xi, bounding_radius)


def seed_from_domain(domain: QuadratureDomain, tol: float = DEFAULT_TOLERANCE, rank_tol=DEFAULT_RANK_TOLERANCE):
    return sos_seed(domain.node_polynomial, domain.kernel, tol, rank_tol, domain.bounding_radius)


def two_disk_seed(a: float, tol: float = DEFAULT_TOLERANCE) -> SeedData:
    """The seed of the unit disks centred at -a and a."""
    return seed_from_domain(QuadratureDomain.from_archipelago(make_archipelago([(-a, 1.0), (a, 1.0)])), tol)


def _failed(steps, step, mode, witness, min_eig, tol, norm_cap, singular_cond) -> ChainReport:
    logger.info("chain failed at step %d: %s", step, mode.value)
    return ChainReport(ChainVerdict.FAILED, steps, step, mode, witness, min_eig, tol, norm_cap, singular_cond)


def chain_run(
    seed: SeedData,
    steps: int,
    tol: float = DEFAULT_TOLERANCE,
    norm_cap: Optional[float] = None,
    singular_cond: float = DEFAULT_SINGULAR_CONDITION,
    fixed_point_tol: float = DEFAULT_FIXED_POINT_TOLERANCE,
) -> Tuple[ChainReport, ChainHistory]:
    """
    Run ``steps`` steps of the recurrence. ``norm_cap`` defaults to 4 (R0 + 1).

    Once |[D_k*, D_k]| <= fixed_point_tol |xi|**2 the chain has reached its fixed point: step k + 1 is still
    computed, and its state is repeated (``frozen``) for the remaining steps. The fixed point is repelling, so
    iterating further only amplifies rounding errors.
    """
    if steps < 0:
        raise SpecificationError(f"number of chain steps must be non-negative, got {steps}")
    if norm_cap is None:
        norm_cap = 4 * (seed.bounding_radius + 1)
    history = ChainHistory(seed)
    if not seed.psd:
        report = _failed(steps, 0, FailureMode.SEED_NOT_PSD, seed.coeffs, seed.min_eig, tol, norm_cap, singular_cond)
        return report, history

    xi_norm2 = seed.xi_norm2
    d = seed.d0
    history.states.append(ChainState(0, d, None, None, seed.min_eig, xi_norm2, spectral_norm(d)))
    a_squared = np.outer(seed.xi, seed.xi.conj())
    fixed_point = None
    for step in range(1, steps + 1):
        if fixed_point is not None:
            history.states.append(history.states[fixed_point]._replace(step=step, frozen=True))
            continue
        commutator = d.conj().T @ d - d @ d.conj().T
        converged = spectral_norm(commutator) <= fixed_point_tol * xi_norm2
        a_squared = hermitize(a_squared - commutator)
        check = herm_min_eig(a_squared, tol)
        if not check.psd:
            report = _failed(
                steps, step, FailureMode.A_SQUARED_NOT_PSD, a_squared, check.min_eig, tol, norm_cap, singular_cond
            )
            return report, history
        a = psd_sqrt(a_squared, tol)
        try:
            a_inverse, _ = psd_inverse(a, singular_cond, tol)
        except NumericalError as e:
            logger.debug("A_%d is singular: %s", step - 1, e)
            report = _failed(steps, step, FailureMode.A_SINGULAR, a, check.min_eig, tol, norm_cap, singular_cond)
            return report, history
        d = a_inverse @ d @ a
        norm_d = spectral_norm(d)
        trace = float(np.trace(a_squared).real)
        logger.debug("step %d: min eig A^2 %.6e, trace A^2 %.12g, |D| %.6g", step, check.min_eig, trace, norm_d)
        if norm_d > norm_cap:
            report = _failed(steps, step, FailureMode.NORM_BLOWUP, d, check.min_eig, tol, norm_cap, singular_cond)
            return report, history
        history.states.append(ChainState(step, d, a, a_squared, check.min_eig, trace, norm_d))
        if converged:
            logger.debug("chain reached its fixed point at step %d", step)
            fixed_point = step
    report = ChainReport(
        ChainVerdict.CERTIFIED_UP_TO_K, steps, tolerance=tol, norm_cap=norm_cap, fixed_point=fixed_point
    )
    return report, history


def _two_disk_survives(a: float, step: int, tol: float) -> bool:
    domain = QuadratureDomain.from_archipelago(make_archipelago([(-a, 1.0), (a, 1.0)]))
    if step == 0:
        return herm_min_eig(seed_coefficients(domain.node_polynomial, domain.kernel), tol).psd
    try:
        seed = seed_from_domain(domain, tol)
    except ChainError:
        return False
    if not seed.psd:
        return False
    report, _ = chain_run(seed, step, tol, norm_cap=np.inf)
    return report.survived_through(step)


def two_disk_threshold_table(k_max: int, tol: float = DEFAULT_TOLERANCE) -> List[float]:
    """
    For the unit disks at -a and a, the smallest a in [0.5, 1] for which the chain passes its PSD check at step k,
    for k = 0..k_max. The thresholds increase towards the tangency value 1.
    """
    if k_max < 0:
        raise SpecificationError(f"k_max must be non-negative, got {k_max}")
    thresholds = []
    for k in range(k_max + 1):
        lo, hi = 0.5, 1.0
        while hi - lo > THRESHOLD_PRECISION:
            middle = (lo + hi) / 2
            if _two_disk_survives(middle, k, tol):
                hi = middle
            else:
                lo = middle
        logger.info("two-disk threshold at step %d: a = %.10f", k, hi)
        thresholds.append(hi)
    return thresholds


class TruncatedOperator(NamedTuple):
    """The (K+1) x (K+1) block section T_N of the chain operator and xi embedded in its first block."""

    blocks: int
    block_size: int
    matrix: np.ndarray
    xi: np.ndarray

    @property
    def dimension(self) -> int:
        return self.matrix.shape[0]

    @property
    def norm(self) -> float:
        return spectral_norm(self.matrix)

    def commutator_residual(self) -> float:
        """|[T*, T] - xi xi*| on the first K blocks, where truncation does not interfere."""
        t = self.matrix
        defect = t.conj().T @ t - t @ t.conj().T - np.outer(self.xi, self.xi.conj())
        interior = self.blocks * self.block_size
        if interior == 0:
            return 0.0
        return spectral_norm(defect[:interior, :interior])


def assemble_truncated(history: ChainHistory, blocks: int) -> TruncatedOperator:
    if blocks < 0 or history.steps < blocks:
        raise ChainError(f"chain history has {history.steps} steps, {blocks} needed")
    size = history.seed.block_size
    n = (blocks + 1) * size
    t = np.zeros((n, n), dtype=np.complex128)
    d_blocks, a_blocks = history.d_blocks, history.a_blocks
    for k in range(blocks + 1):
        t[k * size : (k + 1) * size, k * size : (k + 1) * size] = d_blocks[k]
        if k < blocks:
            t[(k + 1) * size : (k + 2) * size, k * size : (k + 1) * size] = a_blocks[k]
    xi = np.zeros(n, dtype=np.complex128)
    xi[:size] = history.seed.xi
    return TruncatedOperator(blocks, size, t, xi)


def operator_model(domain: QuadratureDomain, blocks: int, tol: float = DEFAULT_TOLERANCE) -> TruncatedOperator:
    """Seed, chain and truncation in one go.

    :raises ChainError: if the chain does not survive ``blocks`` steps.
    """
    seed = seed_from_domain(domain, tol)
    report, history = chain_run(seed, blocks, tol)
    if not report.certified:
        raise ChainError(f"operator model unavailable: chain {report.label}")
    return assemble_truncated(history, blocks)


def resolvent_pair(t: TruncatedOperator, w: complex, z: complex) -> np.ndarray:
    """rho(w, z) = (T - w)^-1 (T* - conj z)^-1 xi."""
    eye = np.eye(t.dimension)
    y = scipy.linalg.solve(t.matrix.conj().T - np.conj(z) * eye, t.xi)
    return scipy.linalg.solve(t.matrix - w * eye, y)


def operator_L(t: TruncatedOperator, q: PointQuad) -> complex:
    """L(w, z; u, v) = <rho(w, z), rho(u, v)>, for arguments of modulus at least 1.5 |T|."""
    q = PointQuad.of(*q)
    limit = OPERATOR_GUARD * t.norm
    if min(abs(p) for p in q) < limit:
        raise GuardError(f"operator kernel needs arguments of modulus >= {limit:.6g}, got {q}")
    return complex(np.vdot(resolvent_pair(t, q.u, q.v), resolvent_pair(t, q.w, q.z)))


class NeumannResult(NamedTuple):
    value: complex

    # Geometric extrapolation of the remaining terms from the ratio of the last two.
    tail_estimate: float

    terms: int


def _neumann_vectors(history: ChainHistory, w: complex, z: complex, terms: int) -> List[np.ndarray]:
    d_blocks, a_blocks = history.d_blocks, history.a_blocks
    eye = np.eye(history.seed.block_size)
    f = scipy.linalg.solve(d_blocks[0].conj().T - np.conj(z) * eye, history.seed.xi)
    f = scipy.linalg.solve(d_blocks[0] - w * eye, f)
    vectors = [f]
    for k in range(terms):
        f = scipy.linalg.solve(d_blocks[k + 1] - w * eye, a_blocks[k] @ f)
        vectors.append(f)
    return vectors


def neumann_L(history: ChainHistory, q: PointQuad, terms: int) -> NeumannResult:
    """
    L(w, z; u, v) = sum_k <f_k(w, z), f_k(u, v)> with f_0 = (D_0 - w)^-1 (D_0* - conj z)^-1 xi and
    f_{k+1} = (D_{k+1} - w)^-1 A_k f_k, summed for k = 0..terms.
    """
    q = PointQuad.of(*q)
    if history.steps < terms:
        raise ChainError(f"chain history has {history.steps} steps, {terms} needed")
    used_d = history.d_blocks[: terms + 1]
    used_a = history.a_blocks[:terms]
    radius = max(spectral_norm(d) for d in used_d) + max((spectral_norm(a) for a in used_a), default=0.0)
    if min(abs(p) for p in q) <= radius:
        raise GuardError(f"Neumann series needs arguments of modulus > {radius:.6g}, got {q}")
    left = _neumann_vectors(history, q.w, q.z, terms)
    right = _neumann_vectors(history, q.u, q.v, terms)
    contributions = [complex(np.vdot(b, a)) for a, b in zip(left, right)]
    tail = 0.0
    if len(contributions) >= 2 and contributions[-2] != 0:
        ratio = abs(contributions[-1] / contributions[-2])
        tail = abs(contributions[-1]) * ratio / (1 - ratio) if ratio < 1 else np.inf
    return NeumannResult(complex(sum(contributions)), float(tail), terms)


def seed_L(seed: SeedData, q: PointQuad) -> complex:
    """
    L through the seed alone, with R_x = (D_0* - conj x)^-1 and <a, b> = b* a:

        L = <R_u R_z xi, R_w xi> <R_u xi, R_v R_w xi> / (1 - <R_u xi, R_w xi>) + <R_u R_z xi, R_v R_w xi>.
    """
    if not seed.psd:
        raise ChainError("the seed is not PSD and has no factorization")
    w, z, u, v = PointQuad.of(*q)
    d0_star = seed.d0.conj().T
    eye = np.eye(seed.block_size)

    def resolve(x, vector):
        return scipy.linalg.solve(d0_star - np.conj(x) * eye, vector)

    xi = seed.xi
    r_w = resolve(w, xi)
    r_u = resolve(u, xi)
    r_u_r_z = resolve(u, resolve(z, xi))
    r_v_r_w = resolve(v, r_w)
    e_wu = 1 - np.vdot(r_w, r_u)
    if e_wu == 0:
        raise NumericalError(f"E(w, u) vanishes at {q}")
    return complex(np.vdot(r_w, r_u_r_z) * np.vdot(r_v_r_w, r_u) / e_wu + np.vdot(r_v_r_w, r_u_r_z))


def pade_numerator(history: ChainHistory) -> np.ndarray:
    """
    Coefficients of the polynomial part of Q(w, u) P(v) conj(P(z)) L(w, z; u, v), read from the Laurent expansions
    of the first d chain vectors. Indices are [power of w, power of conj z, power of conj u, power of v], each < d.
    """
    seed = history.seed
    d = seed.degree
    if len(history) < d:
        raise ChainError(f"Pade numerator of degree {d} needs {d} chain blocks, history has {len(history)}")
    size = seed.block_size
    d_blocks, a_blocks = history.d_blocks, history.a_blocks

    # laurent[l, j] is the coefficient of w**-l conj(z)**j of the current chain vector.
    laurent = np.zeros((d + 1, d, size), dtype=np.complex128)
    power = np.eye(size, dtype=np.complex128)
    for order in range(1, d + 1):
        laurent[order] = -(power @ seed.v).T
        power = d_blocks[0] @ power

    c = seed.kernel.coeffs
    numerator = np.zeros((d, d, d, d), dtype=np.complex128)
    for k in range(d):
        if k > 0:
            advanced = np.zeros_like(laurent)
            for order in range(1, d + 1):
                acc = np.zeros((d, size), dtype=np.complex128)
                power = np.eye(size, dtype=np.complex128)
                for m in range(order):
                    acc += laurent[order - m - 1] @ (power @ a_blocks[k - 1]).T
                    power = d_blocks[k] @ power
                advanced[order] = -acc
            laurent = advanced
        gram = np.einsum("ljr,mir->ljmi", laurent, laurent.conj())
        for a_power in range(d + 1):
            for b_power in range(d + 1):
                if c[a_power, b_power] == 0:
                    continue
                for order_w in range(1, a_power + 1):
                    for order_u in range(1, b_power + 1):
                        numerator[a_power - order_w, :, b_power - order_u, :] += (
                            c[a_power, b_power] * gram[order_w, :, order_u, :]
                        )
    return numerator


def _divide_by_difference(t: np.ndarray, minus_axis: int, plus_axis: int) -> np.ndarray:
    """S with t = (x_plus - x_minus) S, by synthetic division along two polynomial axes."""
    a = np.moveaxis(t, (minus_axis, plus_axis), (0, 1))
    s = np.zeros_like(a)
    n = a.shape[1]
    for column in range(n - 1, 0, -1):
        s[0, column - 1] = a[0, column]
        for row in range(1, a.shape[0]):
            s[row, column - 1] = a[row, column] + s[row - 1, column]
    return np.moveaxis(s, (0, 1), (minus_axis, plus_axis))


def numerator_direct(q: HermitianPolynomialKernel) -> np.ndarray:
    """
    Coefficients of (Q(v, z) Q(w, u) - Q(w, z) Q(v, u)) / ((v - w)(conj u - conj z)), indexed like
    :func:`pade_numerator`.
    """
    c = q.coeffs
    d = q.size - 1
    t = np.einsum("vz,wu->wzuv", c, c) - np.einsum("wz,vu->wzuv", c, c)
    t = _divide_by_difference(t, 0, 3)
    t = _divide_by_difference(t, 1, 2)
    return t[:d, :d, :d, :d]


def chain_trace_table(history: ChainHistory, report: ChainReport) -> pyarrow.Table:
    rows = [
        (s.step, s.min_eig_a2, s.trace_a2, s.norm_d, "FIXED_POINT" if s.frozen else "OK") for s in history.states
    ]
    if not report.certified:
        trace = float("nan")
        if report.witness is not None and report.mode is FailureMode.A_SQUARED_NOT_PSD:
            trace = float(np.trace(report.witness).real)
        min_eig = float("nan") if report.min_eig is None else report.min_eig
        rows.append((report.failed_step, min_eig, trace, float("nan"), report.label))
    elif rows:
        last = rows[-1]
        rows[-1] = last[:4] + (report.label,)
    step, min_eig, trace, norm_d, verdict = zip(*rows) if rows else ((), (), (), (), ())
    return pyarrow.table(
        {
            "step": pyarrow.array(step, type=pyarrow.int64()),
            "min_eig_A2": pyarrow.array(min_eig, type=pyarrow.float64()),
            "trace_A2": pyarrow.array(trace, type=pyarrow.float64()),
            "norm_D": pyarrow.array(norm_d, type=pyarrow.float64()),
            "verdict": pyarrow.array(verdict, type=pyarrow.string()),
        }
    )


def write_chain_trace(table: pyarrow.Table, path: Union[str, Path]) -> Path:
    path = Path(path)
    pyarrow.csv.write_csv(table, str(path))
    logger.info("chain trace written to %s", path)
    return path


class EllipseProbeReport(NamedTuple):
    gram: GramReport

    # |[T*, T] - (1 - r**2) e_0 e_0*| on the leading (N-1) x (N-1) block.
    commutator_residual: float

    r: float
    size: int

    @property
    def min_eig(self) -> float:
        return self.gram.min_eig


def ellipse_negativity_probe(
    r: float, size: int, plan: Optional[SamplePlan] = None, tol: float = DEFAULT_TOLERANCE
) -> EllipseProbeReport:
    """
    Gram matrix of c(v, z) = <T x(z), T x(v)> - |xi|**2 <x(z), x(v)>, x(z) = (T* - conj z)^-1 xi, for the shifted
    ellipse model T = r S* + S - (1 + r) with S the unilateral shift and xi = sqrt(1 - r**2) e_0.
    """
    if not 0 <= r < 1:
        raise SpecificationError(f"ellipse parameter must lie in [0, 1), got {r}")
    if size < 32:
        raise SpecificationError(f"ellipse model needs at least 32 coordinates, got {size}")
    lowest = 2.5 * (1 + r)
    if plan is None:
        plan = SamplePlan.create(24, (lowest, 2 * lowest), 11)
    points = plan.sample_points()
    if np.min(np.abs(points)) < lowest * (1 - 1e-12):
        raise GuardError(f"ellipse probe needs sample points of modulus >= {lowest:.6g}")

    shift = np.eye(size, k=-1, dtype=np.complex128)
    t = r * shift.T + shift - (1 + r) * np.eye(size)
    xi = np.zeros(size, dtype=np.complex128)
    xi[0] = np.sqrt(1 - r ** 2)
    t_star = t.conj().T
    x = np.column_stack([scipy.linalg.solve(t_star - np.conj(z) * np.eye(size), xi) for z in points])
    tx = t @ x
    gram = tx.conj().T @ tx - np.vdot(xi, xi).real * (x.conj().T @ x)
    report = gram_report("ellipse", gram, tol)

    defect = t_star @ t - t @ t_star
    defect[0, 0] -= 1 - r ** 2
    residual = spectral_norm(defect[: size - 1, : size - 1])
    logger.info("ellipse probe r=%g N=%d: min eig %.6e", r, size, report.min_eig)
    return EllipseProbeReport(report, residual, r, size)


class MergingResiduals(NamedTuple):
    # N = N1 + N2 + N1 N2 through the rational kernels.
    closed_form: float

    # The same identity with N = <eta(z), eta(w)> from truncated operator models.
    operator_gram: float

    # <T eta(z), T eta(w)> = <T1 eta1, T1 eta1> + <T2 eta2, T2 eta2> + z conj(w) N1 N2.
    intertwined: float

    # |xi|**2 = |xi1|**2 + |xi2|**2.
    area: float

    def as_dict(self):
        return self._asdict()


def _eta(t: TruncatedOperator, z: complex) -> np.ndarray:
    return scipy.linalg.solve(t.matrix - z * np.eye(t.dimension), t.xi)


def merging_gram_residual(
    d1: DiskSpec, d2: DiskSpec, blocks: int, points: Sequence[complex], tol: float = DEFAULT_TOLERANCE
) -> MergingResiduals:
    """
    Check the merging of two disjoint disks: the resolvent Gram kernel N(z, w) = 1/E(z, w) - 1 of the union is
    N1 + N2 + N1 N2, both in closed form and through operator models truncated to ``blocks`` blocks.

    :raises SpecificationError: if the disks fail the two-disk positivity criterion.
    """
    if not two_disk_closed_form(d1, d2):
        raise SpecificationError(f"disks {d1} and {d2} overlap; the merging identities do not apply")
    points = [complex(p) for p in points]
    union_arch = make_archipelago([d1, d2])
    ev = KernelEvaluator(union_arch)
    ev1 = KernelEvaluator(make_archipelago([d1]))
    ev2 = KernelEvaluator(make_archipelago([d2]))
    ev.check_guard(*points)

    closed = 0.0
    for z in points:
        for w in points:
            n = 1 / exp_transform(ev, z, w) - 1
            n1 = 1 / exp_transform(ev1, z, w) - 1
            n2 = 1 / exp_transform(ev2, z, w) - 1
            closed = max(closed, abs(n - (n1 + n2 + n1 * n2)))

    t = operator_model(QuadratureDomain.from_archipelago(union_arch), blocks, tol)
    t1 = operator_model(QuadratureDomain.from_archipelago(make_archipelago([d1])), blocks, tol)
    t2 = operator_model(QuadratureDomain.from_archipelago(make_archipelago([d2])), blocks, tol)
    etas = {z: (_eta(t, z), _eta(t1, z), _eta(t2, z)) for z in points}

    gram = 0.0
    intertwined = 0.0
    for z in points:
        e, e1, e2 = etas[z]
        for w in points:
            f, f1, f2 = etas[w]
            n, n1, n2 = np.vdot(f, e), np.vdot(f1, e1), np.vdot(f2, e2)
            gram = max(gram, abs(n - (n1 + n2 + n1 * n2)))
            lhs = np.vdot(t.matrix @ f, t.matrix @ e)
            rhs = (
                np.vdot(t1.matrix @ f1, t1.matrix @ e1)
                + np.vdot(t2.matrix @ f2, t2.matrix @ e2)
                + z * np.conj(w) * n1 * n2
            )
            intertwined = max(intertwined, abs(lhs - rhs))

    area = abs(np.vdot(t.xi, t.xi).real - np.vdot(t1.xi, t1.xi).real - np.vdot(t2.xi, t2.xi).real)
    residuals = MergingResiduals(float(closed), float(gram), float(intertwined), float(area))
    logger.debug("merging residuals for %s, %s: %s", d1, d2, residuals)
    return residuals
