"""
Sampled Gram-matrix certificates for the positivity of the kernels of a union of islands, and the three-stage
overlap decision built on them.

A sampled Gram matrix can refute positivity but never prove it, so the only sound outcomes of this module are
negative ones: a Gram matrix whose smallest eigenvalue lies well below the tolerance, a closed-form criterion that
fails, or a matrix-chain failure. Everything else is evidence and is reported as such.
"""

import logging
from enum import Enum
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence, Union

import numpy as np
import scipy.linalg

from qdcert import ChainError, GuardError, NumericalError, SpecificationError
from qdcert.domains import ArchipelagoSpec, QuadratureDomain, pairwise_disjoint, two_disk_closed_form
from qdcert.kernels import (
    KernelEvaluator,
    PointQuad,
    antidiagonal_L,
    exp_transform,
    kernel_L,
    kernel_LE,
    kernel_M_N,
    quotient_L,
)
from qdcert.matrix_chain import (
    ChainReport,
    FailureMode,
    assemble_truncated,
    chain_run,
    resolvent_pair,
    seed_from_domain,
)
from qdcert.numcore import DEFAULT_TOLERANCE, generalized_scale_bound, hermitize, psd_threshold
from qdcert.sampling import GramReport, GramVerdict, SamplePlan, gram_report

__all__ = [
    "CertificateReport",
    "DEFAULT_VIOLATION_FACTOR",
    "FOUR_ARGUMENT_KERNELS",
    "GramReport",
    "KERNEL_TAGS",
    "OverlapDecision",
    "OverlapVerdict",
    "SamplePlan",
    "StageRecord",
    "certificate_bounded",
    "certificate_point_eval",
    "choose_lambda",
    "cnd_check_E",
    "cnd_quadratic_form",
    "decide_overlap",
    "gram_matrix",
    "gram_psd",
    "quotient_monotonicity",
    "two_disk_closed_form",
]

logger = logging.getLogger(__name__)

DEFAULT_VIOLATION_FACTOR = 10.0
COLLISION_DISTANCE = 1e-8
MAX_RESAMPLES = 16

FOUR_ARGUMENT_KERNELS = ("L", "LE", "L/E")
KERNEL_TAGS = FOUR_ARGUMENT_KERNELS + ("antidiagonal", "1-E", "M", "N")


def _two_point(function: Callable) -> Callable:
    return lambda ev, a, b: function(ev, complex(a), complex(b))


_FOUR_ARGUMENT: Dict[str, Callable] = {"L": kernel_L, "LE": kernel_LE, "L/E": quotient_L}
_TWO_POINT: Dict[str, Callable] = {
    "antidiagonal": _two_point(antidiagonal_L),
    "1-E": _two_point(lambda ev, a, b: kernel_M_N(ev, a, b)[0]),
    "M": _two_point(lambda ev, a, b: kernel_M_N(ev, a, b)[0]),
    "N": _two_point(lambda ev, a, b: kernel_M_N(ev, a, b)[1]),
}


def gram_matrix(ev: KernelEvaluator, kernel: str, plan: SamplePlan) -> np.ndarray:
    """
    G[k, l] = K(w_k, z_k; w_l, z_l) for the four-argument kernels, G[k, l] = K(lambda_k, lambda_l) for the two-point
    ones. Only the upper triangle is evaluated; the lower one is its conjugate mirror.
    """
    if kernel in _FOUR_ARGUMENT:
        function = _FOUR_ARGUMENT[kernel]
        w, z = plan.sample_pairs()

        def entry(k, l):
            return function(ev, PointQuad.of(w[k], z[k], w[l], z[l]))

        n = len(w)
    elif kernel in _TWO_POINT:
        function = _TWO_POINT[kernel]
        points = plan.sample_points()

        def entry(k, l):
            return function(ev, points[k], points[l])

        n = len(points)
    else:
        raise SpecificationError(f"unknown kernel tag {kernel!r}; expected one of {', '.join(KERNEL_TAGS)}")

    g = np.empty((n, n), dtype=np.complex128)
    for k in range(n):
        for l in range(k, n):
            g[k, l] = entry(k, l)
            if l != k:
                g[l, k] = np.conj(g[k, l])
    return g


def gram_psd(ev: KernelEvaluator, kernel: str, plan: SamplePlan, tol: float = DEFAULT_TOLERANCE) -> GramReport:
    return gram_report(kernel, gram_matrix(ev, kernel, plan), tol)


def cnd_quadratic_form(ev: KernelEvaluator, points: Sequence[complex], weights: Sequence[complex]) -> float:
    """sum_{j,k} E(lambda_j, lambda_k) c_j conj(c_k) for weights summing to zero."""
    points = np.asarray(points, dtype=np.complex128)
    weights = np.asarray(weights, dtype=np.complex128)
    if points.shape != weights.shape:
        raise SpecificationError("points and weights must have the same length")
    if abs(weights.sum()) > 1e-12 * max(1.0, float(np.abs(weights).sum())):
        raise SpecificationError("weights of a conditional negativity test must sum to zero")
    e = exp_transform(ev, points[:, None], points[None, :])
    return float(np.real(weights @ e @ weights.conj()))


def cnd_check_E(ev: KernelEvaluator, plan: SamplePlan, tol: float = DEFAULT_TOLERANCE) -> GramReport:
    """
    Conditional negative definiteness of E: the Gram matrix of E compressed to weight vectors with zero sum.
    The verdict is PSD when the largest compressed eigenvalue is at most the tolerance.
    """
    points = plan.sample_points()
    if len(points) < 2:
        raise SpecificationError("conditional negativity needs at least two points")
    g = hermitize(exp_transform(ev, points[:, None], points[None, :]))
    basis = scipy.linalg.null_space(np.ones((1, len(points))))
    compressed = hermitize(basis.conj().T @ g @ basis)
    eigenvalues = scipy.linalg.eigh(compressed, eigvals_only=True)
    max_eig = float(eigenvalues[-1])
    negative = max_eig <= psd_threshold(eigenvalues, tol)
    return GramReport(
        kernel="E (zero-sum)",
        size=len(points),
        min_eig=float(eigenvalues[0]),
        max_eig=max_eig,
        verdict=GramVerdict.PSD if negative else GramVerdict.NOT_PSD,
        tolerance=tol,
    )


def quotient_monotonicity(
    ev_part: KernelEvaluator, ev_whole: KernelEvaluator, plan: SamplePlan, tol: float = DEFAULT_TOLERANCE
) -> GramReport:
    """The Gram matrix of L/E(v, z) of the whole minus that of a part must be PSD."""
    difference = gram_matrix(ev_whole, "L/E", plan) - gram_matrix(ev_part, "L/E", plan)
    return gram_report("L/E monotonicity", difference, tol)


class CertificateReport(NamedTuple):
    """Outcome of the bounded and point-evaluation certificates; either half may be absent."""

    bounded_ok: bool = False
    c_bound: Optional[float] = None
    pointeval_ok: bool = False
    c_point: Optional[float] = None
    lam: Optional[complex] = None
    plan: Optional[SamplePlan] = None

    # Sampled L, the B kernel <T rho, T rho> and the divided-difference kernel G1.
    grams: Dict[str, GramReport] = {}

    # max |G_L(operator) - G_L(rational)|, the truncation error of the operator model on the sample.
    operator_fidelity: Optional[float] = None

    chain: Optional[ChainReport] = None

    def combined(self, other: "CertificateReport") -> "CertificateReport":
        """This bounded half together with the point-evaluation half of ``other``."""
        grams = dict(self.grams)
        grams.update(other.grams)
        return self._replace(pointeval_ok=other.pointeval_ok, c_point=other.c_point, lam=other.lam, grams=grams)

    def as_dict(self) -> Dict:
        return {
            "bounded_ok": self.bounded_ok,
            "C_bound": self.c_bound,
            "pointeval_ok": self.pointeval_ok,
            "C_point": self.c_point,
            "lambda": None if self.lam is None else [self.lam.real, self.lam.imag],
            "plan": None if self.plan is None else self.plan.as_dict(),
            "grams": {name: report.as_dict() for name, report in self.grams.items()},
            "operator_fidelity": self.operator_fidelity,
        }


def certificate_bounded(
    ev: KernelEvaluator,
    plan: SamplePlan,
    max_iter: int = 50,
    tol: float = DEFAULT_TOLERANCE,
    norm_cap: Optional[float] = None,
) -> CertificateReport:
    """
    Bound the B kernel, the double finite difference of w conj(u) L at infinity, by C times L.

    B is the Gram kernel of T rho(w, z) for the operator model T of the chain truncated to ``max_iter`` blocks, and
    L is compared on the same model, so that C_bound estimates |T|**2. The rational L is sampled as well and must be
    PSD.
    """
    w, z = plan.sample_pairs()
    g_l = gram_matrix(ev, "L", plan)
    l_report = gram_report("L", g_l, tol)
    try:
        seed = seed_from_domain(ev.domain, tol)
    except ChainError as e:
        logger.info("bounded certificate unavailable: %s", e)
        return CertificateReport(plan=plan, grams={"L": l_report})
    chain, history = chain_run(seed, max_iter, tol, norm_cap)
    if not chain.certified:
        return CertificateReport(plan=plan, grams={"L": l_report}, chain=chain)

    t = assemble_truncated(history, max_iter)
    rho = np.column_stack([resolvent_pair(t, w[k], z[k]) for k in range(len(w))])
    t_rho = t.matrix @ rho
    g_operator = hermitize(rho.conj().T @ rho).T
    g_b = hermitize(t_rho.conj().T @ t_rho).T
    b_report = gram_report("B", g_b, tol)
    fidelity = float(np.max(np.abs(g_operator - g_l)))
    c_bound = generalized_scale_bound(g_b, g_operator, tol)
    bounded_ok = l_report.psd and b_report.psd and c_bound is not None
    logger.info("bounded certificate: C = %s, L %s, B %s", c_bound, l_report.verdict.value, b_report.verdict.value)
    return CertificateReport(
        bounded_ok=bounded_ok,
        c_bound=c_bound,
        plan=plan,
        grams={"L": l_report, "B": b_report},
        operator_fidelity=fidelity,
        chain=chain,
    )


def choose_lambda(plan: SamplePlan, candidates: int = 64) -> complex:
    """A point on the middle circle of the band, as far as possible from the sampled w's."""
    w, _ = plan.sample_pairs()
    radius = sum(plan.band) / 2
    circle = radius * np.exp(2j * np.pi * np.arange(candidates) / candidates)
    distance = np.min(np.abs(circle[:, None] - w[None, :]), axis=1)
    return complex(circle[int(np.argmax(distance))])


def _divided_gram(ev: KernelEvaluator, lam: complex, w: np.ndarray, z: np.ndarray) -> np.ndarray:
    """G1[k, l] = L([lambda, w_k], z_k; [lambda, w_l], z_l)."""
    n = len(w)
    at_lambda = np.array([[kernel_L(ev, (lam, z[k], lam, z[l])) for l in range(n)] for k in range(n)])
    left = np.array([[kernel_L(ev, (w[k], z[k], lam, z[l])) for l in range(n)] for k in range(n)])
    plain = np.array([[kernel_L(ev, (w[k], z[k], w[l], z[l])) for l in range(n)] for k in range(n)])
    right = left.conj().T
    denominator = (lam - w)[:, None] * np.conj(lam - w)[None, :]
    return (at_lambda - left - right + plain) / denominator


def certificate_point_eval(
    ev: KernelEvaluator, lam: Optional[complex], plan: SamplePlan, tol: float = DEFAULT_TOLERANCE
) -> CertificateReport:
    """
    Point evaluation at lambda: the Gram matrix G1 of the kernel with single divided differences at lambda in its
    first and third slots must be PSD and dominate L up to the constant C_point.

    A lambda within 1e-8 of a sample point triggers a resample with the next seed.
    """
    if lam is None:
        lam = choose_lambda(plan)
    lam = complex(lam)
    ev.check_guard(lam)
    for _ in range(MAX_RESAMPLES):
        w, z = plan.sample_pairs()
        if np.min(np.abs(w - lam)) >= COLLISION_DISTANCE:
            break
        logger.warning("lambda %s collides with a sample point; resampling with seed %d", lam, plan.seed + 1)
        if plan.pairs is not None:
            raise GuardError(f"lambda {lam} coincides with an explicit sample point")
        plan = plan.with_seed(plan.seed + 1)
    else:
        raise GuardError(f"lambda {lam} keeps colliding with sample points")

    g_l = gram_matrix(ev, "L", plan)
    g1 = _divided_gram(ev, lam, w, z)
    g1_report = gram_report("L[lambda]", g1, tol)
    c_point = generalized_scale_bound(g_l, g1, tol) if g1_report.psd else None
    pointeval_ok = g1_report.psd and c_point is not None and c_point > 0
    logger.info("point-evaluation certificate at %s: C = %s, G1 %s", lam, c_point, g1_report.verdict.value)
    return CertificateReport(
        pointeval_ok=pointeval_ok,
        c_point=c_point,
        lam=lam,
        plan=plan,
        grams={"L[lambda]": g1_report, "L": gram_report("L", g_l, tol)},
    )


class OverlapVerdict(Enum):
    DISJOINT_CERTIFIED = "DISJOINT_CERTIFIED"
    OVERLAP_DETECTED = "OVERLAP_DETECTED"
    INCONCLUSIVE = "INCONCLUSIVE"


class StageRecord(NamedTuple):
    name: str

    # PASS, FAIL (sound), WEAK (below the violation factor) or ERROR.
    status: str

    min_eig: Optional[float] = None
    c: Optional[float] = None
    n: Optional[int] = None
    seed: Optional[int] = None
    detail: Optional[str] = None

    def as_dict(self):
        return self._asdict()


class OverlapDecision(NamedTuple):
    verdict: OverlapVerdict
    deciding_stage: Optional[str]
    stages: List[StageRecord]
    chain: Optional[ChainReport]
    steps: int
    thresholds: Dict[str, float]

    @property
    def label(self) -> str:
        if self.verdict is OverlapVerdict.INCONCLUSIVE:
            return f"INCONCLUSIVE({self.steps})"
        return self.verdict.value

    def as_dict(self) -> Dict:
        return {
            "verdict": self.label,
            "deciding_stage": self.deciding_stage,
            "stages": [s.as_dict() for s in self.stages],
            "chain": None if self.chain is None else self.chain.as_dict(),
            "thresholds": dict(self.thresholds),
        }


def _gram_stage(name: str, report: GramReport, factor: float, plan: SamplePlan, c=None) -> StageRecord:
    if report.psd:
        status = "PASS"
    elif report.violates(factor):
        status = "FAIL"
    else:
        status = "WEAK"
    return StageRecord(name, status, report.min_eig, c, report.size, plan.seed)


def decide_overlap(
    domain: Union[ArchipelagoSpec, QuadratureDomain],
    plan: Optional[SamplePlan] = None,
    max_iter: int = 50,
    tol: float = DEFAULT_TOLERANCE,
    violation_factor: float = DEFAULT_VIOLATION_FACTOR,
    guard: float = 1.05,
    samples: int = 32,
    seed: int = 1,
    norm_cap: Optional[float] = None,
) -> OverlapDecision:
    """
    Decide whether the islands overlap, in three stages: closed-form pair criteria for disks, sampled
    certificates (L, 1 - E, the antidiagonal kernel, point evaluation), and the matrix chain together with the
    bounded certificate. The first sound failure decides OVERLAP_DETECTED. DISJOINT_CERTIFIED needs every stage
    to pass and, for disk input, the pairwise distance check; anything else is INCONCLUSIVE.
    """
    if isinstance(domain, ArchipelagoSpec):
        domain = QuadratureDomain.from_archipelago(domain)
    ev = KernelEvaluator(domain, guard)
    if plan is None:
        plan = SamplePlan.for_evaluator(ev, samples, seed)
    thresholds = {"tol": tol, "violation_factor": violation_factor, "guard": guard}
    stages: List[StageRecord] = []

    disks = domain.disks
    if domain.archipelago is not None:
        for i, first in enumerate(disks):
            for j in range(i + 1, len(disks)):
                holds = two_disk_closed_form(first, disks[j])
                stages.append(StageRecord(f"closed_form[{i},{j}]", "PASS" if holds else "FAIL"))
    logger.info("closed-form stage: %d pair checks", len(stages))

    for tag in ("L", "1-E", "antidiagonal"):
        try:
            stages.append(_gram_stage(f"sampled_{tag}", gram_psd(ev, tag, plan, tol), violation_factor, plan))
        except (GuardError, NumericalError) as e:
            stages.append(StageRecord(f"sampled_{tag}", "ERROR", seed=plan.seed, detail=str(e)))
    try:
        point = certificate_point_eval(ev, None, plan, tol)
        stages.append(
            _gram_stage("point_eval", point.grams["L[lambda]"], violation_factor, point.plan, point.c_point)
        )
        if stages[-1].status == "PASS" and not point.pointeval_ok:
            stages[-1] = stages[-1]._replace(status="WEAK", detail="no finite scale bound")
    except (GuardError, NumericalError) as e:
        stages.append(StageRecord("point_eval", "ERROR", seed=plan.seed, detail=str(e)))
    logger.info("sampled stage done")

    chain = None
    try:
        chain_seed = seed_from_domain(domain, tol)
        chain, _ = chain_run(chain_seed, max_iter, tol, norm_cap)
        if chain.certified:
            status = "PASS"
        elif chain.mode in (FailureMode.SEED_NOT_PSD, FailureMode.A_SQUARED_NOT_PSD):
            status = "FAIL"
        else:
            status = "WEAK"
        stages.append(StageRecord("chain", status, chain.min_eig, detail=chain.label))
    except ChainError as e:
        stages.append(StageRecord("chain", "ERROR", detail=str(e)))
    if chain is not None and chain.certified:
        bounded = certificate_bounded(ev, plan, max_iter, tol, norm_cap)
        status = "PASS" if bounded.bounded_ok else "WEAK"
        min_eig = bounded.grams["L"].min_eig
        stages.append(StageRecord("bounded", status, min_eig, bounded.c_bound, plan.count, plan.seed))
    logger.info("chain stage: %s", "error" if chain is None else chain.label)

    failures = [s for s in stages if s.status == "FAIL"]
    if failures:
        verdict, deciding = OverlapVerdict.OVERLAP_DETECTED, failures[0].name
    elif all(s.status == "PASS" for s in stages) and domain.archipelago is not None:
        if pairwise_disjoint(domain.archipelago):
            verdict, deciding = OverlapVerdict.DISJOINT_CERTIFIED, "pairwise_distance"
        else:
            verdict, deciding = OverlapVerdict.INCONCLUSIVE, None
    else:
        verdict, deciding = OverlapVerdict.INCONCLUSIVE, None
    decision = OverlapDecision(verdict, deciding, stages, chain, max_iter, thresholds)
    logger.info("overlap decision: %s (stage %s)", decision.label, deciding)
    return decision
