import math

import numpy as np
import pytest

from qdcert import GuardError, SpecificationError
from qdcert.domains import make_archipelago
from qdcert.kernels import KernelEvaluator
from qdcert.positivity import (
    OverlapVerdict,
    certificate_bounded,
    certificate_point_eval,
    choose_lambda,
    cnd_check_E,
    cnd_quadratic_form,
    decide_overlap,
    gram_matrix,
    gram_psd,
    quotient_monotonicity,
)
from qdcert.sampling import SamplePlan


def pair_evaluator(a, r):
    return KernelEvaluator(make_archipelago([(-a, r), (a, r)]))


def test_one_minus_E_unit_disk_two_points(unit_disk_evaluator):
    plan = SamplePlan.from_points([(2, 2), (3, 3)])
    g = gram_matrix(unit_disk_evaluator, "1-E", plan)
    assert np.allclose(g, [[1 / 4, 1 / 6], [1 / 6, 1 / 9]])
    report = gram_psd(unit_disk_evaluator, "1-E", plan)
    assert report.psd
    assert report.min_eig == pytest.approx(0.0, abs=1e-15)


def test_unknown_kernel_tag(unit_disk_evaluator, default_plan):
    with pytest.raises(SpecificationError):
        gram_matrix(unit_disk_evaluator, "E**2", default_plan)


def test_gram_matrix_is_hermitian(separated_archipelago):
    ev = KernelEvaluator(separated_archipelago)
    plan = SamplePlan.for_evaluator(ev, 12, 5)
    for tag in ("L", "LE", "L/E", "antidiagonal", "M", "N"):
        g = gram_matrix(ev, tag, plan)
        assert np.allclose(g, g.conj().T, atol=1e-15), tag


def test_gram_matrix_is_deterministic(separated_archipelago):
    ev = KernelEvaluator(separated_archipelago)
    plan = SamplePlan.for_evaluator(ev, 12, 5)
    assert np.array_equal(gram_matrix(ev, "L", plan), gram_matrix(ev, "L", plan))


def test_gram_rejects_guarded_plan(unit_disk_evaluator):
    with pytest.raises(GuardError):
        gram_matrix(unit_disk_evaluator, "L", SamplePlan.create(8, (0.5, 3.0), 1))


def test_L_unit_disk_psd(unit_disk_evaluator):
    report = gram_psd(unit_disk_evaluator, "L", SamplePlan.create(24, (2, 4), 7))
    assert report.psd
    assert report.min_eig >= -1e-10


@pytest.mark.parametrize("seed", [pytest.param(s, id=f"seed{s}") for s in range(1, 11)])
@pytest.mark.parametrize("n", [pytest.param(16, id="n16"), pytest.param(32, id="n32")])
def test_single_disk_kernels_psd(seed, n):
    ev = KernelEvaluator(make_archipelago([(1 - 2j, 0.5)]))
    plan = SamplePlan.for_evaluator(ev, n, seed)
    for tag in ("L", "L/E", "antidiagonal", "1-E", "N"):
        assert gram_psd(ev, tag, plan).psd, tag


def one_minus_E_verdicts(seed):
    verdicts = {}
    for step in range(12):
        r = round(1.30 + 0.02 * step, 2)
        ev = pair_evaluator(1.0, r)
        verdicts[r] = gram_psd(ev, "1-E", SamplePlan.for_evaluator(ev, 40, seed)).psd
    return verdicts


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_one_minus_E_boundary_of_positivity(seed):
    verdicts = one_minus_E_verdicts(seed)
    assert all(psd for r, psd in verdicts.items() if r < math.sqrt(2))
    assert not any(psd for r, psd in verdicts.items() if r > math.sqrt(2))


def test_one_minus_E_orthogonal_pair(orthogonal_pair):
    ev = KernelEvaluator(make_archipelago(orthogonal_pair))
    report = gram_psd(ev, "1-E", SamplePlan.for_evaluator(ev, 32, 1))
    assert report.min_eig >= -1e-8


def test_not_psd_is_inherited_by_supersets():
    ev = pair_evaluator(1.0, 1.5)
    small = SamplePlan.for_evaluator(ev, 16, 1)
    extra = SamplePlan.for_evaluator(ev, 8, 2)
    w, z = small.sample_pairs()
    w2, z2 = extra.sample_pairs()
    large = SamplePlan.from_points(list(zip(np.concatenate([w, w2]), np.concatenate([z, z2]))))
    small_report = gram_psd(ev, "1-E", small)
    large_report = gram_psd(ev, "1-E", large)
    assert not small_report.psd
    assert not large_report.psd
    assert large_report.min_eig <= small_report.min_eig + 1e-15


def test_cnd_quadratic_form(unit_disk_evaluator):
    assert cnd_quadratic_form(unit_disk_evaluator, [2, 3], [1, -1]) == pytest.approx(-1 / 36)
    value = cnd_quadratic_form(unit_disk_evaluator, [2, 3j, -4], [1, -2, 1])
    assert value == pytest.approx(-abs(0.25 + 2j / 3) ** 2)
    assert cnd_quadratic_form(unit_disk_evaluator, [3, 3, 3], [1, 1, -2]) == pytest.approx(0.0, abs=1e-15)


def test_cnd_quadratic_form_needs_zero_sum(unit_disk_evaluator):
    with pytest.raises(SpecificationError):
        cnd_quadratic_form(unit_disk_evaluator, [2, 3], [1, 1])
    with pytest.raises(SpecificationError):
        cnd_quadratic_form(unit_disk_evaluator, [2, 3], [1])


def test_cnd_check_E(tangent_pair):
    ev = KernelEvaluator(tangent_pair)
    report = cnd_check_E(ev, SamplePlan.for_evaluator(ev, 16, 3))
    assert report.psd
    assert report.max_eig <= 1e-10


def test_quotient_monotonicity(separated_pair):
    whole = KernelEvaluator(make_archipelago(separated_pair))
    part = KernelEvaluator(make_archipelago(separated_pair[:1]))
    report = quotient_monotonicity(part, whole, SamplePlan.for_evaluator(whole, 16, 1))
    assert report.psd


def test_certificate_bounded_unit_disk(unit_disk_evaluator):
    report = certificate_bounded(unit_disk_evaluator, SamplePlan.create(32, (2, 4), 1))
    assert report.bounded_ok
    assert report.c_bound == pytest.approx(1.0, rel=0.1)
    assert report.chain.certified
    assert report.operator_fidelity < 1e-6


def test_certificate_bounded_tangent_disks(tangent_pair):
    ev = KernelEvaluator(tangent_pair)
    report = certificate_bounded(ev, SamplePlan.for_evaluator(ev, 24, 1))
    assert report.bounded_ok
    assert report.c_bound is not None


def test_certificate_point_eval_unit_disk(unit_disk_evaluator):
    report = certificate_point_eval(unit_disk_evaluator, 5, SamplePlan.create(24, (2, 4), 1))
    assert report.pointeval_ok
    assert report.c_point is not None and 0 < report.c_point < math.inf
    assert report.lam == 5


def test_certificate_point_eval_resamples_on_collision(unit_disk_evaluator, caplog):
    plan = SamplePlan.create(16, (2, 4), 1)
    lam = plan.sample_points()[3]
    report = certificate_point_eval(unit_disk_evaluator, lam, plan)
    assert report.plan.seed == 2
    assert "resampling" in caplog.text


def test_certificate_point_eval_explicit_collision(unit_disk_evaluator):
    plan = SamplePlan.from_points([(2, 3), (3j, 2)])
    with pytest.raises(GuardError):
        certificate_point_eval(unit_disk_evaluator, 2, plan)


def test_choose_lambda_avoids_samples():
    plan = SamplePlan.create(16, (2, 4), 1)
    lam = choose_lambda(plan)
    assert abs(lam) == pytest.approx(3.0)
    assert np.min(np.abs(plan.sample_points() - lam)) > 1e-3


def test_decide_overlap_separated():
    decision = decide_overlap(make_archipelago([(0, 1.0), (3, 1.0)]))
    assert decision.verdict is OverlapVerdict.DISJOINT_CERTIFIED
    assert decision.label == "DISJOINT_CERTIFIED"
    assert decision.chain.certified
    assert [s.name for s in decision.stages][:2] == ["closed_form[0,1]", "sampled_L"]


def test_decide_overlap_chain_failure():
    decision = decide_overlap(make_archipelago([(-0.9, 1.0), (0.9, 1.0)]))
    assert decision.verdict is OverlapVerdict.OVERLAP_DETECTED
    assert decision.chain.label == "FAILED_AT(2, A_SQUARED_NOT_PSD)"
    chain_stage = next(s for s in decision.stages if s.name == "chain")
    assert chain_stage.status == "FAIL"


def test_decide_overlap_closed_form_failure():
    decision = decide_overlap(make_archipelago([(0, 1.5), (2, 1.5)]), max_iter=5)
    assert decision.verdict is OverlapVerdict.OVERLAP_DETECTED
    assert decision.deciding_stage == "closed_form[0,1]"


def test_decide_overlap_report_fields():
    decision = decide_overlap(make_archipelago([(0, 1.0), (3, 1.0)]), max_iter=10, samples=16, seed=4)
    record = decision.as_dict()
    assert record["thresholds"] == {"tol": 1e-10, "violation_factor": 10.0, "guard": 1.05}
    for stage in record["stages"]:
        assert set(stage) >= {"name", "status", "min_eig", "c", "n", "seed"}
    sampled = next(s for s in record["stages"] if s["name"] == "sampled_L")
    assert sampled["n"] == 16 and sampled["seed"] == 4


@pytest.mark.parametrize("seed", [pytest.param(s, id=f"seed{s}") for s in range(1, 11)])
def test_cnd_check_E_seeds(separated_archipelago, seed):
    ev = KernelEvaluator(separated_archipelago)
    report = cnd_check_E(ev, SamplePlan.for_evaluator(ev, 16, seed))
    assert report.psd
    assert report.max_eig <= report.threshold


@pytest.mark.parametrize("seed", [pytest.param(s, id=f"seed{s}") for s in range(1, 6)])
def test_certificate_point_eval_detects_overlap(seed):
    ev = KernelEvaluator(make_archipelago([(0, 1.0), (1, 1.0)]))
    report = certificate_point_eval(ev, None, SamplePlan.for_evaluator(ev, 48, seed))
    assert not report.pointeval_ok
    assert not report.grams["L[lambda]"].psd


@pytest.mark.parametrize("seed", [pytest.param(s, id=f"seed{s}") for s in range(1, 21)])
@pytest.mark.parametrize("n", [pytest.param(n, id=f"n{n}") for n in (16, 32, 64)])
def test_single_disk_certificates(seed, n):
    ev = KernelEvaluator(make_archipelago([(0.3 + 0.2j, 1.7)]))
    plan = SamplePlan.for_evaluator(ev, n, seed)
    assert certificate_bounded(ev, plan).bounded_ok
    assert certificate_point_eval(ev, None, plan).pointeval_ok
