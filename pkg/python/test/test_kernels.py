import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdcert import GuardError, SpecificationError
from qdcert.domains import QuadratureDomain, defining_data, make_archipelago
from qdcert.kernels import (
    EvaluationPath,
    KernelEvaluator,
    PointQuad,
    antidiagonal_L,
    divided_table,
    exp_transform,
    identity_suite,
    kernel_L,
    kernel_L_disk_closed,
    kernel_LE,
    kernel_M_N,
    quotient_L,
    union_evaluator,
)


def points_in_sector(lo, hi):
    """Points of modulus 6..20, outside the guard radius 5.25 of the disks D(0, 1), D(4, 1)."""
    return st.builds(
        lambda r, theta: cmath.rect(r, theta),
        st.floats(min_value=6.0, max_value=20.0),
        st.floats(min_value=lo, max_value=hi),
    )


guarded_points = points_in_sector(0.0, 2 * math.pi)

# w, z in the upper half-plane and u, v in the lower one keep v - w and u - z away from zero.
separated_quads = st.builds(
    PointQuad,
    points_in_sector(0.0, 0.9 * math.pi),
    points_in_sector(0.0, 0.9 * math.pi),
    points_in_sector(math.pi, 1.9 * math.pi),
    points_in_sector(math.pi, 1.9 * math.pi),
)
any_quads = st.builds(PointQuad, guarded_points, guarded_points, guarded_points, guarded_points)


def separated_evaluators():
    first = KernelEvaluator(make_archipelago([(0, 1.0)]))
    second = KernelEvaluator(make_archipelago([(4, 1.0)]))
    return first, second, union_evaluator(first, second)


def raw_evaluator(arch):
    p, q = defining_data(arch)
    return KernelEvaluator(QuadratureDomain(p, q, arch.bounding_radius))


def test_guard_factor_minimum(unit_disk):
    with pytest.raises(SpecificationError):
        KernelEvaluator(unit_disk, guard=1.0)


def test_exp_transform_unit_disk(unit_disk_evaluator):
    assert exp_transform(unit_disk_evaluator, 2, 2) == pytest.approx(0.75)
    assert exp_transform(unit_disk_evaluator, 2j, 3) == pytest.approx(1 - 1 / (2j * 3))


def test_exp_transform_guard(unit_disk_evaluator):
    with pytest.raises(GuardError):
        exp_transform(unit_disk_evaluator, 0.5, 2)
    with pytest.raises(GuardError):
        kernel_L(unit_disk_evaluator, (2, 2, 1.0, 2))


def test_exp_transform_arrays(unit_disk_evaluator):
    w = np.array([2.0, 3.0, 4j])
    values = exp_transform(unit_disk_evaluator, w, 2.0)
    assert values.shape == (3,)
    assert np.allclose(values, 1 - 1 / (w * 2.0))


def test_kernel_L_confluent_unit_disk(unit_disk_evaluator):
    assert kernel_L(unit_disk_evaluator, (2, 2, 2, 2)) == pytest.approx(1 / 12, abs=1e-14)
    raw = raw_evaluator(make_archipelago([(0, 1.0)]))
    assert kernel_L(raw, (2, 2, 2, 2)) == pytest.approx(1 / 12, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(any_quads)
def test_divided_path_matches_disk_closed_form(q):
    ev = KernelEvaluator(make_archipelago([(0, 1.0)]))
    expected = kernel_L_disk_closed(ev.disks[0], q)
    assert kernel_L(ev, q, EvaluationPath.DIVIDED) == pytest.approx(expected, rel=1e-9, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(separated_quads)
def test_quotient_path_matches_disk_closed_form(q):
    ev = KernelEvaluator(make_archipelago([(0, 1.0)]))
    expected = kernel_L_disk_closed(ev.disks[0], q)
    assert kernel_L(ev, q, EvaluationPath.QUOTIENT) == pytest.approx(expected, rel=1e-8, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(any_quads)
def test_kernel_L_hermitian_symmetry(q):
    _, _, ev = separated_evaluators()
    swapped = kernel_L(ev, q.swapped(), EvaluationPath.DIVIDED)
    assert swapped == pytest.approx(np.conj(kernel_L(ev, q, EvaluationPath.DIVIDED)), rel=1e-8, abs=1e-15)


@settings(max_examples=30, deadline=None)
@given(guarded_points, guarded_points)
def test_kernel_L_diagonal_non_negative(w, z):
    _, _, ev = separated_evaluators()
    value = kernel_L(ev, (w, z, w, z))
    assert abs(value.imag) <= 1e-12 * max(1.0, abs(value))
    assert value.real >= -1e-15


def test_divided_path_agrees_near_confluence():
    _, _, ev = separated_evaluators()
    q = PointQuad.of(7 + 1j, -6 + 2j, -6 + 2j + 1e-2, 7 + 1j + 1e-2j)
    quotient = kernel_L(ev, q, EvaluationPath.QUOTIENT)
    divided = kernel_L(ev, q, EvaluationPath.DIVIDED)
    assert divided == pytest.approx(quotient, rel=1e-6)


def test_divided_table_values(unit_disk_evaluator):
    q = PointQuad.of(2, 3j, -2, 4)
    table = divided_table(unit_disk_evaluator, q)
    e = lambda w, z: 1 - 1 / (w * np.conj(z))
    assert table[0, 0] == pytest.approx(e(2, 3j))
    assert table[1, 1] == pytest.approx(e(2, -2))
    assert table[2, 2] == pytest.approx(e(4, 3j))
    assert table[3, 3] == pytest.approx(e(4, -2))
    assert table[0, 2] == pytest.approx((e(4, 3j) - e(2, 3j)) / (4 - 2))


def test_raw_and_disk_evaluators_agree(separated_archipelago):
    disk = KernelEvaluator(separated_archipelago)
    raw = raw_evaluator(separated_archipelago)
    q = PointQuad.of(6 + 1j, -7j, 8, -6 - 6j)
    assert exp_transform(raw, q.w, q.z) == pytest.approx(exp_transform(disk, q.w, q.z), rel=1e-12)
    assert kernel_L(raw, q) == pytest.approx(kernel_L(disk, q), rel=1e-8)
    assert antidiagonal_L(raw, q.w, q.z) == pytest.approx(antidiagonal_L(disk, q.w, q.z), rel=1e-8)


def test_union_evaluator_of_raw_parts(separated_pair):
    raw = [raw_evaluator(make_archipelago([d])) for d in separated_pair]
    union = union_evaluator(*raw)
    assert not union.is_disk_union
    disk = KernelEvaluator(make_archipelago(separated_pair))
    assert exp_transform(union, 9, -7j) == pytest.approx(exp_transform(disk, 9, -7j), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(guarded_points, guarded_points)
def test_antidiagonal_matches_four_argument_kernel(w, z):
    _, _, ev = separated_evaluators()
    expected = kernel_L(ev, (w, z, z, w), EvaluationPath.DIVIDED)
    assert antidiagonal_L(ev, w, z) == pytest.approx(expected, rel=1e-8, abs=1e-15)


def test_kernel_M_N(unit_disk_evaluator):
    m, n = kernel_M_N(unit_disk_evaluator, 2, 2)
    assert m == pytest.approx(0.25)
    assert n == pytest.approx(1 / 3)


def test_quotient_and_product_kernels(unit_disk_evaluator):
    q = PointQuad.of(2, 3, 4j, -2)
    l_value = kernel_L(unit_disk_evaluator, q)
    assert quotient_L(unit_disk_evaluator, q) == pytest.approx(l_value / exp_transform(unit_disk_evaluator, q.v, q.z))
    assert kernel_LE(unit_disk_evaluator, q) == pytest.approx(l_value * exp_transform(unit_disk_evaluator, q.w, q.u))


@settings(max_examples=20, deadline=None)
@given(separated_quads)
def test_merging_identities(q):
    first, second, _ = separated_evaluators()
    residuals = identity_suite(first, second, q)
    assert residuals.passed(1e-12), residuals


def test_merging_identities_with_empty_island(unit_disk_evaluator):
    residuals = identity_suite(unit_disk_evaluator, None, (2, 3j, -2, 4))
    assert residuals.max_residual < 1e-15


@settings(max_examples=30, deadline=None)
@given(guarded_points, guarded_points)
def test_reverse_cauchy_schwarz(w, z):
    _, _, ev = separated_evaluators()
    e_wz = exp_transform(ev, w, z)
    assert abs(e_wz) ** 2 >= (exp_transform(ev, w, w) * exp_transform(ev, z, z)).real - 1e-12
