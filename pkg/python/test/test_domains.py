import math

import numpy as np
import pytest

from qdcert import GuardError, SpecificationError
from qdcert.domains import (
    DiskSpec,
    QuadratureDomain,
    boundary_points,
    defining_data,
    make_archipelago,
    pairwise_disjoint,
    parse_archipelago,
    parse_complex,
    parse_quadrature_domain,
    schwarz_disk,
    two_disk_closed_form,
)


@pytest.mark.parametrize(
    "center,radius",
    [
        pytest.param(0, 0.0, id="zero_radius"),
        pytest.param(0, -1.0, id="negative_radius"),
        pytest.param(0, math.inf, id="infinite_radius"),
        pytest.param(complex(math.nan, 0), 1.0, id="nan_center"),
    ],
)
def test_disk_validation(center, radius):
    with pytest.raises(SpecificationError):
        DiskSpec(center, radius)


def test_empty_archipelago():
    with pytest.raises(SpecificationError):
        make_archipelago([])


def test_bounding_radius(separated_archipelago):
    assert separated_archipelago.bounding_radius == pytest.approx(5.0)
    assert separated_archipelago.area == pytest.approx(2 * math.pi)


def test_defining_data_two_disks():
    p, q = defining_data(make_archipelago([(-0.9, 1.0), (0.9, 1.0)]))
    assert np.allclose(p.coefficients, [-0.81, 0, 1])
    rng = np.random.default_rng(3)
    for w, z in rng.normal(size=(5, 2)) + 1j * rng.normal(size=(5, 2)):
        expected = ((w + 0.9) * (np.conj(z) + 0.9) - 1) * ((w - 0.9) * (np.conj(z) - 0.9) - 1)
        assert q(w, z) == pytest.approx(expected)


def test_defining_kernel_vanishes_on_boundary(separated_pair):
    arch = make_archipelago(separated_pair)
    _, q = defining_data(arch)
    for d in separated_pair:
        z = boundary_points(d, 32)
        assert np.max(np.abs(q.diagonal(z))) < 1e-10


def test_schwarz_disk_on_boundary():
    d = DiskSpec(1 + 2j, 0.5)
    for z in boundary_points(d, 16):
        assert schwarz_disk(d, z) == pytest.approx(np.conj(z))
    with pytest.raises(GuardError):
        schwarz_disk(d, d.center)


def test_pairwise_disjoint(tangent_pair, overlapping_pair, separated_archipelago):
    assert pairwise_disjoint(tangent_pair)
    assert pairwise_disjoint(separated_archipelago)
    assert not pairwise_disjoint(overlapping_pair)


@pytest.mark.parametrize(
    "a,expected",
    [
        pytest.param(0.7, False, id="below"),
        pytest.param(1 / math.sqrt(2), True, id="threshold"),
        pytest.param(0.72, True, id="above"),
    ],
)
def test_two_disk_closed_form(a, expected):
    assert two_disk_closed_form(DiskSpec(-a, 1.0), DiskSpec(a, 1.0)) is expected


def test_node_polynomial_must_be_monic():
    with pytest.raises(SpecificationError):
        QuadratureDomain.from_coefficients([0, 2], [[-1, 0], [0, 1]])


def test_kernel_must_be_hermitian():
    with pytest.raises(SpecificationError):
        QuadratureDomain.from_coefficients([0], [[-1, 1], [0, 1]])


def test_raw_unit_disk_bounding_radius():
    domain = QuadratureDomain.from_coefficients([0], [[-1, 0], [0, 1]])
    assert domain.degree == 1
    assert domain.archipelago is None
    assert domain.bounding_radius == pytest.approx(1.0, abs=1e-3)


@pytest.mark.parametrize(
    "value,expected",
    [
        pytest.param(2, 2 + 0j, id="int"),
        pytest.param([1, -2], 1 - 2j, id="pair"),
        pytest.param("3+4j", 3 + 4j, id="literal"),
        pytest.param(" 1 - 1j", 1 - 1j, id="spaces"),
    ],
)
def test_parse_complex(value, expected):
    assert parse_complex(value) == expected


@pytest.mark.parametrize(
    "value", [pytest.param("abc", id="text"), pytest.param([1, 2, 3], id="triple"), pytest.param(None, id="none")]
)
def test_parse_complex_rejects(value):
    with pytest.raises(SpecificationError):
        parse_complex(value)


def test_parse_archipelago_forms():
    triples = parse_archipelago([[-1, 0, 1], [1, 0, 1]])
    records = parse_archipelago({"disks": [{"cx": -1, "cy": 0, "r": 1}, {"cx": 1, "cy": 0, "r": 1}]})
    assert triples == records
    assert triples.disks[0] == DiskSpec(-1, 1.0)


@pytest.mark.parametrize(
    "obj",
    [
        pytest.param([], id="empty"),
        pytest.param([[0, 0]], id="short_triple"),
        pytest.param([[0, 0, -1]], id="negative_radius"),
        pytest.param({"islands": []}, id="missing_key"),
        pytest.param({"disks": [{"cx": 0, "r": 1}]}, id="missing_field"),
        pytest.param("disks", id="not_a_list"),
    ],
)
def test_parse_archipelago_rejects(obj):
    with pytest.raises(SpecificationError):
        parse_archipelago(obj)


def test_parse_quadrature_domain_raw():
    domain = parse_quadrature_domain({"P": [[0, 0], [1, 0]], "Q": [[[-1, 0], [0, 0]], [[0, 0], [1, 0]]]})
    assert domain.degree == 1
    assert domain.kernel(2.0, 2.0) == pytest.approx(3.0)


def test_parse_quadrature_domain_disks():
    domain = parse_quadrature_domain([[0, 0, 1]])
    assert domain.disks == (DiskSpec(0, 1.0),)
