import math

import numpy as np
import pytest

from qdcert import GuardError, SpecificationError
from qdcert.leveldeform import (
    VALUE_HOLE,
    branch_points,
    density_field,
    eval_Q,
    harmonic_function,
    interface_fidelity,
    level_curve_points,
    quadrature_identity_check,
    schwarz_branches,
)


@pytest.fixture(scope="module")
def fields():
    cache = {}

    def get(t, n=2000):
        if (t, n) not in cache:
            cache[(t, n)] = density_field(t, n)
        return cache[(t, n)]

    return get


def test_branch_points_half():
    bp = branch_points(0.5)
    assert bp.inner == pytest.approx(math.sqrt((2.5 - math.sqrt(4.25)) / 2), abs=1e-12)
    assert bp.outer == pytest.approx(math.sqrt((2.5 + math.sqrt(4.25)) / 2), abs=1e-12)
    assert bp.inner == pytest.approx(0.4682132, abs=1e-6)
    assert not bp.fused
    for z in bp.points():
        assert abs(z ** 4 + 2.5 * z ** 2 + 0.5) < 1e-12


@pytest.mark.parametrize(
    "t,inner,outer",
    [
        pytest.param(0.0, 1.0, 1.0, id="t0"),
        pytest.param(1.0, 0.0, math.sqrt(3), id="t1"),
    ],
)
def test_branch_points_fuse_at_the_ends(t, inner, outer):
    bp = branch_points(t)
    assert bp.fused
    assert bp.inner == pytest.approx(inner, abs=1e-12)
    assert bp.outer == pytest.approx(outer)


def test_branch_points_outside_range_warns(caplog):
    bp = branch_points(1.5)
    assert bp.fused
    assert bp.outer == pytest.approx(math.sqrt(3))
    assert "outside [0, 1]" in caplog.text


@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 1.0])
def test_level_curves_lie_on_level_set(t):
    outer, hole = level_curve_points(t, 64)
    assert np.max(np.abs(eval_Q(outer) - t)) < 1e-10
    if t < 1:
        assert len(hole) == 64
        assert np.max(np.abs(eval_Q(hole) - t)) < 1e-10
    else:
        assert len(hole) == 0


def test_schwarz_function_on_outer_boundary():
    outer, _ = level_curve_points(0.5, 8)
    z = outer[0]
    assert z.real > 1
    first, second = schwarz_branches(0.5, z)
    assert first == pytest.approx(np.conj(z), abs=1e-12)
    assert abs(second - np.conj(z)) > 1e-3


def test_schwarz_branches_at_t0():
    first, second = schwarz_branches(0.0, 3.0)
    assert first == pytest.approx(2.0, abs=1e-12)
    assert second == pytest.approx(-0.5, abs=1e-12)


@pytest.mark.parametrize(
    "z",
    [
        pytest.param(1.0, id="pole"),
        pytest.param(0.1j, id="inner_cut"),
        pytest.param(3j, id="outer_cut"),
    ],
)
def test_schwarz_function_guards(z):
    with pytest.raises(GuardError):
        schwarz_branches(0.5, z)


def test_density_field_validation():
    with pytest.raises(SpecificationError):
        density_field(0.5, 128)
    with pytest.raises(SpecificationError):
        density_field(0.5, 512, x_max=2.0)


def test_density_values(fields):
    start = fields(0.0, 512)
    assert set(np.unique(start.values)) == {0, 1, 2}
    assert start.hole_cells > 0
    assert start.values[256, 256] == VALUE_HOLE
    end = fields(1.0, 512)
    assert end.hole_cells == 0
    assert not end.unsupported


def test_hole_shrinks(fields):
    holes = [fields(t, 512).hole_cells for t in (0.0, 0.25, 0.5, 0.75)]
    assert all(a > b for a, b in zip(holes, holes[1:]))


def test_unsupported_t_is_flagged(caplog):
    field = density_field(1.5, 256)
    assert field.unsupported
    assert "outside [0, 1]" in caplog.text


def test_interface_fidelity(fields):
    assert interface_fidelity(fields(0.5, 512)) <= 1.5


def test_density_table(fields, tmp_path):
    field = fields(0.5, 256)
    table = field.to_table()
    assert table.column_names == ["x", "y", "value"]
    assert table.num_rows == 256 * 256
    path = field.write_csv(tmp_path / "density_grid.csv")
    lines = path.read_text().splitlines()
    assert lines[0].replace('"', "") == "x,y,value"
    assert len(lines) == 256 * 256 + 1


@pytest.mark.parametrize("t", [0.0, 0.25, 0.5, 0.75, 1.0])
@pytest.mark.parametrize("h", ["1", "z", "z2", "z3"])
def test_quadrature_identity(fields, t, h):
    report = quadrature_identity_check(t, h, field=fields(t))
    assert report.n == 2000
    assert report.rel_err <= 0.005, report


def test_mass_is_four_pi(fields):
    assert fields(0.5).mass == pytest.approx(4 * math.pi, rel=0.005)


def test_quadrature_identity_real_part(fields):
    report = quadrature_identity_check(0.5, "re_z2", field=fields(0.5))
    assert report.lhs.imag == 0.0
    assert report.rel_err <= 0.005


@pytest.mark.parametrize(
    "tag,expected",
    [
        pytest.param("z^2", "z2", id="caret"),
        pytest.param("z**3", "z3", id="power"),
        pytest.param(" 1 ", "1", id="spaces"),
    ],
)
def test_harmonic_function_tags(tag, expected):
    assert harmonic_function(tag).tag == expected


def test_harmonic_function_rejects():
    with pytest.raises(SpecificationError):
        harmonic_function("|z|^2")
    with pytest.raises(SpecificationError):
        harmonic_function([])


def test_custom_harmonic_function():
    h = harmonic_function([1, 0, 2])
    assert h(2.0) == pytest.approx(9.0)
    assert h.tag == "custom"
