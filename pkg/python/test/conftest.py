import math

import pytest

from qdcert.domains import DiskSpec, make_archipelago
from qdcert.kernels import KernelEvaluator
from qdcert.sampling import SamplePlan


@pytest.fixture
def unit_disk():
    return make_archipelago([(0, 1.0)])


@pytest.fixture
def unit_disk_evaluator(unit_disk):
    return KernelEvaluator(unit_disk)


@pytest.fixture
def separated_pair():
    return DiskSpec(0j, 1.0), DiskSpec(4 + 0j, 1.0)


@pytest.fixture
def separated_archipelago(separated_pair):
    return make_archipelago(separated_pair)


@pytest.fixture
def tangent_pair():
    return make_archipelago([(-1.0, 1.0), (1.0, 1.0)])


@pytest.fixture
def overlapping_pair():
    return make_archipelago([(-0.8, 1.0), (0.8, 1.0)])


@pytest.fixture
def orthogonal_pair():
    return DiskSpec(-1 + 0j, math.sqrt(2)), DiskSpec(1 + 0j, math.sqrt(2))


@pytest.fixture
def default_plan(unit_disk_evaluator):
    return SamplePlan.for_evaluator(unit_disk_evaluator, 16, 1)
