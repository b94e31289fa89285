"""
qdcert decides whether a finite family of planar disks (or quadrature domains given by their defining
polynomials) overlaps in area measure. The decision is backed by numerical positivity certificates built from

* the exponential transform E of the union and the four-argument kernel L derived from it,
* sampled Gram matrices of these kernels near infinity, and
* the block-matrix chain of the hyponormal operator with rank-one self-commutator attached to the union.

The package also carries desk-scale verifications of the level-set deformation of the two orthogonal disks
(integer densities, Schwarz function branches, quadrature identities) and of their spherical geometry.

All linear algebra is dense and small. Grids are classified and integrated with numba.
"""

from typing import Dict, Type

__version__ = "0.3.0"

__all__ = [
    "ChainError",
    "GuardError",
    "NumericalError",
    "SpecificationError",
    "error_category_to_exception_class",
]


class SpecificationError(ValueError):
    pass


class GuardError(ValueError):
    pass


class NumericalError(ArithmeticError):
    pass


class ChainError(RuntimeError):
    pass


error_category_to_exception_class: Dict[str, Type[Exception]] = {
    "SpecificationError": SpecificationError,
    "GuardError": GuardError,
    "NumericalError": NumericalError,
    "ChainError": ChainError,
}
