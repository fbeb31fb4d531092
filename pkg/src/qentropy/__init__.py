"""Quasi-entropy free energies for liquid crystals of rigid molecules.

The ``quasi_entropy`` submodule holds the explicit formulas; the name is not
re-exported as a function so the submodule stays importable as an attribute.
"""

from .models import ModelCoefficients, RTriple
from .quasi_entropy import OrderParameterSet, QuasiEntropyValue
from .tensor_core import Rotation, SymTensor, SymTracelessTensor

__all__ = [
    "ModelCoefficients",
    "OrderParameterSet",
    "QuasiEntropyValue",
    "RTriple",
    "Rotation",
    "SymTensor",
    "SymTracelessTensor",
]
__version__ = "0.1.0"
