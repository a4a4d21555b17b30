"""Numerical laboratory for fold-type endomorphisms of the 2-torus.

The package builds the expanding linear map ``A = diag(8, 2)``, its fold
deformation ``f``, the flattened map ``h = F o f`` and a C1-small destroyer
``g``, and checks their quantitative properties on explicit grids.
"""

from .certificate import Certificate
from .params import MapParams, ParamError

__all__ = ["Certificate", "MapParams", "ParamError", "__version__"]
__version__ = "0.1.0"
