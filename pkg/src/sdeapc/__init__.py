"""Small-domain estimation on age by calendar-year lattices.

Estimators for transition probabilities from direct proportions to
tensor-product P-splines, cross-validated predictive comparison,
counterfactual effect surfaces for mental-health changes, and a panel
simulator with known truth.
"""

from .basis import SmoothSpec, apply_constraint, bspline_basis, difference_penalty, tensor_basis, wiggle
from .errors import ConfigError, DataError, NumericalError, OutOfRangeError, SdeError
from .grid import DomainCell, DomainGrid, QuadraticApcCoeffs, apc_reparameterize
from .panel import CellCounts, Panel, aggregate, derive_has, extract_diffs, extract_transitions

__version__ = "0.1.0"
