"""Numerical checks for Lipschitz maps factoring through metric trees."""

from .seminorm import Seminorm, jacobian, jacobian_exact, unit_ball_volume
from .sampled_map import GridDomain, MetricTarget, SampledMap, from_function, from_values, rank_field
from .content import ContentReport, density, hausdorff_content, mapping_content_dp
from .quotient import QuotientSpace, pullback_metric, tree_certificate
from .curves import Curve, length, oriented_area
from .builtins import make_builtin

__version__ = "0.1.0"
