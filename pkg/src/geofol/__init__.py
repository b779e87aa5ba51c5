"""Numerical toolkit for Riemannian foliations and Jacobi families.

Evaluatable manifold backends, geodesic and Jacobi-field integration,
transversal splittings with the positive semidefinite O'Neill-type
correction, vanishing/parallel decompositions in nonnegative curvature,
and dual-leaf exploration of foliated manifolds.
"""

__version__ = "0.1.0"

from .manifold import (ChartManifold, FrameManifold, ProductManifold,
                       CurvatureSample, builtin_manifold, parse_manifold,
                       christoffel, riemann, sectional, inner)
from .geodesic import (GeodesicPath, TransportedFrame, integrate_geodesic,
                       integrate_geodesic_batch, parallel_transport, evaluate)
from .jacobi import (JacobiField, JacobiFamily, RiccatiOperator,
                     integrate_jacobi, make_family, riccati_at,
                     family_from_foliation, family_from_killing)
from .transversal import (SubfamilySpec, TransversalSplit, ResidualReport,
                          build_split, a_operator, splitting_identities,
                          transversal_jacobi_residual, oneill_psd_check,
                          modified_curvature_form)
from .decomposition import (DecompositionReport, vanishing_subfamily,
                            parallel_subfamily, verify_decomposition,
                            default_window)
from .foliation import (FoliationSpec, DualLeafCloud, HorizontalityReport,
                        FlatCheckReport, leaf_tangent, horizontal_project,
                        horizontal_geodesic, accessibility_rank,
                        dual_leaf_trace, covering_radius, flat_check,
                        builtin_foliation, builtin_killing_fields,
                        transnormality_defect)
