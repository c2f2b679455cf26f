"""stitlab: a desk-scale laboratory for spatial STIT tessellations.

Exact stochastic construction in a cube window, full combinatorial
classification of vertices, edges and I-segments, numerical evaluation of
the corresponding analytic probabilities and mean values, and a harness
that cross-validates the two.
"""

from .geometry import (ConvexPolytope, Plane, PointMerger, SourceTag,
                       TolerancePolicy, make_window, mean_width,
                       split_polytope)
from .directions import (DirectionalDistribution, direction_preset,
                         hitting_weight, sample_hitting_plane)
from .engine import (ConstructionResult, IPolygonRecord, SideRecord,
                     calibrate_time, run_construction)
from .combinatorics import (EdgeRecord, ISegmentRecord, Mark,
                            TessellationStructure, VertexRecord,
                            build_structure, classify_vertices,
                            edge_classes, extract_segments, place_marks)
from .estimators import (EstimatorReport, aggregate_replicates,
                         extract_plates, replicate_statistics)
from .quadrature import QuadratureConfig, quad1d, quad2d
from . import analytic

__version__ = "0.1.0"
