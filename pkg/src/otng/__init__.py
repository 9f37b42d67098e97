"""Wasserstein geometry on graph probability simplices and parametric models."""
from ._kernels import BACKEND
from .errors import (BoundaryEscape, BoundaryPoint, ConfigError, DisconnectedGraph, DomainEscape,
                     GraphError, InnerNonConvergence, MaxItersExceeded, NonConvergence,
                     NotInclusionClosed, OTNGError, RankDeficient, SingularMetric,
                     TangentNotInModel, TooManyBits)
from .graph import (GraphVectorField, SpectralLaplacian, WeightedGraph, div_G, gamma_one, grad_G,
                    incidence_matrix, laplacian, laplacian_matrix, load_graph, pairing_p, save_graph)
from .manifold import (ParametricModel, PullbackMetric, curvature, displacement_convexity_gap,
                       hessian_g, metric, parallel_transport, parameter_distance,
                       parameter_geodesic_flow, projection, projector, second_fundamental_form)
from .models import (dirichlet_target, hierarchical_model, hypercube_graph, independence_model,
                     path_graph, simplex_chart, square_graph, three_state_model)
from .optim import (OptimizerTrace, StepRule, StopRule, expectation_objective, jko_step,
                    kl_objective, moment_stop, natural_gradient_step, run_descent,
                    vector_field_scan)
from .simplex import (DensityPath, cotangent_flow, dual_solve, exponential_geodesic,
                      fisher_rao_geodesic, fisher_rao_metric, primal_inner, static_lp_distance,
                      wasserstein_distance)

__version__ = "0.1.0"
