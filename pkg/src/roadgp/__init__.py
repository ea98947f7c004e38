"""Decentralized Gaussian-process fusion and coordinated active sensing on road networks."""

from ._linalg import SingularCovarianceError
from .estimators import DecentralizedGP, FullGP, GeodesicMDS, PITCRegressor, SubsetOfDataGP
from .fusion import (
    GlobalSummary,
    LocalSummary,
    SupportSet,
    check_equivalence,
    global_summary,
    local_summary,
    pitc_oracle,
    predict_decentralized,
)
from .gp import GpModel, PosteriorGaussian, entropy, greedy_select, posterior_full, posterior_sod
from .network import (
    Embedding,
    KernelHyper,
    RoadNetwork,
    edge_weight,
    kernel,
    mds_embed,
    prior_covariance,
    shortest_path_distances,
)
from .sensing import (
    CoordinationGraph,
    PhiSet,
    SensingRound,
    adjacent,
    build_coordination_graph,
    centralized_walk_max,
    cholesky_global,
    component_joint_walk,
    compute_phi,
    enumerate_walks,
    entropy_bound_check,
)

__all__ = [
    "adjacent",
    "build_coordination_graph",
    "centralized_walk_max",
    "check_equivalence",
    "cholesky_global",
    "component_joint_walk",
    "compute_phi",
    "CoordinationGraph",
    "DecentralizedGP",
    "edge_weight",
    "Embedding",
    "entropy",
    "entropy_bound_check",
    "enumerate_walks",
    "FullGP",
    "GeodesicMDS",
    "global_summary",
    "GlobalSummary",
    "GpModel",
    "greedy_select",
    "kernel",
    "KernelHyper",
    "local_summary",
    "LocalSummary",
    "mds_embed",
    "PhiSet",
    "pitc_oracle",
    "PITCRegressor",
    "posterior_full",
    "posterior_sod",
    "PosteriorGaussian",
    "predict_decentralized",
    "prior_covariance",
    "RoadNetwork",
    "SensingRound",
    "shortest_path_distances",
    "SingularCovarianceError",
    "SubsetOfDataGP",
    "SupportSet",
]

__version__ = "0.1.0"
