"""Reaction-diffusion inference of age groups on sparse communication graphs."""

from agegraph._accel import BACKEND
from agegraph.errors import AgeGraphError, DataError, InvariantViolation, ParseError
from agegraph.graph import (
    DEFAULT_SCHEME,
    CategoryScheme,
    EdgeListSchema,
    Graph,
    NodePartition,
    assign_category,
    ingest_edge_list,
    prune_high_degree,
    prune_seedless_components,
    split_ground_truth,
)
from agegraph.labeling import (
    Assignment,
    QuotaPlan,
    collapse_argmax,
    compute_quotas,
    filter_by_threshold,
    pps_assign,
)
from agegraph.propagation import (
    PropagationConfig,
    PropagationState,
    convergence_trace,
    init_state,
    laplacian_oracle_run,
    run,
    step,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "DEFAULT_SCHEME",
    "AgeGraphError",
    "Assignment",
    "CategoryScheme",
    "DataError",
    "EdgeListSchema",
    "Graph",
    "InvariantViolation",
    "NodePartition",
    "ParseError",
    "PropagationConfig",
    "PropagationState",
    "QuotaPlan",
    "assign_category",
    "collapse_argmax",
    "compute_quotas",
    "convergence_trace",
    "filter_by_threshold",
    "ingest_edge_list",
    "init_state",
    "laplacian_oracle_run",
    "pps_assign",
    "prune_high_degree",
    "prune_seedless_components",
    "run",
    "split_ground_truth",
    "step",
]
