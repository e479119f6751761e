"""Correlation-regime detection, signed-network validation and regime-local lead-lag analysis."""

__version__ = "0.1.0"

from .correlation import (
    CorrelationStack,
    Method,
    WindowSpec,
    correlation_matrix,
    kendall,
    pearson,
    spearman,
    weighted_kendall,
    windowed_stack,
)
from .ingest import AssetClass, AssetMeta, IngestError, ReturnsPanel, load_levels, load_meta, to_returns
from .leadlag import hermitian_cluster, leadlag_matrix, optimal_lag, regime_leadlag, v_measure
from .profile import betweenness_centrality, profile_regimes
from .regimes import detect_regimes, elbow_k, pca_embed, time_similarity, to_distance
from .signed import ari, signed_modularity, sponge_sym, stability_series, threshold_graph
from .strategy import run_leadlag_strategy

__all__ = [
    "AssetClass", "AssetMeta", "CorrelationStack", "IngestError", "Method", "ReturnsPanel", "WindowSpec",
    "ari", "betweenness_centrality", "correlation_matrix", "detect_regimes", "elbow_k", "hermitian_cluster",
    "kendall", "leadlag_matrix", "load_levels", "load_meta", "optimal_lag", "pca_embed", "pearson",
    "profile_regimes", "regime_leadlag", "run_leadlag_strategy", "signed_modularity", "spearman",
    "sponge_sym", "stability_series", "threshold_graph", "time_similarity", "to_distance", "to_returns",
    "v_measure", "weighted_kendall", "windowed_stack",
]
