"""File-driven pipeline: config, ingestion, synthesis, stages, CLI."""

from .config import RunConfig, from_dict, load_config
from .ingest import ingest_events, ingest_rates
from .pipeline import (
    RUN_SEQUENCE,
    STAGES,
    baseline_price,
    build_scenarios,
    read_cir_posterior,
    read_cluster_occupancy,
    read_crm_posterior,
    read_premium_curve,
    read_price_distribution,
    run_pipeline,
    run_stage,
)
from .synthetic import SyntheticSpec, generate_synthetic

__all__ = [
    "RunConfig",
    "from_dict",
    "load_config",
    "ingest_events",
    "ingest_rates",
    "RUN_SEQUENCE",
    "STAGES",
    "baseline_price",
    "build_scenarios",
    "read_cir_posterior",
    "read_cluster_occupancy",
    "read_crm_posterior",
    "read_premium_curve",
    "read_price_distribution",
    "run_pipeline",
    "run_stage",
    "SyntheticSpec",
    "generate_synthetic",
]
