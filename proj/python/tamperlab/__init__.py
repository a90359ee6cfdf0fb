"""Forensic analysis of tampered image classifiers."""

from ._core import (
    ConfigError,
    Corpus,
    LoadError,
    SuspectModel,
    TamperlabError,
    TrainingFailedError,
    UndefinedStatisticError,
    analyze,
    build_scenario,
    campaign_tables,
    evidence_manifest,
    grey_probe,
    load_campaign,
    load_corpus,
    load_model,
    save_model,
    train,
    rank_from_predictions,
    synthetic_corpus,
    welch_t_test,
    white_read,
)

__all__ = [
    "ConfigError",
    "Corpus",
    "LoadError",
    "SuspectModel",
    "TamperlabError",
    "TrainingFailedError",
    "UndefinedStatisticError",
    "analyze",
    "build_scenario",
    "campaign_tables",
    "evidence_manifest",
    "grey_probe",
    "load_campaign",
    "load_corpus",
    "load_model",
    "save_model",
    "train",
    "rank_from_predictions",
    "synthetic_corpus",
    "welch_t_test",
    "white_read",
]
