"""Cognitive-effort estimation pipeline.

Generates (or ingests) fNIRS-style quiz trials, preprocesses them into
principal-component features, trains a CNN-GRU performance classifier plus
baselines, explains the model via region/latent/Shapley analysis, and turns
predicted scores and hemodynamic means into relative neural efficiency and
involvement metrics.
"""

from .effort import (EffortRecord, SegmentAggregate, compare_effort,
                     effort_records, rne_rni, segment_aggregates,
                     zscore_effort, zscore_performance)
from .errors import (AllMissingColumn, CogEffortError, ConfigError, DataError,
                     ShapeError, TrainingError)
from .explain import (AttributionReport, RegionMap, latent_pca_correlation,
                      region_contribution, shapley_exact)
from .metrics import ClassificationReport, ConfusionCounts, classification_metrics
from .net import (GridSpace, ModelConfig, TrainedModel, Trainer, grid_search,
                  predict, predict_proba, train)
from .prep import (FeatureRow, PcaModel, SplitSpec, aggregate_trial,
                   clean_series, impute_missing, pca_fit, pca_project,
                   reshape_for_model, smote, split_by_participant, standardize)
from .synth import (CohortSpec, HrfParams, Trial, canonical_hrf,
                    generate_cohort, generate_trial)
from .trees import (ForestModel, GbtModel, evaluate_latent_features, train_gbt,
                    train_random_forest)
from .version import __version__

__all__ = [name for name in dir() if not name.startswith("_")]
