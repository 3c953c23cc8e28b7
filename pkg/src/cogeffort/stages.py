"""Batch pipeline stages.

Each stage reads its upstream artifacts (digest-checked against the run
manifest when recorded), writes its outputs into the run directory, and
appends digests to ``run_manifest.json``. Stage order:

    synth -> prep -> train (or gridsearch) -> baselines -> explain -> effort
"""

import dataclasses
import time
from pathlib import Path

import numpy as np

from . import artifacts, prep, trees
from .config import RunConfig
from .effort import compare_effort, effort_records, segment_aggregates
from .errors import ConfigError, DataError
from .explain import (AttributionReport, RegionMap, latent_pca_correlation,
                      region_contribution, shapley_exact)
from .metrics import classification_metrics
from .net import checkpoint as ckpt
from .net import extract_latent, grid_search, predict_proba
from .net.model import head_predictor
from .net.training import Trainer
from .synth import generate_cohort
from .util import DOMAIN_SHAP, substream
from .version import __version__

CHECKPOINT_FILE = "model.ckpt"
PLOT_KINDS = ("history", "heatmap", "shapley", "scatter")


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(config: RunConfig, out: Path) -> artifacts.Manifest:
    return artifacts.Manifest.load_or_create(out, __version__, config.seed)


class _StageRun:
    """Tracks one stage's consumed inputs and wall-clock, then writes the
    manifest entry (the resolved config is stored once at the top level)."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.out = _out_dir(config)
        self.started = time.perf_counter()
        self.inputs: dict[str, str] = {}

    def read(self, name: str, producer: str) -> Path:
        path = artifacts.require_artifact(self.out, name, producer)
        _manifest(self.config, self.out).verify(path)
        self.inputs[name] = artifacts.sha256_path(path)
        return path

    def finish(self, stage: str, files: list[Path]) -> dict[str, str]:
        digests = {f.name: artifacts.sha256_path(f) for f in files}
        _manifest(self.config, self.out).record(
            stage, digests, inputs=self.inputs,
            elapsed_s=round(time.perf_counter() - self.started, 6),
            config=dataclasses.asdict(self.config))
        return digests


def run_synth(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    trials = generate_cohort(config.synth)
    path = out / "trials.csv"
    artifacts.write_trials_csv(path, trials)
    run.finish("synth", [path])
    return {"trials": len(trials), "artifacts": [path.name]}


def _detrend_enabled(config: RunConfig) -> bool:
    if config.prep.detrend == "on":
        return True
    if config.prep.detrend == "off":
        return False
    return config.synth.drift_slope_sd > 0


def run_prep(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    trials = artifacts.read_trials_csv(run.read("trials.csv", "synth"))

    detrend = _detrend_enabled(config)
    rows = []
    for trial in trials:
        t = prep.impute_missing(trial)
        if detrend:
            t = prep.clean_trial(t, config.prep.ma_window)
        rows.append(prep.FeatureRow(participant_id=t.participant_id,
                                    question_id=t.question_id, session=t.session,
                                    segment=t.segment,
                                    features=prep.aggregate_trial(t),
                                    label=t.label))

    split = config.prep.split_spec()
    train_rows, _, _ = prep.split_by_participant(rows, split)
    x_train = np.stack([r.features for r in train_rows])
    x_train_std, _, mean, scale = prep.standardize(x_train)
    model = prep.pca_fit(x_train_std, k=config.prep.pca_components,
                         mean=mean, scale=scale)

    x_all = np.stack([r.features for r in rows])
    scores = prep.pca_project(model, x_all)
    feature_rows = [
        prep.FeatureRow(participant_id=r.participant_id, question_id=r.question_id,
                        session=r.session, segment=r.segment,
                        features=scores[i], label=r.label)
        for i, r in enumerate(rows)
    ]

    features_path = out / "features.csv"
    pca_path = out / "pca_model.json"
    artifacts.write_features_csv(features_path, feature_rows)
    artifacts.write_pca_json(pca_path, model)
    run.finish("prep", [features_path, pca_path])
    return {"rows": len(feature_rows), "detrend": detrend,
            "artifacts": [features_path.name, pca_path.name]}


def _load_feature_split(run: "_StageRun"):
    rows = artifacts.read_features_csv(run.read("features.csv", "prep"))
    split = run.config.prep.split_spec()
    train_rows, val_rows, test_rows = prep.split_by_participant(rows, split)
    if not val_rows:
        raise ConfigError("validation_participants must be non-empty for training")
    return rows, train_rows, val_rows, test_rows


def _xy(rows, width: int = 12):
    x = prep.reshape_for_model(np.stack([r.features for r in rows]), width)
    y = np.array([r.label for r in rows])
    return x, y


def _balanced_training_set(config: RunConfig, train_rows):
    balanced = prep.smote_rows(train_rows, k_neighbors=config.prep.smote_k,
                               seed=config.seed)
    x = np.stack([r.features for r in balanced])
    y = np.array([r.label for r in balanced])
    return x, y


def run_train(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    rows, train_rows, val_rows, test_rows = _load_feature_split(run)

    xb, yb = _balanced_training_set(config, train_rows)
    width = config.prep.pca_components
    x_train = prep.reshape_for_model(xb, width)
    x_val, y_val = _xy(val_rows, width)

    model_config = config.train.model_config(seed=config.seed, input_features=width)
    trained = Trainer(model_config).train(x_train, yb, x_val, y_val)

    x_all, _ = _xy(rows, width)
    probs = predict_proba(trained, x_all)
    preds = np.argmax(probs, axis=1)
    split = config.prep.split_spec()

    def split_of(row):
        if row.participant_id in split.test_participants:
            return "test"
        if row.participant_id in split.validation_participants:
            return "validation"
        return "train"

    pred_path = out / "predictions.csv"
    artifacts.write_predictions_csv(pred_path, (
        [r.participant_id, r.question_id, r.session, r.segment, split_of(r),
         r.label, int(preds[i]), probs[i, 0], probs[i, 1]]
        for i, r in enumerate(rows)))

    test_idx = [i for i, r in enumerate(rows) if split_of(r) == "test"]
    report = classification_metrics([rows[i].label for i in test_idx],
                                    preds[test_idx])
    ckpt_path = out / CHECKPOINT_FILE
    ckpt.save_checkpoint(ckpt_path, trained)
    history_path = out / "history.csv"
    artifacts.write_history_csv(history_path, trained.history)
    report_path = out / "train_report.json"
    train_report = {
        "architecture": model_config.architecture,
        "best_epoch": trained.best_epoch,
        "epochs_run": len(trained.history),
        "balanced_training_rows": int(len(yb)),
        "test_metrics": report.to_dict(),
    }
    artifacts.write_json(report_path, train_report)
    run.finish("train", [ckpt_path, history_path, pred_path, report_path])
    return train_report


def run_gridsearch(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    _, train_rows, val_rows, _ = _load_feature_split(run)
    xb, yb = _balanced_training_set(config, train_rows)
    width = config.prep.pca_components
    x_train = prep.reshape_for_model(xb, width)
    x_val, y_val = _xy(val_rows, width)

    base = config.train.model_config(seed=config.seed, input_features=width)
    base = base.with_overrides(max_epochs=config.grid.max_epochs)
    result = grid_search(base, config.grid.space(), x_train, yb, x_val, y_val,
                         master_seed=config.seed)

    log_path = out / "grid_log.csv"
    artifacts.write_grid_log_csv(log_path, result.entries)
    declared = config.grid.declared_count
    mismatch = result.enumerated_count != declared
    note = ""
    if mismatch:
        note = (f"declared configuration count ({declared}) does not match the "
                f"enumerated Cartesian product ({result.enumerated_count}); "
                "all enumerated configurations were trained")
    report = {
        "enumerated_count": result.enumerated_count,
        "declared_count": declared,
        "count_mismatch": mismatch,
        "note": note,
        "leaderboard": [vars(e) for e in result.leaderboard],
    }
    report_path = out / "grid_report.json"
    artifacts.write_json(report_path, report)
    run.finish("gridsearch", [log_path, report_path])
    return report


def run_baselines(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    _, train_rows, _, test_rows = _load_feature_split(run)
    trained = ckpt.load_checkpoint(run.read(CHECKPOINT_FILE, "train"))

    xb, yb = _balanced_training_set(config, train_rows)
    x_test = np.stack([r.features for r in test_rows])
    y_test = np.array([r.label for r in test_rows])

    forest = trees.train_random_forest(xb, yb, seed=config.seed)
    gbt = trees.train_gbt(xb, yb, seed=config.seed)
    comparison = trees.evaluate_latent_features(trained, xb, yb, x_test, y_test,
                                                seed=config.seed)

    forest_report = classification_metrics(y_test, forest.predict(x_test))
    gbt_report = classification_metrics(y_test, gbt.predict(x_test))

    forest_path = out / "forest_model.json"
    gbt_path = out / "gbt_model.json"
    artifacts.write_json(forest_path, forest.to_dict())
    artifacts.write_json(gbt_path, gbt.to_dict())
    report = {
        "architecture": comparison.architecture,
        "raw_accuracy": comparison.raw_accuracy,
        "latent_accuracy": comparison.latent_accuracy,
        "delta": comparison.delta,
        "random_forest": forest_report.to_dict(),
        "gbt_raw": gbt_report.to_dict(),
    }
    report_path = out / "baselines_report.json"
    artifacts.write_json(report_path, report)
    run.finish("baselines", [forest_path, gbt_path, report_path])
    return report


def run_explain(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    rows, train_rows, _, test_rows = _load_feature_split(run)
    trained = ckpt.load_checkpoint(run.read(CHECKPOINT_FILE, "train"))
    pca_model = artifacts.read_pca_json(run.read("pca_model.json", "prep"))

    width = config.prep.pca_components
    x_all, _ = _xy(rows, width)
    latents_all = extract_latent(trained, x_all)
    scores_all = np.stack([r.features for r in rows])
    correlation = latent_pca_correlation(latents_all, scores_all)
    regions = region_contribution(pca_model, RegionMap())

    x_train, _ = _xy(train_rows, width)
    background = extract_latent(trained, x_train)
    limit = config.explain.background_rows
    if background.shape[0] > limit:
        rng = substream(config.seed, DOMAIN_SHAP)
        keep = np.sort(rng.choice(background.shape[0], size=limit, replace=False))
        background = background[keep]

    predictor = head_predictor(trained.params)
    x_test, _ = _xy(test_rows, width)
    latents_test = extract_latent(trained, x_test)
    shap_rows = []
    base_value = 0.0
    for i in range(latents_test.shape[0]):
        result = shapley_exact(predictor, latents_test[i], background,
                               max_features=config.explain.max_shapley_features)
        shap_rows.append(result.values)
        base_value = result.base_value
    shap_matrix = (np.stack(shap_rows) if shap_rows
                   else np.zeros((0, latents_test.shape[1])))

    report = AttributionReport(
        region_contributions=regions,
        latent_pc_correlations=correlation,
        shapley_values=shap_matrix,
        base_value=base_value,
        architecture=trained.config.architecture,
        sample_keys=[[r.participant_id, r.question_id] for r in test_rows])
    attr_path = out / "attributions.json"
    artifacts.write_json(attr_path, report.to_json_dict())

    corr_path = out / "correlation.csv"
    artifacts.write_csv(corr_path, ["feature", "pc", "r"],
                        ([i, j + 1, correlation.matrix[i, j]]
                         for i in range(correlation.matrix.shape[0])
                         for j in range(correlation.matrix.shape[1])))

    mean_abs = report.mean_abs_shapley() if shap_matrix.size else np.zeros(0)
    ranking = sorted(range(mean_abs.shape[0]), key=lambda i: (-mean_abs[i], i))
    shap_path = out / "shapley_summary.csv"
    artifacts.write_csv(shap_path, ["rank", "feature", "mean_abs_shap"],
                        ([rank + 1, feat, mean_abs[feat]]
                         for rank, feat in enumerate(ranking)))

    run.finish("explain", [attr_path, corr_path, shap_path])
    return report.to_json_dict()


def run_effort(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    trials = artifacts.read_trials_csv(run.read("trials.csv", "synth"))
    test_ids = set(config.prep.test_participants)
    test_trials = [t for t in trials if t.participant_id in test_ids]
    if not test_trials:
        raise DataError("no trials for the configured test participants")

    if config.effort.predictions == "oracle":
        override = None
    else:
        preds = artifacts.read_predictions_csv(
            run.read("predictions.csv", "train"))
        override = {(p["participant_id"], p["question_id"]): float(p["pred_label"])
                    for p in preds if p["participant_id"] in test_ids}
        missing = [(t.participant_id, t.question_id) for t in test_trials
                   if (t.participant_id, t.question_id) not in override]
        if missing:
            raise DataError(f"predictions.csv lacks test questions: {missing[:5]}")

    mode = config.effort.mode
    actual = effort_records(segment_aggregates(test_trials), "actual", mode=mode)
    predicted = effort_records(segment_aggregates(test_trials, override),
                               "predicted", mode=mode)
    comparison = compare_effort(actual, predicted)

    effort_path = out / "effort.csv"
    artifacts.write_effort_csv(effort_path, [*actual, *predicted])
    report_path = out / "effort_report.json"
    artifacts.write_json(report_path, comparison.to_json_dict())
    scatter_path = out / "scatter.csv"
    artifacts.write_scatter_csv(scatter_path, comparison.scatter)
    run.finish("effort", [effort_path, report_path, scatter_path])
    return comparison.to_json_dict()


SUMMARY_REQUIRED = {
    "seed": int,
    "version": str,
    "n_trials": int,
    "test_metrics": dict,
    "baselines": dict,
    "effort": dict,
}
_TEST_METRIC_KEYS = ("accuracy", "precision", "recall", "f1")
_BASELINE_KEYS = ("raw_accuracy", "latent_accuracy", "delta", "architecture")


def validate_summary(summary: dict) -> None:
    """Schema check for summary.json; raises ConfigError on violations."""
    for key, kind in SUMMARY_REQUIRED.items():
        if key not in summary:
            raise ConfigError(f"summary missing required key {key!r}")
        if not isinstance(summary[key], kind):
            raise ConfigError(f"summary key {key!r} must be {kind.__name__}")
    for key in _TEST_METRIC_KEYS:
        if not isinstance(summary["test_metrics"].get(key), float):
            raise ConfigError(f"summary test_metrics.{key} must be a float")
    for key in _BASELINE_KEYS:
        if key not in summary["baselines"]:
            raise ConfigError(f"summary baselines.{key} missing")
    for key in ("per_participant", "pooled"):
        if key not in summary["effort"]:
            raise ConfigError(f"summary effort.{key} missing")


def run_pipeline(config: RunConfig) -> dict:
    run = _StageRun(config)
    out = run.out
    synth_info = run_synth(config)
    run_prep(config)
    if config.train.strategy == "grid":
        grid_report = run_gridsearch(config)
        best = grid_report["leaderboard"][0]
        config.train.gru_units = best["gru_units"]
        config.train.dropout_rate = best["dropout_rate"]
        config.train.learning_rate = best["learning_rate"]
        config.train.batch_size = best["batch_size"]
        config.train.bn_identity_fallback = (config.train.bn_identity_fallback
                                             or best["bn_fallback"])
    train_report = run_train(config)
    baseline_report = run_baselines(config)
    run_explain(config)
    effort_report = run_effort(config)

    summary = {
        "seed": config.seed,
        "version": __version__,
        "n_trials": synth_info["trials"],
        "test_metrics": train_report["test_metrics"],
        "baselines": baseline_report,
        "effort": effort_report,
    }
    validate_summary(summary)
    summary_path = out / "summary.json"
    artifacts.write_json(summary_path, summary)
    run.finish("pipeline", [summary_path])
    return summary


def emit_plot_data(config: RunConfig, kind: str) -> Path:
    """Plot-ready CSVs derived from stage artifacts (no rendering)."""
    run = _StageRun(config)
    out = run.out
    if kind not in PLOT_KINDS:
        raise ConfigError(f"unknown plot kind {kind!r}; choose from {PLOT_KINDS}")
    if kind == "history":
        src = run.read("history.csv", "train")
        dest = out / "plot_history.csv"
        dest.write_bytes(Path(src).read_bytes())
        return dest
    if kind == "heatmap":
        report = artifacts.read_json(run.read("attributions.json", "explain"))
        matrix = report["latent_pc_correlations"]
        dest = out / "plot_heatmap.csv"
        artifacts.write_csv(dest, ["feature", "pc", "r"],
                             ([i, j + 1, matrix[i][j]]
                              for i in range(len(matrix))
                              for j in range(len(matrix[0]))))
        return dest
    if kind == "shapley":
        src = run.read("shapley_summary.csv", "explain")
        dest = out / "plot_shapley.csv"
        dest.write_bytes(Path(src).read_bytes())
        return dest
    src = run.read("scatter.csv", "effort")
    dest = out / "plot_scatter.csv"
    dest.write_bytes(Path(src).read_bytes())
    return dest


STAGES = {
    "synth": run_synth,
    "prep": run_prep,
    "train": run_train,
    "gridsearch": run_gridsearch,
    "baselines": run_baselines,
    "explain": run_explain,
    "effort": run_effort,
    "pipeline": run_pipeline,
}
