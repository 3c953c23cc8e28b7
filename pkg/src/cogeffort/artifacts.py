"""Artifact readers/writers and the run manifest.

All tabular artifacts are CSV with documented column orders, reports are JSON
with sorted keys; floats serialize via shortest round-trip repr, so every file
is byte-deterministic given the same inputs. Missing signal cells are empty
CSV fields.
"""

import csv
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .prep import FeatureRow, PcaModel
from .synth import CohortSpec, Trial

TRIALS_HEADER = (["participant_id", "question_id", "session", "segment", "t_index"]
                 + [f"o{i:02d}" for i in range(1, 17)] + ["label", "score"])
_FEATURE_PREFIX = ["participant_id", "question_id", "session", "segment"]


def features_header(n_features: int = 12) -> list[str]:
    return _FEATURE_PREFIX + [f"f{i:02d}" for i in range(1, n_features + 1)] + ["label"]


FEATURES_HEADER = features_header(12)
PREDICTIONS_HEADER = ["participant_id", "question_id", "session", "segment",
                      "split", "label", "pred_label", "p0", "p1"]
HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]
EFFORT_HEADER = ["participant_id", "session", "segment", "source", "mean_hbo",
                 "mean_score", "p_z", "ce_z", "rne", "rni"]
SCATTER_HEADER = ["metric", "actual", "predicted"]
GRID_LOG_HEADER = ["index", "gru_units", "dropout_rate", "learning_rate",
                   "batch_size", "val_acc", "val_loss", "best_epoch",
                   "epochs_run", "bn_fallback"]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if np.isnan(v) else repr(v)
    return str(value)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def write_trials_csv(path, trials: list[Trial]) -> None:
    def rows():
        for t in trials:
            for t_index in range(t.hbo.shape[0]):
                yield ([t.participant_id, t.question_id, t.session, t.segment, t_index]
                       + list(t.hbo[t_index]) + [t.label, t.score])

    write_csv(path, TRIALS_HEADER, rows())


def read_trials_csv(path) -> list[Trial]:
    path = Path(path)
    order: list[tuple] = []
    buckets: dict[tuple, dict] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRIALS_HEADER:
            raise DataError(f"{path.name}: unexpected header")
        for row in reader:
            key = (row[0], int(row[1]))
            if key not in buckets:
                order.append(key)
                buckets[key] = {"session": int(row[2]), "segment": int(row[3]),
                                "rows": []}
            values = [float(v) if v != "" else np.nan for v in row[5:21]]
            buckets[key]["rows"].append(values)
            buckets[key]["label"] = int(row[21])
            buckets[key]["score"] = float(row[22])
    trials = []
    for key in order:
        b = buckets[key]
        trials.append(Trial(participant_id=key[0], question_id=key[1],
                            session=b["session"], segment=b["segment"],
                            hbo=np.asarray(b["rows"], dtype=np.float64),
                            label=b["label"], score=b["score"]))
    return trials


def write_features_csv(path, rows: list[FeatureRow]) -> None:
    if not rows:
        raise DataError("refusing to write an empty feature table")
    width = len(rows[0].features)
    write_csv(path, features_header(width),
              ([r.participant_id, r.question_id, r.session, r.segment]
               + list(r.features) + [r.label] for r in rows))


def read_features_csv(path) -> list[FeatureRow]:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if (header is None or len(header) < 6
                or header != features_header(len(header) - 5)):
            raise DataError(f"{path.name}: unexpected header")
        width = len(header) - 5
        for row in reader:
            out.append(FeatureRow(
                participant_id=row[0], question_id=int(row[1]),
                session=int(row[2]), segment=int(row[3]),
                features=np.asarray([float(v) for v in row[4:4 + width]]),
                label=int(row[4 + width])))
    return out


def write_pca_json(path, model: PcaModel) -> None:
    write_json(path, {
        "mean": model.mean.tolist(),
        "scale": model.scale.tolist(),
        "loadings": model.loadings.tolist(),  # row-major, 16 x k
        "explained_variance": model.explained_variance.tolist(),
    })


def read_pca_json(path) -> PcaModel:
    d = read_json(path)
    return PcaModel(mean=np.asarray(d["mean"], dtype=np.float64),
                    scale=np.asarray(d["scale"], dtype=np.float64),
                    loadings=np.asarray(d["loadings"], dtype=np.float64),
                    explained_variance=np.asarray(d["explained_variance"],
                                                  dtype=np.float64))


def write_history_csv(path, history) -> None:
    write_csv(path, HISTORY_HEADER,
               ([h.epoch, h.train_loss, h.train_acc, h.val_loss, h.val_acc]
                for h in history))


def write_grid_log_csv(path, entries) -> None:
    write_csv(path, GRID_LOG_HEADER,
               ([e.index, e.gru_units, e.dropout_rate, e.learning_rate,
                 e.batch_size, e.val_acc, e.val_loss, e.best_epoch,
                 e.epochs_run, e.bn_fallback] for e in entries))


def write_predictions_csv(path, rows) -> None:
    """rows: (participant_id, question_id, session, segment, split, label,
    pred_label, p0, p1)."""
    write_csv(path, PREDICTIONS_HEADER, rows)


def read_predictions_csv(path) -> list[dict]:
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != PREDICTIONS_HEADER:
            raise DataError(f"{path.name}: unexpected header")
        for row in reader:
            out.append({"participant_id": row["participant_id"],
                        "question_id": int(row["question_id"]),
                        "session": int(row["session"]),
                        "segment": int(row["segment"]),
                        "split": row["split"],
                        "label": int(row["label"]),
                        "pred_label": int(row["pred_label"]),
                        "p0": float(row["p0"]), "p1": float(row["p1"])})
    return out


def write_effort_csv(path, records) -> None:
    write_csv(path, EFFORT_HEADER,
               ([r.participant_id, r.session, r.segment, r.source, r.mean_hbo,
                 r.mean_score, r.p_z, r.ce_z, r.rne, r.rni] for r in records))


def write_scatter_csv(path, scatter) -> None:
    write_csv(path, SCATTER_HEADER, scatter)


def sha256_path(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def spec_from_dict(d: dict) -> CohortSpec:
    return CohortSpec(**d)


@dataclass
class Manifest:
    """Per-stage ledger of consumed/produced artifacts and their digests."""

    path: Path
    version: str
    seed: int
    config: dict | None = None
    stages: list[dict] = field(default_factory=list)

    @classmethod
    def load_or_create(cls, out_dir, version: str, seed: int) -> "Manifest":
        path = Path(out_dir) / "run_manifest.json"
        if path.exists():
            d = read_json(path)
            return cls(path=path, version=d["version"], seed=d["seed"],
                       config=d.get("config"), stages=d["stages"])
        return cls(path=path, version=version, seed=seed)

    def record(self, stage: str, artifacts: dict[str, str], *,
               inputs: dict[str, str], elapsed_s: float,
               config: dict | None = None) -> None:
        self.stages = [s for s in self.stages if s["stage"] != stage]
        self.stages.append({"stage": stage, "artifacts": artifacts,
                            "inputs": inputs, "elapsed_s": elapsed_s})
        if config is not None:
            self.config = config
        write_json(self.path, {"version": self.version, "seed": self.seed,
                               "config": self.config, "stages": self.stages})

    def digest_of(self, name: str) -> str | None:
        for stage in self.stages:
            if name in stage["artifacts"]:
                return stage["artifacts"][name]
        return None

    def verify(self, path) -> None:
        """Check a to-be-read artifact against its recorded digest."""
        path = Path(path)
        recorded = self.digest_of(path.name)
        if recorded is not None and sha256_path(path) != recorded:
            raise ConfigError(
                f"artifact {path.name} does not match its manifest digest "
                "(stale or tampered; re-run the producing stage)")


def require_artifact(out_dir, name: str, producer: str) -> Path:
    path = Path(out_dir) / name
    if not path.exists():
        raise ConfigError(f"missing required artifact {name!r}; "
                          f"run the {producer!r} stage first")
    return path
