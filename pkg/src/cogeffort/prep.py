"""Trial-to-feature pipeline: imputation, cleaning, aggregation, scaling,
PCA, participant-wise splitting, minority oversampling, tensor reshaping.

Order used by the batch pipeline: impute -> (optional detrend/smooth) ->
per-optode time mean -> split by participant -> standardize (statistics from
the training rows only) -> PCA 16->12 (fitted on training rows only) ->
oversample the training partition -> reshape to (n, 1, 12).
"""

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import AllMissingColumn, ConfigError, DataError, ShapeError
from .synth import Trial
from .util import DOMAIN_SMOTE, substream

SCALE_FLOOR = 1e-8  # below this a feature column is treated as constant


@dataclass
class FeatureRow:
    """One trial reduced to a feature vector (16 means, later 12 PC scores)."""

    participant_id: str
    question_id: int
    session: int
    segment: int
    features: np.ndarray
    label: int


@dataclass
class PcaModel:
    """Standardization statistics plus principal-component loadings."""

    mean: np.ndarray  # (16,)
    scale: np.ndarray  # (16,)
    loadings: np.ndarray  # (16, k), orthonormal columns
    explained_variance: np.ndarray  # (k,), non-increasing


@dataclass(frozen=True)
class SplitSpec:
    """Participant-wise partition of the cohort."""

    test_participants: frozenset[str] = frozenset({"P8", "P11", "P16"})
    validation_participants: frozenset[str] = frozenset({"P14", "P15"})

    def validate(self) -> None:
        overlap = self.test_participants & self.validation_participants
        if overlap:
            raise ConfigError(f"participants in both test and validation sets: {sorted(overlap)}")


def impute_missing(trial: Trial) -> Trial:
    """Replace missing cells with the finite mean of their optode column.

    The mean is taken within the trial (one question), leaving finite cells
    untouched. Raises AllMissingColumn when a column has no finite value.
    """
    hbo = np.asarray(trial.hbo, dtype=np.float64)
    finite = np.isfinite(hbo)
    if finite.all():
        return trial
    counts = finite.sum(axis=0)
    dead = np.flatnonzero(counts == 0)
    if dead.size:
        raise AllMissingColumn(
            f"optode column(s) {[int(d) + 1 for d in dead]} have no finite values "
            f"in trial ({trial.participant_id}, Q{trial.question_id})")
    col_means = np.where(finite, hbo, 0.0).sum(axis=0) / counts
    filled = np.where(finite, hbo, col_means[None, :])
    return replace(trial, hbo=filled)


def clean_series(series, ma_window: int) -> np.ndarray:
    """Remove the least-squares line (keeping the mean) and smooth.

    The fitted line is subtracted and the original mean added back, then a
    centered moving average of odd width ``ma_window`` is applied with edge
    truncation (the window shrinks near the boundaries).
    """
    s = np.asarray(series, dtype=np.float64)
    if s.ndim != 1:
        raise ShapeError(f"clean_series expects a 1-D series, got shape {s.shape}")
    n = s.size
    if ma_window < 1 or ma_window % 2 == 0 or ma_window > n:
        raise ConfigError(f"ma_window must be odd, >= 1 and <= {n}, got {ma_window}")
    if not np.isfinite(s).all():
        raise DataError("clean_series requires finite input (impute first)")

    t = np.arange(n, dtype=np.float64)
    t_c = t - t.mean()
    denom = float(np.dot(t_c, t_c))
    slope = float(np.dot(t_c, s)) / denom if denom > 0 else 0.0
    mean = s.mean()
    detrended = s - slope * t_c  # == s - (a + b t) + mean(s)

    if ma_window == 1:
        return detrended
    ones = np.ones(ma_window)
    counts = np.convolve(np.ones(n), ones, mode="same")
    return np.convolve(detrended, ones, mode="same") / counts


def clean_trial(trial: Trial, ma_window: int) -> Trial:
    """Apply clean_series to every optode column of a trial."""
    hbo = np.asarray(trial.hbo, dtype=np.float64)
    cleaned = np.column_stack([clean_series(hbo[:, o], ma_window) for o in range(hbo.shape[1])])
    return replace(trial, hbo=cleaned)


def aggregate_trial(trial: Trial) -> np.ndarray:
    """Per-optode time mean over the trial window (the 16-feature reduction)."""
    hbo = np.asarray(trial.hbo, dtype=np.float64)
    if not np.isfinite(hbo).all():
        raise DataError(
            f"trial ({trial.participant_id}, Q{trial.question_id}) has non-finite values; "
            "impute before aggregating")
    return hbo.mean(axis=0)


def standardize(train, others=()):
    """Z-score with statistics fitted on the training rows only.

    Uses the population standard deviation. Columns whose training scale is
    below SCALE_FLOOR are mapped to zero everywhere (constant-column guard).
    Returns (train', [others'...], mean, scale).
    """
    train = np.asarray(train, dtype=np.float64)
    if train.ndim != 2 or train.shape[0] == 0:
        raise DataError("standardize needs a non-empty 2-D training matrix")
    mean = train.mean(axis=0)
    scale = train.std(axis=0)
    live = scale >= SCALE_FLOOR

    def transform(a):
        a = np.asarray(a, dtype=np.float64)
        out = (a - mean) / np.where(live, scale, 1.0)
        out[:, ~live] = 0.0
        return out

    return transform(train), [transform(o) for o in others], mean, scale


def pca_fit(rows, k: int = 12, mean=None, scale=None) -> PcaModel:
    """Top-k eigendecomposition of the sample covariance of ``rows``.

    ``rows`` are usually already standardized; pass the standardization
    ``mean``/``scale`` so the returned model maps raw feature vectors directly
    (the internal column centering is folded into the stored mean). Sign
    convention: in each loading column the entry of largest magnitude is
    non-negative. Rank-deficient input yields trailing zero variances.
    """
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise ShapeError("pca_fit expects a 2-D matrix")
    n, d = rows.shape
    if not 1 <= k <= d:
        raise ConfigError(f"k must lie in 1..{d}, got {k}")
    if n < max(k, 2):
        raise DataError(f"pca_fit needs at least {max(k, 2)} rows, got {n}")

    center = rows.mean(axis=0)
    centered = rows - center
    cov = centered.T @ centered / (n - 1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1][:k]
    loadings = eigvecs[:, order].copy()
    explained = np.clip(eigvals[order], 0.0, None)
    for j in range(loadings.shape[1]):
        col = loadings[:, j]
        if col[np.argmax(np.abs(col))] < 0:
            loadings[:, j] = -col

    if mean is None:
        model_mean, model_scale = center, np.ones(d)
    else:
        mean = np.asarray(mean, dtype=np.float64)
        scale = np.asarray(scale, dtype=np.float64)
        model_mean, model_scale = mean + center * scale, scale
    return PcaModel(mean=model_mean, scale=model_scale, loadings=loadings,
                    explained_variance=explained)


def pca_project(model: PcaModel, rows) -> np.ndarray:
    """PC scores: loadings' @ ((x - mean) / scale), constant columns -> 0."""
    rows = np.asarray(rows, dtype=np.float64)
    single = rows.ndim == 1
    mat = rows[None, :] if single else rows
    if mat.shape[1] != model.mean.shape[0]:
        raise ShapeError(
            f"expected {model.mean.shape[0]} features, got {mat.shape[1]}")
    live = model.scale >= SCALE_FLOOR
    z = (mat - model.mean) / np.where(live, model.scale, 1.0)
    z[:, ~live] = 0.0
    scores = z @ model.loadings
    return scores[0] if single else scores


def pca_reconstruct(model: PcaModel, scores) -> np.ndarray:
    """Back-projection to the raw feature space (exact when k is full rank)."""
    scores = np.asarray(scores, dtype=np.float64)
    single = scores.ndim == 1
    mat = scores[None, :] if single else scores
    if mat.shape[1] != model.loadings.shape[1]:
        raise ShapeError(
            f"expected {model.loadings.shape[1]} components, got {mat.shape[1]}")
    live = model.scale >= SCALE_FLOOR
    z = mat @ model.loadings.T
    rows = np.where(live, z * model.scale, 0.0) + model.mean
    return rows[0] if single else rows


def split_by_participant(rows: list[FeatureRow], spec: SplitSpec):
    """Partition rows into (train, validation, test) by participant id."""
    spec.validate()
    present = {r.participant_id for r in rows}
    unknown = (spec.test_participants | spec.validation_participants) - present
    if unknown:
        raise ConfigError(f"split names unknown participant(s): {sorted(unknown)}")
    train, validation, test = [], [], []
    for row in rows:
        if row.participant_id in spec.test_participants:
            test.append(row)
        elif row.participant_id in spec.validation_participants:
            validation.append(row)
        else:
            train.append(row)
    return train, validation, test


def smote(features, labels, k_neighbors: int = 5, seed: int = 0,
          return_provenance: bool = False):
    """Oversample the minority class to the majority count.

    Each synthetic sample is x_i + u * (x_nn - x_i) with u ~ U[0, 1] and x_nn
    one of the k nearest same-class neighbors of a randomly chosen minority
    row x_i (Euclidean metric, self excluded, stable index tie-break).
    Original rows are preserved in order; synthetics are appended.
    """
    X = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError("smote expects features (N, D) and labels (N,)")
    if k_neighbors < 1:
        raise ConfigError("k_neighbors must be >= 1")

    counts = {int(c): int((y == c).sum()) for c in np.unique(y)}
    if set(counts) - {0, 1}:
        raise DataError(f"labels must be binary 0/1, got {sorted(counts)}")
    n0, n1 = counts.get(0, 0), counts.get(1, 0)
    if n0 == n1:
        out = (X.copy(), y.copy())
        return (*out, []) if return_provenance else out
    minority = 0 if n0 < n1 else 1
    need = abs(n1 - n0)
    min_idx = np.flatnonzero(y == minority)
    if min_idx.size < 2:
        raise DataError("minority class needs at least 2 rows for oversampling")

    k_eff = k_neighbors
    if k_eff > min_idx.size - 1:
        k_eff = min_idx.size - 1
        warnings.warn(
            f"k_neighbors clamped to minority size - 1 = {k_eff}", stacklevel=2)

    Xm = X[min_idx]
    d2 = ((Xm[:, None, :] - Xm[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d2, np.inf)
    nn = np.argsort(d2, axis=1, kind="stable")[:, :k_eff]

    rng = substream(seed, DOMAIN_SMOTE)
    synth = np.empty((need, X.shape[1]))
    provenance = []
    for s in range(need):
        i = int(rng.integers(min_idx.size))
        j = int(nn[i, int(rng.integers(k_eff))])
        u = float(rng.random())
        synth[s] = Xm[i] + u * (Xm[j] - Xm[i])
        provenance.append((int(min_idx[i]), int(min_idx[j]), u))

    out_X = np.vstack([X, synth])
    out_y = np.concatenate([y, np.full(need, minority, dtype=y.dtype)])
    if return_provenance:
        return out_X, out_y, provenance
    return out_X, out_y


def smote_rows(rows: list[FeatureRow], k_neighbors: int = 5, seed: int = 0) -> list[FeatureRow]:
    """SMOTE over FeatureRow lists; synthetic rows copy their seed row's ids."""
    X = np.stack([r.features for r in rows])
    y = np.array([r.label for r in rows])
    _, _, provenance = smote(X, y, k_neighbors=k_neighbors, seed=seed,
                             return_provenance=True)
    out = list(rows)
    for i, j, u in provenance:
        base = rows[i]
        feats = base.features + u * (rows[j].features - base.features)
        out.append(replace(base, features=feats))
    return out


def reshape_for_model(rows, expected_features: int = 12) -> np.ndarray:
    """Stack feature rows into the (n, 1, features) tensor the networks eat."""
    X = np.asarray(rows, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != expected_features:
        raise ShapeError(
            f"expected (n, {expected_features}) feature rows, got {X.shape}")
    return X[:, None, :].copy()
