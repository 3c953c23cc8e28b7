"""Three-stage interpretability analysis: principal-component loadings
aggregated by anatomical region, latent-feature/PC correlations, and exact
Shapley attribution of latent features.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError
from .optodes import LPFC_OPTODES, N_OPTODES, VMPFC_OPTODES
from .prep import PcaModel
from .util import pearson


@dataclass(frozen=True)
class RegionMap:
    """1-based optode sets per anatomical region (disjoint, covering all 16)."""

    lpfc: frozenset[int] = LPFC_OPTODES
    vmpfc: frozenset[int] = VMPFC_OPTODES

    def validate(self, n_optodes: int = N_OPTODES) -> None:
        if self.lpfc & self.vmpfc:
            raise ConfigError("region optode sets must be disjoint")
        if self.lpfc | self.vmpfc != set(range(1, n_optodes + 1)):
            raise ConfigError(f"regions must cover optodes 1..{n_optodes} exactly")

    def items(self):
        return (("LPFC", self.lpfc), ("VMPFC", self.vmpfc))


def region_contribution(pca: PcaModel, regions: RegionMap | None = None) -> dict[str, np.ndarray]:
    """Per-region, per-component sums of absolute loadings."""
    regions = regions or RegionMap()
    regions.validate(pca.loadings.shape[0])
    out = {}
    for name, optodes in regions.items():
        rows = np.array(sorted(o - 1 for o in optodes))
        out[name] = np.abs(pca.loadings[rows, :]).sum(axis=0)
    return out


@dataclass
class CorrelationResult:
    matrix: np.ndarray  # (latent features, components)
    constant_latents: list[int]
    constant_components: list[int]


def latent_pca_correlation(latents, pc_scores) -> CorrelationResult:
    """Pearson r between every latent feature and every PC score column.

    Constant columns get r = 0 and are flagged rather than erroring.
    """
    L = np.asarray(latents, dtype=np.float64)
    S = np.asarray(pc_scores, dtype=np.float64)
    if L.ndim != 2 or S.ndim != 2 or L.shape[0] != S.shape[0]:
        raise DataError("latents and pc_scores must be 2-D with matching rows")
    if L.shape[0] < 3:
        raise DataError("correlation needs at least 3 rows")
    matrix = np.zeros((L.shape[1], S.shape[1]))
    const_l, const_s = set(), set()
    for i in range(L.shape[1]):
        for j in range(S.shape[1]):
            r, ok = pearson(L[:, i], S[:, j])
            matrix[i, j] = r
            if not ok:
                if np.ptp(L[:, i]) == 0.0:
                    const_l.add(i)
                if np.ptp(S[:, j]) == 0.0:
                    const_s.add(j)
    return CorrelationResult(matrix=matrix, constant_latents=sorted(const_l),
                             constant_components=sorted(const_s))


MAX_EXACT_FEATURES = 16


@dataclass
class ShapleyResult:
    values: np.ndarray  # one attribution per feature
    base_value: float  # expected output over the background


def shapley_exact(predict_fn, x, background, *,
                  max_features: int = MAX_EXACT_FEATURES) -> ShapleyResult:
    """Exact Shapley attributions by full coalition enumeration.

    The value of a coalition S is the background-marginalized expectation:
    features in S take x's values, the rest keep each background row's values,
    and v(S) is the mean of ``predict_fn`` over those rows. phi_i sums the
    weighted marginal contributions of feature i over all 2^(U-1) coalitions
    not containing it. Enumeration is feasible only up to ``max_features``.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DataError("shapley_exact explains a single feature vector")
    u = x.shape[0]
    if u > max_features:
        raise ConfigError(
            f"{u} features exceed the exact-enumeration limit of {max_features}; "
            "sampling approximations are out of scope")
    bg = np.asarray(background, dtype=np.float64)
    if bg.ndim != 2 or bg.shape[0] == 0 or bg.shape[1] != u:
        raise DataError("background must be a non-empty (M, U) matrix")

    values = np.empty(1 << u)
    for mask in range(1 << u):
        mixed = bg.copy()
        for i in range(u):
            if mask >> i & 1:
                mixed[:, i] = x[i]
        values[mask] = float(np.mean(predict_fn(mixed)))

    fact = [math.factorial(k) for k in range(u + 1)]
    weights = [fact[s] * fact[u - s - 1] / fact[u] for s in range(u)]
    phi = np.zeros(u)
    for mask in range(1 << u):
        size = bin(mask).count("1")
        for i in range(u):
            if not mask >> i & 1:
                phi[i] += weights[size] * (values[mask | (1 << i)] - values[mask])
    return ShapleyResult(values=phi, base_value=float(values[0]))


@dataclass
class AttributionReport:
    """Bundle of the three interpretability stages for one trained model."""

    region_contributions: dict[str, np.ndarray]
    latent_pc_correlations: CorrelationResult
    shapley_values: np.ndarray  # (samples, latent features)
    base_value: float
    architecture: str = ""
    sample_keys: list = field(default_factory=list)

    def mean_abs_shapley(self) -> np.ndarray:
        return np.abs(self.shapley_values).mean(axis=0)

    def to_json_dict(self) -> dict:
        corr = self.latent_pc_correlations
        return {
            "architecture": self.architecture,
            "region_contributions": {k: v.tolist()
                                     for k, v in self.region_contributions.items()},
            "latent_pc_correlations": corr.matrix.tolist(),
            "constant_latents": corr.constant_latents,
            "constant_components": corr.constant_components,
            "shapley_values": self.shapley_values.tolist(),
            "base_value": self.base_value,
            "sample_keys": self.sample_keys,
        }
