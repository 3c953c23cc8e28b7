"""Segment-level effort metrics from performance scores and hemodynamic means.

Per participant and session, segment mean scores are z-scored (epsilon-guarded
denominator) and segment mean signal levels converted to an inverse-effort
z-score. The efficiency/involvement pair is the +/-45-degree rotation of the
two axes:

    efficiency  = (p_z - ce_z) / sqrt(2)
    involvement = (p_z + ce_z) / sqrt(2)

``ce_z`` ships in two modes. The default "literal" form divides the reciprocal
differences by the reciprocal of the session SD (equivalently multiplies by
the SD), which is dimensionally unusual but kept as primary; "conventional"
z-scores the reciprocals with the same epsilon guard as the performance score.
"""

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .prep import impute_missing
from .synth import Trial
from .util import participant_sort_key, pearson, population_sd

EPSILON = 1e-3  # z-score denominator guard
RECIPROCAL_CLAMP = 1e-6  # |mean signal| floor before taking reciprocals
SQRT2 = math.sqrt(2.0)

EFFORT_MODES = ("literal", "conventional")


@dataclass(frozen=True)
class SegmentAggregate:
    """One segment's grand-mean signal and fraction of correct answers."""

    participant_id: str
    session: int
    segment: int
    mean_hbo: float
    mean_score: float


@dataclass(frozen=True)
class EffortRecord:
    participant_id: str
    session: int
    segment: int
    mean_hbo: float
    mean_score: float
    p_z: float
    ce_z: float
    rne: float
    rni: float
    source: str  # "actual" or "predicted"

    def key(self):
        return (self.participant_id, self.session, self.segment)


def segment_aggregates(trials: list[Trial],
                       score_override: dict | None = None) -> list[SegmentAggregate]:
    """Collapse trials to per-(participant, session, segment) aggregates.

    ``score_override`` maps (participant_id, question_id) to a replacement
    score (predicted labels); actual trial scores are used otherwise. Trials
    with missing cells are imputed before averaging.
    """
    groups: dict[tuple, list[Trial]] = defaultdict(list)
    for t in trials:
        groups[(t.participant_id, t.session, t.segment)].append(t)
    out = []
    ordered = sorted(groups.items(),
                     key=lambda kv: (participant_sort_key(kv[0][0]), kv[0][1], kv[0][2]))
    for (pid, session, segment), members in ordered:
        hbo_mean = float(np.mean([impute_missing(t).hbo.mean() for t in members]))
        scores = []
        for t in members:
            if score_override is not None and (pid, t.question_id) in score_override:
                scores.append(float(score_override[(pid, t.question_id)]))
            else:
                scores.append(float(t.score))
        out.append(SegmentAggregate(participant_id=pid, session=session,
                                    segment=segment, mean_hbo=hbo_mean,
                                    mean_score=float(np.mean(scores))))
    return out


def zscore_performance(scores) -> np.ndarray:
    """Per-session z-score of segment mean scores, (s - GM)/(SD + eps)."""
    arr = np.asarray(scores, dtype=np.float64)
    if arr.size < 2:
        raise DataError("performance z-scores need at least 2 segments per session")
    gm = arr.mean()
    sd = population_sd(arr)
    return (arr - gm) / (sd + EPSILON)


def _clamped_reciprocal(values: np.ndarray) -> np.ndarray:
    clamped = np.where(np.abs(values) < RECIPROCAL_CLAMP,
                       np.where(values < 0, -RECIPROCAL_CLAMP, RECIPROCAL_CLAMP),
                       values)
    return 1.0 / clamped


def zscore_effort(mean_hbos, mode: str = "literal"):
    """Inverse-effort z-scores of segment mean signal levels.

    Returns (values, degenerate) where ``degenerate`` marks the literal-mode
    zero-SD guard (reciprocal of zero SD undefined; values forced to 0).
    """
    if mode not in EFFORT_MODES:
        raise DataError(f"mode must be one of {EFFORT_MODES}, got {mode!r}")
    arr = np.asarray(mean_hbos, dtype=np.float64)
    if arr.size < 2:
        raise DataError("effort z-scores need at least 2 segments per session")
    recip = _clamped_reciprocal(arr)
    if mode == "conventional":
        gm_r = recip.mean()
        sd_r = population_sd(recip)
        return (recip - gm_r) / (sd_r + EPSILON), False
    gm = arr.mean()
    sd = population_sd(arr)
    if sd == 0.0:
        return np.zeros_like(arr), True
    gm_recip = _clamped_reciprocal(np.array([gm]))[0]
    return (recip - gm_recip) / (1.0 / sd), False


def rne_rni(p_z: float, ce_z: float) -> tuple[float, float]:
    """Efficiency/involvement pair from the two z-scores."""
    return (p_z - ce_z) / SQRT2, (p_z + ce_z) / SQRT2


def effort_records(segments: list[SegmentAggregate], source: str,
                   mode: str = "literal") -> list[EffortRecord]:
    """Z-score within each (participant, session) group and rotate to
    efficiency/involvement; output sorted by (participant, session, segment)."""
    groups: dict[tuple, list[SegmentAggregate]] = defaultdict(list)
    for seg in segments:
        groups[(seg.participant_id, seg.session)].append(seg)
    records = []
    ordered = sorted(groups.items(),
                     key=lambda kv: (participant_sort_key(kv[0][0]), kv[0][1]))
    for (pid, session), members in ordered:
        members = sorted(members, key=lambda s: s.segment)
        p_z = zscore_performance([m.mean_score for m in members])
        ce_z, _ = zscore_effort([m.mean_hbo for m in members], mode=mode)
        for seg, pz, cz in zip(members, p_z, ce_z):
            rne, rni = rne_rni(float(pz), float(cz))
            records.append(EffortRecord(
                participant_id=pid, session=session, segment=seg.segment,
                mean_hbo=seg.mean_hbo, mean_score=seg.mean_score,
                p_z=float(pz), ce_z=float(cz), rne=rne, rni=rni, source=source))
    return records


@dataclass(frozen=True)
class EffortStats:
    """MAE and Pearson r of predicted vs actual, for one participant or pooled."""

    participant_id: str
    rne_mae: float
    rni_mae: float
    rne_r: float
    rni_r: float
    n_segments: int
    degenerate_r: bool = False  # r undefined (zero variance) and reported as 0

    def to_dict(self) -> dict:
        return {"participant_id": self.participant_id, "rne_mae": self.rne_mae,
                "rni_mae": self.rni_mae, "rne_r": self.rne_r, "rni_r": self.rni_r,
                "n_segments": self.n_segments, "degenerate_r": self.degenerate_r}


@dataclass
class EffortComparison:
    per_participant: list[EffortStats]
    pooled: EffortStats
    scatter: list[tuple[str, float, float]] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {"per_participant": [s.to_dict() for s in self.per_participant],
                "pooled": self.pooled.to_dict()}


def _stats_for(pid, pairs_rne, pairs_rni) -> EffortStats:
    a_rne, p_rne = (np.array(v) for v in zip(*pairs_rne))
    a_rni, p_rni = (np.array(v) for v in zip(*pairs_rni))
    rne_r, ok1 = pearson(a_rne, p_rne)
    rni_r, ok2 = pearson(a_rni, p_rni)
    return EffortStats(participant_id=pid,
                       rne_mae=float(np.abs(a_rne - p_rne).mean()),
                       rni_mae=float(np.abs(a_rni - p_rni).mean()),
                       rne_r=rne_r, rni_r=rni_r, n_segments=len(pairs_rne),
                       degenerate_r=not (ok1 and ok2))


def compare_effort(actual: list[EffortRecord],
                   predicted: list[EffortRecord]) -> EffortComparison:
    """Participant-wise and pooled MAE / Pearson r between the two sources.

    Records must align exactly on (participant, session, segment); mismatches
    raise, naming the offending keys. Also emits (metric, actual, predicted)
    scatter rows in canonical order.
    """
    a_by_key = {r.key(): r for r in actual}
    p_by_key = {r.key(): r for r in predicted}
    if a_by_key.keys() != p_by_key.keys():
        missing = sorted(a_by_key.keys() ^ p_by_key.keys())
        raise DataError(f"actual/predicted records misaligned on segments: {missing}")
    if len(a_by_key) < 3:
        raise DataError("pooled correlation needs at least 3 aligned segments")

    by_pid: dict[str, list] = defaultdict(list)
    for key in sorted(a_by_key,
                      key=lambda k: (participant_sort_key(k[0]), k[1], k[2])):
        by_pid[key[0]].append((a_by_key[key], p_by_key[key]))

    per_participant = []
    pooled_rne, pooled_rni, scatter = [], [], []
    for pid in sorted(by_pid, key=participant_sort_key):
        pairs_rne = [(a.rne, p.rne) for a, p in by_pid[pid]]
        pairs_rni = [(a.rni, p.rni) for a, p in by_pid[pid]]
        per_participant.append(_stats_for(pid, pairs_rne, pairs_rni))
        pooled_rne.extend(pairs_rne)
        pooled_rni.extend(pairs_rni)
        scatter.extend(("rne", a, p) for a, p in pairs_rne)
        scatter.extend(("rni", a, p) for a, p in pairs_rni)
    pooled = _stats_for("pooled", pooled_rne, pooled_rni)
    return EffortComparison(per_participant=per_participant, pooled=pooled,
                            scatter=scatter)
