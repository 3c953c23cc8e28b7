"""Synthetic cohort generator for fNIRS-style quiz trials.

The real recordings behind this pipeline are private, so experiments run on a
generated stand-in with a documented ground truth: incorrect answers cost more
effort, which raises the oxygenated-hemoglobin response by a configurable
margin. That known coupling is what the learnability and effort-trend checks
lean on.

Signal model per trial (200 samples x 16 optodes, 10 Hz):

    hbo[t, o] = baseline[o]
              + amplitude * gain[o] * (boxcar convolved with HRF)[t]
              + slope[o] * (t - center)          # zero-mean linear drift
              + noise[t, o]                      # iid Gaussian

with ``amplitude = participant_effort`` for correct answers and
``participant_effort + effect_size`` for incorrect ones.

Values are on a nominal micromole-per-liter scale; magnitudes are documented
defaults chosen for verifiability, not claimed physiologically faithful.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .optodes import LPFC_OPTODES, N_OPTODES
from .util import DOMAIN_PARTICIPANT, DOMAIN_TRIAL, substream

# Cohort-level constants (documented choices, not fitted to any dataset):
# participant effort spread is small against the wrong-answer effect so the
# label stays recoverable across held-out participants.
EFFORT_MEAN = 1.0
EFFORT_SD = 0.12
BASELINE_SD = 0.1
GAIN_LATERAL = 1.15
GAIN_VENTROMEDIAL = 0.85
GAIN_RAMP = 0.02


@dataclass(frozen=True)
class HrfParams:
    """Double-gamma hemodynamic response parameters (seconds / unitless)."""

    peak_delay: float = 6.0
    undershoot_delay: float = 16.0
    peak_dispersion: float = 1.0
    undershoot_dispersion: float = 1.0
    undershoot_ratio: float = 1.0 / 6.0

    def validate(self) -> None:
        if not (self.peak_delay > 0 and self.undershoot_delay > 0):
            raise ConfigError("HRF delays must be positive")
        if not (self.peak_dispersion > 0 and self.undershoot_dispersion > 0):
            raise ConfigError("HRF dispersions must be positive")
        if not 0.0 <= self.undershoot_ratio < 1.0:
            raise ConfigError("undershoot_ratio must lie in [0, 1)")


@dataclass(frozen=True)
class CohortSpec:
    """Size, timing, and noise parameters of a generated cohort."""

    n_participants: int = 16
    n_questions: int = 16
    sessions: int = 2
    segments_per_session: int = 2
    questions_per_segment: int = 4
    sample_rate: float = 10.0
    samples_per_trial: int = 200
    n_optodes: int = N_OPTODES
    effect_size: float = 0.6
    noise_sd: float = 0.4
    drift_slope_sd: float = 0.002
    target_correct_rate: float = 168.0 / 256.0
    missing_rate: float = 0.0
    seed: int = 0
    hrf: HrfParams = field(default_factory=HrfParams)

    def validate(self) -> None:
        if self.n_participants < 1:
            raise ConfigError("n_participants must be >= 1")
        expected = self.sessions * self.segments_per_session * self.questions_per_segment
        if self.n_questions != expected:
            raise ConfigError(
                f"n_questions={self.n_questions} must equal sessions*segments_per_session*"
                f"questions_per_segment={expected}")
        if not 0 < self.samples_per_trial <= 300:
            raise ConfigError("samples_per_trial must lie in 1..300")
        if self.n_optodes != N_OPTODES:
            raise ConfigError(f"n_optodes is fixed at {N_OPTODES}")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if not 0.0 < self.target_correct_rate < 1.0:
            raise ConfigError("target_correct_rate must lie in (0, 1)")
        if self.noise_sd < 0 or self.drift_slope_sd < 0:
            raise ConfigError("noise_sd and drift_slope_sd must be non-negative")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ConfigError("missing_rate must lie in [0, 1)")
        self.hrf.validate()


@dataclass
class Trial:
    """One participant-question recording."""

    participant_id: str
    question_id: int
    session: int
    segment: int
    hbo: np.ndarray  # (samples_per_trial, n_optodes), may contain NaN
    label: int  # 0 wrong, 1 correct
    score: float  # 0.0 or 1.0


def canonical_hrf(t, params: HrfParams | None = None):
    """Double-gamma impulse response, zero for t <= 0, unit peak response.

    Each lobe is a gamma-shaped bump (t/delay)^(delay/dispersion) *
    exp(-(t-delay)/dispersion) whose maximum sits exactly at its delay; the
    undershoot lobe is subtracted with the configured ratio.
    """
    params = params or HrfParams()
    params.validate()
    t_arr = np.atleast_1d(np.asarray(t, dtype=np.float64))
    out = _gamma_bump(t_arr, params.peak_delay, params.peak_dispersion)
    out -= params.undershoot_ratio * _gamma_bump(
        t_arr, params.undershoot_delay, params.undershoot_dispersion)
    if np.ndim(t) == 0:
        return float(out[0])
    return out


def _gamma_bump(t: np.ndarray, delay: float, dispersion: float) -> np.ndarray:
    shape = delay / dispersion
    out = np.zeros_like(t, dtype=np.float64)
    pos = t > 0
    tp = t[pos]
    out[pos] = (tp / delay) ** shape * np.exp(-(tp - delay) / dispersion)
    return out


def optode_gains(n_optodes: int = N_OPTODES) -> np.ndarray:
    """Per-optode response gains: lateral channels respond more strongly.

    A small within-region ramp keeps the gains distinct so principal
    directions are unambiguous.
    """
    gains = np.empty(n_optodes, dtype=np.float64)
    for o in range(1, n_optodes + 1):
        base = GAIN_LATERAL if o in LPFC_OPTODES else GAIN_VENTROMEDIAL
        gains[o - 1] = base + GAIN_RAMP * ((o - 1) % 4)
    return gains


def task_response(spec: CohortSpec) -> np.ndarray:
    """Boxcar (task on for the whole window) convolved with the canonical HRF.

    Discrete convolution at the recording rate, scaled by the sample interval
    so values approximate the continuous-time integral.
    """
    dt = 1.0 / spec.sample_rate
    n = spec.samples_per_trial
    kernel = canonical_hrf(np.arange(n) * dt, spec.hrf)
    box = np.ones(n)
    return dt * np.convolve(box, kernel)[:n]


def session_and_segment(spec: CohortSpec, question_id: int) -> tuple[int, int]:
    """Map a 1-based question id to its (session, global segment) pair."""
    if not 1 <= question_id <= spec.n_questions:
        raise ConfigError(f"question_id {question_id} outside 1..{spec.n_questions}")
    per_session = spec.segments_per_session * spec.questions_per_segment
    session = 1 + (question_id - 1) // per_session
    segment = 1 + (question_id - 1) // spec.questions_per_segment
    return session, segment


def generate_trial(spec: CohortSpec, participant_effort: float, correct: bool,
                   rng: np.random.Generator, *, participant_id: str = "P1",
                   question_id: int = 1, baseline: np.ndarray | None = None) -> Trial:
    """One trial from the documented signal model.

    Draws from ``rng`` in a fixed order (drift slopes, noise, missing mask) so
    a given stream always produces the same trial. ``baseline`` defaults to
    zeros; cohorts pass per-participant baselines in.
    """
    spec.validate()
    n, m = spec.samples_per_trial, spec.n_optodes
    if baseline is None:
        baseline = np.zeros(m)
    baseline = np.asarray(baseline, dtype=np.float64)
    if baseline.shape != (m,):
        raise ConfigError(f"baseline must have shape ({m},)")

    amplitude = participant_effort + (0.0 if correct else spec.effect_size)
    response = amplitude * task_response(spec)
    slopes = rng.normal(0.0, spec.drift_slope_sd, m)
    centered_t = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
    noise = rng.normal(0.0, spec.noise_sd, (n, m))

    hbo = (baseline[None, :]
           + response[:, None] * optode_gains(m)[None, :]
           + centered_t[:, None] * slopes[None, :]
           + noise)
    if spec.missing_rate > 0.0:
        hbo[rng.random((n, m)) < spec.missing_rate] = np.nan

    session, segment = session_and_segment(spec, question_id)
    return Trial(participant_id=participant_id, question_id=question_id,
                 session=session, segment=segment, hbo=hbo,
                 label=int(correct), score=float(int(correct)))


def generate_cohort(spec: CohortSpec) -> list[Trial]:
    """Full cohort, participant-major / question-minor, deterministic in seed.

    Each (participant, question) pair draws from its own substream, so the
    output is identical whether trials are generated serially or in parallel.
    Correctness is Bernoulli(target_correct_rate) per trial, which hits the
    configured rate in expectation.
    """
    spec.validate()
    trials: list[Trial] = []
    for p_idx in range(spec.n_participants):
        pid = f"P{p_idx + 1}"
        prng = substream(spec.seed, DOMAIN_PARTICIPANT, p_idx)
        effort = prng.normal(EFFORT_MEAN, EFFORT_SD)
        baseline = prng.normal(0.0, BASELINE_SD, spec.n_optodes)
        for q_idx in range(spec.n_questions):
            trng = substream(spec.seed, DOMAIN_TRIAL, p_idx, q_idx)
            correct = bool(trng.random() < spec.target_correct_rate)
            trials.append(generate_trial(
                spec, effort, correct, trng,
                participant_id=pid, question_id=q_idx + 1, baseline=baseline))
    return trials
