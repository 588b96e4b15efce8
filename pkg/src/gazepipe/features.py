"""Hand-crafted features: HEOG peak polarity/magnitude, neck-EMG short-term
RMS envelopes and their peaks, and head-yaw variation."""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dsp import Waveform
from .errors import ConfigError, DegenerateInputError, ValidationError

__all__ = [
    "EnvelopeParams",
    "FeatureVector",
    "heog_peak_features",
    "short_term_rms",
    "normalize_envelope",
    "nemg_peak_features",
    "yaw_variation",
    "PEAK_WINDOW_S",
]

PEAK_WINDOW_S = (0.0, 2.0)
YAW_PLATEAU_S = (1.5, 2.5)
YAW_BASELINE_S = (-0.5, 0.0)


@dataclass(frozen=True)
class EnvelopeParams:
    frame_s: float = 0.1
    hop_s: float = 0.05
    baseline_s: float = 0.5

    def __post_init__(self):
        if not 0 < self.hop_s <= self.frame_s:
            raise ConfigError(f"need 0 < hop_s <= frame_s, got {self.hop_s}, {self.frame_s}")
        if not self.baseline_s >= self.frame_s:
            raise ConfigError("baseline_s must be at least one frame long")


@dataclass(frozen=True)
class FeatureVector:
    """Per-segment features; a field is ``None`` when its modality is absent."""

    heog_polarity: Optional[float] = None
    heog_abs_peak: Optional[float] = None
    nemg_left_peak: Optional[float] = None
    nemg_right_peak: Optional[float] = None
    yaw_variation: Optional[float] = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None and not np.isfinite(v):
                raise ValidationError(f"feature {f.name} is not finite: {v}")

    @property
    def mask(self) -> dict:
        return {
            "HEOG": self.heog_abs_peak is not None,
            "NEMG": self.nemg_left_peak is not None,
            "IMU": self.yaw_variation is not None,
        }

    def values(self, modalities) -> np.ndarray:
        """Concatenate the features of the given modalities, in order."""
        groups = {
            "HEOG": ("heog_polarity", "heog_abs_peak"),
            "NEMG": ("nemg_left_peak", "nemg_right_peak"),
            "IMU": ("yaw_variation",),
        }
        out = []
        for m in modalities:
            for name in groups[m]:
                v = getattr(self, name)
                if v is None:
                    raise ValidationError(f"feature {name} missing for modality {m}")
                out.append(v)
        return np.array(out, dtype=np.float64)


def _window_mask(times: np.ndarray, window) -> np.ndarray:
    lo, hi = window
    return (times > lo) & (times <= hi)


def heog_peak_features(w: Waveform, window=PEAK_WINDOW_S) -> Tuple[float, float]:
    """Return ``(polarity, abs_peak)`` of the largest excursion in ``window``.

    The window is half-open on the left: ``lo < t <= hi``.
    """
    mask = _window_mask(w.times, window)
    if not np.any(mask):
        raise ValidationError(f"waveform does not cover the peak window {window}")
    seg = w.samples[mask]
    i = int(np.argmax(np.abs(seg)))
    peak = float(abs(seg[i]))
    return float(np.sign(seg[i])), peak


def short_term_rms(w: Waveform, p: EnvelopeParams = EnvelopeParams()) -> Waveform:
    """Sliding-frame RMS envelope.

    The output rate is ``1 / hop_s`` and its first sample sits at the centre
    of the first frame.
    """
    frame = int(round(p.frame_s * w.rate_hz))
    hop = int(round(p.hop_s * w.rate_hz))
    x = w.samples
    if frame < 1 or x.size < frame:
        raise DegenerateInputError(
            f"segment of {x.size} samples is shorter than one {frame}-sample frame"
        )
    frames = sliding_window_view(x, frame)[::hop]
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    return Waveform(rms, 1.0 / p.hop_s, w.t0_s + p.frame_s / 2.0)


def normalize_envelope(env: Waveform, p: EnvelopeParams = EnvelopeParams()) -> Waveform:
    """Divide an envelope by the mean of its first ``baseline_s`` seconds.

    Baseline frames are those whose centres fall before
    ``segment_start + baseline_s``, where the segment start is half a frame
    before the first centre.
    """
    start = env.t0_s - p.frame_s / 2.0
    centres = env.times
    base = env.samples[centres < start + p.baseline_s - 1e-9]
    if base.size == 0:
        raise DegenerateInputError("envelope has no frames in the baseline window")
    ref = float(np.mean(base))
    if ref <= 0.0:
        raise DegenerateInputError("envelope baseline mean is zero")
    return env.with_samples(env.samples / ref)


def nemg_peak_features(env_left: Waveform, env_right: Waveform, window=PEAK_WINDOW_S):
    if len(env_left) != len(env_right):
        raise ValidationError("left and right envelopes differ in length")
    mask = _window_mask(env_left.times, window)
    if not np.any(mask):
        raise ValidationError(f"envelopes do not cover the peak window {window}")
    return float(np.max(env_left.samples[mask])), float(np.max(env_right.samples[mask]))


def yaw_variation(yaw: Waveform, baseline=YAW_BASELINE_S, plateau=YAW_PLATEAU_S) -> float:
    """Plateau mean minus pre-switch baseline mean.

    Both windows are ``[lo, hi)`` except that the plateau includes its end
    point.
    """
    t = yaw.times
    eps = 1e-9
    base = yaw.samples[(t >= baseline[0] - eps) & (t < baseline[1] - eps)]
    plat = yaw.samples[(t >= plateau[0] - eps) & (t <= plateau[1] + eps)]
    if base.size == 0 or plat.size == 0:
        raise ValidationError("yaw series does not cover the baseline and plateau windows")
    return float(np.mean(plat) - np.mean(base))
