"""Deterministic preprocessing: zero-phase filtering, resampling, trigger
segmentation and within-subject normalization.

All functions are pure; they never modify their input arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import signal

from .errors import ConfigError, DegenerateInputError, SegmentEdgeError, ValidationError

__all__ = [
    "Waveform",
    "FilterSpec",
    "apply_filter",
    "resample",
    "clip_segments",
    "normalize_subject",
    "HEOG_LOWPASS",
    "NEMG_BANDPASS",
]

EDGE_PAD_S = 1.0


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled real channel.

    ``t0_s`` is the time of the first sample relative to the switch instant
    (-0.5 s for clipped segments).
    """

    samples: np.ndarray
    rate_hz: float
    t0_s: float = 0.0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValidationError(f"waveform samples must be 1-D, got shape {x.shape}")
        if not self.rate_hz > 0:
            raise ValidationError(f"rate_hz must be > 0, got {self.rate_hz}")
        if not np.all(np.isfinite(x)):
            raise ValidationError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(self.samples.size) / self.rate_hz

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.rate_hz, self.t0_s)


@dataclass(frozen=True)
class FilterSpec:
    kind: str
    corner_hz: tuple
    order: int = 4
    zero_phase: bool = True

    def __post_init__(self):
        corners = self.corner_hz
        if np.isscalar(corners):
            corners = (float(corners),)
        corners = tuple(float(c) for c in corners)
        object.__setattr__(self, "corner_hz", corners)
        if self.kind not in ("lowpass", "bandpass"):
            raise ConfigError(f"unknown filter kind {self.kind!r}")
        expected = 1 if self.kind == "lowpass" else 2
        if len(corners) != expected:
            raise ConfigError(f"{self.kind} needs {expected} corner(s), got {corners}")
        if self.kind == "bandpass" and not corners[0] < corners[1]:
            raise ConfigError(f"bandpass low corner must be below high corner: {corners}")
        if self.order < 2 or self.order % 2:
            raise ConfigError(f"filter order must be a positive even integer, got {self.order}")

    def check_rate(self, rate_hz: float) -> None:
        nyq = rate_hz / 2.0
        for c in self.corner_hz:
            if not 0.0 < c < nyq:
                raise ConfigError(
                    f"corner {c} Hz must lie strictly inside (0, {nyq}) Hz for rate {rate_hz} Hz"
                )

    def sos(self, rate_hz: float) -> np.ndarray:
        self.check_rate(rate_hz)
        btype = "lowpass" if self.kind == "lowpass" else "bandpass"
        wn = self.corner_hz[0] if self.kind == "lowpass" else self.corner_hz
        return signal.butter(self.order, wn, btype=btype, fs=rate_hz, output="sos")


HEOG_LOWPASS = FilterSpec("lowpass", (10.0,), order=4)
NEMG_BANDPASS = FilterSpec("bandpass", (40.0, 250.0), order=4)


def apply_filter(w: Waveform, spec: FilterSpec) -> Waveform:
    """Filter a waveform with a Butterworth design.

    Zero-phase filtering runs forward and backward over a reflect-padded
    copy (1 s each side, capped at the signal length) and crops the pad.
    """
    sos = spec.sos(w.rate_hz)
    x = w.samples
    if not spec.zero_phase:
        return w.with_samples(signal.sosfilt(sos, x))
    pad = min(int(round(EDGE_PAD_S * w.rate_hz)), x.size - 1)
    if pad > 0:
        xp = np.pad(x, pad, mode="reflect")
    else:
        xp = x
    y = signal.sosfiltfilt(sos, xp, padtype=None)
    if pad > 0:
        y = y[pad:-pad]
    return w.with_samples(y)


def resample(w: Waveform, target_hz: float) -> Waveform:
    """Change the sampling rate, keeping the time origin.

    Rate reduction low-passes at 0.45 * target first, then decimates when the
    ratio is an integer and interpolates linearly otherwise. Upsampling is
    plain linear interpolation.
    """
    if not target_hz > 0:
        raise ConfigError(f"target rate must be > 0, got {target_hz}")
    rate = float(w.rate_hz)
    n_out = int(round(w.samples.size * target_hz / rate))
    if target_hz == rate:
        return w
    x = w.samples
    if target_hz < rate:
        aa = FilterSpec("lowpass", (0.45 * target_hz,), order=4)
        x = apply_filter(w, aa).samples
        ratio = rate / target_hz
        k = int(round(ratio))
        if abs(ratio - k) < 1e-9:
            return Waveform(x[::k][:n_out], target_hz, w.t0_s)
    t_in = np.arange(x.size) / rate
    t_out = np.arange(n_out) / target_hz
    return Waveform(np.interp(t_out, t_in, x), target_hz, w.t0_s)


def clip_segments(
    continuous: Waveform,
    triggers: Sequence[float],
    pre_s: float = 0.5,
    post_s: float = 4.5,
) -> list[Waveform]:
    """Cut fixed windows around trigger times.

    Trigger times are on the same clock as ``continuous.t0_s``. Every
    returned segment starts at ``-pre_s`` relative to its trigger.
    """
    rate = continuous.rate_hz
    n_seg = int(round((pre_s + post_s) * rate))
    n_total = continuous.samples.size
    starts = []
    bad = []
    for i, trig in enumerate(triggers):
        start = int(round((trig - pre_s - continuous.t0_s) * rate))
        if start < 0 or start + n_seg > n_total:
            bad.append(i)
        starts.append(start)
    if bad:
        raise SegmentEdgeError(bad)
    return [
        Waveform(continuous.samples[s : s + n_seg], rate, -pre_s) for s in starts
    ]


def normalize_subject(segments: Sequence[Waveform]) -> list[Waveform]:
    """Scale one subject's segments of one channel type into [-1, 1].

    Every segment is divided by the largest absolute sample found across the
    whole group, so relative amplitudes between the subject's segments are
    kept.
    """
    if len(segments) == 0:
        raise DegenerateInputError("cannot normalize an empty segment group")
    peak = max(float(np.max(np.abs(s.samples))) if s.samples.size else 0.0 for s in segments)
    if peak == 0.0 or not math.isfinite(peak):
        raise DegenerateInputError("segment group is all zeros")
    return [s.with_samples(s.samples / peak) for s in segments]
