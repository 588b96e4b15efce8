"""Preprocessing chain from raw segments to classifier-ready streams.

HEOG:  resample to 64 Hz -> 10 Hz zero-phase low-pass -> per-subject [-1, 1].
NEMG:  40-250 Hz band-pass at 1 kHz -> resample to 500 Hz -> per-subject
       [-1, 1] -> short-term RMS -> divide by the pre-switch baseline.
IMU:   Madgwick yaw -> per-subject [-1, 1].
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import dsp
from .features import (
    EnvelopeParams,
    FeatureVector,
    heog_peak_features,
    nemg_peak_features,
    normalize_envelope,
    short_term_rms,
    yaw_variation,
)
from .fusion import CONVERGENCE_S, FusionConfig, estimate_yaw_series
from .synthgen import Dataset, Experiment

HEOG_RATE_HZ = 64.0
NEMG_RATE_HZ = 500.0
# the filter's start-up allotment is kept out of the yaw baseline
YAW_BASELINE_S = (-0.5 + CONVERGENCE_S, 0.0)


@dataclass(frozen=True)
class PreparedSegment:
    subject: int
    trial: int
    switch_index: int
    label: int
    delta_deg: int
    heog: dsp.Waveform
    nemg_env: Optional[tuple] = None
    yaw: Optional[dsp.Waveform] = None
    features: Optional[FeatureVector] = None

    def has(self, modality: str) -> bool:
        if modality == "HEOG":
            return self.heog is not None
        if modality == "NEMG":
            return self.nemg_env is not None
        if modality == "IMU":
            return self.yaw is not None
        raise KeyError(modality)


@dataclass
class PreparedDataset:
    experiment: Experiment
    segments: list

    def __len__(self):
        return len(self.segments)

    @property
    def n_classes(self) -> int:
        return self.experiment.n_classes

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.segments], dtype=int)


def _by_subject(items, subjects):
    groups = defaultdict(list)
    for idx, subj in enumerate(subjects):
        groups[subj].append(idx)
    out = [None] * len(items)
    for idxs in groups.values():
        normed = dsp.normalize_subject([items[i] for i in idxs])
        for i, w in zip(idxs, normed):
            out[i] = w
    return out


def preprocess_heog(w: dsp.Waveform) -> dsp.Waveform:
    return dsp.apply_filter(dsp.resample(w, HEOG_RATE_HZ), dsp.HEOG_LOWPASS)


def preprocess_nemg(w: dsp.Waveform) -> dsp.Waveform:
    # 250 Hz is the Nyquist limit at 500 Hz, so the band-pass runs first
    return dsp.resample(dsp.apply_filter(w, dsp.NEMG_BANDPASS), NEMG_RATE_HZ)


def prepare_dataset(
    dataset: Dataset,
    fusion_cfg: Optional[FusionConfig] = None,
    envelope: EnvelopeParams = EnvelopeParams(),
) -> PreparedDataset:
    segs = dataset.segments
    subjects = [s.subject for s in segs]

    heog = _by_subject([preprocess_heog(s.heog) for s in segs], subjects)

    envs = [None] * len(segs)
    if all(s.nemg is not None for s in segs) and segs:
        left = _by_subject([preprocess_nemg(s.nemg[0]) for s in segs], subjects)
        right = _by_subject([preprocess_nemg(s.nemg[1]) for s in segs], subjects)
        envs = [
            (
                normalize_envelope(short_term_rms(l, envelope), envelope),
                normalize_envelope(short_term_rms(r, envelope), envelope),
            )
            for l, r in zip(left, right)
        ]

    yaws = [None] * len(segs)
    if all(s.imu is not None for s in segs) and segs:
        yaws = _by_subject([estimate_yaw_series(s.imu, fusion_cfg) for s in segs], subjects)

    out = []
    for s, h, env, yaw in zip(segs, heog, envs, yaws):
        polarity, peak = heog_peak_features(h)
        kw = {"heog_polarity": polarity, "heog_abs_peak": peak}
        if env is not None:
            kw["nemg_left_peak"], kw["nemg_right_peak"] = nemg_peak_features(*env)
        if yaw is not None:
            kw["yaw_variation"] = yaw_variation(yaw, baseline=YAW_BASELINE_S)
        out.append(
            PreparedSegment(
                s.subject, s.trial, s.switch_index, s.label, s.shift.delta_deg,
                h, env, yaw, FeatureVector(**kw),
            )
        )
    return PreparedDataset(dataset.experiment, out)
