import numpy as np
import pytest

from gazepipe.dsp import Waveform
from gazepipe.pipeline import (
    HEOG_RATE_HZ,
    prepare_dataset,
    preprocess_heog,
    preprocess_nemg,
)
from gazepipe.synthgen import GeneratorConfig, gen_dataset


@pytest.fixture(scope="module")
def head_free():
    cfg = GeneratorConfig(n_subjects=2, n_trials_per_subject=3, switches_per_trial=4,
                          master_seed=21)
    return gen_dataset(cfg), prepare_dataset(gen_dataset(cfg))


@pytest.fixture(scope="module")
def head_fixed():
    cfg = GeneratorConfig(experiment="head_fixed", n_subjects=2, n_trials_per_subject=1,
                          master_seed=5)
    return prepare_dataset(gen_dataset(cfg))


def test_stream_shapes(head_free):
    _, prepared = head_free
    seg = prepared.segments[0]
    assert len(seg.heog) == 320 and seg.heog.rate_hz == HEOG_RATE_HZ
    assert seg.heog.t0_s == -0.5
    left, right = seg.nemg_env
    assert len(left) == len(right) == 99 and left.rate_hz == 20.0
    assert len(seg.yaw) == 150
    assert all(seg.has(m) for m in ("HEOG", "NEMG", "IMU"))
    assert all(seg.features.mask.values())


def test_per_subject_range(head_free):
    _, prepared = head_free
    for subject in (0, 1):
        segs = [s for s in prepared.segments if s.subject == subject]
        heog = np.concatenate([s.heog.samples for s in segs])
        yaw = np.concatenate([s.yaw.samples for s in segs])
        for x in (heog, yaw):
            # one scale per subject: the largest excursion maps to exactly 1
            assert np.max(np.abs(x)) == 1.0


def test_nemg_baseline_normalized(head_free):
    _, prepared = head_free
    for seg in prepared.segments:
        for env in seg.nemg_env:
            # frames centred before the switch: -0.45, -0.40, ..., -0.05 s
            assert np.mean(env.samples[:9]) == pytest.approx(1.0, abs=1e-12)


def test_features_follow_labels(head_free):
    _, prepared = head_free
    for seg in prepared.segments:
        assert np.sign(seg.features.yaw_variation) == np.sign(seg.delta_deg)


def test_labels_and_order(head_free):
    raw, prepared = head_free
    np.testing.assert_array_equal(prepared.labels(), raw.labels())
    assert [(s.subject, s.trial, s.switch_index) for s in prepared.segments] == \
        [(s.subject, s.trial, s.switch_index) for s in raw.segments]
    assert prepared.n_classes == 6


def test_head_fixed_has_heog_only(head_fixed):
    seg = head_fixed.segments[0]
    assert len(head_fixed) == 40 and head_fixed.n_classes == 12
    assert seg.has("HEOG") and not seg.has("NEMG") and not seg.has("IMU")
    assert seg.features.mask == {"HEOG": True, "NEMG": False, "IMU": False}
    assert len(seg.heog) == 320


def test_heog_chain_removes_high_frequency():
    t = np.arange(5000) / 1000.0
    w = Waveform(np.sin(2 * np.pi * 1.0 * t) + np.sin(2 * np.pi * 25.0 * t), 1000.0, -0.5)
    out = preprocess_heog(w)
    ref = np.sin(2 * np.pi * 1.0 * out.times - 2 * np.pi * 1.0 * -0.5)
    inner = slice(64, -64)
    assert np.max(np.abs(out.samples[inner] - ref[inner])) < 0.05


def test_nemg_chain_keeps_band():
    t = np.arange(5000) / 1000.0
    w = Waveform(np.sin(2 * np.pi * 100.0 * t) + 5 * np.sin(2 * np.pi * 5.0 * t), 1000.0, -0.5)
    out = preprocess_nemg(w)
    assert out.rate_hz == 500.0 and len(out) == 2500
    inner = out.samples[250:-250]
    assert np.sqrt(np.mean(inner**2)) == pytest.approx(1 / np.sqrt(2), rel=0.05)
