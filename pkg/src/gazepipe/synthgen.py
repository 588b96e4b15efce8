"""Synthetic HEOG / neck-EMG / 9-axis IMU generator.

Every segment is 5 s long and starts 0.5 s before the gaze switch. A gaze
shift ``delta`` (degrees, positive = leftward) is split between the eyes and
the head by the trial's head fraction ``s``: the eyes contribute
``(1 - s) * delta`` and the head ``s * delta``.

Randomness comes only from the explicit ``numpy.random.Generator`` passed in,
or, for whole datasets, from per-segment substreams keyed by
``(master_seed, subject, trial, switch, modality)``. Output therefore does not
depend on generation order.
"""

from __future__ import annotations

import enum
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy import signal

from .dsp import Waveform
from .errors import ConfigError, ValidationError

__all__ = [
    "Experiment",
    "GazeShift",
    "StrategyProfile",
    "GeneratorConfig",
    "ImuSeries",
    "Segment",
    "Dataset",
    "gen_heog",
    "gen_nemg",
    "gen_imu",
    "gen_dataset",
    "plan_switches",
    "heog_rate",
]

SEGMENT_S = 5.0
PRE_S = 0.5
NEMG_RATE_HZ = 1000.0
IMU_RATE_HZ = 30.0

# HEOG pulse: rise lasts 0.2 s, then a slow return to baseline
HEOG_RISE_S = 0.2
HEOG_DECAY_TAU_S = 3.0
HEOG_NOISE_UV = 30.0
HEOG_NOISE_CUTOFF_HZ = 2.0
HEOG_DRIFT_UV_PER_S = 2.0
HEOG_GAIN_JITTER = 0.06
ONSET_JITTER_S = 0.02

# NEMG burst: rise to a peak 0.3 s after onset, then decay
NEMG_RISE_S = 0.3
NEMG_DECAY_TAU_S = 0.5
NEMG_GAIN_AT_90 = 1.0
NEMG_IPSI_FLOOR = 0.2
NEMG_IPSI_DEPTH = 0.2
NEMG_GAIN_JITTER = 0.25
# log-normal spread of per-trial electrode contact quality
NEMG_QUALITY_SIGMA = 0.8
NEMG_AMPLITUDE_UV = 20.0
NEMG_BAND_HZ = (40.0, 250.0)

HEAD_SETTLE_S = 1.0
HEAD_GAIN_JITTER = 0.05
# std of the per-switch head_fraction around the trial's value (head-free)
SWITCH_HEAD_SPREAD = 0.12
GYRO_NOISE_DPS = 0.5
ACCEL_NOISE_G = 0.01
MAG_NOISE = 0.01
GYRO_BIAS_SPREAD_DPS = 0.5

HEAD_FIXED_POSITIONS = (-45, -30, 0, 30, 45)
HEAD_FREE_MAGNITUDES = (30, 60, 90)


class Experiment(str, enum.Enum):
    HEAD_FIXED = "head_fixed"
    HEAD_FREE = "head_free"

    @classmethod
    def parse(cls, value) -> "Experiment":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"headfixed": "head_fixed", "headfree": "head_free"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown experiment kind {value!r}") from None

    @property
    def deltas(self) -> tuple:
        """Label set, ordered so that the class index is the tuple position."""
        if self is Experiment.HEAD_FIXED:
            mags = (15, 30, 45, 60, 75, 90)
        else:
            mags = HEAD_FREE_MAGNITUDES
        return tuple(-m for m in reversed(mags)) + mags

    @property
    def n_classes(self) -> int:
        return len(self.deltas)


@dataclass(frozen=True)
class GazeShift:
    delta_deg: int
    class_index: int
    experiment: Experiment

    def __post_init__(self):
        deltas = self.experiment.deltas
        if self.delta_deg not in deltas:
            raise ValidationError(
                f"delta {self.delta_deg} not in {self.experiment.value} label set {deltas}"
            )
        if deltas.index(self.delta_deg) != self.class_index:
            raise ValidationError(
                f"class index {self.class_index} does not match delta {self.delta_deg}"
            )

    @classmethod
    def from_delta(cls, delta_deg, experiment) -> "GazeShift":
        experiment = Experiment.parse(experiment)
        delta = int(round(delta_deg))
        if delta not in experiment.deltas:
            raise ValidationError(
                f"delta {delta_deg} not in {experiment.value} label set {experiment.deltas}"
            )
        return cls(delta, experiment.deltas.index(delta), experiment)

    @classmethod
    def from_index(cls, class_index, experiment) -> "GazeShift":
        experiment = Experiment.parse(experiment)
        return cls(experiment.deltas[class_index], class_index, experiment)


@dataclass(frozen=True)
class StrategyProfile:
    """How one trial's gaze shifts are executed.

    ``heog_gain_uv_per_deg`` and ``nemg_gain`` model the subject's corneo-
    retinal potential and the electrode attachment quality of the trial.
    """

    head_fraction: float = 0.0
    eye_onset_s: float = 0.2
    head_onset_s: float = 0.2
    emg_onset_s: float = 0.1
    noise_scale: float = 1.0
    gyro_bias_dps: float = 0.0
    heog_gain_uv_per_deg: float = 10.0
    nemg_gain: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.head_fraction <= 1.0:
            raise ConfigError(f"head_fraction must lie in [0, 1], got {self.head_fraction}")
        for name in ("eye_onset_s", "head_onset_s", "emg_onset_s"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1) s, got {v}")
        if not self.noise_scale >= 0.0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not self.nemg_gain >= 0.0 or not self.heog_gain_uv_per_deg > 0.0:
            raise ConfigError("gains must be positive")


@dataclass(frozen=True)
class GeneratorConfig:
    experiment: Experiment = Experiment.HEAD_FREE
    n_subjects: Optional[int] = None
    n_trials_per_subject: Optional[int] = None
    master_seed: int = 0
    degraded_nemg: bool = False
    noise_scale: float = 1.0
    strategy_mean: float = 0.6
    strategy_spread: float = 0.2
    switches_per_trial: Optional[int] = None

    def __post_init__(self):
        exp = Experiment.parse(self.experiment)
        object.__setattr__(self, "experiment", exp)
        defaults = {
            Experiment.HEAD_FIXED: (4, 10, 20),
            Experiment.HEAD_FREE: (17, 3, 40),
        }[exp]
        for name, default in zip(
            ("n_subjects", "n_trials_per_subject", "switches_per_trial"), defaults
        ):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ConfigError(f"{name} must be a positive integer, got {value}")
            object.__setattr__(self, name, int(value))
        if exp is Experiment.HEAD_FIXED and self.switches_per_trial != 20:
            raise ConfigError(
                "head-fixed trials visit every ordered pair of 5 positions: 20 switches"
            )
        if exp is Experiment.HEAD_FREE and self.switches_per_trial % 2:
            raise ConfigError("head-free trials alternate direction: switch count must be even")
        if not self.noise_scale >= 0.0:
            raise ConfigError(f"noise_scale must be >= 0, got {self.noise_scale}")
        if not 0.0 <= self.strategy_mean <= 1.0 or not self.strategy_spread >= 0.0:
            raise ConfigError("strategy distribution must have mean in [0, 1] and spread >= 0")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "master_seed", int(self.master_seed))

    @property
    def n_segments(self) -> int:
        return self.n_subjects * self.n_trials_per_subject * self.switches_per_trial


@dataclass(frozen=True)
class ImuSeries:
    """9-axis IMU record: gyro in rad/s, accel in g, mag as a unit vector.

    ``true_yaw_deg`` is the generator's ground truth, kept for oracle tests
    only.
    """

    gyro: np.ndarray
    accel: np.ndarray
    mag: np.ndarray
    rate_hz: float = IMU_RATE_HZ
    t0_s: float = -PRE_S
    true_yaw_deg: Optional[np.ndarray] = None

    def __post_init__(self):
        arrays = [np.asarray(a, dtype=np.float64) for a in (self.gyro, self.accel, self.mag)]
        for a in arrays:
            if a.ndim != 2 or a.shape[1] != 3:
                raise ValidationError(f"IMU channels must have shape (n, 3), got {a.shape}")
        if len({a.shape[0] for a in arrays}) != 1:
            raise ValidationError("IMU gyro/accel/mag lengths differ")
        object.__setattr__(self, "gyro", arrays[0])
        object.__setattr__(self, "accel", arrays[1])
        object.__setattr__(self, "mag", arrays[2])
        if self.true_yaw_deg is not None:
            object.__setattr__(self, "true_yaw_deg", np.asarray(self.true_yaw_deg, dtype=np.float64))

    def __len__(self):
        return self.gyro.shape[0]

    @property
    def times(self) -> np.ndarray:
        return self.t0_s + np.arange(len(self)) / self.rate_hz


@dataclass(frozen=True)
class Segment:
    subject: int
    trial: int
    switch_index: int
    shift: GazeShift
    heog: Waveform
    nemg: Optional[tuple] = None
    imu: Optional[ImuSeries] = None
    strategy: Optional[StrategyProfile] = None

    @property
    def label(self) -> int:
        return self.shift.class_index


@dataclass
class Dataset:
    config: GeneratorConfig
    segments: list = field(default_factory=list)

    @property
    def experiment(self) -> Experiment:
        return self.config.experiment

    def __len__(self):
        return len(self.segments)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.segments], dtype=int)


def heog_rate(experiment) -> float:
    return 250.0 if Experiment.parse(experiment) is Experiment.HEAD_FIXED else 1000.0


def _times(rate_hz: float) -> np.ndarray:
    return -PRE_S + np.arange(int(round(SEGMENT_S * rate_hz))) / rate_hz


def _smoothstep(u):
    u = np.clip(u, 0.0, 1.0)
    return u * u * (3.0 - 2.0 * u)


@functools.lru_cache(maxsize=None)
def _shaping_filter(kind: str, rate_hz: float):
    """Noise-shaping SOS plus the gain that makes its white-noise output unit-variance."""
    if kind == "heog":
        sos = signal.butter(2, HEOG_NOISE_CUTOFF_HZ, fs=rate_hz, output="sos")
    else:
        sos = signal.butter(4, NEMG_BAND_HZ, btype="bandpass", fs=rate_hz, output="sos")
    impulse = np.zeros(int(rate_hz * 20))
    impulse[0] = 1.0
    h = signal.sosfilt(sos, impulse)
    return sos, 1.0 / math.sqrt(float(np.sum(h * h)))


def _shaped_noise(kind: str, n: int, rate_hz: float, rng: np.random.Generator) -> np.ndarray:
    sos, scale = _shaping_filter(kind, rate_hz)
    warmup = int(rate_hz * 2)
    white = rng.standard_normal(n + warmup)
    return signal.sosfilt(sos, white)[warmup:] * scale


def _heog_pulse(t: np.ndarray, onset: float) -> np.ndarray:
    peak_t = onset + HEOG_RISE_S
    rise = _smoothstep((t - onset) / HEOG_RISE_S)
    decay = np.exp(-(t - peak_t) / HEOG_DECAY_TAU_S)
    return np.where(t <= peak_t, rise, decay)


def gen_heog(
    shift: GazeShift,
    strategy: StrategyProfile,
    rate_hz: float,
    rng: np.random.Generator,
) -> Waveform:
    """Raw HEOG segment in microvolts.

    Signal model: ``gain * (1 - s) * delta * pulse(t) + drift * t + noise(t)``
    where the pulse rises from the eye onset to a peak 0.2 s later and then
    relaxes toward baseline with a 3 s time constant. Gain and onset carry
    per-segment jitter and the noise is 2 Hz low-passed Gaussian; all three
    scale with ``noise_scale``. The drift slope is drawn regardless of
    ``noise_scale``.
    """
    if rate_hz not in (250.0, 1000.0):
        raise ConfigError(f"HEOG rate must be 250 or 1000 Hz, got {rate_hz}")
    ns = strategy.noise_scale
    t = _times(rate_hz)
    drift = rng.normal(0.0, HEOG_DRIFT_UV_PER_S)
    gain_jitter = rng.standard_normal()
    onset_jitter = rng.standard_normal()
    noise = _shaped_noise("heog", t.size, rate_hz, rng)

    eye_deg = (1.0 - strategy.head_fraction) * shift.delta_deg
    gain = strategy.heog_gain_uv_per_deg * max(0.0, 1.0 + HEOG_GAIN_JITTER * ns * gain_jitter)
    onset = min(max(strategy.eye_onset_s + ONSET_JITTER_S * ns * onset_jitter, 0.0), 0.99)
    x = gain * eye_deg * _heog_pulse(t, onset) + drift * t
    if ns > 0:
        x = x + HEOG_NOISE_UV * ns * noise
    return Waveform(x, rate_hz, -PRE_S)


def _nemg_gain_curve(head_deg: float) -> float:
    """Burst gain as a function of head rotation magnitude; zero at zero."""
    return NEMG_GAIN_AT_90 * abs(head_deg) / 90.0


def nemg_envelopes(
    shift: GazeShift,
    strategy: StrategyProfile,
    degraded: bool,
    gain_jitter: float = 0.0,
    onset_jitter: float = 0.0,
):
    """Noise-free (left, right) SCM envelopes on the 1 kHz segment grid."""
    ns = strategy.noise_scale
    t = _times(NEMG_RATE_HZ)
    head_deg = strategy.head_fraction * shift.delta_deg
    a = strategy.nemg_gain * _nemg_gain_curve(head_deg)
    a *= max(0.0, 1.0 + NEMG_GAIN_JITTER * ns * gain_jitter)
    onset = min(max(strategy.emg_onset_s + ONSET_JITTER_S * ns * onset_jitter, 0.0), 0.99)
    peak_t = onset + NEMG_RISE_S
    burst = np.where(
        t <= peak_t,
        _smoothstep((t - onset) / NEMG_RISE_S),
        np.exp(-(t - peak_t) / NEMG_DECAY_TAU_S),
    )
    contra = 1.0 + a * burst
    ipsi = np.maximum(NEMG_IPSI_FLOOR, 1.0 - NEMG_IPSI_DEPTH * a * burst)
    if degraded:
        return contra, contra.copy()
    # a leftward head turn is driven by the right SCM
    if head_deg > 0:
        return ipsi, contra
    if head_deg < 0:
        return contra, ipsi
    return contra, contra.copy()


def gen_nemg(
    shift: GazeShift,
    strategy: StrategyProfile,
    degraded: bool,
    rng: np.random.Generator,
) -> tuple:
    """Raw (left SCM, right SCM) EMG at 1 kHz.

    Each channel is its amplitude envelope times independent 40-250 Hz
    band-limited unit-variance noise. The contralateral SCM bursts
    (``1 + a * burst``) while the ipsilateral one dips; ``degraded`` gives
    both sides the bursting form so direction is lost.
    """
    gain_jitter = rng.standard_normal()
    onset_jitter = rng.standard_normal()
    left_env, right_env = nemg_envelopes(shift, strategy, degraded, gain_jitter, onset_jitter)
    n = left_env.size
    left = NEMG_AMPLITUDE_UV * left_env * _shaped_noise("nemg", n, NEMG_RATE_HZ, rng)
    right = NEMG_AMPLITUDE_UV * right_env * _shaped_noise("nemg", n, NEMG_RATE_HZ, rng)
    return Waveform(left, NEMG_RATE_HZ, -PRE_S), Waveform(right, NEMG_RATE_HZ, -PRE_S)


def head_yaw_trajectory(head_deg: float, head_onset_s: float, t: np.ndarray):
    """Yaw (deg) and yaw rate (deg/s) for a smoothstep turn settling at 1 s."""
    span = HEAD_SETTLE_S - head_onset_s
    u = np.clip((t - head_onset_s) / span, 0.0, 1.0)
    yaw = head_deg * u * u * (3.0 - 2.0 * u)
    rate = head_deg * 6.0 * u * (1.0 - u) / span
    return yaw, rate


def gen_imu(
    shift: GazeShift,
    strategy: StrategyProfile,
    rng: np.random.Generator,
) -> ImuSeries:
    """9-axis IMU series at 30 Hz for a head turn of ``s * delta`` degrees."""
    ns = strategy.noise_scale
    t = _times(IMU_RATE_HZ)
    n = t.size
    amp_jitter = rng.standard_normal()
    head_deg = strategy.head_fraction * shift.delta_deg
    head_deg *= 1.0 + HEAD_GAIN_JITTER * ns * amp_jitter
    yaw_deg, rate_dps = head_yaw_trajectory(head_deg, strategy.head_onset_s, t)

    gyro_noise = rng.standard_normal((n, 3)) * math.radians(GYRO_NOISE_DPS) * ns
    accel_noise = rng.standard_normal((n, 3)) * ACCEL_NOISE_G * ns
    mag_noise = rng.standard_normal((n, 3)) * MAG_NOISE * ns

    gyro = np.zeros((n, 3))
    gyro[:, 2] = np.radians(rate_dps + strategy.gyro_bias_dps)
    gyro += gyro_noise

    accel = np.zeros((n, 3))
    accel[:, 2] = 1.0
    accel += accel_noise

    psi = np.radians(yaw_deg)
    mag = np.column_stack([np.cos(psi), -np.sin(psi), np.zeros(n)])
    mag = mag + mag_noise
    mag /= np.linalg.norm(mag, axis=1, keepdims=True)
    return ImuSeries(gyro, accel, mag, IMU_RATE_HZ, -PRE_S, true_yaw_deg=yaw_deg)


# -- dataset plans -----------------------------------------------------------

_STRATEGY_KEY = 0xFFFF
_PLAN_KEY = 0xFFFE
_MODALITY_KEYS = {"heog": 0, "nemg": 1, "imu": 2}
# per-switch execution choices shared by all modalities
_EXECUTION_KEY = 3


def substream(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(key)))


def _eulerian_circuit(n_nodes: int, rng: np.random.Generator) -> list:
    """Random closed walk using every ordered pair of distinct nodes once."""
    remaining = {
        u: [int(v) for v in rng.permutation([v for v in range(n_nodes) if v != u])]
        for u in range(n_nodes)
    }
    start = int(rng.integers(n_nodes))
    stack, circuit = [start], []
    while stack:
        u = stack[-1]
        if remaining[u]:
            stack.append(remaining[u].pop())
        else:
            circuit.append(stack.pop())
    circuit.reverse()
    return circuit


def plan_switches(config: GeneratorConfig, subject: int, trial: int) -> list:
    """Signed gaze shifts of one trial, in presentation order."""
    if config.experiment is Experiment.HEAD_FIXED:
        rng = substream(config.master_seed, subject, trial, _PLAN_KEY)
        walk = _eulerian_circuit(len(HEAD_FIXED_POSITIONS), rng)
        pos = [HEAD_FIXED_POSITIONS[i] for i in walk]
        return [b - a for a, b in zip(pos[:-1], pos[1:])]
    mag = HEAD_FREE_MAGNITUDES[trial % len(HEAD_FREE_MAGNITUDES)]
    return [mag if k % 2 == 0 else -mag for k in range(config.switches_per_trial)]


def draw_strategy(config: GeneratorConfig, subject: int, trial: int) -> StrategyProfile:
    sub_rng = substream(config.master_seed, subject, _STRATEGY_KEY, 0)
    heog_gain = float(sub_rng.uniform(8.0, 14.0))
    rng = substream(config.master_seed, subject, trial, _STRATEGY_KEY)
    ns = config.noise_scale
    if config.experiment is Experiment.HEAD_FIXED:
        s = 0.0
    else:
        b = rng.beta(2.0, 2.0)
        s = config.strategy_mean + config.strategy_spread * (2.0 * b - 1.0)
        s = float(np.clip(s, 0.1, 0.95))
    eye_on, head_on, emg_on = rng.normal(0.0, 0.02, size=3) * min(ns, 1.0)
    nemg_quality = float(np.exp(rng.normal(0.0, NEMG_QUALITY_SIGMA)))
    bias = float(rng.normal(0.0, GYRO_BIAS_SPREAD_DPS)) * ns
    return StrategyProfile(
        head_fraction=s,
        eye_onset_s=float(np.clip(0.2 + eye_on, 0.0, 0.9)),
        head_onset_s=float(np.clip(0.2 + head_on, 0.0, 0.9)),
        emg_onset_s=float(np.clip(0.1 + emg_on, 0.0, 0.9)),
        noise_scale=ns,
        gyro_bias_dps=bias,
        heog_gain_uv_per_deg=heog_gain,
        nemg_gain=nemg_quality,
    )


def make_segment(config: GeneratorConfig, subject: int, trial: int, switch: int,
                 delta: int, strategy: StrategyProfile) -> Segment:
    exp = config.experiment
    shift = GazeShift.from_delta(delta, exp)
    seed = config.master_seed
    if exp is Experiment.HEAD_FREE and SWITCH_HEAD_SPREAD > 0:
        # the head share wanders from switch to switch; the eye covers the rest
        rng = substream(seed, subject, trial, switch, _EXECUTION_KEY)
        s = strategy.head_fraction + SWITCH_HEAD_SPREAD * rng.standard_normal()
        strategy = replace(strategy, head_fraction=float(np.clip(s, 0.0, 1.0)))
    heog = gen_heog(shift, strategy, heog_rate(exp),
                    substream(seed, subject, trial, switch, _MODALITY_KEYS["heog"]))
    nemg = imu = None
    if exp is Experiment.HEAD_FREE:
        nemg = gen_nemg(shift, strategy, config.degraded_nemg,
                        substream(seed, subject, trial, switch, _MODALITY_KEYS["nemg"]))
        imu = gen_imu(shift, strategy,
                      substream(seed, subject, trial, switch, _MODALITY_KEYS["imu"]))
    return Segment(subject, trial, switch, shift, heog, nemg, imu, strategy)


def _trial_segments(args) -> list:
    config, subject, trial = args
    strategy = draw_strategy(config, subject, trial)
    return [
        make_segment(config, subject, trial, k, delta, strategy)
        for k, delta in enumerate(plan_switches(config, subject, trial))
    ]


def gen_dataset(config: GeneratorConfig, workers: int = 1) -> Dataset:
    """Generate every segment of the configured plan.

    Head-fixed: each trial walks all 20 ordered pairs of the five screen
    positions once. Head-free: trial ``k`` uses the ``k mod 3``-th magnitude
    of (30, 60, 90) degrees with strictly alternating direction.
    """
    jobs = [
        (config, subject, trial)
        for subject in range(config.n_subjects)
        for trial in range(config.n_trials_per_subject)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_trial_segments, jobs))
    else:
        chunks = [_trial_segments(job) for job in jobs]
    segments = [seg for chunk in chunks for seg in chunk]
    return Dataset(config, segments)


def with_noise(config: GeneratorConfig, noise_scale: float) -> GeneratorConfig:
    return replace(config, noise_scale=noise_scale)
