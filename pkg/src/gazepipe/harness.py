"""Repeated stratified hold-out evaluation over (input set, classifier) cells.

Every cell of a repetition sees the same train/test split. Split and
training seeds are derived from ``(master_seed, repetition, cell)`` alone,
so results do not depend on execution order or worker count.
"""

from __future__ import annotations

import csv
import io
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import config as kv
from .errors import CellError, ConfigError, SplitError, ValidationError
from .ml import ArchConfig, SvmConfig, predict, smo_train, train_nn
from .synthgen import Experiment

logger = logging.getLogger(__name__)

INPUT_SETS = ("HEOG", "NEMG", "IMU", "HEOG+NEMG", "HEOG+IMU")
CLASSIFIERS = ("SVM", "FCN", "LSTM", "CNN")
PROFILES = ("ci", "full")

GRID_RATE_HZ = 64.0
GRID_POINTS = 320
GRID_T0_S = -0.5

FULL_REPETITIONS = {Experiment.HEAD_FIXED: 100, Experiment.HEAD_FREE: 50}
CI_REPETITIONS = 5
FULL_EPOCHS = {"FCN": 100, "LSTM": 100, "CNN": 100}
# The CI profile must finish 75 network trainings within minutes on one core.
# LSTM and CNN epochs cost 10-15x an FCN epoch, so they get the smaller share.
CI_EPOCHS = {"FCN": 60, "LSTM": 15, "CNN": 15}


NN_CLASSIFIERS = ("FCN", "LSTM", "CNN")


def _epoch_fields(epochs: dict) -> dict:
    return {f"{k.lower()}_epochs": v for k, v in epochs.items()}


def modalities_of(input_set: str) -> tuple:
    return tuple(input_set.split("+"))


@dataclass(frozen=True)
class ExperimentPlan:
    experiment: Experiment
    input_sets: tuple = INPUT_SETS
    classifiers: tuple = CLASSIFIERS
    train_fraction: float = 0.8
    repetitions: int = CI_REPETITIONS
    master_seed: int = 0
    fcn_epochs: int = CI_EPOCHS["FCN"]
    lstm_epochs: int = CI_EPOCHS["LSTM"]
    cnn_epochs: int = CI_EPOCHS["CNN"]
    profile: str = "ci"

    def __post_init__(self):
        object.__setattr__(self, "experiment", Experiment.parse(self.experiment))
        object.__setattr__(self, "input_sets", tuple(self.input_sets))
        object.__setattr__(self, "classifiers", tuple(self.classifiers))
        if not self.input_sets or not self.classifiers:
            raise ConfigError("a plan needs at least one input set and one classifier")
        for s in self.input_sets:
            if s not in INPUT_SETS:
                raise ConfigError(f"unknown input set {s!r}; choose from {', '.join(INPUT_SETS)}")
            if self.experiment is Experiment.HEAD_FIXED and s != "HEOG":
                raise ConfigError(f"input set {s} needs head-free recordings")
        for c in self.classifiers:
            if c not in CLASSIFIERS:
                raise ConfigError(f"unknown classifier {c!r}; choose from {', '.join(CLASSIFIERS)}")
        if len(set(self.input_sets)) != len(self.input_sets) or len(set(self.classifiers)) != len(
            self.classifiers
        ):
            raise ConfigError("duplicate input set or classifier in plan")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be at least 1")
        if min(self.fcn_epochs, self.lstm_epochs, self.cnn_epochs) < 1:
            raise ConfigError("epochs must be at least 1")
        if self.profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")

    @classmethod
    def default(cls, experiment, profile: str = "ci", master_seed: int = 0, **overrides):
        experiment = Experiment.parse(experiment)
        if profile not in PROFILES:
            raise ConfigError(f"profile must be one of {PROFILES}")
        base = dict(
            experiment=experiment,
            input_sets=INPUT_SETS if experiment is Experiment.HEAD_FREE else ("HEOG",),
            repetitions=CI_REPETITIONS if profile == "ci" else FULL_REPETITIONS[experiment],
            **_epoch_fields(CI_EPOCHS if profile == "ci" else FULL_EPOCHS),
            master_seed=master_seed,
            profile=profile,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def from_mapping(cls, cfg: dict, source="<plan>", **defaults):
        """Build a plan from parsed key=value text.

        ``profile`` picks the repetition and epoch defaults; explicit
        ``repetitions`` or epoch keys override them. ``epochs`` sets all
        three networks, ``fcn_epochs`` etc. one of them.
        """
        kv.check_keys(
            cfg,
            {"experiment", "input_sets", "classifiers", "train_fraction", "repetitions",
             "master_seed", "epochs", "fcn_epochs", "lstm_epochs", "cnn_epochs", "profile"},
            source,
        )
        merged = dict(defaults)
        merged.update({k: v for k, v in cfg.items()})
        if "experiment" not in merged:
            raise ConfigError(f"{source}: missing key 'experiment'")
        over = {}
        if "input_sets" in merged:
            over["input_sets"] = kv.as_list(str(merged["input_sets"]))
        if "classifiers" in merged:
            over["classifiers"] = tuple(c.upper() for c in kv.as_list(str(merged["classifiers"])))
        if "train_fraction" in merged:
            over["train_fraction"] = kv.as_float("train_fraction", str(merged["train_fraction"]))
        if "repetitions" in merged:
            over["repetitions"] = kv.as_int("repetitions", str(merged["repetitions"]))
        if "epochs" in merged:
            over.update(_epoch_fields(dict.fromkeys(NN_CLASSIFIERS,
                                                    kv.as_int("epochs", str(merged["epochs"])))))
        for key in ("fcn_epochs", "lstm_epochs", "cnn_epochs"):
            if key in merged:
                over[key] = kv.as_int(key, str(merged[key]))
        seed = kv.as_int("master_seed", str(merged.get("master_seed", 0)))
        return cls.default(
            merged["experiment"], str(merged.get("profile", "ci")), seed, **over
        )

    def to_text(self) -> str:
        return "\n".join(
            [
                f"experiment = {self.experiment.value}",
                f"input_sets = {','.join(self.input_sets)}",
                f"classifiers = {','.join(self.classifiers)}",
                f"train_fraction = {self.train_fraction!r}",
                f"repetitions = {self.repetitions}",
                f"master_seed = {self.master_seed}",
                f"fcn_epochs = {self.fcn_epochs}",
                f"lstm_epochs = {self.lstm_epochs}",
                f"cnn_epochs = {self.cnn_epochs}",
                f"profile = {self.profile}",
            ]
        ) + "\n"

    def epochs_for(self, classifier: str) -> int:
        """Training epochs of a network classifier; 0 for the SVM."""
        if classifier == "SVM":
            return 0
        return getattr(self, f"{classifier.lower()}_epochs")

    @property
    def cells(self) -> list:
        """Cells in canonical table order."""
        return [
            (s, c)
            for s in INPUT_SETS
            if s in self.input_sets
            for c in CLASSIFIERS
            if c in self.classifiers
        ]


def _labels_of(dataset) -> np.ndarray:
    if hasattr(dataset, "labels"):
        return np.asarray(dataset.labels(), dtype=int)
    return np.asarray(dataset, dtype=int)


def stratified_split(dataset, fraction: float, seed) -> tuple:
    """Per-class shuffled train/test partition.

    Parameters
    ----------
    dataset : labelled dataset or array of class labels
    fraction : float in (0, 1)
        Each class contributes ``floor(fraction * size + 0.5)`` training items.
    seed : int or numpy SeedSequence

    Returns
    -------
    (train, test) : sorted integer index arrays
    """
    if not 0.0 < fraction < 1.0:
        raise SplitError("fraction must lie in (0, 1)")
    labels = _labels_of(dataset)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise SplitError(f"class {cls} has {idx.size} segment(s); at least 2 are needed")
        n_train = int(np.floor(fraction * idx.size + 0.5))
        perm = idx[rng.permutation(idx.size)]
        train.append(perm[:n_train])
        test.append(perm[n_train:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def grid_times() -> np.ndarray:
    return GRID_T0_S + np.arange(GRID_POINTS) / GRID_RATE_HZ


def _streams(seg, modality):
    if modality == "HEOG":
        return [seg.heog] if seg.heog is not None else None
    if modality == "NEMG":
        return list(seg.nemg_env) if seg.nemg_env is not None else None
    if modality == "IMU":
        return [seg.yaw] if seg.yaw is not None else None
    raise ValidationError(f"unknown modality {modality!r}")


def build_input(segments, modalities) -> np.ndarray:
    """Stack modality streams on the common 64 Hz, 320-point grid.

    Returns an array of shape ``(len(segments), 320, channels)`` with one
    channel for HEOG, two (left, right) for NEMG and one for IMU yaw, in the
    order the modalities are given.
    """
    if isinstance(modalities, str):
        modalities = modalities_of(modalities)
    t = grid_times()
    rows = []
    for n, seg in enumerate(segments):
        chans = []
        for m in modalities:
            streams = _streams(seg, m)
            if streams is None:
                raise ValidationError(
                    f"segment {n} (subject {seg.subject}, trial {seg.trial}, "
                    f"switch {seg.switch_index}) has no {m} data"
                )
            chans.extend(np.interp(t, w.times, w.samples) for w in streams)
        rows.append(np.stack(chans, axis=1))
    if not rows:
        n_ch = sum(2 if m == "NEMG" else 1 for m in modalities)
        return np.zeros((0, GRID_POINTS, n_ch))
    return np.stack(rows, axis=0)


def feature_matrix(segments, modalities) -> np.ndarray:
    if isinstance(modalities, str):
        modalities = modalities_of(modalities)
    return np.array([seg.features.values(modalities) for seg in segments])


def repetition_seed(master_seed: int, repetition: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(master_seed, spawn_key=(repetition,))


def cell_seed(master_seed: int, repetition: int, input_set: str, classifier: str) -> int:
    key = (repetition, 1 + INPUT_SETS.index(input_set), 1 + CLASSIFIERS.index(classifier))
    return int(np.random.SeedSequence(master_seed, spawn_key=key).generate_state(1)[0])


def evaluate_cell(classifier, inputs, labels, train, test, n_classes, seed, epochs, modalities):
    """Train on ``train`` rows; return (accuracy %, test predictions, model)."""
    if classifier == "SVM":
        model = smo_train(inputs[train], labels[train], SvmConfig(), n_classes, modalities)
    else:
        cfg = ArchConfig(kind=classifier, epochs=epochs, seed=seed)
        model = train_nn(cfg, inputs[train], labels[train], n_classes, modalities=modalities)
    pred = predict(model, inputs[test])
    acc = 100.0 * float(np.mean(pred == labels[test]))
    return acc, pred, model


@dataclass
class EvalReport:
    plan: ExperimentPlan
    class_deltas: tuple
    accuracies: dict = field(default_factory=dict)
    confusion: dict = field(default_factory=dict)
    test_counts: Optional[np.ndarray] = None
    models: dict = field(default_factory=dict)

    std_convention = "population"

    @property
    def cells(self) -> list:
        return [c for c in self.plan.cells if c in self.accuracies]

    def mean(self, cell) -> float:
        return float(np.mean(self.accuracies[cell]))

    def std(self, cell) -> float:
        return float(np.std(self.accuracies[cell]))

    def summary(self) -> dict:
        return {c: (self.mean(c), self.std(c)) for c in self.cells}


def _work(args):
    r, input_set, classifier = args
    st = _STATE
    train, test = st["splits"][r]
    inputs = st["inputs"][(input_set, classifier == "SVM")]
    seed = cell_seed(st["plan"].master_seed, r, input_set, classifier)
    try:
        acc, pred, model = evaluate_cell(
            classifier, inputs, st["labels"], train, test, st["n_classes"], seed,
            st["plan"].epochs_for(classifier), modalities_of(input_set),
        )
    except Exception as exc:
        raise CellError(input_set, classifier, r, exc) from exc
    keep = model if (r == 0 and st.get("keep_models")) else None
    return (r, input_set, classifier), acc, pred, keep


_STATE: dict = {}


def _init_worker(state):
    _STATE.clear()
    _STATE.update(state)


def worker_count(requested: Optional[int] = None) -> int:
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("GAZEPIPE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"GAZEPIPE_THREADS must be an integer, got {env!r}") from None
    return 1


def run_plan(
    plan: ExperimentPlan, dataset, workers: Optional[int] = None, progress=None,
    keep_models: bool = False,
) -> EvalReport:
    """Run every cell for every repetition.

    Parameters
    ----------
    plan : ExperimentPlan
    dataset : PreparedDataset
        Preprocessed segments of the plan's experiment kind.
    workers : int, optional
        Process count; defaults to ``GAZEPIPE_THREADS`` or 1.
    progress : callable, optional
        Called as ``progress(done, total, cell_key, accuracy)``.
    keep_models : bool
        Keep each cell's repetition-0 model in ``report.models``.
    """
    if Experiment.parse(dataset.experiment) is not plan.experiment:
        raise ValidationError(
            f"dataset is {dataset.experiment.value} but the plan is {plan.experiment.value}"
        )
    labels = dataset.labels()
    n_classes = dataset.n_classes
    segs = dataset.segments
    splits = [
        stratified_split(labels, plan.train_fraction, repetition_seed(plan.master_seed, r))
        for r in range(plan.repetitions)
    ]
    if splits[0][1].size == 0:
        raise SplitError(
            f"train_fraction {plan.train_fraction} leaves no test segments "
            f"in a dataset of {labels.size}"
        )
    inputs = {}
    for input_set in plan.input_sets:
        mods = modalities_of(input_set)
        if "SVM" in plan.classifiers:
            inputs[(input_set, True)] = feature_matrix(segs, mods)
        if any(c != "SVM" for c in plan.classifiers):
            inputs[(input_set, False)] = build_input(segs, mods)
    state = dict(plan=plan, labels=labels, n_classes=n_classes, splits=splits, inputs=inputs,
                 keep_models=keep_models)
    jobs = [(r, s, c) for r in range(plan.repetitions) for s, c in plan.cells]

    results = {}
    n_workers = min(worker_count(workers), len(jobs))
    if n_workers > 1:
        with ProcessPoolExecutor(n_workers, initializer=_init_worker, initargs=(state,)) as pool:
            for done, (key, acc, pred, model) in enumerate(pool.map(_work, jobs), start=1):
                results[key] = (acc, pred, model)
                if progress:
                    progress(done, len(jobs), key, acc)
    else:
        _init_worker(state)
        try:
            for done, job in enumerate(jobs, start=1):
                key, acc, pred, model = _work(job)
                results[key] = (acc, pred, model)
                if progress:
                    progress(done, len(jobs), key, acc)
        finally:
            _STATE.clear()

    report = EvalReport(plan, dataset.experiment.deltas)
    report.test_counts = np.bincount(labels[splits[0][1]], minlength=n_classes)
    for cell in plan.cells:
        accs = np.empty(plan.repetitions)
        conf = np.zeros((n_classes, n_classes), dtype=np.int64)
        for r in range(plan.repetitions):
            acc, pred, model = results[(r,) + cell]
            if model is not None:
                report.models[cell] = model
            accs[r] = acc
            np.add.at(conf, (labels[splits[r][1]], pred), 1)
        report.accuracies[cell] = accs
        report.confusion[cell] = conf
    return report


# ---------------------------------------------------------------- rendering


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.1f} ± {std:.1f}"


def format_table(summary: dict) -> str:
    """Text table from ``{(input_set, classifier): (mean, std)}``."""
    if not summary:
        raise ValidationError("nothing to render")
    rows = [s for s in INPUT_SETS if any(k[0] == s for k in summary)]
    cols = [c for c in CLASSIFIERS if any(k[1] == c for k in summary)]
    header = ["Input \\ Classifier"] + cols
    body = [
        [s] + [format_cell(*summary[(s, c)]) if (s, c) in summary else "-" for c in cols]
        for s in rows
    ]
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def format_table_csv(summary: dict) -> str:
    rows = [s for s in INPUT_SETS if any(k[0] == s for k in summary)]
    cols = [c for c in CLASSIFIERS if any(k[1] == c for k in summary)]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input"] + cols)
    for s in rows:
        w.writerow([s] + [format_cell(*summary[(s, c)]) if (s, c) in summary else "" for c in cols])
    return buf.getvalue()


def render_table(report: EvalReport) -> str:
    return format_table(report.summary())


def repetitions_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input", "classifier", "repetition", "accuracy"])
    for cell in report.cells:
        for r, acc in enumerate(report.accuracies[cell]):
            w.writerow([cell[0], cell[1], r, f"{acc:.17g}"])
    return buf.getvalue()


def cells_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input", "classifier", "mean", "std", "repetitions"])
    for cell in report.cells:
        w.writerow(
            [cell[0], cell[1], f"{report.mean(cell):.17g}", f"{report.std(cell):.17g}",
             len(report.accuracies[cell])]
        )
    return buf.getvalue()


def confusion_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["input", "classifier", "true_delta", "predicted_delta", "count"])
    for cell in report.cells:
        conf = report.confusion[cell]
        for i, a in enumerate(report.class_deltas):
            for j, b in enumerate(report.class_deltas):
                w.writerow([cell[0], cell[1], a, b, int(conf[i, j])])
    return buf.getvalue()


def metadata_text(report: EvalReport) -> str:
    return (
        report.plan.to_text()
        + f"std = {report.std_convention}\n"
        + f"classes = {','.join(str(d) for d in report.class_deltas)}\n"
    )


def read_cells_csv(text: str) -> dict:
    """Inverse of :func:`cells_csv`, returning ``{cell: (mean, std)}``."""
    reader = csv.DictReader(io.StringIO(text))
    need = {"input", "classifier", "mean", "std"}
    if reader.fieldnames is None or not need <= set(reader.fieldnames):
        raise ValidationError("cell CSV needs columns input, classifier, mean, std")
    out = {}
    for row in reader:
        try:
            out[(row["input"], row["classifier"])] = (float(row["mean"]), float(row["std"]))
        except ValueError:
            raise ValidationError(f"bad number in cell CSV row {row}") from None
    return out
