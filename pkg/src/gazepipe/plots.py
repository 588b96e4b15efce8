"""Class-mean waveform figures, each written as SVG with a backing CSV."""

from __future__ import annotations

import csv
import logging
from pathlib import Path

import numpy as np

from .harness import build_input, grid_times

logger = logging.getLogger(__name__)


def class_mean_curves(prepared, modality: str):
    """Per-class mean and population std of a modality on the 64 Hz grid.

    Returns
    -------
    times : (T,) array
    deltas : tuple of class deltas present in the data
    means, stds : arrays of shape (classes, T, channels)
    """
    X = build_input(prepared.segments, (modality,))
    labels = prepared.labels()
    deltas = prepared.experiment.deltas
    present = [k for k in range(len(deltas)) if np.any(labels == k)]
    means = np.stack([X[labels == k].mean(axis=0) for k in present])
    stds = np.stack([X[labels == k].std(axis=0) for k in present])
    return grid_times(), tuple(deltas[k] for k in present), means, stds


def peak_vs_delta(prepared):
    """Mean and std of the signed HEOG peak (polarity x |peak|) per class."""
    labels = prepared.labels()
    signed = np.array(
        [s.features.heog_polarity * s.features.heog_abs_peak for s in prepared.segments]
    )
    deltas = prepared.experiment.deltas
    rows = []
    for k, d in enumerate(deltas):
        sel = signed[labels == k]
        if sel.size:
            rows.append((d, float(sel.mean()), float(sel.std()), int(sel.size)))
    return rows


def _write_curves_csv(path: Path, times, deltas, means, stds, channel_names):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["time_s"]
        for d in deltas:
            for ch in channel_names:
                header += [f"mean_{ch}_{d:+d}", f"std_{ch}_{d:+d}"]
        w.writerow(header)
        for t_idx, t in enumerate(times):
            row = [f"{t:.17g}"]
            for k in range(len(deltas)):
                for c in range(len(channel_names)):
                    row += [f"{means[k, t_idx, c]:.17g}", f"{stds[k, t_idx, c]:.17g}"]
            w.writerow(row)


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _curve_panel(out: Path, stem, title, ylabel, times, deltas, means, stds, channel_names):
    plt = _figure()
    n_ch = len(channel_names)
    fig, axes = plt.subplots(1, n_ch, figsize=(6 * n_ch, 4), squeeze=False)
    cmap = plt.get_cmap("coolwarm")
    for c, name in enumerate(channel_names):
        ax = axes[0, c]
        for k, d in enumerate(deltas):
            color = cmap(k / max(1, len(deltas) - 1))
            m, s = means[k, :, c], stds[k, :, c]
            ax.plot(times, m, color=color, label=f"{d:+d}°")
            ax.fill_between(times, m - s, m + s, color=color, alpha=0.15, linewidth=0)
        ax.axvline(0.0, color="k", linewidth=0.5)
        ax.set_xlabel("time from switch (s)")
        ax.set_ylabel(ylabel)
        ax.set_title(f"{title} ({name})" if n_ch > 1 else title)
    axes[0, -1].legend(fontsize="small", ncol=2)
    fig.tight_layout()
    svg = out / f"{stem}.svg"
    fig.savefig(svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    _write_curves_csv(out / f"{stem}.csv", times, deltas, means, stds, channel_names)
    return [svg, out / f"{stem}.csv"]


def _peak_panel(out: Path, rows):
    plt = _figure()
    d = np.array([r[0] for r in rows])
    m = np.array([r[1] for r in rows])
    s = np.array([r[2] for r in rows])
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(d, m, yerr=s, marker="o", capsize=3)
    ax.axhline(0.0, color="k", linewidth=0.5)
    ax.set_xlabel("eye-gaze variation (deg)")
    ax.set_ylabel("HEOG peak (normalized)")
    ax.set_title("Averaged HEOG peak vs. variation")
    fig.tight_layout()
    svg = out / "heog_peak_vs_delta.svg"
    fig.savefig(svg, format="svg", metadata={"Date": None})
    plt.close(fig)
    csv_path = out / "heog_peak_vs_delta.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["delta_deg", "mean_peak", "std_peak", "count"])
        for delta, mean, std, n in rows:
            w.writerow([delta, f"{mean:.17g}", f"{std:.17g}", n])
    return [svg, csv_path]


def write_figures(prepared, out_dir) -> list:
    """Write every panel the data supports; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    segs = prepared.segments
    written += _curve_panel(
        out, "heog_class_mean", "Class-mean HEOG", "HEOG (normalized)",
        *class_mean_curves(prepared, "HEOG"), ("HEOG",),
    )
    written += _peak_panel(out, peak_vs_delta(prepared))
    if all(s.yaw is not None for s in segs):
        written += _curve_panel(
            out, "yaw_class_mean", "Class-mean head yaw", "yaw (normalized)",
            *class_mean_curves(prepared, "IMU"), ("yaw",),
        )
    else:
        logger.warning("no IMU data: skipping the yaw panel")
    if all(s.nemg_env is not None for s in segs):
        written += _curve_panel(
            out, "nemg_class_mean", "Class-mean NEMG RMS", "RMS / baseline",
            *class_mean_curves(prepared, "NEMG"), ("left SCM", "right SCM"),
        )
    else:
        logger.warning("no NEMG data: skipping the NEMG panel")
    return written
