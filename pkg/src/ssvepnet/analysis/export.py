"""Plot-ready CSV writers."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .phase import PHASE_COLUMNS
from .tsne import Embedding2D

LABEL_COLUMNS = ("class_id", "subject", "block", "segment")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_kernel_spectra(path, freqs, power) -> Path:
    """``kernels_spectrum.csv``: one row per (kernel, frequency bin)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kernel", "frequency_hz", "power"])
        for i, row in enumerate(np.atleast_2d(power)):
            for f, p in zip(freqs, row):
                w.writerow([i, _fmt(f), _fmt(p)])
    return path


def write_tsne_points(path, emb: Embedding2D) -> Path:
    """``tsne_points.csv``: coordinates plus whichever label arrays the embedding carries."""
    path = Path(path)
    cols = [c for c in LABEL_COLUMNS if c in emb.labels]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "x", "y", *cols])
        for i, (x, y) in enumerate(emb.points):
            w.writerow([i, _fmt(x), _fmt(y), *(_fmt(emb.labels[c][i].item()) for c in cols)])
    return path


def write_phase_amp(path, rows) -> Path:
    """``phase_amp.csv`` from :func:`segment_phase_report` rows; missing values are empty cells."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PHASE_COLUMNS)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in PHASE_COLUMNS])
    return path
