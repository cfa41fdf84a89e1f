"""End-point error, PCK and PCF over per-joint Euclidean distances."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from . import kernels
from .errors import ShapeError

N_JOINTS = 21


def joint_errors(pred, gt, dim: int = 3) -> np.ndarray:
    """Distances [frames x joints] between predicted and ground-truth keypoints.

    Inputs are flat [frames x (joints * dim)] arrays or [frames x joints x dim].
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    if pred.ndim == 3:
        dim = pred.shape[2]
        pred = pred.reshape(pred.shape[0], -1)
        gt = gt.reshape(gt.shape[0], -1)
    if pred.ndim != 2 or pred.shape[1] % dim:
        raise ShapeError(f"cannot split shape {pred.shape} into {dim}-d joints")
    return kernels.joint_errors(pred, gt, dim)


def _check(errors) -> np.ndarray:
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("no joint errors to summarise")
    return e


def mean_epe(errors) -> float:
    return float(np.mean(_check(errors)))


def median_epe(errors) -> float:
    return float(np.median(_check(errors)))


def _thresholds(thresholds) -> np.ndarray:
    d = np.atleast_1d(np.asarray(thresholds, dtype=np.float64))
    if np.any(d < 0):
        raise ValueError("thresholds must be non-negative")
    return d


def pck(errors, thresholds) -> np.ndarray:
    """Fraction of all (frame, joint) errors <= d, per threshold d."""
    return kernels.fraction_at_most(_check(errors).ravel(), _thresholds(thresholds))


def pcf(errors, thresholds) -> np.ndarray:
    """Fraction of frames whose worst joint error is <= d, per threshold d."""
    e = _check(errors)
    worst = e.reshape(e.shape[0], -1).max(axis=1)
    return kernels.fraction_at_most(worst, _thresholds(thresholds))


def threshold_grid(spec: str) -> np.ndarray:
    """Parse ``"start:stop:count"`` (inclusive linspace) or a comma list of values."""
    spec = spec.strip()
    if ":" in spec:
        start, stop, count = spec.split(":")
        return np.linspace(float(start), float(stop), int(count))
    return np.array([float(v) for v in spec.split(",") if v.strip()])


def write_curve(path, thresholds, values, header=("threshold", "value")) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for d, v in zip(thresholds, values):
            w.writerow([repr(float(d)), repr(float(v))])


def read_curve(path) -> tuple[np.ndarray, np.ndarray]:
    rows = list(csv.reader(Path(path).read_text().splitlines()))[1:]
    arr = np.array([[float(a), float(b)] for a, b in rows])
    return arr[:, 0], arr[:, 1]


def write_table(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    """Rows-by-columns CSV; missing cells are written as ``NA``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            cells = []
            for c in columns:
                v = row.get(c)
                if v is None:
                    cells.append("NA")
                elif isinstance(v, float):
                    cells.append(repr(v))
                else:
                    cells.append(str(v))
            w.writerow(cells)
