"""CSV emitters for plotting."""

from __future__ import annotations

import csv
from pathlib import Path

from .fields import MatrixField
from .simulate import EnergyCurve, TrajectoryBatch


def _writer(path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fh = path.open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh)


def write_field_csv(field: MatrixField, path) -> Path:
    """Rows ``label, t, i, j, value`` (1-based ``i, j``)."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["label", "t", "i", "j", "value"])
        for row in field.csv_rows():
            w.writerow([row[0], repr(row[1]), row[2], row[3], repr(row[4])])
    return Path(path)


def write_trajectories_csv(batch: TrajectoryBatch, path, dt: float = 1.0) -> Path:
    n, m, r = batch.x.shape[2], batch.y.shape[2], batch.v.shape[1]
    fh, w = _writer(path)
    with fh:
        w.writerow(["traj_id", "k", "time", "label", "t"]
                   + [f"x{i + 1}" for i in range(n)]
                   + [f"y{i + 1}" for i in range(m)]
                   + [f"v{i + 1}" for i in range(r)])
        for j in range(batch.n_traj):
            for k in range(batch.horizon + 1):
                w.writerow([j, k, k * dt, int(batch.labels[j, k]), float(batch.t[j, k])]
                           + batch.x[j, k].tolist() + batch.y[j, k].tolist() + batch.v[k].tolist())
    return Path(path)


def write_energy_csv(curve: EnergyCurve, path, dt: float = 1.0) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["time", "vE", "yE", "ratio"])
        for time, ve, ye, q in curve.rows(dt):
            w.writerow([time, ve, ye, "" if q is None else q])
    return Path(path)


def write_moments_csv(moments, path) -> Path:
    """``moments`` is a ``(steps, n, n)`` array of second moments."""
    fh, w = _writer(path)
    with fh:
        w.writerow(["k", "i", "j", "value"])
        for k, M in enumerate(moments):
            for i in range(M.shape[0]):
                for j in range(M.shape[1]):
                    w.writerow([k, i + 1, j + 1, float(M[i, j])])
    return Path(path)
