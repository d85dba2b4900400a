"""Deterministic CSV/JSON writers."""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


def fmt(x) -> str:
    """Shortest round-trip text for a number."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def _default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_default) + "\n")
    return path


def trajectory_rows(traj):
    """Rows ``(l, k, t, eta..., v..., iterations, residual)``.

    The first row is the initial state, carrying ``eta_star`` as velocity.
    Every ``save_stride``-th step is kept, and the final step always is.
    """
    p = traj.params
    yield (0, 0, 0.0, *traj.states[0, 0], *traj.eta_star, 0, 0.0)
    last = p.steps
    for ell in range(p.M):
        for k in range(1, p.N + 1):
            j = ell * p.N + k
            if j % p.save_stride and j != last:
                continue
            v = (traj.states[ell, k] - traj.states[ell, k - 1]) / p.tau
            yield (ell, k, j * p.tau, *traj.states[ell, k], *v,
                   int(traj.iterations[ell, k]), float(traj.residuals[ell, k]))


def trajectory_header(dim: int) -> list[str]:
    return (["l", "k", "t"] + [f"eta_{i}" for i in range(dim)]
            + [f"v_{i}" for i in range(dim)] + ["iterations", "residual"])


def write_trajectory_csv(traj, path) -> Path:
    return write_csv(path, trajectory_header(traj.dim), trajectory_rows(traj))
