"""PV capacity profiles: CSV ingestion and a seeded synthetic generator."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, StructuralError


@dataclass(frozen=True, eq=False)
class PvProfileSet:
    """Per-slot PV capacity, shape (T, N)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or 0 in m.shape:
            raise StructuralError(f"PV matrix must be 2-D and non-empty, got shape {m.shape}")
        if np.any(~(m >= 0)):
            raise DataError("PV entries must be nonnegative and finite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def T(self):
        return self.matrix.shape[0]

    @property
    def N(self):
        return self.matrix.shape[1]

    def agent(self, i):
        return self.matrix[:, i]

    def __eq__(self, other):
        return isinstance(other, PvProfileSet) and np.array_equal(self.matrix, other.matrix)

    __hash__ = None


def load_pv_csv(path, T=None, N=None):
    """Read ``slot,agent_1,...,agent_N`` rows. Row numbers in errors count the header as 1."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file", row=1)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0] != "slot":
        raise DataError(f"{path}: header must start with 'slot' followed by agent columns",
                        row=1)
    for j, h in enumerate(header[1:], start=1):
        if h != f"agent_{j}":
            raise DataError(f"{path}: header column {j + 1} is '{h}', expected 'agent_{j}'",
                            row=1, column=h)
    n_agents = len(header) - 1
    data = []
    for r, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != n_agents + 1:
            raise DataError(f"{path}: row {r} has {len(row)} fields, expected {n_agents + 1}",
                            row=r)
        vals = []
        for j, cell in enumerate(row[1:], start=1):
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"{path}: row {r}, column agent_{j}: '{cell}' is not a number",
                                row=r, column=f"agent_{j}") from None
            if not np.isfinite(v) or v < 0:
                raise DataError(f"{path}: row {r}, column agent_{j}: negative or non-finite "
                                f"value {cell}", row=r, column=f"agent_{j}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise DataError(f"{path}: no data rows", row=2)
    if T is not None and len(data) != T:
        raise DataError(f"{path}: {len(data)} data rows but the configuration has T={T}")
    if N is not None and n_agents != N:
        raise DataError(f"{path}: {n_agents} agent columns but the configuration has N={N}")
    return PvProfileSet(np.array(data))


def save_pv_csv(pv, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["slot"] + [f"agent_{j + 1}" for j in range(pv.N)])
        for t in range(pv.T):
            w.writerow([t + 1] + [repr(float(v)) for v in pv.matrix[t]])


def generate_pv_synthetic(seed, N, T, peak_mean=1.0, peak_spread=0.5, peak_slot=None,
                          width=None, daylight=None):
    """Bell-shaped daily PV profiles with per-agent amplitude drawn uniformly.

    With T=24 the bell peaks at slot index 12 (midday) with a width of 2.5
    slots and is zero outside slots 6..18. For other T these scale with T.
    """
    if T < 1 or N < 1:
        raise StructuralError("need T >= 1 and N >= 1")
    if peak_spread < 0 or peak_mean - peak_spread < 0:
        raise StructuralError("amplitudes must stay nonnegative")
    scale = T / 24.0
    peak_slot = 12 * scale if peak_slot is None else peak_slot
    width = max(2.5 * scale, 1e-9) if width is None else width
    lo, hi = (6 * scale, 18 * scale) if daylight is None else daylight
    rng = np.random.default_rng(seed)
    amp = rng.uniform(peak_mean - peak_spread, peak_mean + peak_spread, size=N)
    t = np.arange(T, dtype=float)
    shape = np.exp(-((t - peak_slot) ** 2) / (2 * width ** 2))
    shape[(t < lo) | (t > hi)] = 0.0
    return PvProfileSet(np.outer(shape, amp))
