"""Piecewise-constant control fields.

A field is an ``(M, K)`` table: row ``m`` is control ``m``, column ``p`` is
time slice ``p``.  Gradients and parameter vectors use the same layout
flattened row-major (control-major).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "RNG_NAME",
    "ControlField",
    "sample_initial_field",
    "fluence",
    "total_fluence",
    "max_amplitude",
    "field_to_csv",
    "field_from_csv",
    "write_field",
    "read_field",
]

RNG_NAME = "numpy.random.Generator(PCG64)"


@dataclass(frozen=True)
class ControlField:
    values: np.ndarray
    T: float

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"field values must be a non-empty (M, K) table, got shape {values.shape}")
        if not self.T > 0:
            raise ValueError(f"total time must be positive, got {self.T}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "T", float(self.T))

    @property
    def n_controls(self) -> int:
        return self.values.shape[0]

    @property
    def n_slices(self) -> int:
        return self.values.shape[1]

    @property
    def dt(self) -> float:
        return self.T / self.n_slices

    @property
    def times(self) -> np.ndarray:
        """Slice boundaries ``t_0 = 0, ..., t_K = T``."""
        return np.linspace(0.0, self.T, self.n_slices + 1)

    def flat(self) -> np.ndarray:
        return self.values.ravel().copy()

    def with_values(self, values) -> "ControlField":
        return ControlField(np.reshape(values, self.values.shape), self.T)

    def __call__(self, t):
        """Evaluate ``f_m(t)``; slice ``p`` covers ``[t_p, t_{p+1})`` and T is in the last slice."""
        idx = np.clip(np.floor(np.asarray(t) / self.dt).astype(int), 0, self.n_slices - 1)
        return self.values[:, idx]

    def __eq__(self, other):
        if not isinstance(other, ControlField):
            return NotImplemented
        return self.T == other.T and np.array_equal(self.values, other.values)

    __hash__ = None


def sample_initial_field(n_controls: int, n_slices: int, T: float, delta: float, seed) -> ControlField:
    """Independent Gaussian amplitudes with mean 0 and standard deviation ``delta``."""
    if not delta > 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if n_controls < 1 or n_slices < 1:
        raise ValueError("need at least one control and one slice")
    rng = np.random.default_rng(seed)
    return ControlField(rng.normal(0.0, delta, size=(n_controls, n_slices)), T)


def fluence(field: ControlField, m: int | None = None):
    """Squared L2 norm ``dt * sum_p f_mp**2`` of control ``m`` (all controls if None)."""
    per_control = field.dt * np.sum(field.values**2, axis=1)
    if m is None:
        return per_control
    if not 0 <= m < field.n_controls:
        raise IndexError(f"control index {m} out of range")
    return float(per_control[m])


def total_fluence(field: ControlField) -> float:
    return float(np.sum(fluence(field)))


def max_amplitude(field: ControlField) -> float:
    return float(np.max(np.abs(field.values)))


def field_to_csv(field: ControlField) -> str:
    """Plain-text table, one row per control; ``repr`` keeps every bit."""
    buf = io.StringIO()
    buf.write(f"# M={field.n_controls} K={field.n_slices} T={field.T!r}\n")
    for row in field.values:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    return buf.getvalue()


def field_from_csv(text: str) -> ControlField:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing field header")
    header = dict(item.split("=") for item in lines[0][1:].split())
    M, K, T = int(header["M"]), int(header["K"]), float(header["T"])
    values = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    if values.shape != (M, K):
        raise ValueError(f"header says {M}x{K}, table is {values.shape}")
    return ControlField(values, T)


def write_field(field: ControlField, path) -> None:
    Path(path).write_text(field_to_csv(field))


def read_field(path) -> ControlField:
    return field_from_csv(Path(path).read_text())
