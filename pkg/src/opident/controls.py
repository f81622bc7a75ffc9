"""Piecewise-constant control signals and the admissible box.

A signal holds one value row per segment of a uniform partition of [0, T].
Segments are right-open; evaluation at t = T returns the last segment.  The
admissible set is a per-channel box that must contain zero in its interior.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NonFiniteError

DEFAULT_N_SEGMENTS = 100


@dataclass(frozen=True)
class AdmissibleBox:
    """Per-channel bounds; zero must be an interior point."""

    lower: float = -1.0
    upper: float = 1.0

    def __post_init__(self):
        if not (self.lower < 0.0 < self.upper):
            raise ValueError(
                f"box must contain 0 in its interior, got [{self.lower}, {self.upper}]")


@dataclass(frozen=True)
class ControlSignal:
    """Piecewise-constant vector-valued control on a uniform grid over [0, T]."""

    values: np.ndarray  # (n_segments, n_channels)
    horizon: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] < 1:
            raise DimensionError(f"values must be (n_segments, n_channels), got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("control values contain non-finite entries")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "values", v)

    @property
    def n_segments(self):
        return self.values.shape[0]

    @property
    def n_channels(self):
        return self.values.shape[1]

    def segment_index(self, t):
        if t < 0 or t > self.horizon:
            raise ValueError(f"t={t} outside [0, {self.horizon}]")
        return min(int(t / self.horizon * self.n_segments), self.n_segments - 1)

    def __call__(self, t):
        return self.values[self.segment_index(t)].copy()


def evaluate(signal, t):
    """Value on the segment containing t (right-open; t = T maps to the last)."""
    return signal(t)


def constant(c, horizon, n_segments=DEFAULT_N_SEGMENTS):
    c = np.atleast_1d(np.asarray(c, dtype=float))
    return ControlSignal(np.tile(c, (n_segments, 1)), horizon)


def zero(horizon, n_segments=DEFAULT_N_SEGMENTS, n_channels=1):
    return ControlSignal(np.zeros((n_segments, n_channels)), horizon)


def project(signal, box):
    """Clamp every entry into [box.lower, box.upper]."""
    return ControlSignal(np.clip(signal.values, box.lower, box.upper), signal.horizon)


def l2_norm(signal):
    """L2(0,T) norm: sqrt(sum_i ||v_i||^2 * T / n_segments)."""
    return float(np.sqrt(np.sum(signal.values ** 2) * signal.horizon / signal.n_segments))


def sample_midpoints(signal, n_steps):
    """Signal values at the n_steps integration-step midpoints, shape (n_steps, M)."""
    t_mid = (np.arange(n_steps) + 0.5) * (signal.horizon / n_steps)
    idx = np.minimum((t_mid / signal.horizon * signal.n_segments).astype(int),
                     signal.n_segments - 1)
    return np.ascontiguousarray(signal.values[idx])


def save_signal(signal, path):
    """Write one CSV row per segment; the header records horizon and shape."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# horizon={signal.horizon!r} n_segments={signal.n_segments} "
                 f"n_channels={signal.n_channels}\n")
        for row in signal.values:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def load_signal(path):
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# horizon="):
            raise ValueError(f"{path}: not a control-signal CSV")
        fields = dict(part.split("=") for part in header[2:].split())
        horizon = float(fields["horizon"])
        rows = [[float(x) for x in line.strip().split(",")]
                for line in fh if line.strip()]
    return ControlSignal(np.array(rows), horizon)
