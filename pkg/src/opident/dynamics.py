"""System families, basis sets, and the forward/linearized ODE solves.

Families
--------
``linear_drift``           dy = A(alpha) y + B eps     unknown drift; y(0) = 0
``linear_control_matrix``  dy = D y + A(alpha) eps     unknown control matrix
``bilinear_drift``         dy = (A(alpha) + eps B) y   unknown skew drift; M = 1
``bilinear_control``       dy = (D + eps A(alpha)) y   unknown skew control matrix
``schrodinger_real``       bilinear_control obtained from a complex embedding
``general_nonlinear``      dy = g(y) + A(alpha) eps    user-supplied g and g'

The linearized system couples the base trajectory with one sensitivity per
direction matrix: the direction enters as a source ``S y`` for unknown-drift
families, ``S eps`` for additive control matrices, and ``eps S y`` for
bilinear control matrices.  Linear and general-nonlinear families integrate
with fixed-step RK4; bilinear families use an exponential midpoint propagator
(exact per step for piecewise-constant controls, orthogonal for skew
generators, hence norm preserving to machine precision).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels, controls, linalg
from .errors import (DimensionError, DivergenceError, NonFiniteError,
                     UnreachableTargetError)

LINEAR_DRIFT = "linear_drift"
LINEAR_CONTROL_MATRIX = "linear_control_matrix"
BILINEAR_DRIFT = "bilinear_drift"
BILINEAR_CONTROL = "bilinear_control"
SCHRODINGER_REAL = "schrodinger_real"
GENERAL_NONLINEAR = "general_nonlinear"

_BILINEAR = (BILINEAR_DRIFT, BILINEAR_CONTROL, SCHRODINGER_REAL)


def default_n_steps(horizon):
    """1000 steps for horizons up to 10, 5000 beyond (keeps RK4 error small)."""
    return 1000 if horizon <= 10.0 else 5000


@dataclass(frozen=True)
class SystemModel:
    family: str
    dim: int
    observer: np.ndarray          # (P, N)
    y0: np.ndarray                # (N,)
    horizon: float
    known: np.ndarray = None      # B / D depending on family
    g: callable = None            # general_nonlinear only
    gprime: callable = None

    def __post_init__(self):
        c = linalg._as_matrix(self.observer, "observer")
        if c.shape[1] != self.dim:
            raise DimensionError(f"observer has {c.shape[1]} columns, state dim is {self.dim}")
        y0 = linalg._as_vector(self.y0, "y0")
        if y0.shape[0] != self.dim:
            raise DimensionError(f"y0 has length {y0.shape[0]}, state dim is {self.dim}")
        if self.horizon <= 0:
            raise ValueError(f"horizon must be positive, got {self.horizon}")
        object.__setattr__(self, "observer", c)
        object.__setattr__(self, "y0", y0)
        if self.family == GENERAL_NONLINEAR:
            if self.g is None or self.gprime is None:
                raise ValueError("general_nonlinear needs g and gprime callables")
        else:
            k = linalg._as_matrix(self.known, "known matrix")
            if k.shape[0] != self.dim:
                raise DimensionError(f"known matrix has {k.shape[0]} rows, state dim is {self.dim}")
            if self.family != LINEAR_DRIFT and k.shape[1] != self.dim:
                raise DimensionError(f"known matrix must be square for {self.family}")
            object.__setattr__(self, "known", k)
        if self.family == LINEAR_DRIFT and np.any(self.y0 != 0.0):
            raise ValueError("linear_drift requires y0 = 0")
        if self.family in _BILINEAR and not linalg.is_skew(self.known):
            raise ValueError(f"{self.family} requires a skew-symmetric known matrix")

    @property
    def n_channels(self):
        if self.family == LINEAR_DRIFT:
            return self.known.shape[1]
        if self.family in _BILINEAR:
            return 1
        return self.dim


def linear_drift(b, observer, horizon):
    b = linalg._as_matrix(b, "B")
    return SystemModel(LINEAR_DRIFT, b.shape[0], observer,
                       np.zeros(b.shape[0]), horizon, known=b)


def linear_control_matrix(drift, observer, y0, horizon):
    drift = linalg._as_matrix(drift, "drift")
    return SystemModel(LINEAR_CONTROL_MATRIX, drift.shape[0], observer,
                       y0, horizon, known=drift)


def bilinear_drift(b, observer, y0, horizon):
    b = linalg._as_matrix(b, "B")
    return SystemModel(BILINEAR_DRIFT, b.shape[0], observer, y0, horizon, known=b)


def bilinear_control(drift, observer, y0, horizon, family=BILINEAR_CONTROL):
    drift = linalg._as_matrix(drift, "drift")
    return SystemModel(family, drift.shape[0], observer, y0, horizon, known=drift)


def general_nonlinear(g, gprime, observer, y0, horizon):
    y0 = linalg._as_vector(y0, "y0")
    return SystemModel(GENERAL_NONLINEAR, y0.shape[0], observer, y0, horizon,
                       g=g, gprime=gprime)


@dataclass(frozen=True)
class BasisSet:
    """Ordered, linearly independent N x N matrices spanning the unknown."""

    elements: np.ndarray                 # (K, N, N)
    shift: np.ndarray = None             # optional default expansion point

    def __post_init__(self):
        el = np.asarray(self.elements, dtype=float)
        if el.ndim != 3 or el.shape[1] != el.shape[2]:
            raise DimensionError(f"elements must be (K, N, N), got {el.shape}")
        if not np.all(np.isfinite(el)):
            raise NonFiniteError("basis elements contain non-finite entries")
        k, n = el.shape[0], el.shape[1]
        if k > n * n:
            raise ValueError(f"K={k} exceeds N^2={n * n}")
        flat = el.reshape(k, -1)
        if linalg.numerical_rank(flat) < k:
            raise ValueError("basis elements are linearly dependent")
        object.__setattr__(self, "elements", np.ascontiguousarray(el))
        shift = np.zeros(k) if self.shift is None else linalg._as_vector(self.shift, "shift")
        if shift.shape[0] != k:
            raise DimensionError(f"shift has length {shift.shape[0]}, basis size is {k}")
        object.__setattr__(self, "shift", shift)

    @property
    def size(self):
        return self.elements.shape[0]

    @property
    def dim(self):
        return self.elements.shape[1]

    def combine(self, alpha):
        alpha = linalg._as_vector(alpha, "alpha")
        if alpha.shape[0] != self.size:
            raise DimensionError(f"alpha has length {alpha.shape[0]}, basis size is {self.size}")
        return np.tensordot(alpha, self.elements, axes=1)


def canonical_basis(n):
    """The K = n^2 unit matrices E_ij in row-major order."""
    el = np.eye(n * n).reshape(n * n, n, n)
    return BasisSet(el)


def random_basis(n, size, rng):
    """size linearly independent standard-normal n x n matrices."""
    while True:
        el = rng.standard_normal((size, n, n))
        if linalg.numerical_rank(el.reshape(size, -1)) == size:
            return BasisSet(el)


def validate_basis(model, basis, require_skew=False):
    """Dimension check; with require_skew also reject non-skew elements.

    Skew generators make bilinear trajectories norm preserving; the analytic
    2x2 bilinear example deliberately uses symmetric elements, so skewness is
    only enforced where a construction guarantees it (e.g. the Schrodinger
    embedding).
    """
    if basis.dim != model.dim:
        raise DimensionError(f"basis dim {basis.dim} != model dim {model.dim}")
    if require_skew:
        for j, el in enumerate(basis.elements):
            if not linalg.is_skew(el):
                raise ValueError(f"basis element {j} is not skew-symmetric to 1e-12")


def is_norm_preserving(model, basis):
    """True when the family and all generators are skew (norm-preserving flow)."""
    if model.family not in _BILINEAR:
        return False
    return linalg.is_skew(model.known) and all(linalg.is_skew(el) for el in basis.elements)


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray    # (n_steps + 1,)
    states: np.ndarray   # (n_steps + 1, N)

    @property
    def final_state(self):
        return self.states[-1]


def _check_signal(model, eps):
    if abs(eps.horizon - model.horizon) > 1e-12 * max(1.0, model.horizon):
        raise ValueError(f"control horizon {eps.horizon} != model horizon {model.horizon}")
    if eps.n_channels != model.n_channels:
        raise DimensionError(
            f"control has {eps.n_channels} channels, model expects {model.n_channels}")


def solve_coupled_matrix(model, a_matrix, directions, eps, n_steps):
    """Integrate the base system together with one sensitivity per direction.

    ``a_matrix`` takes the place of the unknown operator A(alpha);
    ``directions`` is a (K, N, N) array of direction matrices (K may be 0).
    Returns (Trajectory, dy_final) with dy_final of shape (K, N).
    """
    _check_signal(model, eps)
    a_matrix = np.ascontiguousarray(linalg._as_matrix(a_matrix, "A"))
    directions = np.ascontiguousarray(
        np.asarray(directions, dtype=float).reshape(-1, model.dim, model.dim))
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    dt = model.horizon / n_steps
    eps_step = controls.sample_midpoints(eps, n_steps)
    y0 = np.ascontiguousarray(model.y0)

    if model.family == LINEAR_DRIFT:
        ys, dyt, fail = _kernels.rk4_coupled(
            a_matrix, np.ascontiguousarray(model.known),
            directions, _kernels.SRC_STATE, eps_step, y0, dt, n_steps)
    elif model.family == LINEAR_CONTROL_MATRIX:
        ys, dyt, fail = _kernels.rk4_coupled(
            np.ascontiguousarray(model.known), a_matrix,
            directions, _kernels.SRC_CONTROL, eps_step, y0, dt, n_steps)
    elif model.family == BILINEAR_DRIFT:
        ys, dyt, fail = _kernels.expm_prop_coupled(
            a_matrix, np.ascontiguousarray(model.known),
            directions, _kernels.SRC_STATE, eps_step, y0, dt, n_steps)
    elif model.family in (BILINEAR_CONTROL, SCHRODINGER_REAL):
        ys, dyt, fail = _kernels.expm_prop_coupled(
            np.ascontiguousarray(model.known), a_matrix,
            directions, _kernels.SRC_STATE_SCALED, eps_step, y0, dt, n_steps)
    elif model.family == GENERAL_NONLINEAR:
        ys, dyt, fail = _kernels.rk4_general_coupled(
            model.g, model.gprime, a_matrix, list(directions), eps_step, y0, dt, n_steps)
    else:
        raise ValueError(f"unknown family {model.family!r}")

    if fail >= 0:
        raise DivergenceError(fail, fail * dt)
    times = np.linspace(0.0, model.horizon, n_steps + 1)
    return Trajectory(times, ys), dyt


def solve_coupled(model, basis, alpha, directions, eps, n_steps):
    """solve_coupled_matrix with the unknown expanded as A(alpha) over basis."""
    return solve_coupled_matrix(model, basis.combine(alpha), directions, eps, n_steps)


def solve_forward_matrix(model, a_matrix, eps, n_steps=None):
    n_steps = n_steps or default_n_steps(model.horizon)
    traj, _ = solve_coupled_matrix(model, a_matrix,
                                   np.empty((0, model.dim, model.dim)), eps, n_steps)
    return traj


def solve_forward(model, basis, alpha, eps, n_steps=None):
    """Forward solve; returns the Trajectory of the base state."""
    n_steps = n_steps or default_n_steps(model.horizon)
    traj, _ = solve_coupled(model, basis, alpha,
                            np.empty((0, model.dim, model.dim)), eps, n_steps)
    return traj


def solve_linearized(model, basis, alpha_lin, direction_index, eps, n_steps=None):
    """Sensitivity at final time for one basis direction (0-based index)."""
    n_steps = n_steps or default_n_steps(model.horizon)
    if not 0 <= direction_index < basis.size:
        raise DimensionError(f"direction index {direction_index} outside 0..{basis.size - 1}")
    _, dyt = solve_coupled(model, basis, alpha_lin,
                           basis.elements[direction_index][None], eps, n_steps)
    return dyt[0]


def observe(model, y):
    return model.observer @ np.asarray(y, dtype=float)


def simulate_data(model, basis, alpha_star, eps_list, n_steps=None):
    """Noise-free observations C y(A(alpha_star), eps; T), one per control."""
    n_steps = n_steps or default_n_steps(model.horizon)
    out = []
    for eps in eps_list:
        traj = solve_forward(model, basis, alpha_star, eps, n_steps)
        out.append(observe(model, traj.final_state))
    return out


def synth_transfer_control(a, b, target, t0, n_segments=200, panels=400, tol=1e-8):
    """Minimum-energy style transfer control reaching `target` at time t0.

    Uses eps(t) = B^T exp((t0 - t) A^T) nu with the Gramian solve
    W_c(0, t0) nu = target, sampled onto a piecewise-constant grid.
    """
    a = linalg._as_matrix(a, "A")
    b = linalg._as_matrix(b, "B")
    target = linalg._as_vector(target, "target")
    if t0 <= 0:
        raise ValueError("t0 must be positive")
    kal = linalg.controllability_matrix(a, b)
    x, *_ = np.linalg.lstsq(kal, target, rcond=None)
    if np.linalg.norm(kal @ x - target) > tol * max(1.0, np.linalg.norm(target)):
        raise UnreachableTargetError("target outside the reachable subspace")
    w_gram = linalg.gramian(a, b, t0, panels=panels)
    vals, vecs = np.linalg.eigh(w_gram)
    cut = vals > max(vals[-1], 0.0) * 1e-12
    nu = vecs[:, cut] @ ((vecs[:, cut].T @ target) / vals[cut])
    t_mid = (np.arange(n_segments) + 0.5) * (t0 / n_segments)
    rows = np.empty((n_segments, b.shape[1]))
    for i, t in enumerate(t_mid):
        rows[i] = b.T @ linalg.expm((t0 - t) * a.T) @ nu
    return controls.ControlSignal(rows, t0)
