"""Dense real matrix kernels used throughout the package.

Matrix exponential, Kalman observability/controllability matrices, numerical
rank, controllability Gramian, Lie-algebra dimension and Frobenius
orthogonalization.  All functions are pure and operate on plain float
ndarrays; inputs with NaN/Inf entries are rejected.
"""

import numpy as np

from . import _kernels
from .errors import DimensionError, NonFiniteError

SKEW_TOL = 1e-12


def _as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return a


def _as_vector(a, name="vector"):
    a = np.asarray(a, dtype=float)
    if a.ndim != 1:
        raise DimensionError(f"{name} must be 1-dimensional, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{name} contains non-finite entries")
    return a


def is_skew(a, tol=SKEW_TOL):
    a = np.asarray(a, dtype=float)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))
    return bool(np.abs(a + a.T).max(initial=0.0) <= tol * scale)


def expm(a):
    """Matrix exponential (scaling-and-squaring, degree-13 Pade core)."""
    a = _as_matrix(a, "expm argument")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expm needs a square matrix, got {a.shape}")
    return _kernels._expm_pade_py(np.ascontiguousarray(a))


def observability_matrix(c, a):
    """Stack [C; CA; ...; CA^(N-1)] for the pair (C, A)."""
    c = _as_matrix(c, "C")
    a = _as_matrix(a, "A")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"A must be square, got {a.shape}")
    if c.shape[1] != n:
        raise DimensionError(f"C has {c.shape[1]} columns, A is {n}x{n}")
    blocks = [c]
    for _ in range(n - 1):
        blocks.append(blocks[-1] @ a)
    return np.vstack(blocks)


def controllability_matrix(a, b):
    """Stack [B, AB, ..., A^(N-1)B] for the pair (A, B)."""
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    n = a.shape[0]
    if a.shape[1] != n:
        raise DimensionError(f"A must be square, got {a.shape}")
    if b.shape[0] != n:
        raise DimensionError(f"B has {b.shape[0]} rows, A is {n}x{n}")
    blocks = [b]
    for _ in range(n - 1):
        blocks.append(a @ blocks[-1])
    return np.hstack(blocks)


def numerical_rank(m, tol=None):
    """Number of singular values above tol (default max(dim)*eps*sigma_max)."""
    m = _as_matrix(m, "matrix")
    if m.size == 0:
        return 0
    s = np.linalg.svd(m, compute_uv=False)
    if tol is None:
        tol = max(m.shape) * np.finfo(float).eps * s[0]
    return int(np.count_nonzero(s > tol))


def smallest_singular_value(m):
    m = _as_matrix(m, "matrix")
    s = np.linalg.svd(m, compute_uv=False)
    return float(s[-1])


def gramian(a, b, horizon, panels=200):
    """Controllability Gramian int_0^T exp(tau A) B B^T exp(tau A^T) dtau.

    Composite Simpson quadrature with at least 200 panels; the result is
    symmetrized before returning.
    """
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"A must be square, got {a.shape}")
    if b.shape[0] != a.shape[0]:
        raise DimensionError(f"B has {b.shape[0]} rows, A is {a.shape[0]}x{a.shape[0]}")
    if horizon <= 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    panels = max(int(panels), 200)
    if panels % 2:
        panels += 1
    h = horizon / panels
    step = expm(a * h)
    prop = np.eye(a.shape[0])
    acc = np.zeros((a.shape[0], a.shape[0]))
    for i in range(panels + 1):
        eb = prop @ b
        w = 1.0 if i in (0, panels) else (4.0 if i % 2 else 2.0)
        acc += w * (eb @ eb.T)
        if i < panels:
            prop = prop @ step
    w_mat = acc * (h / 3.0)
    return 0.5 * (w_mat + w_mat.T)


def lie_algebra_dimension(a, b, max_iters=64, drop_tol=1e-10):
    """Dimension of the matrix Lie algebra generated by two skew matrices.

    Iterated commutators with Frobenius Gram-Schmidt; stops when a full
    bracketing pass adds nothing above drop_tol or the so(N) dimension cap
    N(N-1)/2 is reached.
    """
    a = _as_matrix(a, "A")
    b = _as_matrix(b, "B")
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionError(f"A and B must be square with equal shape, got {a.shape}, {b.shape}")
    if not is_skew(a):
        raise ValueError("A is not skew-symmetric to 1e-12")
    if not is_skew(b):
        raise ValueError("B is not skew-symmetric to 1e-12")
    n = a.shape[0]
    cap = n * (n - 1) // 2

    basis = []

    def try_add(x):
        nrm = np.linalg.norm(x)
        if nrm <= drop_tol:
            return False
        r = x.copy()
        for e in basis:
            r -= np.sum(r * e) * e
        if np.linalg.norm(r) <= drop_tol * nrm:
            return False
        basis.append(r / np.linalg.norm(r))
        return True

    try_add(a)
    try_add(b)
    for _ in range(max_iters):
        if len(basis) >= cap:
            break
        added = False
        snapshot = list(basis)
        for x in snapshot:
            for y in snapshot:
                z = x @ y - y @ x
                if try_add(z):
                    added = True
                if len(basis) >= cap:
                    break
            if len(basis) >= cap:
                break
        if not added:
            break
    return len(basis)


def frobenius_orthogonalize(kept, candidates, drop_tol=1e-10):
    """Project candidates orthogonal (Frobenius) to kept + accepted candidates.

    Candidates whose residual norm falls below drop_tol times their original
    norm are dropped.  Survivors are returned as raw (unnormalized) residuals
    in input order.
    """
    ortho = []
    for m in kept:
        m = _as_matrix(m, "kept element")
        r = m.copy()
        for e in ortho:
            r -= np.sum(r * e) * e
        nrm = np.linalg.norm(r)
        if nrm > drop_tol * max(1.0, np.linalg.norm(m)):
            ortho.append(r / nrm)
    out = []
    for m in candidates:
        m = _as_matrix(m, "candidate element")
        nrm0 = np.linalg.norm(m)
        r = m.copy()
        for e in ortho:
            r -= np.sum(r * e) * e
        if nrm0 == 0.0 or np.linalg.norm(r) < drop_tol * nrm0:
            continue
        out.append(r)
        ortho.append(r / np.linalg.norm(r))
    return out
