"""Hot numeric kernels: coupled state/sensitivity propagation.

Two propagator families cover every matrix-defined system in the package:

* a classical fixed-step RK4 loop for right-hand sides that are affine in the
  state with an additive control term (``dy = F y + G eps``, sensitivity
  sources either ``S_j y`` or ``S_j eps``),
* an exponential midpoint propagator for bilinear systems
  (``dy = (P + eps Q) y``).  For piecewise-constant controls aligned with the
  step grid the per-step flow ``expm(dt (P + eps Q))`` is exact, and for
  skew-symmetric generators it is orthogonal, so the state norm is preserved
  to machine precision at any step size.  Sensitivities use per-step variation
  of constants with a Simpson rule (local error O(dt^5), same order as RK4).

Every kernel is written once in numba-compatible numpy.  When numba is
importable and the environment variable OPIDENT_NUMBA is not "0", the module
swaps in @njit-compiled versions at import time; otherwise the plain numpy
functions run as-is.  ``benchmarks/bench_kernels.py`` times both paths.

The control argument ``eps_step`` holds one value per integration step,
sampled at the step midpoint (exact for piecewise-constant signals whose
segments contain whole steps).
"""

import os

import numpy as np

# Sensitivity source kinds (direction matrix S_j enters the linearized system as):
SRC_STATE = 0          # S_j @ y(t)            (unknown drift)
SRC_CONTROL = 1        # S_j @ eps(t)          (unknown additive control matrix)
SRC_STATE_SCALED = 2   # eps(t) * (S_j @ y(t)) (unknown bilinear control matrix)

_PADE13_THETA = 5.371920351148152

_PADE13_B = (
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0,
    670442572800.0, 33522128640.0, 1323241920.0, 40840800.0,
    960960.0, 16380.0, 182.0, 1.0,
)


def _expm_pade_py(A):
    """Matrix exponential by scaling-and-squaring with a degree-13 Pade core."""
    n = A.shape[0]
    nrm = 0.0
    for j in range(n):
        s = 0.0
        for i in range(n):
            s += abs(A[i, j])
        if s > nrm:
            nrm = s
    s_pow = 0
    if nrm > _PADE13_THETA:
        s_pow = int(np.ceil(np.log2(nrm / _PADE13_THETA)))
    As = A / (2.0 ** s_pow)
    b = _PADE13_B
    ident = np.eye(n)
    A2 = As @ As
    A4 = A2 @ A2
    A6 = A2 @ A4
    U = As @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
              + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    R = np.linalg.solve(V - U, V + U)
    for _ in range(s_pow):
        R = R @ R
    return R


def _affine_rhs(F, ge, sources, src_kind, e, W, out):
    """out = F W^T (rowwise) plus the control injection and sensitivity sources.

    Row 0 of W is the base state, rows 1.. are sensitivities.  Explicit loops
    beat matmul dispatch for the tiny matrices this package works with.
    """
    rows, n = W.shape
    n_sens = sources.shape[0]
    m = e.shape[0]
    for r in range(rows):
        for i in range(n):
            s = 0.0
            for c in range(n):
                s += F[i, c] * W[r, c]
            out[r, i] = s
    for i in range(n):
        out[0, i] += ge[i]
    if src_kind == SRC_STATE:
        for j in range(n_sens):
            for i in range(n):
                s = 0.0
                for c in range(n):
                    s += sources[j, i, c] * W[0, c]
                out[1 + j, i] += s
    else:
        for j in range(n_sens):
            for i in range(n):
                s = 0.0
                for c in range(m):
                    s += sources[j, i, c] * e[c]
                out[1 + j, i] += s


def _rk4_coupled_py(F, G, sources, src_kind, eps_step, y0, dt, n_steps):
    """RK4 on the coupled system dy = F y + G eps, d(dy_j) = F dy_j + source_j.

    Returns (ys, dy_final, fail_step): the state trajectory on the full grid,
    the K sensitivity rows at the final time, and -1 on success or the index
    of the first step producing a non-finite state.
    """
    n = y0.shape[0]
    rows = sources.shape[0] + 1
    m = G.shape[1]
    Z = np.zeros((rows, n))
    Z[0] = y0
    ys = np.empty((n_steps + 1, n))
    ys[0] = y0
    k1 = np.empty((rows, n))
    k2 = np.empty((rows, n))
    k3 = np.empty((rows, n))
    k4 = np.empty((rows, n))
    W = np.empty((rows, n))
    ge = np.empty(n)
    for i in range(n_steps):
        e = eps_step[i]
        for r in range(n):
            s = 0.0
            for c in range(m):
                s += G[r, c] * e[c]
            ge[r] = s
        _affine_rhs(F, ge, sources, src_kind, e, Z, k1)
        for r in range(rows):
            for c in range(n):
                W[r, c] = Z[r, c] + 0.5 * dt * k1[r, c]
        _affine_rhs(F, ge, sources, src_kind, e, W, k2)
        for r in range(rows):
            for c in range(n):
                W[r, c] = Z[r, c] + 0.5 * dt * k2[r, c]
        _affine_rhs(F, ge, sources, src_kind, e, W, k3)
        for r in range(rows):
            for c in range(n):
                W[r, c] = Z[r, c] + dt * k3[r, c]
        _affine_rhs(F, ge, sources, src_kind, e, W, k4)
        bad = False
        for r in range(rows):
            for c in range(n):
                Z[r, c] += (dt / 6.0) * (k1[r, c] + 2.0 * k2[r, c]
                                         + 2.0 * k3[r, c] + k4[r, c])
                if not np.isfinite(Z[r, c]):
                    bad = True
        if bad:
            return ys, Z[1:].copy(), i
        ys[i + 1] = Z[0]
    return ys, Z[1:].copy(), -1


def _expm_prop_coupled_py(P, Q, sources, src_kind, eps_step, y0, dt, n_steps):
    """Exponential midpoint propagation of dy = (P + eps Q) y with sensitivities.

    Per step with control value e: y <- E y where E = expm(dt (P + e Q)),
    and dy_j <- E dy_j + Simpson(e^{(dt-s)F} S_j e^{sF} y) (scaled by e for
    SRC_STATE_SCALED sources).  E is recomputed only when e changes.
    """
    n = y0.shape[0]
    n_sens = sources.shape[0]
    ys = np.empty((n_steps + 1, n))
    ys[0] = y0
    dY = np.zeros((n_sens, n))
    y = y0.copy()
    e_prev = 0.0
    have_prop = False
    Eh = np.eye(n)
    E = np.eye(n)
    u1 = np.empty(n)
    u2 = np.empty(n)
    w0 = np.empty(n)
    w1 = np.empty(n)
    w2 = np.empty(n)
    new = np.empty(n)
    for i in range(n_steps):
        e = eps_step[i, 0]
        if not have_prop or e != e_prev:
            Eh = _expm_pade((P + e * Q) * (0.5 * dt))
            E = Eh @ Eh
            e_prev = e
            have_prop = True
        for r in range(n):
            s1 = 0.0
            s2 = 0.0
            for c in range(n):
                s1 += Eh[r, c] * y[c]
                s2 += E[r, c] * y[c]
            u1[r] = s1
            u2[r] = s2
        for j in range(n_sens):
            # w0 = S y, w1 = S u1, w2 = S u2
            for r in range(n):
                a0 = 0.0
                a1 = 0.0
                a2 = 0.0
                for c in range(n):
                    a0 += sources[j, r, c] * y[c]
                    a1 += sources[j, r, c] * u1[c]
                    a2 += sources[j, r, c] * u2[c]
                w0[r] = a0
                w1[r] = a1
                w2[r] = a2
            scale = dt / 6.0
            if src_kind == SRC_STATE_SCALED:
                scale *= e
            # dY[j] <- E dY[j] + scale * (E w0 + 4 Eh w1 + w2)
            for r in range(n):
                s = 0.0
                for c in range(n):
                    s += E[r, c] * (dY[j, c] + scale * w0[c]) \
                        + 4.0 * scale * Eh[r, c] * w1[c]
                new[r] = s + scale * w2[r]
            for r in range(n):
                dY[j, r] = new[r]
        bad = False
        for r in range(n):
            y[r] = u2[r]
            if not np.isfinite(y[r]):
                bad = True
        if bad:
            return ys, dY, i
        ys[i + 1] = y
    return ys, dY, -1


def _numba_enabled():
    flag = os.environ.get("OPIDENT_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "no", "off")


USING_NUMBA = False
_expm_pade = _expm_pade_py
_affine_rhs_impl = _affine_rhs
rk4_coupled = _rk4_coupled_py
expm_prop_coupled = _expm_prop_coupled_py

if _numba_enabled():
    try:
        from numba import njit
    except ImportError:
        pass
    else:
        # the outer kernels resolve the _expm_pade / _affine_rhs globals at
        # first compile, so the jitted versions must be bound before that.
        _expm_pade = njit(cache=True, nogil=True)(_expm_pade_py)
        _affine_rhs = njit(cache=True, nogil=True)(_affine_rhs_impl)
        rk4_coupled = njit(cache=True, nogil=True)(_rk4_coupled_py)
        expm_prop_coupled = njit(cache=True, nogil=True)(_expm_prop_coupled_py)
        USING_NUMBA = True


def rk4_general_coupled(g, gprime, G, sources, eps_step, y0, dt, n_steps):
    """RK4 for dy = g(y) + G eps with sensitivities d(dy_j) = g'(y) dy_j + S_j eps.

    Takes Python callables, so this path never runs under numba.
    """
    n = y0.shape[0]
    n_sens = len(sources)
    Z = np.zeros((n_sens + 1, n))
    Z[0] = y0
    ys = np.empty((n_steps + 1, n))
    ys[0] = y0

    def rhs(W, e):
        dW = np.empty_like(W)
        y = W[0]
        dW[0] = g(y) + G @ e
        if n_sens:
            gy = gprime(y)
            for j in range(n_sens):
                dW[1 + j] = gy @ W[1 + j] + sources[j] @ e
        return dW

    for i in range(n_steps):
        e = eps_step[i]
        k1 = rhs(Z, e)
        k2 = rhs(Z + (0.5 * dt) * k1, e)
        k3 = rhs(Z + (0.5 * dt) * k2, e)
        k4 = rhs(Z + dt * k3, e)
        Z = Z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(Z)):
            return ys, Z[1:].copy(), i
        ys[i + 1] = Z[0]
    return ys, Z[1:].copy(), -1
