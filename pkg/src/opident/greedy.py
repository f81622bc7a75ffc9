"""Greedy design of control sets: LGR, nonlinear GR, and OGR/OLGR.

All three algorithms alternate a *fitting* step (find the combination of
already-handled basis elements that the current controls cannot distinguish
from the next element) and a *splitting* step (find a new control that
distinguishes the two).  LGR works on the linearized system, where fitting has
the closed-form solution beta = G^-1 b on the cumulative Gram matrix; GR works
on the full nonlinear dynamics with every candidate shifted by A(alpha_circ);
OGR adds basis reordering, Frobenius orthogonalization of the remaining
candidates, and a skip-splitting rule that reuses existing controls whenever
some candidate's fitting value stays above tol2.

The shared subproblem solver is a multistart projected quasi-Newton ascent
over the segment values of a piecewise-constant control.  Gradients are exact
quadratic-form gradients whenever the objective is linear in the control
(sensitivity/forward responses for the linear families), and finite
differences over segments otherwise.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as _sciopt

from . import controls as ctl
from . import dynamics as dyn
from . import linalg
from .errors import DivergenceError, RankDeficiencyError

PD_RTOL = 1e-10


@dataclass(frozen=True)
class OptimizerConfig:
    """Multistart box-constrained quasi-Newton settings for the subproblems."""

    multistart: int = 5
    max_iters: int = 200
    grad_tol: float = 1e-8
    fd_step: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if min(self.multistart, self.max_iters) < 1 or min(self.grad_tol, self.fd_step) <= 0:
            raise ValueError("optimizer settings must be positive")


@dataclass(frozen=True)
class WMatrix:
    """Gram matrix of observed sensitivities for one control."""

    matrix: np.ndarray        # (K, K)
    observations: np.ndarray  # (K, P), row j = C dy(A_j, eps; T)


@dataclass
class GreedyStep:
    kind: str                 # init | fit | split | skip
    k: int
    value: float
    beta: np.ndarray = None
    index: int = None         # original element index (OGR)
    lambda_min: float = math.nan
    lambda_max: float = math.nan
    flags: tuple = ()
    near_optima: tuple = ()


@dataclass
class GreedyOutcome:
    algorithm: str
    controls: list
    basis: dyn.BasisSet       # basis in final (possibly reordered) form
    selected_indices: list
    steps: list
    w_hat: np.ndarray         # GN matrix at the design point over the final basis
    warnings: list = field(default_factory=list)

    @property
    def is_pd(self):
        ok, _, _ = pd_check(self.w_hat)
        return ok


def pd_check(w):
    """Scale-aware positive-definiteness test: lmin > 1e-10 * max(1, lmax)."""
    vals = np.linalg.eigvalsh(0.5 * (w + w.T))
    lmin, lmax = float(vals[0]), float(vals[-1])
    return lmin > PD_RTOL * max(1.0, lmax), lmin, lmax


def build_W(model, basis, alpha_circ, eps, n_steps=None):
    """Per-control Gram matrix [W(eps)]_ij = <C dy(A_i), C dy(A_j)> at T."""
    n_steps = n_steps or dyn.default_n_steps(model.horizon)
    dyn.validate_basis(model, basis)
    _, dyt = dyn.solve_coupled(model, basis, alpha_circ, basis.elements, eps, n_steps)
    obs = dyt @ model.observer.T
    w = obs @ obs.T
    return WMatrix(0.5 * (w + w.T), obs)


def fitting_closed_form(w_block):
    """Exact fitting solution beta = G^-1 b for a bordered PSD block.

    w_block is the (k+1) x (k+1) upper-left part of the cumulative Gram
    matrix; G is its k x k top-left corner and b the head of the last column.
    """
    w_block = np.asarray(w_block, dtype=float)
    k = w_block.shape[0] - 1
    if k == 0:
        return np.zeros(0)
    g = w_block[:k, :k]
    b = w_block[:k, k]
    vals = np.linalg.eigvalsh(0.5 * (g + g.T))
    if vals[0] <= 1e-12 * max(vals[-1], np.finfo(float).tiny):
        raise RankDeficiencyError(
            f"fitting block is rank deficient (lmin={vals[0]:.3e}, lmax={vals[-1]:.3e})")
    return np.linalg.solve(g, b)


def kernel_vector(beta):
    """[beta; -1], spanning the kernel of the bordered PSD block."""
    return np.append(np.asarray(beta, dtype=float), -1.0)


# ---------------------------------------------------------------------------
# subproblem solvers


def _signal_from_flat(x, n_segments, n_channels, horizon):
    return ctl.ControlSignal(x.reshape(n_segments, n_channels), horizon)


def maximize_over_controls(objective, box, opt, n_segments, n_channels, horizon,
                           gradient=None, rng=None):
    """Multistart box-constrained maximization over piecewise-constant controls.

    objective maps a ControlSignal to a scalar; gradient (optional) maps the
    flattened segment values to the flattened ascent direction.  Starts are
    the zero signal, both bound constants, and opt.multistart random
    admissible signals.  Returns (signal, value, ok).
    """
    if rng is None:
        rng = np.random.default_rng(opt.seed)
    dim = n_segments * n_channels
    bounds = [(box.lower, box.upper)] * dim

    def neg(x):
        return -objective(_signal_from_flat(x, n_segments, n_channels, horizon))

    jac = None
    if gradient is not None:
        def jac(x):
            return -gradient(x)

    starts = [np.zeros(dim),
              np.full(dim, box.upper),
              np.full(dim, box.lower)]
    starts += [rng.uniform(box.lower, box.upper, dim) for _ in range(opt.multistart)]

    best_x, best_v, any_ok = starts[0], -neg(starts[0]), False
    for x0 in starts:
        res = _sciopt.minimize(
            neg, x0, jac=jac, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": opt.max_iters, "gtol": opt.grad_tol,
                     "ftol": 1e-14, "eps": opt.fd_step})
        any_ok = any_ok or bool(res.success)
        if -res.fun > best_v:
            best_v, best_x = -res.fun, res.x
    sig = _signal_from_flat(np.clip(best_x, box.lower, box.upper),
                            n_segments, n_channels, horizon)
    return sig, float(best_v), any_ok


def minimize_over_box(objective, radius, dim, opt, gradient=None, rng=None,
                      start_scale=None, fused=False):
    """Multistart minimization over a centered box (fitting subproblems).

    With fused=True the objective returns (value, gradient) in one call.
    Random starts are drawn within start_scale (default min(radius, 10), so a
    huge box standing in for R^k still starts near the origin).  Returns
    (x, value, near_optima) where near_optima collects distinct minimizers
    within 1e-6 relative of the best value.
    """
    if rng is None:
        rng = np.random.default_rng(opt.seed)
    if dim == 0:
        value = objective(np.zeros(0))
        if fused:
            value = value[0]
        return np.zeros(0), float(value), ()
    scale = min(radius, 10.0) if start_scale is None else start_scale
    bounds = [(-radius, radius)] * dim
    starts = [np.zeros(dim)]
    starts += [rng.uniform(-scale, scale, dim) for _ in range(opt.multistart)]
    results = []
    for x0 in starts:
        res = _sciopt.minimize(
            objective, x0, jac=True if fused else gradient,
            method="L-BFGS-B", bounds=bounds,
            options={"maxiter": opt.max_iters, "gtol": opt.grad_tol,
                     "ftol": 1e-14, "eps": opt.fd_step})
        results.append((float(res.fun), res.x))
    results.sort(key=lambda t: t[0])
    best_v, best_x = results[0]
    near = []
    for v, x in results[1:]:
        if v <= best_v + 1e-6 * max(1.0, abs(best_v)) and \
                all(np.linalg.norm(x - y) > 1e-4 * (1 + np.linalg.norm(x)) for y in [best_x] + near):
            near.append(x)
    return best_x, best_v, tuple(near)


# ---------------------------------------------------------------------------
# linear-in-control responses (exact gradients for the optimizer)


def _quadratic_objective(phi):
    """Objective ||phi x||^2 over flattened segment values, with gradient."""
    def value(sig):
        x = sig.values.ravel()
        r = phi @ x
        return float(r @ r)

    def grad(x):
        return 2.0 * (phi.T @ (phi @ x))

    return value, grad


def sensitivity_response(model, basis, alpha_circ, n_segments, n_steps):
    """(K, P, S*M) tensor with C dy(A_j, eps; T) = R[j] @ eps_flat, or None.

    The linearized observation map is linear in the control exactly for the
    linear families and for bilinear control matrices linearized at zero.
    """
    fam = model.family
    linear_ok = fam in (dyn.LINEAR_DRIFT, dyn.LINEAR_CONTROL_MATRIX)
    bilinear_zero = (fam in (dyn.BILINEAR_CONTROL, dyn.SCHRODINGER_REAL)
                     and np.linalg.norm(basis.combine(alpha_circ)) == 0.0)
    if not (linear_ok or bilinear_zero):
        return None
    n_seg, m = n_segments, model.n_channels
    resp = np.empty((basis.size, model.observer.shape[0], n_seg * m))
    for s in range(n_seg):
        for c in range(m):
            vals = np.zeros((n_seg, m))
            vals[s, c] = 1.0
            sig = ctl.ControlSignal(vals, model.horizon)
            _, dyt = dyn.solve_coupled(model, basis, alpha_circ,
                                       basis.elements, sig, n_steps)
            resp[:, :, s * m + c] = dyt @ model.observer.T
    return resp


def _forward_pair_response(model, mat_a, mat_b, n_segments, n_steps):
    """(P, S*M) response of C(y(mat_a) - y(mat_b)) when it is linear in eps.

    Valid for the linear families only (difference cancels the y0 offset).
    """
    n_seg, m = n_segments, model.n_channels
    phi = np.empty((model.observer.shape[0], n_seg * m))
    for s in range(n_seg):
        for c in range(m):
            vals = np.zeros((n_seg, m))
            vals[s, c] = 1.0
            sig = ctl.ControlSignal(vals, model.horizon)
            ya = dyn.solve_forward_matrix(model, mat_a, sig, n_steps).final_state
            yb = dyn.solve_forward_matrix(model, mat_b, sig, n_steps).final_state
            phi[:, s * m + c] = model.observer @ (ya - yb)
    return phi


def _sensitivity_dir_response(model, lin_matrix, direction, n_segments, n_steps):
    """(P, S*M) response of C dy(direction, eps; T) linearized at lin_matrix."""
    n_seg, m = n_segments, model.n_channels
    phi = np.empty((model.observer.shape[0], n_seg * m))
    for s in range(n_seg):
        for c in range(m):
            vals = np.zeros((n_seg, m))
            vals[s, c] = 1.0
            sig = ctl.ControlSignal(vals, model.horizon)
            _, dyt = dyn.solve_coupled_matrix(model, lin_matrix,
                                              direction[None], sig, n_steps)
            phi[:, s * m + c] = model.observer @ dyt[0]
    return phi


# ---------------------------------------------------------------------------
# LGR (Algorithm on the linearized system)


def lgr(model, basis, alpha_circ, opt=None, n_segments=ctl.DEFAULT_N_SEGMENTS,
        box=None, n_steps=None):
    """Linearized greedy reconstruction: K controls making W_hat PD.

    Initialization maximizes [W(eps)]_11; iteration k fits beta on the
    cumulative Gram matrix (closed form) and splits along [beta; -1].
    """
    opt = opt or OptimizerConfig()
    box = box or ctl.AdmissibleBox()
    n_steps = n_steps or dyn.default_n_steps(model.horizon)
    dyn.validate_basis(model, basis)
    rng = np.random.default_rng(opt.seed)
    kk = basis.size
    warnings, steps, sigs = [], [], []
    lin_matrix = basis.combine(alpha_circ)

    resp = sensitivity_response(model, basis, alpha_circ, n_segments, n_steps)

    def w_obs(sig):
        if resp is not None:
            return resp @ sig.values.ravel()
        _, dyt = dyn.solve_coupled(model, basis, alpha_circ,
                                   basis.elements, sig, n_steps)
        return dyt @ model.observer.T

    def split_max(v):
        if resp is not None:
            phi = np.tensordot(v, resp[:v.shape[0]], axes=1)
            fun, grad = _quadratic_objective(phi)
            return maximize_over_controls(fun, box, opt, n_segments,
                                          model.n_channels, model.horizon,
                                          gradient=grad, rng=rng)
        direction = np.tensordot(v, basis.elements[:v.shape[0]], axes=1)

        def fun(sig):
            _, dyt = dyn.solve_coupled_matrix(model, lin_matrix,
                                              direction[None], sig, n_steps)
            r = model.observer @ dyt[0]
            return float(r @ r)

        return maximize_over_controls(fun, box, opt, n_segments,
                                      model.n_channels, model.horizon, rng=rng)

    sig1, val1, ok = split_max(np.array([1.0]))
    sigs.append(sig1)
    w_hat = np.zeros((kk, kk))
    obs = w_obs(sig1)
    w_hat += obs @ obs.T
    if val1 <= PD_RTOL or not ok:
        warnings.append(f"initialization optimum {val1:.3e} is not safely positive")
    steps.append(GreedyStep("init", 0, val1,
                            lambda_min=w_hat[0, 0], lambda_max=w_hat[0, 0]))

    for k in range(1, kk):
        block = w_hat[:k + 1, :k + 1]
        try:
            beta = fitting_closed_form(block)
            fit_flags = ()
        except RankDeficiencyError:
            beta = np.linalg.pinv(block[:k, :k], rcond=1e-12) @ block[:k, k]
            fit_flags = ("fitting-rank-deficient",)
            warnings.append(f"iteration {k}: fitting block rank deficient, used pseudoinverse")
        v = kernel_vector(beta)
        fit_val = float(v @ block @ v)
        steps.append(GreedyStep("fit", k, fit_val, beta=beta, flags=fit_flags))

        sig, val, ok = split_max(v)
        sigs.append(sig)
        obs = w_obs(sig)
        w_hat += obs @ obs.T
        _, lmin, lmax = pd_check(w_hat[:k + 1, :k + 1])
        pos_tol = PD_RTOL * max(1.0, lmax)
        flags = ()
        if val <= pos_tol or not ok:
            flags = ("splitting-near-zero",)
            warnings.append(f"iteration {k}: splitting optimum {val:.3e} below "
                            f"positivity tolerance {pos_tol:.3e}")
        steps.append(GreedyStep("split", k, val, lambda_min=lmin,
                                lambda_max=lmax, flags=flags))

    w_hat = 0.5 * (w_hat + w_hat.T)
    return GreedyOutcome("LGR", sigs, basis, list(range(kk)), steps, w_hat, warnings)


# ---------------------------------------------------------------------------
# nonlinear GR (shifted candidates, compact fitting sets)


LINEAR_FAMILIES = (dyn.LINEAR_DRIFT, dyn.LINEAR_CONTROL_MATRIX)


def _split_general(model, mat_a, mat_b, box, opt, n_segments, n_steps, rng):
    """Maximize ||C(y(mat_a, eps) - y(mat_b, eps))||^2 over admissible controls."""
    if model.family in LINEAR_FAMILIES:
        phi = _forward_pair_response(model, mat_a, mat_b, n_segments, n_steps)
        fun, grad = _quadratic_objective(phi)
        return maximize_over_controls(fun, box, opt, n_segments, model.n_channels,
                                      model.horizon, gradient=grad, rng=rng)

    def fun(sig):
        try:
            ya = dyn.solve_forward_matrix(model, mat_a, sig, n_steps).final_state
            yb = dyn.solve_forward_matrix(model, mat_b, sig, n_steps).final_state
        except DivergenceError:
            return -1e300
        r = model.observer @ (ya - yb)
        return float(r @ r)

    return maximize_over_controls(fun, box, opt, n_segments, model.n_channels,
                                  model.horizon, rng=rng)


def _fit_objective(model, shift, fit_elements, targets, sigs, n_steps):
    """Value-and-gradient callable for the nonlinear fitting problem.

    targets[m] is the observed final state of the candidate element under
    control sigs[m]; fit_elements are the direction matrices the combination
    ranges over.  One coupled solve per control supplies both the cost and its
    exact gradient.
    """
    c_mat = model.observer

    def fun(beta):
        mat = shift + np.tensordot(beta, fit_elements, axes=1)
        val = 0.0
        grad = np.zeros_like(beta)
        for sig, tgt in zip(sigs, targets):
            try:
                traj, dyt = dyn.solve_coupled_matrix(model, mat, fit_elements,
                                                     sig, n_steps)
            except DivergenceError:
                return 1e300, np.zeros_like(beta)
            r = c_mat @ traj.final_state - tgt
            val += float(r @ r)
            grad += 2.0 * ((dyt @ c_mat.T) @ r)
        if not (np.isfinite(val) and np.all(np.isfinite(grad))):
            return 1e300, np.zeros_like(beta)
        return val, grad

    return fun


def gr(model, basis, alpha_circ, compact_radius=10.0, opt=None,
       n_segments=ctl.DEFAULT_N_SEGMENTS, box=None, n_steps=None):
    """Nonlinear greedy reconstruction with every candidate shifted by A(alpha_circ).

    Initialization maximizes the distance between the shifted base output and
    the first element's output; fitting minimizes over the centered box of
    the given radius; splitting maximizes the output distance between the
    fitted combination and the next element.  A post-check re-runs any
    splitting whose control fails to separate the same pair on the linearized
    system (up to 3 perturbed restarts).
    """
    opt = opt or OptimizerConfig()
    box = box or ctl.AdmissibleBox()
    n_steps = n_steps or dyn.default_n_steps(model.horizon)
    dyn.validate_basis(model, basis)
    rng = np.random.default_rng(opt.seed)
    kk = basis.size
    shift = basis.combine(alpha_circ)
    warnings, steps, sigs = [], [], []
    w_hat = np.zeros((kk, kk))

    def lin_split_value(v, sig):
        direction = np.tensordot(v, basis.elements[:v.shape[0]], axes=1)
        _, dyt = dyn.solve_coupled_matrix(model, shift, direction[None], sig, n_steps)
        r = model.observer @ dyt[0]
        return float(r @ r)

    def accumulate(sig):
        nonlocal w_hat
        _, dyt = dyn.solve_coupled_matrix(model, shift, basis.elements, sig, n_steps)
        obs = dyt @ model.observer.T
        w_hat += obs @ obs.T

    def split_with_check(mat_a, mat_b, v):
        sig, val, ok = _split_general(model, mat_a, mat_b, box, opt,
                                      n_segments, n_steps, rng)
        flags = []
        if not ok:
            flags.append("line-search-failed")
        lin_val = lin_split_value(v, sig)
        retries = 0
        while lin_val <= PD_RTOL and retries < 3:
            retries += 1
            sig2, val2, _ = _split_general(model, mat_a, mat_b, box, opt,
                                           n_segments, n_steps, rng)
            lin2 = lin_split_value(v, sig2)
            if lin2 > lin_val:
                sig, val, lin_val = sig2, val2, lin2
        if lin_val <= PD_RTOL:
            flags.append("linearized-splitting-nonpositive")
            warnings.append("splitting control fails the linearized positivity check")
        return sig, val, tuple(flags)

    sig1, val1, flags = split_with_check(shift, shift + basis.elements[0],
                                         np.array([1.0]))
    sigs.append(sig1)
    accumulate(sig1)
    if val1 <= PD_RTOL:
        warnings.append(f"initialization optimum {val1:.3e} is not safely positive")
    _, lmin, lmax = pd_check(w_hat[:1, :1])
    steps.append(GreedyStep("init", 0, val1, lambda_min=lmin, lambda_max=lmax,
                            flags=flags))

    for k in range(1, kk):
        targets = [model.observer @
                   dyn.solve_forward_matrix(model, shift + basis.elements[k],
                                            sig, n_steps).final_state
                   for sig in sigs[:k]]
        fun = _fit_objective(model, shift, basis.elements[:k], targets,
                             sigs[:k], n_steps)
        beta, fit_val, near = minimize_over_box(fun, compact_radius, k, opt,
                                                rng=rng, fused=True)
        steps.append(GreedyStep("fit", k, fit_val, beta=beta, near_optima=near))

        v = kernel_vector(beta)
        mat_beta = shift + np.tensordot(beta, basis.elements[:k], axes=1)
        sig, val, flags = split_with_check(mat_beta, shift + basis.elements[k], v)
        sigs.append(sig)
        accumulate(sig)
        _, lmin, lmax = pd_check(w_hat[:k + 1, :k + 1])
        if val <= PD_RTOL * max(1.0, lmax):
            flags = flags + ("splitting-near-zero",)
            warnings.append(f"iteration {k}: splitting optimum {val:.3e} near zero")
        steps.append(GreedyStep("split", k, val, lambda_min=lmin,
                                lambda_max=lmax, flags=flags))

    w_hat = 0.5 * (w_hat + w_hat.T)
    return GreedyOutcome("GR", sigs, basis, list(range(kk)), steps, w_hat, warnings)


# ---------------------------------------------------------------------------
# OGR / OLGR (basis reordering, orthogonalization, skip-splitting)


def _ogr_state_obs(model, shift, mat, sig, n_steps, linearized):
    """Observation the OGR comparisons use for element matrix `mat`."""
    if linearized:
        _, dyt = dyn.solve_coupled_matrix(model, shift, mat[None], sig, n_steps)
        return model.observer @ dyt[0]
    traj = dyn.solve_forward_matrix(model, shift + mat, sig, n_steps)
    return model.observer @ traj.final_state


def ogr(model, elements, alpha_circ=None, tol1=1e-6, tol2=1e-6, opt=None,
        linearized=False, n_segments=ctl.DEFAULT_N_SEGMENTS, box=None,
        n_steps=None, drop_tol=1e-8, fit_radius=10.0):
    """Optimized greedy reconstruction over a possibly redundant input set.

    Per iteration the remaining candidates are Frobenius-orthogonalized
    against the selected elements (dependent ones removed, survivors
    normalized), the fitting problem is solved for every candidate, and
    either the candidate with the largest fitting value above tol2 is
    selected without a new control (skip-splitting) or an extended splitting
    step optimizes jointly over candidates and controls.  The loop stops when
    the latest selection value drops to tol1 or no candidates remain.  With
    linearized=True the comparisons run on the system linearized at
    alpha_circ (OLGR).
    """
    opt = opt or OptimizerConfig()
    box = box or ctl.AdmissibleBox()
    n_steps = n_steps or dyn.default_n_steps(model.horizon)
    if isinstance(elements, dyn.BasisSet):
        elements = list(elements.elements)
    mats = [np.asarray(m, dtype=float) for m in elements]
    if alpha_circ is None:
        shift = np.zeros((model.dim, model.dim))
    else:
        alpha_circ = np.asarray(alpha_circ, dtype=float)
        shift = np.tensordot(alpha_circ, np.asarray(mats), axes=1)
    rng = np.random.default_rng(opt.seed)
    warnings, steps, sigs = [], [], []
    name = "OLGR" if linearized else "OGR"

    def obs(mat, sig):
        return _ogr_state_obs(model, shift, mat, sig, n_steps, linearized)

    def split_pair(mat_a, mat_b):
        if linearized:
            direction = mat_a - mat_b
            fam_lin = (model.family in LINEAR_FAMILIES
                       or (model.family in (dyn.BILINEAR_CONTROL, dyn.SCHRODINGER_REAL)
                           and np.linalg.norm(shift) == 0.0))
            if fam_lin:
                phi = _sensitivity_dir_response(model, shift, direction,
                                                n_segments, n_steps)
                fun, grad = _quadratic_objective(phi)
                return maximize_over_controls(fun, box, opt, n_segments,
                                              model.n_channels, model.horizon,
                                              gradient=grad, rng=rng)

            def fun(sig):
                _, dyt = dyn.solve_coupled_matrix(model, shift, direction[None],
                                                  sig, n_steps)
                r = model.observer @ dyt[0]
                return float(r @ r)

            return maximize_over_controls(fun, box, opt, n_segments,
                                          model.n_channels, model.horizon, rng=rng)
        return _split_general(model, shift + mat_a, shift + mat_b, box, opt,
                              n_segments, n_steps, rng)

    # joint initialization over candidates and controls
    zero = np.zeros((model.dim, model.dim))
    best = None
    for ell, mat in enumerate(mats):
        if np.linalg.norm(mat) == 0.0:
            continue
        sig, val, _ = split_pair(zero, mat)
        if best is None or val > best[0]:
            best = (val, ell, sig)
    if best is None:
        raise ValueError("input set contains no nonzero element")
    last_value, ell1, sig1 = best
    sigs.append(sig1)
    first = mats[ell1] / np.linalg.norm(mats[ell1])
    selected, sel_idx = [first], [ell1]
    cand = [(m, i) for i, m in enumerate(mats) if i != ell1]
    steps.append(GreedyStep("init", 0, last_value, index=ell1))

    def fit_candidate(cand_mat, n_sel):
        """Fitting problem for one candidate; returns (beta, value)."""
        sel_arr = np.asarray(selected)
        if linearized:
            g = np.zeros((n_sel, n_sel))
            b = np.zeros(n_sel)
            c = 0.0
            for sig in sigs:
                _, dyt = dyn.solve_coupled_matrix(
                    model, shift, np.concatenate([sel_arr, cand_mat[None]]),
                    sig, n_steps)
                o = dyt @ model.observer.T
                g += o[:n_sel] @ o[:n_sel].T
                b += o[:n_sel] @ o[n_sel]
                c += float(o[n_sel] @ o[n_sel])
            vals = np.linalg.eigvalsh(0.5 * (g + g.T))
            if vals[0] <= 1e-12 * max(vals[-1], np.finfo(float).tiny):
                beta = np.linalg.pinv(g, rcond=1e-12) @ b
            else:
                beta = np.linalg.solve(g, b)
            return beta, max(float(c - b @ beta), 0.0)
        targets = [obs(cand_mat, sig) for sig in sigs]
        fun = _fit_objective(model, shift, sel_arr, targets, sigs, n_steps)
        beta, val, _ = minimize_over_box(fun, fit_radius, n_sel, opt,
                                         rng=rng, fused=True)
        return beta, max(val, 0.0)

    while cand and last_value > tol1:
        k = len(selected)
        # index-aware orthogonalization (same rule as linalg.frobenius_orthogonalize,
        # with survivors normalized so tol2 comparisons are scale free)
        ortho = []
        for s in selected:
            r = s.copy()
            for e in ortho:
                r -= np.sum(r * e) * e
            nrm = np.linalg.norm(r)
            if nrm > drop_tol:
                ortho.append(r / nrm)
        new_cand = []
        for mat, idx in cand:
            nrm0 = np.linalg.norm(mat)
            r = mat.copy()
            for e in ortho:
                r -= np.sum(r * e) * e
            if nrm0 == 0.0 or np.linalg.norm(r) < drop_tol * nrm0:
                continue
            r /= np.linalg.norm(r)
            new_cand.append((r, idx))
            ortho.append(r)
        cand = new_cand
        if not cand:
            steps.append(GreedyStep("skip", k, 0.0,
                                    flags=("candidates-exhausted",)))
            break

        fits = [fit_candidate(mat, k) for mat, _ in cand]
        fit_vals = np.array([f[1] for f in fits])
        best_pos = int(np.argmax(fit_vals))
        if fit_vals[best_pos] > tol2:
            mat, idx = cand.pop(best_pos)
            beta = fits[best_pos][0]
            selected.append(mat)
            sel_idx.append(idx)
            last_value = float(fit_vals[best_pos])
            steps.append(GreedyStep("skip", k, last_value, beta=beta, index=idx))
        else:
            best = None
            for pos, (mat, idx) in enumerate(cand):
                beta = fits[pos][0]
                mat_beta = np.tensordot(beta, np.asarray(selected), axes=1)
                sig, val, _ = split_pair(mat_beta, mat)
                if best is None or val > best[0]:
                    best = (val, pos, sig, beta)
            val, pos, sig, beta = best
            mat, idx = cand.pop(pos)
            selected.append(mat)
            sel_idx.append(idx)
            sigs.append(sig)
            last_value = float(val)
            steps.append(GreedyStep("split", k, last_value, beta=beta, index=idx))

    sel_basis = dyn.BasisSet(np.asarray(selected))
    w_hat = np.zeros((len(selected), len(selected)))
    for sig in sigs:
        _, dyt = dyn.solve_coupled_matrix(model, shift, sel_basis.elements,
                                          sig, n_steps)
        o = dyt @ model.observer.T
        w_hat += o @ o.T
    w_hat = 0.5 * (w_hat + w_hat.T)
    ok, lmin, lmax = pd_check(w_hat)
    if not ok:
        warnings.append(f"final GN matrix on the selected span is not PD "
                        f"(lmin={lmin:.3e}, lmax={lmax:.3e})")
    return GreedyOutcome(name, sigs, sel_basis, sel_idx, steps, w_hat, warnings)
