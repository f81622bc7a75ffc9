"""Online identification: residuals, Jacobians, and the Gauss-Newton loop.

The residual of experiment m is R_m(alpha) = C y(A(alpha), eps^m; T) - data_m;
its Jacobian columns come from the linearized solves, the normal-equation
matrix is W = J^T J, and the plain (undamped) GN step solves
W (alpha+ - alpha) = -J^T r.  The loop records the spectrum of W at every
iterate and stops on a small step, a small residual, reaching max_iters, or a
numerically singular W.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import dynamics as dyn
from . import linalg
from .errors import DimensionError
from .greedy import PD_RTOL, pd_check

CONVERGED = "converged"
MAX_ITERS = "max_iters"
SINGULAR = "singular_normal_equations"


@dataclass(frozen=True)
class GNProblem:
    model: dyn.SystemModel
    basis: dyn.BasisSet
    controls: list
    data: list
    n_steps: int = None

    def __post_init__(self):
        if len(self.controls) != len(self.data):
            raise DimensionError(
                f"{len(self.controls)} controls but {len(self.data)} data vectors")
        p = self.model.observer.shape[0]
        for i, d in enumerate(self.data):
            d = linalg._as_vector(d, f"data[{i}]")
            if d.shape[0] != p:
                raise DimensionError(f"data[{i}] has length {d.shape[0]}, observer rows {p}")
        if self.n_steps is None:
            object.__setattr__(self, "n_steps", dyn.default_n_steps(self.model.horizon))


@dataclass
class GNReport:
    iterates: list
    residual_norms: list
    lambda_min: list
    lambda_max: list
    step_norms: list
    verdict: str

    @property
    def final(self):
        return self.iterates[-1]

    @property
    def n_iters(self):
        return len(self.iterates) - 1


def residuals(problem, alpha):
    """Stacked residuals (K_c * P,), one forward solve per control."""
    out = []
    for sig, d in zip(problem.controls, problem.data):
        traj = dyn.solve_forward(problem.model, problem.basis, alpha, sig,
                                 problem.n_steps)
        out.append(dyn.observe(problem.model, traj.final_state) - d)
    if not out:
        return np.zeros(0)
    return np.concatenate(out)


def cost(problem, alpha):
    """Sum of squared residual norms over the experiments."""
    r = residuals(problem, alpha)
    return float(r @ r)


def jacobian(problem, alpha):
    """Stacked Jacobian (K_c * P, K); column j = C dy(A_j, eps^m; T)."""
    blocks = []
    for sig in problem.controls:
        _, dyt = dyn.solve_coupled(problem.model, problem.basis, alpha,
                                   problem.basis.elements, sig, problem.n_steps)
        blocks.append((dyt @ problem.model.observer.T).T)  # (P, K)
    if not blocks:
        return np.zeros((0, problem.basis.size))
    return np.vstack(blocks)


@dataclass(frozen=True)
class GNMatrix:
    matrix: np.ndarray
    eigenvalues: np.ndarray
    is_pd: bool


def gn_matrix(problem, alpha):
    """Normal-equation matrix J^T J with its spectrum and a PD flag."""
    j = jacobian(problem, alpha)
    w = j.T @ j
    w = 0.5 * (w + w.T)
    vals = np.linalg.eigvalsh(w)
    ok, _, _ = pd_check(w)
    return GNMatrix(w, vals, ok)


def gn_solve(problem, alpha_init, max_iters=50, step_tol=1e-10, resid_tol=1e-12):
    """Plain Gauss-Newton iteration (no damping or line search).

    Stops when the residual norm falls below resid_tol, the step norm below
    step_tol, max_iters is reached, or the normal-equation matrix fails the
    scale-aware PD test (verdict `singular_normal_equations`).
    """
    alpha = linalg._as_vector(alpha_init, "alpha_init").copy()
    iterates = [alpha.copy()]
    res_norms, lmins, lmaxs, steps = [], [], [], []
    verdict = MAX_ITERS
    for _ in range(max_iters):
        r = residuals(problem, alpha)
        res_norms.append(float(np.linalg.norm(r)))
        if res_norms[-1] <= resid_tol:
            verdict = CONVERGED
            break
        j = jacobian(problem, alpha)
        w = j.T @ j
        w = 0.5 * (w + w.T)
        vals, vecs = np.linalg.eigh(w)
        lmins.append(float(vals[0]))
        lmaxs.append(float(vals[-1]))
        if vals[0] <= PD_RTOL * max(1.0, vals[-1]):
            verdict = SINGULAR
            break
        rhs = -(j.T @ r)
        step = vecs @ ((vecs.T @ rhs) / vals)
        alpha = alpha + step
        iterates.append(alpha.copy())
        steps.append(float(np.linalg.norm(step)))
        if steps[-1] <= step_tol:
            verdict = CONVERGED
            break
    else:
        res_norms.append(float(np.linalg.norm(residuals(problem, alpha))))
    return GNReport(iterates, res_norms, lmins, lmaxs, steps, verdict)


def wtilde(problem, alpha_star, alpha, quad_steps=None):
    """Mixed-argument quadratic-form matrix for linear-drift systems.

    Entry (i, j) sums <Gamma_i, Gamma_j> over experiments with
    Gamma_j = int_0^T C exp((T-s) A(alpha_star)) A_j y(A(alpha), eps^m; s) ds,
    so the identification cost satisfies
    cost/2 = <alpha_star - alpha, W (alpha_star - alpha)> / 2.
    """
    model, basis = problem.model, problem.basis
    if model.family != dyn.LINEAR_DRIFT:
        raise ValueError("wtilde is defined for the linear_drift family only")
    alpha_star = linalg._as_vector(alpha_star, "alpha_star")
    alpha = linalg._as_vector(alpha, "alpha")
    kk = basis.size
    if not problem.controls:
        return np.zeros((kk, kk))
    a_star = basis.combine(alpha_star)
    w_total = np.zeros((kk, kk))
    for sig in problem.controls:
        # the integrand is smooth only within a control segment, so the
        # Simpson panels must align with the segment grid
        per_seg = max(2, -(-(quad_steps or problem.n_steps) // sig.n_segments))
        if per_seg % 2:
            per_seg += 1
        n_steps = per_seg * sig.n_segments
        dt = model.horizon / n_steps
        step_prop = linalg.expm(dt * a_star)
        props = np.empty((n_steps + 1, model.observer.shape[0], model.dim))
        props[n_steps] = model.observer
        for i in range(n_steps, 0, -1):
            props[i - 1] = props[i] @ step_prop
        weights = np.zeros(n_steps + 1)
        seg_w = np.full(per_seg + 1, 2.0)
        seg_w[1::2] = 4.0
        seg_w[0] = seg_w[-1] = 1.0
        seg_w *= dt / 3.0
        for s in range(sig.n_segments):
            weights[s * per_seg:(s + 1) * per_seg + 1] += seg_w
        traj = dyn.solve_forward(model, basis, alpha, sig, n_steps)
        gammas = np.zeros((kk, model.observer.shape[0]))
        for i in range(n_steps + 1):
            cay = props[i] @ (basis.elements @ traj.states[i]).T  # (P, K)
            gammas += weights[i] * cay.T
        w_total += gammas @ gammas.T
    return 0.5 * (w_total + w_total.T)


def save_report(report, path_prefix, alpha_star=None):
    """Write <prefix>.txt (summary) and <prefix>.csv (per-iterate numbers)."""
    with open(f"{path_prefix}.txt", "w", encoding="utf-8") as fh:
        fh.write(f"verdict: {report.verdict}\n")
        fh.write(f"iterations: {report.n_iters}\n")
        fh.write(f"final residual norm: {report.residual_norms[-1]:.17g}\n")
        fh.write("final iterate: "
                 + ",".join(format(v, ".17g") for v in report.final) + "\n")
    with open(f"{path_prefix}.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        header = ["iter", "residual_norm", "lambda_min", "lambda_max", "step_norm"]
        if alpha_star is not None:
            header.append("error_to_solution")
        writer.writerow(header)
        for i in range(len(report.iterates)):
            row = [i,
                   format(report.residual_norms[i], ".17g") if i < len(report.residual_norms) else "",
                   format(report.lambda_min[i], ".17g") if i < len(report.lambda_min) else "",
                   format(report.lambda_max[i], ".17g") if i < len(report.lambda_max) else "",
                   format(report.step_norms[i], ".17g") if i < len(report.step_norms) else ""]
            if alpha_star is not None:
                row.append(format(float(np.linalg.norm(report.iterates[i] - alpha_star)), ".17g"))
            writer.writerow(row)
