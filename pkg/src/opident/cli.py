"""Command-line entry point: offline design, online solve, sweeps, diagnostics.

Commands
--------
offline   run the configured greedy algorithm and write controls + diagnostics
online    simulate data at alpha_star and run Gauss-Newton from alpha_circ
sweep     robustness sweep over sphere-sampled initializations
diagnose  observability/controllability/Lie-algebra hypothesis checks
oracle    the analytic 2x2 bilinear end-to-end check

Configuration is a JSON document validated against a fixed schema (unknown
keys are rejected).  Exit codes: 0 ok, 1 error, 2 hypothesis warning.
"""

import argparse
import json
import os
import sys

import numpy as np

from . import controls as ctl
from . import dynamics as dyn
from . import gauss_newton as gn
from . import greedy, harness, linalg

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_WARNING = 2

# schema: key -> (type check, description); nested dicts nest the schema
_MATRIX = (list, "matrix as list of rows")
_VECTOR = (list, "vector as list of numbers")

CONFIG_SCHEMA = {
    "seed": (int, "master random seed (echoed into every output)"),
    "threads": (int, "worker threads for sweep trials, 0 = auto, 1 = serial"),
    "out_dir": (str, "output directory"),
    "model": {
        "family": (str, "linear_drift | linear_control_matrix | bilinear_drift"
                        " | bilinear_control | schrodinger_real"),
        "dim": (int, "state dimension N (complex dimension for schrodinger_real)"),
        "horizon": ((int, float), "final time T"),
        "n_steps": (int, "integration steps (default 1000, or 5000 for T > 10)"),
        "known_matrix": ((list, str), "B / drift matrix rows, or 'random'"),
        "observer": ((list, str), "observer rows, or 'identity' / 'random'"),
        "y0": ((list, str), "initial state, or 'zero'"),
        "h_real": _MATRIX,
        "h_imag": _MATRIX,
        "psi0_real": _VECTOR,
        "psi0_imag": _VECTOR,
        "psi1_real": _VECTOR,
        "psi1_imag": _VECTOR,
    },
    "basis": {
        "kind": (str, "canonical | random | explicit | union | hermitian_canonical"),
        "count": (int, "number of random elements"),
        "seed": (int, "basis sampling seed"),
        "elements": (list, "explicit elements, list of matrices"),
        "scale": ((int, float), "multiply every element by this factor"),
    },
    "alpha_star": {
        "kind": (str, "random | explicit"),
        "values": _VECTOR,
        "seed": (int, "sampling seed"),
        "scale": ((int, float), "scale applied to random coefficients"),
    },
    "alpha_circ": {
        "kind": (str, "relative | explicit | zero"),
        "rho": ((int, float), "relative Frobenius error of the design point"),
        "values": _VECTOR,
        "seed": (int, "direction seed"),
    },
    "algorithm": (str, "LGR | GR | OGR | OLGR"),
    "algorithm_params": {
        "tol1": ((int, float), "OGR loop tolerance"),
        "tol2": ((int, float), "OGR skip-splitting tolerance"),
        "compact_radius": ((int, float), "GR fitting box radius"),
        "drop_tol": ((int, float), "orthogonalization drop tolerance"),
    },
    "controls": {
        "n_segments": (int, "piecewise-constant segments per control"),
        "lower": ((int, float), "admissible box lower bound"),
        "upper": ((int, float), "admissible box upper bound"),
    },
    "optimizer": {
        "multistart": (int, "random restarts per subproblem"),
        "max_iters": (int, "quasi-Newton iteration cap"),
        "grad_tol": ((int, float), "projected-gradient tolerance"),
        "fd_step": ((int, float), "finite-difference step for gradients"),
        "seed": (int, "optimizer start seed"),
    },
    "gn": {
        "max_iters": (int, "Gauss-Newton iteration cap"),
        "step_tol": ((int, float), "step-norm stopping tolerance"),
        "resid_tol": ((int, float), "residual-norm stopping tolerance"),
    },
    "sweep": {
        "radii": (list, "relative sphere radii"),
        "trials": (int, "initializations per radius"),
        "tolerance": ((int, float), "success tolerance (relative Frobenius)"),
    },
}


class ConfigError(ValueError):
    pass


def validate_config(cfg, schema=None, path=""):
    schema = CONFIG_SCHEMA if schema is None else schema
    if not isinstance(cfg, dict):
        raise ConfigError(f"config section '{path or '<root>'}' must be an object")
    for key, val in cfg.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config key '{where}'")
        spec = schema[key]
        if isinstance(spec, dict):
            validate_config(val, spec, where)
        else:
            types, _ = spec
            if not isinstance(val, types):
                raise ConfigError(f"config key '{where}' has wrong type "
                                  f"{type(val).__name__}")


def config_keys(schema=None, path=""):
    schema = CONFIG_SCHEMA if schema is None else schema
    out = []
    for key, spec in schema.items():
        where = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out.extend(config_keys(spec, where))
        else:
            out.append((where, spec[1]))
    return out


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        cfg = json.load(fh)
    validate_config(cfg)
    return cfg


def _rng_for(cfg, section, default_seed):
    seed = cfg.get(section, {}).get("seed")
    if seed is None:
        seed = default_seed
    return np.random.default_rng(seed)


def _build_matrix(spec, dim, rng, square_cols=None):
    if isinstance(spec, str):
        if spec == "random":
            return rng.standard_normal((dim, square_cols or dim))
        if spec == "identity":
            return np.eye(dim)
        raise ConfigError(f"unknown matrix spec '{spec}'")
    return np.asarray(spec, dtype=float)


def build_scenario(cfg, seed_override=None, threads=None):
    """Construct a harness Scenario from a validated config document."""
    seed = seed_override if seed_override is not None else cfg.get("seed", 0)
    mc = cfg.get("model", {})
    family = mc.get("family", "linear_drift")
    dim = mc.get("dim", 3)
    horizon = float(mc.get("horizon", 1.0))
    rng = np.random.default_rng(seed)

    bc = cfg.get("basis", {})
    kind = bc.get("kind", "canonical")
    scale = float(bc.get("scale", 1.0))
    basis_rng = np.random.default_rng(bc.get("seed", seed))

    if family == "schrodinger_real":
        h = (np.asarray(mc["h_real"], dtype=float)
             + 1j * np.asarray(mc.get("h_imag", np.zeros((dim, dim))), dtype=float))
        psi0 = (np.asarray(mc["psi0_real"], dtype=float)
                + 1j * np.asarray(mc.get("psi0_imag", np.zeros(dim)), dtype=float))
        psi1 = (np.asarray(mc["psi1_real"], dtype=float)
                + 1j * np.asarray(mc.get("psi1_imag", np.zeros(dim)), dtype=float))
        if kind != "hermitian_canonical":
            raise ConfigError("schrodinger_real requires basis.kind = hermitian_canonical")
        mu_basis = harness.hermitian_canonical_basis(dim)
        model, basis = harness.setup_schrodinger(h, mu_basis, psi0, psi1, horizon)
        elements = basis.elements * scale
        basis = dyn.BasisSet(elements)
    else:
        if kind == "canonical":
            basis = dyn.canonical_basis(dim)
        elif kind == "random":
            basis = dyn.random_basis(dim, bc.get("count", dim * dim), basis_rng)
        elif kind == "explicit":
            basis = dyn.BasisSet(np.asarray(bc["elements"], dtype=float))
        elif kind == "union":
            canonical = dyn.canonical_basis(dim).elements
            rnd = dyn.random_basis(dim, bc.get("count", dim * dim), basis_rng).elements
            basis = np.concatenate([canonical, rnd]) * scale
        else:
            raise ConfigError(f"unknown basis kind '{kind}'")
        if kind != "union" and scale != 1.0:
            basis = dyn.BasisSet(basis.elements * scale)
        observer = _build_matrix(mc.get("observer", "identity"), dim, rng)
        if family == "linear_drift":
            known = _build_matrix(mc.get("known_matrix", "random"), dim, rng)
            model = dyn.linear_drift(known, observer, horizon)
        elif family == "linear_control_matrix":
            known = _build_matrix(mc.get("known_matrix", "random"), dim, rng)
            y0 = _y0_of(mc, dim)
            model = dyn.linear_control_matrix(known, observer, y0, horizon)
        elif family == "bilinear_drift":
            known = _build_matrix(mc.get("known_matrix"), dim, rng)
            model = dyn.bilinear_drift(known, observer, _y0_of(mc, dim), horizon)
        elif family == "bilinear_control":
            known = _build_matrix(mc.get("known_matrix"), dim, rng)
            model = dyn.bilinear_control(known, observer, _y0_of(mc, dim), horizon)
        else:
            raise ConfigError(f"unknown model family '{family}'")

    n_elements = (len(basis) if isinstance(basis, np.ndarray) else basis.size)
    elements_arr = harness._elements_of(basis)

    ac = cfg.get("alpha_star", {})
    if ac.get("kind", "random") == "explicit":
        alpha_star = np.asarray(ac["values"], dtype=float)
    else:
        star_rng = np.random.default_rng(ac.get("seed", seed))
        alpha_star = star_rng.standard_normal(n_elements) * float(ac.get("scale", 1.0))

    cc = cfg.get("alpha_circ", {})
    circ_kind = cc.get("kind", "relative")
    if circ_kind == "explicit":
        alpha_circ = np.asarray(cc["values"], dtype=float)
    elif circ_kind == "zero":
        alpha_circ = np.zeros(n_elements)
    else:
        rho = float(cc.get("rho", 0.01))
        circ_rng = np.random.default_rng(cc.get("seed", seed + 1))
        u = circ_rng.standard_normal(n_elements)
        ref = np.tensordot(alpha_star, elements_arr, axes=1)
        dir_mat = np.tensordot(u, elements_arr, axes=1)
        alpha_circ = alpha_star + rho * np.linalg.norm(ref) * u / np.linalg.norm(dir_mat)

    oc = cfg.get("optimizer", {})
    optimizer = greedy.OptimizerConfig(
        multistart=oc.get("multistart", 5),
        max_iters=oc.get("max_iters", 200),
        grad_tol=oc.get("grad_tol", 1e-8),
        fd_step=oc.get("fd_step", 1e-6),
        seed=oc.get("seed", seed))

    kc = cfg.get("controls", {})
    box = ctl.AdmissibleBox(kc.get("lower", -1.0), kc.get("upper", 1.0))

    sw = cfg.get("sweep", {})
    gn_cfg = cfg.get("gn", {})
    return harness.Scenario(
        model=model, basis=basis, alpha_star=alpha_star, alpha_circ=alpha_circ,
        algorithm=cfg.get("algorithm", "LGR"),
        radii=tuple(sw.get("radii", (0.1, 0.5, 1.0))),
        trials=sw.get("trials", 100),
        tolerance=sw.get("tolerance", 0.005),
        seed=seed,
        n_segments=kc.get("n_segments", ctl.DEFAULT_N_SEGMENTS),
        n_steps=mc.get("n_steps"),
        box=box,
        optimizer=optimizer,
        algorithm_params=cfg.get("algorithm_params", {}),
        gn_params=gn_cfg,
        threads=threads if threads is not None else cfg.get("threads", 1))


def _y0_of(mc, dim):
    spec = mc.get("y0", "zero")
    if isinstance(spec, str):
        if spec == "zero":
            return np.zeros(dim)
        raise ConfigError(f"unknown y0 spec '{spec}'")
    return np.asarray(spec, dtype=float)


def _echo(out_dir, seed, quiet, *lines):
    os.makedirs(out_dir, exist_ok=True)
    if not quiet:
        for line in lines:
            print(line)


def cmd_offline(args):
    cfg = load_config(args.config)
    scenario = build_scenario(cfg, args.seed, args.threads)
    out_dir = args.out or cfg.get("out_dir", "opident_out")
    outcome = harness.design_controls(scenario)
    os.makedirs(out_dir, exist_ok=True)
    ctl_dir = os.path.join(out_dir, "controls")
    os.makedirs(ctl_dir, exist_ok=True)
    for i, sig in enumerate(outcome.controls):
        ctl.save_signal(sig, os.path.join(ctl_dir, f"control_{i:02d}.csv"))
    with open(os.path.join(out_dir, "basis_order.txt"), "w", encoding="utf-8") as fh:
        fh.write(",".join(str(i) for i in outcome.selected_indices) + "\n")
    okflag, lmin, lmax = greedy.pd_check(outcome.w_hat)
    with open(os.path.join(out_dir, "offline_log.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"seed: {scenario.seed}\n")
        fh.write(f"algorithm: {outcome.algorithm}\n")
        fh.write(f"controls: {len(outcome.controls)}\n")
        fh.write(f"W_hat PD: {okflag} (lambda_min={lmin:.6e}, lambda_max={lmax:.6e})\n")
        for step in outcome.steps:
            fh.write(f"step {step.kind} k={step.k} value={step.value:.9e}"
                     + (f" index={step.index}" if step.index is not None else "")
                     + (f" flags={','.join(step.flags)}" if step.flags else "") + "\n")
        for w in outcome.warnings:
            fh.write(f"warning: {w}\n")
    _echo(out_dir, scenario.seed, args.quiet,
          f"wrote {len(outcome.controls)} controls to {ctl_dir}",
          f"W_hat PD: {okflag}")
    if outcome.warnings or not okflag:
        return EXIT_WARNING
    return EXIT_OK


def cmd_online(args):
    cfg = load_config(args.config)
    scenario = build_scenario(cfg, args.seed, args.threads)
    out_dir = args.out or cfg.get("out_dir", "opident_out")
    ctl_dir = args.controls or os.path.join(out_dir, "controls")
    if not os.path.isdir(ctl_dir):
        print(f"error: controls directory '{ctl_dir}' not found", file=sys.stderr)
        return EXIT_ERROR
    names = sorted(f for f in os.listdir(ctl_dir) if f.endswith(".csv"))
    sigs = [ctl.load_signal(os.path.join(ctl_dir, f)) for f in names]
    if not sigs:
        print(f"error: no control CSVs in '{ctl_dir}'", file=sys.stderr)
        return EXIT_ERROR
    basis = scenario.basis
    if not isinstance(basis, dyn.BasisSet):
        print("error: online phase needs an independent basis "
              "(run OGR offline and use its selected basis)", file=sys.stderr)
        return EXIT_ERROR
    data = dyn.simulate_data(scenario.model, basis, scenario.alpha_star,
                             sigs, scenario.n_steps)
    problem = gn.GNProblem(scenario.model, basis, sigs, data, scenario.n_steps)
    report = gn.gn_solve(problem, scenario.alpha_circ, **scenario.gn_params)
    os.makedirs(out_dir, exist_ok=True)
    gn.save_report(report, os.path.join(out_dir, "gn_report"),
                   alpha_star=scenario.alpha_star)
    with open(os.path.join(out_dir, "gn_report.txt"), "a", encoding="utf-8") as fh:
        fh.write(f"seed: {scenario.seed}\n")
    rel = harness.matrix_relative_error(basis, report.final, scenario.alpha_star)
    _echo(out_dir, scenario.seed, args.quiet,
          f"verdict: {report.verdict} after {report.n_iters} iterations",
          f"relative Frobenius error: {rel:.3e}")
    if report.verdict == gn.SINGULAR:
        return EXIT_WARNING
    if report.verdict != gn.CONVERGED:
        return EXIT_ERROR
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config)
    scenario = build_scenario(cfg, args.seed, args.threads)
    out_dir = args.out or cfg.get("out_dir", "opident_out")
    result = harness.run_sweep(scenario)
    harness.emit_outputs(result, out_dir, seed=scenario.seed)
    _echo(out_dir, scenario.seed, args.quiet,
          *(f"radius {r}: {100.0 * s / t:.1f}% converged"
            for r, s, t in zip(result.radii, result.successes, result.trials)))
    if result.outcome.warnings:
        return EXIT_WARNING
    return EXIT_OK


def cmd_diagnose(args):
    cfg = load_config(args.config)
    scenario = build_scenario(cfg, args.seed, args.threads)
    model = scenario.model
    basis = scenario.basis
    elements = harness._elements_of(basis)
    a_circ = np.tensordot(np.asarray(scenario.alpha_circ, dtype=float),
                          elements, axes=1)
    lines = []
    failed = False
    if model.family in (dyn.LINEAR_DRIFT, dyn.LINEAR_CONTROL_MATRIX):
        if model.family == dyn.LINEAR_DRIFT:
            a_mat, b_mat = a_circ, model.known
        else:
            a_mat, b_mat = model.known, a_circ
        n = model.dim
        r_obs = linalg.numerical_rank(linalg.observability_matrix(model.observer, a_mat))
        r_ctr = linalg.numerical_rank(linalg.controllability_matrix(a_mat, b_mat))
        gram = linalg.gramian(a_mat, b_mat, model.horizon)
        lmin = float(np.linalg.eigvalsh(gram)[0])
        lines.append(f"observability rank: {r_obs}/{n} "
                     + ("PASS" if r_obs == n else "FAIL"))
        lines.append(f"controllability rank: {r_ctr}/{n} "
                     + ("PASS" if r_ctr == n else "FAIL"))
        lines.append(f"rank product vs N^2: {r_obs * r_ctr}/{n * n} "
                     + ("PASS" if r_obs * r_ctr == n * n else "FAIL"))
        lines.append(f"gramian lambda_min: {lmin:.6e} "
                     + ("PASS" if lmin > 1e-12 else "FAIL"))
        failed = r_obs != n or r_ctr != n or lmin <= 1e-12
    else:
        if model.family in (dyn.BILINEAR_CONTROL, dyn.SCHRODINGER_REAL):
            drift, coupling = model.known, a_circ
        else:
            drift, coupling = a_circ, model.known
        n = model.dim
        cap = n * (n - 1) // 2
        skew_ok = linalg.is_skew(drift) and linalg.is_skew(coupling)
        lie_dim = (linalg.lie_algebra_dimension(drift, coupling)
                   if skew_ok else -1)
        lines.append(f"skew generators: {'PASS' if skew_ok else 'FAIL'}")
        lines.append(f"Lie algebra dimension: {lie_dim}/{cap} "
                     + ("PASS" if lie_dim == cap else "FAIL"))
        obs_ok = False
        for c in (0.0, 1.0, -1.0, 0.5):
            r_obs = linalg.numerical_rank(
                linalg.observability_matrix(model.observer, drift + c * coupling))
            if r_obs == n:
                obs_ok = True
                break
        lines.append("constant-control observability: "
                     + ("PASS" if obs_ok else "FAIL"))
        failed = not (skew_ok and lie_dim == cap and obs_ok)
    out_dir = args.out or cfg.get("out_dir", "opident_out")
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "diagnose.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"seed: {scenario.seed}\n")
        for line in lines:
            fh.write(line + "\n")
    if not args.quiet:
        for line in lines:
            print(line)
    return EXIT_WARNING if failed else EXIT_OK


def cmd_oracle(args):
    report = harness.analytic_bilinear_oracle()
    if not args.quiet:
        for line in report.lines:
            print(line)
        print("oracle:", "PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_ERROR


def _help_epilog():
    lines = ["configuration keys (JSON):"]
    for key, desc in config_keys():
        lines.append(f"  {key:30s} {desc}")
    return "\n".join(lines)


def make_parser():
    parser = argparse.ArgumentParser(
        prog="opident",
        description="Greedy control design and Gauss-Newton operator identification.",
        epilog=_help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, needs_config in [
            ("offline", cmd_offline, True),
            ("online", cmd_online, True),
            ("sweep", cmd_sweep, True),
            ("diagnose", cmd_diagnose, True),
            ("oracle", cmd_oracle, False)]:
        p = sub.add_parser(name, epilog=_help_epilog(),
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        if needs_config:
            p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (0 = auto)")
        p.add_argument("--quiet", action="store_true", help="suppress stdout")
        if name == "online":
            p.add_argument("--controls", default=None,
                           help="directory of control CSVs from the offline phase")
        p.set_defaults(func=fn)
    return parser


def main(argv=None):
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
