"""Command-line front end.

Subcommands: simulate | identify | tune | mc | verify.  Flag values
resolve as built-in defaults, overridden by a `--config` key=value file
(dotted keys, e.g. `mc.runs = 50`), overridden by explicit flags.  Exit
codes: 0 success, 1 verification failure, 2 invalid flags or config,
3 model errors or unwritable outputs, 4 identify ran but did not
converge (result still written).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from types import SimpleNamespace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from ._version import __version__
from .checks import CHECKS
from .config import load_config, parse_bool
from .errors import ConfigError, RegkitError
from .estimators import (
    EstimateResult,
    atom_estimate,
    krls,
    krregls,
    regls,
    rho_from_lambda,
    rls,
    rregls,
    srls,
    srregls,
)
from .experiments import (
    BENCHMARKS,
    atomic_noise_config,
    disturbed_input_config,
    run_experiment,
)
from .kernels import assemble_S_eta, build_grid, scaled_ladder_base, tc_kernel
from .lti import SignalSpec, TransferFunction, disturb, generate_signal, impulse_response, simulate
from .regression import Dataset, build_phi, ls_estimate
from .tuning import (
    TuneConfig,
    cross_validate,
    estimate_noise_var,
    posterior_mean,
    reb_solve,
    tune_tc_kernel,
)

METHOD_CHOICES = (
    "ls",
    "regls",
    "rls",
    "srls",
    "krls",
    "rregls",
    "srregls",
    "krregls",
    "atom",
    "eb",
    "reb",
    "tck",
)
ROBUST_METHODS = ("rls", "srls", "krls", "rregls", "srregls", "krregls")
KERNEL_METHODS = ("regls", "krls", "rregls", "srregls", "krregls")

# Per-subcommand registry of (config key, namespace dest, converter,
# built-in default); --config values slot in between defaults and flags.
FlagSpec = Tuple[str, str, Callable[[str], object], object]
CONFIG_SPEC: Dict[str, List[FlagSpec]] = {}


def _register(sub: str, key: str, dest: str, conv: Callable[[str], object], default: object) -> None:
    CONFIG_SPEC.setdefault(sub, []).append((key, dest, conv, default))


def _choice(options: Tuple[str, ...]) -> Callable[[str], str]:
    def conv(value: str) -> str:
        if value not in options:
            raise ConfigError(f"must be one of {options}, got {value!r}")
        return value

    return conv


def _float_list(value: str) -> Tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in value.split(",") if tok.strip())
    except ValueError as exc:
        raise ConfigError(f"not a comma-separated float list: {value!r}") from exc


def _str_list(value: str) -> Tuple[str, ...]:
    return tuple(tok.strip() for tok in value.split(",") if tok.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regkit", description="FIR identification with regularized and robust estimators"
    )
    parser.add_argument("--version", action="version", version=f"regkit {__version__}")
    subs = parser.add_subparsers(dest="cmd", required=True)

    def add(sp: argparse.ArgumentParser, sub: str, *flags: str, dest: str,
            conv: Callable[[str], object], default: object, **kwargs) -> None:
        key = flags[0].lstrip("-").replace("-", "_")
        _register(sub, key, dest, conv, default)
        sp.add_argument(*flags, dest=dest, default=None, **kwargs)

    sim = subs.add_parser("simulate", help="generate a benchmark dataset CSV")
    add(sim, "simulate", "--system", dest="system", conv=_choice(("bench2", "bench4", "custom")),
        default="bench2", choices=["bench2", "bench4", "custom"])
    add(sim, "simulate", "--num", dest="num", conv=_float_list, default=None, type=_float_list)
    add(sim, "simulate", "--den", dest="den", conv=_float_list, default=None, type=_float_list)
    add(sim, "simulate", "--input", dest="input", conv=_choice(("prbs", "gaussian")),
        default="prbs", choices=["prbs", "gaussian"])
    add(sim, "simulate", "--n", dest="n", conv=int, default=127, type=int)
    add(sim, "simulate", "--scale", dest="scale", conv=float, default=1.0, type=float)
    add(sim, "simulate", "--sigma-d", dest="sigma_d", conv=float, default=0.0, type=float)
    add(sim, "simulate", "--sigma2", dest="sigma2", conv=float, default=0.0, type=float)
    add(sim, "simulate", "--seed", dest="seed", conv=int, default=None, type=int)
    add(sim, "simulate", "--n-g", dest="n_g", conv=int, default=None, type=int)
    sim.add_argument("--out", dest="out", required=True)
    sim.add_argument("--config", dest="config", default=None)

    ident = subs.add_parser("identify", help="fit one estimator to a dataset CSV")
    ident.add_argument("--data", dest="data", required=True)
    ident.add_argument("--method", dest="method", required=True, choices=list(METHOD_CHOICES))
    add(ident, "identify", "--n-g", dest="n_g", conv=int, default=80, type=int)
    add(ident, "identify", "--lambda", dest="lam", conv=float, default=None, type=float)
    add(ident, "identify", "--rho", dest="rho", conv=str, default=None)
    add(ident, "identify", "--kernel", dest="kernel", conv=_choice(("tc", "atomic")),
        default="tc", choices=["tc", "atomic"])
    add(ident, "identify", "--c", dest="c", conv=float, default=None, type=float)
    add(ident, "identify", "--alpha", dest="alpha", conv=float, default=None, type=float)
    add(ident, "identify", "--weight", dest="weight", conv=float, default=None, type=float)
    add(ident, "identify", "--sigma2", dest="sigma2", conv=float, default=None, type=float)
    add(ident, "identify", "--grid-angles", dest="grid_angles", conv=int, default=16, type=int)
    add(ident, "identify", "--grid-radii", dest="grid_radii", conv=int, default=15, type=int)
    add(ident, "identify", "--r-min", dest="r_min", conv=float, default=0.8, type=float)
    add(ident, "identify", "--r-max", dest="r_max", conv=float, default=1.0, type=float)
    add(ident, "identify", "--mm-iters", dest="mm_iters", conv=int, default=5, type=int)
    ident.add_argument("--out", dest="out", default=None)
    ident.add_argument("--g-out", dest="g_out", default=None)
    ident.add_argument("--config", dest="config", default=None)

    tune = subs.add_parser("tune", help="tune hyperparameters on a dataset CSV")
    tune.add_argument("--data", dest="data", required=True)
    tune.add_argument("--method", dest="method", required=True, choices=["eb", "reb", "tck"])
    add(tune, "tune", "--n-g", dest="n_g", conv=int, default=80, type=int)
    add(tune, "tune", "--lambda", dest="lam", conv=float, default=0.0, type=float)
    add(tune, "tune", "--sigma2", dest="sigma2", conv=float, default=None, type=float)
    add(tune, "tune", "--mm-iters", dest="mm_iters", conv=int, default=5, type=int)
    add(tune, "tune", "--grid-angles", dest="grid_angles", conv=int, default=16, type=int)
    add(tune, "tune", "--grid-radii", dest="grid_radii", conv=int, default=15, type=int)
    add(tune, "tune", "--r-min", dest="r_min", conv=float, default=0.8, type=float)
    add(tune, "tune", "--r-max", dest="r_max", conv=float, default=1.0, type=float)
    tune.add_argument("--trace-out", dest="trace_out", default=None)
    tune.add_argument("--out", dest="out", default=None)
    tune.add_argument("--config", dest="config", default=None)

    mc = subs.add_parser("mc", help="run a Monte Carlo experiment")
    mc.add_argument(
        "--experiment",
        dest="experiment",
        required=True,
        choices=["disturbed-input", "atomic-noise"],
    )
    add(mc, "mc", "--runs", dest="runs", conv=int, default=None, type=int)
    add(mc, "mc", "--seed", dest="seed", conv=int, default=None, type=int)
    add(mc, "mc", "--workers", dest="workers", conv=int, default=None, type=int)
    add(mc, "mc", "--methods", dest="methods", conv=_str_list, default=None, type=_str_list)
    add(mc, "mc", "--n-d", dest="n_d", conv=int, default=None, type=int)
    add(mc, "mc", "--n-g", dest="n_g", conv=int, default=None, type=int)
    add(mc, "mc", "--sigma-d", dest="sigma_d", conv=float, default=None, type=float)
    add(mc, "mc", "--sigma2", dest="sigma2", conv=float, default=None, type=float)
    add(mc, "mc", "--grid-angles", dest="grid_angles", conv=int, default=None, type=int)
    add(mc, "mc", "--grid-radii", dest="grid_radii", conv=int, default=None, type=int)
    add(mc, "mc", "--mm-iters", dest="mm_iters", conv=int, default=None, type=int)
    mc.add_argument("--out", dest="out", required=True)
    mc.add_argument("--config", dest="config", default=None)

    ver = subs.add_parser("verify", help="run the built-in numerical checks")
    ver.add_argument("--check", dest="check", default=None, choices=sorted(CHECKS))
    add(ver, "verify", "--trials", dest="trials", conv=int, default=None, type=int)
    add(ver, "verify", "--seed", dest="seed", conv=int, default=None, type=int)
    add(ver, "verify", "--quick", dest="quick", conv=parse_bool, default=False,
        action="store_true")
    add(ver, "verify", "--inject-failure", dest="inject_failure", conv=parse_bool,
        default=False, action="store_true")
    ver.add_argument("--config", dest="config", default=None)
    return parser


def _resolve(ns: argparse.Namespace) -> SimpleNamespace:
    """Apply precedence built-in < config file < flags for one subcommand."""
    spec = CONFIG_SPEC.get(ns.cmd, [])
    cfg: Dict[str, str] = {}
    if getattr(ns, "config", None):
        cfg = load_config(ns.config)
        known = {f"{s}.{key}" for s, entries in CONFIG_SPEC.items() for key, *_ in entries}
        for key in cfg:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
    out = SimpleNamespace(**vars(ns))
    for key, dest, conv, default in spec:
        value = getattr(ns, dest, None)
        if value is None:
            raw = cfg.get(f"{ns.cmd}.{key}")
            value = conv(raw) if raw is not None else default
        setattr(out, dest, value)
    return out


def _master_seed(value: Optional[int]) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get("REGKIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"REGKIT_SEED must be an integer, got {env!r}") from exc
    return 0


def _fmt(x: float) -> str:
    return f"{float(x):.17g}"


def cmd_simulate(o: SimpleNamespace) -> int:
    if o.system == "custom":
        if o.num is None or o.den is None:
            raise ConfigError("--system custom requires --num and --den")
        tf = TransferFunction(tuple(o.num), tuple(o.den))
    else:
        tf = BENCHMARKS[o.system]
    seed = _master_seed(o.seed)
    n = int(o.n)
    n_g = int(o.n_g) if o.n_g is not None else n
    g = impulse_response(tf, n_g)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    s_u, s_d, s_e = (int(rng.integers(2**63)) for _ in range(3))
    u = generate_signal(SignalSpec(o.input, n, float(o.scale), s_u))
    y = simulate(g, u)
    if float(o.sigma2) > 0:
        y, _ = disturb(y, float(np.sqrt(float(o.sigma2))), s_e)
    v = u
    if float(o.sigma_d) > 0:
        v, _ = disturb(u, float(o.sigma_d), s_d)
    with open(o.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "v", "y"])
        for t in range(n):
            w.writerow([t, _fmt(u[t]), _fmt(v[t]), _fmt(y[t])])
    print(
        f"wrote {n} rows to {o.out} "
        f"(system={o.system}, input={o.input}, sigma_d={float(o.sigma_d):g}, "
        f"sigma2={float(o.sigma2):g}, n_g={n_g}, seed={seed})"
    )
    return 0


def _result_record(res: EstimateResult, n_g: int, extras: Dict[str, object]) -> Dict[str, object]:
    record = res.to_record()
    record["n_g"] = n_g
    record.update(extras)
    return record


def _write_identify(o: SimpleNamespace, record: Dict[str, object], g: np.ndarray) -> None:
    text = json.dumps(record, indent=2)
    if o.out:
        with open(o.out, "w") as fh:
            fh.write(text + "\n")
        print(
            f"method={record['method']} converged={record['converged']} "
            f"objective={record['objective']:.6g} -> {o.out}"
        )
    else:
        print(text)
    if o.g_out:
        with open(o.g_out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "g"])
            for k, val in enumerate(g):
                w.writerow([k, _fmt(val)])


def cmd_identify(o: SimpleNamespace) -> int:
    ds = Dataset.from_csv(o.data, n_g=int(o.n_g))
    Phi = build_phi(ds.u, ds.n_g)
    y = ds.y
    sigma2 = float(o.sigma2) if o.sigma2 is not None else estimate_noise_var(Phi, y)
    extras: Dict[str, object] = {"sigma2": sigma2}

    def resolved_kernel():
        if o.kernel == "tc":
            if o.c is not None and o.alpha is not None:
                extras.update(kernel="tc", c=float(o.c), alpha=float(o.alpha))
                return tc_kernel(float(o.c), float(o.alpha), ds.n_g)
            sel = tune_tc_kernel(Phi, y, sigma2)
            extras.update(kernel="tc", c=sel.c, alpha=sel.alpha)
            return sel.kernel
        grid = build_grid(
            int(o.grid_angles), int(o.grid_radii), float(o.r_min), float(o.r_max),
            logspace_base=scaled_ladder_base(int(o.grid_radii)), n_g=ds.n_g
        )
        res = reb_solve(Phi, y, grid, sigma2, TuneConfig(mm_iters=int(o.mm_iters)))
        extras.update(kernel="atomic", eta_active=int(np.sum(res.eta > 1e-6 * max(res.eta.max(), 1e-300))))
        return assemble_S_eta(grid, res.eta)

    method = o.method
    K = resolved_kernel() if method in KERNEL_METHODS or (
        method in ROBUST_METHODS and o.rho == "from-lambda"
    ) else None
    lam = float(o.lam) if o.lam is not None else 1.0
    rho = None
    if method in ROBUST_METHODS:
        if o.rho is None:
            raise ConfigError(f"--rho is required for method {method}")
        if o.rho == "from-lambda":
            g_reg = regls(Phi, y, K, lam).g
            rho = rho_from_lambda(g_reg, Phi, y, K, lam)
        else:
            try:
                rho = float(o.rho)
            except ValueError as exc:
                raise ConfigError(f"--rho must be a number or from-lambda, got {o.rho!r}") from exc
        extras["rho"] = rho

    if method == "ls":
        g = ls_estimate(Phi, y)
        r = y - Phi @ g
        res = EstimateResult("ls", g, float(r @ r), 1)
    elif method == "regls":
        extras["lambda"] = lam
        res = regls(Phi, y, K, lam)
    elif method == "rls":
        res = rls(Phi, y, rho)
    elif method == "srls":
        res = srls(Phi, y, rho)
    elif method == "krls":
        res = krls(Phi, y, K, rho)
    elif method == "rregls":
        extras["lambda"] = lam
        res = rregls(Phi, y, K, rho, lam)
    elif method == "krregls":
        extras["lambda"] = lam
        res = krregls(Phi, y, K, rho, lam)
    elif method == "srregls":
        extras["lambda"] = lam
        res = srregls(Phi, y, K, rho, lam)
    elif method == "atom":
        grid = build_grid(
            int(o.grid_angles), int(o.grid_radii), float(o.r_min), float(o.r_max),
            logspace_base=scaled_ladder_base(int(o.grid_radii)), n_g=ds.n_g
        )
        weight = float(o.weight) if o.weight is not None else cross_validate(
            ds,
            tuple(np.logspace(0, 4, 5)),
            lambda P, yy, c: atom_estimate(P, yy, grid, c).g,
        ).best
        extras["weight"] = weight
        res = atom_estimate(Phi, y, grid, weight)
    elif method in ("eb", "reb"):
        grid = build_grid(
            int(o.grid_angles), int(o.grid_radii), float(o.r_min), float(o.r_max),
            logspace_base=scaled_ladder_base(int(o.grid_radii)), n_g=ds.n_g
        )

        def fit(P: np.ndarray, yy: np.ndarray, rate: float) -> np.ndarray:
            s2 = estimate_noise_var(P, yy)
            tr = reb_solve(P, yy, grid, s2, TuneConfig(lam=rate, mm_iters=int(o.mm_iters)))
            S = assemble_S_eta(grid, tr.eta)
            return posterior_mean(P, yy, S, s2)

        if method == "eb":
            rate = 0.0
        else:
            rate = float(o.lam) if o.lam is not None else cross_validate(
                ds, tuple(np.logspace(-1, 1, 5)), fit
            ).best
            extras["lambda"] = rate
        tr = reb_solve(Phi, y, grid, sigma2, TuneConfig(lam=rate, mm_iters=int(o.mm_iters)))
        S = assemble_S_eta(grid, tr.eta)
        g = posterior_mean(Phi, y, S, sigma2)
        extras["eta_active"] = int(np.sum(tr.eta > 1e-6 * max(float(tr.eta.max()), 1e-300)))
        extras["trace"] = [float(v) for v in tr.trace]
        res = EstimateResult(method, g, tr.objective, tr.iterations, converged=tr.converged)
    else:  # tck
        sel = tune_tc_kernel(Phi, y, sigma2)
        extras.update(c=sel.c, alpha=sel.alpha)
        g = posterior_mean(Phi, y, sel.kernel, sigma2)
        res = EstimateResult("tck", g, sel.objective, 1)

    record = _result_record(res, ds.n_g, extras)
    _write_identify(o, record, res.g)
    return 0 if res.converged else 4


def cmd_tune(o: SimpleNamespace) -> int:
    ds = Dataset.from_csv(o.data, n_g=int(o.n_g))
    Phi = build_phi(ds.u, ds.n_g)
    y = ds.y
    sigma2 = float(o.sigma2) if o.sigma2 is not None else estimate_noise_var(Phi, y)
    if o.method == "tck":
        if o.trace_out:
            raise ConfigError("--trace-out applies to eb/reb only")
        sel = tune_tc_kernel(Phi, y, sigma2)
        record: Dict[str, object] = {
            "method": "tck",
            "c": sel.c,
            "alpha": sel.alpha,
            "objective": sel.objective,
            "sigma2": sigma2,
        }
    else:
        grid = build_grid(
            int(o.grid_angles), int(o.grid_radii), float(o.r_min), float(o.r_max),
            logspace_base=scaled_ladder_base(int(o.grid_radii)), n_g=ds.n_g
        )
        lam = float(o.lam) if o.method == "reb" else 0.0
        tr = reb_solve(Phi, y, grid, sigma2, TuneConfig(lam=lam, mm_iters=int(o.mm_iters)))
        record = {
            "method": o.method,
            "lambda": lam,
            "objective": tr.objective,
            "iterations": tr.iterations,
            "converged": tr.converged,
            "sigma2": sigma2,
            "eta_active": int(np.sum(tr.eta > 1e-6 * max(float(tr.eta.max()), 1e-300))),
            "trace": [float(v) for v in tr.trace],
        }
        if o.trace_out:
            with open(o.trace_out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iter", "objective"])
                for i, val in enumerate(tr.trace):
                    w.writerow([i, _fmt(val)])
    text = json.dumps(record, indent=2)
    if o.out:
        with open(o.out, "w") as fh:
            fh.write(text + "\n")
        print(f"method={record['method']} objective={record['objective']:.6g} -> {o.out}")
    else:
        print(text)
    return 0


def cmd_mc(o: SimpleNamespace) -> int:
    os.makedirs(o.out, exist_ok=True)
    if not os.access(o.out, os.W_OK):
        raise OSError(f"output directory {o.out!r} is not writable")
    overrides: Dict[str, object] = {"out_dir": o.out}
    if o.workers is not None:
        overrides["workers"] = int(o.workers)
    else:
        overrides["workers"] = os.cpu_count() or 1
    for dest, field in (
        ("n_d", "n_d"),
        ("n_g", "n_g"),
        ("sigma_d", "sigma_d"),
        ("sigma2", "sigma2"),
        ("grid_angles", "grid_angles"),
        ("grid_radii", "grid_radii"),
        ("mm_iters", "mm_iters"),
        ("methods", "methods"),
    ):
        value = getattr(o, dest)
        if value is not None:
            overrides[field] = value
    factory = (
        disturbed_input_config if o.experiment == "disturbed-input" else atomic_noise_config
    )
    kwargs = {"master_seed": _master_seed(o.seed), **overrides}
    config = factory(int(o.runs), **kwargs) if o.runs is not None else factory(**kwargs)
    report = run_experiment(config)
    for method in config.methods:
        s = report.aggregates[method]
        print(
            f"{method}: mse={s.mse:.6g} bias2={s.bias2:.6g} var={s.var:.6g} "
            f"median_fit={s.median_fit:.6g} n_ok={s.n_ok} n_fail={s.n_fail}"
        )
    return 0


def cmd_verify(o: SimpleNamespace) -> int:
    names = [o.check] if o.check else list(CHECKS)
    perturb = 1.0 if o.inject_failure else 0.0
    failures = 0
    for name in names:
        kwargs: Dict[str, object] = {"perturb": perturb, "quick": bool(o.quick)}
        if o.trials is not None:
            kwargs["trials"] = int(o.trials)
        if o.seed is not None:
            kwargs["seed"] = int(o.seed)
        ok, msg = CHECKS[name](**kwargs)
        print(f"{'PASS' if ok else 'FAIL'} {name}: {msg}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} of {len(names)} checks failed", file=sys.stderr)
    return 1 if failures else 0


DISPATCH = {
    "simulate": cmd_simulate,
    "identify": cmd_identify,
    "tune": cmd_tune,
    "mc": cmd_mc,
    "verify": cmd_verify,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        o = _resolve(ns)
        return DISPATCH[ns.cmd](o)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RegkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
