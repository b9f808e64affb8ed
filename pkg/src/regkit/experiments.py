"""Monte Carlo harnesses for the two benchmark studies.

Disturbed-input study: PRBS excitation of a 2nd-order plant, noiseless
output, Gaussian disturbance on the measured input; the eight LS /
regularized / robust estimators run per realization with radii matched
to the true perturbation norms.

Atomic-noise study: Gaussian excitation of a 4th-order plant with
output noise; LS, a tuned TC kernel, the l1 atom fit, and the empirical
Bayes pair (plain and sparsity-regularized) are compared.

Runs map over independent RNG streams keyed by (master seed, run index)
so execution order and worker count never change the records.
"""

from __future__ import annotations

import concurrent.futures
import csv
import os
from dataclasses import dataclass, field, replace
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ._version import __version__
from .errors import ConfigError
from .estimators import (
    EstimateResult,
    atom_estimate,
    krls,
    krregls,
    regls,
    rls,
    rregls,
    srls,
    srregls,
)
from .kernels import assemble_S_eta, build_grid, scaled_ladder_base, tc_kernel
from .lti import SignalSpec, TransferFunction, disturb, generate_signal, impulse_response, simulate
from .metrics import bias_var_mse, fit_w, r_squared
from .regression import Dataset, build_phi, ls_estimate
from .tuning import (
    TuneConfig,
    cross_validate,
    estimate_noise_var,
    posterior_mean,
    reb_solve,
    tune_tc_kernel,
)

BENCHMARKS: Dict[str, TransferFunction] = {
    "bench2": TransferFunction((0.02008, 0.04017, 0.02008), (1.0, -1.561, 0.6414)),
    "bench4": TransferFunction((0.0, 1.0, 0.5), (1.0, -2.2, 2.42, -1.87, 0.7225)),
}

DISTURBED_METHODS = ("ls", "regls", "rls", "krls", "rregls", "krregls", "srls", "srregls")
ATOMIC_METHODS = ("ls", "tck", "atom", "eb", "reb")


@dataclass(frozen=True)
class ExperimentConfig:
    which: str
    runs: int
    n_d: int
    n_g: int
    methods: Tuple[str, ...]
    master_seed: int = 0
    sigma_d: float = 0.1
    sigma2: float = 0.01
    grid_angles: int = 16
    grid_radii: int = 15
    grid_r_min: float = 0.8
    grid_r_max: float = 1.0
    cv_lambda_grid: Tuple[float, ...] = tuple(np.logspace(-4, 2, 7))
    cv_weight_grid: Tuple[float, ...] = tuple(np.logspace(0, 4, 5))
    cv_rate_grid: Tuple[float, ...] = tuple(np.logspace(-1, 1, 5))
    rho_policy: str = "matched"
    mm_iters: int = 5
    workers: int = 1
    out_dir: Optional[str] = None

    def __post_init__(self) -> None:
        if self.which not in ("disturbed_input", "atomic_noise"):
            raise ConfigError(f"unknown experiment {self.which!r}")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if min(self.n_d, self.n_g, self.grid_angles, self.grid_radii, self.workers) < 1:
            raise ConfigError("dimensions and workers must be positive")
        if self.sigma_d < 0 or self.sigma2 <= 0:
            raise ConfigError("noise levels must be nonnegative (sigma2 positive)")
        if self.rho_policy != "matched":
            raise ConfigError(f"unknown rho policy {self.rho_policy!r}")
        allowed = DISTURBED_METHODS if self.which == "disturbed_input" else ATOMIC_METHODS
        bad = [m for m in self.methods if m not in allowed]
        if bad or not self.methods:
            raise ConfigError(f"methods must be a nonempty subset of {allowed}, got {self.methods}")

    def echo(self) -> str:
        def fmt(v: object) -> str:
            if isinstance(v, float):
                return f"{v:.17g}"
            if isinstance(v, tuple):
                return ",".join(fmt(x) for x in v)
            return str(v)

        pairs = {
            "experiment.which": self.which,
            "experiment.runs": self.runs,
            "experiment.n_d": self.n_d,
            "experiment.n_g": self.n_g,
            "experiment.methods": self.methods,
            "experiment.master_seed": self.master_seed,
            "experiment.sigma_d": self.sigma_d,
            "experiment.sigma2": self.sigma2,
            "experiment.rho_policy": self.rho_policy,
            "experiment.mm_iters": self.mm_iters,
            "experiment.workers": self.workers,
            "grid.n_angles": self.grid_angles,
            "grid.n_radii": self.grid_radii,
            "grid.r_min": self.grid_r_min,
            "grid.r_max": self.grid_r_max,
            "cv.lambda_grid": self.cv_lambda_grid,
            "cv.weight_grid": self.cv_weight_grid,
            "cv.rate_grid": self.cv_rate_grid,
            "version": __version__,
        }
        return "".join(f"{k}={fmt(v)}\n" for k, v in sorted(pairs.items()))


def disturbed_input_config(runs: int = 1000, master_seed: int = 0, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        which="disturbed_input",
        runs=runs,
        n_d=127,
        n_g=80,
        methods=DISTURBED_METHODS,
        master_seed=master_seed,
    )
    return replace(cfg, **overrides) if overrides else cfg


def atomic_noise_config(runs: int = 150, master_seed: int = 0, **overrides) -> ExperimentConfig:
    cfg = ExperimentConfig(
        which="atomic_noise",
        runs=runs,
        n_d=150,
        n_g=50,
        methods=ATOMIC_METHODS,
        master_seed=master_seed,
    )
    return replace(cfg, **overrides) if overrides else cfg


class RunRecord(NamedTuple):
    run_id: int
    method: str
    fit_w: float
    r2: float
    sq_err: float
    converged: bool


class MethodSummary(NamedTuple):
    bias2: float
    var: float
    mse: float
    median_fit: float
    n_ok: int
    n_fail: int


@dataclass
class McReport:
    records: List[RunRecord]
    aggregates: Dict[str, MethodSummary]
    config: ExperimentConfig
    version: str = __version__

    def write(self, out_dir: str) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "runs.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["run_id", "method", "fit_w", "r2", "sq_err", "converged"])
            for rec in self.records:
                w.writerow(
                    [
                        rec.run_id,
                        rec.method,
                        f"{rec.fit_w:.17g}",
                        f"{rec.r2:.17g}",
                        f"{rec.sq_err:.17g}",
                        rec.converged,
                    ]
                )
        with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "bias2", "var", "mse", "median_fit", "n_ok", "n_fail"])
            for method in self.config.methods:
                s = self.aggregates[method]
                w.writerow(
                    [
                        method,
                        f"{s.bias2:.17g}",
                        f"{s.var:.17g}",
                        f"{s.mse:.17g}",
                        f"{s.median_fit:.17g}",
                        s.n_ok,
                        s.n_fail,
                    ]
                )
        with open(os.path.join(out_dir, "config.echo"), "w") as fh:
            fh.write(self.config.echo())


# One run returns, per method, the estimate (None on failure) and the
# solver's convergence flag; metrics are derived in the single-threaded
# aggregation pass.
RunOutput = Dict[str, Tuple[Optional[np.ndarray], bool]]


def _sub_seeds(config: ExperimentConfig, idx: int, count: int) -> List[int]:
    rng = np.random.default_rng(np.random.SeedSequence([config.master_seed, idx]))
    return [int(rng.integers(2**63)) for _ in range(count)]


def _grab(out: RunOutput, method: str, thunk) -> None:
    try:
        res = thunk()
    except Exception:
        out[method] = (None, False)
        return
    if isinstance(res, EstimateResult):
        out[method] = (res.g, res.converged)
    else:
        out[method] = (np.asarray(res, dtype=float), True)


def _disturbed_run(config: ExperimentConfig, idx: int) -> RunOutput:
    s_u, s_d = _sub_seeds(config, idx, 2)
    u = generate_signal(SignalSpec("prbs", config.n_d, 1.0, s_u))
    g_true = impulse_response(BENCHMARKS["bench2"], config.n_g)
    y = simulate(g_true, u)
    v, d = disturb(u, config.sigma_d, s_d)
    Psi = build_phi(v, config.n_g)
    Delta_true = build_phi(d, config.n_g)

    out: RunOutput = {}
    need_kernel = any(m != "ls" and m != "rls" and m != "srls" for m in config.methods)
    K = None
    lam = float("nan")
    if need_kernel:
        try:
            sigma2 = estimate_noise_var(Psi, y)
            K = tune_tc_kernel(Psi, y, sigma2).kernel
            lam = cross_validate(
                Dataset(v, y, config.n_g),
                config.cv_lambda_grid,
                lambda P, yy, c: regls(P, yy, K, c).g,
            ).best
        except Exception:
            K = None

    rho_std = float(np.linalg.norm(Delta_true, "fro"))
    rho_str = float(np.linalg.norm(d))

    for method in config.methods:
        if method == "ls":
            _grab(out, method, lambda: ls_estimate(Psi, y))
        elif method == "rls":
            _grab(out, method, lambda: rls(Psi, y, rho_std))
        elif method == "srls":
            _grab(out, method, lambda: srls(Psi, y, rho_str))
        elif K is None:
            out[method] = (None, False)
        elif method == "regls":
            _grab(out, method, lambda: regls(Psi, y, K, lam))
        elif method == "krls":
            rho_k = float(np.linalg.norm(Delta_true @ K.R, "fro"))
            _grab(out, method, lambda: krls(Psi, y, K, rho_k))
        elif method == "rregls":
            _grab(out, method, lambda: rregls(Psi, y, K, rho_std, lam))
        elif method == "krregls":
            rho_k = float(np.linalg.norm(Delta_true @ K.R, "fro"))
            _grab(out, method, lambda: krregls(Psi, y, K, rho_k, lam))
        elif method == "srregls":
            _grab(out, method, lambda: srregls(Psi, y, K, rho_str, lam))
    return out


def _atomic_run(config: ExperimentConfig, idx: int) -> RunOutput:
    s_u, s_e = _sub_seeds(config, idx, 2)
    u = generate_signal(SignalSpec("gaussian", config.n_d, 1.0, s_u))
    g_true = impulse_response(BENCHMARKS["bench4"], config.n_g)
    y, _ = disturb(simulate(g_true, u), float(np.sqrt(config.sigma2)), s_e)
    Phi = build_phi(u, config.n_g)

    out: RunOutput = {}
    try:
        sigma2_hat = estimate_noise_var(Phi, y)
    except Exception:
        return {m: (None, False) for m in config.methods}
    dictionary = None
    if any(m in ("atom", "eb", "reb") for m in config.methods):
        dictionary = build_grid(
            config.grid_angles,
            config.grid_radii,
            config.grid_r_min,
            config.grid_r_max,
            logspace_base=scaled_ladder_base(config.grid_radii),
            n_g=config.n_g,
        )

    def eb_fit(P: np.ndarray, yy: np.ndarray, lam: float) -> np.ndarray:
        s2 = estimate_noise_var(P, yy)
        cfg = TuneConfig(lam=lam, mm_iters=config.mm_iters)
        res = reb_solve(P, yy, dictionary, s2, cfg)
        S = assemble_S_eta(dictionary, res.eta)
        return posterior_mean(P, yy, S, s2)

    for method in config.methods:
        if method == "ls":
            _grab(out, method, lambda: ls_estimate(Phi, y))
        elif method == "tck":

            def tck_fit() -> np.ndarray:
                sel = tune_tc_kernel(Phi, y, sigma2_hat)
                return posterior_mean(Phi, y, sel.kernel, sigma2_hat)

            _grab(out, method, tck_fit)
        elif method == "atom":

            def atom_fit() -> EstimateResult:
                weight = cross_validate(
                    Dataset(u, y, config.n_g),
                    config.cv_weight_grid,
                    lambda P, yy, c: atom_estimate(P, yy, dictionary, c).g,
                ).best
                return atom_estimate(Phi, y, dictionary, weight)

            _grab(out, method, atom_fit)
        elif method == "eb":

            def eb_run() -> np.ndarray:
                return eb_fit(Phi, y, 0.0)

            _grab(out, method, eb_run)
        elif method == "reb":

            def reb_run() -> np.ndarray:
                lam = cross_validate(
                    Dataset(u, y, config.n_g), config.cv_rate_grid, eb_fit
                ).best
                return eb_fit(Phi, y, lam)

            _grab(out, method, reb_run)
    return out


def _run_one(args: Tuple[ExperimentConfig, int]) -> Tuple[int, RunOutput]:
    config, idx = args
    runner = _disturbed_run if config.which == "disturbed_input" else _atomic_run
    return idx, runner(config, idx)


def _true_response(config: ExperimentConfig) -> np.ndarray:
    name = "bench2" if config.which == "disturbed_input" else "bench4"
    return impulse_response(BENCHMARKS[name], config.n_g)


def _aggregate(config: ExperimentConfig, outputs: List[RunOutput]) -> McReport:
    g_true = _true_response(config)
    records: List[RunRecord] = []
    estimates: Dict[str, List[np.ndarray]] = {m: [] for m in config.methods}
    fits: Dict[str, List[float]] = {m: [] for m in config.methods}
    fails: Dict[str, int] = {m: 0 for m in config.methods}
    for idx, out in enumerate(outputs):
        for method in config.methods:
            g_hat, converged = out[method]
            if g_hat is None:
                records.append(
                    RunRecord(idx, method, float("nan"), float("nan"), float("nan"), False)
                )
                fails[method] += 1
                continue
            w = fit_w(g_true, g_hat)
            records.append(
                RunRecord(
                    idx,
                    method,
                    w,
                    r_squared(g_true, g_hat),
                    float(np.sum((g_hat - g_true) ** 2)) / config.n_g,
                    converged,
                )
            )
            estimates[method].append(g_hat)
            fits[method].append(w)
    aggregates: Dict[str, MethodSummary] = {}
    for method in config.methods:
        n_ok = len(estimates[method])
        if n_ok == 0:
            aggregates[method] = MethodSummary(
                float("nan"), float("nan"), float("nan"), float("nan"), 0, fails[method]
            )
            continue
        bias2, var, mse = bias_var_mse(g_true, estimates[method])
        aggregates[method] = MethodSummary(
            bias2, var, mse, float(np.median(fits[method])), n_ok, fails[method]
        )
    return McReport(records=records, aggregates=aggregates, config=config)


def run_experiment(config: ExperimentConfig) -> McReport:
    """Execute all runs, aggregate, and write outputs if out_dir is set."""
    tasks = [(config, idx) for idx in range(config.runs)]
    if config.workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    results.sort(key=lambda pair: pair[0])
    report = _aggregate(config, [out for _, out in results])
    if config.out_dir is not None:
        report.write(config.out_dir)
    return report


def run_disturbed_input(config: ExperimentConfig) -> McReport:
    if config.which != "disturbed_input":
        raise ConfigError("config.which must be disturbed_input")
    return run_experiment(config)


def run_atomic_noise(config: ExperimentConfig) -> McReport:
    if config.which != "atomic_noise":
        raise ConfigError("config.which must be atomic_noise")
    return run_experiment(config)
