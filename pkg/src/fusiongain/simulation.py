"""Synthetic data generation, closed-form truth values, and the Monte Carlo runner.

The data generating process draws covariates (S, W) from a standard bivariate
normal with correlation rho and sets Y = b (S + W) + eps with independent
standard normal noise.  All three assessment targets have analytic (or
one-dimensional-quadrature) truth values under this process, so replicated
assessments can be scored by absolute error and interval coverage.  Every
replication is keyed by (run seed, replication index) through counter-based
streams, which makes cells and replications reproducible in isolation and
bit-identical under any degree of parallelism.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np

from . import rng
from .core import normal_cdf, normal_quantile
from .errors import FusionGainError, OutOfRange
from .linreg_utility import assess_linreg
from .mean_utility import MeanAssessmentConfig, assess_mean
from .nuisance import Dataset
from .quantile_utility import QuantileAssessmentConfig, assess_quantile

METHODS = ("mean-linear", "mean-conditional", "quantile", "linreg")

CSV_COLUMNS = ("method", "b", "n", "extra", "reps", "seed", "MAE", "SDAE", "AL", "CR")


@dataclass(frozen=True)
class DgpConfig:
    b: float
    rho: float = 0.2
    n: int = 1000
    nu: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise OutOfRange(f"|rho| must be < 1, got {self.rho}")
        if self.n < 1:
            raise OutOfRange("n must be >= 1")
        if not 0.0 <= self.nu < 1.0:
            raise OutOfRange(f"nu must be in [0, 1), got {self.nu}")


def generate_dgp(cfg: DgpConfig, stream: np.random.Generator | None = None) -> Dataset:
    """Draw one dataset from the process Y = b (S + W) + eps.

    Normals come from the inverse CDF of the stream's uniforms, three columns
    per observation in the fixed order (S driver, W driver, noise); W is
    built from the first two by Cholesky so that corr(S, W) = rho.
    """
    gen = stream if stream is not None else rng.substream(cfg.seed, rng.DOMAIN_DGP)
    z = rng.standard_normals(gen, (cfg.n, 3))
    s = z[:, 0]
    w = cfg.rho * s + math.sqrt(1.0 - cfg.rho**2) * z[:, 1]
    y = cfg.b * (s + w) + z[:, 2]
    return Dataset(y, np.column_stack([s, w]), ("S", "W"))


def true_theta_mean(b: float, rho: float, nu: float) -> float:
    """(1 - nu) / (2 b^2 (1 + rho) + 1) + nu."""
    if not abs(rho) < 1.0:
        raise OutOfRange(f"|rho| must be < 1, got {rho}")
    return (1.0 - nu) / (2.0 * b * b * (1.0 + rho) + 1.0) + nu


def true_theta_linreg(b: float, rho: float, nu: float) -> float:
    """1 - (1 - nu)(1 - rho^2) / (2 (1 + b^2 (1 - rho^2)))."""
    if not abs(rho) < 1.0:
        raise OutOfRange(f"|rho| must be < 1, got {rho}")
    one_minus_rho_sq = 1.0 - rho * rho
    return 1.0 - (1.0 - nu) * one_minus_rho_sq / (2.0 * (1.0 + b * b * one_minus_rho_sq))


_GH_ORDERS = (40, 60, 80, 120, 180)


def _gauss_hermite_expectation(fn, abs_tol: float = 1e-10) -> float:
    """E[fn(T)] for standard normal T, escalating the quadrature order.

    Successive orders must agree to ``abs_tol``; the integrands used here are
    analytic and bounded, for which Gauss-Hermite converges superexponentially.
    """
    previous = None
    value = math.nan
    for order in _GH_ORDERS:
        nodes, weights = np.polynomial.hermite.hermgauss(order)
        value = float(weights @ fn(math.sqrt(2.0) * nodes)) / math.sqrt(math.pi)
        if previous is not None and abs(value - previous) <= abs_tol:
            return value
        previous = value
    return value


def true_theta_quantile(b: float, rho: float, nu: float, tau: float) -> float:
    """Truth value for the quantile target, by one-dimensional quadrature.

    The signal b(S + W) is normal with variance 2 b^2 (1 + rho), so the
    defining expectation reduces to E[Phi(sd_Y * u_tau - signal)^2] over that
    normal law.
    """
    if not 0.0 < tau < 1.0:
        raise OutOfRange(f"tau must be in (0, 1), got {tau}")
    if not abs(rho) < 1.0:
        raise OutOfRange(f"|rho| must be < 1, got {rho}")
    total_sd = math.sqrt(2.0 * b * b * (1.0 + rho) + 1.0)
    signal_sd = abs(b) * math.sqrt(2.0 * (1.0 + rho))
    u_tau = normal_quantile(tau)
    if signal_sd == 0.0:
        expectation = tau * tau
    else:
        expectation = _gauss_hermite_expectation(
            lambda t: np.asarray(normal_cdf(total_sd * u_tau - signal_sd * t)) ** 2
        )
    return (1.0 - nu) * (tau - expectation) / (tau * (1.0 - tau)) + nu


@dataclass(frozen=True)
class MonteCarloCell:
    """One table cell: an assessment method applied to one DGP configuration."""

    method: str
    dgp: DgpConfig
    tau: float = 0.5
    alpha: float = 0.95
    n_folds: int = 5
    regressor: str = "local-linear"  # mean-conditional / quantile nuisance
    s_index: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise OutOfRange(f"method must be one of {METHODS}, got {self.method!r}")

    @property
    def extra(self) -> str:
        if self.method == "mean-linear":
            return "linear"
        if self.method == "mean-conditional":
            return "conditional-mean"
        if self.method == "quantile":
            return repr(float(self.tau))
        return ""


def true_theta(cell: MonteCarloCell) -> float:
    d = cell.dgp
    if cell.method in ("mean-linear", "mean-conditional"):
        return true_theta_mean(d.b, d.rho, d.nu)
    if cell.method == "quantile":
        return true_theta_quantile(d.b, d.rho, d.nu, cell.tau)
    return true_theta_linreg(d.b, d.rho, d.nu)


def _assess(cell: MonteCarloCell, data: Dataset, assess_seed: int):
    if cell.method in ("mean-linear", "mean-conditional"):
        cfg = MeanAssessmentConfig(
            nu=cell.dgp.nu,
            g_mode="linear" if cell.method == "mean-linear" else "conditional-mean",
            n_folds=cell.n_folds,
            alpha=cell.alpha,
            seed=assess_seed,
            regressor=cell.regressor,
        )
        return assess_mean(data, cfg)
    if cell.method == "quantile":
        cfg = QuantileAssessmentConfig(
            nu=cell.dgp.nu,
            tau=cell.tau,
            n_folds=cell.n_folds,
            alpha=cell.alpha,
            seed=assess_seed,
            cdf_regressor=cell.regressor,
        )
        return assess_quantile(data, cfg)
    return assess_linreg(data, cell.s_index, cell.dgp.nu, cell.alpha)


def _run_replication(cell: MonteCarloCell, seed: int, theta0: float, rep: int):
    """One scored replication; returns (abs_err, ci_length, covered) or an error string."""
    gen = rng.substream(rng.mix64(seed, rep), rng.DOMAIN_DGP)
    try:
        data = generate_dgp(cell.dgp, stream=gen)
        assess_seed = int(gen.integers(0, 1 << 63))
        estimate = _assess(cell, data, assess_seed)
        return (
            abs(estimate.theta_hat - theta0),
            estimate.ci.width,
            estimate.ci.contains(theta0),
        )
    except FusionGainError as err:
        return f"{type(err).__name__}: {err}"


@dataclass(frozen=True)
class CellResult:
    """Summary of one cell: mean/SD of absolute errors, average length, coverage."""

    method: str
    b: float
    n: int
    extra: str
    reps: int
    seed: int
    mae: float
    sdae: float
    al: float
    cr: float
    n_failed: int = 0

    @property
    def flagged(self) -> bool:
        return self.n_failed > 0.01 * self.reps


def run_monte_carlo(
    cell: MonteCarloCell, reps: int, seed: int, workers: int = 1
) -> CellResult:
    """Run and score ``reps`` seeded replications of one cell.

    Replication r draws its data from the stream keyed by (seed, r), so the
    result is a pure function of (cell, reps, seed) no matter how many workers
    execute it.  Failed replications are counted, never silently dropped; a
    cell with more than 1% failures is flagged.
    """
    if reps < 1:
        raise OutOfRange("reps must be >= 1")
    theta0 = true_theta(cell)
    worker = partial(_run_replication, cell, seed, theta0)
    if workers <= 1:
        outcomes = [worker(rep) for rep in range(reps)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunk = max(1, reps // (4 * workers))
            outcomes = list(pool.map(worker, range(reps), chunksize=chunk))
    failures = [o for o in outcomes if isinstance(o, str)]
    scored = [o for o in outcomes if not isinstance(o, str)]
    if not scored:
        raise FusionGainError(
            f"all {reps} replications failed; first error: {failures[0]}"
        )
    abs_errors = np.array([o[0] for o in scored])
    lengths = np.array([o[1] for o in scored])
    covered = np.array([o[2] for o in scored], dtype=float)
    return CellResult(
        method=cell.method,
        b=cell.dgp.b,
        n=cell.dgp.n,
        extra=cell.extra,
        reps=reps,
        seed=seed,
        mae=float(np.mean(abs_errors)),
        sdae=float(np.std(abs_errors)),
        al=float(np.mean(lengths)),
        cr=float(np.mean(covered)),
        n_failed=len(failures),
    )


def cell_seed(master_seed: int, cell: MonteCarloCell) -> int:
    """Derive an independent per-cell seed from the master seed and cell identity."""
    b_bits = int(np.float64(cell.dgp.b).view(np.uint64))
    return rng.mix64(
        master_seed,
        rng.hash_str(cell.method),
        b_bits,
        cell.dgp.n,
        rng.hash_str(cell.extra),
    )


@dataclass(frozen=True)
class SimulationReport:
    rows: tuple[CellResult, ...]

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for r in self.rows:
            lines.append(
                ",".join(
                    [
                        r.method,
                        _fmt(r.b),
                        str(r.n),
                        r.extra,
                        str(r.reps),
                        str(r.seed),
                        _fmt(r.mae),
                        _fmt(r.sdae),
                        _fmt(r.al),
                        _fmt(r.cr),
                    ]
                )
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Aligned table with MAE/SDAE/AL/CR multiplied by 100, four decimals."""
        header = (
            f"{'method':<17}{'b':>6}{'n':>7}{'extra':>18}{'reps':>6}"
            f"{'MAE':>10}{'SDAE':>10}{'AL':>10}{'CR':>10}"
        )
        lines = [header, "-" * len(header)]
        for r in self.rows:
            lines.append(
                f"{r.method:<17}{r.b:>6g}{r.n:>7d}{r.extra:>18}{r.reps:>6d}"
                f"{100 * r.mae:>10.4f}{100 * r.sdae:>10.4f}"
                f"{100 * r.al:>10.4f}{100 * r.cr:>10.4f}"
                + ("  [flagged]" if r.flagged else "")
            )
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return repr(float(x))
