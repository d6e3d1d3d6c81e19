"""Nuisance-function estimation stack.

Cross-fitting partitions, the regressor menu (pooled least squares, k-nearest
neighbors, local linear smoothing), conditional-CDF regression on indicator
responses, Gaussian kernel density estimation with rule-of-thumb bandwidths,
and empirical quantiles.  Everything here is deterministic given its inputs;
the only randomness is the seeded fold assignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import (
    BadFoldCount,
    EmptyNeighborhood,
    OutOfRange,
    PlanMismatch,
    SingularDesign,
    TooFewObservations,
    ZeroDispersion,
)

# Gram matrices at or beyond this condition number are treated as singular.
MAX_CONDITION_NUMBER = 1e12

_SQRT_2PI = math.sqrt(2.0 * math.pi)

REGRESSOR_KINDS = ("ols-linear", "k-nn", "local-linear")


@dataclass(frozen=True)
class Dataset:
    """Internal sample: response vector ``y`` and covariate matrix ``x``."""

    y: np.ndarray
    x: np.ndarray
    column_names: tuple[str, ...] | None = None

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if y.ndim != 1 or x.ndim != 2:
            raise OutOfRange("y must be a vector and x a matrix")
        if y.shape[0] != x.shape[0]:
            raise OutOfRange(
                f"response length {y.shape[0]} != covariate rows {x.shape[0]}"
            )
        if y.shape[0] < 1 or x.shape[1] < 1:
            raise OutOfRange("dataset needs at least one row and one covariate")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
            raise OutOfRange("dataset entries must be finite")
        y.setflags(write=False)
        x.setflags(write=False)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "x", x)
        if self.column_names is not None:
            names = tuple(self.column_names)
            if len(names) != x.shape[1]:
                raise OutOfRange("column_names length must match covariate count")
            object.__setattr__(self, "column_names", names)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    def take(self, indices) -> "Dataset":
        return Dataset(self.y[indices], self.x[indices], self.column_names)


@dataclass(frozen=True)
class SplitPlan:
    """Deterministic M-fold partition of 0..n-1, reconstructible from the seed."""

    n: int
    n_folds: int
    assignment: np.ndarray  # fold id per observation, 0-based
    seed: int

    def fold(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == m)

    def complement(self, m: int) -> np.ndarray:
        return np.flatnonzero(self.assignment != m)


def make_split_plan(n: int, n_folds: int, seed: int) -> SplitPlan:
    """Partition 0..n-1 into ``n_folds`` folds of near-equal size.

    A seeded Fisher-Yates shuffle is cut into contiguous blocks; the first
    ``n mod n_folds`` folds are one observation larger.  Identical
    (n, n_folds, seed) always reproduces the identical plan.
    """
    if n_folds < 2:
        raise BadFoldCount(f"need at least 2 folds, got {n_folds}")
    if n < 2 * n_folds:
        raise TooFewObservations(
            f"need n >= 2 * n_folds for usable folds, got n={n}, n_folds={n_folds}"
        )
    gen = rng.substream(seed, rng.DOMAIN_SPLIT)
    order = rng.fisher_yates(gen, n)
    base, rem = divmod(n, n_folds)
    assignment = np.empty(n, dtype=np.int64)
    start = 0
    for fold_id in range(n_folds):
        size = base + (1 if fold_id < rem else 0)
        assignment[order[start : start + size]] = fold_id
        start += size
    return SplitPlan(n=n, n_folds=n_folds, assignment=assignment, seed=seed)


def ols_fit(x, y, intercept: bool = True) -> np.ndarray:
    """Least-squares coefficients via the normal equations.

    With ``intercept`` the returned vector has the intercept first, then one
    slope per covariate column.  The Gram matrix must be well conditioned
    (condition number below ``MAX_CONDITION_NUMBER``).
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    design = np.column_stack([np.ones(x.shape[0]), x]) if intercept else x
    gram = design.T @ design
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > MAX_CONDITION_NUMBER:
        raise SingularDesign(f"Gram matrix condition number {cond:.3e} too large")
    return np.linalg.solve(gram, design.T @ y)


def default_neighbor_count(n_train: int) -> int:
    """Default k for k-NN regression, ceil(n^(4/5) / 4), clipped to [1, n]."""
    return min(max(1, math.ceil(n_train**0.8 / 4.0)), n_train)


class Regressor:
    """Fitted conditional-mean regressor; ``predict`` is pure and deterministic."""

    kind: str

    def predict(self, x) -> np.ndarray:
        raise NotImplementedError


class OlsLinearRegressor(Regressor):
    kind = "ols-linear"

    def __init__(self, coef: np.ndarray):
        self.coef = np.asarray(coef, dtype=float)

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        design = np.column_stack([np.ones(x.shape[0]), x])
        return design @ self.coef


class KnnRegressor(Regressor):
    kind = "k-nn"

    def __init__(self, x_train: np.ndarray, y_train: np.ndarray, k: int):
        self.x_train = x_train
        self.y_train = y_train
        self.k = k

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        # Stable sort on squared distances makes neighbor ties deterministic
        # (lowest training index wins).
        d2 = ((x[:, None, :] - self.x_train[None, :, :]) ** 2).sum(axis=2)
        order = np.argsort(d2, axis=1, kind="stable")[:, : self.k]
        return self.y_train[order].mean(axis=1)


class LocalLinearRegressor(Regressor):
    """Local linear smoother with a product Gaussian kernel.

    At each query point a weighted least-squares line (plane) is fitted to the
    training sample with weights exp(-0.5 * sum_d ((x_d - X_td) / h_d)^2); the
    prediction is the fitted intercept.  Queries in sparse regions, where the
    total kernel weight falls below ``MIN_EFFECTIVE_WEIGHT``, have their
    bandwidths doubled (up to ``MAX_INFLATIONS`` times) until enough effective
    neighbors contribute; with a fixed bandwidth the prediction variance is
    unbounded in the tails of an unbounded design, while a weighted linear fit
    stays exact for linear targets under any weights.  Queries whose local
    Gram matrix is still ill conditioned fall back to the kernel-weighted
    mean, and to the global training mean if every weight underflows, so
    predictions are always finite.
    """

    kind = "local-linear"

    _CHUNK = 512  # bounds the (queries x training) temporaries
    MIN_EFFECTIVE_WEIGHT = 20.0
    MAX_INFLATIONS = 16

    def __init__(self, x_train: np.ndarray, y_train: np.ndarray, bandwidths: np.ndarray):
        bandwidths = np.asarray(bandwidths, dtype=float)
        if np.any(bandwidths <= 0) or not np.all(np.isfinite(bandwidths)):
            raise OutOfRange("bandwidths must be positive and finite")
        self.x_train = x_train
        self.y_train = y_train
        self.bandwidths = bandwidths
        # solving on mean-centered responses keeps the response level out of
        # the local solve (constant responses reproduce exactly)
        self._y_mean = float(np.mean(y_train))
        self._y_centered = y_train - self._y_mean

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        out = np.empty(x.shape[0])
        for start in range(0, x.shape[0], self._CHUNK):
            block = x[start : start + self._CHUNK]
            out[start : start + self._CHUNK] = self._predict_block(block)
        return out

    def _floored_weights(self, xq: np.ndarray) -> np.ndarray:
        w = _gaussian_weights(self.x_train, self.bandwidths, xq)
        if self.x_train.shape[0] <= self.MIN_EFFECTIVE_WEIGHT:
            return w
        pending = w.sum(axis=1) < self.MIN_EFFECTIVE_WEIGHT
        factor = 1.0
        for _ in range(self.MAX_INFLATIONS):
            if not pending.any():
                break
            factor *= 2.0
            rows = np.flatnonzero(pending)
            w_new = _gaussian_weights(self.x_train, self.bandwidths * factor, xq[rows])
            w[rows] = w_new
            pending[rows[w_new.sum(axis=1) >= self.MIN_EFFECTIVE_WEIGHT]] = False
        return w

    def _predict_block(self, xq: np.ndarray) -> np.ndarray:
        w = self._floored_weights(xq)
        diff = self.x_train[None, :, :] - xq[:, None, :]
        nq, nt, p = diff.shape
        # Weighted moments assemble the normal equations without materializing
        # the (queries x training x p+1) design tensor.
        weighted_diff_t = diff.transpose(0, 2, 1) * w[:, None, :]  # (nq, p, nt)
        s0 = w.sum(axis=1)
        s1 = weighted_diff_t.sum(axis=2)
        s2 = weighted_diff_t @ diff
        t0 = w @ self._y_centered
        t1 = weighted_diff_t @ self._y_centered
        gram = np.empty((nq, p + 1, p + 1))
        gram[:, 0, 0] = s0
        gram[:, 0, 1:] = s1
        gram[:, 1:, 0] = s1
        gram[:, 1:, 1:] = s2
        rhs = np.empty((nq, p + 1))
        rhs[:, 0] = t0
        rhs[:, 1:] = t1
        conds = np.linalg.cond(gram)
        ok = np.isfinite(conds) & (conds <= MAX_CONDITION_NUMBER)
        out = np.empty(nq)
        if np.any(ok):
            out[ok] = (
                np.linalg.solve(gram[ok], rhs[ok][:, :, None])[:, 0, 0] + self._y_mean
            )
        if np.any(~ok):
            bad_s0 = s0[~ok]
            local_mean = np.where(bad_s0 > 0, t0[~ok] / np.where(bad_s0 > 0, bad_s0, 1.0), 0.0)
            out[~ok] = local_mean + self._y_mean
        return out


def fit_conditional_mean(
    train: Dataset,
    kind: str,
    bandwidth: float | np.ndarray | None = None,
    n_neighbors: int | None = None,
) -> Regressor:
    """Fit one regressor from the menu on the training subsample.

    ``bandwidth`` applies to local-linear (scalar or per-dimension; default is
    the rule-of-thumb bandwidth per covariate dimension), ``n_neighbors`` to
    k-NN (default ceil(n^(4/5)/4)).
    """
    if kind == "ols-linear":
        return OlsLinearRegressor(ols_fit(train.x, train.y, intercept=True))
    if kind == "k-nn":
        k = default_neighbor_count(train.n) if n_neighbors is None else int(n_neighbors)
        if not 1 <= k <= train.n:
            raise OutOfRange(f"n_neighbors must be in [1, {train.n}], got {k}")
        return KnnRegressor(train.x, train.y, k)
    if kind == "local-linear":
        if bandwidth is None:
            bands = np.array([silverman_bandwidth(train.x[:, d]) for d in range(train.p)])
        else:
            bands = np.broadcast_to(np.asarray(bandwidth, dtype=float), (train.p,)).copy()
        return LocalLinearRegressor(train.x, train.y, bands)
    raise OutOfRange(f"unknown regressor kind {kind!r}")


def crossfit_predict(
    data: Dataset,
    plan: SplitPlan,
    kind: str,
    target: str = "cond-mean",
    threshold: float | None = None,
    bandwidth: float | np.ndarray | None = None,
    n_neighbors: int | None = None,
) -> np.ndarray:
    """Cross-fitted nuisance predictions at every observation.

    Entry i comes from the regressor trained on the complement of i's fold,
    so it never depends on observation i itself.  ``target`` selects the
    response: the raw y ("cond-mean") or the indicators 1(y < threshold)
    ("cond-cdf"), whose predictions estimate the conditional CDF at
    ``threshold`` and are clamped to [0, 1].
    """
    if plan.n != data.n:
        raise PlanMismatch(f"plan built for n={plan.n}, dataset has n={data.n}")
    if target == "cond-mean":
        response = data.y
    elif target == "cond-cdf":
        if threshold is None or not math.isfinite(threshold):
            raise OutOfRange("cond-cdf target needs a finite threshold")
        response = (data.y < threshold).astype(float)
    else:
        raise OutOfRange(f"unknown crossfit target {target!r}")

    predictions = np.empty(data.n)
    for m in range(plan.n_folds):
        test = plan.fold(m)
        train = plan.complement(m)
        regressor = fit_conditional_mean(
            Dataset(response[train], data.x[train]),
            kind,
            bandwidth=bandwidth,
            n_neighbors=n_neighbors,
        )
        predictions[test] = regressor.predict(data.x[test])
    if target == "cond-cdf":
        predictions = np.clip(predictions, 0.0, 1.0)
    return predictions


def empirical_quantile(y, tau: float) -> float:
    """Order statistic Y_(ceil(n*tau)) of the sample."""
    if not 0.0 < tau < 1.0:
        raise OutOfRange(f"tau must be in (0, 1), got {tau}")
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise TooFewObservations("empirical quantile of an empty sample")
    k = math.ceil(y.size * tau)
    return float(np.sort(y, kind="stable")[k - 1])


def silverman_bandwidth(sample) -> float:
    """Rule-of-thumb bandwidth 1.06 * min(sd, IQR/1.34) * n^(-1/5).

    The sample standard deviation uses divisor n-1.  A zero IQR with positive
    dispersion falls back to the standard deviation alone (the literal min
    would return a zero bandwidth).
    """
    sample = np.asarray(sample, dtype=float)
    if sample.size < 2:
        raise TooFewObservations("bandwidth rule needs at least 2 observations")
    sd = float(np.std(sample, ddof=1))
    q75, q25 = np.percentile(sample, [75.0, 25.0])
    iqr = float(q75 - q25)
    if sd == 0.0 and iqr == 0.0:
        raise ZeroDispersion("sample has zero dispersion")
    spread = min(sd, iqr / 1.34) if iqr > 0.0 else sd
    return 1.06 * spread * sample.size ** (-0.2)


@dataclass(frozen=True)
class KernelDensity:
    """Sample plus bandwidth, evaluated with a Gaussian kernel."""

    sample: np.ndarray
    bandwidth: float

    def __post_init__(self):
        sample = np.asarray(self.sample, dtype=float)
        if sample.ndim != 1 or sample.size < 1:
            raise OutOfRange("kernel density needs a nonempty 1-d sample")
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise OutOfRange(f"bandwidth must be positive, got {self.bandwidth}")
        sample.setflags(write=False)
        object.__setattr__(self, "sample", sample)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))


def kde_eval(kd: KernelDensity, point: float) -> float:
    """Marginal density estimate (nh)^-1 sum K((point - s_i)/h)."""
    z = (float(point) - kd.sample) / kd.bandwidth
    return float(np.mean(np.exp(-0.5 * z * z)) / (kd.bandwidth * _SQRT_2PI))


def _gaussian_weights(x_sample: np.ndarray, bandwidths: np.ndarray, xq: np.ndarray) -> np.ndarray:
    """Unnormalized product-Gaussian kernel weights, (queries x sample).

    Squared distances come from the expanded bilinear form (BLAS-backed);
    cancellation can leave tiny negatives, clipped at zero.
    """
    a = xq / bandwidths
    b = x_sample / bandwidths
    d2 = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    np.maximum(d2, 0.0, out=d2)
    return np.exp(-0.5 * d2)


def cond_kde_eval(
    x_sample,
    y_sample,
    x_bandwidths,
    y_bandwidth: float,
    x_point,
    y_point: float,
) -> float:
    """Conditional density estimate of y given x at one point.

    Kernel-weighted average over the paired sample: weights are normalized
    product Gaussian kernels in x; each pair contributes a Gaussian kernel in
    y with bandwidth ``y_bandwidth``.
    """
    profile = cond_kde_profile(x_sample, y_sample, x_bandwidths, y_bandwidth,
                               np.atleast_2d(np.asarray(x_point, dtype=float)), y_point)
    return float(profile[0])


def cond_kde_profile(
    x_sample,
    y_sample,
    x_bandwidths,
    y_bandwidth: float,
    x_queries: np.ndarray,
    y_point: float,
) -> np.ndarray:
    """Vectorized conditional density at one y value across many x queries."""
    x_sample = np.asarray(x_sample, dtype=float)
    if x_sample.ndim == 1:
        x_sample = x_sample[:, None]
    y_sample = np.asarray(y_sample, dtype=float)
    x_bandwidths = np.broadcast_to(
        np.asarray(x_bandwidths, dtype=float), (x_sample.shape[1],)
    )
    if np.any(x_bandwidths <= 0) or not y_bandwidth > 0:
        raise OutOfRange("bandwidths must be positive")
    x_queries = np.asarray(x_queries, dtype=float)
    if x_queries.ndim == 1:
        x_queries = x_queries[:, None]
    zy = (float(y_point) - y_sample) / y_bandwidth
    y_kernel = np.exp(-0.5 * zy * zy) / (y_bandwidth * _SQRT_2PI)
    out = np.empty(x_queries.shape[0])
    chunk = 512
    for start in range(0, x_queries.shape[0], chunk):
        w = _gaussian_weights(x_sample, x_bandwidths, x_queries[start : start + chunk])
        sw = w.sum(axis=1)
        if np.any(sw <= 0.0):
            raise EmptyNeighborhood(
                "all covariate kernel weights underflowed to zero at a query point"
            )
        out[start : start + chunk] = (w @ y_kernel) / sw
    return out
