"""Gaussian-process surrogate over the unit hypercube.

Matern-5/2 kernel with one lengthscale per coordinate (ARD), fitted by
maximizing log marginal likelihood: 16 random hyperparameter starts,
each refined by coordinate-wise golden-section passes in log space. All
starts advance in lockstep so the likelihood evaluations batch into one
parallel numba kernel.

Targets are standardized internally; predictions come back in the
original units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import cholesky, solve_triangular
from scipy.spatial.distance import cdist

from .errors import GpFitError

LENGTHSCALE_BOUNDS = (1e-3, 10.0)
SIGNAL_VARIANCE_BOUNDS = (1e-4, 1e2)
NOISE_VARIANCE_BOUNDS = (1e-6, 1.0)

_N_STARTS = 16
_N_SWEEPS = 3
_GOLDEN_ITERS = 6
_DUPLICATE_TOL = 1e-9
_JITTER_CEILING = 1e-2

# fit_gp takes no rng: hyperparameter starts come from a fixed seed so
# identical data always yields an identical model
_FIT_SEED = 0x5EEDF17

_SQRT5 = math.sqrt(5.0)
_LOG_2PI = math.log(2.0 * math.pi)
_INV_LN2 = 1.4426950408889634
_LN2 = 0.6931471805599453
# beyond this scaled distance the Matern term is < 3e-15 of the signal
# variance, far below the 1e-6 noise floor
_T_CUTOFF = 40.0
_EXP2_TABLE = 2.0 ** -np.arange(int(_T_CUTOFF * _INV_LN2) + 3, dtype=np.float64)


@njit(inline="always", cache=True)
def _exp_neg(t, exp2_table):  # pragma: no cover
    """exp(-t) for t in [0, ~40], accurate to ~5e-9 relative.

    libm call overhead dominates the likelihood search on scalar loops;
    this is 2^(-t/ln2) with a rounded integer exponent from a table and
    a degree-7 Taylor mantissa. Exact kernel math (final factorization,
    predictions) does not go through here.
    """
    u = t * _INV_LN2
    k = int(u + 0.5)
    f = (k - u) * _LN2  # in [-0.347, 0.347]
    p = 1.0 + f * (1.0 + f * (0.5 + f * (1.0 / 6.0 + f * (1.0 / 24.0 + f * (1.0 / 120.0 + f * (1.0 / 720.0 + f / 5040.0))))))
    return p * exp2_table[k]


def _matern52(sq_dist: np.ndarray, signal_variance: float) -> np.ndarray:
    t = _SQRT5 * np.sqrt(np.maximum(sq_dist, 0.0))
    return signal_variance * (1.0 + t + t * t / 3.0) * np.exp(-t)


def _scaled_sq_dist(xa: np.ndarray, xb: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    return cdist(xa / lengthscales, xb / lengthscales, metric="sqeuclidean")


@njit(cache=True, fastmath=True)
def _weighted_base(S, inv_sq_ls, skip):  # pragma: no cover
    """Per-lane sum of inv_sq_ls[b, c] * S[c], skipping one coordinate.

    Lane-last layout (n, n, batch) so the batch loop vectorizes. Only
    the strict lower triangle is filled; that is all the likelihood
    kernel reads. skip = -1 sums every coordinate.
    """
    d = S.shape[0]
    n = S.shape[1]
    n_batch = inv_sq_ls.shape[0]
    wt = inv_sq_ls.T.copy()
    base = np.zeros((n, n, n_batch))
    for c in range(d):
        if c == skip:
            continue
        w = wt[c]
        for i in range(n):
            for j in range(i):
                s = S[c, i, j]
                for b in range(n_batch):
                    base[i, j, b] += w[b] * s
    return base


@njit(cache=True, fastmath=True)
def _lml_from_base(S_c, base, y, w_c, sf2, sn2, exp2_table):  # pragma: no cover
    """Log marginal likelihood per lane, r^2 = base[..., b] + w_c[b] * S_c.

    Golden-section probes move one hyperparameter at a time, so the
    other coordinates' distance contributions (base) are reused across
    probes. Lanes run in lockstep with the lane index innermost; a lane
    whose Gram matrix is not positive definite gets a dummy pivot so the
    rest can keep vectorizing, and reports -inf.
    """
    n_batch = w_c.shape[0]
    n = y.shape[0]
    out = np.full(n_batch, -np.inf)
    k = np.empty((n, n, n_batch))
    tv = np.empty(n_batch)
    for i in range(n):
        for j in range(i):
            s_ij = S_c[i, j]
            for b in range(n_batch):
                tv[b] = _SQRT5 * math.sqrt(base[i, j, b] + w_c[b] * s_ij)
            for b in range(n_batch):
                t = tv[b]
                if t > _T_CUTOFF:
                    k[i, j, b] = 0.0
                else:
                    k[i, j, b] = sf2[b] * (1.0 + t + t * t / 3.0) * _exp_neg(t, exp2_table)
        for b in range(n_batch):
            k[i, i, b] = sf2[b] + sn2[b]

    ok = np.ones(n_batch, np.bool_)
    acc = np.empty(n_batch)
    for i in range(n):
        for j in range(i):
            for b in range(n_batch):
                acc[b] = k[i, j, b]
            for m in range(j):
                for b in range(n_batch):
                    acc[b] -= k[i, m, b] * k[j, m, b]
            for b in range(n_batch):
                k[i, j, b] = acc[b] / k[j, j, b]
        for b in range(n_batch):
            acc[b] = k[i, i, b]
        for m in range(i):
            for b in range(n_batch):
                acc[b] -= k[i, m, b] * k[i, m, b]
        for b in range(n_batch):
            # "> 0" rather than "<= 0" so a NaN pivot also fails the lane
            if acc[b] > 0.0:
                k[i, i, b] = math.sqrt(acc[b])
            else:
                ok[b] = False
                k[i, i, b] = 1.0

    quad = np.zeros(n_batch)
    logdet = np.zeros(n_batch)
    z = np.empty((n, n_batch))
    for i in range(n):
        for b in range(n_batch):
            acc[b] = y[i]
        for m in range(i):
            for b in range(n_batch):
                acc[b] -= k[i, m, b] * z[m, b]
        for b in range(n_batch):
            zi = acc[b] / k[i, i, b]
            z[i, b] = zi
            quad[b] += zi * zi
            logdet[b] += math.log(k[i, i, b])
    for b in range(n_batch):
        if ok[b]:
            out[b] = -0.5 * quad[b] - logdet[b] - 0.5 * n * _LOG_2PI
    return out


@dataclass
class GpModel:
    """Fitted surrogate; immutable after construction, safe to share."""

    train_x: np.ndarray
    train_y: np.ndarray
    lengthscales: np.ndarray
    signal_variance: float  # in target units (de-standardized)
    noise_variance: float
    log_marginal_likelihood: float
    _y_mean: float
    _y_std: float
    _chol: np.ndarray
    _alpha: np.ndarray

    def predict(self, x) -> tuple:
        """Posterior mean and standard deviation of the latent function.

        Accepts one point (26,) or a batch (m, 26); returns float pairs
        or arrays accordingly.
        """
        pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        cross = _matern52(
            _scaled_sq_dist(pts, self.train_x, self.lengthscales),
            self.signal_variance / (self._y_std**2),
        )
        mu_std = cross @ self._alpha
        v = solve_triangular(self._chol, cross.T, lower=True)
        var_std = self.signal_variance / (self._y_std**2) - np.einsum("ij,ij->j", v, v)
        var_std = np.maximum(var_std, 0.0)
        mu = self._y_mean + self._y_std * mu_std
        sigma = self._y_std * np.sqrt(var_std)
        if np.ndim(x) == 1:
            return float(mu[0]), float(sigma[0])
        return mu, sigma


def merge_duplicates(x: np.ndarray, y: np.ndarray, tol: float = _DUPLICATE_TOL):
    """Collapse rows equal within tol coordinate-wise, averaging targets."""
    reps = []
    groups = []
    for i in range(x.shape[0]):
        for g, rep in enumerate(reps):
            if np.all(np.abs(x[i] - rep) <= tol):
                groups[g].append(i)
                break
        else:
            reps.append(x[i])
            groups.append([i])
    merged_x = np.array(reps)
    merged_y = np.array([float(np.mean(y[g])) for g in groups])
    return merged_x, merged_y


def _build_factorization(sq_dists, sf2: float, sn2: float, n: int):
    """Cholesky of the Gram matrix, doubling jitter until it succeeds."""
    base = np.zeros((n, n))
    for c in range(sq_dists.shape[0]):
        base += sq_dists[c]  # caller pre-scales by 1/lengthscale^2
    gram = _matern52(base, sf2)
    jitter = sn2
    while True:
        try:
            chol = cholesky(gram + jitter * np.eye(n), lower=True)
            return chol, jitter
        except np.linalg.LinAlgError:
            pass
        jitter *= 2.0
        if jitter > _JITTER_CEILING:
            raise GpFitError(
                f"Gram matrix not positive definite even with noise {jitter / 2.0:.3g}"
            )


def condition_gp(model: GpModel, train_x, train_y) -> GpModel:
    """Condition an already-fitted model on a new data set.

    Keeps the model's hyperparameters and skips the likelihood search;
    the search loop uses this between scheduled refits so proposals
    always see every observation. Targets are re-standardized, so the
    stored raw-unit variances convert to the new scale.
    """
    x = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise GpFitError(f"inputs {x.shape} and targets {y.shape} do not align")
    x, y = merge_duplicates(x, y)
    n = x.shape[0]
    if n < 2:
        raise GpFitError(f"need at least 2 distinct observations, got {n}")

    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    y_standardized = (y - y_mean) / y_std
    sf2 = model.signal_variance / y_std**2
    sn2 = max(model.noise_variance / y_std**2, NOISE_VARIANCE_BOUNDS[0])

    ls = np.asarray(model.lengthscales, dtype=np.float64)
    sq_diffs = np.ascontiguousarray(
        (x.T[:, :, np.newaxis] - x.T[:, np.newaxis, :]) ** 2
    )
    scaled = sq_diffs / (ls * ls)[:, np.newaxis, np.newaxis]
    chol, jitter = _build_factorization(scaled, sf2, sn2, n)
    alpha = solve_triangular(
        chol.T, solve_triangular(chol, y_standardized, lower=True), lower=False
    )
    quad = float(y_standardized @ alpha)
    logdet = float(np.sum(np.log(np.diag(chol))))
    return GpModel(
        train_x=x,
        train_y=y,
        lengthscales=ls,
        signal_variance=sf2 * y_std**2,
        noise_variance=jitter * y_std**2,
        log_marginal_likelihood=-0.5 * quad - logdet - 0.5 * n * _LOG_2PI,
        _y_mean=y_mean,
        _y_std=y_std,
        _chol=chol,
        _alpha=alpha,
    )


def fit_gp(train_x, train_y) -> GpModel:
    """Fit kernel hyperparameters by multi-start log-likelihood search.

    Duplicate inputs (within 1e-9 per coordinate) are merged first with
    their targets averaged. Needs at least 2 distinct points.
    """
    x = np.asarray(train_x, dtype=np.float64)
    y = np.asarray(train_y, dtype=np.float64).ravel()
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise GpFitError(f"inputs {x.shape} and targets {y.shape} do not align")
    x, y = merge_duplicates(x, y)
    n, d = x.shape
    if n < 2:
        raise GpFitError(f"need at least 2 distinct observations, got {n}")

    y_mean = float(y.mean())
    y_std = float(y.std())
    if y_std < 1e-12:
        y_std = 1.0
    y_standardized = (y - y_mean) / y_std

    sq_diffs = np.ascontiguousarray(
        (x.T[:, :, np.newaxis] - x.T[:, np.newaxis, :]) ** 2
    )

    # hyperparameter vector layout: d log-lengthscales, log sf2, log sn2
    log_lo = np.concatenate(
        (
            np.full(d, math.log10(LENGTHSCALE_BOUNDS[0])),
            [math.log10(SIGNAL_VARIANCE_BOUNDS[0])],
            [math.log10(NOISE_VARIANCE_BOUNDS[0])],
        )
    )
    log_hi = np.concatenate(
        (
            np.full(d, math.log10(LENGTHSCALE_BOUNDS[1])),
            [math.log10(SIGNAL_VARIANCE_BOUNDS[1])],
            [math.log10(NOISE_VARIANCE_BOUNDS[1])],
        )
    )
    rng = np.random.default_rng(_FIT_SEED)
    theta = rng.uniform(log_lo, log_hi, size=(_N_STARTS, d + 2))
    # one start is a fixed, sane default: unit lengthscales, unit signal,
    # small noise
    theta[0, :d] = 0.0
    theta[0, d] = 0.0
    theta[0, d + 1] = -4.0

    no_coord_term = np.zeros((n, n))
    zero_w = np.zeros(_N_STARTS)

    def inv_sq(log10_ls):
        return np.ascontiguousarray(10.0 ** (-2.0 * log10_ls))

    def full_lml(candidate_theta):
        base = _weighted_base(sq_diffs, inv_sq(candidate_theta[:, :d]), -1)
        return _lml_from_base(
            no_coord_term,
            base,
            y_standardized,
            zero_w,
            np.ascontiguousarray(10.0 ** candidate_theta[:, d]),
            np.ascontiguousarray(10.0 ** candidate_theta[:, d + 1]),
            _EXP2_TABLE,
        )

    best_lml = full_lml(theta)

    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    for _ in range(_N_SWEEPS):
        for coord in range(d + 2):
            # distances from the 25 untouched lengthscales are shared by
            # every probe of this coordinate
            if coord < d:
                base = _weighted_base(sq_diffs, inv_sq(theta[:, :d]), coord)
                coord_term = sq_diffs[coord]
            else:
                base = _weighted_base(sq_diffs, inv_sq(theta[:, :d]), -1)
                coord_term = no_coord_term

            def eval_at(points):
                cand = theta.copy()
                cand[:, coord] = points
                w_c = inv_sq(cand[:, coord]) if coord < d else zero_w
                return _lml_from_base(
                    coord_term,
                    base,
                    y_standardized,
                    w_c,
                    np.ascontiguousarray(10.0 ** cand[:, d]),
                    np.ascontiguousarray(10.0 ** cand[:, d + 1]),
                    _EXP2_TABLE,
                )

            a = np.full(_N_STARTS, log_lo[coord])
            b = np.full(_N_STARTS, log_hi[coord])
            c1 = b - inv_phi * (b - a)
            c2 = a + inv_phi * (b - a)

            f1 = eval_at(c1)
            f2 = eval_at(c2)
            for _ in range(_GOLDEN_ITERS):
                # maximize: shrink toward the better probe, lane by lane
                go_right = f1 < f2
                new_a = np.where(go_right, c1, a)
                new_b = np.where(go_right, b, c2)
                new_c1 = np.where(go_right, c2, new_b - inv_phi * (new_b - new_a))
                new_c2 = np.where(go_right, new_a + inv_phi * (new_b - new_a), c1)
                probe = np.where(go_right, new_c2, new_c1)
                f_probe = eval_at(probe)
                f1, f2 = np.where(go_right, f2, f_probe), np.where(go_right, f_probe, f1)
                a, b, c1, c2 = new_a, new_b, new_c1, new_c2
            candidate = np.where(f1 > f2, c1, c2)
            f_candidate = eval_at(candidate)
            improved = f_candidate > best_lml
            theta[improved, coord] = candidate[improved]
            best_lml = np.where(improved, f_candidate, best_lml)

    winner = int(np.argmax(best_lml))
    if not np.isfinite(best_lml[winner]):
        raise GpFitError("no hyperparameter start produced a positive-definite Gram matrix")
    lengthscales = 10.0 ** theta[winner, :d]
    sf2 = float(10.0 ** theta[winner, d])
    sn2 = max(float(10.0 ** theta[winner, d + 1]), NOISE_VARIANCE_BOUNDS[0])

    scaled = sq_diffs / (lengthscales * lengthscales)[:, np.newaxis, np.newaxis]
    chol, jitter = _build_factorization(scaled, sf2, sn2, n)
    alpha = solve_triangular(
        chol.T, solve_triangular(chol, y_standardized, lower=True), lower=False
    )
    return GpModel(
        train_x=x,
        train_y=y,
        lengthscales=lengthscales,
        signal_variance=sf2 * y_std**2,
        noise_variance=jitter * y_std**2,
        log_marginal_likelihood=float(best_lml[winner]),
        _y_mean=y_mean,
        _y_std=y_std,
        _chol=chol,
        _alpha=alpha,
    )
