"""Evaluation: Gaussian KDE log-likelihood of generated samples, generated-sample
cross-entropy, centroid interpolation, prior-scale sweeps and PGM grids."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .autodiff import Tensor
from .model import CatVAENetwork, build_prior_means, sample_prior
from .objective import info_max_term
from .rng import Rng

DEFAULT_BANDWIDTHS = tuple(np.logspace(np.log10(0.05), np.log10(1.0), 20))


def _sq_distances(a, b, chunk=512):
    b_sq = np.einsum("ij,ij->i", b, b)
    for start in range(0, a.shape[0], chunk):
        block = a[start:start + chunk]
        a_sq = np.einsum("ij,ij->i", block, block)
        d = a_sq[:, None] + b_sq[None, :] - 2.0 * block @ b.T
        yield start, np.maximum(d, 0.0)


def gaussian_kde_logpdf(support, points, bandwidth: float) -> np.ndarray:
    """``log (1/M) sum_m N(x; x_m, h^2 I)`` for every row of ``points``."""
    support = np.asarray(support, dtype=np.float64)
    points = np.asarray(points, dtype=np.float64)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    M, D = support.shape
    norm = -math.log(M) - 0.5 * D * math.log(2.0 * math.pi * bandwidth**2)
    out = np.empty(points.shape[0])
    for start, d in _sq_distances(points, support):
        out[start:start + d.shape[0]] = logsumexp(-d / (2.0 * bandwidth**2), axis=1) + norm
    return out


class GaussianKDE(BaseEstimator):
    """Isotropic Gaussian kernel density estimate."""

    def __init__(self, bandwidth=1.0):
        self.bandwidth = bandwidth

    def fit(self, X, y=None):
        self.support_ = check_array(X, dtype=np.float64)
        self.n_features_in_ = self.support_.shape[1]
        return self

    def score_samples(self, X):
        check_is_fitted(self, "support_")
        X = check_array(X, dtype=np.float64)
        return gaussian_kde_logpdf(self.support_, X, self.bandwidth)

    def score(self, X, y=None):
        """Total log-likelihood of ``X``."""
        return float(self.score_samples(X).sum())


def kde_fit_bandwidth(points, grid=DEFAULT_BANDWIDTHS, folds: int = 5, seed: int = 0):
    """Pick the bandwidth with the best mean held-out log-density.

    Returns ``(best_h, scores)`` where ``scores[i]`` is the fold-averaged mean
    held-out log-density for ``grid[i]``. Fold membership comes from a
    permutation drawn with ``seed``.
    """
    grid = [float(h) for h in grid]
    if not grid:
        raise ValueError("bandwidth grid is empty")
    if any(h <= 0 for h in grid):
        raise ValueError("bandwidths must be positive")
    points = np.asarray(points, dtype=np.float64)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if folds < 2 or n < folds:
        raise ValueError(f"need at least {folds} points and folds >= 2")
    order = Rng(seed).permutation(n)
    fold_ids = np.empty(n, dtype=np.int64)
    fold_ids[order] = np.arange(n) % folds
    scores = np.zeros(len(grid))
    for k in range(folds):
        train, held = points[fold_ids != k], points[fold_ids == k]
        for i, h in enumerate(grid):
            scores[i] += gaussian_kde_logpdf(train, held, h).mean()
    scores /= folds
    best = int(np.argmax(scores))
    return grid[best], scores


def kde_mean_loglik(model: GaussianKDE, eval_points) -> float:
    return float(model.score_samples(eval_points).mean())


def kde_log_likelihood(train_points, generated, grid=DEFAULT_BANDWIDTHS, folds=5, seed=0):
    """Fit a KDE on real data with a cross-validated bandwidth; score ``generated``.

    Returns ``(mean_loglik, bandwidth)``.
    """
    h, _ = kde_fit_bandwidth(train_points, grid, folds, seed)
    kde = GaussianKDE(h).fit(train_points)
    return kde_mean_loglik(kde, generated), h


def generate(model: CatVAENetwork, n: int, rng: Rng, prior=None):
    """Decode ``n`` prior draws; returns ``(categories, images)``."""
    prior = model.prior if prior is None else prior
    cats, z = sample_prior(prior, rng=rng, n=n)
    return cats, model.decode(Tensor(z.astype(model.dtype))).data


def generated_crossentropy(model: CatVAENetwork, n: int, rng: Rng, chunk: int = 2000) -> float:
    """Mean ``-log q(c|x)`` in nats over ``n`` decoded prior samples (eval mode)."""
    total, done = 0.0, 0
    while done < n:
        m = min(chunk, n - done)
        total += info_max_term(model, rng, m, train=False).item() * m
        done += m
    return total / n


def decode_codes(model: CatVAENetwork, z) -> np.ndarray:
    return model.decode(Tensor(np.asarray(z, dtype=model.dtype))).data


def interpolate_centroids(model: CatVAENetwork, steps: int = 9, prior=None) -> np.ndarray:
    """Rows of ``decode(mu_c)`` followed by ``steps`` points towards ``mu_{c+1}``.

    The last row wraps around to ``mu_0``. Returns (K, steps + 1, input_dim).
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    prior = model.prior if prior is None else prior
    means = prior.means
    K = means.shape[0]
    codes = []
    for c in range(K):
        a, b = means[c], means[(c + 1) % K]
        codes.append(a)
        for k in range(1, steps + 1):
            t = k / (steps + 1)
            codes.append((1.0 - t) * a + t * b)
    images = decode_codes(model, np.array(codes))
    return images.reshape(K, steps + 1, -1)


def lambda_sweep(model: CatVAENetwork, c: int, values) -> np.ndarray:
    """Decode centroid ``c`` of the block prior rebuilt at each scale in ``values``."""
    K = model.config.n_categories
    if not 0 <= c < K:
        raise ValueError(f"category {c} out of range [0, {K})")
    codes = [build_prior_means(model.config, scale=v).means[c] for v in values]
    return decode_codes(model, np.array(codes))


def sample_grid(model: CatVAENetwork, per_class: int, rng: Rng) -> np.ndarray:
    """(K, per_class, input_dim) decoded prior samples, one row per category."""
    K = model.config.n_categories
    rows = []
    for c in range(K):
        _, z = sample_prior(model.prior, c=c, rng=rng, n=per_class)
        rows.append(decode_codes(model, z))
    return np.stack(rows)


def render_sample_grid(images, rows: int, cols: int, sep: int = 2, side: int = 28) -> bytes:
    """Tile ``rows * cols`` square images into a binary PGM (P5).

    Pixels map to ``floor(v * 255 + 0.5)`` clipped to [0, 255]; gutters of
    ``sep`` pixels are white.
    """
    images = np.asarray(images, dtype=np.float64).reshape(-1, side * side)
    if images.shape[0] != rows * cols:
        raise ValueError(f"got {images.shape[0]} images for a {rows}x{cols} grid")
    width = cols * side + (cols - 1) * sep
    height = rows * side + (rows - 1) * sep
    canvas = np.full((height, width), 255, dtype=np.uint8)
    pix = np.clip(np.floor(images * 255.0 + 0.5), 0, 255).astype(np.uint8)
    for i in range(rows):
        for j in range(cols):
            y, x = i * (side + sep), j * (side + sep)
            canvas[y:y + side, x:x + side] = pix[i * cols + j].reshape(side, side)
    header = f"P5\n{width} {height}\n255\n".encode("ascii")
    return header + canvas.tobytes()


def read_pgm(raw: bytes) -> np.ndarray:
    """Parse a binary PGM produced by :func:`render_sample_grid`."""
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    width, height = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8).reshape(height, width)
