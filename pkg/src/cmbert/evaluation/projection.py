"""PCA, exact t-SNE and k-nearest-neighbour label purity."""
import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

MAX_TSNE_POINTS = 5000


def pca(x, out_dims, return_details=False):
    """Project mean-centred rows onto the leading principal axes.

    Components come in descending eigenvalue order; each is signed so its
    largest-magnitude entry is positive. With ``return_details`` also
    returns ``(components [k, d], eigenvalues [d])`` where the eigenvalues
    are those of the scatter matrix ``Xc.T @ Xc / n``.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if out_dims > min(n, d):
        raise InputError(f"out_dims={out_dims} exceeds min(n, d)={min(n, d)}")
    xc = x - x.mean(axis=0)
    evals, evecs = np.linalg.eigh(xc.T @ xc / n)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]
    tol = max(evals[0], 1.0) * d * np.finfo(float).eps * 10
    rank = int(np.sum(evals > tol))
    k = out_dims
    if rank < out_dims:
        warnings.warn(f"data rank {rank} < out_dims {out_dims}; returning {rank} components")
        k = rank
    comps = evecs[:, :k].T
    flip = np.sign(comps[np.arange(k), np.argmax(np.abs(comps), axis=1)])
    comps = comps * flip[:, None]
    reduced = xc @ comps.T
    if return_details:
        return reduced, comps, evals
    return reduced


def _sq_dists(x):
    sq = np.sum(x * x, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d, 0.0, out=d)
    np.fill_diagonal(d, 0.0)
    return d


def _row_entropy(dist_row, beta):
    shifted = dist_row - dist_row.min()
    p = np.exp(-shifted * beta)
    s = p.sum()
    h = np.log(s) + beta * np.sum(shifted * p) / s
    return h, p / s


def conditional_affinities(x, perplexity, tol=1e-5, max_iter=200):
    """Row-conditional Gaussian affinities with per-point bandwidth search.

    Returns ``(P, entropies)``; each row's Shannon entropy (nats) is matched
    to ``log(perplexity)`` within ``tol`` by bisection on the precision.
    """
    d = _sq_dists(np.asarray(x, dtype=np.float64))
    n = len(d)
    target = np.log(perplexity)
    P = np.zeros((n, n))
    entropies = np.zeros(n)
    for i in range(n):
        row = np.delete(d[i], i)
        beta, lo, hi = 1.0, 0.0, np.inf
        for _ in range(max_iter):
            h, p = _row_entropy(row, beta)
            diff = h - target
            if abs(diff) < tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if hi == np.inf else (beta + hi) / 2.0
            else:
                hi = beta
                beta = (beta + lo) / 2.0
        entropies[i] = h
        P[i, np.arange(n) != i] = p
    return P, entropies


@dataclass
class ProjectionResult:
    coordinates: np.ndarray
    labels: list
    method: str
    hyperparameters: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.labels is not None and len(self.labels) != len(self.coordinates):
            raise InputError("labels and coordinates differ in length")
        if not np.isfinite(self.coordinates).all():
            raise FloatingPointError("non-finite projection coordinates")

    def write_csv(self, path, ids=None):
        ids = list(range(len(self.coordinates))) if ids is None else ids
        labels = self.labels if self.labels is not None else [""] * len(ids)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["id", "x", "y", "label"])
            for i, (x, y), lab in zip(ids, self.coordinates, labels):
                out.writerow([i, repr(float(x)), repr(float(y)), lab])


def _kl(P, Q):
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def tsne(x, perplexity=30.0, iterations=1000, seed=0, labels=None, *, learning_rate="auto",
         early_exaggeration=12.0, exaggeration_iters=250, pca_dims=50, perplexity_tol=1e-5):
    """Exact (O(n^2)) t-SNE to two dimensions.

    Inputs wider than ``pca_dims`` are first reduced with :func:`pca`.
    Optimisation is gradient descent with momentum (0.5, then 0.8 after the
    exaggeration phase) and per-coordinate adaptive gains. The per-iteration
    KL divergence and per-point entropies are kept in ``diagnostics``.
    ``learning_rate="auto"`` uses ``max(n / early_exaggeration / 4, 50)``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    if n > MAX_TSNE_POINTS:
        raise InputError(f"exact t-SNE is capped at {MAX_TSNE_POINTS} points, got {n}")
    if n < 3 * perplexity:
        raise InputError(f"perplexity {perplexity} infeasible for n={n} (need n >= 3*perplexity)")
    if x.shape[1] > pca_dims:
        x = pca(x, pca_dims)

    if learning_rate == "auto":
        learning_rate = max(n / early_exaggeration / 4.0, 50.0)
    Pc, entropies = conditional_affinities(x, perplexity, tol=perplexity_tol)
    P = (Pc + Pc.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    kl_history = []
    for it in range(iterations):
        exag = early_exaggeration if it < exaggeration_iters else 1.0
        momentum = 0.5 if it < exaggeration_iters else 0.8
        num = 1.0 / (1.0 + _sq_dists(y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * y - W @ y)
        same = np.sign(grad) == np.sign(update)
        gains = np.where(same, gains * 0.8, gains + 0.2)
        np.maximum(gains, 0.01, out=gains)
        update = momentum * update - learning_rate * gains * grad
        y = y + update
        y -= y.mean(axis=0)
        kl_history.append(_kl(P, Q))
    tail = np.diff(kl_history[-50:])
    diagnostics = {
        "kl_history": kl_history,
        "entropies": entropies,
        "target_entropy": float(np.log(perplexity)),
        "max_entropy_error": float(np.max(np.abs(entropies - np.log(perplexity)))),
        "tail_monotone": bool(np.all(tail <= 1e-12)),
        "final_kl": kl_history[-1] if kl_history else float("nan"),
    }
    hyper = {"perplexity": perplexity, "iterations": iterations, "seed": seed,
             "learning_rate": learning_rate, "early_exaggeration": early_exaggeration}
    return ProjectionResult(y, list(labels) if labels is not None else None, "tsne", hyper,
                            diagnostics)


def pca_projection(x, labels=None):
    return ProjectionResult(pca(x, 2), list(labels) if labels is not None else None, "pca",
                            {"out_dims": 2})


def knn_purity(coordinates, labels, k=5):
    """Mean share of each point's ``k`` nearest neighbours (self excluded) with its label."""
    coords = np.asarray(coordinates, dtype=np.float64)
    labels = np.asarray(labels)
    n = len(coords)
    if not 0 < k < n:
        raise InputError(f"k={k} must lie in (0, {n})")
    d = _sq_dists(coords)
    np.fill_diagonal(d, np.inf)
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    return float(np.mean(labels[nn] == labels[:, None]))
