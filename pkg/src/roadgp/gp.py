"""Exact GP posterior inference, Gaussian entropy, subset-of-data (SoD)
prediction and greedy maximum-variance selection.

Covariance convention: every index set passed to these functions stands for a
set of measurement events. Within one set the Gram matrix carries the noise
variance on its diagonal; between two different sets (observed vs. target,
support vs. observed) only the kernel is shared, because their noise draws are
independent. For sets of distinct segments this is exactly
``sigma_ss' = k(s, s') + noise * delta_ss'``.
"""

from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .network import Embedding, KernelHyper, se_kernel


class GpModel:
    """Prior mean plus a squared-exponential covariance on an embedding.

    The full kernel matrix over all segments is cached on first use when the
    network has at most ``cache_limit`` segments.
    """

    def __init__(self, embedding, hyper, prior_mean=0.0, cache_limit=4000):
        if not isinstance(embedding, Embedding):
            embedding = Embedding(np.asarray(embedding, dtype=float), 0.0)
        if not isinstance(hyper, KernelHyper):
            raise TypeError("hyper must be a KernelHyper")
        hyper.scales(embedding.dim)
        self.embedding = embedding
        self.hyper = hyper
        n = len(embedding)
        mean = np.asarray(prior_mean, dtype=float)
        self.prior_mean = np.full(n, float(mean)) if mean.ndim == 0 else mean.copy()
        if self.prior_mean.shape != (n,):
            raise ValueError(f"prior mean must cover all {n} segments")
        self._cache = {"K": None, "limit": cache_limit}

    def __repr__(self):
        return (
            f"GpModel(n_segments={self.n_segments}, dim={self.embedding.dim}, "
            f"hyper={self.hyper})"
        )

    @property
    def n_segments(self):
        return len(self.embedding)

    @property
    def noise_variance(self):
        return self.hyper.noise_variance

    def with_mean(self, prior_mean):
        """Copy with a new prior mean, sharing the kernel cache."""
        other = object.__new__(GpModel)
        other.embedding = self.embedding
        other.hyper = self.hyper
        other._cache = self._cache
        mean = np.asarray(prior_mean, dtype=float)
        other.prior_mean = (
            np.full(self.n_segments, float(mean)) if mean.ndim == 0 else mean.copy()
        )
        return other

    def _full_kernel(self):
        if self._cache["K"] is None:
            c = self.embedding.coords
            self._cache["K"] = se_kernel(c, c, self.hyper)
        return self._cache["K"]

    def kernel_matrix(self, a, b):
        a = np.asarray(a, dtype=int)
        b = np.asarray(b, dtype=int)
        if self.n_segments <= self._cache["limit"]:
            return self._full_kernel()[np.ix_(a, b)]
        c = self.embedding.coords
        return se_kernel(c[a], c[b], self.hyper)

    def gram(self, a):
        """Covariance of the measurement events at ``a`` (noise on the diagonal)."""
        a = np.asarray(a, dtype=int)
        return self.kernel_matrix(a, a) + self.hyper.noise_variance * np.eye(a.size)

    def cross(self, a, b):
        """Covariance between two distinct sets of measurement events."""
        return self.kernel_matrix(a, b)

    def mean(self, a):
        return self.prior_mean[np.asarray(a, dtype=int)]


@dataclass(frozen=True)
class PosteriorGaussian:
    """Gaussian over the target segments; ``cov`` may be omitted for marginals."""

    targets: np.ndarray
    mean: np.ndarray
    cov: np.ndarray = None
    var: np.ndarray = None
    jitter: float = 0.0

    @property
    def variance(self):
        return np.diag(self.cov).copy() if self.cov is not None else self.var

    def __len__(self):
        return len(self.targets)


def gaussian_condition(mu_Y, S_YY, S_YD, S_DD, resid, full_cov=True):
    """Condition a joint Gaussian on observed residuals ``z_D - mu_D``.

    ``S_YY`` may be the full matrix or, when ``full_cov`` is False, just its
    diagonal. Returns ``(mean, cov_or_var, jitter)``.
    """
    if S_DD.shape[0] == 0:
        return mu_Y.copy(), (S_YY.copy() if full_cov else np.asarray(S_YY).copy()), 0.0
    L, jitter = la.jittered_cholesky(S_DD)
    A = la.forward(L, S_YD.T)
    r = la.forward(L, resid)
    mean = mu_Y + A.T @ r
    if full_cov:
        out = la.symmetrize(S_YY - A.T @ A)
    else:
        out = S_YY - np.sum(A * A, axis=0)
    return mean, out, jitter


def _as_index(a):
    return np.asarray(a, dtype=int).ravel()


def posterior_full(model, D, z_D, Y, full_cov=True, allow_overlap=False):
    """Posterior of the measurements at ``Y`` given observations ``z_D`` at ``D``."""
    D, Y = _as_index(D), _as_index(Y)
    z_D = np.asarray(z_D, dtype=float).ravel()
    if z_D.shape != D.shape:
        raise ValueError(f"{z_D.size} measurements for {D.size} observed segments")
    if not allow_overlap and np.intersect1d(D, Y).size:
        raise ValueError("target set overlaps the observed set")
    S_YY = model.gram(Y) if full_cov else np.full(Y.size, model.hyper.signal_variance + model.noise_variance)
    mean, out, jitter = gaussian_condition(
        model.mean(Y), S_YY, model.cross(Y, D), model.gram(D), z_D - model.mean(D), full_cov
    )
    if full_cov:
        return PosteriorGaussian(Y, mean, cov=out, jitter=jitter)
    return PosteriorGaussian(Y, mean, var=out, jitter=jitter)


def posterior_sod(model, U, z_U, Y, full_cov=True, allow_overlap=False):
    """Subset-of-data prediction: the exact posterior using only ``U``."""
    return posterior_full(model, U, z_U, Y, full_cov=full_cov, allow_overlap=allow_overlap)


def logdet_checked(S, tol=1e-8):
    """``log|S|`` of a symmetric PSD matrix; ``-inf`` when singular.

    Raises ``ValueError`` if an eigenvalue is below ``-tol`` times the trace
    scale.
    """
    S = np.asarray(S, dtype=float)
    n = S.shape[0]
    if n == 0:
        return 0.0
    try:
        L = np.linalg.cholesky(S)
        return la.chol_logdet(L)
    except np.linalg.LinAlgError:
        pass
    evals = np.linalg.eigvalsh(la.symmetrize(S))
    scale = max(abs(np.trace(S)) / n, np.finfo(float).tiny)
    if evals[0] < -tol * scale:
        raise ValueError(f"covariance has eigenvalue {evals[0]:.3g} < 0")
    if evals[0] <= 0:
        return -np.inf
    return float(np.sum(np.log(evals)))


def entropy(p, tol=1e-8):
    """Joint differential entropy ``0.5 log((2 pi e)^|Y| |Sigma|)``."""
    cov = p.cov if isinstance(p, PosteriorGaussian) else np.asarray(p, dtype=float)
    if cov is None:
        raise ValueError("entropy needs the full posterior covariance")
    n = cov.shape[0]
    if n == 0:
        return 0.0
    return la.gaussian_entropy_from_logdet(n, logdet_checked(cov, tol))


def _argmax_lowest(values, ids, rtol=1e-12):
    """Index of the maximum, ties (within ``rtol``) going to the smallest id."""
    best = np.max(values)
    close = values >= best - rtol * max(abs(best), 1e-300)
    cand = np.flatnonzero(close)
    return int(cand[np.argmin(ids[cand])])


def greedy_select(model, candidates, m, conditioning=()):
    """Greedy maximum-posterior-variance selection.

    Repeatedly appends the candidate with the largest posterior variance given
    ``conditioning`` plus everything selected so far (the differential-entropy
    score is monotone in that variance). Ties go to the smallest segment id.

    Returns
    -------
    list of int
        Selected segments in pick order.
    """
    cand = np.unique(_as_index(candidates))
    cond = _as_index(conditioning)
    if m > cand.size:
        raise ValueError(f"cannot select {m} of {cand.size} candidates")
    if m <= 0:
        return []
    var = np.full(cand.size, model.hyper.signal_variance + model.noise_variance, dtype=float)
    # rows of L^{-1} Sigma_{S,cand} for the events S absorbed so far
    if cond.size:
        Lc, _ = la.jittered_cholesky(model.gram(cond))
        V = la.forward(Lc, model.cross(cond, cand))
        var -= np.sum(V * V, axis=0)
    else:
        V = np.zeros((0, cand.size))
    chosen = []
    remaining = np.ones(cand.size, dtype=bool)
    sentinel = np.iinfo(np.int64).max
    for _ in range(m):
        j = _argmax_lowest(np.where(remaining, var, -np.inf), np.where(remaining, cand, sentinel))
        chosen.append(int(cand[j]))
        remaining[j] = False
        pivot = var[j]
        if pivot <= 0:
            continue
        row = (model.cross(cand[[j]], cand)[0] - V[:, j] @ V) / np.sqrt(pivot)
        V = np.vstack([V, row])
        var -= row * row
    return chosen
