"""Dense linear-algebra helpers shared by the GP, fusion and sensing code."""

import numpy as np
from scipy import linalg

# Relative to the mean diagonal of the matrix being factorized.
JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6)

LOG_2PI_E = np.log(2.0 * np.pi * np.e)


class SingularCovarianceError(np.linalg.LinAlgError):
    """Raised when a covariance matrix cannot be factorized even with jitter."""

    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


def jittered_cholesky(A, ladder=JITTER_LADDER):
    """Lower Cholesky factor of ``A``, walking up the jitter ladder on failure.

    Returns
    -------
    L : ndarray
        Lower-triangular factor of ``A + jitter * I``.
    jitter : float
        Absolute jitter that was added (0.0 when none was needed).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = float(np.mean(np.diag(A)))
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    for rel in ladder:
        jitter = rel * scale
        try:
            L = linalg.cholesky(A + jitter * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if np.all(np.isfinite(L)):
            return L, jitter
    try:
        cond = float(np.linalg.cond(A))
    except np.linalg.LinAlgError:
        cond = np.inf
    raise SingularCovarianceError(
        f"matrix of size {n} is not positive definite after jitter "
        f"{ladder[-1]:g} (condition estimate {cond:.3g})",
        condition=cond,
    )


def forward(L, B):
    """Solve ``L X = B`` for lower-triangular ``L``."""
    if L.shape[0] == 0:
        return np.zeros((0,) + np.shape(B)[1:])
    return linalg.solve_triangular(L, B, lower=True, check_finite=False)


def cho_solve(L, B):
    """Solve ``(L L^T) X = B``."""
    if L.shape[0] == 0:
        return np.zeros((0,) + np.shape(B)[1:])
    return linalg.cho_solve((L, True), B, check_finite=False)


def symmetrize(A):
    return 0.5 * (A + A.T)


def chol_logdet(L):
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def gaussian_entropy_from_logdet(n, logdet):
    """0.5 * log((2 pi e)^n |S|) given ``log|S|``."""
    return 0.5 * (n * LOG_2PI_E + logdet)
