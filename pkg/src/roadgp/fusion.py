"""Decentralized data fusion over a common support set.

Each sensor compresses its own observations into a local summary on the
support set U; summing the local summaries gives a global summary from which
every sensor computes the same predictive distribution. ``pitc_oracle``
computes the centralized PITC prediction by direct dense algebra and
``check_equivalence`` compares the two routes.
"""

import struct
from dataclasses import dataclass

import numpy as np

from . import _linalg as la
from .gp import PosteriorGaussian


@dataclass(frozen=True, eq=False)
class SupportSet:
    """Support segments with their prior covariance and its Cholesky factor.

    When the prior covariance needs jitter to factorize, ``cov`` includes it so
    every use of the support prior sees the same matrix.
    """

    segments: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    jitter: float = 0.0

    @classmethod
    def from_model(cls, model, segments):
        segments = np.asarray(segments, dtype=int).ravel()
        if segments.size == 0:
            raise ValueError("support set must not be empty")
        cov = model.gram(segments)
        chol, jitter = la.jittered_cholesky(cov)
        if jitter:
            cov = cov + jitter * np.eye(segments.size)
        return cls(segments, cov, chol, jitter)

    @property
    def size(self):
        return self.segments.size

    def key(self):
        return tuple(int(s) for s in self.segments)


_HEADER = struct.Struct("<II")


@dataclass(frozen=True, eq=False)
class LocalSummary:
    """One sensor's observations projected onto the support set."""

    sensor: int
    z: np.ndarray
    cov: np.ndarray
    support_key: tuple = ()
    jitter: float = 0.0

    def to_bytes(self):
        """Little-endian record: sensor id, |U| (uint32), z, then the full
        symmetric |U| x |U| matrix row-major (float64)."""
        u = self.z.size
        return (
            _HEADER.pack(self.sensor, u)
            + self.z.astype("<f8").tobytes()
            + np.ascontiguousarray(self.cov, dtype="<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, data, support_key=()):
        sensor, u = _HEADER.unpack_from(data, 0)
        off = _HEADER.size
        z = np.frombuffer(data, dtype="<f8", count=u, offset=off).astype(float)
        off += 8 * u
        cov = np.frombuffer(data, dtype="<f8", count=u * u, offset=off).astype(float)
        return cls(sensor, z, cov.reshape(u, u), support_key)


@dataclass(frozen=True, eq=False)
class GlobalSummary:
    z: np.ndarray
    cov: np.ndarray
    n_sensors: int
    support_key: tuple = ()


def collapse_observations(D, z):
    """Drop repeated segments, keeping the latest measurement of each."""
    D = np.asarray(D, dtype=int).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if D.shape != z.shape:
        raise ValueError(f"{z.size} measurements for {D.size} segments")
    latest = {}
    for s, v in zip(D.tolist(), z.tolist()):
        latest.pop(s, None)
        latest[s] = v
    return np.fromiter(latest.keys(), dtype=int, count=len(latest)), np.fromiter(
        latest.values(), dtype=float, count=len(latest)
    )


def conditional_on_support(model, support, D):
    """``Sigma_{DD|U}``: prior covariance of ``D`` given the support set."""
    W = la.forward(support.chol, model.cross(support.segments, D))
    return la.symmetrize(model.gram(D) - W.T @ W)


def local_summary(model, support, D, z, sensor=0):
    """Local summary of one sensor's observations.

    Returns ``Sigma_{UD} Sigma_{DD|U}^{-1} (z - mu_D)`` and
    ``Sigma_{UD} Sigma_{DD|U}^{-1} Sigma_{DU}``; both are zero when the sensor
    has no observations.
    """
    D, z = collapse_observations(D, z)
    u = support.size
    if D.size == 0:
        return LocalSummary(sensor, np.zeros(u), np.zeros((u, u)), support.key())
    Lc, jitter = la.jittered_cholesky(conditional_on_support(model, support, D))
    B = la.forward(Lc, model.cross(D, support.segments))
    r = la.forward(Lc, z - model.mean(D))
    return LocalSummary(sensor, B.T @ r, la.symmetrize(B.T @ B), support.key(), jitter)


def global_summary(support, summaries):
    """Sum the local summaries (ascending sensor id) onto the support prior."""
    key = support.key()
    ordered = sorted(summaries, key=lambda s: s.sensor)
    z = np.zeros(support.size)
    cov = support.cov.copy()
    for s in ordered:
        if s.support_key and s.support_key != key:
            raise ValueError(f"sensor {s.sensor} summarized onto a different support set")
        if s.z.shape != z.shape:
            raise ValueError(f"sensor {s.sensor} summary has |U|={s.z.size}, expected {z.size}")
        z = z + s.z
        cov = cov + s.cov
    return GlobalSummary(z, cov, len(ordered), key)


def predict_decentralized(model, support, g, Y, full_cov=True):
    """Predictive Gaussian at ``Y`` from the global summary."""
    Y = np.asarray(Y, dtype=int).ravel()
    L2, jitter = la.jittered_cholesky(g.cov)
    K_UY = model.cross(support.segments, Y)
    A = la.forward(support.chol, K_UY)
    B = la.forward(L2, K_UY)
    mean = model.mean(Y) + B.T @ la.forward(L2, g.z)
    if full_cov:
        cov = la.symmetrize(model.gram(Y) - A.T @ A + B.T @ B)
        return PosteriorGaussian(Y, mean, cov=cov, jitter=jitter)
    var = model.hyper.signal_variance + model.noise_variance - np.sum(A * A, 0) + np.sum(B * B, 0)
    return PosteriorGaussian(Y, mean, var=var, jitter=jitter)


def pitc_oracle(model, U, partition, z_D, Y, full_cov=True, support_jitter=0.0):
    """Centralized PITC prediction by dense LU solves.

    Parameters
    ----------
    U : array-like of int
        Support segments.
    partition : list of array-like of int
        Observation blocks ``D_1 .. D_K``; ``z_D`` is their concatenation.
    support_jitter : float
        Added to the diagonal of the support prior covariance.
    """
    U = np.asarray(U, dtype=int).ravel()
    Y = np.asarray(Y, dtype=int).ravel()
    blocks = [np.asarray(b, dtype=int).ravel() for b in partition]
    D = np.concatenate(blocks) if blocks else np.zeros(0, dtype=int)
    z_D = np.asarray(z_D, dtype=float).ravel()
    if z_D.shape != D.shape:
        raise ValueError(f"{z_D.size} measurements for {D.size} observations")
    S_YY = model.gram(Y)
    if D.size == 0:
        cov = S_YY
        return PosteriorGaussian(Y, model.mean(Y), cov=cov) if full_cov else PosteriorGaussian(
            Y, model.mean(Y), var=np.diag(cov).copy()
        )
    S_UU = model.gram(U) + support_jitter * np.eye(U.size)
    S_DU = model.cross(D, U)
    S_YU = model.cross(Y, U)
    G_DD = S_DU @ np.linalg.solve(S_UU, S_DU.T)
    G_YD = S_YU @ np.linalg.solve(S_UU, S_DU.T)
    Lam = np.zeros((D.size, D.size))
    start = 0
    for b in blocks:
        sl = slice(start, start + b.size)
        Lam[sl, sl] = model.gram(b) - G_DD[sl, sl]
        start += b.size
    M = G_DD + Lam
    mean = model.mean(Y) + G_YD @ np.linalg.solve(M, z_D - model.mean(D))
    cov = S_YY - G_YD @ np.linalg.solve(M, G_YD.T)
    cov = 0.5 * (cov + cov.T)
    if full_cov:
        return PosteriorGaussian(Y, mean, cov=cov)
    return PosteriorGaussian(Y, mean, var=np.diag(cov).copy())


def relative_deviation(a, b):
    """Largest absolute difference scaled by the largest magnitude in ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size == 0:
        return 0.0
    scale = max(float(np.max(np.abs(b))), np.finfo(float).tiny)
    return float(np.max(np.abs(a - b)) / scale)


@dataclass(frozen=True)
class EquivalenceReport:
    mean_deviation: float
    cov_deviation: float
    tol: float
    jitter_used: bool
    max_jitter: float

    @property
    def deviation(self):
        return max(self.mean_deviation, self.cov_deviation)

    @property
    def passed(self):
        return self.deviation <= self.tol


def check_equivalence(model, U, partition, z_D, Y, tol=1e-8):
    """Compare summary-based prediction against the PITC oracle."""
    support = SupportSet.from_model(model, U)
    blocks = [np.asarray(b, dtype=int).ravel() for b in partition]
    z_D = np.asarray(z_D, dtype=float).ravel()
    summaries = []
    start = 0
    for k, b in enumerate(blocks):
        summaries.append(local_summary(model, support, b, z_D[start:start + b.size], sensor=k))
        start += b.size
    g = global_summary(support, summaries)
    dec = predict_decentralized(model, support, g, Y)
    ora = pitc_oracle(model, U, blocks, z_D, Y, support_jitter=support.jitter)
    jitters = [support.jitter] + [s.jitter for s in summaries] + [dec.jitter]
    return EquivalenceReport(
        relative_deviation(dec.mean, ora.mean),
        relative_deviation(dec.cov, ora.cov),
        tol,
        any(j > 0 for j in jitters),
        max(jitters),
    )
