"""Fusion timing and message-size benchmarks."""

import time
from dataclasses import dataclass

import numpy as np

from . import fusion, sensing
from .gp import greedy_select, posterior_full


@dataclass(frozen=True)
class FusionTiming:
    K: int
    n_events: int
    support_size: int
    per_sensor_seconds: float  # median over repeats
    centralized_seconds: float  # median over repeats; nan if not measured


def split_events(n_segments, n_events, K, rng):
    """``n_events`` observation events over ``K`` sensors, distinct within each sensor."""
    sizes = [n_events // K + (k < n_events % K) for k in range(K)]
    if max(sizes) > n_segments:
        raise ValueError(f"{max(sizes)} distinct events per sensor exceed {n_segments} segments")
    return [np.sort(rng.choice(n_segments, size=m, replace=False)) for m in sizes]


def time_fusion(model, support, blocks, values, targets):
    """Per-sensor wall time: slowest local summary, then the global summary
    and the marginal prediction every sensor performs."""
    times, summaries = [], []
    start = 0
    for k, b in enumerate(blocks):
        t0 = time.perf_counter()
        summaries.append(fusion.local_summary(model, support, b, values[start:start + b.size], k))
        times.append(time.perf_counter() - t0)
        start += b.size
    t0 = time.perf_counter()
    g = fusion.global_summary(support, summaries)
    fusion.predict_decentralized(model, support, g, targets, full_cov=False)
    return max(times) + time.perf_counter() - t0


def time_centralized(model, blocks, values, targets):
    D = np.concatenate(blocks)
    t0 = time.perf_counter()
    posterior_full(model, D, values, targets, full_cov=False, allow_overlap=True)
    return time.perf_counter() - t0


def fusion_scaling(model, n_events=960, K_values=(2, 8), support_size=64, repeats=5,
                   seed=0, centralized=True):
    """Median fusion wall times at a fixed number of observation events."""
    rng = np.random.default_rng(seed)
    n = model.n_segments
    V = np.arange(n)
    support = fusion.SupportSet.from_model(model, greedy_select(model, V, min(support_size, n)))
    model.kernel_matrix(V[:1], V[:1])  # warm the kernel cache outside the timings
    out = []
    for K in K_values:
        dec, cen = [], []
        for _ in range(repeats):
            blocks = split_events(n, n_events, K, rng)
            values = rng.normal(model.mean(np.concatenate(blocks)), 1.0)
            dec.append(time_fusion(model, support, blocks, values, V))
            if centralized:
                cen.append(time_centralized(model, blocks, values, V))
        out.append(FusionTiming(
            K, n_events, support.size, float(np.median(dec)),
            float(np.median(cen)) if cen else float("nan"),
        ))
    return out


def fit_proportional(x, y):
    """Fit ``y = c x`` in log space (every point weighted equally).

    Returns ``(c, max relative residual)``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    c = float(np.exp(np.mean(np.log(y / x))))
    return c, float(np.max(np.abs(y - c * x) / (c * x)))


def summary_sizes(support_sizes=(8, 16, 32, 64)):
    """Serialized local-summary bytes for each support size."""
    sizes = []
    for u in support_sizes:
        s = fusion.LocalSummary(0, np.zeros(u), np.zeros((u, u)))
        sizes.append(len(s.to_bytes()))
    return sizes


def adjacency_sizes(K_values=(2, 4, 8)):
    return [len(sensing.adjacency_to_bytes(np.zeros(K, dtype=np.uint8))) for K in K_values]


def message_scaling(support_sizes=(8, 16, 32, 64), K_values=(2, 4, 8)):
    """Fits of summary bytes to ``c |U|^2`` and adjacency bytes to ``c K``."""
    s = summary_sizes(support_sizes)
    a = adjacency_sizes(K_values)
    cs, rs = fit_proportional(np.square(support_sizes), s)
    ca, ra = fit_proportional(K_values, a)
    return {
        "summary_bytes": dict(zip(support_sizes, s)),
        "summary_coef": cs,
        "summary_max_rel_residual": rs,
        "adjacency_bytes": dict(zip(K_values, a)),
        "adjacency_coef": ca,
        "adjacency_max_rel_residual": ra,
    }
