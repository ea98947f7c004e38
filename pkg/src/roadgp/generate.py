"""Synthetic road networks: grids, rings and random strongly connected graphs.

Every generator is deterministic in its seed. Segment features are
(length in metres, lane count, speed limit in km/h) with fixed declared
ranges, so edge weights are comparable across generated networks.
"""

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .network import NetworkError, RoadNetwork

FEATURE_RANGES = (500.0, 4.0, 60.0)
KINDS = ("grid", "ring", "random")


def _features(rng, n, arterial=None):
    arterial = np.zeros(n, dtype=bool) if arterial is None else arterial
    length = rng.uniform(80.0, 400.0, n)
    lanes = np.where(arterial, rng.integers(2, 5, n), rng.integers(1, 3, n))
    speed = np.where(arterial, rng.choice([60.0, 70.0, 80.0], n), rng.choice([30.0, 40.0, 50.0], n))
    return np.column_stack([length, lanes.astype(float), speed])


def _strongly_connected(n, edges):
    if n <= 1:
        return True
    rows, cols = zip(*edges) if edges else ((), ())
    A = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    return connected_components(A, directed=True, connection="strong")[0] == 1


def _grid_links(segs):
    """Turn edges between directed roads: continue at the far intersection.

    U-turns are allowed only at corners (at most two incident roads) and where
    there is no other way out.
    """
    leaving = {}
    degree = {}
    for idx, (a, b) in enumerate(segs):
        leaving.setdefault(a, []).append(idx)
        for v in (a, b):
            degree.setdefault(v, set()).add(frozenset((a, b)))
    edges = []
    for i, (a, b) in enumerate(segs):
        out = leaving.get(b, [])
        if len(degree[b]) > 2:
            out = [j for j in out if segs[j][1] != a] or out
        edges.extend((i, j) for j in out)
    return edges


def grid_network(n, seed=0, segments=None):
    """Manhattan grid of ``n x n`` intersections; each road is two directed segments.

    Parameters
    ----------
    n : int
        Intersections per side (>= 2).
    segments : int, optional
        Target segment count below ``4 n (n - 1)``. Randomly chosen two-way
        roads become one-way until the count is reached, keeping the segment
        graph strongly connected.
    """
    if n < 2:
        raise ValueError("grid needs at least 2 intersections per side")
    rng = np.random.default_rng(seed)
    roads = []
    for r in range(n):
        for c in range(n):
            if c + 1 < n:
                roads.append(((r, c), (r, c + 1)))
            if r + 1 < n:
                roads.append(((r, c), (r + 1, c)))
    full = 2 * len(roads)
    target = full if segments is None else int(segments)
    if not 1 <= target <= full:
        raise ValueError(f"segment count {target} outside [1, {full}]")

    directions = {road: [True, True] for road in roads}

    def current():
        out = []
        for (a, b), (fwd, back) in directions.items():
            if fwd:
                out.append((a, b))
            if back:
                out.append((b, a))
        return out

    count = full
    for k in rng.permutation(len(roads)):
        if count == target:
            break
        road = roads[k]
        side = int(rng.integers(2))
        directions[road][side] = False
        segs = current()
        if _strongly_connected(len(segs), _grid_links(segs)):
            count -= 1
        else:
            directions[road][side] = True
    if count != target:
        raise NetworkError(f"could not trim the grid to {target} segments")

    segs = current()
    arterial = np.array(
        [(a[0] == b[0] and a[0] % 4 == 0) or (a[1] == b[1] and a[1] % 4 == 0) for a, b in segs]
    )
    feats = _features(rng, len(segs), arterial)
    # both directions of a road share its length
    first = {}
    for i, (a, b) in enumerate(segs):
        key = frozenset((a, b))
        if key in first:
            feats[i, 0] = feats[first[key], 0]
        else:
            first[key] = i
    return RoadNetwork(range(len(segs)), feats, FEATURE_RANGES, _grid_links(segs))


def ring_network(n, seed=0):
    """One-way ring of ``n`` segments: out-degree exactly 1."""
    if n < 1:
        raise ValueError("ring needs at least 1 segment")
    rng = np.random.default_rng(seed)
    edges = [(i, (i + 1) % n) for i in range(n)] if n > 1 else []
    return RoadNetwork(range(n), _features(rng, n), FEATURE_RANGES, edges)


def random_network(n, seed=0, max_out_degree=2, extra=0.5):
    """Random strongly connected graph: a shuffled Hamiltonian cycle plus chords.

    Each segment gains an extra successor with probability ``extra`` while its
    out-degree stays at most ``max_out_degree``.
    """
    if n < 1:
        raise ValueError("random network needs at least 1 segment")
    if max_out_degree < 1:
        raise ValueError("max_out_degree must be >= 1")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    edges = {(int(perm[i]), int(perm[(i + 1) % n])) for i in range(n)} if n > 1 else set()
    out = {i: 1 for i in range(n)} if n > 1 else {0: 0}
    for i in range(n):
        while out[i] < max_out_degree and n > 2 and rng.random() < extra:
            j = int(rng.integers(n))
            if j != i and (i, j) not in edges:
                edges.add((i, j))
                out[i] += 1
            else:
                break
    return RoadNetwork(range(n), _features(rng, n), FEATURE_RANGES, sorted(edges))


def generate_network(kind, size, seed=0, segments=None):
    if kind == "grid":
        net = grid_network(size, seed, segments)
    elif kind == "ring":
        net = ring_network(size, seed)
    elif kind == "random":
        net = random_network(size, seed)
    else:
        raise ValueError(f"unknown network kind {kind!r}; expected one of {', '.join(KINDS)}")
    if not net.is_weakly_connected():
        raise NetworkError("generated network is not weakly connected")
    return net
