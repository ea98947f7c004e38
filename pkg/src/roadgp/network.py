"""Road network graph, geodesic distances, MDS embedding and the graph kernel.

Segments are vertices of a weighted directed graph. An edge ``(s, s')`` means
the end of segment ``s`` connects to the start of ``s'``; its weight is the
range-standardized Manhattan distance between the two feature vectors.
Shortest-path distances are symmetrized, embedded in Euclidean space with
classical MDS, and a squared-exponential kernel is evaluated on the embedding.

Internally every segment is addressed by its integer position in
``RoadNetwork.ids`` (ids are kept sorted, so "smallest id" and "smallest
index" coincide).
"""

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components


class NetworkError(ValueError):
    """Invalid road network or network file."""


def edge_weight(features, other, ranges):
    """Standardized Manhattan distance ``sum_i |f_i - f'_i| / r_i``."""
    a = np.asarray(features, dtype=float).ravel()
    b = np.asarray(other, dtype=float).ravel()
    r = np.asarray(ranges, dtype=float).ravel()
    if not (a.shape == b.shape == r.shape):
        raise ValueError(
            f"dimension mismatch: features {a.shape[0]}, {b.shape[0]}, ranges {r.shape[0]}"
        )
    if np.any(r <= 0):
        raise ValueError("feature ranges must be strictly positive")
    return float(np.sum(np.abs(a - b) / r))


def _sort_key(value):
    return (0, value, "") if isinstance(value, (int, np.integer)) else (1, 0, str(value))


class RoadNetwork:
    """Weighted directed graph of road segments.

    Parameters
    ----------
    ids : sequence
        Segment identifiers. Reordered ascending; integers sort numerically.
    features : array-like of shape (n_segments, p)
    ranges : array-like of shape (p,)
        Declared range of each feature, strictly positive.
    edges : iterable of (from_id, to_id)
    """

    def __init__(self, ids, features, ranges, edges):
        ids = list(ids)
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features[:, None]
        ranges = np.asarray(ranges, dtype=float).ravel()
        if len(set(ids)) != len(ids):
            raise NetworkError("duplicate segment ids")
        if features.shape != (len(ids), ranges.shape[0]):
            raise NetworkError(
                f"features have shape {features.shape}, expected ({len(ids)}, {ranges.shape[0]})"
            )
        if np.any(ranges <= 0) or not np.all(np.isfinite(ranges)):
            raise NetworkError("feature ranges must be finite and strictly positive")

        order = sorted(range(len(ids)), key=lambda i: _sort_key(ids[i]))
        self.ids = [ids[i] for i in order]
        self.features = features[order]
        self.ranges = ranges
        self.index = {sid: i for i, sid in enumerate(self.ids)}

        pairs = set()
        for a, b in edges:
            if a not in self.index or b not in self.index:
                raise NetworkError(f"edge ({a!r}, {b!r}) references an unknown segment")
            pairs.add((self.index[a], self.index[b]))
        self.edges = sorted(pairs)
        self.weights = {
            (i, j): edge_weight(self.features[i], self.features[j], self.ranges)
            for i, j in self.edges
        }
        succ = [[] for _ in self.ids]
        for i, j in self.edges:
            succ[i].append(j)
        self._successors = [tuple(sorted(s)) for s in succ]

    def __len__(self):
        return len(self.ids)

    def __repr__(self):
        return f"RoadNetwork(n_segments={len(self)}, n_edges={len(self.edges)})"

    @property
    def n_segments(self):
        return len(self.ids)

    def successors(self, i):
        return self._successors[i]

    @property
    def max_out_degree(self):
        return max((len(s) for s in self._successors), default=0)

    def _adjacency(self):
        n = len(self)
        rows = [i for i, _ in self.edges]
        cols = [j for _, j in self.edges]
        return csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))

    def is_weakly_connected(self):
        if len(self) <= 1:
            return True
        n_comp, _ = connected_components(self._adjacency(), directed=True, connection="weak")
        return n_comp == 1

    def is_strongly_connected(self):
        if len(self) <= 1:
            return True
        n_comp, _ = connected_components(self._adjacency(), directed=True, connection="strong")
        return n_comp == 1

    # -- file formats ------------------------------------------------------

    @classmethod
    def load(cls, path):
        """Read a network file (sectioned CSV or JSON, detected from content)."""
        text = Path(path).read_text()
        if text.lstrip().startswith("{"):
            net = cls.from_json(text)
        else:
            net = cls.from_csv(text)
        if not net.is_weakly_connected():
            raise NetworkError(f"{path}: network is not weakly connected")
        return net

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        try:
            ranges = doc["ranges"]
            segs = doc["segments"]
            ids = [s["id"] for s in segs]
            feats = [s["features"] for s in segs]
            edges = [tuple(e) for e in doc.get("edges", [])]
        except (KeyError, TypeError) as exc:
            raise NetworkError(f"malformed network document: {exc}") from None
        return cls(ids, np.asarray(feats, dtype=float).reshape(len(ids), len(ranges)), ranges, edges)

    @classmethod
    def from_csv(cls, text):
        section = None
        ranges = None
        ids, feats, raw_edges = [], [], []
        for lineno, row in enumerate(csv.reader(io.StringIO(text)), start=1):
            row = [c.strip() for c in row]
            if not row or not row[0] or row[0].startswith("#"):
                continue
            head = row[0].lower()
            if head in ("[segments]", "[edges]"):
                section = head[1:-1]
                continue
            if section == "segments":
                if head == "ranges":
                    ranges = [float(x) for x in row[1:]]
                    continue
                ids.append(row[0])
                feats.append([float(x) for x in row[1:]])
            elif section == "edges":
                if len(row) != 2:
                    raise NetworkError(f"line {lineno}: edge records need exactly two ids")
                raw_edges.append((row[0], row[1]))
            else:
                raise NetworkError(f"line {lineno}: record outside [segments]/[edges]")
        if ranges is None:
            raise NetworkError("missing 'ranges' header row in [segments]")
        if any(len(f) != len(ranges) for f in feats):
            raise NetworkError("segment feature count does not match ranges header")
        if all(_looks_int(s) for s in ids):
            conv = {s: int(s) for s in ids}
            ids = [conv[s] for s in ids]
            raw_edges = [(int(a), int(b)) for a, b in raw_edges]
        return cls(ids, np.asarray(feats, dtype=float).reshape(len(ids), len(ranges)), ranges, raw_edges)

    def to_csv(self):
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["[segments]"])
        w.writerow(["ranges"] + [repr(float(r)) for r in self.ranges])
        for sid, f in zip(self.ids, self.features):
            w.writerow([sid] + [repr(float(x)) for x in f])
        w.writerow(["[edges]"])
        for i, j in self.edges:
            w.writerow([self.ids[i], self.ids[j]])
        return out.getvalue()

    def to_json(self):
        doc = {
            "ranges": [float(r) for r in self.ranges],
            "segments": [
                {"id": _jsonable(sid), "features": [float(x) for x in f]}
                for sid, f in zip(self.ids, self.features)
            ],
            "edges": [[_jsonable(self.ids[i]), _jsonable(self.ids[j])] for i, j in self.edges],
        }
        return json.dumps(doc, indent=1)

    def save(self, path):
        path = Path(path)
        path.write_text(self.to_json() if path.suffix == ".json" else self.to_csv())


def _looks_int(s):
    try:
        int(s)
    except ValueError:
        return False
    return True


def _jsonable(v):
    return int(v) if isinstance(v, np.integer) else v


def shortest_path_distances(net):
    """All-pairs directed shortest-path distances (Floyd-Warshall).

    ``inf`` marks ordered pairs with no directed path.
    """
    n = len(net)
    d = np.full((n, n), np.inf)
    for (i, j), w in net.weights.items():
        d[i, j] = min(d[i, j], w)
    np.fill_diagonal(d, 0.0)
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


def symmetrize_distances(d):
    """Average the two directions; fall back to whichever one is finite."""
    d = np.asarray(d, dtype=float)
    dt = d.T
    both = np.isfinite(d) & np.isfinite(dt)
    out = np.where(both, 0.5 * (d + dt), np.where(np.isfinite(d), d, dt))
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise NetworkError(f"segments {i} and {j} are mutually unreachable")
    return out


def embedding_stress(d, coords):
    """Sum over unordered pairs of ``(d - ||g(s) - g(s')||)^2``."""
    coords = np.asarray(coords, dtype=float)
    diff = coords[:, None, :] - coords[None, :, :]
    e = np.sqrt(np.sum(diff * diff, axis=-1))
    iu = np.triu_indices(len(coords), k=1)
    return float(np.sum((d[iu] - e[iu]) ** 2))


@dataclass(frozen=True)
class Embedding:
    """Euclidean coordinates of every segment plus the achieved squared loss."""

    coords: np.ndarray
    stress: float
    eigenvalues: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def dim(self):
        return self.coords.shape[1]

    def __len__(self):
        return self.coords.shape[0]


def choose_dimension(eigenvalues, mass=0.95):
    """Smallest dimension whose leading positive eigenvalues reach ``mass``."""
    pos = np.clip(np.sort(np.asarray(eigenvalues))[::-1], 0.0, None)
    total = pos.sum()
    if total <= 0:
        return 1
    return int(np.searchsorted(np.cumsum(pos) / total, mass - 1e-12) + 1)


def mds_embed(d, dim=None, mass=0.95):
    """Classical MDS of a (possibly asymmetric) distance matrix.

    Parameters
    ----------
    d : ndarray of shape (n, n)
        Geodesic distances; symmetrized first.
    dim : int, optional
        Embedding dimension. Defaults to the smallest dimension capturing
        ``mass`` of the positive eigenvalue mass.
    """
    d = symmetrize_distances(d)
    n = d.shape[0]
    if dim is not None and not (1 <= dim <= max(n, 1)):
        raise ValueError(f"embedding dimension {dim} out of range [1, {n}]")
    if n == 0:
        return Embedding(np.zeros((0, dim or 1)), 0.0)
    J = np.eye(n) - np.full((n, n), 1.0 / n)
    B = -0.5 * J @ (d * d) @ J
    evals, evecs = np.linalg.eigh(0.5 * (B + B.T))
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    if dim is None:
        dim = min(choose_dimension(evals, mass), n)
    lam = np.clip(evals[:dim], 0.0, None)
    coords = evecs[:, :dim] * np.sqrt(lam)
    # eigenvector signs are arbitrary; pin them for reproducibility
    for c in range(dim):
        col = coords[:, c]
        k = int(np.argmax(np.abs(col)))
        if col[k] < 0:
            coords[:, c] = -col
    return Embedding(coords, embedding_stress(d, coords), evals)


@dataclass(frozen=True)
class KernelHyper:
    """Squared-exponential hyperparameters: signal variance, length-scales, noise."""

    signal_variance: float
    length_scales: object = 1.0
    noise_variance: float = 0.0

    def __post_init__(self):
        # stored as floats so integer inputs never produce integer arrays downstream
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))
        if not self.signal_variance > 0:
            raise ValueError("signal_variance must be > 0")
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if ls.ndim != 1 or np.any(ls <= 0):
            raise ValueError("length_scales must be positive")
        if not self.noise_variance >= 0:
            raise ValueError("noise_variance must be >= 0")

    def scales(self, dim):
        ls = np.atleast_1d(np.asarray(self.length_scales, dtype=float))
        if ls.size == 1:
            return np.full(dim, ls[0])
        if ls.size != dim:
            raise ValueError(f"{ls.size} length-scales for a {dim}-dimensional embedding")
        return ls


def se_kernel(A, B, hyper):
    """Squared-exponential kernel matrix between coordinate rows of A and B."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    ls = hyper.scales(A.shape[1])
    a = A / ls
    b = B / ls
    sq = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    np.maximum(sq, 0.0, out=sq)
    return hyper.signal_variance * np.exp(-0.5 * sq)


def _coord(emb, s):
    if not (0 <= s < len(emb)):
        raise KeyError(f"unknown segment {s}")
    return emb.coords[s]


def kernel(s, s2, emb, hyper):
    """Kernel value ``k(s, s')`` between two embedded segments."""
    a, b = _coord(emb, s), _coord(emb, s2)
    ls = hyper.scales(emb.dim)
    return float(hyper.signal_variance * np.exp(-0.5 * np.sum(((a - b) / ls) ** 2)))


def prior_covariance(s, s2, emb, hyper):
    """``k(s, s') + noise_variance * [s == s']``."""
    return kernel(s, s2, emb, hyper) + (hyper.noise_variance if s == s2 else 0.0)
