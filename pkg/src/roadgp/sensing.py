"""Entropy-maximizing walk selection for a team of mobile sensors.

Walk semantics
--------------
A walk of length L from origin ``s`` is a sequence of L segments following
directed edges. Its unobserved set excludes the origin and everything already
observed; revisits count once. An origin without outgoing edges yields the
single stay-in-place walk ``(s,) * L``.

Within a joint walk a segment reachable by several sensors is attributed to
the sensor with the smallest id (its "owner"); the joint predictive covariance
is block-structured by owner: ``Sigma_{YY|U}`` inside an owner block plus the
rank-|U| term ``Sigma_{YU} Sigma_glob^{-1} Sigma_{UY}`` everywhere.
"""

import itertools
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _linalg as la

MAX_JOINT_WALKS = 10**6


class EnumerationLimitError(RuntimeError):
    """Exhaustive joint-walk search would exceed ``MAX_JOINT_WALKS``."""


# -- walks -------------------------------------------------------------------


def enumerate_walks(net, origin, L, observed=()):
    """All length-``L`` walks from ``origin`` and their unobserved segments.

    Returns
    -------
    walks : list of tuple
        Lexicographically sorted segment sequences.
    reachable : ndarray
        Sorted union of the walks' segments minus ``observed`` and the origin.
    """
    if not 0 <= origin < len(net):
        raise KeyError(f"unknown origin segment {origin}")
    if L < 1:
        raise ValueError("walk length must be >= 1")
    paths = [()]
    for _ in range(L):
        grown = []
        for p in paths:
            last = p[-1] if p else origin
            nxt = net.successors(last)
            if nxt:
                grown.extend(p + (v,) for v in nxt)
            else:
                grown.append(p + (last,))
        paths = grown
    walks = sorted(set(paths))
    observed = set(int(s) for s in observed)
    seen = {v for w in walks for v in w}
    reachable = np.array(sorted(seen - observed - {origin}), dtype=int)
    return walks, reachable


def walk_unobserved(origin, walk, observed):
    observed = observed if isinstance(observed, (set, frozenset)) else set(observed)
    return tuple(sorted({v for v in walk if v != origin and v not in observed}))


def joint_unobserved(origins, joint, observed):
    """Owner-attributed unobserved segments of a joint walk.

    ``origins`` and ``joint`` map sensor id to origin and walk. Returns a dict
    sensor id -> tuple of the segments that sensor owns.
    """
    taken = set()
    out = {}
    for k in sorted(joint):
        own = [s for s in walk_unobserved(origins[k], joint[k], observed) if s not in taken]
        taken.update(own)
        out[k] = tuple(own)
    return out


# -- decentralized coordination ----------------------------------------------


def cholesky_global(S):
    """Lower-triangular ``Psi`` with ``Psi Psi^T = S`` (jitter ladder on failure)."""
    return la.jittered_cholesky(np.asarray(S, dtype=float))[0]


_PHI_HEADER = struct.Struct("<III")


@dataclass(frozen=True, eq=False)
class PhiSet:
    """Whitened support covariances ``Psi \\ Sigma_{Us}`` of a sensor's reachable segments."""

    sensor: int
    segments: np.ndarray
    vectors: np.ndarray  # shape (len(segments), |U|)

    def __len__(self):
        return self.segments.size

    def to_bytes(self):
        n, u = self.vectors.shape
        return (
            _PHI_HEADER.pack(self.sensor, n, u)
            + self.segments.astype("<i4").tobytes()
            + np.ascontiguousarray(self.vectors, dtype="<f8").tobytes()
        )

    @classmethod
    def from_bytes(cls, data):
        sensor, n, u = _PHI_HEADER.unpack_from(data, 0)
        off = _PHI_HEADER.size
        segs = np.frombuffer(data, dtype="<i4", count=n, offset=off).astype(int)
        off += 4 * n
        vec = np.frombuffer(data, dtype="<f8", count=n * u, offset=off).astype(float)
        return cls(sensor, segs, vec.reshape(n, u))


def compute_phi(sensor, psi, segments, model, support):
    segments = np.asarray(segments, dtype=int).ravel()
    u = psi.shape[0]
    if segments.size == 0:
        return PhiSet(sensor, segments, np.zeros((0, u)))
    vec = la.forward(psi, model.cross(support.segments, segments)).T
    return PhiSet(sensor, segments, vec)


def max_abs_dot(phi_a, phi_b):
    if len(phi_a) == 0 or len(phi_b) == 0:
        return 0.0
    return float(np.max(np.abs(phi_a.vectors @ phi_b.vectors.T)))


def adjacent(phi_a, phi_b, eps):
    """Whether two sensors must coordinate: some ``|phi^T phi'| > eps``."""
    if not eps > 0:
        raise ValueError("eps must be > 0")
    return max_abs_dot(phi_a, phi_b) > eps


def adjacency_vector(sensor, phis, eps):
    """Row ``a_k`` of the adjacency matrix as a uint8 vector of length K."""
    a = np.zeros(len(phis), dtype=np.uint8)
    for j, other in enumerate(phis):
        if j != sensor and adjacent(phis[sensor], other, eps):
            a[j] = 1
    return a


def adjacency_to_bytes(a):
    return np.asarray(a, dtype=np.uint8).tobytes()


def adjacency_from_bytes(data):
    return np.frombuffer(data, dtype=np.uint8).copy()


def connected_components(A):
    """Connected components of a symmetric 0/1 matrix by depth-first search."""
    K = A.shape[0]
    label = [-1] * K
    comps = []
    for root in range(K):
        if label[root] >= 0:
            continue
        stack = [root]
        label[root] = len(comps)
        members = []
        while stack:
            v = stack.pop()
            members.append(v)
            for w in np.flatnonzero(A[v]):
                if label[w] < 0:
                    label[w] = len(comps)
                    stack.append(int(w))
        comps.append(tuple(sorted(members)))
    return comps


@dataclass(frozen=True, eq=False)
class CoordinationGraph:
    adjacency: np.ndarray
    components: list
    kappa: int

    def component_of(self, k):
        for c in self.components:
            if k in c:
                return c
        raise KeyError(k)


def build_coordination_graph(phis, eps):
    """Assemble the adjacency matrix from each sensor's vector and split it into components."""
    K = len(phis)
    if K < 1:
        raise ValueError("need at least one sensor")
    A = np.column_stack([adjacency_vector(k, phis, eps) for k in range(K)])
    if not np.array_equal(A, A.T):
        raise RuntimeError("adjacency matrix is not symmetric")
    comps = connected_components(A)
    return CoordinationGraph(A, comps, max(len(c) for c in comps))


# -- joint-walk objectives ----------------------------------------------------


def _batched_logdet(mats):
    sign, logdet = np.linalg.slogdet(mats)
    return np.where(sign > 0, logdet, -np.inf)


class JointWalkObjective:
    """Exhaustive scorer for joint walks of a fixed group of sensors.

    Parameters
    ----------
    origins : dict
        sensor id -> origin segment.
    walks : dict
        sensor id -> list of walks (lexicographic order).
    observed : set
        Observed segments (excluded from every unobserved set).
    segments : ndarray
        Sorted union of the sensors' reachable unobserved segments.
    shared : ndarray
        Covariance term applied to every pair of segments.
    block : ndarray, optional
        Additional term applied only to pairs with the same owner.
    groups : dict, optional
        sensor id -> group label; covariances between segments whose owners
        are in different groups are dropped (block-diagonal surrogate).
    """

    def __init__(self, origins, walks, observed, segments, shared, block=None, groups=None):
        self.sensors = sorted(walks)
        self._group = None if groups is None else np.array([groups[k] for k in self.sensors])
        self.origins = origins
        self.walks = walks
        self.segments = np.asarray(segments, dtype=int)
        self.shared = shared
        self.block = block
        pos = {int(s): i for i, s in enumerate(self.segments)}
        self._masks = {
            k: [
                sum(1 << pos[s] for s in walk_unobserved(origins[k], w, observed))
                for w in walks[k]
            ]
            for k in self.sensors
        }
        self._cache = {}

    @property
    def n_joint(self):
        n = 1
        for k in self.sensors:
            n *= len(self.walks[k])
        return n

    def _key(self, choice):
        taken = 0
        owned = []
        for k, j in zip(self.sensors, choice):
            m = self._masks[k][j] & ~taken
            taken |= m
            owned.append(m)
        if self.block is None and self._group is None:
            return (taken,)
        return tuple(owned)

    def _matrix_parts(self, key):
        idx, own = [], []
        for o, m in enumerate(key):
            b = 0
            while m:
                if m & 1:
                    idx.append(b)
                    own.append(o)
                m >>= 1
                b += 1
        order = np.argsort(idx, kind="stable")
        return np.asarray(idx, dtype=int)[order], np.asarray(own, dtype=int)[order]

    def matrix(self, key):
        idx, own = self._matrix_parts(key)
        M = self.shared[np.ix_(idx, idx)].copy()
        if self.block is not None:
            M += self.block[np.ix_(idx, idx)] * (own[:, None] == own[None, :])
        if self._group is not None:
            g = self._group[own]
            M *= g[:, None] == g[None, :]
        return M

    def _score_keys(self, keys):
        todo = [k for k in keys if k not in self._cache]
        groups = {}
        for key in todo:
            idx, own = self._matrix_parts(key)
            groups.setdefault(idx.size, []).append((key, idx, own))
        for size, items in groups.items():
            if size == 0:
                for key, _, _ in items:
                    self._cache[key] = 0.0
                continue
            I = np.stack([it[1] for it in items])
            mats = self.shared[I[:, :, None], I[:, None, :]]
            O = np.stack([it[2] for it in items])
            if self.block is not None:
                mats = mats + self.block[I[:, :, None], I[:, None, :]] * (
                    O[:, :, None] == O[:, None, :]
                )
            if self._group is not None:
                G = self._group[O]
                mats = mats * (G[:, :, None] == G[:, None, :])
            logdet = _batched_logdet(mats)
            for (key, _, _), ld in zip(items, logdet):
                self._cache[key] = la.gaussian_entropy_from_logdet(size, float(ld))

    def choices(self):
        if self.n_joint > MAX_JOINT_WALKS:
            raise EnumerationLimitError(
                f"{self.n_joint} joint walks exceed the limit of {MAX_JOINT_WALKS}"
            )
        return itertools.product(*(range(len(self.walks[k])) for k in self.sensors))

    def entropy(self, choice):
        key = self._key(choice)
        self._score_keys([key])
        return self._cache[key]

    def best(self):
        """Maximum-entropy joint walk; ties go to the lexicographically first."""
        choices = list(self.choices())
        keys = [self._key(c) for c in choices]
        self._score_keys(set(keys))
        scores = np.array([self._cache[k] for k in keys])
        j = int(np.argmax(scores))
        choice = choices[j]
        return {k: self.walks[k][i] for k, i in zip(self.sensors, choice)}, float(scores[j])

    def all_scores(self):
        choices = list(self.choices())
        keys = [self._key(c) for c in choices]
        self._score_keys(set(keys))
        return choices, np.array([self._cache[k] for k in keys])


def _reachable_union(reachable, members):
    parts = [reachable[k] for k in members]
    return np.unique(np.concatenate(parts)) if parts else np.zeros(0, dtype=int)


def pitc_walk_objective(model, support, psi, origins, walks, reachable, observed, members,
                        groups=None):
    """Objective over the predictive covariance built from the global summary."""
    segs = _reachable_union(reachable, members)
    K_UY = model.cross(support.segments, segs)
    W = la.forward(support.chol, K_UY)
    cond = la.symmetrize(model.gram(segs) - W.T @ W)
    phi = la.forward(psi, K_UY)
    shared = phi.T @ phi
    return JointWalkObjective(
        {k: origins[k] for k in members},
        {k: walks[k] for k in members},
        observed,
        segs,
        shared,
        cond,
        groups,
    )


def dense_walk_objective(cov_fn, origins, walks, reachable, observed, members):
    """Objective over an arbitrary posterior covariance ``cov_fn(segments)``."""
    segs = _reachable_union(reachable, members)
    return JointWalkObjective(
        {k: origins[k] for k in members},
        {k: walks[k] for k in members},
        observed,
        segs,
        cov_fn(segs) if segs.size else np.zeros((0, 0)),
    )


@dataclass(frozen=True)
class JointWalk:
    walks: dict
    unobserved: dict
    entropy: float

    @property
    def segments(self):
        return tuple(sorted(s for v in self.unobserved.values() for s in v))


class SensingRound:
    """Everything one planning round needs, computed once.

    Parameters
    ----------
    net : RoadNetwork
    model : GpModel
    support : SupportSet
    g : GlobalSummary
    origins : sequence of int
        Current segment of each sensor (sensor id = position).
    observed : iterable of int
        All observed segments.
    L : int
        Walk length.
    """

    def __init__(self, net, model, support, g, origins, observed, L):
        self.net = net
        self.model = model
        self.support = support
        self.g = g
        self.origins = {k: int(s) for k, s in enumerate(origins)}
        self.observed = set(int(s) for s in observed)
        self.L = L
        self.walks, self.reachable = {}, {}
        for k, s in self.origins.items():
            self.walks[k], self.reachable[k] = enumerate_walks(net, s, L, self.observed)
        self.psi = cholesky_global(g.cov)
        self.phis = [
            compute_phi(k, self.psi, self.reachable[k], model, support) for k in self.origins
        ]

    @property
    def K(self):
        return len(self.origins)

    def coordination_graph(self, eps):
        return build_coordination_graph(self.phis, eps)

    def objective(self, members):
        return pitc_walk_objective(
            self.model, self.support, self.psi, self.origins, self.walks, self.reachable,
            self.observed, sorted(members),
        )

    def surrogate(self, graph):
        """Objective over all sensors that ignores cross-component covariance."""
        groups = {k: n for n, comp in enumerate(graph.components) for k in comp}
        return pitc_walk_objective(
            self.model, self.support, self.psi, self.origins, self.walks, self.reachable,
            self.observed, range(self.K), groups,
        )

    def component_best(self, members):
        return self.objective(members).best()

    def centralized_best(self):
        return self.component_best(range(self.K))

    def assemble(self, walks):
        """Attach owner-attributed unobserved sets and the entropy under the full objective."""
        obj = self.objective(range(self.K))
        choice = tuple(obj.walks[k].index(walks[k]) for k in obj.sensors)
        return JointWalk(
            dict(walks),
            joint_unobserved(self.origins, walks, self.observed),
            obj.entropy(choice),
        )

    def plan(self, eps):
        """Per-component maximization; returns the assembled joint walk and the graph."""
        graph = self.coordination_graph(eps)
        chosen = {}
        for comp in graph.components:
            best, _ = self.component_best(comp)
            chosen.update(best)
        return self.assemble(chosen), graph


def component_joint_walk(model, support, g, members, walks, origins, observed):
    """Best joint walk of a sensor subset and its entropy."""
    observed = set(observed)
    reachable = {
        k: np.array(
            sorted({v for w in walks[k] for v in w} - observed - {origins[k]}), dtype=int
        )
        for k in members
    }
    obj = pitc_walk_objective(
        model, support, cholesky_global(g.cov), origins, walks, reachable, observed, sorted(members)
    )
    return obj.best()


def centralized_walk_max(model, support, g, walks, origins, observed):
    """Exhaustive maximizer over all sensors' joint walks."""
    return component_joint_walk(model, support, g, sorted(walks), walks, origins, observed)


# -- performance guarantee check ----------------------------------------------


@dataclass
class BoundReport:
    K: int
    L: int
    eps: float
    kappa: int
    xi: float
    condition: float
    gap: float
    eps_bar: float
    optimal_entropy: float
    decentralized_entropy: float
    shared_across_components: bool
    sandwich_checked: int = 0
    sandwich_violations: list = field(default_factory=list)

    @property
    def condition_holds(self):
        return self.condition < 1.0

    @property
    def bound_ok(self):
        return (not self.condition_holds) or self.gap <= self.eps_bar

    @property
    def passed(self):
        return self.bound_ok and self.gap >= -1e-9 and not self.sandwich_violations


def _block_diagonal(M, groups):
    out = np.zeros_like(M)
    for g in set(groups.tolist()):
        sel = np.flatnonzero(groups == g)
        out[np.ix_(sel, sel)] = M[np.ix_(sel, sel)]
    return out


def entropy_bound_check(rnd, eps, n_sandwich=64, rng=None, tol=1e-9):
    """Brute-force check of the decentralized planner's entropy guarantee.

    Computes the exhaustive optimum, the per-component plan, the constant
    ``xi`` (largest absolute entry of any component covariance inverse), the
    resulting bound, and validates the determinant sandwich
    ``log|S| <= log|S_hat| <= log|S| - log(1 - |Y| rho^2)`` on sampled joint
    walks, where ``S_hat`` keeps only within-component blocks.
    """
    rng = np.random.default_rng(rng)
    K, L = rnd.K, rnd.L
    graph = rnd.coordination_graph(eps)
    full = rnd.objective(range(K))
    _, h_star = full.best()
    plan, _ = rnd.plan(eps)
    h_hat = plan.entropy

    xi = 0.0
    for comp in graph.components:
        obj = rnd.objective(comp)
        for choice in obj.choices():
            M = obj.matrix(obj._key(choice))
            if M.size:
                xi = max(xi, float(np.max(np.abs(np.linalg.inv(M)))))
    cond = K**1.5 * L**2.5 * graph.kappa * xi * eps
    eps_bar = 0.5 * np.log(1.0 / (1.0 - cond**2)) if cond < 1.0 else np.inf

    comp_of = {k: n for n, comp in enumerate(graph.components) for k in comp}
    shared = False
    for a, b in itertools.combinations(range(K), 2):
        if comp_of[a] != comp_of[b] and np.intersect1d(rnd.reachable[a], rnd.reachable[b]).size:
            shared = True

    report = BoundReport(
        K, L, eps, graph.kappa, xi, cond, h_star - h_hat, eps_bar, h_star, h_hat, shared
    )

    choices = list(full.choices())
    picks = rng.choice(len(choices), size=min(n_sandwich, len(choices)), replace=False)
    for p in picks:
        key = full._key(choices[p])
        idx, own = full._matrix_parts(key)
        if idx.size == 0:
            continue
        S = full.matrix(key)
        groups = np.array([comp_of[full.sensors[o]] for o in own])
        S_hat = _block_diagonal(S, groups)
        rho = float(np.max(np.abs(np.linalg.eigvals(np.linalg.solve(S_hat, S - S_hat)))))
        q = idx.size * rho**2
        if q >= 1.0:
            continue
        ld = np.linalg.slogdet(S)[1]
        ld_hat = np.linalg.slogdet(S_hat)[1]
        report.sandwich_checked += 1
        if not (ld <= ld_hat + tol and ld_hat <= ld - np.log1p(-q) + tol):
            report.sandwich_violations.append((choices[p], ld, ld_hat, q))
    return report
