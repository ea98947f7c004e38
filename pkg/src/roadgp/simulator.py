"""Lockstep multi-sensor simulation over a synthetic traffic phenomenon.

Each round every algorithm first fuses the data gathered so far and predicts
the whole network (one metrics row), then plans and executes the next walks.
Supported algorithms:

``d2fas``
    Local summaries on a shared support set, global summary, coordination
    graph over whitened support covariances, per-component walk search.
``full-gp-centralized``
    Raw data to everyone, exact GP prediction, exhaustive joint-walk search.
``sod-centralized``
    As above but conditioning only on a greedily selected data subset.

A fully decentralized planner is ``d2fas`` with a large ``eps``.
"""

import csv
import struct
import time
from collections import deque
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _linalg as la
from . import fusion, sensing
from .gp import greedy_select, posterior_full, posterior_sod

ALGORITHMS = ("d2fas", "full-gp-centralized", "sod-centralized")

_STATS = struct.Struct("<Id")
_OBS = np.dtype([("segment", "<i4"), ("value", "<f8")])


# -- phenomenon ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Phenomenon:
    """Ground-truth value of every segment."""

    values: np.ndarray
    seed: int = None
    source: str = "gp"

    def __len__(self):
        return self.values.size


def sample_phenomenon(model, seed, mean=None, std=None):
    """Draw the noise-free field from the GP prior.

    If ``mean`` or ``std`` is given the draw is affinely rescaled so its
    empirical moments match exactly.
    """
    n = model.n_segments
    idx = np.arange(n)
    L, _ = la.jittered_cholesky(model.kernel_matrix(idx, idx))
    rng = np.random.default_rng(seed)
    z = model.mean(idx) + L @ rng.standard_normal(n)
    if std is not None:
        sd = z.std()
        z = z.mean() + (z - z.mean()) * (std / sd if sd > 0 else 0.0)
    if mean is not None:
        z = z - z.mean() + mean
    return Phenomenon(z, seed, "gp")


def load_phenomenon(path, net):
    """Read ``id,value`` records (``#`` comments allowed) covering every segment."""
    values = np.full(len(net), np.nan)
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != 2:
                raise ValueError(f"expected 'id,value', got {row!r}")
            sid = row[0].strip()
            key = int(sid) if sid.lstrip("-").isdigit() else sid
            if key not in net.index:
                raise KeyError(f"unknown segment {sid!r} in phenomenon file")
            values[net.index[key]] = float(row[1])
    missing = np.flatnonzero(np.isnan(values))
    if missing.size:
        raise ValueError(f"phenomenon file misses {missing.size} segments")
    return Phenomenon(values, None, str(path))


def save_phenomenon(phenomenon, net, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for sid, v in zip(net.ids, phenomenon.values):
            w.writerow([sid, "%.17g" % v])


def observe(phenomenon, segments, noise_variance, rng):
    """Noisy measurements: truth plus independent N(0, noise_variance) draws."""
    segments = np.asarray(segments, dtype=int)
    noise = rng.standard_normal(segments.size) * np.sqrt(noise_variance)
    return phenomenon.values[segments] + noise


def rmse(predicted, truth):
    predicted = np.asarray(predicted, dtype=float)
    truth = np.asarray(truth, dtype=float)
    return float(np.sqrt(np.mean((truth - predicted) ** 2)))


# -- agents and messaging ------------------------------------------------------


@dataclass
class SensorState:
    """A sensor's own measurements (latest value per segment) and position."""

    id: int
    position: int
    observations: dict = field(default_factory=dict)

    @property
    def D(self):
        return np.fromiter(self.observations, dtype=int, count=len(self.observations))

    @property
    def z(self):
        return np.fromiter(self.observations.values(), dtype=float, count=len(self.observations))

    def record(self, segments, values):
        for s, v in zip(np.asarray(segments).tolist(), np.asarray(values).tolist()):
            self.observations.pop(s, None)
            self.observations[s] = v

    def __len__(self):
        return len(self.observations)


@dataclass(frozen=True)
class Message:
    sender: int
    kind: str
    payload: bytes


class Bus:
    """All-to-all broadcast channel that counts payload bytes.

    With ``drop_probability > 0`` each delivery to each recipient is lost
    independently.
    """

    def __init__(self, n_agents, drop_probability=0.0, rng=None):
        if not 0.0 <= drop_probability < 1.0:
            raise ValueError("drop_probability must be in [0, 1)")
        self.n_agents = n_agents
        self.drop_probability = drop_probability
        self.rng = np.random.default_rng(rng)
        self.bytes_sent = 0
        self.messages_sent = 0
        self._inbox = [[] for _ in range(n_agents)]

    def broadcast(self, sender, kind, payload):
        msg = Message(sender, kind, bytes(payload))
        self.bytes_sent += len(msg.payload)
        self.messages_sent += 1
        for k in range(self.n_agents):
            if k == sender:
                continue
            if self.drop_probability and self.rng.random() < self.drop_probability:
                continue
            self._inbox[k].append(msg)
        return msg

    def collect(self, agent, kind):
        """Pop the agent's pending messages of one kind."""
        box = self._inbox[agent]
        got = [m for m in box if m.kind == kind]
        self._inbox[agent] = [m for m in box if m.kind != kind]
        return got


def broadcast(bus, message):
    """Deliver a ``Message`` to every other agent on ``bus``."""
    return bus.broadcast(message.sender, message.kind, message.payload)


# -- metrics ------------------------------------------------------------------


@dataclass
class RoundMetrics:
    round: int
    algorithm: str
    K: int
    L: int
    U: int
    eps: float
    seed: int
    n_observed: int
    rmse: float
    fusion_seconds: float
    sensing_seconds: float
    bytes_broadcast: int
    kappa: int

    def as_row(self):
        return [
            "%.17g" % v if isinstance(v, float) else v for v in asdict(self).values()
        ]


CSV_COLUMNS = tuple(f.name for f in fields(RoundMetrics))
TIMING_COLUMNS = ("fusion_seconds", "sensing_seconds")


def write_metrics(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow(r.as_row())


def read_metrics(fh):
    out = []
    for rec in csv.DictReader(fh):
        out.append(RoundMetrics(**{f.name: f.type(rec[f.name]) for f in fields(RoundMetrics)}))
    return out


# -- world --------------------------------------------------------------------


def _bfs_path(net, start, blocked):
    """Shortest edge path from ``start`` to the nearest segment outside ``blocked``."""
    prev = {start: None}
    queue = deque([start])
    while queue:
        v = queue.popleft()
        if v != start and v not in blocked:
            path = []
            while v != start:
                path.append(v)
                v = prev[v]
            return path[::-1]
        for w in net.successors(v):
            if w not in prev:
                prev[w] = v
                queue.append(w)
    return []


class World:
    """Network, phenomenon and sensors for one algorithm run.

    Parameters
    ----------
    net : RoadNetwork
    model : GpModel
        Prior model; the simulation replaces its mean each round with the
        empirical mean of all measurements.
    phenomenon : Phenomenon
    algorithm : str
    K, L, support_size : int
    eps : float
        Coordination threshold (``d2fas`` only).
    seed : int
        Drives sensor placement and observation noise.
    support : array-like of int, optional
        Precomputed support set; chosen greedily over all segments otherwise.
    """

    def __init__(self, net, model, phenomenon, algorithm, K, L, support_size, eps, seed,
                 support=None, drop_probability=0.0):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}; valid: {', '.join(ALGORITHMS)}")
        if K > len(net):
            raise ValueError(f"{K} sensors do not fit on {len(net)} segments")
        self.net, self.prior, self.phenomenon = net, model, phenomenon
        self.algorithm, self.K, self.L = algorithm, K, L
        self.support_size, self.eps, self.seed = support_size, eps, seed
        self.rng = np.random.default_rng(seed)
        self.bus = Bus(K, drop_probability, self.rng)
        starts = self.rng.choice(len(net), size=K, replace=False)
        self.sensors = [SensorState(k, int(s)) for k, s in enumerate(starts)]
        for st in self.sensors:
            st.record([st.position], observe(phenomenon, [st.position], model.noise_variance, self.rng))
        self.support = None
        if algorithm == "d2fas":
            if support is None:
                support = greedy_select(model, np.arange(len(net)), min(support_size, len(net)))
            self.support = fusion.SupportSet.from_model(model, support)
        self.round_index = 0
        self.fallbacks = 0
        self.last_plan = None

    # state
    def observed(self):
        return set().union(*(st.observations.keys() for st in self.sensors))

    @property
    def n_observed(self):
        return len(self.observed())

    @property
    def positions(self):
        return [st.position for st in self.sensors]

    def _all_data(self):
        D = np.concatenate([st.D for st in self.sensors])
        z = np.concatenate([st.z for st in self.sensors])
        return D, z

    def _latest_values(self):
        latest = {}
        for st in self.sensors:
            latest.update(st.observations)
        return latest

    # fusion
    def _round_model(self):
        stats = []
        for st in self.sensors:
            z = st.z
            self.bus.broadcast(st.id, "stats", _STATS.pack(z.size, float(z.sum())))
            stats.append((z.size, float(z.sum())))
        n = sum(c for c, _ in stats)
        return self.prior.with_mean(sum(s for _, s in stats) / n if n else 0.0)

    def fuse(self):
        """Fuse current data; returns (model, predicted means over V, seconds, extra)."""
        model = self._round_model()
        V = np.arange(len(self.net))
        if self.algorithm == "d2fas":
            times, summaries = [], []
            for st in self.sensors:
                t0 = time.perf_counter()
                s = fusion.local_summary(model, self.support, st.D, st.z, sensor=st.id)
                times.append(time.perf_counter() - t0)
                summaries.append(s)
                self.bus.broadcast(st.id, "summary", s.to_bytes())
            # the shared view: sensor 0's own summary plus what it received
            received = [
                fusion.LocalSummary.from_bytes(m.payload, self.support.key())
                for m in self.bus.collect(0, "summary")
            ]
            for k in range(1, self.K):
                self.bus.collect(k, "summary")
            t0 = time.perf_counter()
            g = fusion.global_summary(self.support, [summaries[0]] + received)
            pred = fusion.predict_decentralized(model, self.support, g, V, full_cov=False)
            seconds = max(times) + time.perf_counter() - t0
            return model, pred.mean, seconds, g
        for st in self.sensors:
            rec = np.empty(len(st), dtype=_OBS)
            rec["segment"], rec["value"] = st.D, st.z
            self.bus.broadcast(st.id, "data", rec.tobytes())
        for k in range(self.K):
            self.bus.collect(k, "data")
        t0 = time.perf_counter()
        if self.algorithm == "full-gp-centralized":
            D, z = self._all_data()
            pred = posterior_full(model, D, z, V, full_cov=False, allow_overlap=True)
            extra = (D, z)
        else:
            latest = self._latest_values()
            cand = np.fromiter(latest, dtype=int, count=len(latest))
            sel = np.array(greedy_select(model, cand, min(self.support_size, cand.size)), dtype=int)
            zs = np.array([latest[s] for s in sel.tolist()])
            pred = posterior_sod(model, sel, zs, V, full_cov=False, allow_overlap=True)
            extra = (sel, zs)
        return model, pred.mean, time.perf_counter() - t0, extra

    # sensing
    def plan(self, model, fused):
        """Choose the next joint walk; returns (walks dict, seconds, kappa)."""
        observed = self.observed()
        if self.algorithm == "d2fas":
            t0 = time.perf_counter()
            rnd = sensing.SensingRound(self.net, model, self.support, fused, self.positions, observed, self.L)
            setup = time.perf_counter() - t0
            for k, phi in enumerate(rnd.phis):
                self.bus.broadcast(k, "phi", phi.to_bytes())
            t0 = time.perf_counter()
            graph = rnd.coordination_graph(self.eps)
            for k in range(self.K):
                self.bus.broadcast(k, "adjacency", sensing.adjacency_to_bytes(graph.adjacency[k]))
            graph_time = time.perf_counter() - t0
            chosen, comp_time = {}, []
            for comp in graph.components:
                t0 = time.perf_counter()
                best, _ = rnd.component_best(comp)
                comp_time.append(time.perf_counter() - t0)
                chosen.update(best)
            for k in range(self.K):
                for kind in ("phi", "adjacency"):
                    self.bus.collect(k, kind)
            # per-sensor share of setup, plus the slowest component
            seconds = setup / self.K + graph_time + max(comp_time)
            return chosen, seconds, graph.kappa

        t0 = time.perf_counter()
        D, z = fused
        origins = {k: p for k, p in enumerate(self.positions)}
        walks, reach = {}, {}
        for k, s in origins.items():
            walks[k], reach[k] = sensing.enumerate_walks(self.net, s, self.L, observed)

        def cov(segs):
            return posterior_full(model, D, z, segs).cov

        obj = sensing.dense_walk_objective(cov, origins, walks, reach, observed, range(self.K))
        chosen, _ = obj.best()
        payload = np.array([chosen[k] for k in range(self.K)], dtype="<i4").tobytes()
        self.bus.broadcast(0, "plan", payload)
        for k in range(self.K):
            self.bus.collect(k, "plan")
        return chosen, time.perf_counter() - t0, self.K

    def execute(self, walks):
        """Walk, observe owned unobserved segments, fall back to the nearest
        unobserved segment when a sensor would learn nothing."""
        observed = self.observed()
        origins = {k: p for k, p in enumerate(self.positions)}
        owned = sensing.joint_unobserved(origins, walks, observed)
        claimed = observed.union(*owned.values())
        for st in self.sensors:
            mine = list(owned[st.id])
            end = walks[st.id][-1]
            if not mine:
                path = _bfs_path(self.net, st.position, claimed)[: self.L]
                if path:
                    self.fallbacks += 1
                    mine = [s for s in dict.fromkeys(path) if s not in claimed]
                    claimed.update(mine)
                    end = path[-1]
            if mine:
                st.record(mine, observe(self.phenomenon, mine, self.prior.noise_variance, self.rng))
            st.position = end
        self.last_plan = owned

    def step(self, move=True):
        """One round: fuse and score, then (optionally) plan and move."""
        start = self.bus.bytes_sent
        model, pred, fusion_s, fused = self.fuse()
        row = RoundMetrics(
            self.round_index, self.algorithm, self.K, self.L, self.support_size, float(self.eps),
            self.seed, self.n_observed, rmse(pred, self.phenomenon.values), fusion_s, 0.0, 0, 0,
        )
        if move:
            walks, sensing_s, kappa = self.plan(model, fused)
            self.execute(walks)
            row.sensing_seconds, row.kappa = sensing_s, kappa
        row.bytes_broadcast = self.bus.bytes_sent - start
        self.round_index += 1
        return row


def run_round(world, move=True):
    return world.step(move)


def simulate(world, budget, max_rounds=10_000):
    """Rounds until |D| reaches ``budget``, the network saturates, or ``max_rounds``."""
    rows = []
    if budget <= 0:
        return rows
    n = len(world.net)
    while len(rows) < max_rounds:
        done = world.n_observed >= budget or world.n_observed >= n or len(rows) + 1 >= max_rounds
        rows.append(world.step(move=not done))
        if done:
            break
    return rows


def run_experiment(config):
    """All (algorithm, K, L, |U|, eps, seed) combinations of a run config."""
    from .config import build_model, build_network, build_phenomenon

    net = build_network(config)
    model = build_model(config, net)
    phenomenon = build_phenomenon(config, net, model)
    rows = []
    supports = {}
    for alg in config.algorithms:
        for K in config.sweep("K"):
            for L in config.sweep("L"):
                for u in config.sweep("support_size"):
                    eps_values = config.sweep("eps") if alg == "d2fas" else [config.sweep("eps")[0]]
                    for eps in eps_values:
                        if alg == "d2fas" and u not in supports:
                            supports[u] = greedy_select(model, np.arange(len(net)), min(u, len(net)))
                        for seed in config.seeds:
                            world = World(net, model, phenomenon, alg, K, L, u, eps, seed,
                                          support=supports.get(u), drop_probability=config.drop_probability)
                            rows.extend(simulate(world, config.budget, config.max_rounds))
    return rows
