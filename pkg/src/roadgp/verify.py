"""Randomized property suites: fusion equivalence, walk-selection bound, kernel validity.

Each suite returns a ``SuiteReport`` with one record per trial; failures are
report content, not exceptions.
"""

import itertools
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _linalg as la
from . import fusion, sensing
from .generate import random_network
from .gp import GpModel, entropy, greedy_select, posterior_full
from .network import KernelHyper, mds_embed, shortest_path_distances

SUITES = ("equivalence", "bound", "kernel")


@dataclass
class SuiteReport:
    suite: str
    trials: int
    seed: int
    records: list = field(default_factory=list)

    @property
    def passed(self):
        return sum(1 for r in self.records if r["passed"])

    @property
    def failed(self):
        return len(self.records) - self.passed

    @property
    def ok(self):
        return self.failed == 0

    def to_dict(self):
        out = asdict(self)
        out.update(passed=self.passed, failed=self.failed, ok=self.ok)
        return out


def random_model(rng, n, signal=(0.5, 3.0), length=(0.5, 2.0), noise=(0.05, 0.5), seed=None):
    """Random strongly connected network of ``n`` segments with a GP model on it."""
    net = random_network(n, seed=int(rng.integers(2**31)) if seed is None else seed)
    emb = mds_embed(shortest_path_distances(net))
    hyper = KernelHyper(rng.uniform(*signal), rng.uniform(*length), rng.uniform(*noise))
    return net, GpModel(emb, hyper, prior_mean=float(rng.normal()))


@dataclass(frozen=True, eq=False)
class FusionInstance:
    model: GpModel
    U: np.ndarray
    partition: list
    z: np.ndarray
    Y: np.ndarray


def random_fusion_instance(rng, n_range=(10, 40), K_range=(1, 4), u_range=(2, 8)):
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    _, model = random_model(rng, n)
    K = int(rng.integers(K_range[0], K_range[1] + 1))
    u = int(rng.integers(u_range[0], u_range[1] + 1))
    U = rng.choice(n, size=u, replace=False)
    blocks = [rng.choice(n, size=int(rng.integers(0, min(n, 10) + 1)), replace=False) for _ in range(K)]
    D = np.concatenate(blocks)
    z = model.mean(D) + rng.normal(size=D.size) * 2.0
    Y = rng.choice(n, size=int(rng.integers(1, min(n, 12) + 1)), replace=False)
    return FusionInstance(model, U, blocks, z, Y)


def equivalence_suite(trials, seed, tol=1e-8):
    rng = np.random.default_rng(seed)
    rep = SuiteReport("equivalence", trials, seed)
    for t in range(trials):
        inst = random_fusion_instance(rng)
        r = fusion.check_equivalence(inst.model, inst.U, inst.partition, inst.z, inst.Y, tol)
        rep.records.append({
            "trial": t, "passed": bool(r.passed), "deviation": r.deviation,
            "jitter_used": r.jitter_used,
        })
    return rep


def random_sensing_round(rng, K_range=(2, 3), L_range=(1, 2), n_range=(14, 30), support=4):
    """Small planning round on a random network with out-degree at most 2."""
    n = int(rng.integers(n_range[0], n_range[1] + 1))
    net, model = random_model(rng, n, signal=(1.0, 1.0), length=(0.1, 0.6), noise=(0.1, 0.1))
    model = model.with_mean(0.0)
    K = int(rng.integers(K_range[0], K_range[1] + 1))
    L = int(rng.integers(L_range[0], L_range[1] + 1))
    sup = fusion.SupportSet.from_model(model, greedy_select(model, np.arange(n), support))
    origins = rng.choice(n, size=K, replace=False)
    extra = rng.choice(n, size=3, replace=False)
    observed = set(origins.tolist()) | set(extra.tolist())
    locs = [
        fusion.local_summary(model, sup, [s], [rng.normal()], sensor=k)
        for k, s in enumerate(origins.tolist())
    ]
    g = fusion.global_summary(sup, locs)
    return sensing.SensingRound(net, model, sup, g, origins, observed, L)


def separated_components(rnd, graph):
    """True when sensors in different components cannot reach a common segment."""
    comp = {k: i for i, c in enumerate(graph.components) for k in c}
    for a, b in itertools.combinations(range(rnd.K), 2):
        if comp[a] != comp[b] and np.intersect1d(rnd.reachable[a], rnd.reachable[b]).size:
            return False
    return True


def bound_instance(rng, eps_grid=10.0 ** -np.arange(1, 8), max_tries=200):
    """A planning round plus the largest ``eps`` on the grid for which the
    guarantee's precondition holds and components share no reachable segment."""
    for _ in range(max_tries):
        rnd = random_sensing_round(rng)
        for eps in eps_grid:
            rep = sensing.entropy_bound_check(rnd, eps, n_sandwich=0)
            if rep.condition_holds:
                if separated_components(rnd, rnd.coordination_graph(eps)):
                    return rnd, float(eps)
                break
    raise RuntimeError("no admissible instance found")


def bound_suite(trials, seed):
    rng = np.random.default_rng(seed)
    rep = SuiteReport("bound", trials, seed)
    for t in range(trials):
        rnd, eps = bound_instance(rng)
        r = sensing.entropy_bound_check(rnd, eps, rng=int(rng.integers(2**31)))
        rep.records.append({
            "trial": t, "passed": bool(r.passed), "gap": r.gap, "eps_bar": r.eps_bar,
            "condition": r.condition, "kappa": r.kappa, "K": r.K, "L": r.L, "eps": eps,
            "sandwich_checked": r.sandwich_checked,
            "sandwich_violations": len(r.sandwich_violations),
        })
    return rep


def kernel_suite(trials, seed, max_jitter=1e-8, subsets=5):
    """Random networks: Gram matrices of the full prior and of random subsets
    factorize with relative jitter at most ``max_jitter``."""
    rng = np.random.default_rng(seed)
    rep = SuiteReport("kernel", trials, seed)
    for t in range(trials):
        n = int(rng.integers(5, 41))
        # every fourth network is noise-free, the hardest case for factorization
        _, model = random_model(rng, n, noise=(0.0, 0.0) if t % 4 == 0 else (0.0, 0.5))
        worst = 0.0
        ok = True
        for idx in [np.arange(n)] + [
            rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False) for _ in range(subsets)
        ]:
            try:
                _, jitter = la.jittered_cholesky(model.gram(idx))
            except la.SingularCovarianceError:
                ok, jitter = False, np.inf
            worst = max(worst, jitter)
        rep.records.append({"trial": t, "passed": ok and worst <= max_jitter, "max_jitter": worst})
    return rep


def run_suite(name, trials, seed):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    suites = {"equivalence": equivalence_suite, "bound": bound_suite, "kernel": kernel_suite}
    if name not in suites:
        raise ValueError(f"unknown suite {name!r}; valid: {', '.join(SUITES)}")
    return suites[name](trials, seed)


def chain_rule_check(model, net, origins, observed, L, tol=1e-9):
    """Exhaustive check that, among joint walks with equal ``|Y_w|``, maximizing
    ``H[Z_Y | Z_D]`` is the same as minimizing ``H[Z_rest | Z_D, Z_Y]``.

    Returns ``(ok, n_groups)``.
    """
    observed = sorted(set(int(s) for s in observed))
    D = np.array(observed, dtype=int)
    n = len(net)
    walks = {k: sensing.enumerate_walks(net, s, L, observed)[0] for k, s in enumerate(origins)}
    org = dict(enumerate(int(s) for s in origins))
    groups = {}
    for choice in itertools.product(*(walks[k] for k in sorted(walks))):
        joint = dict(enumerate(choice))
        Y = sorted({s for ws in sensing.joint_unobserved(org, joint, observed).values() for s in ws})
        rest = np.array(sorted(set(range(n)) - set(observed) - set(Y)), dtype=int)
        z = np.zeros(D.size)
        h_y = entropy(posterior_full(model, D, z, Y)) if Y else 0.0
        cond = np.concatenate([D, np.array(Y, dtype=int)])
        h_rest = entropy(posterior_full(model, cond, np.zeros(cond.size), rest)) if rest.size else 0.0
        groups.setdefault(len(Y), []).append((h_y, h_rest))
    ok = True
    for vals in groups.values():
        h_y = np.array([v[0] for v in vals])
        h_rest = np.array([v[1] for v in vals])
        best = h_y >= h_y.max() - tol
        ok &= bool(np.all(h_rest[best] <= h_rest.min() + tol))
    return ok, len(groups)
