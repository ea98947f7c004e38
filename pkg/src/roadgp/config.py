"""Run configuration: JSON parsing, validation and model construction."""

import copy
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .generate import KINDS, generate_network
from .gp import GpModel
from .network import KernelHyper, RoadNetwork, mds_embed, shortest_path_distances
from .simulator import ALGORITHMS, load_phenomenon, sample_phenomenon


class ConfigError(ValueError):
    """One or more invalid configuration values; ``errors`` lists them all."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


def _default_network():
    return {"kind": "grid", "size": 15, "segments": 775, "seed": 0}


def _default_kernel():
    return {"signal_variance": 420.25, "length_scale": 8.0, "noise_variance": 1.0}


def _default_phenomenon():
    return {"seed": 0, "mean": 48.8, "std": 20.5}


@dataclass
class RunConfig:
    """Experiment settings.

    ``K``, ``L``, ``support_size`` and ``eps`` accept a single value or a list
    to sweep. Defaults describe the 775-segment grid experiment; set
    ``embedding_dim`` to null on networks with fewer segments to use the
    eigenvalue-mass rule. ``network`` is either ``{"path": ...}`` or generator parameters
    ``{"kind", "size", "seed", "segments"}``; ``phenomenon`` is either
    ``{"path": ...}`` or ``{"seed", "mean", "std"}`` (moments matched when
    given).
    """

    network: dict = field(default_factory=_default_network)
    kernel: dict = field(default_factory=_default_kernel)
    embedding_dim: int = 30
    phenomenon: dict = field(default_factory=_default_phenomenon)
    K: object = 4
    L: object = 2
    support_size: object = 64
    eps: object = 0.1
    budget: int = 960
    seeds: list = field(default_factory=lambda: [0])
    algorithms: list = field(default_factory=lambda: ["d2fas"])
    max_rounds: int = 10_000
    drop_probability: float = 0.0
    output: str = "metrics.csv"

    def sweep(self, name):
        v = getattr(self, name)
        return list(v) if isinstance(v, (list, tuple)) else [v]

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, data, base_dir=None):
        if not isinstance(data, dict):
            raise ConfigError(["configuration must be a JSON object"])
        data = copy.deepcopy(data)
        known = {f.name for f in fields(cls)}
        errors = [f"unknown key {k!r}" for k in sorted(set(data) - known)]
        cfg = cls(**{k: v for k, v in data.items() if k in known})
        if base_dir is not None:
            for section in (cfg.network, cfg.phenomenon):
                if isinstance(section, dict) and "path" in section:
                    p = Path(section["path"])
                    section["path"] = str(p if p.is_absolute() else Path(base_dir) / p)
        errors.extend(cfg.problems())
        if errors:
            raise ConfigError(errors)
        return cfg

    @classmethod
    def from_json(cls, text, base_dir=None):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"not valid JSON: {exc}"]) from None
        return cls.from_dict(data, base_dir)

    @classmethod
    def load(cls, path):
        path = Path(path)
        return cls.from_json(path.read_text(), base_dir=path.parent)

    def problems(self):
        """Every validation error, not just the first."""
        errs = []

        def ints(name, lo):
            vals = self.sweep(name)
            if not vals:
                errs.append(f"{name}: empty sweep")
            for v in vals:
                if isinstance(v, bool) or not isinstance(v, int) or v < lo:
                    errs.append(f"{name}: {v!r} is not an integer >= {lo}")

        ints("K", 1)
        ints("L", 1)
        ints("support_size", 1)
        eps = self.sweep("eps")
        if not eps:
            errs.append("eps: empty sweep")
        for v in eps:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
                errs.append(f"eps: {v!r} must be > 0")
        if isinstance(self.budget, bool) or not isinstance(self.budget, int) or self.budget < 0:
            errs.append(f"budget: {self.budget!r} must be an integer >= 0")
        if isinstance(self.max_rounds, bool) or not isinstance(self.max_rounds, int) or self.max_rounds < 1:
            errs.append(f"max_rounds: {self.max_rounds!r} must be an integer >= 1")
        if not isinstance(self.seeds, list) or not self.seeds:
            errs.append("seeds: must be a non-empty list of integers")
        else:
            errs.extend(f"seeds: {s!r} is not an integer" for s in self.seeds
                        if isinstance(s, bool) or not isinstance(s, int))
        if not isinstance(self.algorithms, list) or not self.algorithms:
            errs.append(f"algorithms: must be a non-empty list of {', '.join(ALGORITHMS)}")
        else:
            errs.extend(
                f"algorithms: unknown {a!r}; valid names are {', '.join(ALGORITHMS)}"
                for a in self.algorithms if a not in ALGORITHMS
            )
        if not isinstance(self.drop_probability, (int, float)) or not 0 <= self.drop_probability < 1:
            errs.append("drop_probability: must be in [0, 1)")
        if self.embedding_dim is not None and (
            isinstance(self.embedding_dim, bool) or not isinstance(self.embedding_dim, int)
            or self.embedding_dim < 1
        ):
            errs.append("embedding_dim: must be null or an integer >= 1")
        if not isinstance(self.output, str) or not self.output:
            errs.append("output: must be a file path")

        net = self.network
        if not isinstance(net, dict):
            errs.append("network: must be an object")
        elif "path" in net:
            if not Path(net["path"]).is_file():
                errs.append(f"network: file {net['path']!r} not found")
        else:
            if net.get("kind") not in KINDS:
                errs.append(f"network.kind: {net.get('kind')!r} not one of {', '.join(KINDS)}")
            size = net.get("size")
            if isinstance(size, bool) or not isinstance(size, int) or size < 1:
                errs.append(f"network.size: {size!r} must be an integer >= 1")

        ker = self.kernel
        if not isinstance(ker, dict):
            errs.append("kernel: must be an object")
        else:
            try:
                _hyper(ker)
            except (TypeError, ValueError) as exc:
                errs.append(f"kernel: {exc}")

        ph = self.phenomenon
        if not isinstance(ph, dict):
            errs.append("phenomenon: must be an object")
        elif "path" in ph:
            if not Path(ph["path"]).is_file():
                errs.append(f"phenomenon: file {ph['path']!r} not found")
        elif ph.get("std") is not None and not ph["std"] >= 0:
            errs.append("phenomenon.std: must be >= 0")
        return errs

    def validate(self):
        errs = self.problems()
        if errs:
            raise ConfigError(errs)
        return self


def _hyper(ker):
    return KernelHyper(
        float(ker.get("signal_variance", 1.0)),
        np.asarray(ker.get("length_scale", 1.0), dtype=float),
        float(ker.get("noise_variance", 0.0)),
    )


def build_network(cfg):
    net = cfg.network
    if "path" in net:
        return RoadNetwork.load(net["path"])
    return generate_network(net["kind"], net["size"], net.get("seed", 0), net.get("segments"))


def build_model(cfg, net):
    emb = mds_embed(shortest_path_distances(net), cfg.embedding_dim)
    ph = cfg.phenomenon
    mean = ph.get("mean") if "path" not in ph else None
    return GpModel(emb, _hyper(cfg.kernel), prior_mean=mean or 0.0)


def build_phenomenon(cfg, net, model):
    ph = cfg.phenomenon
    if "path" in ph:
        return load_phenomenon(ph["path"], net)
    return sample_phenomenon(model, ph.get("seed", 0), ph.get("mean"), ph.get("std"))
