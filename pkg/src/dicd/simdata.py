"""Multi-environment data from linear and MLP structural equation models.

Environments are simulated by attaching extra source nodes to a base DAG and
changing only the noise scale of those source nodes between environments; the
extra columns are dropped before the data is returned.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graphs import gen_er_dag, gen_sf_dag, is_acyclic, topological_order

SCHEMA_VERSION = 1


class DatasetLoadError(RuntimeError):
    pass


@dataclass
class AugmentedGraph:
    base: np.ndarray
    env_edges: list  # (env node index in full graph, observed node)
    full: np.ndarray
    wiring: str = "one_to_one"

    @property
    def d(self) -> int:
        return self.base.shape[0]

    @property
    def env_nodes(self) -> int:
        return self.full.shape[0] - self.base.shape[0]


@dataclass
class EnvSpec:
    noise_scales: list
    n_per_env: list
    base_noise_scale: float = 1.0

    def __post_init__(self):
        self.noise_scales = [float(s) for s in self.noise_scales]
        if isinstance(self.n_per_env, int):
            self.n_per_env = [self.n_per_env] * len(self.noise_scales)
        self.n_per_env = [int(n) for n in self.n_per_env]
        if not self.noise_scales:
            raise ValueError("need at least one environment")
        if len(self.n_per_env) != len(self.noise_scales):
            raise ValueError(
                f"{len(self.noise_scales)} noise scales but {len(self.n_per_env)} sample sizes"
            )
        if any(s <= 0 for s in self.noise_scales) or self.base_noise_scale <= 0:
            raise ValueError("noise scales must be positive")
        if any(n <= 0 for n in self.n_per_env):
            raise ValueError("sample sizes must be positive")

    @property
    def env_count(self) -> int:
        return len(self.noise_scales)


@dataclass
class MultiEnvDataset:
    envs: list
    true_adjacency: np.ndarray
    spec: EnvSpec
    mechanism: str
    seed: int | None = None
    true_weights: np.ndarray | None = None
    graph_type: str | None = None
    env_wiring: str = "one_to_one"
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.true_adjacency.shape[0]


def attach_env_nodes(
    base: np.ndarray, fraction: float, rng: np.random.Generator, wiring: str = "one_to_one"
) -> AugmentedGraph:
    """Add ``floor(fraction * d)`` parentless environment nodes.

    ``one_to_one`` pairs environment node ``i`` with the ``i``-th selected node;
    ``complete`` wires every environment node to every selected node.
    """
    base = np.asarray(base, dtype=int)
    d = base.shape[0]
    m = math.floor(fraction * d)
    if not 0 < fraction <= 1 or m < 1:
        raise ValueError(f"fraction {fraction} gives {m} environment nodes for d={d}")
    if wiring not in ("one_to_one", "complete"):
        raise ValueError(f"unknown env wiring {wiring!r}")
    selected = rng.choice(d, size=m, replace=False)
    full = np.zeros((d + m, d + m), dtype=int)
    full[:d, :d] = base
    if wiring == "one_to_one":
        edges = [(d + i, int(s)) for i, s in enumerate(selected)]
    else:
        edges = [(d + i, int(s)) for i in range(m) for s in selected]
    for e, s in edges:
        full[e, s] = 1
    return AugmentedGraph(base=base.copy(), env_edges=edges, full=full, wiring=wiring)


def random_weights(adj: np.ndarray, low: float, high: float, rng: np.random.Generator) -> np.ndarray:
    if not 0 < low < high:
        raise ValueError(f"need 0 < low < high, got {low}, {high}")
    mag = rng.uniform(low, high, size=adj.shape)
    sign = rng.choice([-1.0, 1.0], size=adj.shape)
    return (adj != 0) * mag * sign


def _noise_std(aug: AugmentedGraph, spec: EnvSpec, e: int) -> np.ndarray:
    std = np.full(aug.full.shape[0], spec.base_noise_scale)
    std[aug.d:] = spec.noise_scales[e]
    return std


def simulate_linear(
    aug: AugmentedGraph,
    spec: EnvSpec,
    rng: np.random.Generator,
    weight_low: float = 0.5,
    weight_high: float = 2.0,
    weights: np.ndarray | None = None,
) -> MultiEnvDataset:
    """Linear Gaussian SEM shared across environments.

    Environment nodes get noise std ``spec.noise_scales[e]``; all other nodes
    get ``spec.base_noise_scale``.
    """
    if not is_acyclic(aug.full):
        raise ValueError("augmented graph is not acyclic")
    w = random_weights(aug.full, weight_low, weight_high, rng) if weights is None else weights
    order = topological_order(aug.full)
    envs = []
    for e in range(spec.env_count):
        n = spec.n_per_env[e]
        z = rng.normal(size=(n, aug.full.shape[0])) * _noise_std(aug, spec, e)
        x = np.zeros_like(z)
        for j in order:
            x[:, j] = x @ w[:, j] + z[:, j]
        envs.append(x[:, : aug.d].copy())
    return MultiEnvDataset(
        envs=envs,
        true_adjacency=aug.base.copy(),
        spec=spec,
        mechanism="linear",
        true_weights=w[: aug.d, : aug.d].copy(),
        env_wiring=aug.wiring,
        extra={"full_weights": w.tolist(), "env_edges": [list(p) for p in aug.env_edges]},
    )


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def simulate_mlp(
    aug: AugmentedGraph,
    spec: EnvSpec,
    rng: np.random.Generator,
    hidden: int = 100,
    weight_low: float = 0.5,
    weight_high: float = 2.0,
) -> MultiEnvDataset:
    """Additive-noise SEM with a random one-hidden-layer sigmoid MLP per node."""
    if hidden < 1:
        raise ValueError("hidden must be at least 1")
    if not is_acyclic(aug.full):
        raise ValueError("augmented graph is not acyclic")
    full = aug.full
    order = topological_order(full)
    mechanisms = {}
    for j in order:
        parents = np.flatnonzero(full[:, j])
        if parents.size == 0:
            continue
        w1 = random_weights(np.ones((parents.size, hidden)), weight_low, weight_high, rng)
        w2 = random_weights(np.ones(hidden), weight_low, weight_high, rng)
        mechanisms[j] = (parents, w1, w2)
    envs = []
    for e in range(spec.env_count):
        n = spec.n_per_env[e]
        z = rng.normal(size=(n, full.shape[0])) * _noise_std(aug, spec, e)
        x = np.zeros_like(z)
        for j in order:
            x[:, j] = z[:, j]
            if j in mechanisms:
                parents, w1, w2 = mechanisms[j]
                x[:, j] += _sigmoid(x[:, parents] @ w1) @ w2
        envs.append(x[:, : aug.d].copy())
    return MultiEnvDataset(
        envs=envs,
        true_adjacency=aug.base.copy(),
        spec=spec,
        mechanism="mlp",
        env_wiring=aug.wiring,
        extra={
            "hidden": hidden,
            "env_edges": [list(p) for p in aug.env_edges],
            "mlp": {
                str(j): {"parents": p.tolist(), "w1": w1.tolist(), "w2": w2.tolist()}
                for j, (p, w1, w2) in mechanisms.items()
            },
        },
    )


def generate(
    graph_type: str,
    d: int,
    degree: int,
    noise_scales,
    n_per_env,
    mechanism: str,
    seed: int,
    fraction: float | None = None,
    env_wiring: str = "one_to_one",
    base_noise_scale: float = 1.0,
    hidden: int = 100,
) -> MultiEnvDataset:
    """Full protocol: random DAG, environment nodes, then data.

    The ERk/SFk convention gives ``k * d`` edges for ER and attachment degree
    ``k`` for SF. ``fraction`` defaults to 0.3 (linear) or 0.5 (mlp).
    """
    rng = np.random.default_rng(seed)
    if graph_type == "er":
        base = gen_er_dag(d, degree * d, rng)
    elif graph_type == "sf":
        base = gen_sf_dag(d, degree, rng)
    else:
        raise ValueError(f"unknown graph type {graph_type!r}")
    if fraction is None:
        fraction = 0.3 if mechanism == "linear" else 0.5
    aug = attach_env_nodes(base, fraction, rng, wiring=env_wiring)
    spec = EnvSpec(noise_scales=list(noise_scales), n_per_env=n_per_env, base_noise_scale=base_noise_scale)
    if mechanism == "linear":
        ds = simulate_linear(aug, spec, rng)
    elif mechanism == "mlp":
        ds = simulate_mlp(aug, spec, rng, hidden=hidden)
    else:
        raise ValueError(f"unknown mechanism {mechanism!r}")
    ds.seed = seed
    ds.graph_type = graph_type
    return ds


def save_dataset(ds: MultiEnvDataset, directory) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    meta = {
        "schema_version": SCHEMA_VERSION,
        "d": ds.d,
        "env_count": ds.spec.env_count,
        "n_per_env": ds.spec.n_per_env,
        "seed": ds.seed,
        "noise_scales": ds.spec.noise_scales,
        "base_noise_scale": ds.spec.base_noise_scale,
        "env_wiring": ds.env_wiring,
        "graph_type": ds.graph_type,
        "true_adjacency": np.asarray(ds.true_adjacency, dtype=int).tolist(),
        "true_weights": None if ds.true_weights is None else ds.true_weights.tolist(),
        "mechanism": ds.mechanism,
        "extra": ds.extra,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1))
    header = [f"X{j + 1}" for j in range(ds.d)]
    for k, x in enumerate(ds.envs):
        with open(out / f"env_{k}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            # repr gives the shortest string that parses back to the same double
            writer.writerows([repr(float(v)) for v in row] for row in x)
    return out


def load_dataset(directory) -> MultiEnvDataset:
    src = Path(directory)
    meta_path = src / "meta.json"
    if not meta_path.is_file():
        raise DatasetLoadError(f"missing {meta_path}")
    meta = json.loads(meta_path.read_text())
    if meta.get("schema_version") != SCHEMA_VERSION:
        raise DatasetLoadError(
            f"schema version {meta.get('schema_version')} != supported {SCHEMA_VERSION}"
        )
    d = meta["d"]
    envs = []
    for k in range(meta["env_count"]):
        path = src / f"env_{k}.csv"
        if not path.is_file():
            raise DatasetLoadError(f"missing environment file {path.name}")
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or len(rows[0]) != d:
            raise DatasetLoadError(f"{path.name}: expected {d} columns")
        x = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, d)
        if not np.all(np.isfinite(x)):
            raise DatasetLoadError(f"{path.name}: non-finite values")
        envs.append(x)
    spec = EnvSpec(
        noise_scales=meta["noise_scales"],
        n_per_env=meta["n_per_env"],
        base_noise_scale=meta.get("base_noise_scale", 1.0),
    )
    tw = meta.get("true_weights")
    return MultiEnvDataset(
        envs=envs,
        true_adjacency=np.array(meta["true_adjacency"], dtype=int),
        spec=spec,
        mechanism=meta["mechanism"],
        seed=meta.get("seed"),
        true_weights=None if tw is None else np.array(tw, dtype=float),
        graph_type=meta.get("graph_type"),
        env_wiring=meta.get("env_wiring", "one_to_one"),
        extra=meta.get("extra", {}),
    )
