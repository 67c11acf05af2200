"""Graph datasets: container, canonical JSON format, splits, perturbations.

One dataset is one UTF-8 JSON document:

    {"version": 1, "name": str, "num_classes": int, "multi_label": bool,
     "graphs": [{"num_nodes": int, "edges": [[u, v], ...],   # undirected, u < v
                 "features": [[...], ...],
                 "labels": [int, ...] or [[0/1, ...], ...],
                 "train_mask": [bool, ...], "val_mask": [...], "test_mask": [...]}, ...]}

Transductive datasets hold exactly one graph and use the node masks.
Inductive datasets add "graph_split": {"train": [idx...], "val": [...],
"test": [...]} partitioning the graph list; each graph's masks are then
all-true for its own role and all-false otherwise.

Loaded datasets are treated as immutable; the perturbation helpers
(attribute noise, edge removal) return new datasets. The synthetic
generators at the bottom produce small, clearly-labeled datasets for demos
and tests; they are not stand-ins for the published benchmarks.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Array
from .sparse import SparseAdjacency

ROLES = ("train", "val", "test")


@dataclass
class Graph:
    num_nodes: int
    edges: Array            # (E, 2) int64; u < v in files, (i, i) may appear after perturbation
    features: Array         # (N, D) float64
    labels: Array           # (N,) int64 single-label, (N, K) int8 multi-label
    train_mask: Array
    val_mask: Array
    test_mask: Array

    def mask(self, role: str) -> Array:
        return {"train": self.train_mask, "val": self.val_mask, "test": self.test_mask}[role]

    def adjacency(self) -> SparseAdjacency:
        return SparseAdjacency.from_edges(self.num_nodes, self.edges, symmetrize=True)

    def degrees(self) -> Array:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1 if u != v else 0
        return deg


@dataclass
class GraphDataset:
    name: str
    num_classes: int
    multi_label: bool
    graphs: list[Graph]
    graph_split: dict[str, list[int]] | None = None

    @property
    def transductive(self) -> bool:
        return self.graph_split is None

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].features.shape[1]

    def graphs_for(self, role: str) -> list[Graph]:
        """Graphs carrying the given role: the single graph when
        transductive, the split's graphs when inductive."""
        if self.transductive:
            return [self.graphs[0]]
        return [self.graphs[i] for i in self.graph_split[role]]


class DatasetError(ValueError):
    """Parse or invariant failure; the message names the offending field."""


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def atomic_write_text(path: str, text: str) -> None:
    """Write via a temp file in the same directory plus rename, so readers
    never observe a partial file."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dataset_to_dict(ds: GraphDataset) -> dict:
    out = {
        "version": 1,
        "name": ds.name,
        "num_classes": ds.num_classes,
        "multi_label": ds.multi_label,
        "graphs": [],
    }
    for g in ds.graphs:
        out["graphs"].append({
            "num_nodes": g.num_nodes,
            "edges": [[int(u), int(v)] for u, v in g.edges],
            "features": [[float(x) for x in row] for row in g.features],
            "labels": ([[int(x) for x in row] for row in g.labels]
                       if ds.multi_label else [int(x) for x in g.labels]),
            "train_mask": [bool(b) for b in g.train_mask],
            "val_mask": [bool(b) for b in g.val_mask],
            "test_mask": [bool(b) for b in g.test_mask],
        })
    if ds.graph_split is not None:
        out["graph_split"] = {r: [int(i) for i in ds.graph_split[r]] for r in ROLES}
    return out


def save_dataset(ds: GraphDataset, path: str) -> None:
    atomic_write_text(path, json.dumps(dataset_to_dict(ds)))


def dataset_hash(ds: GraphDataset) -> str:
    """Content hash of the canonical serialization (teacher-cache key)."""
    return hashlib.sha256(json.dumps(dataset_to_dict(ds)).encode("utf-8")).hexdigest()


def _require(cond: bool, msg: str):
    if not cond:
        raise DatasetError(msg)


def dataset_from_dict(doc: dict) -> GraphDataset:
    _require(isinstance(doc, dict), "top level must be a JSON object")
    _require(doc.get("version") == 1, f"unknown version {doc.get('version')!r}")
    name = doc.get("name")
    _require(isinstance(name, str) and name != "", "name must be a nonempty string")
    k = doc.get("num_classes")
    _require(isinstance(k, int) and k >= 2, "num_classes must be an int >= 2")
    multi = doc.get("multi_label")
    _require(isinstance(multi, bool), "multi_label must be a bool")
    raw_graphs = doc.get("graphs")
    _require(isinstance(raw_graphs, list) and raw_graphs, "graphs must be a nonempty list")

    graphs = []
    for gi, g in enumerate(raw_graphs):
        where = f"graphs[{gi}]"
        n = g.get("num_nodes")
        _require(isinstance(n, int) and n > 0, f"{where}.num_nodes must be a positive int")
        edges = np.asarray(g.get("edges", []), dtype=np.int64).reshape(-1, 2)
        for ei, (u, v) in enumerate(edges):
            _require(0 <= u < n and 0 <= v < n, f"{where}.edges[{ei}] endpoint out of range")
            _require(u < v, f"{where}.edges[{ei}] must satisfy u < v")
        feats = np.asarray(g.get("features"), dtype=np.float64)
        _require(feats.ndim == 2 and feats.shape[0] == n,
                 f"{where}.features must be {n} rows")
        _require(bool(np.all(np.isfinite(feats))), f"{where}.features contain non-finite values")
        labels_raw = g.get("labels")
        if multi:
            labels = np.asarray(labels_raw, dtype=np.int8)
            _require(labels.shape == (n, k), f"{where}.labels must be {n}x{k} for multi-label")
            _require(bool(np.all((labels == 0) | (labels == 1))),
                     f"{where}.labels entries must be 0/1")
        else:
            labels = np.asarray(labels_raw, dtype=np.int64)
            _require(labels.shape == (n,), f"{where}.labels must be {n} integers")
            _require(bool(np.all((labels >= 0) & (labels < k))),
                     f"{where}.labels value out of [0, {k})")
        masks = {}
        for role in ROLES:
            m = np.asarray(g.get(f"{role}_mask"), dtype=bool)
            _require(m.shape == (n,), f"{where}.{role}_mask must be {n} booleans")
            masks[role] = m
        overlap = (masks["train"].astype(int) + masks["val"] + masks["test"]) > 1
        _require(not bool(overlap.any()),
                 f"{where}: masks not disjoint (node {int(np.argmax(overlap))})")
        graphs.append(Graph(n, edges, feats, labels,
                            masks["train"], masks["val"], masks["test"]))

    split = doc.get("graph_split")
    if split is None:
        _require(len(graphs) == 1, "transductive dataset must hold exactly one graph")
    else:
        _require(isinstance(split, dict) and set(split) == set(ROLES),
                 "graph_split must map train/val/test to graph index lists")
        seen = sorted(i for r in ROLES for i in split[r])
        _require(seen == list(range(len(graphs))),
                 "graph_split must partition the graph list exactly once")
        for role in ROLES:
            for i in split[role]:
                g = graphs[i]
                own = g.mask(role)
                others = [g.mask(r) for r in ROLES if r != role]
                _require(bool(own.all()) and not any(o.any() for o in others),
                         f"graphs[{i}]: masks must mark every node as {role} only")
        split = {r: [int(i) for i in split[r]] for r in ROLES}
    return GraphDataset(name, k, multi, graphs, split)


def load_dataset(path: str) -> GraphDataset:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as e:
        raise DatasetError(f"cannot read dataset {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DatasetError(f"dataset {path} is not valid JSON: {e}") from e
    return dataset_from_dict(doc)


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def seeded_split(labels: Array, seed: int, per_class: int,
                 num_val: int, num_test: int) -> tuple[Array, Array, Array]:
    """Per-class training quota, then the next num_val / num_test nodes of a
    seeded permutation. Deterministic given seed; masks are disjoint."""
    labels = np.asarray(labels)
    n = len(labels)
    classes = np.unique(labels)
    counts = {int(c): int((labels == c).sum()) for c in classes}
    short = [c for c, cnt in counts.items() if cnt < per_class]
    if short:
        raise DatasetError(f"class {short[0]} has fewer than {per_class} nodes")
    need = per_class * len(classes) + num_val + num_test
    if n < need:
        raise DatasetError(f"need at least {need} nodes for this split, have {n}")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)])))
    order = rng.permutation(n)
    train = np.zeros(n, dtype=bool)
    taken = {int(c): 0 for c in classes}
    for i in order:
        c = int(labels[i])
        if taken[c] < per_class:
            taken[c] += 1
            train[i] = True
    rest = order[~train[order]]
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[rest[:num_val]] = True
    test[rest[num_val:num_val + num_test]] = True
    return train, val, test


def make_planetoid_split(labels: Array, seed: int) -> tuple[Array, Array, Array]:
    """20 training nodes per class, then 500 validation and 1000 test nodes."""
    return seeded_split(labels, seed, per_class=20, num_val=500, num_test=1000)


# ---------------------------------------------------------------------------
# perturbations
# ---------------------------------------------------------------------------

@dataclass
class PerturbationSpec:
    kind: str       # attribute_noise | edge_removal
    level: float    # noise std, or removal proportion in [0, 1)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("attribute_noise", "edge_removal"):
            raise DatasetError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "attribute_noise" and self.level < 0:
            raise DatasetError("attribute_noise level must be >= 0")
        if self.kind == "edge_removal" and not 0.0 <= self.level < 1.0:
            raise DatasetError("edge_removal proportion must be in [0, 1)")

    def apply(self, ds: GraphDataset) -> GraphDataset:
        if self.kind == "attribute_noise":
            return perturb_features_noise(ds, self.level, self.seed)
        return remove_edges(ds, self.level, self.seed)


def perturb_features_noise(ds: GraphDataset, level: float, seed: int) -> GraphDataset:
    """Add i.i.d. zero-mean Gaussian noise with std=level to every feature;
    topology, labels and masks are untouched."""
    if level < 0:
        raise DatasetError("noise level must be >= 0")
    if level == 0:
        return replace(ds, graphs=list(ds.graphs))
    out = []
    for gi, g in enumerate(ds.graphs):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0, gi])))
        noisy = g.features + rng.normal(0.0, level, size=g.features.shape)
        out.append(replace(g, features=noisy))
    return replace(ds, graphs=out)


def remove_edges(ds: GraphDataset, proportion: float, seed: int) -> GraphDataset:
    """Drop floor(proportion * E) undirected edges per graph, chosen by a
    Fisher-Yates prefix shuffle; any node isolated by the removal gets a
    self-loop so no zero-degree node survives."""
    if not 0.0 <= proportion < 1.0:
        raise DatasetError("removal proportion must be in [0, 1)")
    out = []
    for gi, g in enumerate(ds.graphs):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 1, gi])))
        e = len(g.edges)
        k = math.floor(proportion * e)
        idx = np.arange(e)
        for i in range(k):  # partial Fisher-Yates: first k slots become the removals
            j = i + int(rng.integers(e - i))
            idx[i], idx[j] = idx[j], idx[i]
        kept = np.sort(idx[k:])
        edges = g.edges[kept]
        deg = np.zeros(g.num_nodes, dtype=np.int64)
        for u, v in edges:
            deg[u] += 1
            deg[v] += 1 if u != v else 0
        isolated = np.nonzero(deg == 0)[0]
        if len(isolated):
            loops = np.stack([isolated, isolated], axis=1)
            edges = np.concatenate([edges, loops], axis=0)
        out.append(replace(g, edges=edges))
    return replace(ds, graphs=out)


# ---------------------------------------------------------------------------
# synthetic datasets (demo/test fixtures, not benchmark stand-ins)
# ---------------------------------------------------------------------------

def make_synthetic_citation(name: str = "synthetic-citation", num_nodes: int = 400,
                            num_classes: int = 4, feature_dim: int = 24, seed: int = 0,
                            intra_p: float = 0.04, inter_p: float = 0.004,
                            noise: float = 0.8, train_per_class: int = 10,
                            num_val: int = 80, num_test: int = 120) -> GraphDataset:
    """Single homophilous block-model graph with class-informative Gaussian
    features and a planetoid-style node split."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 100])))
    labels = rng.integers(0, num_classes, size=num_nodes)
    centroids = rng.normal(0.0, 1.0, size=(num_classes, feature_dim))
    features = centroids[labels] + noise * rng.normal(size=(num_nodes, feature_dim))
    same = labels[:, None] == labels[None, :]
    prob = np.where(same, intra_p, inter_p)
    draw = rng.random((num_nodes, num_nodes))
    upper = np.triu(draw < prob, k=1)
    u, v = np.nonzero(upper)
    edges = np.stack([u, v], axis=1)
    train, val, test = seeded_split(labels, seed, train_per_class, num_val, num_test)
    g = Graph(num_nodes, edges, features, labels.astype(np.int64), train, val, test)
    return GraphDataset(name, num_classes, False, [g], None)


def make_synthetic_multigraph(name: str = "synthetic-multigraph", num_graphs: int = 6,
                              nodes_per_graph: int = 60, num_labels: int = 5,
                              feature_dim: int = 12, seed: int = 0,
                              edge_p: float = 0.08,
                              split: tuple[int, int, int] = (4, 1, 1)) -> GraphDataset:
    """Inductive multi-label fixture: several random graphs whose labels are
    thresholded linear functions of a node's feature plus its neighborhood
    mean, so structure carries signal."""
    if sum(split) != num_graphs:
        raise DatasetError("split sizes must sum to num_graphs")
    root = np.random.SeedSequence([int(seed), 200])
    planes = np.random.Generator(np.random.Philox(root)).normal(
        size=(feature_dim, num_labels))
    graphs = []
    for gi in range(num_graphs):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 201, gi])))
        n = nodes_per_graph
        feats = rng.normal(size=(n, feature_dim))
        draw = rng.random((n, n))
        upper = np.triu(draw < edge_p, k=1)
        u, v = np.nonzero(upper)
        edges = np.stack([u, v], axis=1)
        adj = SparseAdjacency.from_edges(n, edges, symmetrize=True).normalized_rw()
        signal = feats + adj.spmm_dense(feats)
        labels = (signal @ planes > 0).astype(np.int8)
        graphs.append(Graph(n, edges, feats, labels,
                            np.zeros(n, dtype=bool), np.zeros(n, dtype=bool),
                            np.zeros(n, dtype=bool)))
    n_train, n_val, _ = split
    roles = {"train": list(range(n_train)),
             "val": list(range(n_train, n_train + n_val)),
             "test": list(range(n_train + n_val, num_graphs))}
    for role, idxs in roles.items():
        for i in idxs:
            g = graphs[i]
            mask = np.ones(g.num_nodes, dtype=bool)
            graphs[i] = replace(g, **{f"{role}_mask": mask})
    return GraphDataset(name, num_labels, True, graphs, roles)
