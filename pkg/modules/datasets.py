# modules/datasets.py
"""
Dataset files, synthetic generators and converters.

Formats (plain text, 0-based ids, '#' starts a comment line):
  graph.edges   "src<TAB>dst"
  features.txt  header "N d", then N rows of d decimals
  labels.tsv    "node<TAB>label"
  splits.tsv    "node<TAB>train|val|test"
  proximity     "src<TAB>dst<TAB>weight"
"""

import logging
import os
import re
from dataclasses import dataclass
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from config import settings
from modules import graph_core
from modules.errors import DatasetFormatError, GraphError
from modules.graph_core import DiGraph

logger = logging.getLogger("CgnnApp")

DATASET_FILES = {
    "graph": "graph.edges",
    "features": "features.txt",
    "labels": "labels.tsv",
    "splits": "splits.tsv",
}
SPLIT_NAMES = ("train", "val", "test")
SYNTHETIC_KINDS = ("directed_cycle", "two_block", "random_digraph")


# ----- TYPES -----
@dataclass(frozen=True)
class SplitAssignment:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        seen: Dict[int, str] = {}
        for name in SPLIT_NAMES:
            for v in getattr(self, name):
                v = int(v)
                if v in seen:
                    raise GraphError(f"node {v} appears in both '{seen[v]}' and '{name}' splits")
                seen[v] = name

    def check_range(self, n: int):
        for name in SPLIT_NAMES:
            arr = getattr(self, name)
            if arr.size and (arr.min() < 0 or arr.max() >= n):
                raise GraphError(f"'{name}' split has a node outside [0, {n})")


@dataclass(frozen=True)
class Dataset:
    graph: DiGraph
    features: np.ndarray
    labels: np.ndarray
    splits: SplitAssignment

    def __post_init__(self):
        n = self.graph.num_nodes
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphError(f"features have shape {self.features.shape}, graph has {n} nodes")
        if self.labels.shape != (n,):
            raise GraphError(f"labels cover {self.labels.shape[0]} nodes, graph has {n}")
        self.splits.check_range(n)

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1


# ----- READERS -----
def _data_lines(path: str) -> Iterator[Tuple[int, str]]:
    """(line number, stripped text) for every non-blank, non-comment line."""
    with open(path, "r", encoding="utf-8") as f:
        for no, raw in enumerate(f, start=1):
            line = raw.strip()
            if line and not line.startswith("#"):
                yield no, line


def _ints(parts: List[str], path: str, no: int) -> List[int]:
    try:
        return [int(p) for p in parts]
    except ValueError as e:
        raise DatasetFormatError(f"expected integers, got {parts}", path, no) from e


def read_features(path: str) -> np.ndarray:
    lines = list(_data_lines(path))
    if not lines:
        raise DatasetFormatError("empty feature file", path)
    no, header = lines[0]
    head = header.split()
    if len(head) != 2:
        raise DatasetFormatError("header must be 'N d'", path, no)
    n, d = _ints(head, path, no)
    if n < 1 or d < 1:
        raise DatasetFormatError(f"header declares N={n}, d={d}", path, no)
    rows = lines[1:]
    if len(rows) != n:
        last = rows[-1][0] if rows else no
        raise DatasetFormatError(f"header declares N={n} but {len(rows)} row(s) follow", path, last)
    x = np.empty((n, d))
    for k, (no, line) in enumerate(rows):
        parts = line.split()
        if len(parts) != d:
            raise DatasetFormatError(f"expected {d} values, got {len(parts)}", path, no)
        try:
            x[k] = [float(p) for p in parts]
        except ValueError as e:
            raise DatasetFormatError(f"bad decimal in row {k}", path, no) from e
    if not np.isfinite(x).all():
        raise DatasetFormatError("features must be finite", path)
    return x


def read_edge_list(path: str, num_nodes: int) -> DiGraph:
    edges = []
    for no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise DatasetFormatError("expected 'src<TAB>dst'", path, no)
        i, j = _ints(parts, path, no)
        if not (0 <= i < num_nodes and 0 <= j < num_nodes):
            raise DatasetFormatError(f"edge ({i}, {j}) outside [0, {num_nodes})", path, no)
        edges.append((i, j))
    return graph_core.build_digraph(num_nodes, edges)


def read_labels(path: str, num_nodes: int) -> np.ndarray:
    labels = np.full(num_nodes, -1, dtype=np.int64)
    for no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise DatasetFormatError("expected 'node<TAB>label'", path, no)
        v, y = _ints(parts, path, no)
        if not 0 <= v < num_nodes:
            raise DatasetFormatError(f"node {v} outside [0, {num_nodes})", path, no)
        if y < 0:
            raise DatasetFormatError(f"label must be >= 0, got {y}", path, no)
        if labels[v] >= 0:
            raise DatasetFormatError(f"node {v} labeled twice", path, no)
        labels[v] = y
    missing = np.flatnonzero(labels < 0)
    if missing.size:
        raise DatasetFormatError(f"{missing.size} node(s) without a label, e.g. {int(missing[0])}", path)
    return labels


def read_splits(path: str, num_nodes: int) -> SplitAssignment:
    members: Dict[str, List[int]] = {name: [] for name in SPLIT_NAMES}
    seen: Dict[int, str] = {}
    for no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2 or parts[1] not in SPLIT_NAMES:
            raise DatasetFormatError("expected 'node<TAB>train|val|test'", path, no)
        (v,) = _ints(parts[:1], path, no)
        if not 0 <= v < num_nodes:
            raise DatasetFormatError(f"node {v} outside [0, {num_nodes})", path, no)
        if v in seen:
            raise DatasetFormatError(f"node {v} is in both '{seen[v]}' and '{parts[1]}'", path, no)
        seen[v] = parts[1]
        members[parts[1]].append(v)
    return SplitAssignment(**{k: np.array(sorted(v), dtype=np.int64) for k, v in members.items()})


def load_dataset(graph_path: str, features_path: str, labels_path: str,
                 splits_path: Optional[str] = None, seed: int = settings.SEED) -> Dataset:
    """Features fix N; without a split file the default ratio split is drawn from `seed`."""
    x = read_features(features_path)
    n = x.shape[0]
    g = read_edge_list(graph_path, n)
    labels = read_labels(labels_path, n)
    splits = read_splits(splits_path, n) if splits_path else random_splits(n, seed=seed)
    ds = Dataset(graph=g, features=x, labels=labels, splits=splits)
    logger.info(f"Dataset: N={n} M={g.num_edges} d={x.shape[1]} K={ds.num_classes} "
                f"train/val/test={splits.train.size}/{splits.val.size}/{splits.test.size}")
    return ds


# ----- WRITERS -----
def _write_lines(path: str, lines: List[str]):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(lines) + ("\n" if lines else ""))


def save_dataset(ds: Dataset, directory: str) -> Dict[str, str]:
    os.makedirs(directory, exist_ok=True)
    paths = {k: os.path.join(directory, v) for k, v in DATASET_FILES.items()}
    _write_lines(paths["graph"], [f"{i}\t{j}" for i, j in ds.graph.edges])
    n, d = ds.features.shape
    _write_lines(paths["features"], [f"{n} {d}"] + [" ".join("%.17g" % v for v in row) for row in ds.features])
    _write_lines(paths["labels"], [f"{v}\t{int(y)}" for v, y in enumerate(ds.labels)])
    split_of = {}
    for name in SPLIT_NAMES:
        for v in getattr(ds.splits, name):
            split_of[int(v)] = name
    _write_lines(paths["splits"], [f"{v}\t{split_of[v]}" for v in sorted(split_of)])
    return paths


def write_proximity(path: str, weights: Mapping[Tuple[int, int], float]):
    _write_lines(path, [f"{i}\t{j}\t{weights[(i, j)]:.17g}" for i, j in sorted(weights)])


def read_proximity(path: str) -> Dict[Tuple[int, int], float]:
    out: Dict[Tuple[int, int], float] = {}
    for no, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 3:
            raise DatasetFormatError("expected 'src<TAB>dst<TAB>weight'", path, no)
        i, j = _ints(parts[:2], path, no)
        try:
            out[(i, j)] = float(parts[2])
        except ValueError as e:
            raise DatasetFormatError(f"bad weight '{parts[2]}'", path, no) from e
    return out


# ----- SPLITS -----
def random_splits(n: int, train: float = settings.SPLIT_RATIOS[0], val: float = settings.SPLIT_RATIOS[1],
                  seed: int = settings.SEED) -> SplitAssignment:
    if n < 1:
        raise GraphError("random_splits needs n >= 1")
    if train <= 0 or val < 0 or train + val > 1:
        raise GraphError(f"bad split ratios train={train} val={val}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = max(1, int(round(train * n)))
    n_val = min(n - n_train, int(round(val * n)))
    return SplitAssignment(train=np.sort(perm[:n_train]),
                           val=np.sort(perm[n_train:n_train + n_val]),
                           test=np.sort(perm[n_train + n_val:]))


# ----- SYNTHETIC -----
def _pairs_with_probability(probs: np.ndarray, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Row-major Bernoulli draw over an N x N probability table (diagonal ignored)."""
    hits = rng.random(probs.shape) < probs
    np.fill_diagonal(hits, False)
    rows, cols = np.nonzero(hits)
    return list(zip(rows.tolist(), cols.tolist()))


def _check_prob(name: str, p: float):
    if not 0.0 <= p <= 1.0:
        raise GraphError(f"{name} must lie in [0, 1], got {p}")


def generate_synthetic(kind: str, n: int, params: Optional[Mapping[str, float]] = None,
                       seed: int = settings.SEED) -> Dataset:
    """
    directed_cycle  edges i -> i+1 (mod n), Gaussian features, alternating labels
    two_block       two halves; intra-block edges with p_in, cross edges with p_out;
                    features = block indicator tiled over `dim` columns + N(0, noise); labels = block
    random_digraph  every ordered pair (no self-loops) with probability p; random labels
    """
    params = dict(params or {})
    if kind not in SYNTHETIC_KINDS:
        raise GraphError(f"unknown synthetic kind '{kind}' (expected one of {SYNTHETIC_KINDS})")
    if n < 2:
        raise GraphError("synthetic graphs need n >= 2")
    dim = int(params.pop("dim", settings.SYNTH_DIM))
    if dim < 1:
        raise GraphError("dim must be >= 1")
    rng = np.random.default_rng(seed)

    if kind == "directed_cycle":
        edges = [(i, (i + 1) % n) for i in range(n)]
        x = rng.standard_normal((n, dim))
        labels = np.arange(n, dtype=np.int64) % 2
    elif kind == "two_block":
        p_in = float(params.pop("p_in", 0.05))
        p_out = float(params.pop("p_out", 0.005))
        noise = float(params.pop("noise", settings.SYNTH_NOISE))
        _check_prob("p_in", p_in)
        _check_prob("p_out", p_out)
        if noise < 0:
            raise GraphError("noise must be >= 0")
        block = (np.arange(n) >= n // 2).astype(np.int64)
        same = block[:, None] == block[None, :]
        edges = _pairs_with_probability(np.where(same, p_in, p_out), rng)
        indicator = (block[:, None] == (np.arange(dim) % 2)[None, :]).astype(float)
        x = indicator + noise * rng.standard_normal((n, dim))
        labels = block
    else:
        p = float(params.pop("p", 0.1))
        classes = int(params.pop("classes", 2))
        _check_prob("p", p)
        if classes < 1:
            raise GraphError("classes must be >= 1")
        edges = _pairs_with_probability(np.full((n, n), p), rng)
        x = rng.standard_normal((n, dim))
        labels = rng.integers(0, classes, size=n).astype(np.int64)
    if params:
        raise GraphError(f"unknown parameter(s) for {kind}: {sorted(params)}")

    g = graph_core.build_digraph(n, edges)
    splits = random_splits(n, seed=seed)
    logger.info(f"Synthetic {kind}: N={n} M={g.num_edges} d={dim} seed={seed}")
    return Dataset(graph=g, features=x, labels=labels, splits=splits)


# ----- CONVERTERS -----
_SEP = re.compile(r"[,\s]+")


def convert_edge_export(src_path: str, out_dir: str, directed: bool = True) -> Tuple[int, int]:
    """
    Comma/whitespace separated edge export with arbitrary node tokens -> graph.edges with
    dense ids (first appearance order) plus id_map.tsv. Extra columns are ignored.
    Returns (num_nodes, num_edges).
    """
    ids: Dict[str, int] = {}
    edges: List[Tuple[int, int]] = []
    for no, line in _data_lines(src_path):
        parts = [p for p in _SEP.split(line) if p]
        if len(parts) < 2:
            raise DatasetFormatError("expected at least two node tokens", src_path, no)
        a = ids.setdefault(parts[0], len(ids))
        b = ids.setdefault(parts[1], len(ids))
        edges.append((a, b))
        if not directed:
            edges.append((b, a))
    if not ids:
        raise DatasetFormatError("no edges found", src_path)
    g = graph_core.build_digraph(len(ids), edges)

    os.makedirs(out_dir, exist_ok=True)
    _write_lines(os.path.join(out_dir, DATASET_FILES["graph"]), [f"{i}\t{j}" for i, j in g.edges])
    _write_lines(os.path.join(out_dir, "id_map.tsv"), [f"{v}\t{tok}" for tok, v in ids.items()])
    logger.info(f"Converted {src_path}: N={g.num_nodes} M={g.num_edges} -> {out_dir}")
    return g.num_nodes, g.num_edges
