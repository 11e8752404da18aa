"""Dataset loading: plain-text citation graphs, the internal edge-list format, splits.

Citation datasets live under ``settings.data_dir`` as ``<name>/<name>.content``
(``id<TAB>f1 ... fK<TAB>label`` per node) and ``<name>/<name>.cites``
(``cited<TAB>citing`` per line).
"""

import logging
from pathlib import Path

import numpy as np

from .config import settings
from .errors import CitationFormatError, GraphConstructionError
from .graph import Graph, build_graph, planted_partition_graph
from .models.split import Split

logger = logging.getLogger(__name__)

EDGE_LIST_MAGIC = "# stag-edges v1"
CITATION_DATASETS = ("cora", "citeseer")
SYNTHETIC_NODES = 1800
SYNTHETIC_CLASSES = 7
SYNTHETIC_FEATURES = 32


def _read_content(path: Path) -> tuple[list[str], np.ndarray, list[str]]:
    ids, rows, labels = [], [], []
    width = None
    seen: set[str] = set()
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        fields = raw.split("\t") if "\t" in raw else raw.split()
        if len(fields) < 3:
            raise CitationFormatError(str(path), line_no, f"expected id, features and label, got {len(fields)} field(s)")
        node_id, values, label = fields[0].strip(), fields[1:-1], fields[-1].strip()
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise CitationFormatError(str(path), line_no, f"expected {width} features, got {len(values)}")
        if node_id in seen:
            raise CitationFormatError(str(path), line_no, f"duplicate node id {node_id!r}")
        try:
            rows.append([float(v) for v in values])
        except ValueError as e:
            raise CitationFormatError(str(path), line_no, f"non-numeric feature ({e})") from e
        seen.add(node_id)
        ids.append(node_id)
        labels.append(label)
    if not ids:
        raise CitationFormatError(str(path), 0, "no nodes")
    return ids, np.array(rows, dtype=np.float64), labels


def _read_cites(path: Path, index: dict[str, int]) -> tuple[list[tuple[int, int]], int]:
    edges, skipped = [], 0
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        if not raw.strip():
            continue
        fields = raw.split()
        if len(fields) != 2:
            raise CitationFormatError(str(path), line_no, f"expected 'cited citing', got {len(fields)} field(s)")
        cited, citing = fields
        if cited not in index or citing not in index:
            skipped += 1
            continue
        edges.append((index[citing], index[cited]))
    return edges, skipped


def row_normalize(features: np.ndarray) -> np.ndarray:
    sums = features.sum(axis=1, keepdims=True)
    sums[sums == 0] = 1.0
    return features / sums


def load_citation(content_path: str | Path, cites_path: str | Path, row_normalize_features: bool = True,
                  name: str | None = None) -> Graph:
    """Undirected citation graph; node ids become dense indices in file order.

    Class ids follow the sorted label names. Cite pairs naming unknown ids are
    skipped and counted.
    """
    content_path, cites_path = Path(content_path), Path(cites_path)
    ids, features, label_names = _read_content(content_path)
    index = {node_id: i for i, node_id in enumerate(ids)}
    classes = {label: k for k, label in enumerate(sorted(set(label_names)))}
    labels = np.array([classes[label] for label in label_names], dtype=np.int64)
    edges, skipped = _read_cites(cites_path, index)
    if skipped:
        logger.warning(f"{cites_path.name}: skipped {skipped} cite pair(s) naming unknown node ids")
    if row_normalize_features:
        features = row_normalize(features)
    g = build_graph(edges, features, labels, symmetrize=True, name=name or content_path.stem)
    logger.info(
        f"Loaded {g.name}: {g.n_nodes} nodes, {g.n_edges // 2} undirected edges, "
        f"{g.n_features} features, {len(classes)} classes (row_normalize={row_normalize_features})"
    )
    return g


# --- Internal edge-list format ---


def save_edge_list(g: Graph, path: str | Path):
    """Header line plus one ``u v`` pair per edge (u < v only for undirected graphs)."""
    lines = [f"{EDGE_LIST_MAGIC} n_nodes={g.n_nodes} directed={int(g.directed)}"]
    for u, v in g.edges():
        if g.directed or u < v:
            lines.append(f"{u} {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_header(line: str, path: Path) -> tuple[int, bool]:
    if not line.startswith(EDGE_LIST_MAGIC):
        raise GraphConstructionError(f"{path}: missing '{EDGE_LIST_MAGIC}' header")
    fields = dict(part.split("=", 1) for part in line[len(EDGE_LIST_MAGIC):].split() if "=" in part)
    try:
        return int(fields["n_nodes"]), fields.get("directed", "0") == "1"
    except (KeyError, ValueError) as e:
        raise GraphConstructionError(f"{path}: malformed header {line!r}") from e


def load_edge_list(path: str | Path, features: np.ndarray | None = None, labels=None) -> Graph:
    """Graph from :func:`save_edge_list` output; features default to a constant column."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise GraphConstructionError(f"{path}: empty edge list")
    n_nodes, directed = _parse_header(lines[0], path)
    edges = []
    for line_no, raw in enumerate(lines[1:], start=2):
        if not raw.strip() or raw.startswith("#"):
            continue
        try:
            u, v = (int(t) for t in raw.split())
        except ValueError as e:
            raise GraphConstructionError(f"{path}:{line_no}: expected two node indices, got {raw!r}") from e
        edges.append((u, v))
    x = np.ones((n_nodes, 1)) if features is None else features
    return build_graph(edges, x, labels, symmetrize=not directed, name=path.stem)


# --- Splits ---


def _balanced_train(labels: np.ndarray, order: np.ndarray, n_train: int) -> list[int]:
    queues = [[i for i in order if labels[i] == k] for k in range(int(labels.max()) + 1)]
    picked, depth = [], 0
    while len(picked) < n_train:
        added = False
        for queue in queues:
            if depth < len(queue) and len(picked) < n_train:
                picked.append(int(queue[depth]))
                added = True
        if not added:
            break
        depth += 1
    return picked


def make_split(g: Graph, n_train: int, n_val: int = 500, n_test: int = 1000,
               policy: str = "planetoid_like", seed: int = 0) -> Split:
    """Seeded train/val/test split.

    planetoid_like: a class-balanced training set (round robin over classes,
    so per-class counts differ by at most one), then validation and test
    nodes from the remaining ones. random: uniform without replacement.
    """
    if min(n_train, n_val, n_test) < 0:
        raise ValueError("split sizes must be non-negative")
    if n_train + n_val + n_test > g.n_nodes:
        raise ValueError(
            f"insufficient nodes: {n_train}+{n_val}+{n_test} requested, graph {g.name} has {g.n_nodes}"
        )
    order = np.random.default_rng(seed).permutation(g.n_nodes)
    if policy == "planetoid_like" and g.labels is None:
        logger.warning(f"{g.name} has no labels; planetoid_like split falls back to random")
        policy = "random"
    if policy == "planetoid_like":
        train = _balanced_train(g.labels, order, n_train)
        if len(train) < n_train:
            raise ValueError(f"only {len(train)} labeled nodes available for {n_train} training nodes")
        taken = set(train)
        rest = [int(i) for i in order if i not in taken]
    elif policy == "random":
        train, rest = [int(i) for i in order[:n_train]], [int(i) for i in order[n_train:]]
    else:
        raise ValueError(f"unknown split policy: {policy}")
    val = rest[:n_val]
    test = rest[len(rest) - n_test:] if n_test else []
    return Split(train=sorted(train), val=sorted(val), test=sorted(test), n_nodes=g.n_nodes)


def load_dataset(name: str, data_dir: str | Path | None = None, row_normalize_features: bool = True,
                 seed: int = 0) -> Graph:
    """cora / citeseer from ``data_dir`` (default ``STAG_DATA_DIR``), or the offline synthetic graph."""
    name = name.lower()
    if name == "synthetic":
        g = planted_partition_graph(SYNTHETIC_NODES, SYNTHETIC_CLASSES, p_in=0.02, p_out=0.001,
                                    n_features=SYNTHETIC_FEATURES, seed=seed, feature_noise=2.0)
        logger.info(f"Generated synthetic graph: {g.n_nodes} nodes, {g.n_edges // 2} undirected edges")
        return g
    if name not in CITATION_DATASETS:
        raise ValueError(f"unknown dataset {name!r} (expected one of {', '.join(CITATION_DATASETS)}, synthetic)")
    root = Path(data_dir or settings.data_dir) / name
    content, cites = root / f"{name}.content", root / f"{name}.cites"
    if not content.exists() or not cites.exists():
        raise FileNotFoundError(f"{name} files not found under {root} (set STAG_DATA_DIR)")
    return load_citation(content, cites, row_normalize_features, name=name)


def dataset_available(name: str, data_dir: str | Path | None = None) -> bool:
    root = Path(data_dir or settings.data_dir) / name
    return (root / f"{name}.content").exists() and (root / f"{name}.cites").exists()
