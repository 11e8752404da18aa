"""
Shared test fixtures for the stag toolkit.

conftest.py is a special pytest file: fixtures defined here are available to
every test file in this directory without importing them.

Graphs here are tiny so that dense reference computations (to_dense, explicit
matrix products) stay cheap. Anything that needs the real Cora files uses the
`cora_dir` fixture, which skips the test when STAG_DATA_DIR does not hold them.
"""

from pathlib import Path

import numpy as np
import pytest

from stag.config import settings
from stag.datasets import dataset_available
from stag.graph import build_graph, planted_partition_graph


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)


@pytest.fixture()
def path_graph():
    """Undirected path 0-1-2-3 with two-dimensional features and two classes."""
    features = [[1.0, 0.0], [0.5, 0.5], [0.0, 1.0], [2.0, -1.0]]
    return build_graph([(0, 1), (1, 2), (2, 3)], features, labels=[0, 0, 1, 1], symmetrize=True, name="path4")


@pytest.fixture()
def star_graph():
    """Node 0 linked to nodes 1..4, plus the isolated node 5."""
    features = np.arange(12, dtype=np.float64).reshape(6, 2)
    return build_graph([(0, i) for i in range(1, 5)], features, labels=[0, 1, 1, 0, 0, 1], symmetrize=True,
                       name="star")


@pytest.fixture()
def toy_graph():
    """Small planted-partition graph: 30 nodes, 3 classes, 5 features."""
    return planted_partition_graph(30, 3, p_in=0.4, p_out=0.03, n_features=5, seed=7, feature_noise=0.5)


@pytest.fixture()
def separable_graph():
    """Two cliques joined by one edge, class written into the features."""
    edges = [(i, j) for i in range(6) for j in range(i + 1, 6)]
    edges += [(i, j) for i in range(6, 12) for j in range(i + 1, 12)]
    edges.append((5, 6))
    labels = [0] * 6 + [1] * 6
    features = [[1.0, 0.0] if y == 0 else [0.0, 1.0] for y in labels]
    return build_graph(edges, features, labels, symmetrize=True, name="two_cliques")


@pytest.fixture()
def citation_files(tmp_path):
    """Three-node content file and two cite pairs, in the plain-text citation layout."""
    content = tmp_path / "tiny.content"
    cites = tmp_path / "tiny.cites"
    content.write_text("p1\t1\t0\t1\tAI\np2\t0\t1\t0\tDB\np3\t1\t1\t0\tAI\n")
    cites.write_text("p1\tp2\np2\tp3\n")
    return content, cites


@pytest.fixture()
def cora_dir():
    if not dataset_available("cora"):
        pytest.skip(f"Cora files not found under {Path(settings.data_dir) / 'cora'} (set STAG_DATA_DIR)")
    return Path(settings.data_dir)
