import numpy as np
import pytest
from pydantic import ValidationError

from stag.datasets import (
    EDGE_LIST_MAGIC, dataset_available, load_citation, load_dataset, load_edge_list, make_split, row_normalize,
    save_edge_list,
)
from stag.errors import CitationFormatError, GraphConstructionError
from stag.models.split import Split


# ==============================
# Citation files
# ==============================


def test_fixture_files_give_three_nodes_four_directed_edges(citation_files):
    g = load_citation(*citation_files)
    assert g.n_nodes == 3
    assert g.n_edges == 4
    assert g.is_symmetric()
    # AI < DB
    assert g.labels.tolist() == [0, 1, 0]


def test_features_row_normalized_by_default(citation_files):
    g = load_citation(*citation_files)
    np.testing.assert_allclose(g.features.sum(axis=1), 1.0)
    raw = load_citation(*citation_files, row_normalize_features=False)
    assert raw.features[0].tolist() == [1.0, 0.0, 1.0]


def test_duplicate_cite_pair_is_one_undirected_edge(citation_files):
    content, cites = citation_files
    cites.write_text("p1\tp2\np1\tp2\np2\tp1\n")
    assert load_citation(content, cites).n_edges == 2


def test_unknown_cite_ids_are_skipped(citation_files, caplog):
    content, cites = citation_files
    cites.write_text("p1\tp2\np1\tghost\n")
    g = load_citation(content, cites)
    assert g.n_edges == 2
    assert "skipped 1" in caplog.text


def test_malformed_content_line_reports_line_number(citation_files):
    content, cites = citation_files
    content.write_text("p1\t1\t0\t1\tAI\np2\t0\t1\tDB\n")
    with pytest.raises(CitationFormatError) as exc:
        load_citation(content, cites)
    assert exc.value.line_no == 2
    assert "expected 3 features" in str(exc.value)


def test_non_numeric_feature(citation_files):
    content, cites = citation_files
    content.write_text("p1\t1\tx\t1\tAI\n")
    with pytest.raises(CitationFormatError, match=":1: non-numeric"):
        load_citation(content, cites)


def test_malformed_cites_line(citation_files):
    content, cites = citation_files
    cites.write_text("p1\tp2\np1 p2 p3\n")
    with pytest.raises(CitationFormatError, match=":2:"):
        load_citation(content, cites)


def test_row_normalize_leaves_zero_rows():
    out = row_normalize(np.array([[0.0, 0.0], [1.0, 3.0]]))
    assert out.tolist() == [[0.0, 0.0], [0.25, 0.75]]


def test_missing_dataset_mentions_env_var(tmp_path):
    assert not dataset_available("cora", tmp_path)
    with pytest.raises(FileNotFoundError, match="STAG_DATA_DIR"):
        load_dataset("cora", data_dir=tmp_path)


def test_unknown_dataset_name():
    with pytest.raises(ValueError, match="unknown dataset"):
        load_dataset("pubmed-xl")


# ==============================
# Edge-list format
# ==============================


def test_edge_list_round_trip(toy_graph, tmp_path):
    path = tmp_path / "toy.edges"
    save_edge_list(toy_graph, path)
    assert path.read_text().startswith(EDGE_LIST_MAGIC)
    loaded = load_edge_list(path, toy_graph.features, toy_graph.labels)
    assert loaded.edges() == toy_graph.edges()
    assert loaded.directed == toy_graph.directed
    again = tmp_path / "again.edges"
    save_edge_list(loaded, again)
    assert again.read_text() == path.read_text()


def test_directed_edge_list_round_trip(tmp_path):
    from stag.graph import build_graph
    g = build_graph([(0, 1), (2, 1)], np.zeros((3, 1)))
    path = tmp_path / "d.edges"
    save_edge_list(g, path)
    assert load_edge_list(path).edges() == [(0, 1), (2, 1)]


def test_edge_list_without_header(tmp_path):
    path = tmp_path / "bad.edges"
    path.write_text("0 1\n")
    with pytest.raises(GraphConstructionError, match="header"):
        load_edge_list(path)


def test_edge_list_bad_line(tmp_path):
    path = tmp_path / "bad.edges"
    path.write_text(f"{EDGE_LIST_MAGIC} n_nodes=3 directed=0\n0 1\n1 x\n")
    with pytest.raises(GraphConstructionError, match=":3:"):
        load_edge_list(path)


# ==============================
# Splits
# ==============================


def test_split_sizes_and_disjointness(toy_graph):
    split = make_split(toy_graph, 9, n_val=10, n_test=8, seed=1)
    assert split.sizes() == (9, 10, 8)
    assert not set(split.train) & set(split.val)
    assert not set(split.val) & set(split.test)
    assert not set(split.train) & set(split.test)


def test_planetoid_like_split_is_class_balanced(toy_graph):
    split = make_split(toy_graph, 10, n_val=5, n_test=5, seed=0)
    counts = np.bincount(toy_graph.labels[split.train], minlength=3)
    assert counts.max() - counts.min() <= 1


def test_same_seed_same_split(toy_graph):
    assert make_split(toy_graph, 6, 10, 10, seed=4) == make_split(toy_graph, 6, 10, 10, seed=4)
    assert make_split(toy_graph, 6, 10, 10, seed=4) != make_split(toy_graph, 6, 10, 10, seed=5)


def test_random_policy(toy_graph):
    split = make_split(toy_graph, 6, 10, 10, policy="random", seed=0)
    assert split.sizes() == (6, 10, 10)


def test_insufficient_nodes(toy_graph):
    with pytest.raises(ValueError, match="insufficient nodes"):
        make_split(toy_graph, 10, 10, 11)


def test_split_model_rejects_overlap():
    with pytest.raises(ValidationError, match="overlaps"):
        Split(train=[0, 1], val=[1, 2], test=[3], n_nodes=4)
    with pytest.raises(ValidationError, match="outside"):
        Split(train=[0], val=[5], test=[], n_nodes=4)


def test_cora_split_sizes(cora_dir):
    g = load_dataset("cora", data_dir=cora_dir)
    assert g.n_nodes == 2708
    assert make_split(g, 140, 500, 1000, seed=0).sizes() == (140, 500, 1000)
