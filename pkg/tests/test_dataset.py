import json

import numpy as np
import pytest

from indeldiff.dataset import (
    DatasetError,
    ToySpec,
    compute_dataset_stats,
    generate_toy_dataset,
    graph_to_obj,
    load_jsonl,
    load_or_compute_stats,
    save_jsonl,
    split_dataset,
)
from indeldiff.graph_core import CategorySpace

SPACE = CategorySpace(("C", "O"), ("no-bond", "single"))


class TestLoadJsonl:
    def test_basic_record(self, tmp_path):
        path = tmp_path / "data.jsonl"
        path.write_text(
            '{"atoms":["C","C"],"bonds":[[0,1,"single"]],"properties":{"mw":24.022}}\n'
        )
        records = load_jsonl(path, SPACE)
        assert len(records) == 1
        g = records[0].graph
        assert g.n == 2 and g.edge_cat[0, 1] == 1
        assert records[0].properties == {"mw": 24.022}
        assert np.allclose(records[0].marginals.m_nodes, [1.0, 0.0])

    def test_duplicate_bond_rejected_with_line_number(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text(
            '{"atoms":["C","C"],"bonds":[[0,1,"single"],[1,0,"single"]],"properties":{}}\n'
        )
        with pytest.raises(DatasetError, match="bad.jsonl:1.*duplicate undirected bond"):
            load_jsonl(path, SPACE)

    def test_unknown_label_named(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"atoms":["C","Xe"],"bonds":[],"properties":{}}\n')
        with pytest.raises(DatasetError, match="Xe"):
            load_jsonl(path, SPACE)

    def test_bond_index_out_of_range(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"atoms":["C"],"bonds":[[0,5,"single"]],"properties":{}}\n')
        with pytest.raises(DatasetError, match="out of range"):
            load_jsonl(path, SPACE)

    def test_malformed_json_line_numbered(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"atoms":["C"],"bonds":[],"properties":{}}\n{oops\n')
        with pytest.raises(DatasetError, match="bad.jsonl:2"):
            load_jsonl(path, SPACE)

    def test_empty_file_is_empty_dataset(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("")
        assert load_jsonl(path, SPACE) == []

    def test_round_trip(self, tmp_path):
        records = generate_toy_dataset(ToySpec(max_nodes=3))
        path = tmp_path / "fam.jsonl"
        save_jsonl(records, path)
        loaded = load_jsonl(path, SPACE)
        assert len(loaded) == len(records)
        for a, b in zip(records, loaded):
            assert np.array_equal(a.graph.node_cat, b.graph.node_cat)
            assert np.array_equal(a.graph.edge_cat, b.graph.edge_cat)
            assert a.properties == pytest.approx(b.properties)
        # saving the loaded records reproduces the file byte for byte
        path2 = tmp_path / "fam2.jsonl"
        save_jsonl(loaded, path2)
        assert path.read_text() == path2.read_text()


class TestToyFamilies:
    def test_tiny_enumerable_family_by_hand(self):
        # single-carbon space: one 1-node graph and the bonded pair
        records = generate_toy_dataset(ToySpec(atom_types=("C",), max_nodes=2))
        objs = [graph_to_obj(r.graph) for r in records]
        assert len(objs) == 2
        assert objs[0]["atoms"] == ["C"] and objs[0]["bonds"] == []
        assert objs[1]["atoms"] == ["C", "C"] and objs[1]["bonds"] == [[0, 1, "single"]]

    def test_enumerable_respects_valence_and_connectivity(self):
        from indeldiff import chem

        records = generate_toy_dataset(ToySpec(max_nodes=4))
        table = chem.ValenceTable()
        assert all(chem.check_validity(r.graph, table) for r in records)
        # oxygen can hold at most two single bonds: the 4-star with O center is absent
        for rec in records:
            orders = chem.bond_order_matrix(rec.graph, table).sum(axis=1)
            for i, cat in enumerate(rec.graph.node_cat):
                cap = 4 if rec.graph.space.node_types[cat] == "C" else 2
                assert orders[i] <= cap

    def test_chain_family(self):
        records = generate_toy_dataset(ToySpec(family="chains", max_nodes=3))
        sizes = sorted(r.graph.n for r in records)
        assert sizes == [2, 2, 2, 2, 3, 3, 3, 3, 3, 3, 3, 3]

    def test_budget_guard(self):
        with pytest.raises(DatasetError, match="budget"):
            generate_toy_dataset(ToySpec(max_nodes=5, budget=100))

    def test_deterministic(self):
        a = generate_toy_dataset(ToySpec(max_nodes=3))
        b = generate_toy_dataset(ToySpec(max_nodes=3))
        assert [graph_to_obj(r.graph) for r in a] == [graph_to_obj(r.graph) for r in b]


class TestStats:
    def test_single_record_stats_equal_marginals(self):
        records = generate_toy_dataset(ToySpec(max_nodes=2))
        stats = compute_dataset_stats(records[:1])
        assert np.allclose(stats.m_nodes, records[0].marginals.m_nodes)

    def test_two_sizes_histogram(self):
        records = generate_toy_dataset(ToySpec(atom_types=("C",), max_nodes=2))
        stats = compute_dataset_stats(records)
        assert np.allclose(stats.p_n, [0.0, 0.5, 0.5])
        assert stats.n_max == 2

    def test_order_invariance(self):
        records = generate_toy_dataset(ToySpec(max_nodes=3))
        a = compute_dataset_stats(records)
        b = compute_dataset_stats(list(reversed(records)))
        assert np.allclose(a.m_nodes, b.m_nodes)
        assert np.allclose(a.m_edges, b.m_edges)
        assert np.allclose(a.p_n, b.p_n)

    def test_empty_rejected(self):
        with pytest.raises(DatasetError):
            compute_dataset_stats([])

    def test_cache_round_trip(self, tmp_path):
        records = generate_toy_dataset(ToySpec(max_nodes=3))
        path = tmp_path / "fam.jsonl"
        save_jsonl(records, path)
        s1 = load_or_compute_stats(path, records)
        cache = json.loads((tmp_path / "fam.jsonl.stats.json").read_text())
        assert "content_hash" in cache
        s2 = load_or_compute_stats(path, records)
        assert np.allclose(s1.m_nodes, s2.m_nodes)
        # stale cache is recomputed
        path.write_text(path.read_text() + "\n")
        s3 = load_or_compute_stats(path, records)
        assert np.allclose(s1.p_n, s3.p_n)


class TestSplits:
    def test_contiguous_disjoint(self):
        records = generate_toy_dataset(ToySpec(max_nodes=4))
        train, val, test = split_dataset(records, (0.8, 0.1, 0.1))
        assert len(train) + len(val) + len(test) == len(records)
        assert train == records[: len(train)]
        assert val == records[len(train) : len(train) + len(val)]

    def test_fraction_validation(self):
        with pytest.raises(DatasetError):
            split_dataset([], (0.5, 0.2, 0.2))
