import numpy as np
import pytest

from indeldiff import chem, protocols
from indeldiff.dataset import ToySpec, generate_toy_dataset
from indeldiff.graph_core import CategorySpace, GraphState

SPACE = CategorySpace(("C", "O"), ("no-bond", "single"))
TABLE = chem.ValenceTable()


def graph(nodes, bonds):
    n = len(nodes)
    node_cat = np.array([SPACE.node_index(x) for x in nodes])
    edge_cat = np.zeros((n, n), dtype=np.int64)
    for i, j in bonds:
        edge_cat[i, j] = edge_cat[j, i] = 1
    return GraphState.from_categories(SPACE, node_cat, edge_cat)


class TestMaeProtocol:
    def test_perfect_generator_gives_zero(self):
        target_graphs = {12.011: graph(["C"], []), 15.999: graph(["O"], [])}

        report = protocols.mae_protocol(
            [12.011, 15.999], 3,
            lambda y, i, j: target_graphs[y],
            lambda g: chem.molecular_weight(g, TABLE),
        )
        assert report["aggregates"]["mae"] == pytest.approx(0.0)
        assert report["aggregates"]["validity"] == 1.0

    def test_constant_offset_gives_offset(self):
        base = graph(["C"], [])
        report = protocols.mae_protocol(
            [12.011 + 3.0], 5,
            lambda y, i, j: base,
            lambda g: chem.molecular_weight(g, TABLE),
        )
        assert report["aggregates"]["mae"] == pytest.approx(3.0)

    def test_no_valid_samples_reports_none(self):
        disconnected = graph(["C", "C"], [])
        report = protocols.mae_protocol(
            [10.0], 2, lambda y, i, j: disconnected, lambda g: 0.0
        )
        assert report["aggregates"]["mae"] is None
        assert report["aggregates"]["validity"] == 0.0
        # invalid samples lower the validity rate but not the error average
        assert all(not row["valid"] for row in report["rows"])


class TestOptimizationProtocol:
    def test_identity_optimizer(self):
        seeds = [graph(["C"], []), graph(["C", "O"], [(0, 1)])]
        report = protocols.optimization_protocol(
            seeds, "improvement",
            lambda seed, i: [seed],
            lambda g: chem.molecular_weight(g, TABLE),
        )
        assert report["aggregates"]["improvement_mean"] == 0.0
        assert report["aggregates"]["diversity"] == 0.0

    def test_no_passing_candidate_contributes_zero(self):
        seeds = [graph(["C", "C"], [(0, 1)])]
        alien = graph(["O", "O"], [(0, 1)])  # disjoint fingerprints: similarity 0
        report = protocols.optimization_protocol(
            seeds, "improvement",
            lambda seed, i: [alien],
            lambda g: chem.molecular_weight(g, TABLE),
            similarity_threshold=0.4,
        )
        assert report["rows"][0]["n_passing"] == 0
        assert report["aggregates"]["improvement_mean"] == 0.0

    def test_success_window_around_seed_property(self):
        seeds = [graph(["C"], []), graph(["O"], [])]
        report = protocols.optimization_protocol(
            seeds, "success",
            lambda seed, i: [seed],
            lambda g: chem.molecular_weight(g, TABLE),
            success_window=(10.0, 20.0),
        )
        assert report["aggregates"]["success_rate"] == 1.0

    def test_improvement_picks_best_passing(self):
        seed = graph(["C", "C"], [(0, 1)])
        bigger = graph(["C", "C", "C"], [(0, 1), (1, 2)])
        smaller = graph(["C"], [])
        report = protocols.optimization_protocol(
            [seed], "improvement",
            lambda s, i: [bigger, smaller, seed],
            lambda g: chem.molecular_weight(g, TABLE),
            similarity_threshold=0.1,
        )
        assert report["rows"][0]["improvement"] == pytest.approx(12.011)

    def test_diversity_zero_below_two_passing(self):
        seed = graph(["C", "C"], [(0, 1)])
        report = protocols.optimization_protocol(
            [seed], "success",
            lambda s, i: [seed],
            lambda g: 1.0,
            success_window=(0.0, 2.0),
        )
        assert report["rows"][0]["diversity"] == 0.0

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            protocols.optimization_protocol([], "bogus", lambda s, i: [], lambda g: 0.0)


class TestComponentStats:
    def test_counts(self):
        graphs = [
            graph(["C", "C"], [(0, 1)]),
            graph(["C", "C", "O"], [(0, 1)]),
            graph(["C", "O", "O", "C"], []),
        ]
        stats = protocols.component_stats(graphs)
        assert stats["avg_nc"] == pytest.approx((1 + 2 + 4) / 3)
        assert stats["max_nc"] == 4
        assert stats["nsc"] == 1


class TestPaddingBaseline:
    def test_toy_run_emits_all_columns(self):
        from indeldiff.padding import pad_graph, run_padding_baseline, strip_pad
        from indeldiff.trainer import TrainConfig

        records = generate_toy_dataset(ToySpec(atom_types=("C", "O"), max_nodes=2))
        config = TrainConfig(
            T=8, epochs=2, batch_size=4, hidden=4, layers=1, gphi_layers=1,
            seed=3, n_max=3, size_mode="fixed",
        )
        report, model, samples = run_padding_baseline(records, config, n_samples=20, pad_edges=True)
        assert set(report) == {
            "baseline", "n_samples", "n_empty_after_strip",
            "val", "avg_nc", "max_nc", "nsc", "xce", "ece",
        }
        assert report["n_samples"] == 20
        assert report["avg_nc"] >= 1.0
        assert report["nsc"] <= 20
        assert np.isfinite(report["xce"]) and np.isfinite(report["ece"])

    def test_pad_strip_round_trip(self):
        from indeldiff.padding import pad_graph, strip_pad

        g = graph(["C", "O"], [(0, 1)])
        for pad_edges in (False, True):
            padded = pad_graph(g, 5, pad_edges)
            assert padded.n == 5
            back = strip_pad(padded, SPACE)
            assert np.array_equal(back.node_cat, g.node_cat)
            assert np.array_equal(back.edge_cat, g.edge_cat)
