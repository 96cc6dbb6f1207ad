import numpy as np
import pytest

from indeldiff import denoiser as dn
from indeldiff.graph_core import CategorySpace, GraphState

SPACE = CategorySpace(("C", "O"), ("no-bond", "single"))


def small_config(**kw):
    defaults = dict(
        n_node_types=2, n_edge_types=2, T=8, n_max=4, guide_dim=1,
        hidden=6, layers=2, gphi_layers=1, init_seed=3,
    )
    defaults.update(kw)
    return dn.ModelConfig(**defaults)


def random_state(rng, n, t=4, with_star=False):
    node_cat = rng.integers(0, 2, size=n)
    if with_star:
        node_cat[rng.integers(0, n)] = SPACE.node_del_star
    edge_cat = np.zeros((n, n), dtype=np.int64)
    iu = np.triu_indices(n, k=1)
    vals = rng.integers(0, 2, size=iu[0].size)
    edge_cat[iu] = vals
    edge_cat.T[iu] = vals
    for i in range(n):
        if node_cat[i] == SPACE.node_del_star:
            edge_cat[i, :] = SPACE.edge_del_star
            edge_cat[:, i] = SPACE.edge_del_star
            edge_cat[i, i] = 0
    return GraphState.from_categories(SPACE, node_cat, edge_cat, t=t)


class TestPredictContract:
    def test_output_shapes_and_normalization(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        rng = np.random.default_rng(0)
        state = random_state(rng, 3)
        out = dn.predict(params, cfg, state, np.array([0.2]), 4)
        assert out.node_probs.shape == (3, 2)
        assert out.edge_probs.shape == (3, 3, 2)
        assert out.time_probs.shape == (3, 9)
        assert np.allclose(out.node_probs.sum(axis=1), 1, atol=1e-6)
        assert np.allclose(out.edge_probs.sum(axis=2), 1, atol=1e-6)
        assert np.allclose(out.time_probs.sum(axis=1), 1, atol=1e-6)
        assert np.allclose(out.edge_probs, out.edge_probs.transpose(1, 0, 2))

    def test_determinism(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(1), 3)
        a = dn.predict(params, cfg, state, None, 2)
        b = dn.predict(params, cfg, state, None, 2)
        assert np.array_equal(a.node_probs, b.node_probs)

    def test_del_rows_rejected(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        node_cat = np.array([0, SPACE.node_del])
        edge_cat = np.array([[0, SPACE.edge_del], [SPACE.edge_del, 0]])
        state = GraphState.from_categories(SPACE, node_cat, edge_cat)
        with pytest.raises(dn.DenoiserError, match="DEL"):
            dn.predict(params, cfg, state, None, 2)

    def test_del_star_rows_accepted(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(2), 3, with_star=True)
        out = dn.predict(params, cfg, state, None, 4)
        assert np.allclose(out.node_probs.sum(axis=1), 1, atol=1e-6)

    def test_guide_dimension_checked(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(3), 2)
        with pytest.raises(dn.DenoiserError, match="guide"):
            dn.predict(params, cfg, state, np.array([0.1, 0.2]), 4)

    def test_space_mismatch_rejected(self):
        cfg = small_config(n_node_types=3)
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(4), 2)
        with pytest.raises(dn.DenoiserError, match="category space"):
            dn.predict(params, cfg, state, None, 4)


class TestEquivariance:
    def test_node_permutation_commutes(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        rng = np.random.default_rng(5)
        state = random_state(rng, 4)
        out = dn.predict(params, cfg, state, np.array([0.3]), 5)
        for _ in range(3):
            p = rng.permutation(4)
            permuted = GraphState.from_categories(
                SPACE, state.node_cat[p], state.edge_cat[np.ix_(p, p)], t=state.t
            )
            pout = dn.predict(params, cfg, permuted, np.array([0.3]), 5)
            assert np.allclose(pout.node_probs, out.node_probs[p], atol=1e-10)
            assert np.allclose(pout.time_probs, out.time_probs[p], atol=1e-10)
            assert np.allclose(pout.edge_probs, out.edge_probs[np.ix_(p, p)], atol=1e-10)

    def test_count_head_permutation_invariant(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        rng = np.random.default_rng(6)
        state = random_state(rng, 4)
        base = dn.predict_del_count(params, cfg, state, 3)
        p = rng.permutation(4)
        permuted = GraphState.from_categories(
            SPACE, state.node_cat[p], state.edge_cat[np.ix_(p, p)], t=state.t
        )
        assert np.allclose(dn.predict_del_count(params, cfg, permuted, 3), base, atol=1e-10)

    def test_count_head_is_a_distribution(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(7), 3)
        probs = dn.predict_del_count(params, cfg, state, 3)
        assert probs.shape == (cfg.k_max + 1,)
        assert probs.sum() == pytest.approx(1.0)


class TestLoss:
    def test_perfect_point_masses_give_zero(self):
        # drive logits to near-deterministic targets through a stub parameter set
        cfg = small_config(guide_dim=0, layers=0, gphi_layers=0, hidden=2)
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(8), 2, t=3)
        targets = dn.TrainTargets(
            node=np.array([0, 1]),
            edge=state.edge_cat.copy(),
            time=np.zeros(2, dtype=np.int64),
            n_delstar=0,
            count_gate=False,
        )
        # zero out everything, then wire the node head to copy the input
        for name, p in params.items():
            p.data[:] = 0.0
        params["main.node_embed"].data[0, 0] = 1.0
        params["main.node_embed"].data[1, 1] = 1.0
        params["head.node"].data[0, 0] = 60.0
        params["head.node"].data[1, 1] = 60.0
        params["head.node"].data[0, 1] = -60.0
        params["head.node"].data[1, 0] = -60.0
        # edges: embed the one-hot and map it back
        params["main.edge_embed"].data[0, 0] = 1.0
        params["main.edge_embed"].data[1, 1] = 1.0
        params["head.edge"].data[0, 0] = 60.0
        params["head.edge"].data[1, 1] = 60.0
        params["head.edge"].data[0, 1] = -60.0
        params["head.edge"].data[1, 0] = -60.0
        params["head.time_bias"].data[0] = 60.0
        # the state's own categories as targets: loss collapses to ~0
        targets = dn.TrainTargets(
            node=state.node_cat.copy(),
            edge=state.edge_cat.copy(),
            time=np.zeros(2, dtype=np.int64),
            n_delstar=0,
            count_gate=False,
        )
        loss, breakdown = dn.loss_terms(
            params, cfg, state, None, 3, targets, dn.LossWeights()
        )
        assert float(loss.data) < 0.01

    def test_uniform_node_prediction_single_node(self):
        cfg = small_config(guide_dim=0, layers=0, gphi_layers=0)
        params = dn.init_params(cfg)
        for p in params.values():
            p.data[:] = 0.0  # every head outputs uniform
        state = GraphState.from_categories(SPACE, [0], np.zeros((1, 1), dtype=np.int64), t=2)
        targets = dn.TrainTargets(
            node=np.array([0]), edge=np.zeros((1, 1), dtype=np.int64),
            time=np.array([0]), n_delstar=0, count_gate=False,
        )
        weights = dn.LossWeights(node=1.0, edge=0.0, time=0.0, del_count=0.0)
        loss, breakdown = dn.loss_terms(params, cfg, state, None, 2, targets, weights)
        assert breakdown["node"] == pytest.approx(np.log(2))
        assert breakdown["edge"] == 0.0  # single node: no pairs

    def test_count_gate_controls_term(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(9), 3)
        base = dict(
            node=state.node_cat.copy(), edge=state.edge_cat.copy(),
            time=np.zeros(3, dtype=np.int64), n_delstar=1,
        )
        on, _ = dn.loss_terms(params, cfg, state, None, 4,
                              dn.TrainTargets(**base, count_gate=True), dn.LossWeights())
        off, bd_off = dn.loss_terms(params, cfg, state, None, 4,
                                    dn.TrainTargets(**base, count_gate=False), dn.LossWeights())
        assert bd_off["del_count"] == 0.0
        assert float(on.data) > float(off.data)

    def test_total_is_weighted_sum(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        state = random_state(np.random.default_rng(10), 3)
        targets = dn.TrainTargets(
            node=state.node_cat.copy(), edge=state.edge_cat.copy(),
            time=np.zeros(3, dtype=np.int64), n_delstar=0, count_gate=True,
        )
        w = dn.LossWeights(node=1.0, edge=2.0, time=0.5, del_count=1.5)
        loss, bd = dn.loss_terms(params, cfg, state, np.array([0.1]), 4, targets, w)
        expected = bd["node"] + 2 * bd["edge"] + 0.5 * bd["time"] + 1.5 * bd["del_count"]
        assert float(loss.data) == pytest.approx(expected)


class TestGradients:
    def test_every_parameter_against_central_differences(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        rng = np.random.default_rng(11)
        state = random_state(rng, 3, with_star=True)
        targets = dn.TrainTargets(
            node=rng.integers(0, 2, size=3),
            edge=random_state(rng, 3).edge_cat,
            time=np.array([0, 2, 0]),
            n_delstar=1,
            count_gate=True,
        )
        guide = np.array([0.4])
        weights = dn.LossWeights()

        def value():
            loss, _ = dn.loss_terms(params, cfg, state, None, 4, targets, weights)
            return float(loss.data)

        loss, _ = dn.loss_terms(params, cfg, state, None, 4, targets, weights)
        loss.backward()
        h = 1e-6
        worst = 0.0
        import zlib

        for name, p in params.items():
            grad = p.grad if p.grad is not None else np.zeros_like(p.data)
            flat = p.data.reshape(-1)
            gflat = grad.reshape(-1)
            idxs = np.random.default_rng(zlib.crc32(name.encode())).choice(
                flat.size, size=min(4, flat.size), replace=False
            )
            for i in idxs:
                orig = flat[i]
                flat[i] = orig + h
                up = value()
                flat[i] = orig - h
                down = value()
                flat[i] = orig
                fd = (up - down) / (2 * h)
                # below ~1e-5 the central difference is dominated by float64
                # cancellation noise (eps * |loss| / h); compare absolutely there
                if max(abs(fd), abs(gflat[i])) > 1e-5:
                    worst = max(worst, abs(fd - gflat[i]) / max(abs(fd), abs(gflat[i])))
                else:
                    assert abs(fd - gflat[i]) < 5e-9
        assert worst < 1e-4

    def test_placeholder_receives_gradient(self):
        cfg = small_config()
        params = dn.init_params(cfg)
        rng = np.random.default_rng(12)
        state = random_state(rng, 2)
        targets = dn.TrainTargets(
            node=np.array([0, 1]), edge=state.edge_cat.copy(),
            time=np.zeros(2, dtype=np.int64), n_delstar=0, count_gate=True,
        )
        loss, _ = dn.loss_terms(params, cfg, state, None, 3, targets, dn.LossWeights())
        loss.backward()
        assert params["placeholder"].grad is not None
        assert np.any(params["placeholder"].grad != 0)


class TestConditionalDropout:
    def test_rho_zero_keeps_guide(self):
        rng = np.random.default_rng(0)
        y = np.array([1.0])
        assert all(dn.apply_conditional_dropout(y, 0.0, rng) is y for _ in range(20))

    def test_rho_one_always_placeholder(self):
        rng = np.random.default_rng(0)
        y = np.array([1.0])
        assert all(dn.apply_conditional_dropout(y, 1.0, rng) is None for _ in range(20))

    def test_placeholder_frequency(self):
        rng = np.random.default_rng(1)
        y = np.array([1.0])
        hits = sum(dn.apply_conditional_dropout(y, 0.1, rng) is None for _ in range(100_000))
        assert abs(hits / 100_000 - 0.1) < 0.01

    def test_rho_validated(self):
        with pytest.raises(dn.DenoiserError):
            dn.apply_conditional_dropout(np.array([1.0]), 1.5, np.random.default_rng(0))
