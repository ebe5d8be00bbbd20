import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aspectmf.model import (AspectConfig, COMBO_LABELS, HyperParams, ModelParams,
                            ModelFormatError, UserIndexes, aspect_at_time,
                            dynamic_item_bias, dynamic_user_bias,
                            estimate_trust_triplet, init_params, load_model,
                            predict, save_model)
from aspectmf.temporal import TemporalContext
from aspectmf.trainer import randomize_params, standard_instance

DEV_16_04 = 3.0314331330207964  # 16 ** 0.4, frozen

ALL_ON = AspectConfig(dynamic_bias=True, dynamic_feature=True,
                      dynamic_feature_value=True, social=True,
                      conditional=True, implicit_feedback=True)


def make_ctx(t_u_values, t_min=0, t_max=100, beta=0.4, num_bins=10):
    return TemporalContext(beta=beta, num_bins=num_bins, t_min=t_min,
                           t_max=t_max, t_u=np.asarray(t_u_values, dtype=float))


class TestAspectConfig:
    def test_seven_combinations_plus_static(self):
        labels = set(COMBO_LABELS)
        assert labels == {"static", "b", "f", "fv", "bf", "bfv", "ffv", "bffv"}

    @pytest.mark.parametrize("label", sorted(COMBO_LABELS))
    def test_label_roundtrip(self, label):
        assert AspectConfig.from_label(label).label == label

    def test_unknown_label(self):
        with pytest.raises(ValueError):
            AspectConfig.from_label("bx")

    def test_static_means_no_dynamic(self):
        cfg = AspectConfig.from_label("static")
        assert not cfg.any_dynamic()


class TestInitParams:
    def test_deterministic(self):
        hyper = HyperParams(D=4, seed=77)
        a = init_params(6, 9, hyper, ALL_ON, mu=3.2)
        b = init_params(6, 9, hyper, ALL_ON, mu=3.2)
        for name in ("bu", "bi", "P", "Q", "y", "omega"):
            assert np.array_equal(getattr(a, name), getattr(b, name))

    def test_shapes_minimal(self):
        p = init_params(1, 1, HyperParams(D=3), ALL_ON)
        assert p.P.shape == (1, 3)
        assert p.Y.shape == (3, 3)
        assert np.all(p.Y == 0)

    def test_identity_style_constants(self):
        p = init_params(4, 5, HyperParams(D=2), ALL_ON)
        assert np.all(p.W == 1.0)
        assert np.all(p.Z == 0.0)
        assert np.all(p.C == 1.0)
        assert np.all(p.alpha == 0.0)
        assert p.num_day_slots == 0

    def test_trust_svd_reduction_at_init(self, tiny_dataset, tiny_trust):
        """With W=1, Z=0, Y=0 the prediction is the bias + latent form with
        implicit and social sums, computed here independently."""
        hyper = HyperParams(D=3, seed=5)
        p = init_params(3, 4, hyper, ALL_ON, mu=3.5)
        idx = UserIndexes(tiny_dataset, tiny_trust)
        ctx = TemporalContext.from_dataset(tiny_dataset)
        for u in range(3):
            for j in range(4):
                items = tiny_dataset.user_items(u)
                trustees = tiny_trust.trustees(u)
                vec = (p.P[u]
                       + len(items) ** -0.5 * p.y[items].sum(axis=0)
                       + len(trustees) ** -0.5 * p.omega[trustees].sum(axis=0))
                expect = p.mu + p.bu[u] + p.bi[j] + vec @ p.Q[j]
                got = predict(p, idx, u, j, 10, ctx, ALL_ON)
                assert got == pytest.approx(expect, rel=1e-12)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            init_params(0, 1, HyperParams(), ALL_ON)


class TestDynamicUserBias:
    def test_at_reference_day_without_offsets(self):
        p = ModelParams(1, 1, 2, 4)
        p.bu[0] = 0.5
        p.alpha[0] = 0.1
        ctx = make_ctx([50.0])
        assert dynamic_user_bias(p, 0, 50, ctx, ALL_ON) == 0.5

    def test_hand_sum(self):
        p = ModelParams(1, 1, 2, 4)
        p.bu[0] = 0.5
        p.alpha[0] = 0.1
        p.register_days([(0, 66)])
        p.but[0] = 0.02
        ctx = make_ctx([50.0])
        expect = 0.5 + 0.1 * DEV_16_04 + 0.02
        assert dynamic_user_bias(p, 0, 66, ctx, ALL_ON) == pytest.approx(expect,
                                                                         abs=1e-12)

    def test_switch_off_ignores_time(self):
        p = ModelParams(1, 1, 2, 4)
        p.bu[0] = 0.5
        p.alpha[0] = 0.1
        ctx = make_ctx([50.0])
        static = AspectConfig()
        assert (dynamic_user_bias(p, 0, 0, ctx, static)
                == dynamic_user_bias(p, 0, 99, ctx, static) == 0.5)


class TestDynamicItemBias:
    def test_multiplicative_identity(self):
        p = ModelParams(1, 1, 2, 4)
        p.bi[0] = 0.7
        ctx = make_ctx([50.0])
        assert dynamic_item_bias(p, 0, 0, 10, ctx, ALL_ON) == pytest.approx(0.7)

    def test_hand_product(self):
        p = ModelParams(1, 1, 2, 4)
        p.bi[0] = 0.4
        p.bit[0, :] = 0.1
        p.register_days([(0, 10)])
        p.Ct[0] = 0.2
        ctx = make_ctx([50.0])
        assert dynamic_item_bias(p, 0, 0, 10, ctx, ALL_ON) == pytest.approx(0.6)

    def test_zero_scale_annihilates(self):
        p = ModelParams(1, 1, 2, 4)
        p.bi[0] = 123.0
        p.C[0] = 0.0
        ctx = make_ctx([50.0])
        assert dynamic_item_bias(p, 0, 0, 10, ctx, ALL_ON) == 0.0


class TestAspectAtTime:
    def test_static_at_reference_day(self):
        p = ModelParams(1, 1, 1, 4)
        p.P[0, 0] = 0.3
        ctx = make_ctx([50.0])
        assert aspect_at_time(p, "P", 0, 0, 50, ctx, ALL_ON) == 0.3

    def test_hand_sum_with_slope(self):
        p = ModelParams(1, 1, 1, 4)
        p.P[0, 0] = 0.3
        p.alpha_P[0] = -0.05
        ctx = make_ctx([50.0])
        expect = 0.3 - 0.05 * DEV_16_04
        assert aspect_at_time(p, "P", 0, 0, 66, ctx, ALL_ON) == pytest.approx(
            expect, abs=1e-12)

    def test_fv_switch_freezes_w_and_z(self):
        p = ModelParams(1, 1, 1, 4)
        p.W[0, 0] = 0.8
        p.alpha_W[0] = 0.5
        p.Z[0, 0] = 0.2
        p.alpha_Z[0] = 0.5
        ctx = make_ctx([50.0])
        cfg = AspectConfig(dynamic_feature=True)  # fv off
        assert aspect_at_time(p, "W", 0, 0, 90, ctx, cfg) == 0.8
        assert aspect_at_time(p, "Z", 0, 0, 90, ctx, cfg) == 0.2

    def test_unknown_aspect(self):
        p = ModelParams(1, 1, 1, 4)
        with pytest.raises(ValueError):
            aspect_at_time(p, "Q", 0, 0, 0, make_ctx([0.0]), ALL_ON)


class TestPredict:
    def test_zero_model_returns_mean(self, tiny_dataset):
        p = ModelParams(3, 4, 2, 4, mu=3.6)
        p.W[:] = 0.0
        p.C[:] = 0.0
        idx = UserIndexes(tiny_dataset)
        ctx = TemporalContext.from_dataset(tiny_dataset, num_bins=4)
        assert predict(p, idx, 0, 0, 10, ctx, ALL_ON) == 3.6

    def test_single_factor_hand_evaluation(self):
        ds_users, ds_items = [0], [0]
        from aspectmf.data import RatingDataset
        ds = RatingDataset(ds_users, ds_items, [3.0], [0], 1, 1, (1, 5))
        idx = UserIndexes(ds)
        p = ModelParams(1, 1, 1, 4, mu=0.0)
        p.P[0, 0] = 2.0
        p.W[0, 0] = 1.0
        p.Z[0, 0] = 0.5
        p.Q[0, 0] = 1.0
        cfg = AspectConfig(social=False, conditional=False,
                           implicit_feedback=False)
        ctx = make_ctx([0.0])
        assert predict(p, idx, 0, 0, 0, ctx, cfg) == pytest.approx(3.0)

    def test_mean_shift_linearity(self, tiny_dataset, tiny_trust):
        _, _, _, _, ctx, p = standard_instance(3)
        idx = UserIndexes(tiny_dataset, tiny_trust)
        base = predict(p, idx, 0, 1, 20, ctx, ALL_ON)
        p.mu += 1.25
        assert predict(p, idx, 0, 1, 20, ctx, ALL_ON) == pytest.approx(base + 1.25)

    def test_unknown_entities_fall_back(self, tiny_dataset):
        p = ModelParams(3, 4, 2, 4, mu=3.0)
        p.bu[:] = 0.25
        p.bi[:] = -0.5
        idx = UserIndexes(tiny_dataset)
        ctx = TemporalContext.from_dataset(tiny_dataset, num_bins=4)
        cfg = AspectConfig()
        assert predict(p, idx, 99, 0, 10, ctx, cfg) == pytest.approx(3.0 - 0.5)
        assert predict(p, idx, 0, 99, 10, ctx, cfg) == pytest.approx(3.0 + 0.25)
        assert predict(p, idx, 99, 99, 10, ctx, cfg) == pytest.approx(3.0)

    def test_clipping(self, tiny_dataset):
        p = ModelParams(3, 4, 2, 4, mu=9.0)
        idx = UserIndexes(tiny_dataset)
        ctx = TemporalContext.from_dataset(tiny_dataset, num_bins=4)
        assert predict(p, idx, 0, 0, 10, ctx, AspectConfig(),
                       clip=(1.0, 5.0)) == 5.0

    def test_static_config_time_invariant_exactly(self):
        train, trust, hyper, cfg, ctx, p = standard_instance(11)
        static = AspectConfig(social=True, conditional=True,
                              implicit_feedback=True)
        idx = UserIndexes(train, trust)
        for u in range(train.num_users):
            for j in range(train.num_items):
                values = {predict(p, idx, u, j, day, ctx, static)
                          for day in (0, 13, 50, 77, 99)}
                assert len(values) == 1


class TestEstimateTrustTriplet:
    def test_zero_influence_vector(self):
        p = ModelParams(2, 2, 3, 4)
        ctx = make_ctx([5.0, 5.0])
        assert estimate_trust_triplet(p, 0, 1, [5], ctx, ALL_ON) == (0.0, 0.0, 0.0)

    def test_hand_inner_products(self):
        p = ModelParams(2, 2, 1, 4)
        p.P[0, 0] = 0.5
        p.W[0, 0] = 1.0
        p.Z[0, 0] = 0.2
        p.omega[1, 0] = 2.0
        ctx = make_ctx([7.0, 7.0])
        t_hat, s_hat, g_hat = estimate_trust_triplet(p, 0, 1, [7], ctx, ALL_ON)
        assert t_hat == pytest.approx(1.0)
        assert s_hat == pytest.approx(0.0)
        assert g_hat == pytest.approx(0.4)

    def test_static_average_invariant_under_duplication(self):
        p = ModelParams(2, 2, 3, 4)
        rng = np.random.default_rng(0)
        p.P[0] = rng.normal(size=3)
        p.omega[1] = rng.normal(size=3)
        ctx = make_ctx([10.0, 10.0])
        cfg = AspectConfig()  # static: every day contributes the same term
        one = estimate_trust_triplet(p, 0, 1, [4], ctx, cfg)
        two = estimate_trust_triplet(p, 0, 1, [4, 4], ctx, cfg)
        assert one == pytest.approx(two)

    def test_no_ratings_gives_zero_triplet(self):
        p = ModelParams(2, 2, 3, 4)
        p.omega[1] = 1.0
        ctx = make_ctx([0.0, 0.0])
        assert estimate_trust_triplet(p, 0, 1, [], ctx, ALL_ON) == (0.0, 0.0, 0.0)

    @given(st.floats(min_value=-3, max_value=3, allow_nan=False))
    @settings(max_examples=20, deadline=None)
    def test_linear_in_influence_vector(self, scale):
        p = ModelParams(2, 2, 2, 4)
        rng = np.random.default_rng(4)
        p.P[0] = rng.normal(size=2)
        p.W[0] = rng.normal(size=2)
        p.Z[0] = rng.normal(size=2)
        base_omega = rng.normal(size=2)
        ctx = make_ctx([3.0, 3.0])
        p.omega[1] = base_omega
        t1, s1, g1 = estimate_trust_triplet(p, 0, 1, [2, 9], ctx, ALL_ON)
        p.omega[1] = scale * base_omega
        t2, s2, g2 = estimate_trust_triplet(p, 0, 1, [2, 9], ctx, ALL_ON)
        assert t2 == pytest.approx(scale * t1, rel=1e-9, abs=1e-9)
        assert s2 == pytest.approx(scale * s1, rel=1e-9, abs=1e-9)
        assert g2 == pytest.approx(scale * g1, rel=1e-9, abs=1e-9)


class TestSerialization:
    def test_roundtrip_exact(self, tmp_path):
        train, trust, hyper, cfg, ctx, p = standard_instance(21)
        path = tmp_path / "model.txt"
        save_model(p, ctx, cfg, path)
        q, ctx2, cfg2 = load_model(path)
        assert cfg2 == cfg
        assert ctx2.t_min == ctx.t_min and ctx2.t_max == ctx.t_max
        assert ctx2.beta == ctx.beta
        assert np.array_equal(ctx2.t_u, ctx.t_u)
        assert q.mu == p.mu
        for name in ("bu", "alpha", "bi", "bit", "C", "P", "alpha_P", "Q", "W",
                     "alpha_W", "Z", "alpha_Z", "Y", "omega", "y"):
            assert np.array_equal(getattr(q, name), getattr(p, name)), name
        for u, day in zip(p.day_user, p.day_day):
            s_p = p.day_slot(int(u), int(day))
            s_q = q.day_slot(int(u), int(day))
            assert s_q >= 0
            assert q.but[s_q] == p.but[s_p]
            assert np.array_equal(q.Pt[s_q], p.Pt[s_p])
            assert np.array_equal(q.Wt[s_q], p.Wt[s_p])
            assert np.array_equal(q.Zt[s_q], p.Zt[s_p])

    def test_malformed_header(self, tmp_path):
        path = tmp_path / "model.txt"
        path.write_text("not a model\n")
        with pytest.raises(ModelFormatError, match="header"):
            load_model(path)

    def test_truncated_group(self, tmp_path):
        train, trust, hyper, cfg, ctx, p = standard_instance(22)
        path = tmp_path / "model.txt"
        save_model(p, ctx, cfg, path)
        lines = path.read_text().splitlines()
        path.write_text("\n".join(lines[:10]) + "\n")
        with pytest.raises(ModelFormatError):
            load_model(path)

    def test_unknown_group_rejected(self, tmp_path):
        train, trust, hyper, cfg, ctx, p = standard_instance(23)
        path = tmp_path / "model.txt"
        save_model(p, ctx, cfg, path)
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("group mystery 1\n0 1.0\n")
        with pytest.raises(ModelFormatError, match="unknown group"):
            load_model(path)
