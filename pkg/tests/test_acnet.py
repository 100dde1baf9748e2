"""Network shapes, attention properties, heads, and checkpointing."""

import numpy as np
import pytest

from solarbess import autodiff as ad
from solarbess.acnet import AcNet, AcNetConfig, AttentionOutput, init_params

RNG = np.random.default_rng(2024)

BESS_CFG = AcNetConfig(num_features=6, action_dim=4)
SOLAR_CFG = AcNetConfig(num_features=4, action_dim=1, num_conv_filters=4)


def make_net(cfg=BESS_CFG, seed=0) -> AcNet:
    return AcNet(cfg, rng=np.random.default_rng(seed))


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_rejects_indivisible_heads():
    with pytest.raises(ValueError):
        AcNetConfig(num_features=6, action_dim=4, embed_dim=62)


def test_config_rejects_tall_filters():
    with pytest.raises(ValueError):
        AcNetConfig(num_features=4, action_dim=1, num_conv_filters=5)


def test_config_rejects_even_kernel():
    with pytest.raises(ValueError):
        AcNetConfig(num_features=6, action_dim=4, head_kernel=2)


def test_feature_len():
    assert BESS_CFG.feature_len == 80
    assert SOLAR_CFG.feature_len == 64


# ---------------------------------------------------------------------------
# shapes and attention
# ---------------------------------------------------------------------------


def test_embedding_shape_and_zero_case():
    net = make_net()
    emb = net.embed_state(np.zeros(6))
    assert emb.shape == (1, 6, 64)
    # zero input with zero bias leaves only the (zero) bias
    assert emb.data == pytest.approx(np.zeros((1, 6, 64)))


def test_bess_shape_pipeline_end_to_end():
    net = make_net()
    obs = RNG.uniform(-1, 1, 6)
    emb = net.embed_state(obs)
    assert emb.shape == (1, 6, 64)
    att = net.stacked_attention(emb)
    assert att.shape == (1, 6, 64)
    feats = net.multi_grained_conv(att)
    assert feats.shape == (1, 80)
    action = net.actor_forward(obs)
    assert action.shape == (1, 4)


def test_intermediate_concat_width_doubles():
    net = make_net()
    emb = net.embed_state(RNG.uniform(-1, 1, 6))
    out0, _ = net.mhca_forward(emb, 0)
    joined = ad.concat([emb, out0], axis=-1)
    assert joined.shape == (1, 6, 128)
    out1, _ = net.mhca_forward(joined, 1)
    assert out1.shape == (1, 6, 64)


def test_attention_rows_stochastic_many_passes():
    net = make_net()
    worst = 0.0
    for k in range(100):
        obs = RNG.uniform(-2, 2, (3, 6))
        emb = net.embed_state(obs)
        for layer, x in ((0, emb), (1, ad.concat([emb, net.mhca_forward(emb, 0)[0]], -1))):
            _, att = net.mhca_forward(x, layer)
            assert (att.weights >= 0).all()
            worst = max(worst, float(np.abs(att.weights.sum(-1) - 1.0).max()))
    assert worst <= 1e-12


def test_single_feature_attention_is_one():
    cfg = AcNetConfig(num_features=1, action_dim=1, num_conv_filters=1)
    net = make_net(cfg)
    emb = net.embed_state(np.array([0.7]))
    _, att = net.mhca_forward(emb, 0)
    assert att.weights == pytest.approx(np.ones((1, cfg.heads, 1, 1)))


def test_single_block_config_reduces_to_one_mhca():
    cfg = AcNetConfig(num_features=6, action_dim=4, num_mhca=1)
    net = make_net(cfg)
    emb = net.embed_state(RNG.uniform(-1, 1, 6))
    direct, _ = net.mhca_forward(emb, 0)
    stacked = net.stacked_attention(emb)
    assert stacked.data == pytest.approx(direct.data)


def test_multi_grained_output_length():
    net = make_net()
    att = net.stacked_attention(net.embed_state(RNG.uniform(-1, 1, 6)))
    assert net.multi_grained_conv(att).shape == (1, 80)


def test_multi_grained_constant_input_pooled_value():
    net = make_net()
    const = ad.Tensor(np.full((1, 6, 64), 0.37))
    pooled = net.multi_grained_conv(const)
    # every valid position gives the same response, so pooling returns it
    for k in range(1, 6):
        w = net.params[f"grain{k}.w"].data
        b = net.params[f"grain{k}.b"].data
        expected = 0.37 * w.sum(axis=(1, 2)) + b
        got = pooled.data[0, (k - 1) * 16 : k * 16]
        assert got == pytest.approx(expected)


def test_maxpool_position_permutation_invariance():
    net = make_net()
    x = RNG.uniform(-1, 1, (1, 6, 64))
    base = net.multi_grained_conv(ad.Tensor(x)).data
    # permuting rows can only change per-filter maxima for k > 1;
    # the height-1 filter block must be unchanged
    perm = x[:, ::-1, :].copy()
    swapped = net.multi_grained_conv(ad.Tensor(perm)).data
    assert swapped[0, :16] == pytest.approx(base[0, :16])


# ---------------------------------------------------------------------------
# heads
# ---------------------------------------------------------------------------


def test_actor_output_dims_and_range():
    bess = make_net()
    solar = make_net(SOLAR_CFG, seed=1)
    a_b = bess.actor_forward(RNG.uniform(-3, 3, (5, 6))).data
    a_s = solar.actor_forward(RNG.uniform(-3, 3, (5, 4))).data
    assert a_b.shape == (5, 4) and a_s.shape == (5, 1)
    for a in (a_b, a_s):
        assert (a >= 0).all() and (a <= 1).all()


def test_forward_deterministic():
    net = make_net()
    obs = RNG.uniform(-1, 1, 6)
    assert np.array_equal(net.act(obs), net.act(obs))
    act = RNG.uniform(0, 1, 4)
    assert net.critic_forward(obs, act).item() == net.critic_forward(obs, act).item()


def test_critic_zero_final_layer_returns_bias():
    net = make_net()
    net.params["critic.w2"].data[:] = 0.0
    net.params["critic.b2"].data[:] = 3.25
    q = net.critic_forward(RNG.uniform(-1, 1, (4, 6)), RNG.uniform(0, 1, (4, 4)))
    assert q.data == pytest.approx(np.full((4, 1), 3.25))


def test_critic_gradient_wrt_action_nonzero():
    net = make_net()
    obs = RNG.uniform(-1, 1, (1, 6))
    action = ad.Tensor(RNG.uniform(0.2, 0.8, (1, 4)))
    err = ad.grad_check(lambda a: ad.mean_all(net.critic_forward(obs, a)), action)
    assert err < 1e-4
    action.zero_grad()
    with ad.Tape() as tape:
        q = ad.mean_all(net.critic_forward(obs, action))
        tape.backward(q)
    assert np.abs(action.grad).max() > 1e-6


def test_actor_with_value_matches_separate_passes():
    net = make_net()
    obs = RNG.uniform(-1, 1, (3, 6))
    action, q = net.actor_with_value(obs)
    assert action.data == pytest.approx(net.actor_forward(obs).data)
    assert q.data == pytest.approx(net.critic_forward(obs, action.data).data)


def test_param_groups_partition():
    net = make_net()
    names = set(net.params)
    groups = set(net.trunk_names()) | set(net.actor_names()) | set(net.critic_names())
    assert groups == names
    assert not (set(net.actor_names()) & set(net.critic_names()))


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def test_checkpoint_round_trip(tmp_path):
    net = make_net(seed=5)
    path = tmp_path / "net.npz"
    net.save(path)
    loaded = AcNet.load(path)
    assert loaded.cfg == net.cfg
    assert set(loaded.params) == set(net.params)
    for name in net.params:
        assert np.array_equal(loaded.params[name].data, net.params[name].data)
    obs = RNG.uniform(-1, 1, 6)
    assert np.array_equal(loaded.act(obs), net.act(obs))


def test_checkpoint_rejects_unknown_format(tmp_path):
    import json

    path = tmp_path / "bad.npz"
    np.savez(path, __meta__=np.array(json.dumps({"format": 99, "config": {}})))
    with pytest.raises(ValueError):
        AcNet.load(path)


def test_init_params_deterministic_per_seed():
    a = init_params(BESS_CFG, np.random.default_rng(3))
    b = init_params(BESS_CFG, np.random.default_rng(3))
    for name in a:
        assert np.array_equal(a[name].data, b[name].data)
