import numpy as np
import pytest

from s2plab import autodiff as ad
from s2plab.agents import init_agent_pair
from s2plab.params import collect_grads
from s2plab.referential import (IbrConfig, IbrEnvironment,
                                evaluate_selection_accuracy, lsn_supervised_loss,
                                pad_captions, reciprocal_mse_logits,
                                sample_trials, self_play_loss,
                                spk_supervised_loss, synth_world)
from s2plab.rng import RngStream

TINY = IbrConfig(feat_dim=6, vocab=10, msg_len=3, distractors=2,
                 emb_size=6, rec_size=8, attr_p=2, attr_t=3, feat_noise=0.05)


def _world(n=30, seed=0):
    return synth_world(TINY, n, RngStream.from_seed(seed))


def test_config_validation():
    with pytest.raises(ValueError):
        IbrConfig(distractors=0)
    with pytest.raises(ValueError):
        IbrConfig(temperature=0.0)


def test_synth_world_is_deterministic():
    a = _world().items
    b = _world().items
    assert len(a) == 30
    for x, y in zip(a, b):
        assert np.array_equal(x.features, y.features)
        assert x.caption.tokens == y.caption.tokens


def test_pad_captions_layout():
    items = _world().items[:4]
    padded = pad_captions(items, TINY)
    assert padded.shape == (4, TINY.msg_len)
    for b, item in enumerate(items):
        toks = item.caption.tokens[: TINY.msg_len]
        assert tuple(padded[b, : len(toks)]) == toks
        assert all(padded[b, len(toks):] == TINY.pad_id)


def test_reciprocal_mse_prefers_identical_representation():
    msg = ad.constant(np.ones((2, 4)))
    same = ad.constant(np.ones((2, 4)))
    far = ad.constant(np.zeros((2, 4)))
    logits = reciprocal_mse_logits(msg, [far, same], 1e-6)
    assert (logits.data.argmax(axis=1) == 1).all()


def test_reciprocal_mse_rejects_bad_epsilon():
    msg = ad.constant(np.ones((1, 2)))
    with pytest.raises(ValueError):
        reciprocal_mse_logits(msg, [msg], 0.0)


def test_sample_trials_shapes():
    items = _world().items
    trial = sample_trials(items, 8, TINY, RngStream.from_seed(1))
    assert trial.target.shape == (8,)
    assert trial.candidates.shape == (8, TINY.distractors + 1, TINY.feat_dim)
    assert len(trial.target_items) == 8
    for b in range(8):
        tgt = trial.candidates[b, trial.target[b]]
        assert np.array_equal(tgt, trial.target_items[b].features)


def test_lsn_supervised_loss_gradcheck():
    items = _world().items
    trial = sample_trials(items, 5, TINY, RngStream.from_seed(2))
    pair = init_agent_pair(TINY.arch_spec(), 0)

    def loss_of(leaves):
        return lsn_supervised_loss(pair, leaves, trial, TINY)

    _finite_diff(pair.listener.params, loss_of)


def test_spk_supervised_loss_gradcheck():
    items = _world().items[:5]
    pair = init_agent_pair(TINY.arch_spec(), 0)

    def loss_of(leaves):
        return spk_supervised_loss(pair, leaves, items, TINY)

    _finite_diff(pair.speaker.params, loss_of)


def test_self_play_loss_runs_and_gives_gradients():
    items = _world().items
    trial = sample_trials(items, 6, TINY, RngStream.from_seed(3))
    pair = init_agent_pair(TINY.arch_spec(), 0)
    spk_leaves = pair.speaker.params.leaves()
    lsn_leaves = pair.listener.params.leaves()
    loss, sent = self_play_loss(pair, spk_leaves, lsn_leaves, trial, TINY,
                                RngStream.from_seed(4))
    loss.backward()
    assert sent.shape == (6, TINY.msg_len)
    spk_grads = collect_grads(spk_leaves)
    lsn_grads = collect_grads(lsn_leaves)
    assert any(np.abs(g).max() > 0 for g in spk_grads.values())
    assert any(np.abs(g).max() > 0 for g in lsn_grads.values())


def _finite_diff(params, loss_of, tol=1e-3):
    leaves = params.leaves()
    loss = loss_of(leaves)
    loss.backward()
    grads = collect_grads(leaves)
    rng = np.random.default_rng(0)
    for name, arr in params.arrays.items():
        flat = arr.ravel()
        for j in rng.choice(flat.size, size=min(3, flat.size), replace=False):
            old = flat[j]
            flat[j] = old + 1e-6
            up = float(loss_of(params.leaves_const()).data)
            flat[j] = old - 1e-6
            dn = float(loss_of(params.leaves_const()).data)
            flat[j] = old
            num = (up - dn) / 2e-6
            got = grads[name].ravel()[j]
            assert abs(got - num) / max(abs(num), 1.0) < tol, name


def test_untrained_selection_near_chance():
    config = IbrConfig(feat_dim=8, vocab=12, msg_len=3, distractors=9,
                       emb_size=8, rec_size=10, attr_p=2, attr_t=4)
    items = synth_world(config, 200, RngStream.from_seed(5)).items
    accs = []
    for seed in range(5):
        pair = init_agent_pair(config.arch_spec(), seed)
        accs.append(evaluate_selection_accuracy(
            pair, items, 1000, config, RngStream.from_seed(100 + seed)))
    assert abs(np.mean(accs) - 0.1) < 0.03


def test_environment_splits_and_selfplay_pool():
    world = synth_world(TINY, 40, RngStream.from_seed(6))
    items = world.items
    env = IbrEnvironment(TINY, items[:10], items[10:20], items[20:30],
                         RngStream.from_seed(7), n_val_trials=16,
                         n_test_trials=16, sp_items=items)
    assert env.sp_items is items
    pair = init_agent_pair(TINY.arch_spec(), 0)
    assert 0.0 <= env.val_accuracy(pair) <= 1.0
    assert 0.0 <= env.test_accuracy(pair) <= 1.0
    env.supervised_update(pair, RngStream.from_seed(8), False)
    env.selfplay_update(pair, RngStream.from_seed(9), False)


def test_environment_defaults_selfplay_pool_to_train():
    world = synth_world(TINY, 30, RngStream.from_seed(10))
    items = world.items
    env = IbrEnvironment(TINY, items[:10], items[10:20], items[20:30],
                         RngStream.from_seed(11), n_val_trials=8,
                         n_test_trials=8)
    assert env.sp_items == items[:10]
