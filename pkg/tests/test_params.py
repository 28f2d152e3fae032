import numpy as np
import pytest

from s2plab import autodiff as ad
from s2plab.params import (ParameterSet, collect_grads, load_checkpoint,
                           optimizer_step, save_checkpoint)
from s2plab.rng import RngStream


def make_params():
    ps = ParameterSet()
    ps.add_affine("layer", 3, 4, RngStream.from_seed(0))
    ps.add_embedding("emb", 5, 3, RngStream.from_seed(1))
    return ps


def test_duplicate_name_rejected():
    ps = make_params()
    with pytest.raises(ValueError):
        ps.add("layer.w", np.zeros((2, 2)))


def test_sgd_step_moves_against_gradient():
    ps = make_params()
    before = ps.arrays["layer.w"].copy()
    grads = {name: np.ones_like(a) for name, a in ps.arrays.items()}
    optimizer_step(ps, grads, 0.1, "sgd")
    assert np.allclose(ps.arrays["layer.w"], before - 0.1)


def test_adam_step_changes_parameters():
    ps = make_params()
    before = ps.arrays["layer.w"].copy()
    grads = {name: np.ones_like(a) for name, a in ps.arrays.items()}
    optimizer_step(ps, grads, 0.01, "adam")
    assert not np.array_equal(ps.arrays["layer.w"], before)


def test_frozen_arrays_are_skipped():
    ps = make_params()
    ps.set_frozen(True, "layer")
    before_w = ps.arrays["layer.w"].copy()
    before_e = ps.arrays["emb"].copy()
    grads = {name: np.ones_like(a) for name, a in ps.arrays.items()}
    optimizer_step(ps, grads, 0.1, "sgd")
    assert np.array_equal(ps.arrays["layer.w"], before_w)
    assert not np.array_equal(ps.arrays["emb"], before_e)


def test_collect_grads_after_backward():
    ps = make_params()
    leaves = ps.leaves()
    loss = ad.sum_all(ad.mul(leaves["layer.w"], leaves["layer.w"]))
    loss.backward()
    grads = collect_grads(leaves)
    assert np.allclose(grads["layer.w"], 2 * ps.arrays["layer.w"])


def test_checkpoint_round_trip_bitwise(tmp_path):
    ps = make_params()
    # advance the optimizer so its state is nontrivial
    grads = {name: np.ones_like(a) for name, a in ps.arrays.items()}
    optimizer_step(ps, grads, 0.01, "adam")
    path = tmp_path / "ckpt.json"
    save_checkpoint(path, ps, extra={"step": 17})
    loaded, extra = load_checkpoint(path)
    assert extra["step"] == 17
    for name, arr in ps.arrays.items():
        assert np.array_equal(loaded.arrays[name], arr)


def test_unknown_rule_rejected():
    ps = make_params()
    with pytest.raises(ValueError):
        grads = {name: np.zeros_like(a) for name, a in ps.arrays.items()}
        optimizer_step(ps, grads, 0.1, "rmsprop")
