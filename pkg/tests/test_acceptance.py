"""End-to-end acceptance suite.

Each test pins one headline behavior of the package at the configured desk
scale: exact small-sample identification of a compositional language,
gradient correctness, chance baselines, the four qualitative training-order
findings, schedule degeneracies, bitwise reruns, and the freeze contract.
The experiment-level tests run the real runners at their default configs, so
this file dominates the suite's runtime (tens of minutes).
"""
import time

import numpy as np

from s2plab import autodiff as ad
from s2plab.agents import init_agent_pair
from s2plab.experiments.config import resolve_config
from s2plab.experiments.manifest import load_manifest
from s2plab.experiments.runners import (rerun_from_manifest, run_perfect_emcomm,
                                        run_population, run_schedule_comparison,
                                        run_seed_sweep, run_simple_game)
from s2plab.language import (all_objects, build_dataset, consistent_language_count,
                             make_target_language, optimal_seed_construction,
                             speak)
from s2plab.or_game import (OrEnvironment, OrGameConfig, evaluate_accuracy,
                            listener_supervised_loss, selfplay_loss,
                            speaker_supervised_loss)
from s2plab.params import collect_grads
from s2plab.referential import (IbrConfig, evaluate_selection_accuracy,
                                lsn_supervised_loss, sample_trials,
                                spk_supervised_loss, synth_world)
from s2plab.rng import RngStream
from s2plab.schedules import ScheduleSpec, run_s2p


# -- 1: a compositional language is pinned by (t-1) + (p-1) samples -----------


def test_minimal_identifying_sample_set():
    start = time.time()
    lang = make_target_language(6, 10, 60, RngStream.from_seed(0).child("lang"))
    ds = optimal_seed_construction(lang)
    assert len(ds.pairs) == 14
    assert consistent_language_count(ds, 6, 10, 60) == 1
    assert time.time() - start < 10


# -- 2: gradient correctness --------------------------------------------------


def _gradcheck(params, loss_of, tol):
    leaves = params.leaves()
    loss_of(leaves).backward()
    grads = collect_grads(leaves)
    rng = np.random.default_rng(0)
    worst = 0.0
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
            rel = abs(grads[name].ravel()[j] - num) / max(abs(num), 1.0)
            worst = max(worst, rel)
    assert worst < tol


def test_primitive_gradients():
    start = time.time()
    rng = np.random.default_rng(1)
    x0 = rng.normal(size=(3, 4))
    W = rng.normal(size=(4, 4))
    ops = [
        lambda t: ad.sum_all(ad.tanh(ad.matmul(t, ad.constant(W)))),
        lambda t: ad.sum_all(ad.sigmoid(t)),
        lambda t: ad.sum_all(ad.mul(ad.softmax_rows(t), ad.constant(x0))),
        lambda t: ad.cross_entropy_rows(t, np.array([0, 2, 1])),
        lambda t: ad.sum_all(ad.recip(ad.add_scalar(ad.mul(t, t), 1.0))),
        lambda t: ad.mean_all(ad.concat_cols([t, ad.slice_cols(t, 0, 2)])),
    ]
    for op in ops:
        t = ad.leaf(x0.copy())
        out = op(t)
        (out if out.data.ndim == 0 else ad.sum_all(out)).backward()
        num = np.zeros_like(x0)
        for idx in np.ndindex(*x0.shape):
            xp = x0.copy(); xp[idx] += 1e-6
            xm = x0.copy(); xm[idx] -= 1e-6

            def val(x):
                o = op(ad.leaf(x))
                return float(o.data if o.data.ndim == 0 else o.data.sum())

            num[idx] = (val(xp) - val(xm)) / 2e-6
        assert np.abs(t.grad - num).max() / max(np.abs(num).max(), 1.0) < 1e-4
    assert time.time() - start < 60


def test_game_loss_gradients():
    start = time.time()
    config = OrGameConfig(p=2, t=3, vocab=6, msg_len=2, hidden=8)
    lang = make_target_language(2, 3, 6, RngStream.from_seed(0).child("lang"))
    objs = all_objects(2, 3)
    msgs = [speak(lang, o).tokens for o in objs]
    pair = init_agent_pair(config.arch_spec(), 0)
    _gradcheck(pair.listener.params,
               lambda lv: listener_supervised_loss(pair, lv, objs, msgs, config)[0],
               1e-3)
    _gradcheck(pair.speaker.params,
               lambda lv: speaker_supervised_loss(pair, lv, objs, msgs, config),
               1e-3)
    _gradcheck(pair.listener.params,
               lambda lv: selfplay_loss(pair, pair.speaker.params.leaves_const(),
                                        lv, objs, config, RngStream.from_seed(4))[0],
               1e-3)

    iconfig = IbrConfig(feat_dim=6, vocab=10, msg_len=3, distractors=2,
                        emb_size=6, rec_size=8, attr_p=2, attr_t=3)
    items = synth_world(iconfig, 20, RngStream.from_seed(1)).items
    trial = sample_trials(items, 4, iconfig, RngStream.from_seed(2))
    ipair = init_agent_pair(iconfig.arch_spec(), 0)
    _gradcheck(ipair.listener.params,
               lambda lv: lsn_supervised_loss(ipair, lv, trial, iconfig), 1e-3)
    _gradcheck(ipair.speaker.params,
               lambda lv: spk_supervised_loss(ipair, lv, items[:4], iconfig), 1e-3)
    assert time.time() - start < 60


# -- 3: chance baselines ------------------------------------------------------


def test_untrained_or_listener_at_chance():
    config = OrGameConfig(p=3, t=10, vocab=30, msg_len=3, hidden=32)
    lang = make_target_language(3, 10, 30, RngStream.from_seed(0).child("lang"))
    objs = all_objects(3, 10)               # 1000 objects
    accs = [evaluate_accuracy(init_agent_pair(config.arch_spec(), s),
                              lang, objs, config)[0] for s in range(5)]
    assert abs(np.mean(accs) - 0.1) < 0.03


def test_untrained_ibr_listener_at_chance():
    config = IbrConfig(feat_dim=12, vocab=20, msg_len=4, distractors=9,
                       emb_size=12, rec_size=16, attr_p=3, attr_t=5)
    items = synth_world(config, 300, RngStream.from_seed(3)).items
    accs = [evaluate_selection_accuracy(init_agent_pair(config.arch_spec(), s),
                                        items, 1000, config,
                                        RngStream.from_seed(50 + s))
            for s in range(5)]
    assert abs(np.mean(accs) - 0.1) < 0.03


# -- 4: supervision seeds self-play; self-play first resists relabeling -------


def test_simple_game_case_study(tmp_path):
    start = time.time()
    result = run_simple_game(resolve_config("simple-game"), tmp_path / "out")
    by_name = {name: (ok, detail) for name, ok, detail in result["assertions"]}
    assert by_name["sup_then_selfplay_extends"][0], by_name
    assert by_name["selfplay_then_sup_fails"][0], by_name
    assert time.time() - start < 300


# -- 5: supervised samples are most efficient spent in seed -------------------


def test_seed_placement_ordering(tmp_path):
    start = time.time()
    result = run_seed_sweep(resolve_config("seed-sweep"), tmp_path / "out")
    by_name = {name: (ok, detail) for name, ok, detail in result["assertions"]}
    assert by_name["all_in_seed_best"][0], by_name
    assert time.time() - start < 1800


# -- 6: distilling perfect-but-alien protocols costs more than Pop-S2P --------


def test_perfect_emcomm_needs_more_samples(tmp_path):
    start = time.time()
    result = run_perfect_emcomm(resolve_config("perfect-emcomm"), tmp_path / "out")
    by_name = {name: (ok, detail) for name, ok, detail in result["assertions"]}
    assert by_name["perfect_emcomm_needs_more"][0], by_name
    assert time.time() - start < 3600


# -- 7: schedule degeneracies are bitwise exact -------------------------------


def test_schedule_degeneracies_bitwise():
    start = time.time()
    config = OrGameConfig(p=2, t=3, vocab=6, msg_len=2, hidden=16)

    def final_arrays(kind, **kw):
        rng = RngStream.from_seed(0)
        lang = make_target_language(2, 3, 6, rng.child("lang"))
        ds = build_dataset(lang, 9, rng.child("data"), val_fraction=0.0)
        env = OrEnvironment(config, lang, ds, rng.child("env"),
                            all_objects(2, 3), learning_rate=0.01)
        pair = init_agent_pair(config.arch_spec(), 0)
        spec = ScheduleSpec(kind, max_steps=150, eval_interval=20, patience=2, **kw)
        result = run_s2p(pair, env, spec, RngStream.from_seed(7))
        out = {}
        for role in ("speaker", "listener"):
            for name, arr in getattr(result.final_pair, role).params.arrays.items():
                out[f"{role}.{name}"] = arr
        return out, [(r.step, r.kind) for r in result.log]

    base, base_log = final_arrays("sup")
    for variant, log in (final_arrays("rand", q=1.0),
                         final_arrays("sched", l=0, m=5)):
        assert log == base_log
        for name in base:
            assert np.array_equal(variant[name], base[name]), name
    assert time.time() - start < 60


# -- 8: zig-zag regularization in sched S2P -----------------------------------


def test_zigzag_regularization(tmp_path):
    start = time.time()
    result = run_schedule_comparison(resolve_config("schedules"), tmp_path / "out")
    by_name = {name: (ok, detail) for name, ok, detail in result["assertions"]}
    assert by_name["zigzag_majority"][0], by_name
    assert by_name["sup2sp_underperforms"][0], by_name
    assert time.time() - start < 1800


# -- 9: population aggregation ordering ---------------------------------------


def test_population_orderings(tmp_path):
    start = time.time()
    cfg = resolve_config("population")
    result = run_population(cfg, tmp_path / "out")
    for name, ok, detail in result["assertions"]:
        assert ok, (name, detail)
    assert time.time() - start < 3600


# -- 10: bitwise reruns from the manifest -------------------------------------


def test_rerun_reproduces_outputs_bitwise(tmp_path):
    fast = {"seeds": "0", "max_steps": "300", "sp_steps": "150",
            "patience": "3", "eval_interval": "10"}
    out1 = tmp_path / "first"
    run_simple_game(resolve_config("simple-game", fast), out1)
    manifest = load_manifest(out1)
    out2 = tmp_path / "second"
    rerun_from_manifest(manifest, out2)
    for name in manifest.outputs:
        assert (out2 / name).read_bytes() == (out1 / name).read_bytes(), name


def test_rerun_schedule_comparison_bitwise(tmp_path):
    fast = {"seeds": "0", "max_steps": "150", "patience": "2",
            "eval_interval": "25", "kinds": "sup,sched"}
    out1 = tmp_path / "first"
    run_schedule_comparison(resolve_config("schedules", fast), out1)
    manifest = load_manifest(out1)
    out2 = tmp_path / "second"
    rerun_from_manifest(manifest, out2)
    names = list(manifest.outputs) + ["traj_sup_seed0.csv", "traj_sched_seed0.csv"]
    for name in names:
        assert (out2 / name).read_bytes() == (out1 / name).read_bytes(), name


# -- 11: the freeze contract --------------------------------------------------


def test_frozen_speaker_bitwise_constant():
    config = OrGameConfig(p=2, t=3, vocab=6, msg_len=2, hidden=16)
    rng = RngStream.from_seed(0)
    lang = make_target_language(2, 3, 6, rng.child("lang"))
    ds = build_dataset(lang, 9, rng.child("data"), val_fraction=0.0)
    env = OrEnvironment(config, lang, ds, rng.child("env"), all_objects(2, 3),
                        learning_rate=0.01)
    pair = init_agent_pair(config.arch_spec(), 0)
    spec = ScheduleSpec("sched_frz", l=3, m=2, max_steps=200, eval_interval=10,
                        patience=2)
    result = run_s2p(pair, env, spec, RngStream.from_seed(5))
    boundary = [r for r in result.log if r.boundary == "pretrain_end"]
    assert boundary, "main phase never started"

    # supervised-only replay of the pretraining prefix gives the speaker
    # parameters the frozen run must still hold at the end
    env2 = OrEnvironment(config, lang,
                         build_dataset(lang, 9,
                                       RngStream.from_seed(0).child("data"),
                                       val_fraction=0.0),
                         RngStream.from_seed(0).child("env"), all_objects(2, 3),
                         learning_rate=0.01)
    pair2 = init_agent_pair(config.arch_spec(), 0)
    sup_spec = ScheduleSpec("sup", max_steps=boundary[0].step,
                            eval_interval=10, patience=10 ** 6)
    r2 = run_s2p(pair2, env2, sup_spec, RngStream.from_seed(5))
    for name, arr in result.final_pair.speaker.params.arrays.items():
        assert np.array_equal(arr, r2.final_pair.speaker.params.arrays[name]), name


def test_random_freeze_frequency():
    from s2plab.schedules import ScheduleState, next_step
    spec = ScheduleSpec("sched_rand_frz", l=1, m=1, r=0.5, max_steps=30000,
                        eval_interval=10 ** 9)
    state = ScheduleState(spec)
    state.val_tracker.converged = True
    rng = RngStream.from_seed(99)
    frozen = total = 0
    while total < 10000:
        step = next_step(spec, state, rng)
        state.step_count += 1
        total += 1
        frozen += int(step.speaker_frozen)
    assert abs(frozen / total - 0.5) < 0.02
