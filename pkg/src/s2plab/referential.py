"""Feature-vector referential game: pick the target among distractors.

The listener encodes the message with an embedding+GRU encoder and each
candidate's feature vector with an affine map; selection logits are the
reciprocal of the mean squared error between the two representations.
A synthetic attribute world stands in for caption data; externally
pre-extracted features can be ingested from a simple text format.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .agents import AgentPair, ArchitectureSpec
from .autodiff import Tensor
from .language import (CompositionalLanguage, Message, ObjectObservation,
                       make_target_language, sample_objects, speak)
from .rng import RngStream


@dataclass
class IbrConfig:
    feat_dim: int = 2048
    vocab: int = 100
    msg_len: int = 15           # maximum message length, pad-filled
    distractors: int = 9
    emb_size: int = 256
    rec_size: int = 512
    temperature: float = 1.0
    mse_epsilon: float = 1e-6
    # synthetic world attribute space
    attr_p: int = 3
    attr_t: int = 8
    feat_noise: float = 0.1

    def __post_init__(self):
        if self.distractors < 1:
            raise ValueError("need at least one distractor")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")

    @property
    def pad_id(self) -> int:
        return self.vocab

    def arch_spec(self) -> ArchitectureSpec:
        return ArchitectureSpec(game="ibr", feat_dim=self.feat_dim, vocab=self.vocab,
                                msg_len=self.msg_len, emb_size=self.emb_size,
                                rec_size=self.rec_size)


@dataclass
class WorldItem:
    features: np.ndarray
    caption: Message                      # unpadded ground-truth tokens
    attributes: ObjectObservation | None = None


@dataclass
class ReferentialTrial:
    target: np.ndarray        # (B,) target index in [0, D]
    candidates: np.ndarray    # (B, D+1, feat_dim)
    target_items: list[WorldItem]


def pad_captions(items: list[WorldItem], config: IbrConfig) -> np.ndarray:
    """(B, msg_len) token ids, pad-filled past each caption's end."""
    out = np.full((len(items), config.msg_len), config.pad_id, dtype=np.int64)
    for b, item in enumerate(items):
        toks = item.caption.tokens[: config.msg_len]
        out[b, : len(toks)] = toks
    return out


def reciprocal_mse_logits(message_repr: Tensor, candidate_reprs: list[Tensor],
                          epsilon: float) -> Tensor:
    """(B, D+1) logits; slot d gets 1 / (MSE(message, candidate_d) + epsilon)."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    cols = []
    for cand in candidate_reprs:
        if cand.data.shape != message_repr.data.shape:
            raise ValueError("representation shapes differ")
        diff = ad.sub(message_repr, cand)
        cols.append(ad.recip(ad.add_scalar(ad.mean_cols(ad.mul(diff, diff)), epsilon)))
    return ad.concat_cols(cols)


def _selection_loss(pair: AgentPair, lsn_leaves, message_repr: Tensor,
                    trial: ReferentialTrial, config: IbrConfig) -> Tensor:
    cand_reprs = [pair.listener.encode_features(lsn_leaves, trial.candidates[:, d, :])
                  for d in range(config.distractors + 1)]
    logits = reciprocal_mse_logits(message_repr, cand_reprs, config.mse_epsilon)
    return ad.cross_entropy_rows(logits, trial.target)


def lsn_supervised_loss(pair: AgentPair, lsn_leaves, trial: ReferentialTrial,
                        config: IbrConfig) -> Tensor:
    """Cross-entropy against the target, hearing the ground-truth caption."""
    captions = pad_captions(trial.target_items, config)
    message_repr = pair.listener.encode_tokens(lsn_leaves, captions)
    return _selection_loss(pair, lsn_leaves, message_repr, trial, config)


def spk_supervised_loss(pair: AgentPair, spk_leaves, items: list[WorldItem],
                        config: IbrConfig) -> Tensor:
    """Teacher-forced token cross-entropy, summed over non-pad positions."""
    for item in items:
        if not item.caption.tokens:
            raise ValueError("caption must be nonempty")
    captions = pad_captions(items, config)
    feats = np.stack([it.features for it in items])
    logit_heads = pair.speaker.teacher_forced_logits(spk_leaves, feats, captions)
    total = None
    for j, head in enumerate(logit_heads):
        mask = (captions[:, j] != config.pad_id).astype(float)[:, None]
        if not mask.any():
            continue
        targets = np.where(captions[:, j] == config.pad_id, 0, captions[:, j])
        picked = ad.pick_cols(ad.log_softmax_rows(head), targets)
        piece = ad.scale(ad.sum_all(ad.mul(picked, ad.constant(mask))),
                         -1.0 / len(items))
        total = piece if total is None else ad.add(total, piece)
    return total


def self_play_loss(pair: AgentPair, spk_leaves, lsn_leaves, trial: ReferentialTrial,
                   config: IbrConfig, rng: RngStream) -> tuple[Tensor, np.ndarray]:
    """Speaker describes the target with straight-through tokens; listener selects.

    With the speaker frozen the message is emitted without a gradient path.
    """
    feats = np.stack([it.features for it in trial.target_items])
    hard_toks, _soft = pair.speaker.decode_gumbel(spk_leaves, feats,
                                                  config.temperature, rng)
    message_repr = pair.listener.encode_onehots(lsn_leaves, hard_toks)
    loss = _selection_loss(pair, lsn_leaves, message_repr, trial, config)
    sent = np.stack([h.data.argmax(axis=1) for h in hard_toks], axis=1)
    return loss, sent


# -- synthetic world ----------------------------------------------------------


@dataclass
class SynthWorld:
    items: list[WorldItem]
    language: CompositionalLanguage
    embed: np.ndarray      # (attr_p * attr_t, feat_dim) fixed linear embedding


def synth_world(config: IbrConfig, n_items: int, rng: RngStream,
                language: CompositionalLanguage | None = None,
                embed: np.ndarray | None = None) -> SynthWorld:
    """Items with latent attribute tuples, noisy linear features, and
    captions spoken in a fixed compositional language over the game vocabulary."""
    if n_items < config.distractors + 1:
        raise ValueError("world smaller than one trial")
    p, t = config.attr_p, config.attr_t
    if config.vocab < p * t:
        raise ValueError("vocabulary too small for the attribute space")
    if language is None:
        language = make_target_language(p, t, config.vocab, rng.child("language"))
    if embed is None:
        embed = rng.child("embed").normal(0.0, 1.0, (p * t, config.feat_dim))
    objs = sample_objects(p, t, min(n_items, t ** p), rng.child("attrs"))
    # reuse attributes with replacement if the space is smaller than the world
    if len(objs) < n_items:
        idx = rng.child("attrs-extra").integers(0, len(objs), n_items - len(objs))
        objs = objs + [objs[i] for i in idx]
    noise_rng = rng.child("noise")
    items = []
    for o in objs:
        onehot = np.zeros(p * t)
        for i, k in enumerate(o.types):
            onehot[i * t + k] = 1.0
        feats = onehot @ embed + noise_rng.normal(0.0, config.feat_noise, config.feat_dim)
        items.append(WorldItem(feats, speak(language, o), o))
    return SynthWorld(items, language, embed)


def sample_trials(items: list[WorldItem], batch: int, config: IbrConfig,
                  rng: RngStream) -> ReferentialTrial:
    """Targets uniform over items; distractors uniform over the other items."""
    n = len(items)
    if n < config.distractors + 1:
        raise ValueError("not enough items for the distractor count")
    D = config.distractors
    target_idx = rng.integers(0, n, batch)
    target_slot = rng.integers(0, D + 1, batch)
    candidates = np.zeros((batch, D + 1, config.feat_dim))
    for b in range(batch):
        others = [i for i in rng.permutation(n)[: D + 1] if i != target_idx[b]][:D]
        row = list(others)
        row.insert(int(target_slot[b]), int(target_idx[b]))
        for d, i in enumerate(row):
            candidates[b, d, :] = items[i].features
    return ReferentialTrial(np.asarray(target_slot, dtype=np.int64), candidates,
                            [items[i] for i in target_idx])


def select_with_caption(pair: AgentPair, trial: ReferentialTrial,
                        config: IbrConfig) -> np.ndarray:
    """Listener's argmax candidate hearing the ground-truth captions; (B,)."""
    leaves = pair.listener.params.leaves_const()
    captions = pad_captions(trial.target_items, config)
    message_repr = pair.listener.encode_tokens(leaves, captions)
    cand_reprs = [pair.listener.encode_features(leaves, trial.candidates[:, d, :])
                  for d in range(config.distractors + 1)]
    logits = reciprocal_mse_logits(message_repr, cand_reprs, config.mse_epsilon)
    return logits.data.argmax(axis=1)


def evaluate_selection_accuracy(pair: AgentPair, items: list[WorldItem],
                                n_trials: int, config: IbrConfig,
                                rng: RngStream) -> float:
    """Fraction of trials where the ground-truth caption ranks the target first."""
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    correct = 0
    done = 0
    while done < n_trials:
        batch = min(256, n_trials - done)
        trial = sample_trials(items, batch, config, rng)
        chosen = select_with_caption(pair, trial, config)
        correct += int((chosen == trial.target).sum())
        done += batch
    return correct / n_trials


def evaluate_selfplay_accuracy(pair: AgentPair, items: list[WorldItem],
                               n_trials: int, config: IbrConfig,
                               rng: RngStream) -> float:
    """Selection accuracy when the pair's own speaker (greedy) describes targets."""
    correct = 0
    done = 0
    lsn_leaves = pair.listener.params.leaves_const()
    while done < n_trials:
        batch = min(256, n_trials - done)
        trial = sample_trials(items, batch, config, rng)
        feats = np.stack([it.features for it in trial.target_items])
        tokens = pair.speaker.greedy(feats)
        message_repr = pair.listener.encode_tokens(lsn_leaves, tokens)
        cand_reprs = [pair.listener.encode_features(lsn_leaves, trial.candidates[:, d, :])
                      for d in range(config.distractors + 1)]
        logits = reciprocal_mse_logits(message_repr, cand_reprs, config.mse_epsilon)
        correct += int((logits.data.argmax(axis=1) == trial.target).sum())
        done += batch
    return correct / n_trials


# -- ingestion of pre-extracted features --------------------------------------

FILE_PAD_ID = 0
FILE_UNK_ID = 1


def load_world_file(path: str | Path, config: IbrConfig,
                    max_unknown_fraction: float = 0.3) -> list[WorldItem]:
    """One item per line: id <tab> features <tab> caption token ids.

    Captions with more than `max_unknown_fraction` unknown tokens (id 1) are
    dropped; trailing pad tokens (id 0) are stripped and captions truncated
    to the configured maximum length.
    """
    items = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        _item_id, feats_s, toks_s = line.split("\t")
        feats = np.array([float(v) for v in feats_s.split()])
        if feats.shape[0] != config.feat_dim:
            raise ValueError(f"feature dim {feats.shape[0]} != {config.feat_dim}")
        toks = [int(v) for v in toks_s.split()]
        while toks and toks[-1] == FILE_PAD_ID:
            toks.pop()
        if not toks:
            continue
        if sum(1 for v in toks if v == FILE_UNK_ID) / len(toks) > max_unknown_fraction:
            continue
        items.append(WorldItem(feats, Message(tuple(toks[: config.msg_len]))))
    return items


def load_vocab_file(path: str | Path) -> dict[int, str]:
    """Sidecar vocabulary: one "id <tab> string" per line."""
    vocab = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        idx, word = line.split("\t")
        vocab[int(idx)] = word
    return vocab


class IbrEnvironment:
    """Update/evaluation primitives for schedule-driven referential training."""

    def __init__(self, config: IbrConfig, train_items: list[WorldItem],
                 val_items: list[WorldItem], test_items: list[WorldItem],
                 rng: RngStream, learning_rate: float = 1e-3,
                 opt_rule: str = "adam", batch: int = 32,
                 n_val_trials: int = 128, n_test_trials: int = 256,
                 sp_items: list[WorldItem] | None = None):
        from .params import collect_grads, optimizer_step

        self._collect = collect_grads
        self._opt = optimizer_step
        self.config = config
        self.lr = learning_rate
        self.rule = opt_rule
        self.batch = batch
        self.train_items = train_items
        # self-play may roam over uncaptioned items beyond the supervised set
        self.sp_items = sp_items if sp_items is not None else train_items
        # frozen evaluation trials keep the tracker signals deterministic
        self.val_trials = sample_trials(val_items, n_val_trials, config,
                                        rng.child("val-trials"))
        self.test_trials = sample_trials(test_items, n_test_trials, config,
                                         rng.child("test-trials"))

    def supervised_update(self, pair: AgentPair, data_rng: RngStream,
                          speaker_frozen: bool) -> float:
        if not self.train_items:
            raise ValueError("supervised step requested with empty train split")
        trial = sample_trials(self.train_items, self.batch, self.config, data_rng)
        frozen = speaker_frozen or pair.speaker_frozen
        spk_leaves = pair.speaker.params.leaves()
        lsn_leaves = pair.listener.params.leaves()
        lsn_loss = lsn_supervised_loss(pair, lsn_leaves, trial, self.config)
        spk_loss = spk_supervised_loss(pair, spk_leaves, trial.target_items, self.config)
        total = ad.add(lsn_loss, spk_loss)
        total.backward()
        self._opt(pair.listener.params, self._collect(lsn_leaves), self.lr, self.rule)
        if not frozen:
            self._opt(pair.speaker.params, self._collect(spk_leaves), self.lr, self.rule)
        return float(total.data)

    def selfplay_update(self, pair: AgentPair, play_rng: RngStream,
                        speaker_frozen: bool) -> float:
        trial = sample_trials(self.sp_items, self.batch, self.config, play_rng)
        frozen = speaker_frozen or pair.speaker_frozen
        spk_leaves = (pair.speaker.params.leaves_const() if frozen
                      else pair.speaker.params.leaves())
        lsn_leaves = pair.listener.params.leaves()
        loss, _ = self_play_loss(pair, spk_leaves, lsn_leaves, trial, self.config, play_rng)
        loss.backward()
        self._opt(pair.listener.params, self._collect(lsn_leaves), self.lr, self.rule)
        if not frozen:
            self._opt(pair.speaker.params, self._collect(spk_leaves), self.lr, self.rule)
        return float(loss.data)

    def _caption_accuracy(self, pair: AgentPair, trial: ReferentialTrial) -> float:
        chosen = select_with_caption(pair, trial, self.config)
        return float((chosen == trial.target).mean())

    def val_accuracy(self, pair: AgentPair) -> float:
        return self._caption_accuracy(pair, self.val_trials)

    def selfplay_metric(self, pair: AgentPair) -> float:
        trial = self.val_trials
        lsn_leaves = pair.listener.params.leaves_const()
        feats = np.stack([it.features for it in trial.target_items])
        tokens = pair.speaker.greedy(feats)
        message_repr = pair.listener.encode_tokens(lsn_leaves, tokens)
        cand_reprs = [pair.listener.encode_features(lsn_leaves, trial.candidates[:, d, :])
                      for d in range(self.config.distractors + 1)]
        logits = reciprocal_mse_logits(message_repr, cand_reprs, self.config.mse_epsilon)
        return float((logits.data.argmax(axis=1) == trial.target).mean())

    def test_accuracy(self, pair: AgentPair) -> float:
        return self._caption_accuracy(pair, self.test_trials)

    # -- cross-play support ---------------------------------------------------

    def make_shared_eval(self, n_episodes: int, rng: RngStream) -> ReferentialTrial:
        return sample_trials(self.sp_items, n_episodes, self.config, rng)

    def mixed_accuracy(self, speaker_pair: AgentPair, listener_pair: AgentPair,
                       shared: ReferentialTrial) -> float:
        feats = np.stack([it.features for it in shared.target_items])
        tokens = speaker_pair.speaker.greedy(feats)
        lsn_leaves = listener_pair.listener.params.leaves_const()
        message_repr = listener_pair.listener.encode_tokens(lsn_leaves, tokens)
        cand_reprs = [listener_pair.listener.encode_features(lsn_leaves,
                                                             shared.candidates[:, d, :])
                      for d in range(self.config.distractors + 1)]
        logits = reciprocal_mse_logits(message_repr, cand_reprs, self.config.mse_epsilon)
        return float((logits.data.argmax(axis=1) == shared.target).mean())
