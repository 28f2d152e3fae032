"""Object-reconstruction signaling game: episodes, losses, and evaluation.

The speaker observes an object (p properties, t types) as concatenated
one-hots and emits a fixed-length message; the listener reconstructs the
object one property at a time under per-property cross-entropy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .agents import AgentPair, ArchitectureSpec
from .language import CompositionalLanguage, ObjectObservation, speak
from .rng import RngStream


@dataclass
class OrGameConfig:
    p: int = 6
    t: int = 10
    vocab: int = 60
    msg_len: int = 6
    hidden: int = 200
    temperature: float = 1.0
    variant: str = "nonlinear"
    # speaker entropy bonus during self-play; keeps rare words reachable so
    # coordination can escape partially-merged protocols (off by default)
    entropy_bonus: float = 0.0

    def __post_init__(self):
        if self.msg_len != self.p:
            raise ValueError("compositional play needs msg_len == p")

    def arch_spec(self) -> ArchitectureSpec:
        return ArchitectureSpec(game="or", variant=self.variant, p=self.p, t=self.t,
                                vocab=self.vocab, msg_len=self.msg_len, hidden=self.hidden)


def encode_objects(objs: list[ObjectObservation], config: OrGameConfig) -> np.ndarray:
    """(B, p*t) concatenated one-hots, ones at i*t + types[i]."""
    out = np.zeros((len(objs), config.p * config.t))
    for b, o in enumerate(objs):
        for i, k in enumerate(o.types):
            out[b, i * config.t + k] = 1.0
    return out


def decode_object(vec: np.ndarray, config: OrGameConfig) -> ObjectObservation:
    types = tuple(int(vec[i * config.t:(i + 1) * config.t].argmax()) for i in range(config.p))
    return ObjectObservation(types)


def encode_messages(token_rows: np.ndarray, config: OrGameConfig) -> np.ndarray:
    """(B, T) token ids -> (B, T*|V|) concatenated one-hots."""
    B, T = token_rows.shape
    out = np.zeros((B, T * config.vocab))
    for j in range(T):
        out[np.arange(B), j * config.vocab + token_rows[:, j]] = 1.0
    return out


@dataclass
class EpisodeResult:
    messages: np.ndarray            # (B, T) token ids actually sent
    logits: list[np.ndarray]        # p heads of (B, t)
    losses: np.ndarray              # (B, p) per-property losses
    correct: np.ndarray             # (B, p) bool


def listener_supervised_loss(pair: AgentPair, lsn_leaves, objs, messages,
                             config: OrGameConfig):
    """Per-property cross-entropy of the listener on expert (message, object) pairs."""
    msg_input = ad.constant(encode_messages(np.asarray(messages), config))
    heads = pair.listener.forward(lsn_leaves, msg_input)
    targets = np.array([o.types for o in objs])
    losses = [ad.cross_entropy_rows(h, targets[:, i]) for i, h in enumerate(heads)]
    total = losses[0]
    for piece in losses[1:]:
        total = ad.add(total, piece)
    return ad.scale(total, 1.0 / config.p), heads


def speaker_supervised_loss(pair: AgentPair, spk_leaves, objs, messages,
                            config: OrGameConfig):
    """Per-position cross-entropy of the speaker against expert utterances."""
    obs = encode_objects(objs, config)
    heads = pair.speaker.forward(spk_leaves, obs)
    msgs = np.asarray(messages)
    losses = [ad.cross_entropy_rows(h, msgs[:, j]) for j, h in enumerate(heads)]
    total = losses[0]
    for piece in losses[1:]:
        total = ad.add(total, piece)
    return ad.scale(total, 1.0 / config.msg_len)


def selfplay_loss(pair: AgentPair, spk_leaves, lsn_leaves, objs,
                  config: OrGameConfig, rng: RngStream):
    """Speaker emits straight-through one-hot tokens; listener reconstructs.

    When the pair's speaker is frozen the message is built without a gradient
    path, so no speaker gradient exists at all.
    """
    obs = encode_objects(objs, config)
    spk_heads = pair.speaker.forward(spk_leaves, obs)
    hard_toks = []
    neg_entropy = None
    for head in spk_heads:
        hard, _soft = ad.gumbel_softmax_st(head, config.temperature, rng)
        hard_toks.append(hard)
        if config.entropy_bonus > 0.0:
            plogp = ad.mul(ad.softmax_rows(head), ad.log_softmax_rows(head))
            neg_entropy = (plogp if neg_entropy is None
                           else ad.add(neg_entropy, plogp))
    msg_input = ad.concat_cols(hard_toks)
    heads = pair.listener.forward(lsn_leaves, msg_input)
    targets = np.array([o.types for o in objs])
    total = ad.cross_entropy_rows(heads[0], targets[:, 0])
    for i in range(1, config.p):
        total = ad.add(total, ad.cross_entropy_rows(heads[i], targets[:, i]))
    sent = np.stack([h.data.argmax(axis=1) for h in hard_toks], axis=1)
    loss = ad.scale(total, 1.0 / config.p)
    if neg_entropy is not None:
        loss = ad.add(loss, ad.scale(ad.sum_all(neg_entropy),
                                     config.entropy_bonus / (len(objs) * config.p)))
    return loss, sent


def play_episode(pair: AgentPair, objs: list[ObjectObservation], mode: str,
                 config: OrGameConfig, rng: RngStream | None = None,
                 language: CompositionalLanguage | None = None) -> EpisodeResult:
    """Play one batched episode without updating anyone.

    mode "selfplay": the pair's own speaker emits tokens (Gumbel draw).
    mode "expert_speaker": messages are the expert utterances of `language`.
    """
    if mode == "expert_speaker":
        if language is None:
            raise ValueError("expert_speaker mode needs a language")
        messages = np.array([speak(language, o).tokens for o in objs])
    elif mode == "selfplay":
        if rng is None:
            raise ValueError("selfplay mode needs an rng")
        obs = encode_objects(objs, config)
        heads = pair.speaker.forward(pair.speaker.params.leaves_const(), obs)
        toks = []
        for head in heads:
            hard, _ = ad.gumbel_softmax_st(head, config.temperature, rng)
            toks.append(hard.data.argmax(axis=1))
        messages = np.stack(toks, axis=1)
    else:
        raise ValueError(f"unknown mode {mode!r}")

    msg_input = ad.constant(encode_messages(messages, config))
    heads = pair.listener.forward(pair.listener.params.leaves_const(), msg_input)
    targets = np.array([o.types for o in objs])
    logits = [h.data for h in heads]
    losses = np.zeros((len(objs), config.p))
    correct = np.zeros((len(objs), config.p), dtype=bool)
    for i, lg in enumerate(logits):
        z = lg - lg.max(axis=1, keepdims=True)
        lse = np.log(np.exp(z).sum(axis=1))
        losses[:, i] = lse - z[np.arange(len(objs)), targets[:, i]]
        correct[:, i] = lg.argmax(axis=1) == targets[:, i]
    return EpisodeResult(messages, logits, losses, correct)


def evaluate_accuracy(pair: AgentPair, language: CompositionalLanguage,
                      test_objects: list[ObjectObservation],
                      config: OrGameConfig) -> tuple[float, float]:
    """(per-property accuracy, exact-match accuracy) hearing expert utterances."""
    if not test_objects:
        raise ValueError("empty test set")
    result = play_episode(pair, test_objects, "expert_speaker", config, language=language)
    per_property = float(result.correct.mean())
    exact = float(result.correct.all(axis=1).mean())
    return per_property, exact


def evaluate_selfplay_accuracy(pair: AgentPair, objs: list[ObjectObservation],
                               config: OrGameConfig, rng: RngStream) -> float:
    """Per-property accuracy when the pair's own speaker talks."""
    result = play_episode(pair, objs, "selfplay", config, rng=rng)
    return float(result.correct.mean())


def greedy_selfplay_accuracy(pair: AgentPair, objs: list[ObjectObservation],
                             config: OrGameConfig) -> float:
    """Deterministic self-play probe: argmax speech, per-property accuracy."""
    toks = pair.speaker.greedy(encode_objects(objs, config))
    preds = pair.listener.predict(encode_messages(toks, config))
    targets = np.array([o.types for o in objs])
    return float((preds == targets).mean())


class OrEnvironment:
    """Update/evaluation primitives for schedule-driven training on the OR game."""

    def __init__(self, config: OrGameConfig, language: CompositionalLanguage,
                 dataset, rng: RngStream, test_objects: list[ObjectObservation],
                 learning_rate: float = 1e-3, opt_rule: str = "adam",
                 sp_batch: int = 64, batch_size: int | None = None):
        from .language import TRAIN, VAL
        from .params import collect_grads, optimizer_step

        self._collect = collect_grads
        self._opt = optimizer_step
        self.config = config
        self.language = language
        self.lr = learning_rate
        self.rule = opt_rule
        self.sp_batch = sp_batch
        self.batch_size = batch_size
        train = dataset.subset(TRAIN)
        val = dataset.subset(VAL) or train
        self.train_objs = [o for o, _ in train]
        self.train_msgs = np.array([m.tokens for _, m in train])
        self.val_objs = [o for o, _ in val]
        self.test_objects = test_objects
        self.space = config.t ** config.p

    def _sp_objects(self, play_rng: RngStream) -> list[ObjectObservation]:
        n = min(self.sp_batch, self.space)
        flat = play_rng.integers(0, self.space, n)
        objs = []
        for v in flat:
            v = int(v)
            types = []
            for _ in range(self.config.p):
                types.append(v % self.config.t)
                v //= self.config.t
            objs.append(ObjectObservation(tuple(types)))
        return objs

    def supervised_update(self, pair: AgentPair, data_rng: RngStream,
                          speaker_frozen: bool) -> float:
        if not self.train_objs:
            raise ValueError("supervised step requested with empty train split")
        objs, msgs = self.train_objs, self.train_msgs
        if self.batch_size is not None and self.batch_size < len(objs):
            idx = data_rng.integers(0, len(objs), self.batch_size)
            objs = [objs[i] for i in idx]
            msgs = msgs[idx]
        frozen = speaker_frozen or pair.speaker_frozen
        spk_leaves = pair.speaker.params.leaves()
        lsn_leaves = pair.listener.params.leaves()
        lsn_loss, _ = listener_supervised_loss(pair, lsn_leaves, objs, msgs, self.config)
        spk_loss = speaker_supervised_loss(pair, spk_leaves, objs, msgs, self.config)
        total = ad.add(lsn_loss, spk_loss)
        total.backward()
        self._opt(pair.listener.params, self._collect(lsn_leaves), self.lr, self.rule)
        if not frozen:
            self._opt(pair.speaker.params, self._collect(spk_leaves), self.lr, self.rule)
        return float(total.data)

    def selfplay_update(self, pair: AgentPair, play_rng: RngStream,
                        speaker_frozen: bool) -> float:
        objs = self._sp_objects(play_rng)
        frozen = speaker_frozen or pair.speaker_frozen
        spk_leaves = (pair.speaker.params.leaves_const() if frozen
                      else pair.speaker.params.leaves())
        lsn_leaves = pair.listener.params.leaves()
        loss, _ = selfplay_loss(pair, spk_leaves, lsn_leaves, objs, self.config, play_rng)
        loss.backward()
        self._opt(pair.listener.params, self._collect(lsn_leaves), self.lr, self.rule)
        if not frozen:
            self._opt(pair.speaker.params, self._collect(spk_leaves), self.lr, self.rule)
        return float(loss.data)

    def val_accuracy(self, pair: AgentPair) -> float:
        return evaluate_accuracy(pair, self.language, self.val_objs, self.config)[0]

    def selfplay_metric(self, pair: AgentPair) -> float:
        return greedy_selfplay_accuracy(pair, self.val_objs, self.config)

    def test_accuracy(self, pair: AgentPair) -> float:
        return evaluate_accuracy(pair, self.language, self.test_objects, self.config)[0]

    # -- cross-play support ---------------------------------------------------

    def make_shared_eval(self, n_episodes: int, rng: RngStream):
        return self._sp_objects_n(n_episodes, rng)

    def _sp_objects_n(self, n: int, rng: RngStream) -> list[ObjectObservation]:
        saved = self.sp_batch
        self.sp_batch = n
        try:
            return self._sp_objects(rng)
        finally:
            self.sp_batch = saved

    def mixed_accuracy(self, speaker_pair: AgentPair, listener_pair: AgentPair,
                       shared: list[ObjectObservation]) -> float:
        toks = speaker_pair.speaker.greedy(encode_objects(shared, self.config))
        preds = listener_pair.listener.predict(encode_messages(toks, self.config))
        targets = np.array([o.types for o in shared])
        return float((preds == targets).mean())
