"""Agent architectures: the linear-game speaker/listener pair and the
recurrent referential-game pair, plus init, freezing, and checkpointing.

Forward passes are written against a dict of name -> Tensor so the same code
serves training (gradient leaves) and evaluation (constant tensors).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .params import ParameterSet, load_checkpoint, save_checkpoint
from .rng import RngStream


@dataclass
class ArchitectureSpec:
    game: str                      # "or" | "ibr"
    variant: str = "nonlinear"     # "linear" | "nonlinear" | "bilinear"
    # OR dimensions
    p: int = 6
    t: int = 10
    vocab: int = 60
    msg_len: int = 6
    hidden: int = 200
    # IBR dimensions
    feat_dim: int = 2048
    emb_size: int = 256
    rec_size: int = 512
    dropout: float = 0.0

    def __post_init__(self):
        if self.variant == "bilinear":
            raise NotImplementedError("bilinear architecture variant is not implemented")
        if self.variant not in ("linear", "nonlinear"):
            raise ValueError(f"unknown architecture variant {self.variant!r}")

    @property
    def pad_id(self) -> int:
        return self.vocab

    @property
    def start_id(self) -> int:
        return self.vocab + 1


def _mlp(leaves: dict[str, Tensor], prefix: str, x: Tensor, variant: str) -> Tensor:
    h = ad.affine(x, leaves[f"{prefix}.l1.w"], leaves[f"{prefix}.l1.b"])
    if variant == "nonlinear":
        h = ad.tanh(h)
    return ad.affine(h, leaves[f"{prefix}.l2.w"], leaves[f"{prefix}.l2.b"])


class OrSpeaker:
    """Object one-hots -> two-layer net -> one logit head per message position."""

    def __init__(self, spec: ArchitectureSpec, rng: RngStream):
        self.spec = spec
        self.params = ParameterSet()
        self.params.add_affine("spk.l1", spec.p * spec.t, spec.hidden, rng)
        self.params.add_affine("spk.l2", spec.hidden, spec.msg_len * spec.vocab, rng)

    def forward(self, leaves: dict[str, Tensor], obs_onehot: np.ndarray) -> list[Tensor]:
        out = _mlp(leaves, "spk", ad.constant(obs_onehot), self.spec.variant)
        v = self.spec.vocab
        return [ad.slice_cols(out, j * v, (j + 1) * v) for j in range(self.spec.msg_len)]

    def greedy(self, obs_onehot: np.ndarray) -> np.ndarray:
        """(B, p*t) -> token ids (B, T)."""
        heads = self.forward(self.params.leaves_const(), obs_onehot)
        return np.stack([h.data.argmax(axis=1) for h in heads], axis=1)


class OrListener:
    """Concatenated message one-hots -> two-layer net -> one logit head per property."""

    def __init__(self, spec: ArchitectureSpec, rng: RngStream):
        self.spec = spec
        self.params = ParameterSet()
        self.params.add_affine("lsn.l1", spec.msg_len * spec.vocab, spec.hidden, rng)
        self.params.add_affine("lsn.l2", spec.hidden, spec.p * spec.t, rng)

    def forward(self, leaves: dict[str, Tensor], msg_input: Tensor) -> list[Tensor]:
        out = _mlp(leaves, "lsn", msg_input, self.spec.variant)
        t = self.spec.t
        return [ad.slice_cols(out, i * t, (i + 1) * t) for i in range(self.spec.p)]

    def predict(self, msg_onehot: np.ndarray) -> np.ndarray:
        """(B, T*|V|) -> predicted types (B, p)."""
        heads = self.forward(self.params.leaves_const(), ad.constant(msg_onehot))
        return np.stack([h.data.argmax(axis=1) for h in heads], axis=1)

    def predict_proba(self, msg_onehot: np.ndarray) -> np.ndarray:
        """(B, T*|V|) -> per-property distributions (B, p, t)."""
        heads = self.forward(self.params.leaves_const(), ad.constant(msg_onehot))
        return np.stack([ad.softmax_rows(h).data for h in heads], axis=1)


class IbrSpeaker:
    """Feature vector conditions the initial state of a GRU token decoder."""

    def __init__(self, spec: ArchitectureSpec, rng: RngStream):
        self.spec = spec
        self.params = ParameterSet()
        p = self.params
        p.add_embedding("spk.emb", spec.vocab + 2, spec.emb_size, rng)
        p.add_affine("spk.init", spec.feat_dim, spec.rec_size, rng)
        for gate in ("z", "r", "h"):
            p.add_affine(f"spk.gru.wx{gate}", spec.emb_size, spec.rec_size, rng)
            p.add_affine(f"spk.gru.wh{gate}", spec.rec_size, spec.rec_size, rng)
        p.add_affine("spk.out", spec.rec_size, spec.vocab, rng)

    def _gru_weights(self, leaves) -> dict[str, Tensor]:
        return {"wxz": leaves["spk.gru.wxz.w"], "whz": leaves["spk.gru.whz.w"],
                "bz": leaves["spk.gru.whz.b"],
                "wxr": leaves["spk.gru.wxr.w"], "whr": leaves["spk.gru.whr.w"],
                "br": leaves["spk.gru.whr.b"],
                "wxh": leaves["spk.gru.wxh.w"], "whh": leaves["spk.gru.whh.w"],
                "bh": leaves["spk.gru.whh.b"]}

    def init_state(self, leaves, feats: np.ndarray) -> Tensor:
        return ad.tanh(ad.affine(ad.constant(feats), leaves["spk.init.w"], leaves["spk.init.b"]))

    def step_logits(self, leaves, h: Tensor) -> Tensor:
        return ad.affine(h, leaves["spk.out.w"], leaves["spk.out.b"])

    def teacher_forced_logits(self, leaves, feats: np.ndarray,
                              captions: np.ndarray) -> list[Tensor]:
        """Logit head per position, conditioned on the ground-truth prefix.

        captions: (B, T) token ids, pad beyond caption end.
        """
        B, T = captions.shape
        w = self._gru_weights(leaves)
        h = self.init_state(leaves, feats)
        logits = []
        prev = np.full(B, self.spec.start_id)
        for j in range(T):
            x = ad.embedding(leaves["spk.emb"], prev)
            h = ad.gru_step(h, x, w)
            logits.append(self.step_logits(leaves, h))
            prev = captions[:, j]
        return logits

    def decode_gumbel(self, leaves, feats: np.ndarray, temperature: float,
                      rng: RngStream | None, noise: list[np.ndarray] | None = None
                      ) -> tuple[list[Tensor], list[Tensor]]:
        """Emit msg_len straight-through one-hot tokens; returns (hard, soft) lists."""
        B = feats.shape[0]
        w = self._gru_weights(leaves)
        h = self.init_state(leaves, feats)
        hard_toks, soft_toks = [], []
        prev_emb = ad.embedding(leaves["spk.emb"], np.full(B, self.spec.start_id))
        word_emb = leaves["spk.emb"]
        for j in range(self.spec.msg_len):
            h = ad.gru_step(h, prev_emb, w)
            logits = self.step_logits(leaves, h)
            hard, soft = ad.gumbel_softmax_st(
                logits, temperature, rng, noise=None if noise is None else noise[j])
            hard_toks.append(hard)
            soft_toks.append(soft)
            # next input: hard one-hot times the word rows of the embedding
            prev_emb = ad.matmul(hard, _word_rows(word_emb, self.spec.vocab))
        return hard_toks, soft_toks

    def greedy(self, feats: np.ndarray) -> np.ndarray:
        """(B, feat_dim) -> token ids (B, msg_len), argmax decoding."""
        leaves = self.params.leaves_const()
        B = feats.shape[0]
        w = self._gru_weights(leaves)
        h = self.init_state(leaves, feats)
        prev = np.full(B, self.spec.start_id)
        toks = []
        for _ in range(self.spec.msg_len):
            x = ad.embedding(leaves["spk.emb"], prev)
            h = ad.gru_step(h, x, w)
            prev = self.step_logits(leaves, h).data.argmax(axis=1)
            toks.append(prev)
        return np.stack(toks, axis=1)


def _word_rows(emb: Tensor, vocab: int) -> Tensor:
    """First `vocab` rows of the embedding table (drop pad/start rows)."""
    out = emb.data[:vocab]

    def bw(g):
        full = np.zeros_like(emb.data)
        full[:vocab] = g
        return (full,)

    return Tensor(out, (emb,), bw)


class IbrListener:
    """Message encoder (embedding + GRU) and candidate feature encoder."""

    def __init__(self, spec: ArchitectureSpec, rng: RngStream):
        self.spec = spec
        self.params = ParameterSet()
        p = self.params
        p.add_embedding("lsn.emb", spec.vocab + 2, spec.emb_size, rng)
        for gate in ("z", "r", "h"):
            p.add_affine(f"lsn.gru.wx{gate}", spec.emb_size, spec.rec_size, rng)
            p.add_affine(f"lsn.gru.wh{gate}", spec.rec_size, spec.rec_size, rng)
        p.add_affine("lsn.feat", spec.feat_dim, spec.rec_size, rng)

    def _gru_weights(self, leaves) -> dict[str, Tensor]:
        return {"wxz": leaves["lsn.gru.wxz.w"], "whz": leaves["lsn.gru.whz.w"],
                "bz": leaves["lsn.gru.whz.b"],
                "wxr": leaves["lsn.gru.wxr.w"], "whr": leaves["lsn.gru.whr.w"],
                "br": leaves["lsn.gru.whr.b"],
                "wxh": leaves["lsn.gru.wxh.w"], "whh": leaves["lsn.gru.whh.w"],
                "bh": leaves["lsn.gru.whh.b"]}

    def encode_tokens(self, leaves, tokens: np.ndarray) -> Tensor:
        """(B, T) token ids -> final recurrent state (B, rec_size)."""
        B, T = tokens.shape
        w = self._gru_weights(leaves)
        h = ad.constant(np.zeros((B, self.spec.rec_size)))
        for j in range(T):
            x = ad.embedding(leaves["lsn.emb"], tokens[:, j])
            h = ad.gru_step(h, x, w)
        return h

    def encode_onehots(self, leaves, onehot_toks: list[Tensor]) -> Tensor:
        """List of (B, |V|) one-hot tensors -> final recurrent state."""
        B = onehot_toks[0].data.shape[0]
        w = self._gru_weights(leaves)
        h = ad.constant(np.zeros((B, self.spec.rec_size)))
        word_emb = _word_rows(leaves["lsn.emb"], self.spec.vocab)
        for tok in onehot_toks:
            h = ad.gru_step(h, ad.matmul(tok, word_emb), w)
        return h

    def encode_features(self, leaves, feats: np.ndarray) -> Tensor:
        return ad.affine(ad.constant(feats), leaves["lsn.feat.w"], leaves["lsn.feat.b"])


@dataclass
class AgentPair:
    speaker: OrSpeaker | IbrSpeaker
    listener: OrListener | IbrListener
    spec: ArchitectureSpec
    seed: int
    speaker_frozen: bool = False

    def copy(self) -> "AgentPair":
        pair = AgentPair.__new__(AgentPair)
        pair.spec = self.spec
        pair.seed = self.seed
        pair.speaker_frozen = self.speaker_frozen
        pair.speaker = self.speaker.__class__.__new__(self.speaker.__class__)
        pair.speaker.spec = self.spec
        pair.speaker.params = self.speaker.params.copy()
        pair.listener = self.listener.__class__.__new__(self.listener.__class__)
        pair.listener.spec = self.spec
        pair.listener.params = self.listener.params.copy()
        return pair


def init_agent_pair(spec: ArchitectureSpec, seed: int) -> AgentPair:
    rng = RngStream.from_seed(seed).child("init")
    if spec.game == "or":
        speaker = OrSpeaker(spec, rng.child("speaker"))
        listener = OrListener(spec, rng.child("listener"))
    elif spec.game == "ibr":
        speaker = IbrSpeaker(spec, rng.child("speaker"))
        listener = IbrListener(spec, rng.child("listener"))
    else:
        raise ValueError(f"unknown game {spec.game!r}")
    return AgentPair(speaker, listener, spec, seed)


def set_speaker_frozen(pair: AgentPair, frozen: bool) -> AgentPair:
    pair.speaker_frozen = frozen
    pair.speaker.params.set_frozen(frozen)
    return pair


def save_agent_pair(path, pair: AgentPair) -> None:
    merged = ParameterSet()
    for name, arr in pair.speaker.params.arrays.items():
        merged.add(name, arr)
        merged.frozen[name] = pair.speaker.params.frozen[name]
        merged.opt_state[name] = pair.speaker.params.opt_state[name]
    for name, arr in pair.listener.params.arrays.items():
        merged.add(name, arr)
        merged.frozen[name] = pair.listener.params.frozen[name]
        merged.opt_state[name] = pair.listener.params.opt_state[name]
    extra = {"seed": pair.seed, "speaker_frozen": pair.speaker_frozen,
             "spec": vars(pair.spec)}
    save_checkpoint(path, merged, extra)


def load_agent_pair(path) -> AgentPair:
    merged, extra = load_checkpoint(path)
    spec = ArchitectureSpec(**extra["spec"])
    pair = init_agent_pair(spec, extra["seed"])
    for agent in (pair.speaker, pair.listener):
        for name in agent.params.arrays:
            agent.params.arrays[name][:] = merged.arrays[name]
            agent.params.frozen[name] = merged.frozen[name]
            agent.params.opt_state[name] = merged.opt_state[name]
    pair.speaker_frozen = extra["speaker_frozen"]
    return pair
