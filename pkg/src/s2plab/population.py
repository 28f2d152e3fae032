"""Populations of seed-randomized pairs: cross-play, diversity, distillation,
and majority-vote ensembling into a single student."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .agents import AgentPair, ArchitectureSpec, init_agent_pair
from .language import CompositionalLanguage, ObjectObservation, parse, speak, Message
from .or_game import OrGameConfig, encode_messages, encode_objects
from .params import collect_grads, optimizer_step
from .referential import (IbrConfig, ReferentialTrial, WorldItem,
                          lsn_supervised_loss, reciprocal_mse_logits,
                          sample_trials)
from .rng import RngStream
from .schedules import RunResult, ScheduleSpec, run_s2p


@dataclass
class PopulationSpec:
    n: int = 50
    seeds: list[int] = field(default_factory=list)
    aggregation: str = "distill"     # "distill" | "ensemble"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("population size must be >= 1")
        if not self.seeds:
            self.seeds = list(range(self.n))
        if len(self.seeds) != self.n or len(set(self.seeds)) != self.n:
            raise ValueError("need exactly n distinct seeds")
        if self.aggregation not in ("distill", "ensemble"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")


def train_population(pop: PopulationSpec, arch: ArchitectureSpec, env,
                     schedule: ScheduleSpec) -> list[RunResult]:
    """N independent schedule runs on identical data, differing only in seed."""
    results = []
    for seed in pop.seeds:
        pair = init_agent_pair(arch, seed)
        rng = RngStream.from_seed(seed).child("s2p")
        results.append(run_s2p(pair, env, schedule, rng))
    return results


# -- cross-play ---------------------------------------------------------------


@dataclass
class CrossPlayMatrix:
    values: np.ndarray     # (N, N); entry (i, j) = speaker i with listener j
    agent_ids: list[int]

    def diagonal_mean(self) -> float:
        return float(np.diag(self.values).mean())

    def offdiagonal_mean(self) -> float:
        n = self.values.shape[0]
        mask = ~np.eye(n, dtype=bool)
        return float(self.values[mask].mean())

    def write_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("speaker," + ",".join(f"listener_{j}" for j in self.agent_ids) + "\n")
            for i, row in zip(self.agent_ids, self.values):
                fh.write(f"{i}," + ",".join(repr(float(v)) for v in row) + "\n")


def crossplay_matrix(pairs: list[AgentPair], env, n_episodes: int,
                     rng: RngStream, agent_ids: list[int] | None = None) -> CrossPlayMatrix:
    """Mean accuracy of every speaker/listener pairing on shared episodes."""
    if n_episodes < 1:
        raise ValueError("need at least one episode per cell")
    shared = env.make_shared_eval(n_episodes, rng)
    n = len(pairs)
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            values[i, j] = env.mixed_accuracy(pairs[i], pairs[j], shared)
    return CrossPlayMatrix(values, agent_ids or list(range(n)))


# -- prediction diversity -----------------------------------------------------


def prediction_diversity(agents: list, inputs: list, predict) -> list[Counter]:
    """Per-input histogram of each agent's (greedy) prediction.

    `predict(agent, inputs)` returns one hashable label per input.
    """
    if not inputs:
        raise ValueError("inputs must be nonempty")
    all_preds = [predict(agent, inputs) for agent in agents]
    return [Counter(preds[k] for preds in all_preds) for k in range(len(inputs))]


def diversity_csv(path, histograms: list[Counter]) -> None:
    with open(path, "w") as fh:
        fh.write("input_id,label,count\n")
        for k, hist in enumerate(histograms):
            for label, count in sorted(hist.items(), key=lambda kv: str(kv[0])):
                fh.write(f"{k},{label},{count}\n")


# -- teachers -----------------------------------------------------------------


class OrPairTeacher:
    """A trained pair acting as a distillation teacher in the OR game."""

    def __init__(self, pair: AgentPair, config: OrGameConfig):
        self.pair = pair
        self.config = config

    def speak_tokens(self, objs: list[ObjectObservation]) -> np.ndarray:
        return self.pair.speaker.greedy(encode_objects(objs, self.config))

    def listener_proba(self, token_rows: np.ndarray) -> np.ndarray:
        return self.pair.listener.predict_proba(encode_messages(token_rows, self.config))

    def speaker_proba(self, objs: list[ObjectObservation]) -> np.ndarray:
        heads = self.pair.speaker.forward(self.pair.speaker.params.leaves_const(),
                                          encode_objects(objs, self.config))
        return np.stack([ad.softmax_rows(h).data for h in heads], axis=1)


class OrExpertTeacher:
    """A programmatic expert speaking (and parsing) one compositional language."""

    def __init__(self, language: CompositionalLanguage, config: OrGameConfig):
        self.language = language
        self.config = config

    def speak_tokens(self, objs: list[ObjectObservation]) -> np.ndarray:
        return np.array([speak(self.language, o).tokens for o in objs])

    def listener_proba(self, token_rows: np.ndarray) -> np.ndarray:
        cfg = self.config
        out = np.full((token_rows.shape[0], cfg.p, cfg.t), 1.0 / cfg.t)
        for b, row in enumerate(token_rows):
            try:
                obj = parse(self.language, Message(tuple(int(v) for v in row)))
            except ValueError:
                continue
            out[b] = 0.0
            for i, k in enumerate(obj.types):
                out[b, i, k] = 1.0
        return out

    def speaker_proba(self, objs: list[ObjectObservation]) -> np.ndarray:
        cfg = self.config
        toks = self.speak_tokens(objs)
        out = np.zeros((len(objs), cfg.msg_len, cfg.vocab))
        for b, row in enumerate(toks):
            for j, w in enumerate(row):
                out[b, j, w] = 1.0
        return out


# -- distillation -------------------------------------------------------------


def _soft_target_loss(logits, targets: np.ndarray):
    """Mean over rows of cross-entropy against a full target distribution."""
    logsm = ad.log_softmax_rows(logits)
    return ad.scale(ad.sum_all(ad.mul(logsm, ad.constant(targets))),
                    -1.0 / logits.data.shape[0])


def distill_or(teachers: list, student: AgentPair, objects: list[ObjectObservation],
               config: OrGameConfig, steps: int, rng: RngStream,
               learning_rate: float = 1e-3, opt_rule: str = "adam",
               batch: int = 64, train_speaker: bool = True) -> AgentPair:
    """Train the student against averaged teacher outputs on unlabeled objects.

    Each step draws a batch of objects and one teacher's utterances for them;
    the student listener matches the population-mean reconstruction
    distribution on those utterances, and (optionally) the student speaker
    matches the population-mean token distributions.
    """
    if not teachers:
        raise ValueError("empty teacher population")
    for step in range(steps):
        idx = rng.integers(0, len(objects), min(batch, len(objects)))
        objs = [objects[i] for i in idx]
        teacher = teachers[step % len(teachers)]
        toks = teacher.speak_tokens(objs)
        lsn_targets = np.mean([t.listener_proba(toks) for t in teachers], axis=0)
        lsn_leaves = student.listener.params.leaves()
        heads = student.listener.forward(lsn_leaves,
                                         ad.constant(encode_messages(toks, config)))
        loss = _soft_target_loss(heads[0], lsn_targets[:, 0])
        for i in range(1, config.p):
            loss = ad.add(loss, _soft_target_loss(heads[i], lsn_targets[:, i]))
        loss.backward()
        optimizer_step(student.listener.params, collect_grads(lsn_leaves),
                       learning_rate, opt_rule)
        if train_speaker:
            spk_targets = np.mean([t.speaker_proba(objs) for t in teachers], axis=0)
            spk_leaves = student.speaker.params.leaves()
            spk_heads = student.speaker.forward(spk_leaves, encode_objects(objs, config))
            sloss = _soft_target_loss(spk_heads[0], spk_targets[:, 0])
            for j in range(1, config.msg_len):
                sloss = ad.add(sloss, _soft_target_loss(spk_heads[j], spk_targets[:, j]))
            sloss.backward()
            optimizer_step(student.speaker.params, collect_grads(spk_leaves),
                           learning_rate, opt_rule)
    return student


def _ibr_listener_logits(pair: AgentPair, leaves, tokens: np.ndarray,
                         trial: ReferentialTrial, config: IbrConfig):
    message_repr = pair.listener.encode_tokens(leaves, tokens)
    cand_reprs = [pair.listener.encode_features(leaves, trial.candidates[:, d, :])
                  for d in range(config.distractors + 1)]
    return reciprocal_mse_logits(message_repr, cand_reprs, config.mse_epsilon)


def distill_ibr(teachers: list[AgentPair], student: AgentPair,
                world_items: list[WorldItem], config: IbrConfig, steps: int,
                rng: RngStream, learning_rate: float = 1e-3,
                opt_rule: str = "adam", batch: int = 32,
                labeled_items: list[WorldItem] | None = None,
                labeled_every: int = 2) -> AgentPair:
    """Listener distillation on fresh trials: student matches the population's
    mean candidate distribution for each teacher's greedy message.

    When ``labeled_items`` is given, every ``labeled_every``-th step is instead
    a supervised step on those items' ground-truth captions, so the student
    also learns the caption distribution it will be evaluated on rather than
    only the teachers' (possibly drifted) protocols."""
    if not teachers:
        raise ValueError("empty teacher population")
    for step in range(steps):
        leaves = student.listener.params.leaves()
        if labeled_items is not None and step % labeled_every == labeled_every - 1:
            trial = sample_trials(labeled_items, batch, config, rng)
            loss = lsn_supervised_loss(student, leaves, trial, config)
        else:
            trial = sample_trials(world_items, batch, config, rng)
            teacher = teachers[step % len(teachers)]
            feats = np.stack([it.features for it in trial.target_items])
            tokens = teacher.speaker.greedy(feats)
            target_dists = []
            for t in teachers:
                logits = _ibr_listener_logits(t, t.listener.params.leaves_const(),
                                              tokens, trial, config)
                target_dists.append(ad.softmax_rows(logits).data)
            targets = np.mean(target_dists, axis=0)
            logits = _ibr_listener_logits(student, leaves, tokens, trial, config)
            loss = _soft_target_loss(logits, targets)
        loss.backward()
        optimizer_step(student.listener.params, collect_grads(leaves),
                       learning_rate, opt_rule)
    return student


# -- ensembling ---------------------------------------------------------------


def majority_vote(votes: np.ndarray) -> np.ndarray:
    """(n_agents, B) integer labels -> (B,) modal label, ties to lowest label."""
    n_agents, B = votes.shape
    out = np.zeros(B, dtype=np.int64)
    for b in range(B):
        out[b] = Counter(sorted(votes[:, b])).most_common(1)[0][0]
    return out


def or_ensemble_predict(pairs: list[AgentPair], msg_onehot: np.ndarray,
                        config: OrGameConfig) -> np.ndarray:
    """Majority reconstruction per property across listeners; (B, p)."""
    if not pairs:
        raise ValueError("empty ensemble")
    preds = np.stack([p.listener.predict(msg_onehot) for p in pairs])  # (N, B, p)
    return np.stack([majority_vote(preds[:, :, i]) for i in range(config.p)], axis=1)


def ibr_ensemble_select(pairs: list[AgentPair], tokens: np.ndarray,
                        trial: ReferentialTrial, config: IbrConfig) -> np.ndarray:
    """Majority candidate choice across listeners hearing the same tokens."""
    if not pairs:
        raise ValueError("empty ensemble")
    votes = np.stack([
        _ibr_listener_logits(p, p.listener.params.leaves_const(), tokens, trial,
                             config).data.argmax(axis=1)
        for p in pairs])
    return majority_vote(votes)
