"""Compositional languages, expert datasets, and seed-set analysis.

An object has p properties of t types each. A compositional language assigns
every (property, type) pair a globally unique word, and speaks an object as
the p per-property words arranged by a fixed property-order permutation.
Because words are globally unique, parsing ignores token order.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rng import RngStream


@dataclass(frozen=True)
class ObjectObservation:
    types: tuple[int, ...]  # length p, each in [0, t)


@dataclass(frozen=True)
class Message:
    tokens: tuple[int, ...]


@dataclass
class CompositionalLanguage:
    """Bijective (property, type) -> word mapping plus a property-order permutation."""

    p: int
    t: int
    vocab: int
    word_of: dict[tuple[int, int], int]
    property_order: tuple[int, ...]
    pair_of: dict[int, tuple[int, int]] = field(init=False)

    def __post_init__(self):
        if len(self.word_of) != self.p * self.t:
            raise ValueError("word_of must cover all (property, type) pairs")
        words = list(self.word_of.values())
        if len(set(words)) != len(words):
            raise ValueError("word assignment must be injective")
        if any(not 0 <= w < self.vocab for w in words):
            raise ValueError("word id outside vocabulary")
        if sorted(self.property_order) != list(range(self.p)):
            raise ValueError("property_order must be a permutation of [0, p)")
        self.pair_of = {w: pt for pt, w in self.word_of.items()}


def make_target_language(p: int, t: int, vocab: int, rng: RngStream) -> CompositionalLanguage:
    """Draw the expert language: a random injection of (property, type) pairs into the vocabulary."""
    if vocab < p * t:
        raise ValueError(f"vocabulary {vocab} too small for {p * t} (property, type) pairs")
    words = rng.permutation(vocab)[: p * t]
    word_of = {(i, k): int(words[i * t + k]) for i in range(p) for k in range(t)}
    return CompositionalLanguage(p, t, vocab, word_of, tuple(rng.permutation(p).tolist()))


def sample_compositional_language(p: int, t: int, vocab: int, rng: RngStream) -> CompositionalLanguage:
    """Uniform draw from the distribution of compositional languages.

    A sample is a uniformly random bijection of the p*t pairs onto the
    vocabulary together with a uniform property-order permutation; requires
    vocab == p*t so the word assignment is a bijection.
    """
    if vocab != p * t:
        raise ValueError("compositional-language distribution requires vocab == p*t")
    return make_target_language(p, t, vocab, rng)


def identity_language(p: int, t: int, vocab: int | None = None) -> CompositionalLanguage:
    """word_of(i, k) = i*t + k with identity property order; handy for tests."""
    vocab = p * t if vocab is None else vocab
    word_of = {(i, k): i * t + k for i in range(p) for k in range(t)}
    return CompositionalLanguage(p, t, vocab, word_of, tuple(range(p)))


def speak(language: CompositionalLanguage, obj: ObjectObservation) -> Message:
    """Utterance of an object: per-property words in property_order."""
    order = language.property_order
    return Message(tuple(language.word_of[(i, obj.types[i])] for i in order))


def parse(language: CompositionalLanguage, message: Message) -> ObjectObservation:
    """Recover the unique object whose utterance matches the message."""
    types = [None] * language.p
    for tok in message.tokens:
        if tok not in language.pair_of:
            raise ValueError(f"word {tok} is not in the language")
        prop, typ = language.pair_of[tok]
        if types[prop] is not None:
            raise ValueError(f"two words claim property {prop}")
        types[prop] = typ
    if any(v is None for v in types):
        raise ValueError("message does not mention every property")
    return ObjectObservation(tuple(types))


# -- datasets ----------------------------------------------------------------

TRAIN, VAL = "train", "val"


@dataclass
class Dataset:
    pairs: list[tuple[ObjectObservation, Message]]
    splits: list[str]  # parallel to pairs

    def subset(self, split: str) -> list[tuple[ObjectObservation, Message]]:
        return [pair for pair, s in zip(self.pairs, self.splits) if s == split]

    def __len__(self):
        return len(self.pairs)


def all_objects(p: int, t: int) -> list[ObjectObservation]:
    return [ObjectObservation(types) for types in itertools.product(range(t), repeat=p)]


def sample_objects(p: int, t: int, n: int, rng: RngStream) -> list[ObjectObservation]:
    """n distinct objects drawn without replacement from the t^p input space."""
    space = t ** p
    if n > space:
        raise ValueError(f"requested {n} objects but only {space} exist")
    if space <= 200_000:
        idx = rng.permutation(space)[:n]
    else:
        chosen: set[int] = set()
        while len(chosen) < n:
            chosen.update(int(v) for v in rng.integers(0, space, n))
        idx = np.fromiter(chosen, dtype=np.int64)[:n]
    objs = []
    for flat in idx:
        types = []
        v = int(flat)
        for _ in range(p):
            types.append(v % t)
            v //= t
        objs.append(ObjectObservation(tuple(types)))
    return objs


def _n_val(n: int, val_fraction: float) -> int:
    """At least one validation sample whenever a fraction was asked for."""
    if val_fraction <= 0.0 or n <= 1:
        return 0
    return max(1, int(round(val_fraction * n)))


def build_dataset(language: CompositionalLanguage, n: int, rng: RngStream,
                  val_fraction: float = 0.1) -> Dataset:
    """n distinct objects paired with their expert utterances, split train/val."""
    objs = sample_objects(language.p, language.t, n, rng)
    pairs = [(o, speak(language, o)) for o in objs]
    n_val = _n_val(n, val_fraction)
    splits = [VAL] * n_val + [TRAIN] * (n - n_val)
    return Dataset(pairs, splits)


def dataset_from_objects(language: CompositionalLanguage,
                         objs: list[ObjectObservation],
                         val_fraction: float = 0.1) -> Dataset:
    pairs = [(o, speak(language, o)) for o in objs]
    n = len(pairs)
    n_val = _n_val(n, val_fraction)
    splits = [VAL] * n_val + [TRAIN] * (n - n_val)
    return Dataset(pairs, splits)


# -- optimal seed construction (hand-designed minimal sample set) -------------


def optimal_seed_construction(language: CompositionalLanguage) -> Dataset:
    """A hand-designed sample set identifying the language in (t-1) + (p-1) pairs.

    Stage 1: t-1 objects, object k repeating type k in every property, so the
    utterance of object k lists type k's p words (the group for type k); the
    last group follows by exclusion. Stage 2: p-1 objects with all-distinct
    types where property s carries the held-out last type; each such sample
    both anchors the property order and pins one word of the last group, whose
    final word again follows by exclusion. Requires t > p so stage-2 objects
    can use p distinct types including t-1.
    """
    p, t = language.p, language.t
    if t <= p:
        raise ValueError("construction requires t > p")
    objs = [ObjectObservation((k,) * p) for k in range(t - 1)]
    for s in range(p - 1):
        types = list(range(p))
        types[s] = t - 1
        objs.append(ObjectObservation(tuple(types)))
    return dataset_from_objects(language, objs, val_fraction=0.0)


def consistent_language_count(dataset: Dataset, p: int, t: int, vocab: int,
                              cap: int = 1_000_000) -> int:
    """Number of compositional languages whose utterances exactly reproduce the dataset.

    A language here is the pair (word assignment, property order);
    consistency is token-for-token equality of speak(language, object) with
    the recorded message. Exact enumeration when p*t and vocab are at most 9;
    otherwise an exact positional propagation per candidate property order,
    which requires vocab == p*t. Counting stops at `cap`.
    """
    pairs = list(dataset.pairs)
    if p * t <= 9 and vocab <= 9:
        count = 0
        slots = [(i, k) for i in range(p) for k in range(t)]
        for words in itertools.permutations(range(vocab), p * t):
            word_of = dict(zip(slots, words))
            for order in itertools.permutations(range(p)):
                lang = CompositionalLanguage(p, t, vocab, word_of, order)
                if all(speak(lang, o) == m for o, m in pairs):
                    count += 1
                    if count >= cap:
                        return count
        return count

    if vocab != p * t:
        raise ValueError("propagated count requires vocab == p*t")
    count = 0
    for order in itertools.permutations(range(p)):
        # under this property order, position j of a message pins the cell
        # (order[j], object.types[order[j]]) to that token
        assigned: dict[tuple[int, int], int] = {}
        used: dict[int, tuple[int, int]] = {}
        ok = True
        for obj, msg in pairs:
            for j, tok in enumerate(msg.tokens):
                cell = (order[j], obj.types[order[j]])
                if assigned.get(cell, tok) != tok or used.get(tok, cell) != cell:
                    ok = False
                    break
                assigned[cell] = tok
                used[tok] = cell
            if not ok:
                break
        if ok:
            count += min(cap, math.factorial(p * t - len(assigned)))
            if count >= cap:
                return cap
    return count


# -- file formats ------------------------------------------------------------


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    lines = []
    for (obj, msg), split in zip(dataset.pairs, dataset.splits):
        lines.append("\t".join([" ".join(map(str, obj.types)),
                                " ".join(map(str, msg.tokens)), split]))
    Path(path).write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    pairs, splits = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        types_s, tokens_s, split = line.split("\t")
        pairs.append((ObjectObservation(tuple(int(v) for v in types_s.split())),
                      Message(tuple(int(v) for v in tokens_s.split()))))
        splits.append(split)
    return Dataset(pairs, splits)


def save_language(path: str | Path, language: CompositionalLanguage) -> None:
    lines = [f"{i} {k} {w}" for (i, k), w in sorted(language.word_of.items())]
    lines.append("order " + " ".join(map(str, language.property_order)))
    lines.append(f"dims {language.p} {language.t} {language.vocab}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_language(path: str | Path) -> CompositionalLanguage:
    word_of = {}
    order = None
    dims = None
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts[0] == "order":
            order = tuple(int(v) for v in parts[1:])
        elif parts[0] == "dims":
            dims = tuple(int(v) for v in parts[1:])
        else:
            i, k, w = (int(v) for v in parts)
            word_of[(i, k)] = w
    p, t, vocab = dims
    return CompositionalLanguage(p, t, vocab, word_of, order)
