"""Corpus ingestion, label codes, splitting, batching, and class balancing.

CSV input uses the two-column `url,type` schema (quoted fields allowed,
URLs may contain commas).  Exports add a third `provenance` column so
that augmented and synthetic records written by the balancing steps can
never leak into evaluation.  All randomized operations are pure
functions of their seed arguments.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .encoder import canonicalize
from .errors import (
    BadHeaderError,
    EmptyClassError,
    EmptyUrlError,
    TooFewSamplesError,
    UnknownLabelError,
)

CLASS_NAMES = ("benign", "defacement", "malware", "phishing")
NUM_CLASSES = len(CLASS_NAMES)
PROVENANCES = ("original", "augmented", "synthetic")

_LABEL_IDS = {name: i for i, name in enumerate(CLASS_NAMES)}


def encode_label(type_string: str) -> int:
    """Map a label string to its class id, case-insensitively."""
    key = type_string.strip().lower()
    if key not in _LABEL_IDS:
        raise UnknownLabelError(f"unknown label {type_string!r}")
    return _LABEL_IDS[key]


def decode_label(class_id: int) -> str:
    """Map a class id back to its canonical lowercase name."""
    if not 0 <= class_id < NUM_CLASSES:
        raise UnknownLabelError(f"class id {class_id} out of range")
    return CLASS_NAMES[class_id]


@dataclass
class Record:
    url: str
    label: int
    provenance: str = "original"


@dataclass
class Corpus:
    """Labeled URL records plus the count of rows skipped at ingestion."""

    records: list[Record] = field(default_factory=list)
    skipped: int = 0

    def __len__(self) -> int:
        return len(self.records)

    @property
    def class_counts(self) -> tuple[int, int, int, int]:
        counts = [0] * NUM_CLASSES
        for rec in self.records:
            counts[rec.label] += 1
        return tuple(counts)

    def labels(self) -> np.ndarray:
        return np.array([rec.label for rec in self.records], dtype=np.int64)

    def validate(self) -> None:
        for rec in self.records:
            if not 0 <= rec.label < NUM_CLASSES:
                raise UnknownLabelError(f"record label {rec.label} out of range")
            if rec.provenance not in PROVENANCES:
                raise ValueError(f"bad provenance {rec.provenance!r}")


@dataclass
class DatasetSplit:
    """Disjoint train/test index lists over one corpus."""

    train_indices: np.ndarray
    test_indices: np.ndarray
    seed: int


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def load_csv(path) -> Corpus:
    """Read a `url,type[,provenance]` CSV; malformed rows are tallied.

    A row is skipped (not fatal) when its field count is wrong, its label
    is unknown, its provenance value is unrecognized, or its URL is empty
    after trimming.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise BadHeaderError("empty file; expected a url,type header") from None
        if header not in (["url", "type"], ["url", "type", "provenance"]):
            raise BadHeaderError(f"expected url,type header, got {header}")
        want = len(header)
        records: list[Record] = []
        skipped = 0
        for row in reader:
            if len(row) != want:
                skipped += 1
                continue
            provenance = row[2].strip().lower() if want == 3 else "original"
            try:
                canonicalize(row[0])
                label = encode_label(row[1])
            except (EmptyUrlError, UnknownLabelError):
                skipped += 1
                continue
            if provenance not in PROVENANCES:
                skipped += 1
                continue
            records.append(Record(row[0], label, provenance))
    return Corpus(records, skipped=skipped)


def save_csv(path, corpus: Corpus) -> None:
    """Write `url,type,provenance` rows; loadable by :func:`load_csv`."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("url", "type", "provenance"))
        for rec in corpus.records:
            writer.writerow((rec.url, decode_label(rec.label), rec.provenance))


def subset(corpus: Corpus, indices) -> Corpus:
    return Corpus([corpus.records[int(i)] for i in indices])


def split(
    corpus: Corpus,
    ratio: float = 0.8,
    seed: int = 42,
    stratified: bool = False,
) -> DatasetSplit:
    """Deterministic train/test partition; |train| = round(ratio * N).

    The default shuffles the whole corpus; stratified mode preserves each
    class's share within one record (largest-remainder apportionment).
    Rounding is half-up in both cases.
    """
    n = len(corpus.records)
    if n < 2:
        raise TooFewSamplesError(f"need at least 2 records to split, got {n}")
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    n_train = _round_half_up(ratio * n)
    rng = np.random.default_rng(seed)
    if not stratified:
        order = rng.permutation(n)
        train = np.sort(order[:n_train])
        test = np.sort(order[n_train:])
        return DatasetSplit(train.astype(np.int64), test.astype(np.int64), seed)

    by_class = [
        np.flatnonzero(corpus.labels() == c) for c in range(NUM_CLASSES)
    ]
    quotas = [ratio * len(members) for members in by_class]
    base = [int(math.floor(q)) for q in quotas]
    remainder = n_train - sum(base)
    order = sorted(
        range(NUM_CLASSES), key=lambda c: (-(quotas[c] - base[c]), c)
    )
    for c in order[: max(0, remainder)]:
        base[c] += 1
    train_parts, test_parts = [], []
    for c, members in enumerate(by_class):
        perm = rng.permutation(len(members))
        take = min(base[c], len(members))
        train_parts.append(members[perm[:take]])
        test_parts.append(members[perm[take:]])
    train = np.sort(np.concatenate(train_parts))
    test = np.sort(np.concatenate(test_parts))
    return DatasetSplit(train.astype(np.int64), test.astype(np.int64), seed)


def batches(
    indices,
    batch_size: int = 32,
    seed: int = 0,
    epoch: int = 0,
) -> list[np.ndarray]:
    """Shuffled index chunks; the reshuffle is keyed by (seed, epoch).

    The final partial batch is retained.
    """
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    indices = np.asarray(indices, dtype=np.int64)
    rng = np.random.default_rng([seed, epoch])
    shuffled = indices[rng.permutation(indices.size)]
    return [
        shuffled[start : start + batch_size]
        for start in range(0, shuffled.size, batch_size)
    ]


def _swap_characters(url: str, rng: np.random.Generator) -> str:
    """1-3 random adjacent transpositions; single-char URLs pass through."""
    chars = list(url)
    if len(chars) >= 2:
        for _ in range(int(rng.integers(1, 4))):
            j = int(rng.integers(0, len(chars) - 1))
            chars[j], chars[j + 1] = chars[j + 1], chars[j]
    return "".join(chars)


def augment_minority(
    corpus: Corpus,
    class_id: int,
    fraction: float = 0.2,
    seed: int = 0,
) -> Corpus:
    """Grow one class by round(fraction * count) swap-perturbed duplicates.

    Each new record copies a uniformly drawn class member with 1-3
    adjacent-character swaps and carries provenance "augmented".  Apply
    to the training partition only.
    """
    members = [rec for rec in corpus.records if rec.label == class_id]
    if not members:
        raise EmptyClassError(f"class {class_id} has no records to augment")
    n_new = _round_half_up(fraction * len(members))
    rng = np.random.default_rng(seed)
    added = []
    for _ in range(n_new):
        source = members[int(rng.integers(0, len(members)))]
        added.append(
            Record(_swap_characters(source.url, rng), class_id, "augmented")
        )
    return Corpus(list(corpus.records) + added, skipped=corpus.skipped)


def oversample(
    corpus: Corpus,
    target_classes: tuple[int, ...] = (2, 3),
    seed: int = 0,
    target_count: int | None = None,
) -> Corpus:
    """Grow target classes to a common count via single-cut URL crossover.

    Each synthetic record takes a prefix of one same-class URL and the
    suffix of another, cut at a shared random position - a discrete
    stand-in for vector interpolation, since interpolated one-hot graphs
    would not be valid URLs.  The default target is the largest class
    count outside the majority class.  Apply to the training partition
    only.
    """
    counts = corpus.class_counts
    if target_count is None:
        majority = int(np.argmax(counts))
        others = [counts[c] for c in range(NUM_CLASSES) if c != majority]
        target_count = max(others) if others else 0
    rng = np.random.default_rng(seed)
    added = []
    for cls in sorted(target_classes):
        pool = [rec for rec in corpus.records if rec.label == cls]
        need = target_count - len(pool)
        if need <= 0:
            continue
        if len(pool) < 2:
            raise TooFewSamplesError(
                f"class {cls} needs at least 2 records to oversample, has {len(pool)}"
            )
        for _ in range(need):
            i, j = rng.choice(len(pool), size=2, replace=False)
            a, b = pool[int(i)].url, pool[int(j)].url
            shorter = min(len(a), len(b))
            cut = 1 if shorter <= 1 else int(rng.integers(1, shorter))
            added.append(Record(a[:cut] + b[cut:], cls, "synthetic"))
    return Corpus(list(corpus.records) + added, skipped=corpus.skipped)


def balance(
    corpus: Corpus,
    augment_class: int = 2,
    fraction: float = 0.2,
    target_classes: tuple[int, ...] = (2, 3),
    seed: int = 0,
) -> Corpus:
    """Augment the rarest class, then oversample the target classes.

    The oversampling target is computed after augmentation.  Meant for
    the training partition only.
    """
    grown = augment_minority(corpus, augment_class, fraction, seed)
    return oversample(grown, target_classes, seed)
