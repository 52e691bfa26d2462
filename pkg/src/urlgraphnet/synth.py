"""Deterministic synthetic URL corpus for tests and offline training runs.

Each class imitates the surface patterns of its real-world counterpart:
plain word domains for benign, CMS-style query strings for defacement,
numeric hosts with binary download paths for malware, and brand-spoofing
hyphenated hosts on disposable TLDs for phishing.  The class mix mirrors
the large public malicious-URL corpus (65.7% / 14.8% / 5.0% / 14.4%),
and generation is a pure function of (size, seed).
"""

from __future__ import annotations

import numpy as np

from .data import NUM_CLASSES, Corpus, Record

CLASS_WEIGHTS = (
    428103 / 651191,
    96457 / 651191,
    32577 / 651191,
    94054 / 651191,
)

_WORDS = (
    "news", "shop", "blog", "home", "page", "info", "data", "photo", "music",
    "travel", "sport", "game", "forum", "wiki", "mail", "cloud", "store",
    "media", "book", "food", "health", "tech", "auto", "city", "world",
    "green", "smart", "fast", "open", "best", "daily", "local", "first",
    "house", "garden", "school", "office", "market", "center", "online",
)

_BENIGN_TLDS = (".com", ".org", ".net", ".edu", ".gov", ".io", ".co.uk")
_DEFACE_TLDS = (".com", ".org", ".net", ".de", ".it", ".com.br")
_MALWARE_TLDS = (".ru", ".cn", ".biz", ".top", ".ws")
_PHISH_TLDS = (".tk", ".ml", ".ga", ".cf", ".gq", ".info", ".xyz")
_BRANDS = (
    "paypal", "apple", "amazon", "microsoft", "netflix", "chase", "ebay",
    "dropbox", "whatsapp", "instagram",
)
_BINARY_EXTS = (".exe", ".bin", ".dll", ".scr", ".zip")


def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(0, len(options)))]


def _digits(rng: np.random.Generator, low: int, high: int) -> str:
    return "".join(
        str(int(rng.integers(0, 10))) for _ in range(int(rng.integers(low, high + 1)))
    )


def _hexstr(rng: np.random.Generator, low: int, high: int) -> str:
    return "".join(
        "0123456789abcdef"[int(rng.integers(0, 16))]
        for _ in range(int(rng.integers(low, high + 1)))
    )


def _benign(rng: np.random.Generator) -> str:
    host = _pick(rng, ("www.", "www.", ""))
    host += _pick(rng, _WORDS)
    if rng.random() < 0.5:
        host += _pick(rng, _WORDS)
    host += _pick(rng, _BENIGN_TLDS)
    url = host
    for _ in range(int(rng.integers(0, 3))):
        url += "/" + _pick(rng, _WORDS)
    if rng.random() < 0.3:
        url += _pick(rng, ("/", ".html", ".htm"))
    return url


def _defacement(rng: np.random.Generator) -> str:
    host = _pick(rng, _WORDS) + _pick(rng, _WORDS) + _pick(rng, _DEFACE_TLDS)
    style = rng.random()
    if style < 0.45:
        path = (
            "/index.php?option=com_" + _pick(rng, _WORDS)
            + "&task=" + _pick(rng, _WORDS)
            + "&id=" + _digits(rng, 1, 4)
        )
    elif style < 0.75:
        path = "/modules.php?name=" + _pick(rng, _WORDS) + "&file=" + _pick(rng, _WORDS)
    else:
        path = "/?page_id=" + _digits(rng, 1, 4) + "&lang=" + _pick(rng, ("en", "fr", "de", "it"))
    return host + path


def _malware(rng: np.random.Generator) -> str:
    if rng.random() < 0.55:
        host = ".".join(str(int(rng.integers(1, 255))) for _ in range(4))
    else:
        host = _hexstr(rng, 6, 12) + _pick(rng, _MALWARE_TLDS)
    if rng.random() < 0.4:
        host += ":" + _digits(rng, 2, 4)
    return host + "/" + _hexstr(rng, 4, 10) + _pick(rng, _BINARY_EXTS)


def _phishing(rng: np.random.Generator) -> str:
    brand = _pick(rng, _BRANDS)
    host = brand + "-" + _pick(rng, _WORDS)
    host += _pick(rng, ("-secure", "-verify", "-update", "", ""))
    host += _pick(rng, _PHISH_TLDS)
    if rng.random() < 0.2:
        host = brand + ".com@" + host
    path = _pick(rng, ("/login", "/verify", "/account", "/signin", "/webscr"))
    if rng.random() < 0.5:
        path += "?id=" + _digits(rng, 3, 8)
    return host + path


_GENERATORS = (_benign, _defacement, _malware, _phishing)


def target_counts(size: int) -> tuple[int, int, int, int]:
    """Apportion ``size`` records over the class weights (largest remainder)."""
    quotas = [w * size for w in CLASS_WEIGHTS]
    base = [int(q) for q in quotas]
    order = sorted(
        range(NUM_CLASSES), key=lambda c: (-(quotas[c] - base[c]), c)
    )
    for c in order[: size - sum(base)]:
        base[c] += 1
    return tuple(base)


def generate_corpus(size: int, seed: int = 42) -> Corpus:
    """A shuffled labeled corpus of ``size`` synthetic URLs."""
    if size < 1:
        raise ValueError(f"size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    records: list[Record] = []
    for label, count in enumerate(target_counts(size)):
        make = _GENERATORS[label]
        for _ in range(count):
            records.append(Record(make(rng), label))
    order = rng.permutation(len(records))
    return Corpus([records[int(i)] for i in order])
