"""BM25 baseline: tokenizer, inverted index, scorer and on-disk format.

Scoring uses the Robertson/Sparck Jones form with the non-negative idf
``ln((N - df + 0.5) / (df + 0.5) + 1)``. Repeated query terms contribute once
per occurrence.

Index file layout (version 1)::

    b"aspecteval-bm25 1\\n"           ASCII header line: magic, format version
    <gzip stream, mtime=0>            UTF-8 JSON, sorted keys, no whitespace
        {"b":..., "k1":..., "tokenizer": {...},
         "doc_lengths": [[doc_id, length], ...],         sorted by doc_id
         "postings": [[term, [[doc_id, tf], ...]], ...]}  sorted by term, doc_id

The same corpus and parameters always produce byte-identical files.
"""

from __future__ import annotations

import gzip
import hashlib
import heapq
import io
import json
import math
import re
from collections import Counter
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .core import RankedRun
from .errors import DuplicateDocument, EmptyIndex, EmptyQuery, IndexFormatError

MAGIC = b"aspecteval-bm25"
FORMAT_VERSION = 1

PRESETS = {
    "default": (0.9, 0.4),
    "robertson": (1.2, 0.75),
}

_TOKEN_RE = re.compile(r"[^\W_]+")

# Short English list; only used when stopword removal is switched on.
ENGLISH_STOPWORDS = frozenset("""
a about above after again against all am an and any are as at be because been before being
below between both but by can did do does doing down during each few for from further had has
have having he her here hers herself him himself his how i if in into is it its itself just me
more most my myself no nor not now of off on once only or other our ours ourselves out over own
same she should so some such than that the their theirs them themselves then there these they
this those through to too under until up very was we were what when where which while who whom
why will with you your yours yourself yourselves
""".split())

_STEMMERS: dict[str, Callable[[], Callable[[str], str]]] = {}


def register_stemmer(name: str, factory: Callable[[], Callable[[str], str]]) -> None:
    """Make a stemmer available by name so indexes using it can be persisted."""
    _STEMMERS[name] = factory


def _snowball_english():
    try:
        import Stemmer  # PyStemmer
    except ImportError:
        try:
            from nltk.stem.snowball import SnowballStemmer
        except ImportError as exc:
            raise ImportError("stemming needs PyStemmer or nltk installed") from exc
        return SnowballStemmer("english").stem
    return Stemmer.Stemmer("english").stemWord


register_stemmer("snowball-english", _snowball_english)


@dataclass(frozen=True)
class Tokenizer:
    """Lowercase, split on anything that is not a letter or digit."""

    stopwords: frozenset[str] = frozenset()
    stemmer: str | None = None

    def __call__(self, text: str) -> list[str]:
        tokens = _TOKEN_RE.findall(text.lower())
        if self.stopwords:
            tokens = [t for t in tokens if t not in self.stopwords]
        if self.stemmer is not None:
            stem = _stemmer(self.stemmer)
            tokens = [stem(t) for t in tokens]
        return tokens

    def to_dict(self) -> dict:
        return {"stopwords": sorted(self.stopwords), "stemmer": self.stemmer}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Tokenizer":
        return cls(frozenset(d.get("stopwords", ())), d.get("stemmer"))


_stemmer_cache: dict[str, Callable[[str], str]] = {}


def _stemmer(name: str) -> Callable[[str], str]:
    if name not in _stemmer_cache:
        if name not in _STEMMERS:
            raise KeyError(f"unknown stemmer {name!r}; known: {sorted(_STEMMERS)}")
        _stemmer_cache[name] = _STEMMERS[name]()
    return _stemmer_cache[name]


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class InvertedIndex:
    postings: Mapping[str, tuple[tuple[str, int], ...]]
    doc_lengths: Mapping[str, int]
    k1: float = 0.9
    b: float = 0.4
    tokenizer: Tokenizer = field(default_factory=Tokenizer)

    @property
    def doc_count(self) -> int:
        return len(self.doc_lengths)

    @property
    def avg_doc_length(self) -> float:
        return sum(self.doc_lengths.values()) / self.doc_count if self.doc_count else 0.0

    def idf(self, term: str) -> float:
        df = len(self.postings.get(term, ()))
        n = self.doc_count
        return math.log((n - df + 0.5) / (df + 0.5) + 1.0)

    def to_bytes(self) -> bytes:
        payload = {
            "k1": self.k1,
            "b": self.b,
            "tokenizer": self.tokenizer.to_dict(),
            "doc_lengths": sorted(self.doc_lengths.items()),
            "postings": [[t, [list(p) for p in self.postings[t]]] for t in sorted(self.postings)],
        }
        raw = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
        buf = io.BytesIO()
        with gzip.GzipFile(fileobj=buf, mode="wb", mtime=0) as gz:
            gz.write(raw)
        return MAGIC + b" " + str(FORMAT_VERSION).encode() + b"\n" + buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "InvertedIndex":
        header, sep, body = data.partition(b"\n")
        parts = header.split(b" ")
        if not sep or len(parts) != 2 or parts[0] != MAGIC:
            raise IndexFormatError("not an aspecteval BM25 index")
        if parts[1] != str(FORMAT_VERSION).encode():
            raise IndexFormatError(f"unsupported index version {parts[1].decode(errors='replace')}")
        payload = json.loads(gzip.decompress(body).decode("utf-8"))
        return cls(
            postings={t: tuple((d, tf) for d, tf in plist) for t, plist in payload["postings"]},
            doc_lengths={d: n for d, n in payload["doc_lengths"]},
            k1=payload["k1"],
            b=payload["b"],
            tokenizer=Tokenizer.from_dict(payload["tokenizer"]),
        )

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def _count_shard(args):
    docs, tokenizer = args
    lengths, postings = {}, {}
    for doc_id, text in docs:
        tokens = tokenizer(text)
        lengths[doc_id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc_id, tf))
    return lengths, postings


def build_index(corpus: Iterable[tuple[str, str]], k1: float = 0.9, b: float = 0.4,
                tokenizer: Tokenizer | None = None, workers: int = 1,
                shard_size: int = 20000) -> InvertedIndex:
    """Index ``(doc_id, text)`` pairs.

    With ``workers > 1`` shards are tokenized in separate processes; the merged
    postings are sorted so the result does not depend on sharding.
    """
    tokenizer = tokenizer or Tokenizer()
    seen: set[str] = set()
    shards: list[list[tuple[str, str]]] = [[]]
    for doc_id, text in corpus:
        doc_id = str(doc_id)
        if doc_id in seen:
            raise DuplicateDocument(f"document id {doc_id!r} appears more than once")
        seen.add(doc_id)
        if len(shards[-1]) >= shard_size:
            shards.append([])
        shards[-1].append((doc_id, text))

    jobs = [(s, tokenizer) for s in shards if s]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_count_shard, jobs))
    else:
        parts = [_count_shard(j) for j in jobs]

    doc_lengths: dict[str, int] = {}
    merged: dict[str, list[tuple[str, int]]] = {}
    for lengths, postings in parts:
        doc_lengths.update(lengths)
        for term, plist in postings.items():
            merged.setdefault(term, []).extend(plist)
    postings = {t: tuple(sorted(merged[t])) for t in sorted(merged)}
    return InvertedIndex(postings, dict(sorted(doc_lengths.items())), k1, b, tokenizer)


def score_terms(index: InvertedIndex, terms: Sequence[str]) -> dict[str, float]:
    """Summed BM25 contribution of ``terms`` for every matching document."""
    k1, b = index.k1, index.b
    avg = index.avg_doc_length
    lengths = index.doc_lengths
    scores: dict[str, float] = {}
    for term in terms:
        plist = index.postings.get(term)
        if not plist:
            continue
        idf = index.idf(term)
        for doc_id, tf in plist:
            norm = tf + k1 * (1.0 - b + b * lengths[doc_id] / avg)
            scores[doc_id] = scores.get(doc_id, 0.0) + idf * tf * (k1 + 1.0) / norm
    return scores


def search(index: InvertedIndex, query: str, k: int = 1000, query_id: str = "") -> RankedRun:
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if index.doc_count == 0:
        raise EmptyIndex("cannot search an empty index")
    terms = index.tokenizer(query)
    if not terms:
        raise EmptyQuery(f"query {query!r} has no terms after tokenization")
    scores = score_terms(index, terms)
    best = heapq.nsmallest(k, ((d, s) for d, s in scores.items() if s > 0.0), key=lambda p: (-p[1], p[0]))
    return RankedRun(query_id, tuple(best))


def search_many(index: InvertedIndex, queries: Mapping[str, str], k: int = 1000,
                workers: int = 1) -> dict[str, RankedRun]:
    """Search every ``query_id -> text``; queries with no usable terms get an empty run."""
    def one(item):
        qid, text = item
        try:
            return qid, search(index, text, k, qid)
        except EmptyQuery:
            return qid, RankedRun(qid)

    items = sorted(queries.items())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return dict(pool.map(one, items))
    return dict(map(one, items))


def save_index(index: InvertedIndex, path) -> str:
    """Write the index and return the sha256 of the file."""
    data = index.to_bytes()
    Path(path).write_bytes(data)
    return hashlib.sha256(data).hexdigest()


def load_index(path) -> InvertedIndex:
    return InvertedIndex.from_bytes(Path(path).read_bytes())
