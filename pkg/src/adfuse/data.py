"""Feature-record ingestion, splits, batching, and the planted synthetic set.

Dataset files are JSON lines: the first line is the header (dims, label
counts, record count, format version), every following line one record.
Floats go through Python's repr, which is shortest-round-trip, so
save -> load is bit-exact for double precision. Filenames ending in ".gz"
are transparently gzip-compressed.

The network consumes precomputed features: a global image vector, a
variable-length list of object vectors, a variable-length list of word
embedding vectors, plus multi-hot topic and sentiment labels. Whatever
produced those features (CNN, detector, OCR + embedding lookup) is outside
this library; an adapter only has to emit this file format. Ingestion caps
objects at 36 and words at 64 per record, keeping earlier entries (files
are expected to list objects in decreasing detector confidence).

The synthetic generator plants label structure into features through fixed
per-label prototype vectors, so recovery is verifiable: topic prototypes
drive the object and word features, sentiment prototypes contribute to the
global feature only (scaled by `sentiment_global_scale`), and active topic
labels imply paired sentiment labels with probability `rho`.
"""

from __future__ import annotations

import gzip
import json
import math
from dataclasses import dataclass, field, asdict
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError, ParseError, UsageError
from .numerics import Array, Rng, as_f64

FORMAT_VERSION = 1
MAX_OBJECTS = 36
MAX_WORDS = 64


@dataclass
class DatasetHeader:
    d_img: int
    d_obj: int
    d_word: int
    n_topics: int
    n_sentiments: int
    n_records: int
    format_version: int = FORMAT_VERSION

    def validate(self) -> None:
        for name in ("d_img", "d_obj", "d_word", "n_topics", "n_sentiments"):
            if getattr(self, name) < 1:
                raise DataError(f"header field {name} must be >= 1, got {getattr(self, name)}")
        if self.n_records < 0:
            raise DataError(f"header n_records must be >= 0, got {self.n_records}")
        if self.format_version != FORMAT_VERSION:
            raise ParseError(f"unsupported dataset format version {self.format_version}")


@dataclass
class FeatureRecord:
    """One ad's precomputed multimodal features plus its multi-hot labels."""

    id: str
    global_feature: Array
    object_features: list[Array]
    word_embeddings: list[Array]
    words: list[str] | None
    topic_labels: Array
    sentiment_labels: Array

    @property
    def n_objects(self) -> int:
        return len(self.object_features)

    @property
    def n_words(self) -> int:
        return len(self.word_embeddings)

    def validate(self, header: DatasetHeader) -> None:
        if self.global_feature.shape != (header.d_img,):
            raise DataError(
                f"record {self.id}: global feature dim {self.global_feature.shape[0]} != header d_img {header.d_img}"
            )
        for j, v in enumerate(self.object_features):
            if v.shape != (header.d_obj,):
                raise DataError(f"record {self.id}: object {j} dim {v.shape[0]} != header d_obj {header.d_obj}")
        for j, v in enumerate(self.word_embeddings):
            if v.shape != (header.d_word,):
                raise DataError(f"record {self.id}: word {j} dim {v.shape[0]} != header d_word {header.d_word}")
        if self.topic_labels.shape != (header.n_topics,):
            raise DataError(
                f"record {self.id}: topic label dim {self.topic_labels.shape[0]} != header n_topics {header.n_topics}"
            )
        if self.sentiment_labels.shape != (header.n_sentiments,):
            raise DataError(
                f"record {self.id}: sentiment label dim {self.sentiment_labels.shape[0]} "
                f"!= header n_sentiments {header.n_sentiments}"
            )
        for name, labels in (("topic", self.topic_labels), ("sentiment", self.sentiment_labels)):
            if not np.isin(labels, (0.0, 1.0)).all():
                raise DataError(f"record {self.id}: {name} labels must be 0/1")


def _open_text(path, mode: str):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, mode + "t", encoding="utf-8")
    return open(path, mode, encoding="utf-8")


def save_dataset(path, header: DatasetHeader, records: Sequence[FeatureRecord]) -> None:
    header = DatasetHeader(**{**asdict(header), "n_records": len(records)})
    header.validate()
    with _open_text(path, "w") as fh:
        fh.write(json.dumps(asdict(header)) + "\n")
        for rec in records:
            obj = {
                "id": rec.id,
                "global_feature": rec.global_feature.tolist(),
                "object_features": [v.tolist() for v in rec.object_features],
                "word_embeddings": [v.tolist() for v in rec.word_embeddings],
                "topic_labels": rec.topic_labels.astype(int).tolist(),
                "sentiment_labels": rec.sentiment_labels.astype(int).tolist(),
            }
            if rec.words is not None:
                obj["words"] = rec.words
            fh.write(json.dumps(obj) + "\n")


def _parse_record(obj: dict, line_no: int) -> FeatureRecord:
    try:
        return FeatureRecord(
            id=str(obj["id"]),
            global_feature=as_f64(obj["global_feature"]),
            object_features=[as_f64(v) for v in obj.get("object_features", [])][:MAX_OBJECTS],
            word_embeddings=[as_f64(v) for v in obj.get("word_embeddings", [])][:MAX_WORDS],
            words=obj.get("words"),
            topic_labels=as_f64(obj["topic_labels"]),
            sentiment_labels=as_f64(obj["sentiment_labels"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"line {line_no}: malformed record ({exc})") from exc


def load_dataset(path) -> tuple[DatasetHeader, list[FeatureRecord]]:
    """Streaming parse; raises ParseError with a line number or DataError with a record id."""
    records: list[FeatureRecord] = []
    with _open_text(path, "r") as fh:
        first = fh.readline()
        if not first.strip():
            raise ParseError("line 1: missing dataset header")
        try:
            header = DatasetHeader(**json.loads(first))
        except (json.JSONDecodeError, TypeError) as exc:
            raise ParseError(f"line 1: malformed header ({exc})") from exc
        header.validate()
        for line_no, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"line {line_no}: invalid JSON ({exc})") from exc
            rec = _parse_record(obj, line_no)
            rec.validate(header)
            records.append(rec)
    if header.n_records != len(records):
        raise DataError(f"header claims {header.n_records} records, file holds {len(records)}")
    return header, records


def split(
    records: Sequence[FeatureRecord],
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> tuple[list[FeatureRecord], list[FeatureRecord], list[FeatureRecord]]:
    """Seeded shuffle then contiguous slicing into (train, val, test)."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise UsageError(f"split fractions must sum to 1, got {fractions}")
    if len(records) < 3:
        raise UsageError(f"need at least 3 records to split, got {len(records)}")
    order = Rng(seed).spawn(0).permutation(len(records))
    shuffled = [records[i] for i in order]
    n = len(records)
    n_train = int(math.floor(fractions[0] * n))
    n_val = int(math.floor(fractions[1] * n))
    return shuffled[:n_train], shuffled[n_train : n_train + n_val], shuffled[n_train + n_val :]


def batches(records: Sequence[FeatureRecord], batch_size: int, rng: Rng) -> Iterator[list[FeatureRecord]]:
    """Seeded shuffle each call; yields slices of batch_size, final partial batch kept."""
    if batch_size < 1:
        raise UsageError(f"batch_size must be >= 1, got {batch_size}")
    order = rng.permutation(len(records))
    for start in range(0, len(records), batch_size):
        yield [records[i] for i in order[start : start + batch_size]]


# ----------------------------------------------------------------- synthetic


@dataclass
class SynthConfig:
    """Planted-structure generator settings.

    Per record: each topic label fires with probability 2/n_topics (one is
    forced if none fire); each active topic implies sentiment label
    (topic index mod n_sentiments) with probability rho; every sentiment
    label additionally fires with the background rate. Features are built
    from fixed seeded prototypes: the global vector mixes active topic
    prototypes with (scaled) active sentiment prototypes, objects carry
    one prototype per active topic plus Poisson-many random distractors,
    and the word sequence holds words_per_topic prototype vectors per
    active topic, concatenated in label order. Gaussian noise of scale
    sigma is added to every planted vector.
    """

    n_records: int = 1000
    n_topics: int = 8
    n_sentiments: int = 6
    d_img: int = 32
    d_obj: int = 32
    d_word: int = 16
    sigma: float = 0.1
    rho: float = 0.8
    distractor_rate: float = 1.0
    background_sentiment_rate: float = 0.05
    sentiment_global_scale: float = 1.0
    words_per_topic: int = 2
    seed: int = 0

    def validate(self) -> None:
        if self.n_records < 0:
            raise ConfigError(f"n_records must be >= 0, got {self.n_records}")
        for name in ("n_topics", "n_sentiments", "d_img", "d_obj", "d_word", "words_per_topic"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("rho", "background_sentiment_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if self.sigma < 0 or self.distractor_rate < 0:
            raise ConfigError("sigma and distractor_rate must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthPrototypes:
    topic_global: Array      # (q, d_img)
    sentiment_global: Array  # (p, d_img)
    topic_object: Array      # (q, d_obj)
    topic_word: Array        # (q, words_per_topic, d_word)


def synth_prototypes(cfg: SynthConfig) -> SynthPrototypes:
    """The fixed per-label prototype vectors, a pure function of cfg.seed."""
    rng = Rng(cfg.seed).spawn(0)
    return SynthPrototypes(
        topic_global=rng.normal((cfg.n_topics, cfg.d_img)),
        sentiment_global=rng.normal((cfg.n_sentiments, cfg.d_img)),
        topic_object=rng.normal((cfg.n_topics, cfg.d_obj)),
        topic_word=rng.normal((cfg.n_topics, cfg.words_per_topic, cfg.d_word)),
    )


def expected_topic_rate(cfg: SynthConfig) -> float:
    """Exact per-label topic frequency under the generative process.

    The base rate 2/q is inflated by the at-least-one rule: when no label
    fires (probability (1-2/q)^q) one is forced uniformly at random.
    """
    base = 2.0 / cfg.n_topics
    return base + (1.0 - base) ** cfg.n_topics / cfg.n_topics


def synth_generate(cfg: SynthConfig) -> tuple[DatasetHeader, list[FeatureRecord]]:
    cfg.validate()
    protos = synth_prototypes(cfg)
    rng = Rng(cfg.seed).spawn(1)
    q, p = cfg.n_topics, cfg.n_sentiments
    topic_rate = 2.0 / q

    records: list[FeatureRecord] = []
    for idx in range(cfg.n_records):
        topics = (rng.random((q,)) < topic_rate).astype(np.float64)
        if topics.sum() == 0:
            topics[rng.integers(0, q)] = 1.0
        active_topics = np.flatnonzero(topics)

        sentiments = np.zeros(p)
        for t in active_topics:
            if rng.random(()) < cfg.rho:
                sentiments[t % p] = 1.0
        background = rng.random((p,)) < cfg.background_sentiment_rate
        sentiments = np.maximum(sentiments, background.astype(np.float64))
        active_sents = np.flatnonzero(sentiments)

        g = protos.topic_global[active_topics].mean(axis=0)
        if active_sents.size:
            g = g + cfg.sentiment_global_scale * protos.sentiment_global[active_sents].mean(axis=0)
        g = g + rng.normal((cfg.d_img,), std=cfg.sigma)

        objects = [
            protos.topic_object[t] + rng.normal((cfg.d_obj,), std=cfg.sigma) for t in active_topics
        ]
        for _ in range(rng.poisson(cfg.distractor_rate)):
            objects.append(rng.normal((cfg.d_obj,)))
        order = rng.permutation(len(objects))
        objects = [objects[i] for i in order]

        word_vecs = [
            protos.topic_word[t, k] + rng.normal((cfg.d_word,), std=cfg.sigma)
            for t in active_topics
            for k in range(cfg.words_per_topic)
        ]

        records.append(
            FeatureRecord(
                id=f"synth-{idx:06d}",
                global_feature=g,
                object_features=objects,
                word_embeddings=word_vecs,
                words=None,
                topic_labels=topics,
                sentiment_labels=sentiments,
            )
        )
    header = DatasetHeader(
        d_img=cfg.d_img,
        d_obj=cfg.d_obj,
        d_word=cfg.d_word,
        n_topics=q,
        n_sentiments=p,
        n_records=len(records),
    )
    return header, records
