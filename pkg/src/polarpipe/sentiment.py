"""Three-class tweet sentiment: classifiers, batch labelling and evaluation."""

from __future__ import annotations

import csv
import hashlib
import json
import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .llm import ChatClient, RemoteUnavailable

__all__ = [
    "SentimentLabel", "ClassifierSpec", "Unparseable", "RemoteUnavailable",
    "build_prompt", "parse_label", "classify", "classify_batch", "evaluate",
    "EvalReport", "LabelCache", "load_gold",
]


class SentimentLabel(str, Enum):
    POSITIVE = "positive"
    NEUTRAL = "neutral"
    NEGATIVE = "negative"

    @classmethod
    def parse(cls, value: "str | SentimentLabel") -> "SentimentLabel":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown sentiment label {value!r}") from None


CLASSES = (SentimentLabel.POSITIVE, SentimentLabel.NEUTRAL, SentimentLabel.NEGATIVE)


class Unparseable(ValueError):
    def __init__(self, raw: str):
        super().__init__(f"no sentiment class in response: {raw!r}")
        self.raw = raw


KIND_ALIASES = {
    "remote": "remote", "remote-llm": "remote",
    "lexicon": "lexicon", "lexicon-baseline": "lexicon",
    "mock": "mock", "fixed-mock": "mock",
}


@dataclass(frozen=True)
class ClassifierSpec:
    kind: str
    endpoint: str | None = None
    model_name: str | None = None
    prompt_language: str = "sv"
    max_retries: int = 3
    timeout: float = 30.0
    temperature: float | None = 0.0
    label: str | None = None
    positive_words: tuple[str, ...] | None = None
    negative_words: tuple[str, ...] | None = None

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind)
        if kind is None:
            raise ValueError(f"unknown classifier kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if self.prompt_language not in ("sv", "en"):
            raise ValueError(f"prompt_language must be 'sv' or 'en', got {self.prompt_language!r}")
        if kind == "remote" and not (self.endpoint and self.model_name):
            raise ValueError("remote classifier needs endpoint and model_name")
        if kind == "mock":
            if self.label is None:
                raise ValueError("mock classifier needs a label")
            SentimentLabel.parse(self.label)

    @classmethod
    def from_dict(cls, data: dict) -> "ClassifierSpec":
        data = dict(data)
        for key in ("positive_words", "negative_words"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        return cls(**data)

    @property
    def identity(self) -> str:
        """Stable key covering everything that changes a label."""
        if self.kind == "remote":
            parts = ["remote", self.endpoint.rstrip("/"), self.model_name,
                     _sha(build_prompt(self.prompt_language))]
        elif self.kind == "lexicon":
            pos, neg = lexicon_words(self)
            parts = ["lexicon", _sha("\n".join(sorted(pos))), _sha("\n".join(sorted(neg)))]
        else:
            parts = ["mock", SentimentLabel.parse(self.label).value]
        return "|".join(parts)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def build_prompt(language: str) -> str:
    """System prompt for sentiment scoring; the Swedish one is a fixed bundled text."""
    if language not in ("sv", "en"):
        raise ValueError(f"unsupported prompt language {language!r}")
    return resources.files("polarpipe.resources").joinpath(f"prompt_{language}.txt").read_text("utf-8")


_LABEL_RE = re.compile(r"(positiv|negativ|neutral)", re.IGNORECASE)
_STEMS = {"positiv": SentimentLabel.POSITIVE, "negativ": SentimentLabel.NEGATIVE,
          "neutral": SentimentLabel.NEUTRAL}


def parse_label(raw: str) -> SentimentLabel:
    """First English or Swedish class word in ``raw``, case-insensitive."""
    match = _LABEL_RE.search(raw or "")
    if match is None:
        raise Unparseable(raw)
    return _STEMS[match.group(1).lower()]


_TOKEN_RE = re.compile(r"\w+")


def _bundled_lexicon() -> tuple[frozenset[str], frozenset[str]]:
    text = resources.files("polarpipe.resources").joinpath("lexicon.csv").read_text("utf-8")
    pos, neg = set(), set()
    for row in csv.DictReader(text.splitlines()):
        (pos if row["polarity"] == "positive" else neg).add(row["word"].lower())
    return frozenset(pos), frozenset(neg)


def lexicon_words(spec: ClassifierSpec) -> tuple[frozenset[str], frozenset[str]]:
    pos, neg = _bundled_lexicon()
    if spec.positive_words is not None:
        pos = frozenset(w.lower() for w in spec.positive_words)
    if spec.negative_words is not None:
        neg = frozenset(w.lower() for w in spec.negative_words)
    return pos, neg


def lexicon_score(text: str, positive: Iterable[str], negative: Iterable[str]) -> int:
    positive, negative = set(positive), set(negative)
    tokens = _TOKEN_RE.findall(text.lower())
    return sum(t in positive for t in tokens) - sum(t in negative for t in tokens)


class Classifier:
    """Callable wrapper around a spec; holds the HTTP client for remote kinds."""

    def __init__(self, spec: ClassifierSpec, client: ChatClient | None = None):
        self.spec = spec
        self.client = client
        if spec.kind == "remote" and client is None:
            self.client = ChatClient(spec.endpoint, spec.model_name, timeout=spec.timeout,
                                     max_retries=spec.max_retries, temperature=spec.temperature)
        if spec.kind == "lexicon":
            self.positive, self.negative = lexicon_words(spec)
        if spec.kind == "remote":
            self.prompt = build_prompt(spec.prompt_language)

    def __call__(self, text: str) -> SentimentLabel:
        if not text:
            raise ValueError("text must be non-empty")
        kind = self.spec.kind
        if kind == "mock":
            return SentimentLabel.parse(self.spec.label)
        if kind == "lexicon":
            score = lexicon_score(text, self.positive, self.negative)
            if score > 0:
                return SentimentLabel.POSITIVE
            if score < 0:
                return SentimentLabel.NEGATIVE
            return SentimentLabel.NEUTRAL
        return parse_label(self.client.complete(self.prompt, text))


def classify(spec: ClassifierSpec, text: str, client: ChatClient | None = None) -> SentimentLabel:
    return Classifier(spec, client)(text)


class LabelCache:
    """Thread-safe label cache keyed by (classifier identity, text hash).

    With ``path`` set, entries are loaded from and saved to a JSON file so
    reruns do not repeat remote calls.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        if self.path is not None and self.path.exists():
            self._data = json.loads(self.path.read_text("utf-8"))

    @staticmethod
    def key(identity: str, text: str) -> str:
        return f"{identity}|{_sha(text)}"

    def get(self, identity: str, text: str) -> SentimentLabel | None:
        with self._lock:
            value = self._data.get(self.key(identity, text))
        return None if value is None else SentimentLabel(value)

    def put(self, identity: str, text: str, label: SentimentLabel):
        with self._lock:
            self._data[self.key(identity, text)] = label.value

    def __len__(self) -> int:
        return len(self._data)

    def save(self):
        if self.path is None:
            return
        with self._lock:
            payload = json.dumps(self._data, sort_keys=True, indent=0)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(payload, "utf-8")


def classify_batch(spec: ClassifierSpec, texts: Sequence[str], parallelism: int = 1, *,
                   cache: LabelCache | None = None,
                   classifier: Classifier | None = None) -> list:
    """Label ``texts`` in input order.

    Each entry is a :class:`SentimentLabel` or the exception raised for
    that text.  Distinct texts are classified once; at most
    ``parallelism`` requests are in flight.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    classifier = classifier or Classifier(spec)
    cache = cache if cache is not None else LabelCache()
    identity = spec.identity
    unique = list(dict.fromkeys(texts))

    def work(text):
        hit = cache.get(identity, text)
        if hit is not None:
            return hit
        try:
            label = classifier(text)
        except (Unparseable, RemoteUnavailable, ValueError) as exc:
            return exc
        cache.put(identity, text, label)
        return label

    if parallelism == 1 or len(unique) <= 1:
        results = [work(t) for t in unique]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(work, unique))
    by_text = dict(zip(unique, results))
    return [by_text[t] for t in texts]


@dataclass
class EvalReport:
    confusion: np.ndarray
    labels: tuple[SentimentLabel, ...]
    precision: dict[str, float]
    recall: dict[str, float]
    f1: dict[str, float]
    macro_f1: float
    balanced_accuracy: float
    n: int = field(default=0)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "labels": [l.value for l in self.labels],
            "confusion": self.confusion.tolist(),
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "macro_f1": self.macro_f1,
            "balanced_accuracy": self.balanced_accuracy,
        }


def evaluate(predictions: Sequence, gold: Sequence) -> EvalReport:
    """Confusion matrix (rows gold, columns predicted), macro F1 and balanced accuracy.

    Both averages run over the classes present in ``gold``; a class with
    zero precision and recall has F1 0.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"length mismatch: {len(predictions)} predictions, {len(gold)} gold")
    if not gold:
        raise ValueError("nothing to evaluate")
    index = {c: i for i, c in enumerate(CLASSES)}
    confusion = np.zeros((3, 3), dtype=int)
    for p, g in zip(predictions, gold):
        confusion[index[SentimentLabel.parse(g)], index[SentimentLabel.parse(p)]] += 1
    precision, recall, f1 = {}, {}, {}
    for c, i in index.items():
        tp = confusion[i, i]
        predicted = confusion[:, i].sum()
        actual = confusion[i, :].sum()
        prec = tp / predicted if predicted else 0.0
        rec = tp / actual if actual else 0.0
        precision[c.value] = float(prec)
        recall[c.value] = float(rec)
        f1[c.value] = float(2 * prec * rec / (prec + rec)) if prec + rec > 0 else 0.0
    present = [c.value for c, i in index.items() if confusion[i, :].sum() > 0]
    return EvalReport(
        confusion=confusion,
        labels=CLASSES,
        precision=precision,
        recall=recall,
        f1=f1,
        macro_f1=float(np.mean([f1[c] for c in present])),
        balanced_accuracy=float(np.mean([recall[c] for c in present])),
        n=int(confusion.sum()),
    )


def load_gold(path: str | Path) -> dict[str, SentimentLabel]:
    """Read ``tweet_id,label`` gold annotations."""
    gold = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"tweet_id", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected header tweet_id,label")
        for lineno, row in enumerate(reader, start=2):
            try:
                gold[row["tweet_id"].strip()] = SentimentLabel.parse(row["label"])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return gold
