"""Politician registry and tweet corpus loading."""

from __future__ import annotations

import csv
import json
import logging
import re
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Iterator

log = logging.getLogger(__name__)

BLOCS = ("left", "right")
POLITICIAN_HEADER = ("handle", "name", "party", "bloc", "in_parliament")
TWEET_FIELDS = ("id", "author_handle", "created_at", "text", "likes", "retweets")
STUDY_WINDOW = (datetime(2021, 6, 22, tzinfo=timezone.utc),
                datetime(2023, 3, 15, 23, 59, 59, tzinfo=timezone.utc))
MENTION_RE = re.compile(r"@(\w+)")


class CorpusError(ValueError):
    pass


def normalize_handle(handle: str) -> str:
    return unicodedata.normalize("NFC", handle.strip().lstrip("@")).casefold()


@dataclass(frozen=True)
class Politician:
    handle: str
    display_name: str
    party: str
    bloc: str
    in_parliament: bool


class PoliticianRegistry:
    """Politicians keyed by case-folded handle."""

    def __init__(self, politicians: Iterable[Politician] = ()):
        self._by_handle: dict[str, Politician] = {}
        for p in politicians:
            key = normalize_handle(p.handle)
            if key in self._by_handle:
                raise CorpusError(f"duplicate handle {p.handle!r}")
            if not p.party or not p.bloc:
                raise CorpusError(f"politician {p.handle!r} lacks party or bloc")
            if p.bloc not in BLOCS:
                raise CorpusError(f"unknown bloc {p.bloc!r} for {p.handle!r}")
            self._by_handle[key] = p

    def __len__(self) -> int:
        return len(self._by_handle)

    def __iter__(self) -> Iterator[Politician]:
        return iter(sorted(self._by_handle.values(), key=lambda p: p.handle))

    def __contains__(self, handle: str) -> bool:
        return normalize_handle(handle) in self._by_handle

    def get(self, handle: str) -> Politician | None:
        return self._by_handle.get(normalize_handle(handle))

    def __getitem__(self, handle: str) -> Politician:
        p = self.get(handle)
        if p is None:
            raise KeyError(handle)
        return p

    @property
    def parties(self) -> list[str]:
        return sorted({p.party for p in self._by_handle.values()})

    def party_bloc(self) -> dict[str, str]:
        return {p.party: p.bloc for p in self}


def load_politicians(path: str | Path) -> PoliticianRegistry:
    """Read ``handle,name,party,bloc,in_parliament`` rows into a registry."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = tuple(h.strip() for h in (reader.fieldnames or ()))
        missing = [h for h in POLITICIAN_HEADER if h not in header]
        if missing:
            raise CorpusError(f"{path}: missing columns {missing}")
        politicians = []
        seen: set[str] = set()
        for lineno, row in enumerate(reader, start=2):
            handle = row["handle"].strip()
            key = normalize_handle(handle)
            if key in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate handle {handle!r}")
            seen.add(key)
            bloc = row["bloc"].strip().lower()
            if bloc not in BLOCS:
                raise CorpusError(f"{path}:{lineno}: unknown bloc {row['bloc']!r}")
            flag = row["in_parliament"].strip()
            if flag not in ("0", "1"):
                raise CorpusError(f"{path}:{lineno}: in_parliament must be 0 or 1, got {flag!r}")
            politicians.append(Politician(
                handle=handle,
                display_name=row["name"].strip(),
                party=row["party"].strip(),
                bloc=bloc,
                in_parliament=flag == "1",
            ))
    return PoliticianRegistry(politicians)


@dataclass(frozen=True)
class Tweet:
    id: str
    author_handle: str
    created_at: datetime
    text: str
    likes: int
    retweets: int
    mentions: tuple[str, ...] | None = None
    text_en: str | None = None

    def text_for(self, field_name: str) -> str:
        """Original text, or the precomputed translation when ``field_name`` is ``text_en``."""
        if field_name == "text":
            return self.text
        if field_name == "text_en":
            if self.text_en is None:
                raise CorpusError(f"tweet {self.id} has no text_en translation")
            return self.text_en
        raise ValueError(f"unknown text field {field_name!r}")

    @property
    def hour(self) -> int:
        return self.created_at.hour


@dataclass(frozen=True)
class DropReport:
    unregistered_author: int = 0
    outside_window: int = 0


@dataclass(frozen=True)
class TweetCorpus:
    tweets: tuple[Tweet, ...]
    registry: PoliticianRegistry
    dropped: DropReport = field(default_factory=DropReport)

    def __len__(self) -> int:
        return len(self.tweets)

    def __iter__(self) -> Iterator[Tweet]:
        return iter(self.tweets)

    def author(self, tweet: Tweet) -> Politician:
        return self.registry[tweet.author_handle]


def parse_timestamp(value: str) -> datetime:
    ts = datetime.fromisoformat(value.replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    return ts.astimezone(timezone.utc)


def _nonnegative_int(obj: dict, key: str, where: str) -> int:
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)) or value != int(value):
        raise CorpusError(f"{where}: {key} must be an integer, got {value!r}")
    if value < 0:
        raise CorpusError(f"{where}: {key} must be non-negative, got {value}")
    return int(value)


def load_tweets(path: str | Path, registry: PoliticianRegistry,
                window: tuple[datetime, datetime] | None = STUDY_WINDOW) -> TweetCorpus:
    """Read a JSONL tweet file and validate every record.

    Tweets by authors missing from ``registry`` and tweets outside
    ``window`` are dropped and counted; malformed records raise
    :class:`CorpusError` citing the line number.
    """
    tweets = []
    ids: set[str] = set()
    unregistered = outside = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            where = f"{path}:{lineno}"
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{where}: malformed JSON ({exc.msg})") from None
            if not isinstance(obj, dict):
                raise CorpusError(f"{where}: expected a JSON object")
            missing = [k for k in TWEET_FIELDS if k not in obj]
            if missing:
                raise CorpusError(f"{where}: missing fields {missing}")
            likes = _nonnegative_int(obj, "likes", where)
            retweets = _nonnegative_int(obj, "retweets", where)
            try:
                created = parse_timestamp(str(obj["created_at"]))
            except ValueError:
                raise CorpusError(f"{where}: bad created_at {obj['created_at']!r}") from None
            tweet_id = str(obj["id"])
            if tweet_id in ids:
                raise CorpusError(f"{where}: duplicate tweet id {tweet_id!r}")
            ids.add(tweet_id)
            mentions = obj.get("mentions")
            if mentions is not None:
                if not isinstance(mentions, list):
                    raise CorpusError(f"{where}: mentions must be a list")
                mentions = tuple(str(m) for m in mentions)
            if str(obj["author_handle"]) not in registry:
                unregistered += 1
                continue
            if window is not None and not (window[0] <= created <= window[1]):
                outside += 1
                continue
            tweets.append(Tweet(
                id=tweet_id,
                author_handle=registry[str(obj["author_handle"])].handle,
                created_at=created,
                text=str(obj["text"]),
                likes=likes,
                retweets=retweets,
                mentions=mentions,
                text_en=None if obj.get("text_en") is None else str(obj["text_en"]),
            ))
    if unregistered:
        log.info("dropped %d tweets by unregistered authors", unregistered)
    if outside:
        log.info("dropped %d tweets outside the study window", outside)
    tweets.sort(key=lambda t: (t.created_at, t.id))
    return TweetCorpus(tuple(tweets), registry, DropReport(unregistered, outside))


@dataclass(frozen=True)
class ResolvedMentions:
    targets: tuple[Politician, ...]
    skipped: int = 0

    def __iter__(self):
        return iter(self.targets)

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def handles(self) -> list[str]:
        return [p.handle for p in self.targets]


def raw_mentions(tweet: Tweet) -> tuple[str, ...]:
    if tweet.mentions is not None:
        return tweet.mentions
    return tuple(MENTION_RE.findall(tweet.text))


def resolve_mentions(tweet: Tweet, registry: PoliticianRegistry) -> ResolvedMentions:
    """Match raw mentions against the registry, keeping first-seen order.

    Repeated mentions of one politician collapse to one target; handles not
    in the registry are counted in ``skipped``.
    """
    targets: list[Politician] = []
    seen: set[str] = set()
    skipped = 0
    for raw in raw_mentions(tweet):
        p = registry.get(raw)
        if p is None:
            skipped += 1
            continue
        if p.handle not in seen:
            seen.add(p.handle)
            targets.append(p)
    return ResolvedMentions(tuple(targets), skipped)


@dataclass(frozen=True)
class CorpusSummary:
    total_tweets: int
    bloc_share: dict[str, float]
    party_counts: dict[str, int]
    daily_counts: dict[date, int]
    dropped: DropReport

    def to_dict(self) -> dict:
        return {
            "total_tweets": self.total_tweets,
            "bloc_share": dict(self.bloc_share),
            "party_counts": dict(self.party_counts),
            "dropped": {"unregistered_author": self.dropped.unregistered_author,
                        "outside_window": self.dropped.outside_window},
        }


def summarize(corpus: TweetCorpus) -> CorpusSummary:
    """Bloc shares, per-party counts and the per-day tweet series."""
    if not corpus.tweets:
        raise CorpusError("cannot summarize an empty corpus")
    total = len(corpus.tweets)
    blocs = Counter(corpus.author(t).bloc for t in corpus)
    parties = Counter(corpus.author(t).party for t in corpus)
    days = Counter(t.created_at.date() for t in corpus)
    return CorpusSummary(
        total_tweets=total,
        bloc_share={b: blocs.get(b, 0) / total for b in BLOCS},
        party_counts=dict(sorted(parties.items())),
        daily_counts=dict(sorted(days.items())),
        dropped=corpus.dropped,
    )
