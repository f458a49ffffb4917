"""In-group / out-group labelling of mention pairs and the rows fed to H1-H3."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .bayes.models import EngagementRow, NPRow
from .corpus import Politician, PoliticianRegistry, TweetCorpus, resolve_mentions
from .sentiment import SentimentLabel

GROUPINGS = ("party", "bloc")
IN_GROUP = "in"
OUT_GROUP = "out"
PAIR_HEADER = ("tweet_id", "author", "target", "grouping", "relation", "sentiment", "is_np", "is_pp")


def check_grouping(grouping: str) -> str:
    if grouping not in GROUPINGS:
        raise ValueError(f"grouping must be one of {GROUPINGS}, got {grouping!r}")
    return grouping


def relation(author: Politician, target: Politician, grouping: str) -> str:
    key = "party" if check_grouping(grouping) == "party" else "bloc"
    return IN_GROUP if getattr(author, key) == getattr(target, key) else OUT_GROUP


@dataclass(frozen=True)
class PartisanPair:
    tweet_id: str
    author: str
    target: str
    grouping: str
    relation: str
    sentiment: SentimentLabel

    @property
    def is_np(self) -> bool:
        return self.relation == OUT_GROUP and self.sentiment is SentimentLabel.NEGATIVE

    @property
    def is_pp(self) -> bool:
        return self.relation == IN_GROUP and self.sentiment is SentimentLabel.POSITIVE

    def as_row(self) -> list:
        return [self.tweet_id, self.author, self.target, self.grouping, self.relation,
                self.sentiment.value, int(self.is_np), int(self.is_pp)]


def _sentiment_for(sentiments: Mapping, tweet_id: str) -> SentimentLabel:
    try:
        return SentimentLabel.parse(sentiments[tweet_id])
    except KeyError:
        raise ValueError(f"tweet {tweet_id} has no sentiment label") from None


def label_pairs(corpus: TweetCorpus, sentiments: Mapping[str, SentimentLabel],
                registry: PoliticianRegistry, grouping: str) -> list[PartisanPair]:
    """One pair per tweet and distinct mentioned politician other than the author."""
    check_grouping(grouping)
    pairs = []
    for tweet in sorted(corpus, key=lambda t: t.id):
        targets = [p for p in resolve_mentions(tweet, registry) if p.handle != tweet.author_handle]
        if not targets:
            continue
        author = registry[tweet.author_handle]
        label = _sentiment_for(sentiments, tweet.id)
        for target in targets:
            pairs.append(PartisanPair(tweet.id, author.handle, target.handle, grouping,
                                      relation(author, target, grouping), label))
    return pairs


@dataclass(frozen=True)
class PartisanCounts:
    k_np: int
    n_out: int
    k_pp: int
    n_in: int
    per_author: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0 <= self.k_np <= self.n_out and 0 <= self.k_pp <= self.n_in):
            raise ValueError(f"inconsistent counts {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.k_np, self.n_out, self.k_pp, self.n_in)


def count(pairs: Sequence[PartisanPair]) -> PartisanCounts:
    """NP among out-group pairs and PP among in-group pairs, overall and per author."""
    levels = {p.grouping for p in pairs}
    if len(levels) > 1:
        raise ValueError(f"pairs mix grouping levels: {sorted(levels)}")
    per_author: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0, 0])
    for p in pairs:
        tally = per_author[p.author]
        if p.relation == OUT_GROUP:
            tally[0] += p.is_np
            tally[1] += 1
        else:
            tally[2] += p.is_pp
            tally[3] += 1
    totals = [sum(t[i] for t in per_author.values()) for i in range(4)]
    return PartisanCounts(*totals, per_author={a: tuple(t) for a, t in sorted(per_author.items())})


def sentiment_bars(pairs: Iterable[PartisanPair]) -> list[tuple[str, str, str, int]]:
    """Counts of positive and negative pairs by relation (neutral excluded)."""
    tally = Counter((p.grouping, p.relation, p.sentiment.value) for p in pairs
                    if p.sentiment is not SentimentLabel.NEUTRAL)
    out = []
    for grouping in GROUPINGS:
        for rel in (IN_GROUP, OUT_GROUP):
            for s in ("positive", "negative"):
                if any(k[0] == grouping for k in tally):
                    out.append((grouping, rel, s, tally.get((grouping, rel, s), 0)))
    return out


def write_pairs(pairs: Iterable[PartisanPair], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(PAIR_HEADER)
        for p in pairs:
            writer.writerow(p.as_row())


def read_pairs(path: str | Path) -> list[PartisanPair]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            PartisanPair(r["tweet_id"], r["author"], r["target"], r["grouping"], r["relation"],
                         SentimentLabel.parse(r["sentiment"]))
            for r in csv.DictReader(fh)
        ]


def _tweet_relations(corpus, registry, grouping):
    for tweet in corpus:
        author = registry[tweet.author_handle]
        rels = {relation(author, t, grouping) for t in resolve_mentions(tweet, registry)
                if t.handle != tweet.author_handle}
        yield tweet, author, rels


def engagement_rows(corpus: TweetCorpus, sentiments: Mapping[str, SentimentLabel],
                    registry: PoliticianRegistry, grouping: str) -> list[EngagementRow]:
    """Every tweet becomes a row; a tweet with mixed targets is flagged both in- and out-group."""
    check_grouping(grouping)
    rows = []
    for tweet, author, rels in _tweet_relations(corpus, registry, grouping):
        rows.append(EngagementRow(
            tweet_id=tweet.id,
            author=author.handle,
            hour=tweet.hour,
            likes=tweet.likes,
            retweets=tweet.retweets,
            sentiment=_sentiment_for(sentiments, tweet.id).value,
            out_group=OUT_GROUP in rels,
            in_group=IN_GROUP in rels,
            bloc=author.bloc,
            party=author.party,
        ))
    return rows


def np_rows(corpus: TweetCorpus, sentiments: Mapping[str, SentimentLabel],
            registry: PoliticianRegistry, grouping: str,
            ideology: Mapping[str, float | None]) -> list[NPRow]:
    """Every tweet becomes a row with ``nu = 1`` when it attacks an out-group target."""
    check_grouping(grouping)
    rows = []
    for tweet, author, rels in _tweet_relations(corpus, registry, grouping):
        negative = _sentiment_for(sentiments, tweet.id) is SentimentLabel.NEGATIVE
        rows.append(NPRow(
            tweet_id=tweet.id,
            author=author.handle,
            hour=tweet.hour,
            nu=int(negative and OUT_GROUP in rels),
            ideology=ideology.get(author.handle),
            likes=tweet.likes,
            retweets=tweet.retweets,
        ))
    return rows
