from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from polarpipe.corpus import Politician, PoliticianRegistry, Tweet, TweetCorpus
from polarpipe.partisanship import (
    IN_GROUP, OUT_GROUP, PartisanCounts, PartisanPair, count, engagement_rows, label_pairs,
    np_rows, read_pairs, sentiment_bars, write_pairs,
)
from polarpipe.sentiment import SentimentLabel

P, NEU, N = SentimentLabel.POSITIVE, SentimentLabel.NEUTRAL, SentimentLabel.NEGATIVE
HANDLES = ("anna_s", "bo_s", "cia_v", "dan_m", "eva_sd")


def tweet(i, author, text, likes=3, retweets=1, hour=10):
    return Tweet(str(i), author, datetime(2022, 5, 1, hour, tzinfo=timezone.utc), text, likes, retweets)


def corpus_of(registry, tweets):
    return TweetCorpus(tuple(tweets), registry)


@pytest.mark.parametrize("author, target, sentiment, grouping, rel, np_flag, pp_flag", [
    ("anna_s", "dan_m", N, "bloc", OUT_GROUP, True, False),
    ("anna_s", "bo_s", P, "party", IN_GROUP, False, True),
    ("anna_s", "cia_v", N, "bloc", IN_GROUP, False, False),
    ("anna_s", "cia_v", N, "party", OUT_GROUP, True, False),
    ("anna_s", "cia_v", P, "bloc", IN_GROUP, False, True),
    ("anna_s", "cia_v", P, "party", OUT_GROUP, False, False),
    ("dan_m", "eva_sd", NEU, "bloc", IN_GROUP, False, False),
])
def test_truth_table(registry, author, target, sentiment, grouping, rel, np_flag, pp_flag):
    c = corpus_of(registry, [tweet(1, author, f"@{target}")])
    (pair,) = label_pairs(c, {"1": sentiment}, registry, grouping)
    assert (pair.relation, pair.is_np, pair.is_pp) == (rel, np_flag, pp_flag)


def test_self_mentions_and_no_mentions(registry):
    c = corpus_of(registry, [tweet(1, "anna_s", "@anna_s hej"), tweet(2, "bo_s", "inget"),
                             tweet(3, "bo_s", "@anna_s @dan_m @bo_s")])
    pairs = label_pairs(c, {"1": N, "2": P, "3": P}, registry, "party")
    assert [(p.tweet_id, p.target) for p in pairs] == [("3", "anna_s"), ("3", "dan_m")]


def test_missing_sentiment(registry):
    c = corpus_of(registry, [tweet(1, "anna_s", "@dan_m")])
    with pytest.raises(ValueError, match="no sentiment"):
        label_pairs(c, {}, registry, "party")
    with pytest.raises(ValueError):
        label_pairs(c, {"1": N}, registry, "family")


def pair(rel, sentiment, grouping="party", author="a"):
    return PartisanPair("t", author, "b", grouping, rel, sentiment)


def test_count_direct_tally():
    pairs = ([pair(OUT_GROUP, N)] * 60 + [pair(OUT_GROUP, NEU)] * 40
             + [pair(IN_GROUP, P)] * 40 + [pair(IN_GROUP, N)] * 60)
    assert count(pairs).as_tuple() == (60, 100, 40, 100)


def test_count_boundaries():
    assert count([]).as_tuple() == (0, 0, 0, 0)
    c = count([pair(IN_GROUP, P)] * 7)
    assert c.as_tuple() == (0, 0, 7, 7)
    with pytest.raises(ValueError, match="mix"):
        count([pair(IN_GROUP, P), pair(IN_GROUP, P, grouping="bloc")])
    with pytest.raises(ValueError):
        PartisanCounts(5, 4, 0, 0)


def test_per_author_breakdown():
    c = count([pair(OUT_GROUP, N, author="x"), pair(IN_GROUP, P, author="y"), pair(OUT_GROUP, P, author="x")])
    assert c.per_author == {"x": (1, 2, 0, 0), "y": (0, 0, 1, 1)}


mentions = st.lists(st.sampled_from(HANDLES), max_size=3)
tweets = st.lists(st.tuples(st.sampled_from(HANDLES), mentions, st.sampled_from([P, NEU, N])),
                  min_size=1, max_size=25)


def build(registry, spec):
    ts = [tweet(i, a, " ".join(f"@{m}" for m in ms)) for i, (a, ms, _) in enumerate(spec)]
    return corpus_of(registry, ts), {str(i): s for i, (_, _, s) in enumerate(spec)}


@given(tweets, st.randoms())
def test_pair_invariants(spec, rnd):
    # hypothesis does not mix with function-scoped fixtures
    registry = PoliticianRegistry([
        Politician("anna_s", "Anna", "S", "left", True), Politician("bo_s", "Bo", "S", "left", True),
        Politician("cia_v", "Cia", "V", "left", True), Politician("dan_m", "Dan", "M", "right", True),
        Politician("eva_sd", "Eva", "SD", "right", False),
    ])
    c, sentiments = build(registry, spec)
    party = label_pairs(c, sentiments, registry, "party")
    bloc = label_pairs(c, sentiments, registry, "bloc")
    for p in party + bloc:
        assert not (p.is_np and p.is_pp)
        assert p.author != p.target
    cp, cb = count(party), count(bloc)
    assert cp.n_out >= cb.n_out
    assert cp.n_out + cp.n_in == cb.n_out + cb.n_in
    shuffled = list(c.tweets)
    rnd.shuffle(shuffled)
    assert label_pairs(corpus_of(registry, shuffled), sentiments, registry, "party") == party


def test_pairs_roundtrip(tmp_path, registry):
    c = corpus_of(registry, [tweet(1, "anna_s", "@dan_m @bo_s")])
    pairs = label_pairs(c, {"1": N}, registry, "bloc")
    write_pairs(pairs, tmp_path / "pairs.csv")
    assert read_pairs(tmp_path / "pairs.csv") == pairs
    header = (tmp_path / "pairs.csv").read_text().splitlines()[0]
    assert header == "tweet_id,author,target,grouping,relation,sentiment,is_np,is_pp"


def test_sentiment_bars():
    bars = sentiment_bars([pair(OUT_GROUP, N), pair(OUT_GROUP, N), pair(IN_GROUP, P), pair(IN_GROUP, NEU)])
    assert ("party", "out", "negative", 2) in bars and ("party", "in", "positive", 1) in bars
    assert all(s != "neutral" for _, _, s, _ in bars)


def test_model_rows(registry):
    c = corpus_of(registry, [tweet(1, "anna_s", "@dan_m @bo_s", likes=9, hour=23),
                             tweet(2, "eva_sd", "ingen"), tweet(3, "dan_m", "@eva_sd")])
    sentiments = {"1": N, "2": P, "3": N}
    rows = engagement_rows(c, sentiments, registry, "party")
    assert len(rows) == 3
    r1 = rows[0]
    assert r1.out_group and r1.in_group and r1.likes == 9 and r1.hour == 23
    assert not rows[1].out_group and not rows[1].in_group
    nps = np_rows(c, sentiments, registry, "bloc", {"anna_s": -0.4, "dan_m": 0.5})
    assert [r.nu for r in nps] == [1, 0, 0]
    assert nps[1].ideology is None
    assert nps[0].ideology_sq == (-0.4) ** 2
