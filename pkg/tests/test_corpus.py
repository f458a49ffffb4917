import json
from datetime import datetime, timezone

import pytest
from hypothesis import given, strategies as st

from polarpipe.corpus import (
    CorpusError, Politician, PoliticianRegistry, Tweet, load_politicians, load_tweets,
    normalize_handle, resolve_mentions, summarize,
)


def write_tweets(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n", encoding="utf-8")


def tweet(i, author="anna_s", ts="2022-03-01T10:00:00Z", text="hej", **kw):
    return {"id": str(i), "author_handle": author, "created_at": ts, "text": text,
            "likes": kw.pop("likes", 1), "retweets": kw.pop("retweets", 0), **kw}


def test_load_politicians(tmp_path):
    p = tmp_path / "pol.csv"
    p.write_text("handle,name,party,bloc,in_parliament\nAnna_S,Anna,S,left,1\nbo_m,Bo,M,Right,0\n")
    reg = load_politicians(p)
    assert len(reg) == 2
    assert reg["anna_s"].party == "S"
    assert reg["@ANNA_S"].in_parliament
    assert reg["bo_m"].bloc == "right"
    assert reg.party_bloc() == {"M": "right", "S": "left"}


@pytest.mark.parametrize("body, message", [
    ("handle,name,party,bloc,in_parliament\na,A,S,left,1\nA,B,S,left,1\n", ":3: duplicate handle"),
    ("handle,name,party,bloc,in_parliament\na,A,S,centre,1\n", ":2: unknown bloc"),
    ("handle,name,party,bloc,in_parliament\na,A,S,left,yes\n", "in_parliament"),
    ("handle,name,party\na,A,S\n", "missing columns"),
])
def test_load_politicians_errors(tmp_path, body, message):
    p = tmp_path / "pol.csv"
    p.write_text(body)
    with pytest.raises(CorpusError, match=message):
        load_politicians(p)


def test_registry_rejects_duplicates_and_missing_party():
    with pytest.raises(CorpusError):
        PoliticianRegistry([Politician("a", "A", "S", "left", True), Politician("A", "B", "M", "right", True)])
    with pytest.raises(CorpusError):
        PoliticianRegistry([Politician("a", "A", "", "left", True)])


def test_load_tweets_drops_and_sorts(tmp_path, registry):
    p = tmp_path / "t.jsonl"
    write_tweets(p, [
        tweet(3, ts="2022-03-02T10:00:00Z"),
        tweet(1, ts="2022-03-01T10:00:00Z"),
        tweet(2, author="stranger"),
        tweet(4, ts="2020-01-01T00:00:00Z"),
        tweet(5, ts="2023-03-16T00:00:01Z"),
    ])
    corpus = load_tweets(p, registry)
    assert [t.id for t in corpus] == ["1", "3"]
    assert corpus.dropped.unregistered_author == 1
    assert corpus.dropped.outside_window == 2
    assert load_tweets(p, registry, window=None).dropped.outside_window == 0


@pytest.mark.parametrize("record, message", [
    (tweet(1, likes=-1), "non-negative"),
    (tweet(1, retweets=1.5), "integer"),
    ({"id": "1", "author_handle": "anna_s"}, "missing fields"),
    (tweet(1, ts="yesterday"), "bad created_at"),
])
def test_load_tweets_errors(tmp_path, registry, record, message):
    p = tmp_path / "t.jsonl"
    write_tweets(p, [tweet(9), record])
    with pytest.raises(CorpusError, match=f":2: .*{message}"):
        load_tweets(p, registry)


def test_malformed_json_and_duplicate_id(tmp_path, registry):
    p = tmp_path / "t.jsonl"
    p.write_text(json.dumps(tweet(1)) + "\n{not json\n")
    with pytest.raises(CorpusError, match=":2: malformed JSON"):
        load_tweets(p, registry)
    write_tweets(p, [tweet(1), tweet(1)])
    with pytest.raises(CorpusError, match="duplicate tweet id"):
        load_tweets(p, registry)


def test_timestamps_normalised_to_utc(tmp_path, registry):
    p = tmp_path / "t.jsonl"
    write_tweets(p, [tweet(1, ts="2022-03-01T10:00:00+02:00")])
    t = load_tweets(p, registry).tweets[0]
    assert t.created_at == datetime(2022, 3, 1, 8, tzinfo=timezone.utc)
    assert t.hour == 8


def make_tweet(text, mentions=None, author="anna_s"):
    return Tweet("1", author, datetime(2022, 1, 1, tzinfo=timezone.utc), text, 0, 0, mentions)


def test_resolve_mentions(registry):
    r = resolve_mentions(make_tweet("@Dan_M hej @dan_m och @nobody @cia_v"), registry)
    assert r.handles == ["dan_m", "cia_v"]
    assert r.skipped == 1
    r = resolve_mentions(make_tweet("@dan_m", mentions=("@eva_sd",)), registry)
    assert r.handles == ["eva_sd"]


def test_summarize(tmp_path, registry):
    p = tmp_path / "t.jsonl"
    write_tweets(p, [tweet(1), tweet(2, author="dan_m"), tweet(3, author="bo_s", ts="2022-03-02T01:00:00Z")])
    s = summarize(load_tweets(p, registry))
    assert s.total_tweets == 3
    assert s.bloc_share == pytest.approx({"left": 2 / 3, "right": 1 / 3})
    assert s.party_counts == {"M": 1, "S": 2}
    assert list(s.daily_counts.values()) == [2, 1]


def test_summarize_empty(tmp_path, registry):
    p = tmp_path / "t.jsonl"
    p.write_text("")
    with pytest.raises(CorpusError):
        summarize(load_tweets(p, registry))


@given(st.text(alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd")), min_size=1, max_size=12))
def test_normalize_handle_idempotent(handle):
    once = normalize_handle(handle)
    assert normalize_handle(once) == once
    assert normalize_handle("@" + handle) == once
