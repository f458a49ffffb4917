import pytest
from hypothesis import given, strategies as st

from polarpipe.llm import API_KEY_ENV, ChatClient, RemoteUnavailable
from polarpipe.sentiment import (
    CLASSES, Classifier, ClassifierSpec, LabelCache, SentimentLabel, Unparseable, build_prompt,
    classify, classify_batch, evaluate, load_gold, parse_label,
)

P, NEU, N = SentimentLabel.POSITIVE, SentimentLabel.NEUTRAL, SentimentLabel.NEGATIVE
LEXICON = ClassifierSpec("lexicon", positive_words=("bra",), negative_words=("dålig",))


def test_english_prompt_verbatim():
    assert build_prompt("en") == (
        "As an AI with expertise in language and emotion analysis, your task is to analyze the "
        "sentiment of the following text. Return only the class of the sentiment either positive, "
        "neutral or negative"
    )


def test_swedish_prompt_is_fixed_resource():
    assert build_prompt("sv") == build_prompt("sv")
    assert "positiv" in build_prompt("sv") and build_prompt("sv") != build_prompt("en")
    with pytest.raises(ValueError):
        build_prompt("de")


@pytest.mark.parametrize("raw, label", [
    ("Negative.", N), (" positiv ", P), ("NEUTRAL", NEU), ("Sentiment: negativt", N),
    ("positive, not negative", P),
])
def test_parse_label(raw, label):
    assert parse_label(raw) is label


def test_parse_label_unparseable():
    with pytest.raises(Unparseable) as info:
        parse_label("I cannot determine this")
    assert info.value.raw == "I cannot determine this"


def test_spec_validation():
    with pytest.raises(ValueError):
        ClassifierSpec("remote")
    with pytest.raises(ValueError):
        ClassifierSpec("mock")
    with pytest.raises(ValueError):
        ClassifierSpec("oracle")
    assert ClassifierSpec("fixed-mock", label="neutral").kind == "mock"
    assert ClassifierSpec("remote-llm", endpoint="http://x", model_name="m").kind == "remote"


def test_mock_and_lexicon():
    mock = ClassifierSpec("mock", label="neutral")
    assert classify(mock, "whatever") is NEU
    assert classify(LEXICON, "bra bra dålig") is P
    assert classify(LEXICON, "bra dålig dålig") is N
    assert classify(LEXICON, "ingenting här") is NEU
    with pytest.raises(ValueError):
        classify(LEXICON, "")


def test_bundled_lexicon_covers_swedish_and_english():
    spec = ClassifierSpec("lexicon")
    assert classify(spec, "Vilken skandal") is N
    assert classify(spec, "great work") is P


@given(st.text(max_size=40).filter(str.strip))
def test_lexicon_is_pure(text):
    c = Classifier(LEXICON)
    assert c(text) is c(text)


def test_batch_order_and_isolation():
    calls = []

    class Flaky(Classifier):
        def __call__(self, text):
            calls.append(text)
            if text == "bad":
                raise Unparseable("???")
            return P if text.startswith("p") else N

    spec = ClassifierSpec("mock", label="neutral")
    out = classify_batch(spec, ["p1", "bad", "n1", "p1"], parallelism=3, classifier=Flaky(spec))
    assert out[0] is P and out[2] is N and out[3] is P
    assert isinstance(out[1], Unparseable)
    assert sorted(calls) == ["bad", "n1", "p1"]


def test_batch_parallel_matches_serial():
    texts = [f"{w} text {i}" for i, w in enumerate(["bra", "dålig", "inget"] * 10)]
    assert classify_batch(LEXICON, texts, 1) == classify_batch(LEXICON, texts, 8)


def test_remote_wire_format(chat_server, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret")
    server = chat_server(["Negative"])
    spec = ClassifierSpec("remote", endpoint=server.url, model_name="gpt-test", prompt_language="en")
    assert classify(spec, "tweet text") is N
    req = server.requests[0]
    assert req["path"] == "/v1/chat/completions"
    assert req["headers"]["Authorization"] == "Bearer secret"
    assert req["body"]["model"] == "gpt-test"
    assert req["body"]["temperature"] == 0.0
    assert req["body"]["messages"] == [
        {"role": "system", "content": build_prompt("en")},
        {"role": "user", "content": "tweet text"},
    ]


def test_remote_retries_transient_errors(chat_server):
    server = chat_server([503, 429, "positiv"])
    client = ChatClient(server.url, "m", max_retries=3, backoff=0.0)
    spec = ClassifierSpec("remote", endpoint=server.url, model_name="m")
    assert classify(spec, "x", client=client) is P
    assert len(server.requests) == 3


def test_remote_gives_up(chat_server):
    server = chat_server([500, 500, 500])
    client = ChatClient(server.url, "m", max_retries=2, backoff=0.0)
    with pytest.raises(RemoteUnavailable, match="3 attempts"):
        client.complete("sys", "user")
    server = chat_server([400])
    with pytest.raises(RemoteUnavailable, match="HTTP 400"):
        ChatClient(server.url, "m", backoff=0.0).complete("sys", "user")


def test_unreachable_endpoint():
    client = ChatClient("http://127.0.0.1:9", "m", max_retries=1, backoff=0.0, timeout=0.5)
    with pytest.raises(RemoteUnavailable):
        client.complete("sys", "user")


def test_duplicate_text_one_remote_call(chat_server, tmp_path):
    server = chat_server(default="negative")
    spec = ClassifierSpec("remote", endpoint=server.url, model_name="m")
    cache = LabelCache(tmp_path / "labels.json")
    out = classify_batch(spec, ["same", "same", "other"], parallelism=2, cache=cache)
    assert out == [N, N, N]
    assert len(server.requests) == 2
    cache.save()
    again = classify_batch(spec, ["same", "other"], cache=LabelCache(tmp_path / "labels.json"))
    assert again == [N, N]
    assert len(server.requests) == 2


def test_unparseable_reply_isolated(chat_server):
    server = chat_server(default="positive")
    server.replies = ["no idea"]
    spec = ClassifierSpec("remote", endpoint=server.url, model_name="m")
    out = classify_batch(spec, ["a", "b"], parallelism=1)
    assert isinstance(out[0], Unparseable) and out[1] is P


def test_cache_identity_separates_models():
    a = ClassifierSpec("remote", endpoint="http://x/", model_name="m1")
    b = ClassifierSpec("remote", endpoint="http://x", model_name="m2")
    c = ClassifierSpec("remote", endpoint="http://x", model_name="m1", prompt_language="en")
    assert len({a.identity, b.identity, c.identity}) == 3
    assert a.identity == ClassifierSpec("remote", endpoint="http://x", model_name="m1").identity


def test_metrics_fixture():
    gold = [P, P, N, N, NEU, NEU]
    pred = [P, N, N, N, NEU, P]
    r = evaluate(pred, gold)
    assert abs(r.macro_f1 - 0.655556) < 1e-6
    assert r.macro_f1 == pytest.approx((0.5 + 0.8 + 2 / 3) / 3, abs=1e-12)
    assert r.balanced_accuracy == pytest.approx(2 / 3, abs=1e-12)
    assert r.confusion.sum() == 6


def test_perfect_and_errors():
    gold = [P, NEU, N]
    r = evaluate(gold, gold)
    assert r.macro_f1 == 1.0 and r.balanced_accuracy == 1.0
    with pytest.raises(ValueError):
        evaluate([P], [P, N])
    with pytest.raises(ValueError):
        evaluate([], [])


def test_absent_gold_class_excluded():
    r = evaluate([P, P, N], [P, N, N])
    assert r.balanced_accuracy == pytest.approx(0.75)
    assert r.macro_f1 == pytest.approx((2 / 3 + 2 / 3) / 2)


labels = st.sampled_from(CLASSES)


@given(st.lists(st.tuples(labels, labels), min_size=1, max_size=40), st.randoms())
def test_evaluate_permutation_invariant(pairs, rnd):
    pred, gold = map(list, zip(*pairs))
    base = evaluate(pred, gold)
    shuffled = pairs[:]
    rnd.shuffle(shuffled)
    p2, g2 = map(list, zip(*shuffled))
    other = evaluate(p2, g2)
    assert other.macro_f1 == pytest.approx(base.macro_f1)
    assert other.balanced_accuracy == pytest.approx(base.balanced_accuracy)
    assert (base.confusion.sum(axis=1) == [gold.count(c) for c in CLASSES]).all()
    assert 0 <= base.macro_f1 <= 1 and 0 <= base.balanced_accuracy <= 1


@given(st.lists(st.tuples(labels, labels), min_size=1, max_size=40),
       st.permutations(list(CLASSES)))
def test_evaluate_relabel_invariant(pairs, perm):
    mapping = dict(zip(CLASSES, perm))
    pred, gold = map(list, zip(*pairs))
    base = evaluate(pred, gold)
    other = evaluate([mapping[p] for p in pred], [mapping[g] for g in gold])
    assert other.macro_f1 == pytest.approx(base.macro_f1)
    assert other.balanced_accuracy == pytest.approx(base.balanced_accuracy)


def test_load_gold(tmp_path):
    p = tmp_path / "gold.csv"
    p.write_text("tweet_id,label\n1,positive\n2,Negative\n")
    assert load_gold(p) == {"1": P, "2": N}
    p.write_text("tweet_id,label\n1,happy\n")
    with pytest.raises(ValueError, match=":2:"):
        load_gold(p)
