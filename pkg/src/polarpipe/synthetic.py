"""Synthetic data generators.

Used for parameter-recovery checks and to build the small fixture corpus
that exercises the whole pipeline offline.
"""

from __future__ import annotations

import csv
import json
from dataclasses import replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy.special import expit, ndtr

from .bayes.models import (
    N_HOURS,
    Design,
    EngagementRow,
    NPRow,
    engagement_design,
)

ENGAGEMENT_TRUTH = {
    "Intercept": 1.0,
    "OutBloc": 0.7,
    "OutBloc:Negative": 0.5,
    "InBloc:Positive": 0.3,
    "RightBloc": 0.4,
    "NegativeSentiment": 0.2,
    "PositiveSentiment": 0.25,
    "sigma_author": 0.5,
    "sigma_hour": 0.3,
    "sigma_resid": 0.8,
}

NP_TRUTH = {
    "Intercept": -1.0,
    "IdeologyMetric": -0.3,
    "IdeologyMetric^2": 1.0,
    "Likes": 0.5,
    "Retweets": 0.25,
    "sigma_author": 0.4,
    "sigma_hour": 0.2,
}


def simulate_engagement(n_rows: int = 2000, n_authors: int = 30, seed: int = 0,
                        truth: dict | None = None) -> tuple[list[EngagementRow], Design, dict]:
    """Draw bloc-grouping engagement data from the hierarchical Gaussian model.

    Returns the rows, the design whose outcome holds the simulated
    continuous ``log1p`` reaction, and the generating parameters.
    """
    truth = dict(ENGAGEMENT_TRUTH if truth is None else truth)
    rng = np.random.default_rng(seed)
    authors = [f"pol{i:02d}" for i in range(n_authors)]
    blocs = ["left" if i % 2 == 0 else "right" for i in range(n_authors)]
    g_author = rng.normal(0.0, truth["sigma_author"], n_authors)
    g_hour = rng.normal(0.0, truth["sigma_hour"], N_HOURS)

    author_idx = rng.integers(0, n_authors, n_rows)
    hours = rng.integers(0, N_HOURS, n_rows)
    sentiment = rng.choice(["negative", "neutral", "positive"], n_rows, p=[0.35, 0.45, 0.2])
    target = rng.choice(["none", "out", "in"], n_rows, p=[0.4, 0.35, 0.25])
    rows = []
    for i in range(n_rows):
        a = author_idx[i]
        rows.append(EngagementRow(
            tweet_id=f"t{i}", author=authors[a], hour=int(hours[i]), likes=0, retweets=0,
            sentiment=str(sentiment[i]), out_group=target[i] == "out",
            in_group=target[i] == "in", bloc=blocs[a], party="S",
        ))
    design = engagement_design(rows, "bloc", "likes")
    beta = np.array([truth[c] for c in design.columns])
    mu = (truth["Intercept"] + design.X @ beta + g_author[design.author] + g_hour[design.hour])
    y = mu + rng.normal(0.0, truth["sigma_resid"], n_rows)
    counts = np.maximum(np.rint(np.expm1(np.maximum(y, 0.0))), 0).astype(int)
    rows = [replace(r, likes=int(c)) for r, c in zip(rows, counts)]
    return rows, replace(design, y=y), truth


def simulate_np(n_rows: int = 2000, n_authors: int = 30, seed: int = 0,
                truth: dict | None = None) -> tuple[list[NPRow], dict]:
    """Draw NP indicators from the hierarchical logistic model."""
    truth = dict(NP_TRUTH if truth is None else truth)
    rng = np.random.default_rng(seed)
    ideology = np.clip(np.linspace(-0.95, 0.95, n_authors) + rng.normal(0, 0.03, n_authors), -1, 1)
    ideology = np.round(ideology, 2)
    g_author = rng.normal(0.0, truth["sigma_author"], n_authors)
    g_hour = rng.normal(0.0, truth["sigma_hour"], N_HOURS)
    author_idx = rng.integers(0, n_authors, n_rows)
    hours = rng.integers(0, N_HOURS, n_rows)
    likes = np.maximum(np.rint(np.expm1(rng.normal(1.0, 0.8, n_rows))), 0).astype(int)
    retweets = np.maximum(np.rint(np.expm1(rng.normal(0.6, 0.6, n_rows))), 0).astype(int)
    x = ideology[author_idx]
    eta = (truth["Intercept"] + truth["IdeologyMetric"] * x + truth["IdeologyMetric^2"] * x**2
           + truth["Likes"] * np.log1p(likes) + truth["Retweets"] * np.log1p(retweets)
           + g_author[author_idx] + g_hour[hours])
    nu = (rng.uniform(size=n_rows) < expit(eta)).astype(int)
    rows = [
        NPRow(tweet_id=f"t{i}", author=f"pol{author_idx[i]:02d}", hour=int(hours[i]),
              nu=int(nu[i]), ideology=float(x[i]), likes=int(likes[i]), retweets=int(retweets[i]))
        for i in range(n_rows)
    ]
    return rows, truth


def simulate_rollcalls(n_legislators: int = 20, n_votes: int = 100, seed: int = 0,
                       flip_rate: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic threshold votes from evenly spaced ideal points.

    Each vote has a random cutpoint in the legislators' range and a random
    yea direction; a fraction ``flip_rate`` of casts is then inverted.
    Returns ``(true_points, yea)`` with ``yea`` a boolean matrix.
    """
    rng = np.random.default_rng(seed)
    points = np.linspace(-1.0, 1.0, n_legislators)
    cut = rng.uniform(-0.95, 0.95, n_votes)
    direction = rng.choice([-1.0, 1.0], n_votes)
    yea = (direction[None, :] * (points[:, None] - cut[None, :])) > 0
    if flip_rate > 0:
        flips = rng.uniform(size=yea.shape) < flip_rate
        yea = yea ^ flips
    return points, yea


# --- fixture corpus -------------------------------------------------------

FIXTURE_PARTIES = {
    "V": ("left", 1.6), "S": ("left", 3.6), "MP": ("left", 3.8), "C": ("right", 6.0),
    "L": ("right", 6.4), "KD": ("right", 7.6), "M": ("right", 7.4), "SD": ("right", 8.6),
}
POSITIVE_WORDS = ["bra", "tack", "stolt", "glad", "grattis", "fantastisk"]
NEGATIVE_WORDS = ["dålig", "skandal", "svek", "fel", "katastrof", "oansvarig"]
NEUTRAL_WORDS = ["riksdagen", "budget", "skola", "vård", "debatt", "idag", "förslag", "möte"]


def write_fixture(out_dir: str | Path, seed: int = 7, n_tweets: int = 1200,
                  per_party: int = 3) -> dict:
    """Write a small self-consistent input set and a run config.

    Produces politicians.csv, tweets.jsonl, rollcalls.csv, ches.csv,
    gold.csv and config.json in ``out_dir`` and returns the config dict.
    Tweet texts are built from a small Swedish word list so the bundled
    lexicon classifier recovers their sentiment.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    politicians = []
    for party, (bloc, _) in FIXTURE_PARTIES.items():
        for j in range(per_party):
            handle = f"{party.lower()}_pol{j}"
            in_parl = not (j == per_party - 1 and party in ("MP", "KD"))
            politicians.append((handle, f"{party} Politiker {j}", party, bloc, int(in_parl)))
    with open(out / "politicians.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["handle", "name", "party", "bloc", "in_parliament"])
        w.writerows(politicians)

    with open(out / "ches.csv", "w", newline="", encoding="utf-8") as fh:
        fh.write("# scale: 0-10\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["party", "score"])
        for party, (_, score) in FIXTURE_PARTIES.items():
            w.writerow([party, score])

    # ideal points for roll calls follow the expert placement
    points = {h: (FIXTURE_PARTIES[p][1] - 5.0) / 5.0 + rng.normal(0, 0.08)
              for h, _, p, _, ip in politicians if ip}
    with open(out / "rollcalls.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vote_id", "politician_id", "cast"])
        for v in range(80):
            cut = rng.uniform(-0.8, 0.8)
            direction = rng.choice([-1.0, 1.0])
            for h, x in points.items():
                u = rng.uniform()
                if u < 0.04:
                    cast = "absent"
                elif u < 0.06:
                    cast = "abstain"
                else:
                    p_yea = ndtr(4.0 * direction * (x - cut))
                    cast = "yea" if rng.uniform() < p_yea else "nay"
                w.writerow([f"v{v:03d}", h, cast])

    handles = [p[0] for p in politicians]
    party_of = {p[0]: p[2] for p in politicians}
    bloc_of = {p[0]: p[3] for p in politicians}
    extremity = {h: abs((FIXTURE_PARTIES[party_of[h]][1] - 5.0) / 5.0) for h in handles}
    start = datetime(2021, 6, 22, tzinfo=timezone.utc)
    span = (datetime(2023, 3, 15, tzinfo=timezone.utc) - start).total_seconds()
    gold_rows = []
    with open(out / "tweets.jsonl", "w", encoding="utf-8") as fh:
        for i in range(n_tweets):
            author = handles[rng.integers(len(handles))]
            kind = rng.choice(["none", "in", "out"], p=[0.35, 0.3, 0.35])
            if kind == "in":
                pool = [h for h in handles if party_of[h] == party_of[author] and h != author]
                if rng.uniform() < 0.3:
                    pool = [h for h in handles if bloc_of[h] == bloc_of[author] and party_of[h] != party_of[author]]
            elif kind == "out":
                pool = [h for h in handles if bloc_of[h] != bloc_of[author]]
                if rng.uniform() < 0.3:
                    pool = [h for h in handles if bloc_of[h] == bloc_of[author] and party_of[h] != party_of[author]]
            else:
                pool = []
            target = pool[rng.integers(len(pool))] if pool else None
            if kind == "out":
                probs = np.array([0.15, 0.35, 0.35 + 0.15 * extremity[author]])
            elif kind == "in":
                probs = np.array([0.45, 0.4, 0.1])
            else:
                probs = np.array([0.15, 0.6, 0.25])
            sentiment = rng.choice(["positive", "neutral", "negative"], p=probs / probs.sum())
            words = list(rng.choice(NEUTRAL_WORDS, 4))
            explicit = rng.uniform() >= 0.1  # otherwise the tone is implied, no lexicon word
            if explicit and sentiment == "positive":
                words.append(rng.choice(POSITIVE_WORDS))
            elif explicit and sentiment == "negative":
                words.append(rng.choice(NEGATIVE_WORDS))
            rng.shuffle(words)
            text = " ".join(words)
            mentions = []
            if target is not None:
                text = f"@{target} {text}"
                mentions = [f"@{target}"]
            created = start + timedelta(seconds=float(rng.uniform(0, span)))
            base = 2.0 + 0.6 * (kind == "out") + 0.5 * (sentiment == "negative")
            likes = int(max(0, np.rint(np.expm1(rng.normal(base, 0.9)))))
            retweets = int(max(0, np.rint(np.expm1(rng.normal(base - 1.0, 0.8)))))
            tweet = {
                "id": f"{1000000 + i}",
                "author_handle": author,
                "created_at": created.strftime("%Y-%m-%dT%H:%M:%SZ"),
                "text": text,
                "likes": likes,
                "retweets": retweets,
                "mentions": mentions,
            }
            fh.write(json.dumps(tweet, ensure_ascii=False) + "\n")
            if i < 200:
                gold_rows.append((tweet["id"], str(sentiment)))

    with open(out / "gold.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tweet_id", "label"])
        w.writerows(gold_rows)

    config = {
        "inputs": {
            "politicians": "politicians.csv",
            "tweets": "tweets.jsonl",
            "rollcalls": "rollcalls.csv",
            "ches": "ches.csv",
            "gold": "gold.csv",
        },
        "classifier": {"kind": "lexicon"},
        "groupings": ["party", "bloc"],
        "ideology_sources": ["CHES", "RollCall"],
        "right_anchor": "sd_pol0",
        "rollcall_filter": {"min_minority_share": 0.025, "min_casts": 20},
        "mcmc": {
            "h1": {"chains": 6, "iterations": 2000, "warmup": 1000},
            "h2": {"chains": 4, "iterations": 600, "warmup": 300},
            "h3": {"chains": 4, "iterations": 600, "warmup": 300},
        },
        "network": {"iterations": 300},
        "seed": 2024,
        "output_dir": "out",
    }
    with open(out / "config.json", "w", encoding="utf-8") as fh:
        json.dump(config, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return config
