"""Serialisation of draws and summaries, and the report bundle (tables and figure data)."""

from __future__ import annotations

import csv
import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .bayes.diagnostics import PosteriorSummary, summarize_draws

SCHEMA_VERSIONS = {
    "table1": 1,
    "table2": 1,
    "table3": 1,
    "table4": 1,
    "fig1_tweets_by_date": 1,
    "fig2_partisan_counts": 1,
    "fig4_ratio_draws": 1,
    "fig5_party_probability_draws": 1,
    "draws": 1,
    "summary": 1,
    "network": 1,
}


class ReportError(RuntimeError):
    pass


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, (np.floating, np.integer)):
        return _clean(obj.item())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, PosteriorSummary):
        return _clean(obj.to_dict())
    if isinstance(obj, Mapping):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def write_json(path: str | Path, obj) -> None:
    """Sorted-key JSON with non-finite floats written as null."""
    text = json.dumps(_clean(obj), indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def read_json(path: str | Path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_draws(path: str | Path, draws: Mapping[str, np.ndarray]) -> None:
    """Long-format ``chain,iteration,parameter,value`` file; arrays are (chains, draws)."""
    def rows():
        for name, arr in draws.items():
            arr = np.atleast_2d(np.asarray(arr, dtype=float))
            for c in range(arr.shape[0]):
                for i in range(arr.shape[1]):
                    yield c, i, name, float(arr[c, i])
    write_csv(path, ("chain", "iteration", "parameter", "value"), rows())


def read_draws(path: str | Path) -> dict[str, np.ndarray]:
    cells: dict[str, dict[tuple[int, int], float]] = defaultdict(dict)
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cells[row["parameter"]][(int(row["chain"]), int(row["iteration"]))] = float(row["value"])
    out = {}
    for name, values in cells.items():
        n_chains = max(c for c, _ in values) + 1
        n_iter = max(i for _, i in values) + 1
        arr = np.full((n_chains, n_iter), np.nan)
        for (c, i), v in values.items():
            arr[c, i] = v
        out[name] = arr
    return out


def summaries(draws: Mapping[str, np.ndarray]) -> dict[str, PosteriorSummary]:
    return {name: summarize_draws(arr) for name, arr in draws.items()}


# --- report bundle --------------------------------------------------------

def table1(evaluations: Mapping[str, dict]) -> dict:
    """Per-classifier macro F1 and balanced accuracy against the gold labels."""
    return {
        "schema": SCHEMA_VERSIONS["table1"],
        "title": "Classifier performance: macro F1 and balanced accuracy",
        "rows": [{"model": name, "f1": ev["macro_f1"], "balanced_accuracy": ev["balanced_accuracy"],
                  "n": ev["n"]} for name, ev in sorted(evaluations.items())],
        "details": dict(evaluations),
    }


def table2(h1: Mapping[str, dict]) -> dict:
    """Rate comparison per grouping level."""
    return {
        "schema": SCHEMA_VERSIONS["table2"],
        "title": "Likelihood of negative and positive partisan mentions (H1)",
        "groupings": {g: {"counts": v["counts"], "parameters": v["parameters"]}
                      for g, v in sorted(h1.items())},
    }


def table3(h2: Mapping[str, dict]) -> dict:
    """Engagement model coefficients, one block per (grouping, reaction)."""
    return {
        "schema": SCHEMA_VERSIONS["table3"],
        "title": "Engagement with negative versus positive partisan tweets (H2)",
        "models": {key: {"coefficients": v["coefficients"], "scales": v["scales"],
                         "engagement_ratio": v["derived"]["EngagementRatio"],
                         "expected_reactions": v["derived"]["levels"],
                         "n_rows": v["n_rows"]}
                   for key, v in sorted(h2.items())},
    }


def table4(h3: Mapping[str, dict]) -> dict:
    """NP propensity coefficients and per-party probabilities."""
    return {
        "schema": SCHEMA_VERSIONS["table4"],
        "title": "Likelihood of posting negative partisan tweets (H3)",
        "models": {key: {"coefficients": v["coefficients"], "scales": v["scales"],
                         "party_probability": v["derived"]["party_probability"],
                         "party_ratios": v["derived"]["party_ratios"],
                         "most_likely": v["derived"]["most_likely"],
                         "least_likely": v["derived"]["least_likely"],
                         "n_rows": v["n_rows"], "n_dropped": v["n_dropped"]}
                   for key, v in sorted(h3.items())},
    }


def long_draw_rows(prefix: Sequence, arr: np.ndarray):
    arr = np.atleast_2d(arr)
    for c in range(arr.shape[0]):
        for i in range(arr.shape[1]):
            yield (*prefix, c, i, float(arr[c, i]))
