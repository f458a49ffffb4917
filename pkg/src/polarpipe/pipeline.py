"""End-to-end runs: config validation, cached stages and the run manifest.

Each stage writes into ``<output_dir>/<stage>/`` and records a cache key
(hash of its configuration slice, the input files it reads and the
outputs of the stages it depends on) in ``<output_dir>/.cache/``.  A
stage whose key and outputs are unchanged is skipped.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import shutil
import time
import zlib
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .bayes.mcmc import MCMCConfig
from .bayes.models import (
    engagement_levels, engagement_ratio_draws, fit_engagement, fit_np_propensity,
    np_probability_by_party,
)
from .bayes.rates import PARAMETERS as RATE_PARAMETERS, poisson_rate_test
from .corpus import STUDY_WINDOW, TweetCorpus, load_politicians, load_tweets, parse_timestamp, summarize
from .ideology import (
    SOURCES, IdealPointConfig, assemble_profiles, estimate_ideal_points, filter_votes,
    llm_rate, load_expert_ratings, load_rollcalls, party_scores, read_profiles, source_table,
    write_profiles,
)
from .network import LayoutConfig, build_graph, homogeneity, layout, render_svg, write_edges, write_positions
from .partisanship import (
    GROUPINGS, PartisanCounts, count, engagement_rows, label_pairs, np_rows, read_pairs,
    sentiment_bars, write_pairs,
)
from .report import (
    SCHEMA_VERSIONS, ReportError, long_draw_rows, read_draws, read_json, summaries, table1,
    table2, table3, table4, write_csv, write_draws, write_json,
)
from .sentiment import ClassifierSpec, LabelCache, SentimentLabel, classify_batch, evaluate, load_gold

log = logging.getLogger(__name__)

STAGES = ("ingest", "classify", "ideology", "label", "h1", "h2", "h3", "network", "report")
DEPENDS = {
    "ingest": (),
    "classify": ("ingest",),
    "ideology": ("ingest",),
    "label": ("classify",),
    "h1": ("label",),
    "h2": ("label",),
    "h3": ("label", "ideology"),
    "network": ("label",),
    "report": (),
}
REACTIONS = ("likes", "retweets")
MCMC_DEFAULTS = {
    "h1": {"chains": 6, "iterations": 2000, "warmup": 1000},
    "h2": {"chains": 8, "iterations": 2000, "warmup": 1000},
    "h3": {"chains": 8, "iterations": 2000, "warmup": 1000},
}


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def canonical_hash(obj) -> str:
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def derive_seed(seed: int, *names: str) -> int:
    """Stable per-task seed from the run seed and a task label."""
    key = [int(seed)] + [zlib.crc32(n.encode("utf-8")) for n in names]
    return int(np.random.SeedSequence(key).generate_state(1, dtype=np.uint32)[0])


# --- config ---------------------------------------------------------------

@dataclass(frozen=True)
class RunConfig:
    raw: dict
    base_dir: Path
    inputs: dict[str, Path]
    classifier: ClassifierSpec
    classifier_name: str
    compare_classifiers: dict[str, ClassifierSpec]
    text_field: str
    parallelism: int
    groupings: tuple[str, ...]
    ideology_sources: tuple[str, ...]
    right_anchor: str | None
    rollcall_filter: dict
    rating_model: ClassifierSpec | None
    party_names: dict[str, str]
    mcmc: dict[str, MCMCConfig]
    network: dict
    seed: int
    output_dir: Path
    window: tuple[datetime, datetime] | None

    @property
    def hash(self) -> str:
        return canonical_hash(self.raw)

    @classmethod
    def from_file(cls, path: str | Path, *, seed: int | None = None, out: str | Path | None = None,
                  grouping: str | None = None) -> "RunConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        if seed is not None:
            data["seed"] = seed
        if out is not None:
            data["output_dir"] = str(Path(out).resolve())
        if grouping is not None:
            data["groupings"] = list(GROUPINGS) if grouping == "both" else [grouping]
        return cls.from_dict(data, path.parent.resolve())

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path) -> "RunConfig":
        base = Path(base_dir)
        if "seed" not in data:
            raise ConfigError("seed is required")
        seed = data["seed"]
        if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
            raise ConfigError(f"seed must be a non-negative integer, got {seed!r}")

        groupings = tuple(data.get("groupings", GROUPINGS))
        if not groupings or any(g not in GROUPINGS for g in groupings):
            raise ConfigError(f"groupings must be a non-empty subset of {GROUPINGS}, got {list(groupings)}")
        sources = tuple(data.get("ideology_sources", ("CHES",)))
        if not sources or any(s not in SOURCES for s in sources):
            raise ConfigError(f"ideology_sources must be a non-empty subset of {SOURCES}, got {list(sources)}")

        raw_inputs = data.get("inputs")
        if not isinstance(raw_inputs, dict):
            raise ConfigError("inputs must be an object of file paths")
        needed = {"politicians", "tweets"}
        if "RollCall" in sources:
            needed.add("rollcalls")
        if "CHES" in sources:
            needed.add("ches")
        inputs = {}
        for key in ("politicians", "tweets", "rollcalls", "ches", "gold"):
            value = raw_inputs.get(key)
            if value is None:
                if key in needed:
                    raise ConfigError(f"inputs.{key} is required")
                continue
            p = Path(value)
            p = p if p.is_absolute() else base / p
            if key not in needed and key != "gold":
                if not p.exists():
                    log.info("ignoring unused input %s (%s)", key, p)
                continue
            if not p.exists():
                raise ConfigError(f"inputs.{key}: {p} does not exist")
            inputs[key] = p

        def spec(obj, where):
            if not isinstance(obj, dict):
                raise ConfigError(f"{where} must be an object")
            body = {k: v for k, v in obj.items() if k not in ("name", "text_field", "parallelism")}
            try:
                return ClassifierSpec.from_dict(body)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{where}: {exc}") from None

        clf_raw = data.get("classifier", {"kind": "lexicon"})
        classifier = spec(clf_raw, "classifier")
        compare = {name: spec(obj, f"compare_classifiers.{name}")
                   for name, obj in sorted(data.get("compare_classifiers", {}).items())}
        text_field = clf_raw.get("text_field", "text")
        if text_field not in ("text", "text_en"):
            raise ConfigError("classifier.text_field must be 'text' or 'text_en'")
        parallelism = int(clf_raw.get("parallelism", 4))
        if parallelism < 1:
            raise ConfigError("classifier.parallelism must be >= 1")

        rating_model = None
        if any(s.startswith("GPT_") for s in sources):
            if "rating_model" not in data:
                raise ConfigError("GPT ideology sources need a rating_model")
            rating_model = spec(data["rating_model"], "rating_model")
            if rating_model.kind != "remote":
                raise ConfigError("rating_model must be a remote spec")
        right_anchor = data.get("right_anchor")
        if "RollCall" in sources and not right_anchor:
            raise ConfigError("RollCall source needs right_anchor")

        mcmc = {}
        for model, defaults in MCMC_DEFAULTS.items():
            try:
                mcmc[model] = MCMCConfig.from_dict({**defaults, **data.get("mcmc", {}).get(model, {})})
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"mcmc.{model}: {exc}") from None

        rc_filter = {"min_minority_share": 0.025, "min_casts": 20, **data.get("rollcall_filter", {})}
        window = STUDY_WINDOW
        if "study_window" in data:
            w = data["study_window"]
            try:
                window = None if w is None else (parse_timestamp(w[0]), parse_timestamp(w[1]))
            except (TypeError, ValueError, IndexError):
                raise ConfigError("study_window must be null or [start, end] timestamps") from None

        out = Path(data.get("output_dir", "out"))
        return cls(
            raw=data,
            base_dir=base,
            inputs=inputs,
            classifier=classifier,
            classifier_name=clf_raw.get("name", classifier.kind),
            compare_classifiers=compare,
            text_field=text_field,
            parallelism=parallelism,
            groupings=groupings,
            ideology_sources=sources,
            right_anchor=right_anchor,
            rollcall_filter=rc_filter,
            rating_model=rating_model,
            party_names=dict(data.get("party_names", {})),
            mcmc=mcmc,
            network={"iterations": 500, "attraction_gain": 1.0, "repulsion_gain": 1.0, "svg": True,
                     **data.get("network", {})},
            seed=seed,
            output_dir=out if out.is_absolute() else base / out,
            window=window,
        )

    def slice_for(self, stage: str) -> dict:
        """The part of the config a stage's outputs depend on."""
        r = self.raw
        if stage == "ingest":
            return {"window": r.get("study_window", "default")}
        if stage == "classify":
            return {"classifier": self.classifier.identity, "text_field": self.text_field,
                    "compare": {k: v.identity for k, v in self.compare_classifiers.items()}}
        if stage == "ideology":
            return {"sources": self.ideology_sources, "right_anchor": self.right_anchor,
                    "filter": self.rollcall_filter, "seed": self.seed,
                    "rating": None if self.rating_model is None else self.rating_model.identity,
                    "party_names": self.party_names}
        if stage == "label":
            return {"groupings": self.groupings}
        if stage in ("h1", "h2", "h3"):
            return {"mcmc": self.mcmc[stage].to_dict(), "seed": self.seed, "groupings": self.groupings,
                    "sources": self.ideology_sources if stage == "h3" else None}
        if stage == "network":
            return {"network": self.network, "seed": self.seed}
        return {}

    def inputs_for(self, stage: str) -> list[str]:
        files = {
            "ingest": ["politicians", "tweets"],
            "classify": ["politicians", "tweets", "gold"],
            "ideology": ["politicians", "rollcalls", "ches"],
            "label": ["politicians", "tweets"],
            "h2": ["politicians", "tweets"],
            "h3": ["politicians", "tweets"],
            "network": ["politicians"],
        }.get(stage, [])
        return [k for k in files if k in self.inputs]


# --- manifest -------------------------------------------------------------

@dataclass
class StageRecord:
    name: str
    status: str
    seconds: float = 0.0
    outputs: dict[str, str] = field(default_factory=dict)
    error: str | None = None

    def to_dict(self) -> dict:
        return {"name": self.name, "status": self.status, "seconds": round(self.seconds, 3),
                "outputs": self.outputs, "error": self.error}


@dataclass
class RunManifest:
    config_hash: str
    input_hashes: dict[str, str]
    version: str
    stages: list[StageRecord] = field(default_factory=list)
    schema_versions: dict[str, int] = field(default_factory=lambda: dict(SCHEMA_VERSIONS))

    def to_dict(self) -> dict:
        return {
            "config_hash": self.config_hash,
            "input_hashes": self.input_hashes,
            "version": self.version,
            "schema_versions": self.schema_versions,
            "stages": [s.to_dict() for s in self.stages],
        }

    def output_hashes(self) -> dict[str, str]:
        out = {}
        for s in self.stages:
            out.update(s.outputs)
        return out


# --- pipeline -------------------------------------------------------------

def stages_for(target: str) -> list[str]:
    """``target`` and everything it depends on, in run order."""
    if target == "run":
        return list(STAGES)
    if target not in STAGES:
        raise ValueError(f"unknown stage {target!r}")
    needed = set()
    todo = [target]
    while todo:
        s = todo.pop()
        if s not in needed:
            needed.add(s)
            todo.extend(DEPENDS[s])
    return [s for s in STAGES if s in needed]


class Pipeline:
    def __init__(self, config: RunConfig):
        self.cfg = config
        self.out = config.output_dir
        self.cache_dir = self.out / ".cache"
        self._corpus: TweetCorpus | None = None
        self.input_hashes = {k: sha256_file(p) for k, p in sorted(config.inputs.items())}
        self.manifest = RunManifest(config.hash, self.input_hashes, __version__)

    # cache state
    def _state_path(self, stage: str) -> Path:
        return self.cache_dir / f"{stage}.json"

    def _state(self, stage: str) -> dict | None:
        p = self._state_path(stage)
        return read_json(p) if p.exists() else None

    def _outputs_intact(self, state: dict) -> bool:
        for rel, digest in state["outputs"].items():
            p = self.out / rel
            if not p.exists() or sha256_file(p) != digest:
                return False
        return True

    def _key(self, stage: str) -> str:
        upstream = {}
        deps = DEPENDS[stage] if stage != "report" else STAGES[:-1]
        for dep in deps:
            st = self._state(dep)
            upstream[dep] = None if st is None else st["outputs"]
        return canonical_hash({
            "stage": stage,
            "version": __version__,
            "config": self.cfg.slice_for(stage),
            "inputs": {k: self.input_hashes[k] for k in self.cfg.inputs_for(stage)},
            "upstream": upstream,
        })

    def run(self, target: str = "run") -> RunManifest:
        self.out.mkdir(parents=True, exist_ok=True)
        self.cache_dir.mkdir(exist_ok=True)
        for stage in stages_for(target):
            self._run_stage(stage)
        self._write_manifest()
        return self.manifest

    def _run_stage(self, stage: str):
        key = self._key(stage)
        state = self._state(stage)
        if state is not None and state["key"] == key and self._outputs_intact(state):
            log.info("%s: cached", stage)
            self.manifest.stages.append(StageRecord(stage, "cached", 0.0, state["outputs"]))
            return
        stage_dir = self.out / stage
        if stage_dir.exists():
            shutil.rmtree(stage_dir)
        stage_dir.mkdir(parents=True)
        started = time.perf_counter()
        log.info("%s: running", stage)
        try:
            getattr(self, f"stage_{stage}")(stage_dir)
        except Exception as exc:
            self._state_path(stage).unlink(missing_ok=True)
            self.manifest.stages.append(StageRecord(stage, "failed", time.perf_counter() - started,
                                                    error=f"{type(exc).__name__}: {exc}"))
            self._write_manifest()
            raise StageError(stage, exc) from exc
        outputs = {str(p.relative_to(self.out).as_posix()): sha256_file(p)
                   for p in sorted(stage_dir.rglob("*")) if p.is_file()}
        write_json(self._state_path(stage), {"key": key, "outputs": outputs})
        self.manifest.stages.append(StageRecord(stage, "completed", time.perf_counter() - started, outputs))

    def _write_manifest(self):
        write_json(self.out / "manifest.json", self.manifest.to_dict())

    # shared loaders
    def corpus(self) -> TweetCorpus:
        if self._corpus is None:
            registry = load_politicians(self.cfg.inputs["politicians"])
            self._corpus = load_tweets(self.cfg.inputs["tweets"], registry, window=self.cfg.window)
        return self._corpus

    def labels(self) -> dict[str, SentimentLabel]:
        path = self.out / "classify" / "labels.csv"
        if not path.exists():
            raise ReportError("classify output missing; run the classify stage first")
        with open(path, newline="", encoding="utf-8") as fh:
            return {r["tweet_id"]: SentimentLabel.parse(r["label"]) for r in csv.DictReader(fh)}

    def labelled_corpus(self) -> tuple[TweetCorpus, dict[str, SentimentLabel]]:
        corpus = self.corpus()
        labels = self.labels()
        kept = tuple(t for t in corpus if t.id in labels)
        if len(kept) < len(corpus):
            log.warning("%d tweets without a sentiment label are left out", len(corpus) - len(kept))
        return TweetCorpus(kept, corpus.registry, corpus.dropped), labels

    def profiles(self):
        path = self.out / "ideology" / "ideology.csv"
        if not path.exists():
            raise ReportError("ideology output missing; run the ideology stage first")
        return read_profiles(path, self.corpus().registry)

    # stages
    def stage_ingest(self, d: Path):
        corpus = self.corpus()
        summary = summarize(corpus)
        mentions = skipped = 0
        from .corpus import resolve_mentions
        for t in corpus:
            r = resolve_mentions(t, corpus.registry)
            mentions += len(r)
            skipped += r.skipped
        write_json(d / "summary.json", {**summary.to_dict(), "politicians": len(corpus.registry),
                                        "resolved_mentions": mentions, "unresolved_mentions": skipped})
        by_day: dict = {}
        for t in corpus:
            row = by_day.setdefault(t.created_at.date().isoformat(), {"left": 0, "right": 0})
            row[corpus.author(t).bloc] += 1
        write_csv(d / "tweets_by_date.csv", ("date", "left", "right", "total"),
                  ((day, v["left"], v["right"], v["left"] + v["right"]) for day, v in sorted(by_day.items())))

    def stage_classify(self, d: Path):
        corpus = self.corpus()
        cache = LabelCache(self.cache_dir / "labels.json")
        field_name = self.cfg.text_field
        texts = [t.text_for(field_name) for t in corpus]
        results = classify_batch(self.cfg.classifier, texts, self.cfg.parallelism, cache=cache)
        cache.save()
        ok = [(t.id, r.value) for t, r in zip(corpus, results) if isinstance(r, SentimentLabel)]
        bad = [(t.id, f"{type(r).__name__}: {r}") for t, r in zip(corpus, results)
               if not isinstance(r, SentimentLabel)]
        if bad:
            log.warning("%d of %d tweets could not be classified", len(bad), len(corpus))
        write_csv(d / "labels.csv", ("tweet_id", "label"), ok)
        write_csv(d / "failures.csv", ("tweet_id", "error"), bad)
        if "gold" in self.cfg.inputs:
            write_json(d / "evaluation.json", self._evaluate(dict(ok), cache))

    def _evaluate(self, labels: dict[str, str], cache: LabelCache) -> dict:
        gold = load_gold(self.cfg.inputs["gold"])
        by_id = {t.id: t for t in self.corpus()}
        ids = [i for i in gold if i in by_id]
        if len(ids) < len(gold):
            log.warning("%d gold ids are not in the corpus", len(gold) - len(ids))
        if not ids:
            raise ReportError("no gold-labelled tweet is in the corpus")
        results = {}
        main = [i for i in ids if i in labels]
        results[self.cfg.classifier_name] = evaluate([labels[i] for i in main], [gold[i] for i in main]).to_dict()
        texts = [by_id[i].text_for(self.cfg.text_field) for i in ids]
        for name, spec in self.cfg.compare_classifiers.items():
            preds = classify_batch(spec, texts, self.cfg.parallelism, cache=cache)
            cache.save()
            pairs = [(p, gold[i]) for p, i in zip(preds, ids) if isinstance(p, SentimentLabel)]
            results[name] = evaluate([p for p, _ in pairs], [g for _, g in pairs]).to_dict()
        return results

    def stage_ideology(self, d: Path):
        cfg = self.cfg
        registry = self.corpus().registry
        solution = expert = gpt_party = gpt_pol = None
        if "RollCall" in cfg.ideology_sources:
            matrix = load_rollcalls(cfg.inputs["rollcalls"])
            filtered = filter_votes(matrix, float(cfg.rollcall_filter["min_minority_share"]),
                                    int(cfg.rollcall_filter["min_casts"]))
            solution = estimate_ideal_points(
                filtered, IdealPointConfig(right_anchor=cfg.right_anchor, seed=derive_seed(cfg.seed, "ideology")))
            write_json(d / "rollcall.json", {
                "legislators": len(filtered.legislators), "votes": len(filtered.votes),
                "dropped_legislators": len(matrix.legislators) - len(filtered.legislators),
                "dropped_votes": len(matrix.votes) - len(filtered.votes),
                "loglik": solution.loglik, "loglik_history": list(solution.loglik_history),
                "iterations": solution.iterations, "converged": solution.converged,
                "right_anchor": cfg.right_anchor, "scores": solution.score_map(),
            })
        if "CHES" in cfg.ideology_sources:
            expert = load_expert_ratings(cfg.inputs["ches"])
        if cfg.rating_model is not None:
            ratings_cache = self.cache_dir / "ratings.json"
            cached = read_json(ratings_cache) if ratings_cache.exists() else {}

            def rate(name, kind):
                key = f"{cfg.rating_model.identity}|{kind}|{name}"
                if key not in cached:
                    cached[key] = llm_rate(cfg.rating_model, name, kind)
                    write_json(ratings_cache, cached)
                return cached[key]

            if "GPT_Party" in cfg.ideology_sources:
                gpt_party = {p: rate(cfg.party_names.get(p, p), "party") for p in registry.parties}
            if "GPT_Politician" in cfg.ideology_sources:
                gpt_pol = {p.handle: rate(p.display_name, "politician") for p in registry}
            write_json(d / "gpt_ratings.json", {"party": gpt_party, "politician": gpt_pol})
        profiles = assemble_profiles(registry, solution, expert, gpt_party, gpt_pol)
        write_profiles(profiles, d / "ideology.csv")

    def stage_label(self, d: Path):
        corpus, labels = self.labelled_corpus()
        for g in self.cfg.groupings:
            pairs = label_pairs(corpus, labels, corpus.registry, g)
            write_pairs(pairs, d / f"pairs_{g}.csv")
            c = count(pairs)
            write_json(d / f"counts_{g}.json", {"k_np": c.k_np, "n_out": c.n_out, "k_pp": c.k_pp,
                                                "n_in": c.n_in, "pairs": len(pairs),
                                                "per_author": c.per_author})

    def stage_h1(self, d: Path):
        cfg = self.cfg.mcmc["h1"]
        for g in self.cfg.groupings:
            raw = read_json(self.out / "label" / f"counts_{g}.json")
            counts = PartisanCounts(raw["k_np"], raw["n_out"], raw["k_pp"], raw["n_in"])
            result = poisson_rate_test(counts, n_draws=cfg.chains * cfg.n_keep,
                                       seed=derive_seed(self.cfg.seed, "h1", g), chains=cfg.chains)
            draws = {name: result.draws(name) for name in RATE_PARAMETERS}
            write_draws(d / f"{g}_draws.csv", draws)
            write_json(d / f"{g}_summary.json", {
                "counts": {k: raw[k] for k in ("k_np", "n_out", "k_pp", "n_in")},
                "prior": "Jeffreys Gamma(1/2, 0)",
                "parameters": summaries(draws),
            })

    @staticmethod
    def _fit_payload(fit, derived: dict) -> dict:
        names = fit.coefficient_names()
        scales = [n for n in fit.chains.names if n.startswith("sigma_")]
        return {
            "spec": fit.spec.to_dict(),
            "mcmc": fit.chains.config.to_dict(),
            "n_rows": fit.n_rows,
            "n_dropped": fit.n_dropped,
            "divergences": fit.chains.divergences,
            "coefficients": fit.summaries(names),
            "scales": fit.summaries(scales),
            "derived": derived,
        }

    @staticmethod
    def _fixed_draws(fit) -> dict[str, np.ndarray]:
        keep = fit.coefficient_names() + [n for n in fit.chains.names if n.startswith("sigma_")]
        return {n: fit.chains[n] for n in keep}

    def stage_h2(self, d: Path):
        corpus, labels = self.labelled_corpus()
        base = self.cfg.mcmc["h2"]
        for g in self.cfg.groupings:
            rows = engagement_rows(corpus, labels, corpus.registry, g)
            for reaction in REACTIONS:
                config = MCMCConfig.from_dict(base.to_dict(), seed=derive_seed(self.cfg.seed, "h2", g, reaction))
                fit = fit_engagement(rows, g, reaction, config)
                ratio = engagement_ratio_draws(fit)
                draws = {**self._fixed_draws(fit), "EngagementRatio": ratio}
                write_draws(d / f"{g}_{reaction}_draws.csv", draws)
                derived = {"EngagementRatio": summaries({"r": ratio})["r"], "levels": engagement_levels(fit)}
                write_json(d / f"{g}_{reaction}_summary.json", self._fit_payload(fit, derived))

    def stage_h3(self, d: Path):
        corpus, labels = self.labelled_corpus()
        profiles = self.profiles()
        base = self.cfg.mcmc["h3"]
        for g in self.cfg.groupings:
            for source in self.cfg.ideology_sources:
                table = source_table(profiles, source)
                rows = np_rows(corpus, labels, corpus.registry, g, table)
                config = MCMCConfig.from_dict(base.to_dict(), seed=derive_seed(self.cfg.seed, "h3", g, source))
                fit = fit_np_propensity(rows, source, g, config)
                probs = np_probability_by_party(fit, party_scores(profiles, source))
                most, least = probs.most_and_least()
                draws = {**self._fixed_draws(fit), **{f"P_NP[{p}]": v for p, v in probs.draws.items()}}
                write_draws(d / f"{g}_{source}_draws.csv", draws)
                derived = {
                    "party_probability": probs.summaries,
                    "party_ratios": {f"{a}/{b}": s for (a, b), s in sorted(probs.ratios.items())},
                    "most_likely": most,
                    "least_likely": least,
                }
                write_json(d / f"{g}_{source}_summary.json", self._fit_payload(fit, derived))

    def stage_network(self, d: Path):
        registry = self.corpus().registry
        g = self.cfg.groupings[0]
        pairs = read_pairs(self.out / "label" / f"pairs_{g}.csv")
        graph = build_graph(pairs, nodes=[p.handle for p in registry])
        net = self.cfg.network
        config = LayoutConfig(iterations=int(net["iterations"]), seed=derive_seed(self.cfg.seed, "network"),
                              attraction_gain=float(net["attraction_gain"]),
                              repulsion_gain=float(net["repulsion_gain"]))
        result = layout(graph, config)
        partition = {p.handle: p.party for p in registry}
        write_edges(graph, d / "edges.csv")
        write_positions(result, d / "positions.csv")
        overall, per_party = homogeneity(graph, partition)
        write_json(d / "homogeneity.json", {
            "overall": overall,
            "per_party": per_party,
            "layout": {"algorithm": "signed Fruchterman-Reingold", "iterations": result.iterations,
                       "stress": result.stress, "direction": "collapsed (undirected)",
                       "edge_weight": "pos_count - neg_count", "neutral_mentions": "excluded"},
        })
        if net.get("svg", True):
            render_svg(graph, result, partition, d / "network.svg")

    def stage_report(self, d: Path):
        present = {s: self._state(s) for s in STAGES[:-1]}
        present = {s: st for s, st in present.items() if st is not None}
        if not present:
            raise ReportError("no stage outputs found; run at least one stage before report")
        for s, st in present.items():
            missing = [rel for rel in st["outputs"] if not (self.out / rel).exists()]
            if missing:
                raise ReportError(f"stage {s} output missing: {missing[0]}")
        files = {}
        if "ingest" in present:
            shutil.copyfile(self.out / "ingest" / "tweets_by_date.csv", d / "fig1_tweets_by_date.csv")
            files["fig1_tweets_by_date.csv"] = SCHEMA_VERSIONS["fig1_tweets_by_date"]
        if "classify" in present and (self.out / "classify" / "evaluation.json").exists():
            write_json(d / "table1.json", table1(read_json(self.out / "classify" / "evaluation.json")))
            files["table1.json"] = SCHEMA_VERSIONS["table1"]
        if "label" in present:
            rows = []
            for path in sorted((self.out / "label").glob("pairs_*.csv")):
                rows.extend(sentiment_bars(read_pairs(path)))
            write_csv(d / "fig2_partisan_counts.csv", ("grouping", "relation", "sentiment", "count"), rows)
            files["fig2_partisan_counts.csv"] = SCHEMA_VERSIONS["fig2_partisan_counts"]
        if "h1" in present:
            h1 = {p.name[:-len("_summary.json")]: read_json(p)
                  for p in sorted((self.out / "h1").glob("*_summary.json"))}
            write_json(d / "table2.json", table2(h1))
            files["table2.json"] = SCHEMA_VERSIONS["table2"]
        if "h2" in present:
            h2 = {p.name[:-len("_summary.json")]: read_json(p)
                  for p in sorted((self.out / "h2").glob("*_summary.json"))}
            write_json(d / "table3.json", table3(h2))
            files["table3.json"] = SCHEMA_VERSIONS["table3"]
            rows = []
            for key in sorted(h2):
                grouping, reaction = key.split("_", 1)
                ratio = read_draws(self.out / "h2" / f"{key}_draws.csv")["EngagementRatio"]
                rows.extend(long_draw_rows((grouping, reaction), ratio))
            write_csv(d / "fig4_ratio_draws.csv", ("grouping", "reaction", "chain", "iteration", "value"), rows)
            files["fig4_ratio_draws.csv"] = SCHEMA_VERSIONS["fig4_ratio_draws"]
        if "h3" in present:
            h3 = {p.name[:-len("_summary.json")]: read_json(p)
                  for p in sorted((self.out / "h3").glob("*_summary.json"))}
            write_json(d / "table4.json", table4(h3))
            files["table4.json"] = SCHEMA_VERSIONS["table4"]
            rows = []
            for key in sorted(h3):
                grouping, source = key.split("_", 1)
                draws = read_draws(self.out / "h3" / f"{key}_draws.csv")
                for name in sorted(n for n in draws if n.startswith("P_NP[")):
                    rows.extend(long_draw_rows((grouping, source, name[5:-1]), draws[name]))
            write_csv(d / "fig5_party_probability_draws.csv",
                      ("grouping", "source", "party", "chain", "iteration", "value"), rows)
            files["fig5_party_probability_draws.csv"] = SCHEMA_VERSIONS["fig5_party_probability_draws"]
        if "network" in present:
            shutil.copyfile(self.out / "network" / "homogeneity.json", d / "network_homogeneity.json")
            files["network_homogeneity.json"] = SCHEMA_VERSIONS["network"]
        write_json(d / "index.json", {"files": files, "stages": sorted(present)})


def run(config: RunConfig, target: str = "run") -> RunManifest:
    return Pipeline(config).run(target)
