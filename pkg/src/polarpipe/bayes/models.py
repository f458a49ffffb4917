"""Hierarchical regressions for engagement (H2) and NP propensity (H3).

Both models share one linear predictor::

    eta_i = alpha + x_i . beta + gamma_author[a_i] + gamma_hour[t_i]

with ``alpha, beta ~ Normal(0, 1)``, ``gamma_u ~ Normal(0, sigma_u)`` and
``sigma_u ~ HalfNormal(0, 1)`` for both grouping factors.  The engagement
model places a Gaussian likelihood with ``sigma_resid ~ HalfNormal(0, 1)``
on ``log1p(reactions)``; the NP model is Bernoulli-logit.

Scales are sampled on the log scale with the Jacobian included.  Each
grouping factor is centred when its groups carry enough information to
pin their effects down and non-centred otherwise, which avoids the funnel
geometry in either regime.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy import sparse
from scipy.special import expit

from .diagnostics import PosteriorSummary, summarize_draws
from .mcmc import Chains, MCMCConfig, sample_hmc

log = logging.getLogger(__name__)

N_HOURS = 24
REFERENCE_PARTY = "S"
SENTIMENT_COLUMNS = ("NegativeSentiment", "PositiveSentiment")


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class EngagementRow:
    tweet_id: str
    author: str
    hour: int
    likes: int
    retweets: int
    sentiment: str
    out_group: bool
    in_group: bool
    bloc: str
    party: str

    def outcome(self, reaction_kind: str) -> float:
        if reaction_kind == "likes":
            return float(np.log1p(self.likes))
        if reaction_kind == "retweets":
            return float(np.log1p(self.retweets))
        raise ValueError(f"unknown reaction kind {reaction_kind!r}")


@dataclass(frozen=True)
class NPRow:
    tweet_id: str
    author: str
    hour: int
    nu: int
    ideology: float | None
    likes: int
    retweets: int

    @property
    def ideology_sq(self) -> float | None:
        return None if self.ideology is None else self.ideology * self.ideology


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    grouping: str
    columns: tuple[str, ...]
    reaction_kind: str | None = None
    ideology_source: str | None = None
    reference: dict = field(default_factory=dict)
    random_effects: tuple[str, ...] = ("author", "hour")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "grouping": self.grouping,
            "columns": list(self.columns),
            "reaction_kind": self.reaction_kind,
            "ideology_source": self.ideology_source,
            "reference": dict(self.reference),
            "random_effects": list(self.random_effects),
            "priors": {
                "Intercept": "Normal(0, 1)",
                "beta": "Normal(0, 1)",
                "gamma_u": "Normal(0, sigma_u)",
                "sigma_u": "HalfNormal(0, 1)",
                **({"sigma_resid": "HalfNormal(0, 1)"} if self.kind == "engagement" else {}),
            },
        }


@dataclass
class Design:
    y: np.ndarray
    X: np.ndarray
    columns: list[str]
    author: np.ndarray
    hour: np.ndarray
    authors: list[str]

    @property
    def n_hours(self) -> int:
        return N_HOURS


@dataclass
class FittedModel:
    spec: ModelSpec
    chains: Chains
    column_means: dict[str, float]
    n_rows: int
    n_dropped: int = 0

    def coefficient_names(self) -> list[str]:
        return ["Intercept", *self.spec.columns]

    def summaries(self, names: Sequence[str] | None = None) -> dict[str, PosteriorSummary]:
        names = list(names) if names is not None else self.chains.names
        return {n: self.chains.summary(n) for n in names}


def check_rank(X: np.ndarray, columns: Sequence[str]) -> None:
    """Raise DesignError naming the columns that add no rank to ``[1, X]``."""
    full = np.column_stack([np.ones(len(X)), X])
    if np.linalg.matrix_rank(full) == full.shape[1]:
        return
    names = ["Intercept", *columns]
    kept: list[int] = []
    collinear = []
    for j in range(full.shape[1]):
        trial = kept + [j]
        if np.linalg.matrix_rank(full[:, trial]) == len(trial):
            kept.append(j)
        else:
            collinear.append(names[j])
    raise DesignError(f"design matrix is rank deficient; collinear columns: {collinear}")


def _factor_codes(rows, authors=None):
    levels = sorted({r.author for r in rows}) if authors is None else list(authors)
    index = {a: i for i, a in enumerate(levels)}
    codes = np.array([index[r.author] for r in rows], dtype=np.int64)
    hours = np.array([r.hour for r in rows], dtype=np.int64)
    if hours.size and (hours.min() < 0 or hours.max() >= N_HOURS):
        raise DesignError("hour-of-day must lie in [0, 23]")
    return levels, codes, hours


def engagement_columns(grouping: str, parties: Sequence[str] = ()) -> list[str]:
    if grouping == "bloc":
        return ["OutBloc", "OutBloc:Negative", "InBloc:Positive", "RightBloc", *SENTIMENT_COLUMNS]
    if grouping == "party":
        others = sorted(p for p in parties if p != REFERENCE_PARTY)
        return ["OutParty", "OutParty:Negative", "InParty:Positive",
                *[f"Party:{p}" for p in others], *SENTIMENT_COLUMNS]
    raise ValueError(f"unknown grouping {grouping!r}")


def engagement_design(rows: Sequence[EngagementRow], grouping: str, reaction_kind: str) -> Design:
    if not rows:
        raise DesignError("no rows to fit")
    parties = sorted({r.party for r in rows})
    if grouping == "party" and REFERENCE_PARTY not in parties:
        raise DesignError(f"reference party {REFERENCE_PARTY!r} absent from data")
    columns = engagement_columns(grouping, parties)
    X = np.zeros((len(rows), len(columns)))
    for i, r in enumerate(rows):
        neg = r.sentiment == "negative"
        pos = r.sentiment == "positive"
        X[i, 0] = r.out_group
        X[i, 1] = r.out_group and neg
        X[i, 2] = r.in_group and pos
        if grouping == "bloc":
            X[i, 3] = r.bloc == "right"
        elif r.party != REFERENCE_PARTY:
            X[i, columns.index(f"Party:{r.party}")] = 1.0
        X[i, -2] = neg
        X[i, -1] = pos
    y = np.array([r.outcome(reaction_kind) for r in rows])
    if not np.all(np.isfinite(y)):
        raise DesignError("non-finite outcome")
    authors, codes, hours = _factor_codes(rows)
    check_rank(X, columns)
    return Design(y, X, columns, codes, hours, authors)


NP_COLUMNS = ("IdeologyMetric", "IdeologyMetric^2", "Likes", "Retweets")


def np_design(rows: Sequence[NPRow]) -> tuple[Design, int]:
    kept = [r for r in rows if r.ideology is not None]
    dropped = len(rows) - len(kept)
    if dropped:
        log.info("dropped %d rows without an ideology score", dropped)
    if not kept:
        raise DesignError("no rows with an ideology score")
    y = np.array([r.nu for r in kept], dtype=float)
    if not np.isin(y, (0.0, 1.0)).all():
        raise DesignError("NP indicator must be 0 or 1")
    if y.min() == y.max():
        raise DesignError(f"outcome is constant ({int(y[0])}); the logistic fit is undefined")
    ideology = np.array([r.ideology for r in kept], dtype=float)
    X = np.column_stack([
        ideology,
        np.array([r.ideology_sq for r in kept], dtype=float),
        np.log1p([r.likes for r in kept]),
        np.log1p([r.retweets for r in kept]),
    ])
    authors, codes, hours = _factor_codes(kept)
    check_rank(X, NP_COLUMNS)
    return Design(y, X, list(NP_COLUMNS), codes, hours, authors), dropped


CENTERING_THRESHOLD = 25.0


class HierarchicalPosterior:
    """Log posterior and gradient of the shared hierarchical model, batched over chains.

    Unconstrained layout::

        [alpha, beta (K), log sigma_author, log sigma_hour,
         (log sigma_resid), author effects (A), hour effects (24)]

    Group effects are stored raw (centred) or as standardised ``z`` with
    ``gamma = sigma * z`` (non-centred), per factor.
    """

    def __init__(self, design: Design, family: str, centered: tuple[bool, bool] | None = None):
        if family not in ("gaussian", "bernoulli"):
            raise ValueError(family)
        self.d = design
        self.family = family
        n = len(design.y)
        self.K = design.X.shape[1]
        self.A = len(design.authors)
        self.H = N_HOURS
        self.n_scales = 3 if family == "gaussian" else 2
        self.i_beta = slice(1, 1 + self.K)
        s0 = 1 + self.K
        self.i_scale = slice(s0, s0 + self.n_scales)
        g0 = s0 + self.n_scales
        self.i_author = slice(g0, g0 + self.A)
        self.i_hour = slice(g0 + self.A, g0 + self.A + self.H)
        self.dims = g0 + self.A + self.H
        ones = np.ones(n)
        self.author_map = sparse.csr_matrix((ones, (np.arange(n), design.author)), shape=(n, self.A))
        self.hour_map = sparse.csr_matrix((ones, (np.arange(n), design.hour)), shape=(n, self.H))
        self.author_counts = np.bincount(design.author, minlength=self.A)
        self.hour_counts = np.bincount(design.hour, minlength=self.H)
        if centered is None:
            centered = (self._informative(self.author_counts), self._informative(self.hour_counts))
        self.centered = tuple(bool(c) for c in centered)

    def _informative(self, counts: np.ndarray) -> bool:
        y = self.d.y
        if self.family == "gaussian":
            weight = 1.0 / max(float(np.var(y)), 1e-12)
        else:
            p = float(np.mean(y))
            weight = p * (1.0 - p)
        observed = counts[counts > 0]
        return bool(observed.size) and float(np.median(observed)) * weight >= CENTERING_THRESHOLD

    def names(self) -> list[str]:
        scales = ["sigma_author", "sigma_hour"] + (["sigma_resid"] if self.family == "gaussian" else [])
        return (["Intercept", *self.d.columns, *scales]
                + [f"author[{a}]" for a in self.d.authors]
                + [f"hour[{h}]" for h in range(self.H)])

    def initial_point(self) -> np.ndarray:
        init = np.zeros(self.dims)
        y = self.d.y
        if self.family == "gaussian":
            init[0] = y.mean()
            init[self.i_scale.start + 2] = np.log(max(y.std(), 1e-3))
        else:
            p = y.mean()
            init[0] = np.log(p / (1 - p))
        init[self.i_scale.start:self.i_scale.start + 2] = np.log(0.3)
        return init

    def __call__(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        d = self.d
        alpha = theta[:, 0]
        beta = theta[:, self.i_beta]
        log_s = theta[:, self.i_scale]
        s = np.exp(log_s)
        raw = (theta[:, self.i_author], theta[:, self.i_hour])
        effects = [r if c else r * s[:, k, None] for k, (r, c) in enumerate(zip(raw, self.centered))]

        eta = alpha[:, None] + beta @ d.X.T + effects[0][:, d.author] + effects[1][:, d.hour]
        grad = np.zeros_like(theta)

        if self.family == "gaussian":
            s_r = s[:, 2]
            resid = d.y[None, :] - eta
            ss = np.sum(resid * resid, axis=1)
            n = resid.shape[1]
            loglik = -0.5 * ss / s_r**2 - n * log_s[:, 2]
            r = resid / (s_r**2)[:, None]
            grad[:, self.i_scale.start + 2] = ss / s_r**2 - n
        else:
            loglik = np.sum(d.y[None, :] * eta - np.logaddexp(0.0, eta), axis=1)
            r = d.y[None, :] - expit(eta)

        # alpha, beta ~ N(0,1); sigma ~ HalfNormal(0,1) plus log-Jacobian
        lp = loglik - 0.5 * alpha**2 - 0.5 * np.sum(beta**2, axis=1)
        lp += np.sum(-0.5 * s**2 + log_s, axis=1)
        grad[:, self.i_scale] += -s**2 + 1.0
        grad[:, 0] = r.sum(axis=1) - alpha
        grad[:, self.i_beta] = r @ d.X - beta

        maps = (self.author_map, self.hour_map)
        slices = (self.i_author, self.i_hour)
        for k in range(2):
            sigma = s[:, k]
            g_eff = (maps[k].T @ r.T).T  # d loglik / d gamma
            sq = np.sum(raw[k] ** 2, axis=1)
            size = raw[k].shape[1]
            if self.centered[k]:
                lp += -0.5 * sq / sigma**2 - size * log_s[:, k]
                grad[:, self.i_scale.start + k] += sq / sigma**2 - size
                grad[:, slices[k]] = g_eff - raw[k] / (sigma**2)[:, None]
            else:
                lp += -0.5 * sq
                grad[:, self.i_scale.start + k] += np.sum(g_eff * effects[k], axis=1)
                grad[:, slices[k]] = g_eff * sigma[:, None] - raw[k]
        return lp, grad

    def constrain(self, draws: np.ndarray) -> np.ndarray:
        """Map unconstrained draws to (scales, group effects) on the natural scale."""
        out = draws.copy()
        scales = np.exp(draws[..., self.i_scale])
        out[..., self.i_scale] = scales
        for k, sl in enumerate((self.i_author, self.i_hour)):
            if not self.centered[k]:
                out[..., sl] = draws[..., sl] * scales[..., k, None]
        return out


def _fit(design: Design, family: str, config: MCMCConfig) -> Chains:
    post = HierarchicalPosterior(design, family)
    raw = sample_hmc(post, post.dims, config, init=post.initial_point(), names=post.names())
    raw.draws = post.constrain(raw.draws)
    return raw


def fit_engagement(rows: Sequence[EngagementRow], grouping: str, reaction_kind: str,
                   config: MCMCConfig) -> FittedModel:
    """Gaussian mixed model of ``log1p`` reactions on partisanship and sentiment."""
    return fit_engagement_design(engagement_design(rows, grouping, reaction_kind),
                                 grouping, reaction_kind, config)


def fit_engagement_design(design: Design, grouping: str, reaction_kind: str,
                          config: MCMCConfig) -> FittedModel:
    chains = _fit(design, "gaussian", config)
    spec = ModelSpec(
        kind="engagement",
        grouping=grouping,
        columns=tuple(design.columns),
        reaction_kind=reaction_kind,
        reference={"sentiment": "neutral", **({"party": REFERENCE_PARTY} if grouping == "party" else {})},
    )
    means = dict(zip(design.columns, design.X.mean(axis=0)))
    return FittedModel(spec, chains, means, n_rows=len(design.y))


def fit_np_propensity(rows: Sequence[NPRow], ideology_source: str, grouping: str,
                      config: MCMCConfig) -> FittedModel:
    """Logistic mixed model of NP on ideology, its square and log engagement."""
    design, dropped = np_design(rows)
    chains = _fit(design, "bernoulli", config)
    spec = ModelSpec(
        kind="np_propensity",
        grouping=grouping,
        columns=tuple(design.columns),
        ideology_source=ideology_source,
    )
    means = dict(zip(design.columns, design.X.mean(axis=0)))
    return FittedModel(spec, chains, means, n_rows=len(design.y), n_dropped=dropped)


def np_pp_linear_terms(fit: FittedModel) -> tuple[np.ndarray, np.ndarray]:
    """Draw-wise sums of the coefficients switched on by an NP and a PP tweet.

    Terms common to both (intercept, author affiliation, random effects)
    are left out since they cancel in the ratio.
    """
    grouping = fit.spec.grouping
    unit = "Bloc" if grouping == "bloc" else "Party"
    c = fit.chains
    np_sum = c[f"Out{unit}"] + c[f"Out{unit}:Negative"] + c["NegativeSentiment"]
    pp_sum = c[f"In{unit}:Positive"] + c["PositiveSentiment"]
    return np_sum, pp_sum


def engagement_ratio_draws(fit: FittedModel) -> np.ndarray:
    if fit.spec.kind != "engagement":
        raise ValueError("engagement ratio requires an engagement fit")
    np_sum, pp_sum = np_pp_linear_terms(fit)
    return np.exp(np_sum - pp_sum)


def engagement_ratio(fit: FittedModel, grouping: str | None = None) -> PosteriorSummary:
    """Posterior of expected NP reactions over expected PP reactions."""
    if grouping is not None and grouping != fit.spec.grouping:
        raise ValueError(f"fit grouping is {fit.spec.grouping!r}, not {grouping!r}")
    return summarize_draws(engagement_ratio_draws(fit))


def engagement_levels(fit: FittedModel) -> dict[str, PosteriorSummary]:
    """Expected reactions for an NP and a PP tweet by a reference-category author.

    The outcome is ``log1p(count)`` so the linear predictor maps back
    through ``expm1``.  Random effects are held at zero.
    """
    np_sum, pp_sum = np_pp_linear_terms(fit)
    alpha = fit.chains["Intercept"]
    return {
        "np": summarize_draws(np.expm1(alpha + np_sum)),
        "pp": summarize_draws(np.expm1(alpha + pp_sum)),
    }


@dataclass
class PartyProbabilities:
    draws: dict[str, np.ndarray]
    summaries: dict[str, PosteriorSummary]
    ratios: dict[tuple[str, str], PosteriorSummary]

    def most_and_least(self) -> tuple[str, str]:
        order = sorted(self.summaries, key=lambda p: self.summaries[p].q50)
        return order[-1], order[0]


def np_probability_draws(fit: FittedModel, ideology: float) -> np.ndarray:
    c = fit.chains
    m = fit.column_means
    eta = (c["Intercept"] + c["IdeologyMetric"] * ideology
           + c["IdeologyMetric^2"] * ideology**2
           + c["Likes"] * m["Likes"] + c["Retweets"] * m["Retweets"])
    return expit(eta)


def np_probability_by_party(fit: FittedModel, ideology_table: dict[str, float],
                            parties: Sequence[str] | None = None) -> PartyProbabilities:
    """NP probability per party at mean engagement with random effects at zero.

    Pairwise ratio summaries are keyed ``(numerator, denominator)`` for every
    ordered pair of parties.
    """
    if fit.spec.kind != "np_propensity":
        raise ValueError("party probabilities require an NP propensity fit")
    parties = sorted(ideology_table) if parties is None else list(parties)
    missing = [p for p in parties if p not in ideology_table]
    if missing:
        raise KeyError(f"parties absent from ideology table: {missing}")
    draws = {p: np_probability_draws(fit, ideology_table[p]) for p in parties}
    summaries = {p: summarize_draws(v) for p, v in draws.items()}
    ratios = {}
    for a, b in combinations(parties, 2):
        ratios[(a, b)] = summarize_draws(draws[a] / draws[b])
        ratios[(b, a)] = summarize_draws(draws[b] / draws[a])
    return PartyProbabilities(draws, summaries, ratios)
