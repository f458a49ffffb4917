"""Per-politician left-right scores from roll calls, expert surveys and LLM ratings.

All sources end up on [-1, 1] with positive meaning right.
"""

from __future__ import annotations

import csv
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr

from .corpus import PoliticianRegistry, normalize_handle
from .llm import ChatClient, RemoteUnavailable

log = logging.getLogger(__name__)

YEA, NAY, MISSING = 1, 0, -1
CAST_CODES = {"yea": YEA, "nay": NAY, "abstain": MISSING, "absent": MISSING}
SOURCES = ("RollCall", "CHES", "GPT_Party", "GPT_Politician")
BOUND_SLOPE = 25.0

RATING_PROMPT = (
    "As an AI model with extensive knowledge in Swedish politics, rate this political party "
    "from -1 (extreme left) to 1 (extreme right) with 2 decimal numbers. "
    "Answer only with a number in the aforementioned range"
)


class IdeologyError(ValueError):
    pass


class RatingUnavailable(RuntimeError):
    """No usable rating came back within the retry budget."""


# --- roll calls -----------------------------------------------------------

@dataclass(frozen=True)
class VoteMatrix:
    """Legislator-by-vote casts coded ``YEA``, ``NAY`` or ``MISSING``."""

    legislators: tuple[str, ...]
    votes: tuple[str, ...]
    cast: np.ndarray

    def __post_init__(self):
        cast = np.asarray(self.cast, dtype=np.int8)
        if cast.shape != (len(self.legislators), len(self.votes)):
            raise IdeologyError(f"cast shape {cast.shape} does not match "
                                f"{len(self.legislators)} legislators x {len(self.votes)} votes")
        if not np.isin(cast, (YEA, NAY, MISSING)).all():
            raise IdeologyError("cast entries must be YEA, NAY or MISSING")
        cast.setflags(write=False)
        object.__setattr__(self, "cast", cast)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cast.shape

    def take(self, rows: np.ndarray, cols: np.ndarray) -> "VoteMatrix":
        rows, cols = np.asarray(rows), np.asarray(cols)
        return VoteMatrix(tuple(np.asarray(self.legislators, dtype=object)[rows]),
                          tuple(np.asarray(self.votes, dtype=object)[cols]),
                          self.cast[np.ix_(rows, cols)])

    @classmethod
    def from_bool(cls, yea: np.ndarray, legislators: Sequence[str] | None = None,
                  votes: Sequence[str] | None = None) -> "VoteMatrix":
        yea = np.asarray(yea, dtype=bool)
        legislators = legislators or [f"L{i:03d}" for i in range(yea.shape[0])]
        votes = votes or [f"V{j:04d}" for j in range(yea.shape[1])]
        return cls(tuple(legislators), tuple(votes), np.where(yea, YEA, NAY))


def load_rollcalls(path: str | Path) -> VoteMatrix:
    """Read ``vote_id,politician_id,cast`` rows; unlisted pairs are Missing."""
    entries: dict[tuple[str, str], int] = {}
    legislators: dict[str, None] = {}
    votes: dict[str, None] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"vote_id", "politician_id", "cast"} <= set(reader.fieldnames):
            raise IdeologyError(f"{path}: expected header vote_id,politician_id,cast")
        for lineno, row in enumerate(reader, start=2):
            vote, pol = row["vote_id"].strip(), row["politician_id"].strip()
            code = CAST_CODES.get(row["cast"].strip().lower())
            if code is None:
                raise IdeologyError(f"{path}:{lineno}: unknown cast {row['cast']!r}")
            key = (pol, vote)
            if key in entries and entries[key] != code:
                raise IdeologyError(f"{path}:{lineno}: conflicting casts for {pol} on {vote}")
            entries[key] = code
            legislators.setdefault(pol)
            votes.setdefault(vote)
    leg_index = {p: i for i, p in enumerate(legislators)}
    vote_index = {v: j for j, v in enumerate(votes)}
    cast = np.full((len(leg_index), len(vote_index)), MISSING, dtype=np.int8)
    for (pol, vote), code in entries.items():
        cast[leg_index[pol], vote_index[vote]] = code
    return VoteMatrix(tuple(legislators), tuple(votes), cast)


def filter_votes(matrix: VoteMatrix, min_minority_share: float = 0.025,
                 min_casts: int = 20) -> VoteMatrix:
    """Drop lopsided votes and thinly observed legislators until both rules hold."""
    if not 0 <= min_minority_share < 0.5:
        raise ValueError("min_minority_share must lie in [0, 0.5)")
    rows = np.arange(matrix.shape[0])
    cols = np.arange(matrix.shape[1])
    while True:
        sub = matrix.cast[np.ix_(rows, cols)]
        yeas = (sub == YEA).sum(axis=0)
        cast = (sub != MISSING).sum(axis=0)
        with np.errstate(invalid="ignore", divide="ignore"):
            minority = np.minimum(yeas, cast - yeas) / cast
        keep_cols = (cast > 0) & (minority >= min_minority_share) & (minority > 0)
        sub = sub[:, keep_cols]
        keep_rows = (sub != MISSING).sum(axis=1) >= min_casts
        if keep_cols.all() and keep_rows.all():
            break
        cols, rows = cols[keep_cols], rows[keep_rows]
        if len(rows) < 2 or len(cols) < 2:
            break
    if len(rows) < 2 or len(cols) < 2:
        raise IdeologyError(f"filtering left {len(rows)} legislators and {len(cols)} votes; need at least 2 of each")
    return matrix.take(rows, cols)


# --- probit scaling -------------------------------------------------------

@dataclass(frozen=True)
class IdealPointConfig:
    right_anchor: str
    max_iter: int = 500
    tol: float = 1e-2  # log-likelihood units
    seed: int = 0


@dataclass(frozen=True)
class IdealPointSolution:
    legislators: tuple[str, ...]
    scores: np.ndarray
    discrimination: np.ndarray
    midpoint: np.ndarray
    loglik: float
    loglik_history: tuple[float, ...]
    iterations: int
    converged: bool

    def score_map(self) -> dict[str, float]:
        return {k: float(v) for k, v in zip(self.legislators, self.scores)}


def _loglik_terms(x, beta, alpha, yea, mask):
    z = x[:, None] * beta[None, :] - alpha[None, :]
    s = np.where(yea, 1.0, -1.0)
    return np.where(mask, log_ndtr(s * z), 0.0), z, s


def _inverse_mills(t):
    # phi(t) / Phi(t) without underflow
    return np.exp(-0.5 * t * t - 0.5 * np.log(2 * np.pi) - log_ndtr(t))


def _loglik(x, beta, alpha, yea, mask) -> float:
    return float(_loglik_terms(x, beta, alpha, yea, mask)[0].sum())


def _scores_grad(x, beta, alpha, yea, mask):
    ll, z, s = _loglik_terms(x, beta, alpha, yea, mask)
    w = np.where(mask, s * _inverse_mills(s * z), 0.0)
    return ll.sum(), w


def _initial_points(matrix: VoteMatrix, seed: int) -> np.ndarray:
    """Leading eigenvector of the double-centred squared-disagreement matrix."""
    cast = matrix.cast
    obs = (cast != MISSING).astype(float)
    yea = (cast == YEA).astype(float)
    nay = (cast == NAY).astype(float)
    both = obs @ obs.T
    agree = yea @ yea.T + nay @ nay.T
    with np.errstate(invalid="ignore", divide="ignore"):
        a = np.where(both > 0, agree / both, 0.5)
    d = (1.0 - a) ** 2
    n = len(d)
    j = np.eye(n) - 1.0 / n
    b = -0.5 * j @ d @ j
    vals, vecs = np.linalg.eigh(b)
    x = vecs[:, -1] * np.sqrt(max(vals[-1], 0.0))
    if not np.ptp(x) > 0:
        x = np.random.default_rng(seed).uniform(-1, 1, n)
    return x / np.max(np.abs(x))


def _bill_step(x, beta, alpha, yea, mask):
    m = len(beta)

    def f(theta):
        b, a = theta[:m], theta[m:]
        ll, w = _scores_grad(x, b, a, yea, mask)
        return -ll, -np.concatenate([(w * x[:, None]).sum(axis=0), -w.sum(axis=0)])

    bounds = [(-BOUND_SLOPE, BOUND_SLOPE)] * (2 * m)
    res = minimize(f, np.concatenate([beta, alpha]), jac=True, method="L-BFGS-B", bounds=bounds)
    return res.x[:m], res.x[m:]


def _legislator_step(x, beta, alpha, yea, mask):
    def f(xs):
        ll, w = _scores_grad(xs, beta, alpha, yea, mask)
        return -ll, -(w * beta[None, :]).sum(axis=1)

    res = minimize(f, x, jac=True, method="L-BFGS-B", bounds=[(-1.0, 1.0)] * len(x))
    return res.x


def estimate_ideal_points(matrix: VoteMatrix, config: IdealPointConfig) -> IdealPointSolution:
    """One-dimensional probit ideal points, ``P(yea) = Phi(beta_j x_i - alpha_j)``.

    Bill and legislator parameters are maximized in alternation; a block
    update that would lower the log-likelihood is discarded, so the history
    is non-decreasing.  Scores are rescaled to span [-1, 1] and oriented so
    that ``config.right_anchor`` is positive.
    """
    anchor = normalize_handle(config.right_anchor)
    keys = [normalize_handle(k) for k in matrix.legislators]
    if anchor not in keys:
        raise IdeologyError(f"right anchor {config.right_anchor!r} is not in the vote matrix")
    mask = matrix.cast != MISSING
    yea = matrix.cast == YEA
    x = _initial_points(matrix, config.seed)
    m = matrix.shape[1]
    # bills start at the mirror-symmetric point so flipped data gives mirrored iterates
    beta, alpha = _bill_step(x, np.zeros(m), np.zeros(m), yea, mask)
    history = [_loglik(x, beta, alpha, yea, mask)]
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        current = history[-1]
        x_new = _legislator_step(x, beta, alpha, yea, mask)
        ll = _loglik(x_new, beta, alpha, yea, mask)
        if ll >= current:
            x, current = x_new, ll
        b_new, a_new = _bill_step(x, beta, alpha, yea, mask)
        ll = _loglik(x, b_new, a_new, yea, mask)
        if ll >= current:
            beta, alpha, current = b_new, a_new, ll
        history.append(current)
        if current - history[-2] < config.tol:
            converged = True
            break
    if not converged:
        log.warning("ideal-point scaling stopped after %d iterations without converging", iterations)

    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise IdeologyError("all legislators received the same score")
    scale = (hi - lo) / 2.0
    scores = (x - lo) / scale - 1.0
    # x = scale * scores + (lo + scale)
    beta, alpha = beta * scale, alpha - beta * (lo + scale)
    if scores[keys.index(anchor)] < 0:
        scores, beta = -scores, -beta
    with np.errstate(divide="ignore", invalid="ignore"):
        midpoint = np.where(beta != 0, alpha / beta, np.nan)
    return IdealPointSolution(
        legislators=matrix.legislators,
        scores=np.clip(scores, -1.0, 1.0),
        discrimination=beta,
        midpoint=midpoint,
        loglik=history[-1],
        loglik_history=tuple(history),
        iterations=iterations,
        converged=converged,
    )


# --- expert survey --------------------------------------------------------

_SCALE_RE = re.compile(r"#\s*scale\s*:\s*(-?[\d.]+)\s*-\s*(-?[\d.]+)")


@dataclass(frozen=True)
class ExpertTable:
    scores: dict[str, float]
    scale: tuple[float, float]

    def __getitem__(self, party: str) -> float:
        try:
            return self.scores[party]
        except KeyError:
            raise IdeologyError(f"party {party!r} is missing from the expert ratings") from None


def rescale(value: float, low: float, high: float) -> float:
    return 2.0 * (value - low) / (high - low) - 1.0


def load_expert_ratings(path: str | Path) -> ExpertTable:
    """Read a ``party,score`` table whose first line declares ``# scale: lo-hi``."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    scale = None
    body = []
    for line in lines:
        if line.lstrip().startswith("#"):
            match = _SCALE_RE.match(line.strip())
            if match:
                scale = (float(match.group(1)), float(match.group(2)))
            continue
        if line.strip():
            body.append(line)
    if scale is None:
        raise IdeologyError(f"{path}: no '# scale: lo-hi' declaration")
    low, high = scale
    if not high > low:
        raise IdeologyError(f"{path}: empty scale {low}-{high}")
    scores = {}
    for lineno, row in enumerate(csv.DictReader(body), start=2):
        try:
            value = float(row["score"])
        except (KeyError, TypeError, ValueError):
            raise IdeologyError(f"{path}: bad score in data row {lineno - 1}") from None
        if not low <= value <= high:
            raise IdeologyError(f"{path}: score {value} for {row['party']} outside {low}-{high}")
        scores[row["party"].strip()] = rescale(value, low, high)
    return ExpertTable(scores, scale)


# --- LLM ratings ----------------------------------------------------------

_NUMBER_RE = re.compile(r"[-+−]?\d+(?:[.,]\d+)?")


def rating_prompt(kind: str) -> str:
    if kind == "party":
        return RATING_PROMPT
    if kind == "politician":
        return RATING_PROMPT.replace("this political party", "this politician")
    raise ValueError(f"kind must be 'party' or 'politician', got {kind!r}")


def parse_rating(raw: str) -> float | None:
    """First number in ``raw`` if it lies in [-1, 1], else None."""
    match = _NUMBER_RE.search(raw or "")
    if match is None:
        return None
    value = float(match.group(0).replace("−", "-").replace(",", "."))
    return value if -1.0 <= value <= 1.0 else None


def llm_rate(spec, entity_name: str, kind: str, client: ChatClient | None = None) -> float:
    """Ask a chat model for a left-right rating of a party or politician.

    Replies that are not a number in [-1, 1] are re-asked up to
    ``spec.max_retries`` times before :class:`RatingUnavailable`.
    """
    if getattr(spec, "kind", None) != "remote":
        raise ValueError("llm_rate needs a remote classifier spec")
    prompt = rating_prompt(kind)
    client = client or ChatClient(spec.endpoint, spec.model_name, timeout=spec.timeout,
                                  max_retries=spec.max_retries, temperature=spec.temperature)
    replies = []
    for _ in range(spec.max_retries + 1):
        try:
            raw = client.complete(prompt, entity_name)
        except RemoteUnavailable as exc:
            raise RatingUnavailable(f"{entity_name}: {exc}") from exc
        value = parse_rating(raw)
        if value is not None:
            return value
        replies.append(raw)
    raise RatingUnavailable(f"{entity_name}: no rating in [-1, 1] after {len(replies)} replies {replies!r}")


# --- profiles -------------------------------------------------------------

@dataclass(frozen=True)
class IdeologyProfile:
    handle: str
    party: str
    scores: dict[str, float] = field(default_factory=dict)

    def get(self, source: str) -> float | None:
        return self.scores.get(source)


def assemble_profiles(registry: PoliticianRegistry,
                      solution: IdealPointSolution | None = None,
                      expert: ExpertTable | None = None,
                      gpt_party: Mapping[str, float] | None = None,
                      gpt_politician: Mapping[str, float] | None = None) -> list[IdeologyProfile]:
    """One profile per registered politician from whichever sources are given."""
    if solution is None and expert is None and gpt_party is None and gpt_politician is None:
        raise IdeologyError("no ideology source supplied")
    rollcall = {}
    if solution is not None:
        rollcall = {normalize_handle(k): v for k, v in solution.score_map().items()}
    politician_scores = {normalize_handle(k): v for k, v in (gpt_politician or {}).items()}
    profiles = []
    for p in registry:
        key = normalize_handle(p.handle)
        scores = {}
        if p.in_parliament and key in rollcall:
            scores["RollCall"] = rollcall[key]
        if expert is not None:
            scores["CHES"] = expert[p.party]
        if gpt_party is not None:
            if p.party not in gpt_party:
                raise IdeologyError(f"party {p.party!r} has no GPT rating")
            scores["GPT_Party"] = float(gpt_party[p.party])
        if key in politician_scores:
            scores["GPT_Politician"] = float(politician_scores[key])
        for source, value in scores.items():
            if not -1.0 <= value <= 1.0:
                raise IdeologyError(f"{source} score {value} for {p.handle} outside [-1, 1]")
        profiles.append(IdeologyProfile(p.handle, p.party, scores))
    return profiles


def source_table(profiles: Iterable[IdeologyProfile], source: str) -> dict[str, float | None]:
    """Handle to score for one source; politicians lacking it map to None."""
    if source not in SOURCES:
        raise ValueError(f"unknown ideology source {source!r}")
    return {p.handle: p.get(source) for p in profiles}


def party_scores(profiles: Iterable[IdeologyProfile], source: str) -> dict[str, float]:
    """Mean member score per party, skipping members without the source."""
    members: dict[str, list[float]] = {}
    for p in profiles:
        value = p.get(source)
        if value is not None:
            members.setdefault(p.party, []).append(value)
    return {party: float(np.mean(v)) for party, v in sorted(members.items())}


def write_profiles(profiles: Iterable[IdeologyProfile], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["handle", "source", "score"])
        for p in profiles:
            for source in SOURCES:
                if source in p.scores:
                    writer.writerow([p.handle, source, repr(float(p.scores[source]))])


def read_profiles(path: str | Path, registry: PoliticianRegistry) -> list[IdeologyProfile]:
    scores: dict[str, dict[str, float]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            scores.setdefault(normalize_handle(row["handle"]), {})[row["source"]] = float(row["score"])
    return [IdeologyProfile(p.handle, p.party, scores.get(normalize_handle(p.handle), {}))
            for p in registry]
