"""MCMC engine.

The kernel is Hamiltonian Monte Carlo with a dense adapted metric and a
dual-averaged step size.  Callers without an analytic gradient get a
finite-difference one.

All chains advance together as a ``(chains, dims)`` batch so the log
density is evaluated once per step for every chain.  Each chain draws its
randomness from its own generator, spawned from ``config.seed``, so the
output depends only on the seed and the configuration.  Adaptation
happens during warmup only; the kernel is frozen afterwards.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .diagnostics import PosteriorSummary, summarize_draws

log = logging.getLogger(__name__)

MAX_INIT_TRIES = 100


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class MCMCConfig:
    chains: int = 4
    iterations: int = 2000
    warmup: int = 1000
    seed: int = 0
    target_accept: float | None = None
    init_radius: float = 2.0
    path_length: float = 1.5
    max_leapfrog: int = 256

    def __post_init__(self):
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.iterations <= self.warmup:
            raise ValueError("iterations must exceed warmup")
        if self.warmup < 0:
            raise ValueError("warmup must be >= 0")

    @property
    def n_keep(self) -> int:
        return self.iterations - self.warmup

    def to_dict(self) -> dict:
        return {
            "chains": self.chains,
            "iterations": self.iterations,
            "warmup": self.warmup,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict | None, **overrides) -> "MCMCConfig":
        data = dict(data or {})
        data.update({k: v for k, v in overrides.items() if v is not None})
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in data.items() if k in known})


@dataclass
class Chains:
    """Post-warmup draws, shaped ``(chains, draws, params)``."""

    draws: np.ndarray
    names: list[str]
    config: MCMCConfig
    accept_rate: np.ndarray = field(default_factory=lambda: np.zeros(0))
    divergences: int = 0

    def __post_init__(self):
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must be (chains, draws, params) matching names")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        return self.draws.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def __getitem__(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.index(name)]

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def summary(self, name: str) -> PosteriorSummary:
        return summarize_draws(self[name])

    def subset(self, names: Sequence[str]) -> "Chains":
        idx = [self.index(n) for n in names]
        return replace(self, draws=self.draws[:, :, idx], names=list(names))

    def with_derived(self, name: str, values: np.ndarray) -> "Chains":
        values = np.asarray(values, dtype=float)
        if values.shape != self.draws.shape[:2]:
            raise ValueError("derived draws must be shaped (chains, draws)")
        draws = np.concatenate([self.draws, values[:, :, None]], axis=2)
        return replace(self, draws=draws, names=[*self.names, name])


def chain_rngs(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def warmup_windows(warmup: int) -> list[int]:
    """Iterations (exclusive ends) at which the metric is re-estimated.

    Stan-style schedule: a fast initial buffer, doubling slow windows, and
    a fast terminal buffer.  Short warmups fall back to a single window.
    """
    init_buf, term_buf, base = 75, 50, 25
    if warmup < 20:
        return []
    if warmup < init_buf + term_buf + base:
        init_buf = int(0.15 * warmup)
        term_buf = int(0.1 * warmup)
        base = warmup - init_buf - term_buf
    ends = []
    start, size = init_buf, base
    slow_end = warmup - term_buf
    while start < slow_end:
        end = start + size
        if end + 2 * size > slow_end:
            end = slow_end
        ends.append(end)
        start = end
        size *= 2
    return ends


def _initial_points(logp_fn, dims, config, rngs, init):
    center = np.zeros(dims) if init is None else np.asarray(init, dtype=float)
    if init is None:
        radius = config.init_radius
    else:
        radius = min(config.init_radius, 0.5)
    points = np.empty((config.chains, dims))
    for c, rng in enumerate(rngs):
        points[c] = center + rng.uniform(-radius, radius, dims)
    values = logp_fn(points)
    for _ in range(MAX_INIT_TRIES):
        bad = ~np.isfinite(values)
        if not bad.any():
            return points, values
        for c in np.flatnonzero(bad):
            points[c] = center + rngs[c].uniform(-radius, radius, dims)
        values = logp_fn(points)
    raise SamplerError(
        f"log density non-finite at initialization after {MAX_INIT_TRIES} re-draws"
    )


def _batched(fn, vectorized):
    if vectorized:
        return fn
    return lambda theta: np.array([fn(row) for row in theta])


def run_mcmc(
    logposterior: Callable,
    dims: int,
    config: MCMCConfig,
    *,
    gradient: Callable | None = None,
    vectorized: bool = False,
    init: np.ndarray | None = None,
    names: Sequence[str] | None = None,
) -> Chains:
    """Sample from ``exp(logposterior)``.

    Parameters
    ----------
    logposterior : callable
        Log density of a parameter vector of length ``dims``.  With
        ``vectorized=True`` it receives a ``(chains, dims)`` array and
        returns one value per row.
    gradient : callable, optional
        Gradient of ``logposterior`` with the same calling convention.
        Without it, central finite differences are used.
    init : array, optional
        Centre of the initial points; each chain is jittered around it.
    """
    if dims < 1:
        raise ValueError("dims must be >= 1")
    names = list(names) if names is not None else [f"theta[{i}]" for i in range(dims)]
    logp = _batched(logposterior, vectorized)
    grad = _finite_difference(logp, dims) if gradient is None else _batched(gradient, vectorized)
    return sample_hmc(lambda th: (logp(th), grad(th)), dims, config, init=init, names=names)


def _finite_difference(logp, dims: int, step: float = 1e-5):
    """Central-difference gradient of a batched log density.

    Leapfrog updates remain volume preserving and reversible for any
    deterministic force, so an approximate gradient leaves the
    Metropolis-corrected chain exact; it only costs acceptance.
    """
    eye = np.eye(dims)

    def grad(theta):
        h = step * np.maximum(1.0, np.abs(theta))
        out = np.empty_like(theta)
        for j in range(dims):
            shift = eye[j] * h[:, j:j + 1]
            out[:, j] = (logp(theta + shift) - logp(theta - shift)) / (2.0 * h[:, j])
        return out

    return grad


class _DualAveraging:
    """Nesterov dual averaging of log step size, one state per chain."""

    def __init__(self, eps: np.ndarray, target: float):
        self.target = target
        self.restart(eps)

    def restart(self, eps: np.ndarray):
        self.mu = np.log(10.0 * eps)
        self.h_bar = np.zeros_like(eps)
        self.log_eps_bar = np.zeros_like(eps)
        self.count = 0

    def update(self, accept_prob: np.ndarray) -> np.ndarray:
        self.count += 1
        t = self.count
        t0, gamma, kappa = 10.0, 0.05, 0.75
        w = 1.0 / (t + t0)
        self.h_bar = (1 - w) * self.h_bar + w * (self.target - accept_prob)
        log_eps = self.mu - np.sqrt(t) / gamma * self.h_bar
        eta = t ** (-kappa)
        self.log_eps_bar = eta * log_eps + (1 - eta) * self.log_eps_bar
        return np.exp(log_eps)

    def final(self) -> np.ndarray:
        return np.exp(self.log_eps_bar)


class _Metric:
    """Per-chain dense inverse metric ``cov`` with Cholesky factor ``chol``."""

    def __init__(self, n_chain: int, dims: int):
        self.cov = np.broadcast_to(np.eye(dims), (n_chain, dims, dims)).copy()
        self.chol = self.cov.copy()

    def momentum(self, rngs) -> np.ndarray:
        z = np.stack([rng.standard_normal(self.cov.shape[1]) for rng in rngs])
        # p ~ N(0, cov^-1): solve chol^T p = z
        return np.linalg.solve(np.swapaxes(self.chol, 1, 2), z[:, :, None])[:, :, 0]

    def velocity(self, p: np.ndarray) -> np.ndarray:
        return np.einsum("cij,cj->ci", self.cov, p)

    def kinetic(self, p: np.ndarray) -> np.ndarray:
        return 0.5 * np.sum(p * self.velocity(p), axis=1)

    def update(self, block: np.ndarray):
        """Re-estimate from warmup draws ``block`` shaped (draws, chains, dims)."""
        n, n_chain, dims = block.shape
        shrink = n / (n + dims)
        for c in range(n_chain):
            cov = np.atleast_2d(np.cov(block[:, c], rowvar=False))
            cov = shrink * cov + (1 - shrink) * np.diag(np.diag(cov))
            cov = (n / (n + 5.0)) * cov + 1e-3 * (5.0 / (n + 5.0)) * np.eye(dims)
            self.cov[c] = cov
            self.chol[c] = np.linalg.cholesky(cov)


def _find_reasonable_eps(logp_grad, x, lp, g, metric, rngs):
    n_chain = x.shape[0]
    eps = np.ones(n_chain)
    for _ in range(50):
        p = metric.momentum(rngs)
        h0 = lp - metric.kinetic(p)
        p1 = p + 0.5 * eps[:, None] * g
        x1 = x + eps[:, None] * metric.velocity(p1)
        lp1, g1 = logp_grad(x1)
        p1 = p1 + 0.5 * eps[:, None] * g1
        h1 = lp1 - metric.kinetic(p1)
        delta = np.where(np.isfinite(h1), h1 - h0, -np.inf)
        too_big = delta < np.log(0.8)
        if not too_big.any():
            break
        eps = np.where(too_big, eps * 0.5, eps)
    return eps


def sample_hmc(
    logp_grad: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    dims: int,
    config: MCMCConfig,
    *,
    init: np.ndarray | None = None,
    names: Sequence[str] | None = None,
) -> Chains:
    """HMC over a batch of chains with a dense adapted metric.

    ``logp_grad`` maps a ``(chains, dims)`` array to ``(logp, grad)``.  The
    number of leapfrog steps is drawn per chain and iteration uniformly so
    that the mean integration time is ``config.path_length``.
    """
    names = list(names) if names is not None else [f"theta[{i}]" for i in range(dims)]
    with np.errstate(over="ignore", invalid="ignore", divide="ignore", under="ignore"):
        return _sample_hmc(logp_grad, dims, config, init, names)


def _sample_hmc(logp_grad, dims, config, init, names) -> Chains:
    rngs = chain_rngs(config.seed, config.chains)
    target = config.target_accept or 0.8
    n_chain = config.chains

    def logp_only(th):
        return logp_grad(th)[0]

    x, _ = _initial_points(logp_only, dims, config, rngs, init)
    lp, g = logp_grad(x)
    metric = _Metric(n_chain, dims)
    eps = _find_reasonable_eps(logp_grad, x, lp, g, metric, rngs)
    adapt = _DualAveraging(eps, target)
    windows = set(warmup_windows(config.warmup))
    window_start = 0
    history = np.empty((max(config.warmup, 1), n_chain, dims))
    out = np.empty((n_chain, config.n_keep, dims))
    accepted = np.zeros(n_chain)
    divergences = 0

    for it in range(config.iterations):
        base_steps = np.clip(np.round(config.path_length / eps), 1, config.max_leapfrog)
        n_steps = np.array(
            [rng.integers(1, 2 * int(b)) if b > 1 else 1 for rng, b in zip(rngs, base_steps)]
        )
        p0 = metric.momentum(rngs)
        h0 = lp - metric.kinetic(p0)

        xn, gn, lpn = x.copy(), g.copy(), lp.copy()
        pn = p0 + 0.5 * eps[:, None] * gn
        for step in range(int(n_steps.max())):
            active = step < n_steps
            move = active[:, None]
            xn = np.where(move, xn + eps[:, None] * metric.velocity(pn), xn)
            lp_new, g_new = logp_grad(xn)
            lpn = np.where(active, lp_new, lpn)
            gn = np.where(move, g_new, gn)
            last = step == n_steps - 1
            half = np.where(last, 0.5, 1.0)[:, None]
            pn = np.where(move, pn + half * eps[:, None] * gn, pn)
        h1 = lpn - metric.kinetic(pn)
        finite = np.isfinite(h1) & np.all(np.isfinite(xn), axis=1)
        delta = np.where(finite, h1 - h0, -np.inf)
        divergent = ~finite | (delta < -1000.0)
        accept_prob = np.exp(np.minimum(0.0, delta))
        log_u = np.log([rng.uniform() for rng in rngs])
        accept = log_u < delta
        x = np.where(accept[:, None], xn, x)
        lp = np.where(accept, lpn, lp)
        g = np.where(accept[:, None], gn, g)

        if it < config.warmup:
            history[it] = x
            eps = adapt.update(accept_prob)
            if it + 1 in windows:
                metric.update(history[window_start:it + 1])
                eps = _find_reasonable_eps(logp_grad, x, lp, g, metric, rngs)
                adapt.restart(eps)
                window_start = it + 1
            if it + 1 == config.warmup:
                eps = adapt.final()
        else:
            out[:, it - config.warmup] = x
            accepted += accept
            divergences += int(divergent.sum())
    if divergences:
        log.warning("%d divergent transitions after warmup", divergences)
    return Chains(out, names, config, accept_rate=accepted / config.n_keep,
                  divergences=divergences)
