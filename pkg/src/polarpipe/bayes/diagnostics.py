"""Convergence diagnostics and posterior summaries for MCMC draws.

All functions take draws for a single scalar quantity shaped
``(n_chains, n_draws)``; a 1-D array is treated as one chain.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

MIN_DRAWS = 4


class DiagnosticsError(ValueError):
    """Raised when draws are too few to compute a diagnostic."""


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    sd: float
    q2_5: float
    q50: float
    q97_5: float
    p_ge_0: float
    rhat: float
    ess: float
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def _as_chains(draws) -> np.ndarray:
    arr = np.asarray(draws, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DiagnosticsError(f"expected (chains, draws) array, got shape {arr.shape}")
    if arr.size < MIN_DRAWS or arr.shape[1] < 2:
        raise DiagnosticsError(
            f"need at least {MIN_DRAWS} post-warmup draws, got shape {arr.shape}"
        )
    return arr


def _split(arr: np.ndarray) -> np.ndarray:
    n = arr.shape[1]
    half = n // 2
    # odd lengths drop the middle draw
    return np.concatenate([arr[:, :half], arr[:, n - half:]], axis=0)


def rhat(draws) -> float:
    """Split potential scale reduction factor.

    Each chain is cut in half and the classic Gelman-Rubin ratio of pooled
    to within-chain variance is computed over the halves.  Draws with zero
    variance everywhere give 1.0; chains that are individually constant but
    disagree give ``inf``.
    """
    chains = _split(_as_chains(draws))
    n = chains.shape[1]
    means = chains.mean(axis=1)
    within = chains.var(axis=1, ddof=1).mean()
    between = n * means.var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_plus = (n - 1) / n * within + between / n
    return float(np.sqrt(var_plus / within))


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row via FFT."""
    n = x.shape[-1]
    centered = x - x.mean(axis=-1, keepdims=True)
    size = 1 << int(np.ceil(np.log2(2 * n)))
    freq = np.fft.rfft(centered, n=size, axis=-1)
    acov = np.fft.irfft(freq * np.conjugate(freq), n=size, axis=-1)[..., :n]
    return acov / n


def ess(draws) -> float:
    """Effective sample size pooled across (split) chains.

    Autocorrelations are combined across chains, then summed with Geyer's
    initial positive sequence (monotone variant).  The result is capped at
    the total number of draws.  Zero-variance draws give 0.0.
    """
    value, _ = _ess_with_flag(draws)
    return value


def _ess_with_flag(draws) -> tuple[float, bool]:
    chains = _split(_as_chains(draws))
    m, n = chains.shape
    total = m * n
    acov = _autocov(chains)
    within = acov[:, 0].mean() * n / (n - 1)
    if within == 0.0:
        return 0.0, True
    means = chains.mean(axis=1)
    var_plus = within * (n - 1) / n
    if m > 1:
        var_plus += means.var(ddof=1)
    rho = 1.0 - (within - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0

    # Geyer: sum consecutive pairs while positive, forcing monotone decrease.
    pair_sums = []
    prev = np.inf
    t = 0
    while t + 1 < n:
        p = rho[t] + rho[t + 1]
        if p <= 0.0:
            break
        p = min(p, prev)
        pair_sums.append(p)
        prev = p
        t += 2
    tau = -1.0 + 2.0 * float(np.sum(pair_sums)) if pair_sums else 1.0
    tau = max(tau, 1.0 / np.log10(max(total, 10)))
    return float(min(total / tau, total)), False


def summarize_draws(draws) -> PosteriorSummary:
    """Summary statistics of one scalar quantity.

    Quantiles use linear interpolation between order statistics.
    """
    chains = _as_chains(draws)
    flat = chains.ravel()
    q = np.quantile(flat, [0.025, 0.5, 0.975])
    ess_value, degenerate = _ess_with_flag(chains)
    return PosteriorSummary(
        mean=float(flat.mean()),
        sd=float(flat.std(ddof=1)),
        q2_5=float(q[0]),
        q50=float(q[1]),
        q97_5=float(q[2]),
        p_ge_0=float(np.mean(flat >= 0.0)),
        rhat=rhat(chains),
        ess=ess_value,
        degenerate=degenerate,
    )
