"""Poisson rate comparison with Jeffreys priors.

With a Jeffreys prior, a Poisson rate observed ``k`` times over exposure
``n`` has posterior ``Gamma(k + 1/2, rate=n)``; both rates are drawn
directly from their closed-form posteriors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .diagnostics import PosteriorSummary, summarize_draws
from .mcmc import chain_rngs

PARAMETERS = ("np_rate", "pp_rate", "rate_ratio", "rate_difference")


@dataclass
class RateTestResult:
    np_rate: np.ndarray
    pp_rate: np.ndarray
    counts: object

    @property
    def rate_ratio(self) -> np.ndarray:
        return self.np_rate / self.pp_rate

    @property
    def rate_difference(self) -> np.ndarray:
        return self.np_rate - self.pp_rate

    def draws(self, name: str) -> np.ndarray:
        if name not in PARAMETERS:
            raise KeyError(name)
        return getattr(self, name)

    def summaries(self) -> dict[str, PosteriorSummary]:
        return {name: summarize_draws(self.draws(name)) for name in PARAMETERS}


def poisson_rate_test(counts, n_draws: int = 6000, seed: int = 0, chains: int = 6) -> RateTestResult:
    """Compare the NP rate among out-group targets with the PP rate among in-group targets.

    ``counts`` needs ``k_np, n_out, k_pp, n_in`` attributes.  Draws are laid
    out as ``chains`` independent streams so that R-hat and ESS can be
    reported alongside the summaries.
    """
    if counts.n_out <= 0 or counts.n_in <= 0:
        raise ValueError(
            f"zero exposure: n_out={counts.n_out}, n_in={counts.n_in}; both must be positive"
        )
    if n_draws < chains * 2:
        raise ValueError("n_draws too small for the requested chain layout")
    per_chain = n_draws // chains
    np_rate = np.empty((chains, per_chain))
    pp_rate = np.empty((chains, per_chain))
    for c, rng in enumerate(chain_rngs(seed, chains)):
        np_rate[c] = rng.gamma(counts.k_np + 0.5, 1.0 / counts.n_out, per_chain)
        pp_rate[c] = rng.gamma(counts.k_pp + 0.5, 1.0 / counts.n_in, per_chain)
    return RateTestResult(np_rate=np_rate, pp_rate=pp_rate, counts=counts)
