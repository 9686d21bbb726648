"""Adaptive random-walk Metropolis, used to check Laplace posteriors on small problems."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from .laplace import FittedModel

ACCEPT_RANGE = (0.05, 0.7)
TARGET_ACCEPT = 0.234
BATCH = 50


@dataclass
class SamplerResult:
    draws: np.ndarray
    acceptance: float
    scale: float
    flagged: bool

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)


def mh_sampler(m: FittedModel, n_iter: int, seed, log_target=None) -> SamplerResult:
    """Random-walk Metropolis started at the mode with proposal ``s^2 * cov``.

    The scale ``s`` adapts in batches during the first half (burn-in) and is
    then frozen; draws and the acceptance rate come from the second half.
    An acceptance rate outside ``[0.05, 0.7]`` sets ``flagged`` and emits a
    warning.
    """
    target = log_target or m.log_posterior
    if target is None:
        raise ConfigError("model carries no log posterior to sample")
    if n_iter < 2:
        raise ConfigError("need at least two iterations")
    rng = np.random.default_rng(seed)
    d = len(m.theta)
    L = np.linalg.cholesky(m.cov)
    log_s = np.log(2.38 / np.sqrt(d))
    burn = n_iter // 2
    x = m.theta.copy()
    lp = target(x)
    out = np.empty((n_iter - burn, d))
    acc_batch = acc_kept = 0
    for i in range(n_iter):
        prop = x + np.exp(log_s) * (L @ rng.standard_normal(d))
        lp_prop = target(prop)
        if np.log(rng.uniform()) < lp_prop - lp:
            x, lp = prop, lp_prop
            acc_batch += 1
            if i >= burn:
                acc_kept += 1
        if i < burn and (i + 1) % BATCH == 0:
            k = (i + 1) // BATCH
            log_s += (acc_batch / BATCH - TARGET_ACCEPT) / np.sqrt(k)
            acc_batch = 0
        if i >= burn:
            out[i - burn] = x
    rate = acc_kept / (n_iter - burn)
    flagged = not (ACCEPT_RANGE[0] <= rate <= ACCEPT_RANGE[1])
    if flagged:
        warnings.warn(f"Metropolis acceptance rate {rate:.3f} outside {ACCEPT_RANGE}",
                      RuntimeWarning, stacklevel=2)
    return SamplerResult(out, rate, float(np.exp(log_s)), flagged)
