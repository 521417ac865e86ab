"""Analytic ground truth for the three tractable examples.

For the uniform-scale, Pareto and boundary-mean models the matching problem
has a closed-form solution driven by a low-dimensional summary of the noise
block.  This module computes those summaries, the exact matched parameter,
and the theoretical coverage, independently of the numeric solvers, so the
two routes can be compared at machine precision.

Summaries are always reduced from a full canonical sample (never sampled
from their marginal law directly): the oracle and the numeric pipeline then
consume literally the same uniforms, which makes 1e-12 parity assertable.

The closed forms are re-expressed through the observed auxiliary estimate so
the true parameter never enters.  For the Pareto model with noise summary
w = (w1, w2), w1 = max_i(1 - u_i) and w2 the shape estimate of the canonical
unit-Pareto sample, the observed estimate satisfies

    mu_hat = mu0 * w1^(-1/alpha0),    alpha_hat = alpha0 * w2,

and substituting these into the matched solution expressed in (theta0, w, w*)
eliminates (mu0, alpha0, w):

    alpha_check = alpha_hat / w2*,
    mu_check    = mu_hat * (w1*)^(w2* / alpha_hat).

The same substitution gives theta_check = pi_hat / u*_(n) for the uniform
scale and theta_check = max(pi_hat - w*, 0) for the boundary mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import DomainError, UnsupportedExample
from .rng import RandomBlock, draw_uniforms

__all__ = [
    "EXAMPLES",
    "NoiseSummary",
    "summary_from_block",
    "summaries_from_uniforms",
    "sample_summary",
    "exact_theta_check",
    "exact_theta_check_batch",
    "exact_coverage_theory",
    "pareto_h",
    "pareto_h_w",
]

EXAMPLES = ("uniform", "pareto", "andrews")


@dataclass(frozen=True)
class NoiseSummary:
    """The sufficient reduction of one noise block for a tractable example."""

    example: str
    stats: np.ndarray

    def __post_init__(self):
        if self.example not in EXAMPLES:
            raise UnsupportedExample(self.example)
        s = np.atleast_1d(np.asarray(self.stats, dtype=float))
        s.setflags(write=False)
        object.__setattr__(self, "stats", s)
        _check_support(self.example, s)


def _check_support(example: str, s: np.ndarray) -> None:
    if example == "uniform":
        if not (s.shape == (1,) and 0.0 < s[0] < 1.0):
            raise DomainError(f"uniform summary must be a scalar in (0,1): {s}")
    elif example == "pareto":
        if not (s.shape == (2,) and 0.0 < s[0] < 1.0 and s[1] > 0.0):
            raise DomainError(f"pareto summary must lie in (0,1)x(0,inf): {s}")
    else:
        if not (s.shape == (1,) and np.isfinite(s[0])):
            raise DomainError(f"boundary-mean summary must be a finite scalar: {s}")


def summaries_from_uniforms(example: str, U: np.ndarray) -> np.ndarray:
    """Reduce uniform blocks (rows of ``U``) to summary statistics.

    Returns shape ``(k, 1)`` for the scalar summaries and ``(k, 2)`` for the
    Pareto pair.  Row i is the summary of block ``U[i]``.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = U.shape[1]
    if example == "uniform":
        return np.max(U, axis=1, keepdims=True)
    if example == "pareto":
        # canonical unit-Pareto sample y_i = 1/(1-u_i); w1 = 1/min(y),
        # w2 = n / sum log(y_i / min(y)) (the canonical shape estimate)
        one_minus = 1.0 - U
        w1 = np.max(one_minus, axis=1)
        w2 = n / np.sum(np.log(w1[:, None] / one_minus), axis=1)
        return np.column_stack([w1, w2])
    if example == "andrews":
        return np.mean(special.ndtri(U), axis=1, keepdims=True)
    raise UnsupportedExample(example)


def summary_from_block(example: str, block: RandomBlock) -> NoiseSummary:
    """Summary of a single noise block."""
    return NoiseSummary(example, summaries_from_uniforms(example, block.u)[0])


def sample_summary(example: str, n: int, seed: int) -> NoiseSummary:
    """Draw the canonical n-uniform block for ``seed`` and reduce it."""
    if n < 1:
        raise DomainError("n must be >= 1")
    u = draw_uniforms(np.uint64(int(seed) & 0xFFFFFFFFFFFFFFFF), n)
    return NoiseSummary(example, summaries_from_uniforms(example, u)[0])


def _check_pi(example: str, pi: np.ndarray) -> np.ndarray:
    pi = np.atleast_1d(np.asarray(pi, dtype=float))
    if example == "uniform" and not (pi.shape == (1,) and pi[0] > 0.0):
        raise DomainError(f"uniform auxiliary estimate must be positive: {pi}")
    if example == "pareto" and not (pi.shape == (2,) and np.all(pi > 0.0)):
        raise DomainError(f"pareto auxiliary estimate must be positive: {pi}")
    if example == "andrews" and not (pi.shape == (1,) and pi[0] >= 0.0):
        raise DomainError(f"boundary-mean auxiliary estimate must be >= 0: {pi}")
    return pi


def exact_theta_check(example: str, pi_obs, w_star: NoiseSummary) -> np.ndarray:
    """Closed-form matched parameter given the observed auxiliary estimate.

    ``pi_obs`` may be a plain array or anything with a ``.pi`` attribute.
    """
    pi = _check_pi(example, getattr(pi_obs, "pi", pi_obs))
    if w_star.example != example:
        raise DomainError(f"summary is for {w_star.example!r}, not {example!r}")
    return exact_theta_check_batch(example, pi, w_star.stats[None, :])[0]


def exact_theta_check_batch(example: str, pi_obs, stats: np.ndarray) -> np.ndarray:
    """Vectorized closed form over a stack of summaries (rows of ``stats``)."""
    pi = _check_pi(example, getattr(pi_obs, "pi", pi_obs))
    stats = np.atleast_2d(np.asarray(stats, dtype=float))
    if example == "uniform":
        return pi[0] / stats
    if example == "pareto":
        w1s, w2s = stats[:, 0], stats[:, 1]
        mu_hat, alpha_hat = pi
        return np.column_stack([mu_hat * w1s ** (w2s / alpha_hat),
                                alpha_hat / w2s])
    if example == "andrews":
        return np.maximum(pi[0] - stats, 0.0)
    raise UnsupportedExample(example)


def exact_coverage_theory(example: str, alpha: float) -> float:
    """Theoretical coverage of the one-sided upper interval at level alpha.

    Exactly alpha for the uniform-scale and Pareto examples.  For the
    boundary mean at the boundary (true value 0) the interval covers with
    probability alpha when alpha <= 1/2 and with probability one otherwise,
    because the matched distribution has an atom of mass >= 1/2 at zero.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0,1): {alpha}")
    if example in ("uniform", "pareto"):
        return alpha
    if example == "andrews":
        return alpha if alpha <= 0.5 else 1.0
    raise UnsupportedExample(example)


def pareto_h(w_star: NoiseSummary) -> float:
    """Scalar reduction of the simulated Pareto summary driving the matched
    minimum: h(w*) = (w1*)^(w2*)."""
    if w_star.example != "pareto":
        raise DomainError("h is defined for the pareto example only")
    w1s, w2s = w_star.stats
    return float(w1s ** w2s)


def pareto_h_w(x, w: NoiseSummary, theta0) -> np.ndarray:
    """The strictly increasing map composing with :func:`pareto_h`.

    For observed summary w and generating parameters theta0 = (mu0, alpha0),
    h_w(x) = mu0 * (x * w1^(-w2))^(1 / (alpha0 * w2)), so that
    h_w(h(w*)) equals the matched minimum mu_check.
    """
    if w.example != "pareto":
        raise DomainError("h_w is defined for the pareto example only")
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0.0):
        raise DomainError("h_w is defined on positive arguments")
    mu0, alpha0 = np.asarray(theta0, dtype=float)
    w1, w2 = w.stats
    return mu0 * (x * w1 ** (-w2)) ** (1.0 / (alpha0 * w2))
