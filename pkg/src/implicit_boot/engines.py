"""Confidence-interval engines.

Each engine turns B resampled parameter draws into a percentile-style
interval for a scalar functional psi(theta):

* ``implicit_bootstrap`` -- re-solves the matching problem on B fresh noise
  blocks and reads quantiles of psi at the matched parameters;
* ``percentile_parametric_bootstrap`` -- classic plug-in resampling from a
  fitted parameter;
* ``studentized_bootstrap`` -- bootstrap-t with a delta-method scale;
* ``bca_bootstrap`` -- bias-corrected and accelerated percentiles;
* ``asymptotic_ci`` -- Wald interval from the observed information (or a
  parametric-bootstrap covariance when no likelihood is available);
* ``indirect_inference_correct`` -- consistency correction of a biased
  estimator by matching its average over frozen simulated samples.

All randomness is keyed by (replicate_id, role, draw index), so every engine
is a deterministic function of its master seed and reentrant across threads.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from . import exact
from .errors import (DomainError, ImplicitBootError, NonConvergence,
                     SingularInformation)
from .estimators import Estimator
from .matcher import (BoxTransform, MatchPath, SolverConfig, _initial_theta,
                      batched_switched_match, closed_form_match, nested_match,
                      supports_batch, switched_match)
from .models import Dataset, ModelSpec, ParamVector
from .rng import MasterSeed, RandomBlock, Role, StreamKey, derive_seed, \
    derive_seeds, draw_block, draw_uniforms

__all__ = [
    "CIMethod",
    "DistributionSample",
    "CIResult",
    "empirical_quantile",
    "implicit_bootstrap",
    "percentile_parametric_bootstrap",
    "studentized_pivots",
    "studentized_bootstrap",
    "bca_components",
    "bca_level",
    "jackknife_acceleration",
    "bca_bootstrap",
    "asymptotic_components",
    "asymptotic_ci",
    "indirect_inference_correct",
    "observed_information",
]


class CIMethod(enum.Enum):
    IMPLICIT = "implicit"
    PERCENTILE = "percentile"
    STUDENTIZED = "studentized"
    BCA = "bca"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class DistributionSample:
    """Draws of psi at resampled parameters, with per-draw solver flags."""

    values: np.ndarray
    B: int = 0
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.shape[0] < 1:
            raise DomainError("a distribution sample needs at least one draw")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "B", v.shape[0])


@dataclass(frozen=True)
class CIResult:
    method: CIMethod
    alpha: float
    lower: float
    upper: float
    point: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise DomainError(f"alpha must be in (0,1): {self.alpha}")
        if self.lower > self.upper:
            raise DomainError(f"empty interval: [{self.lower}, {self.upper}]")


def empirical_quantile(sample, alpha: float) -> float:
    """Left-continuous empirical quantile: order statistic k = ceil(alpha*B).

    This is the generalized inverse of the ECDF, i.e. the smallest value x
    with Pr(draw <= x) >= alpha under the empirical law.  A small guard
    absorbs floating-point error in alpha*B at exact multiples.
    """
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"quantile level must be in (0,1): {alpha}")
    values = np.asarray(getattr(sample, "values", sample), dtype=float)
    B = values.shape[0]
    k = int(math.ceil(alpha * B - 1e-9))
    k = min(max(k, 1), B)
    return float(np.partition(values, k - 1)[k - 1])


def _as_psi(psi, model: ModelSpec):
    if psi is None:
        return model.default_psi
    if isinstance(psi, (int, np.integer)):
        j = int(psi)
        return lambda theta: float(np.asarray(theta, dtype=float)[j])
    return psi


def _psi_rows(psi, thetas: np.ndarray) -> np.ndarray:
    return np.array([psi(t) for t in np.atleast_2d(thetas)], dtype=float)


def _percentile_interval(sample, alpha: float, two_sided: bool):
    if two_sided:
        return (empirical_quantile(sample, (1.0 - alpha) / 2.0),
                empirical_quantile(sample, (1.0 + alpha) / 2.0))
    return -np.inf, empirical_quantile(sample, alpha)


def _boot_blocks(master: MasterSeed, replicate_id: int, B: int, m: int) -> np.ndarray:
    seeds = derive_seeds(master, replicate_id, Role.BOOT, np.arange(1, B + 1))
    return draw_uniforms(seeds, m)


def _warn_small_B(B: int) -> None:
    if B < 100:
        warnings.warn(f"B={B} is small for percentile intervals; "
                      "quantiles will be coarse", stacklevel=3)


def implicit_bootstrap(data: Dataset, model: ModelSpec, est: Estimator,
                       psi=None, B: int = 1000,
                       master: MasterSeed = MasterSeed(0),
                       cfg: SolverConfig = SolverConfig(),
                       path: MatchPath = MatchPath.SWITCHED,
                       alpha: float = 0.95, two_sided: bool = False,
                       replicate_id: int = 0):
    """Percentile interval from B re-solved matching problems.

    The auxiliary estimate is computed once on ``data``; each draw b solves
    the matching problem against a fresh noise block keyed by (replicate_id,
    BOOT, b).  Draws whose solve raises are dropped and counted; the call
    fails only when more than half are lost.  Returns the psi sample and the
    interval.
    """
    _warn_small_B(B)
    psi = _as_psi(psi, model)
    pi_obs = est.estimate(data)
    m = model.noise_dim(data.n)
    tol_flag = 0.5 * data.n ** -1.5 * max(1.0, float(np.linalg.norm(pi_obs.pi)))

    thetas, deltas, converged = [], [], []
    failed = 0
    if path is MatchPath.CLOSED_FORM:
        U = _boot_blocks(master, replicate_id, B, m)
        stats = exact.summaries_from_uniforms(model.name, U)
        for b in range(B):
            res = closed_form_match(model.name, pi_obs, stats[b])
            thetas.append(res.theta_check)
            deltas.append(res.delta)
            converged.append(res.converged)
    elif path is MatchPath.SWITCHED and supports_batch(model, est) and est.has_z:
        U = _boot_blocks(master, replicate_id, B, m)
        th, dl, cv, _ = batched_switched_match(pi_obs, model, est, U, cfg)
        thetas, deltas, converged = list(th), list(dl), list(cv)
    else:
        solver = switched_match if path is MatchPath.SWITCHED else nested_match
        for b in range(1, B + 1):
            key = StreamKey(replicate_id, Role.BOOT, b)
            block = draw_block(derive_seed(master, key), m)
            try:
                res = solver(pi_obs, model, est, block, cfg)
            except ImplicitBootError:
                failed += 1
                continue
            thetas.append(res.theta_check)
            deltas.append(res.delta)
            converged.append(res.converged)

    if failed > B // 2:
        raise NonConvergence(f"{failed}/{B} matching solves failed")

    thetas = np.asarray(thetas, dtype=float)
    deltas = np.asarray(deltas, dtype=float)
    converged = np.asarray(converged, dtype=bool)
    delta_flag = deltas > tol_flag
    sample = DistributionSample(_psi_rows(psi, thetas),
                                flags={"converged": converged,
                                       "delta_flag": delta_flag})
    lo, hi = _percentile_interval(sample, alpha, two_sided)
    meta = {"B": sample.B, "failed": failed,
            "delta_flag_frac": float(np.mean(delta_flag)),
            "mean_delta": float(np.mean(deltas))}
    ci = CIResult(CIMethod.IMPLICIT, alpha, lo, hi,
                  empirical_quantile(sample, 0.5), meta)
    return sample, ci


def _resample_thetas(data, model, est, B, master, replicate_id):
    """Fit, then re-estimate on B datasets simulated at the fit.

    Returns (theta_hat, theta_stars, failed).
    """
    theta_hat = model.box.clamp(est.estimate(data).pi)
    m = model.noise_dim(data.n)
    if hasattr(model, "simulate_batch") and hasattr(est, "estimate_batch"):
        U = _boot_blocks(master, replicate_id, B, m)
        batch = model.simulate_batch(np.tile(theta_hat, (B, 1)), U)
        stars = np.asarray(est.estimate_batch(batch), dtype=float)
        # batched estimators mark rows without a solution as NaN
        good = np.all(np.isfinite(stars), axis=1)
        failed = int(np.sum(~good))
        if failed > B // 2:
            raise NonConvergence(f"{failed}/{B} bootstrap re-estimates failed")
        return theta_hat, stars[good], failed
    stars, failed = [], 0
    for b in range(1, B + 1):
        key = StreamKey(replicate_id, Role.BOOT, b)
        block = draw_block(derive_seed(master, key), m)
        try:
            stars.append(est.estimate(model.simulate(theta_hat, block)).pi)
        except ImplicitBootError:
            failed += 1
    if failed > B // 2:
        raise NonConvergence(f"{failed}/{B} bootstrap re-estimates failed")
    return theta_hat, np.asarray(stars, dtype=float), failed


def percentile_parametric_bootstrap(data: Dataset, model: ModelSpec,
                                    consistent_est: Estimator, psi=None,
                                    B: int = 1000,
                                    master: MasterSeed = MasterSeed(0),
                                    alpha: float = 0.95,
                                    two_sided: bool = False,
                                    replicate_id: int = 0):
    """Plain percentile interval from resampling at the fitted parameter."""
    _warn_small_B(B)
    psi = _as_psi(psi, model)
    theta_hat, stars, failed = _resample_thetas(data, model, consistent_est,
                                                B, master, replicate_id)
    sample = DistributionSample(_psi_rows(psi, stars))
    lo, hi = _percentile_interval(sample, alpha, two_sided)
    meta = {"B": sample.B, "failed": failed}
    ci = CIResult(CIMethod.PERCENTILE, alpha, lo, hi, psi(theta_hat), meta)
    return sample, ci


def observed_information(loglik, theta: np.ndarray) -> np.ndarray:
    """Negative Hessian of a log-likelihood by central differences.

    Step per coordinate: eps^(1/3) * (1 + |theta_j|).
    """
    theta = np.asarray(theta, dtype=float)
    p = theta.shape[0]
    h = np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.abs(theta))
    H = np.empty((p, p))
    f0 = loglik(theta)
    for i in range(p):
        ei = np.zeros(p)
        ei[i] = h[i]
        H[i, i] = (loglik(theta + ei) - 2.0 * f0 + loglik(theta - ei)) / h[i] ** 2
        for j in range(i + 1, p):
            ej = np.zeros(p)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                loglik(theta + ei + ej) - loglik(theta + ei - ej)
                - loglik(theta - ei + ej) + loglik(theta - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return -H


def _psi_gradient(psi, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    h = np.finfo(float).eps ** (1.0 / 3.0) * (1.0 + np.abs(theta))
    g = np.empty_like(theta)
    for j in range(theta.shape[0]):
        e = np.zeros_like(theta)
        e[j] = h[j]
        g[j] = (psi(theta + e) - psi(theta - e)) / (2.0 * h[j])
    return g


def _delta_method_sigma(psi, theta: np.ndarray, info: np.ndarray) -> float:
    g = _psi_gradient(psi, theta)
    try:
        var = float(g @ np.linalg.solve(info, g))
    except np.linalg.LinAlgError as err:
        raise SingularInformation(str(err)) from None
    if not np.isfinite(var) or var <= 0.0:
        raise SingularInformation(
            f"delta-method variance {var} from information matrix")
    return math.sqrt(var)


def studentized_pivots(data: Dataset, model: ModelSpec, est_mle: Estimator,
                       psi=None, B: int = 1000,
                       master: MasterSeed = MasterSeed(0),
                       replicate_id: int = 0):
    """Bootstrap-t ingredients: (pivot sample, psi_hat, sigma_hat, failed).

    Computed once, the pivots serve every confidence level.
    """
    if not model.has_loglik:
        raise SingularInformation(f"{model.name} exposes no log-likelihood")
    psi = _as_psi(psi, model)
    theta_hat = est_mle.estimate(data).pi
    psi_hat = psi(theta_hat)
    sigma_hat = _delta_method_sigma(
        psi, theta_hat, observed_information(lambda t: model.loglik(t, data),
                                             theta_hat))
    theta_sim = model.box.clamp(theta_hat)
    m = model.noise_dim(data.n)
    pivots, failed = [], 0
    for b in range(1, B + 1):
        key = StreamKey(replicate_id, Role.BOOT, b)
        block = draw_block(derive_seed(master, key), m)
        sim = model.simulate(theta_sim, block)
        try:
            theta_b = est_mle.estimate(sim).pi
            sigma_b = _delta_method_sigma(
                psi, theta_b, observed_information(
                    lambda t: model.loglik(t, sim), theta_b))
        except ImplicitBootError:
            failed += 1
            continue
        pivots.append((psi(theta_b) - psi_hat) / sigma_b)
    if failed > B // 2:
        raise NonConvergence(f"{failed}/{B} studentized draws failed")
    return DistributionSample(np.asarray(pivots)), psi_hat, sigma_hat, failed


def studentized_bootstrap(data: Dataset, model: ModelSpec, est_mle: Estimator,
                          psi=None, B: int = 1000,
                          master: MasterSeed = MasterSeed(0),
                          alpha: float = 0.95, two_sided: bool = False,
                          replicate_id: int = 0) -> CIResult:
    """Bootstrap-t interval with a delta-method scale from the observed
    information; requires the model to expose a log-likelihood."""
    _warn_small_B(B)
    sample, psi_hat, sigma_hat, failed = studentized_pivots(
        data, model, est_mle, psi, B, master, replicate_id)
    if two_sided:
        lo = psi_hat - sigma_hat * empirical_quantile(sample, (1.0 + alpha) / 2.0)
        hi = psi_hat - sigma_hat * empirical_quantile(sample, (1.0 - alpha) / 2.0)
    else:
        lo = -np.inf
        hi = psi_hat - sigma_hat * empirical_quantile(sample, 1.0 - alpha)
    meta = {"B": sample.B, "failed": failed, "sigma_hat": sigma_hat}
    return CIResult(CIMethod.STUDENTIZED, alpha, lo, hi, psi_hat, meta)


def _leave_one_out(data: Dataset, i: int) -> Dataset:
    return Dataset(
        y=np.delete(data.y, i),
        X=None if data.X is None else np.delete(data.X, i, axis=0),
        censored=None if data.censored is None else np.delete(data.censored, i))


def jackknife_acceleration(data: Dataset, est: Estimator, psi) -> float | None:
    """Acceleration constant from jackknife skewness of psi at leave-one-out
    fits, or None when the jackknife is degenerate."""
    jack = []
    for i in range(data.n):
        try:
            jack.append(psi(est.estimate(_leave_one_out(data, i)).pi))
        except ImplicitBootError:
            continue
    jack = np.asarray(jack, dtype=float)
    if jack.size < 2:
        return None
    centered = np.mean(jack) - jack
    denom = np.sum(centered ** 2) ** 1.5
    if denom < 1e-300:
        return None
    return float(np.sum(centered ** 3) / (6.0 * denom))


def bca_level(z0: float, a: float, level: float, B: int) -> float:
    """Percentile level after bias correction and acceleration, clipped to
    the resolvable range of a size-B sample."""
    z = z0 + special.ndtri(level)
    adj = float(special.ndtr(z0 + z / (1.0 - a * z)))
    return min(max(adj, 1.0 / (B + 1.0)), B / (B + 1.0))


def bca_components(data: Dataset, model: ModelSpec, est_mle: Estimator,
                   psi=None, B: int = 1000,
                   master: MasterSeed = MasterSeed(0), replicate_id: int = 0):
    """Everything a BCa interval needs, independent of the level:
    (sample, psi_hat, z0, a_or_None, failed)."""
    psi = _as_psi(psi, model)
    theta_hat, stars, failed = _resample_thetas(data, model, est_mle,
                                                B, master, replicate_id)
    psi_hat = psi(theta_hat)
    values = _psi_rows(psi, stars)
    sample = DistributionSample(values)
    Bv = sample.B
    frac = np.mean(values < psi_hat)
    frac = min(max(frac, 1.0 / (Bv + 1.0)), Bv / (Bv + 1.0))
    z0 = float(special.ndtri(frac))
    a = jackknife_acceleration(data, est_mle, psi)
    return sample, psi_hat, z0, a, failed


def bca_bootstrap(data: Dataset, model: ModelSpec, est_mle: Estimator,
                  psi=None, B: int = 1000,
                  master: MasterSeed = MasterSeed(0),
                  alpha: float = 0.95, two_sided: bool = False,
                  replicate_id: int = 0) -> CIResult:
    """Bias-corrected accelerated percentile interval.

    z0 comes from the bootstrap fraction below the point estimate and the
    acceleration from jackknife skewness; a degenerate jackknife falls back
    to the plain percentile interval with a warning.
    """
    _warn_small_B(B)
    sample, psi_hat, z0, a, failed = bca_components(
        data, model, est_mle, psi, B, master, replicate_id)
    meta = {"B": sample.B, "failed": failed, "z0": z0}
    if a is None:
        warnings.warn("degenerate jackknife; falling back to plain "
                      "percentile levels", stacklevel=2)
        lo, hi = _percentile_interval(sample, alpha, two_sided)
        meta.update({"a": 0.0, "fallback": "percentile"})
        return CIResult(CIMethod.BCA, alpha, lo, hi, psi_hat, meta)
    if two_sided:
        lo = empirical_quantile(sample, bca_level(z0, a, (1.0 - alpha) / 2.0,
                                                  sample.B))
        hi = empirical_quantile(sample, bca_level(z0, a, (1.0 + alpha) / 2.0,
                                                  sample.B))
    else:
        lo = -np.inf
        hi = empirical_quantile(sample, bca_level(z0, a, alpha, sample.B))
    meta.update({"a": a})
    return CIResult(CIMethod.BCA, alpha, lo, hi, psi_hat, meta)


def asymptotic_components(data: Dataset, model: ModelSpec, est: Estimator,
                          psi=None, loglik=None, cov: str = "information",
                          B_cov: int = 200,
                          master: MasterSeed = MasterSeed(0),
                          replicate_id: int = 0):
    """Delta-method point estimate and scale: (psi_hat, sigma).

    The parameter covariance comes from the inverse observed information of
    ``loglik`` (default: the model log-likelihood).  With ``cov="bootstrap"``
    it is instead the sample covariance of B_cov parametric-bootstrap
    re-estimates, for models without a tractable likelihood.
    """
    psi = _as_psi(psi, model)
    theta_hat = est.estimate(data).pi
    psi_hat = psi(theta_hat)
    if cov == "bootstrap":
        theta_sim = model.box.clamp(theta_hat)
        m = model.noise_dim(data.n)
        seeds = derive_seeds(master, replicate_id, Role.INNER,
                             np.arange(1, B_cov + 1), salt=1)
        stars = []
        if hasattr(model, "simulate_batch") and hasattr(est, "estimate_batch"):
            U = draw_uniforms(seeds, m)
            batch = model.simulate_batch(np.tile(theta_sim, (B_cov, 1)), U)
            stars = np.asarray(est.estimate_batch(batch), dtype=float)
        else:
            for s in seeds:
                block = RandomBlock(u=draw_uniforms(s, m))
                try:
                    stars.append(est.estimate(model.simulate(theta_sim, block)).pi)
                except ImplicitBootError:
                    continue
            stars = np.asarray(stars, dtype=float)
        if stars.shape[0] < 2:
            raise SingularInformation("too few bootstrap draws for a covariance")
        g = _psi_gradient(psi, theta_hat)
        var = float(g @ np.cov(stars, rowvar=False).reshape(g.size, g.size) @ g)
        if not np.isfinite(var) or var <= 0.0:
            raise SingularInformation(f"bootstrap variance {var}")
        sigma = math.sqrt(var)
    elif cov == "information":
        if loglik is None:
            if not model.has_loglik:
                raise SingularInformation(
                    f"{model.name} exposes no log-likelihood; "
                    "pass loglik= or cov='bootstrap'")
            loglik = lambda t: model.loglik(t, data)
        sigma = _delta_method_sigma(psi, theta_hat,
                                    observed_information(loglik, theta_hat))
    else:
        raise ValueError(f"unknown cov option {cov!r}")
    return psi_hat, sigma


def asymptotic_ci(data: Dataset, model: ModelSpec, est: Estimator, psi=None,
                  alpha: float = 0.95, two_sided: bool = False,
                  loglik=None, cov: str = "information", B_cov: int = 200,
                  master: MasterSeed = MasterSeed(0),
                  replicate_id: int = 0) -> CIResult:
    """Wald interval via the delta method; see :func:`asymptotic_components`."""
    psi_hat, sigma = asymptotic_components(data, model, est, psi, loglik,
                                           cov, B_cov, master, replicate_id)
    if two_sided:
        z = float(special.ndtri((1.0 + alpha) / 2.0))
        lo, hi = psi_hat - z * sigma, psi_hat + z * sigma
    else:
        z = float(special.ndtri(alpha))
        lo, hi = -np.inf, psi_hat + z * sigma
    return CIResult(CIMethod.ASYMPTOTIC, alpha, lo, hi, psi_hat,
                    {"sigma_hat": sigma, "cov": cov})


def indirect_inference_correct(data: Dataset, model: ModelSpec,
                               est: Estimator, H: int = 50,
                               master: MasterSeed = MasterSeed(0),
                               cfg: SolverConfig = SolverConfig(),
                               replicate_id: int = 0) -> ParamVector:
    """Bias-correct an estimator by matching its simulated average.

    Minimizes || pi_obs - mean_h est(simulate(theta, W_h)) || over the
    parameter box with H frozen noise blocks.
    """
    if H < 1:
        raise ValueError("H must be >= 1")
    pi_obs = est.estimate(data)
    m = model.noise_dim(data.n)
    seeds = derive_seeds(master, replicate_id, Role.INNER,
                         np.arange(1, H + 1), salt=2)
    U = draw_uniforms(seeds, m)
    batch = hasattr(model, "simulate_batch") and hasattr(est, "estimate_batch")

    def mean_pi(theta):
        if batch:
            sim = model.simulate_batch(np.tile(theta, (H, 1)), U)
            return np.mean(np.asarray(est.estimate_batch(sim), dtype=float),
                           axis=0)
        return np.mean([est.estimate(model.simulate(theta, RandomBlock(u=u))).pi
                        for u in U], axis=0)

    transform = BoxTransform(model.box)

    def residual(t):
        theta = transform.to_box(t)
        try:
            out = pi_obs.pi - mean_pi(theta)
        except ImplicitBootError:
            return np.full(model.p, 1e10)
        return np.where(np.isfinite(out), out, 1e10)

    def gap(t):
        return float(np.linalg.norm(residual(t)))

    t0 = transform.to_unconstrained(_initial_theta(cfg, pi_obs, model, transform))
    best_t, best_f = t0, gap(t0)
    if model.p == pi_obs.pi.shape[0]:
        sol = optimize.root(residual, t0, method="hybr", options={"xtol": 1e-12})
        f = gap(sol.x)
        if f < best_f:
            best_t, best_f = sol.x, f
    step = 0.25
    for _ in range(max(cfg.restarts, 1)):
        if best_f <= cfg.tol_delta:
            break
        res = optimize.minimize(
            gap, best_t, method="Nelder-Mead",
            options={"initial_simplex": np.vstack(
                [best_t, best_t + step * np.eye(best_t.shape[0])]),
                "adaptive": True, "xatol": 1e-10, "fatol": 1e-13,
                "maxfev": cfg.budget(model.p)})
        if res.fun < best_f:
            best_t, best_f = res.x, float(res.fun)
        step *= 0.05
    scale = 1.0 + float(np.linalg.norm(pi_obs.pi))
    if best_f > 1e-4 * scale:
        raise NonConvergence(
            f"indirect-inference gap {best_f:.3g} after {cfg.restarts} restarts")
    return model.param(transform.to_box(best_t))
