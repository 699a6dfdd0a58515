"""Independent reference computations for tests and cross-checks.

Everything here deliberately avoids the package's kernel backends: model
probabilities are evaluated straight from the object graph, prior
densities straight from the spec fields.  Agreement between these
oracles and the production estimators is therefore evidence about both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import beta as beta_dist

from .model import Dataset, MptModel
from .priors import PriorSpec, log_order_count

__all__ = [
    "OracleError",
    "grid_ml",
    "grid_log_integral",
    "analytic_full_ml",
    "rejection_sample_cone",
]

_CHUNK = 1 << 18


class OracleError(RuntimeError):
    """Raised when a reference computation cannot certify its result."""


def _oracle_loglik(model: MptModel, y: np.ndarray, coef: float, thetas: np.ndarray):
    """Log likelihood evaluated directly from the model object graph."""
    resolution = model.resolution
    ll = np.full(thetas.shape[0], coef)
    col = {c: i for i, c in enumerate(model.categories)}
    for tree in model.trees:
        probs = {c: np.zeros(thetas.shape[0]) for c in tree.categories}
        for branch in tree.branches:
            value = np.ones(thetas.shape[0])
            for pname, comp in branch.factors:
                kind, ref = resolution[pname]
                x = thetas[:, ref] if kind == "free" else float(ref)
                value = value * (1.0 - x if comp else x)
            probs[branch.category] = probs[branch.category] + value
        for cat in tree.categories:
            count = y[col[cat]]
            if count > 0:
                with np.errstate(divide="ignore"):
                    ll = ll + count * np.log(probs[cat])
    return ll


def _oracle_v_to_theta(prior: PriorSpec, vs: np.ndarray) -> np.ndarray:
    index = {name: i for i, name in enumerate(prior.param_names)}
    theta = vs.copy()
    if prior.kind != "reparam":
        return theta
    for chain in prior.chains:
        cols = [index[name] for name in chain.parameters]
        block = vs[:, cols]
        if chain.method == "A":
            theta[:, cols] = np.cumprod(block[:, ::-1], axis=1)[:, ::-1]
        else:
            theta[:, cols] = 1.0 - np.cumprod(1.0 - block, axis=1)
    return theta


def _oracle_log_prior(prior: PriorSpec, vs: np.ndarray) -> np.ndarray:
    """Log prior density on the working space, with boundary-straddling
    grid cells half-weighted.

    Midpoint cells whose center lies exactly on a cone face (two equal
    adjacent coordinates) are bisected by that face, so they enter the
    balanced integral at weight 1/2 per tied face; this removes the
    leading-order bias of the indicator under midpoint quadrature.
    """
    index = {name: i for i, name in enumerate(prior.param_names)}
    lp = np.full(vs.shape[0], prior.working_map.log_prior_const)
    wm = prior.working_map
    for k in range(vs.shape[1]):
        a, b = wm.beta_a[k], wm.beta_b[k]
        if a != 1.0 or b != 1.0:
            lp = lp + beta_dist.logpdf(vs[:, k], a, b)
    if prior.kind == "balanced":
        for chain in prior.chains:
            cols = [index[name] for name in chain.parameters]
            diffs = np.diff(vs[:, cols], axis=1)
            lp = np.where(np.any(diffs < 0.0, axis=1), -np.inf, lp)
            lp = lp + math.log(0.5) * (diffs == 0.0).sum(axis=1)
    return lp


def grid_log_integral(
    model: MptModel,
    data: Dataset,
    prior: PriorSpec,
    points_per_dim: int,
    include_order_count: bool = True,
) -> float:
    """Midpoint-rule log integral of likelihood x prior over the working
    cube at a single resolution, reduced in a fixed chunk order."""
    k = prior.n_working
    if k > 3:
        raise OracleError(f"grid integration supports at most 3 dimensions, got {k}")
    if prior.param_names != model.free_parameters:
        raise OracleError("prior layout does not match the model")
    m = int(points_per_dim)
    y = data.aligned(model)
    coef = data.log_coefficient(model)
    centers = (np.arange(m) + 0.5) / m
    total = m**k
    strides = [m ** (k - 1 - d) for d in range(k)]
    parts = []
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total))
        vs = np.empty((len(idx), k))
        for d in range(k):
            vs[:, d] = centers[(idx // strides[d]) % m]
        lp = _oracle_log_prior(prior, vs)
        if not include_order_count:
            lp = lp - log_order_count(prior.chains)
        ll = _oracle_loglik(model, y, coef, _oracle_v_to_theta(prior, vs))
        parts.append(logsumexp(lp + ll))
    return float(logsumexp(parts) - k * math.log(m))


def grid_ml(
    model: MptModel,
    data: Dataset,
    prior: PriorSpec,
    points_per_dim: int = 128,
    richardson_tol: float = 1e-4,
) -> float:
    """Quadrature log marginal likelihood, certified by grid doubling.

    Computes the midpoint-rule integral at ``points_per_dim`` and at
    twice that resolution; the doubled result is returned only when the
    two agree within ``richardson_tol`` on the log scale.
    """
    if points_per_dim < 64:
        raise OracleError("points_per_dim must be at least 64")
    coarse = grid_log_integral(model, data, prior, points_per_dim)
    fine = grid_log_integral(model, data, prior, 2 * points_per_dim)
    if not math.isfinite(fine) and not math.isfinite(coarse):
        return fine
    if abs(fine - coarse) >= richardson_tol:
        raise OracleError(
            f"grid doubling moved the log integral by {fine - coarse:.3g} "
            f"(tolerance {richardson_tol:g}); resolution too coarse"
        )
    return fine


def richardson_delta(
    model: MptModel, data: Dataset, prior: PriorSpec, points_per_dim: int = 128
) -> tuple[float, float]:
    """The doubled-grid log integral and the doubling change, for callers
    that want the convergence evidence alongside the value."""
    coarse = grid_log_integral(model, data, prior, points_per_dim)
    fine = grid_log_integral(model, data, prior, 2 * points_per_dim)
    return fine, fine - coarse


def analytic_full_ml(n) -> float:
    """Exact log marginal likelihood of independent binomials with
    uniform priors on each success rate: sum of log 1/(n_i + 1).

    The binomial pmf integrates to 1/(n+1) over a uniform prior
    regardless of the observed count.
    """
    total = 0.0
    for n_i in np.atleast_1d(np.asarray(n)):
        if n_i < 0 or n_i != int(n_i):
            raise ValueError("totals must be nonnegative integers")
        total -= math.log(int(n_i) + 1.0)
    return total


def rejection_sample_cone(p: int, n: int, seed: int) -> tuple[np.ndarray, float]:
    """Uniform draws on the ascending cone by accept-reject.

    Returns ``n`` draws and the realized acceptance fraction (close to
    1/p! for large n).  Kept as a distributional gold standard for the
    pushforward samplers; p is capped where rejection stays practical.
    """
    if not 1 <= p <= 7:
        raise ValueError("rejection sampling supports 1 <= p <= 7")
    if n < 1:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    batch = min(max(1024, int(n * math.factorial(p) * 1.2)), 1 << 20)
    kept = []
    accepted = 0
    proposed = 0
    while accepted < n:
        draws = rng.random((batch, p))
        ok = np.all(np.diff(draws, axis=1) >= 0.0, axis=1)
        proposed += batch
        accepted += int(ok.sum())
        kept.append(draws[ok])
    out = np.concatenate(kept)[:n]
    return out, accepted / proposed
