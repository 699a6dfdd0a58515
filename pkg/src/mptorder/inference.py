"""Posterior sampling and marginal-likelihood estimation.

The sampler is an adaptive componentwise random-walk Metropolis on the
logit-transformed working coordinates of a prior (auxiliary coordinates
for reparam priors, the parameters themselves otherwise).  Marginal
likelihoods are estimated in log space by importance sampling with
moment-matched beta proposals defended by a prior-marginal mixture
component, or through the encompassing identity from an unconstrained
run.  All estimators report delta-method standard errors on the log
scale.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp
from scipy.stats import beta as beta_dist

from . import _kernels
from .model import Dataset, ModelError, MptModel
from .priors import PriorSpec, log_order_count

__all__ = [
    "SamplerConfig",
    "ImportanceConfig",
    "PosteriorChain",
    "MarginalLikelihoodEstimate",
    "BayesFactorResult",
    "sample_posterior",
    "estimate_ml_importance",
    "estimate_ml_encompassing",
    "bayes_factor",
    "split_r_hat",
]

_LOG_MIN_NORMAL = math.log(np.finfo(float).tiny)


@dataclass(frozen=True)
class SamplerConfig:
    """Posterior sampler settings.

    ``n_draws`` counts post-warmup sweeps per chain before thinning.
    Proposal scales adapt toward ``target_accept`` in batches of
    ``adapt_batch`` sweeps during warmup only, then stay frozen so the
    post-warmup kernel satisfies detailed balance.  Randomness is
    consumed in blocks of ``block_sweeps`` pre-generated sweeps, which
    pins the draw stream for a given seed.
    """

    n_draws: int = 25_000
    warmup: int = 5_000
    thin: int = 1
    n_chains: int = 4
    seed: int = 0
    target_accept: float = 0.44
    adapt_batch: int = 50
    block_sweeps: int = 2_000
    init_retries: int = 100

    def __post_init__(self):
        if self.n_draws < 1 or self.warmup < 0 or self.thin < 1:
            raise ValueError("need n_draws >= 1, warmup >= 0, thin >= 1")
        if self.n_chains < 1 or self.adapt_batch < 1 or self.block_sweeps < 1:
            raise ValueError("need n_chains, adapt_batch, block_sweeps >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")

    @property
    def kept_per_chain(self) -> int:
        return -(-self.n_draws // self.thin)


@dataclass(frozen=True)
class ImportanceConfig:
    """Importance-sampling settings.

    The proposal on each working coordinate is a beta distribution
    moment-matched to the posterior draws, mixed with the exact prior
    marginal at weight ``defense_weight`` to bound the importance
    weights.  Samples are generated in blocks of ``block`` draws with
    independently seeded generators.
    """

    n_is: int = 100_000
    seed: int = 0
    defense_weight: float = 0.05
    block: int = 25_000
    min_ess_fraction: float = 0.01

    def __post_init__(self):
        if self.n_is < 1 or self.block < 1:
            raise ValueError("need n_is >= 1 and block >= 1")
        if not 0.0 <= self.defense_weight < 1.0:
            raise ValueError("defense_weight must lie in [0, 1)")


@dataclass(frozen=True)
class PosteriorChain:
    """Post-warmup posterior draws plus sampling provenance.

    ``working`` holds the raw draws on the sampled space, shaped
    (chains, kept, coordinates); ``draws`` maps them to the parameter
    scale and pools the chains.  ``space`` tags the sampled space
    ('theta' or 'eta').
    """

    working: np.ndarray
    param_names: tuple[str, ...]
    space: str
    prior: PriorSpec
    config: SamplerConfig
    acceptance_by_chain: np.ndarray
    log_step: np.ndarray

    @property
    def n_chains(self) -> int:
        return self.working.shape[0]

    @property
    def acceptance_rate(self) -> float:
        return float(self.acceptance_by_chain.mean())

    @cached_property
    def theta_by_chain(self) -> np.ndarray:
        wm = self.prior.working_map.as_tuple()
        stacked = self.working.reshape(-1, self.working.shape[2])
        theta = _kernels.impl.v_to_theta_batch(wm, stacked)
        return theta.reshape(self.working.shape[0], -1, theta.shape[1])

    @cached_property
    def draws(self) -> np.ndarray:
        """All retained draws on the parameter scale, chains pooled."""
        return self.theta_by_chain.reshape(-1, self.theta_by_chain.shape[2])

    @cached_property
    def r_hat(self) -> np.ndarray:
        """Split-chain potential scale reduction per parameter."""
        return split_r_hat(self.theta_by_chain)

    def summary(self):
        """Per-parameter rows: (name, mean, sd, q2.5, q50, q97.5, r_hat)."""
        pooled = self.draws
        qs = np.quantile(pooled, [0.025, 0.5, 0.975], axis=0)
        rows = []
        for k, name in enumerate(self.param_names):
            rows.append(
                (
                    name,
                    float(pooled[:, k].mean()),
                    float(pooled[:, k].std(ddof=1)),
                    float(qs[0, k]),
                    float(qs[1, k]),
                    float(qs[2, k]),
                    float(self.r_hat[k]),
                )
            )
        return tuple(rows)


@dataclass(frozen=True)
class MarginalLikelihoodEstimate:
    """Log marginal likelihood with a log-scale standard error.

    ``se_log`` must be finite and nonnegative except for the degenerate
    -inf estimate (no constraint-satisfying draws), where it is +inf.
    ``ess`` is the importance-sampling effective sample size when the
    estimator provides one.
    """

    log_ml: float
    se_log: float
    n_samples: int
    estimator: str
    ess: float | None = None
    warnings: tuple[str, ...] = ()
    label: str = ""

    def __post_init__(self):
        if self.estimator not in ("importance", "encompassing", "analytic", "quadrature"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if math.isnan(self.log_ml) or math.isnan(self.se_log) or self.se_log < 0.0:
            raise ValueError("se_log must be a nonnegative number")
        if not math.isfinite(self.se_log) and self.log_ml != float("-inf"):
            raise ValueError("se_log must be finite for a finite estimate")

    @property
    def p(self) -> float | None:
        """exp(log_ml) when it does not underflow the normal float range."""
        if self.log_ml < _LOG_MIN_NORMAL:
            return None
        return math.exp(self.log_ml)

    @property
    def se_p(self) -> float | None:
        """Delta-method standard error of ``p``."""
        p = self.p
        return None if p is None else p * self.se_log


@dataclass(frozen=True)
class BayesFactorResult:
    """Log Bayes factor of ``numerator`` over ``denominator`` models."""

    log_bf: float
    se_log_bf: float
    numerator: str
    denominator: str


def split_r_hat(draws_by_chain: np.ndarray) -> np.ndarray:
    """Split-chain R-hat per coordinate for (chains, n, k) draws.

    Each chain is halved, so m = 2*chains sequences enter the usual
    between/within variance ratio.  Coordinates with zero within-chain
    variance report 1.0.
    """
    c, n, k = draws_by_chain.shape
    half = n // 2
    if half < 2:
        raise ValueError("need at least 4 retained draws per chain for r_hat")
    seqs = np.concatenate(
        [draws_by_chain[:, :half, :], draws_by_chain[:, half : 2 * half, :]], axis=0
    )
    means = seqs.mean(axis=1)
    variances = seqs.var(axis=1, ddof=1)
    w = variances.mean(axis=0)
    b = half * means.var(axis=0, ddof=1)
    out = np.ones(k)
    pos = w > 0.0
    var_plus = (half - 1) / half * w[pos] + b[pos] / half
    out[pos] = np.sqrt(var_plus / w[pos])
    return out


def _logit(v: np.ndarray) -> np.ndarray:
    return np.log(v) - np.log1p(-v)


def _check_layout(model: MptModel, prior: PriorSpec) -> None:
    if prior.param_names != model.free_parameters:
        raise ModelError(
            "prior parameter layout does not match the model's free parameters"
        )


def sample_posterior(
    model: MptModel,
    data: Dataset,
    prior: PriorSpec,
    config: SamplerConfig = SamplerConfig(),
    kernels=None,
) -> PosteriorChain:
    """Draw from the posterior with adaptive componentwise Metropolis.

    Chains run in parallel with independently seeded generators (spawned
    from ``config.seed``), so results do not depend on scheduling.  Each
    chain starts from a prior draw with finite posterior density; if
    ``config.init_retries`` prior draws all fail, the data are
    irreconcilable with the prior support and an error is raised.
    """
    impl = kernels if kernels is not None else _kernels.impl
    _check_layout(model, prior)
    flat = model.flat.as_tuple()
    wm = prior.working_map.as_tuple()
    y = data.aligned(model)
    coef = data.log_coefficient(model)
    k = prior.n_working
    if k == 0:
        raise ModelError("model has no free parameters to sample")
    kept = config.kept_per_chain
    total = config.warmup + config.n_draws
    children = np.random.SeedSequence(config.seed).spawn(config.n_chains)

    def run_chain(child):
        rng = np.random.default_rng(child)
        for _ in range(config.init_retries):
            v = prior.sample_working(1, rng)[0]
            lp = impl.log_target_x(flat, wm, y, coef, v)
            if math.isfinite(lp):
                break
        else:
            raise RuntimeError(
                f"no finite posterior density in {config.init_retries} "
                f"prior draws; data and prior support are incompatible"
            )
        x = _logit(v)
        log_step = np.zeros(k)
        batch_acc = np.zeros(k)
        counters = np.zeros(4, dtype=np.int64)
        scalars = np.array([lp])
        out = np.empty((kept, k))
        while counters[0] < total:
            s = int(min(config.block_sweeps, total - counters[0]))
            normals = rng.standard_normal((s, k))
            uniforms = rng.random((s, k))
            impl.run_sweeps(
                flat, wm, y, coef,
                x, v, log_step, batch_acc,
                normals, uniforms, counters, scalars,
                config.warmup, config.adapt_batch, config.target_accept,
                config.thin, out,
            )
        acceptance = counters[2] / counters[3]
        return out, acceptance, log_step

    with ThreadPoolExecutor(max_workers=config.n_chains) as pool:
        results = list(pool.map(run_chain, children))
    working = np.stack([r[0] for r in results])
    acceptance = np.array([r[1] for r in results])
    log_step = np.stack([r[2] for r in results])
    return PosteriorChain(
        working=working,
        param_names=prior.param_names,
        space=prior.space,
        prior=prior,
        config=config,
        acceptance_by_chain=acceptance,
        log_step=log_step,
    )


def _fit_proposal(prior: PriorSpec, working: np.ndarray):
    """Per-coordinate beta proposals moment-matched to posterior draws.

    Coordinates whose draws admit no valid beta fit (variance at or
    above the Bernoulli bound) fall back to the prior marginal.
    """
    defense_a, defense_b = prior.defense_marginals
    m = working.mean(axis=0)
    var = working.var(axis=0)
    bound = m * (1.0 - m)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = bound / var - 1.0
    ok = np.isfinite(c) & (c > 0.0) & (m > 0.0) & (m < 1.0)
    a = np.where(ok, m * c, defense_a)
    b = np.where(ok, (1.0 - m) * c, defense_b)
    a = np.clip(a, 1e-2, 1e6)
    b = np.clip(b, 1e-2, 1e6)
    return a, b, defense_a, defense_b


def estimate_ml_importance(
    model: MptModel,
    data: Dataset,
    prior: PriorSpec,
    posterior: PosteriorChain,
    config: ImportanceConfig = ImportanceConfig(),
    kernels=None,
    label: str = "",
) -> MarginalLikelihoodEstimate:
    """Importance-sampling estimate of the log marginal likelihood.

    Proposals are independent per-coordinate betas fitted to the
    posterior's working draws and mixed with the exact prior marginals
    at ``config.defense_weight``.  The estimate is the log-mean-exp of
    log likelihood + log prior - log proposal; its standard error comes
    from the weight variance by the delta method.  An effective sample
    size below ``config.min_ess_fraction`` of ``n_is`` flags a warning.
    """
    impl = kernels if kernels is not None else _kernels.impl
    _check_layout(model, prior)
    if posterior.space != prior.space or posterior.param_names != prior.param_names:
        raise ModelError("posterior was sampled under an incompatible prior")
    flat = model.flat.as_tuple()
    wm = prior.working_map.as_tuple()
    y = data.aligned(model)
    coef = data.log_coefficient(model)
    k = prior.n_working
    pooled = posterior.working.reshape(-1, k)
    a, b, defense_a, defense_b = _fit_proposal(prior, pooled)
    w = config.defense_weight
    with np.errstate(divide="ignore"):
        log_w = np.log(w)
    log_1mw = math.log1p(-w)

    n_blocks = -(-config.n_is // config.block)
    children = np.random.SeedSequence(config.seed).spawn(n_blocks)
    sizes = [
        min(config.block, config.n_is - i * config.block) for i in range(n_blocks)
    ]

    def run_block(args):
        child, size = args
        rng = np.random.default_rng(child)
        main = rng.beta(a, b, size=(size, k))
        pick = rng.random((size, k)) < w
        defense = rng.beta(defense_a, defense_b, size=(size, k))
        vs = np.clip(np.where(pick, defense, main), 1e-300, 1.0 - 1e-16)
        logq_main = log_1mw + beta_dist.logpdf(vs, a, b)
        logq_def = log_w + beta_dist.logpdf(vs, defense_a, defense_b)
        logq = np.logaddexp(logq_main, logq_def).sum(axis=1)
        log_prior = impl.log_prior_v_batch(wm, vs)
        theta = impl.v_to_theta_batch(wm, vs)
        ll = impl.loglik_batch(flat, y, coef, theta)
        return log_prior + ll - logq

    with ThreadPoolExecutor(max_workers=min(4, n_blocks)) as pool:
        parts = list(pool.map(run_block, zip(children, sizes)))
    log_weights = np.concatenate(parts)

    n = config.n_is
    l1 = float(logsumexp(log_weights))
    if not math.isfinite(l1):
        return MarginalLikelihoodEstimate(
            log_ml=float("-inf"),
            se_log=float("inf"),
            n_samples=n,
            estimator="importance",
            ess=0.0,
            warnings=("all importance weights are zero",),
            label=label,
        )
    l2 = float(logsumexp(2.0 * log_weights))
    log_ml = l1 - math.log(n)
    r = l2 + math.log(n) - 2.0 * l1
    se_log = math.sqrt(math.expm1(r) / n)
    ess = math.exp(2.0 * l1 - l2)
    warnings = ()
    if ess < config.min_ess_fraction * n:
        warnings = (
            f"effective sample size {ess:.1f} below "
            f"{config.min_ess_fraction:.0%} of {n}",
        )
    return MarginalLikelihoodEstimate(
        log_ml=log_ml,
        se_log=se_log,
        n_samples=n,
        estimator="importance",
        ess=ess,
        warnings=warnings,
        label=label,
    )


def estimate_ml_encompassing(
    full_posterior: PosteriorChain,
    full_ml: MarginalLikelihoodEstimate,
    chains,
    label: str = "",
) -> MarginalLikelihoodEstimate:
    """Marginal likelihood of the order-constrained model from an
    unconstrained run, via the encompassing-prior identity.

    log_ml = full log_ml + log(fraction of full-posterior draws inside
    the cone) + log prod_k P_k!.  The fraction's binomial standard error
    (draws treated as independent) combines with the full estimate's.
    """
    chains = tuple(chains)
    if not chains:
        return full_ml
    if full_posterior.prior.kind != "full":
        raise ValueError("encompassing estimate needs a full-uniform posterior")
    draws = full_posterior.draws
    index = {name: i for i, name in enumerate(full_posterior.param_names)}
    ok = np.ones(draws.shape[0], dtype=bool)
    for chain in chains:
        cols = [index[name] for name in chain.parameters]
        ok &= np.all(np.diff(draws[:, cols], axis=1) >= 0.0, axis=1)
    n = draws.shape[0]
    hits = int(ok.sum())
    if hits == 0:
        return MarginalLikelihoodEstimate(
            log_ml=float("-inf"),
            se_log=float("inf"),
            n_samples=n,
            estimator="encompassing",
            warnings=("no posterior draws satisfy the order constraints",),
            label=label,
        )
    fraction = hits / n
    log_ml = full_ml.log_ml + math.log(fraction) + log_order_count(chains)
    se_log = math.sqrt(full_ml.se_log**2 + (1.0 - fraction) / (fraction * n))
    warnings = ()
    if hits < 100:
        warnings = (f"only {hits} of {n} draws satisfy the constraints",)
    return MarginalLikelihoodEstimate(
        log_ml=log_ml,
        se_log=se_log,
        n_samples=n,
        estimator="encompassing",
        warnings=warnings,
        label=label,
    )


def bayes_factor(
    a: MarginalLikelihoodEstimate, b: MarginalLikelihoodEstimate
) -> BayesFactorResult:
    """Log Bayes factor of ``a`` over ``b``; the independent-estimate
    standard errors add in quadrature."""
    if not (math.isfinite(a.log_ml) and math.isfinite(b.log_ml)):
        raise ValueError("Bayes factor requires finite marginal likelihoods")
    return BayesFactorResult(
        log_bf=a.log_ml - b.log_ml,
        se_log_bf=math.hypot(a.se_log, b.se_log),
        numerator=a.label or a.estimator,
        denominator=b.label or b.estimator,
    )
