"""Prior specifications over MPT parameters and their closed-form marginals.

A ``PriorSpec`` fixes a working space: one coordinate per free model
parameter, each coordinate living in (0, 1).  Four kinds exist:

``full``
    Independent uniform priors on all parameters; no order constraints.

``custom``
    Independent beta priors on the parameters themselves.

``balanced``
    Uniform prior truncated to the order cone(s): density prod_k P_k! on
    parameter space, enforced by an indicator.  Working coordinates are
    the parameters.

``reparam``
    Order chains mapped to auxiliary coordinates (each chain's method
    tag selects the ratio or increment map); independent beta priors on
    the auxiliary coordinates.  ``adjusted=True`` uses the beta shapes
    whose pushforward is uniform on the cone; ``adjusted=False`` uses
    uniform auxiliaries ("unbalanced").

The closed-form implied marginals of an order-chain member under the
balanced prior (Beta(i, P-i+1)) and under the unbalanced prior
((-log x)^{P-i} / (P-i)!) are exposed as plain functions together with
their CDFs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Mapping

import numpy as np
from scipy.special import betaln, gammaln
from scipy.stats import beta as beta_dist
from scipy.stats import gamma as gamma_dist

from ._compile import WorkingMap
from ._kernels import impl as _impl
from .reparam import OrderChain, check_chains

__all__ = [
    "PriorSpec",
    "full_uniform",
    "custom_beta",
    "balanced",
    "reparam",
    "log_prior_density",
    "sample_prior",
    "marginal_balanced",
    "marginal_balanced_cdf",
    "marginal_unbalanced",
    "marginal_unbalanced_cdf",
    "log_order_count",
]


def log_order_count(chains) -> float:
    """log prod_k P_k!, the prior cone's inverse volume over all chains."""
    return float(sum(gammaln(len(c) + 1.0) for c in chains))


@dataclass(frozen=True)
class PriorSpec:
    """One prior variant over a fixed free-parameter layout.

    Built by the factory functions in this module, which validate the
    spec against a model; ``param_names`` records the expected layout.
    """

    kind: str
    param_names: tuple[str, ...]
    chains: tuple[OrderChain, ...] = ()
    adjusted: bool = True
    betas: tuple[tuple[str, float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("full", "custom", "balanced", "reparam"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if self.kind in ("balanced", "reparam") and not self.chains:
            raise ValueError(f"{self.kind} prior requires at least one chain")
        if self.kind in ("full", "custom") and self.chains:
            raise ValueError(f"{self.kind} prior admits no chains")
        for name, a, b in self.betas:
            if not (a > 0.0 and b > 0.0):
                raise ValueError(f"beta shape for {name!r} must be positive")

    @property
    def n_working(self) -> int:
        return len(self.param_names)

    @property
    def space(self) -> str:
        """Scale of the working coordinates: 'eta' for reparam, else 'theta'."""
        return "eta" if self.kind == "reparam" else "theta"

    def as_reparam(self, adjusted: bool = True) -> "PriorSpec":
        """The reparameterized equivalent of a balanced prior."""
        if self.kind == "reparam":
            return replace(self, adjusted=adjusted)
        if self.kind != "balanced":
            raise ValueError("only balanced priors convert to reparam form")
        return replace(self, kind="reparam", adjusted=adjusted)

    def as_direct(self) -> "PriorSpec":
        """The cone-indicator (balanced) equivalent of an adjusted reparam."""
        if self.kind == "balanced":
            return self
        if self.kind != "reparam" or not self.adjusted:
            raise ValueError("only adjusted reparam priors convert to balanced form")
        return replace(self, kind="balanced")

    @cached_property
    def working_map(self) -> WorkingMap:
        k = len(self.param_names)
        index = {name: i for i, name in enumerate(self.param_names)}
        ident = np.arange(k, dtype=np.int32)
        beta_a = np.ones(k)
        beta_b = np.ones(k)
        for name, a, b in self.betas:
            beta_a[index[name]] = a
            beta_b[index[name]] = b
        chain_ptr = [0]
        chain_theta: list[int] = []
        chain_method: list[int] = []
        for chain in self.chains:
            members = [index[n] for n in chain.parameters]
            chain_theta.extend(members)
            chain_ptr.append(len(chain_theta))
            ident[members] = -1
            if self.kind == "balanced":
                chain_method.append(2)
            else:
                chain_method.append(0 if chain.method == "A" else 1)
                if self.adjusted:
                    for slot, (a, b) in zip(members, chain.adjusted_prior()):
                        beta_a[slot] = a
                        beta_b[slot] = b
        const = log_order_count(self.chains) if self.kind == "balanced" else 0.0
        return WorkingMap(
            ident_theta=ident,
            chain_ptr=np.asarray(chain_ptr, dtype=np.int64),
            chain_theta=np.asarray(chain_theta, dtype=np.int32),
            chain_method=np.asarray(chain_method, dtype=np.uint8),
            beta_a=beta_a,
            beta_b=beta_b,
            beta_lnb=betaln(beta_a, beta_b),
            log_prior_const=const,
        )

    @cached_property
    def defense_marginals(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact beta marginals of each working coordinate, used as the
        defense component of importance densities.  These coincide with
        the prior's beta shapes except under the balanced kind, where a
        chain member at position i of P has marginal Beta(i, P-i+1)."""
        wm = self.working_map
        a = wm.beta_a.copy()
        b = wm.beta_b.copy()
        if self.kind == "balanced":
            index = {name: i for i, name in enumerate(self.param_names)}
            for chain in self.chains:
                p = len(chain)
                for pos, name in enumerate(chain.parameters, start=1):
                    a[index[name]] = float(pos)
                    b[index[name]] = float(p - pos + 1)
        return a, b

    def sample_working(self, n: int, rng) -> np.ndarray:
        """Exact draws from the prior on the working space."""
        wm = self.working_map
        vs = rng.beta(wm.beta_a, wm.beta_b, size=(n, self.n_working))
        if self.kind == "balanced":
            index = {name: i for i, name in enumerate(self.param_names)}
            for chain in self.chains:
                members = [index[name] for name in chain.parameters]
                vs[:, members] = np.sort(rng.random((n, len(members))), axis=1)
        return vs

    def to_theta(self, vs: np.ndarray) -> np.ndarray:
        """Map working draws to the model parameter scale."""
        return _impl.v_to_theta_batch(self.working_map.as_tuple(), vs)


def _validate_betas(model, betas, chains):
    free = set(model.free_parameters)
    chained = {name for chain in chains for name in chain.parameters}
    out = []
    for name, (a, b) in sorted(dict(betas).items()):
        if name not in free:
            raise ValueError(f"beta prior names unknown parameter {name!r}")
        if name in chained:
            raise ValueError(
                f"parameter {name!r} is in an order chain; its prior is "
                f"determined by the chain"
            )
        out.append((name, float(a), float(b)))
    return tuple(out)


def full_uniform(model) -> PriorSpec:
    """Independent uniform priors on all free parameters."""
    return PriorSpec("full", model.free_parameters)


def custom_beta(model, betas: Mapping[str, tuple[float, float]]) -> PriorSpec:
    """Independent beta priors; parameters not named stay uniform."""
    return PriorSpec(
        "custom", model.free_parameters, betas=_validate_betas(model, betas, ())
    )


def balanced(model, chains, betas: Mapping | None = None) -> PriorSpec:
    """Uniform prior truncated to the order cone(s)."""
    chains = tuple(chains)
    check_chains(model, chains)
    return PriorSpec(
        "balanced",
        model.free_parameters,
        chains=chains,
        betas=_validate_betas(model, betas or {}, chains),
    )


def reparam(model, chains, adjusted: bool = True, betas: Mapping | None = None) -> PriorSpec:
    """Chains mapped to auxiliary coordinates with beta priors.

    ``adjusted=True`` matches the balanced prior on the parameter scale;
    ``adjusted=False`` is the unbalanced prior (uniform auxiliaries).
    """
    chains = tuple(chains)
    check_chains(model, chains)
    return PriorSpec(
        "reparam",
        model.free_parameters,
        chains=chains,
        adjusted=adjusted,
        betas=_validate_betas(model, betas or {}, chains),
    )


def log_prior_density(spec: PriorSpec, vector) -> float:
    """Log prior density at a working-space vector (theta scale for
    full/custom/balanced kinds, auxiliary scale for reparam kinds)."""
    v = np.asarray(vector, dtype=float)
    if v.shape != (spec.n_working,):
        raise ValueError(
            f"expected vector of length {spec.n_working}, got shape {v.shape}"
        )
    return float(_impl.log_prior_v(spec.working_map.as_tuple(), v))


def sample_prior(spec: PriorSpec, n: int, seed: int) -> np.ndarray:
    """Draws from the prior on the parameter scale; deterministic in seed.

    Reparam kinds sample auxiliaries and push them through the inverse
    map.  The balanced kind samples through its adjusted reparam
    equivalent rather than by rejection; the distributions coincide.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    if spec.kind == "balanced":
        spec = spec.as_reparam(adjusted=True)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    wm = spec.working_map
    vs = rng.beta(wm.beta_a, wm.beta_b, size=(n, spec.n_working))
    return spec.to_theta(vs)


def marginal_balanced(i: int, p: int, x):
    """Implied marginal density of the i-th smallest chain member (of p)
    under the balanced prior: a Beta(i, p-i+1) density.

    Evaluated so that the reflection symmetry
    ``marginal_balanced(i, p, x) == marginal_balanced(p-i+1, p, 1-x)``
    holds exactly whenever ``1-x`` is exact.
    """
    _check_position(i, p)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [0, 1]")
    const = math.exp(gammaln(p + 1.0) - (gammaln(i) + gammaln(p - i + 1.0)))
    out = const * (x ** (i - 1) * (1.0 - x) ** (p - i))
    return out if out.ndim else float(out)


def marginal_balanced_cdf(i: int, p: int, x):
    _check_position(i, p)
    return beta_dist.cdf(x, i, p - i + 1)


def marginal_unbalanced(i: int, p: int, x):
    """Implied marginal density of the i-th chain member under the
    unbalanced (uniform-auxiliary, ratio-map) prior:
    (-log x)^(p-i) / (p-i)!.  Diverges at x = 0 when i < p."""
    _check_position(i, p)
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("x must lie in [0, 1]")
    k = p - i
    with np.errstate(divide="ignore"):
        t = -np.log(x)
    out = t**k / math.factorial(k)
    return out if out.ndim else float(out)


def marginal_unbalanced_cdf(i: int, p: int, x):
    """CDF of the unbalanced marginal: -log theta_i is a sum of p-i+1
    independent unit exponentials, so P(theta_i <= x) is a Gamma(p-i+1)
    upper tail at -log x."""
    _check_position(i, p)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        t = -np.log(x)
    out = gamma_dist.sf(t, p - i + 1)
    return out if out.ndim else float(out)


def _check_position(i: int, p: int) -> None:
    if not (isinstance(i, (int, np.integer)) and isinstance(p, (int, np.integer))):
        raise TypeError("chain position and length must be integers")
    if not 1 <= i <= p:
        raise ValueError(f"position must satisfy 1 <= i <= p, got i={i}, p={p}")
