"""Pure numpy kernel backend.

This module defines the kernel contract; the compiled backend implements
the same functions with identical semantics.  ``flat`` arguments are
``FlatModel.as_tuple()`` tuples, ``wmap`` arguments are
``WorkingMap.as_tuple()`` tuples.

Working space: ``v`` is a vector in (0, 1)^K.  Identity coordinates feed
model parameters directly; order-chain coordinates are mapped through
the ratio map (method 0), the increment map (method 1), or passed
through with an ascending-order indicator (method 2).  The sampler walks
``x = logit(v)``, so the sampling target includes the logit Jacobian.
"""

from __future__ import annotations

import math

import numpy as np

backend_name = "python"

_NEG_INF = float("-inf")


def category_probs_batch(flat, thetas):
    """Category probabilities for each row of ``thetas``; shape (n, C)."""
    factor_param, factor_comp, factor_const, branch_ptr, cat_ptr, n_free = flat
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    n = thetas.shape[0]
    free = factor_param >= 0
    vals = np.empty((n, len(factor_param)))
    vals[:, free] = thetas[:, factor_param[free]]
    vals[:, ~free] = factor_const[~free]
    comp = factor_comp.astype(bool)
    vals[:, comp] = 1.0 - vals[:, comp]
    branch = np.multiply.reduceat(vals, branch_ptr[:-1], axis=1)
    return np.add.reduceat(branch, cat_ptr[:-1], axis=1)


def category_probs(flat, theta):
    return category_probs_batch(flat, np.asarray(theta)[None, :])[0]


def loglik_batch(flat, y, log_coef, thetas):
    """Log likelihood for each row of ``thetas``; -inf where a counted
    category has zero probability."""
    y = np.asarray(y, dtype=np.float64)
    probs = category_probs_batch(flat, thetas)
    mask = y > 0
    with np.errstate(divide="ignore"):
        logp = np.log(probs[:, mask])
    return logp @ y[mask] + log_coef


def loglik(flat, y, log_coef, theta):
    return float(loglik_batch(flat, y, log_coef, np.asarray(theta)[None, :])[0])


def v_to_theta_batch(wmap, vs):
    """Map working vectors to model parameter vectors; shape (n, P)."""
    ident_theta, chain_ptr, chain_theta, chain_method = wmap[:4]
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    theta = np.empty_like(vs)
    ident = ident_theta >= 0
    theta[:, ident_theta[ident]] = vs[:, np.flatnonzero(ident)]
    for c in range(len(chain_ptr) - 1):
        m = chain_theta[chain_ptr[c] : chain_ptr[c + 1]]
        vm = vs[:, m]
        if chain_method[c] == 0:
            theta[:, m] = np.cumprod(vm[:, ::-1], axis=1)[:, ::-1]
        elif chain_method[c] == 1:
            theta[:, m] = 1.0 - np.cumprod(1.0 - vm, axis=1)
        else:
            theta[:, m] = vm
    return theta


def v_to_theta(wmap, v):
    return v_to_theta_batch(wmap, np.asarray(v)[None, :])[0]


def log_prior_v_batch(wmap, vs):
    """Log prior density of each working vector, in v space."""
    (
        ident_theta,
        chain_ptr,
        chain_theta,
        chain_method,
        beta_a,
        beta_b,
        beta_lnb,
        log_prior_const,
    ) = wmap
    vs = np.atleast_2d(np.asarray(vs, dtype=np.float64))
    inside = np.all((vs > 0.0) & (vs < 1.0), axis=1)
    out = np.full(vs.shape[0], _NEG_INF)
    if not inside.any():
        return out
    vin = vs[inside]
    lp = (
        (beta_a - 1.0) @ np.log(vin).T
        + (beta_b - 1.0) @ np.log1p(-vin).T
        - beta_lnb.sum()
        + log_prior_const
    )
    for c in range(len(chain_ptr) - 1):
        if chain_method[c] != 2:
            continue
        m = chain_theta[chain_ptr[c] : chain_ptr[c + 1]]
        ordered = np.all(np.diff(vin[:, m], axis=1) >= 0.0, axis=1)
        lp = np.where(ordered, lp, _NEG_INF)
    out[inside] = lp
    return out


def log_prior_v(wmap, v):
    return float(log_prior_v_batch(wmap, np.asarray(v)[None, :])[0])


def log_target_x(flat, wmap, y, log_coef, v):
    """Log posterior kernel in logit space at ``v = expit(x)``.

    Prior density plus logit Jacobian plus data log likelihood; -inf for
    invalid states (including NaN propagation).
    """
    v = np.asarray(v, dtype=np.float64)
    lp = log_prior_v(wmap, v)
    if lp == _NEG_INF:
        return _NEG_INF
    lp += float(np.log(v).sum() + np.log1p(-v).sum())
    theta = v_to_theta(wmap, v)
    total = lp + loglik(flat, y, log_coef, theta)
    if math.isnan(total):
        return _NEG_INF
    return total


def _expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def run_sweeps(
    flat,
    wmap,
    y,
    log_coef,
    x,
    v,
    log_step,
    batch_acc,
    normals,
    uniforms,
    counters,
    scalars,
    warmup,
    adapt_batch,
    target_accept,
    thin,
    out,
):
    """Advance one chain by ``normals.shape[0]`` componentwise sweeps.

    State arrays are mutated in place:

    - ``x``/``v``: current position, logit and unit scale, kept in sync
    - ``log_step``: per-coordinate log proposal scales, adapted toward
      ``target_accept`` every ``adapt_batch`` sweeps during warmup
    - ``batch_acc``: acceptance counts within the current adaptation batch
    - ``counters``: int64 [global_sweep, kept, post_accepts, post_proposals]
    - ``scalars``: float64 [current log target]
    - ``out``: retained post-warmup working vectors (thinned), written at
      row ``counters[1]`` onward

    ``normals``/``uniforms`` are (sweeps, K) blocks of pre-generated
    randomness; consuming them in a fixed order keeps both backends on
    the same draw stream.
    """
    n_sweeps, k = normals.shape
    cur_lp = scalars[0]
    for s in range(n_sweeps):
        for j in range(k):
            x_old = x[j]
            v_old = v[j]
            x[j] = x_old + math.exp(log_step[j]) * normals[s, j]
            v[j] = _expit(x[j])
            new_lp = log_target_x(flat, wmap, y, log_coef, v)
            if math.log(uniforms[s, j]) < new_lp - cur_lp:
                cur_lp = new_lp
                batch_acc[j] += 1.0
                if counters[0] >= warmup:
                    counters[2] += 1
            else:
                x[j] = x_old
                v[j] = v_old
            if counters[0] >= warmup:
                counters[3] += 1
        counters[0] += 1
        g = counters[0]
        if g <= warmup and g % adapt_batch == 0:
            delta = min(0.1, 1.0 / math.sqrt(g / adapt_batch))
            for j in range(k):
                if batch_acc[j] / adapt_batch > target_accept:
                    log_step[j] += delta
                else:
                    log_step[j] -= delta
                batch_acc[j] = 0.0
        if g > warmup and (g - warmup - 1) % thin == 0:
            out[counters[1], :] = v
            counters[1] += 1
    scalars[0] = cur_lp
