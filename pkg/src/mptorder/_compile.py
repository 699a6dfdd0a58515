"""Array ("flat") representations of models and priors for the kernels.

The evaluation kernels are written against plain contiguous arrays, not
the dataclass object graph, so both the compiled backend and the numpy
fallback can share one layout.  Two structures exist:

``FlatModel``
    CSR-style encoding of the branch/factor structure of an MPT model.

``WorkingMap``
    Everything needed to evaluate one prior variant: how working
    coordinates map to model parameters (identity or through an order
    chain), per-coordinate beta densities, indicator chains, and the
    additive log-prior constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FlatModel", "WorkingMap", "flatten_model"]


@dataclass(frozen=True)
class FlatModel:
    """CSR arrays describing category -> branches -> factors.

    ``factor_param[f]`` is the free-parameter index of factor ``f`` or -1
    when the factor is a constant (``factor_const[f]`` then holds its
    resolved probability).  ``factor_comp[f]`` is 1 when the factor uses
    the complement.  ``branch_ptr``/``cat_ptr`` delimit factors per branch
    and branches per category.  ``cat_tree_index`` maps each category to
    its tree.
    """

    factor_param: np.ndarray
    factor_comp: np.ndarray
    factor_const: np.ndarray
    branch_ptr: np.ndarray
    cat_ptr: np.ndarray
    cat_tree_index: np.ndarray
    n_free: int

    def as_tuple(self):
        return (
            self.factor_param,
            self.factor_comp,
            self.factor_const,
            self.branch_ptr,
            self.cat_ptr,
            self.n_free,
        )


def flatten_model(model) -> FlatModel:
    factor_param: list[int] = []
    factor_comp: list[int] = []
    factor_const: list[float] = []
    branch_ptr = [0]
    cat_ptr = [0]
    cat_tree = []
    resolution = model.resolution
    for t, tree in enumerate(model.trees):
        by_cat: dict[str, list] = {c: [] for c in tree.categories}
        for branch in tree.branches:
            by_cat[branch.category].append(branch)
        for cat in tree.categories:
            for branch in by_cat[cat]:
                for pname, comp in branch.factors:
                    kind, value = resolution[pname]
                    if kind == "free":
                        factor_param.append(value)
                        factor_const.append(np.nan)
                    else:
                        factor_param.append(-1)
                        factor_const.append(value)
                    factor_comp.append(1 if comp else 0)
                branch_ptr.append(len(factor_param))
            cat_ptr.append(len(branch_ptr) - 1)
            cat_tree.append(t)
    return FlatModel(
        factor_param=np.asarray(factor_param, dtype=np.int32),
        factor_comp=np.asarray(factor_comp, dtype=np.uint8),
        factor_const=np.asarray(factor_const, dtype=np.float64),
        branch_ptr=np.asarray(branch_ptr, dtype=np.int64),
        cat_ptr=np.asarray(cat_ptr, dtype=np.int64),
        cat_tree_index=np.asarray(cat_tree, dtype=np.int32),
        n_free=len(model.free_parameters),
    )


@dataclass(frozen=True)
class WorkingMap:
    """Flat description of one prior's working space.

    The working vector ``v`` lives in (0, 1)^K.  Coordinate ``k`` either
    feeds parameter ``ident_theta[k]`` directly (identity map) or is a
    member of an order chain.  Chains are stored CSR-style: chain ``c``
    occupies working slots ``chain_ptr[c]:chain_ptr[c+1]`` (in chain
    order, smallest parameter first) and ``chain_theta`` gives the free
    parameter index of each member.  ``chain_method[c]`` is 0 for the
    ratio map and 1 for the increment map; chains with method 2 are
    identity-mapped but checked by the cone indicator instead.

    ``beta_a``/``beta_b`` are the per-coordinate beta prior parameters and
    ``beta_lnb`` the corresponding log beta-function normalizers.
    ``log_prior_const`` collects the additive constant (e.g. the log of
    the number of orderings for truncation priors).
    """

    ident_theta: np.ndarray
    chain_ptr: np.ndarray
    chain_theta: np.ndarray
    chain_method: np.ndarray
    beta_a: np.ndarray
    beta_b: np.ndarray
    beta_lnb: np.ndarray
    log_prior_const: float

    def __post_init__(self):
        k = len(self.ident_theta)
        for name in ("beta_a", "beta_b", "beta_lnb"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} length mismatch")
        if len(self.chain_theta) != (self.chain_ptr[-1] if len(self.chain_ptr) else 0):
            raise ValueError("chain arrays inconsistent")

    @property
    def n_working(self) -> int:
        return len(self.ident_theta)

    def as_tuple(self):
        return (
            self.ident_theta,
            self.chain_ptr,
            self.chain_theta,
            self.chain_method,
            self.beta_a,
            self.beta_b,
            self.beta_lnb,
            self.log_prior_const,
        )
