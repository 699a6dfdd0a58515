"""Multinomial processing tree (MPT) models: parsing, evaluation, data.

An MPT model organizes response categories into trees.  Each branch of a
tree contributes the product of its factor probabilities (a parameter or
its complement) to one category, so for every admissible parameter vector
the category probabilities of a tree sum to one.  Models are read from
EQN text (``tree category term`` records), observed frequencies from CSV
(``tree,category,count``).

All types are immutable after construction and all operations are pure
functions of their inputs.
"""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import gammaln

from ._compile import FlatModel, flatten_model
from ._kernels import impl as _impl

__all__ = [
    "EqnError",
    "ModelError",
    "Parameter",
    "Branch",
    "Tree",
    "MptModel",
    "Dataset",
    "parse_eqn",
    "load_eqn",
    "product_binomial_model",
    "product_binomial_dataset",
]

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_FACTOR_RE = re.compile(r"\(1-([A-Za-z_][A-Za-z0-9_]*)\)\Z")


class EqnError(ValueError):
    """Malformed EQN model text; message carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ModelError(ValueError):
    """Inconsistent model structure or mismatched model/data inputs."""


@dataclass(frozen=True)
class Parameter:
    """A named model parameter.

    A parameter is free unless it is an alias of another parameter
    (``alias_of``) or pinned to a constant in [0, 1] (``fixed``).
    Aliases are how collapsed models (e.g. one shared value across
    several trees) are expressed without rewriting branches.
    """

    name: str
    alias_of: str | None = None
    fixed: float | None = None

    def __post_init__(self):
        if not _IDENT_RE.match(self.name):
            raise ModelError(f"invalid parameter name {self.name!r}")
        if self.alias_of is not None and self.fixed is not None:
            raise ModelError(f"parameter {self.name!r} cannot be both alias and fixed")
        if self.fixed is not None and not 0.0 <= self.fixed <= 1.0:
            raise ModelError(f"fixed value for {self.name!r} outside [0, 1]")

    @property
    def is_free(self) -> bool:
        return self.alias_of is None and self.fixed is None


@dataclass(frozen=True)
class Branch:
    """One tree branch: an ordered product of factors feeding a category.

    Each factor is ``(parameter_name, complement)``; the branch
    probability is the product of ``theta`` or ``1 - theta`` over the
    factors.
    """

    category: str
    factors: tuple[tuple[str, bool], ...]

    def __post_init__(self):
        if not self.factors:
            raise ModelError(f"branch for {self.category!r} has no factors")


@dataclass(frozen=True)
class Tree:
    name: str
    categories: tuple[str, ...]
    branches: tuple[Branch, ...]


@dataclass(frozen=True)
class MptModel:
    """An immutable MPT model: trees plus declared parameters."""

    trees: tuple[Tree, ...]
    parameters: tuple[Parameter, ...]

    def __post_init__(self):
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise ModelError(f"duplicate parameter declarations: {', '.join(dup)}")
        seen_cat: dict[str, str] = {}
        for tree in self.trees:
            for cat in tree.categories:
                if cat in seen_cat:
                    raise ModelError(
                        f"category {cat!r} appears in trees "
                        f"{seen_cat[cat]!r} and {tree.name!r}"
                    )
                seen_cat[cat] = tree.name
        declared = set(names)
        for tree in self.trees:
            for branch in tree.branches:
                for pname, _ in branch.factors:
                    if pname not in declared:
                        raise ModelError(
                            f"branch in tree {tree.name!r} references "
                            f"undeclared parameter {pname!r}"
                        )
        self.resolution  # force alias-cycle detection at construction

    @cached_property
    def free_parameters(self) -> tuple[str, ...]:
        """Names of free parameters, in declaration order."""
        return tuple(p.name for p in self.parameters if p.is_free)

    @cached_property
    def categories(self) -> tuple[str, ...]:
        return tuple(c for tree in self.trees for c in tree.categories)

    @cached_property
    def category_tree(self) -> dict[str, str]:
        return {c: tree.name for tree in self.trees for c in tree.categories}

    @cached_property
    def resolution(self) -> dict[str, tuple[str, object]]:
        """Map every declared name to ("free", index) or ("fixed", value)."""
        by_name = {p.name: p for p in self.parameters}
        free_index = {n: i for i, n in enumerate(self.free_parameters)}
        resolved: dict[str, tuple[str, object]] = {}
        for p in self.parameters:
            seen = [p.name]
            cur = p
            while cur.alias_of is not None:
                target = cur.alias_of
                if target not in by_name:
                    raise ModelError(
                        f"alias {cur.name!r} points to undeclared {target!r}"
                    )
                if target in seen:
                    raise ModelError(f"alias cycle through {target!r}")
                seen.append(target)
                cur = by_name[target]
            if cur.fixed is not None:
                resolved[p.name] = ("fixed", float(cur.fixed))
            else:
                resolved[p.name] = ("free", free_index[cur.name])
        return resolved

    @cached_property
    def flat(self) -> FlatModel:
        """Array form of the model consumed by the evaluation kernels."""
        return flatten_model(self)

    def theta_vector(self, theta) -> np.ndarray:
        """Coerce a mapping or sequence of free-parameter values to a vector."""
        if isinstance(theta, Mapping):
            unknown = set(theta) - set(self.free_parameters)
            if unknown:
                raise ModelError(f"unknown parameters: {sorted(unknown)}")
            try:
                vec = np.array(
                    [theta[n] for n in self.free_parameters], dtype=float
                )
            except KeyError as exc:
                raise ModelError(f"missing value for parameter {exc.args[0]!r}")
        else:
            vec = np.asarray(theta, dtype=float)
            if vec.shape != (len(self.free_parameters),):
                raise ModelError(
                    f"expected {len(self.free_parameters)} parameter values, "
                    f"got shape {vec.shape}"
                )
        if np.any(vec < 0.0) or np.any(vec > 1.0) or not np.all(np.isfinite(vec)):
            raise ModelError("parameter values outside [0, 1]")
        return vec

    def category_probabilities(self, theta) -> dict[str, float]:
        """Category probabilities at ``theta`` (free parameters only)."""
        vec = self.theta_vector(theta)
        probs = _impl.category_probs(self.flat.as_tuple(), vec)
        return dict(zip(self.categories, probs.tolist()))

    def log_likelihood(self, data: "Dataset", theta) -> float:
        """Product-multinomial log likelihood, coefficient included.

        Returns ``-inf`` when a category with a positive count has zero
        probability, so samplers can reject such proposals.
        """
        vec = self.theta_vector(theta)
        y = data.aligned(self)
        coef = data.log_coefficient(self)
        return float(_impl.loglik(self.flat.as_tuple(), y, coef, vec))

    def log_likelihood_gradient(self, data: "Dataset", theta) -> np.ndarray:
        """Analytic gradient of :meth:`log_likelihood` w.r.t. free parameters.

        Only valid in the interior where all counted categories have
        positive probability.
        """
        vec = self.theta_vector(theta)
        y = data.aligned(self)
        flat = self.flat
        n_free = len(self.free_parameters)
        probs = np.zeros(len(self.categories))
        dprobs = np.zeros((len(self.categories), n_free))
        fp, fc, fcst = flat.factor_param, flat.factor_comp, flat.factor_const
        for c in range(len(self.categories)):
            for b in range(flat.cat_ptr[c], flat.cat_ptr[c + 1]):
                lo, hi = flat.branch_ptr[b], flat.branch_ptr[b + 1]
                vals = np.empty(hi - lo)
                for j, f in enumerate(range(lo, hi)):
                    x = vec[fp[f]] if fp[f] >= 0 else fcst[f]
                    vals[j] = 1.0 - x if fc[f] else x
                probs[c] += vals.prod()
                for j, f in enumerate(range(lo, hi)):
                    if fp[f] < 0:
                        continue
                    others = np.prod(np.delete(vals, j))
                    sign = -1.0 if fc[f] else 1.0
                    dprobs[c, fp[f]] += sign * others
        grad = np.zeros(n_free)
        for c in range(len(self.categories)):
            if y[c] > 0:
                if probs[c] <= 0.0:
                    raise ModelError("gradient undefined: zero-probability count")
                grad += y[c] / probs[c] * dprobs[c]
        return grad

    def validate(self, n_draws: int = 1000, seed: int = 0, tol: float = 1e-12):
        """Check that every tree's category probabilities sum to one.

        Evaluates ``n_draws`` random parameter vectors and returns a list
        of problem descriptions (empty when the model is consistent).
        """
        rng = np.random.default_rng(seed)
        thetas = rng.random((n_draws, len(self.free_parameters)))
        probs = _impl.category_probs_batch(self.flat.as_tuple(), thetas)
        problems = []
        for t, tree in enumerate(self.trees):
            cols = self.flat.cat_tree_index == t
            dev = np.abs(probs[:, cols].sum(axis=1) - 1.0).max()
            if dev > tol:
                problems.append(
                    f"tree {tree.name!r}: category probabilities deviate from 1 "
                    f"by up to {dev:.3g}"
                )
        return problems

    def with_aliases(self, aliases: Mapping[str, str]) -> "MptModel":
        """A copy of the model where each key parameter aliases its target.

        Used to collapse parameters, e.g. forcing one shared value across
        trees that previously had separate free parameters.
        """
        declared = {p.name for p in self.parameters}
        for src, dst in aliases.items():
            if src not in declared or dst not in declared:
                raise ModelError(f"alias {src!r} -> {dst!r} names unknown parameter")
        params = tuple(
            Parameter(p.name, alias_of=aliases[p.name])
            if p.name in aliases
            else p
            for p in self.parameters
        )
        return MptModel(self.trees, params)


@dataclass(frozen=True)
class Dataset:
    """Observed category counts keyed by ``(tree, category)``."""

    counts: Mapping[tuple[str, str], int]

    def __post_init__(self):
        frozen = {}
        for key, value in dict(self.counts).items():
            tree, cat = key
            count = int(value)
            if count != value or count < 0:
                raise ModelError(f"count for {key} must be a nonnegative integer")
            frozen[(str(tree), str(cat))] = count
        object.__setattr__(self, "counts", frozen)

    @classmethod
    def from_csv(cls, text: str) -> "Dataset":
        """Parse ``tree,category,count`` CSV text (header required)."""
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise ModelError("empty data file")
        if [h.strip().lower() for h in header] != ["tree", "category", "count"]:
            raise ModelError("data header must be 'tree,category,count'")
        counts: dict[tuple[str, str], int] = {}
        for i, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise ModelError(f"data row {i}: expected 3 fields, got {len(row)}")
            tree, cat, raw = (f.strip() for f in row)
            try:
                count = int(raw)
            except ValueError:
                raise ModelError(f"data row {i}: count {raw!r} is not an integer")
            if count < 0:
                raise ModelError(f"data row {i}: negative count")
            if (tree, cat) in counts:
                raise ModelError(f"data row {i}: duplicate entry for ({tree}, {cat})")
            counts[(tree, cat)] = count
        return cls(counts)

    @classmethod
    def load(cls, path) -> "Dataset":
        return cls.from_csv(Path(path).read_text(encoding="utf-8"))

    def aligned(self, model: MptModel) -> np.ndarray:
        """Counts as a float vector in the model's category order.

        Every model category must be present (zero counts allowed) and no
        entry may name an unknown tree/category pair.
        """
        index = {
            (model.category_tree[c], c): i for i, c in enumerate(model.categories)
        }
        unknown = sorted(set(self.counts) - set(index))
        if unknown:
            raise ModelError(f"counts for unknown categories: {unknown[:5]}")
        missing = sorted(set(index) - set(self.counts))
        if missing:
            raise ModelError(f"missing counts for categories: {missing[:5]}")
        y = np.zeros(len(model.categories))
        for key, count in self.counts.items():
            y[index[key]] = count
        return y

    def tree_totals(self, model: MptModel) -> dict[str, int]:
        y = self.aligned(model)
        totals = {}
        for t, tree in enumerate(model.trees):
            totals[tree.name] = int(y[model.flat.cat_tree_index == t].sum())
        return totals

    def log_coefficient(self, model: MptModel) -> float:
        """Log multinomial coefficient, summed over trees.

        Including it keeps reported marginal likelihoods on the absolute
        probability scale; it cancels in every Bayes factor.
        """
        y = self.aligned(model)
        total = 0.0
        for t in range(len(model.trees)):
            yt = y[model.flat.cat_tree_index == t]
            total += gammaln(yt.sum() + 1.0) - gammaln(yt + 1.0).sum()
        return float(total)


def _parse_factor(token: str, line: int) -> tuple[str, bool]:
    m = _FACTOR_RE.match(token)
    if m:
        return m.group(1), True
    if _IDENT_RE.match(token):
        return token, False
    raise EqnError(line, f"cannot parse factor {token!r}")


def parse_eqn(text: str, parameters: Sequence[Parameter] | None = None) -> MptModel:
    """Parse EQN model text.

    Records are whitespace-separated ``tree category term`` lines where
    ``term`` is a ``*``-joined product of factors, ``(1-p)`` denoting the
    complement of ``p``.  ``#`` starts a comment; an optional leading
    single-integer line (legacy record count) is ignored.  Names are
    case-sensitive.

    When ``parameters`` is given, every factor must name one of the
    declared parameters (strict mode); otherwise free parameters are
    created in order of first appearance.
    """
    if not text or not text.strip():
        raise EqnError(1, "empty model text")
    records: list[tuple[int, list[str]]] = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        records.append((ln, line.split()))
    if records and len(records[0][1]) == 1 and records[0][1][0].isdigit():
        records = records[1:]
    if not records:
        raise EqnError(1, "no model records")

    declared = (
        {p.name for p in parameters} if parameters is not None else None
    )
    tree_order: list[str] = []
    tree_cats: dict[str, list[str]] = {}
    tree_branches: dict[str, list[Branch]] = {}
    cat_owner: dict[str, str] = {}
    seen_params: list[str] = []
    for ln, fields in records:
        if len(fields) != 3:
            raise EqnError(ln, f"expected 'tree category term', got {len(fields)} fields")
        tree, cat, term = fields
        for name, what in ((tree, "tree"), (cat, "category")):
            if not _IDENT_RE.match(name):
                raise EqnError(ln, f"invalid {what} name {name!r}")
        factors = tuple(_parse_factor(tok, ln) for tok in term.split("*"))
        for pname, _ in factors:
            if declared is not None and pname not in declared:
                raise EqnError(ln, f"unknown parameter {pname!r}")
            if pname not in seen_params:
                seen_params.append(pname)
        if cat in cat_owner and cat_owner[cat] != tree:
            raise EqnError(
                ln, f"category {cat!r} already belongs to tree {cat_owner[cat]!r}"
            )
        cat_owner.setdefault(cat, tree)
        if tree not in tree_cats:
            tree_order.append(tree)
            tree_cats[tree] = []
            tree_branches[tree] = []
        if cat not in tree_cats[tree]:
            tree_cats[tree].append(cat)
        tree_branches[tree].append(Branch(cat, factors))

    if parameters is not None:
        params = tuple(parameters)
    else:
        params = tuple(Parameter(n) for n in seen_params)
    trees = tuple(
        Tree(t, tuple(tree_cats[t]), tuple(tree_branches[t])) for t in tree_order
    )
    return MptModel(trees, params)


def load_eqn(path, parameters: Sequence[Parameter] | None = None) -> MptModel:
    return parse_eqn(Path(path).read_text(encoding="utf-8"), parameters)


def product_binomial_model(p: int, prefix: str = "th") -> MptModel:
    """Independent-binomials model: tree ``t{i}`` with success rate ``{prefix}{i}``."""
    if p < 1:
        raise ModelError("need at least one binomial")
    lines = []
    for i in range(1, p + 1):
        lines.append(f"t{i} s{i} {prefix}{i}")
        lines.append(f"t{i} f{i} (1-{prefix}{i})")
    return parse_eqn("\n".join(lines))


def product_binomial_dataset(y: Sequence[int], n: Sequence[int]) -> Dataset:
    """Counts for :func:`product_binomial_model`: ``y`` successes of ``n``."""
    if len(y) != len(n):
        raise ModelError("y and n must have equal length")
    counts = {}
    for i, (yi, ni) in enumerate(zip(y, n), start=1):
        if not 0 <= yi <= ni:
            raise ModelError(f"need 0 <= y <= n, got y={yi}, n={ni}")
        counts[(f"t{i}", f"s{i}")] = int(yi)
        counts[(f"t{i}", f"f{i}")] = int(ni - yi)
    return Dataset(counts)
