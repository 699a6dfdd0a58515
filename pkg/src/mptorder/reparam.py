"""Order-chain reparameterizations.

A chain constrains named parameters to satisfy theta_1 <= ... <= theta_P.
Two one-to-one maps between the constrained vector and an auxiliary
vector ``eta`` in the unit cube are provided:

Method A (ratio form)
    eta_i = theta_i / theta_{i+1} for i < P, eta_P = theta_P; inverse
    theta_i = prod_{j>=i} eta_j.

Method B (increment form)
    eta_1 = theta_1, eta_i = (theta_i - theta_{i-1}) / (1 - theta_{i-1});
    inverse theta_i = 1 - prod_{j<=i} (1 - eta_j).

Each map carries a triangular Jacobian with a closed-form determinant
and an "adjusted" independent beta prior on ``eta`` whose pushforward is
the uniform distribution on the constrained region.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConstraintError",
    "OrderChain",
    "ConstraintConfig",
    "parse_constraints",
    "load_constraints",
    "check_chains",
]

_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_ORDER_RE = re.compile(r"order\(([^)]*)\)\s*:\s*(.+)\Z")
_PRIOR_RE = re.compile(
    r"prior\s*:\s*([A-Za-z_][A-Za-z0-9_]*)\s+"
    r"Beta\(\s*([^,\s]+)\s*,\s*([^)\s]+)\s*\)\Z"
)


class ConstraintError(ValueError):
    """Malformed constraint text; message carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class OrderChain:
    """An ascending order constraint on named parameters, with a method tag.

    ``parameters`` lists the constrained names smallest-first; ``method``
    selects the ratio ("A") or increment ("B") auxiliary map.
    """

    parameters: tuple[str, ...]
    method: str = "A"

    def __post_init__(self):
        if self.method not in ("A", "B"):
            raise ValueError(f"method must be 'A' or 'B', got {self.method!r}")
        if len(self.parameters) < 1:
            raise ValueError("chain needs at least one parameter")
        if len(set(self.parameters)) != len(self.parameters):
            raise ValueError("chain parameters must be distinct")
        for name in self.parameters:
            if not _NAME_RE.match(name):
                raise ValueError(f"invalid parameter name {name!r}")

    def __len__(self) -> int:
        return len(self.parameters)

    def _coerce(self, values, label: str) -> np.ndarray:
        arr = np.asarray(values, dtype=float)
        if arr.shape != (len(self.parameters),):
            raise ValueError(
                f"{label} must have length {len(self.parameters)}, "
                f"got shape {arr.shape}"
            )
        if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
            raise ValueError(f"{label} components must lie in [0, 1]")
        return arr

    def to_auxiliary(self, theta) -> np.ndarray:
        """Map an ordered parameter vector to the auxiliary cube.

        Boundary convention: a zero denominator (theta_{i+1} = 0 under
        Method A, theta_{i-1} = 1 under Method B) yields eta_i = 1 resp.
        eta_i = 0, so the map is total on the closed constrained region.
        """
        theta = self._coerce(theta, "theta")
        if np.any(np.diff(theta) < 0.0):
            raise ValueError("theta violates the ascending order constraint")
        p = len(theta)
        eta = np.empty(p)
        if self.method == "A":
            eta[p - 1] = theta[p - 1]
            for i in range(p - 1):
                eta[i] = 1.0 if theta[i + 1] == 0.0 else theta[i] / theta[i + 1]
        else:
            eta[0] = theta[0]
            for i in range(1, p):
                d = 1.0 - theta[i - 1]
                eta[i] = 0.0 if d == 0.0 else (theta[i] - theta[i - 1]) / d
        return np.clip(eta, 0.0, 1.0)

    def from_auxiliary(self, eta) -> np.ndarray:
        """Map an auxiliary vector back to the ordered parameter vector."""
        eta = self._coerce(eta, "eta")
        if self.method == "A":
            return np.cumprod(eta[::-1])[::-1]
        return 1.0 - np.cumprod(1.0 - eta)

    def log_jacobian_det(self, eta) -> float:
        """Log |det| of the Jacobian of ``from_auxiliary`` at ``eta``.

        Method A: sum_{i>=2} (i-1) log eta_i; Method B:
        sum_{i<P} (P-i) log(1-eta_i).  -inf at the degenerate boundary.
        """
        eta = self._coerce(eta, "eta")
        p = len(eta)
        if p == 1:
            return 0.0
        with np.errstate(divide="ignore"):
            if self.method == "A":
                return float(np.arange(1, p) @ np.log(eta[1:]))
            return float(np.arange(p - 1, 0, -1) @ np.log1p(-eta[:-1]))

    def adjusted_prior(self) -> tuple[tuple[float, float], ...]:
        """Independent beta parameters on ``eta`` whose pushforward is
        uniform on the constrained region: Beta(i, 1) for Method A,
        Beta(1, P-i+1) for Method B."""
        p = len(self.parameters)
        if self.method == "A":
            return tuple((float(i), 1.0) for i in range(1, p + 1))
        return tuple((1.0, float(p - i + 1)) for i in range(1, p + 1))

    def with_method(self, method: str) -> "OrderChain":
        return OrderChain(self.parameters, method)

    def holds(self, theta) -> bool:
        """Whether a parameter vector satisfies the constraint."""
        theta = self._coerce(theta, "theta")
        return bool(np.all(np.diff(theta) >= 0.0))


@dataclass(frozen=True)
class ConstraintConfig:
    """Parsed constraint file: order chains plus custom beta priors."""

    chains: tuple[OrderChain, ...] = ()
    betas: tuple[tuple[str, float, float], ...] = ()

    @property
    def beta_map(self) -> dict[str, tuple[float, float]]:
        return {name: (a, b) for name, a, b in self.betas}

    def with_method(self, method: str) -> "ConstraintConfig":
        return ConstraintConfig(
            tuple(c.with_method(method) for c in self.chains), self.betas
        )


def parse_constraints(text: str) -> ConstraintConfig:
    """Parse constraint text.

    One statement per line: ``order(A): p1 < p2 < ... < pK`` (or
    ``order(B): ...``) declares a chain; ``prior: name Beta(a,b)``
    attaches a custom beta prior to a parameter.  ``#`` starts a comment.
    """
    chains: list[OrderChain] = []
    betas: list[tuple[str, float, float]] = []
    seen_beta: set[str] = set()
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _ORDER_RE.match(line)
        if m:
            method, body = m.group(1).strip(), m.group(2)
            if method not in ("A", "B"):
                raise ConstraintError(ln, f"unknown method {method!r}")
            names = [n.strip() for n in body.replace("<=", "<").split("<")]
            if any(not n for n in names):
                raise ConstraintError(ln, "empty name in order chain")
            for n in names:
                if not _NAME_RE.match(n):
                    raise ConstraintError(ln, f"invalid parameter name {n!r}")
            if len(set(names)) != len(names):
                raise ConstraintError(ln, "repeated parameter in order chain")
            chains.append(OrderChain(tuple(names), method))
            continue
        m = _PRIOR_RE.match(line)
        if m:
            name = m.group(1)
            try:
                a, b = float(m.group(2)), float(m.group(3))
            except ValueError:
                raise ConstraintError(ln, "beta parameters must be numeric")
            if not (a > 0.0 and b > 0.0):
                raise ConstraintError(ln, "beta parameters must be positive")
            if name in seen_beta:
                raise ConstraintError(ln, f"duplicate prior for {name!r}")
            seen_beta.add(name)
            betas.append((name, a, b))
            continue
        raise ConstraintError(ln, f"cannot parse statement {line!r}")
    config = ConstraintConfig(tuple(chains), tuple(betas))
    _check_disjoint(config.chains)
    return config


def load_constraints(path) -> ConstraintConfig:
    from pathlib import Path

    return parse_constraints(Path(path).read_text(encoding="utf-8"))


def _check_disjoint(chains) -> None:
    seen: dict[str, int] = {}
    for idx, chain in enumerate(chains):
        for name in chain.parameters:
            if name in seen:
                raise ValueError(
                    f"parameter {name!r} appears in two order chains "
                    f"(chains {seen[name]} and {idx})"
                )
            seen[name] = idx


def check_chains(model, chains) -> None:
    """Validate chains against a model: free-parameter membership and
    pairwise disjointness."""
    _check_disjoint(chains)
    free = set(model.free_parameters)
    for chain in chains:
        for name in chain.parameters:
            if name not in free:
                raise ValueError(
                    f"order chain names {name!r}, which is not a free "
                    f"parameter of the model"
                )
