"""Sigma-point rules for Gaussian integrals.

``integrate(rule, z, m, P)`` approximates ``E[z(X)]`` for ``X ~ N(m, P)`` by
``sum_i w_i z(m + sqrt(P) beta_i)`` where ``sqrt(P)`` is the lower Cholesky
factor.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .exceptions import NotPSDError

__all__ = [
    "SigmaRule",
    "gauss_hermite_rule",
    "cubature_rule",
    "unscented_rule",
    "parse_rule",
    "cholesky_sqrt",
    "sigma_points",
    "integrate",
    "JITTER_LEVELS",
    "NODE_BUDGET",
]

JITTER_LEVELS = (0.0, 1e-12, 1e-10, 1e-8)
NODE_BUDGET = 10**6


@dataclass(frozen=True)
class SigmaRule:
    """Unit nodes ``beta_i`` (shape ``(K, d)``) and non-negative weights ``w_i``."""

    nodes: np.ndarray
    weights: np.ndarray
    name: str = ""

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if nodes.shape[0] != weights.shape[0]:
            raise ValueError("one weight per node required")
        if np.any(weights < 0.0):
            raise ValueError("sigma-point weights must be non-negative")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def sqrt_c_chi(self) -> float:
        """``sum_i w_i ||beta_i||_2``."""
        return float(np.sum(self.weights * np.linalg.norm(self.nodes, axis=1)))

    @property
    def c_chi(self) -> float:
        return self.sqrt_c_chi**2


def gauss_hermite_rule(dim: int, order: int, node_budget: int = NODE_BUDGET) -> SigmaRule:
    """Tensor-product Gauss-Hermite rule with ``order**dim`` nodes.

    Nodes are ordered lexicographically with the first coordinate varying
    slowest.
    """
    if dim < 1 or order < 1:
        raise ValueError("dim and order must be >= 1")
    if order**dim > node_budget:
        raise ValueError(f"{order}^{dim} nodes exceed the node budget {node_budget}")
    x, w = hermegauss(order)
    w = w / w.sum()
    nodes = np.array(list(itertools.product(x, repeat=dim)))
    weights = np.array([np.prod(c) for c in itertools.product(w, repeat=dim)])
    return SigmaRule(nodes, weights, f"gh:{order}")


def cubature_rule(dim: int) -> SigmaRule:
    """Third-degree spherical cubature: ``+-sqrt(d) e_i`` with equal weights."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    scale = np.sqrt(dim)
    eye = np.eye(dim)
    nodes = np.concatenate([scale * eye, -scale * eye])
    return SigmaRule(nodes, np.full(2 * dim, 1.0 / (2 * dim)), "cubature")


def unscented_rule(dim: int, kappa: float = 0.0) -> SigmaRule:
    """Unscented transform points with a centre node (non-negative weights only)."""
    if dim < 1:
        raise ValueError("dim must be >= 1")
    lam = dim + kappa
    if lam <= 0.0:
        raise ValueError(f"dim + kappa must be positive, got {lam}")
    if kappa < 0.0:
        raise ValueError("negative kappa gives a negative centre weight")
    scale = np.sqrt(lam)
    eye = np.eye(dim)
    nodes = np.concatenate([np.zeros((1, dim)), scale * eye, -scale * eye])
    weights = np.r_[kappa / lam, np.full(2 * dim, 1.0 / (2.0 * lam))]
    return SigmaRule(nodes, weights, f"unscented:{kappa:g}")


def parse_rule(spec: str, dim: int) -> SigmaRule:
    """Build a rule from ``gh:p``, ``cubature`` or ``unscented:kappa``."""
    name, _, arg = spec.strip().lower().partition(":")
    if name in ("gh", "gauss-hermite"):
        return gauss_hermite_rule(dim, int(arg or 3))
    if name == "cubature":
        return cubature_rule(dim)
    if name in ("unscented", "ut"):
        return unscented_rule(dim, float(arg or 0.0))
    raise ValueError(f"unknown sigma-point rule {spec!r}")


def cholesky_sqrt(P, where: str = "") -> np.ndarray:
    """Lower Cholesky factor with escalating diagonal jitter.

    Jitter runs through ``JITTER_LEVELS * trace(P)/d``. An all-zero matrix has
    the zero factor.
    """
    P = np.asarray(P, dtype=float)
    P = 0.5 * (P + P.T)
    if not np.any(P):
        return np.zeros_like(P)
    if not np.all(np.isfinite(P)):
        raise NotPSDError(f"matrix has non-finite entries{' at ' + where if where else ''}")
    d = P.shape[0]
    scale = np.trace(P) / d
    eye = np.eye(d)
    for level in JITTER_LEVELS:
        if level and scale <= 0.0:
            break
        try:
            return np.linalg.cholesky(P + level * scale * eye if level else P)
        except np.linalg.LinAlgError:
            continue
    raise NotPSDError(f"matrix is not positive semidefinite{' at ' + where if where else ''}")


def sigma_points(rule: SigmaRule, m, P, sqrt_P=None) -> np.ndarray:
    """Nodes ``m + sqrt(P) beta_i``, shape ``(K, d)``."""
    m = np.asarray(m, dtype=float)
    L = cholesky_sqrt(P) if sqrt_P is None else sqrt_P
    return m + rule.nodes @ L.T


def integrate(rule: SigmaRule, z, m, P) -> np.ndarray:
    """``sum_i w_i z(chi_i)`` accumulated sequentially in node order."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if rule.dim != m.shape[0] or P.shape != (m.shape[0], m.shape[0]):
        raise ValueError("rule, mean and covariance dimensions disagree")
    chi = sigma_points(rule, m, P)
    total = None
    for w, x in zip(rule.weights, chi):
        val = w * np.asarray(z(x), dtype=float)
        total = val if total is None else total + val
    return np.atleast_1d(total)
