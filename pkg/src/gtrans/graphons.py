"""Closed-form graphons, latent sampling and adjacency sampling."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal

import numpy as np

from .errors import EmptyInputError, InputError, InvalidShiftError, UnknownGraphonError

# Denominator floor for the isolated singular points of graphons 7, 8 and 10.
SINGULAR_FLOOR = 1e-12


def _floor(z):
    return np.maximum(z, SINGULAR_FLOOR)


def _g1(x, y):
    return np.exp(-(x**0.7) - y**0.7)


def _g2(x, y):
    return np.exp(-np.maximum(x, y) ** 0.75)


def _g3(x, y):
    return np.exp(-0.5 * (np.minimum(x, y) + np.sqrt(x) + np.sqrt(y)))


def _g4(x, y):
    return 1.0 / (1.0 + np.exp(-(np.maximum(x, y) ** 2 + np.minimum(x, y) ** 4)))


def _g5(x, y):
    return np.abs(x - y)


def _g6(x, y):
    return x * y / 2.0


def _g7(x, y):
    s = _floor(x**2 + y**2)
    return s / 3.0 * np.cos(1.0 / s) + 0.15


def _g8(x, y):
    s = _floor(x + y)
    return s / 3.0 * np.cos(1.0 / s) + 0.15


def _g9(x, y):
    return np.sin(10.0 * np.pi * (x + y - 5.0)) / 5.0 + 0.5


def _g10(x, y):
    a = _floor((1.0 - x) ** 2 + y**2)
    b = _floor(x**2 + (1.0 - y) ** 2)
    return 0.25 * np.minimum(np.exp(np.sin(6.0 / a)), np.exp(np.sin(6.0 / b)))


@dataclass(frozen=True)
class GraphonSpec:
    id: int
    description: str
    func: Callable = None

    def __call__(self, x, y):
        return eval_graphon(self, x, y)


GRAPHONS: dict[int, GraphonSpec] = {
    spec.id: spec
    for spec in [
        GraphonSpec(1, "exp(-x^0.7 - y^0.7)", _g1),
        GraphonSpec(2, "exp(-max(x, y)^0.75)", _g2),
        GraphonSpec(3, "exp(-0.5 * (min(x, y) + sqrt(x) + sqrt(y)))", _g3),
        GraphonSpec(4, "1 / (1 + exp(-(max(x, y)^2 + min(x, y)^4)))", _g4),
        GraphonSpec(5, "|x - y|", _g5),
        GraphonSpec(6, "x * y / 2", _g6),
        GraphonSpec(7, "(x^2 + y^2) / 3 * cos(1 / (x^2 + y^2)) + 0.15", _g7),
        GraphonSpec(8, "(x + y) / 3 * cos(1 / (x + y)) + 0.15", _g8),
        GraphonSpec(9, "sin(10 * pi * (x + y - 5)) / 5 + 0.5", _g9),
        GraphonSpec(
            10,
            "min(exp(sin(6 / ((1 - x)^2 + y^2))), exp(sin(6 / (x^2 + (1 - y)^2)))) / 4",
            _g10,
        ),
    ]
}


def get_graphon(spec: GraphonSpec | int) -> GraphonSpec:
    if isinstance(spec, GraphonSpec):
        return spec
    try:
        return GRAPHONS[int(spec)]
    except (KeyError, TypeError, ValueError):
        raise UnknownGraphonError(f"unknown graphon id {spec!r}; valid ids are 1..10", id=str(spec))


def eval_graphon(spec: GraphonSpec | int, x, y):
    """Evaluate a graphon at ``(x, y)``, clamped to ``[0, 1]``.

    Works elementwise on scalars or broadcastable arrays.
    """
    spec = get_graphon(spec)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        val = np.clip(spec.func(x, y), 0.0, 1.0)
    if val.ndim == 0:
        return float(val)
    return val


def sample_latents(n: int, rng: np.random.Generator, sorted: bool = False) -> np.ndarray:
    """Draw ``n`` i.i.d. Unif[0, 1] latent positions."""
    if n < 1:
        raise EmptyInputError("need at least one node", n=n)
    u = rng.random(n)
    if sorted:
        u.sort()
    return u


def build_prob_matrix(spec: GraphonSpec | int, u) -> np.ndarray:
    """Edge-probability matrix ``P_ij = f(u_i, u_j)``, diagonal included."""
    u = np.asarray(u, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise EmptyInputError("latent positions must be a non-empty vector")
    if np.any((u < 0) | (u > 1)):
        raise InputError("latent positions must lie in [0, 1]")
    P = eval_graphon(spec, u[:, None], u[None, :])
    # Formulas are symmetric but floating point need not be.
    return 0.5 * (P + P.T)


def sample_adjacency(P, rng: np.random.Generator) -> np.ndarray:
    """Symmetric, hollow Bernoulli adjacency with ``A_ij ~ Ber(P_ij)`` for i < j."""
    P = np.asarray(P, dtype=float)
    n = P.shape[0]
    draws = rng.random((n, n)) < P
    A = np.triu(draws, k=1)
    return (A | A.T).astype(float)


@dataclass(frozen=True)
class PerturbationSpec:
    """Additive entrywise noise applied to a probability matrix.

    ``uniform-noise`` draws from U(lo, hi); ``density-shift`` draws from
    U(0, lam) when lam > 0 and U(lam, 0) when lam < 0.
    """

    kind: Literal["uniform-noise", "density-shift"] = "uniform-noise"
    lo: float = 0.0
    hi: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform-noise", "density-shift"):
            raise InputError(f"unknown perturbation kind {self.kind!r}")
        if self.kind == "uniform-noise" and self.lo > self.hi:
            raise InputError("perturbation requires lo <= hi", lo=self.lo, hi=self.hi)
        if self.kind == "density-shift" and abs(self.lam) > 1:
            raise InvalidShiftError("density shift must satisfy |lambda| <= 1", lam=self.lam)

    @property
    def bounds(self) -> tuple[float, float]:
        if self.kind == "uniform-noise":
            return self.lo, self.hi
        return (0.0, self.lam) if self.lam >= 0 else (self.lam, 0.0)

    @property
    def is_identity(self) -> bool:
        return self.bounds == (0.0, 0.0)


def perturb(P, spec: PerturbationSpec, rng: np.random.Generator) -> np.ndarray:
    """Add one noise draw per unordered pair (mirrored) and clamp to ``[0, 1]``."""
    P = np.asarray(P, dtype=float)
    if spec.is_identity:
        return P.copy()
    lo, hi = spec.bounds
    n = P.shape[0]
    xi = np.triu(rng.uniform(lo, hi, size=(n, n)))
    xi = xi + np.triu(xi, k=1).T
    return np.clip(P + xi, 0.0, 1.0)
