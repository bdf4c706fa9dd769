"""Gromov-Wasserstein couplings between two similarity matrices.

Exact GW is solved by Frank-Wolfe with an exact transportation solver for
the linear subproblem and a closed-form line search. Entropic GW is solved
by mirror descent with a log-domain Sinkhorn inner loop.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
from scipy.special import logsumexp

from .errors import (
    ConvergenceError,
    DegenerateColumnError,
    DimensionMismatchError,
    InfeasibleMarginalsError,
)

for _backend in ("PYTORCH", "JAX", "TENSORFLOW", "CUPY"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_backend}", "1")
import ot  # noqa: E402

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Marginals:
    mu: np.ndarray
    nu: np.ndarray

    @classmethod
    def uniform(cls, n_s: int, n_t: int) -> "Marginals":
        return cls(np.full(n_s, 1.0 / n_s), np.full(n_t, 1.0 / n_t))

    def check(self):
        mu = np.asarray(self.mu, dtype=float)
        nu = np.asarray(self.nu, dtype=float)
        if np.any(mu < 0) or np.any(nu < 0):
            raise InfeasibleMarginalsError("marginals must be nonnegative")
        if abs(mu.sum() - nu.sum()) > 1e-12:
            raise InfeasibleMarginalsError(
                "marginals carry different total mass", mu_sum=float(mu.sum()), nu_sum=float(nu.sum())
            )


@dataclass
class Coupling:
    """A transport plan together with solver diagnostics.

    ``objective`` is the quadratic GW value at ``pi``. For entropic runs
    ``entropic_objective`` adds the KL penalty.
    """

    pi: np.ndarray
    objective: float
    converged: bool
    iterations: int
    epsilon: float | None = None
    entropic_objective: float | None = None
    history: list[float] = field(default_factory=list)

    @property
    def distance(self) -> float:
        """Square root of the quadratic objective."""
        return float(np.sqrt(max(self.objective, 0.0)))

    def sidecar(self) -> dict:
        return {
            "objective": self.objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "epsilon": self.epsilon,
        }


@dataclass(frozen=True)
class GwSolverOptions:
    kind: Literal["exact-gw", "entropic-gw"] = "exact-gw"
    epsilon: float = 0.01
    max_outer: int = 200
    max_sinkhorn: int = 10_000
    tol_objective: float = 1e-8
    tol_marginal: float = 1e-9
    init: Literal["product-measure", "user-supplied"] = "product-measure"

    def __post_init__(self):
        if self.kind not in ("exact-gw", "entropic-gw"):
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.kind == "entropic-gw" and not self.epsilon > 0:
            raise ValueError("epsilon must be positive for entropic GW")

    @classmethod
    def named(cls, name: str, **kw) -> "GwSolverOptions":
        kinds = {"gw": "exact-gw", "egw": "entropic-gw"}
        return cls(kind=kinds.get(name, name), **kw)

    def with_(self, **kw) -> "GwSolverOptions":
        return replace(self, **kw)


def _check_pair(C, D, pi=None):
    C = np.asarray(C, dtype=float)
    D = np.asarray(D, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionMismatchError("C and D must be square")
    if pi is not None:
        pi = np.asarray(pi, dtype=float)
        if pi.shape != (C.shape[0], D.shape[0]):
            raise DimensionMismatchError(
                f"coupling shape {pi.shape} does not match ({C.shape[0]}, {D.shape[0]})"
            )
    return C, D, pi


def gw_gradient(C, D, pi) -> np.ndarray:
    """``G[i, j] = sum_{k, l} (C[i, k] - D[j, l])**2 * pi[k, l]``.

    Uses the square expansion so only matrix products are formed.
    """
    C, D, pi = _check_pair(C, D, pi)
    r = pi.sum(axis=1)
    c = pi.sum(axis=0)
    return np.outer((C * C) @ r, np.ones(D.shape[0])) + np.outer(
        np.ones(C.shape[0]), (D * D) @ c
    ) - 2.0 * C @ pi @ D.T


def gw_objective(C, D, pi) -> float:
    """Quadratic GW objective ``sum (C_ik - D_jl)^2 pi_ij pi_kl``."""
    return float(np.sum(gw_gradient(C, D, pi) * pi))


def exact_linear_ot(cost, m: Marginals) -> np.ndarray:
    """Exact minimizer of ``<cost, pi>`` over couplings with marginals ``m``."""
    cost = np.asarray(cost, dtype=float)
    m.check()
    if cost.shape != (len(m.mu), len(m.nu)):
        raise DimensionMismatchError("cost shape does not match marginals")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost must be finite")
    mu = np.asarray(m.mu, dtype=float)
    nu = np.asarray(m.nu, dtype=float)
    pi, info = ot.emd(mu, nu, np.ascontiguousarray(cost), numItermax=1_000_000, log=True)
    if info.get("result_code", 1) != 1:
        raise ConvergenceError(f"network simplex failed: {info.get('warning')}")
    return np.asarray(pi, dtype=float)


def _soft_rows(K, g, log_nu, eps):
    """Row potentials that make every row marginal exact for a given ``g``."""
    return -eps * logsumexp(K + (g[None, :] / eps) + log_nu[None, :], axis=1)


def sinkhorn(cost, m: Marginals, eps: float, tol: float = 1e-9, max_iter: int = 10_000,
             potentials=None, return_potentials: bool = False, newton_after: int = 200):
    """Entropic OT plan with respect to ``mu nu^T`` in the log domain.

    The plan has the form ``pi = mu_i nu_j exp((f_i + g_j - cost_ij) / eps)``.
    Alternating scaling updates run first. If they have not met ``tol``
    after ``newton_after`` sweeps, the column potentials are finished by
    damped Newton steps on the semi-dual, which converge quadratically
    where plain scaling stalls at small ``eps``.

    Parameters
    ----------
    cost : ndarray of shape (n_s, n_t)
    m : Marginals
    eps : float
        Regularization strength, positive.
    tol : float
        Stop once the largest row or column marginal error falls below this.
    max_iter : int
        Budget shared by scaling sweeps and Newton steps.
    potentials : tuple of ndarray, optional
        Warm start ``(f, g)``.
    return_potentials : bool
    newton_after : int

    Returns
    -------
    ndarray, or (ndarray, (f, g)) when ``return_potentials``.

    Raises
    ------
    ConvergenceError
        When the budget is spent before reaching ``tol``.
    """
    cost = np.asarray(cost, dtype=float)
    if not eps > 0:
        raise ValueError("eps must be positive")
    m.check()
    mu = np.asarray(m.mu, dtype=float)
    nu = np.asarray(m.nu, dtype=float)
    if cost.shape != (len(mu), len(nu)):
        raise DimensionMismatchError("cost shape does not match marginals")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost must be finite")
    with np.errstate(divide="ignore"):
        log_mu, log_nu = np.log(mu), np.log(nu)
    if potentials is not None:
        f, g = (np.array(p, dtype=float) for p in potentials)
    else:
        f, g = np.zeros(len(mu)), np.zeros(len(nu))
    K = -cost / eps

    def plan(f, g):
        return np.exp(K + (f[:, None] + g[None, :]) / eps + log_mu[:, None] + log_nu[None, :])

    def error(pi):
        return max(np.abs(pi.sum(1) - mu).max(), np.abs(pi.sum(0) - nu).max())

    pi = plan(f, g)
    err = error(pi)
    it = 0
    while err >= tol and it < min(max_iter, newton_after):
        it += 1
        g = -eps * logsumexp(K + (f[:, None] / eps) + log_mu[:, None], axis=0)
        f = _soft_rows(K, g, log_nu, eps)
        if it % 10 == 0 or it == max_iter:
            pi = plan(f, g)
            err = error(pi)
    if err >= tol:
        pi, f, g, err = _newton_polish(K, g, mu, nu, log_nu, eps, tol, max_iter - it, plan, error)
    if err >= tol:
        raise ConvergenceError(
            f"sinkhorn did not reach tol={tol:g} in {max_iter} iterations", residual=float(err)
        )
    return (pi, (f, g)) if return_potentials else pi


def _newton_polish(K, g, mu, nu, log_nu, eps, tol, budget, plan, error):
    """Damped Newton ascent on the semi-dual in the column potentials.

    The Hessian is singular along constant shifts and nearly singular when
    the plan splits into weakly linked blocks, so steps use a
    Levenberg-Marquardt shift that grows on rejection and shrinks on success.
    """
    support = mu > 0

    def semi_dual(g):
        f = _soft_rows(K, g, log_nu, eps)
        return float(mu[support] @ f[support] + nu @ g), f

    value, f = semi_dual(g)
    pi = plan(f, g)
    err = error(pi)
    damping = 1e-10
    eye = np.eye(len(nu))
    # Quadratic convergence needs few steps; a long run means a stall.
    for _ in range(min(max(budget, 0), 500)):
        if err < tol or damping > 1e8:
            break
        col = pi.sum(0)
        grad = nu - col
        rows = pi[support]
        M = np.diag(col) - rows.T @ (rows / mu[support, None])
        step = eps * np.linalg.solve(M + damping * eye, grad)
        slope = float(grad @ step)
        g_trial = g + step
        trial, f_trial = semi_dual(g_trial)
        pi_trial = plan(f_trial, g_trial)
        err_trial = error(pi_trial)
        # Near the optimum the dual gain drops below rounding noise, so a
        # step is also accepted when it shrinks the marginal error.
        if err_trial < err or (slope > 0 and trial >= value + 1e-4 * slope):
            g, value, f, pi, err = g_trial, trial, f_trial, pi_trial, err_trial
            damping = max(damping / 10.0, 1e-14)
        else:
            damping *= 10.0
    return pi, f, g, err


def _line_search(C, D, G, pi, direction):
    """Exact minimizer over ``t`` in [0, 1] of the objective along ``pi + t * direction``.

    ``direction`` has zero marginals, so the objective restricted to the
    segment is ``f(pi) + b t + a t^2``.
    """
    a = float(np.sum(-2.0 * (C @ direction @ D.T) * direction))
    b = 2.0 * float(np.sum(G * direction))
    if a > 0:
        t = min(1.0, max(0.0, -b / (2.0 * a)))
    else:
        t = 1.0 if a + b < 0 else 0.0
    return t, a, b


def _init_plan(m: Marginals, init):
    if init is None:
        return np.outer(m.mu, m.nu)
    return np.asarray(init, dtype=float).copy()


def solve_gw(C, D, m: Marginals | None = None, opts: GwSolverOptions = GwSolverOptions(),
             init=None) -> Coupling:
    """Exact GW coupling by Frank-Wolfe.

    Parameters
    ----------
    C, D : ndarray
        Symmetric similarity matrices of the source and target.
    m : Marginals, optional
        Defaults to uniform weights.
    opts : GwSolverOptions
    init : ndarray, optional
        Starting plan; the product measure when omitted.

    Returns
    -------
    Coupling
        ``history`` lists the objective after every iteration and is
        nonincreasing.
    """
    C, D, _ = _check_pair(C, D)
    m = m or Marginals.uniform(C.shape[0], D.shape[0])
    m.check()
    pi = _init_plan(m, init)
    G = gw_gradient(C, D, pi)
    obj = float(np.sum(G * pi))
    history = [obj]
    converged = False
    it = 0
    for it in range(1, opts.max_outer + 1):
        target = exact_linear_ot(2.0 * G, m)
        direction = target - pi
        t, a, b = _line_search(C, D, G, pi, direction)
        if t > 0:
            pi = pi + t * direction
            G = gw_gradient(C, D, pi)
            new = float(np.sum(G * pi))
        else:
            new = obj
        # Rounding can leave a tiny positive drift; never record an increase.
        new = min(new, obj)
        history.append(new)
        decrease = obj - new
        obj = new
        if decrease <= opts.tol_objective * max(abs(obj), 1e-300) or obj <= 0.0:
            converged = True
            break
    return Coupling(pi=pi, objective=max(obj, 0.0), converged=converged, iterations=it,
                    history=history)


def _kl_to_product(pi, m: Marginals) -> float:
    ref = np.outer(m.mu, m.nu)
    mask = pi > 0
    return float(np.sum(pi[mask] * np.log(pi[mask] / ref[mask])))


def solve_egw(C, D, m: Marginals | None = None,
              opts: GwSolverOptions = GwSolverOptions(kind="entropic-gw"), init=None) -> Coupling:
    """Entropic GW coupling by mirror descent.

    Each step solves an entropic OT problem whose cost is the doubled GW
    gradient at the current plan, warm starting the Sinkhorn potentials.
    """
    C, D, _ = _check_pair(C, D)
    m = m or Marginals.uniform(C.shape[0], D.shape[0])
    m.check()
    eps = opts.epsilon
    pi = _init_plan(m, init)
    potentials = None
    prev = None
    history = []
    converged = False
    it = 0
    for it in range(1, opts.max_outer + 1):
        G = gw_gradient(C, D, pi)
        pi, potentials = sinkhorn(2.0 * G, m, eps, tol=opts.tol_marginal,
                                  max_iter=opts.max_sinkhorn, potentials=potentials,
                                  return_potentials=True)
        quad = gw_objective(C, D, pi)
        ent = quad + eps * _kl_to_product(pi, m)
        history.append(ent)
        if prev is not None and abs(prev - ent) <= opts.tol_objective * max(abs(ent), 1e-300):
            converged = True
            break
        prev = ent
    if not converged:
        log.info("entropic GW stopped after %d iterations without settling", it)
    return Coupling(pi=pi, objective=max(quad, 0.0), converged=converged, iterations=it,
                    epsilon=eps, entropic_objective=ent, history=history)


def solve(C, D, opts: GwSolverOptions, m: Marginals | None = None) -> Coupling:
    if opts.kind == "entropic-gw":
        return solve_egw(C, D, m, opts)
    return solve_gw(C, D, m, opts)


def column_normalize(pi) -> np.ndarray:
    """Rescale each column of a plan to sum to one.

    Raises
    ------
    DegenerateColumnError
        If some column carries no mass.
    """
    pi = np.asarray(pi, dtype=float)
    s = pi.sum(axis=0)
    bad = np.flatnonzero(s <= 0)
    if bad.size:
        raise DegenerateColumnError("coupling has empty columns", columns=bad.tolist())
    return pi / s[None, :]
