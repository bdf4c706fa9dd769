"""Graphon transfer: estimate, align, project, re-smooth and debias."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .alignment import Coupling, GwSolverOptions, column_normalize, solve
from .errors import DegenerateColumnError, DimensionMismatchError, GTransError, StageError
from .smoothing import SmootherConfig, ns_estimate

log = logging.getLogger(__name__)

DEFAULT_DELTA = {"exact-gw": 0.15, "entropic-gw": 0.18}

VARIANTS = ("full", "non-debias", "non-smooth", "adj")


@dataclass(frozen=True)
class TransferConfig:
    """Settings for :func:`gtrans`.

    Parameters
    ----------
    solver : GwSolverOptions
    delta : float or None
        Gate threshold on the domain distance; ``None`` picks the default
        for the solver kind.
    smoother : SmootherConfig
    clamp_final : bool
    distance : {"gw", "objective"}
        Quantity compared against ``delta``: the GW distance (square root
        of the quadratic objective) or the raw objective itself.
    variant : {"full", "non-debias", "non-smooth", "adj"}
        Ablations: skip debiasing; skip the initial and post-projection
        smoothing; align raw adjacencies instead of the initial estimates.
    """

    solver: GwSolverOptions = GwSolverOptions()
    delta: float | None = None
    smoother: SmootherConfig = SmootherConfig()
    clamp_final: bool = True
    distance: Literal["gw", "objective"] = "gw"
    variant: str = "full"

    def __post_init__(self):
        # Negative values are allowed so that callers can force debiasing.
        if self.delta is not None and math.isnan(self.delta):
            raise ValueError("delta must be a number")
        if self.distance not in ("gw", "objective"):
            raise ValueError(f"unknown distance {self.distance!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def threshold(self) -> float:
        return DEFAULT_DELTA[self.solver.kind] if self.delta is None else float(self.delta)


@dataclass
class TransferResult:
    p_s_ini: np.ndarray
    p_t_ini: np.ndarray
    pi: Coupling
    pi_tilde: np.ndarray
    d: float
    p_trans: np.ndarray
    p_trans2: np.ndarray
    debiased: bool
    p_final: np.ndarray
    residual: np.ndarray | None = None
    p_res: np.ndarray | None = None
    delta: float = 0.0
    warnings: list[str] = field(default_factory=list)

    def stages(self) -> dict[str, np.ndarray]:
        out = {
            "p_s_ini": self.p_s_ini,
            "p_t_ini": self.p_t_ini,
            "p_trans": self.p_trans,
            "p_trans2": self.p_trans2,
            "p_final": self.p_final,
        }
        if self.debiased:
            out["residual"] = self.residual
            out["p_res"] = self.p_res
        return out


def project_source(pi_tilde, p_s) -> np.ndarray:
    """Map a source matrix into target coordinates, ``pi_tilde.T @ p_s @ pi_tilde``."""
    pi_tilde = np.asarray(pi_tilde, dtype=float)
    p_s = np.asarray(p_s, dtype=float)
    if p_s.shape != (pi_tilde.shape[0], pi_tilde.shape[0]):
        raise DimensionMismatchError(
            f"source matrix {p_s.shape} does not match alignment {pi_tilde.shape}"
        )
    return pi_tilde.T @ p_s @ pi_tilde


def debias(p_t_ini, p_trans2, smoother: SmootherConfig = SmootherConfig(),
           clamp_final: bool = True, smooth_residual: bool = True):
    """Correct a transferred estimate with the smoothed target residual.

    Returns
    -------
    residual, p_res, p_final : ndarray
    """
    p_t_ini = np.asarray(p_t_ini, dtype=float)
    p_trans2 = np.asarray(p_trans2, dtype=float)
    if p_t_ini.shape != p_trans2.shape:
        raise DimensionMismatchError("residual inputs differ in shape")
    residual = p_t_ini - p_trans2
    p_res = ns_estimate(residual, smoother.unclamped()) if smooth_residual else residual
    p_final = p_trans2 + p_res
    if clamp_final:
        p_final = np.clip(p_final, 0.0, 1.0)
    return residual, p_res, p_final


def _stage(name, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except StageError:
        raise
    except GTransError as exc:
        raise StageError(name, exc) from exc


def _safe_normalize(pi, warnings):
    try:
        return column_normalize(pi)
    except DegenerateColumnError as exc:
        cols = exc.context["columns"]
        msg = f"{len(cols)} empty coupling column(s) replaced by uniform weights"
        log.warning(msg)
        warnings.append(msg)
        pi = pi.copy()
        pi[:, cols] = 1.0
        return column_normalize(pi)


def initial_estimates(a_s, a_t, cfg: TransferConfig = TransferConfig()):
    """Neighborhood-smoothing estimates of both graphs (raw inputs when smoothing is ablated)."""
    if cfg.variant == "non-smooth":
        return np.asarray(a_s, dtype=float), np.asarray(a_t, dtype=float)
    p_s = _stage("estimate-source", ns_estimate, a_s, cfg.smoother)
    p_t = _stage("estimate-target", ns_estimate, a_t, cfg.smoother)
    return p_s, p_t


def align(p_s_ini, p_t_ini, cfg: TransferConfig = TransferConfig(), a_s=None, a_t=None):
    """Coupling between the two graphs and the resulting gate distance."""
    if cfg.variant == "adj":
        C, D = np.asarray(a_s, dtype=float), np.asarray(a_t, dtype=float)
    else:
        C, D = p_s_ini, p_t_ini
    coupling = _stage("align", solve, C, D, cfg.solver)
    d = coupling.distance if cfg.distance == "gw" else coupling.objective
    return coupling, d


def transfer_step(p_s_ini, coupling: Coupling, cfg: TransferConfig, warnings=None):
    """Project the source estimate through the aligned coupling and re-smooth it."""
    warnings = [] if warnings is None else warnings
    pi_tilde = _stage("normalize", _safe_normalize, coupling.pi, warnings)
    p_trans = _stage("project", project_source, pi_tilde, p_s_ini)
    if cfg.variant == "non-smooth":
        p_trans2 = np.clip(p_trans, 0.0, 1.0)
    else:
        p_trans2 = _stage("resmooth", ns_estimate, p_trans, cfg.smoother)
    return pi_tilde, p_trans, p_trans2


def gate(p_t_ini, p_trans2, d: float, cfg: TransferConfig, delta: float | None = None):
    """Apply the distance gate; returns ``(debiased, residual, p_res, p_final)``."""
    delta = cfg.threshold if delta is None else delta
    debiased = bool(d > delta) and cfg.variant != "non-debias"
    if not debiased:
        return False, None, None, p_trans2
    residual, p_res, p_final = _stage("debias", debias, p_t_ini, p_trans2, cfg.smoother,
                                      cfg.clamp_final)
    return True, residual, p_res, p_final


def gtrans(a_s, a_t, cfg: TransferConfig = TransferConfig()) -> TransferResult:
    """Estimate the target edge-probability matrix with help from a source graph.

    Parameters
    ----------
    a_s : ndarray of shape (n_s, n_s)
        Source adjacency.
    a_t : ndarray of shape (n_t, n_t)
        Target adjacency.
    cfg : TransferConfig

    Returns
    -------
    TransferResult

    Raises
    ------
    StageError
        Wrapping any library error, labelled with the failing stage.
    """
    a_s = np.asarray(a_s, dtype=float)
    a_t = np.asarray(a_t, dtype=float)
    warnings: list[str] = []
    if a_s.shape[0] <= a_t.shape[0]:
        msg = f"source ({a_s.shape[0]} nodes) is not larger than target ({a_t.shape[0]} nodes)"
        log.warning(msg)
        warnings.append(msg)
    p_s_ini, p_t_ini = initial_estimates(a_s, a_t, cfg)
    coupling, d = align(p_s_ini, p_t_ini, cfg, a_s, a_t)
    pi_tilde, p_trans, p_trans2 = transfer_step(p_s_ini, coupling, cfg, warnings)
    debiased, residual, p_res, p_final = gate(p_t_ini, p_trans2, d, cfg)
    log.info("distance %.6g vs delta %.6g, debiased=%s", d, cfg.threshold, debiased)
    return TransferResult(
        p_s_ini=p_s_ini, p_t_ini=p_t_ini, pi=coupling, pi_tilde=pi_tilde, d=float(d),
        p_trans=p_trans, p_trans2=p_trans2, debiased=debiased, p_final=p_final,
        residual=residual, p_res=p_res, delta=cfg.threshold, warnings=warnings,
    )
