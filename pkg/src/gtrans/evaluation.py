"""Metrics, masking, cross-validated threshold selection and simulation campaigns."""

from __future__ import annotations

import itertools
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from . import streams
from .errors import (
    DimensionMismatchError,
    GTransError,
    InputError,
    InvalidRankError,
    UndefinedAUCError,
)
from .graphons import PerturbationSpec, build_prob_matrix, perturb, sample_adjacency, sample_latents
from .smoothing import ns_estimate, usvt_estimate
from .transfer import (
    TransferConfig,
    align,
    gate,
    initial_estimates,
    transfer_step,
)

log = logging.getLogger(__name__)


def mse(p_hat, p) -> float:
    """Mean squared entrywise error over the full matrix, diagonal included."""
    p_hat = np.asarray(p_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    if p_hat.shape != p.shape:
        raise DimensionMismatchError(f"shapes differ: {p_hat.shape} vs {p.shape}")
    return float(np.sum((p_hat - p) ** 2) / p.size)


# Masking and link prediction -------------------------------------------------


def mask_edges(a, p: float, rng: np.random.Generator):
    """Hide each unordered node pair independently with probability ``p``.

    Returns
    -------
    masked : ndarray
        ``a * mask``.
    mask : ndarray
        Symmetric 0/1 matrix, 0 on hidden pairs, 1 on the diagonal.
    """
    if not 0 < p < 1:
        raise InputError("test ratio p must lie in (0, 1)", p=p)
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    keep = np.triu(rng.random((n, n)) >= p, k=1)
    mask = (keep | keep.T).astype(float)
    np.fill_diagonal(mask, 1.0)
    return a * mask, mask


def _held_out(p_hat, a_true, mask):
    iu = np.triu_indices_from(np.asarray(mask), k=1)
    hidden = np.asarray(mask)[iu] == 0
    scores = np.asarray(p_hat, dtype=float)[iu][hidden]
    labels = np.asarray(a_true)[iu][hidden] > 0
    if labels.all() or not labels.any():
        raise UndefinedAUCError(
            "masked set needs at least one edge and one non-edge",
            positives=int(labels.sum()), negatives=int((~labels).sum()),
        )
    return scores, labels


def link_auc(p_hat, a_true, mask) -> float:
    """Area under the ROC curve on the masked pairs; ties earn half credit."""
    scores, labels = _held_out(p_hat, a_true, mask)
    ranks = rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(p_hat, a_true, mask):
    """ROC points over every distinct score threshold on the masked pairs.

    A pair is called positive when its score is strictly above the
    threshold. Thresholds run from the largest score down to minus
    infinity, so the curve starts at (0, 0) and ends at (1, 1).

    Returns
    -------
    fpr, tpr, thresholds : ndarray
    """
    scores, labels = _held_out(p_hat, a_true, mask)
    thresholds = np.concatenate([np.unique(scores)[::-1], [-np.inf]])
    above = scores[None, :] > thresholds[:, None]
    tpr = (above & labels).sum(axis=1) / labels.sum()
    fpr = (above & ~labels).sum(axis=1) / (~labels).sum()
    return fpr, tpr, thresholds


def matrix_complete(a_masked, mask, rank: int | str = "auto") -> np.ndarray:
    """Low-rank completion of a partially observed symmetric matrix.

    Observed entries are rescaled by the inverse observed fraction, the
    result is truncated to its leading eigenpairs (by magnitude) and
    clipped to ``[0, 1]``. With ``rank="auto"`` the cut sits at the largest
    gap among the ten leading eigenvalue magnitudes.
    """
    a_masked = np.asarray(a_masked, dtype=float)
    mask = np.asarray(mask, dtype=float)
    n = a_masked.shape[0]
    iu = np.triu_indices(n, k=1)
    frac = float(mask[iu].mean()) if n > 1 else 1.0
    if frac <= 0:
        raise InputError("no observed entries to complete from")
    if rank != "auto" and not 1 <= int(rank) < n:
        raise InvalidRankError(f"rank must lie in [1, {n - 1}]", rank=rank)
    Y = a_masked * mask / frac
    vals, vecs = np.linalg.eigh(Y)
    order = np.argsort(-np.abs(vals))
    vals, vecs = vals[order], vecs[:, order]
    if rank == "auto":
        top = np.abs(vals[: min(10, n)])
        r = int(np.argmax(top[:-1] - top[1:])) + 1 if top.size > 1 else 1
    else:
        r = int(rank)
    out = (vecs[:, :r] * vals[:r]) @ vecs[:, :r].T
    return np.clip(0.5 * (out + out.T), 0.0, 1.0)


# Cross-validation of the gate threshold --------------------------------------


@dataclass(frozen=True)
class CvConfig:
    candidates: tuple[float, ...] = tuple(round(0.10 + 0.01 * k, 2) for k in range(41))
    folds: int = 5
    completion_rank: int | str = "auto"
    loss: str = "squared-error"

    def __post_init__(self):
        if self.folds < 2:
            raise InputError("need at least two folds", folds=self.folds)
        if not len(self.candidates):
            raise InputError("candidate set is empty")
        if self.loss != "squared-error":
            raise InputError(f"unknown loss {self.loss!r}")


@dataclass
class CvResult:
    delta_hat: float
    candidates: tuple[float, ...]
    mean_loss: np.ndarray
    fold_losses: np.ndarray
    distances: list[float]
    failed_folds: list[int] = field(default_factory=list)


def cv_select_delta(a_s, a_t, cfg: CvConfig = CvConfig(),
                    transfer: TransferConfig = TransferConfig(),
                    rng: np.random.Generator | None = None) -> CvResult:
    """Choose the gate threshold by K-fold hold-out over target node pairs.

    Each fold hides its pairs, completes the target from the rest, runs the
    transfer pipeline once up to the gate, then scores every candidate by
    squared error against the hidden binary entries. The source estimate
    is shared by all folds. Ties go to the smallest candidate.
    """
    rng = rng if rng is not None else np.random.default_rng()
    a_s = np.asarray(a_s, dtype=float)
    a_t = np.asarray(a_t, dtype=float)
    n = a_t.shape[0]
    iu = np.triu_indices(n, k=1)
    if cfg.folds > iu[0].size:
        raise InputError("more folds than node pairs", folds=cfg.folds)
    order = rng.permutation(iu[0].size)
    fold_of = np.empty(iu[0].size, dtype=int)
    fold_of[order] = np.arange(iu[0].size) % cfg.folds
    candidates = tuple(sorted(cfg.candidates))

    raw = transfer.variant == "non-smooth"
    p_s_ini = a_s if raw else ns_estimate(a_s, transfer.smoother)
    losses = np.full((cfg.folds, len(candidates)), np.nan)
    distances = []
    failed = []
    for k in range(cfg.folds):
        hide = fold_of == k
        mask = np.ones((n, n))
        mask[iu[0][hide], iu[1][hide]] = 0.0
        mask[iu[1][hide], iu[0][hide]] = 0.0
        try:
            completed = matrix_complete(a_t * mask, mask, cfg.completion_rank)
            p_t_ini = completed if raw else ns_estimate(completed, transfer.smoother)
            coupling, d = align(p_s_ini, p_t_ini, transfer, a_s, completed)
            _, _, p_trans2 = transfer_step(p_s_ini, coupling, transfer)
        except GTransError as exc:
            log.warning("fold %d failed: %s", k, exc)
            failed.append(k)
            continue
        distances.append(d)
        truth = a_t[iu][hide]
        for c, delta in enumerate(candidates):
            _, _, _, p_final = gate(p_t_ini, p_trans2, d, transfer, delta)
            losses[k, c] = float(np.mean((p_final[iu][hide] - truth) ** 2))
    if len(failed) == cfg.folds:
        raise GTransError("every cross-validation fold failed")
    mean_loss = np.nanmean(losses, axis=0)
    best = int(np.argmin(mean_loss))
    return CvResult(candidates[best], candidates, mean_loss, losses, distances, failed)


# Simulation campaigns --------------------------------------------------------

METHODS = ("ns", "usvt", "gtrans-gw", "gtrans-egw")
ABLATION_METHODS = ("gtrans-gw", "gtrans-gw-nondebias", "gtrans-gw-nonsmooth", "gtrans-gw-adj")
_VARIANT_SUFFIX = {"": "full", "-nondebias": "non-debias", "-nonsmooth": "non-smooth", "-adj": "adj"}
KINDS = ("source-size-sweep", "cross-graphon", "density-shift", "ablation")


def method_config(method: str, base: TransferConfig = TransferConfig()) -> TransferConfig:
    """Transfer configuration for a method label such as ``gtrans-egw-adj``."""
    parts = method.split("-")
    if parts[0] != "gtrans" or len(parts) < 2 or parts[1] not in ("gw", "egw"):
        raise InputError(f"unknown method {method!r}")
    suffix = "-" + "-".join(parts[2:]) if len(parts) > 2 else ""
    if suffix not in _VARIANT_SUFFIX:
        raise InputError(f"unknown method {method!r}")
    solver = base.solver.with_(kind="exact-gw" if parts[1] == "gw" else "entropic-gw")
    delta = base.delta if base.solver.kind == solver.kind else None
    return replace(base, solver=solver, delta=delta, variant=_VARIANT_SUFFIX[suffix])


@dataclass(frozen=True)
class Scenario:
    """A grid of simulation cells, each repeated ``reps`` times.

    Parameters
    ----------
    kind : str
        One of ``source-size-sweep``, ``cross-graphon``, ``density-shift``
        or ``ablation``.
    source_graphon, target_graphon : int
    n_s : tuple of int
        Source sizes; one cell per value.
    n_t : int
    reps : int
    perturbation : PerturbationSpec or None
        Noise added to the target probability matrix.
    lambdas : tuple of float
        Density shifts added to the source probability matrix; one cell per
        value.
    methods : tuple of str
    seed : int
    epsilon : float
        Entropic regularization for ``gtrans-egw`` methods.
    delta_gw, delta_egw : float or None
        Gate thresholds; ``None`` keeps the solver default.
    """

    kind: str = "cross-graphon"
    source_graphon: int = 6
    target_graphon: int = 6
    n_s: tuple[int, ...] = (500,)
    n_t: int = 50
    reps: int = 50
    perturbation: PerturbationSpec | None = None
    lambdas: tuple[float, ...] = (0.0,)
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    epsilon: float = 0.01
    delta_gw: float | None = None
    delta_egw: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown scenario kind {self.kind!r}")
        if self.reps < 1:
            raise InputError("reps must be at least 1", reps=self.reps)
        object.__setattr__(self, "n_s", tuple(int(v) for v in np.atleast_1d(self.n_s)))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in np.atleast_1d(self.lambdas)))
        object.__setattr__(self, "methods", tuple(self.methods))
        for m in self.methods:
            if m not in ("ns", "usvt"):
                method_config(m)

    @classmethod
    def preset(cls, kind: str, **kw) -> "Scenario":
        """Default grids for each kind; keyword arguments override them."""
        defaults = {
            "source-size-sweep": dict(
                n_s=tuple(range(100, 1001, 100)),
                perturbation=PerturbationSpec("uniform-noise", -0.01, 0.01),
            ),
            "cross-graphon": dict(n_s=(500,)),
            "density-shift": dict(
                n_s=(200,), source_graphon=2, target_graphon=2,
                lambdas=(-0.5, -0.25, 0.0, 0.25, 0.5),
            ),
            "ablation": dict(n_s=(500,), methods=ABLATION_METHODS),
        }[kind]
        defaults.update(kw)
        return cls(kind=kind, **defaults)

    def cells(self) -> list[dict]:
        return [{"n_s": n_s, "lambda": lam} for n_s, lam in itertools.product(self.n_s, self.lambdas)]

    def config_for(self, method: str) -> TransferConfig:
        cfg = method_config(method)
        if cfg.solver.kind == "entropic-gw":
            cfg = replace(cfg, solver=cfg.solver.with_(epsilon=self.epsilon), delta=self.delta_egw)
        else:
            cfg = replace(cfg, delta=self.delta_gw)
        return cfg


def draw_pair(s: Scenario, cell_index: int, rep: int):
    """Sample ``(P_s, A_s, P_t, A_t)`` for one replicate of one cell.

    The target depends only on ``(seed, rep)`` so every cell sees the same
    target graph in a given replicate.
    """
    cell = s.cells()[cell_index]
    rng_t = streams.stream(s.seed, streams.TARGET, rep)
    P_t = build_prob_matrix(s.target_graphon, sample_latents(s.n_t, rng_t))
    if s.perturbation is not None:
        P_t = perturb(P_t, s.perturbation, streams.stream(s.seed, streams.TARGET_NOISE, rep))
    A_t = sample_adjacency(P_t, rng_t)
    rng_s = streams.stream(s.seed, streams.SOURCE, cell_index, rep)
    P_s = build_prob_matrix(s.source_graphon, sample_latents(cell["n_s"], rng_s))
    if cell["lambda"] != 0.0:
        shift = PerturbationSpec("density-shift", lam=cell["lambda"])
        P_s = perturb(P_s, shift, streams.stream(s.seed, streams.SOURCE_NOISE, cell_index, rep))
    A_s = sample_adjacency(P_s, rng_s)
    return P_s, A_s, P_t, A_t


def estimate_all(a_s, a_t, methods: Sequence[str], configs: dict[str, TransferConfig]):
    """Run every method on one source/target pair, sharing common stages.

    Returns a mapping from method label to the final estimate.
    """
    out = {}
    cache: dict = {}

    def inits(variant):
        key = ("init", variant == "non-smooth")
        if key not in cache:
            cache[key] = initial_estimates(a_s, a_t, TransferConfig(variant=variant))
        return cache[key]

    for m in methods:
        if m == "ns":
            out[m] = inits("full")[1]
            continue
        if m == "usvt":
            out[m] = usvt_estimate(a_t)
            continue
        cfg = configs[m]
        p_s_ini, p_t_ini = inits(cfg.variant)
        # Debias ablation shares the coupling of the full pipeline.
        shared = "full" if cfg.variant == "non-debias" else cfg.variant
        akey = ("align", cfg.solver, shared)
        if akey not in cache:
            cache[akey] = align(p_s_ini, p_t_ini, cfg, a_s, a_t)
        coupling, d = cache[akey]
        _, _, p_trans2 = transfer_step(p_s_ini, coupling, cfg)
        out[m] = gate(p_t_ini, p_trans2, d, cfg)[3]
    return out


def _run_task(args):
    s, cell_index, rep = args
    P_s, A_s, P_t, A_t = draw_pair(s, cell_index, rep)
    configs = {m: s.config_for(m) for m in s.methods if m not in ("ns", "usvt")}
    cell = s.cells()[cell_index]
    rows = []
    for m, est in estimate_all(A_s, A_t, s.methods, configs).items():
        rows.append({"scenario": s.kind, "n_s": cell["n_s"], "n_t": s.n_t,
                     "lambda": cell["lambda"], "method": m, "rep": rep, "mse": mse(est, P_t)})
    return rows


@dataclass
class ScenarioResult:
    scenario: Scenario
    rows: list[dict]

    def values(self, method: str, **cell) -> np.ndarray:
        return np.array([r["mse"] for r in self.rows if r["method"] == method
                         and all(r[k] == v for k, v in cell.items())])

    def summary(self) -> list[dict]:
        groups: dict = {}
        for r in self.rows:
            groups.setdefault((r["n_s"], r["lambda"], r["method"]), []).append(r["mse"])
        out = []
        for (n_s, lam, m), vals in groups.items():
            vals = np.asarray(vals)
            out.append({"scenario": self.scenario.kind, "n_s": n_s, "n_t": self.scenario.n_t,
                        "lambda": lam, "method": m, "reps": int(vals.size),
                        "mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0})
        return out

    def mean(self, method: str, **cell) -> float:
        return float(self.values(method, **cell).mean())


def run_scenario(s: Scenario, workers: int = 1) -> ScenarioResult:
    """Run every cell and replicate of a scenario and collect per-run MSEs.

    Rows come back in (cell, replicate, method) order regardless of
    ``workers``, so results are identical for a fixed seed.
    """
    tasks = [(s, c, r) for c in range(len(s.cells())) for r in range(s.reps)]
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(tasks) == 1:
        chunks = [_run_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_task, tasks))
    return ScenarioResult(s, [row for chunk in chunks for row in chunk])


# Link prediction -------------------------------------------------------------


def run_linkpred(a_source, a_target, p: float = 0.1, reps: int = 50, seed: int = 0,
                 methods: Sequence[str] = ("ns", "gtrans-gw", "gtrans-egw"),
                 epsilon: float = 0.01) -> dict[str, np.ndarray]:
    """AUC of each method over independent masks of the target graph.

    Estimation runs on the masked target, treating hidden pairs as
    non-edges; AUC is scored on the hidden pairs only.
    """
    configs = {}
    for m in methods:
        if m in ("ns", "usvt"):
            continue
        cfg = method_config(m)
        if cfg.solver.kind == "entropic-gw":
            cfg = replace(cfg, solver=cfg.solver.with_(epsilon=epsilon))
        configs[m] = cfg
    out = {m: [] for m in methods}
    a_target = np.asarray(a_target, dtype=float)
    for rep in range(reps):
        masked, mask = mask_edges(a_target, p, streams.stream(seed, streams.MASK, rep))
        for m, est in estimate_all(a_source, masked, methods, configs).items():
            out[m].append(link_auc(est, a_target, mask))
    return {m: np.asarray(v) for m, v in out.items()}
