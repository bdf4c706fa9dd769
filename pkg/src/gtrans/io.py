"""Reading and writing matrices, edge lists, couplings and JSON documents."""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path

import numpy as np

from .errors import EmptyInputError, InputError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def write_matrix_csv(path, M) -> None:
    """Dense CSV, one row per line, no header, 17 significant digits."""
    np.savetxt(path, np.atleast_2d(np.asarray(M, dtype=float)), delimiter=",", fmt="%.17g")


def read_matrix_csv(path) -> np.ndarray:
    try:
        M = np.loadtxt(path, delimiter=",", ndmin=2)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}", path=str(path)) from exc
    except ValueError as exc:
        raise InputError(f"malformed matrix file {path}: {exc}", path=str(path)) from exc
    if M.size == 0:
        raise EmptyInputError(f"matrix file {path} is empty", path=str(path))
    return M


def parse_edge_list(text: str, nodes: int | None = None, source: str = "<string>"):
    """Build a symmetric, hollow adjacency matrix from edge-list text.

    Each non-blank line holds two 0-based node ids; ``#`` starts a comment.
    Duplicate and reversed edges collapse into one, self-loops are dropped.

    Returns
    -------
    A : ndarray
    info : dict
        Counts of ``edges``, ``self_loops`` and ``duplicates``.
    """
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if len(tokens) != 2:
            raise InputError(f"{source}:{lineno}: expected two node ids, got {len(tokens)} tokens",
                             path=source, line=lineno)
        try:
            i, j = int(tokens[0]), int(tokens[1])
        except ValueError:
            raise InputError(f"{source}:{lineno}: node ids must be integers", path=source, line=lineno)
        if i < 0 or j < 0:
            raise InputError(f"{source}:{lineno}: negative node id", path=source, line=lineno)
        pairs.append((i, j))
    if not pairs:
        raise EmptyInputError(f"{source}: edge list is empty", path=source)
    ids = np.array(pairs, dtype=np.int64)
    n = int(ids.max()) + 1
    if nodes is not None:
        if n > nodes:
            raise InputError(f"{source}: node id {n - 1} out of range for {nodes} nodes", path=source)
        n = int(nodes)
    loops = ids[:, 0] == ids[:, 1]
    if loops.any():
        log.warning("%s: dropped %d self-loop(s)", source, int(loops.sum()))
    ids = np.sort(ids[~loops], axis=1)
    unique = np.unique(ids, axis=0) if ids.size else ids
    A = np.zeros((n, n))
    A[unique[:, 0], unique[:, 1]] = 1.0
    A[unique[:, 1], unique[:, 0]] = 1.0
    info = {"nodes": n, "edges": int(len(unique)), "self_loops": int(loops.sum()),
            "duplicates": int(len(ids) - len(unique))}
    return A, info


def load_edge_list(path, nodes: int | None = None):
    """Read an edge-list file; see :func:`parse_edge_list`."""
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}", path=str(path)) from exc
    return parse_edge_list(text, nodes, str(path))


def write_edge_list(path, A) -> None:
    i, j = np.nonzero(np.triu(np.asarray(A), k=1))
    Path(path).write_text("".join(f"{a} {b}\n" for a, b in zip(i, j)))


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return "null"
        s = format(x, ".17g")
        return s if any(c in s for c in ".en") else s + ".0"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def load_config(path, allowed: set[str]) -> dict:
    """Read a versioned JSON config, rejecting unknown keys.

    The document must be an object with ``"schema": 1``.
    """
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}", path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}", path=str(path)) from exc
    if not isinstance(data, dict):
        raise InputError(f"{path}: config must be a JSON object", path=str(path))
    if data.get("schema") != SCHEMA_VERSION:
        raise InputError(f"{path}: expected \"schema\": {SCHEMA_VERSION}", path=str(path))
    unknown = sorted(set(data) - set(allowed) - {"schema"})
    if unknown:
        raise InputError(f"{path}: unknown keys {unknown}", path=str(path), keys=unknown)
    return {k: v for k, v in data.items() if k != "schema"}


def write_coupling(directory, coupling, stem: str = "coupling") -> None:
    """Coupling matrix as CSV plus a JSON sidecar with solver diagnostics."""
    directory = Path(directory)
    write_matrix_csv(directory / f"{stem}.csv", coupling.pi)
    write_json(directory / f"{stem}.json", coupling.sidecar())
