"""Named real-world graphs.

Only the karate club graph ships with the package. Other graphs are looked
up as ``<name>.txt`` edge lists in ``data_dir`` or in the directory named by
the ``GTRANS_DATA_DIR`` environment variable.
"""

from __future__ import annotations

import os
from importlib import resources
from pathlib import Path

from .errors import InputError
from .io import load_edge_list, parse_edge_list

BUNDLED = {"karate": "karate.txt"}
DATA_DIR_ENV = "GTRANS_DATA_DIR"


def find_dataset(name: str, data_dir=None) -> Path | None:
    for root in (data_dir, os.environ.get(DATA_DIR_ENV)):
        if root:
            path = Path(root) / f"{name}.txt"
            if path.is_file():
                return path
    return None


def load_dataset(name: str, data_dir=None):
    """Adjacency matrix and edge-list info for a named graph."""
    path = find_dataset(name, data_dir)
    if path is not None:
        return load_edge_list(path)
    if name in BUNDLED:
        text = resources.files(__package__).joinpath("data", BUNDLED[name]).read_text()
        return parse_edge_list(text, source=name)
    raise InputError(
        f"dataset {name!r} not found; place {name}.txt in ${DATA_DIR_ENV} or pass a data directory",
        dataset=name,
    )


def available(data_dir=None) -> list[str]:
    names = set(BUNDLED)
    for root in (data_dir, os.environ.get(DATA_DIR_ENV)):
        if root and Path(root).is_dir():
            names.update(p.stem for p in Path(root).glob("*.txt"))
    return sorted(names)
