"""
Artifact writers: CSV fields, sorted JSON reports and file checksums
"""
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Sequence, Union

import numpy as np

from src.errors import DataError, GridError
from src.schemas import FileRecord, SpaceGrid, TimeGrid

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

CSV_FORMAT = "%.17g"
# Grid nodes read back from CSV must match the run grid to this tolerance
NODE_TOLERANCE = 1e-12


# ============================================================================
# Writers
# ============================================================================
def write_csv(path: PathLike, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
    """Equal-length columns as CSV with a header row and full-precision values"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([np.asarray(c, dtype=float).ravel() for c in columns])
    np.savetxt(path, table, fmt=CSV_FORMAT, delimiter=",", header=",".join(header), comments="")
    logger.debug(f"[ARTIFACT] wrote {path} ({table.shape[0]} rows)")
    return path


def write_grid_field(path: PathLike, time_grid: TimeGrid, space_grid: SpaceGrid,
                     values: np.ndarray, name: str = "value") -> Path:
    """(nt, nx) field in long format t,x,<name> with x varying fastest"""
    values = np.asarray(values, dtype=float)
    if values.shape != (time_grid.nt, space_grid.nx):
        raise GridError(f"field has shape {values.shape}, grid is {(time_grid.nt, space_grid.nx)}")
    t, x = np.meshgrid(time_grid.nodes, space_grid.nodes, indexing="ij")
    return write_csv(path, ["t", "x", name], [t, x, values])


def write_volume_field(path: PathLike, time_grid: TimeGrid, space_grid: SpaceGrid,
                       y: np.ndarray, values: np.ndarray, name: str = "u") -> Path:
    """(nt, nx, ny) field in long format t,x,y,<name>"""
    t, x, yy = np.meshgrid(time_grid.nodes, space_grid.nodes, y, indexing="ij")
    return write_csv(path, ["t", "x", "y", name], [t, x, yy, values])


def write_json(path: PathLike, payload: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2, allow_nan=True)
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug(f"[ARTIFACT] wrote {path}")
    return path


def sha256_file(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 16), b""):
            digest.update(block)
    return digest.hexdigest()


def file_record(path: PathLike, root: PathLike) -> FileRecord:
    path = Path(path)
    return FileRecord(
        path=path.relative_to(root).as_posix(),
        sha256=sha256_file(path),
        bytes=path.stat().st_size,
    )


# ============================================================================
# Readers
# ============================================================================
def read_psi_csv(path: PathLike, time_grid: TimeGrid, space_grid: SpaceGrid) -> np.ndarray:
    """psi grid from a t,x,psi file as written by ``synthesize``; nodes must match the run grid"""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"psi file {path} does not exist")
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline().strip().split(",")
    if header != ["t", "x", "psi"]:
        raise DataError(f"psi file {path} must have header t,x,psi, found {','.join(header)}")

    try:
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as e:
        raise DataError(f"malformed psi file {path}: {e}") from e
    nt, nx = time_grid.nt, space_grid.nx
    if table.shape != (nt * nx, 3):
        raise GridError(f"psi file {path} holds {table.shape[0]} rows, run grid needs {nt * nx}")
    if not np.all(np.isfinite(table)):
        raise DataError(f"psi file {path} has non-finite values")

    t = table[:, 0].reshape(nt, nx)
    x = table[:, 1].reshape(nt, nx)
    if not np.allclose(t, time_grid.nodes[:, None], rtol=0.0, atol=NODE_TOLERANCE * max(1.0, time_grid.T)):
        raise GridError(f"time nodes in {path} do not match T={time_grid.T}, nt={nt}")
    if not np.allclose(x, space_grid.nodes[None, :], rtol=0.0, atol=NODE_TOLERANCE):
        raise GridError(f"space nodes in {path} do not match nx={nx}")
    logger.info(f"[ARTIFACT] read psi grid ({nt}, {nx}) from {path}")
    return table[:, 2].reshape(nt, nx)
