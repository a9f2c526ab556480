import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from .exceptions import UserException
from .model._hash import canonical_json
from .model.grid import SpatialGrid, DensityStack, ScalarStack, VectorStack
from .sde import PathEnsemble

MAGIC = b"HBL1"
STACK_KINDS = {"density": DensityStack, "scalar": ScalarStack, "vector": VectorStack}


def write_binary(path: Path, kind: str, payload: np.ndarray, metadata: Optional[dict] = None) -> Path:
    """HBL1 file: magic, uint32 LE header length, UTF-8 JSON header, LE float64 payload"""
    payload = np.ascontiguousarray(payload, dtype="<f8")
    header = {"kind": kind, "shape": list(payload.shape), **(metadata or {})}
    header_bytes = canonical_json(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.array([len(header_bytes)], dtype="<u4").tobytes())
        f.write(header_bytes)
        f.write(payload.tobytes())
    logger.debug(f"Wrote {kind} cache {path}")
    return Path(path)


def read_binary(path: Path) -> Tuple[dict, np.ndarray]:
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != MAGIC:
        raise UserException(f"{path} is not an HBL1 cache file")
    header_length = int(np.frombuffer(data[4:8], dtype="<u4")[0])
    header = json.loads(data[8 : 8 + header_length].decode("utf-8"))
    payload = np.frombuffer(data[8 + header_length :], dtype="<f8").reshape(header["shape"])
    return header, payload


def cache_path(directory: Path, name: str, config_hash: str) -> Path:
    return Path(directory) / f"{name}-{config_hash[:12]}.hbl"


def save_stack(stack, directory: Path, name: str, config_hash: str) -> Path:
    kind = {DensityStack: "density", ScalarStack: "scalar", VectorStack: "vector"}[type(stack)]
    metadata = {"grid": stack.grid.metadata(), "times": [float(t) for t in stack.times]}
    if isinstance(stack, DensityStack):
        metadata["beta"] = stack.beta
    return write_binary(cache_path(directory, name, config_hash), kind, stack.values, metadata)


def load_stack(path: Path):
    header, values = read_binary(path)
    cls = STACK_KINDS.get(header["kind"])
    if cls is None:
        raise UserException(f"{path} holds a {header['kind']} record, not a grid stack")
    grid = SpatialGrid(header["grid"]["bounds"], header["grid"]["npts"])
    extra = {"beta": header["beta"]} if cls is DensityStack else {}
    return cls(grid, np.array(header["times"]), np.array(values), **extra)


def save_ensemble(ensemble: PathEnsemble, directory: Path, name: str, config_hash: str) -> Path:
    metadata = {
        "times": [float(t) for t in ensemble.times],
        "indices": list(ensemble.indices),
        "direction": ensemble.direction,
        "seed": ensemble.seed,
        "sigma": ensemble.sigma,
    }
    return write_binary(cache_path(directory, name, config_hash), "ensemble", ensemble.paths, metadata)


def load_ensemble(path: Path) -> PathEnsemble:
    header, paths = read_binary(path)
    if header["kind"] != "ensemble":
        raise UserException(f"{path} holds a {header['kind']} record, not a path ensemble")
    return PathEnsemble(
        np.array(header["times"]),
        header["indices"],
        np.array(paths),
        header["direction"],
        header["seed"],
        header["sigma"],
    )


def _format(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, rows: Sequence[Dict], columns: Optional[List[str]] = None) -> Path:
    """CSV with a fixed column order and shortest round-trip float formatting"""
    rows = list(rows)
    if columns is None:
        columns = list(rows[0].keys()) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns])
    return Path(path)


def read_csv(path: Path) -> List[Dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def stack_rows(stack, every: int = 1) -> Iterable[Dict]:
    """Long format (t, x0[, x1], value) of every `every`-th time slice"""
    points = stack.grid.points().reshape(-1, stack.grid.dim)
    for k in range(0, len(stack.times), every):
        values = stack.values[k].reshape(len(points), -1)
        for point, value in zip(points, values):
            row = {"t": float(stack.times[k])}
            row.update({f"x{i}": float(c) for i, c in enumerate(point)})
            if value.shape[0] == 1:
                row["value"] = float(value[0])
            else:
                row.update({f"value{i}": float(v) for i, v in enumerate(value)})
            yield row
