"""On-disk formats and run manifests.

Binary files share a 16-byte little-endian header: 4-byte magic, uint64
row count, uint32 row width.  Payloads:

* ``SAM1`` matrix, ``n x dim`` float64, row-major
* ``SAE1`` edge list, ``n`` records of (int64 source, int64 target, float64 similarity), dim = 3
* ``SAC1`` condensed upper triangle, ``n`` float32 values, dim = 1
* ``SAX1`` expression table, ``n`` records of (uint64 hash, uint32 refs, uint32 nodes),
  dim = 3, followed by the canonical texts, utf-8, one per line
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

HEADER = struct.Struct("<4sQI")
MATRIX_MAGIC = b"SAM1"
EDGES_MAGIC = b"SAE1"
CONDENSED_MAGIC = b"SAC1"
EXPRESSIONS_MAGIC = b"SAX1"

EDGE_DTYPE = np.dtype([("source", "<i8"), ("target", "<i8"), ("similarity", "<f8")])
EXPR_DTYPE = np.dtype([("hash", "<u8"), ("refs", "<u4"), ("nodes", "<u4")])


class ArtifactError(RuntimeError):
    pass


def _write_header(fh, magic, n, dim):
    fh.write(HEADER.pack(magic, n, dim))


def _read_header(fh, magic, path):
    raw = fh.read(HEADER.size)
    if len(raw) != HEADER.size:
        raise ArtifactError(f"{path}: truncated header")
    got, n, dim = HEADER.unpack(raw)
    if got != magic:
        raise ArtifactError(f"{path}: bad magic {got!r}, expected {magic!r}")
    return n, dim


def write_matrix(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f8")
    n, dim = values.shape
    with open(path, "wb") as fh:
        _write_header(fh, MATRIX_MAGIC, n, dim)
        fh.write(values.tobytes())


def read_matrix(path, mmap: bool = False) -> np.ndarray:
    with open(path, "rb") as fh:
        n, dim = _read_header(fh, MATRIX_MAGIC, path)
    expected = HEADER.size + 8 * n * dim
    if os.path.getsize(path) != expected:
        raise ArtifactError(f"{path}: size {os.path.getsize(path)} != {expected}")
    if mmap:
        return np.memmap(path, dtype="<f8", mode="r", offset=HEADER.size, shape=(n, dim))
    return np.fromfile(path, dtype="<f8", offset=HEADER.size).reshape(n, dim)


class MatrixWriter:
    """Stream rows into a matrix file whose row count is patched on close."""

    def __init__(self, path, dim: int):
        self.path, self.dim, self.n = path, dim, 0
        self.fh = open(path, "wb")
        _write_header(self.fh, MATRIX_MAGIC, 0, dim)

    def write(self, rows: np.ndarray):
        rows = np.ascontiguousarray(rows, dtype="<f8")
        if rows.ndim != 2 or rows.shape[1] != self.dim:
            raise ValueError("row width mismatch")
        self.fh.write(rows.tobytes())
        self.n += len(rows)

    def close(self):
        self.fh.seek(0)
        _write_header(self.fh, MATRIX_MAGIC, self.n, self.dim)
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_edges(path, source, target, similarity) -> None:
    rec = np.empty(len(source), dtype=EDGE_DTYPE)
    rec["source"], rec["target"], rec["similarity"] = source, target, similarity
    with open(path, "wb") as fh:
        _write_header(fh, EDGES_MAGIC, len(rec), 3)
        fh.write(rec.tobytes())


def read_edges(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, _ = _read_header(fh, EDGES_MAGIC, path)
    rec = np.fromfile(path, dtype=EDGE_DTYPE, offset=HEADER.size)
    if len(rec) != n:
        raise ArtifactError(f"{path}: {len(rec)} edges, header says {n}")
    return rec


def write_condensed(path, values: np.ndarray) -> None:
    values = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as fh:
        _write_header(fh, CONDENSED_MAGIC, len(values), 1)
        fh.write(values.tobytes())


def read_condensed(path) -> np.ndarray:
    with open(path, "rb") as fh:
        n, _ = _read_header(fh, CONDENSED_MAGIC, path)
    vals = np.fromfile(path, dtype="<f4", offset=HEADER.size)
    if len(vals) != n:
        raise ArtifactError(f"{path}: {len(vals)} values, header says {n}")
    return vals


def write_expressions_bin(path, hashes, refs, nodes, texts) -> None:
    rec = np.empty(len(texts), dtype=EXPR_DTYPE)
    rec["hash"], rec["refs"], rec["nodes"] = hashes, refs, nodes
    with open(path, "wb") as fh:
        _write_header(fh, EXPRESSIONS_MAGIC, len(rec), 3)
        fh.write(rec.tobytes())
        fh.write("\n".join(texts).encode())


def read_expressions_bin(path):
    with open(path, "rb") as fh:
        n, _ = _read_header(fh, EXPRESSIONS_MAGIC, path)
        rec = np.frombuffer(fh.read(n * EXPR_DTYPE.itemsize), dtype=EXPR_DTYPE)
        texts = fh.read().decode().split("\n") if n else []
    if len(texts) != n:
        raise ArtifactError(f"{path}: {len(texts)} texts for {n} records")
    return rec, texts


# --------------------------------------------------------------------------
# csv

def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_csv(path) -> tuple[list, list]:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        return header, list(r)


def fmt(x: float) -> str:
    """Shortest repr that round-trips a float64."""
    return repr(float(x))


# --------------------------------------------------------------------------
# manifests

def sha256_file(path, chunk: int = 1 << 20) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        while True:
            block = fh.read(chunk)
            if not block:
                break
            h.update(block)
    return h.hexdigest()


def _now():
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


class Manifest:
    """Run metadata for one command: parameters plus input/output digests."""

    def __init__(self, command: str, params: dict, out_dir, version: str):
        self.out_dir = Path(out_dir)
        self.data = {
            "tool": "symatlas", "version": version, "command": command,
            "parameters": params, "seed": params.get("seed"),
            "inputs": {}, "outputs": {}, "started": _now(), "finished": None,
            "notes": {},
        }

    def add_input(self, name: str, path, digest: str) -> None:
        self.data["inputs"][name] = {"path": str(Path(path).name), "sha256": digest}

    def add_output(self, path) -> None:
        p = Path(path)
        self.data["outputs"][p.name] = {"sha256": sha256_file(p), "bytes": p.stat().st_size}

    def note(self, key, value) -> None:
        self.data["notes"][key] = value

    def write(self) -> Path:
        self.data["finished"] = _now()
        path = manifest_path(self.out_dir, self.data["command"])
        path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")
        return path


def manifest_path(out_dir, command: str) -> Path:
    return Path(out_dir) / f"{command}.manifest.json"


def load_manifest(out_dir, command: str) -> dict:
    path = manifest_path(out_dir, command)
    if not path.exists():
        raise ArtifactError(f"missing {path.name}; run `{command}` first")
    return json.loads(path.read_text())


def verify_upstream(out_dir, command: str, filename: str) -> tuple[Path, str]:
    """Check ``filename`` against the digest its producing command recorded.

    Returns ``(path, digest)``; raises with the expected digest on mismatch.
    """
    man = load_manifest(out_dir, command)
    entry = man["outputs"].get(filename)
    if entry is None:
        raise ArtifactError(f"{command} manifest does not list {filename}")
    path = Path(out_dir) / filename
    if not path.exists():
        raise ArtifactError(f"missing {filename} (expected sha256 {entry['sha256']})")
    got = sha256_file(path)
    if got != entry["sha256"]:
        raise ArtifactError(f"{filename} is corrupt or stale: sha256 {got}, "
                            f"expected {entry['sha256']}")
    return path, got
