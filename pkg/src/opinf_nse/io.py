"""File formats: binary matrix blobs, model manifests and snapshot sets.

Matrix blob layout (all little-endian)::

    offset 0   4 bytes  magic b"OIFS"
    offset 4   u16      format version (1)
    offset 6   u32      rows
    offset 10  u32      cols
    offset 14  f64[rows*cols]  entries, column-major

Files ending in ``.csv`` hold the same matrix as comma-separated rows.
Models and snapshot sets are JSON manifests that name one blob per matrix,
with paths relative to the manifest.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .linalg import expand_quadratic_operator
from .model import QuadDaeModel, ReducedQuadModel, SnapshotSet

__all__ = [
    "MAGIC",
    "VERSION",
    "FormatError",
    "write_matrix",
    "read_matrix",
    "save_model",
    "load_model",
    "save_reduced_model",
    "load_reduced_model",
    "save_snapshots",
    "ingest_snapshots",
    "write_csv",
]

MAGIC = b"OIFS"
VERSION = 1
_HEADER = struct.Struct("<4sHII")

MODEL_FORMAT = "opinf-nse/quad-dae"
REDUCED_FORMAT = "opinf-nse/reduced-quad"
SNAPSHOT_FORMAT = "opinf-nse/snapshots"


class FormatError(ValueError):
    """A file does not follow the expected layout."""


def write_matrix(path, M):
    """Write a matrix as an OIFS blob, or as CSV if ``path`` ends in .csv."""
    path = Path(path)
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise ValueError("only matrices can be written")
    if path.suffix.lower() == ".csv":
        write_csv(path, M)
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, M.shape[0], M.shape[1]))
        fh.write(M.astype("<f8").tobytes(order="F"))


def write_csv(path, M, header=None):
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in np.atleast_2d(M):
            fh.write(",".join(repr(float(x)) for x in row) + "\n")


def _read_csv(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(x) for x in line.split(",")])
            except ValueError:
                if lineno == 1 and not rows:
                    continue  # header line
                raise FormatError(f"{path}: unparsable value on line {lineno}") from None
    if not rows:
        return np.zeros((0, 0))
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise FormatError(f"{path}: rows have different lengths")
    return np.array(rows)


def read_matrix(path):
    """Read an OIFS blob (or CSV). Errors report the failing byte offset."""
    path = Path(path)
    if path.suffix.lower() == ".csv":
        return _read_csv(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(
            f"{path}: truncated header, file ends at byte offset {len(data)} "
            f"(header needs {_HEADER.size} bytes)")
    magic, version, rows, cols = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: malformed header, bad magic {magic!r} at byte offset 0")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at byte offset 4")
    need = _HEADER.size + 8 * rows * cols
    if len(data) < need:
        raise FormatError(
            f"{path}: truncated payload, file ends at byte offset {len(data)} "
            f"but {rows}x{cols} doubles need {need} bytes")
    if len(data) > need:
        raise FormatError(f"{path}: {len(data) - need} trailing bytes after byte offset {need}")
    flat = np.frombuffer(data, dtype="<f8", count=rows * cols, offset=_HEADER.size)
    return flat.reshape((rows, cols), order="F").astype(float)


def _load_manifest(path, expected):
    path = Path(path)
    try:
        meta = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON manifest: {exc}") from None
    if meta.get("format") != expected:
        raise FormatError(f"{path}: expected format {expected!r}, got {meta.get('format')!r}")
    if meta.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported manifest version {meta.get('version')!r}")
    return path.parent, meta


def _save_blobs(directory, prefix, mats):
    names = {}
    for key, M in mats.items():
        if M is None:
            continue
        fname = f"{prefix}{key}.oifs"
        write_matrix(directory / fname, M)
        names[key] = fname
    return names


def save_model(path, model):
    """Write a :class:`QuadDaeModel` manifest (``H`` in the full layout)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    prefix = path.stem + "."
    mats = {"E11": model.E11, "A11": model.A11, "A12": model.A12, "H": model.H,
            "B1": model.B1, "Bperp": model.Bperp, "Cv": model.Cv, "Cp": model.Cp}
    meta = {"format": MODEL_FORMAT, "version": VERSION,
            "n_v": model.n_v, "n_p": model.n_p, "m": model.m,
            "matrices": _save_blobs(path.parent, prefix, mats)}
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_model(path):
    directory, meta = _load_manifest(path, MODEL_FORMAT)
    mats = {k: read_matrix(directory / v) for k, v in meta["matrices"].items()}
    missing = {"E11", "A11", "A12", "H", "B1"} - set(mats)
    if missing:
        raise FormatError(f"{path}: manifest lacks {sorted(missing)}")
    model = QuadDaeModel(**mats)
    if (model.n_v, model.n_p, model.m) != (meta["n_v"], meta["n_p"], meta["m"]):
        raise FormatError(f"{path}: matrix dimensions disagree with the manifest")
    return model


def save_reduced_model(path, rom, extra=None):
    """Write a :class:`ReducedQuadModel`; ``H`` is stored in the full layout."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mats = {"A": rom.A, "H": rom.H_full, "B": rom.B, "c": rom.c, "N": rom.N,
            "K": rom.K, "F": rom.F}
    mats.update(extra or {})
    meta = {"format": REDUCED_FORMAT, "version": VERSION, "r": rom.r, "m": rom.m,
            "matrices": _save_blobs(path.parent, path.stem + ".", mats)}
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_reduced_model(path):
    from .linalg import compress_quadratic_operator

    directory, meta = _load_manifest(path, REDUCED_FORMAT)
    mats = {k: read_matrix(directory / v) for k, v in meta["matrices"].items()}
    if mats.get("H") is not None:
        mats["H"] = compress_quadratic_operator(mats["H"])
    keys = {"A", "H", "B", "c", "N", "K", "F"}
    return ReducedQuadModel(**{k: v for k, v in mats.items() if k in keys})


_BLOCKS = ("times", "V", "P", "U", "Uperp")


def save_snapshots(directory, snaps):
    """Write a snapshot set as ``snapshots.json`` plus one blob per block."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    mats = {"times": snaps.times.reshape(1, -1), "V": snaps.V, "P": snaps.P,
            "U": snaps.U, "Uperp": snaps.Uperp}
    meta = {"format": SNAPSHOT_FORMAT, "version": VERSION,
            "n_times": int(snaps.n_times),
            "blocks": _save_blobs(directory, "", mats)}
    (directory / "snapshots.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory / "snapshots.json"


def ingest_snapshots(paths):
    """Load and validate a snapshot set.

    Parameters
    ----------
    paths : path or mapping
        A snapshot directory, its ``snapshots.json`` manifest, or a mapping
        from block name (``times``, ``V``, ``P``, ``U``, ``Uperp``) to a blob
        or CSV file. ``times`` and ``V`` are required.

    Raises
    ------
    FormatError
        Malformed or truncated files.
    ValueError
        Inconsistent column counts.
    """
    if isinstance(paths, dict):
        files = {k: Path(v) for k, v in paths.items()}
        n_times = None
    else:
        p = Path(paths)
        if p.is_dir():
            p = p / "snapshots.json"
        elif p.suffix.lower() != ".json":
            raise FormatError(f"{p}: expected a snapshot directory or a JSON manifest")
        directory, meta = _load_manifest(p, SNAPSHOT_FORMAT)
        files = {k: directory / v for k, v in meta["blocks"].items()}
        n_times = meta.get("n_times")
    unknown = set(files) - set(_BLOCKS)
    if unknown:
        raise FormatError(f"unknown snapshot blocks {sorted(unknown)}")
    if "times" not in files or "V" not in files:
        raise FormatError("a snapshot set needs at least 'times' and 'V'")
    blocks = {k: read_matrix(f) for k, f in files.items()}
    times = blocks.pop("times")
    if min(times.shape) != 1:
        raise FormatError(f"times must be a single row or column, got shape {times.shape}")
    times = times.ravel()
    if n_times is not None and times.size != n_times:
        raise ValueError(
            f"dimension mismatch: manifest declares {n_times} times, file has {times.size}")
    for k, M in blocks.items():
        if M.shape[1] != times.size:
            raise ValueError(
                f"dimension mismatch: block {k} has {M.shape[1]} columns "
                f"for {times.size} time instances")
    return SnapshotSet(times=times, **blocks)
