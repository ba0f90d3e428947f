"""On-disk formats: binary embedding files, label/confidence CSVs, JSON reports.

The `.lcf` embedding format is endianness-pinned (little-endian) so artifacts
transfer across machines:

    offset  size  field
    0       4     magic, the ASCII bytes "LCF1"
    4       8     n, unsigned 64-bit row count
    12      4     d, unsigned 32-bit column count
    16      1     dtype code (0 = IEEE 32-bit float, little-endian)
    17      n*d*4 payload, row-major

Values are stored as 32-bit floats and widened to float64 on load; writing
is therefore bit-exact only for float32-representable inputs.
"""

import json
import struct

import numpy as np

from .core import FeatureMatrix
from .errors import FormatError, InputError

MAGIC = b"LCF1"
DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sQIB")
HEADER_SIZE = _HEADER.size  # 17 bytes


def write_embeddings(path, features: FeatureMatrix) -> None:
    """Write a feature matrix to `path` in the .lcf layout."""
    if not isinstance(features, FeatureMatrix):
        features = FeatureMatrix(features)
    header = _HEADER.pack(MAGIC, features.n, features.d, DTYPE_FLOAT32)
    payload = np.ascontiguousarray(features.data, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload)


def read_embeddings(path) -> FeatureMatrix:
    """Read a .lcf file back into a FeatureMatrix (widened to float64)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < HEADER_SIZE:
        raise FormatError(
            f"{path}: truncated header at byte {len(blob)}: "
            f"expected {HEADER_SIZE} header bytes, got {len(blob)}"
        )
    magic, n, d, dtype = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at byte 0, expected {MAGIC!r}")
    if dtype != DTYPE_FLOAT32:
        raise FormatError(f"{path}: unknown dtype code {dtype} at byte 16")
    if n < 1 or d < 1:
        raise FormatError(f"{path}: header declares empty matrix n={n}, d={d}")
    expected = HEADER_SIZE + n * d * 4
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length mismatch at byte {HEADER_SIZE}: "
            f"expected {expected} bytes total, got {len(blob)}"
        )
    raw = np.frombuffer(blob, dtype="<f4", offset=HEADER_SIZE)
    try:
        return FeatureMatrix(raw.astype(np.float64).reshape(n, d))
    except InputError as exc:
        raise FormatError(f"{path}: invalid embedding payload: {exc}") from exc


def read_labels_csv(path) -> np.ndarray:
    """Parse a single-column CSV of nonnegative integer labels.

    An optional first line equal to "label" is treated as a header.
    """
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            if lineno == 1 and token.lower() == "label":
                continue
            try:
                value = int(token)
            except ValueError:
                raise FormatError(f"{path}: parse error at line {lineno}: not an integer: {token!r}") from None
            if value < 0:
                raise FormatError(f"{path}: parse error at line {lineno}: negative label {value}")
            labels.append(value)
    if not labels:
        raise FormatError(f"{path}: no labels found")
    return np.asarray(labels, dtype=np.int64)


def write_labels_csv(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.int64)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label\n")
        for value in labels:
            fh.write(f"{int(value)}\n")


def write_confidence_csv(path, values) -> None:
    """Write per-sample confidences as index,confidence rows (human-diffable)."""
    values = np.asarray(getattr(values, "values", values), dtype=np.float64).ravel()
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("index,confidence\n")
        for i, value in enumerate(values):
            fh.write(f"{i},{value:.17g}\n")


def read_confidence_csv(path) -> np.ndarray:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            if lineno == 1 and token.lower() == "index,confidence":
                continue
            parts = token.split(",")
            if len(parts) != 2:
                raise FormatError(f"{path}: parse error at line {lineno}: expected index,confidence")
            try:
                values.append(float(parts[1]))
            except ValueError:
                raise FormatError(
                    f"{path}: parse error at line {lineno}: not a number: {parts[1]!r}"
                ) from None
    if not values:
        raise FormatError(f"{path}: no confidence values found")
    return np.asarray(values, dtype=np.float64)


def read_transition_csv(path) -> np.ndarray:
    """Load a C x C label transition matrix from CSV (row-stochasticity is
    validated by the consumer)."""
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            parts = token.split(",")
            try:
                rows.append([float(p) for p in parts])
            except ValueError:
                raise FormatError(f"{path}: parse error at line {lineno}: non-numeric entry") from None
            if len(rows) > 1 and len(rows[-1]) != len(rows[0]):
                raise FormatError(
                    f"{path}: parse error at line {lineno}: expected {len(rows[0])} columns, "
                    f"got {len(rows[-1])}"
                )
    if not rows:
        raise FormatError(f"{path}: no matrix rows found")
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.shape[0] != matrix.shape[1]:
        raise FormatError(f"{path}: transition matrix must be square, got {matrix.shape}")
    return matrix


_REPORT_KEYS = ("config", "per_epoch", "final", "timings")


def write_report(path, report: dict) -> None:
    """Serialize a run summary to JSON.

    The report must carry the keys config, per_epoch, final and timings;
    timing values are seconds and must be nonnegative.
    """
    missing = [key for key in _REPORT_KEYS if key not in report]
    if missing:
        raise InputError(f"report is missing keys: {missing}")
    if not isinstance(report["per_epoch"], list):
        raise InputError("report per_epoch must be a list")
    timings = report["timings"]
    if not isinstance(timings, dict):
        raise InputError("report timings must be a mapping of name -> seconds")
    for name, seconds in timings.items():
        if not isinstance(seconds, (int, float)) or seconds < 0:
            raise InputError(f"timing {name!r} must be a nonnegative number, got {seconds!r}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
