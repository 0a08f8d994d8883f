"""
IO Service Module - File formats
Embedding files (CSV text or BEMB binary), barcode files (BBAR), threshold files,
label files and line-delimited optimisation traces.

Binary layouts are little-endian; barcode rows are padded to a byte and stored
most significant bit first.
"""
import json
import logging
import struct
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple, Union

import numpy as np
import pandas as pd

from services.barcode_service import BinaryMatrix, EmbeddingMatrix, LabelVector, ThresholdVector

logger = logging.getLogger(__name__)

EMBEDDING_MAGIC = b"BEMB"
BARCODE_MAGIC = b"BBAR"
FORMAT_VERSION = 1
FORMATS = ("auto", "text", "binary")
LABEL_COLUMN = "label"

# magic, version byte, n_samples, n_dims
HEADER = struct.Struct("<4sBII")

PathLike = Union[str, Path]


class FormatError(ValueError):
    """A file could not be parsed; the message names the file and the location."""


def sniff_format(path: PathLike) -> str:
    with open(path, "rb") as handle:
        return "binary" if handle.read(4) == EMBEDDING_MAGIC else "text"


def _read_header(path: PathLike, blob: bytes, magic: bytes) -> Tuple[int, int]:
    if len(blob) < HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} of {HEADER.size} bytes).")
    found, version, n_samples, n_dims = HEADER.unpack_from(blob)
    if found != magic:
        raise FormatError(f"{path}: bad magic {found!r} at byte 0, expected {magic!r}.")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version} at byte 4.")
    if n_samples < 1 or n_dims < 1:
        raise FormatError(f"{path}: empty matrix ({n_samples} x {n_dims}).")
    return n_samples, n_dims


def _warn_range(path: PathLike, matrix: EmbeddingMatrix) -> None:
    low, high = matrix.value_range()
    logger.info("Loaded %s: %d samples x %d dims, range [%g, %g].", path, matrix.n_samples, matrix.n_dims, low, high)
    if low < -1.0 or high > 1.0:
        logger.warning("%s: values span [%g, %g], outside the default [-1, 1] search bounds.", path, low, high)


def _load_text_embeddings(path: PathLike) -> Tuple[EmbeddingMatrix, Optional[LabelVector]]:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise FormatError(f"{path}: empty file.") from None
    except pd.errors.ParserError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if frame.empty:
        raise FormatError(f"{path}: no samples after the header row.")

    has_labels = str(frame.columns[-1]).strip().lower() == LABEL_COLUMN
    raw = frame.to_numpy(dtype=object)
    missing = np.argwhere(pd.isna(raw) | (raw == ""))
    if missing.size:
        row, col = (int(v) for v in missing[0])
        raise FormatError(f"{path}: line {row + 2} is ragged or has an empty cell at column {col}.")

    numeric = frame.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.argwhere(~np.isfinite(numeric))
    if bad.size:
        row, col = (int(v) for v in bad[0])
        cell = str(raw[row, col]).strip()
        kind = "non-finite value" if cell.lower().lstrip("+-") in {"nan", "inf", "infinity"} else "non-numeric cell"
        raise FormatError(f"{path}: {kind} {cell!r} at line {row + 2}, column {col}.")

    values = numeric[:, :-1] if has_labels else numeric
    if values.shape[1] == 0:
        raise FormatError(f"{path}: no feature columns.")
    labels = None
    if has_labels:
        column = numeric[:, -1]
        if not np.all(column == np.round(column)):
            row = int(np.flatnonzero(column != np.round(column))[0])
            raise FormatError(f"{path}: non-integer label at line {row + 2}.")
        labels = LabelVector(column.astype(np.int64))
    return EmbeddingMatrix(values), labels


def _load_binary_embeddings(path: PathLike) -> EmbeddingMatrix:
    blob = Path(path).read_bytes()
    n_samples, n_dims = _read_header(path, blob, EMBEDDING_MAGIC)
    expected = HEADER.size + 4 * n_samples * n_dims
    if len(blob) != expected:
        raise FormatError(f"{path}: payload ends at byte {len(blob)}, expected {expected}.")
    values = np.frombuffer(blob, dtype="<f4", offset=HEADER.size).reshape(n_samples, n_dims)
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        row, col = (int(v) for v in bad[0])
        offset = HEADER.size + 4 * (row * n_dims + col)
        raise FormatError(f"{path}: non-finite value at row {row}, column {col} (byte {offset}).")
    return EmbeddingMatrix(values)


def load_embeddings(path: PathLike, fmt: str = "auto") -> Tuple[EmbeddingMatrix, Optional[LabelVector]]:
    """
    Read an embedding file.

    Args:
        path: File to read.
        fmt: "text", "binary" or "auto" (sniffed from the magic bytes).

    Returns:
        tuple: (EmbeddingMatrix, LabelVector or None). Only text files carry labels.

    Raises:
        FormatError: Parse failure, NaN/Inf, truncated or empty file (location in the message).
    """
    if fmt not in FORMATS:
        raise ValueError(f"Unknown format '{fmt}', expected one of {FORMATS}.")
    if fmt == "auto":
        fmt = sniff_format(path)
    try:
        if fmt == "binary":
            matrix, labels = _load_binary_embeddings(path), None
        else:
            matrix, labels = _load_text_embeddings(path)
    except FormatError:
        raise
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    _warn_range(path, matrix)
    return matrix, labels


def save_embeddings(
    matrix: EmbeddingMatrix,
    path: PathLike,
    fmt: str = "text",
    labels: Optional[LabelVector] = None,
) -> None:
    """Write embeddings; text files may carry a trailing label column."""
    if fmt == "binary":
        header = HEADER.pack(EMBEDDING_MAGIC, FORMAT_VERSION, matrix.n_samples, matrix.n_dims)
        Path(path).write_bytes(header + matrix.values.astype("<f4").tobytes())
        return
    if fmt != "text":
        raise ValueError(f"Unknown output format '{fmt}'.")
    frame = pd.DataFrame(matrix.values, columns=[f"f{i}" for i in range(matrix.n_dims)])
    if labels is not None:
        frame[LABEL_COLUMN] = labels.labels
    # %.9g round-trips 32-bit reals exactly
    frame.to_csv(path, index=False, float_format="%.9g", lineterminator="\n")


def load_labels(path: PathLike) -> LabelVector:
    """One integer class id per line; '#' lines are comments."""
    try:
        values = np.loadtxt(path, comments="#", dtype=np.float64, ndmin=1)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    try:
        return LabelVector(values)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None


def save_labels(labels: LabelVector, path: PathLike) -> None:
    np.savetxt(path, labels.labels, fmt="%d")


def save_barcodes(binary: BinaryMatrix, path: PathLike) -> None:
    """Write a BBAR file: header, then row-major MSB-first rows padded to whole bytes."""
    rows = np.packbits(binary.to_bits(), axis=1, bitorder="big")
    header = HEADER.pack(BARCODE_MAGIC, FORMAT_VERSION, binary.n_samples, binary.n_dims)
    Path(path).write_bytes(header + rows.tobytes())


def load_barcodes(path: PathLike) -> BinaryMatrix:
    blob = Path(path).read_bytes()
    n_samples, n_dims = _read_header(path, blob, BARCODE_MAGIC)
    row_bytes = (n_dims + 7) // 8
    expected = HEADER.size + n_samples * row_bytes
    if len(blob) < expected:
        raise FormatError(f"{path}: truncated payload, ends at byte {len(blob)} of {expected}.")
    if len(blob) > expected:
        raise FormatError(f"{path}: {len(blob) - expected} trailing byte(s) after offset {expected}.")
    rows = np.frombuffer(blob, dtype=np.uint8, offset=HEADER.size).reshape(n_samples, row_bytes)
    return BinaryMatrix.from_bits(np.unpackbits(rows, axis=1, count=n_dims, bitorder="big"))


def barcode_file_size(n_samples: int, n_dims: int) -> int:
    return HEADER.size + n_samples * ((n_dims + 7) // 8)


def save_thresholds(thresholds: ThresholdVector, path: PathLike, header: Optional[Dict[str, object]] = None) -> None:
    """One cut-point per line (17 significant digits) after '#'-prefixed header lines."""
    lines = [f"# {key}: {value}" for key, value in (header or {}).items()]
    lines.extend(f"{value:.17g}" for value in thresholds.cutpoints)
    Path(path).write_text("\n".join(lines) + "\n")


def load_thresholds(path: PathLike) -> ThresholdVector:
    try:
        values = np.loadtxt(path, comments="#", dtype=np.float64, ndmin=1)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if values.size == 0:
        raise FormatError(f"{path}: no cut-points.")
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise FormatError(f"{path}: non-finite cut-point number {int(bad[0]) + 1}.")
    return ThresholdVector(values)


def write_records(records: Iterable[Dict], path: PathLike) -> None:
    """Line-delimited JSON, keys sorted so identical runs give identical files."""
    with open(path, "w") as handle:
        for record in records:
            handle.write(json.dumps(record, sort_keys=True) + "\n")
