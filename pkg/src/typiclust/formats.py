"""Binary and CSV readers/writers for embeddings, labels and class scores.

Binary layouts (all little-endian):

* ``EMB1``: magic, u32 N, u32 d, N*d float32 row-major
* ``LBL1``: magic, u32 N, N int32 (-1 = unknown)
* ``SCR1``: magic, u32 N, u32 C, N*C float32 row-major

Files ending in ``.csv`` are read as CSV (an optional non-numeric header
line is skipped); everything else must be binary.
"""

from __future__ import annotations

import csv
import io
import struct
import warnings
from pathlib import Path
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import EmbeddingSet, l2_normalize, validate_embedding_set
from .errors import (
    BadMagic,
    CountMismatch,
    FormatError,
    LabelOutOfRange,
    NonFiniteEntry,
    NonStochasticRow,
    TrailingBytes,
    TruncatedPayload,
    ValidationError,
)

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
SCR_MAGIC = b"SCR1"
SCORE_ROW_TOL = 1e-4


class ScoresRenormalizedWarning(UserWarning):
    pass


def _is_csv(path: str | Path) -> bool:
    return str(path).lower().endswith(".csv")


def _unpack(blob: bytes, magic: bytes, n_dims: int, dtype: str, what: str) -> tuple[tuple[int, ...], NDArray]:
    if blob[:4] != magic:
        raise BadMagic(f"{what}: expected magic {magic!r}, found {blob[:4]!r}", found=blob[:4].hex())
    head = 4 + 4 * n_dims
    if len(blob) < head:
        raise TruncatedPayload(f"{what}: header needs {head} bytes, file has {len(blob)}")
    dims = struct.unpack(f"<{n_dims}I", blob[4:head])
    need = head + 4 * int(np.prod(dims, dtype=np.int64))
    if len(blob) < need:
        raise TruncatedPayload(f"{what}: header promises {need} bytes, file has {len(blob)}",
                               expected=need, actual=len(blob))
    if len(blob) > need:
        raise TrailingBytes(f"{what}: {len(blob) - need} bytes after the payload",
                            expected=need, actual=len(blob))
    arr = np.frombuffer(blob, dtype=dtype, offset=head).reshape(dims)
    return dims, arr


def read_csv_rows(path: str | Path, what: str) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if rows:
        try:
            [float(v) for v in rows[0]]
        except ValueError:
            rows = rows[1:]
    if not rows:
        raise FormatError(f"{what}: no data rows")
    width = len(rows[0])
    for i, r in enumerate(rows):
        if len(r) != width:
            raise FormatError(f"{what}: row {i} has {len(r)} columns, expected {width}", row=i)
    return rows


# --------------------------------------------------------------------------
# embeddings
# --------------------------------------------------------------------------

def encode_embeddings(matrix: ArrayLike) -> bytes:
    x = np.asarray(matrix, dtype="<f4")
    if x.ndim != 2:
        raise ValidationError("embeddings must be 2-D")
    return EMB_MAGIC + struct.pack("<II", *x.shape) + np.ascontiguousarray(x).tobytes()


def decode_embeddings(blob: bytes) -> NDArray[np.float32]:
    _, arr = _unpack(blob, EMB_MAGIC, 2, "<f4", "EMB1")
    return arr.copy()


def write_embeddings(path: str | Path, matrix: ArrayLike) -> None:
    if _is_csv(path):
        x = np.asarray(matrix, dtype=np.float64)
        np.savetxt(path, x, delimiter=",", fmt="%.9g")
    else:
        Path(path).write_bytes(encode_embeddings(matrix))


def read_embeddings(path: str | Path) -> NDArray:
    """Raw matrix (float32 from binary files, float64 from CSV); rejects
    non-finite entries."""
    if _is_csv(path):
        rows = read_csv_rows(path, "embeddings")
        try:
            x = np.array(rows, dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"embeddings: non-numeric entry ({exc})") from None
    else:
        x = decode_embeddings(Path(path).read_bytes())
    bad = ~np.isfinite(x)
    if bad.any():
        r, c = (int(v) for v in np.argwhere(bad)[0])
        raise NonFiniteEntry(r, c)
    return x


# --------------------------------------------------------------------------
# labels
# --------------------------------------------------------------------------

def encode_labels(labels: ArrayLike) -> bytes:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise ValidationError("labels must be 1-D")
    if y.size and (y.min() < np.iinfo(np.int32).min or y.max() > np.iinfo(np.int32).max):
        raise ValidationError("labels do not fit in int32")
    return LBL_MAGIC + struct.pack("<I", y.size) + y.astype("<i4").tobytes()


def decode_labels(blob: bytes) -> NDArray[np.int32]:
    _, arr = _unpack(blob, LBL_MAGIC, 1, "<i4", "LBL1")
    return arr.copy()


def write_labels(path: str | Path, labels: ArrayLike) -> None:
    if _is_csv(path):
        np.savetxt(path, np.asarray(labels, dtype=np.int64), fmt="%d")
    else:
        Path(path).write_bytes(encode_labels(labels))


def read_labels(path: str | Path, n: Optional[int] = None, n_classes: Optional[int] = None) -> NDArray:
    """Labels in ``[-1, n_classes)``; ``n`` is the expected count."""
    if _is_csv(path):
        rows = read_csv_rows(path, "labels")
        if len(rows[0]) != 1:
            raise FormatError("labels: expected a single column")
        try:
            y = np.array([int(r[0]) for r in rows], dtype=np.int64)
        except ValueError as exc:
            raise FormatError(f"labels: non-integer entry ({exc})") from None
    else:
        y = decode_labels(Path(path).read_bytes())
    if n is not None and y.size != n:
        raise CountMismatch(f"label file has {y.size} entries, embeddings have {n}",
                            expected=n, actual=int(y.size))
    out = y < -1
    if n_classes is not None:
        out |= y >= n_classes
    if out.any():
        row = int(np.argmax(out))
        raise LabelOutOfRange(row, int(y[row]))
    return y


# --------------------------------------------------------------------------
# scores
# --------------------------------------------------------------------------

def encode_scores(probs: ArrayLike) -> bytes:
    p = np.asarray(probs, dtype="<f4")
    if p.ndim != 2:
        raise ValidationError("scores must be 2-D")
    return SCR_MAGIC + struct.pack("<II", *p.shape) + np.ascontiguousarray(p).tobytes()


def decode_scores(blob: bytes) -> NDArray[np.float32]:
    _, arr = _unpack(blob, SCR_MAGIC, 2, "<f4", "SCR1")
    return arr.copy()


def write_scores(path: str | Path, probs: ArrayLike) -> None:
    if _is_csv(path):
        np.savetxt(path, np.asarray(probs, dtype=np.float64), delimiter=",", fmt="%.9g")
    else:
        Path(path).write_bytes(encode_scores(probs))


def check_stochastic(p: NDArray) -> NDArray[np.float64]:
    """Renormalize rows within ``1e-4`` of summing to one; reject the rest."""
    p = np.asarray(p, dtype=np.float64)
    bad = ~np.isfinite(p)
    if bad.any():
        r, c = (int(v) for v in np.argwhere(bad)[0])
        raise NonFiniteEntry(r, c)
    if (p < 0).any():
        row = int(np.argwhere(p < 0)[0][0])
        raise NonStochasticRow(row, float(p[row].sum()))
    totals = p.sum(1)
    off = np.abs(totals - 1.0)
    if (off > SCORE_ROW_TOL).any():
        row = int(np.argmax(off > SCORE_ROW_TOL))
        raise NonStochasticRow(row, float(totals[row]))
    if (off > 0).any():
        warnings.warn(f"renormalized {int((off > 0).sum())} score rows", ScoresRenormalizedWarning,
                      stacklevel=3)
        p = p / totals[:, None]
    return p


def read_scores(path: str | Path, n: Optional[int] = None) -> NDArray[np.float64]:
    if _is_csv(path):
        rows = read_csv_rows(path, "scores")
        try:
            p = np.array(rows, dtype=np.float64)
        except ValueError as exc:
            raise FormatError(f"scores: non-numeric entry ({exc})") from None
    else:
        p = decode_scores(Path(path).read_bytes())
    if n is not None and p.shape[0] != n:
        raise CountMismatch(f"score file has {p.shape[0]} rows, embeddings have {n}",
                            expected=n, actual=int(p.shape[0]))
    return check_stochastic(p)


# --------------------------------------------------------------------------
# convenience
# --------------------------------------------------------------------------

def load_embedding_set(emb_path: str | Path, labels_path: Optional[str | Path] = None,
                       n_classes: Optional[int] = None, normalize: bool = True) -> EmbeddingSet:
    x = read_embeddings(emb_path)
    y = None
    if labels_path is not None:
        y = read_labels(labels_path, n=x.shape[0], n_classes=n_classes)
    emb = validate_embedding_set(x, y, n_classes=n_classes)
    return l2_normalize(emb) if normalize else emb


def write_csv(path: str | Path | None, header: list[str], rows, comments: list[str] = ()) -> str:
    """Render rows as CSV (``#`` comment lines last); write to ``path`` if given."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    for c in comments:
        buf.write(f"# {c}\n")
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)
