"""Loading per-context data, sample covariances and global PCA reduction.

Supported inputs are delimited text (comma or tab, auto-detected from the
first line, optional header row, UTF-8):

* per-context-files: a directory with one file per context, context id =
  file stem, contexts ordered by lexicographic file name;
* long-table: a single file whose first column holds the context id
  (or the column named ``context`` when a header is present), contexts
  ordered by first appearance.

Covariances use each context's own mean and the unbiased 1/(n-1)
normalization.  Missing or non-numeric values are rejected, not imputed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .exceptions import DataFormatError, DimensionMismatchError
from .tensor_core import CovarianceTensor, stack_covariances


@dataclass(frozen=True)
class ContextDataset:
    """Ordered per-context data matrices over a shared variable set.

    ``contexts`` is a tuple of (context_id, X_i) pairs where every X_i is
    an n_i x p array with n_i >= 2.  ``variable_names``, when present,
    has length p.
    """

    contexts: tuple[tuple[str, np.ndarray], ...]
    variable_names: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.contexts:
            raise DataFormatError("dataset has no contexts")
        cleaned = []
        p = None
        for cid, x in self.contexts:
            arr = np.asarray(x, dtype=float)
            if arr.ndim != 2:
                raise DimensionMismatchError(f"context {cid!r} is not a matrix")
            if not np.all(np.isfinite(arr)):
                raise DataFormatError(f"context {cid!r} contains non-finite values")
            if p is None:
                p = arr.shape[1]
            elif arr.shape[1] != p:
                raise DimensionMismatchError(
                    f"context {cid!r} has {arr.shape[1]} variables, expected {p}"
                )
            if arr.shape[0] < 2:
                raise DataFormatError(
                    f"fewer than 2 samples in context {cid!r} "
                    f"(covariance needs n >= 2)"
                )
            arr = arr.copy()
            arr.setflags(write=False)
            cleaned.append((str(cid), arr))
        if p == 0:
            raise DataFormatError("dataset has zero variables")
        object.__setattr__(self, "contexts", tuple(cleaned))
        if self.variable_names is not None:
            names = tuple(str(n) for n in self.variable_names)
            if len(names) != p:
                raise DimensionMismatchError(
                    f"{len(names)} variable names for {p} variables"
                )
            object.__setattr__(self, "variable_names", names)

    @property
    def p(self) -> int:
        return self.contexts[0][1].shape[1]

    @property
    def k(self) -> int:
        return len(self.contexts)

    @property
    def context_ids(self) -> tuple[str, ...]:
        return tuple(cid for cid, _ in self.contexts)

    @property
    def sample_counts(self) -> tuple[int, ...]:
        return tuple(x.shape[0] for _, x in self.contexts)

    def pooled(self) -> np.ndarray:
        return np.vstack([x for _, x in self.contexts])


def _detect_delimiter(line: str) -> str:
    return "\t" if line.count("\t") >= line.count(",") else ","


def _is_numeric(token: str) -> bool:
    try:
        float(token)
    except ValueError:
        return False
    return True


def parse_delimited(path) -> tuple[list[str] | None, list[list[str]]]:
    """Split a delimited text file into an optional header and data rows.

    The delimiter (comma or tab) is detected from the first line.  A first
    row with any non-numeric cell beyond the first column is treated as a
    header.  Raises ``DataFormatError`` on empty input or ragged rows.
    """
    with open(path, encoding="utf-8") as fh:
        lines = [ln.rstrip("\r\n") for ln in fh if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path}: empty input")
    delim = _detect_delimiter(lines[0])
    rows = [[c.strip() for c in ln.split(delim)] for ln in lines]
    width = len(rows[0])
    for idx, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: ragged row {idx + 1} has {len(row)} cells, expected {width}"
            )
    header = None
    first = rows[0]
    if any(not _is_numeric(c) for c in first[1:]) or (
        len(first) == 1 and not _is_numeric(first[0])
    ):
        header = first
        rows = rows[1:]
        if not rows:
            raise DataFormatError(f"{path}: header but no data rows")
    return header, rows


def _numeric_matrix(path, rows, columns) -> np.ndarray:
    out = np.empty((len(rows), len(columns)), dtype=float)
    for i, row in enumerate(rows):
        for j, col in enumerate(columns):
            cell = row[col]
            if not _is_numeric(cell):
                raise DataFormatError(
                    f"{path}: non-numeric cell {cell!r} at row {i + 1}, column {col + 1}"
                )
            out[i, j] = float(cell)
    return out


def _load_directory(path) -> ContextDataset:
    names = sorted(
        f for f in os.listdir(path) if os.path.isfile(os.path.join(path, f))
    )
    if not names:
        raise DataFormatError(f"{path}: directory contains no files")
    contexts = []
    variable_names = None
    for fname in names:
        fpath = os.path.join(path, fname)
        header, rows = parse_delimited(fpath)
        if not rows:
            raise DataFormatError(f"{fpath}: no data rows")
        matrix = _numeric_matrix(fpath, rows, list(range(len(rows[0]))))
        stem = os.path.splitext(fname)[0]
        contexts.append((stem, matrix))
        if header is not None and variable_names is None:
            variable_names = tuple(header)
    return ContextDataset(tuple(contexts), variable_names=variable_names)


def _load_long_table(path) -> ContextDataset:
    header, rows = parse_delimited(path)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    ctx_col = 0
    variable_names = None
    if header is not None:
        lowered = [h.lower() for h in header]
        if "context" in lowered:
            ctx_col = lowered.index("context")
        variable_names = tuple(h for j, h in enumerate(header) if j != ctx_col)
    value_cols = [j for j in range(len(rows[0])) if j != ctx_col]
    if not value_cols:
        raise DataFormatError(f"{path}: no value columns besides the context id")
    groups: dict[str, list[list[str]]] = {}
    order: list[str] = []
    for row in rows:
        cid = row[ctx_col]
        if cid not in groups:
            groups[cid] = []
            order.append(cid)
        groups[cid].append(row)
    contexts = []
    for cid in order:
        matrix = _numeric_matrix(path, groups[cid], value_cols)
        if matrix.shape[0] < 2:
            raise DataFormatError(
                f"{path}: fewer than 2 samples in context {cid!r}"
            )
        contexts.append((cid, matrix))
    return ContextDataset(tuple(contexts), variable_names=variable_names)


def load_contexts(path_spec, format) -> ContextDataset:
    """Load a dataset from disk.

    ``format`` is ``"per-context-files"`` (directory, one file per
    context) or ``"long-table"`` (single file with a context-id column).
    """
    if format == "per-context-files":
        if not os.path.isdir(path_spec):
            raise DataFormatError(f"{path_spec}: not a directory")
        return _load_directory(path_spec)
    if format == "long-table":
        if not os.path.isfile(path_spec):
            raise DataFormatError(f"{path_spec}: not a file")
        return _load_long_table(path_spec)
    raise ValueError(f"unknown format {format!r}")


def load_matrix(path) -> np.ndarray:
    """Load one delimited numeric matrix (no context column)."""
    header, rows = parse_delimited(path)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return _numeric_matrix(path, rows, list(range(len(rows[0]))))


def sample_covariance(X) -> np.ndarray:
    """Unbiased sample covariance of the rows of X, centered per column."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DimensionMismatchError("X must be an n x p matrix")
    n = X.shape[0]
    if n < 2:
        raise DataFormatError(f"need n >= 2 samples, got {n}")
    centered = X - X.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    return 0.5 * (cov + cov.T)


def global_pca_reduce(d: ContextDataset, n_components: int):
    """Project all contexts onto the top principal axes of the pooled data.

    The pooled data (all contexts stacked) is mean-centered and its top
    ``n_components`` eigenvectors are computed; each context's scores on
    those axes form the returned dataset.  Returns the reduced dataset
    and the projection matrix with orthonormal rows.  Row signs are fixed
    so the entry of largest magnitude in each row is positive.
    """
    pooled = d.pooled()
    total = pooled.shape[0]
    if not 1 <= n_components <= min(d.p, total):
        raise ValueError(
            f"n_components must be in [1, min(p={d.p}, samples={total})], "
            f"got {n_components}"
        )
    mean = pooled.mean(axis=0)
    centered = pooled - mean
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    projection = vt[:n_components].copy()
    for row in projection:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    reduced = tuple(
        (cid, (x - mean) @ projection.T) for cid, x in d.contexts
    )
    names = tuple(f"pc{j + 1}" for j in range(n_components))
    return ContextDataset(reduced, variable_names=names), projection


def pooled_mean(d: ContextDataset) -> np.ndarray:
    """Mean of the pooled data; the offset used by global_pca_reduce."""
    return d.pooled().mean(axis=0)


def build_tensor(d: ContextDataset) -> CovarianceTensor:
    """Per-context sample covariances stacked in context order."""
    return stack_covariances(
        [sample_covariance(x) for _, x in d.contexts],
        context_ids=d.context_ids,
    )
