"""Sparse storage, ingestion, splitting and synthesis of rating matrices."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, TextIO

import numpy as np

from .errors import (
    ConfigError,
    DuplicateEntryError,
    GenerationError,
    ParseError,
    SplitError,
)


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _grouped(keys, n_groups):
    order = np.argsort(keys, kind="stable")
    ptr = np.zeros(n_groups + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n_groups), out=ptr[1:])
    return _frozen(order, np.int64), _frozen(ptr, np.int64)


class HdiMatrix:
    """Known entries of a high-dimensional incomplete matrix.

    Entries are held as three parallel arrays (``rows``, ``cols``, ``vals``)
    plus CSR-style row and column indexes pointing back into them. Instances
    are read-only after construction.
    """

    def __init__(self, n_rows, n_cols, rows, cols, vals):
        rows = np.asarray(rows, dtype=np.int64).reshape(-1)
        cols = np.asarray(cols, dtype=np.int64).reshape(-1)
        vals = np.asarray(vals, dtype=np.float64).reshape(-1)
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols and vals must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= n_rows:
                raise ValueError("row index out of range")
            if cols.min() < 0 or cols.max() >= n_cols:
                raise ValueError("column index out of range")
            flat = rows * n_cols + cols
            if np.unique(flat).size != flat.size:
                dup = flat[np.argsort(flat, kind="stable")]
                k = int(dup[np.flatnonzero(np.diff(dup) == 0)[0]])
                raise DuplicateEntryError(k // n_cols, k % n_cols)
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.rows = _frozen(rows, np.int64)
        self.cols = _frozen(cols, np.int64)
        self.vals = _frozen(vals, np.float64)
        self._row_order, self._row_ptr = _grouped(self.rows, self.n_rows)
        self._col_order, self._col_ptr = _grouped(self.cols, self.n_cols)

    def __len__(self):
        return int(self.vals.size)

    def __repr__(self):
        return f"HdiMatrix({self.n_rows}x{self.n_cols}, nnz={len(self)})"

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    def row_counts(self):
        return np.diff(self._row_ptr)

    def col_counts(self):
        return np.diff(self._col_ptr)

    def row_entries(self, u):
        """Entry positions (into ``rows/cols/vals``) of row ``u``."""
        return self._row_order[self._row_ptr[u]:self._row_ptr[u + 1]]

    def col_entries(self, i):
        return self._col_order[self._col_ptr[i]:self._col_ptr[i + 1]]

    def group(self, kind, index):
        """Return ``(partner indices, values)`` for one row or column."""
        if kind == "row":
            pos = self.row_entries(index)
            return self.cols[pos], self.vals[pos]
        if kind == "col":
            pos = self.col_entries(index)
            return self.rows[pos], self.vals[pos]
        raise ValueError(f"unknown group kind {kind!r}")

    def triples(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()))

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        return HdiMatrix(self.n_rows, self.n_cols, self.rows[positions],
                         self.cols[positions], self.vals[positions])

    def to_dense(self, fill=np.nan):
        out = np.full(self.shape, fill, dtype=np.float64)
        out[self.rows, self.cols] = self.vals
        return out


@dataclass
class IdMap:
    """Dense index <-> raw id tables produced by :func:`load_ratings`."""

    row_ids: list = field(default_factory=list)
    col_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.row_lookup = {r: k for k, r in enumerate(self.row_ids)}
        self.col_lookup = {c: k for k, c in enumerate(self.col_ids)}

    def _intern(self, raw, ids, lookup):
        k = lookup.get(raw)
        if k is None:
            k = len(ids)
            ids.append(raw)
            lookup[raw] = k
        return k

    def row(self, raw):
        return self._intern(raw, self.row_ids, self.row_lookup)

    def col(self, raw):
        return self._intern(raw, self.col_ids, self.col_lookup)


def _detect_delimiter(line):
    return "\t" if "\t" in line else ","


def load_ratings(stream: TextIO, delimiter: Optional[str] = None,
                 has_header: bool = False):
    """Parse ``user<d>item<d>rating[<d>ignored...]`` records.

    ``delimiter=None`` auto-detects tab versus comma from the first record;
    any other string (e.g. ``"::"`` for MovieLens 1M/10M) is used verbatim.
    Blank lines and lines starting with ``#`` are skipped. Raw ids are
    re-indexed densely in first-appearance order.

    Returns ``(HdiMatrix, IdMap)``.
    """
    ids = IdMap()
    rows, cols, vals = [], [], []
    seen = {}
    header_pending = has_header
    for line_no, raw_line in enumerate(stream, start=1):
        line = raw_line.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if header_pending:
            header_pending = False
            continue
        if delimiter is None:
            delimiter = _detect_delimiter(line)
        parts = [p.strip() for p in line.split(delimiter)]
        if len(parts) < 3:
            raise ParseError(line_no, f"expected at least 3 fields, got {len(parts)}")
        raw_u, raw_i, raw_z = parts[0], parts[1], parts[2]
        if not raw_u or not raw_i:
            raise ParseError(line_no, "empty id field")
        try:
            z = float(raw_z)
        except ValueError:
            raise ParseError(line_no, f"non-numeric rating {raw_z!r}") from None
        if not math.isfinite(z):
            raise ParseError(line_no, f"non-finite rating {raw_z!r}")
        key = (raw_u, raw_i)
        if key in seen:
            raise DuplicateEntryError(raw_u, raw_i, line_no)
        seen[key] = line_no
        rows.append(ids.row(raw_u))
        cols.append(ids.col(raw_i))
        vals.append(z)
    matrix = HdiMatrix(len(ids.row_ids), len(ids.col_ids), rows, cols, vals)
    return matrix, ids


def write_ratings(matrix: HdiMatrix, stream: TextIO, ids: Optional[IdMap] = None,
                  delimiter: str = "\t"):
    """Write ``matrix`` in the format read by :func:`load_ratings`.

    Values are written with ``repr`` so reloading reproduces them exactly.
    Without ``ids`` the dense indices are written as the raw ids.
    """
    for u, i, z in zip(matrix.rows.tolist(), matrix.cols.tolist(), matrix.vals.tolist()):
        ru = ids.row_ids[u] if ids is not None else u
        ri = ids.col_ids[i] if ids is not None else i
        stream.write(f"{ru}{delimiter}{ri}{delimiter}{z!r}\n")


@dataclass(frozen=True)
class DataSplit:
    train: HdiMatrix
    validation: HdiMatrix
    test: HdiMatrix
    seed: int


def _check_fractions(fractions):
    if len(fractions) != 3:
        raise ConfigError("fractions must be (train, validation, test)")
    if any(not (f > 0) for f in fractions):
        raise ConfigError(f"fractions must be positive, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)!r}")


def split_sizes(n, fractions):
    n_train = int(round(fractions[0] * n))
    n_valid = int(round(fractions[1] * n))
    n_train = min(max(n_train, 1), n - 2)
    n_valid = min(max(n_valid, 1), n - n_train - 1)
    return n_train, n_valid, n - n_train - n_valid


def split(matrix: HdiMatrix, fractions=(0.7, 0.1, 0.2), seed: int = 0) -> DataSplit:
    """Uniformly shuffle all known entries and cut them into three parts."""
    _check_fractions(fractions)
    n = len(matrix)
    if n < 3:
        raise SplitError(f"need at least 3 entries to split, got {n}")
    n_train, n_valid, _ = split_sizes(n, fractions)
    perm = np.random.default_rng(seed).permutation(n)
    return DataSplit(
        train=matrix.subset(np.sort(perm[:n_train])),
        validation=matrix.subset(np.sort(perm[n_train:n_train + n_valid])),
        test=matrix.subset(np.sort(perm[n_train + n_valid:])),
        seed=seed,
    )


@dataclass
class SynthParams:
    """Hidden generator of a synthetic low-rank matrix."""

    P: np.ndarray
    Q: np.ndarray
    b: np.ndarray
    c: np.ndarray
    noise_sigma: float
    rating_clip: Optional[tuple] = None
    seed: int = 0

    def expected(self, rows, cols):
        """Noise-free generator value at the given cells."""
        return np.einsum("kf,kf->k", self.P[rows], self.Q[cols]) + self.b[rows] + self.c[cols]

    def to_json(self):
        return json.dumps({
            "P": self.P.tolist(), "Q": self.Q.tolist(),
            "b": self.b.tolist(), "c": self.c.tolist(),
            "noise_sigma": self.noise_sigma,
            "rating_clip": list(self.rating_clip) if self.rating_clip else None,
            "seed": self.seed,
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        clip = tuple(d["rating_clip"]) if d.get("rating_clip") else None
        return cls(np.array(d["P"], dtype=np.float64), np.array(d["Q"], dtype=np.float64),
                   np.array(d["b"], dtype=np.float64), np.array(d["c"], dtype=np.float64),
                   float(d["noise_sigma"]), clip, int(d["seed"]))


def synth_lowrank(n_rows, n_cols, true_rank, density, noise_sigma=0.0,
                  rating_clip=None, seed=0):
    """Sample a noisy low-rank-plus-biases matrix on random distinct cells.

    Hidden factors are uniform on ``[0, 1/sqrt(true_rank)]`` and hidden biases
    uniform on ``[0, 0.1]``. Returns ``(HdiMatrix, SynthParams)``.
    """
    if not (0 < density <= 1):
        raise GenerationError(f"density must be in (0, 1], got {density}")
    if true_rank < 1:
        raise GenerationError("true_rank must be >= 1")
    if noise_sigma < 0:
        raise GenerationError("noise_sigma must be >= 0")
    cells = n_rows * n_cols
    target = density * cells
    if target < 1:
        raise GenerationError(f"density * cells = {target} < 1")
    # round first so 0.08 * 60000 does not become 4801
    count = math.ceil(round(target, 9))

    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(true_rank)
    P = rng.uniform(0.0, scale, size=(n_rows, true_rank))
    Q = rng.uniform(0.0, scale, size=(n_cols, true_rank))
    b = rng.uniform(0.0, 0.1, size=n_rows)
    c = rng.uniform(0.0, 0.1, size=n_cols)
    flat = rng.choice(cells, size=count, replace=False)
    rows, cols = np.divmod(flat, n_cols)
    params = SynthParams(P, Q, b, c, float(noise_sigma),
                         tuple(rating_clip) if rating_clip else None, seed)
    z = params.expected(rows, cols) + rng.normal(0.0, noise_sigma, size=count)
    if rating_clip is not None:
        z = np.clip(z, rating_clip[0], rating_clip[1])
    return HdiMatrix(n_rows, n_cols, rows, cols, z), params
