"""CSR storage, sparse matvec, and magnitude-pruning masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CsrMatrix:
    rows: int
    cols: int
    row_ptr: np.ndarray   # int64, length rows+1
    col_idx: np.ndarray   # int64, length nnz
    values: np.ndarray    # float, length nnz

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("CsrMatrix dimensions must be positive")
        if len(self.row_ptr) != self.rows + 1 or self.row_ptr[0] != 0:
            raise ValueError("bad row_ptr")
        if self.row_ptr[-1] != len(self.values) or len(self.col_idx) != len(self.values):
            raise ValueError("row_ptr/col_idx/values lengths inconsistent")
        if np.any(np.diff(self.row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if self.col_idx.size and (self.col_idx.min() < 0 or self.col_idx.max() >= self.cols):
            raise ValueError("col_idx out of range")

    @property
    def nnz(self) -> int:
        return len(self.values)

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols), dtype=self.values.dtype)
        row_of = np.repeat(np.arange(self.rows), np.diff(self.row_ptr))
        out[row_of, self.col_idx] = self.values
        return out


def csr_from_dense(dense: np.ndarray, mask: np.ndarray | None = None) -> CsrMatrix:
    """Build CSR from a dense matrix, keeping entries where mask is set.

    Explicit zeros under the mask are dropped, so nnz counts only true
    nonzeros.
    """
    rows, cols = dense.shape
    keep = dense != 0
    if mask is not None:
        keep &= mask
    counts = keep.sum(axis=1)
    row_ptr = np.zeros(rows + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    rr, cc = np.nonzero(keep)  # row-major order, cols increasing within row
    return CsrMatrix(rows, cols, row_ptr, cc.astype(np.int64), dense[rr, cc].copy())


def csr_matvec(s: CsrMatrix, x: np.ndarray) -> np.ndarray:
    """y = S x using exactly nnz multiply-accumulates. x may be (cols,) or (cols, b)."""
    if x.shape[0] != s.cols:
        raise ValueError(f"x has length {x.shape[0]}, expected {s.cols}")
    single = x.ndim == 1
    xb = x if not single else x[:, None]
    y = np.zeros((s.rows, xb.shape[1]), dtype=np.result_type(s.values, xb))
    if s.nnz:
        prod = s.values[:, None] * xb[s.col_idx]
        counts = np.diff(s.row_ptr)
        nz = counts > 0
        # reduceat over starts of non-empty rows: consecutive starts are
        # strictly increasing, so segments line up with those rows exactly.
        y[nz] = np.add.reduceat(prod, s.row_ptr[:-1][nz], axis=0)
    return y[:, 0] if single else y


def new_mask(rows: int, cols: int) -> np.ndarray:
    return np.ones((rows, cols), dtype=bool)


def mask_sparsity(mask: np.ndarray) -> float:
    return 1.0 - mask.sum() / mask.size


def prune_to_sparsity(w: np.ndarray, mask: np.ndarray, target_sparsity: float) -> np.ndarray:
    """Kill the smallest-magnitude alive weights until the mask hits target.

    Dead bits stay dead (no regrowth).  Ties broken by lowest flat index.
    """
    if not 0.0 <= target_sparsity <= 1.0:
        raise ValueError("target_sparsity must be in [0, 1]")
    current = mask_sparsity(mask)
    if target_sparsity < current - 1e-12:
        raise ValueError(
            f"target sparsity {target_sparsity} below current {current}")
    total = mask.size
    alive_target = total - int(round(target_sparsity * total))
    alive_now = int(mask.sum())
    n_kill = alive_now - alive_target
    if n_kill <= 0:
        return mask.copy()
    flat_mask = mask.ravel()
    alive_idx = np.flatnonzero(flat_mask)
    mags = np.abs(w.ravel()[alive_idx])
    order = np.argsort(mags, kind="stable")  # stable: ties -> lowest index
    out = flat_mask.copy()
    out[alive_idx[order[:n_kill]]] = False
    return out.reshape(mask.shape)
