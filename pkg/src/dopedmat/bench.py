"""MAC instrumentation and wall-clock matvec benchmarking.

Formula-based MAC counts (doped.mac_count_entry / structured_macs) are
cross-checked against the instrumented kernels here, which literally
count one MAC per multiply-accumulate executed.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass

import numpy as np

from .doped import (DopedWeight, HybridParts, KroneckerPair, LowRankPair,
                    StructuredTerm)
from .kron import kp_mac_orders
from .sparse import CsrMatrix, csr_from_dense, csr_matvec


# ---------------------------------------------------------------------------
# instrumented kernels


def _gemm_counted(a, b, counter):
    """Naive GEMM that counts every multiply-accumulate."""
    m, k = a.shape
    k2, n = b.shape
    assert k == k2
    out = np.zeros((m, n), dtype=np.result_type(a, b))
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += a[i, t] * b[t, j]
                counter[0] += 1
            out[i, j] = acc
    return out


def instrumented_structured_matvec(term: StructuredTerm, x: np.ndarray):
    """Fast-path matvec executed by counting kernels. Returns (y, macs)."""
    counter = [0]
    if isinstance(term, KroneckerPair):
        m1, n1 = term.B.shape
        m2, n2 = term.C.shape
        xm = x.reshape(n1, n2).T  # X with X[j2, j1] = x[j1*N2+j2]
        order_a, order_b = kp_mac_orders(term)
        if order_a <= order_b:
            t = _gemm_counted(xm, term.B.T, counter)        # (N2, M1)
            y = _gemm_counted(term.C, t, counter)           # (M2, M1)
        else:
            t = _gemm_counted(term.C, xm, counter)          # (M2, N1)
            y = _gemm_counted(t, term.B.T, counter)         # (M2, M1)
        return y.T.reshape(-1), counter[0]
    xc = x[:, None]
    if isinstance(term, LowRankPair):
        t = _gemm_counted(term.C, xc, counter)
        y = _gemm_counted(term.B, t, counter)
        return y[:, 0], counter[0]
    top = _gemm_counted(term.D, xc, counter)
    t = _gemm_counted(term.V, xc, counter)
    bot = _gemm_counted(term.U, t, counter)
    return np.concatenate([top[:, 0], bot[:, 0]]), counter[0]


def instrumented_csr_matvec(s: CsrMatrix, x: np.ndarray):
    counter = 0
    y = np.zeros(s.rows, dtype=np.result_type(s.values, x))
    for i in range(s.rows):
        for k in range(s.row_ptr[i], s.row_ptr[i + 1]):
            y[i] += s.values[k] * x[s.col_idx[k]]
            counter += 1
    return y, counter


def instrumented_doped_macs(w: DopedWeight, x: np.ndarray):
    """(y, structured_macs, sparse_macs) for one forward through the
    counting kernels."""
    yk, macs_k = instrumented_structured_matvec(w.structured, x)
    s = w.frozen if w.frozen is not None else csr_from_dense(w.ws, w.mask)
    ys, macs_s = instrumented_csr_matvec(s, x)
    return w.alpha * yk + w.beta * ys, macs_k, macs_s


# ---------------------------------------------------------------------------
# timing


@dataclass
class TimingResult:
    kind: str
    rows: int
    cols: int
    sparsity: float
    macs: int
    iterations: int
    warmup: int
    median_s: float
    mean_s: float
    p95_s: float
    speedup: float  # vs dense of the same logical shape, same process

    def row(self):
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols,
                "sparsity": self.sparsity, "macs": self.macs,
                "median_s": self.median_s, "speedup": self.speedup}


def _time_call(fn, iters, warmup):
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - t0)
    samples = np.array(samples)
    return (float(np.median(samples)), float(samples.mean()),
            float(np.percentile(samples, 95)))


def time_matvec(kind: str, rows: int, cols: int, sparsity: float = 0.0,
                kp_shapes=None, iters: int = 200, warmup: int = 20,
                seed: int = 0) -> TimingResult:
    """Benchmark one matvec kernel against a dense baseline of the same
    logical shape, measured in the same process.

    kind: dense | csr | kp | doped.  kp_shapes = (M1, N1, M2, N2) for
    kp/doped.  Operands are allocated once; single-threaded by contract.
    """
    if kind not in ("dense", "csr", "kp", "doped"):
        raise ValueError(f"unknown kernel kind {kind!r}")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    iters = max(30, iters)
    warmup = max(10, warmup)
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(cols)
    dense_w = rng.standard_normal((rows, cols))

    def make_csr():
        keep = rng.random((rows, cols)) >= sparsity
        return csr_from_dense(dense_w, keep)

    def make_kp():
        if kp_shapes is None:
            raise ValueError("kp/doped timing requires kp_shapes")
        m1, n1, m2, n2 = kp_shapes
        if m1 * m2 != rows or n1 * n2 != cols:
            raise ValueError(f"kp shapes {kp_shapes} do not multiply to {rows}x{cols}")
        from .kron import kp_matvec
        kp = KroneckerPair(rng.standard_normal((m1, n1)),
                           rng.standard_normal((m2, n2)))
        return kp, kp_matvec

    macs = rows * cols
    if kind == "dense":
        fn = lambda: dense_w @ x
    elif kind == "csr":
        s = make_csr()
        macs = s.nnz
        fn = lambda: csr_matvec(s, x)
    elif kind == "kp":
        kp, kp_matvec = make_kp()
        macs = min(kp_mac_orders(kp))
        fn = lambda: kp_matvec(kp, x)
    else:  # doped
        kp, kp_matvec = make_kp()
        s = make_csr()
        macs = min(kp_mac_orders(kp)) + s.nnz
        fn = lambda: kp_matvec(kp, x) + csr_matvec(s, x)

    dense_median, _, _ = _time_call(lambda: dense_w @ x, iters, warmup)
    median, mean, p95 = _time_call(fn, iters, warmup)
    return TimingResult(kind=kind, rows=rows, cols=cols, sparsity=sparsity,
                        macs=macs, iterations=iters, warmup=warmup,
                        median_s=median, mean_s=mean, p95_s=p95,
                        speedup=dense_median / median)


# ---------------------------------------------------------------------------
# reporting


CSV_COLUMNS = ["kind", "rows", "cols", "sparsity", "macs", "median_s", "speedup"]


def emit_report(results, csv_path, json_path):
    """Write timing results as CSV and JSON with a stable column order."""
    if not results:
        raise ValueError("no results to report")
    rows = [r.row() for r in results]
    with open(csv_path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(row[k]) if isinstance(row[k], float)
                             else row[k] for k in CSV_COLUMNS})
    with open(json_path, "w") as f:
        json.dump(rows, f, indent=2, sort_keys=True)
        f.write("\n")
