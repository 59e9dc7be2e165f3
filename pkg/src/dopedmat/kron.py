"""Kronecker-factored matrices: expansion, fast matvec, gradients, rank."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Guard against accidentally materializing huge expansions.
MAX_EXPAND_ELEMENTS = 100_000_000


@dataclass(frozen=True)
class KroneckerPair:
    """W = B (x) C with B of shape (M1, N1) and C of shape (M2, N2)."""

    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        if self.B.ndim != 2 or self.C.ndim != 2:
            raise ValueError("Kronecker factors must be 2-D")

    @property
    def shape(self):
        return (self.B.shape[0] * self.C.shape[0],
                self.B.shape[1] * self.C.shape[1])

    @property
    def param_count(self):
        return self.B.size + self.C.size


def kp_expand(kp: KroneckerPair) -> np.ndarray:
    """Materialize the full Kronecker product. Test/oracle use only."""
    m, n = kp.shape
    if m * n > MAX_EXPAND_ELEMENTS:
        raise ValueError(
            f"expansion of shape {m}x{n} exceeds {MAX_EXPAND_ELEMENTS} elements")
    return np.kron(kp.B, kp.C)


def kp_mac_orders(kp: KroneckerPair):
    """MAC counts of the two association orders for Y = C X B^T.

    Returns (macs_xbt_first, macs_cx_first): doing (X B^T) then C(.),
    versus (C X) then (.)B^T.
    """
    m1, n1 = kp.B.shape
    m2, n2 = kp.C.shape
    order_a = n2 * n1 * m1 + m2 * n2 * m1   # T = X B^T, then C T
    order_b = m2 * n2 * n1 + m2 * n1 * m1   # T = C X, then T B^T
    return order_a, order_b


def kp_matvec(kp: KroneckerPair, x: np.ndarray) -> np.ndarray:
    """Compute (B (x) C) x without expanding the product.

    Uses the vec identity (B (x) C) vec(X) = vec(C X B^T) with
    X[j2, j1] = x[j1*N2 + j2]; the cheaper association order is picked
    per call.  Accepts x of shape (N,) or (N, batch).
    """
    m1, n1 = kp.B.shape
    m2, n2 = kp.C.shape
    n = n1 * n2
    single = x.ndim == 1
    if x.shape[0] != n:
        raise ValueError(f"x has length {x.shape[0]}, expected {n}")
    xb = x.reshape(n1, n2, -1)  # indices (j1, j2, batch)
    order_a, order_b = kp_mac_orders(kp)
    if order_a <= order_b:
        t = np.einsum("ij,jlb->ilb", kp.B, xb)        # (M1, N2, b)
        y = np.einsum("kl,ilb->ikb", kp.C, t)         # (M1, M2, b)
    else:
        t = np.einsum("kl,jlb->jkb", kp.C, xb)        # (N1, M2, b)
        y = np.einsum("ij,jkb->ikb", kp.B, t)         # (M1, M2, b)
    y = y.reshape(m1 * m2, -1)
    return y[:, 0] if single else y


def kp_matvec_backward(kp: KroneckerPair, x: np.ndarray, g: np.ndarray):
    """Gradients of y = (B (x) C) x given upstream gradient g.

    Returns (gB, gC, gx).  Accepts (N,)/(M,) vectors or (N, b)/(M, b)
    batches; batched gradients are summed over the batch for gB, gC.
    """
    m1, n1 = kp.B.shape
    m2, n2 = kp.C.shape
    single = x.ndim == 1
    if x.shape[0] != n1 * n2:
        raise ValueError(f"x has length {x.shape[0]}, expected {n1 * n2}")
    if g.shape[0] != m1 * m2:
        raise ValueError(f"g has length {g.shape[0]}, expected {m1 * m2}")
    if (x.ndim == 1) != (g.ndim == 1) or (x.ndim == 2 and g.ndim == 2
                                          and x.shape[1] != g.shape[1]):
        raise ValueError("x and g batch shapes do not match")
    xb = x.reshape(n1, n2, -1)
    gb = g.reshape(m1, m2, -1)
    # y[i,k,b] = sum_{j,l} B[i,j] C[k,l] x[j,l,b]
    t_cx = np.einsum("kl,jlb->jkb", kp.C, xb)
    grad_b = np.einsum("ikb,jkb->ij", gb, t_cx)
    t_bx = np.einsum("ij,jlb->ilb", kp.B, xb)
    grad_c = np.einsum("ikb,ilb->kl", gb, t_bx)
    t_bg = np.einsum("ij,ikb->jkb", kp.B, gb)
    grad_x = np.einsum("kl,jkb->jlb", kp.C, t_bg).reshape(n1 * n2, -1)
    if single:
        grad_x = grad_x[:, 0]
    return grad_b, grad_c, grad_x


def numerical_rank(m: np.ndarray, tol: float = 1e-8) -> int:
    """Number of singular values above tol * sigma_max."""
    if m.size == 0:
        raise ValueError("empty matrix has no rank")
    if tol <= 0:
        raise ValueError("tol must be positive")
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))
