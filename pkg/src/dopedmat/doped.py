"""Doped weights: structured term + sparse additive term, with CMR masks.

A DopedWeight holds one of three structured variants (Kronecker pair,
low-rank pair, hybrid decomposition) plus a dense doping matrix that is
magnitude-pruned down to a target sparsity during training and frozen to
CSR for inference.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .kron import KroneckerPair, kp_expand, kp_mac_orders, kp_matvec, kp_matvec_backward
from .sparse import CsrMatrix, csr_from_dense, csr_matvec, mask_sparsity, new_mask


@dataclass(frozen=True)
class LowRankPair:
    """W ~= B @ C with B (M, d), C (d, N) and d < min(M, N)."""

    B: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        m, d = self.B.shape
        d2, n = self.C.shape
        if d != d2:
            raise ValueError("inner dimensions of low-rank factors differ")
        if d >= min(m, n):
            raise ValueError(f"inner dim {d} must be < min({m}, {n})")

    @property
    def shape(self):
        return (self.B.shape[0], self.C.shape[1])

    @property
    def param_count(self):
        return self.B.size + self.C.size


@dataclass(frozen=True)
class HybridParts:
    """Vertical concat [D; U @ V]: dense block D (m1, N) over a low-rank block."""

    D: np.ndarray
    U: np.ndarray
    V: np.ndarray

    def __post_init__(self):
        m1, n = self.D.shape
        mu, r = self.U.shape
        r2, nv = self.V.shape
        if r != r2 or n != nv:
            raise ValueError("hybrid part shapes inconsistent")
        if m1 < 1 or mu < 1 or r < 1:
            raise ValueError("hybrid parts must be non-empty")

    @property
    def shape(self):
        return (self.D.shape[0] + self.U.shape[0], self.D.shape[1])

    @property
    def param_count(self):
        return self.D.size + self.U.size + self.V.size


StructuredTerm = KroneckerPair | LowRankPair | HybridParts


def structured_expand(term: StructuredTerm) -> np.ndarray:
    if isinstance(term, KroneckerPair):
        return kp_expand(term)
    if isinstance(term, LowRankPair):
        return term.B @ term.C
    return np.concatenate([term.D, term.U @ term.V], axis=0)


def structured_matvec(term: StructuredTerm, x: np.ndarray) -> np.ndarray:
    """Fast-path matvec for any variant; x may be (N,) or (N, b)."""
    if isinstance(term, KroneckerPair):
        return kp_matvec(term, x)
    if x.shape[0] != term.shape[1]:
        raise ValueError(f"x has length {x.shape[0]}, expected {term.shape[1]}")
    if isinstance(term, LowRankPair):
        return term.B @ (term.C @ x)
    return np.concatenate([term.D @ x, term.U @ (term.V @ x)], axis=0)


def structured_matvec_backward(term: StructuredTerm, x: np.ndarray, g: np.ndarray):
    """Returns (factor gradients in declaration order, g_x)."""
    if isinstance(term, KroneckerPair):
        gb, gc, gx = kp_matvec_backward(term, x, g)
        return (gb, gc), gx
    single = x.ndim == 1
    xb = x[:, None] if single else x
    gb_ = g[:, None] if single else g
    if isinstance(term, LowRankPair):
        cx = term.C @ xb
        g_b = gb_ @ cx.T
        g_c = (term.B.T @ gb_) @ xb.T
        gx = term.C.T @ (term.B.T @ gb_)
        return (g_b, g_c), (gx[:, 0] if single else gx)
    m1 = term.D.shape[0]
    g_top, g_bot = gb_[:m1], gb_[m1:]
    vx = term.V @ xb
    g_d = g_top @ xb.T
    g_u = g_bot @ vx.T
    g_v = (term.U.T @ g_bot) @ xb.T
    gx = term.D.T @ g_top + term.V.T @ (term.U.T @ g_bot)
    return (g_d, g_u, g_v), (gx[:, 0] if single else gx)


def structured_macs(term: StructuredTerm) -> int:
    """MACs of one matvec through the fast path."""
    if isinstance(term, KroneckerPair):
        return min(kp_mac_orders(term))
    if isinstance(term, LowRankPair):
        m, d = term.B.shape
        n = term.C.shape[1]
        return d * (m + n)
    m1, n = term.D.shape
    mu, r = term.U.shape
    return m1 * n + r * n + r * mu


@dataclass
class DopedWeight:
    """W = alpha * structured + beta * (mask . ws); ws is pruned over training."""

    structured: StructuredTerm
    ws: np.ndarray
    mask: np.ndarray
    alpha: float = 1.0
    beta: float = 1.0
    nnz_target: int = 0
    frozen: CsrMatrix | None = None
    warning: str | None = field(default=None, repr=False)

    @property
    def shape(self):
        return self.structured.shape

    @property
    def final_sparsity(self) -> float:
        m, n = self.shape
        return 1.0 - self.nnz_target / (m * n)

    def sparsity(self) -> float:
        return mask_sparsity(self.mask)

    def factors(self):
        """Trainable factor arrays of the structured term, in declaration order."""
        t = self.structured
        if isinstance(t, KroneckerPair):
            return (t.B, t.C)
        if isinstance(t, LowRankPair):
            return (t.B, t.C)
        return (t.D, t.U, t.V)

    def replace_factors(self, arrays):
        t = self.structured
        self.structured = type(t)(*arrays)

    def to_dense(self) -> np.ndarray:
        """Dense oracle of the (unmasked-by-CMR) weight. Tests only."""
        return self.alpha * structured_expand(self.structured) \
            + self.beta * (self.ws * self.mask)


def size_kp_factors(m: int, n: int):
    """Pick Kronecker factor shapes (M1, N1, M2, N2) for an M x N matrix.

    Enumerates divisor pairs, preferring all four dims >= 2, and selects
    the pair maximizing the rank bound min(M1,N1)*min(M2,N2); ties broken
    by minimum parameter count, then lexicographically.  Returns
    (shapes, warned) where warned flags a trivial 1-x fallback.
    """
    if m < 2 or n < 2:
        raise ValueError("matrix dims must be >= 2")

    def divisors(v):
        return [d for d in range(1, v + 1) if v % d == 0]

    candidates = []
    for m1 in divisors(m):
        for n1 in divisors(n):
            m2, n2 = m // m1, n // n1
            candidates.append((m1, n1, m2, n2))
    nontrivial = [c for c in candidates if min(c) >= 2]
    pool, warned = (nontrivial, False) if nontrivial else (candidates, True)

    def key(c):
        m1, n1, m2, n2 = c
        rank_bound = min(m1, n1) * min(m2, n2)
        params = m1 * n1 + m2 * n2
        return (-rank_bound, params, c)

    return min(pool, key=key), warned


def size_kp_factors_for_budget(m: int, n: int, param_budget: float):
    """Divisor pair whose parameter count is closest to a budget.

    Used by the ablation sweep, where the KP compression level is swept
    rather than fixed at the rank-maximizing point.  Ties prefer the
    higher rank bound.
    """
    if m < 2 or n < 2:
        raise ValueError("matrix dims must be >= 2")
    best = None
    for m1 in range(1, m + 1):
        if m % m1:
            continue
        for n1 in range(1, n + 1):
            if n % n1:
                continue
            m2, n2 = m // m1, n // n1
            params = m1 * n1 + m2 * n2
            rank_bound = min(m1, n1) * min(m2, n2)
            k = (abs(params - param_budget), -rank_bound, (m1, n1, m2, n2))
            if best is None or k < best:
                best = k
    return best[2]


def hmd_budget(m: int, n: int, param_budget: float):
    """Deterministic (m1, r) for a hybrid decomposition near a parameter budget."""
    r = int(round(param_budget / (m + 2 * n)))
    r = max(1, r)
    m1 = min(max(1, r), m - 1)
    return m1, r


def _uniform_init(rng: np.random.Generator, shape, fan_in: int, scale=1.0,
                  dtype=np.float64):
    bound = scale / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def make_structured(variant: str, m: int, n: int, rng: np.random.Generator,
                    shapes=None, dtype=np.float64) -> StructuredTerm:
    """Random-init structured term. `shapes` overrides auto-sizing:
    KP: (M1, N1, M2, N2); LMF: d; HMD: (m1, r).
    """
    if variant == "kp":
        if shapes is None:
            (m1, n1, m2, n2), _ = size_kp_factors(m, n)
        else:
            m1, n1, m2, n2 = shapes
            if m1 * m2 != m or n1 * n2 != n:
                raise ValueError(
                    f"explicit KP shapes ({m1}x{n1}, {m2}x{n2}) do not multiply to {m}x{n}")
        return KroneckerPair(_uniform_init(rng, (m1, n1), n, dtype=dtype),
                             _uniform_init(rng, (m2, n2), n, dtype=dtype))
    if variant == "lmf":
        d = int(shapes) if shapes is not None else max(1, round(m * n / (8 * (m + n))))
        return LowRankPair(_uniform_init(rng, (m, d), d, dtype=dtype),
                           _uniform_init(rng, (d, n), n, dtype=dtype))
    if variant == "hmd":
        if shapes is None:
            m1, r = hmd_budget(m, n, m * n / 8)
        else:
            m1, r = shapes
        return HybridParts(_uniform_init(rng, (m1, n), n, dtype=dtype),
                           _uniform_init(rng, (m - m1, r), r, dtype=dtype),
                           _uniform_init(rng, (r, n), n, dtype=dtype))
    raise ValueError(f"unknown structured variant {variant!r}")


def make_doped(m: int, n: int, variant: str, target_cf: float,
               rng: np.random.Generator, shapes=None,
               dtype=np.float64) -> DopedWeight:
    """Construct a doped weight whose total budget M*N/target_cf is split
    between the structured term and the doping term's surviving nonzeros.
    """
    if target_cf <= 1.0:
        raise ValueError("target_cf must be > 1")
    structured = make_structured(variant, m, n, rng, shapes=shapes, dtype=dtype)
    budget = m * n / target_cf
    nnz_target = int(round(budget - structured.param_count))
    if nnz_target < 0:
        if structured.param_count > budget * 1.02:
            raise ValueError(
                f"structured term has {structured.param_count} params, over the "
                f"budget of {budget:.0f} at CF {target_cf}")
        nnz_target = 0
    ws = _uniform_init(rng, (m, n), n, scale=0.5, dtype=dtype)
    return DopedWeight(structured=structured, ws=ws, mask=new_mask(m, n),
                       nnz_target=nnz_target)


def compression_factor(w: DopedWeight) -> float:
    """Baseline params over compressed params (structured + surviving nnz)."""
    m, n = w.shape
    nnz = w.frozen.nnz if w.frozen is not None else int(w.mask.sum())
    return (m * n) / (w.structured.param_count + nnz)


def draw_cmr_masks(rng: np.random.Generator, m: int, p: float, batch=None):
    """Bernoulli keep-masks (b1, b2); p is the DROP probability."""
    shape = (m,) if batch is None else (m, batch)
    b1 = rng.random(shape) >= p
    b2 = rng.random(shape) >= p
    return b1, b2


def doped_forward(w: DopedWeight, x: np.ndarray, masks=None, want_cache=False):
    """y = b1 . alpha * (structured x) + b2 . beta * ((mask . ws) x).

    masks is (b1, b2) of shape (M,) or (M, batch), or None for both terms
    always on.  No 1/(1-p) rescaling: schedules decay p to zero before
    training ends, so train and eval paths agree.
    """
    m, n = w.shape
    if x.shape[0] != n:
        raise ValueError(f"x has length {x.shape[0]}, expected {n}")
    yk = w.alpha * structured_matvec(w.structured, x)
    if w.frozen is not None:
        ys = w.beta * csr_matvec(w.frozen, x)
    else:
        ys = w.beta * ((w.ws * w.mask) @ x)
    if masks is not None:
        b1, b2 = masks
        y = np.where(b1, yk, 0.0) + np.where(b2, ys, 0.0)
    else:
        y = yk + ys
    if want_cache:
        return y, {"x": x, "yk": yk, "ys": ys, "masks": masks}
    return y


def doped_backward(w: DopedWeight, cache: dict, g: np.ndarray):
    """Gradients of doped_forward w.r.t. factors, ws, alpha, beta, x.

    Returns a dict {factors: tuple, ws, alpha, beta, x}.  ws gradient is
    zero on dead mask bits and on rows where b2 dropped the sparse term.
    """
    x, masks = cache["x"], cache["masks"]
    if masks is not None:
        b1, b2 = masks
        gk = np.where(b1, g, 0.0)
        gs = np.where(b2, g, 0.0)
    else:
        gk = gs = g
    factor_grads, gx_k = structured_matvec_backward(w.structured, x, w.alpha * gk)
    factor_grads = tuple(fg for fg in factor_grads)
    single = x.ndim == 1
    xb = x[:, None] if single else x
    gsb = gs[:, None] if single else gs
    g_ws = (w.beta * gsb) @ xb.T
    g_ws *= w.mask
    wm = w.ws * w.mask
    gx_s = w.beta * (wm.T @ gs)
    g_alpha = float(np.sum(gk * (cache["yk"] / w.alpha))) if w.alpha != 0 else \
        float(np.sum(gk * structured_matvec(w.structured, x)))
    g_beta = float(np.sum(gs * (cache["ys"] / w.beta))) if w.beta != 0 else \
        float(np.sum(gs * (wm @ x)))
    return {"factors": factor_grads, "ws": g_ws, "alpha": g_alpha,
            "beta": g_beta, "x": gx_k + gx_s}


def mac_count_entry(w: DopedWeight, name="weight") -> dict:
    """Per-layer MAC accounting: dense baseline vs structured + sparse."""
    m, n = w.shape
    dense = m * n
    s_macs = structured_macs(w.structured)
    nnz = w.frozen.nnz if w.frozen is not None else int(w.mask.sum())
    doped = s_macs + nnz
    return {"name": name, "shape": [m, n], "variant": type(w.structured).__name__,
            "structured_macs": s_macs, "sparse_macs": nnz, "dense_macs": dense,
            "reduction": dense / doped if doped else float("inf"),
            "compression_factor": compression_factor(w),
            "sparsity": w.sparsity() if w.frozen is None else 1.0 - nnz / dense}


def freeze_for_inference(w: DopedWeight) -> DopedWeight:
    """Convert the masked dense doping term to CSR; idempotent."""
    if w.frozen is not None:
        return w
    frozen = csr_from_dense(w.ws, w.mask)
    return DopedWeight(structured=w.structured, ws=w.ws, mask=w.mask,
                       alpha=w.alpha, beta=w.beta, nnz_target=w.nnz_target,
                       frozen=frozen)
