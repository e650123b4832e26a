"""Third-order tensor utilities: unfoldings, Khatri-Rao products, smoothing, rank.

The received cube is stored as ``Y[g, m, k]``.  Mode ``p`` unfolding
``Y(p)`` puts the mode-``p`` index on the rows; the columns run over the
remaining two indices with the later mode varying slowest, so that

    Y(1) = A (C kr B)^T,  Y(2) = B (C kr A)^T,  Y(3) = C (B kr A)^T

for ``Y = [[A, B, C]]`` with ``kr`` the column-wise Kronecker product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_UNFOLD_AXES = {1: (0, 2, 1), 2: (1, 2, 0), 3: (2, 1, 0)}


def unfold(y: np.ndarray, mode: int) -> np.ndarray:
    """Mode-``mode`` (1, 2 or 3) matricization."""
    if y.ndim != 3:
        raise ValueError("expected a third-order tensor")
    axes = _UNFOLD_AXES.get(mode)
    if axes is None:
        raise ValueError("mode must be 1, 2 or 3")
    t = np.transpose(y, axes)
    return t.reshape(t.shape[0], -1)


def fold(mat: np.ndarray, mode: int, shape: tuple[int, int, int]) -> np.ndarray:
    """Inverse of :func:`unfold`."""
    axes = _UNFOLD_AXES[mode]
    tshape = tuple(shape[a] for a in axes)
    t = np.asarray(mat).reshape(tshape)
    return np.transpose(t, np.argsort(axes))


def khatri_rao(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Column-wise Kronecker product; column ``r`` is ``kron(a[:, r], b[:, r])``."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("factor matrices need the same number of columns")
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def cp_reconstruct(gamma, a_r: np.ndarray, b_c: np.ndarray, a_t: np.ndarray) -> np.ndarray:
    """Rebuild ``sum_r gamma_r a_r o b_r o c_r`` as a ``[g, m, k]`` cube."""
    gamma = np.asarray(gamma)
    r = gamma.shape[0]
    if not (a_r.shape[1] == b_c.shape[1] == a_t.shape[1] == r):
        raise ValueError("factor column counts do not match the weight vector")
    return np.einsum("r,gr,mr,kr->gmk", gamma, a_r, b_c, a_t)


def kruskal_rank(m: np.ndarray, tol: float = 1e-9) -> int:
    """Largest ``k`` such that every set of ``k`` columns is independent (brute force)."""
    from itertools import combinations

    m = np.asarray(m)
    r = m.shape[1]
    scale = max(np.linalg.norm(m, 2), 1e-300)
    for k in range(min(r, m.shape[0]), 0, -1):
        ok = True
        for cols in combinations(range(r), k):
            s = np.linalg.svd(m[:, cols], compute_uv=False)
            if s[-1] <= tol * scale:
                ok = False
                break
        if ok:
            return k
    return 0


def kruskal_generic(g: int, n: int, k: int, rank: int) -> bool:
    """Kruskal uniqueness bound assuming generic factors (k-rank = min(dim, R))."""
    return min(g, rank) + min(n, rank) + min(k, rank) >= 2 * rank + 2


@dataclass(frozen=True)
class SmoothingPlan:
    """Split of the transmit aperture into ``L3`` overlapping subarrays of ``K3`` elements.

    ``K3 + L3 = K + 1``.
    """

    k3: int
    l3: int

    def __post_init__(self):
        if self.k3 < 2 or self.l3 < 1:
            raise ValueError("need k3 >= 2 and l3 >= 1")

    @property
    def k(self) -> int:
        return self.k3 + self.l3 - 1

    @classmethod
    def for_k(cls, k: int, k3: int | None = None) -> "SmoothingPlan":
        """Plan for a ``k``-element transmit array; ``k3`` defaults to ``(k + 2) // 2``."""
        if k3 is None:
            k3 = max(2, (k + 2) // 2)
        if not 2 <= k3 <= k:
            raise ValueError(f"k3 must lie in [2, {k}]")
        return cls(k3=k3, l3=k - k3 + 1)

    def check(self, k: int) -> None:
        if self.k != k:
            raise ValueError(f"plan covers {self.k} transmit antennas, data has {k}")


def relaxed_unique(g: int, n: int, plan: SmoothingPlan, rank: int) -> bool:
    """Generic relaxed uniqueness condition exploited by the structured CPD."""
    return min((plan.k3 - 1) * g, plan.l3 * n) >= rank


def spatial_smooth(y2: np.ndarray, plan: SmoothingPlan, g: int) -> np.ndarray:
    """Smoothed matrix of shape ``(K3 G, L3 N)`` from the mode-2 unfolding.

    Block ``l`` is the transpose of ``Y(2)`` restricted to transmit antennas
    ``l .. l + K3 - 1``, so row ``k G + g`` and column ``l N + m`` hold
    ``Y[g, m, l + k]``.
    """
    y2 = np.asarray(y2)
    n, kg = y2.shape
    if kg % g:
        raise ValueError("column count is not a multiple of g")
    plan.check(kg // g)
    yt = y2.T
    rows = plan.k3 * g
    return np.concatenate([yt[l * g:l * g + rows] for l in range(plan.l3)], axis=1)


def smooth_tensor(y: np.ndarray, plan: SmoothingPlan) -> np.ndarray:
    """:func:`spatial_smooth` applied directly to a ``[g, m, k]`` cube."""
    return spatial_smooth(unfold(y, 2), plan, y.shape[0])


def mdl_scores(singular_values, n_samples: int, max_rank: int | None = None) -> np.ndarray:
    """MDL description length for every candidate order ``0 .. max_rank``.

    The criterion is evaluated on the squared singular values (the sample
    covariance eigenvalues); values below ``1e-10`` of the largest count as zero.
    """
    sv = np.asarray(singular_values, dtype=float)
    if sv.ndim != 1 or sv.size < 2:
        raise ValueError("need at least two singular values")
    if np.any(sv < 0) or np.any(np.diff(sv) > 1e-12 * max(sv[0], 1.0)):
        raise ValueError("singular values must be non-negative and sorted descending")
    p = sv.size
    if max_rank is None:
        max_rank = p - 1
    if not 0 <= max_rank < p:
        raise ValueError("max_rank must be smaller than the number of values")
    lam = sv**2
    lam = np.where(lam <= 1e-10 * lam[0], 0.0, lam)
    logn = math.log(n_samples)
    out = np.empty(max_rank + 1)
    for k in range(max_rank + 1):
        tail = lam[k:]
        am = tail.mean()
        if am <= 0:
            log_ratio = 0.0
        elif np.any(tail <= 0):
            log_ratio = -700.0
        else:
            log_ratio = np.mean(np.log(tail)) - math.log(am)
        out[k] = -n_samples * (p - k) * log_ratio + 0.5 * k * (2 * p - k) * logn
    return out


def mdl_rank(singular_values, n_samples: int, max_rank: int | None = None) -> int:
    """Model order minimizing the MDL criterion."""
    return int(np.argmin(mdl_scores(singular_values, n_samples, max_rank)))


def estimate_rank(upsilon: np.ndarray, plan: SmoothingPlan, max_rank: int | None = None) -> int:
    """MDL order of a smoothed matrix, with ``n_samples = L3 N``."""
    p, n_samples = upsilon.shape
    sv = np.linalg.svd(upsilon, compute_uv=False)
    full = np.zeros(p)
    full[: sv.size] = sv
    if max_rank is None:
        max_rank = min(p - 1, (plan.k3 - 1) * p // plan.k3)
    return mdl_rank(full, n_samples, max_rank)


__all__ = [
    "unfold", "fold", "khatri_rao", "cp_reconstruct", "kruskal_rank", "kruskal_generic",
    "SmoothingPlan", "relaxed_unique", "spatial_smooth", "smooth_tensor", "mdl_scores",
    "mdl_rank", "estimate_rank",
]
