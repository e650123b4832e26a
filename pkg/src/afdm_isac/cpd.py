"""Structured CP decomposition of the smoothed received matrix, plus an ALS baseline.

The structured route exploits the Vandermonde transmit factor: after a
truncated SVD of the smoothed matrix, a shift-invariance eigenproblem gives
the transmit generators directly, and the receive and DAF factors follow by
linear back-substitution.  No iterations are involved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import SmoothingPlan, khatri_rao, smooth_tensor, unfold


class CpdError(RuntimeError):
    """Raised when the decomposition is numerically ill-posed."""


@dataclass
class FactorEstimates:
    """Recovered factor matrices, columns jointly ordered.

    ``mixing`` (M) and ``dual_mixing`` (P = M^-T) are only set by the
    structured decomposition.
    """

    a_r_hat: np.ndarray
    b_c_hat: np.ndarray
    a_t_hat: np.ndarray
    generators: np.ndarray
    mixing: np.ndarray | None = None
    dual_mixing: np.ndarray | None = None
    singular_values: np.ndarray | None = None
    converged: bool = True
    iterations: int = 0

    @property
    def rank(self) -> int:
        return self.a_t_hat.shape[1]

    def permuted(self, perm) -> "FactorEstimates":
        perm = np.asarray(perm)
        return FactorEstimates(
            self.a_r_hat[:, perm], self.b_c_hat[:, perm], self.a_t_hat[:, perm],
            self.generators[perm],
            None if self.mixing is None else self.mixing[:, perm],
            None if self.dual_mixing is None else self.dual_mixing[:, perm],
            self.singular_values, self.converged, self.iterations)


def truncated_svd(upsilon: np.ndarray, rank: int):
    """Leading ``rank`` singular triplets ``(U, s, V)`` with ``Upsilon ~ U diag(s) V^H``."""
    if not 1 <= rank <= min(upsilon.shape):
        raise ValueError(f"rank {rank} outside [1, {min(upsilon.shape)}]")
    u, s, vh = np.linalg.svd(upsilon, full_matrices=False)
    return u[:, :rank], s[:rank], vh[:rank].conj().T


def _pinv_checked(a: np.ndarray, rcond: float = 1e-10) -> np.ndarray:
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    if s.size == 0 or s[-1] <= rcond * s[0]:
        raise CpdError("shift-invariance subspace is rank deficient")
    return (vh.conj().T / s) @ u.conj().T


def esprit_generators(u: np.ndarray, g: int, k3: int):
    """Transmit generators from the shift invariance of the signal subspace.

    Returns ``(generators, M)``; generators are projected onto the unit
    circle and ``M`` holds the matching eigenvectors as columns.
    """
    if k3 < 2:
        raise ValueError("k3 must be at least 2")
    if u.shape[0] != k3 * g:
        raise ValueError("row count does not equal k3 * g")
    u1 = u[: (k3 - 1) * g]
    u2 = u[g: k3 * g]
    evals, m = np.linalg.eig(_pinv_checked(u1) @ u2)
    if np.any(np.abs(evals) < 1e-12):
        raise CpdError("vanishing generator eigenvalue")
    return evals / np.abs(evals), m


def rebuild_at(generators, k_tx: int) -> np.ndarray:
    """Vandermonde transmit matrix ``[1, z, z^2, ...]`` per column."""
    z = np.asarray(generators)
    return z[None, :] ** np.arange(k_tx)[:, None]


def rebuild_ar(u: np.ndarray, m: np.ndarray, a_t_hat: np.ndarray, plan: SmoothingPlan, g: int) -> np.ndarray:
    """Receive factor, each column scaled so its middle (reference) entry is one."""
    um = (u @ m).reshape(plan.k3, g, -1)  # [k, g, r]
    at = a_t_hat[: plan.k3]
    a_r = np.einsum("kr,kgr->gr", at.conj(), um)
    ref = a_r[g // 2]
    if np.any(np.abs(ref) < 1e-14 * np.abs(a_r).max(axis=0)):
        raise CpdError("receive factor has a vanishing reference entry")
    return a_r / ref


def rebuild_bc(v: np.ndarray, s: np.ndarray, p: np.ndarray, a_t_hat: np.ndarray,
               plan: SmoothingPlan, n_sub: int) -> np.ndarray:
    """DAF-domain factor from the right singular vectors (up to per-column scale)."""
    w = (v.conj() * s) @ p  # (L3 N) x R
    w = w.reshape(plan.l3, n_sub, -1)  # [l, m, r]
    at = a_t_hat[: plan.l3]
    norm = np.sum(np.abs(at) ** 2, axis=0)
    return np.einsum("lr,lmr->mr", at.conj(), w) / norm


def structured_cpd(y: np.ndarray, rank: int, plan: SmoothingPlan | None = None) -> FactorEstimates:
    """Algebraic CPD of a ``[g, m, k]`` cube with a Vandermonde transmit factor."""
    g, n, k = y.shape
    plan = plan or SmoothingPlan.for_k(k)
    plan.check(k)
    if rank > min((plan.k3 - 1) * g, plan.l3 * n):
        raise CpdError("rank exceeds what the smoothing plan can resolve")
    u, s, v = truncated_svd(smooth_tensor(y, plan), rank)
    z, m = esprit_generators(u, g, plan.k3)
    order = np.argsort(np.angle(z), kind="stable")
    z, m = z[order], m[:, order]
    p = np.linalg.inv(m).T
    a_t = rebuild_at(z, k)
    a_r = rebuild_ar(u, m, a_t, plan, g)
    b_c = rebuild_bc(v, s, p, a_t, plan, n)
    return FactorEstimates(a_r, b_c, a_t, z, m, p, s)


def refit_scales(y: np.ndarray, a_r: np.ndarray, b_c: np.ndarray, a_t: np.ndarray) -> np.ndarray:
    """Least-squares weights ``gamma`` so that ``sum_r gamma_r a_r o b_r o c_r`` best fits ``y``."""
    design = khatri_rao(a_r, khatri_rao(b_c, a_t))  # row g*N*K + m*K + k
    gamma, *_ = np.linalg.lstsq(design, y.reshape(-1), rcond=None)
    return gamma


def _leading_subspaces(y: np.ndarray, rank: int):
    return [np.linalg.svd(unfold(y, mode), full_matrices=False)[0][:, :rank] for mode in (1, 2, 3)]


def _random_subspace_init(bases, rank: int, seed):
    """Seeded random combinations of the leading singular vectors of each unfolding."""
    rng = np.random.default_rng(seed)
    out = []
    for u in bases:
        r = u.shape[1]
        mix = rng.standard_normal((r, rank)) + 1j * rng.standard_normal((r, rank))
        out.append(u @ mix)
    return out


def als_baseline(y: np.ndarray, rank: int, max_iter: int = 500, tol: float = 1e-9,
                 seed=None, init: FactorEstimates | None = None, n_starts: int = 1) -> FactorEstimates:
    """Plain alternating least squares on the three unfoldings.

    Without ``init`` the factors start from seeded random combinations of
    each unfolding's leading singular vectors.  ``n_starts > 1`` runs that
    many independent starts (spawned from ``seed``) and keeps the best fit;
    ALS on this model has degenerate local minima that a single start can
    fall into.

    Columns are returned with unit reference entries in the receive and
    transmit factors (all scale absorbed into the DAF factor) and sorted by
    transmit generator phase.  ``converged`` is False when ``max_iter`` ran out.
    """
    if rank < 1:
        raise ValueError("rank must be >= 1")
    if init is not None:
        return _als_run(y, (init.a_r_hat.copy(), init.b_c_hat.copy(), init.a_t_hat.copy()),
                        max_iter, tol)[0]
    bases = _leading_subspaces(y, rank)
    best, best_fit = None, np.inf
    for child in np.random.SeedSequence(seed).spawn(max(1, n_starts)):
        est, fit = _als_run(y, _random_subspace_init(bases, rank, child), max_iter, tol)
        if fit < best_fit:
            best, best_fit = est, fit
        if best_fit < 1e-10:
            break
    return best


def _als_run(y, factors, max_iter, tol):
    g, n, k = y.shape
    a, b, c = factors
    rank = a.shape[1]
    y1, y2, y3 = unfold(y, 1), unfold(y, 2), unfold(y, 3)
    ynorm2 = np.vdot(y, y).real
    prev = fit = np.inf
    converged = False
    it = 0

    def solve(mttkrp, g1, g2):
        # normal equations with the Hadamard-structured Gram matrix
        return np.linalg.solve(g1 * g2, mttkrp.T).T

    for it in range(1, max_iter + 1):
        a = solve(y1 @ khatri_rao(c, b).conj(), c.conj().T @ c, b.conj().T @ b)
        a /= np.linalg.norm(a, axis=0)
        c = solve(y3 @ khatri_rao(b, a).conj(), b.conj().T @ b, a.conj().T @ a)
        c /= np.linalg.norm(c, axis=0)
        mt = y2 @ khatri_rao(c, a).conj()
        gram = (c.conj().T @ c) * (a.conj().T @ a)
        b = solve(mt, c.conj().T @ c, a.conj().T @ a)
        # |Y - X|^2 = |Y|^2 - 2 Re<X, Y> + |X|^2 without forming X
        resid2 = ynorm2 - 2 * np.sum(b.conj() * mt).real + np.sum((b.conj().T @ b) * gram).real
        fit = np.sqrt(max(resid2, 0.0) / ynorm2)
        if abs(prev - fit) <= tol * fit or fit < 1e-12:
            converged = True
            break
        prev = fit
    # move all scale into b
    ra, rc = a[g // 2].copy(), c[0].copy()
    a, c, b = a / ra, c / rc, b * (ra * rc)
    z = np.exp(1j * np.angle(np.sum(c[1:] * c[:-1].conj(), axis=0))) if k > 1 else np.ones(rank, complex)
    order = np.argsort(np.angle(z), kind="stable")
    est = FactorEstimates(a[:, order], b[:, order], c[:, order], z[order],
                          converged=converged, iterations=it)
    return est, fit


def column_correlation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Absolute normalized inner product between matching columns."""
    num = np.abs(np.sum(a.conj() * b, axis=0))
    return num / (np.linalg.norm(a, axis=0) * np.linalg.norm(b, axis=0))


def match_columns(ref: np.ndarray, est: np.ndarray) -> np.ndarray:
    """Permutation ``perm`` maximizing total correlation of ``est[:, perm]`` with ``ref``."""
    from scipy.optimize import linear_sum_assignment

    corr = np.abs(ref.conj().T @ est)
    corr /= np.outer(np.linalg.norm(ref, axis=0), np.linalg.norm(est, axis=0))
    _, cols = linear_sum_assignment(-corr)
    return cols


__all__ = [
    "CpdError", "FactorEstimates", "truncated_svd", "esprit_generators", "rebuild_at",
    "rebuild_ar", "rebuild_bc", "structured_cpd", "refit_scales", "als_baseline",
    "column_correlation", "match_columns",
]
