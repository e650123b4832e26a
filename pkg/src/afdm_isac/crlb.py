"""Cramer-Rao bounds for the angle/range/delay/Doppler/gain parameters.

Parameter vector order: ``[theta (R), r0 (R), tau (R), f_d (R), phi (R), gamma (R)]``
in physical units (rad, m, s, Hz, rad, complex).  ``gamma`` is handled as a
single complex parameter per target; ``split_gamma=True`` instead treats
its real and imaginary parts as two real parameters.

The analytic FIM is assembled from per-unfolding score vectors and the
cross-covariances of the noise between unfoldings.  An independent
finite-difference construction is provided as a test oracle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .channel import (SceneConfig, Target, apply_delay, factor_matrices, rx_steering,
                      synthesize_tensor, tx_steering)
from .tensor import khatri_rao, unfold
from .waveform import AfdmConfig, daft, idaft

PARAM_NAMES = ("theta", "r0", "tau", "f_d", "phi", "gamma")
_MODE = {"theta": 1, "r0": 1, "tau": 2, "f_d": 2, "phi": 3, "gamma": 3}


# --- derivative vectors -----------------------------------------------------

def d_ar_dtheta(target: Target, scene: SceneConfig) -> np.ndarray:
    lam, d = scene.wavelength, scene.d_rx
    th = target.theta
    drho = -2 * math.pi * d / lam * math.cos(th)
    dxi = 0.0 if target.far_field else -math.pi * d**2 / (lam * target.range**2) * math.sin(th)
    g = np.arange(-scene.gx, scene.gx + 1, dtype=float)
    return 1j * (g * drho + g**2 * dxi) * rx_steering(th, target.range, scene)


def d_ar_dr0(target: Target, scene: SceneConfig) -> tuple[np.ndarray, bool]:
    """Range derivative and a flag that is False for far-field targets (zero vector)."""
    if target.far_field:
        return np.zeros(scene.g, dtype=complex), False
    lam, d, r0 = scene.wavelength, scene.d_rx, target.range
    dxi = -2 * math.pi * d**2 * math.cos(target.theta) / (lam * r0**3)
    g = np.arange(-scene.gx, scene.gx + 1, dtype=float)
    return 1j * g**2 * dxi * rx_steering(target.theta, r0, scene), True


def _db_dbeta_dnu(target: Target, frame: np.ndarray, cfg: AfdmConfig):
    n = cfg.n_sub
    beta, nu = target.beta(cfg), target.nu(cfg)
    s = idaft(frame, cfg)
    q = np.arange(n)
    rot = np.exp(2j * np.pi * nu * q / n)
    shifted = apply_delay(s, beta)
    dshift = np.fft.ifft(-2j * np.pi * q / n * np.exp(-2j * np.pi * q * beta / n) * np.fft.fft(s))
    db_dbeta = daft(rot * dshift, cfg)
    db_dnu = daft(2j * np.pi * q / n * rot * shifted, cfg)
    return db_dbeta, db_dnu


def d_b_dtau(target: Target, frame: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    return _db_dbeta_dnu(target, frame, cfg)[0] / cfg.ts


def d_b_dfd(target: Target, frame: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    return _db_dbeta_dnu(target, frame, cfg)[1] / cfg.delta_f


def d_at_dphi(target: Target, scene: SceneConfig) -> tuple[np.ndarray, np.ndarray]:
    """Bare derivative of the transmit response and its gain-scaled version."""
    k = np.arange(scene.k_tx)
    d = -1j * np.pi * k * math.cos(target.phi) * tx_steering(target.phi, scene.k_tx)
    return d, target.gamma * d


# --- noise cross-covariance -------------------------------------------------

class NoiseCrossCov:
    """``E{vec(W_(p)^H) vec(W_(q)^T)^T}`` for white noise, as a permutation operator.

    Both vectorizations enumerate every tensor entry exactly once, so the
    covariance is ``sigma2`` times the permutation matching equal entries.
    """

    def __init__(self, p: int, q: int, dims: tuple[int, int, int], sigma2: float):
        if p == q or p not in (1, 2, 3) or q not in (1, 2, 3):
            raise ValueError("need two distinct modes in {1, 2, 3}")
        self.p, self.q, self.dims, self.sigma2 = p, q, tuple(dims), float(sigma2)
        self.idx_p = vec_order(p, self.dims)
        self.idx_q = vec_order(q, self.dims)
        inv_q = np.empty_like(self.idx_q)
        inv_q[self.idx_q] = np.arange(self.idx_q.size)
        self._src = inv_q[self.idx_p]  # row i of C has its single nonzero at column _src[i]

    @property
    def shape(self):
        n = self.idx_p.size
        return (n, n)

    def apply(self, x: np.ndarray) -> np.ndarray:
        """``C @ x`` (``x`` may carry extra trailing columns)."""
        return self.sigma2 * np.asarray(x)[self._src]

    def rapply(self, x: np.ndarray) -> np.ndarray:
        """``x^T @ C`` for a vector or a stack of row vectors on the last axis."""
        x = np.asarray(x)
        out = np.empty_like(x)
        out[..., self._src] = x
        return self.sigma2 * out

    def adjoint(self) -> "NoiseCrossCov":
        return NoiseCrossCov(self.q, self.p, self.dims, self.sigma2)

    def todense(self) -> np.ndarray:
        n = self.idx_p.size
        m = np.zeros((n, n))
        m[np.arange(n), self._src] = self.sigma2
        return m


def vec_order(mode: int, dims) -> np.ndarray:
    """Flat ``[g, m, k]`` index of each position of ``vec(W_(mode)^H)``."""
    flat = np.arange(int(np.prod(dims))).reshape(dims)
    return unfold(flat, mode).ravel()


def noise_cross_cov(p: int, q: int, dims, sigma2: float) -> NoiseCrossCov:
    return NoiseCrossCov(p, q, dims, sigma2)


# --- FIM assembly -------------------------------------------------------------

@dataclass(frozen=True)
class FimInput:
    scene: SceneConfig
    cfg: AfdmConfig
    frame: np.ndarray
    sigma2: float

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError("sigma2 must be positive")
        if not self.scene.targets:
            raise ValueError("scene has no targets")


def _score_vectors(inp: FimInput) -> dict[str, list[np.ndarray]]:
    """Per parameter, the length-GNK vectors ``kron(d_r, kr_r)`` in its unfolding's order."""
    scene, cfg, frame = inp.scene, inp.cfg, inp.frame
    gamma, a, b, a_t = factor_matrices(scene, frame, cfg)
    c = a_t * gamma[None, :]
    kr1 = khatri_rao(c, b)  # mode-1 columns
    kr2 = khatri_rao(c, a)  # mode-2 columns
    kr3 = khatri_rao(b, a)  # mode-3 columns
    out = {name: [] for name in PARAM_NAMES}
    for r, t in enumerate(scene.targets):
        out["theta"].append(np.kron(d_ar_dtheta(t, scene), kr1[:, r]))
        out["r0"].append(np.kron(d_ar_dr0(t, scene)[0], kr1[:, r]))
        db_beta, db_nu = _db_dbeta_dnu(t, frame, cfg)
        out["tau"].append(np.kron(db_beta / cfg.ts, kr2[:, r]))
        out["f_d"].append(np.kron(db_nu / cfg.delta_f, kr2[:, r]))
        out["phi"].append(np.kron(d_at_dphi(t, scene)[1], kr3[:, r]))
        out["gamma"].append(np.kron(a_t[:, r], kr3[:, r]))
    return out


def assemble_fim(inp: FimInput) -> np.ndarray:
    """``6R x 6R`` Hermitian FIM.

    For score vectors ``n_P`` of parameter types ``P, Q``:

        C_PQ = E{n_P n_Q^H} = sigma^-4 U_P^T C_{w_p, w_q} conj(U_Q)

    (``sigma^-2 U_P^T conj(U_Q)`` within one unfolding).  Real/real blocks are
    ``C + conj(C)``, every block involving ``gamma`` is ``conj(C)``.
    """
    dims = (inp.scene.g, inp.cfg.n_sub, inp.scene.k_tx)
    s2 = inp.sigma2
    vecs = {k: np.array(v) for k, v in _score_vectors(inp).items()}  # R x GNK each
    r = len(inp.scene.targets)
    fim = np.zeros((6 * r, 6 * r), dtype=complex)
    for i, pn in enumerate(PARAM_NAMES):
        for j, qn in enumerate(PARAM_NAMES):
            if j < i:
                continue
            p, q = _MODE[pn], _MODE[qn]
            if p == q:
                cpq = vecs[pn] @ vecs[qn].conj().T / s2
            else:
                cw = NoiseCrossCov(p, q, dims, s2)
                cpq = cw.rapply(vecs[pn]) @ vecs[qn].conj().T / s2**2
            if pn != "gamma" and qn != "gamma":
                blk = 2 * cpq.real
            else:
                blk = cpq.conj()
            fim[i * r:(i + 1) * r, j * r:(j + 1) * r] = blk
            if j > i:
                fim[j * r:(j + 1) * r, i * r:(i + 1) * r] = blk.conj().T
    return fim


def assemble_fim_split(inp: FimInput) -> np.ndarray:
    """``7R x 7R`` real FIM with ``gamma`` split into real and imaginary parts."""
    jac = analytic_jacobian(inp)
    jac = np.concatenate([jac[:5 * len(inp.scene.targets)],
                          jac[5 * len(inp.scene.targets):],
                          1j * jac[5 * len(inp.scene.targets):]])
    return 2 * (jac.conj() @ jac.T).real / inp.sigma2


def analytic_jacobian(inp: FimInput) -> np.ndarray:
    """Rows: derivative of the flat noise-free cube w.r.t. each parameter (gamma: holomorphic)."""
    dims = (inp.scene.g, inp.cfg.n_sub, inp.scene.k_tx)
    vecs = _score_vectors(inp)
    rows = []
    for name in PARAM_NAMES:
        inv = np.empty(int(np.prod(dims)), dtype=int)
        order = vec_order(_MODE[name], dims)
        inv[order] = np.arange(order.size)
        rows.extend(v[inv] for v in vecs[name])
    return np.array(rows)


# --- independent finite-difference route -------------------------------------

def _perturb(t: Target, name: str, h) -> Target:
    if name == "gamma":
        return replace(t, gamma=t.gamma + h)
    attr = "range" if name == "r0" else name
    return replace(t, **{attr: getattr(t, attr) + h})


def _fd_steps(t: Target, cfg: AfdmConfig) -> dict[str, float]:
    return {"theta": 1e-6, "r0": 1e-6 * t.range if not t.far_field else 0.0,
            "tau": 1e-6 * cfg.ts, "f_d": 1e-6 * cfg.delta_f, "phi": 1e-6,
            "gamma": 1e-6 * max(abs(t.gamma), 1.0)}


def fd_jacobian(inp: FimInput) -> np.ndarray:
    """Central-difference Jacobian of the synthesized cube (rows as in :func:`analytic_jacobian`)."""
    scene, cfg, frame = inp.scene, inp.cfg, inp.frame
    rows = []
    for name in PARAM_NAMES:
        for r, t in enumerate(scene.targets):
            h = _fd_steps(t, cfg)[name]
            if h == 0.0:
                rows.append(np.zeros(scene.g * cfg.n_sub * scene.k_tx, dtype=complex))
                continue
            tg = list(scene.targets)
            tg[r] = _perturb(t, name, h)
            xp = synthesize_tensor(scene.with_targets(tg), frame, cfg)[1]
            tg[r] = _perturb(t, name, -h)
            xm = synthesize_tensor(scene.with_targets(tg), frame, cfg)[1]
            rows.append(((xp - xm) / (2 * h)).ravel())
    return np.array(rows)


def fd_fim_oracle(inp: FimInput) -> np.ndarray:
    """FIM in Gram form from a finite-difference Jacobian.

    ``Omega_ij = (J_i^H J_j + [i, j real] conj(J_i^H J_j)) / sigma^2``, the
    expected outer product of the log-likelihood score.
    """
    jac = fd_jacobian(inp)
    r = len(inp.scene.targets)
    gram = jac.conj() @ jac.T / inp.sigma2
    real = np.arange(6 * r) < 5 * r
    both = real[:, None] & real[None, :]
    return np.where(both, 2 * gram.real, gram)


# --- bounds -------------------------------------------------------------------

@dataclass
class CrlbReport:
    crlb_theta: np.ndarray
    crlb_r0: np.ndarray
    crlb_tau: np.ndarray
    crlb_fd: np.ndarray
    crlb_phi: np.ndarray
    crlb_gamma: np.ndarray
    fim: np.ndarray
    condition_number: float
    singular: bool = False

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"theta": self.crlb_theta, "r0": self.crlb_r0, "tau": self.crlb_tau,
                "f_d": self.crlb_fd, "phi": self.crlb_phi, "gamma": self.crlb_gamma}


def crlb_bounds(fim: np.ndarray, far_field=None, rcond: float = 1e-12,
                split_gamma: bool = False) -> CrlbReport:
    """Invert the FIM (equilibrated pseudo-inverse) and read off per-parameter bounds.

    Rows/columns of ``r0`` for far-field targets (``far_field[r]`` True) are
    excluded and reported as NaN.  With ``split_gamma`` the matrix is the
    ``7R`` real form and ``crlb_gamma`` sums the real and imaginary bounds.
    """
    fim = np.asarray(fim)
    nblk = 7 if split_gamma else 6
    r = fim.shape[0] // nblk
    if fim.shape != (nblk * r, nblk * r):
        raise ValueError("FIM size is not a multiple of the parameter count")
    far = np.zeros(r, bool) if far_field is None else np.asarray(far_field, bool)
    keep = np.ones(nblk * r, bool)
    keep[r:2 * r] = ~far
    sub = fim[np.ix_(keep, keep)]
    d = np.sqrt(np.abs(np.diag(sub)).clip(min=1e-300))
    eq = sub / np.outer(d, d)
    sv = np.linalg.svd(eq, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
    singular = bool(sv[-1] <= rcond * sv[0])
    inv = np.linalg.pinv(eq, rcond=rcond, hermitian=True) / np.outer(d, d)
    diag = np.full(nblk * r, np.nan)
    diag[keep] = np.diag(inv).real
    blocks = [diag[i * r:(i + 1) * r] for i in range(nblk)]
    gamma = blocks[5] + blocks[6] if split_gamma else blocks[5]
    return CrlbReport(blocks[0], blocks[1], blocks[2], blocks[3], blocks[4], gamma,
                      fim, cond, singular)


def compute_crlb(scene: SceneConfig, cfg: AfdmConfig, frame: np.ndarray, sigma2: float,
                 split_gamma: bool = False) -> CrlbReport:
    inp = FimInput(scene, cfg, frame, sigma2)
    fim = assemble_fim_split(inp) if split_gamma else assemble_fim(inp)
    far = [t.far_field for t in scene.targets]
    return crlb_bounds(fim, far, split_gamma=split_gamma)


__all__ = [
    "PARAM_NAMES", "d_ar_dtheta", "d_ar_dr0", "d_b_dtau", "d_b_dfd", "d_at_dphi",
    "NoiseCrossCov", "vec_order", "noise_cross_cov", "FimInput", "assemble_fim",
    "assemble_fim_split", "analytic_jacobian", "fd_jacobian", "fd_fim_oracle",
    "CrlbReport", "crlb_bounds", "compute_crlb",
]
