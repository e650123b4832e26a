"""Per-target parameter extraction from recovered CP factors.

* AoD from the transmit Vandermonde generator.
* AoA from a propagator-style projection built on the receive column's
  anti-diagonal correlations (range-independent).
* Delay and Doppler from DAF-domain pulse compression followed by an
  alternating golden-section refinement of a matched-filter objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import SceneConfig, channel_time_response
from .cpd import FactorEstimates, refit_scales, structured_cpd
from .tensor import SmoothingPlan, cp_reconstruct, estimate_rank, smooth_tensor
from .waveform import AfdmConfig, idaft

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AoaSearchConfig:
    """Grid search settings for the AoA spectrum.

    Attributes:
        grid_step: Grid resolution in radians.
        lo, hi: Search interval in radians.
        refine: Apply iterated 3-point parabolic refinement at the minimum.
        d_over_lambda: Receive element spacing in wavelengths.
    """

    grid_step: float = math.radians(0.1)
    lo: float = -math.pi / 2
    hi: float = math.pi / 2
    refine: bool = True
    d_over_lambda: float = 0.25

    def __post_init__(self):
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if not self.lo < self.hi:
            raise ValueError("empty search interval")


@dataclass(frozen=True)
class DelayDopplerEstimate:
    beta_hat: float
    nu_hat: float
    tau_hat: float
    fd_hat: float
    loc_hat: float
    iterations: int
    objective: float = float("nan")


# --- angles -----------------------------------------------------------------

def estimate_aod(generator: complex) -> float:
    """Transmit angle from a unit-modulus Vandermonde generator."""
    return float(np.arcsin(np.clip(np.angle(generator) / -np.pi, -1.0, 1.0)))


def aoa_toeplitz(a_r_col: np.ndarray) -> np.ndarray:
    """``(Gx+1) x (Gx+1)`` Toeplitz matrix of anti-diagonal correlations.

    Entry ``(p, q)`` is ``a[Gx + p - q] * conj(a[Gx - p + q])``, which for a
    model steering vector equals ``exp(j 2 (p - q) rho)``: the quadratic
    range term cancels.
    """
    a = np.asarray(a_r_col, dtype=complex)
    if a.ndim != 1 or a.size % 2 == 0:
        raise ValueError("receive column must have odd length")
    gx = a.size // 2
    lags = np.arange(-gx, gx + 1)
    c = a[gx + lags] * np.conj(a[gx - lags])  # c[lag + gx] ~ exp(j 2 lag rho)
    p = np.arange(gx + 1)
    return c[gx + p[:, None] - p[None, :]]


def aoa_projector(a_r_col: np.ndarray) -> np.ndarray:
    """Noise-subspace projector obtained without an eigendecomposition."""
    t = aoa_toeplitz(a_r_col)
    t1, t2 = t[:1], t[1:]
    den = (t1 @ t1.conj().T).real.item()
    if den < 1e-30:
        raise ValueError("degenerate receive column")
    p = (t1 @ t2.conj().T) / den  # 1 x Gx
    q = np.vstack([p, -np.eye(t2.shape[0])])
    return q @ np.linalg.solve(q.conj().T @ q, q.conj().T)


def aoa_spectrum(proj: np.ndarray, theta, d_over_lambda: float = 0.25) -> np.ndarray:
    """Objective ``a(theta)^H Pi a(theta)`` for the doubled-phase search vector."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    g = np.arange(proj.shape[0])
    rho = -2 * np.pi * d_over_lambda * np.sin(theta)
    a = np.exp(2j * g[:, None] * rho[None, :])
    return np.einsum("gt,gh,ht->t", a.conj(), proj, a).real


def estimate_aoa(a_r_col: np.ndarray, cfg: AoaSearchConfig = AoaSearchConfig()) -> float:
    """Receive angle minimizing the projection spectrum."""
    proj = aoa_projector(a_r_col)
    grid = np.arange(cfg.lo + cfg.grid_step / 2, cfg.hi, cfg.grid_step)
    spec = aoa_spectrum(proj, grid, cfg.d_over_lambda)
    i = int(np.argmin(spec))
    theta = float(grid[i])
    if not cfg.refine:
        return theta
    h = cfg.grid_step
    for _ in range(8):
        f = aoa_spectrum(proj, [theta - h, theta, theta + h], cfg.d_over_lambda)
        curv = f[0] - 2 * f[1] + f[2]
        if curv > 0:
            theta += float(np.clip(0.5 * h * (f[0] - f[2]) / curv, -h, h))
        h /= 10
    return float(np.clip(theta, cfg.lo, cfg.hi))


# --- delay and Doppler ------------------------------------------------------

def pulse_compress(b_hat: np.ndarray, frame: np.ndarray, cfg: AfdmConfig,
                   delay_index: str = "floor"):
    """Delay-compensated DAF-domain correlation.

    Returns ``(|u|, u)`` where

        u[p] = sum_m conj(b[m]) x[(m+p) % N] exp(-j 2 pi q(p) ((m+p) % N) / N)

    so that a path at integer location ``loc`` peaks at ``p = loc``.  The
    compensating delay ``q(p)`` is ``floor((p + 1) / (2 N c1))`` by default,
    which is exact for integer Doppler in ``[-1, 2 N c1 - 2]``.  With
    ``delay_index="lattice"`` it is the wrap-aware nearest-lattice delay used
    by :func:`decode_integer`, exact for any Doppler within the guard band.
    """
    b_hat = np.asarray(b_hat, dtype=complex)
    frame = np.asarray(frame, dtype=complex)
    n = cfg.n_sub
    if b_hat.shape != (n,) or frame.shape != (n,):
        raise ValueError("b_hat and frame must both have length n_sub")
    p = np.arange(n)
    if delay_index == "floor":
        q = (p + 1) // cfg.loc_step
    elif delay_index == "lattice":
        q = _lattice_delay(p, cfg)
    else:
        raise ValueError("delay_index must be 'floor' or 'lattice'")
    idx = (p[:, None] + p[None, :]) % n  # [p, m] -> (m + p) mod N
    kern = frame[idx] * np.exp(-2j * np.pi * q[:, None] * idx / n)
    u = kern @ b_hat.conj()
    return np.abs(u), u


def _lattice_offsets(loc, cfg: AfdmConfig):
    """Wrapped offsets ``2 N c1 ell - loc`` in ``[-N/2, N/2)`` for every ``ell``."""
    n = cfg.n_sub
    ells = np.arange(cfg.ell_max + 1)
    loc = np.asarray(loc, dtype=float)
    return (cfg.loc_step * ells - loc[..., None] + n / 2) % n - n / 2


def _lattice_delay(loc, cfg: AfdmConfig) -> np.ndarray:
    return np.argmin(np.abs(_lattice_offsets(loc, cfg)), axis=-1)


def decode_integer(loc_hat: float, cfg: AfdmConfig) -> tuple[int, int]:
    """Nearest lattice point ``loc = 2 N c1 ell - alpha (mod N)``."""
    raw = _lattice_offsets(loc_hat, cfg)
    ell = int(np.argmin(np.abs(raw)))
    span = cfg.doppler_span
    alpha = int(np.clip(np.round(raw[ell]), -span, span))
    return ell, alpha


def golden_section_max(f, lo: float, hi: float, tol: float = 1e-4, max_iter: int = 40):
    """Maximize a unimodal ``f`` on ``[lo, hi]``.

    One new probe per step, so the bracket shrinks by ``GOLDEN`` each
    iteration.  Returns ``(x, n_iter, width)`` with ``x`` the bracket midpoint.
    """
    a, b = float(lo), float(hi)
    x1, x2 = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    f1, f2 = f(x1), f(x2)
    n_iter = 0
    while (b - a) >= tol and n_iter < max_iter:
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - GOLDEN * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (b - a)
            f2 = f(x2)
        n_iter += 1
    return 0.5 * (a + b), n_iter, b - a


def matched_objective(s: np.ndarray, y: np.ndarray, beta: float, nu: float) -> float:
    """``|<channel(s; beta, nu), y>|^2`` in the time domain."""
    return abs(np.vdot(channel_time_response(s, beta, nu), y)) ** 2


def _clip_params(beta, nu, cfg: AfdmConfig):
    # delay within the prefix, Doppler within the DAF guard band
    return (float(np.clip(beta, 0.0, cfg.ell_max + 0.5)),
            float(np.clip(nu, -cfg.doppler_span, cfg.doppler_span)))


def refine_delay_doppler(b_hat: np.ndarray, frame: np.ndarray, cfg: AfdmConfig,
                         init: tuple[float, float], t_outer: int = 3,
                         tol: float = 1e-4, max_inner: int = 40,
                         history: list | None = None) -> DelayDopplerEstimate:
    """Alternating golden-section search for fractional delay and Doppler.

    Each outer round first maximizes over Doppler in ``[nu - 1, nu + 1]`` with
    the delay held, then over delay in ``[beta - 1, beta + 1]``.  When
    ``history`` is a list, the (clipped) estimate after every round is appended.
    """
    if t_outer < 1:
        raise ValueError("t_outer must be >= 1")
    s = idaft(frame, cfg)
    y = idaft(b_hat, cfg)
    beta, nu = float(init[0]), float(init[1])
    total = 0
    for _ in range(t_outer):
        nu, k, _ = golden_section_max(lambda v: matched_objective(s, y, beta, v), nu - 1, nu + 1, tol, max_inner)
        total += k
        beta, k, _ = golden_section_max(lambda l: matched_objective(s, y, l, nu), beta - 1, beta + 1, tol, max_inner)
        total += k
        if history is not None:
            history.append(_clip_params(beta, nu, cfg))
    obj = matched_objective(s, y, beta, nu)
    beta, nu = _clip_params(beta, nu, cfg)
    loc = (cfg.loc_step * beta - nu) % cfg.n_sub
    return DelayDopplerEstimate(beta, nu, beta * cfg.ts, nu * cfg.delta_f, loc, total, obj)


def delay_doppler_candidates(b_hat: np.ndarray, frame: np.ndarray, cfg: AfdmConfig):
    """Integer initializations from the compressed peak and its stronger neighbour."""
    mag, _ = pulse_compress(b_hat, frame, cfg)
    n = cfg.n_sub
    p = int(np.argmax(mag))
    nb = (p + 1) % n if mag[(p + 1) % n] > mag[(p - 1) % n] else (p - 1) % n
    cands = []
    for loc in (p, nb):
        c = decode_integer(loc, cfg)
        if c not in cands:
            cands.append(c)
    return p, cands


def estimate_delay_doppler(b_hat: np.ndarray, frame: np.ndarray, cfg: AfdmConfig,
                           t_outer: int = 3) -> DelayDopplerEstimate:
    """Pulse compression, integer decoding and golden-section refinement.

    A fractional path splits its energy over two adjacent DAF bins and the two
    bins decode to different integer Doppler values; both are refined and the
    one with the larger matched-filter objective is kept.
    """
    _, cands = delay_doppler_candidates(b_hat, frame, cfg)
    best = None
    for c in cands:
        est = refine_delay_doppler(b_hat, frame, cfg, c, t_outer)
        if best is None or est.objective > best.objective:
            best = est
    return best


# --- full pipeline ------------------------------------------------------------

@dataclass
class EstimationReport:
    """Per-target estimates in CPD column order plus diagnostics."""

    theta: np.ndarray
    phi: np.ndarray
    beta: np.ndarray
    nu: np.ndarray
    tau: np.ndarray
    f_d: np.ndarray
    rank: int
    mdl_rank: int | None
    cpd_residual: float
    iterations: list[int] = field(default_factory=list)
    factors: FactorEstimates | None = None
    permutation: np.ndarray | None = None

    def params(self) -> np.ndarray:
        """``R x 4`` array of ``(theta, phi, beta, nu)``."""
        return np.column_stack([self.theta, self.phi, self.beta, self.nu])

    def permuted(self, perm) -> "EstimationReport":
        perm = np.asarray(perm)
        return EstimationReport(
            self.theta[perm], self.phi[perm], self.beta[perm], self.nu[perm],
            self.tau[perm], self.f_d[perm], self.rank, self.mdl_rank, self.cpd_residual,
            [self.iterations[i] for i in perm],
            None if self.factors is None else self.factors.permuted(perm), perm)


def estimate_all(y: np.ndarray, frame: np.ndarray, cfg: AfdmConfig, scene: SceneConfig,
                 rank="auto", t_outer: int = 3, plan: SmoothingPlan | None = None,
                 aoa_cfg: AoaSearchConfig | None = None) -> EstimationReport:
    """Full angle/delay/Doppler estimation from a received cube.

    Args:
        y: Received ``[g, m, k]`` cube.
        frame: Transmitted DAF-domain frame.
        cfg: Waveform numerology.
        scene: Array geometry (targets are ignored).
        rank: Number of targets, or ``"auto"``/``"mdl"`` for MDL selection.
        t_outer: Outer rounds of the delay/Doppler refinement.

    Raises:
        CpdError: If the structured decomposition is ill-posed.
    """
    g, n, k = y.shape
    if (g, n, k) != (scene.g, cfg.n_sub, scene.k_tx):
        raise ValueError("cube shape does not match scene/numerology")
    plan = plan or SmoothingPlan.for_k(k)
    mdl = None
    if rank in ("auto", "mdl"):
        mdl = estimate_rank(smooth_tensor(y, plan), plan)
        rank = max(1, mdl)
    rank = int(rank)
    if aoa_cfg is None:
        aoa_cfg = AoaSearchConfig(d_over_lambda=scene.d_rx / scene.wavelength)
    fac = structured_cpd(y, rank, plan)
    gamma = refit_scales(y, fac.a_r_hat, fac.b_c_hat, fac.a_t_hat)
    resid = float(np.linalg.norm(y - cp_reconstruct(gamma, fac.a_r_hat, fac.b_c_hat, fac.a_t_hat))
                  / max(np.linalg.norm(y), 1e-300))
    theta = np.array([estimate_aoa(fac.a_r_hat[:, r], aoa_cfg) for r in range(rank)])
    phi = np.array([estimate_aod(z) for z in fac.generators])
    dd = [estimate_delay_doppler(fac.b_c_hat[:, r], frame, cfg, t_outer) for r in range(rank)]
    beta = np.array([d.beta_hat for d in dd])
    nu = np.array([d.nu_hat for d in dd])
    return EstimationReport(theta, phi, beta, nu, beta * cfg.ts, nu * cfg.delta_f, rank, mdl,
                            resid, [d.iterations for d in dd], fac)


__all__ = [
    "GOLDEN", "AoaSearchConfig", "DelayDopplerEstimate", "estimate_aod", "aoa_toeplitz",
    "aoa_projector", "aoa_spectrum", "estimate_aoa", "pulse_compress", "decode_integer",
    "golden_section_max", "matched_objective", "refine_delay_doppler",
    "delay_doppler_candidates", "estimate_delay_doppler", "EstimationReport", "estimate_all",
]
