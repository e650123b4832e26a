"""AFDM frame generation and the discrete affine Fourier transform pair.

The DAFT of a length-N time block ``s`` is ``x = L2 F L1 s`` where ``F`` is the
unitary DFT and ``Li = diag(exp(-j 2 pi ci n^2))``.  The inverse is the
conjugate-transpose chain ``s = L1^H F^H L2^H x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

SUPPORTED_QAM = (4, 16, 64)


def compute_c1(alpha_max: int, k_v: int, n_sub: int) -> Fraction:
    """Chirp parameter that separates all delay/Doppler paths in the DAF domain."""
    if n_sub <= 0:
        raise ValueError("n_sub must be positive")
    return Fraction(2 * (alpha_max + k_v) + 1, 2 * n_sub)


@dataclass(frozen=True)
class AfdmConfig:
    """Numerology of one AFDM symbol.

    ``c1`` defaults to :func:`compute_c1`; pass an explicit ``Fraction`` to
    override (e.g. ``Fraction(0)`` to degenerate into OFDM).
    """

    n_sub: int = 256
    alpha_max: int = 1
    k_v: int = 3
    ell_max: int = 12
    l_cpp: int = 12
    c2: float = 0.0
    delta_f: float = 30e3
    fc: float = 60e9
    c1: Fraction | None = field(default=None)

    def __post_init__(self):
        if self.n_sub <= 0:
            raise ValueError("n_sub must be positive")
        if min(self.alpha_max, self.k_v, self.ell_max, self.l_cpp) < 0:
            raise ValueError("delay/Doppler budgets must be non-negative")
        if self.c1 is None:
            object.__setattr__(self, "c1", compute_c1(self.alpha_max, self.k_v, self.n_sub))
        else:
            object.__setattr__(self, "c1", Fraction(self.c1))

    @property
    def ts(self) -> float:
        """Sampling interval ``T_s = 1 / (N delta_f)``."""
        return 1.0 / (self.n_sub * self.delta_f)

    @property
    def loc_step(self) -> int:
        """``2 N c1`` as an exact integer (raises if it is not one)."""
        v = 2 * self.n_sub * self.c1
        if v.denominator != 1:
            raise ValueError(f"2*N*c1 = {v} is not an integer")
        return int(v)

    @property
    def doppler_span(self) -> int:
        return self.alpha_max + self.k_v

    def cpp_is_cyclic(self) -> bool:
        """True when the chirp-periodic prefix collapses to a cyclic prefix."""
        return self.n_sub % 2 == 0 and (2 * self.n_sub * self.c1).denominator == 1

    def validate(self) -> None:
        """Raise ``ValueError`` if any numerology invariant is violated."""
        if not self.cpp_is_cyclic():
            raise ValueError("n_sub must be even and 2*n_sub*c1 an integer")
        if not check_diversity(self):
            raise ValueError("delay/Doppler budget violates the full-diversity condition")
        if self.l_cpp < self.ell_max:
            raise ValueError("l_cpp must cover the maximum delay")


def check_diversity(cfg: AfdmConfig) -> bool:
    a = 2 * (cfg.alpha_max + cfg.k_v)
    return a + cfg.ell_max + a * cfg.ell_max < cfg.n_sub


@lru_cache(maxsize=64)
def chirp_diag(c, n_sub: int) -> np.ndarray:
    """Diagonal of ``Lambda_c = diag(exp(-j 2 pi c n^2))``.

    Rational ``c`` is reduced exactly modulo one before exponentiation so the
    phases stay accurate for large ``n``.  The returned array is read-only.
    """
    out = _chirp_diag(c, n_sub)
    out.flags.writeable = False
    return out


def _chirp_diag(c, n_sub: int) -> np.ndarray:
    n = np.arange(n_sub)
    if isinstance(c, Fraction):
        num, den = c.numerator, c.denominator
        # exact residue of c*n^2 modulo 1, kept as integers
        resid = (num * (n.astype(object) ** 2)) % den
        frac = np.array([int(r) for r in resid], dtype=float) / den
        return np.exp(-2j * np.pi * frac)
    return np.exp(-2j * np.pi * float(c) * n.astype(float) ** 2)


def _check_len(v: np.ndarray, n: int, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    if v.shape[-1] != n:
        raise ValueError(f"{what} length {v.shape[-1]} != n_sub {n}")
    return v


def idaft(x: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    """DAF-domain symbols -> time samples (no prefix). Operates on the last axis."""
    x = _check_len(x, cfg.n_sub, "frame")
    l1 = chirp_diag(cfg.c1, cfg.n_sub)
    l2 = chirp_diag(cfg.c2, cfg.n_sub)
    return np.conj(l1) * np.fft.ifft(np.conj(l2) * x, norm="ortho", axis=-1)


def daft(s: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    """Time samples (prefix removed) -> DAF domain. Operates on the last axis."""
    s = _check_len(s, cfg.n_sub, "time block")
    l1 = chirp_diag(cfg.c1, cfg.n_sub)
    l2 = chirp_diag(cfg.c2, cfg.n_sub)
    return l2 * np.fft.fft(l1 * s, norm="ortho", axis=-1)


def idaft_matrix(cfg: AfdmConfig) -> np.ndarray:
    """Dense ``N x N`` IDAFT matrix built entry by entry (test oracle, small N)."""
    n = cfg.n_sub
    c1, c2 = float(cfg.c1), float(cfg.c2)
    nn, mm = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return np.exp(2j * np.pi * (c1 * nn**2 + c2 * mm**2 + nn * mm / n)) / np.sqrt(n)


def cpp_phase(cfg: AfdmConfig) -> np.ndarray:
    """Phase factors ``exp(-j 2 pi c1 (N^2 + 2 N n))`` for ``n = -L_cpp .. -1``."""
    n_sub, c1 = cfg.n_sub, cfg.c1
    out = np.empty(cfg.l_cpp, dtype=complex)
    for i, n in enumerate(range(-cfg.l_cpp, 0)):
        e = c1 * (n_sub * n_sub + 2 * n_sub * n)
        frac = e - (e.numerator // e.denominator)
        out[i] = 1.0 if frac == 0 else np.exp(-2j * np.pi * float(frac))
    return out


def append_cpp(s: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    """Prepend the chirp-periodic prefix; output covers ``n = -L_cpp .. N-1``."""
    s = _check_len(s, cfg.n_sub, "time block")
    if cfg.l_cpp == 0:
        return s.copy()
    prefix = s[..., cfg.n_sub - cfg.l_cpp:] * cpp_phase(cfg)
    return np.concatenate([prefix, s], axis=-1)


def remove_cpp(s: np.ndarray, cfg: AfdmConfig) -> np.ndarray:
    s = np.asarray(s)
    if s.shape[-1] != cfg.n_sub + cfg.l_cpp:
        raise ValueError("block length does not match n_sub + l_cpp")
    return s[..., cfg.l_cpp:]


def qam_constellation(order: int) -> np.ndarray:
    """Square QAM points scaled to unit average power."""
    if order not in SUPPORTED_QAM:
        raise ValueError(f"unsupported QAM order {order}; choose from {SUPPORTED_QAM}")
    m = int(round(np.sqrt(order)))
    levels = np.arange(-(m - 1), m, 2, dtype=float)
    pts = (levels[:, None] + 1j * levels[None, :]).ravel()
    return pts / np.sqrt(np.mean(np.abs(pts) ** 2))


def gen_qam_frame(order: int, seed, n_sub: int = 256) -> np.ndarray:
    """Uniformly drawn, unit-power QAM symbols for one DAF-domain frame."""
    pts = qam_constellation(order)
    rng = np.random.default_rng(seed)
    return pts[rng.integers(0, order, size=n_sub)]
