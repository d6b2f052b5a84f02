"""Rayleigh channels, ZF precoding and the transmit-energy bookkeeping.

With the precoder ``P = [P^1 ... P^K]`` and per-user pattern sets, the
average transmit energy is ``E_T = E_s * gamma`` where

    gamma = sum_m eps_m * g_m . qbar_m,

``g_m`` holds the squared column norms of ``P^m`` and ``qbar_m`` is the
mean activation of user ``m``'s pattern set. User ``k`` then gets symbol
energy ``E_k = E_T * eps_k / gamma``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .patterns import PatternSet

__all__ = [
    "SingularChannelError",
    "ChannelRealization",
    "PrecoderBundle",
    "NoiseSpec",
    "draw_channel",
    "zf_precoder",
    "zf_gram_inverse_diag",
    "column_energies",
    "gamma",
    "user_energy",
    "transmit",
    "transmit_blocks",
    "propagate",
    "complex_normal",
    "build_bundle",
    "RCOND_MIN",
]

RCOND_MIN = 1e-12


class SingularChannelError(np.linalg.LinAlgError):
    """H H^H is too ill-conditioned to invert; resample the channel."""


def complex_normal(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples, ``CN(0, variance)``."""
    scale = np.sqrt(variance / 2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    """Stacked downlink channel, ``(k * n_r, n_t)``; rows of user ``k`` contiguous."""

    h: np.ndarray
    k: int
    n_r: int

    def __post_init__(self):
        h = np.asarray(self.h, dtype=complex)
        if h.ndim != 2 or h.shape[0] != self.k * self.n_r:
            raise ValueError(f"h must have {self.k * self.n_r} rows, got shape {h.shape}")
        if h.shape[1] < h.shape[0]:
            raise ValueError(f"need n_t >= k*n_r, got n_t={h.shape[1]} < {h.shape[0]}")
        object.__setattr__(self, "h", h)

    @property
    def n_t(self) -> int:
        return self.h.shape[1]

    def block(self, user: int) -> np.ndarray:
        return self.h[user * self.n_r:(user + 1) * self.n_r]


@dataclass(frozen=True)
class NoiseSpec:
    """Per-component noise variance; zero means a noiseless link."""

    sigma2: float

    def __post_init__(self):
        if not self.sigma2 >= 0:
            raise ValueError(f"sigma2 must be >= 0, got {self.sigma2}")


def draw_channel(k: int, n_r: int, n_t: int, rng: np.random.Generator) -> ChannelRealization:
    if k < 1 or n_r < 1:
        raise ValueError("k and n_r must be positive")
    if n_t < k * n_r:
        raise ValueError(f"n_t={n_t} must be >= k*n_r={k * n_r}")
    return ChannelRealization(complex_normal(rng, (k * n_r, n_t)), k, n_r)


def _gram_factor(h: np.ndarray, rcond_min: float):
    gram = h @ h.conj().T
    w = np.linalg.eigvalsh(gram)
    if w[0] <= rcond_min * w[-1]:
        raise SingularChannelError(f"reciprocal condition number {w[0] / w[-1]:.3e} below {rcond_min}")
    return sla.cho_factor(gram, lower=True)


def zf_precoder(ch: ChannelRealization | np.ndarray, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Right pseudoinverse ``H^H (H H^H)^{-1}`` so that ``H P = I``."""
    h = ch.h if isinstance(ch, ChannelRealization) else np.asarray(ch, dtype=complex)
    fac = _gram_factor(h, rcond_min)
    # P^H = (H H^H)^{-1} H since the Gram matrix is Hermitian.
    return sla.cho_solve(fac, h).conj().T


def zf_gram_inverse_diag(ch: ChannelRealization | np.ndarray, rcond_min: float = RCOND_MIN) -> np.ndarray:
    """Diagonal of ``(H H^H)^{-1}``, equal to the ZF column energies."""
    h = ch.h if isinstance(ch, ChannelRealization) else np.asarray(ch, dtype=complex)
    fac = _gram_factor(h, rcond_min)
    inv = sla.cho_solve(fac, np.eye(h.shape[0], dtype=complex))
    return np.real(np.diag(inv)).copy()


def column_energies(p: np.ndarray, k: int, n_r: int) -> np.ndarray:
    """Squared column norms of each user's precoder block, shape ``(k, n_r)``."""
    p = np.asarray(p)
    if p.ndim != 2 or p.shape[1] != k * n_r:
        raise ValueError(f"precoder must have k*n_r={k * n_r} columns, got shape {p.shape}")
    return np.sum(np.abs(p) ** 2, axis=0).reshape(k, n_r)


def gamma(g, qbar, eps) -> float:
    g = np.asarray(g, dtype=float)
    qbar = np.asarray(qbar, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if g.shape != qbar.shape or g.ndim != 2 or eps.shape != (g.shape[0],):
        raise ValueError(f"inconsistent shapes g={g.shape}, qbar={qbar.shape}, eps={eps.shape}")
    val = float(eps @ np.einsum("ij,ij->i", g, qbar))
    if not val > 0:
        raise ValueError(f"gamma must be positive, got {val}")
    return val


def user_energy(e_t: float, eps_k: float, gam: float) -> float:
    if e_t <= 0 or eps_k <= 0 or gam <= 0:
        raise ValueError("e_t, eps_k and gamma must be positive")
    return e_t * eps_k / gam


def transmit(p: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Precoded transmit vector(s) ``P s``; ``s`` may hold one vector per column."""
    p = np.asarray(p)
    s = np.asarray(s)
    if s.shape[0] != p.shape[1]:
        raise ValueError(f"s has {s.shape[0]} rows, precoder expects {p.shape[1]}")
    return p @ s


def transmit_blocks(p: np.ndarray, s: np.ndarray, k: int, n_r: int) -> np.ndarray:
    """Same as :func:`transmit`, accumulated one user block at a time."""
    x = 0
    for m in range(k):
        cols = slice(m * n_r, (m + 1) * n_r)
        x = x + p[:, cols] @ s[cols]
    return x


def propagate(ch: ChannelRealization, x: np.ndarray, noise: NoiseSpec, rng: np.random.Generator | None) -> np.ndarray:
    """``y = H x + n`` with i.i.d. ``CN(0, sigma2)`` noise."""
    y = ch.h @ x
    if noise.sigma2 > 0:
        y = y + complex_normal(rng, y.shape, noise.sigma2)
    return y


def _validate_eps(eps, k: int) -> np.ndarray:
    eps = np.ones(k) if eps is None else np.asarray(eps, dtype=float)
    if eps.shape != (k,):
        raise ValueError(f"eps must have length {k}")
    if np.any(eps <= 0) or not np.isclose(eps.mean(), 1.0, rtol=0, atol=1e-12):
        raise ValueError(f"eps entries must be positive with mean 1, got {eps}")
    return eps


@dataclass(frozen=True, eq=False)
class PrecoderBundle:
    p: np.ndarray
    g: np.ndarray
    gamma: float
    e_t: float
    eps: np.ndarray
    e_user: np.ndarray
    pattern_sets: tuple[PatternSet, ...]

    @property
    def e_s(self) -> float:
        return self.e_t / self.gamma

    def block(self, user: int) -> np.ndarray:
        n_r = self.g.shape[1]
        return self.p[:, user * n_r:(user + 1) * n_r]


def build_bundle(ch: ChannelRealization, p: np.ndarray, pattern_sets: Sequence[PatternSet],
                 e_t: float = 1.0, eps=None) -> PrecoderBundle:
    """Energy bookkeeping for precoder ``p`` and per-user pattern sets."""
    eps = _validate_eps(eps, ch.k)
    if len(pattern_sets) != ch.k:
        raise ValueError(f"need {ch.k} pattern sets, got {len(pattern_sets)}")
    g = column_energies(p, ch.k, ch.n_r)
    qbar = np.stack([ps.mean for ps in pattern_sets])
    gam = gamma(g, qbar, eps)
    e_user = np.array([user_energy(e_t, e, gam) for e in eps])
    return PrecoderBundle(p, g, gam, e_t, eps, e_user, tuple(pattern_sets))
