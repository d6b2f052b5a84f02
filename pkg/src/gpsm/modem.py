"""Constellations, bit mapping and position matrices."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .patterns import Pattern, PatternSet

__all__ = [
    "Constellation",
    "SpatialSymbol",
    "make_constellation",
    "position_matrix",
    "map_bits",
    "demap",
    "assemble_user_vector",
    "bits_to_int",
    "int_to_bits",
    "split_bits",
    "join_bits",
]


def bits_to_int(bits) -> int:
    """Natural binary value of ``bits``, MSB first."""
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def int_to_bits(value: int, width: int) -> np.ndarray:
    if value < 0 or value >> width:
        raise ValueError(f"{value} does not fit in {width} bits")
    return np.array([(value >> (width - 1 - i)) & 1 for i in range(width)], dtype=np.uint8)


@dataclass(frozen=True, eq=False)
class Constellation:
    """Unit-energy signal constellation with bit labels.

    ``points[v]`` is the point carrying the label whose natural binary
    value is ``v``.
    """

    points: np.ndarray
    name: str = ""
    bits_per_symbol: int = field(init=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        m = pts.size
        if m < 2 or m & (m - 1):
            raise ValueError(f"constellation size must be a power of 2, got {m}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bits_per_symbol", m.bit_length() - 1)

    @property
    def m(self) -> int:
        return self.points.size

    @property
    def labels(self) -> np.ndarray:
        """``(m, bits_per_symbol)`` bit labels, row ``v`` for ``points[v]``."""
        k = self.bits_per_symbol
        v = np.arange(self.m)
        return ((v[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)

    def nearest(self, z) -> np.ndarray:
        """Label value of the closest point to each entry of ``z``.

        Equidistant candidates resolve to the smallest label value.
        """
        z = np.asarray(z, dtype=complex)
        d = np.abs(z[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def modulate(self, bits) -> np.ndarray:
        """Map a flat bit array (length multiple of log2 M) to points."""
        bits = np.asarray(bits, dtype=np.int64)
        k = self.bits_per_symbol
        if bits.shape[-1] % k:
            raise ValueError(f"bit count {bits.shape[-1]} is not a multiple of {k}")
        groups = bits.reshape(*bits.shape[:-1], -1, k)
        vals = groups @ (1 << np.arange(k - 1, -1, -1))
        return self.points[vals]

    def demodulate(self, values) -> np.ndarray:
        """Label values to a flat bit array."""
        values = np.asarray(values)
        bits = self.labels[values]
        return bits.reshape(*values.shape[:-1], -1)


def make_constellation(m: int) -> Constellation:
    """BPSK (``m=2``) or Gray-labelled QPSK (``m=4``).

    QPSK labels: the first bit picks the sign of the real part and the
    second the sign of the imaginary part (0 -> +, 1 -> -), so adjacent
    points differ in one bit.
    """
    if m == 2:
        return Constellation(np.array([1.0, -1.0]), name="BPSK")
    if m == 4:
        s = 1 / np.sqrt(2)
        pts = s * np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j])
        return Constellation(pts, name="QPSK")
    raise ValueError(f"unsupported modulation order {m}; use 2 or 4")


def position_matrix(q: Pattern) -> np.ndarray:
    """Identity of size ``n_r`` with the columns of inactive antennas removed."""
    return np.eye(q.n_r)[:, list(q.active)]


@dataclass(frozen=True, eq=False)
class SpatialSymbol:
    pattern_index: int
    symbols: np.ndarray


def _bit_layout(pset: PatternSet, c: Constellation) -> tuple[int, int]:
    k_ssk = pset.n_c.bit_length() - 1
    return k_ssk, pset.n_iba * c.bits_per_symbol


def map_bits(bits, pset: PatternSet, c: Constellation) -> SpatialSymbol:
    """Split a user's bit block into a pattern index and symbols.

    The leading ``k_ssk`` bits give the pattern index (MSB first); the rest
    fill the active antennas in increasing antenna order.
    """
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    k_ssk, n_sym_bits = _bit_layout(pset, c)
    if bits.size != k_ssk + n_sym_bits:
        raise ValueError(f"expected {k_ssk + n_sym_bits} bits, got {bits.size}")
    return SpatialSymbol(bits_to_int(bits[:k_ssk]), c.modulate(bits[k_ssk:]))


def demap(det: SpatialSymbol, pset: PatternSet, c: Constellation) -> np.ndarray:
    k_ssk, _ = _bit_layout(pset, c)
    if not 0 <= det.pattern_index < pset.n_c:
        raise ValueError(f"pattern index {det.pattern_index} out of range [0, {pset.n_c})")
    values = c.nearest(np.asarray(det.symbols))
    return np.concatenate([int_to_bits(det.pattern_index, k_ssk), c.demodulate(values)])


def assemble_user_vector(e_k: float, q: Pattern, b) -> np.ndarray:
    """``sqrt(e_k) * U(q) @ b``: symbols on active antennas, zeros elsewhere."""
    b = np.asarray(b, dtype=complex)
    if b.shape != (q.n_iba,):
        raise ValueError(f"expected {q.n_iba} symbols, got shape {b.shape}")
    if e_k <= 0:
        raise ValueError("e_k must be positive")
    s = np.zeros(q.n_r, dtype=complex)
    s[list(q.active)] = np.sqrt(e_k) * b
    return s


def split_bits(bits: np.ndarray, k_ssk: int, n_iba: int, c: Constellation):
    """Row-wise :func:`map_bits` on label values.

    ``bits`` has shape ``(n, k_ssk + n_iba * log2 M)``. Returns the pattern
    indices ``(n,)`` and symbol label values ``(n, n_iba)``.
    """
    bits = np.asarray(bits, dtype=np.int64)
    k = c.bits_per_symbol
    if bits.ndim != 2 or bits.shape[1] != k_ssk + n_iba * k:
        raise ValueError(f"bits must have {k_ssk + n_iba * k} columns, got shape {bits.shape}")
    pattern_index = bits[:, :k_ssk] @ (1 << np.arange(k_ssk - 1, -1, -1))
    labels = bits[:, k_ssk:].reshape(len(bits), n_iba, k) @ (1 << np.arange(k - 1, -1, -1))
    return pattern_index, labels


def join_bits(pattern_index: np.ndarray, labels: np.ndarray, k_ssk: int, c: Constellation) -> np.ndarray:
    """Inverse of :func:`split_bits`."""
    pattern_index = np.asarray(pattern_index, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    spatial = (pattern_index[:, None] >> np.arange(k_ssk - 1, -1, -1)) & 1
    symbol = c.labels[labels].reshape(len(labels), -1)
    return np.concatenate([spatial.astype(np.uint8), symbol], axis=1)
