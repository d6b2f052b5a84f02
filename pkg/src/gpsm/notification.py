"""Signalling the pattern-set index to the users.

At the start of each frame the transmitter sends every user the index
(among the ``L`` candidate sets) of the pattern set it will use. The index
is sent in natural binary on a pattern known to both ends, repeated ``F``
times; the receiver sums the copies before detecting, which multiplies the
per-symbol SNR by ``F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .detector import ml_detect_batch
from .modem import Constellation, assemble_user_vector, bits_to_int, int_to_bits
from .patterns import Pattern, PatternSet, PatternSpace

__all__ = [
    "NotificationError",
    "NotificationConfig",
    "encode_notification",
    "decode_notification",
    "accumulate",
]


class NotificationError(ValueError):
    """Decoded set index does not name a candidate set."""

    def __init__(self, decoded: int, l: int):
        super().__init__(f"decoded set index {decoded} is not below L={l}")
        self.decoded = decoded


@dataclass(frozen=True)
class NotificationConfig:
    f: int
    known_pattern: Pattern
    l: int
    bits_per_symbol: int

    def __post_init__(self):
        if self.f < 1:
            raise ValueError(f"repetition count must be >= 1, got {self.f}")
        if self.l < 1:
            raise ValueError("L must be >= 1")

    @classmethod
    def for_space(cls, space: PatternSpace, c: Constellation, f: int = 10) -> "NotificationConfig":
        """Default configuration: the canonically first pattern carries the index."""
        return cls(f, space.patterns()[0], space.l, c.bits_per_symbol)

    @property
    def bits_needed(self) -> int:
        return (self.l - 1).bit_length()

    @property
    def bits_per_use(self) -> int:
        return self.known_pattern.n_iba * self.bits_per_symbol

    @property
    def uses_per_copy(self) -> int:
        return math.ceil(self.bits_needed / self.bits_per_use)

    @property
    def n_vectors(self) -> int:
        return self.f * self.uses_per_copy

    def payload_bits(self, set_index: int) -> np.ndarray:
        if not 0 <= set_index < self.l:
            raise ValueError(f"set index {set_index} out of range [0, {self.l})")
        bits = np.zeros(self.uses_per_copy * self.bits_per_use, dtype=np.uint8)
        bits[:self.bits_needed] = int_to_bits(set_index, self.bits_needed)
        return bits


def encode_notification(set_index: int, cfg: NotificationConfig, c: Constellation, e_k: float) -> np.ndarray:
    """Transmit-symbol vectors for one notification interval.

    Returns an array of shape ``(f * uses_per_copy, n_r)``: the copy of
    ``uses_per_copy`` vectors repeated ``f`` times back to back.
    """
    bits = cfg.payload_bits(set_index)
    symbols = c.modulate(bits).reshape(cfg.uses_per_copy, cfg.known_pattern.n_iba)
    block = [assemble_user_vector(e_k, cfg.known_pattern, b) for b in symbols]
    if not block:
        return np.zeros((0, cfg.known_pattern.n_r), dtype=complex)
    return np.tile(np.array(block), (cfg.f, 1))


def accumulate(received, cfg: NotificationConfig) -> np.ndarray:
    """Position-wise sum of the ``f`` received copies, shape ``(uses_per_copy, n_r)``."""
    received = np.asarray(received, dtype=complex)
    if received.ndim != 2 or received.shape[0] != cfg.n_vectors:
        raise ValueError(f"expected {cfg.n_vectors} received vectors, got shape {received.shape}")
    return received.reshape(cfg.f, cfg.uses_per_copy, -1).sum(axis=0)


def decode_notification(received, cfg: NotificationConfig, c: Constellation, e_k: float) -> int:
    """Recover the set index from a received notification interval.

    Raises
    ------
    NotificationError
        If the decoded value is not a valid set index; the receiver should
        keep the set it was using.
    """
    if cfg.uses_per_copy == 0:
        return 0
    summed = accumulate(received, cfg)
    # Summed signal has amplitude f*sqrt(e_k) on the known pattern.
    _, labels, _ = ml_detect_batch(summed, cfg.f**2 * e_k, PatternSet((cfg.known_pattern,)), c)
    bits = c.demodulate(labels.ravel()[None, :])[0]
    value = bits_to_int(bits[:cfg.bits_needed])
    if value >= cfg.l:
        raise NotificationError(value, cfg.l)
    return value
