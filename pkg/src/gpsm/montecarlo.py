"""Frame-based BER simulation of the ZF-precoded multiuser GPSM downlink.

One channel realization is one frame: draw ``H``, build the ZF precoder,
pick each user's pattern set according to the policy, optionally notify
the users of the choice, then send ``vectors_per_frame`` random bit
blocks per user and count the bit errors of the ML detector.

Every random quantity is drawn from a substream keyed by
``(master_seed, realization, stream[, snr])`` so results do not depend on
how realizations are spread over workers, and different policies or SNR
points run on the same channels and data.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .channel import (
    RCOND_MIN,
    ChannelRealization,
    NoiseSpec,
    SingularChannelError,
    build_bundle,
    draw_channel,
    propagate,
    transmit,
    zf_precoder,
)
from .detector import ml_detect_batch
from .modem import Constellation, join_bits, make_constellation, split_bits
from .notification import NotificationConfig, NotificationError, decode_notification, encode_notification
from .patterns import DEFAULT_ENUMERATION_CAP, PatternSet, PatternSpace, optimize_pattern_set, random_pattern_set

__all__ = [
    "POLICIES",
    "TIMINGS",
    "SimScenario",
    "BerRecord",
    "FrameResult",
    "sigma_from_snr",
    "simulate_frame",
    "run_ber_point",
    "snr_sweep",
    "snr_at_ber",
    "ber_standard_error",
]

log = logging.getLogger(__name__)

POLICIES = ("fixed", "random", "optimized", "optimized_notified")
TIMINGS = ("same-frame", "pipelined")

_STREAM_CHANNEL, _STREAM_POLICY, _STREAM_BITS, _STREAM_NOISE, _STREAM_NOTIFY = range(5)
_MAX_RESAMPLES = 1000


@dataclass(frozen=True)
class SimScenario:
    """Everything that defines a BER run; see :data:`POLICIES` for ``pattern_policy``."""

    k_users: int = 1
    n_t: int = 8
    n_r: int = 4
    n_iba: int = 2
    m: int = 4
    eps: tuple[float, ...] | None = None
    snr_grid_db: tuple[float, ...] = tuple(range(0, 26, 2))
    channel_realizations: int = 1000
    vectors_per_frame: int = 3200
    pattern_policy: str = "random"
    fixed_set_index: int = 0
    repetitions: int = 10
    notification_timing: str = "same-frame"
    master_seed: int = 0
    enumeration_cap: int = DEFAULT_ENUMERATION_CAP
    rcond_min: float = RCOND_MIN
    e_t: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "snr_grid_db", tuple(float(s) for s in self.snr_grid_db))
        if self.eps is not None:
            object.__setattr__(self, "eps", tuple(float(e) for e in self.eps))
        if self.k_users < 1:
            raise ValueError(f"k_users must be >= 1, got {self.k_users}")
        if self.n_t < self.k_users * self.n_r:
            raise ValueError(f"n_t={self.n_t} must be >= k_users*n_r={self.k_users * self.n_r}")
        PatternSpace(self.n_r, self.n_iba)
        make_constellation(self.m)
        if not self.snr_grid_db:
            raise ValueError("snr_grid_db must not be empty")
        if self.channel_realizations < 1:
            raise ValueError("channel_realizations must be >= 1")
        if self.vectors_per_frame < 1:
            raise ValueError("vectors_per_frame must be >= 1")
        if self.pattern_policy not in POLICIES:
            raise ValueError(f"pattern_policy must be one of {POLICIES}, got {self.pattern_policy!r}")
        if self.notification_timing not in TIMINGS:
            raise ValueError(f"notification_timing must be one of {TIMINGS}")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.e_t <= 0:
            raise ValueError("e_t must be positive")
        if self.eps is not None:
            eps = np.array(self.eps)
            if eps.shape != (self.k_users,) or np.any(eps <= 0) or abs(eps.mean() - 1) > 1e-12:
                raise ValueError("eps must hold k_users positive fractions with mean 1")
        self.space.check_cap(self.enumeration_cap)
        if not 0 <= self.fixed_set_index < self.space.l:
            raise ValueError(f"fixed_set_index must be in [0, {self.space.l})")

    def replace(self, **changes) -> "SimScenario":
        return dataclasses.replace(self, **changes)

    @property
    def space(self) -> PatternSpace:
        return PatternSpace(self.n_r, self.n_iba)

    @property
    def constellation(self) -> Constellation:
        return make_constellation(self.m)

    @property
    def rate(self) -> int:
        """Bits per channel use over all users."""
        return self.space.rate(self.k_users, self.m)

    @property
    def bits_per_user(self) -> int:
        return self.rate // self.k_users

    @property
    def bits_per_frame(self) -> int:
        return self.vectors_per_frame * self.rate


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    bits_sent: int
    bit_errors: int
    ber: float
    per_user_ber: tuple[float, ...]
    spatial_bit_errors: int
    symbol_bit_errors: int
    notification_failures: int
    rejected_channels: int
    notification_errors: int = 0
    frame_errors: tuple[int, ...] = field(default=(), repr=False)


@dataclass
class FrameResult:
    """Error counts of one frame, one row per SNR point and one column per user."""

    spatial_errors: np.ndarray
    symbol_errors: np.ndarray
    notification_failures: np.ndarray
    notification_errors: np.ndarray
    rejected_channels: int
    tx_energy: float
    gamma: float

    @property
    def bit_errors(self) -> np.ndarray:
        return self.spatial_errors + self.symbol_errors


def sigma_from_snr(e_t: float, snr_db: float) -> float:
    """Noise variance giving ``E_T / sigma2`` equal to ``snr_db``; zero at +inf."""
    if e_t <= 0:
        raise ValueError("e_t must be positive")
    if math.isinf(snr_db) and snr_db > 0:
        return 0.0
    return e_t / 10 ** (snr_db / 10)


def _snr_key(snr_db: float) -> int:
    if math.isinf(snr_db):
        return 2**32 - 1
    return int(round(snr_db * 1000)) + 2**31


def _rng(sc: SimScenario, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(sc.master_seed, spawn_key=key))


def _accepted_channel(sc: SimScenario, r: int):
    rng = _rng(sc, r, _STREAM_CHANNEL)
    for rejected in range(_MAX_RESAMPLES):
        ch = draw_channel(sc.k_users, sc.n_r, sc.n_t, rng)
        try:
            return ch, zf_precoder(ch, sc.rcond_min), rejected
        except SingularChannelError:
            continue
    raise SingularChannelError(f"realization {r}: {_MAX_RESAMPLES} consecutive singular channels")


def _optimized_sets(sc: SimScenario, p: np.ndarray) -> tuple[PatternSet, ...]:
    g = np.sum(np.abs(p) ** 2, axis=0).reshape(sc.k_users, sc.n_r)
    return tuple(optimize_pattern_set(g[k], sc.space, sc.enumeration_cap) for k in range(sc.k_users))


def _transmit_sets(sc: SimScenario, r: int, p: np.ndarray | None = None) -> tuple[PatternSet, ...]:
    """Pattern sets the transmitter uses in frame ``r`` (``p`` is that frame's precoder)."""
    space = sc.space
    policy = sc.pattern_policy
    if policy == "fixed":
        return (space.set_at(sc.fixed_set_index),) * sc.k_users
    if policy == "random":
        rng = _rng(sc, r, _STREAM_POLICY)
        return tuple(random_pattern_set(space, rng, sc.enumeration_cap) for _ in range(sc.k_users))
    if policy == "optimized_notified" and sc.notification_timing == "pipelined":
        # Sets chosen at the end of the previous frame, on the previous channel.
        if r == 0:
            return (space.set_at(0),) * sc.k_users
        _, p_prev, _ = _accepted_channel(sc, r - 1)
        return _optimized_sets(sc, p_prev)
    if p is None:
        _, p, _ = _accepted_channel(sc, r)
    return _optimized_sets(sc, p)


def _fallback_sets(sc: SimScenario, r: int) -> tuple[PatternSet, ...]:
    """Sets a receiver keeps after an undecodable notification in frame ``r``."""
    if r == 0:
        return (sc.space.set_at(0),) * sc.k_users
    return _transmit_sets(sc, r - 1)


def _user_rows(sc: SimScenario, k: int) -> slice:
    return slice(k * sc.n_r, (k + 1) * sc.n_r)


def simulate_frame(sc: SimScenario, r: int, snr_grid_db: Sequence[float] | None = None) -> FrameResult:
    """Simulate realization ``r`` of ``sc`` at every SNR of the grid."""
    grid = sc.snr_grid_db if snr_grid_db is None else tuple(snr_grid_db)
    c = sc.constellation
    space = sc.space
    k_ssk = space.k_ssk
    nv = sc.vectors_per_frame
    ku = sc.k_users

    ch, p, rejected = _accepted_channel(sc, r)
    tx_sets = _transmit_sets(sc, r, p)
    bundle = build_bundle(ch, p, tx_sets, sc.e_t, sc.eps)

    bits = _rng(sc, r, _STREAM_BITS).integers(0, 2, size=(ku, nv, sc.bits_per_user), dtype=np.uint8)
    s = np.zeros((ku * sc.n_r, nv), dtype=complex)
    cols = np.arange(nv)[:, None]
    for k in range(ku):
        pidx, labels = split_bits(bits[k], k_ssk, sc.n_iba, c)
        rows = k * sc.n_r + tx_sets[k].active_indices[pidx]
        s[rows, cols] = np.sqrt(bundle.e_user[k]) * c.points[labels]
    x = transmit(p, s)
    tx_energy = float(np.mean(np.sum(np.abs(x) ** 2, axis=0)))

    notified = sc.pattern_policy == "optimized_notified" and space.l > 1
    if notified:
        cfg = NotificationConfig.for_space(space, c, sc.repetitions)
        s_not = np.zeros((ku * sc.n_r, cfg.n_vectors), dtype=complex)
        for k in range(ku):
            vecs = encode_notification(space.index_of(tx_sets[k]), cfg, c, bundle.e_user[k])
            s_not[_user_rows(sc, k)] = vecs.T
        x_not = transmit(p, s_not)
        fallback = _fallback_sets(sc, r)

    n = len(grid)
    spatial = np.zeros((n, ku), dtype=np.int64)
    symbol = np.zeros((n, ku), dtype=np.int64)
    failures = np.zeros(n, dtype=np.int64)
    wrong = np.zeros(n, dtype=np.int64)
    for i, snr in enumerate(grid):
        noise = NoiseSpec(sigma_from_snr(sc.e_t, snr))
        y = propagate(ch, x, noise, _rng(sc, r, _STREAM_NOISE, _snr_key(snr)))
        rx_sets = tx_sets
        if notified:
            y_not = propagate(ch, x_not, noise, _rng(sc, r, _STREAM_NOTIFY, _snr_key(snr)))
            rx_sets = []
            for k in range(ku):
                try:
                    decoded = space.set_at(decode_notification(y_not[_user_rows(sc, k)].T, cfg, c, bundle.e_user[k]))
                except NotificationError:
                    failures[i] += 1
                    decoded = fallback[k]
                wrong[i] += decoded != tx_sets[k]
                rx_sets.append(decoded)
        for k in range(ku):
            pidx, labels, _ = ml_detect_batch(y[_user_rows(sc, k)].T, bundle.e_user[k], rx_sets[k], c)
            err = join_bits(pidx, labels, k_ssk, c) != bits[k]
            spatial[i, k] = np.count_nonzero(err[:, :k_ssk])
            symbol[i, k] = np.count_nonzero(err[:, k_ssk:])
    return FrameResult(spatial, symbol, failures, wrong, rejected, tx_energy, bundle.gamma)


def _run_chunk(args):
    sc, grid, start, stop = args
    n, ku = len(grid), sc.k_users
    spatial = np.zeros((n, ku), dtype=np.int64)
    symbol = np.zeros((n, ku), dtype=np.int64)
    failures = np.zeros(n, dtype=np.int64)
    wrong = np.zeros(n, dtype=np.int64)
    rejected = 0
    per_frame = np.zeros((stop - start, n), dtype=np.int64)
    for j, r in enumerate(range(start, stop)):
        fr = simulate_frame(sc, r, grid)
        spatial += fr.spatial_errors
        symbol += fr.symbol_errors
        failures += fr.notification_failures
        wrong += fr.notification_errors
        rejected += fr.rejected_channels
        per_frame[j] = fr.bit_errors.sum(axis=1)
    return spatial, symbol, failures, wrong, rejected, per_frame


def _simulate(sc: SimScenario, grid: tuple[float, ...], workers: int = 1) -> list[BerRecord]:
    n_real = sc.channel_realizations
    workers = max(1, min(workers, n_real))
    bounds = np.linspace(0, n_real, workers * 4 + 1 if workers > 1 else 2).astype(int)
    tasks = [(sc, grid, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    if workers == 1:
        results = [_run_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, tasks))

    spatial = sum(res[0] for res in results)
    symbol = sum(res[1] for res in results)
    failures = sum(res[2] for res in results)
    wrong = sum(res[3] for res in results)
    rejected = sum(res[4] for res in results)
    per_frame = np.concatenate([res[5] for res in results], axis=0)

    bits_user = n_real * sc.vectors_per_frame * sc.bits_per_user
    bits_sent = bits_user * sc.k_users
    records = []
    for i, snr in enumerate(grid):
        errors = int(spatial[i].sum() + symbol[i].sum())
        records.append(BerRecord(
            snr_db=snr,
            bits_sent=bits_sent,
            bit_errors=errors,
            ber=errors / bits_sent,
            per_user_ber=tuple(float(e) / bits_user for e in spatial[i] + symbol[i]),
            spatial_bit_errors=int(spatial[i].sum()),
            symbol_bit_errors=int(symbol[i].sum()),
            notification_failures=int(failures[i]),
            rejected_channels=int(rejected),
            notification_errors=int(wrong[i]),
            frame_errors=tuple(int(v) for v in per_frame[:, i]),
        ))
    return records


def run_ber_point(sc: SimScenario, snr_db: float, workers: int = 1) -> BerRecord:
    return _simulate(sc, (float(snr_db),), workers)[0]


def snr_sweep(sc: SimScenario, workers: int = 1) -> list[BerRecord]:
    """One :class:`BerRecord` per point of ``sc.snr_grid_db``."""
    log.info("sweep %s policy=%s over %d realizations", sc.snr_grid_db, sc.pattern_policy, sc.channel_realizations)
    return _simulate(sc, sc.snr_grid_db, workers)


def ber_standard_error(rec: BerRecord, bits_per_frame: int) -> float:
    """Monte-Carlo standard error of ``rec.ber`` from the frame-to-frame spread.

    Errors cluster within a channel realization, so frames (not bits) are
    the independent samples.
    """
    per = np.asarray(rec.frame_errors, dtype=float) / bits_per_frame
    if per.size < 2:
        return math.inf
    return float(per.std(ddof=1) / np.sqrt(per.size))


def snr_at_ber(records, target_ber: float) -> float:
    """SNR (dB) at which the BER curve crosses ``target_ber``.

    Interpolates linearly in log10(BER) between the first pair of adjacent
    grid points that brackets the target. ``records`` is a sequence of
    :class:`BerRecord` or of ``(snr_db, ber)`` pairs.
    """
    pts = [(r.snr_db, r.ber) if isinstance(r, BerRecord) else (float(r[0]), float(r[1])) for r in records]
    pts.sort()
    if not target_ber > 0:
        raise ValueError("target_ber must be positive")
    for (s0, b0), (s1, b1) in zip(pts, pts[1:]):
        if b0 == target_ber:
            return s0
        if b0 > target_ber > b1 > 0:
            t = (math.log10(target_ber) - math.log10(b0)) / (math.log10(b1) - math.log10(b0))
            return s0 + t * (s1 - s0)
        if b0 > target_ber and b1 == target_ber:
            return s1
    if pts and pts[-1][1] == target_ber:
        return pts[-1][0]
    raise ValueError(f"target BER {target_ber:g} is not bracketed by the curve")
