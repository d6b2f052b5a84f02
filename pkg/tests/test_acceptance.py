"""Exit criteria of the simulator, one test per criterion.

Each test appends a ``criterion N: PASS|FAIL ...`` line to the terminal
summary. Criteria 1-3 share full-size sweeps (500 frames of 3200 vectors),
so the module takes a few minutes.
"""

import math

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from gpsm.channel import (
    NoiseSpec,
    build_bundle,
    complex_normal,
    draw_channel,
    propagate,
    transmit,
    zf_precoder,
)
from gpsm.cli import PRESETS, main, parse_config
from gpsm.detector import ml_detect_batch, ml_detect_exhaustive
from gpsm.modem import make_constellation
from gpsm.montecarlo import SimScenario, ber_standard_error, run_ber_point, snr_at_ber, snr_sweep
from gpsm.notification import NotificationConfig, NotificationError, decode_notification, encode_notification
from gpsm.patterns import PatternSpace, optimize_pattern_set, optimize_pattern_set_exhaustive

QPSK = make_constellation(4)
TARGET = 1e-3
PAPER_GRID = tuple(float(s) for s in range(0, 25, 2))
# 0-24 dB never reaches BER 1e-3 for the square K=2 channel; see the test.
WIDE_GRID = tuple(float(s) for s in range(0, 41, 2))
BASE = SimScenario(channel_realizations=500, vectors_per_frame=3200, snr_grid_db=PAPER_GRID, master_seed=2017)


def report(n, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
    print(ACCEPTANCE_LINES[-1])


_cache = {}


def sweep(sc):
    if sc not in _cache:
        _cache[sc] = snr_sweep(sc)
    return _cache[sc]


def gap(sc):
    rand = sweep(sc.replace(pattern_policy="random"))
    opt = sweep(sc.replace(pattern_policy="optimized"))
    return snr_at_ber(rand, TARGET) - snr_at_ber(opt, TARGET)


def test_criterion_01_optimization_gain_single_user():
    g = gap(BASE)
    ok = abs(g - 1.0) <= 0.4
    report(1, ok, f"K=1 random-vs-optimized gap at BER 1e-3 = {g:.3f} dB (required 1.0 +/- 0.4)")
    assert ok


def test_criterion_02_optimization_gain_two_users():
    sc = BASE.replace(k_users=2)
    opt_paper = sweep(sc.replace(pattern_policy="optimized", snr_grid_db=WIDE_GRID))
    reaches = min(r.ber for r in opt_paper if r.snr_db <= 24) <= TARGET
    g = gap(sc.replace(snr_grid_db=WIDE_GRID))
    ok = abs(g - 1.0) <= 0.4
    report(2, ok, f"K=2 gap at BER 1e-3 = {g:.3f} dB on 0-40 dB grid "
                  f"(0-24 dB grid reaches 1e-3: {reaches}; required 1.0 +/- 0.4)")
    assert ok


def test_criterion_03_notification_fidelity():
    sc = BASE.replace(k_users=2, snr_grid_db=WIDE_GRID, repetitions=10)
    genie = sweep(sc.replace(pattern_policy="optimized"))
    notified = sweep(sc.replace(pattern_policy="optimized_notified"))
    bpf = sc.bits_per_frame
    worst_z, worst_rate, bad = 0.0, 0.0, []
    for g, n in zip(genie, notified):
        se = ber_standard_error(g, bpf)
        z = abs(n.ber - g.ber) / se if se > 0 else (0.0 if n.ber == g.ber else math.inf)
        worst_z = max(worst_z, z)
        if g.snr_db >= 8:
            rate = n.notification_failures / sc.channel_realizations
            worst_rate = max(worst_rate, rate)
            if rate >= 1e-3:
                bad.append(f"{g.snr_db:g}dB:{n.notification_failures}")
    ok = worst_z <= 2 and worst_rate < 1e-3
    report(3, ok, f"max |BER_notified - BER_genie| = {worst_z:.3f} SE (<= 2 required); "
                  f"max undecodable-notification rate at >= 8 dB = {worst_rate:.1e} per frame (< 1e-3 required)"
                  + (f"; over limit at {', '.join(bad)}" if bad else ""))
    assert worst_z <= 2
    assert worst_rate < 1e-3


def _paired_frame_ber(sc, snr):
    rec = run_ber_point(sc, snr)
    return np.asarray(rec.frame_errors, float) / sc.bits_per_frame, rec.ber


def test_criterion_04_n_iba_ordering():
    sc = BASE.replace(pattern_policy="random", snr_grid_db=(20.0,))
    z99 = 2.326  # one-sided 99 %

    def ordered(snr):
        per, bers = {}, {}
        for n_iba in (1, 2, 3):
            per[n_iba], bers[n_iba] = _paired_frame_ber(sc.replace(n_iba=n_iba), snr)
        zs = []
        for lo, hi in ((1, 2), (2, 3)):
            d = per[hi] - per[lo]
            se = d.std(ddof=1) / math.sqrt(d.size)
            zs.append(d.mean() / se if se > 0 else 0.0)
        return bers, zs

    bers, zs = ordered(20.0)
    ok = all(z > z99 for z in zs)
    diag = []
    for snr in (8.0, 12.0):
        b, z = ordered(snr)
        diag.append(f"{snr:g} dB: BER {b[1]:.2e}<{b[2]:.2e}<{b[3]:.2e} z={z[0]:.1f},{z[1]:.1f}")
    report(4, ok, f"at 20 dB BER(iba=1,2,3) = {bers[1]:.2e}, {bers[2]:.2e}, {bers[3]:.2e}, "
                  f"paired z = {zs[0]:.2f}, {zs[1]:.2f} (> {z99} required) | diagnostic " + "; ".join(diag))
    assert ok


TABLE1 = [(1, 4, 4, 4, 1), (2, 6, 4, 6, 15), (3, 4, 4, 8, 1), (4, 1, 1, 8, 1)]
TABLE2 = [(1, 5, 4, 4, 5), (2, 10, 8, 7, 45), (3, 10, 8, 9, 45), (4, 5, 4, 10, 5), (5, 1, 1, 10, 1)]


def test_criterion_05_tables(capsys):
    assert main(["table"]) == 0
    out = capsys.readouterr().out
    blocks = out.strip().split("\n\n")
    parsed = [[tuple(int(v) for v in line.split()) for line in b.splitlines()[2:]] for b in blocks]
    ok = parsed == [TABLE1, TABLE2]
    report(5, ok, "table subcommand reproduces Tables 1-2 exactly" if ok else f"got {parsed}")
    assert ok


def test_criterion_06_zf_identity():
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(10**4):
        ch = draw_channel(2, 4, 8, rng)
        p = zf_precoder(ch)
        worst = max(worst, np.linalg.norm(ch.h @ p - np.eye(8)))
    ok = worst < 1e-9
    report(6, ok, f"max ||HP - I||_F over 1e4 channels = {worst:.2e} (< 1e-9)")
    assert ok


def test_criterion_07_energy_identity():
    rng = np.random.default_rng(7)
    space = PatternSpace(4, 2)
    n_tx, k, n_r = 10**5, 2, 4
    worst = 0.0
    for _ in range(100):
        ch = draw_channel(k, n_r, 8, rng)
        p = zf_precoder(ch)
        sets = [space.set_at(int(rng.integers(space.l))) for _ in range(k)]
        b = build_bundle(ch, p, sets, e_t=1.0)
        s = np.zeros((k * n_r, n_tx), dtype=complex)
        for u, ps in enumerate(sets):
            pidx = rng.integers(ps.n_c, size=n_tx)
            rows = u * n_r + ps.active_indices[pidx]
            s[rows, np.arange(n_tx)[:, None]] = np.sqrt(b.e_user[u]) * QPSK.points[rng.integers(4, size=(n_tx, 2))]
        x = transmit(p, s)
        ratio = np.mean(np.sum(np.abs(x) ** 2, axis=0)) / b.e_s
        worst = max(worst, abs(ratio / b.gamma - 1))
    ok = worst < 0.01
    report(7, ok, f"max relative error of E||x||^2/E_s vs gamma over 100 channels = {worst:.2e} (< 1e-2)")
    assert ok


@pytest.mark.parametrize("n_r,n_iba", [(4, 2), (5, 3)])
def test_criterion_08_detector_oracle(n_r, n_iba):
    rng = np.random.default_rng(8 + n_r)
    space = PatternSpace(n_r, n_iba)
    n = 10**4
    disagreements = 0
    y_all, e_all, sets = [], [], []
    for i in range(n):
        pset = space.set_at(int(rng.integers(space.l)))
        e_k = rng.uniform(0.1, 4.0)
        pi = int(rng.integers(pset.n_c))
        y = np.zeros(n_r, dtype=complex)
        y[list(pset[pi].active)] = np.sqrt(e_k) * QPSK.points[rng.integers(4, size=n_iba)]
        y += complex_normal(rng, n_r, rng.uniform(0.05, 3.0))
        fast_pi, fast_lab, _ = ml_detect_batch(y[None], e_k, pset, QPSK)
        slow = ml_detect_exhaustive(y, e_k, pset, QPSK)
        if fast_pi[0] != slow.pattern_index or not np.array_equal(fast_lab[0], slow.labels):
            disagreements += 1
    ok = disagreements == 0
    report(8, ok, f"(N_r={n_r}, N_iba={n_iba}) decomposed vs exhaustive ML: {disagreements} disagreements in {n}")
    assert ok


def test_criterion_09_optimizer_oracle():
    rng = np.random.default_rng(9)
    configs, trials, disagreements = 0, 0, 0
    for n_r in range(1, 7):
        for n_iba in range(1, n_r + 1):
            space = PatternSpace(n_r, n_iba)
            if space.l > 10**4:
                continue
            configs += 1
            gs = [rng.exponential(size=n_r) for _ in range(20)]
            gs += [rng.integers(0, 3, size=n_r).astype(float) for _ in range(20)]  # exact ties
            gs += [np.ones(n_r), np.zeros(n_r)]
            for g in gs:
                trials += 1
                if optimize_pattern_set(g, space) != optimize_pattern_set_exhaustive(g, space):
                    disagreements += 1
    ok = disagreements == 0
    report(9, ok, f"greedy vs exhaustive optimizer: {disagreements} disagreements "
                  f"over {configs} configurations, {trials} cost vectors")
    assert ok


def test_criterion_10_noise_free():
    bad = []
    for name in sorted(PRESETS):
        sc = parse_config(preset=name, overrides={"realizations": 5}).scenario
        rec = run_ber_point(sc, float("inf"))
        if rec.bit_errors:
            bad.append(f"{name}:{rec.bit_errors}")
    ok = not bad
    report(10, ok, f"noise-free BER = 0 over full 3200-vector frames for presets {sorted(PRESETS)}"
                   + (f"; errors {bad}" if bad else ""))
    assert ok


def _notification_error_rate(f, snr_db, n_frames, seed):
    """Index error rate of the notification through ZF-precoded K=2 channels."""
    space = PatternSpace(4, 2)
    cfg = NotificationConfig.for_space(space, QPSK, f)
    chan_rng = np.random.default_rng(seed)  # same channels and indices for every call
    noise_rng = np.random.default_rng([seed, f, int(round(snr_db * 10)) + 1000])
    noise = NoiseSpec(1.0 / 10 ** (snr_db / 10))
    wrong = total = 0
    for _ in range(n_frames):
        ch = draw_channel(2, 4, 8, chan_rng)
        p = zf_precoder(ch)
        g = np.sum(np.abs(p) ** 2, axis=0).reshape(2, 4)
        sets = [optimize_pattern_set(g[k], space) for k in range(2)]
        b = build_bundle(ch, p, sets)
        idx = [space.index_of(s) for s in sets]
        s = np.concatenate([encode_notification(idx[k], cfg, QPSK, b.e_user[k]).T for k in range(2)])
        y = propagate(ch, transmit(p, s), noise, noise_rng)
        for k in range(2):
            total += 1
            try:
                wrong += decode_notification(y[4 * k:4 * k + 4].T, cfg, QPSK, b.e_user[k]) != idx[k]
            except NotificationError:
                wrong += 1
    return wrong / total, total


def test_criterion_11_repetition_gain():
    n_frames = 6000
    lines, ok = [], True
    for s in (-10.0, -5.0, 0.0):
        p10, n = _notification_error_rate(10, s, n_frames, seed=11)
        p1, _ = _notification_error_rate(1, s + 10, n_frames, seed=11)
        se = math.sqrt((p10 * (1 - p10) + p1 * (1 - p1)) / n)
        within = abs(p10 - p1) <= 3 * se
        ok &= within
        lines.append(f"{s:g} dB: F=10 {p10:.4f} vs F=1@+10dB {p1:.4f} (|d|/SE={abs(p10 - p1) / se:.2f})")
    report(11, ok, "; ".join(lines) + " (within 3 SE required)")
    assert ok
