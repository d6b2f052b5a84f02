import math

import numpy as np
import pytest

from gpsm.montecarlo import (
    BerRecord,
    SimScenario,
    ber_standard_error,
    run_ber_point,
    sigma_from_snr,
    simulate_frame,
    snr_at_ber,
    snr_sweep,
)

INF = float("inf")


def small(**kw):
    base = dict(channel_realizations=12, vectors_per_frame=400, snr_grid_db=(0.0, 6.0, 12.0), master_seed=3)
    base.update(kw)
    return SimScenario(**base)


def test_sigma_from_snr():
    assert sigma_from_snr(1, 0) == 1.0
    assert sigma_from_snr(1, 10) == pytest.approx(0.1, rel=1e-15)
    assert sigma_from_snr(2, 3.0103) == pytest.approx(1.0, abs=1e-4)
    assert sigma_from_snr(1, INF) == 0.0
    with pytest.raises(ValueError):
        sigma_from_snr(0, 3)


@pytest.mark.parametrize("bad", [
    dict(n_t=7, k_users=2),
    dict(snr_grid_db=()),
    dict(vectors_per_frame=0),
    dict(pattern_policy="greedy"),
    dict(eps=(0.5, 0.5)),
    dict(n_iba=5),
])
def test_scenario_validation(bad):
    with pytest.raises(ValueError):
        small(**bad)


@pytest.mark.parametrize("policy", ["fixed", "random", "optimized", "optimized_notified"])
@pytest.mark.parametrize("k", [1, 2])
def test_noise_free_is_error_free(policy, k):
    rec = run_ber_point(small(pattern_policy=policy, k_users=k), INF)
    assert rec.bit_errors == 0 and rec.ber == 0.0
    assert rec.notification_failures == 0


def test_conventional_mimo_has_no_spatial_errors():
    for rec in snr_sweep(small(n_iba=4, pattern_policy="optimized")):
        assert rec.spatial_bit_errors == 0
        assert rec.bit_errors > 0 or rec.snr_db > 0


def test_accounting():
    sc = small(k_users=2, pattern_policy="random")
    for rec in snr_sweep(sc):
        assert rec.bits_sent == sc.channel_realizations * sc.vectors_per_frame * sc.rate
        assert rec.spatial_bit_errors + rec.symbol_bit_errors == rec.bit_errors
        assert rec.ber == rec.bit_errors / rec.bits_sent
        assert sum(rec.per_user_ber) * rec.bits_sent / 2 == pytest.approx(rec.bit_errors)
        assert sum(rec.frame_errors) == rec.bit_errors
    assert sc.rate == 12


def test_sweep_point_equals_single_point():
    sc = small(pattern_policy="optimized_notified", k_users=2)
    sweep = snr_sweep(sc)
    for rec in sweep:
        assert run_ber_point(sc, rec.snr_db) == rec
    one = sc.replace(snr_grid_db=(6.0,))
    assert snr_sweep(one) == [sweep[1]]


def test_determinism_across_workers():
    sc = small(pattern_policy="random", k_users=2, channel_realizations=9)
    assert snr_sweep(sc, workers=1) == snr_sweep(sc, workers=3)
    assert snr_sweep(sc) != snr_sweep(sc.replace(master_seed=4))


def test_policies_share_channels_and_noise():
    # Genie and notified runs differ only where the notification went wrong.
    sc = small(k_users=2, channel_realizations=20, snr_grid_db=(30.0,))
    genie = snr_sweep(sc.replace(pattern_policy="optimized"))[0]
    notified = snr_sweep(sc.replace(pattern_policy="optimized_notified"))[0]
    assert notified.notification_errors == 0
    assert genie.frame_errors == notified.frame_errors
    a = simulate_frame(sc.replace(pattern_policy="random"), 4)
    b = simulate_frame(sc.replace(pattern_policy="optimized"), 4)
    assert a.gamma >= b.gamma - 1e-12
    assert a.rejected_channels == b.rejected_channels


def test_frame_energy_audit():
    sc = small(k_users=2, vectors_per_frame=3200, pattern_policy="random")
    for r in range(10):
        fr = simulate_frame(sc, r, (INF,))
        assert fr.tx_energy == pytest.approx(sc.e_t, rel=0.05)


def test_pipelined_timing_runs():
    sc = small(k_users=2, pattern_policy="optimized_notified", notification_timing="pipelined")
    rec = run_ber_point(sc, INF)
    # Pipelined sets are stale but still correctly notified: no noise, no errors.
    assert rec.bit_errors == 0


def test_ber_decreases_with_snr():
    sc = small(channel_realizations=40, vectors_per_frame=800, snr_grid_db=tuple(range(0, 31, 5)),
               pattern_policy="optimized")
    recs = snr_sweep(sc)
    bpf = sc.bits_per_frame
    for a, b in zip(recs, recs[1:]):
        se = math.hypot(ber_standard_error(a, bpf), ber_standard_error(b, bpf))
        assert b.ber <= a.ber + 3 * se


def _rec(snr, ber):
    return BerRecord(snr, 10, 0, ber, (ber,), 0, 0, 0, 0)


def test_snr_at_ber_examples():
    assert snr_at_ber([(10, 1e-2), (20, 1e-4)], 1e-3) == pytest.approx(15.0)
    assert snr_at_ber([_rec(10, 1e-2), _rec(20, 1e-4)], 1e-2) == 10
    assert snr_at_ber([_rec(10, 1e-2), _rec(20, 1e-4)], 1e-4) == 20
    with pytest.raises(ValueError):
        snr_at_ber([(10, 1e-2), (20, 1e-3)], 1e-5)
    with pytest.raises(ValueError):
        snr_at_ber([(10, 1e-2), (20, 0.0)], 1e-3)


def test_interpolation_against_dense_sweep():
    sc = SimScenario(channel_realizations=60, vectors_per_frame=1000, pattern_policy="optimized",
                     snr_grid_db=tuple(range(0, 15, 2)), master_seed=8)
    coarse = snr_sweep(sc)
    dense = snr_sweep(sc.replace(snr_grid_db=tuple(np.round(np.arange(0, 14.01, 0.2), 1))))
    for target in (1e-2, 1e-3):
        assert abs(snr_at_ber(coarse, target) - snr_at_ber(dense, target)) < 0.2
