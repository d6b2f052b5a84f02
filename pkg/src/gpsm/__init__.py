"""Link-level simulator for ZF-precoded multiuser GPSM downlinks."""

from .patterns import (
    Pattern,
    PatternSet,
    PatternSpace,
    count_combinations,
    enumerate_patterns,
    mean_pattern,
    optimize_pattern_set,
    random_pattern_set,
    set_cost,
    spatial_bits,
    throughput,
)
from .modem import Constellation, make_constellation
from .channel import ChannelRealization, draw_channel, zf_precoder
from .detector import ml_detect
from .montecarlo import BerRecord, SimScenario, run_ber_point, snr_at_ber, snr_sweep

__version__ = "0.1.0"
