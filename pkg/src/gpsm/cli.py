"""Command-line front end: ``gpsm run | table | compare``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import subprocess
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import metadata
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .montecarlo import BerRecord, SimScenario, snr_at_ber, snr_sweep
from .patterns import EnumerationCapError, PatternSpace

__all__ = [
    "ConfigError",
    "RunConfig",
    "PRESETS",
    "CSV_COLUMNS",
    "parse_config",
    "emit_results",
    "load_records",
    "compare_curves",
    "pattern_table",
    "main",
]

log = logging.getLogger("gpsm")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

CSV_COLUMNS = (
    "snr_db", "ber", "bits_sent", "bit_errors", "spatial_bit_errors", "symbol_bit_errors",
    "per_user_ber", "notification_failures", "rejected_channels",
)

# Config key -> SimScenario field.
KEYS = {
    "users": "k_users",
    "tx_antennas": "n_t",
    "rx_antennas": "n_r",
    "iba": "n_iba",
    "modulation": "m",
    "snr_db": "snr_grid_db",
    "realizations": "channel_realizations",
    "vectors_per_frame": "vectors_per_frame",
    "pattern_policy": "pattern_policy",
    "fixed_set": "fixed_set_index",
    "repetitions": "repetitions",
    "notification_timing": "notification_timing",
    "eps": "eps",
    "seed": "master_seed",
    "enumeration_cap": "enumeration_cap",
}
MANDATORY = ("users", "tx_antennas", "rx_antennas", "iba")

_PAPER_GRID = list(range(0, 26, 2))
PRESETS: dict[str, dict[str, Any]] = {
    "fig1a": dict(users=1, tx_antennas=8, rx_antennas=4, iba=2, modulation=4, pattern_policy="random"),
    "fig1b": dict(users=1, tx_antennas=10, rx_antennas=5, iba=2, modulation=4, pattern_policy="random"),
    "fig2": dict(users=1, tx_antennas=8, rx_antennas=4, iba=2, modulation=4, pattern_policy="optimized"),
    "fig3": dict(users=2, tx_antennas=8, rx_antennas=4, iba=2, modulation=4, pattern_policy="optimized"),
    "fig4": dict(users=2, tx_antennas=8, rx_antennas=4, iba=2, modulation=4,
                 pattern_policy="optimized_notified", repetitions=10),
}
for _p in PRESETS.values():
    _p.setdefault("snr_db", _PAPER_GRID)
    _p.setdefault("realizations", 1000)
    _p.setdefault("vectors_per_frame", 3200)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    scenario: SimScenario
    output: Path | None = None
    fmt: str = "csv"
    workers: int = 1
    gnuplot: Path | None = None
    echo: dict = field(default_factory=dict)


def _coerce(key: str, value):
    if key == "snr_db":
        if isinstance(value, str):
            value = [v for v in value.replace(",", " ").split()]
        if isinstance(value, (int, float)):
            value = [value]
        return tuple(float(v) for v in value)
    if key == "eps":
        if isinstance(value, str):
            value = value.replace(",", " ").split()
        return tuple(float(v) for v in value)
    if key in ("pattern_policy", "notification_timing"):
        return str(value)
    return int(value)


def parse_config(source: dict | str | Path | None = None, preset: str | None = None,
                 overrides: dict | None = None, output=None, fmt: str = "csv",
                 workers: int = 1, gnuplot=None) -> RunConfig:
    """Build a validated :class:`RunConfig`.

    Values are layered: preset, then the config file (or dict), then
    ``overrides``. Keys are the names in :data:`KEYS`.
    """
    cfg: dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        cfg.update(PRESETS[preset])
    if isinstance(source, (str, Path)):
        try:
            loaded = json.loads(Path(source).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {source}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {source} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {source} must hold a JSON object")
        cfg.update(loaded)
    elif isinstance(source, dict):
        cfg.update(source)
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})

    unknown = sorted(set(cfg) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key in MANDATORY:
        if key not in cfg:
            raise ConfigError(f"missing mandatory key '{key}'")
    kwargs = {}
    for key, value in cfg.items():
        try:
            kwargs[KEYS[key]] = _coerce(key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"key '{key}': cannot interpret {value!r}") from exc

    n_t, k, n_r = kwargs["n_t"], kwargs["k_users"], kwargs["n_r"]
    if n_t < k * n_r:
        raise ConfigError(f"key 'tx_antennas': n_t={n_t} < users*rx_antennas={k * n_r}")
    if not 1 <= kwargs["n_iba"] <= n_r:
        raise ConfigError(f"key 'iba': must satisfy 1 <= iba <= rx_antennas={n_r}")
    if fmt not in ("csv", "json"):
        raise ConfigError(f"output format must be csv or json, got {fmt!r}")
    if workers < 1:
        raise ConfigError("workers must be >= 1")
    try:
        scenario = SimScenario(**kwargs)
    except EnumerationCapError as exc:
        raise ConfigError(f"key 'enumeration_cap': {exc}") from exc
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    echo = {key: cfg[key] for key in KEYS if key in cfg}
    echo = {k: (list(v) if isinstance(v, tuple) else v) for k, v in echo.items()}
    return RunConfig(scenario, Path(output) if output else None, fmt, workers,
                     Path(gnuplot) if gnuplot else None, echo)


def _version() -> str:
    try:
        v = metadata.version("artifact")
    except metadata.PackageNotFoundError:
        v = "0+unknown"
    try:
        rev = subprocess.run(["git", "describe", "--always", "--dirty"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0 and rev.stdout.strip():
            return f"{v}+g{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return v


def _record_row(rec: BerRecord) -> dict:
    return {
        "snr_db": rec.snr_db,
        "ber": rec.ber,
        "bits_sent": rec.bits_sent,
        "bit_errors": rec.bit_errors,
        "spatial_bit_errors": rec.spatial_bit_errors,
        "symbol_bit_errors": rec.symbol_bit_errors,
        "per_user_ber": list(rec.per_user_ber),
        "notification_failures": rec.notification_failures,
        "rejected_channels": rec.rejected_channels,
    }


def emit_results(records: Sequence[BerRecord], fmt: str, path, meta: dict | None = None) -> None:
    """Write records as CSV or JSON, plus ``<path>.meta.json`` with run metadata.

    Metadata lives in a sidecar so the data file itself is byte-identical
    across reruns with the same seed.
    """
    if not records:
        raise ValueError("no records to emit")
    path = Path(path)
    try:
        if fmt == "csv":
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(CSV_COLUMNS)
                for rec in records:
                    row = _record_row(rec)
                    row["per_user_ber"] = ";".join(repr(float(v)) for v in rec.per_user_ber)
                    w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in CSV_COLUMNS])
        elif fmt == "json":
            rows = []
            for rec in records:
                row = _record_row(rec)
                row["notification_errors"] = rec.notification_errors
                row["frame_errors"] = list(rec.frame_errors)
                rows.append(row)
            path.write_text(json.dumps({"records": rows}, indent=1) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        if meta is not None:
            Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=1, default=str) + "\n")
    except OSError as exc:
        raise OSError(f"writing results to {path}: {exc}") from exc


def load_records(path) -> list[BerRecord]:
    """Read a CSV or JSON file written by :func:`emit_results`."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json" or text.lstrip().startswith("{"):
        out = []
        for row in json.loads(text)["records"]:
            out.append(BerRecord(
                snr_db=row["snr_db"], bits_sent=row["bits_sent"], bit_errors=row["bit_errors"],
                ber=row["ber"], per_user_ber=tuple(row["per_user_ber"]),
                spatial_bit_errors=row["spatial_bit_errors"], symbol_bit_errors=row["symbol_bit_errors"],
                notification_failures=row["notification_failures"],
                rejected_channels=row["rejected_channels"],
                notification_errors=row.get("notification_errors", 0),
                frame_errors=tuple(row.get("frame_errors", ())),
            ))
        return out
    out = []
    for row in csv.DictReader(text.splitlines()):
        pub = row["per_user_ber"]
        out.append(BerRecord(
            snr_db=float(row["snr_db"]), bits_sent=int(row["bits_sent"]), bit_errors=int(row["bit_errors"]),
            ber=float(row["ber"]), per_user_ber=tuple(float(v) for v in pub.split(";")) if pub else (),
            spatial_bit_errors=int(row["spatial_bit_errors"]), symbol_bit_errors=int(row["symbol_bit_errors"]),
            notification_failures=int(row["notification_failures"]),
            rejected_channels=int(row["rejected_channels"]),
        ))
    return out


def compare_curves(path_a, path_b, target_ber: float = 1e-3) -> float:
    """SNR of curve b minus SNR of curve a at ``target_ber`` (dB)."""
    return snr_at_ber(load_records(path_b), target_ber) - snr_at_ber(load_records(path_a), target_ber)


def pattern_table(n_r: int, k: int = 1, m: int = 4) -> list[dict]:
    """System characteristics for every ``n_iba`` in ``1..n_r``."""
    rows = []
    for n_iba in range(1, n_r + 1):
        sp = PatternSpace(n_r, n_iba)
        rows.append(dict(n_iba=n_iba, c_t=sp.c_t, n_c=sp.n_c, r=sp.rate(k, m), l=sp.l))
    return rows


def format_table(n_r: int, k: int = 1, m: int = 4, n_t: int | None = None) -> str:
    n_t = n_t if n_t is not None else 2 * n_r
    lines = [f"N_t={n_t} N_r={n_r} K={k} M={m}", f"{'N_iba':>5} {'C_t':>5} {'N_c':>5} {'R':>5} {'L':>8}"]
    for row in pattern_table(n_r, k, m):
        lines.append(f"{row['n_iba']:>5} {row['c_t']:>5} {row['n_c']:>5} {row['r']:>5} {row['l']:>8}")
    return "\n".join(lines)


def gnuplot_script(csv_path: Path, title: str) -> str:
    return (
        "set logscale y\nset xlabel 'SNR (dB)'\nset ylabel 'BER'\nset grid\n"
        "set datafile separator ','\n"
        f"set title '{title}'\n"
        f"plot '{csv_path}' using 1:2 skip 1 with linespoints title '{title}'\n"
    )


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpsm", description="Multiuser GPSM downlink BER simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a BER curve")
    run.add_argument("--config", help="JSON file with scenario keys")
    run.add_argument("--preset", choices=sorted(PRESETS))
    for key in KEYS:
        run.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    run.add_argument("-o", "--output", help="result file (stdout CSV when omitted)")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--gnuplot", help="also write a gnuplot script to this path")

    tab = sub.add_parser("table", help="print pattern-space characteristics")
    tab.add_argument("--rx-antennas", type=int, nargs="*", default=[4, 5])
    tab.add_argument("--users", type=int, default=1)
    tab.add_argument("--modulation", type=int, default=4)

    cmp_ = sub.add_parser("compare", help="SNR gap between two BER curves")
    cmp_.add_argument("path_a")
    cmp_.add_argument("path_b")
    cmp_.add_argument("--target-ber", type=float, default=1e-3)
    return ap


def _cmd_run(args) -> int:
    overrides = {k: getattr(args, k) for k in KEYS}
    cfg = parse_config(args.config, args.preset, overrides, args.output, args.format, args.workers, args.gnuplot)
    t0 = time.perf_counter()
    records = snr_sweep(cfg.scenario, cfg.workers)
    meta = {
        "config": cfg.echo,
        "scenario": asdict(cfg.scenario),
        "seed": cfg.scenario.master_seed,
        "version": _version(),
        "wall_time_s": round(time.perf_counter() - t0, 3),
        "workers": cfg.workers,
    }
    if cfg.output is None:
        for rec in records:
            print(f"{rec.snr_db:g},{rec.ber!r},{rec.bits_sent},{rec.bit_errors}")
        return EXIT_OK
    emit_results(records, cfg.fmt, cfg.output, meta)
    if cfg.gnuplot is not None:
        if cfg.fmt != "csv":
            raise ConfigError("--gnuplot requires csv output")
        cfg.gnuplot.write_text(gnuplot_script(cfg.output, cfg.scenario.pattern_policy))
    log.info("wrote %s", cfg.output)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "table":
            blocks = [format_table(n, args.users, args.modulation) for n in args.rx_antennas]
            print("\n\n".join(blocks))
            return EXIT_OK
        if args.command == "compare":
            print(f"{compare_curves(args.path_a, args.path_b, args.target_ber):.4f}")
            return EXIT_OK
        return _cmd_run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
