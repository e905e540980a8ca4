"""Command line front end for sweeps.

Precedence: a ``--figure`` recipe, then the ``--config`` file, then flags.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__
from .runner import (ConfigError, IoError, RunConfig, UnknownFigure, figure_names,
                     figure_recipe, normalize_mapping, run_sweep)

log = logging.getLogger("skyrelay")

# flag -> config key; values go through RunConfig.from_mapping parsing
_FLAG_KEYS = {
    "scenario": "scenarios", "vehicles": "n_vehicles", "fps": "fps", "seeds": "seeds",
    "sim_time": "sim_time", "uplink_rate": "uplink_rate", "downlink_rate": "downlink_rate",
    "buffer_bytes": "buffer_bytes", "loss_prob": "loss_prob", "trace_file": "trace_file",
    "out": "out", "jobs": "jobs",
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="skyrelay",
        description="Run a UAV -> base station -> vehicles dissemination sweep and write CSV.")
    p.add_argument("--config", metavar="FILE", help="YAML sweep configuration")
    p.add_argument("--figure", metavar="NAME",
                   help=f"canned sweep for a figure ({', '.join(figure_names())})")
    p.add_argument("--scenario", help="mff, bff, bfa, bao, a comma list, or 'all'")
    p.add_argument("--vehicles", help="vehicle counts, e.g. 4..21 or 4,8,12")
    p.add_argument("--fps", help="frame rates, e.g. 15,30")
    p.add_argument("--seeds", help="seeds, e.g. 1..5")
    p.add_argument("--sim-time", type=float, help="simulated seconds per cell (default 15)")
    p.add_argument("--uplink-rate", type=float, help="UAV->BS rate in bit/s")
    p.add_argument("--downlink-rate", type=float, help="BS->vehicles aggregate rate in bit/s")
    p.add_argument("--buffer-bytes", type=int, help="per-bearer buffer capacity in bytes")
    p.add_argument("--loss-prob", type=float, help="per-packet loss probability, both links")
    p.add_argument("--trace-file", help="CSV with vehicle_count,frame_size_bytes")
    p.add_argument("--out", help="CSV output path (default: stdout)")
    p.add_argument("--jobs", type=int, help="parallel worker processes (default: CPU count)")
    p.add_argument("-q", "--quiet", action="store_true", help="no progress on stderr")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.figure:
        fig = figure_recipe(args.figure)
        data.update(scenarios=fig.scenarios, n_vehicles=fig.n_vehicles, fps=fig.fps,
                    columns=fig.columns)
    if args.config:
        data.update(RunConfig.load_mapping(args.config))
    flags = {key: getattr(args, flag) for flag, key in _FLAG_KEYS.items()
             if getattr(args, flag) is not None}
    data.update(normalize_mapping(flags))
    return RunConfig.from_mapping(data)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        cfg = config_from_args(args)
        total = len(cfg.scenarios) * len(set(cfg.n_vehicles)) * len(set(cfg.fps)) \
            * len(set(cfg.seeds))
        done = 0
        t0 = time.perf_counter()

        def progress(rec):
            nonlocal done
            done += 1
            log.debug("%s n=%d fps=%g seed=%d", rec.scenario, rec.n_vehicles, rec.fps, rec.seed)

        log.info("running %d cells", total)
        result = run_sweep(cfg, progress=progress)
        if cfg.out is None:
            result.write(sys.stdout)
        log.info("%d cells in %.1f s%s", done, time.perf_counter() - t0,
                 f", wrote {cfg.out}" if cfg.out else "")
    except (ConfigError, UnknownFigure) as exc:
        print(f"skyrelay: configuration error: {exc}", file=sys.stderr)
        return 2
    except IoError as exc:
        print(f"skyrelay: i/o error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
