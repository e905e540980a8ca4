"""Search for the two link-rate scalars.

A pair (uplink, downlink) is feasible when, at 30 FPS, MFF first loses
reliability at 11 vehicles and BFF first loses it at 21.  ``calibrate`` scans
a grid and reports every feasible pair together with the per-axis midpoints.

    python -m skyrelay.calibration --uplink 560e6:740e6:10e6 --downlink 780e6:940e6:20e6
"""
from __future__ import annotations

import argparse
from dataclasses import dataclass

import numpy as np

from .scenario import CellConfig, simulate
from .topology import LinkModel

TARGETS = {"mff": 11, "bff": 21}
DEGRADED_BELOW = 0.99


def reliability(kind: str, n: int, link: LinkModel, fps: float = 30.0, seeds=(1,),
                sim_time: float = 15.0) -> float:
    return float(np.mean([simulate(CellConfig(scenario=kind, n_vehicles=n, fps=fps, seed=s,
                                              sim_time=sim_time, link=link)).reliability
                          for s in seeds]))


def breaks_at(kind: str, n: int, link: LinkModel, **kw) -> bool:
    """True when ``kind`` is healthy at n-1 vehicles and degraded at n."""
    return (reliability(kind, n - 1, link, **kw) >= DEGRADED_BELOW
            and reliability(kind, n, link, **kw) < DEGRADED_BELOW)


@dataclass
class CalibrationResult:
    feasible: list[tuple[float, float]]

    @property
    def uplink_range(self) -> tuple[float, float] | None:
        if not self.feasible:
            return None
        u = [p[0] for p in self.feasible]
        return min(u), max(u)

    @property
    def downlink_range(self) -> tuple[float, float] | None:
        if not self.feasible:
            return None
        d = [p[1] for p in self.feasible]
        return min(d), max(d)

    def midpoint(self) -> tuple[float, float] | None:
        if not self.feasible:
            return None
        (ul, uh), (dl, dh) = self.uplink_range, self.downlink_range
        return (ul + uh) / 2, (dl + dh) / 2


def calibrate(uplink_grid, downlink_grid, seeds=(1,), sim_time: float = 15.0,
              loss_prob: float = 2.5e-3) -> CalibrationResult:
    feasible = []
    for dl in downlink_grid:
        for ul in uplink_grid:
            link = LinkModel(float(ul), float(dl), loss_prob, loss_prob)
            ok = all(breaks_at(kind, n, link, seeds=seeds, sim_time=sim_time)
                     for kind, n in TARGETS.items())
            if ok:
                feasible.append((float(ul), float(dl)))
    return CalibrationResult(feasible)


def _grid(text: str) -> np.ndarray:
    lo, hi, step = (float(x) for x in text.split(":"))
    return np.arange(lo, hi + step / 2, step)


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="python -m skyrelay.calibration")
    p.add_argument("--uplink", default="560e6:740e6:10e6", help="lo:hi:step in bit/s")
    p.add_argument("--downlink", default="780e6:940e6:20e6", help="lo:hi:step in bit/s")
    p.add_argument("--seeds", type=int, default=1)
    args = p.parse_args(argv)
    res = calibrate(_grid(args.uplink), _grid(args.downlink), seeds=range(1, args.seeds + 1))
    for ul, dl in res.feasible:
        print(f"feasible uplink={ul / 1e6:.0f} Mbit/s downlink={dl / 1e6:.0f} Mbit/s")
    mid = res.midpoint()
    if mid is None:
        print("no feasible pair on this grid")
        return 1
    print(f"uplink range {res.uplink_range[0] / 1e6:.0f}-{res.uplink_range[1] / 1e6:.0f} Mbit/s, "
          f"downlink range {res.downlink_range[0] / 1e6:.0f}-{res.downlink_range[1] / 1e6:.0f} "
          f"Mbit/s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
