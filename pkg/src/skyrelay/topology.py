"""Node geometry and the abstract per-link rate/loss model.

Distance does not modulate rate or loss; positions are kept for reporting.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Two scalars calibrated against the MFF (N=11) and BFF (N=21) 30 FPS
# breakpoints; see README "Calibration".
UPLINK_RATE_BPS = 650e6
DOWNLINK_RATE_BPS = 850e6
LOSS_PROB = 2.5e-3
UAV_HEIGHT_M = 50.0
DEPLOYMENT_RECT_M = (100.0, 100.0)


class InvalidCount(ValueError):
    pass


@dataclass(frozen=True)
class NodeLayout:
    uav_height_m: float
    bs_position: tuple[float, float]
    vehicle_positions: np.ndarray = field(repr=False)
    deployment_rect: tuple[float, float]

    def __post_init__(self):
        if self.uav_height_m <= 0:
            raise ValueError("UAV height must be positive")
        w, h = self.deployment_rect
        pos = self.vehicle_positions
        if pos.size and ((pos < 0).any() or (pos[:, 0] > w).any() or (pos[:, 1] > h).any()):
            raise ValueError("vehicle outside the deployment rectangle")

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicle_positions)

    @property
    def uav_position(self) -> tuple[float, float, float]:
        w, h = self.deployment_rect
        return (w / 2, h / 2, self.uav_height_m)


def place_vehicles(n: int, rect: tuple[float, float] = DEPLOYMENT_RECT_M,
                   rng: np.random.Generator | None = None,
                   uav_height_m: float = UAV_HEIGHT_M) -> NodeLayout:
    """Drop ``n`` vehicles uniformly in ``rect``; the UAV hovers over its
    centre and the BS sits on the ground right below it."""
    if n < 1:
        raise InvalidCount(f"need at least one vehicle, got {n}")
    w, h = rect
    if w <= 0 or h <= 0:
        raise ValueError("deployment rectangle must have positive sides")
    rng = rng if rng is not None else np.random.default_rng()
    pos = rng.uniform((0.0, 0.0), (w, h), size=(n, 2))
    return NodeLayout(uav_height_m, (w / 2, h / 2), pos, (w, h))


@dataclass(frozen=True)
class LinkModel:
    uplink_rate: float = UPLINK_RATE_BPS
    downlink_rate: float = DOWNLINK_RATE_BPS
    loss_prob_ul: float = LOSS_PROB
    loss_prob_dl: float = LOSS_PROB

    def __post_init__(self):
        if self.uplink_rate <= 0 or self.downlink_rate <= 0:
            raise ValueError("link rates must be positive")
        for p in (self.loss_prob_ul, self.loss_prob_dl):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"loss probability {p} outside [0, 1]")

    def loss_prob(self, direction: str) -> float:
        return self.loss_prob_ul if direction == "UL" else self.loss_prob_dl

    @property
    def relay_capacity(self) -> float:
        """Uplink rate left when every uplink byte must also cross the downlink
        in the same TDD airtime (the MFF saturation service rate)."""
        return 1.0 / (1.0 / self.uplink_rate + 1.0 / self.downlink_rate)


def channel_draw(link: LinkModel, direction: str, rng: np.random.Generator,
                 size: int | None = None):
    """True where the packet is delivered."""
    p = link.loss_prob(direction)
    return rng.random(size) >= p
