"""Kinematic bicycle model at fixed speed and the scripted pure-pursuit driver.

The driver replaces a human demonstrator: it aims at a centerline point one
lookahead ahead, shifting the aim point laterally to the free side when an
obstacle sits in the approach window, and converts the aim angle to a front
steering angle clamped to the actuator range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .track import Track

SPEED = 6.0        # m/s, held constant
WHEELBASE = 2.5    # m
DT = 0.05          # s
MAX_STEER = 0.69   # rad, symmetric actuator limit

DEFAULT_LOOKAHEAD = 6.0
# Aim-point shift engages while the obstacle lies in this arc window
# relative to the car (behind, ahead) in meters.
AVOID_BEHIND = 4.0
AVOID_AHEAD_PAD = 6.0
AVOID_MARGIN = 0.8


@dataclass(frozen=True)
class CarState:
    x: float
    y: float
    heading: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.heading)):
            raise ValueError("car state must be finite")

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    return math.pi - (math.pi - a) % (2 * math.pi)


def clamp_steer(delta: float) -> float:
    return min(MAX_STEER, max(-MAX_STEER, delta))


def step(state: CarState, steering: float, dt: float = DT) -> CarState:
    """Advance one tick of the constant-speed bicycle model."""
    if abs(steering) > MAX_STEER:
        raise ValueError(f"steering {steering} outside [-{MAX_STEER}, {MAX_STEER}]")
    x = state.x + SPEED * math.cos(state.heading) * dt
    y = state.y + SPEED * math.sin(state.heading) * dt
    heading = wrap_angle(state.heading + (SPEED / WHEELBASE) * math.tan(steering) * dt)
    return CarState(x, y, heading)


def start_state(track: Track) -> CarState:
    """Centered on the first waypoint, aligned with the local tangent."""
    _, angle, _ = track.point_at(0.0)
    w0 = track.waypoints[0]
    return CarState(float(w0[0]), float(w0[1]), angle)


def _avoidance_lateral(track: Track, s_car: float, lookahead: float) -> float:
    """Lateral aim offset that clears the nearest obstacle in the window, else 0."""
    g = track.geom
    if g.obstacle_arcs.shape[0] == 0:
        return 0.0
    best = None
    for s_o, d_o, r_o in zip(g.obstacle_arcs, g.obstacle_lats, g.obstacle_radii):
        ds = track.arc_delta(float(s_o), s_car)
        if -AVOID_BEHIND < ds < lookahead + AVOID_AHEAD_PAD:
            if best is None or abs(ds) < abs(best[0]):
                best = (ds, float(d_o), float(r_o))
    if best is None:
        return 0.0
    _, d_o, r_o = best
    clearance = r_o + AVOID_MARGIN
    if d_o >= 0.0:
        # Obstacle on the left; pass on the right.
        lateral = min(0.0, d_o - clearance)
    else:
        lateral = max(0.0, d_o + clearance)
    limit = 0.7 * track.half_width
    return min(limit, max(-limit, lateral))


def expert_steer(track: Track, state: CarState, lookahead: float = DEFAULT_LOOKAHEAD) -> float:
    """Pure pursuit toward the (possibly laterally shifted) lookahead point."""
    s, _, _ = track.locate(state.position[None, :])
    s_car = float(s[0])
    target_s = s_car + lookahead
    point, angle, _ = track.point_at(target_s)
    lateral = _avoidance_lateral(track, s_car, lookahead)
    if lateral != 0.0:
        normal = np.array([-math.sin(angle), math.cos(angle)])
        point = point + lateral * normal
    alpha = wrap_angle(math.atan2(point[1] - state.y, point[0] - state.x) - state.heading)
    delta = math.atan2(2.0 * WHEELBASE * math.sin(alpha), lookahead)
    return clamp_steer(delta)
