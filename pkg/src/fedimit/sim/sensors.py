"""Heterogeneous observation renderers and the condition-severity perturbation.

Three modalities view the same world state:

* ``ray``  - 16 range readings, evenly spread over 360 degrees starting dead
  ahead, capped at 30 m and scaled to [0, 1].
* ``grid`` - 8x8 occupancy of a 16 m x 16 m window ahead of the car (rows march
  forward 1..15 m, columns sweep right to left -7..7 m); a cell is 1.0 when its
  center is off the drivable band or inside an obstacle.
* ``sem``  - 6 compact summary values: cross-track error / half-width, heading
  error / pi, curvature at three lookahead distances / 0.15, and distance to
  the nearest obstacle / 30 m.

All rendered values land in [-1, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .track import Track
from .vehicle import CarState, wrap_angle

MODALITIES = ("ray", "grid", "sem")
MODALITY_DIMS = {"ray": 16, "grid": 64, "sem": 6}

RAY_COUNT = 16
RAY_CAP = 30.0
GRID_SIZE = 8
GRID_EXTENT = 16.0
SEM_LOOKAHEADS = (4.0, 8.0, 16.0)
SEM_CURV_SCALE = 0.15
OBSTACLE_DIST_CAP = 30.0

MAX_SEVERITY = 4
NOISE_SIGMA_PER_LEVEL = 0.05
DROPOUT_PER_LEVEL = 0.05


def check_modality(modality: str) -> str:
    if modality not in MODALITIES:
        raise ValueError(f"unknown modality {modality!r}")
    return modality


@dataclass(frozen=True, eq=False)
class Observation:
    modality: str
    values: np.ndarray

    def __post_init__(self):
        check_modality(self.modality)
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (MODALITY_DIMS[self.modality],):
            raise ValueError(f"{self.modality} observation needs "
                             f"{MODALITY_DIMS[self.modality]} values, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("observation values must be finite")
        if v.min() < -1.0 or v.max() > 1.0:
            raise ValueError("observation values must lie in [-1, 1]")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)


def observe(track: Track, state: CarState, modality: str) -> Observation:
    check_modality(modality)
    if modality == "ray":
        values = _render_rays(track, state)
    elif modality == "grid":
        values = _render_grid(track, state)
    else:
        values = _render_sem(track, state)
    return Observation(modality, values)


def _render_rays(track: Track, state: CarState) -> np.ndarray:
    g = track.geom
    origin = state.position
    angles = state.heading + 2.0 * np.pi * np.arange(RAY_COUNT) / RAY_COUNT
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)

    # Ray-segment intersections against both boundary loops at once.
    rel = g.edge_starts[None, :, :] - origin[None, None, :]
    cross_de = dirs[:, 0:1] * g.edge_vecs[None, :, 1] - dirs[:, 1:2] * g.edge_vecs[None, :, 0]
    cross_re = rel[:, :, 0] * g.edge_vecs[None, :, 1] - rel[:, :, 1] * g.edge_vecs[None, :, 0]
    cross_rd = rel[:, :, 0] * dirs[:, 1:2] - rel[:, :, 1] * dirs[:, 0:1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = -cross_re / cross_de
        u = -cross_rd / cross_de
    valid = (np.abs(cross_de) > 1e-12) & (t > 1e-9) & (u >= 0.0) & (u <= 1.0)
    t = np.where(valid, t, np.inf)
    dist = t.min(axis=1)

    # Obstacle circles.
    for center, radius in zip(g.obstacle_centers, g.obstacle_radii):
        oc = origin - center
        b = dirs @ oc
        c = oc @ oc - radius * radius
        disc = b * b - c
        hit = disc >= 0.0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t1 = -b - root
        t2 = -b + root
        tc = np.where(t1 > 1e-9, t1, np.where(t2 > 1e-9, t2, np.inf))
        dist = np.minimum(dist, np.where(hit, tc, np.inf))

    return np.minimum(dist, RAY_CAP) / RAY_CAP


def grid_cell_centers(state: CarState) -> np.ndarray:
    """World coordinates of the 64 cell centers, row-major (forward, then right to left)."""
    cell = GRID_EXTENT / GRID_SIZE
    fwd = np.array([np.cos(state.heading), np.sin(state.heading)])
    left = np.array([-fwd[1], fwd[0]])
    xs = cell / 2 + cell * np.arange(GRID_SIZE)                  # 1..15 m ahead
    ys = GRID_EXTENT / 2 - cell / 2 - cell * np.arange(GRID_SIZE)  # +7..-7 m, left first
    xf, yf = np.meshgrid(xs, ys, indexing="ij")
    return (state.position[None, :]
            + xf.reshape(-1, 1) * fwd[None, :]
            + yf.reshape(-1, 1) * left[None, :])


def _render_grid(track: Track, state: CarState) -> np.ndarray:
    points = grid_cell_centers(state)
    _, lateral, _ = track.locate(points)
    occupied = np.abs(lateral) > track.half_width
    g = track.geom
    for center, radius in zip(g.obstacle_centers, g.obstacle_radii):
        occupied |= np.sum((points - center[None, :]) ** 2, axis=1) <= radius * radius
    return occupied.astype(np.float64)


def _render_sem(track: Track, state: CarState) -> np.ndarray:
    s, lateral, _ = track.locate(state.position[None, :])
    s_car = float(s[0])
    _, tangent, _ = track.point_at(s_car)
    heading_err = wrap_angle(state.heading - tangent)
    curv = [track.curvature_at(s_car + d) for d in SEM_LOOKAHEADS]

    g = track.geom
    if g.obstacle_centers.shape[0]:
        gaps = np.linalg.norm(g.obstacle_centers - state.position[None, :], axis=1) - g.obstacle_radii
        obstacle_dist = max(0.0, float(gaps.min()))
    else:
        obstacle_dist = OBSTACLE_DIST_CAP

    values = np.array([
        float(lateral[0]) / track.half_width,
        heading_err / np.pi,
        curv[0] / SEM_CURV_SCALE,
        curv[1] / SEM_CURV_SCALE,
        curv[2] / SEM_CURV_SCALE,
        min(obstacle_dist, OBSTACLE_DIST_CAP) / OBSTACLE_DIST_CAP,
    ])
    return np.clip(values, -1.0, 1.0)


def perturb_with_rng(obs: Observation, severity: int, rng: np.random.Generator) -> Observation:
    """Same contract as perturb but drawing from a caller-owned generator."""
    if not 0 <= severity <= MAX_SEVERITY:
        raise ValueError(f"severity {severity} outside 0..{MAX_SEVERITY}")
    if severity == 0:
        return obs
    sigma = NOISE_SIGMA_PER_LEVEL * severity
    values = obs.values + rng.normal(0.0, sigma, size=obs.values.shape)
    if obs.modality in ("ray", "grid"):
        dropped = rng.random(size=values.shape) < DROPOUT_PER_LEVEL * severity
        values = np.where(dropped, 0.0, values)
    return Observation(obs.modality, np.clip(values, -1.0, 1.0))


def perturb(obs: Observation, severity: int, seed: int) -> Observation:
    """Degrade an observation: Gaussian noise on every value plus, for the ray
    and grid modalities, independent per-entry dropout to exactly zero.

    Severity 0 returns the observation unchanged. Deterministic per seed.
    """
    return perturb_with_rng(obs, severity, np.random.default_rng(seed))
