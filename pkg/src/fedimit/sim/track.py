"""Seeded closed-loop track generation and centerline geometry queries.

A track is a smooth closed loop of waypoints around the origin with a fixed
drivable half-width and a few circular obstacles placed near (never across)
the centerline. All queries are pure functions of the track and are backed by
a lazily built geometry cache, so tracks are cheap to share between threads
once warmed up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

HALF_WIDTH = 4.0
# Radial perturbation harmonics; low order keeps the loop smooth and spacing bounded.
HARMONICS = (2, 3, 4)
MIN_WAYPOINTS = 32
SPACING_RANGE = (0.5, 3.0)
# Obstacles keep at least this much free lateral corridor on one side.
MIN_CORRIDOR = 1.5
OBSTACLE_ARC_GAP = 20.0
OBSTACLE_KEEPOUT = 15.0


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    radius: float


@dataclass
class Track:
    """Closed centerline loop with per-waypoint signed curvature."""

    waypoints: np.ndarray
    half_width: float
    obstacles: list[Obstacle]
    curvature: np.ndarray
    _geom: "_Geometry" = field(default=None, repr=False, compare=False)

    def validate(self):
        n = self.waypoints.shape[0]
        if n < MIN_WAYPOINTS:
            raise ValueError(f"track needs >= {MIN_WAYPOINTS} waypoints, got {n}")
        if self.half_width <= 1.0:
            raise ValueError("half_width must exceed 1.0 m")
        if self.curvature.shape != (n,):
            raise ValueError("curvature must have one entry per waypoint")
        gaps = np.linalg.norm(np.roll(self.waypoints, -1, axis=0) - self.waypoints, axis=1)
        if gaps.min() < SPACING_RANGE[0] or gaps.max() > SPACING_RANGE[1]:
            raise ValueError(
                f"waypoint spacing [{gaps.min():.3f}, {gaps.max():.3f}] outside {SPACING_RANGE}")
        for ob in self.obstacles:
            _, lateral, _ = self.locate(np.array([[ob.x, ob.y]]))
            free = self.half_width + abs(float(lateral[0])) - ob.radius
            if free < MIN_CORRIDOR:
                raise ValueError("obstacle blocks the drivable band")
        return self

    # -- geometry cache ----------------------------------------------------

    @property
    def geom(self) -> "_Geometry":
        if self._geom is None:
            self._geom = _Geometry(self)
        return self._geom

    @property
    def total_length(self) -> float:
        return self.geom.total

    def locate(self, points: np.ndarray):
        """Project (k, 2) points onto the centerline.

        Returns (arc position s, signed lateral offset, segment index); the
        lateral sign is positive on the left of the travel direction.
        """
        return _project(self.geom, np.asarray(points, dtype=np.float64))

    def point_at(self, s):
        """Centerline point, tangent angle, and curvature at arc position s (wraps)."""
        g = self.geom
        s_arr = np.atleast_1d(np.asarray(s, dtype=np.float64)) % g.total
        seg = np.minimum(np.searchsorted(g.cum, s_arr, side="right") - 1, g.n - 1)
        tt = (s_arr - g.cum[seg]) / g.lengths[seg]
        pts = g.starts[seg] + tt[:, None] * g.vecs[seg]
        ang = g.angles[seg]
        nxt = (seg + 1) % g.n
        kappa = (1.0 - tt) * self.curvature[seg] + tt * self.curvature[nxt]
        if np.isscalar(s) or np.ndim(s) == 0:
            return pts[0], float(ang[0]), float(kappa[0])
        return pts, ang, kappa

    def curvature_at(self, s) -> float:
        return self.point_at(s)[2]

    def arc_delta(self, s_to: float, s_from: float) -> float:
        """Signed ring distance from s_from forward to s_to, in (-total/2, total/2]."""
        total = self.geom.total
        d = (s_to - s_from) % total
        if d > total / 2:
            d -= total
        return d

    # -- persistence ---------------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "half_width": self.half_width,
            "waypoints": self.waypoints.tolist(),
            "curvature": self.curvature.tolist(),
            "obstacles": [{"x": o.x, "y": o.y, "radius": o.radius} for o in self.obstacles],
        }
        return json.dumps(doc, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Track":
        doc = json.loads(text)
        if doc.get("schema_version") != 1:
            raise ValueError(f"unsupported track schema {doc.get('schema_version')!r}")
        return cls(
            waypoints=np.asarray(doc["waypoints"], dtype=np.float64),
            half_width=float(doc["half_width"]),
            obstacles=[Obstacle(o["x"], o["y"], o["radius"]) for o in doc["obstacles"]],
            curvature=np.asarray(doc["curvature"], dtype=np.float64),
        ).validate()


class _Geometry:
    """Precomputed per-segment arrays for fast projection and ray casting."""

    def __init__(self, track: Track):
        w = track.waypoints
        self.n = w.shape[0]
        self.starts = w
        self.vecs = np.roll(w, -1, axis=0) - w
        self.lengths = np.linalg.norm(self.vecs, axis=1)
        self.dirs = self.vecs / self.lengths[:, None]
        # Left normal of each segment (travel direction rotated +90 degrees).
        self.normals = np.stack([-self.dirs[:, 1], self.dirs[:, 0]], axis=1)
        self.angles = np.arctan2(self.dirs[:, 1], self.dirs[:, 0])
        self.cum = np.concatenate([[0.0], np.cumsum(self.lengths)])[:-1]
        self.total = float(self.lengths.sum())

        # Waypoint normals from central-difference tangents give smooth boundaries.
        tang = np.roll(w, -1, axis=0) - np.roll(w, 1, axis=0)
        tang /= np.linalg.norm(tang, axis=1)[:, None]
        wp_normals = np.stack([-tang[:, 1], tang[:, 0]], axis=1)
        self.left_boundary = w + track.half_width * wp_normals
        self.right_boundary = w - track.half_width * wp_normals

        # Boundary edges for ray casting, both loops concatenated.
        def edges(poly):
            return poly, np.roll(poly, -1, axis=0) - poly

        la, lv = edges(self.left_boundary)
        ra, rv = edges(self.right_boundary)
        self.edge_starts = np.concatenate([la, ra])
        self.edge_vecs = np.concatenate([lv, rv])

        # Obstacle anchors on the centerline, used by the scripted driver.
        if track.obstacles:
            centers = np.array([[o.x, o.y] for o in track.obstacles])
            s, lat, _ = _project(self, centers)
            self.obstacle_arcs = s
            self.obstacle_lats = lat
            self.obstacle_radii = np.array([o.radius for o in track.obstacles])
            self.obstacle_centers = centers
        else:
            self.obstacle_arcs = np.zeros(0)
            self.obstacle_lats = np.zeros(0)
            self.obstacle_radii = np.zeros(0)
            self.obstacle_centers = np.zeros((0, 2))


def _project(g: _Geometry, points: np.ndarray):
    p = np.atleast_2d(points)
    rel = p[:, None, :] - g.starts[None, :, :]
    t = np.clip(np.einsum("kij,ij->ki", rel, g.dirs) / g.lengths[None, :], 0.0, 1.0)
    closest = g.starts[None, :, :] + t[:, :, None] * g.vecs[None, :, :]
    d2 = np.sum((p[:, None, :] - closest) ** 2, axis=2)
    seg = np.argmin(d2, axis=1)
    rows = np.arange(p.shape[0])
    tt = t[rows, seg]
    s = g.cum[seg] + tt * g.lengths[seg]
    offset = p - closest[rows, seg]
    lateral = offset[:, 0] * g.normals[seg, 0] + offset[:, 1] * g.normals[seg, 1]
    return s, lateral, seg


def generate_track(seed: int, n_waypoints: int = 128, base_radius: float = 25.0,
                   roughness: float = 0.25, n_obstacles: int = 2) -> Track:
    """Deterministic closed loop: a circle with low-order radial harmonics.

    The radius profile is r(phi) = base_radius * (1 + roughness * sum of
    seeded sinusoids), so roughness 0 yields an exact circle. Obstacles get
    distinct arc positions away from the start and a lateral offset that
    always leaves a free corridor.
    """
    if n_waypoints < MIN_WAYPOINTS:
        raise ValueError(f"n_waypoints must be >= {MIN_WAYPOINTS}")
    if base_radius <= 0:
        raise ValueError("base_radius must be positive")
    if not 0.0 <= roughness <= 0.4:
        raise ValueError("roughness must lie in [0, 0.4]")
    if n_obstacles < 0:
        raise ValueError("n_obstacles must be nonnegative")

    rng = np.random.default_rng(seed)
    raw = rng.uniform(0.5, 1.0, size=len(HARMONICS))
    amps = raw / raw.sum()
    phases = rng.uniform(0.0, 2 * np.pi, size=len(HARMONICS))

    phi = np.linspace(0.0, 2 * np.pi, n_waypoints, endpoint=False)
    ks = np.asarray(HARMONICS, dtype=np.float64)
    wave = np.sin(np.outer(phi, ks) + phases)
    r = base_radius * (1.0 + roughness * wave @ amps)
    dr = base_radius * roughness * (np.cos(np.outer(phi, ks) + phases) * ks) @ amps
    ddr = -base_radius * roughness * (np.sin(np.outer(phi, ks) + phases) * ks * ks) @ amps

    waypoints = np.stack([r * np.cos(phi), r * np.sin(phi)], axis=1)
    # Signed curvature of a polar curve; positive for the counterclockwise loop.
    kappa = (r * r + 2 * dr * dr - r * ddr) / np.power(r * r + dr * dr, 1.5)

    track = Track(waypoints=waypoints, half_width=HALF_WIDTH, obstacles=[],
                  curvature=kappa)
    track.validate()

    obstacles = []
    total = track.total_length
    taken = []
    attempts = 0
    while len(obstacles) < n_obstacles and attempts < 200:
        attempts += 1
        s = rng.uniform(OBSTACLE_KEEPOUT, total - OBSTACLE_KEEPOUT)
        if any(min(abs(s - t), total - abs(s - t)) < OBSTACLE_ARC_GAP for t in taken):
            continue
        side = 1.0 if rng.random() < 0.5 else -1.0
        offset = side * rng.uniform(0.30, 0.55) * HALF_WIDTH
        radius = rng.uniform(0.6, 1.0)
        point, angle, _ = track.point_at(s)
        normal = np.array([-np.sin(angle), np.cos(angle)])
        center = point + offset * normal
        obstacles.append(Obstacle(float(center[0]), float(center[1]), float(radius)))
        taken.append(s)
    if len(obstacles) < n_obstacles:
        raise ValueError(f"could not place {n_obstacles} obstacles on this track")

    return Track(waypoints=waypoints, half_width=HALF_WIDTH, obstacles=obstacles,
                 curvature=kappa).validate()
