"""Network scenarios: node placement, obstacles and line-of-sight geometry.

Nodes are addressed by ``(role, index)`` tuples where ``role`` is one of
``"client"``, ``"relay"`` or ``"ap"``. Obstacles are 2-D line segments that
either block a link outright (opaque) or degrade it to NLoS (penetrable).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

CLIENT = "client"
RELAY = "relay"
AP = "ap"
ROLES = (CLIENT, RELAY, AP)


class Node(NamedTuple):
    role: str
    index: int

    def __str__(self):
        return f"{self.role}:{self.index}"


class LinkVisibility(enum.IntEnum):
    LOS = 0
    NLOS = 1
    BLOCKED = 2


@dataclass(frozen=True)
class LosModel:
    """Exponential LoS-probability model ``q(d) = exp(-d / decay)``."""

    decay: float = 100.0

    def __post_init__(self):
        if not self.decay > 0:
            raise ValueError("LoS decay constant must be positive")


@dataclass(frozen=True)
class ScenarioConfig:
    n_clients: int = 30
    n_relays: int = 10
    n_aps: int = 3
    width: float = 100.0
    height: float = 100.0
    # Fixed AP coordinates; any APs beyond this list are placed uniformly.
    ap_positions: Optional[tuple] = None
    # Obstacles per 1000 m^2 of area.
    obstacle_density: float = 0.0
    obstacle_length: tuple = (5.0, 15.0)
    opaque_fraction: float = 0.5
    los_decay: float = 100.0

    def __post_init__(self):
        for name in ("n_clients", "n_relays", "n_aps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not (self.width > 0 and self.height > 0):
            raise ValueError("area must have positive width and height")
        if self.obstacle_density < 0:
            raise ValueError("obstacle_density must be >= 0")
        lo, hi = self.obstacle_length
        if not 0 <= lo <= hi:
            raise ValueError("obstacle_length must satisfy 0 <= min <= max")
        if not 0 <= self.opaque_fraction <= 1:
            raise ValueError("opaque_fraction must lie in [0, 1]")
        if self.ap_positions is not None:
            pos = np.asarray(self.ap_positions, dtype=float).reshape(-1, 2)
            if len(pos) > self.n_aps:
                raise ValueError(
                    f"{len(pos)} fixed AP positions given for {self.n_aps} APs")
            if np.any(pos < 0) or np.any(pos[:, 0] > self.width) or np.any(pos[:, 1] > self.height):
                raise ValueError("fixed AP positions must lie inside the area")

    @property
    def los_model(self):
        return LosModel(self.los_decay)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Scenario:
    clients: np.ndarray
    relays: np.ndarray
    aps: np.ndarray
    # (n_obstacles, 4) rows of x0, y0, x1, y1
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    opaque: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))
    area: tuple = (100.0, 100.0)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "clients", _frozen(np.reshape(self.clients, (-1, 2))))
        object.__setattr__(self, "relays", _frozen(np.reshape(self.relays, (-1, 2))))
        object.__setattr__(self, "aps", _frozen(np.reshape(self.aps, (-1, 2))))
        object.__setattr__(self, "obstacles", _frozen(np.reshape(self.obstacles, (-1, 4))))
        opaque = np.array(self.opaque, dtype=bool).reshape(-1)
        if len(opaque) != len(self.obstacles):
            raise ValueError("one opacity flag is required per obstacle")
        opaque.setflags(write=False)
        object.__setattr__(self, "opaque", opaque)

    @property
    def n_clients(self):
        return len(self.clients)

    @property
    def n_relays(self):
        return len(self.relays)

    @property
    def n_aps(self):
        return len(self.aps)

    def nodes(self):
        for role in ROLES:
            for i in range(len(self.points(role))):
                yield Node(role, i)

    def points(self, role):
        try:
            return {CLIENT: self.clients, RELAY: self.relays, AP: self.aps}[role]
        except KeyError:
            raise ValueError(f"unknown node role {role!r}") from None

    def position(self, node):
        role, index = node
        pts = self.points(role)
        if not 0 <= index < len(pts):
            raise ValueError(f"invalid node id {role}:{index}")
        return pts[index]

    def without_obstacles(self):
        return Scenario(self.clients, self.relays, self.aps, area=self.area, seed=self.seed)


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Draw a random scenario; a pure function of ``(config, seed)``."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0]))
    w, h = config.width, config.height

    def uniform(n):
        return rng.uniform((0.0, 0.0), (w, h), size=(n, 2))

    clients = uniform(config.n_clients)
    relays = uniform(config.n_relays)
    fixed = np.zeros((0, 2))
    if config.ap_positions is not None:
        fixed = np.asarray(config.ap_positions, dtype=float).reshape(-1, 2)
    aps = np.vstack([fixed, uniform(config.n_aps - len(fixed))])

    n_obs = int(round(config.obstacle_density * w * h / 1000.0))
    lo, hi = config.obstacle_length
    centers = uniform(n_obs)
    angles = rng.uniform(0.0, math.pi, size=n_obs)
    half = rng.uniform(lo, hi, size=n_obs) / 2.0
    offset = np.column_stack([np.cos(angles), np.sin(angles)]) * half[:, None]
    start = np.clip(centers - offset, (0.0, 0.0), (w, h))
    end = np.clip(centers + offset, (0.0, 0.0), (w, h))
    opaque = rng.random(n_obs) < config.opaque_fraction
    return Scenario(clients, relays, aps, np.hstack([start, end]), opaque,
                    area=(float(w), float(h)), seed=int(seed))


def _cross(ax, ay, bx, by):
    return ax * by - ay * bx


def segments_intersect(p0, p1, q0, q1):
    """Broadcasting closed-segment intersection test.

    ``p0, p1`` have shape ``(..., L, 2)`` style trailing coordinate axes and
    are tested against every ``q0, q1`` pair; shapes must broadcast.
    """
    p0, p1, q0, q1 = (np.asarray(a, dtype=float) for a in (p0, p1, q0, q1))
    rx, ry = p1[..., 0] - p0[..., 0], p1[..., 1] - p0[..., 1]
    sx, sy = q1[..., 0] - q0[..., 0], q1[..., 1] - q0[..., 1]
    d1 = _cross(sx, sy, p0[..., 0] - q0[..., 0], p0[..., 1] - q0[..., 1])
    d2 = _cross(sx, sy, p1[..., 0] - q0[..., 0], p1[..., 1] - q0[..., 1])
    d3 = _cross(rx, ry, q0[..., 0] - p0[..., 0], q0[..., 1] - p0[..., 1])
    d4 = _cross(rx, ry, q1[..., 0] - p0[..., 0], q1[..., 1] - p0[..., 1])
    general = (d1 * d2 <= 0) & (d3 * d4 <= 0)
    collinear = (d1 == 0) & (d2 == 0)
    # collinear segments meet only if their bounding boxes overlap
    overlap = (
        (np.maximum(p0[..., 0], p1[..., 0]) >= np.minimum(q0[..., 0], q1[..., 0]))
        & (np.maximum(q0[..., 0], q1[..., 0]) >= np.minimum(p0[..., 0], p1[..., 0]))
        & (np.maximum(p0[..., 1], p1[..., 1]) >= np.minimum(q0[..., 1], q1[..., 1]))
        & (np.maximum(q0[..., 1], q1[..., 1]) >= np.minimum(p0[..., 1], p1[..., 1]))
    )
    return np.where(collinear, overlap, general)


def visibility_matrix(s: Scenario, src, dst):
    """LinkVisibility codes for every ``src[a] -> dst[b]`` pair, shape (A, B)."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    out = np.full((len(src), len(dst)), int(LinkVisibility.LOS), dtype=np.int8)
    if len(s.obstacles) == 0 or out.size == 0:
        return out
    obs = s.obstacles
    hit = segments_intersect(
        src[:, None, None, :], dst[None, :, None, :],
        obs[None, None, :, :2], obs[None, None, :, 2:])
    blocked = np.any(hit & s.opaque[None, None, :], axis=2)
    nlos = np.any(hit & ~s.opaque[None, None, :], axis=2)
    out[nlos] = LinkVisibility.NLOS
    out[blocked] = LinkVisibility.BLOCKED
    return out


def visibility(s: Scenario, a, b) -> LinkVisibility:
    a, b = Node(*a), Node(*b)
    if a == b:
        raise ValueError("visibility needs two distinct nodes")
    code = visibility_matrix(s, s.position(a), s.position(b))[0, 0]
    return LinkVisibility(int(code))


def distance_matrix(src, dst):
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    return np.linalg.norm(src[:, None, :] - dst[None, :, :], axis=-1)


def los_probability(distance, model: LosModel = LosModel()):
    d = np.asarray(distance, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    q = np.exp(-d / model.decay)
    return float(q) if q.ndim == 0 else q


class LinkProbabilities(NamedTuple):
    """LoS probabilities for each link class, zero on blocked links."""

    client_relay: np.ndarray
    client_ap: np.ndarray
    relay_ap: np.ndarray


def link_los_probabilities(s: Scenario, model: LosModel = LosModel()) -> LinkProbabilities:
    out = []
    for src, dst in ((s.clients, s.relays), (s.clients, s.aps), (s.relays, s.aps)):
        q = np.asarray(los_probability(distance_matrix(src, dst), model)).reshape(len(src), len(dst))
        q = np.where(visibility_matrix(s, src, dst) == LinkVisibility.BLOCKED, 0.0, q)
        out.append(q)
    return LinkProbabilities(*out)
