"""Planar environment: access point at the origin, a source, and disk-shaped blockages.

Candidates may only sit in the region that sees both the access point and the
source over unobstructed straight lines (the "relay region").  Everything here
works on plain ``(x, y)`` coordinates in meters; the ``*_many`` variants take
``(m, 2)`` arrays so the Monte Carlo and grid code never loops in Python.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


PILOT_PROPOSALS = 10_000
MAX_PROPOSALS_PER_POINT = 1_000_000


class InfeasibleGeometryError(ValueError):
    """Raised when the relay region is empty or cannot be sampled."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def __post_init__(self):
        if not (np.isfinite(self.x) and np.isfinite(self.y)):
            raise ValueError(f"point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y], dtype=float)


ORIGIN = Point(0.0, 0.0)


@dataclass(frozen=True)
class Disk:
    center: Point
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"disk radius must be positive, got {self.radius}")

    def contains(self, p: Point) -> bool:
        return bool(np.hypot(p.x - self.center.x, p.y - self.center.y) < self.radius)


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle ``[x_min, x_max] x [y_min, y_max]``."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (self.x_max > self.x_min and self.y_max > self.y_min):
            raise ValueError(f"sampling box must have positive area, got {self}")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def contains_many(self, pts: np.ndarray) -> np.ndarray:
        x, y = pts[..., 0], pts[..., 1]
        return (x >= self.x_min) & (x <= self.x_max) & (y >= self.y_min) & (y <= self.y_max)


@dataclass(frozen=True)
class Environment:
    source: Point
    blockages: tuple[Disk, ...] = ()
    sampling_box: Box = field(default_factory=lambda: Box(-10.0, -10.0, 10.0, 10.0))

    def __post_init__(self):
        object.__setattr__(self, "blockages", tuple(self.blockages))
        for disk in self.blockages:
            if disk.contains(self.source):
                raise InfeasibleGeometryError(f"source {self.source} lies inside blockage {disk}")
            if disk.contains(ORIGIN):
                raise InfeasibleGeometryError(f"access point lies inside blockage {disk}")

    @property
    def centers(self) -> np.ndarray:
        return np.array([[d.center.x, d.center.y] for d in self.blockages], dtype=float).reshape(-1, 2)

    @property
    def radii(self) -> np.ndarray:
        return np.array([d.radius for d in self.blockages], dtype=float)


def default_environment() -> Environment:
    """Source at (5.76, 5.76) m behind a single 1.5 m disk halfway to the AP."""
    return Environment(
        source=Point(5.76, 5.76),
        blockages=(Disk(Point(2.88, 2.88), 1.5),),
        sampling_box=Box(-10.0, -10.0, 10.0, 10.0),
    )


def _segment_clear(a: np.ndarray, b: np.ndarray, centers: np.ndarray, radii: np.ndarray) -> np.ndarray:
    # a: (m, 2), b: (m, 2) or (2,); returns (m,) bool. Tangency counts as clear.
    a = np.atleast_2d(a)
    b = np.broadcast_to(b, a.shape)
    # lexicographic endpoint order keeps the float result symmetric in (a, b)
    swap = (b[:, 0] < a[:, 0]) | ((b[:, 0] == a[:, 0]) & (b[:, 1] < a[:, 1]))
    a, b = np.where(swap[:, None], b, a), np.where(swap[:, None], a, b)
    clear = np.ones(a.shape[0], dtype=bool)
    d = b - a
    dd = np.einsum("ij,ij->i", d, d)
    safe_dd = np.where(dd > 0, dd, 1.0)
    for c, r in zip(centers, radii):
        t = np.einsum("ij,ij->i", c - a, d) / safe_dd
        t = np.clip(np.where(dd > 0, t, 0.0), 0.0, 1.0)
        closest = a + t[:, None] * d
        dist = np.hypot(closest[:, 0] - c[0], closest[:, 1] - c[1])
        clear &= dist >= r
    return clear


def los_clear(a: Point, b: Point, env: Environment) -> bool:
    """True when the straight segment from ``a`` to ``b`` misses every blockage interior."""
    if a == b:
        return True
    return bool(_segment_clear(a.as_array(), b.as_array(), env.centers, env.radii)[0])


def los_clear_many(pts: np.ndarray, target: Point, env: Environment) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return _segment_clear(pts, target.as_array(), env.centers, env.radii)


def outside_blockages_many(pts: np.ndarray, env: Environment) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    ok = np.ones(pts.shape[0], dtype=bool)
    for c, r in zip(env.centers, env.radii):
        ok &= np.hypot(pts[:, 0] - c[0], pts[:, 1] - c[1]) >= r
    return ok


def in_region_q_many(pts: np.ndarray, env: Environment) -> np.ndarray:
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    return (
        env.sampling_box.contains_many(pts)
        & outside_blockages_many(pts, env)
        & los_clear_many(pts, ORIGIN, env)
        & los_clear_many(pts, env.source, env)
    )


def in_region_q(q: Point, env: Environment) -> bool:
    """Membership in the relay region: inside the box, outside every disk, LOS to AP and source."""
    return bool(in_region_q_many(q.as_array(), env)[0])


def _propose(env: Environment, m: int, rng: np.random.Generator) -> np.ndarray:
    box = env.sampling_box
    return np.column_stack(
        [rng.uniform(box.x_min, box.x_max, m), rng.uniform(box.y_min, box.y_max, m)]
    )


def acceptance_rate(env: Environment, proposals: int, rng: np.random.Generator) -> tuple[float, int]:
    """Fraction of uniform box proposals that land in the relay region, and the hit count."""
    hits = int(in_region_q_many(_propose(env, proposals, rng), env).sum())
    return hits / proposals, hits


def sample_points(env: Environment, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points uniformly over the relay region by rejection from the box.

    Returns an ``(n, 2)`` array.  A pilot batch with no accepted proposal means the
    region is empty (or vanishingly small) and raises InfeasibleGeometryError.
    """
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if n == 0:
        return np.empty((0, 2))
    pilot = _propose(env, PILOT_PROPOSALS, rng)
    keep = pilot[in_region_q_many(pilot, env)]
    if keep.shape[0] == 0:
        raise InfeasibleGeometryError(
            f"no proposal out of {PILOT_PROPOSALS} landed in the relay region; "
            "check blockage layout and sampling box"
        )
    rate = keep.shape[0] / PILOT_PROPOSALS
    chunks = [keep]
    have = keep.shape[0]
    spent = PILOT_PROPOSALS
    budget = MAX_PROPOSALS_PER_POINT * n
    while have < n:
        if spent >= budget:
            raise InfeasibleGeometryError(f"rejection sampler exceeded {budget} proposals")
        m = min(int(1.2 * (n - have) / rate) + 64, budget - spent)
        batch = _propose(env, m, rng)
        batch = batch[in_region_q_many(batch, env)]
        chunks.append(batch)
        have += batch.shape[0]
        spent += m
    return np.concatenate(chunks)[:n]


def sample_positions(env: Environment, n: int, rng: np.random.Generator) -> list[Point]:
    return [Point(float(x), float(y)) for x, y in sample_points(env, n, rng)]


def region_grid(env: Environment, cell: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cell-center grid over the sampling box.

    Returns ``(xs, ys, mask)`` where ``mask[j, i]`` says whether the center
    ``(xs[i], ys[j])`` is in the relay region.
    """
    if not cell > 0:
        raise ValueError(f"cell size must be positive, got {cell}")
    box = env.sampling_box
    nx = max(1, int(round((box.x_max - box.x_min) / cell)))
    ny = max(1, int(round((box.y_max - box.y_min) / cell)))
    xs = box.x_min + (np.arange(nx) + 0.5) * (box.x_max - box.x_min) / nx
    ys = box.y_min + (np.arange(ny) + 0.5) * (box.y_max - box.y_min) / ny
    gx, gy = np.meshgrid(xs, ys)
    mask = in_region_q_many(np.column_stack([gx.ravel(), gy.ravel()]), env).reshape(gy.shape)
    return xs, ys, mask


def region_area(env: Environment, cell: float = 0.01) -> float:
    xs, ys, mask = region_grid(env, cell)
    box = env.sampling_box
    return float(mask.mean() * box.area)


def environment_from_dict(source: Sequence[float], blockages: Sequence[Sequence[float]], box: Sequence[float]) -> Environment:
    """Build an Environment from ``[x, y]``, ``[[cx, cy, r], ...]`` and ``[x_min, y_min, x_max, y_max]``."""
    if len(source) != 2:
        raise ValueError("source must be [x, y]")
    disks = []
    for b in blockages:
        if len(b) != 3:
            raise ValueError(f"blockage must be [cx, cy, radius], got {list(b)}")
        disks.append(Disk(Point(float(b[0]), float(b[1])), float(b[2])))
    if len(box) != 4:
        raise ValueError("sampling box must be [x_min, y_min, x_max, y_max]")
    return Environment(Point(float(source[0]), float(source[1])), tuple(disks), Box(*map(float, box)))
