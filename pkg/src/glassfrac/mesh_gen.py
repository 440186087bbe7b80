"""Particle sampling, fixed-radius neighbor index and the glass-sheet mesh.

The glass sheet is a cloud of particles drawn uniformly over the image
frame.  Stress travels between particles that are both within a query
radius of each other and joined by an edge of the Delaunay mesh.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from .errors import DegenerateGeometryError, InvalidArgumentError

# Radius multiplier over the expected nearest-neighbour spacing.
RADIUS_FACTOR = 1.5


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ParticleSet:
    positions: np.ndarray  # (n, 2) float64, x then y
    width: float
    height: float
    seed: int | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        object.__setattr__(self, "positions", _frozen(pos))

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def extent(self) -> tuple[float, float]:
        return (self.width, self.height)

    def contains(self, point) -> bool:
        x, y = float(point[0]), float(point[1])
        return 0.0 <= x < self.width and 0.0 <= y < self.height


def default_radius(count: int, width: float, height: float) -> float:
    """Neighbor radius: 1.5x the expected spacing of a uniform sample."""
    return RADIUS_FACTOR * math.sqrt(width * height / count)


def sample_particles(count: int, extent: tuple[float, float], seed: int) -> ParticleSet:
    """Draw ``count`` distinct points uniformly over ``[0, w) x [0, h)``.

    Duplicates are redrawn; the result depends only on (count, extent, seed).
    """
    if count < 3:
        raise InvalidArgumentError(f"need at least 3 particles, got {count}")
    width, height = float(extent[0]), float(extent[1])
    if not (width > 0 and height > 0):
        raise InvalidArgumentError(f"extent must have positive area, got {extent}")

    rng = np.random.default_rng(seed)
    pos = np.column_stack(
        [rng.uniform(0.0, width, count), rng.uniform(0.0, height, count)]
    )
    while True:
        _, first = np.unique(pos, axis=0, return_index=True)
        if len(first) == count:
            break
        dup = np.setdiff1d(np.arange(count), first)
        pos[dup, 0] = rng.uniform(0.0, width, len(dup))
        pos[dup, 1] = rng.uniform(0.0, height, len(dup))
    return ParticleSet(pos, width, height, seed)


class NeighborIndex:
    """Exact fixed-radius queries over a particle set (KD-tree backed)."""

    def __init__(self, particles: ParticleSet):
        if len(particles) == 0:
            raise InvalidArgumentError("cannot index an empty particle set")
        self.particles = particles
        self._tree = cKDTree(particles.positions)

    def __len__(self) -> int:
        return len(self.particles)

    def query_radius(self, center, radius: float) -> np.ndarray:
        """Sorted ids of every particle with distance <= ``radius``."""
        if radius < 0:
            raise InvalidArgumentError(f"radius must be non-negative, got {radius}")
        ids = self._tree.query_ball_point(
            np.asarray(center, dtype=np.float64), float(radius), return_sorted=True
        )
        return np.asarray(ids, dtype=np.int64)

    def nearest(self, point) -> int:
        """Id of the particle closest to ``point``; lowest id on ties."""
        pts = self.particles.positions
        d, i = self._tree.query(np.asarray(point, dtype=np.float64))
        # cKDTree does not promise which of several equidistant points it returns
        tied = self._tree.query_ball_point(point, d)
        if len(tied) > 1:
            d2 = ((pts[tied] - np.asarray(point)) ** 2).sum(axis=1)
            return int(min(j for j, dd in zip(tied, d2) if dd == d2.min()))
        return int(i)

    @property
    def tree(self) -> cKDTree:
        return self._tree


def build_neighbor_index(ps: ParticleSet) -> NeighborIndex:
    return NeighborIndex(ps)


def query_radius(idx: NeighborIndex, center, radius: float) -> np.ndarray:
    return idx.query_radius(center, radius)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Triangulated glass sheet.

    ``points`` holds the particles first, followed by the four frame
    corners when the mesh was built with ``frame=True``.  Edges are stored
    as sorted id pairs, triangles as counter-clockwise id triples.
    """

    particles: ParticleSet
    points: np.ndarray
    edges: np.ndarray
    triangles: np.ndarray
    constrained_edges: np.ndarray
    _indptr: np.ndarray = field(repr=False)
    _indices: np.ndarray = field(repr=False)

    @property
    def n_particles(self) -> int:
        return len(self.particles)

    def neighbors(self, i: int) -> np.ndarray:
        return self._indices[self._indptr[i] : self._indptr[i + 1]]

    def to_dict(self) -> dict:
        return {
            "vertices": self.points.tolist(),
            "edges": self.edges.tolist(),
            "triangles": self.triangles.tolist(),
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text


def _is_collinear(pts: np.ndarray) -> bool:
    d = pts - pts[0]
    scale = np.abs(d).max()
    if scale == 0:
        return True
    d = d / scale
    # largest |cross| against the farthest point from the first one
    far = d[np.argmax((d**2).sum(axis=1))]
    cross = d[:, 0] * far[1] - d[:, 1] * far[0]
    return bool(np.abs(cross).max() <= 1e-12)


def _edges_of(triangles: np.ndarray, n: int) -> np.ndarray:
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    lo, hi = e.min(axis=1), e.max(axis=1)
    key = np.unique(lo * n + hi)
    return np.column_stack([key // n, key % n])


def _adjacency(n: int, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64)


def triangulate(ps: ParticleSet, frame: bool = False) -> TriMesh:
    """Delaunay-triangulate the particles.

    With ``frame=True`` the four corners of the extent are added as extra
    vertices so the frame boundary becomes the mesh boundary.  Those four
    segments are then hull edges, so the constrained triangulation is the
    plain Delaunay triangulation of the augmented point set.
    """
    pts = ps.positions
    if len(pts) < 3 or _is_collinear(pts):
        raise DegenerateGeometryError("need at least 3 non-collinear points")
    n = len(pts)
    if frame:
        w, h = ps.width, ps.height
        corners = np.array([[0.0, 0.0], [w, 0.0], [w, h], [0.0, h]])
        pts = np.vstack([pts, corners])

    try:
        tri = Delaunay(pts)
    except QhullError as exc:  # pragma: no cover - guarded above
        raise DegenerateGeometryError(str(exc)) from exc

    triangles = tri.simplices.astype(np.int64)
    # orient counter-clockwise
    a, b, c = (pts[triangles[:, k]] for k in range(3))
    cw = ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0])) < 0
    triangles[cw] = triangles[cw][:, [0, 2, 1]]

    edges = _edges_of(triangles, len(pts))
    hull = np.sort(tri.convex_hull.astype(np.int64), axis=1)
    hull = np.unique(hull, axis=0)
    if frame:
        c0 = n
        frame_segments = np.array([[c0, c0 + 1], [c0 + 1, c0 + 2], [c0 + 2, c0 + 3], [c0, c0 + 3]])
        constrained = np.unique(np.vstack([hull, frame_segments]), axis=0)
    else:
        constrained = hull
    indptr, indices = _adjacency(len(pts), edges)
    return TriMesh(
        particles=ps,
        points=_frozen(pts),
        edges=_frozen(edges),
        triangles=_frozen(triangles),
        constrained_edges=_frozen(constrained),
        _indptr=_frozen(indptr),
        _indices=_frozen(indices),
    )


def mesh_from_points(points, width: float | None = None, height: float | None = None) -> TriMesh:
    """Triangulate an explicit point list (fixtures, debugging)."""
    pts = np.asarray(points, dtype=np.float64)
    w = width if width is not None else float(pts[:, 0].max()) + 1.0
    h = height if height is not None else float(pts[:, 1].max()) + 1.0
    return triangulate(ParticleSet(pts, w, h))
