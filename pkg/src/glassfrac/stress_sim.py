"""Stress propagation from an impact point and crack extraction.

A branch carries a scalar stress and a direction.  At each node the
directional stress of every admissible neighbour is evaluated, the
neighbours are split into the positive and negative side of the carried
direction, the heavier side wins and the branch continues to that side's
most stressed node.  The carried stress is scaled by the direction cosine
and a per-hop decay, so it strictly decreases until it drops under the
stop threshold.  The stressed nodes are finally joined by a minimum
spanning tree, which is the crack pattern.
"""
from __future__ import annotations

import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgumentError, NoFrontierError
from .mesh_gen import NeighborIndex, ParticleSet, TriMesh

log = logging.getLogger(__name__)

DECAY = 0.97
CONVERGENCE_TOL = 1e-6
COMPLETE_GRAPH_LIMIT = 2000


@dataclass(frozen=True)
class ImpactSpec:
    impact_point: tuple[float, float]
    force: float = 500.0
    impact_vector: tuple[float, float] = (1.0, 0.0)
    critical_stress: float = 300.0
    safety_factor: float = 1.0
    stop_threshold: float = 300.0

    def __post_init__(self):
        vx, vy = map(float, self.impact_vector)
        if abs(math.hypot(vx, vy) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"impact_vector must be unit length, got {self.impact_vector}")
        if self.force < 0:
            raise InvalidArgumentError("force must be non-negative")
        if self.critical_stress <= 0 or self.safety_factor <= 0:
            raise InvalidArgumentError("critical_stress and safety_factor must be positive")
        if self.stop_threshold < 0:
            raise InvalidArgumentError("stop_threshold must be non-negative")
        object.__setattr__(self, "impact_point", (float(self.impact_point[0]), float(self.impact_point[1])))
        object.__setattr__(self, "impact_vector", (vx, vy))

    @classmethod
    def from_angle(cls, impact_point, angle: float, **kw) -> "ImpactSpec":
        return cls(impact_point, impact_vector=(math.cos(angle), math.sin(angle)), **kw)


@dataclass(frozen=True)
class TraceStep:
    parent: int
    child: int
    stress: float  # carried stress arriving at the child
    step: int
    direction: tuple[float, float]  # sign-adjusted vector the hop was evaluated against


@dataclass
class StressField:
    root: int | None = None
    root_stress: float = 0.0
    node_stress: dict[int, float] = field(default_factory=dict)
    visited: set[int] = field(default_factory=set)
    trace: list[TraceStep] = field(default_factory=list)
    # signed directional stress seen by every evaluated neighbour (max magnitude)
    neighbor_stress: dict[int, float] = field(default_factory=dict)
    terminal: set[int] = field(default_factory=set)

    @property
    def empty(self) -> bool:
        return self.root is None

    @property
    def max_step(self) -> int:
        return max((t.step for t in self.trace), default=0)

    def step_of(self) -> dict[int, int]:
        out = {} if self.root is None else {self.root: 0}
        for t in self.trace:
            out[t.child] = t.step
        return out


@dataclass
class CrackPattern:
    nodes: np.ndarray  # (n, 2)
    edges: list[tuple[int, int, float]]  # parent index, child index, stress
    impact_node: int | None
    particle_ids: list[int] = field(default_factory=list)

    @classmethod
    def empty(cls) -> "CrackPattern":
        return cls(np.zeros((0, 2)), [], None, [])

    def __len__(self) -> int:
        return len(self.edges)

    @property
    def is_empty(self) -> bool:
        return len(self.nodes) == 0

    def total_length(self) -> float:
        return math.fsum(
            math.dist(self.nodes[i], self.nodes[j]) for i, j, _ in self.edges
        )

    def edge_id_pairs(self) -> set[tuple[int, int]]:
        """Edges as unordered particle-id pairs."""
        pid = self.particle_ids
        return {tuple(sorted((pid[i], pid[j]))) for i, j, _ in self.edges}

    def to_dict(self) -> dict:
        d = {
            "nodes": np.asarray(self.nodes).tolist(),
            "edges": [[int(i), int(j), float(s)] for i, j, s in self.edges],
            "impact": None if self.impact_node is None else np.asarray(self.nodes[self.impact_node]).tolist(),
        }
        d["impact_node"] = self.impact_node
        d["particle_ids"] = [int(p) for p in self.particle_ids]
        return d

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict())
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> "CrackPattern":
        nodes = np.asarray(d["nodes"], dtype=np.float64).reshape(-1, 2)
        edges = [(int(i), int(j), float(s)) for i, j, s in d["edges"]]
        impact_node = d.get("impact_node")
        if impact_node is None and d.get("impact") is not None and len(nodes):
            impact_node = int(np.argmin(((nodes - np.asarray(d["impact"])) ** 2).sum(axis=1)))
        pids = d.get("particle_ids") or list(range(len(nodes)))
        return cls(nodes, edges, impact_node, pids)

    @classmethod
    def from_json(cls, path) -> "CrackPattern":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fracture_condition(sigma_v: float, sigma_c: float, safety: float) -> bool:
    """True when the effective stress exceeds critical stress over safety factor."""
    if sigma_c <= 0 or safety <= 0:
        raise InvalidArgumentError("sigma_c and safety must be positive")
    return sigma_v > sigma_c / safety


def edge_stress(sigma_v: float, start, end, impact_vector) -> float:
    """Directional stress ``sigma_v * cos(theta)`` from ``start`` towards ``end``."""
    dx = float(end[0]) - float(start[0])
    dy = float(end[1]) - float(start[1])
    norm = math.hypot(dx, dy)
    if norm == 0.0:
        raise DegenerateGeometryError("coincident points have no direction")
    vx, vy = float(impact_vector[0]), float(impact_vector[1])
    cos = (dx * vx + dy * vy) / (norm * math.hypot(vx, vy))
    cos = min(1.0, max(-1.0, cos))
    return sigma_v * cos


def summed_stress(stresses) -> tuple[float, float]:
    q1 = math.fsum(s for s in stresses if s > 0)
    q2 = math.fsum(s for s in stresses if s < 0)
    return q1, q2


def select_splitting_edge(frontier) -> int:
    """Pick the continuation node from ``[(particle_id, stress), ...]``.

    The side (positive or negative stress) with the larger summed magnitude
    wins, positive on equality; within it the largest ``|stress|`` wins and
    ties go to the lowest id.
    """
    frontier = list(frontier)
    if not frontier:
        raise NoFrontierError("empty frontier")
    q1, q2 = summed_stress([s for _, s in frontier])
    if q1 >= -q2:
        side = [(i, s) for i, s in frontier if s > 0]
    else:
        side = [(i, s) for i, s in frontier if s < 0]
    if not side:
        side = frontier  # every candidate carries zero stress
    best = max(abs(s) for _, s in side)
    return min(i for i, s in side if abs(s) == best)


def _rotate(v: tuple[float, float], angle: float) -> tuple[float, float]:
    c, s = math.cos(angle), math.sin(angle)
    return (c * v[0] - s * v[1], s * v[0] + c * v[1])


def _candidates(mesh: TriMesh | None, idx: NeighborIndex, node: int, radius: float, visited) -> list[int]:
    pts = idx.particles.positions
    ids = idx.query_radius(pts[node], radius)
    if mesh is not None:
        ids = np.intersect1d(ids, mesh.neighbors(node), assume_unique=True)
    return [int(j) for j in ids if j != node and j not in visited]


def _hop(pts, node, sigma, vec, cands):
    """Evaluate one node: returns (child, carried stress, hop vector) or None."""
    p = pts[node]
    stresses = [(j, edge_stress(sigma, p, pts[j], vec)) for j in cands]
    child = select_splitting_edge(stresses)
    s = dict(stresses)[child]
    # continuing on the negative side flips the carried direction
    eff = vec if s >= 0 else (-vec[0], -vec[1])
    carried = abs(s) * DECAY
    return child, carried, eff, stresses


def propagate(
    mesh: TriMesh | None,
    idx: NeighborIndex,
    impact: ImpactSpec,
    radius: float,
    branch_k: int = 3,
) -> StressField:
    """Propagate the impact stress through the particle mesh.

    The root is the particle nearest the impact point.  ``branch_k`` radial
    arms leave the root (impact vector rotated by ``2*pi*k/branch_k``); every
    later node continues a single branch.  A branch stops when the carried
    stress falls below ``impact.stop_threshold`` (that last node is kept as a
    terminal node) or when no unvisited admissible neighbour is left.
    Admissible neighbours lie within ``radius`` and share a mesh edge with the
    current node; pass ``mesh=None`` to use the radius query alone.
    """
    if branch_k < 1:
        raise InvalidArgumentError("branch_k must be >= 1")
    if radius < 0:
        raise InvalidArgumentError("radius must be non-negative")
    ps = idx.particles
    if not ps.contains(impact.impact_point):
        raise InvalidArgumentError(f"impact point {impact.impact_point} outside extent {ps.extent}")

    field_ = StressField()
    if not fracture_condition(impact.force, impact.critical_stress, impact.safety_factor):
        return field_

    pts = ps.positions
    root = idx.nearest(impact.impact_point)
    field_.root = root
    field_.root_stress = float(impact.force)
    field_.node_stress[root] = float(impact.force)
    field_.visited.add(root)
    threshold = impact.stop_threshold - CONVERGENCE_TOL

    def record(parent, child, carried, eff, stresses, step):
        for j, s in stresses:
            if abs(s) > abs(field_.neighbor_stress.get(j, 0.0)):
                field_.neighbor_stress[j] = s
        field_.visited.add(child)
        field_.node_stress[child] = carried
        field_.trace.append(TraceStep(parent, child, carried, step, (float(eff[0]), float(eff[1]))))

    queue: deque = deque()
    v0 = impact.impact_vector
    root_cands = _candidates(mesh, idx, root, radius, field_.visited)
    for k in range(branch_k):
        cands = [j for j in root_cands if j not in field_.visited]
        if not cands:
            break
        vec = _rotate(v0, 2.0 * math.pi * k / branch_k) if k else v0
        child, carried, eff, stresses = _hop(pts, root, impact.force, vec, cands)
        record(root, child, carried, eff, stresses, 1)
        if carried >= threshold:
            queue.append((child, carried, _unit(pts[child] - pts[root]), 1))
        else:
            field_.terminal.add(child)

    while queue:
        node, sigma, vec, step = queue.popleft()
        cands = _candidates(mesh, idx, node, radius, field_.visited)
        if not cands:
            field_.terminal.add(node)
            continue
        child, carried, eff, stresses = _hop(pts, node, sigma, vec, cands)
        record(node, child, carried, eff, stresses, step + 1)
        if carried >= threshold:
            queue.append((child, carried, _unit(pts[child] - pts[node]), step + 1))
        else:
            field_.terminal.add(child)
    return field_


def _unit(d) -> tuple[float, float]:
    n = math.hypot(d[0], d[1])
    return (float(d[0]) / n, float(d[1]) / n)


def _prim_dense(pts: np.ndarray) -> np.ndarray:
    """Parent array of the Euclidean MST over the complete graph, rooted at 0.

    Ties in the attachment distance go to the lowest node index.
    """
    pts = np.asarray(pts, dtype=np.float64)
    n = len(pts)
    parent = np.full(n, -1, dtype=np.int64)
    if n <= 1:
        return parent
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    in_tree[0] = True
    d = np.hypot(pts[:, 0] - pts[0, 0], pts[:, 1] - pts[0, 1])
    best[:] = d
    parent[:] = 0
    parent[0] = -1
    best[0] = np.inf
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        u = int(np.argmin(cand))  # first minimum = lowest index
        in_tree[u] = True
        best[u] = np.inf
        d = np.hypot(pts[:, 0] - pts[u, 0], pts[:, 1] - pts[u, 1])
        closer = (~in_tree) & (d < best)
        best[closer] = d[closer]
        parent[closer] = u
    return parent


def _mst_sparse(pts: np.ndarray, radius: float) -> np.ndarray:
    """Parent array of an MST over the radius graph, bridged into one tree."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import breadth_first_order, connected_components
    from scipy.sparse.csgraph import minimum_spanning_tree
    from scipy.spatial import cKDTree

    n = len(pts)
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius, output_type="ndarray")
    w = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
    rows, cols, vals = list(pairs[:, 0]), list(pairs[:, 1]), list(w)
    graph = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    ncomp, labels = connected_components(graph, directed=False)
    # join components to the root's component through nearest point pairs
    while ncomp > 1:
        inside = np.flatnonzero(labels == labels[0])
        outside = np.flatnonzero(labels != labels[0])
        d, j = cKDTree(pts[outside]).query(pts[inside])
        k = int(np.argmin(d))
        a, b = int(inside[k]), int(outside[j[k]])
        rows.append(min(a, b))
        cols.append(max(a, b))
        vals.append(float(d[k]) or 1e-12)
        graph = coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        ncomp, labels = connected_components(graph, directed=False)
    mst = minimum_spanning_tree(graph)
    _, parent = breadth_first_order(mst, 0, directed=False, return_predecessors=True)
    parent = parent.astype(np.int64)
    parent[0] = -1
    return parent


def _tree_order(parent: np.ndarray) -> list[int]:
    """Nodes in breadth-first order from the root (parents before children)."""
    children: dict[int, list[int]] = {}
    for c, p in enumerate(parent):
        if p >= 0:
            children.setdefault(int(p), []).append(c)
    order, q = [], deque([0])
    while q:
        u = q.popleft()
        order.append(u)
        q.extend(children.get(u, []))
    return order


def extract_crack_pattern(
    field_: StressField,
    ps: ParticleSet,
    impact: ImpactSpec | None = None,
    radius: float | None = None,
) -> CrackPattern:
    """Join the visited nodes with a Euclidean minimum spanning tree.

    Node 0 of the pattern is the impact node, followed by the visited nodes in
    trace order.  Each edge is oriented away from the impact node and weighted
    with the mean carried stress of its endpoints.  Up to 2000 nodes the MST
    is taken over the complete graph, beyond that over the ``radius``
    neighbourhood graph.
    """
    if field_.empty:
        return CrackPattern.empty()
    ids = [field_.root] + [t.child for t in field_.trace]
    pts = ps.positions[ids]
    if len(ids) == 1:
        return CrackPattern(pts.copy(), [], 0, ids)
    if len(ids) <= COMPLETE_GRAPH_LIMIT:
        parent = _prim_dense(pts)
    else:
        if radius is None:
            from .mesh_gen import default_radius
            radius = default_radius(len(ps), ps.width, ps.height)
        parent = _mst_sparse(pts, radius)
    stress = [field_.node_stress[i] for i in ids]
    edges = [
        (int(parent[c]), c, 0.5 * (stress[parent[c]] + stress[c]))
        for c in _tree_order(parent)
        if parent[c] >= 0
    ]
    return CrackPattern(pts.copy(), edges, 0, ids)


def simulate_timesteps(
    mesh: TriMesh | None,
    idx: NeighborIndex,
    impact: ImpactSpec,
    radius: float,
    branch_k: int = 3,
    frame_count: int = 10,
) -> list[CrackPattern]:
    """Growth frames of one fracture.

    Frame ``t`` keeps the part of the final crack tree reachable from the
    impact node through nodes reached at step ``<= t * max_step / frame_count``,
    so edge sets only grow and the last frame is the full pattern.
    """
    if frame_count < 1:
        raise InvalidArgumentError("frame_count must be >= 1")
    field_ = propagate(mesh, idx, impact, radius, branch_k)
    full = extract_crack_pattern(field_, idx.particles, impact, radius)
    if full.is_empty:
        return [CrackPattern.empty() for _ in range(frame_count)]
    steps = field_.step_of()
    node_step = [steps[p] for p in full.particle_ids]
    max_step = field_.max_step
    frames = []
    for t in range(1, frame_count + 1):
        keep = {0}
        for p, c, _ in full.edges:  # parents precede children
            if p in keep and node_step[c] * frame_count <= t * max_step:
                keep.add(c)
        order = sorted(keep)
        remap = {old: new for new, old in enumerate(order)}
        frames.append(
            CrackPattern(
                full.nodes[order].copy(),
                [(remap[p], remap[c], s) for p, c, s in full.edges if c in keep],
                0,
                [full.particle_ids[i] for i in order],
            )
        )
    return frames
