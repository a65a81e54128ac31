"""Triangular meshes with tagged boundary edges.

A boundary edge may carry one flow tag (DIRICHLET or TRACTION) and, independently,
one electric tag (ELECTRODE, ELECTRODE_GROUND or INSULATED). In the mesh file the
same node pair then simply appears on two lines.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence, Union

import numpy as np


class MeshError(ValueError):
    """Raised for invalid meshes or malformed mesh files."""


class TagKind(enum.Enum):
    DIRICHLET = "DIRICHLET"
    TRACTION = "TRACTION"
    ELECTRODE = "ELECTRODE"
    ELECTRODE_GROUND = "ELECTRODE_GROUND"
    INSULATED = "INSULATED"


FLOW_KINDS = (TagKind.DIRICHLET, TagKind.TRACTION)
ELECTRIC_KINDS = (TagKind.ELECTRODE, TagKind.ELECTRODE_GROUND, TagKind.INSULATED)


@dataclass(frozen=True)
class BoundaryTag:
    kind: TagKind
    index: int = 0

    def __post_init__(self):
        if not isinstance(self.kind, TagKind):
            object.__setattr__(self, "kind", TagKind(self.kind))
        if self.kind in (TagKind.ELECTRODE, TagKind.ELECTRODE_GROUND):
            if self.index < 1:
                raise MeshError(f"{self.kind.value} needs an electrode index >= 1")
        elif self.index != 0:
            raise MeshError(f"{self.kind.value} takes no electrode index")

    @property
    def is_flow(self) -> bool:
        return self.kind in FLOW_KINDS

    def __str__(self) -> str:
        return self.kind.value if self.index == 0 else f"{self.kind.value} {self.index}"


DIRICHLET = BoundaryTag(TagKind.DIRICHLET)
TRACTION = BoundaryTag(TagKind.TRACTION)
INSULATED = BoundaryTag(TagKind.INSULATED)


def electrode(i: int) -> BoundaryTag:
    return BoundaryTag(TagKind.ELECTRODE, i)


def ground(i: int) -> BoundaryTag:
    return BoundaryTag(TagKind.ELECTRODE_GROUND, i)


TagRule = Callable[[float, float], Union[BoundaryTag, Sequence[BoundaryTag]]]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh2D:
    """Immutable triangulation.

    Attributes:
        nodes: (N, 2) coordinates.
        triangles: (T, 3) counterclockwise node indices.
        boundary_edges: tuple of ((i, j), BoundaryTag) entries.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: tuple = field(default=())

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        tris = np.asarray(self.triangles, dtype=np.int64)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must have shape (N, 2)")
        if tris.ndim != 2 or tris.shape[1] != 3:
            raise MeshError("triangles must have shape (T, 3)")
        edges = tuple(((int(i), int(j)), t if isinstance(t, BoundaryTag) else BoundaryTag(*t))
                      for (i, j), t in self.boundary_edges)
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "triangles", _frozen(tris))
        object.__setattr__(self, "boundary_edges", edges)
        self.validate()

    # -- invariants ---------------------------------------------------------
    def validate(self) -> None:
        n = len(self.nodes)
        if len(self.triangles) == 0:
            raise MeshError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise MeshError("triangle index out of range")
        if np.any(self.signed_areas <= 0.0):
            bad = int(np.argmin(self.signed_areas))
            raise MeshError(f"triangle {bad} has non-positive signed area")
        geometric = set(map(tuple, np.sort(self.geometric_boundary_edges, axis=1).tolist()))
        flow: dict = {}
        elec: dict = {}
        for (i, j), tag in self.boundary_edges:
            key = (min(i, j), max(i, j))
            if key not in geometric:
                raise MeshError(f"edge {key} is not a boundary edge of exactly one triangle")
            target = flow if tag.is_flow else elec
            if key in target and target[key] != tag:
                raise MeshError(f"edge {key} tagged both {target[key]} and {tag}")
            target[key] = tag
        missing = geometric - set(flow)
        if missing:
            raise MeshError(f"{len(missing)} boundary edges have neither DIRICHLET nor TRACTION tag")
        if not any(t.kind is TagKind.DIRICHLET for t in flow.values()):
            raise MeshError("DIRICHLET edge set is empty")

    # -- geometry -----------------------------------------------------------
    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return _frozen(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]))

    @cached_property
    def _edge_data(self):
        return _unique_edges(self.triangles)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges (E, 2), sorted node pairs."""
        return self._edge_data[0]

    @property
    def triangle_edges(self) -> np.ndarray:
        """(T, 3) edge index of local edges (0,1), (1,2), (2,0)."""
        return self._edge_data[1]

    @cached_property
    def geometric_boundary_edges(self) -> np.ndarray:
        uniq, _, counts = self._edge_data
        if np.any(counts > 2):
            raise MeshError("edge shared by more than two triangles")
        return uniq[counts == 1]

    @cached_property
    def edge_index(self) -> dict:
        return {(int(a), int(b)): k for k, (a, b) in enumerate(self.edges)}

    @cached_property
    def edge_owner(self) -> dict:
        """Boundary edge key -> (triangle, local edge number)."""
        out = {}
        local = ((0, 1), (1, 2), (2, 0))
        for t, tri in enumerate(self.triangles):
            for k, (a, b) in enumerate(local):
                key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
                out.setdefault((int(key[0]), int(key[1])), []).append((t, k))
        return {k: v[0] for k, v in out.items() if len(v) == 1}

    def edges_with(self, kind: TagKind, index: int | None = None) -> list[tuple[int, int]]:
        """Boundary edges carrying the tag, oriented with the domain on the left."""
        out = []
        for (i, j), tag in self.boundary_edges:
            if tag.kind is kind and (index is None or tag.index == index):
                out.append(self._oriented(i, j))
        return out

    def _oriented(self, i: int, j: int) -> tuple[int, int]:
        t, k = self.edge_owner[(min(i, j), max(i, j))]
        tri = self.triangles[t]
        a, b = tri[k], tri[(k + 1) % 3]
        return int(a), int(b)

    def has_traction(self) -> bool:
        return any(t.kind is TagKind.TRACTION for _, t in self.boundary_edges)

    def electrode_indices(self) -> set[int]:
        return {t.index for _, t in self.boundary_edges
                if t.kind in (TagKind.ELECTRODE, TagKind.ELECTRODE_GROUND)}

    def total_area(self) -> float:
        return float(self.signed_areas.sum())

    def boundary_length(self, kind: TagKind | None = None) -> float:
        if kind is None:
            e = self.geometric_boundary_edges
        else:
            e = np.array(self.edges_with(kind), dtype=np.int64).reshape(-1, 2)
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return float(np.sum(np.hypot(d[:, 0], d[:, 1])))

    def locate(self, points: np.ndarray, tol: float = 1e-12):
        """Find a containing triangle and barycentric coordinates for each point.

        Returns (tri, bary) with tri = -1 for points outside the mesh.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        tree = self._centroid_tree
        k = min(12, len(self.triangles))
        _, cand = tree.query(points, k=k)
        cand = np.asarray(cand).reshape(len(points), k)
        tri = np.full(len(points), -1, dtype=np.int64)
        bary = np.zeros((len(points), 3))
        for col in range(k):
            todo = tri < 0
            if not todo.any():
                break
            c = cand[todo, col]
            lam = self._barycentric(c, points[todo])
            ok = np.all(lam >= -tol, axis=1)
            idx = np.flatnonzero(todo)[ok]
            tri[idx] = c[ok]
            bary[idx] = lam[ok]
        rest = np.flatnonzero(tri < 0)
        for p in rest:
            lam = self._barycentric(np.arange(len(self.triangles)), np.repeat(points[p:p + 1], len(self.triangles), 0))
            ok = np.flatnonzero(np.all(lam >= -tol, axis=1))
            if len(ok):
                tri[p] = ok[0]
                bary[p] = lam[ok[0]]
        return tri, bary

    @cached_property
    def _centroid_tree(self):
        from scipy.spatial import cKDTree

        return cKDTree(self.nodes[self.triangles].mean(axis=1))

    def _barycentric(self, tris: np.ndarray, pts: np.ndarray) -> np.ndarray:
        p = self.nodes[self.triangles[tris]]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = pts - p[:, 0]
        l1 = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        l2 = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        return np.column_stack([1.0 - l1 - l2, l1, l2])

    def nearest_boundary_point(self, points: np.ndarray) -> np.ndarray:
        """Closest point on the polygonal boundary for each point."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        e = self.geometric_boundary_edges
        a = self.nodes[e[:, 0]]
        d = self.nodes[e[:, 1]] - a
        dd = np.einsum("ij,ij->i", d, d)
        r = points[:, None, :] - a[None, :, :]
        s = np.clip(np.einsum("pij,ij->pi", r, d) / dd, 0.0, 1.0)
        proj = a[None] + s[..., None] * d[None]
        dist = np.sum((points[:, None, :] - proj) ** 2, axis=2)
        best = np.argmin(dist, axis=1)
        return proj[np.arange(len(points)), best]

    def __eq__(self, other) -> bool:
        if not isinstance(other, Mesh2D):
            return NotImplemented
        return (np.array_equal(self.nodes, other.nodes)
                and np.array_equal(self.triangles, other.triangles)
                and self.boundary_edges == other.boundary_edges)

    def __hash__(self):
        return id(self)


def _as_tags(value) -> list[BoundaryTag]:
    if isinstance(value, BoundaryTag):
        return [value]
    return list(value)


def tag_all_dirichlet(x: float, y: float) -> BoundaryTag:
    return DIRICHLET


@dataclass(frozen=True)
class RectangleTagging:
    """Tag rule for an axis-aligned rectangle, side by side.

    Each side value is a tag or a sequence of tags. Geometry left as None is
    filled in by ``build_rectangle_mesh``.
    """

    left: object = DIRICHLET
    right: object = DIRICHLET
    bottom: object = DIRICHLET
    top: object = DIRICHLET
    width: float | None = None
    height: float | None = None
    x0: float = 0.0
    y0: float = 0.0

    def bind(self, width: float, height: float, x0: float, y0: float) -> "RectangleTagging":
        return RectangleTagging(self.left, self.right, self.bottom, self.top,
                                width if self.width is None else self.width,
                                height if self.height is None else self.height, x0, y0)

    def __call__(self, x, y):
        width = 1.0 if self.width is None else self.width
        height = 1.0 if self.height is None else self.height
        tol = 1e-9 * max(width, height)
        if abs(x - self.x0) < tol:
            return self.left
        if abs(x - self.x0 - width) < tol:
            return self.right
        if abs(y - self.y0) < tol:
            return self.bottom
        return self.top


def rectangle_tagging(left=DIRICHLET, right=DIRICHLET, bottom=DIRICHLET, top=DIRICHLET,
                      width: float | None = None, height: float | None = None,
                      x0: float = 0.0, y0: float = 0.0) -> RectangleTagging:
    return RectangleTagging(left, right, bottom, top, width, height, x0, y0)


def _unique_edges(triangles: np.ndarray):
    local = np.array([[0, 1], [1, 2], [2, 0]])
    keys = np.sort(triangles[:, local].reshape(-1, 2), axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(-1, 3), counts


def _tag_edges(nodes: np.ndarray, triangles: np.ndarray, tagging: TagRule) -> tuple:
    uniq, _, counts = _unique_edges(triangles)
    out = []
    for i, j in uniq[counts == 1]:
        mid = 0.5 * (nodes[i] + nodes[j])
        tags = _as_tags(tagging(float(mid[0]), float(mid[1])))
        if not any(t.is_flow for t in tags):
            tags = [DIRICHLET] + tags
        for t in tags:
            out.append(((int(i), int(j)), t))
    return tuple(out)


def build_rectangle_mesh(width: float, height: float, nx: int, ny: int,
                         tagging: TagRule | None = None, crossed: bool = True,
                         origin: tuple[float, float] = (0.0, 0.0)) -> Mesh2D:
    """Structured mesh of [x0, x0+width] x [y0, y0+height].

    With ``crossed`` each cell is split into 4 triangles through its centroid,
    otherwise into 2 along the lower-left to upper-right diagonal. Edges whose
    rule gives no flow tag default to DIRICHLET.
    """
    if not (width > 0 and height > 0):
        raise ValueError("width and height must be positive")
    if int(nx) < 1 or int(ny) < 1:
        raise ValueError("nx and ny must be at least 1")
    nx, ny = int(nx), int(ny)
    x0, y0 = origin
    xs = x0 + width * np.arange(nx + 1) / nx
    ys = y0 + height * np.arange(ny + 1) / ny
    X, Y = np.meshgrid(xs, ys)
    nodes = [np.column_stack([X.ravel(), Y.ravel()])]

    def vid(i, j):
        return j * (nx + 1) + i

    tris = []
    if crossed:
        cx = 0.5 * (xs[:-1] + xs[1:])
        cy = 0.5 * (ys[:-1] + ys[1:])
        CX, CY = np.meshgrid(cx, cy)
        nodes.append(np.column_stack([CX.ravel(), CY.ravel()]))
        base = (nx + 1) * (ny + 1)
        for j in range(ny):
            for i in range(nx):
                c = base + j * nx + i
                a, b, d, e = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                tris += [(a, b, c), (b, d, c), (d, e, c), (e, a, c)]
    else:
        for j in range(ny):
            for i in range(nx):
                a, b, d, e = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
                tris += [(a, b, d), (a, d, e)]
    nodes = np.vstack(nodes)
    tris = np.array(tris, dtype=np.int64)
    rule = tagging or tag_all_dirichlet
    if isinstance(rule, RectangleTagging):
        rule = rule.bind(width, height, x0, y0)
    return Mesh2D(nodes, tris, _tag_edges(nodes, tris, rule))


def refine_uniform(mesh: Mesh2D) -> Mesh2D:
    """Split every triangle into four by joining edge midpoints."""
    V = len(mesh.nodes)
    edges = mesh.edges
    mids = 0.5 * (mesh.nodes[edges[:, 0]] + mesh.nodes[edges[:, 1]])
    nodes = np.vstack([mesh.nodes, mids])
    te = mesh.triangle_edges + V
    t = mesh.triangles
    m01, m12, m20 = te[:, 0], te[:, 1], te[:, 2]
    children = np.concatenate([
        np.column_stack([t[:, 0], m01, m20]),
        np.column_stack([m01, t[:, 1], m12]),
        np.column_stack([m20, m12, t[:, 2]]),
        np.column_stack([m01, m12, m20]),
    ])
    # keep children of one parent adjacent
    T = len(t)
    order = np.arange(4 * T).reshape(4, T).T.ravel()
    children = children[order]
    bedges = []
    for (i, j), tag in mesh.boundary_edges:
        m = V + mesh.edge_index[(min(i, j), max(i, j))]
        bedges.append(((i, m), tag))
        bedges.append(((m, j), tag))
    return Mesh2D(nodes, children, tuple(bedges))


# -- file format ------------------------------------------------------------

def save_mesh(mesh: Mesh2D) -> str:
    lines = [f"nodes {len(mesh.nodes)}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in mesh.nodes]
    lines.append(f"triangles {len(mesh.triangles)}")
    lines += [f"{i} {j} {k}" for i, j, k in mesh.triangles]
    lines.append(f"boundary_edges {len(mesh.boundary_edges)}")
    lines += [f"{i} {j} {tag}" for (i, j), tag in mesh.boundary_edges]
    return "\n".join(lines) + "\n"


def load_mesh(text: str) -> Mesh2D:
    lines = [(n + 1, ln.strip()) for n, ln in enumerate(text.splitlines())]
    lines = [(n, ln) for n, ln in lines if ln and not ln.startswith("#")]
    pos = 0

    def header(name):
        nonlocal pos
        if pos >= len(lines):
            raise MeshError(f"missing '{name}' section")
        n, ln = lines[pos]
        parts = ln.split()
        if len(parts) != 2 or parts[0] != name:
            raise MeshError(f"line {n}: expected '{name} <count>'")
        try:
            count = int(parts[1])
        except ValueError:
            raise MeshError(f"line {n}: bad count {parts[1]!r}") from None
        if count < 0:
            raise MeshError(f"line {n}: negative count")
        pos += 1
        if pos + count > len(lines):
            raise MeshError(f"line {n}: section '{name}' declares {count} entries, file too short")
        body = lines[pos:pos + count]
        pos += count
        return body

    nodes = []
    for n, ln in header("nodes"):
        parts = ln.split()
        if len(parts) != 2:
            raise MeshError(f"line {n}: expected 'x y'")
        try:
            nodes.append((float(parts[0]), float(parts[1])))
        except ValueError:
            raise MeshError(f"line {n}: bad coordinate") from None
    N = len(nodes)

    def index(tok, n):
        try:
            v = int(tok)
        except ValueError:
            raise MeshError(f"line {n}: bad index {tok!r}") from None
        if not 0 <= v < N:
            raise MeshError(f"line {n}: node index {v} out of range [0, {N})")
        return v

    tris = []
    for n, ln in header("triangles"):
        parts = ln.split()
        if len(parts) != 3:
            raise MeshError(f"line {n}: expected 'i j k'")
        tris.append(tuple(index(p, n) for p in parts))
    edges = []
    for n, ln in header("boundary_edges"):
        parts = ln.split()
        if len(parts) not in (3, 4):
            raise MeshError(f"line {n}: expected 'i j TAG [index]'")
        i, j = index(parts[0], n), index(parts[1], n)
        try:
            kind = TagKind(parts[2])
        except ValueError:
            raise MeshError(f"line {n}: unknown tag {parts[2]!r}") from None
        idx = 0
        if len(parts) == 4:
            try:
                idx = int(parts[3])
            except ValueError:
                raise MeshError(f"line {n}: bad electrode index") from None
        try:
            tag = BoundaryTag(kind, idx)
        except MeshError as exc:
            raise MeshError(f"line {n}: {exc}") from None
        edges.append(((i, j), tag))
    if pos != len(lines):
        raise MeshError(f"line {lines[pos][0]}: unexpected trailing content")
    try:
        return Mesh2D(np.array(nodes, dtype=float).reshape(-1, 2),
                      np.array(tris, dtype=np.int64).reshape(-1, 3), tuple(edges))
    except MeshError as exc:
        raise MeshError(f"invariant violation: {exc}") from None


def check_mesh(mesh: Mesh2D) -> dict:
    """Summary statistics used by ``mesh check``."""
    counts: dict = {}
    for _, tag in mesh.boundary_edges:
        counts[str(tag)] = counts.get(str(tag), 0) + 1
    return {
        "nodes": len(mesh.nodes),
        "triangles": len(mesh.triangles),
        "edges": len(mesh.edges),
        "area": mesh.total_area(),
        "boundary_length": mesh.boundary_length(),
        "min_area": float(mesh.signed_areas.min()),
        "tags": counts,
    }


def iter_tags(mesh: Mesh2D) -> Iterable[BoundaryTag]:
    return (t for _, t in mesh.boundary_edges)
