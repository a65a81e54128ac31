"""Lagrange P1/P2 spaces on triangle meshes.

Scalar dofs are numbered nodes first, then edge midpoints (P2). Vector spaces
stack components: global dof = component * n_scalar + scalar dof.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Sequence

import numpy as np

from ..mesh import Mesh2D, TagKind
from .quadrature import TriangleRule, line_rule, triangle_rule

# local edges and their midpoint slot in the P2 element
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


def reference_basis(degree: int, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values (Q, n) and reference gradients (Q, n, 2) at points xi (Q, 2)."""
    xi = np.atleast_2d(xi)
    x, y = xi[:, 0], xi[:, 1]
    L = np.stack([1.0 - x - y, x, y], axis=1)
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if degree == 1:
        return L, np.broadcast_to(dL, (len(x), 3, 2)).copy()
    if degree != 2:
        raise ValueError("degree must be 1 or 2")
    vals = np.empty((len(x), 6))
    grads = np.empty((len(x), 6, 2))
    for i in range(3):
        vals[:, i] = L[:, i] * (2.0 * L[:, i] - 1.0)
        grads[:, i, :] = (4.0 * L[:, i] - 1.0)[:, None] * dL[i]
    for k, (i, j) in enumerate(LOCAL_EDGES):
        vals[:, 3 + k] = 4.0 * L[:, i] * L[:, j]
        grads[:, 3 + k, :] = 4.0 * (L[:, i, None] * dL[j] + L[:, j, None] * dL[i])
    return vals, grads


@dataclass(frozen=True, eq=False)
class Tabulation:
    """Basis data of a space on every element for one quadrature rule."""

    phi: np.ndarray  # (Q, n) reference values
    grads: np.ndarray  # (T, Q, n, 2) physical gradients
    wdet: np.ndarray  # (T, Q) quadrature weight times |J|
    points: np.ndarray  # (T, Q, 2) physical points
    rule: TriangleRule


@dataclass(frozen=True, eq=False)
class EdgeTabulation:
    """Basis data on a list of boundary edges (1D Gauss rule)."""

    dofs: np.ndarray  # (nE, k) scalar dofs on each edge
    phi: np.ndarray  # (nq, k)
    points: np.ndarray  # (nE, nq, 2)
    weights: np.ndarray  # (nE, nq) weight times edge length
    normals: np.ndarray  # (nE, 2) outward unit normals
    triangles: np.ndarray  # (nE,) owning triangle
    local_edge: np.ndarray  # (nE,)
    s: np.ndarray  # (nq,) edge parameter


class FeSpace:
    """Continuous Lagrange space.

    Args:
        mesh: the triangulation.
        degree: 1 or 2.
        components: 1 (scalar) or 2 (vector).
        constrained: boundary tag kinds whose dofs are prescribed.
    """

    def __init__(self, mesh: Mesh2D, degree: int = 2, components: int = 1,
                 constrained: Sequence[TagKind] = (TagKind.DIRICHLET,)):
        if degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if components not in (1, 2):
            raise ValueError("components must be 1 or 2")
        self.mesh = mesh
        self.degree = degree
        self.components = components
        self.constrained = tuple(constrained)
        nv = len(mesh.nodes)
        if degree == 1:
            self.scalar_dofmap = np.array(mesh.triangles)
            self.n_scalar = nv
        else:
            self.scalar_dofmap = np.hstack([mesh.triangles, nv + mesh.triangle_edges])
            self.n_scalar = nv + len(mesh.edges)
        self.n_local = self.scalar_dofmap.shape[1]
        self.ndof = components * self.n_scalar
        self.dof_map = np.hstack([self.scalar_dofmap + c * self.n_scalar for c in range(components)])

    def __repr__(self) -> str:
        return f"FeSpace(P{self.degree}, components={self.components}, ndof={self.ndof})"

    @cached_property
    def dof_coords(self) -> np.ndarray:
        m = self.mesh
        if self.degree == 1:
            return np.array(m.nodes)
        mids = 0.5 * (m.nodes[m.edges[:, 0]] + m.nodes[m.edges[:, 1]])
        return np.vstack([m.nodes, mids])

    def scalar_dofs_on(self, kind: TagKind, index: int | None = None) -> np.ndarray:
        """Scalar dofs lying on boundary edges with the given tag."""
        out = set()
        nv = len(self.mesh.nodes)
        for (i, j), tag in self.mesh.boundary_edges:
            if tag.kind is kind and (index is None or tag.index == index):
                out.update((i, j))
                if self.degree == 2:
                    out.add(nv + self.mesh.edge_index[(min(i, j), max(i, j))])
        return np.array(sorted(out), dtype=np.int64)

    @cached_property
    def constrained_scalar_dofs(self) -> np.ndarray:
        parts = [self.scalar_dofs_on(k) for k in self.constrained]
        if not parts:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(parts)).astype(np.int64)

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        s = self.constrained_scalar_dofs
        return np.concatenate([s + c * self.n_scalar for c in range(self.components)])

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    # -- tabulation ---------------------------------------------------------
    @cached_property
    def _jacobians(self):
        p = self.mesh.nodes[self.mesh.triangles]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (T, 2, 2) columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1] / det
        inv[:, 1, 1] = J[:, 0, 0] / det
        inv[:, 0, 1] = -J[:, 0, 1] / det
        inv[:, 1, 0] = -J[:, 1, 0] / det
        return p[:, 0], J, det, inv

    def tabulate(self, degree_or_rule: int | TriangleRule) -> Tabulation:
        rule = degree_or_rule if isinstance(degree_or_rule, TriangleRule) else triangle_rule(degree_or_rule)
        return _tabulate_cached(self, rule.degree) if rule is triangle_rule(rule.degree) else _tabulate(self, rule)

    def edge_tabulate(self, kind: TagKind, index: int | None = None, n_points: int = 4) -> EdgeTabulation:
        return _edge_tabulate(self, kind, index, n_points)

    # -- interpolation and evaluation --------------------------------------
    def interpolate(self, f) -> np.ndarray:
        """Nodal interpolant of f(x, y) -> scalar or (components,) array."""
        x = self.dof_coords
        vals = np.asarray(f(x[:, 0], x[:, 1]), dtype=float)
        if self.components == 1:
            return np.broadcast_to(vals, (self.n_scalar,)).astype(float).copy()
        vals = np.asarray(vals)
        if vals.ndim == 1 and vals.shape[0] == self.components:
            vals = np.repeat(vals[:, None], self.n_scalar, axis=1)
        elif vals.shape[0] != self.components:
            vals = vals.T
        out = np.empty(self.ndof)
        for c in range(self.components):
            out[c * self.n_scalar:(c + 1) * self.n_scalar] = np.broadcast_to(vals[c], (self.n_scalar,))
        return out

    def local(self, dofs: np.ndarray) -> np.ndarray:
        """(T, components, n_local) element coefficients."""
        d = np.asarray(dofs)[self.dof_map]
        return d.reshape(len(self.mesh.triangles), self.components, self.n_local)

    def eval_qp(self, dofs: np.ndarray, tab: Tabulation) -> tuple[np.ndarray, np.ndarray]:
        """Values (T, Q, c) and gradients (T, Q, c, 2) at quadrature points."""
        loc = self.local(dofs)
        vals = np.einsum("qn,tcn->tqc", tab.phi, loc)
        grads = np.einsum("tqnd,tcn->tqcd", tab.grads, loc)
        return vals, grads

    def eval_points(self, dofs: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Values (P, c) and gradients (P, c, 2) at arbitrary points inside the mesh."""
        points = np.atleast_2d(points)
        tri, bary = self.mesh.locate(points)
        if np.any(tri < 0):
            raise ValueError(f"{int(np.sum(tri < 0))} points lie outside the mesh")
        xi = bary[:, 1:]
        phi, dphi = reference_basis(self.degree, xi)
        _, _, _, inv = self._jacobians
        g = np.einsum("pnk,pkd->pnd", dphi, inv[tri])
        loc = self.local(dofs)[tri]
        vals = np.einsum("pcn,pn->pc", loc, phi)
        grads = np.einsum("pcn,pnd->pcd", loc, g)
        return vals, grads

    def split(self, dofs: np.ndarray) -> list[np.ndarray]:
        return [dofs[c * self.n_scalar:(c + 1) * self.n_scalar] for c in range(self.components)]


def _tabulate(space: FeSpace, rule: TriangleRule) -> Tabulation:
    phi, dphi = reference_basis(space.degree, rule.points)
    x0, J, det, inv = space._jacobians
    grads = np.einsum("qnk,tkd->tqnd", dphi, inv)
    pts = x0[:, None, :] + np.einsum("tdk,qk->tqd", J, rule.points)
    wdet = det[:, None] * rule.weights[None, :]
    for a in (phi, grads, wdet, pts):
        a.setflags(write=False)
    return Tabulation(phi, grads, wdet, pts, rule)


@lru_cache(maxsize=64)
def _tabulate_cached(space: FeSpace, degree: int) -> Tabulation:
    return _tabulate(space, triangle_rule(degree))


def _edge_tabulate(space: FeSpace, kind: TagKind, index, n_points: int) -> EdgeTabulation:
    mesh = space.mesh
    s, w = line_rule(n_points)
    if space.degree == 1:
        phi = np.column_stack([1.0 - s, s])
    else:
        phi = np.column_stack([(1.0 - s) * (1.0 - 2.0 * s), s * (2.0 * s - 1.0), 4.0 * s * (1.0 - s)])
    edges = mesh.edges_with(kind, index)
    nE = len(edges)
    dofs = np.zeros((nE, phi.shape[1]), dtype=np.int64)
    pts = np.zeros((nE, len(s), 2))
    wts = np.zeros((nE, len(s)))
    normals = np.zeros((nE, 2))
    tris = np.zeros(nE, dtype=np.int64)
    loc = np.zeros(nE, dtype=np.int64)
    nv = len(mesh.nodes)
    for e, (a, b) in enumerate(edges):
        key = (min(a, b), max(a, b))
        t, k = mesh.edge_owner[key]
        tris[e], loc[e] = t, k
        xa, xb = mesh.nodes[a], mesh.nodes[b]
        d = xb - xa
        length = float(np.hypot(*d))
        normals[e] = (d[1] / length, -d[0] / length)
        pts[e] = xa[None] + s[:, None] * d[None]
        wts[e] = w * length
        row = [a, b]
        if space.degree == 2:
            row.append(nv + mesh.edge_index[key])
        dofs[e] = row
    return EdgeTabulation(dofs, phi, pts, wts, normals, tris, loc, s)
