"""Nodal field output as CSV and legacy ASCII VTK."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..fem_core.assembly import strain_vector
from ..fem_core.quadrature import TriangleRule
from ..viscosity.models import eval_phi
from ..viscosity.mu import eval_mu_mollified, mu_values
from ..viscosity.operators import field_at_points

COLUMNS = ("node", "x", "y", "u1", "u2", "p", "theta", "absE", "I", "mu", "phi")
FORMATS = ("csv", "vtk", "both")

# one "quadrature point" per reference vertex, in local node order
_VERTEX_RULE = TriangleRule(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.full(3, 1.0 / 6.0), 1)


def fmt(x: float) -> str:
    return format(float(x), ".17g")


def vertex_average(mesh, per_corner: np.ndarray) -> np.ndarray:
    """Average (T, 3, ...) corner values over the triangles incident to each node."""
    tris = mesh.triangles.ravel()
    flat = per_corner.reshape(len(tris), -1)
    total = np.zeros((len(mesh.nodes), flat.shape[1]))
    np.add.at(total, tris, flat)
    count = np.bincount(tris, minlength=len(mesh.nodes))[:, None]
    return (total / np.maximum(count, 1)).reshape((len(mesh.nodes),) + per_corner.shape[2:])


@dataclass
class NodalFields:
    mesh: object
    columns: dict[str, np.ndarray]

    @property
    def n(self) -> int:
        return len(self.mesh.nodes)


def nodal_fields(mesh, flow_state=None, electric_state=None) -> NodalFields:
    """Per-node values; fields without a source are written as zeros."""
    n = len(mesh.nodes)
    nodes = np.asarray(mesh.nodes, dtype=float)
    cols = {k: np.zeros(n) for k in COLUMNS}
    cols["node"] = np.arange(n, dtype=float)
    cols["x"], cols["y"] = nodes[:, 0].copy(), nodes[:, 1].copy()
    E_nodes = np.zeros((n, 2))
    if electric_state is not None:
        es = electric_state.space
        cols["theta"] = electric_state.theta[:n].copy()
        _, g = es.eval_qp(electric_state.theta, es.tabulate(_VERTEX_RULE))
        E_nodes = -vertex_average(mesh, g[:, :, 0, :])
    if flow_state is not None:
        prob = flow_state.problem
        vs = prob.vspace
        u = flow_state.u
        cols["u1"], cols["u2"] = u[:n].copy(), u[vs.n_scalar:vs.n_scalar + n].copy()
        cols["p"] = flow_state.p[:n].copy()
        if electric_state is None and prob.E is not None:
            E_nodes = field_at_points(prob.E, nodes)
        _, g = vs.eval_qp(u, vs.tabulate(_VERTEX_RULE))
        s = strain_vector(g)
        I_node = vertex_average(mesh, np.sum(s * s, axis=-1))
        cols["I"] = I_node
        absE = np.sqrt(np.sum(E_nodes * E_nodes, axis=-1))
        uv = np.column_stack([cols["u1"], cols["u2"]])
        mu_fn = prob.mu_fn
        if mu_fn.mollifier is not None:
            mu = eval_mu_mollified(mu_fn, flow_state.velocity_at, lambda p: field_at_points(prob.E, p), nodes, mesh)
        else:
            mu = mu_values(mu_fn, uv, E_nodes)
        mu = np.where(absE < mu_fn.e_threshold, 0.0, mu)
        cols["absE"], cols["mu"] = absE, np.asarray(mu, dtype=float)
        cols["phi"] = np.asarray(eval_phi(prob.model, I_node, absE, mu, nodes), dtype=float) * np.ones(n)
    elif electric_state is not None:
        cols["absE"] = np.sqrt(np.sum(E_nodes * E_nodes, axis=-1))
    return NodalFields(mesh, cols)


def fields_to_csv(fields: NodalFields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for i in range(fields.n):
        row = [str(i)] + [fmt(fields.columns[c][i]) for c in COLUMNS[1:]]
        w.writerow(row)
    return buf.getvalue()


def read_csv_fields(text: str) -> dict[str, np.ndarray]:
    rows = list(csv.reader(io.StringIO(text)))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[k]) for r in body]) for k, name in enumerate(header)}


def fields_to_vtk(fields: NodalFields, title: str = "erflow fields") -> str:
    mesh = fields.mesh
    tris = np.asarray(mesh.triangles)
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {fields.n} double"]
    out += [f"{fmt(x)} {fmt(y)} 0" for x, y in np.asarray(mesh.nodes)]
    out.append(f"CELLS {len(tris)} {4 * len(tris)}")
    out += [f"3 {a} {b} {c}" for a, b, c in tris]
    out.append(f"CELL_TYPES {len(tris)}")
    out += ["5"] * len(tris)
    out.append(f"POINT_DATA {fields.n}")
    c = fields.columns
    out += ["VECTORS velocity double"] + [f"{fmt(a)} {fmt(b)} 0" for a, b in zip(c["u1"], c["u2"])]
    for name in ("p", "theta", "absE", "I", "mu", "phi"):
        out += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + [fmt(v) for v in c[name]]
    return "\n".join(out) + "\n"


def write_fields(fields: NodalFields, output_dir: Path | str, fmt_name: str = "csv", stem: str = "fields") -> list[Path]:
    if fmt_name not in FORMATS:
        raise ValueError(f"unknown format {fmt_name!r}; choose from {', '.join(FORMATS)}")
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if fmt_name in ("csv", "both"):
        p = out / f"{stem}.csv"
        p.write_text(fields_to_csv(fields))
        written.append(p)
    if fmt_name in ("vtk", "both"):
        p = out / f"{stem}.vtk"
        p.write_text(fields_to_vtk(fields))
        written.append(p)
    return written
