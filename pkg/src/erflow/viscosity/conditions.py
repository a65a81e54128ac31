"""Sampling checks of the structural conditions on a viscosity model.

The conditions are semi-infinite; these checks sample them on a grid and
report the worst margin together with the sample where it occurs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .models import Bounds, Variant


@dataclass(frozen=True)
class ConditionVerdict:
    name: str
    passed: bool
    margin: float
    where: dict = field(default_factory=dict)
    note: str = ""

    def __str__(self) -> str:
        loc = ", ".join(f"{k}={v:.6g}" for k, v in self.where.items())
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name}: {status} (margin {self.margin:.6g}{'; at ' + loc if loc else ''}){' ' + self.note if self.note else ''}"


@dataclass(frozen=True)
class ConditionReport:
    verdicts: tuple

    def __getitem__(self, name: str) -> ConditionVerdict:
        for v in self.verdicts:
            if v.name == name:
                return v
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(v.name == name for v in self.verdicts)

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def __str__(self) -> str:
        return "\n".join(str(v) for v in self.verdicts)


def default_grid(y1_max: float = 1e4, n_y1: int = 200, E_values=(0.0, 0.5, 1.0, 2.0, 10.0),
                 mu_values=(0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0)):
    y1 = np.concatenate([[0.0], np.logspace(-8, np.log10(y1_max), n_y1)])
    pairs = np.array([(e, m) for e in E_values for m in mu_values], dtype=float)
    return y1, pairs


def _smooth_phi(model) -> Callable:
    """The part of the model the conditions C1-C3 apply to."""
    v = model.variant
    if v is Variant.REGULAR:
        return lambda I, E, m: model.phi(I, E, m)
    if v in (Variant.REGULARIZED_BINGHAM, Variant.SINGULAR_BINGHAM):
        return lambda I, E, m: model.psi.phi(I, E, m)
    if v is Variant.GIVEN_MU:
        return lambda I, E, m: model.psi1.phi(I, E, m)
    return None


def _derivative(model, phi, I, E, m, analytic: bool):
    if analytic:
        sub = {Variant.REGULAR: model}.get(model.variant)
        if sub is None:
            sub = getattr(model, "psi", None) or getattr(model, "psi1", None)
        if sub is not None and hasattr(sub, "eval"):
            return sub.eval(I, E, m)[1]
    h = np.maximum(1e-6, 1e-6 * I)
    lo = np.maximum(I - h, 0.0)
    return (phi(I + h, E, m) - phi(lo, E, m)) / (I + h - lo)


def check_conditions(model, grid=None, bounds: Bounds | None = None, phi: Callable | None = None,
                     analytic: bool = True) -> ConditionReport:
    """Sampled verdicts for C1 (three inequalities), C2, C3, C4, C5 and the field-free reduction.

    ``phi(I, absE, mu)`` may be supplied as a black box; its invariant
    derivative is then taken by central differences.
    """
    y1, pairs = default_grid() if grid is None else grid
    bounds = bounds if bounds is not None else getattr(model, "bounds", Bounds())
    if phi is None:
        phi = _smooth_phi(model)
        use_analytic = analytic
    else:
        use_analytic = False
    out = []
    if phi is not None:
        Y, P = np.meshgrid(y1, np.arange(len(pairs)), indexing="ij")
        E = pairs[P, 0]
        M = pairs[P, 1]
        val = np.asarray(phi(Y, E, M), dtype=float)
        d = np.asarray(_derivative(model, phi, Y, E, M, use_analytic), dtype=float)
        where = lambda idx: {"y1": float(Y[idx]), "absE": float(E[idx]), "mu": float(M[idx])}

        lo_val, hi_val = float(val.min()), float(val.max())
        a1 = bounds.a1 if bounds.a1 is not None else lo_val
        a2 = bounds.a2 if bounds.a2 is not None else hi_val
        i_lo = np.unravel_index(np.argmin(val), val.shape)
        i_hi = np.unravel_index(np.argmax(val), val.shape)
        m_lo, m_hi = lo_val - a1, a2 - hi_val
        ok = lo_val > 0 and m_lo >= -1e-12 and m_hi >= -1e-12
        out.append(ConditionVerdict("C1.bounds", ok, min(m_lo, m_hi), where(i_lo if m_lo <= m_hi else i_hi),
                                    f"a1={a1:.6g} a2={a2:.6g}"))

        mono = val + 2.0 * d * Y
        a3 = bounds.a3 if bounds.a3 is not None else float(mono.min())
        i3 = np.unravel_index(np.argmin(mono), mono.shape)
        m3 = float(mono.min()) - a3
        out.append(ConditionVerdict("C1.monotone", bool(mono.min() > 0 and m3 >= -1e-12), m3, where(i3),
                                    f"a3={a3:.6g}"))

        slope = np.abs(d) * Y
        a4 = bounds.a4 if bounds.a4 is not None else float(slope.max())
        i4 = np.unravel_index(np.argmax(slope), slope.shape)
        m4 = a4 - float(slope.max())
        out.append(ConditionVerdict("C1.slope", bool(m4 >= -1e-12), m4, where(i4), f"a4={a4:.6g}"))

        # C2/C3: z -> z*phi(z^2) nondecreasing / strictly increasing, with z = y1^(1/2)
        z = np.sqrt(Y)
        g = z * val
        dg = np.diff(g, axis=0)
        i2 = np.unravel_index(np.argmin(dg), dg.shape)
        first = _first_violation(dg)
        loc = where(i2) if first is None else where(first)
        loc["z"] = float(np.sqrt(loc["y1"]))
        min_dg = float(dg.min())
        out.append(ConditionVerdict("C2", min_dg >= -1e-12, min_dg, loc))
        out.append(ConditionVerdict("C3", min_dg > 0, min_dg, loc))

        # field-free reduction: at |E| = 0 the value does not depend on mu
        zero = pairs[:, 0] == 0
        if np.any(zero):
            cols = np.flatnonzero(zero)
            spread = float(np.max(np.abs(val[:, cols] - val[:, cols[:1]])))
            out.append(ConditionVerdict("E0.independent", spread <= 1e-14 * max(1.0, hi_val), -spread))

    yc = getattr(model, "yield_coef", None)
    if yc is not None:
        bvals = np.asarray(yc.value(pairs[:, 0], pairs[:, 1]), dtype=float)
        a5 = bounds.a5 if bounds.a5 is not None else float(bvals.max())
        k = int(np.argmin(np.minimum(bvals, a5 - bvals)))
        margin = float(min(bvals.min(), a5 - bvals.max()))
        out.append(ConditionVerdict("C4", margin >= -1e-12, margin,
                                    {"absE": float(pairs[k, 0]), "mu": float(pairs[k, 1])}, f"a5={a5:.6g}"))
    plastic = getattr(model, "plastic", None)
    if plastic is not None:
        pv = np.asarray(plastic.value(pairs[:, 0], pairs[:, 1]), dtype=float)
        a6 = bounds.a6 if bounds.a6 is not None else float(pv.min())
        a7 = bounds.a7 if bounds.a7 is not None else float(pv.max())
        margin = float(min(pv.min() - a6, a7 - pv.max()))
        k = int(np.argmin(np.minimum(pv - a6, a7 - pv)))
        out.append(ConditionVerdict("C5", bool(pv.min() > 0 and margin >= -1e-12), margin,
                                    {"absE": float(pairs[k, 0]), "mu": float(pairs[k, 1])},
                                    f"a6={a6:.6g} a7={a7:.6g}"))
    return ConditionReport(tuple(out))


def _first_violation(dg: np.ndarray):
    bad = np.argwhere(dg < -1e-12)
    if len(bad) == 0:
        return None
    row = bad[:, 0].min()
    col = bad[bad[:, 0] == row][0, 1]
    return (int(row), int(col))


def inferred_bounds(model, grid=None) -> Bounds:
    """Tightest bounds a1..a7 observed on the sampling grid."""
    rep = check_conditions(model, grid, bounds=Bounds())
    vals = {}
    for v in rep.verdicts:
        for part in v.note.split():
            name, _, num = part.partition("=")
            if name.startswith("a"):
                vals[name] = float(num)
    return Bounds(**vals)
