"""Symmetric quadrature rules on the reference triangle (0,0), (1,0), (0,1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TriangleRule:
    points: np.ndarray  # (Q, 2) reference coordinates
    weights: np.ndarray  # (Q,), sum = 1/2
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


def _orbit3(a: float):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)]


def _orbit6(a: float, b: float):
    c = 1.0 - a - b
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(groups, degree) -> TriangleRule:
    pts, wts = [], []
    for w, orbit in groups:
        for lam in orbit:
            pts.append((lam[1], lam[2]))
            wts.append(0.5 * w)
    return TriangleRule(np.array(pts), np.array(wts), degree)


# Dunavant rules, coordinates refined to full double precision
_RULES = {
    1: _rule([(1.0, [(1 / 3, 1 / 3, 1 / 3)])], 1),
    2: _rule([(1 / 3, _orbit3(1 / 6))], 2),
    4: _rule([
        (0.22338158967801146570, _orbit3(0.44594849091596488632)),
        (0.10995174365532186764, _orbit3(0.09157621350977074346)),
    ], 4),
    6: _rule([
        (0.11678627572637936603, _orbit3(0.24928674517091042129)),
        (0.050844906370206816921, _orbit3(0.06308901449150222834)),
        (0.082851075618373575194, _orbit6(0.053145049844816947353, 0.31035245103378440542)),
    ], 6),
}


def triangle_rule(degree: int) -> TriangleRule:
    """Smallest tabulated rule exact for polynomials of the given degree."""
    for d in sorted(_RULES):
        if d >= degree:
            return _RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")


LINEAR_RULE = 4
NONLINEAR_RULE = 6


def line_rule(n: int = 4):
    """Gauss-Legendre points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w
