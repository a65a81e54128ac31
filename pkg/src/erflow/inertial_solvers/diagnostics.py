"""Sampled solvability constants of the discrete inertial problem.

Over discretely divergence-free fields w with |w|_X = 1:

    eta1 = max |q(w, w, w)|
    eta2 = min (q(lift, w, w) + q(w, lift, w))
    eta3 = max |(chi, w)|,   chi = loads - q(lift, lift, .)
    eta4 = a1 + eta2 / 2

Sampling gives a lower estimate of eta1 and an upper estimate of eta2, so
the verdict is advisory. eta3 is a linear functional and its maximum is
computed exactly as a dual norm on the constrained subspace.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..fem_core.linalg import Factorized
from ..stokes_solvers.contraction import model_bounds
from .solvers import InertialProblem


@dataclass(frozen=True)
class SolvabilityReport:
    eta1: float
    eta2: float
    eta3: float
    eta4: float
    a1: float
    samples: int
    passed: bool

    @property
    def margin(self) -> float:
        return self.eta4 ** 2 - self.eta1 * self.eta3

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return (f"eta1={self.eta1:.6g} eta2={self.eta2:.6g} eta3={self.eta3:.6g} eta4={self.eta4:.6g} "
                f"margin={self.margin:.6g} samples={self.samples} verdict={verdict} (sampled, advisory)")


class DivergenceFreeProjector:
    """X-orthogonal projection of free-dof vectors onto the discrete kernel of B."""

    def __init__(self, flow):
        self.flow = flow
        free = flow.free
        G = flow.gram[free][:, free]
        Bf = flow.B_free
        blocks = [[G, Bf.T], [Bf, None]]
        if flow.needs_pressure_gauge:
            m = flow.pressure_mean_row
            blocks = [[G, Bf.T, None], [Bf, None, sp.csr_matrix(m[:, None])], [None, sp.csr_matrix(m[None, :]), None]]
        self.G = G
        self.n = len(free)
        self.extra = flow.pspace.ndof + (1 if flow.needs_pressure_gauge else 0)
        self.lu = Factorized(sp.bmat(blocks, format="csc"))

    def project(self, x: np.ndarray) -> np.ndarray:
        rhs = np.concatenate([self.G @ x, np.zeros(self.extra)])
        return self.lu.solve(rhs)[:self.n]

    def riesz(self, f: np.ndarray) -> np.ndarray:
        """Representer in the kernel of the functional f restricted to it."""
        return self.lu.solve(np.concatenate([f, np.zeros(self.extra)]))[:self.n]


def solvability_diagnostics(problem: InertialProblem, samples: int = 200, seed: int = 42,
                            a1: float | None = None) -> SolvabilityReport:
    flow = problem.flow
    free = flow.free
    proj = DivergenceFreeProjector(flow)
    if a1 is None:
        a1 = float(model_bounds(flow.model)[0].a1)
    lift = flow.lifting.u
    chi = (flow.load - problem.advection(lift, "q") @ lift)[free]
    r = proj.riesz(chi)
    eta3 = float(np.sqrt(max(chi @ r, 0.0)))
    has_lift = bool(np.any(lift))
    M2 = None
    if has_lift:
        M2 = (problem.advection(lift, "q") + problem.reaction(lift, "q"))[free][:, free]
    rng = np.random.default_rng(seed)
    eta1, eta2 = 0.0, np.inf if has_lift else 0.0
    w_full = np.zeros(flow.vspace.ndof)
    for _ in range(samples):
        w = proj.project(rng.standard_normal(len(free)))
        nrm = np.sqrt(max(w @ (proj.G @ w), 0.0))
        if nrm == 0:
            continue
        w /= nrm
        w_full[free] = w
        C = problem.advection(w_full, "q")[free][:, free]
        eta1 = max(eta1, abs(float(w @ (C @ w))))
        if has_lift:
            eta2 = min(eta2, float(w @ (M2 @ w)))
    eta4 = a1 + 0.5 * eta2
    passed = bool(eta4 > 0 and eta4 ** 2 > eta1 * eta3)
    return SolvabilityReport(eta1, float(eta2), eta3, eta4, a1, samples, passed)
