"""Regularization continuation and the plane Bingham channel benchmark."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import cumulative_simpson

from ..mesh import DIRICHLET, TRACTION, build_rectangle_mesh, rectangle_tagging
from ..viscosity.models import ConstantField, ConstantShear, RegularizedBingham, RegularModel
from .mixed import solve_mixed
from .problem import ConfigError, FlowProblem, FlowState, SolverConfig, SolverReport


def lambda_continuation(problem: FlowProblem, schedule: Sequence[float],
                        family: Callable[[float], object] | None = None,
                        solver: Callable | None = None, config: SolverConfig | None = None,
                        initial: FlowState | None = None) -> tuple[list[FlowState], SolverReport]:
    """Solve along a decreasing lambda schedule, warm-starting every stage.

    ``family`` maps lambda to a model (defaults to ``problem.model.with_lambda``).
    ``solver(problem, config, initial)`` returns (state, report) and defaults to
    the monolithic Newton solve. The report has one row per stage with the L2
    velocity difference to the previous stage.
    """
    lam = np.asarray(schedule, dtype=float)
    if lam.size == 0 or np.any(~(lam > 0)) or np.any(np.diff(lam) >= 0):
        raise ConfigError("lambda schedule must be positive and strictly decreasing")
    family = family or problem.model.with_lambda
    solver = solver or (lambda prob, cfg, init: solve_mixed(prob, cfg, init))
    cfg = config or SolverConfig()
    rep = SolverReport("LAMBDA_CONTINUATION")
    states: list[FlowState] = []
    prev = initial
    message = ""
    for k, lk in enumerate(lam):
        stage = problem.with_model(family(float(lk)))
        init = FlowState(stage, prev.v.copy(), prev.p.copy()) if prev is not None else None
        state, srep = solver(stage, cfg, init)
        row = dict(stage=k, lam=float(lk), iterations=srep.iterations, converged=int(srep.converged),
                   velocity_l2=stage.velocity_l2(state.u), diff_l2=np.nan, relative_diff=np.nan)
        if states:
            d = stage.velocity_l2(state.u - states[-1].u)
            row.update(diff_l2=d, relative_diff=d / max(row["velocity_l2"], 1e-300))
        rep.record(**row)
        if not srep.converged:
            message = f"stage lambda = {lk:g} failed: {srep.message}"
            break
        states.append(state)
        prev = state
    return states, rep.finish(not message, message)


@dataclass(frozen=True)
class BinghamChannel:
    """Pressure-free channel flow driven by a body force G along the x axis.

    Walls at y = 0 and y = H carry no-slip conditions; the ends carry the
    exact shear traction so the fully developed profile solves the problem.
    The plastic viscosity is ``nu`` and the yield stress ``tau0``.
    """

    length: float = 2.0
    height: float = 1.0
    G: float = 100.0
    tau0: float = 25.0
    nu: float = 1.0

    @property
    def yield_coefficient(self) -> float:
        # 2 b eps12 / |eps12| sqrt(2) = tau0 in the plug limit
        return self.tau0 / np.sqrt(2.0)

    def model(self, lam: float) -> RegularizedBingham:
        psi = RegularModel(((ConstantField(1.0), ConstantShear(self.nu)),))
        return RegularizedBingham(ConstantField(self.yield_coefficient), psi, lam)

    def shear_stress(self, y):
        return self.G * (0.5 * self.height - np.asarray(y, dtype=float))

    def problem(self, nx: int, ny: int, lam: float = 1e-2, model=None, E=None, mu_fn=None) -> FlowProblem:
        """Discrete channel problem; ``model`` replaces the Bingham law when given."""
        tags = rectangle_tagging(left=TRACTION, right=TRACTION, bottom=DIRICHLET, top=DIRICHLET)
        mesh = build_rectangle_mesh(self.length, self.height, nx, ny, tagging=tags)

        def traction(x, y, nx_, ny_):
            s = self.shear_stress(y)
            return 0.0 * s, s * nx_

        model = self.model(lam) if model is None else model
        return FlowProblem(mesh, model, mu_fn=mu_fn, E=E, body=(self.G, 0.0), traction=traction)

    @property
    def plug_half_width(self) -> float:
        return self.tau0 / self.G


def bingham_channel_oracle(channel: BinghamChannel, lam: float, y: np.ndarray | None = None,
                           n: int = 20001, iterations: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """1D profile (y, U(y)) of the regularized channel flow.

    At each height the shear rate e = eps12 solves 2 phi(2 e^2) e = G (H/2 - y)
    by bisection; U' = 2 e is then integrated from the wall.
    """
    H = channel.height
    yy = np.linspace(0.0, H, n)
    s = channel.shear_stress(yy)
    b = channel.yield_coefficient
    mag = np.abs(s)

    def g(e):
        return 2.0 * (channel.nu + b / np.sqrt(lam + 2.0 * e * e)) * e - mag

    lo = np.zeros_like(mag)
    hi = mag / (2.0 * channel.nu) + 1e-300
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        neg = g(mid) < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    e = np.sign(s) * 0.5 * (lo + hi)
    U = cumulative_simpson(2.0 * e, x=yy, initial=0.0)
    if y is None:
        return yy, U
    return np.asarray(y, dtype=float), np.interp(y, yy, U)


def plug_half_width(state: FlowState, channel: BinghamChannel, threshold: float, x: float | None = None,
                    n: int = 2001) -> float:
    """Half the extent of the central band along a vertical line where I < threshold."""
    x = 0.5 * channel.length if x is None else x
    y = np.linspace(0.0, channel.height, n)
    pts = np.column_stack([np.full(n, x), y])
    inside = state.invariant_at(pts) < threshold
    c = np.argmin(np.abs(y - 0.5 * channel.height))
    if not inside[c]:
        return 0.0
    lo = c
    while lo > 0 and inside[lo - 1]:
        lo -= 1
    hi = c
    while hi < n - 1 and inside[hi + 1]:
        hi += 1
    return 0.5 * (y[hi] - y[lo])
