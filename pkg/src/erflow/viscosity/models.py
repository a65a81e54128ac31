"""Viscosity model variants.

Arguments follow one convention throughout: ``I`` is the strain-rate invariant,
``absE`` the field magnitude and ``mu`` the orientation factor. Every
coefficient returns its value together with the derivatives the tangent
assembly needs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from .mu import E_THRESHOLD


class ModelError(ValueError):
    """Invalid model parameters."""


class SingularityError(ArithmeticError):
    """The singular yield term was evaluated where the strain rate vanishes."""


class Variant(enum.Enum):
    REGULAR = "REGULAR"
    REGULARIZED_BINGHAM = "REGULARIZED_BINGHAM"
    SINGULAR_BINGHAM = "SINGULAR_BINGHAM"
    EXTENDED_BINGHAM = "EXTENDED_BINGHAM"
    GIVEN_MU = "GIVEN_MU"


# -- shear functions beta(I) -------------------------------------------------

class ShearFunction:
    """Scalar function of the invariant with derivative and antiderivative."""

    def value(self, I):
        raise NotImplementedError

    def derivative(self, I):
        raise NotImplementedError

    def integral(self, I):
        """Integral of the function from 0 to I."""
        raise NotImplementedError

    def __call__(self, I):
        return self.value(I)


@dataclass(frozen=True)
class ConstantShear(ShearFunction):
    c: float

    def value(self, I):
        return np.full(np.shape(I), float(self.c))

    def derivative(self, I):
        return np.zeros(np.shape(I))

    def integral(self, I):
        return self.c * np.asarray(I, dtype=float)

    def spec(self) -> str:
        return f"constant {self.c!r}"


@dataclass(frozen=True)
class CrossShear(ShearFunction):
    """beta_inf + (beta0 - beta_inf) / (1 + I/scale)."""

    beta0: float
    beta_inf: float
    scale: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ModelError("cross scale must be positive")

    def value(self, I):
        I = np.asarray(I, dtype=float)
        return self.beta_inf + (self.beta0 - self.beta_inf) / (1.0 + I / self.scale)

    def derivative(self, I):
        I = np.asarray(I, dtype=float)
        return -(self.beta0 - self.beta_inf) / self.scale / (1.0 + I / self.scale) ** 2

    def integral(self, I):
        I = np.asarray(I, dtype=float)
        return self.beta_inf * I + (self.beta0 - self.beta_inf) * self.scale * np.log1p(I / self.scale)

    def spec(self) -> str:
        return f"cross beta0={self.beta0!r} beta_inf={self.beta_inf!r} scale={self.scale!r}"


class FlowCurveShear(ShearFunction):
    """Viscosity from a flow curve tau(gamma), gamma = (I/2)^(1/2).

    tau is a cubic Hermite spline through (gamma_k, tau_k) with tau(0) = 0,
    extended by its tangent line beyond the last knot. The viscosity is
    tau / (2 gamma), with the limit tau'(0)/2 at gamma = 0.
    """

    def __init__(self, gamma: Sequence[float], tau: Sequence[float], slopes: Sequence[float] | None = None):
        g = np.asarray(gamma, dtype=float)
        t = np.asarray(tau, dtype=float)
        if g.ndim != 1 or len(g) < 2 or len(g) != len(t):
            raise ModelError("flow curve needs matching gamma and tau arrays with at least 2 knots")
        if g[0] != 0.0 or t[0] != 0.0:
            raise ModelError("flow curve must start at gamma = 0, tau = 0")
        if np.any(np.diff(g) <= 0):
            raise ModelError("flow curve knots must be strictly increasing")
        if slopes is None:
            self._spline = PchipInterpolator(g, t, extrapolate=False)
        else:
            self._spline = CubicHermiteSpline(g, t, np.asarray(slopes, dtype=float), extrapolate=False)
        self.gamma = g
        self.tau = t
        self.slopes = None if slopes is None else np.asarray(slopes, dtype=float)
        self._d1 = self._spline.derivative()
        self._anti = self._spline.antiderivative()
        self.g_end = float(g[-1])
        self.t_end = float(t[-1])
        self.s_end = float(self._d1(self.g_end))
        # Taylor coefficients of the first segment: tau = c1 g + c2 g^2 + c3 g^3
        c = self._spline.c[:, 0]
        self._c3, self._c2, self._c1 = float(c[0]), float(c[1]), float(c[2])
        self._g_small = 1e-6 * float(g[1])

    def _tau(self, g):
        inside = g <= self.g_end
        t = np.where(inside, self._spline(np.minimum(g, self.g_end)),
                     self.t_end + self.s_end * (g - self.g_end))
        dt = np.where(inside, self._d1(np.minimum(g, self.g_end)), self.s_end)
        return t, dt

    def value(self, I):
        g = np.sqrt(0.5 * np.maximum(np.asarray(I, dtype=float), 0.0))
        small = g < self._g_small
        gs = np.where(small, 1.0, g)
        t, _ = self._tau(np.where(small, 0.0, g))
        series = 0.5 * (self._c1 + self._c2 * g + self._c3 * g * g)
        return np.where(small, series, t / (2.0 * gs))

    def derivative(self, I):
        g = np.sqrt(0.5 * np.maximum(np.asarray(I, dtype=float), 0.0))
        small = g < self._g_small
        gs = np.where(small, 1.0, g)
        t, dt = self._tau(np.where(small, 0.0, g))
        regular = (dt * gs - t) / (8.0 * gs ** 3)
        # d beta/dI = (c2 + 2 c3 g) / (8 g); finite stand-in at exactly g = 0
        gz = np.where(g > 0, g, 1.0)
        series = np.where(g > 0, (self._c2 + 2.0 * self._c3 * g) / (8.0 * gz), 0.0)
        return np.where(small, series, regular)

    def integral(self, I):
        # d I = 4 g d g, so the integral is 2 * int_0^g tau
        g = np.sqrt(0.5 * np.maximum(np.asarray(I, dtype=float), 0.0))
        inside = g <= self.g_end
        base = self._anti(np.minimum(g, self.g_end))
        dg = np.maximum(g - self.g_end, 0.0)
        extra = self.t_end * dg + 0.5 * self.s_end * dg ** 2
        return 2.0 * np.where(inside, base, self._anti(self.g_end) + extra)

    @property
    def largest_knot(self) -> float:
        return self.g_end

    def spec(self) -> str:
        out = "flowcurve gamma=" + ",".join(repr(float(v)) for v in self.gamma)
        out += " tau=" + ",".join(repr(float(v)) for v in self.tau)
        if self.slopes is not None:
            out += " slopes=" + ",".join(repr(float(v)) for v in self.slopes)
        return out


# -- field coefficients e(|E|, mu) ------------------------------------------

class FieldCoefficient:
    """Nonnegative function of field magnitude and orientation factor."""

    def value(self, absE, mu):
        raise NotImplementedError

    def dmu(self, absE, mu):
        raise NotImplementedError

    def __call__(self, absE, mu):
        return self.value(absE, mu)


@dataclass(frozen=True)
class ConstantField(FieldCoefficient):
    c: float

    def value(self, absE, mu):
        return np.full(np.broadcast(np.asarray(absE), np.asarray(mu)).shape, float(self.c))

    def dmu(self, absE, mu):
        return np.zeros(np.broadcast(np.asarray(absE), np.asarray(mu)).shape)

    def spec(self) -> str:
        return f"constant {self.c!r}"


@dataclass(frozen=True)
class SaturatingField(FieldCoefficient):
    """c0 + c1 (1 - k mu) |E|^2 / (E0^2 + |E|^2)."""

    c0: float
    c1: float
    k: float = 0.0
    E0: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.k <= 1.0:
            raise ModelError("anisotropy k must lie in [0, 1]")
        if not self.E0 > 0:
            raise ModelError("E0 must be positive")

    def _sat(self, absE):
        e2 = np.asarray(absE, dtype=float) ** 2
        return e2 / (self.E0 ** 2 + e2)

    def value(self, absE, mu):
        return self.c0 + self.c1 * (1.0 - self.k * np.asarray(mu, dtype=float)) * self._sat(absE)

    def dmu(self, absE, mu):
        return -self.c1 * self.k * self._sat(absE) * np.ones(np.shape(mu))

    def spec(self) -> str:
        return f"saturating c0={self.c0!r} c1={self.c1!r} k={self.k!r} E0={self.E0!r}"


class SplineField(FieldCoefficient):
    """s(0) + (s(|E|) - s(0)) (1 - k mu) with s a monotone cubic through knots."""

    def __init__(self, E: Sequence[float], values: Sequence[float], k: float = 0.0):
        E = np.asarray(E, dtype=float)
        v = np.asarray(values, dtype=float)
        if len(E) < 2 or len(E) != len(v) or E[0] != 0.0 or np.any(np.diff(E) <= 0):
            raise ModelError("spline field needs increasing knots starting at |E| = 0")
        if not 0.0 <= k <= 1.0:
            raise ModelError("anisotropy k must lie in [0, 1]")
        self.E, self.values, self.k = E, v, float(k)
        self._s = PchipInterpolator(E, v, extrapolate=False)
        self._s0 = float(v[0])
        self._end = float(v[-1])

    def _sval(self, absE):
        a = np.asarray(absE, dtype=float)
        return np.where(a <= self.E[-1], self._s(np.minimum(a, self.E[-1])), self._end)

    def value(self, absE, mu):
        return self._s0 + (self._sval(absE) - self._s0) * (1.0 - self.k * np.asarray(mu, dtype=float))

    def dmu(self, absE, mu):
        return -(self._sval(absE) - self._s0) * self.k * np.ones(np.shape(mu))

    def spec(self) -> str:
        return ("spline E=" + ",".join(repr(float(v)) for v in self.E) + " values="
                + ",".join(repr(float(v)) for v in self.values) + f" k={self.k!r}")


# -- models -----------------------------------------------------------------

@dataclass(frozen=True)
class Bounds:
    a1: float | None = None
    a2: float | None = None
    a3: float | None = None
    a4: float | None = None
    a5: float | None = None
    a6: float | None = None
    a7: float | None = None

    def require(self, *names: str) -> tuple:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ModelError(f"model bounds {', '.join(missing)} are not declared")
        return tuple(getattr(self, n) for n in names)


def _mask_mu(absE, mu, threshold=E_THRESHOLD):
    """Dummy orientation 0 where the field vanishes."""
    absE = np.asarray(absE, dtype=float)
    return np.where(absE < threshold, 0.0, np.asarray(mu, dtype=float))


@dataclass(frozen=True)
class RegularModel:
    """phi = sum_i e_i(|E|, mu) beta_i(I)."""

    terms: tuple
    bounds: Bounds = field(default_factory=Bounds)
    variant = Variant.REGULAR

    def __post_init__(self):
        if not self.terms:
            raise ModelError("REGULAR model needs at least one term")
        object.__setattr__(self, "terms", tuple(tuple(t) for t in self.terms))

    def eval(self, I, absE, mu):
        """(phi, d phi/dI, d phi/d mu)."""
        mu = _mask_mu(absE, mu)
        v = d_I = d_mu = 0.0
        for e, beta in self.terms:
            ev, em = e.value(absE, mu), e.dmu(absE, mu)
            bv, bd = beta.value(I), beta.derivative(I)
            v = v + ev * bv
            d_I = d_I + ev * bd
            d_mu = d_mu + em * bv
        d_mu = np.where(np.asarray(absE) < E_THRESHOLD, 0.0, d_mu)
        return v, d_I, d_mu

    def phi(self, I, absE, mu, x=None):
        return self.eval(I, absE, mu)[0]

    def integral(self, I, absE, mu):
        """Integral of phi over the invariant from 0 to I."""
        mu = _mask_mu(absE, mu)
        return sum(e.value(absE, mu) * beta.integral(I) for e, beta in self.terms)


def constant_model(c: float) -> RegularModel:
    return RegularModel(((ConstantField(1.0), ConstantShear(c)),), Bounds(c, c, c, 0.0))


@dataclass(frozen=True)
class RegularizedBingham:
    """phi = b(|E|, mu) (lambda + I)^(-1/2) + psi(I, |E|, mu)."""

    yield_coef: FieldCoefficient
    psi: RegularModel
    lam: float
    bounds: Bounds = field(default_factory=Bounds)
    variant = Variant.REGULARIZED_BINGHAM

    def __post_init__(self):
        if not self.lam > 0:
            raise ModelError("regularized Bingham model needs lambda > 0")

    def phi(self, I, absE, mu, x=None):
        mu = _mask_mu(absE, mu)
        return self.yield_coef.value(absE, mu) / np.sqrt(self.lam + np.asarray(I)) + self.psi.phi(I, absE, mu)

    def with_lambda(self, lam: float):
        return RegularizedBingham(self.yield_coef, self.psi, lam, self.bounds)


@dataclass(frozen=True)
class SingularBingham:
    yield_coef: FieldCoefficient
    psi: RegularModel
    bounds: Bounds = field(default_factory=Bounds)
    variant = Variant.SINGULAR_BINGHAM
    lam = 0.0

    def phi(self, I, absE, mu, x=None):
        I = np.asarray(I, dtype=float)
        if np.any(I <= 0):
            raise SingularityError("singular Bingham viscosity evaluated at I = 0")
        mu = _mask_mu(absE, mu)
        return self.yield_coef.value(absE, mu) / np.sqrt(I) + self.psi.phi(I, absE, mu)

    def with_lambda(self, lam: float):
        return RegularizedBingham(self.yield_coef, self.psi, lam, self.bounds)


@dataclass(frozen=True)
class ExtendedBingham:
    """phi = b (lambda + I)^(-1/2) + b1(|E|, mu); lambda = 0 is the singular law."""

    yield_coef: FieldCoefficient
    plastic: FieldCoefficient
    lam: float = 0.0
    bounds: Bounds = field(default_factory=Bounds)
    variant = Variant.EXTENDED_BINGHAM

    def __post_init__(self):
        if self.lam < 0:
            raise ModelError("lambda must be nonnegative")

    def phi(self, I, absE, mu, x=None):
        I = np.asarray(I, dtype=float)
        if self.lam == 0 and np.any(I <= 0):
            raise SingularityError("singular yield term evaluated at I = 0")
        mu = _mask_mu(absE, mu)
        return self.yield_coef.value(absE, mu) / np.sqrt(self.lam + I) + self.plastic.value(absE, mu)

    def with_lambda(self, lam: float):
        return ExtendedBingham(self.yield_coef, self.plastic, lam, self.bounds)


MuOfX = Union[float, Callable]


@dataclass(frozen=True)
class GivenMu:
    """Orientation factor prescribed as a function of position.

    phi = e(|E|, x) (lambda + I)^(-1/2) + psi1(I, |E|, x), where both
    coefficients see mu(x) in place of the flow-dependent factor.
    """

    yield_coef: FieldCoefficient
    psi1: RegularModel
    mu_of_x: MuOfX = 0.0
    lam: float = 0.0
    bounds: Bounds = field(default_factory=Bounds)
    variant = Variant.GIVEN_MU

    def __post_init__(self):
        if self.lam < 0:
            raise ModelError("lambda must be nonnegative")

    def mu_at(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if callable(self.mu_of_x):
            m = np.asarray(self.mu_of_x(x[..., 0], x[..., 1]), dtype=float)
        else:
            m = float(self.mu_of_x)
        m = np.broadcast_to(m, x.shape[:-1])
        if np.any((m < 0) | (m > 1)):
            raise ModelError("prescribed orientation factor must lie in [0, 1]")
        return m

    def phi(self, I, absE, mu=None, x=None):
        if x is None:
            raise ModelError("GIVEN_MU model needs the position x")
        m = _mask_mu(absE, self.mu_at(x))
        I = np.asarray(I, dtype=float)
        if self.lam == 0 and np.any(I <= 0):
            raise SingularityError("singular yield term evaluated at I = 0")
        return self.yield_coef.value(absE, m) / np.sqrt(self.lam + I) + self.psi1.phi(I, absE, m)

    def with_lambda(self, lam: float):
        return GivenMu(self.yield_coef, self.psi1, self.mu_of_x, lam, self.bounds)


ViscosityModel = Union[RegularModel, RegularizedBingham, SingularBingham, ExtendedBingham, GivenMu]


def eval_phi(model: ViscosityModel, I, absE, mu, x=None, e_threshold: float = E_THRESHOLD):
    """Viscosity value; for a vanishing field the orientation argument is ignored."""
    mu = np.where(np.asarray(absE, dtype=float) < e_threshold, 0.0, np.asarray(mu, dtype=float))
    out = model.phi(np.asarray(I, dtype=float), np.asarray(absE, dtype=float), mu, x)
    return float(out) if np.ndim(out) == 0 else out


def yield_part(model: ViscosityModel) -> FieldCoefficient | None:
    return getattr(model, "yield_coef", None)
