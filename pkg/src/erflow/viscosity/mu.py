"""Orientation factor between flow direction and electric field.

The factor is the squared cosine between the (frame-shifted) velocity and the
field. A small ``alpha`` keeps it defined at zero velocity; the optional
mollifier replaces point values by local averages over a disc of radius ``a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

SQRT2 = np.sqrt(2.0)
DEFAULT_ALPHA = 1e-3
E_THRESHOLD = 1e-12


class MuDomainError(ValueError):
    """The orientation factor is undefined (zero electric field)."""


def bump_kernel(r: np.ndarray, a: float) -> np.ndarray:
    """Unnormalized smooth bump supported on [0, a)."""
    t = np.asarray(r, dtype=float) / a
    out = np.zeros_like(t)
    inside = t < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return out


@dataclass(frozen=True)
class Mollifier:
    """Radial averaging kernel with unit mass.

    ``kernel(r, a)`` may be any nonnegative profile vanishing for r >= a; it is
    normalized numerically. Averages are computed with a polar product rule.
    """

    radius: float
    kernel: Callable = bump_kernel
    n_radial: int = 8
    n_angular: int = 16

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("mollifier radius must be positive")

    @cached_property
    def stencil(self) -> tuple[np.ndarray, np.ndarray]:
        """Offsets (S, 2) and weights (S,) summing to one."""
        x, w = np.polynomial.legendre.leggauss(self.n_radial)
        r = 0.5 * self.radius * (x + 1.0)
        wr = 0.5 * self.radius * w * r * np.asarray(self.kernel(r, self.radius))
        if np.any(wr < 0):
            raise ValueError("mollifier kernel must be nonnegative")
        th = 2.0 * np.pi * (np.arange(self.n_angular) + 0.5) / self.n_angular
        offs = (r[:, None, None] * np.stack([np.cos(th), np.sin(th)], axis=1)[None]).reshape(-1, 2)
        wts = np.repeat(wr, self.n_angular)
        wts = wts / wts.sum()
        return offs, wts

    def mass(self) -> float:
        """Continuous integral of the unnormalized kernel over the plane."""
        x, w = np.polynomial.legendre.leggauss(64)
        r = 0.5 * self.radius * (x + 1.0)
        return float(2.0 * np.pi * np.sum(0.5 * self.radius * w * r * self.kernel(r, self.radius)))


@dataclass(frozen=True)
class MuFunction:
    alpha: float = DEFAULT_ALPHA
    frame_velocity: tuple = (0.0, 0.0)
    mollifier: Mollifier | None = None
    beta: float = 0.0
    e_threshold: float = E_THRESHOLD

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        object.__setattr__(self, "frame_velocity", tuple(float(c) for c in self.frame_velocity))
        if self.beta and self.mollifier is None:
            raise ValueError("beta is only meaningful with a mollifier")


def _direction(w: np.ndarray, alpha: float):
    """(alpha*(1,1) + w) / (alpha*sqrt2 + |w|) and its norm denominator."""
    nrm = np.sqrt(np.sum(w * w, axis=-1))
    num = alpha + w
    den = alpha * SQRT2 + nrm
    safe = np.where(den > 0, den, 1.0)
    a = np.where((den > 0)[..., None], num / safe[..., None], 0.0)
    return a, num, den, nrm


def mu_values(mu: MuFunction, u: np.ndarray, E: np.ndarray, with_derivative: bool = False):
    """Vectorized factor over arrays (..., 2).

    Where |E| is below the threshold the value is the dummy 0 (the constitutive
    law does not depend on it there). With ``with_derivative`` also returns the
    gradient with respect to u, shape (..., 2).
    """
    u = np.asarray(u, dtype=float)
    E = np.asarray(E, dtype=float)
    w = u + np.asarray(mu.frame_velocity)
    a, num, den, nrm = _direction(w, mu.alpha)
    Enrm = np.sqrt(np.sum(E * E, axis=-1))
    live = Enrm >= mu.e_threshold
    e = np.where(live[..., None], E / np.where(live, Enrm, 1.0)[..., None], 0.0)
    s = np.sum(a * e, axis=-1)
    val = np.clip(s * s, 0.0, 1.0)
    if not with_derivative:
        return val
    safe_den = np.where(den > 0, den, 1.0)
    ne = np.sum(num * e, axis=-1)
    unit_w = np.where((nrm > 0)[..., None], w / np.where(nrm > 0, nrm, 1.0)[..., None], 0.0)
    ds = e / safe_den[..., None] - (ne / safe_den ** 2)[..., None] * unit_w
    ds = np.where((den > 0)[..., None], ds, 0.0)
    return val, 2.0 * s[..., None] * ds


def eval_mu(mu: MuFunction, u, E) -> float:
    """Orientation factor at a point; raises for a zero field."""
    E = np.asarray(E, dtype=float)
    if float(np.hypot(*E)) < mu.e_threshold:
        raise MuDomainError("orientation factor undefined at E = 0; use the field-free branch")
    return float(mu_values(mu, np.asarray(u, dtype=float), E))


def mollified_average(mollifier: Mollifier, field: Callable, x: np.ndarray, mesh=None) -> np.ndarray:
    """Disc average of ``field`` (points -> (P, 2) values) around points x (P, 2).

    Samples falling outside ``mesh`` are replaced by the nearest boundary point,
    which realizes the nearest-value extension of the field.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    offs, wts = mollifier.stencil
    pts = (x[:, None, :] + offs[None]).reshape(-1, 2)
    if mesh is not None:
        tri, _ = mesh.locate(pts)
        out = tri < 0
        if np.any(out):
            pts = pts.copy()
            pts[out] = mesh.nearest_boundary_point(pts[out])
    vals = np.asarray(field(pts), dtype=float).reshape(len(x), len(wts), -1)
    return np.einsum("psk,s->pk", vals, wts)


def eval_mu_mollified(mu: MuFunction, u_field: Callable, E_field: Callable, x, mesh=None) -> np.ndarray:
    """Mollified orientation factor at point(s) x.

    ``u_field`` and ``E_field`` map (P, 2) points to (P, 2) values. Returns an
    array with one value per point (a float for a single point).
    """
    if mu.mollifier is None:
        raise ValueError("MuFunction has no mollifier")
    single = np.ndim(x) == 1
    Pu = mollified_average(mu.mollifier, u_field, x, mesh)
    PE = mollified_average(mu.mollifier, E_field, x, mesh)
    w = Pu + np.asarray(mu.frame_velocity)
    a, *_ = _direction(w, mu.alpha)
    b, _, den_e, nrm_e = _direction(PE, mu.beta)
    s = np.sum(a * b, axis=-1)
    val = np.clip(s * s, 0.0, 1.0)
    val = np.where(nrm_e >= mu.e_threshold, val, 0.0)
    return float(val[0]) if single else val
