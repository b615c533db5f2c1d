"""Canonical material triples for anti-plane shear.

Each model stores the energy as ``W(gamma) = V(xi)`` with the canonical
strain ``xi = s * |gamma|**2``. The strain scale ``s`` is part of the model:
``s = 1/2`` for :class:`QuadExp` and ``s = 1`` for :class:`PowerLaw`. All
functions below accept scalars or numpy arrays and evaluate elementwise.

Real powers follow two rules:

* primal side (``V``, ``V'``, ``W``, ``tau``): a negative base is accepted
  only for an integer exponent;
* dual side (powers of ``zeta``): a negative base is also accepted when the
  exponent is a rational with odd denominator, e.g. ``zeta**(1/3)``.

Anything else raises :class:`~antiplane.errors.NonReal`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

from .errors import ConfigError, DomainError, EnergyOverflow, NonReal

__all__ = [
    "EXP_CAP",
    "QuadExp",
    "PowerLaw",
    "MaterialModel",
    "material_from_dict",
    "stored_energy",
    "shear_stress",
    "canonical_energy",
    "canonical_dual_map",
    "dual_map_slope",
    "conjugate",
    "conjugate_gradient",
    "real_power",
    "signed_power",
]

EXP_CAP = 700.0


def _exp(arg):
    arg = np.asarray(arg, dtype=float)
    if np.any(arg > EXP_CAP):
        raise EnergyOverflow(f"exp argument {float(np.max(arg)):.6g} exceeds cap {EXP_CAP}")
    return np.exp(arg)


def _is_integer(r: float) -> bool:
    return float(r).is_integer()


def _odd_denominator(r: float) -> Fraction | None:
    """Rational form of ``r`` if it has an odd denominator (tolerance 1e-12)."""
    frac = Fraction(r).limit_denominator(10**6)
    if abs(float(frac) - r) > 1e-12 * max(1.0, abs(r)):
        return None
    return frac if frac.denominator % 2 == 1 else None


def real_power(base, exponent: float):
    """``base**exponent`` for the primal side (negative base needs an integer exponent)."""
    base = np.asarray(base, dtype=float)
    if _is_integer(exponent):
        if exponent < 0 and np.any(base == 0):
            raise DomainError("zero base with negative exponent")
        return np.power(base, int(exponent)) if exponent >= 0 else 1.0 / np.power(base, -int(exponent))
    if np.any(base < 0):
        raise NonReal(f"negative base raised to non-integer power {exponent}")
    if exponent < 0 and np.any(base == 0):
        raise DomainError("zero base with negative exponent")
    return np.power(base, exponent)


def signed_power(base, exponent: float):
    """``base**exponent`` for the dual side (negative base allowed for odd-denominator rationals)."""
    base = np.asarray(base, dtype=float)
    if _is_integer(exponent) or not np.any(base < 0):
        return real_power(base, exponent)
    frac = _odd_denominator(exponent)
    if frac is None:
        raise NonReal(f"negative base raised to power {exponent} (no real branch)")
    mag = real_power(np.abs(base), exponent)
    sign = -1.0 if frac.numerator % 2 else 1.0
    return np.where(base < 0, sign * mag, mag)


@dataclass(frozen=True)
class QuadExp:
    """Quadratic-exponential material ``V(xi) = mu*xi + nu*(exp(xi) - 1)``."""

    mu: float
    nu: float

    kind = "quad_exp"

    def __post_init__(self):
        if not (self.mu > 0 and self.nu > 0):
            raise ConfigError(f"QuadExp needs mu > 0 and nu > 0, got mu={self.mu}, nu={self.nu}")
        if not (math.isfinite(self.mu) and math.isfinite(self.nu)):
            raise ConfigError("QuadExp parameters must be finite")

    @property
    def strain_scale(self) -> float:
        return 0.5

    @property
    def zeta_min(self) -> float:
        """Image of ``xi = 0`` under the dual map."""
        return self.mu + self.nu

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu": self.mu, "nu": self.nu}


@dataclass(frozen=True)
class PowerLaw:
    """Power-law material ``V(xi) = beta/2 * (xi - alpha)**p - beta_o``.

    Parameters
    ----------
    mu : float
        Shear modulus, positive.
    b : float
        Hardening parameter, positive.
    p : float
        Exponent, positive. ``p > 1`` hardens and ``p < 1`` softens.
    eps : float
        Pre-strain offset.
    """

    mu: float
    b: float
    p: float
    eps: float = 0.0

    kind = "power_law"

    def __post_init__(self):
        if not (self.mu > 0 and self.b > 0 and self.p > 0):
            raise ConfigError(
                f"PowerLaw needs mu, b, p > 0, got mu={self.mu}, b={self.b}, p={self.p}"
            )
        if not all(math.isfinite(v) for v in (self.mu, self.b, self.p, self.eps)):
            raise ConfigError("PowerLaw parameters must be finite")

    @property
    def strain_scale(self) -> float:
        return 1.0

    @property
    def beta(self) -> float:
        return self.mu * self.b ** (self.p - 1) / self.p**self.p

    @property
    def alpha(self) -> float:
        return self.eps - self.p / self.b

    @property
    def beta_o(self) -> float:
        return self.mu / (2 * self.b)

    @property
    def c(self) -> float:
        if self.p == 1:
            raise DomainError("c is undefined for p = 1")
        return (2 / self.mu) ** (1 / (self.p - 1)) * self.p / self.b

    @property
    def q(self) -> float:
        """Dual exponent ``1/(p - 1)``."""
        if self.p == 1:
            raise DomainError("dual exponent is undefined for p = 1")
        return 1.0 / (self.p - 1)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "mu": self.mu, "b": self.b, "p": self.p, "eps": self.eps}


MaterialModel = Union[QuadExp, PowerLaw]


def material_from_dict(doc: dict) -> MaterialModel:
    """Build a model from ``{"kind": "quad_exp" | "power_law", ...}``."""
    kind = doc.get("kind")
    try:
        if kind == "quad_exp":
            return QuadExp(float(doc["mu"]), float(doc["nu"]))
        if kind == "power_law":
            return PowerLaw(float(doc["mu"]), float(doc["b"]), float(doc["p"]), float(doc.get("eps", 0.0)))
    except KeyError as exc:
        raise ConfigError(f"material {kind!r} is missing parameter {exc}") from None
    raise ConfigError(f"unknown material kind {kind!r}")


def _as_result(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def canonical_energy(m: MaterialModel, xi):
    """Canonical function ``V(xi)``."""
    xi = np.asarray(xi, dtype=float)
    if isinstance(m, QuadExp):
        return _as_result(m.mu * xi + m.nu * (_exp(xi) - 1.0))
    return _as_result(0.5 * m.beta * real_power(xi - m.alpha, m.p) - m.beta_o)


def canonical_dual_map(m: MaterialModel, xi):
    """Canonical stress ``zeta = V'(xi)``."""
    xi = np.asarray(xi, dtype=float)
    if isinstance(m, QuadExp):
        return _as_result(m.mu + m.nu * _exp(xi))
    if m.p == 1:
        return _as_result(np.full_like(xi, 0.5 * m.beta))
    return _as_result(0.5 * m.p * m.beta * real_power(xi - m.alpha, m.p - 1))


def dual_map_slope(m: MaterialModel, xi):
    """``V''(xi)``."""
    xi = np.asarray(xi, dtype=float)
    if isinstance(m, QuadExp):
        return _as_result(m.nu * _exp(xi))
    if m.p in (1, 2):
        return _as_result(np.full_like(xi, 0.5 * m.p * (m.p - 1) * m.beta))
    return _as_result(0.5 * m.p * (m.p - 1) * m.beta * real_power(xi - m.alpha, m.p - 2))


def conjugate(m: MaterialModel, zeta):
    """Legendre conjugate ``V*(zeta)``.

    Raises
    ------
    DomainError
        QuadExp with ``zeta <= mu``, or PowerLaw ``p = 1`` away from ``mu/2``.
    NonReal
        Negative ``zeta`` without a real branch of the power.
    """
    zeta = np.asarray(zeta, dtype=float)
    if isinstance(m, QuadExp):
        if np.any(zeta <= m.mu):
            raise DomainError(f"QuadExp conjugate needs zeta > mu = {m.mu}")
        d = zeta - m.mu
        return _as_result(d * (np.log(d / m.nu) - 1.0) + m.nu)
    if m.p == 1:
        if np.any(zeta != 0.5 * m.beta):
            raise DomainError("p = 1 conjugate is finite only at zeta = mu/2")
        return _as_result(m.alpha * zeta + m.beta_o)
    r = m.p / (m.p - 1)
    return _as_result((m.p - 1) / m.p * m.c * signed_power(zeta, r) + m.alpha * zeta + m.beta_o)


def conjugate_gradient(m: MaterialModel, zeta):
    """``(V*)'(zeta)``, the inverse of :func:`canonical_dual_map`."""
    zeta = np.asarray(zeta, dtype=float)
    if isinstance(m, QuadExp):
        if np.any(zeta <= m.mu):
            raise DomainError(f"QuadExp conjugate needs zeta > mu = {m.mu}")
        return _as_result(np.log((zeta - m.mu) / m.nu))
    if m.p == 1:
        raise DomainError("p = 1 conjugate is not differentiable")
    return _as_result(m.c * signed_power(zeta, m.q) + m.alpha)


def _gamma_sq(gamma):
    g = np.asarray(gamma, dtype=float)
    if g.shape[-1:] != (2,):
        raise ValueError(f"gamma must have a trailing axis of length 2, got shape {g.shape}")
    return np.sum(g * g, axis=-1)


def stored_energy(m: MaterialModel, gamma):
    """Stored energy ``W(gamma)`` for shear strain(s) ``gamma`` (trailing axis 2)."""
    return canonical_energy(m, m.strain_scale * _gamma_sq(gamma))


def shear_stress(m: MaterialModel, gamma):
    """Shear stress ``tau = dW/dgamma`` from the closed-form constitutive law.

    QuadExp: ``mu*g + nu*g*exp(|g|^2/2)``. PowerLaw:
    ``mu * (1 + (b/p)(|g|^2 - eps))**(p-1) * g``.
    """
    g = np.asarray(gamma, dtype=float)
    gsq = _gamma_sq(g)
    if isinstance(m, QuadExp):
        factor = m.mu + m.nu * _exp(0.5 * gsq)
    else:
        base = 1.0 + (m.b / m.p) * (gsq - m.eps)
        factor = m.mu * real_power(base, m.p - 1)
    out = np.asarray(factor)[..., None] * g
    return out if out.ndim > 1 else out.astype(float)
