"""Energy functionals, the complementary gap function and root classification.

With strain scale ``s``, stress ``tau`` and canonical stress ``zeta``:

* total potential ``Pi(u) = int W(grad u) - int_{Gamma_t} t u``;
* pure complementary energy ``Pid(zeta) = -int (|tau|^2 / (4 s zeta) + V*(zeta))``;
* total complementary ``Xi(u, zeta) = int (s |grad u|^2 zeta - V*(zeta) - grad u . tau)``;
* gap function ``G(u, zeta) = int zeta s |grad u|^2``.

All integrals use the trapezoidal weights of the grid.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .dual_solver import Root, residual_tolerance, critical_zeta, dual_residual
from .errors import DivisionNearZero, InvalidRoot
from .fields import ScalarField2, Traction, VectorField2, gradient, integrate
from .materials import (
    MaterialModel,
    PowerLaw,
    canonical_dual_map,
    conjugate,
    dual_map_slope,
    stored_energy,
)

__all__ = [
    "ZETA_FLOOR",
    "EnergyReport",
    "TrialityLabel",
    "potential_energy",
    "dual_energy",
    "total_complementary",
    "gap_function",
    "energy_report",
    "classify",
    "degeneracy_tol",
]

ZETA_FLOOR = 1e-12

GLOBAL_MIN = "GlobalMin"
LOCAL_MIN_1D = "LocalMin1DOnly"
LOCAL_MAX = "LocalMax"
DEGENERATE = "Degenerate"


def _same_grid(*fields):
    g = fields[0].grid
    if any(f.grid is not g for f in fields[1:]):
        raise ValueError("fields live on different grids")
    return g


def potential_energy(m: MaterialModel, u: ScalarField2, traction: Traction) -> float:
    """Total potential energy of the displacement ``u``."""
    g = u.grid
    w = stored_energy(m, gradient(u).values)
    return integrate(np.where(g.active, w, 0.0), g) - float(np.sum(g.boundary_load(traction) * u.values))


def _check_zeta(zeta: ScalarField2, tau: VectorField2):
    g = zeta.grid
    small = g.active & (np.abs(zeta.values) < ZETA_FLOOR) & np.any(tau.values != 0, axis=-1)
    if small.any():
        i, j = np.argwhere(small)[0]
        raise DivisionNearZero(
            f"|zeta| < {ZETA_FLOOR} where tau != 0 (first at x={g.x[i, j]:.6g}, y={g.y[i, j]:.6g})"
        )


def dual_energy(m: MaterialModel, zeta: ScalarField2, tau: VectorField2) -> float:
    """Pure complementary energy ``Pid(zeta)``.

    Raises
    ------
    DivisionNearZero
        If ``|zeta| < 1e-12`` at a node where ``tau`` does not vanish.
    """
    g = _same_grid(zeta, tau)
    _check_zeta(zeta, tau)
    s = m.strain_scale
    act = g.active
    z = zeta.values[act]
    tsq = np.sum(tau.values**2, axis=-1)[act]
    with np.errstate(divide="ignore", invalid="ignore"):
        first = np.where(tsq == 0, 0.0, tsq / (4.0 * s * z))
    dens = np.zeros(g.shape)
    dens[act] = -(first + conjugate(m, z))
    return integrate(dens, g)


def total_complementary(m: MaterialModel, u: ScalarField2, zeta: ScalarField2, tau: VectorField2) -> float:
    """Total complementary energy ``Xi(u, zeta)`` for a fixed admissible ``tau``."""
    g = _same_grid(u, zeta, tau)
    s = m.strain_scale
    act = g.active
    gu = gradient(u).values
    dens = np.zeros(g.shape)
    dens[act] = (
        s * np.sum(gu**2, axis=-1)[act] * zeta.values[act]
        - conjugate(m, zeta.values[act])
        - np.sum(gu * tau.values, axis=-1)[act]
    )
    return integrate(dens, g)


def gap_function(zeta: ScalarField2, u: ScalarField2, s: float) -> float:
    """Complementary gap ``int zeta * s |grad u|^2``; non-negative whenever ``zeta >= 0``."""
    _same_grid(zeta, u)
    return integrate(zeta.values * s * np.sum(gradient(u).values ** 2, axis=-1), u.grid)


@dataclass(frozen=True)
class EnergyReport:
    """Energies of a primal/dual pair and the gap between them."""

    Pi: float
    Pid: float
    Xi_tau: float
    gap: float
    duality_gap: float

    def to_json(self) -> dict:
        return asdict(self)


def energy_report(
    m: MaterialModel, u: ScalarField2, zeta: ScalarField2, tau: VectorField2, traction: Traction
) -> EnergyReport:
    Pi = potential_energy(m, u, traction)
    Pid = dual_energy(m, zeta, tau)
    return EnergyReport(
        Pi=Pi,
        Pid=Pid,
        Xi_tau=total_complementary(m, u, zeta, tau),
        gap=gap_function(zeta, u, m.strain_scale),
        duality_gap=abs(Pi - Pid),
    )


# -- classification ----------------------------------------------------------------

@dataclass(frozen=True)
class TrialityLabel:
    """Extremality class of a dual root of the ``p = 2`` model.

    Attributes
    ----------
    label : str
        ``GlobalMin``, ``LocalMin1DOnly``, ``LocalMax`` or ``Degenerate``.
    interval : str
        Where the root sits relative to ``0`` and ``zeta_c``.
    W_second : float or None
        Second derivative of the stored energy along the strain direction,
        evaluated at the strain reconstructed from the root (None at
        ``zeta = 0``, where that strain is undefined).
    caveat : str or None
        Set for the middle root in 2-D, where its local-minimum property is
        not established.
    """

    label: str
    zeta: float
    zeta_sign: str
    interval: str
    W_second: float | None
    zeta_c: float
    caveat: str | None = None

    def to_json(self) -> dict:
        return asdict(self)


def degeneracy_tol(m: PowerLaw) -> float:
    return 1e-9 * max(1.0, abs(m.alpha) / m.c)


def _w_second(m: PowerLaw, zeta: float, tau_sq: float) -> float:
    s = m.strain_scale
    gamma_sq = tau_sq / (4.0 * s * s * zeta * zeta)
    xi = s * gamma_sq
    return float(2.0 * s * canonical_dual_map(m, xi) + 4.0 * s * s * gamma_sq * dual_map_slope(m, xi))


def classify(m: PowerLaw, root: Root | float, tau_sq: float, domain_dim: int = 2) -> TrialityLabel:
    """Classify a root of the ``p = 2`` cubic by its position relative to ``0`` and ``zeta_c``.

    Raises
    ------
    InvalidRoot
        If the model is not ``p = 2``, the value does not solve the dual
        equation, or the curvature sign contradicts the interval.
    """
    if not (isinstance(m, PowerLaw) and m.p == 2):
        raise InvalidRoot("classification is defined for the p = 2 power law only")
    if domain_dim not in (1, 2):
        raise InvalidRoot(f"domain_dim must be 1 or 2, got {domain_dim}")
    z = float(root.zeta if isinstance(root, Root) else root)
    res = abs(dual_residual(m, z, tau_sq))
    if res > residual_tolerance(tau_sq, z, 12 * m.c * z * z + 8 * m.alpha * z):
        raise InvalidRoot(f"zeta={z!r} is not a root at tau_sq={tau_sq!r} (residual {res:.3e})")

    zc = critical_zeta(m.c, m.alpha)
    tol = degeneracy_tol(m)
    sign = "positive" if z > 0 else ("negative" if z < 0 else "zero")
    if abs(z) <= tol or abs(z - zc) <= tol:
        w2 = _w_second(m, z, tau_sq) if abs(z) > tol else None
        return TrialityLabel(DEGENERATE, z, sign, "boundary", w2, zc)

    w2 = _w_second(m, z, tau_sq)
    caveat = None
    if z > 0:
        label, interval, expect = GLOBAL_MIN, "(0,inf)", 1.0
    elif z < zc:
        label, interval, expect = LOCAL_MAX, "(-inf,zeta_c)", -1.0
    else:
        label, interval, expect = LOCAL_MIN_1D, "(zeta_c,0)", 1.0
        if domain_dim == 2:
            caveat = "unverified double-min: local minimality of the middle root is established in 1-D only"
    if w2 * expect < 0 and abs(w2) > tol:
        raise InvalidRoot(f"W_second={w2:.6g} has the wrong sign for {label} at zeta={z:.6g}")
    return TrialityLabel(label, z, sign, interval, w2, zc, caveat)
