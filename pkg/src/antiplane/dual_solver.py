"""Pointwise canonical dual algebraic equations and their real roots.

For a model with strain scale ``s`` the dual equation at a point with stress
``tau`` reads ``h(zeta) = 4 s zeta**2 (V*)'(zeta) = |tau|**2``:

* QuadExp: ``2 zeta**2 log((zeta - mu)/nu) = |tau|**2``, one root ``>= mu + nu``;
* PowerLaw: ``4 zeta**2 (c zeta**q + alpha) = |tau|**2`` with ``q = 1/(p-1)``;
  for ``p = 2`` this is the cubic ``4 zeta**2 (c zeta + alpha) = |tau|**2``.

Roots are returned as a :class:`DualRootSet` sorted in descending order.
"""

from __future__ import annotations

import math
from fractions import Fraction
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import (
    DegenerateInput,
    FieldError,
    NodeSolveError,
    NoRealRoot,
    NonReal,
    SolveFailure,
    UnexpectedRoot,
    AntiplaneError,
)
from .fields import ScalarField2, VectorField2
from .materials import MaterialModel, PowerLaw, QuadExp, canonical_dual_map, conjugate_gradient, signed_power

__all__ = [
    "Root",
    "DualRootSet",
    "FieldRoots",
    "RESIDUAL_RTOL",
    "dual_residual",
    "residual_tolerance",
    "solve_quadexp",
    "solve_cubic_p2",
    "cubic_closed_form",
    "multiplicity_criterion",
    "critical_zeta",
    "solve_powerlaw",
    "solve_dual",
    "solve_field",
]

RESIDUAL_RTOL = 1e-11
ETA_SNAP = 1e-12
SCAN_POINTS = 512

# multiplicity cases
UNIQUE = "Unique"
TRIPLE = "Triple"
BOUNDARY_ETA = "BoundaryEta"
ZERO_STRESS = "ZeroStress"
MULTIPLE = "Multiple"
NO_REAL_ROOT = "NoRealRoot"


def _sign_class(z: float) -> str:
    return "positive" if z > 0 else ("negative" if z < 0 else "zero")


@dataclass(frozen=True)
class Root:
    """One real root of the dual equation.

    ``primal_consistent`` is False when the root does not map back to itself
    through ``V'((V*)'(zeta))``, e.g. the negative branch of ``p = 1/2``.
    """

    zeta: float
    residual: float
    sign: str
    multiplicity: int = 1
    primal_consistent: bool = True

    def to_json(self) -> dict:
        return {
            "zeta": self.zeta,
            "residual": self.residual,
            "sign": self.sign,
            "multiplicity": self.multiplicity,
            "primal_consistent": self.primal_consistent,
        }


@dataclass(frozen=True)
class DualRootSet:
    """All real roots at one point, in descending order."""

    roots: tuple[Root, ...]
    tau_sq: float
    case: str

    def __post_init__(self):
        zs = [r.zeta for r in self.roots]
        if zs != sorted(zs, reverse=True):
            raise ValueError("roots must be sorted in descending order")

    @property
    def zetas(self) -> np.ndarray:
        return np.array([r.zeta for r in self.roots])

    def __len__(self) -> int:
        return len(self.roots)

    def __getitem__(self, k: int) -> Root:
        return self.roots[k]

    def positive(self) -> Root:
        """The largest root if it is positive."""
        if not self.roots or self.roots[0].zeta <= 0:
            raise NoRealRoot(f"no positive root at tau_sq={self.tau_sq}")
        return self.roots[0]

    def to_json(self) -> dict:
        return {
            "tau_sq": self.tau_sq,
            "roots": [r.to_json() for r in self.roots],
            "case": self.case,
        }


# -- residuals -----------------------------------------------------------------

def _h_quadexp(mu, nu, z):
    return 2.0 * z * z * np.log((z - mu) / nu)


def _h_power(c, alpha, q, z):
    return 4.0 * z * z * (c * signed_power(z, q) + alpha)


def dual_residual(m: MaterialModel, zeta: float, tau_sq: float) -> float:
    """``h(zeta) - |tau|^2`` for model ``m``."""
    if isinstance(m, QuadExp):
        return float(_h_quadexp(m.mu, m.nu, zeta) - tau_sq)
    if m.p == 1:
        return 0.0 if zeta == 0.5 * m.mu else math.inf
    if m.p == 2:
        return _cubic_f_exact(m.c, m.alpha, tau_sq, zeta)
    return float(_h_power(m.c, m.alpha, m.q, zeta) - tau_sq)


def _bound(tau_sq: float) -> float:
    return RESIDUAL_RTOL * max(1.0, tau_sq)


def residual_tolerance(tau_sq: float, z: float, slope: float, terms: float = 0.0) -> float:
    """Residual bound, widened to what a correctly rounded ``z`` can reach.

    ``slope`` is ``h'(z)`` and ``terms`` the magnitude of the summands of
    ``h(z)`` (for rounding in the evaluation itself).
    """
    floor = abs(slope) * math.ulp(z) + 8 * np.finfo(float).eps * terms
    return max(_bound(tau_sq), floor)


# -- QuadExp --------------------------------------------------------------------

def solve_quadexp(mu: float, nu: float, tau_sq: float) -> float:
    """Unique root ``zeta >= mu + nu`` of ``2 zeta^2 log((zeta - mu)/nu) = tau_sq``.

    Brackets ``[mu + nu, hi]`` (``hi`` grown geometrically), bisects with
    Brent's method and polishes with Newton steps.
    """
    if not (mu > 0 and nu > 0):
        raise DegenerateInput(f"need mu, nu > 0, got {mu}, {nu}")
    if not (tau_sq >= 0 and math.isfinite(tau_sq)):
        raise DegenerateInput(f"tau_sq must be finite and >= 0, got {tau_sq}")
    lo = mu + nu
    if tau_sq == 0:
        return lo
    f = lambda z: _h_quadexp(mu, nu, z) - tau_sq  # noqa: E731
    hi = 2.0 * lo
    while f(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if not math.isfinite(hi):
            raise SolveFailure("bracket expansion overflowed")
    z = brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    for _ in range(3):
        d = z - mu
        slope = 4.0 * z * math.log(d / nu) + 2.0 * z * z / d
        z_new = z - f(z) / slope
        if abs(f(z_new)) >= abs(f(z)):
            break
        z = z_new
    return float(z)


def _quadexp_set(m: QuadExp, tau_sq: float) -> DualRootSet:
    z = solve_quadexp(m.mu, m.nu, tau_sq)
    res = abs(dual_residual(m, z, tau_sq))
    return DualRootSet((Root(z, res, "positive"),), float(tau_sq), UNIQUE)


# -- cubic (p = 2) ----------------------------------------------------------------

def multiplicity_criterion(c: float, alpha: float) -> float:
    """Threshold ``eta = 16 alpha^3 / (27 c^2)`` separating one from three real roots."""
    if not c > 0:
        raise DegenerateInput(f"c must be positive, got {c}")
    return 16.0 * alpha**3 / (27.0 * c * c)


def critical_zeta(c: float, alpha: float) -> float:
    """Interior critical point ``-2 alpha / (3 c)`` of ``h(zeta) = 4 zeta^2 (c zeta + alpha)``."""
    return -2.0 * alpha / (3.0 * c)


def _cubic_f_exact(c, alpha, tau_sq, z) -> float:
    """Cubic residual of the float ``z`` evaluated without rounding (then rounded once)."""
    zf = Fraction(z)
    return float(4 * Fraction(c) * zf**3 + 4 * Fraction(alpha) * zf * zf - Fraction(tau_sq))


def _polish_cubic(c, alpha, tau_sq, z):
    """Newton steps, then a walk over neighbouring floats to minimise the exact residual."""
    for _ in range(4):
        fz = _cubic_f_exact(c, alpha, tau_sq, z)
        slope = 12.0 * c * z * z + 8.0 * alpha * z
        if slope == 0 or fz == 0:
            break
        z_new = z - fz / slope
        if abs(_cubic_f_exact(c, alpha, tau_sq, z_new)) >= abs(fz):
            break
        z = z_new
    best = abs(_cubic_f_exact(c, alpha, tau_sq, z))
    for direction in (math.inf, -math.inf):
        # Newton leaves z within a few ulps; the cap stops long walks through subnormal plateaus
        for _ in range(64):
            if best == 0:
                break
            cand = math.nextafter(z, direction)
            r = abs(_cubic_f_exact(c, alpha, tau_sq, cand))
            if r >= best:
                break
            z, best = cand, r
    return z


def cubic_closed_form(c: float, alpha: float, tau_sq: float) -> np.ndarray:
    """Radical closed-form roots of the cubic in complex arithmetic.

    Uses the published radical expressions. Those expressions solve the
    cubic at half the stress argument, so they are evaluated at
    ``2 * tau_sq`` to represent ``4 zeta^2 (c zeta + alpha) = tau_sq``.
    Returns three complex values ``(z1, z2, z3)``; ``z1`` is the root that is
    real and positive whenever ``tau_sq > 0``.
    """
    t2 = 2.0 * tau_sq
    t = math.sqrt(t2)
    a = alpha
    psi = complex(
        -16 * a**3 + 27 * c * c * t2 + 3 * math.sqrt(3) * t * np.sqrt(complex(-32 * a**3 * c * c + 27 * c**4 * t2))
    ) ** (1.0 / 3.0)
    if psi == 0:
        raise DegenerateInput("closed form is singular at alpha = tau = 0")
    r3 = 1j * math.sqrt(3)
    z1 = -a / (3 * c) + 2 ** (4 / 3) * a * a / (3 * c * psi) + psi / (3 * 2 ** (4 / 3) * c)
    z2 = -a / (3 * c) - 2 ** (1 / 3) * a * a * (1 - r3) / (3 * c * psi) - (1 + r3) * psi / (12 * 2 ** (1 / 3) * c)
    z3 = -a / (3 * c) - 2 ** (1 / 3) * a * a * (1 + r3) / (3 * c * psi) - (1 - r3) * psi / (12 * 2 ** (1 / 3) * c)
    return np.array([z1, z2, z3])


def _near_double_pair(c, alpha, tau_sq, x, scale) -> bool:
    """Whether ``x`` sits where a complex pair with tiny imaginary part can live.

    Such pairs split off a double root of ``h(zeta) = h(z0)`` at a critical
    point ``z0`` of ``h`` (``0`` or ``zeta_c``); their distance from ``z0`` is
    about ``sqrt(|tau_sq - h(z0)| / |alpha|)``, so the radicals can report them
    as real although the cubic has no real root there.
    """
    if alpha == 0:
        return abs(x) <= 1e-7 * scale + (tau_sq / (4.0 * c)) ** (1.0 / 3.0)
    points = ((0.0, 0.0), (critical_zeta(c, alpha), multiplicity_criterion(c, alpha)))
    return any(
        abs(x - z0) <= 1e-7 * scale + math.sqrt(abs(tau_sq - h0) / abs(alpha)) for z0, h0 in points
    )


def _closed_form_check(c, alpha, tau_sq, zetas):
    if tau_sq == 0:
        return  # roots come from exact factoring
    try:
        cf = cubic_closed_form(c, alpha, tau_sq)
    except DegenerateInput:
        return  # psi underflowed; the radicals carry no information
    scale = max(1.0, abs(alpha) / c)
    zc = critical_zeta(c, alpha)
    eta = multiplicity_criterion(c, alpha)
    for z in cf:
        if abs(z.imag) > 1e-9 * scale:
            continue
        gap = np.min(np.abs(np.asarray(zetas) - z.real))
        tol = 1e-9 * scale
        if alpha != 0 and abs(z.real - zc) < 1e-3 * scale:
            # next to the double root the radicals lose about half the digits,
            # and the eta snap moves the pair by up to sqrt(|tau_sq - eta| / alpha)
            tol = 1e-7 * scale + math.sqrt(abs(tau_sq - eta) / abs(alpha))
        if gap > tol and not _near_double_pair(c, alpha, tau_sq, z.real, scale):
            raise SolveFailure(
                f"closed form root {z.real:.15g} disagrees with solver roots {list(zetas)} (gap {gap:.2e})"
            )


def solve_cubic_p2(c: float, alpha: float, tau_sq: float, check_closed_form: bool = True) -> DualRootSet:
    """All real roots of ``4 zeta^2 (c zeta + alpha) = tau_sq``.

    Three distinct real roots (``alpha > 0`` and ``0 < tau_sq < eta``) use the
    trigonometric method; otherwise the single real root comes from Cardano's
    formula. ``tau_sq`` within ``1e-12 * eta`` of ``eta`` is snapped to
    the double root at :func:`critical_zeta`. Every root gets Newton polish.

    Parameters
    ----------
    check_closed_form : bool
        Cross-check real roots against :func:`cubic_closed_form`.

    Raises
    ------
    DegenerateInput
        If ``c <= 0`` or ``tau_sq`` is negative or not finite.
    """
    if not c > 0:
        raise DegenerateInput(f"c must be positive, got {c}")
    if not (tau_sq >= 0 and math.isfinite(tau_sq)):
        raise DegenerateInput(f"tau_sq must be finite and >= 0, got {tau_sq}")
    eta = multiplicity_criterion(c, alpha)
    a = alpha / c
    mult: list[int]

    if tau_sq == 0:
        if alpha == 0:
            zs, mult, case = [0.0], [3], ZERO_STRESS
        else:
            zs, mult = [0.0, -a], [2, 1]
            case = ZERO_STRESS
    elif alpha > 0 and abs(tau_sq - eta) <= ETA_SNAP * eta:
        zc = critical_zeta(c, alpha)
        zs, mult, case = [a / 3.0, zc], [1, 2], BOUNDARY_ETA
    elif alpha > 0 and tau_sq < eta:
        # depressed cubic y^3 + P y + Q = 0 with zeta = y - a/3
        P = -a * a / 3.0
        Q = 2.0 * a**3 / 27.0 - tau_sq / (4.0 * c)
        r = 2.0 * math.sqrt(-P / 3.0)
        arg = min(1.0, max(-1.0, 3.0 * Q / (P * r)))
        phi = math.acos(arg) / 3.0
        trig = [r * math.cos(phi - 2.0 * math.pi * k / 3.0) - a / 3.0 for k in range(3)]
        # keep the largest-magnitude root and deflate; the two small roots
        # would otherwise suffer cancellation against a/3
        z_big = max(trig, key=abs)
        s_ = -a - z_big
        p_ = tau_sq / (4.0 * c) / z_big
        disc = max(s_ * s_ - 4.0 * p_, 0.0)
        x1 = 0.5 * (s_ + math.copysign(math.sqrt(disc), s_))
        if x1 != 0 and p_ != 0:
            zs = [z_big, x1, p_ / x1]
        else:
            # p_ underflowed: iterate z = +-sqrt(tau_sq/4) / sqrt(c z + alpha) for the small pair
            half = 0.5 * math.sqrt(tau_sq)
            pair = []
            for sgn in (1.0, -1.0):
                z = sgn * half / math.sqrt(alpha)
                for _ in range(30):
                    z = sgn * half / math.sqrt(c * z + alpha)
                pair.append(z)
            zs = [z_big] + pair
        mult, case = [1, 1, 1], TRIPLE
    else:
        P = -a * a / 3.0
        Q = 2.0 * a**3 / 27.0 - tau_sq / (4.0 * c)
        D = Q * Q / 4.0 + P**3 / 27.0
        A = -math.copysign(1.0, Q) * np.cbrt(abs(Q) / 2.0 + math.sqrt(max(D, 0.0)))
        y = A - P / (3.0 * A) if A != 0 else 0.0
        zs, mult, case = [y - a / 3.0], [1], UNIQUE

    zs = [_polish_cubic(c, alpha, tau_sq, z) if m_ == 1 else z for z, m_ in zip(zs, mult)]
    order = np.argsort(zs)[::-1]
    roots = tuple(
        Root(float(zs[k]), abs(_cubic_f_exact(c, alpha, tau_sq, zs[k])), _sign_class(zs[k]), mult[k])
        for k in order
    )
    bad = [
        r for r in roots
        if r.residual > residual_tolerance(tau_sq, r.zeta, 12 * c * r.zeta**2 + 8 * alpha * r.zeta)
    ]
    if bad:
        raise SolveFailure(f"cubic root residual {bad[0].residual:.3e} exceeds bound at tau_sq={tau_sq}")
    if check_closed_form:
        _closed_form_check(c, alpha, tau_sq, [r.zeta for r in roots])
    return DualRootSet(roots, float(tau_sq), case)


# -- general power law ------------------------------------------------------------

def _negative_branch_real(q: float) -> bool:
    try:
        signed_power(-1.0, q)
    except NonReal:
        return False
    return True


def _primal_consistent(m: PowerLaw, z: float) -> bool:
    try:
        xi = conjugate_gradient(m, z)
        back = canonical_dual_map(m, xi)
    except AntiplaneError:
        return False
    return bool(abs(back - z) <= 1e-8 * max(1.0, abs(z)))


def _scan_branch(f, fv, sign: float, lo: float, hi: float, n: int) -> list[float]:
    """Sign-change roots of ``f`` on ``sign * [lo, hi]`` over a log lattice.

    ``fv`` is the vectorized form of ``f`` used for the lattice.
    """
    mags = np.geomspace(lo, hi, n)
    vals = fv(sign * mags)
    roots = [sign * mags[k] for k in np.flatnonzero(vals == 0)]
    for k in np.flatnonzero(vals[:-1] * vals[1:] < 0):
        za, zb = sorted((sign * mags[k], sign * mags[k + 1]))
        roots.append(brentq(f, za, zb, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))
    return roots


def _power_scan(m: PowerLaw, tau_sq: float, n: int = SCAN_POINTS) -> list[tuple[float, int]]:
    c, alpha, q = m.c, m.alpha, m.q

    def fv(z):
        return _h_power(c, alpha, q, z) - tau_sq

    def f(z):
        return float(fv(z))

    scale = max(1.0, tau_sq, abs(alpha), c, 1.0 / c)
    lo, hi = 1e-15 / scale, 1e15 * scale
    out: list[tuple[float, int]] = []
    for sign in (1.0, -1.0):
        if sign < 0 and not _negative_branch_real(q):
            continue
        # h'(z) = 0  <=>  signed z^q = -2 alpha / (c (2 + q))
        crit = []
        if q != -2:
            R = -2.0 * alpha / (c * (2.0 + q))
            s_q = 1.0 if sign > 0 else float(signed_power(-1.0, q))
            if R * s_q > 0:
                crit.append((R * s_q) ** (1.0 / q))
        # split into monotone branches; n lattice points on each
        edges = [lo] + sorted(cv for cv in crit if lo < cv < hi) + [hi]
        for a, b in zip(edges[:-1], edges[1:]):
            out.extend((z, 1) for z in _scan_branch(f, fv, sign, a, b, n))
        # a tangential root touches zero at the critical point without a sign change
        for cv in crit:
            z = sign * cv
            near = any(abs(r - z) <= 1e-6 * max(1.0, abs(z)) for r, _ in out)
            if not near and abs(f(z)) <= _bound(tau_sq):
                out.append((z, 2))
    # polish and dedupe
    polished: list[tuple[float, int]] = []
    for z, mult in out:
        z = _polish_power(c, alpha, q, tau_sq, z)
        if all(abs(z - p) > 1e-12 * max(1.0, abs(z)) for p, _ in polished):
            polished.append((z, mult))
    return polished


def _polish_power(c, alpha, q, tau_sq, z):
    for _ in range(4):
        fz = float(_h_power(c, alpha, q, z) - tau_sq)
        slope = float(4.0 * c * (2.0 + q) * signed_power(z, 1.0 + q) + 8.0 * alpha * z)
        if slope == 0 or fz == 0:
            break
        z_new = z - fz / slope
        if z_new == 0 or np.sign(z_new) != np.sign(z):
            break
        if abs(float(_h_power(c, alpha, q, z_new) - tau_sq)) >= abs(fz):
            break
        z = z_new
    return z


def _power_tol(m: PowerLaw, z: float, tau_sq: float) -> float:
    if z == 0:
        return _bound(tau_sq)
    c, alpha, q = m.c, m.alpha, m.q
    lead = abs(4.0 * c * float(signed_power(z, 2.0 + q)))
    slope = float(4.0 * c * (2.0 + q) * signed_power(z, 1.0 + q) + 8.0 * alpha * z)
    return residual_tolerance(tau_sq, z, slope, lead + abs(4.0 * alpha * z * z))


def _build_set(m: PowerLaw, found: Sequence[tuple[float, int]], tau_sq: float, case: str | None = None) -> DualRootSet:
    found = sorted(found, key=lambda t: -t[0])
    roots = []
    for z, mult in found:
        res = abs(dual_residual(m, z, tau_sq)) if z != 0 else abs(tau_sq)
        roots.append(Root(float(z), float(res), _sign_class(z), mult, _primal_consistent(m, z)))
    bad = [r for r in roots if r.residual > _power_tol(m, r.zeta, tau_sq)]
    if bad:
        raise SolveFailure(f"root {bad[0].zeta:.6g} residual {bad[0].residual:.3e} exceeds bound")
    if case is None:
        case = UNIQUE if len(roots) == 1 else (NO_REAL_ROOT if not roots else MULTIPLE)
    return DualRootSet(tuple(roots), float(tau_sq), case)


def solve_powerlaw(m: PowerLaw, tau_sq: float, n_scan: int = SCAN_POINTS) -> DualRootSet:
    """All real roots of ``4 zeta^2 (c zeta^q + alpha) = tau_sq`` for a power-law model.

    ``p = 2`` delegates to :func:`solve_cubic_p2`, ``p = 1`` returns the
    constant ``mu/2`` and ``p = 1/2`` uses the rearrangement
    ``zeta^2 = (tau_sq - 4c) / (4 alpha)``. Other exponents scan a log
    lattice on each monotone branch of ``h`` and bisect sign changes.

    Raises
    ------
    NoRealRoot
        For ``p = 1/2`` outside the existence condition, and for any ``p``
        when no root is found.
    UnexpectedRoot
        For ``p < 1/2`` when the scan does find roots. The roots are
        attached to the exception.
    """
    if not (tau_sq >= 0 and math.isfinite(tau_sq)):
        raise DegenerateInput(f"tau_sq must be finite and >= 0, got {tau_sq}")
    p = m.p
    if p == 2:
        return solve_cubic_p2(m.c, m.alpha, tau_sq)
    if p == 1:
        return DualRootSet((Root(0.5 * m.mu, 0.0, "positive"),), float(tau_sq), UNIQUE)
    if p == 0.5:
        c, alpha = m.c, m.alpha
        num = tau_sq - 4.0 * c
        if alpha == 0:
            if num == 0:
                raise DegenerateInput("p = 1/2 with alpha = 0 and tau_sq = 4c: every zeta solves")
            raise NoRealRoot(f"p = 1/2 with alpha = 0 has no root unless tau_sq = {4 * c}")
        z2 = num / (4.0 * alpha)
        if z2 < 0:
            raise NoRealRoot(
                f"p = 1/2: tau_sq = {tau_sq} violates the existence condition "
                f"(tau_sq {'<=' if alpha < 0 else '>='} {4 * c})"
            )
        if z2 == 0:
            return DualRootSet((Root(0.0, 0.0, "zero", 2, False),), float(tau_sq), BOUNDARY_ETA)
        z = math.sqrt(z2)
        return _build_set(m, [(z, 1), (-z, 1)], tau_sq, MULTIPLE)
    found = _power_scan(m, tau_sq, n_scan)
    if tau_sq == 0 and (m.q > 0 or p < 0.5):
        found = [(z, k) for z, k in found if z != 0] + [(0.0, 2)]
        return _build_set(m, found, tau_sq, ZERO_STRESS)
    if p < 0.5:
        if found:
            zs = sorted((z for z, _ in found), reverse=True)
            raise UnexpectedRoot(
                f"p = {p} < 1/2: found {len(zs)} real root(s) {zs} although none were expected",
                roots=zs,
            )
        raise NoRealRoot(f"p = {p} < 1/2: no real root")
    if not found:
        raise NoRealRoot(f"no real root for p = {p}, tau_sq = {tau_sq}")
    return _build_set(m, found, tau_sq)


def solve_dual(m: MaterialModel, tau_sq: float, n_scan: int = SCAN_POINTS) -> DualRootSet:
    """Dispatch to the scalar solver for ``m``."""
    if isinstance(m, QuadExp):
        return _quadexp_set(m, tau_sq)
    return solve_powerlaw(m, tau_sq, n_scan)


# -- fields ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FieldRoots:
    """Root sets for every active node of a stress field."""

    tau: VectorField2
    tau_sq: np.ndarray
    sets: dict = field(repr=False)  # flat node id -> DualRootSet

    @property
    def grid(self):
        return self.tau.grid

    def at(self, i: int, j: int) -> DualRootSet:
        return self.sets[int(self.grid.node_id(i, j))]

    def n_roots(self) -> np.ndarray:
        g = self.grid
        out = np.zeros(g.n_nodes, dtype=int)
        for k, s in self.sets.items():
            out[k] = len(s)
        return g.unflat(out)

    def cases(self) -> np.ndarray:
        g = self.grid
        out = np.full(g.n_nodes, "", dtype=object)
        for k, s in self.sets.items():
            out[k] = s.case
        return g.unflat(out)

    def branch(self, k: int) -> ScalarField2:
        """Field of the ``k``-th largest root; every active node must have one."""
        g = self.grid
        out = np.zeros(g.n_nodes)
        for node, s in self.sets.items():
            if len(s) <= k:
                raise FieldError(f"node {node} has only {len(s)} root(s); branch {k} is not defined")
            out[node] = s.roots[k].zeta
        return ScalarField2(g, g.unflat(out))

    def to_json(self) -> list[dict]:
        g = self.grid
        xs, ys = g.flat(g.x), g.flat(g.y)
        return [
            {"x": float(xs[k]), "y": float(ys[k]), **s.to_json()}
            for k, s in sorted(self.sets.items())
        ]


def solve_field(
    m: MaterialModel, tau: VectorField2, threads: int | None = None, n_scan: int = SCAN_POINTS
) -> FieldRoots:
    """Apply :func:`solve_dual` at every active node of ``tau``.

    Nodes sharing the same ``|tau|^2`` are solved once. With ``threads > 1``
    distinct values are solved on a thread pool; results do not depend on
    the thread count.

    Raises
    ------
    NodeSolveError
        Listing ``(x, y, error)`` for every node whose solve failed.
    """
    g = tau.grid
    tsq = np.sum(tau.values**2, axis=-1)
    flat = g.flat(tsq)
    active = np.flatnonzero(g.flat(g.active))
    uniq, inverse = np.unique(flat[active], return_inverse=True)

    def one(t):
        try:
            return solve_dual(m, float(t), n_scan)
        except AntiplaneError as exc:
            return exc

    if threads and threads > 1 and len(uniq) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, uniq))
    else:
        results = [one(t) for t in uniq]

    sets, failures = {}, []
    xs, ys = g.flat(g.x), g.flat(g.y)
    for node, idx in zip(active, inverse.ravel()):
        r = results[idx]
        if isinstance(r, Exception):
            failures.append((float(xs[node]), float(ys[node]), r))
        else:
            sets[int(node)] = r
    if failures:
        raise NodeSolveError(failures)
    return FieldRoots(tau, tsq, sets)
