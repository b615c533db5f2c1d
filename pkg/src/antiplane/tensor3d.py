"""Pointwise canonical dual tensor equation for the St Venant-Kirchhoff material.

With ``V(E) = mu tr(E^2) + lam/2 (tr E)^2`` the dual equation for the
second Piola-Kirchhoff-type stress ``T`` reads

    T^2 + T^3 / mu - kappa (tr T) T^2 = C,    kappa = lam / (mu (3 lam + 2 mu)),

where ``C = tau^T tau``. Only roots coaxial with ``C`` are sought: with
``C = Q diag(c) Q^T`` and ``T = Q diag(t) Q^T`` the equation decouples into

    t_i^2 + t_i^3 / mu - kappa S t_i^2 = c_i,    S = t_1 + t_2 + t_3.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, EigenFailure, SingularRoot

__all__ = [
    "LameParams",
    "TensorRoot",
    "as_sym3",
    "svk_energy",
    "svk_stress",
    "svk_conjugate",
    "svk_conjugate_gradient",
    "tensor_residual",
    "solve_tensor_dual",
    "classify_tensor_root",
    "gap_3d",
    "deformation_gradient_from_root",
]

POSITIVE_DEFINITE = "PositiveDefinite"
NEGATIVE_DEFINITE = "NegativeDefinite"
INDEFINITE = "Indefinite"
SINGULAR = "Singular"


@dataclass(frozen=True)
class LameParams:
    """Lame constants. ``lam = 0`` is accepted and flagged by :attr:`lam_positive`."""

    mu: float
    lam: float

    def __post_init__(self):
        if not (self.mu > 0 and math.isfinite(self.mu)):
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise ConfigError(f"lam must be non-negative, got {self.lam}")

    @property
    def lam_positive(self) -> bool:
        return self.lam > 0

    @property
    def kappa(self) -> float:
        return self.lam / (self.mu * (3 * self.lam + 2 * self.mu))


def as_sym3(a, tol: float = 1e-12) -> np.ndarray:
    """Validate a symmetric 3x3 array and return its exactly symmetrized copy."""
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 tensor, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("tensor has non-finite entries")
    if np.max(np.abs(a - a.T)) > tol * max(1.0, float(np.max(np.abs(a)))):
        raise ValueError("tensor is not symmetric")
    return 0.5 * (a + a.T)


def svk_energy(E, lame: LameParams) -> float:
    E = as_sym3(E)
    tr = np.trace(E)
    return float(lame.mu * np.sum(E * E) + 0.5 * lame.lam * tr * tr)


def svk_stress(E, lame: LameParams) -> np.ndarray:
    """``dV/dE = 2 mu E + lam tr(E) I``."""
    E = as_sym3(E)
    return 2 * lame.mu * E + lame.lam * np.trace(E) * np.eye(3)


def svk_conjugate(T, lame: LameParams) -> float:
    """``V*(T) = tr(T^2)/(4 mu) - lam/(4 mu (3 lam + 2 mu)) (tr T)^2``."""
    T = as_sym3(T)
    tr = np.trace(T)
    return float(np.sum(T * T) / (4 * lame.mu) - 0.25 * lame.kappa * tr * tr)


def svk_conjugate_gradient(T, lame: LameParams) -> np.ndarray:
    """``dV*/dT = T/(2 mu) - kappa/2 tr(T) I``."""
    T = as_sym3(T)
    return T / (2 * lame.mu) - 0.5 * lame.kappa * np.trace(T) * np.eye(3)


def tensor_residual(T, C, lame: LameParams) -> float:
    """Max-norm residual of ``T^2 + T^3/mu - kappa tr(T) T^2 - C``."""
    T2 = T @ T
    R = T2 + T2 @ T / lame.mu - lame.kappa * np.trace(T) * T2 - C
    return float(np.max(np.abs(R)))


@dataclass(frozen=True)
class TensorRoot:
    """A coaxial root ``T = Q diag(t) Q^T``."""

    T: np.ndarray
    t: tuple[float, float, float]
    classification: str
    residual: float

    def to_json(self) -> dict:
        return {
            "T": self.T.tolist(),
            "eigenvalues": list(self.t),
            "classification": self.classification,
            "residual": self.residual,
        }


def _cubic_real_roots(a: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Real roots of ``t^3 + a t^2 - d = 0`` for arrays ``a``, ``d``; descending, NaN padded.

    Trigonometric form when all three roots are real, Cardano otherwise,
    followed by one Newton step per root.
    """
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    p = -a * a / 3.0
    q = 2.0 * a**3 / 27.0 - d
    disc = -(4.0 * p**3 + 27.0 * q * q)
    out = np.full(a.shape + (3,), np.nan)
    three = disc >= -1e-10 * (4.0 * np.abs(p) ** 3 + 27.0 * q * q)
    with np.errstate(invalid="ignore", divide="ignore"):
        m = 2.0 * np.sqrt(np.where(three, -p / 3.0, 0.0))
        arg = np.clip(np.where(three, 3.0 * q / (p * m + (m == 0)), 0.0), -1.0, 1.0)
        th = np.arccos(arg) / 3.0
        for k in range(3):
            out[..., k] = np.where(three, m * np.cos(th - 2.0 * np.pi * k / 3.0) - a / 3.0, np.nan)
        sq = np.sqrt(np.where(three, 0.0, q * q / 4.0 + p**3 / 27.0))
        one = np.cbrt(-q / 2.0 + sq) + np.cbrt(-q / 2.0 - sq) - a / 3.0
        out[..., 0] = np.where(three, out[..., 0], one)
        f = out**3 + a[..., None] * out**2 - d[..., None]
        fp = 3.0 * out**2 + 2.0 * a[..., None] * out
        out = np.where(fp != 0, out - f / np.where(fp != 0, fp, 1.0), out)
    return -np.sort(-out, axis=-1)  # NaN sorts last


def _system(t, c, mu, kappa):
    S = t.sum(axis=1, keepdims=True)
    return t * t + t**3 / mu - kappa * S * t * t - c


def _newton_batch(t0, c, mu, kappa, tol, max_iter=60, max_halvings=12):
    """Damped Newton on the coupled eigenvalue system for a batch of starts ``(n, 3)``.

    A start whose step cannot reduce the residual is frozen where it is; the
    caller decides from the residual whether it is a root.
    """
    t = np.array(t0, dtype=float)
    active = np.arange(t.shape[0])
    idx = np.arange(3)
    with np.errstate(all="ignore"):
        for _ in range(max_iter):
            tl = t[active]
            Fl = _system(tl, c, mu, kappa)
            rl = np.abs(Fl).max(axis=1)
            keep = np.isfinite(rl) & (rl > tol)
            active, tl, Fl, rl = active[keep], tl[keep], Fl[keep], rl[keep]
            if active.size == 0:
                break
            S = tl.sum(axis=1, keepdims=True)
            J = np.empty((tl.shape[0], 3, 3))
            J[:] = -kappa * (tl * tl)[:, :, None]
            J[:, idx, idx] += 2 * tl + 3 * tl * tl / mu - 2 * kappa * S * tl
            ok = np.isfinite(J).all(axis=(1, 2)) & (np.abs(np.linalg.det(J)) > 1e-300)
            dt = np.zeros_like(tl)
            if ok.any():
                dt[ok] = np.linalg.solve(J[ok], -Fl[ok][:, :, None])[:, :, 0]
            new = tl.copy()
            pending = np.flatnonzero(ok)
            step = 1.0
            for _ in range(max_halvings):
                trial = tl[pending] + step * dt[pending]
                good = np.abs(_system(trial, c, mu, kappa)).max(axis=1) < rl[pending]
                new[pending[good]] = trial[good]
                pending = pending[~good]
                if pending.size == 0:
                    break
                step *= 0.5
            t[active] = new
            # starts that made no progress are frozen where they are
            active = active[~(new == tl).all(axis=1)]
    return t


def _s_scan(c, mu, kappa, n_scan):
    """Candidate eigenvalue triples from sign changes of ``sum t_i(S) - S``."""
    cmax = float(np.max(np.abs(c)))
    s_max = 50.0 * max(1.0, mu, math.sqrt(cmax), (mu * cmax) ** (1 / 3))
    S = np.linspace(-s_max, s_max, n_scan)
    if kappa == 0:
        S = np.array([0.0, 1.0])
    roots = [_cubic_real_roots(mu * (1 - kappa * S), mu * np.full_like(S, ci)) for ci in c]
    out = []
    for combo in itertools.product(range(3), repeat=3):
        tri = np.stack([roots[i][:, k] for i, k in enumerate(combo)], axis=1)
        if kappa == 0:
            row = tri[0]
            if np.all(np.isfinite(row)):
                out.append(row)
            continue
        g = tri.sum(axis=1) - S
        ok = np.isfinite(g[:-1]) & np.isfinite(g[1:])
        # linear interpolation inside each bracket; Newton polishes afterwards
        for k in np.flatnonzero(ok & (g[:-1] * g[1:] <= 0)):
            w = 0.0 if g[k] == g[k + 1] else g[k] / (g[k] - g[k + 1])
            out.append((1 - w) * tri[k] + w * tri[k + 1])
    return out


def _start_lattice(c, lame):
    """Sign-pattern Newton starts, nudged by 1e-8 so repeated eigenvalues do not coincide."""
    mu, lam = lame.mu, lame.lam
    per_axis = []
    for k, ci in enumerate(c):
        rc = math.sqrt(ci)
        nudge = 1e-8 * (k + 1)
        per_axis.append([rc + nudge, -0.5 * rc - nudge, -mu * (1 + rc) - nudge, -(3 * lam + 2 * mu) / 2 - nudge])
    return [np.array(s) for s in itertools.product(*per_axis)]


def solve_tensor_dual(tauTtau, lame: LameParams, n_scan: int = 801, tau=None) -> list[TensorRoot]:
    """Coaxial roots of the SVK dual tensor equation for ``C = tau^T tau``.

    Candidates come from a scan over ``S = tr T`` (each ``t_i`` is then a root
    of a scalar cubic, giving 27 branch combinations) and from Newton runs on
    a lattice of sign-pattern starts. All candidates are polished by Newton's
    method on the coupled system, deduplicated at ``1e-7 * max(1, |C|)`` and
    kept only if the tensor residual is at most ``1e-10 * max(1, |C|)``.

    Parameters
    ----------
    tauTtau : array_like, shape (3, 3)
        ``C = tau^T tau``; may be ``None`` when ``tau`` is given.
    tau : array_like, shape (3, 3), optional
        The stress itself. When given, the principal axes come from its SVD,
        which resolves small eigenvalues of ``C`` to relative rather than
        absolute accuracy.

    Raises
    ------
    EigenFailure
        If ``C`` is not symmetric positive semidefinite or its
        eigendecomposition fails.
    """
    try:
        if tau is not None:
            tau = np.asarray(tau, dtype=float)
            if tau.shape != (3, 3) or not np.all(np.isfinite(tau)):
                raise EigenFailure("tau must be a finite 3x3 array")
            _, sv, Vt = np.linalg.svd(tau)
            c, Q = (sv**2)[::-1], Vt[::-1].T
            C = tau.T @ tau
        else:
            C = as_sym3(tauTtau)
            c, Q = np.linalg.eigh(C)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigendecomposition failed: {exc}") from exc
    normC = max(1.0, float(np.max(np.abs(C))))
    if c[0] < -1e-12 * normC:
        raise EigenFailure(f"tau^T tau must be positive semidefinite (min eigenvalue {c[0]:.3e})")
    c = np.maximum(c, 0.0)
    mu, kappa = lame.mu, lame.kappa
    tol = 1e-10 * normC
    ntol = 1e-13 * normC

    cands = _s_scan(c, mu, kappa, n_scan) + _start_lattice(c, lame)
    polished = _newton_batch(np.array(cands), c, mu, kappa, ntol)
    polished = polished[np.all(np.isfinite(polished), axis=1)]
    # cheap screen on the eigenvalue system before forming tensors
    with np.errstate(all="ignore"):
        sys_res = np.max(np.abs(_system(polished, c, mu, kappa)), axis=1)
    polished = polished[sys_res <= 10 * tol]
    found: list[np.ndarray] = []
    for t in polished[np.argsort(sys_res[sys_res <= 10 * tol])]:
        if any(np.max(np.abs(t - f)) <= 1e-7 * normC for f in found):
            continue
        if tensor_residual((Q * t) @ Q.T, C, lame) > tol:
            continue
        found.append(t)
    roots = []
    for t in sorted(found, key=lambda v: tuple(-v)):
        T = (Q * t) @ Q.T
        T = 0.5 * (T + T.T)
        roots.append(TensorRoot(T, tuple(float(v) for v in t), classify_tensor_root(T), tensor_residual(T, C, lame)))
    return roots


def classify_tensor_root(T) -> str:
    """Definiteness by eigenvalue signs with tolerance ``1e-10 * |T|``.

    Eigenvalues within the tolerance of zero give ``Singular``.
    """
    T = as_sym3(T)
    ev = np.linalg.eigvalsh(T)
    tol = 1e-10 * max(float(np.max(np.abs(ev))), np.finfo(float).tiny)
    if np.any(np.abs(ev) <= tol):
        return SINGULAR
    if np.all(ev > 0):
        return POSITIVE_DEFINITE
    if np.all(ev < 0):
        return NEGATIVE_DEFINITE
    return INDEFINITE


def gap_3d(F, T) -> float:
    """Pointwise gap density ``tr(F^T T F) / 2``."""
    F = np.asarray(F, dtype=float)
    return float(0.5 * np.trace(F.T @ as_sym3(T) @ F))


def deformation_gradient_from_root(tau, T) -> np.ndarray:
    """``F = tau T^{-1}``; then ``F^T F = 2 dV*/dT + I`` for a root ``T``.

    Raises
    ------
    SingularRoot
        If ``|det T| < 1e-12 * |T|^3``.
    """
    T = as_sym3(T)
    scale = float(np.max(np.abs(T)))
    if scale == 0 or abs(np.linalg.det(T)) < 1e-12 * scale**3:
        raise SingularRoot("root tensor is singular")
    return np.linalg.solve(T.T, np.asarray(tau, dtype=float).T).T
