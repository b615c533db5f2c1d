"""Independent checks: direct energy minimization, a 1-D bar study and dense root scans.

Nothing here reuses the dual solver or the reconstruction. The 2-D energy is
discretized differently from :func:`antiplane.triality.potential_energy`:
every active cell contributes its four corner gradients (one-sided
differences along the two edges meeting at that corner), each weighted by a
quarter of the cell area. This is the average of the two P1 triangulations
of the cell, is exact for affine fields and has no zero-energy modes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import NoConvergence
from .fields import Grid2, ScalarField2, Traction
from .materials import MaterialModel, PowerLaw, canonical_dual_map, dual_map_slope, shear_stress, stored_energy

__all__ = [
    "LBFGSResult",
    "lbfgs",
    "corner_operators",
    "discrete_energy_and_gradient",
    "minimize",
    "MinimizeResult",
    "write_trace_csv",
    "bar_energy_and_gradient",
    "bar_hessian",
    "OneDReport",
    "oned_study",
    "modified_newton_bar",
    "multistart_bar",
    "dense_root_scan",
]


# -- generic L-BFGS -------------------------------------------------------------

@dataclass
class LBFGSResult:
    x: np.ndarray
    f: float
    grad_norm: float
    iterations: int
    converged: bool
    trace: list = field(default_factory=list)  # (iteration, energy, grad_norm)
    monotone: bool = True


def lbfgs(
    fun: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    *,
    norm: Callable[[np.ndarray], float] | None = None,
    precond: Callable[[np.ndarray], np.ndarray] | None = None,
    tol: float = 1e-8,
    max_iter: int = 5000,
    memory: int = 10,
    c1: float = 1e-4,
) -> LBFGSResult:
    """Limited-memory BFGS with Armijo backtracking.

    ``precond`` applies an approximate inverse Hessian used as the initial
    matrix of the two-loop recursion. Steps are accepted only with Armijo
    decrease, so the energy trace is non-increasing. Curvature pairs with
    ``s.y <= 0`` are dropped, which keeps the search direction a descent
    direction on nonconvex energies.
    """
    norm = norm or (lambda g: float(np.max(np.abs(g))) if g.size else 0.0)
    precond = precond or (lambda g: g)
    x = np.array(x0, dtype=float)
    f, g = fun(x)
    hist: list[tuple[np.ndarray, np.ndarray, float]] = []
    trace = [(0, f, norm(g))]
    monotone = True
    for it in range(1, max_iter + 1):
        gn = norm(g)
        if gn <= tol:
            return LBFGSResult(x, f, gn, it - 1, True, trace, monotone)
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s_, y_, rho in reversed(hist):
            a = rho * (s_ @ q)
            alphas.append(a)
            q -= a * y_
        r = precond(q)
        if hist:
            s_, y_, _ = hist[-1]
            Hy = precond(y_)
            r *= (s_ @ y_) / (y_ @ Hy)
        for (s_, y_, rho), a in zip(hist, reversed(alphas)):
            b = rho * (y_ @ r)
            r += (a - b) * s_
        d = -r
        slope = g @ d
        if not slope < 0:
            hist.clear()
            d = -precond(g)
            slope = g @ d
            if not slope < 0:
                d, slope = -g, -(g @ g)
        step = 1.0
        for _ in range(60):
            x_new = x + step * d
            try:
                f_new, g_new = fun(x_new)
            except (OverflowError, ValueError, ArithmeticError):
                f_new = math.inf
            if math.isfinite(f_new) and f_new <= f + c1 * step * slope:
                break
            step *= 0.5
        else:
            return LBFGSResult(x, f, gn, it - 1, False, trace, monotone)
        s_vec, y_vec = x_new - x, g_new - g
        if f_new > f:
            monotone = False
        x, f, g = x_new, f_new, g_new
        sy = s_vec @ y_vec
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            hist.append((s_vec, y_vec, 1.0 / sy))
            if len(hist) > memory:
                hist.pop(0)
        trace.append((it, f, norm(g)))
    gn = norm(g)
    return LBFGSResult(x, f, gn, max_iter, gn <= tol, trace, monotone)


# -- 2-D energy ------------------------------------------------------------------

_CORNER_CACHE: dict[int, tuple] = {}


def corner_operators(grid: Grid2) -> tuple[sp.csr_matrix, sp.csr_matrix, np.ndarray]:
    """Sparse corner-gradient operators ``(Gx, Gy)`` and their quadrature weights.

    Rows are (active cell, corner) pairs; columns are flat node ids.
    """
    key = id(grid)
    hit = _CORNER_CACHE.get(key)
    if hit is not None and hit[0] is grid:
        return hit[1]
    ci, cj = np.nonzero(grid.cell_active)
    nid = grid.node_id
    n00, n10, n01, n11 = nid(ci, cj), nid(ci + 1, cj), nid(ci, cj + 1), nid(ci + 1, cj + 1)
    hx, hy = grid.hx, grid.hy
    # corner: (x-edge nodes (a, b), y-edge nodes (a, b))
    corners = (
        ((n00, n10), (n00, n01)),
        ((n00, n10), (n10, n11)),
        ((n01, n11), (n00, n01)),
        ((n01, n11), (n10, n11)),
    )
    nc = ci.size
    rows = np.arange(4 * nc)
    gx_r, gx_c, gx_v, gy_r, gy_c, gy_v = [], [], [], [], [], []
    for k, ((xa, xb), (ya, yb)) in enumerate(corners):
        r = rows[k * nc:(k + 1) * nc]
        gx_r += [r, r]
        gx_c += [xa, xb]
        gx_v += [np.full(nc, -1.0 / hx), np.full(nc, 1.0 / hx)]
        gy_r += [r, r]
        gy_c += [ya, yb]
        gy_v += [np.full(nc, -1.0 / hy), np.full(nc, 1.0 / hy)]
    shape = (4 * nc, grid.n_nodes)
    Gx = sp.csr_matrix((np.concatenate(gx_v), (np.concatenate(gx_r), np.concatenate(gx_c))), shape=shape)
    Gy = sp.csr_matrix((np.concatenate(gy_v), (np.concatenate(gy_r), np.concatenate(gy_c))), shape=shape)
    w = np.full(4 * nc, 0.25 * hx * hy)
    _CORNER_CACHE.clear()
    _CORNER_CACHE[key] = (grid, (Gx, Gy, w))
    return Gx, Gy, w


def _energy_flat(m, grid, load, uf):
    Gx, Gy, w = corner_operators(grid)
    gam = np.stack([Gx @ uf, Gy @ uf], axis=-1)
    e = float(np.sum(w * stored_energy(m, gam))) - float(load @ uf)
    tau = shear_stress(m, gam)
    grad = Gx.T @ (w * tau[:, 0]) + Gy.T @ (w * tau[:, 1]) - load
    return e, grad


def discrete_energy_and_gradient(m: MaterialModel, u: ScalarField2, traction: Traction) -> tuple[float, ScalarField2]:
    """Discrete potential energy and its exact gradient with respect to nodal values.

    ``u`` is projected onto the displacement boundary condition first (its
    values there are set to zero); the returned gradient vanishes on those
    nodes.
    """
    g = u.grid
    free = g.flat(g.active & ~g.dirichlet)
    uf = np.where(free, g.flat(u.values), 0.0)
    load = g.flat(g.boundary_load(traction))
    e, grad = _energy_flat(m, g, load, uf)
    return e, ScalarField2(g, g.unflat(np.where(free, grad, 0.0)))


@dataclass
class MinimizeResult:
    u: ScalarField2
    energy: float
    grad_norm: float
    iterations: int
    converged: bool
    trace: list
    monotone: bool

    def report(self) -> dict:
        return {
            "energy": self.energy,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "monotone": self.monotone,
        }


def minimize(
    m: MaterialModel,
    u0: ScalarField2,
    traction: Traction,
    tol: float = 1e-9,
    max_iter: int = 5000,
    precondition: bool = True,
    raise_on_failure: bool = True,
) -> MinimizeResult:
    """Minimize the discrete potential energy by preconditioned L-BFGS.

    The stopping test uses ``max |dE/du_k| / w_k`` over free nodes, a
    discrete Euler-Lagrange residual independent of the mesh size. The
    preconditioner is a sparse LU of the corner-gradient Laplacian.

    Raises
    ------
    NoConvergence
        If the tolerance is not met and ``raise_on_failure`` is set.
    """
    g = u0.grid
    free = g.flat(g.active & ~g.dirichlet)
    idx = np.flatnonzero(free)
    load = g.flat(g.boundary_load(traction))
    wts = g.flat(g.weights)[idx]
    base = np.zeros(g.n_nodes)

    def fun(x):
        base[idx] = x
        e, grad = _energy_flat(m, g, load, base)
        return e, grad[idx]

    precond = None
    if precondition:
        Gx, Gy, w = corner_operators(g)
        W = sp.diags(w)
        K = (Gx.T @ W @ Gx + Gy.T @ W @ Gy).tocsr()[idx][:, idx].tocsc()
        lu = spla.splu(K)
        precond = lu.solve

    res = lbfgs(
        fun,
        g.flat(u0.values)[idx],
        norm=lambda gr: float(np.max(np.abs(gr) / wts)) if gr.size else 0.0,
        precond=precond,
        tol=tol,
        max_iter=max_iter,
    )
    out = np.zeros(g.n_nodes)
    out[idx] = res.x
    result = MinimizeResult(
        ScalarField2(g, g.unflat(out)), res.f, res.grad_norm, res.iterations, res.converged, res.trace, res.monotone
    )
    if raise_on_failure and not res.converged:
        raise NoConvergence(
            f"minimize stopped after {res.iterations} iterations with residual {res.grad_norm:.3e} > {tol:.1e}",
            report=result.report(),
        )
    return result


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "energy", "gradnorm"])
        for row in trace:
            w.writerow([row[0], repr(float(row[1])), repr(float(row[2]))])


# -- 1-D bar ----------------------------------------------------------------------

def _w1(m, gamma):
    gam = np.stack([gamma, np.zeros_like(gamma)], axis=-1)
    return stored_energy(m, gam), shear_stress(m, gam)[..., 0]


def _w1_second(m, gamma):
    s = m.strain_scale
    xi = s * gamma**2
    return 2 * s * canonical_dual_map(m, xi) + 4 * s * s * gamma**2 * dual_map_slope(m, xi)


def bar_energy_and_gradient(m: MaterialModel, u: np.ndarray, length: float, t_end: float):
    """Energy ``sum_e h W(u') - t u(L)`` of a bar with ``u[0] = 0`` and its gradient.

    ``u`` holds the free nodal values ``u[1:]``.
    """
    n = u.size
    h = length / n
    full = np.concatenate([[0.0], u])
    gam = np.diff(full) / h
    w, tau = _w1(m, np.asarray(gam))
    e = float(h * np.sum(w)) - t_end * full[-1]
    grad_full = np.zeros(n + 1)
    grad_full[:-1] -= tau
    grad_full[1:] += tau
    grad = grad_full[1:]
    grad[-1] -= t_end
    return e, grad


def bar_hessian(m: MaterialModel, u: np.ndarray, length: float) -> np.ndarray:
    """Dense Hessian ``D^T diag(W''(u') / h) D`` over the free nodes."""
    n = u.size
    h = length / n
    full = np.concatenate([[0.0], u])
    gam = np.diff(full) / h
    k = np.asarray(_w1_second(m, gam), dtype=float) / h
    H = np.zeros((n + 1, n + 1))
    e = np.arange(n)
    H[e, e] += k
    H[e + 1, e + 1] += k
    H[e, e + 1] -= k
    H[e + 1, e] -= k
    return H[1:, 1:]


@dataclass
class OneDReport:
    tau_sq: float
    eta: float
    zetas: list
    energies: list
    hessian_min: list
    hessian_max: list
    violations: list
    max_dir_increase: float | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return dict(self.__dict__)


def _oracle_cubic_roots(c, alpha, t_sq):
    return dense_root_scan("cubic", {"c": c, "alpha": alpha}, t_sq)


def oned_study(
    m: PowerLaw, length: float, t_end: float, n_nodes: int = 200, n_dirs: int = 64, seed: int = 0
) -> OneDReport:
    """Three-solution study of the ``p = 2`` bar with end traction ``t_end``.

    Roots come from :func:`dense_root_scan`; each yields ``u_i = x t / (2 s zeta_i)``.
    Checks recorded as violations (never raised): energy ordering of the
    first two roots, Hessian semidefiniteness at the first two, a negative
    Hessian eigenvalue at the third, and that random directions decrease the
    energy away from the third. For ``t_end = 0`` the trivial state
    ``u = 0`` is also checked for a negative Hessian direction.
    """
    if not (isinstance(m, PowerLaw) and m.p == 2):
        raise ValueError("oned_study needs the p = 2 power law")
    s = m.strain_scale
    c, alpha = m.c, m.alpha
    t_sq = t_end * t_end
    eta = 16 * alpha**3 / (27 * c * c)
    zetas = [z for z in _oracle_cubic_roots(c, alpha, t_sq) if z != 0]
    n = n_nodes - 1
    x = np.linspace(0.0, length, n_nodes)[1:]
    energies, hmin, hmax, viol = [], [], [], []
    fields = []
    for z in zetas:
        u = x * t_end / (2 * s * z)
        fields.append(u)
        e, _ = bar_energy_and_gradient(m, u, length, t_end)
        ev = np.linalg.eigvalsh(bar_hessian(m, u, length))
        energies.append(e)
        hmin.append(float(ev[0]))
        hmax.append(float(ev[-1]))
    tol = 1e-9 * max(1.0, max((abs(v) for v in hmax), default=1.0))
    max_inc = None
    if t_end == 0:
        ev = np.linalg.eigvalsh(bar_hessian(m, np.zeros(n), length))
        if not ev[0] < 0:
            viol.append(f"t=0: Hessian at u=0 has no negative direction (min eig {ev[0]:.3e})")
    elif len(zetas) == 3:
        if not energies[0] < energies[1]:
            viol.append(f"Pi(u1)={energies[0]!r} is not below Pi(u2)={energies[1]!r}")
        for k in (0, 1):
            if hmin[k] < -tol:
                viol.append(f"Hessian at u{k + 1} has negative eigenvalue {hmin[k]:.3e}")
        if not hmin[2] < -tol:
            viol.append(f"Hessian at u3 has no negative eigenvalue (min {hmin[2]:.3e})")
        rng = np.random.default_rng(seed)
        e3 = energies[2]
        u3 = fields[2]
        eps = 1e-4 * max(1.0, float(np.max(np.abs(u3))))
        incs = []
        for _ in range(n_dirs):
            d = rng.standard_normal(n)
            d *= eps / np.max(np.abs(d))
            incs.append(bar_energy_and_gradient(m, u3 + d, length, t_end)[0] - e3)
        max_inc = float(max(incs))
        if max_inc >= 0:
            viol.append(f"a random direction at u3 does not decrease the energy (max change {max_inc:.3e})")
    elif len(zetas) == 1:
        if hmin[0] < -tol:
            viol.append(f"single solution has negative Hessian eigenvalue {hmin[0]:.3e}")
    else:
        viol.append(f"unexpected root count {len(zetas)} at t^2={t_sq!r}, eta={eta!r}")
    return OneDReport(t_sq, eta, zetas, energies, hmin, hmax, viol, max_inc)


def modified_newton_bar(
    m: MaterialModel, u0: np.ndarray, length: float, t_end: float, tol: float = 1e-10, max_iter: int = 500
) -> LBFGSResult:
    """Newton descent on the bar energy with element curvatures floored to stay positive.

    Element strains are independent, so this is a per-element modified Newton
    iteration in disguise; Armijo backtracking makes every step a decrease.
    """
    n = u0.size
    h = length / n
    u = np.array(u0, dtype=float)
    f, g = bar_energy_and_gradient(m, u, length, t_end)
    trace = [(0, f, float(np.max(np.abs(g))))]
    for it in range(1, max_iter + 1):
        gn = float(np.max(np.abs(g)))
        if gn <= tol:
            return LBFGSResult(u, f, gn, it - 1, True, trace)
        gam = np.diff(np.concatenate([[0.0], u])) / h
        k = np.asarray(_w1_second(m, gam), dtype=float)
        k = np.maximum(np.abs(k), 1e-8 * max(1.0, float(np.max(np.abs(k))))) / h
        main = k.copy()
        main[:-1] += k[1:]
        H = sp.diags([main, -k[1:], -k[1:]], [0, 1, -1], format="csc")
        d = -spla.spsolve(H, g)
        slope = float(g @ d)
        step = 1.0
        for _ in range(60):
            f_new, g_new = bar_energy_and_gradient(m, u + step * d, length, t_end)
            if f_new <= f + 1e-4 * step * slope:
                break
            step *= 0.5
        else:
            return LBFGSResult(u, f, gn, it - 1, False, trace)
        u, f, g = u + step * d, f_new, g_new
        trace.append((it, f, float(np.max(np.abs(g)))))
    gn = float(np.max(np.abs(g)))
    return LBFGSResult(u, f, gn, max_iter, gn <= tol, trace)


def multistart_bar(
    m: PowerLaw,
    length: float,
    t_end: float,
    n_nodes: int = 200,
    seeds: int = 8,
    amplitude: float = 0.1,
    seed: int = 0,
    tol: float = 1e-10,
) -> dict:
    """Descent from ``u1`` plus random perturbations (amplitude relative to ``|u1|_inf``).

    Returns the reference energy ``Pi(u1)``, the energies reached from each
    start and the lowest of them.
    """
    s = m.strain_scale
    z1 = max(_oracle_cubic_roots(m.c, m.alpha, t_end * t_end))
    x = np.linspace(0.0, length, n_nodes)[1:]
    u1 = x * t_end / (2 * s * z1)
    e1 = bar_energy_and_gradient(m, u1, length, t_end)[0]
    n = n_nodes - 1
    h = length / n
    rng = np.random.default_rng(seed)
    scale = amplitude * float(np.max(np.abs(u1)))
    found = []
    for _ in range(seeds):
        u0 = u1 + scale * rng.standard_normal(n)
        r = modified_newton_bar(m, u0, length, t_end, tol=tol)
        found.append(r.f)
    return {"reference": e1, "energies": found, "lowest": min(found)}


# -- dense root scan ------------------------------------------------------------------

def _real_pow(z, q):
    """Real ``z**q`` with the odd-denominator branch for negative ``z``; NaN if none."""
    z = np.asarray(z, dtype=float)
    out = np.full(z.shape, np.nan)
    pos = z > 0
    out[pos] = z[pos] ** q
    zero = z == 0
    if q > 0:
        out[zero] = 0.0
    neg = z < 0
    if neg.any():
        fr = Fraction(q).limit_denominator(1000)
        if abs(float(fr) - q) < 1e-12 and fr.denominator % 2 == 1:
            out[neg] = (-1.0) ** (fr.numerator % 2) * (-z[neg]) ** q
    return out


def _h_oracle(kind: str, params: dict, z):
    z = np.asarray(z, dtype=float)
    if kind == "quadexp":
        mu, nu = params["mu"], params["nu"]
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(z > mu, 2 * z * z * np.log((z - mu) / nu), np.nan)
    if kind == "cubic":
        return 4 * z * z * (params["c"] * z + params["alpha"])
    if kind == "power":
        p = params["p"]
        q = 1.0 / (p - 1.0)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return 4 * z * z * (params["c"] * _real_pow(z, q) + params["alpha"])
    raise ValueError(f"unknown equation kind {kind!r}")


def _bisect(f, a, b, fa):
    for _ in range(2000):
        mid = 0.5 * (a + b)
        if mid == a or mid == b:
            break
        fm = f(mid)
        if fm == 0:
            return mid
        if (fm < 0) == (fa < 0):
            a, fa = mid, fm
        else:
            b = mid
    return 0.5 * (a + b)


def dense_root_scan(kind: str, params: dict, tau_sq: float, n: int = 100_000, z_max: float | None = None) -> list[float]:
    """All sign-change roots of ``h(zeta) = tau_sq`` on a dense symmetric log lattice.

    ``kind`` is ``"quadexp"`` (params ``mu``, ``nu``), ``"cubic"`` (``c``,
    ``alpha``) or ``"power"`` (``c``, ``alpha``, ``p``). The lattice spans
    ``+-[z_max * 1e-12, z_max]`` plus zero; ``z_max`` doubles until ``|h|``
    exceeds ``tau_sq`` at both ends (or stops growing). Tangential roots
    without a sign change are missed, except exactly at lattice points.
    Returns roots in descending order.
    """
    def f(z):
        return float(_h_oracle(kind, params, np.array(z))) - tau_sq

    scale = max([1.0, tau_sq] + [abs(float(v)) for v in params.values()])
    z_hi = z_max or 10.0 * scale
    if z_max is None:
        for _ in range(200):
            ends = _h_oracle(kind, params, np.array([z_hi, -z_hi]))
            finite = ends[np.isfinite(ends)]
            if finite.size and np.all(np.abs(finite) > 2 * tau_sq + 1):
                break
            z_hi *= 2.0
    half = np.geomspace(z_hi * 1e-12, z_hi, n // 2)
    lattice = np.concatenate([-half[::-1], [0.0], half])
    if kind == "quadexp":
        mu = params["mu"]
        lattice = np.concatenate([mu + np.geomspace(1e-14 * scale, z_hi, n), lattice[lattice > mu]])
        lattice = np.unique(lattice)
    vals = _h_oracle(kind, params, lattice) - tau_sq
    roots = [float(z) for z, v in zip(lattice, vals) if v == 0]
    ok = np.isfinite(vals[:-1]) & np.isfinite(vals[1:])
    for k in np.flatnonzero(ok & (vals[:-1] * vals[1:] < 0)):
        roots.append(_bisect(f, lattice[k], lattice[k + 1], vals[k]))
    return sorted(set(roots), reverse=True)
