"""Displacement reconstruction by path integration of ``tau / (2 s zeta)``.

Paths run along grid lines from a base node on the displacement boundary.
Every node gets a parent one grid step closer to the base, so the paths form
a tree and ``u`` is accumulated level by level with the trapezoidal rule on
each segment. This is exact for constant integrands.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import DivisionNearZero, FieldError, IncompatibleField
from .fields import Grid2, ScalarField2, VectorField2, curl2, gradient

__all__ = [
    "ROUTINGS",
    "PathSpec",
    "CompatibilityReport",
    "compatibility_residual",
    "compatibility_check",
    "integrand",
    "reconstruct",
    "path_independence_check",
]

ROUTINGS = ("x-then-y", "y-then-x", "staircase")
ZETA_FLOOR = 1e-12
GATE_RTOL = 1e-6


@dataclass(frozen=True)
class PathSpec:
    """Integration paths: base node ``(i, j)`` and routing rule.

    ``base=None`` picks the first displacement-boundary node in serialized
    order.
    """

    base: tuple[int, int] | None = None
    routing: str = "x-then-y"

    def __post_init__(self):
        if self.routing not in ROUTINGS:
            raise FieldError(f"unknown routing {self.routing!r}; expected one of {ROUTINGS}")

    def resolve_base(self, grid: Grid2) -> tuple[int, int]:
        if self.base is None:
            k = int(np.flatnonzero(grid.flat(grid.dirichlet))[0])
            return (k % (grid.nx + 1), k // (grid.nx + 1))
        i, j = (int(v) for v in self.base)
        if not (0 <= i <= grid.nx and 0 <= j <= grid.ny) or not grid.dirichlet[i, j]:
            raise FieldError(f"base node {(i, j)} is not on the displacement boundary")
        return (i, j)


def _guard(tau: VectorField2, zeta: ScalarField2):
    if tau.grid is not zeta.grid:
        raise FieldError("tau and zeta live on different grids")
    g = tau.grid
    bad = g.active & (np.abs(zeta.values) < ZETA_FLOOR) & np.any(tau.values != 0, axis=-1)
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise DivisionNearZero(
            f"|zeta| < {ZETA_FLOOR} where tau != 0 (first at x={g.x[i, j]:.6g}, y={g.y[i, j]:.6g})"
        )


def integrand(tau: VectorField2, zeta: ScalarField2, s: float) -> VectorField2:
    """``tau / (2 s zeta)``, set to zero where ``tau`` vanishes."""
    _guard(tau, zeta)
    z = zeta.values[..., None]
    zero = np.all(tau.values == 0, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(zero, 0.0, tau.values / (2.0 * s * np.where(z == 0, 1.0, z)))
    return VectorField2(tau.grid, v)


def compatibility_residual(tau: VectorField2, zeta: ScalarField2) -> tuple[ScalarField2, ScalarField2]:
    """Pointwise ``tau1 dzeta/dx2 - tau2 dzeta/dx1`` and ``curl(tau / zeta)``.

    Raises
    ------
    DivisionNearZero
        If ``|zeta|`` is below ``1e-12`` where ``tau`` does not vanish.
    """
    _guard(tau, zeta)
    dz = gradient(zeta).values
    cross = tau.values[..., 0] * dz[..., 1] - tau.values[..., 1] * dz[..., 0]
    # the factor 2s does not change whether the curl vanishes
    return ScalarField2(tau.grid, cross), curl2(integrand(tau, zeta, 0.5))


@dataclass(frozen=True)
class CompatibilityReport:
    max_residual: float
    max_curl: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.threshold

    def to_json(self) -> dict:
        return {
            "max_residual": self.max_residual,
            "max_curl": self.max_curl,
            "threshold": self.threshold,
            "passed": self.passed,
        }


def compatibility_check(tau: VectorField2, zeta: ScalarField2, rtol: float = GATE_RTOL) -> CompatibilityReport:
    """Gate ``max |tau x grad zeta| <= rtol * max(1, |tau|_inf * |grad zeta|_inf)``."""
    cross, curl = compatibility_residual(tau, zeta)
    act = tau.grid.active
    dz = gradient(zeta).values[act]
    scale = max(1.0, float(np.max(np.abs(tau.values[act]))) * float(np.max(np.abs(dz))))
    return CompatibilityReport(
        max_residual=float(np.max(np.abs(cross.values[act]))),
        max_curl=float(np.max(np.abs(curl.values[act]))),
        threshold=rtol * scale,
    )


# -- path trees ---------------------------------------------------------------------

def _edge_ok(grid: Grid2, a: tuple[int, int], b: tuple[int, int]) -> bool:
    """Grid segment ``a``-``b`` lies on the closure of an active cell."""
    (i0, j0), (i1, j1) = a, b
    if not (0 <= i1 <= grid.nx and 0 <= j1 <= grid.ny):
        return False
    cells = grid.cell_active
    if i0 != i1:
        i = min(i0, i1)
        return bool((j0 > 0 and cells[i, j0 - 1]) or (j0 < grid.ny and cells[i, j0]))
    j = min(j0, j1)
    return bool((i0 > 0 and cells[i0 - 1, j]) or (i0 < grid.nx and cells[i0, j]))


def _routing_step(spec: str, grid: Grid2, node, base):
    i, j = node
    di, dj = base[0] - i, base[1] - j
    sx, sy = int(np.sign(di)), int(np.sign(dj))
    if spec == "x-then-y":
        # path from base runs along x first, so the last step (from the node back) is along y
        return (i, j + sy) if dj else (i + sx, j)
    if spec == "y-then-x":
        return (i + sx, j) if di else (i, j + sy)
    # staircase: step along the axis with the larger remaining physical distance
    if di and (abs(di) * grid.hx >= abs(dj) * grid.hy or not dj):
        return (i + sx, j)
    return (i, j + sy)


def _parents(grid: Grid2, base, routing: str) -> dict:
    act = grid.active
    nodes = [tuple(ij) for ij in np.argwhere(act)]
    par = {}
    ok = True
    for node in nodes:
        if node == base:
            continue
        p = _routing_step(routing, grid, node, base)
        if not (act[p] and _edge_ok(grid, node, p)):
            ok = False
            break
        par[node] = p
    if ok:
        return par
    # masked domain: breadth-first tree, neighbours ordered by the routing preference
    order = [(1, 0), (-1, 0), (0, 1), (0, -1)]
    if routing == "y-then-x":
        order = [(0, 1), (0, -1), (1, 0), (-1, 0)]
    par = {}
    seen = {base}
    queue = deque([base])
    while queue:
        cur = queue.popleft()
        for di, dj in order:
            nb = (cur[0] + di, cur[1] + dj)
            if nb in seen or not (0 <= nb[0] <= grid.nx and 0 <= nb[1] <= grid.ny):
                continue
            if act[nb] and _edge_ok(grid, cur, nb):
                seen.add(nb)
                par[nb] = cur
                queue.append(nb)
    missing = len(nodes) - 1 - len(par)
    if missing:
        raise FieldError(f"{missing} active node(s) are not connected to the base node")
    return par


def _integrate_tree(grid: Grid2, g: np.ndarray, base, par: dict) -> np.ndarray:
    depth = {base: 0}

    for n in par:
        chain = []
        while n not in depth:
            chain.append(n)
            n = par[n]
        k = depth[n]
        for m in reversed(chain):
            k += 1
            depth[m] = k
    u = np.zeros(grid.shape)
    by_level: dict[int, list] = {}
    for n, k in depth.items():
        if k:
            by_level.setdefault(k, []).append(n)
    for k in sorted(by_level):
        kids = np.array(by_level[k])
        pars = np.array([par[tuple(n)] for n in kids])
        ci, cj = kids[:, 0], kids[:, 1]
        pi, pj = pars[:, 0], pars[:, 1]
        along_x = ci != pi
        comp = np.where(along_x, 0, 1)
        step = np.where(along_x, (ci - pi) * grid.hx, (cj - pj) * grid.hy)
        seg = 0.5 * step * (g[ci, cj, comp] + g[pi, pj, comp])
        u[ci, cj] = u[pi, pj] + seg
    return u


def _integrate(grid: Grid2, g: np.ndarray, spec: PathSpec) -> np.ndarray:
    base = spec.resolve_base(grid)
    return _integrate_tree(grid, g, base, _parents(grid, base, spec.routing))


def reconstruct(
    tau: VectorField2,
    zeta: ScalarField2,
    s: float,
    path: PathSpec | None = None,
    gate_rtol: float = GATE_RTOL,
) -> ScalarField2:
    """Displacement with ``grad u = tau / (2 s zeta)`` and ``u(base) = 0``.

    Parameters
    ----------
    s : float
        Strain scale of the material model.
    gate_rtol : float
        Relative threshold of the compatibility gate.

    Raises
    ------
    IncompatibleField
        If ``tau x grad zeta`` exceeds the gate.
    DivisionNearZero
        If ``zeta`` vanishes where ``tau`` does not.
    """
    path = path or PathSpec()
    report = compatibility_check(tau, zeta, gate_rtol)
    if not report.passed:
        raise IncompatibleField(
            f"compatibility residual {report.max_residual:.3e} exceeds gate {report.threshold:.3e}"
        )
    g = integrand(tau, zeta, s).values
    return ScalarField2(tau.grid, _integrate(tau.grid, g, path))


def path_independence_check(tau: VectorField2, zeta: ScalarField2, s: float = 0.5, base=None) -> float:
    """Max difference between x-then-y and y-then-x integrals (no gate applied)."""
    g = integrand(tau, zeta, s).values
    grid = tau.grid
    u1 = _integrate(grid, g, PathSpec(base, "x-then-y"))
    u2 = _integrate(grid, g, PathSpec(base, "y-then-x"))
    return float(np.max(np.abs(u1 - u2)[grid.active]))
