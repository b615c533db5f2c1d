"""Structured 2-D grids, discrete differential operators and admissible stresses.

Nodes are indexed ``[i, j]`` with ``i`` running along ``x1`` and ``j`` along
``x2``; every field stores an array of shape ``(nx + 1, ny + 1)`` (plus a
trailing axis of length 2 for vector fields).  Serialized node order is
row-major over grid rows: ``k = j * (nx + 1) + i``.

The domain is the union of *active cells* (cells whose four corners are all
active).  Without a mask this is the full rectangle.  Boundary edges are cell
edges shared by exactly one active cell; they carry an axis-aligned outward
normal, which is how tractions and boundary work are evaluated on both plain
rectangles and staircase (masked) domains.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FieldError, SolveFailure

__all__ = [
    "Grid2",
    "ScalarField2",
    "VectorField2",
    "Traction",
    "side_traction",
    "stress_traction",
    "gradient",
    "divergence",
    "curl2",
    "integrate",
    "admissible_stress",
    "equilibrium_residual",
    "virtual_work_defect",
    "field_to_json",
    "field_from_json",
    "write_field_csv",
    "read_field_csv",
]

SIDES = ("left", "right", "bottom", "top")

# (x, y, nx, ny) -> traction value; all arguments are equally shaped arrays.
Traction = Callable[[np.ndarray, np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class Grid2:
    """Node-centred structured grid with Dirichlet/Neumann boundary tags.

    Parameters
    ----------
    nx, ny : int
        Cell counts along ``x1`` and ``x2`` (at least 2 each).
    hx, hy : float
        Grid spacings.
    dirichlet : ndarray of bool, shape (nx + 1, ny + 1)
        Nodes of the displacement boundary. Must be boundary nodes and
        non-empty; every other boundary node belongs to the traction boundary.
    origin : (float, float)
        Coordinates of node ``[0, 0]``.
    mask : ndarray of bool, optional
        Active nodes. Nodes not belonging to any fully active cell are
        dropped. ``None`` means the full rectangle.
    """

    nx: int
    ny: int
    hx: float
    hy: float
    dirichlet: np.ndarray
    origin: tuple[float, float] = (0.0, 0.0)
    mask: np.ndarray | None = None

    def __post_init__(self):
        if int(self.nx) < 2 or int(self.ny) < 2:
            raise FieldError(f"need nx, ny >= 2, got {self.nx}, {self.ny}")
        if not (self.hx > 0 and self.hy > 0):
            raise FieldError(f"spacings must be positive, got {self.hx}, {self.hy}")
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "ny", int(self.ny))
        object.__setattr__(self, "hx", float(self.hx))
        object.__setattr__(self, "hy", float(self.hy))
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        if self.mask is not None:
            mask = np.asarray(self.mask, dtype=bool)
            if mask.shape != self.shape:
                raise FieldError(f"mask shape {mask.shape} != node shape {self.shape}")
            object.__setattr__(self, "mask", _frozen(mask))
        d = np.asarray(self.dirichlet, dtype=bool)
        if d.shape != self.shape:
            raise FieldError(f"dirichlet shape {d.shape} != node shape {self.shape}")
        if not self.active.any():
            raise FieldError("grid has no active cell")
        if np.any(d & ~self.boundary):
            raise FieldError("dirichlet tags must sit on boundary nodes")
        if not d.any():
            raise FieldError("the displacement boundary must not be empty")
        object.__setattr__(self, "dirichlet", _frozen(d))

    @classmethod
    def rectangle(
        cls,
        nx: int,
        ny: int,
        lx: float = 1.0,
        ly: float = 1.0,
        origin: tuple[float, float] = (0.0, 0.0),
        dirichlet: str | Sequence[str] | Callable = ("left",),
        mask: np.ndarray | Callable | None = None,
    ) -> "Grid2":
        """Grid on ``[x0, x0 + lx] x [y0, y0 + ly]``.

        ``dirichlet`` is a side name, a sequence of side names, or a
        predicate ``f(x, y) -> bool array`` evaluated on boundary nodes.
        ``mask`` may be a boolean node array or a predicate on node
        coordinates.
        """
        hx, hy = lx / nx, ly / ny
        x = origin[0] + hx * np.arange(nx + 1)
        y = origin[1] + hy * np.arange(ny + 1)
        X, Y = np.meshgrid(x, y, indexing="ij")
        if callable(mask):
            mask = np.asarray(mask(X, Y), dtype=bool)
        _, boundary = _active_and_boundary(nx, ny, mask)
        if callable(dirichlet):
            d = np.asarray(dirichlet(X, Y), dtype=bool) & boundary
        else:
            names = (dirichlet,) if isinstance(dirichlet, str) else tuple(dirichlet)
            d = np.zeros((nx + 1, ny + 1), dtype=bool)
            for name in names:
                if name not in SIDES:
                    raise FieldError(f"unknown side {name!r}; expected one of {SIDES}")
                d |= _side_mask(nx, ny, name)
            d &= boundary
        return cls(nx, ny, hx, hy, d, origin, mask)

    # -- geometry -----------------------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx + 1, self.ny + 1)

    @property
    def n_nodes(self) -> int:
        return (self.nx + 1) * (self.ny + 1)

    @cached_property
    def x(self) -> np.ndarray:
        xs = self.origin[0] + self.hx * np.arange(self.nx + 1)
        return _frozen(np.repeat(xs[:, None], self.ny + 1, axis=1))

    @cached_property
    def y(self) -> np.ndarray:
        ys = self.origin[1] + self.hy * np.arange(self.ny + 1)
        return _frozen(np.repeat(ys[None, :], self.nx + 1, axis=0))

    @property
    def spacing(self) -> float:
        return max(self.hx, self.hy)

    @property
    def area(self) -> float:
        return float(self.weights.sum())

    @cached_property
    def _topology(self):
        return _active_and_boundary(self.nx, self.ny, self.mask)

    @property
    def active(self) -> np.ndarray:
        return self._topology[0]

    @property
    def boundary(self) -> np.ndarray:
        return self._topology[1]

    @cached_property
    def cell_active(self) -> np.ndarray:
        return _frozen(_cell_active(self.nx, self.ny, self.mask))

    @property
    def interior(self) -> np.ndarray:
        return self.active & ~self.boundary

    @property
    def neumann(self) -> np.ndarray:
        return self.boundary & ~self.dirichlet

    @property
    def boundary_tags(self) -> np.ndarray:
        """Per-node tag: ``"D"`` (displacement), ``"N"`` (traction) or ``""``."""
        tags = np.full(self.shape, "", dtype="<U1")
        tags[self.neumann] = "N"
        tags[self.dirichlet] = "D"
        return tags

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights (cell area / 4 per incident active cell)."""
        w = np.zeros(self.shape)
        q = 0.25 * self.hx * self.hy * self.cell_active
        w[:-1, :-1] += q
        w[1:, :-1] += q
        w[:-1, 1:] += q
        w[1:, 1:] += q
        return _frozen(w)

    @cached_property
    def boundary_edges(self) -> dict[str, np.ndarray]:
        """Boundary edges as flat node ids ``a``, ``b``, ``length`` and outward ``normal``."""
        nx, ny = self.nx, self.ny
        cells = np.zeros((nx + 2, ny + 2), dtype=bool)
        cells[1:-1, 1:-1] = self.cell_active
        a, b, length, normal = [], [], [], []
        # horizontal edges (i, j)-(i+1, j): cells below (i, j-1) and above (i, j)
        below = cells[1:-1, 0:-1]
        above = cells[1:-1, 1:]
        for sel, ny_out in ((below & ~above, 1.0), (above & ~below, -1.0)):
            ii, jj = np.nonzero(sel)
            a.append(self.node_id(ii, jj))
            b.append(self.node_id(ii + 1, jj))
            length.append(np.full(ii.size, self.hx))
            normal.append(np.column_stack([np.zeros(ii.size), np.full(ii.size, ny_out)]))
        # vertical edges (i, j)-(i, j+1): cells left (i-1, j) and right (i, j)
        left = cells[0:-1, 1:-1]
        right = cells[1:, 1:-1]
        for sel, nx_out in ((left & ~right, 1.0), (right & ~left, -1.0)):
            ii, jj = np.nonzero(sel)
            a.append(self.node_id(ii, jj))
            b.append(self.node_id(ii, jj + 1))
            length.append(np.full(ii.size, self.hy))
            normal.append(np.column_stack([np.full(ii.size, nx_out), np.zeros(ii.size)]))
        return {
            "a": np.concatenate(a),
            "b": np.concatenate(b),
            "length": np.concatenate(length),
            "normal": np.concatenate(normal),
        }

    def node_id(self, i, j):
        """Serialized (row-major over grid rows) id of node ``[i, j]``."""
        return np.asarray(j) * (self.nx + 1) + np.asarray(i)

    def flat(self, values: np.ndarray) -> np.ndarray:
        """Node-ordered view of a ``(nx+1, ny+1, ...)`` array."""
        values = np.asarray(values)
        return np.swapaxes(values, 0, 1).reshape((self.n_nodes,) + values.shape[2:])

    def unflat(self, flat_values: np.ndarray) -> np.ndarray:
        flat_values = np.asarray(flat_values)
        tail = flat_values.shape[1:]
        return np.swapaxes(flat_values.reshape((self.ny + 1, self.nx + 1) + tail), 0, 1)

    def _edge_endpoint_terms(self):
        """(node ids, half lengths, normals) for both endpoints of every boundary edge."""
        e = self.boundary_edges
        ids = np.concatenate([e["a"], e["b"]])
        half = np.concatenate([e["length"], e["length"]]) * 0.5
        nrm = np.concatenate([e["normal"], e["normal"]])
        return ids, half, nrm

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """Per-node sum of ``(edge length / 2) * outward normal`` over incident boundary edges."""
        ids, half, nrm = self._edge_endpoint_terms()
        out = np.zeros((self.n_nodes, 2))
        np.add.at(out, ids, half[:, None] * nrm)
        return _frozen(self.unflat(out))

    @cached_property
    def boundary_lengths(self) -> np.ndarray:
        ids, half, _ = self._edge_endpoint_terms()
        out = np.zeros(self.n_nodes)
        np.add.at(out, ids, half)
        return _frozen(self.unflat(out))

    def boundary_load(self, traction: Traction) -> np.ndarray:
        """Nodal trapezoidal weights of ``t`` on the traction boundary.

        ``load @ u`` is the boundary work of any nodal field ``u``; entries on
        the displacement boundary are zero.
        """
        ids, half, nrm = self._edge_endpoint_terms()
        xf = self.flat(self.x)[ids]
        yf = self.flat(self.y)[ids]
        t = np.broadcast_to(np.asarray(traction(xf, yf, nrm[:, 0], nrm[:, 1]), float), ids.shape)
        if not np.all(np.isfinite(t)):
            raise FieldError("traction is not finite on the boundary")
        out = np.zeros(self.n_nodes)
        np.add.at(out, ids, half * t)
        out = self.unflat(out)
        out[self.dirichlet] = 0.0
        return out

    # -- operators ------------------------------------------------------------
    @cached_property
    def derivative_matrices(self) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        """Sparse first-derivative operators ``(Dx, Dy)`` on flat node vectors."""
        return (
            _derivative_matrix(self, axis=0),
            _derivative_matrix(self, axis=1),
        )

    def to_json(self) -> dict:
        return {
            "nx": self.nx,
            "ny": self.ny,
            "hx": self.hx,
            "hy": self.hy,
            "origin": list(self.origin),
            "dirichlet_nodes": np.flatnonzero(self.flat(self.dirichlet)).tolist(),
            "mask": None if self.mask is None else self.flat(self.mask).astype(int).tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict) -> "Grid2":
        nx, ny = int(doc["nx"]), int(doc["ny"])
        n = (nx + 1) * (ny + 1)
        d = np.zeros(n, dtype=bool)
        d[np.asarray(doc["dirichlet_nodes"], dtype=int)] = True
        unflat = lambda v: np.swapaxes(np.asarray(v).reshape(ny + 1, nx + 1), 0, 1)  # noqa: E731
        mask = None if doc.get("mask") is None else unflat(np.asarray(doc["mask"], dtype=bool))
        return cls(nx, ny, doc["hx"], doc["hy"], unflat(d), tuple(doc.get("origin", (0, 0))), mask)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def _side_mask(nx, ny, side):
    m = np.zeros((nx + 1, ny + 1), dtype=bool)
    if side == "left":
        m[0, :] = True
    elif side == "right":
        m[-1, :] = True
    elif side == "bottom":
        m[:, 0] = True
    else:
        m[:, -1] = True
    return m


def _cell_active(nx, ny, mask):
    if mask is None:
        return np.ones((nx, ny), dtype=bool)
    m = np.asarray(mask, dtype=bool)
    return m[:-1, :-1] & m[1:, :-1] & m[:-1, 1:] & m[1:, 1:]


def _active_and_boundary(nx, ny, mask):
    cells = _cell_active(nx, ny, mask)
    active = np.zeros((nx + 1, ny + 1), dtype=bool)
    active[:-1, :-1] |= cells
    active[1:, :-1] |= cells
    active[:-1, 1:] |= cells
    active[1:, 1:] |= cells
    count = np.zeros((nx + 1, ny + 1), dtype=int)
    for di in (0, 1):
        for dj in (0, 1):
            count[di:nx + di, dj:ny + dj] += cells
    # a node is interior iff all four surrounding cells are active
    boundary = active & (count < 4)
    return _frozen(active), _frozen(boundary)


def _derivative_matrix(grid: Grid2, axis: int) -> sp.csr_matrix:
    """Central differences inside, second-order one-sided next to a missing neighbour.

    Falls back to first-order one-sided differences when only one neighbour
    exists along ``axis``; nodes with no neighbour get an empty row.
    """
    act = np.asarray(grid.active)
    h = grid.hx if axis == 0 else grid.hy
    n_along = act.shape[axis]

    def shifted(k):
        out = np.zeros_like(act)
        src = [slice(None), slice(None)]
        dst = [slice(None), slice(None)]
        if k > 0:
            src[axis] = slice(k, None)
            dst[axis] = slice(0, n_along - k)
        else:
            src[axis] = slice(0, n_along + k)
            dst[axis] = slice(-k, None)
        out[tuple(dst)] = act[tuple(src)]
        return out

    r1, r2, l1, l2 = shifted(1), shifted(2), shifted(-1), shifted(-2)
    central = act & r1 & l1
    fwd2 = act & ~central & r1 & r2
    bwd2 = act & ~central & ~fwd2 & l1 & l2
    fwd1 = act & ~central & ~fwd2 & ~bwd2 & r1
    bwd1 = act & ~central & ~fwd2 & ~bwd2 & ~fwd1 & l1

    stencils = (
        (central, ((-1, -0.5), (1, 0.5))),
        (fwd2, ((0, -1.5), (1, 2.0), (2, -0.5))),
        (bwd2, ((0, 1.5), (-1, -2.0), (-2, 0.5))),
        (fwd1, ((0, -1.0), (1, 1.0))),
        (bwd1, ((0, 1.0), (-1, -1.0))),
    )
    rows, cols, vals = [], [], []
    for sel, taps in stencils:
        ii, jj = np.nonzero(sel)
        row = grid.node_id(ii, jj)
        for off, coef in taps:
            if axis == 0:
                col = grid.node_id(ii + off, jj)
            else:
                col = grid.node_id(ii, jj + off)
            rows.append(row)
            cols.append(col)
            vals.append(np.full(row.size, coef / h))
    n = grid.n_nodes
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


@dataclass(frozen=True, eq=False)
class ScalarField2:
    """One finite real per node of ``grid`` (inactive nodes hold zero)."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise FieldError(f"value shape {v.shape} != node shape {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise FieldError("scalar field has non-finite values")
        v = np.where(self.grid.active, v, 0.0)
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, grid: Grid2, f) -> "ScalarField2":
        return cls(grid, np.broadcast_to(f(grid.x, grid.y), grid.shape))

    @classmethod
    def constant(cls, grid: Grid2, value: float) -> "ScalarField2":
        return cls(grid, np.full(grid.shape, float(value)))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values[self.grid.active])))


@dataclass(frozen=True, eq=False)
class VectorField2:
    """One finite 2-vector per node of ``grid``; ``values[..., k]`` is component ``k``."""

    grid: Grid2
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape + (2,):
            raise FieldError(f"value shape {v.shape} != {self.grid.shape + (2,)}")
        if not np.all(np.isfinite(v)):
            raise FieldError("vector field has non-finite values")
        v = np.where(self.grid.active[..., None], v, 0.0)
        object.__setattr__(self, "values", _frozen(v))

    @classmethod
    def from_function(cls, grid: Grid2, f) -> "VectorField2":
        f1, f2 = f(grid.x, grid.y)
        return cls(grid, np.stack(np.broadcast_arrays(f1, f2, grid.x)[:2], axis=-1))

    @classmethod
    def constant(cls, grid: Grid2, value) -> "VectorField2":
        return cls(grid, np.broadcast_to(np.asarray(value, float), grid.shape + (2,)))

    def component(self, k: int) -> ScalarField2:
        return ScalarField2(self.grid, self.values[..., k])

    def norm_sq(self) -> ScalarField2:
        return ScalarField2(self.grid, np.sum(self.values**2, axis=-1))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values[self.grid.active])))


def side_traction(**sides) -> Traction:
    """Traction given per side of a rectangle: ``side_traction(right=1.0)``.

    A side value may be a number or a function ``f(x, y)``. Missing sides
    carry zero traction. On staircase boundaries the side is picked by the
    edge normal.
    """
    unknown = set(sides) - set(SIDES)
    if unknown:
        raise FieldError(f"unknown side(s) {sorted(unknown)}")

    def t(x, y, nx, ny):
        out = np.zeros(np.broadcast(x, nx).shape)
        for name, normal in (("right", (1, 0)), ("left", (-1, 0)), ("top", (0, 1)), ("bottom", (0, -1))):
            if name not in sides:
                continue
            val = sides[name]
            sel = (nx == normal[0]) & (ny == normal[1])
            v = val(x, y) if callable(val) else val
            out = np.where(sel, np.broadcast_to(v, out.shape), out)
        return out

    return t


def stress_traction(stress) -> Traction:
    """Traction ``n . sigma(x)`` of a prescribed stress ``stress(x, y) -> (s1, s2)``.

    A constant 2-vector is accepted as well.
    """
    if callable(stress):
        def t(x, y, nx, ny):
            s1, s2 = stress(x, y)
            return nx * s1 + ny * s2
    else:
        s1, s2 = (float(v) for v in stress)

        def t(x, y, nx, ny):
            return nx * s1 + ny * s2
    return t


def _check_same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid is not g:
            raise FieldError("fields live on different grids")
    return g


def gradient(u: ScalarField2) -> VectorField2:
    """Nodal gradient of ``u`` (exact for fields linear along each axis)."""
    g = u.grid
    dx, dy = g.derivative_matrices
    uf = g.flat(u.values)
    return VectorField2(g, np.stack([g.unflat(dx @ uf), g.unflat(dy @ uf)], axis=-1))


def divergence(v: VectorField2) -> ScalarField2:
    g = v.grid
    dx, dy = g.derivative_matrices
    vf = g.flat(v.values)
    return ScalarField2(g, g.unflat(dx @ vf[:, 0] + dy @ vf[:, 1]))


def curl2(v: VectorField2) -> ScalarField2:
    """Scalar curl ``dv2/dx1 - dv1/dx2``."""
    g = v.grid
    dx, dy = g.derivative_matrices
    vf = g.flat(v.values)
    return ScalarField2(g, g.unflat(dx @ vf[:, 1] - dy @ vf[:, 0]))


def integrate(f: ScalarField2 | np.ndarray, grid: Grid2 | None = None) -> float:
    """Trapezoidal integral over the active domain."""
    if isinstance(f, ScalarField2):
        grid, vals = f.grid, f.values
    else:
        vals = np.asarray(f)
    return float(np.sum(grid.weights * vals))


def admissible_stress(
    grid: Grid2, traction: Traction, tol: float = 1e-10
) -> tuple[VectorField2, ScalarField2]:
    """Statically admissible potential stress ``tau = grad(phi)``.

    Solves the discrete mixed problem

        div(grad phi) = 0      at interior nodes,
        n . grad phi  = t      on the traction boundary,
        phi           = 0      on the displacement boundary,

    where ``div`` and ``grad`` are exactly the operators :func:`divergence`
    and :func:`gradient` use. Hence the returned ``tau`` is divergence free
    and matches the traction to the solve tolerance when checked with those
    same operators. The system is assembled sparse, its rows are equilibrated
    and it is solved by LU with up to four sweeps of iterative refinement. The
    relative residual is measured on the equilibrated system.

    On masked domains the wide central stencils couple the two odd/even
    sublattices only through the staircase boundary, and the exact discrete
    solution can oscillate between neighbouring nodes there. Residuals stay at
    solver precision; use a rectangle when a smooth ``tau`` matters.

    Raises
    ------
    SolveFailure
        If the system is singular or the relative residual exceeds ``tol``.
    """
    n = grid.n_nodes
    dx, dy = grid.derivative_matrices
    interior = grid.flat(grid.interior)
    neumann = grid.flat(grid.neumann)
    fixed = ~(interior | neumann)  # displacement boundary and inactive nodes
    nrm = grid.flat(grid.boundary_normals)

    lap = (dx @ dx + dy @ dy).tocsr()
    flux = (sp.diags(nrm[:, 0]) @ dx + sp.diags(nrm[:, 1]) @ dy).tocsr()
    A = (
        sp.diags(interior.astype(float)) @ lap
        + sp.diags(neumann.astype(float)) @ flux
        + sp.diags(fixed.astype(float))
    ).tocsc()
    rhs = grid.flat(grid.boundary_load(traction)).copy()
    rhs[~neumann] = 0.0
    # row equilibration: interior rows scale like 1/h^2, flux rows like 1
    scale = 1.0 / np.maximum(abs(A).max(axis=1).toarray().ravel(), np.finfo(float).tiny)
    A = (sp.diags(scale) @ A).tocsc()
    rhs = scale * rhs

    if not np.any(rhs):
        phi = np.zeros(n)
    else:
        # the system is linear; normalising keeps tiny loads out of the subnormal range
        load_scale = np.max(np.abs(rhs))
        rhs = rhs / load_scale
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:
            raise SolveFailure(f"Laplace system is singular: {exc}") from exc
        phi = lu.solve(rhs)
        norm_rhs = np.linalg.norm(rhs)
        res = np.linalg.norm(A @ phi - rhs) / norm_rhs
        # iterative refinement; ill-conditioned masks may need more than one sweep
        for _ in range(4):
            if not res > tol:
                break
            cand = phi + lu.solve(rhs - A @ phi)
            r2 = np.linalg.norm(A @ cand - rhs) / norm_rhs
            if not r2 < res:
                break
            phi, res = cand, r2
        if not np.isfinite(res) or res > tol:
            raise SolveFailure(f"Laplace solve residual {res:.3e} exceeds tolerance {tol:.1e}")
        phi = phi * load_scale
    phi_f = ScalarField2(grid, grid.unflat(phi))
    return gradient(phi_f), phi_f


def equilibrium_residual(tau: VectorField2, traction: Traction) -> tuple[float, float]:
    """``(max |div tau| at interior nodes, max traction mismatch on the traction boundary)``.

    The mismatch is measured per unit boundary length.
    """
    g = tau.grid
    div = divergence(tau).values[g.interior]
    nrm = g.boundary_normals
    flux = np.sum(nrm * tau.values, axis=-1) - g.boundary_load(traction)
    lengths = g.boundary_lengths
    sel = g.neumann
    flux_err = np.abs(flux[sel]) / lengths[sel] if sel.any() else np.zeros(1)
    return (float(np.max(np.abs(div))) if div.size else 0.0, float(np.max(flux_err)))


def virtual_work_defect(u: ScalarField2, tau: VectorField2, traction: Traction) -> float:
    """``integral(grad u . tau) - boundary work of t on u`` with the grid quadrature."""
    g = _check_same_grid(u, tau)
    inner = integrate(np.sum(gradient(u).values * tau.values, axis=-1), g)
    return inner - float(np.sum(g.boundary_load(traction) * u.values))


# -- serialization -------------------------------------------------------------

def field_to_json(field: ScalarField2 | VectorField2) -> dict:
    g = field.grid
    return {"grid": g.to_json(), "values": g.flat(field.values).tolist()}


def field_from_json(doc: dict | str) -> ScalarField2 | VectorField2:
    if isinstance(doc, str):
        doc = json.loads(doc)
    g = Grid2.from_json(doc["grid"])
    vals = g.unflat(np.asarray(doc["values"], dtype=float))
    return VectorField2(g, vals) if vals.ndim == 3 else ScalarField2(g, vals)


def write_field_csv(field: ScalarField2 | VectorField2, path, name: str = "value") -> None:
    """CSV with columns ``x, y`` and one value column (two for vector fields)."""
    g = field.grid
    xs, ys = g.flat(g.x), g.flat(g.y)
    vals = g.flat(field.values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if vals.ndim == 1:
            w.writerow(["x", "y", name])
            rows: Iterable = zip(xs, ys, vals)
        else:
            w.writerow(["x", "y", f"{name}_1", f"{name}_2"])
            rows = zip(xs, ys, vals[:, 0], vals[:, 1])
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def read_field_csv(path, grid: Grid2) -> ScalarField2 | VectorField2:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    data = np.asarray(rows[1:], dtype=float)
    if data.shape[0] != grid.n_nodes:
        raise FieldError(f"{path}: {data.shape[0]} rows for {grid.n_nodes} nodes")
    if not (np.allclose(data[:, 0], grid.flat(grid.x)) and np.allclose(data[:, 1], grid.flat(grid.y))):
        raise FieldError(f"{path}: coordinates do not match the grid")
    vals = data[:, 2:]
    if vals.shape[1] == 1:
        return ScalarField2(grid, grid.unflat(vals[:, 0]))
    return VectorField2(grid, grid.unflat(vals))
