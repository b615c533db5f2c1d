"""End-to-end runs behind the command line: solve, verify and sweep.

``run`` goes admissible stress -> per-node dual roots -> labels ->
compatibility gate -> reconstruction per root branch -> energies -> oracle
comparison. Everything it returns is deterministic for a given config and
seed; the thread count only changes how the per-node solves are scheduled.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PowerLawConfig, QuadExpConfig, RunConfig
from .dual_solver import (
    TRIPLE,
    DualRootSet,
    FieldRoots,
    multiplicity_criterion,
    solve_dual,
    solve_field,
)
from .errors import AntiplaneError, ConfigError, FieldError, InvalidRoot, NoRealRoot, UnexpectedRoot
from .fields import (
    Grid2,
    ScalarField2,
    Traction,
    VectorField2,
    admissible_stress,
    equilibrium_residual,
    field_to_json,
    write_field_csv,
)
from .materials import MaterialModel, PowerLaw, QuadExp, canonical_energy, conjugate, conjugate_gradient
from .oracle import discrete_energy_and_gradient, minimize, write_trace_csv
from .reconstruction import CompatibilityReport, compatibility_check, reconstruct
from .triality import EnergyReport, classify, energy_report

__all__ = [
    "Branch",
    "Check",
    "RunResult",
    "is_convex",
    "run",
    "result_document",
    "write_outputs",
    "verify",
    "sweep",
    "dual_curve",
    "write_rows_csv",
]

log = logging.getLogger(__name__)


def is_convex(m: MaterialModel) -> bool:
    """Whether ``W`` is convex, so the reconstructed field must match the oracle minimizer."""
    if isinstance(m, QuadExp):
        return True
    return m.p >= 1 and m.alpha <= 0


def _has_labels(m: MaterialModel) -> bool:
    return isinstance(m, PowerLaw) and m.p == 2


@dataclass
class Branch:
    """Results for the ``k``-th largest root at every node."""

    index: int
    zeta: ScalarField2
    compatibility: CompatibilityReport
    u: ScalarField2 | None = None
    energies: EnergyReport | None = None
    labels: dict = field(default_factory=dict)
    primal_consistent: bool = True

    def to_json(self) -> dict:
        z = self.zeta.values[self.zeta.grid.active]
        return {
            "branch": self.index + 1,
            "zeta_min": float(z.min()),
            "zeta_max": float(z.max()),
            "primal_consistent": self.primal_consistent,
            "compatibility": self.compatibility.to_json(),
            "reconstructed": self.u is not None,
            "energies": self.energies.to_json() if self.energies else None,
            "labels": dict(sorted(self.labels.items())),
        }


@dataclass
class RunResult:
    config: RunConfig
    seed: int
    grid: Grid2
    material: MaterialModel
    traction: Traction
    tau: VectorField2
    phi: ScalarField2
    roots: FieldRoots
    node_labels: dict  # tau_sq -> list of labels (None where undefined)
    branches: list[Branch]
    oracle: dict | None = None
    oracle_u: ScalarField2 | None = None
    oracle_trace: list | None = None
    perturb_zeta: float = 0.0

    @property
    def gate_failed(self) -> bool:
        return any(not b.compatibility.passed for b in self.branches)


def _build(cfg: RunConfig) -> tuple[Grid2, MaterialModel, Traction]:
    try:
        grid = cfg.grid.build()
    except FieldError as exc:
        raise ConfigError(f"grid: {exc}") from None
    return grid, cfg.build_material(), cfg.traction.build()


def _labels_for(m: MaterialModel, rs: DualRootSet) -> list:
    if not _has_labels(m):
        return [None] * len(rs)
    out = []
    for r in rs.roots:
        try:
            out.append(classify(m, r, rs.tau_sq, domain_dim=2).label)
        except InvalidRoot as exc:
            log.warning("classification failed at tau_sq=%r: %s", rs.tau_sq, exc)
            out.append(None)
    return out


def _perturbation(grid: Grid2, seed: int) -> np.ndarray:
    """Smooth random field with max magnitude 1 (a few low Fourier modes)."""
    rng = np.random.default_rng(seed)
    X = (grid.x - grid.origin[0]) / (grid.nx * grid.hx)
    Y = (grid.y - grid.origin[1]) / (grid.ny * grid.hy)
    r = np.zeros(grid.shape)
    for _ in range(4):
        kx, ky = rng.integers(1, 4, size=2)
        ph = rng.uniform(0, 2 * np.pi, size=2)
        r += rng.normal() * np.sin(np.pi * kx * X + ph[0]) * np.sin(np.pi * ky * Y + ph[1])
    peak = float(np.max(np.abs(r)))
    return r / peak if peak > 0 else r


def run(
    cfg: RunConfig,
    threads: int | None = None,
    seed: int = 0,
    perturb_zeta: float = 0.0,
    gate: bool = True,
) -> RunResult:
    """Run the full pipeline for ``cfg``.

    Parameters
    ----------
    perturb_zeta : float
        Relative amplitude of a smooth random perturbation (drawn from
        ``seed``) applied to every root field before reconstruction. Used to
        demonstrate that the invariant checks catch a wrong ``zeta``.
    gate : bool
        With ``gate=False`` branches failing the compatibility gate are still
        integrated (``verify`` needs their energies); the reports still show
        the failure.

    Raises
    ------
    ConfigError, SolveFailure, NodeSolveError, DivisionNearZero
        And other :class:`AntiplaneError` subclasses from the stages.
    """
    grid, m, traction = _build(cfg)
    tol = cfg.solver.tolerances
    log.info("admissible stress on %dx%d grid", grid.nx, grid.ny)
    tau, phi = admissible_stress(grid, traction, tol.admissible)
    log.info("dual solve at %d active nodes", int(grid.active.sum()))
    roots = solve_field(m, tau, threads=threads, n_scan=cfg.solver.scan_points)

    by_tsq: dict[float, DualRootSet] = {}
    for rs in roots.sets.values():
        by_tsq.setdefault(rs.tau_sq, rs)
    node_labels = {t: _labels_for(m, rs) for t, rs in sorted(by_tsq.items())}

    n_branches = min(len(s) for s in roots.sets.values())
    bump = _perturbation(grid, seed) if perturb_zeta else None
    s = m.strain_scale
    branches = []
    for k in range(n_branches):
        zeta = roots.branch(k)
        if bump is not None:
            zeta = ScalarField2(grid, zeta.values * (1.0 + perturb_zeta * bump))
        report = compatibility_check(tau, zeta, tol.compatibility)
        labels = Counter(
            node_labels[rs.tau_sq][k] or "unlabelled" for rs in roots.sets.values()
        )
        consistent = all(rs.roots[k].primal_consistent for rs in roots.sets.values())
        br = Branch(k, zeta, report, labels=dict(labels), primal_consistent=consistent)
        if report.passed or not gate:
            br.u = reconstruct(tau, zeta, s, gate_rtol=math.inf)
            br.energies = energy_report(m, br.u, zeta, tau, traction)
        else:
            log.warning(
                "branch %d fails the compatibility gate (%.3e > %.3e)",
                k + 1, report.max_residual, report.threshold,
            )
        branches.append(br)

    result = RunResult(cfg, seed, grid, m, traction, tau, phi, roots, node_labels, branches, perturb_zeta=perturb_zeta)
    if cfg.solver.oracle and branches and branches[0].u is not None:
        _oracle(result)
    return result


def _oracle(res: RunResult) -> None:
    cfg, m = res.config, res.material
    tol = cfg.solver.tolerances
    u_bar = res.branches[0].u
    log.info("oracle minimization")
    out = minimize(
        m,
        ScalarField2.constant(res.grid, 0.0),
        res.traction,
        tol=tol.oracle,
        max_iter=cfg.solver.oracle_max_iter,
        raise_on_failure=False,
    )
    e_bar, _ = discrete_energy_and_gradient(m, u_bar, res.traction)
    act = res.grid.active
    diff = float(np.max(np.abs(out.u.values - u_bar.values)[act]))
    rel = abs(out.energy - e_bar) / max(1.0, abs(e_bar))
    convex = is_convex(m)
    if convex:
        agrees = out.converged and diff <= tol.oracle_field and rel <= tol.oracle_energy
    else:
        # nonconvex: the oracle may stop in a local minimum, but never below the global one
        agrees = out.energy >= e_bar - tol.oracle_energy * max(1.0, abs(e_bar))
    res.oracle = {
        **out.report(),
        "convex": convex,
        "energy_reconstructed": e_bar,
        "max_field_difference": diff,
        "relative_energy_difference": rel,
        "agrees": bool(agrees),
    }
    res.oracle_u = out.u
    res.oracle_trace = out.trace


def result_document(res: RunResult) -> dict:
    m = res.material
    eta = multiplicity_criterion(m.c, m.alpha) if _has_labels(m) else None
    cases = Counter(rs.case for rs in res.roots.sets.values())
    counts = Counter(len(rs) for rs in res.roots.sets.values())
    div, flux = equilibrium_residual(res.tau, res.traction)
    return {
        "inputs": res.config.model_dump(mode="json"),
        "seed": res.seed,
        "perturb_zeta": res.perturb_zeta,
        "material": m.to_dict(),
        "eta": eta,
        "per_node_cases": dict(sorted(cases.items())),
        "roots_per_node": {str(k): v for k, v in sorted(counts.items())},
        "equilibrium": {"max_divergence": div, "max_traction_error": flux},
        "branches": [b.to_json() for b in res.branches],
        "compatibility_gate_passed": not res.gate_failed,
        "oracle": res.oracle,
    }


def roots_document(res: RunResult) -> list[dict]:
    out = []
    for entry, (node, rs) in zip(res.roots.to_json(), sorted(res.roots.sets.items())):
        entry["labels"] = res.node_labels[rs.tau_sq]
        out.append(entry)
    return out


def _dump(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, indent=2, allow_nan=True) + "\n")


def write_outputs(res: RunResult, out_dir, formats=("json", "csv")) -> list[Path]:
    """Write ``result.json``, ``roots.json`` and the fields; returns the paths written."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    _dump(result_document(res), out / "result.json")
    _dump(roots_document(res), out / "roots.json")
    written += [out / "result.json", out / "roots.json"]

    fields: dict[str, ScalarField2 | VectorField2] = {"tau": res.tau, "phi": res.phi}
    for b in res.branches:
        fields[f"zeta_{b.index + 1}"] = b.zeta
        if b.u is not None:
            fields[f"u_{b.index + 1}"] = b.u
    if res.oracle_u is not None:
        fields["u_oracle"] = res.oracle_u
    if "csv" in formats:
        for name, f in fields.items():
            write_field_csv(f, out / f"{name}.csv", name)
            written.append(out / f"{name}.csv")
        if res.oracle_trace:
            write_trace_csv(res.oracle_trace, out / "oracle_trace.csv")
            written.append(out / "oracle_trace.csv")
    if "json" in formats:
        _dump({name: field_to_json(f) for name, f in fields.items()}, out / "fields.json")
        written.append(out / "fields.json")
    return written


# -- verification -------------------------------------------------------------------

@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    value: float | None
    threshold: float | None
    detail: str = ""
    skipped: bool = False

    def line(self) -> str:
        status = "SKIP" if self.skipped else ("PASS" if self.passed else "FAIL")
        if self.value is None:
            return f"{status}  {self.name}  {self.detail}".rstrip()
        return f"{status}  {self.name}  value={self.value:.3e}  threshold={self.threshold:.3e}  {self.detail}".rstrip()

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "value": self.value,
            "threshold": self.threshold,
            "detail": self.detail,
            "skipped": self.skipped,
        }


def _ordering_check(roots: FieldRoots) -> Check:
    bad = 0
    for rs in roots.sets.values():
        z = rs.zetas
        if np.any(np.diff(z) > 0):
            bad += 1
        elif rs.case == TRIPLE and not (z[0] >= 0 >= z[1] >= z[2]):
            bad += 1
    return Check("root_ordering", bad == 0, None, None, f"{bad} node(s) out of order")


def verify(res: RunResult) -> list[Check]:
    """Invariant checks on a finished run.

    Compatibility gate and zero duality gap for every branch, root ordering,
    the sign of the gap function against the sign of ``zeta`` and agreement
    with the direct minimizer.
    """
    tol = res.config.solver.tolerances
    checks = [_ordering_check(res.roots)]
    for b in res.branches:
        k = b.index + 1
        c = b.compatibility
        checks.append(Check(f"compatibility[{k}]", c.passed, c.max_residual, c.threshold))
        if b.energies is None:
            continue
        e = b.energies
        if not b.primal_consistent:
            # such a root does not map back to its own strain, so no zero gap is expected
            checks.append(Check(f"duality_gap[{k}]", True, None, None, "root not primal consistent", skipped=True))
            continue
        thr = tol.duality_gap * (1.0 + abs(e.Pi))
        checks.append(Check(f"duality_gap[{k}]", e.duality_gap <= thr, e.duality_gap, thr))
        z = b.zeta.values[res.grid.active]
        scale = 1e-12 * max(1.0, abs(e.Pi))
        if z.min() >= 0:
            checks.append(Check(f"gap_sign[{k}]", e.gap >= -scale, e.gap, -scale, "zeta >= 0 requires G >= 0"))
        elif z.max() <= 0:
            checks.append(Check(f"gap_sign[{k}]", e.gap <= scale, e.gap, scale, "zeta <= 0 requires G <= 0"))
    if res.oracle is not None:
        o = res.oracle
        if o["convex"]:
            checks.append(Check("oracle_field", o["max_field_difference"] <= tol.oracle_field,
                                o["max_field_difference"], tol.oracle_field))
            checks.append(Check("oracle_energy", o["relative_energy_difference"] <= tol.oracle_energy,
                                o["relative_energy_difference"], tol.oracle_energy))
            checks.append(Check("oracle_converged", bool(o["converged"]), o["grad_norm"], tol.oracle))
        else:
            checks.append(Check("oracle_not_below_reconstruction", o["agrees"], o["energy"],
                                o["energy_reconstructed"], "oracle energy vs reconstructed energy"))
    elif res.config.solver.oracle:
        checks.append(Check("oracle", False, None, None, "no reconstructed field to compare"))
    return checks


# -- sweeps ---------------------------------------------------------------------------

def _material_with(cfg: RunConfig, parameter: str, value: float) -> MaterialModel:
    d = cfg.material
    fields_ = set(type(d).model_fields) - {"kind"}
    if parameter not in fields_:
        raise ConfigError(f"sweep.parameter: {parameter!r} is not 'tau_sq' or one of {sorted(fields_)}")
    try:
        d2 = type(d).model_validate({**d.model_dump(), parameter: value})
        if isinstance(d2, QuadExpConfig):
            return QuadExp(d2.mu, d2.nu)
        assert isinstance(d2, PowerLawConfig)
        return PowerLaw(d2.mu, d2.b, d2.p, d2.eps)
    except ConfigError as exc:
        raise ConfigError(f"sweep: {parameter}={value!r}: {exc}") from None


def _point_energies(m: MaterialModel, zeta: float, tau_sq: float) -> tuple[float, float]:
    """Primal and dual energy densities of a uniform state on root ``zeta``."""
    s = m.strain_scale
    try:
        vstar = float(conjugate(m, zeta))
    except AntiplaneError:
        return math.nan, math.nan
    if zeta == 0:
        if tau_sq > 0:
            return math.nan, math.nan
        return float(canonical_energy(m, 0.0)), -vstar
    g_sq = tau_sq / (4.0 * s * s * zeta * zeta)
    try:
        w = float(canonical_energy(m, s * g_sq))
    except AntiplaneError:
        w = math.nan
    return w - tau_sq / (2.0 * s * zeta), -(tau_sq / (4.0 * s * zeta) + vstar)


def _sweep_row(m: MaterialModel, parameter: str, value: float, tau_sq: float, n_scan: int) -> dict:
    row: dict = {"parameter": parameter, "value": value, "tau_sq": tau_sq}
    try:
        rs = solve_dual(m, tau_sq, n_scan)
        roots, case = [r.zeta for r in rs.roots], rs.case
        labels = _labels_for(m, rs)
    except UnexpectedRoot as exc:
        roots, case, labels = sorted(exc.roots, reverse=True), "UnexpectedRoot", []
    except NoRealRoot:
        roots, case, labels = [], "NoRealRoot", []
    row["case"] = case
    row["n_roots"] = len(roots)
    row["roots"] = roots
    row["labels"] = labels
    row["energies"] = [_point_energies(m, z, tau_sq) for z in roots]
    return row


def sweep(
    cfg: RunConfig,
    parameter: str | None = None,
    start: float | None = None,
    stop: float | None = None,
    steps: int | None = None,
    tau_sq: float | None = None,
) -> list[dict]:
    """Root tables over a range of ``tau_sq`` or of one material parameter.

    Arguments left as ``None`` are taken from the ``sweep`` block of the
    config.
    """
    sc = cfg.sweep
    parameter = parameter or (sc.parameter if sc else "tau_sq")
    start = start if start is not None else (sc.start if sc else None)
    stop = stop if stop is not None else (sc.stop if sc else None)
    steps = steps if steps is not None else (sc.steps if sc else None)
    tau_sq = tau_sq if tau_sq is not None else (sc.tau_sq if sc else None)
    if start is None or stop is None or steps is None:
        raise ConfigError("sweep: start, stop and steps are required (config 'sweep' block or --range)")
    if steps < 1:
        raise ConfigError("sweep.steps: must be at least 1")
    values = np.linspace(start, stop, steps)
    n_scan = cfg.solver.scan_points
    rows = []
    if parameter == "tau_sq":
        if start < 0 or stop < 0:
            raise ConfigError("sweep: tau_sq values must be non-negative")
        m = cfg.build_material()
        for v in values:
            rows.append(_sweep_row(m, "tau_sq", float(v), float(v), n_scan))
        return rows
    if tau_sq is None:
        raise ConfigError("sweep.tau_sq: a fixed tau_sq is required when sweeping a material parameter")
    for v in values:
        rows.append(_sweep_row(_material_with(cfg, parameter, float(v)), parameter, float(v), tau_sq, n_scan))
    return rows


def _flatten(rows: list[dict]) -> tuple[list[str], list[list]]:
    width = max([3] + [r["n_roots"] for r in rows])
    head = ["parameter", "value", "tau_sq", "case", "n_roots"]
    for k in range(1, width + 1):
        head += [f"zeta_{k}", f"label_{k}", f"pi_{k}", f"pid_{k}"]
    table = []
    for r in rows:
        line = [r["parameter"], repr(r["value"]), repr(r["tau_sq"]), r["case"], r["n_roots"]]
        for k in range(width):
            if k < r["n_roots"]:
                lab = r["labels"][k] if k < len(r["labels"]) else None
                pi, pid = r["energies"][k]
                line += [repr(float(r["roots"][k])), lab or "", repr(pi), repr(pid)]
            else:
                line += ["", "", "", ""]
        table.append(line)
    return head, table


def write_rows_csv(rows: list[dict], path) -> None:
    """``sweep.csv``: one line per sweep value, four columns per root."""
    head, table = _flatten(rows)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(head)
        w.writerows(table)


def dual_curve(m: MaterialModel, rows: list[dict] | None = None, n: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """Samples of ``h(zeta) = 4 s zeta^2 (V*)'(zeta)`` covering every root in ``rows``."""
    zs = [z for r in rows or [] for z in r["roots"] if np.isfinite(z)]
    s = m.strain_scale
    if isinstance(m, QuadExp):
        hi = max(zs + [m.mu + 3.0 * m.nu])
        z = m.mu + (hi - m.mu) * np.linspace(0.0, 1.05, n + 1)[1:]
    else:
        span = max([1.0] + [abs(v) for v in zs])
        z = np.linspace(-1.1 * span, 1.1 * span, n)
        if m.p == 1:
            return z, np.full_like(z, np.nan)
    with np.errstate(all="ignore"):
        try:
            h = 4.0 * s * z * z * conjugate_gradient(m, z)
        except AntiplaneError:
            h = np.array([_safe_h(m, v) for v in z])
    return z, np.asarray(h, dtype=float)


def _safe_h(m: MaterialModel, z: float) -> float:
    try:
        return float(4.0 * m.strain_scale * z * z * conjugate_gradient(m, z))
    except AntiplaneError:
        return math.nan


def write_curve_csv(z: np.ndarray, h: np.ndarray, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zeta", "h"])
        for a, b in zip(z, h):
            w.writerow([repr(float(a)), repr(float(b))])
