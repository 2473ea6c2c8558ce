"""Benchmark experiment runner.

Builds the rotating-advection model problem on (-0.5,0.5)^2 x (0,1),
solves the interface system with the adaptive preconditioner in one or
both edge-construction variants, and reports iteration counts, primal
space sizes and phase timings as CSV plus an aligned text table.

Case families:
  tests     2x2x2 regular partition, two-viscosity subdomain groupings
  random    regular partition, per-element random viscosity 10^U(lo,hi)
  irregular seeded aggregated partition, random viscosity
"""

import csv
import logging
import math
import time
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .adaptive import adaptive_primal_space
from .decomposition import classify_globs, partition_irregular, partition_regular
from .discretization import Coefficients, assemble_system
from .mesh import box_mesh
from .scaling import build_scaling
from .solver import build_preconditioner, gmres_solve, interface_operator, interface_rhs
from .substructuring import build_subdomain_operator

log = logging.getLogger(__name__)

EX_DOMAIN = ((-0.5, 0.5), (-0.5, 0.5), (0.0, 1.0))


def example_coefficients(viscosity):
    """Model problem coefficients: divergence-free rotating velocity
    a = (-2 pi y, 2 pi x, sin(2 pi x)), reaction c = 1, source f = 0,
    u = 1 on the bottom face z = 0 and 0 on the rest of the boundary."""

    def velocity(p):
        return np.column_stack(
            [-2.0 * np.pi * p[:, 1], 2.0 * np.pi * p[:, 0], np.sin(2.0 * np.pi * p[:, 0])]
        )

    return Coefficients(
        viscosity=viscosity,
        velocity=velocity,
        reaction=lambda p: np.ones(len(p)),
        source=lambda p: np.zeros(len(p)),
        dirichlet=lambda p: np.where(p[:, 2] < 1e-12, 1.0, 0.0),
    )


# Octant numbering of the 2x2x2 partition: counterclockwise per layer
# starting at (-x,-y), bottom layer 1..4, top layer 5..8 stacked above.
_OCTANT = {(0, 0): 1, (1, 0): 2, (1, 1): 3, (0, 1): 4}

# Subdomains taking nu1 per grouping (octant numbers 1..8).
_TEST_GROUPS = {1: (1, 4, 5, 8), 2: (1, 5, 6, 8), 3: (1, 3, 6, 8)}


def octant_numbers(cent):
    """Octant index 1..8 of each centroid relative to the model box."""
    xpos = (cent[:, 0] > 0.0).astype(int)
    ypos = (cent[:, 1] > 0.0).astype(int)
    top = (cent[:, 2] > 0.5).astype(int)
    base = np.empty(len(cent), dtype=int)
    for (i, j), k in _OCTANT.items():
        base[(xpos == i) & (ypos == j)] = k
    return base + 4 * top


def subdomain_viscosity_tests(test_id, nu1, nu2):
    """Two-viscosity field for the 2x2x2 groupings; grouping 3 is the
    parity checkerboard (face-adjacent octants always differ)."""
    if test_id not in _TEST_GROUPS:
        raise ValueError(f"unknown viscosity grouping {test_id!r}, expected 1, 2 or 3")
    group = _TEST_GROUPS[test_id]

    def visc(cent):
        return np.where(np.isin(octant_numbers(cent), group), nu1, nu2)

    return visc


def random_viscosity(seed, lo_exp=-3.0, hi_exp=3.0):
    """Per-element viscosity 10^r, r ~ U(lo_exp, hi_exp), seeded."""

    def visc(cent):
        rng = np.random.default_rng(seed)
        return 10.0 ** rng.uniform(lo_exp, hi_exp, len(cent))

    return visc


def effective_m(mesh, n_subdomains):
    """Cells per subdomain axis, as if the partition were a regular cube
    grid: 6 tetrahedra per cell."""
    return max(2, round((mesh.n_elements / n_subdomains / 6.0) ** (1.0 / 3.0)))


def face_threshold(theta_f, m):
    return theta_f if theta_f > 0.0 else 1.0 + math.log(m)


# -- configuration ------------------------------------------------------------

_LIST_KEYS = ("m", "tests", "nu1", "nu2", "N", "inv_h")


@dataclass
class ExperimentConfig:
    case: str  # tests | random | irregular
    m: tuple = (4,)  # cells per subdomain axis
    n: int = 2  # subdomains per axis (regular partitions)
    tests: tuple = (1, 2, 3)  # viscosity groupings, case = tests
    nu1: tuple = (1e-1,)  # zipped with nu2
    nu2: tuple = (1e-5,)
    N: tuple = (8,)  # subdomain counts, case = irregular
    inv_h: tuple = (20,)  # global cells per axis, case = irregular
    seed: int = 0
    variant: str = "both"  # old | new | both
    theta_e: float = 10.0
    theta_f: float = 0.0  # 0: use 1 + log(m)
    rel_tol: float = 1e-8
    max_iter: int = 300
    out: str = "results"


def _as_tuple(v):
    return tuple(v) if isinstance(v, (list, tuple)) else (v,)


def validate_config(cfg):
    if cfg.case not in ("tests", "random", "irregular"):
        raise ValueError(f"unknown case {cfg.case!r}, expected tests, random or irregular")
    if cfg.variant not in ("old", "new", "both"):
        raise ValueError(f"unknown variant {cfg.variant!r}")
    if len(cfg.nu1) != len(cfg.nu2):
        raise ValueError("nu1 and nu2 must pair up")
    if any(v <= 0 for v in cfg.nu1 + cfg.nu2):
        raise ValueError("viscosities must be positive")
    if any(t not in (1, 2, 3) for t in cfg.tests):
        raise ValueError("tests entries must be 1, 2 or 3")
    if any(m < 2 for m in cfg.m):
        raise ValueError("m must be at least 2")
    if cfg.case == "tests" and cfg.n != 2:
        raise ValueError("viscosity groupings require a 2x2x2 partition (n = 2)")
    if cfg.n < 2:
        raise ValueError("n must be at least 2")
    if cfg.theta_e <= 1.0:
        raise ValueError("theta_e must exceed 1")
    return cfg


def load_config(path):
    """Read a flat TOML experiment file; every key has a default except
    the case name.  Scalar values are accepted where lists are allowed."""
    with open(path, "rb") as f:
        raw = tomllib.load(f)
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    if "case" not in raw:
        raise ValueError("config must name a case (tests, random or irregular)")
    for key in _LIST_KEYS:
        if key in raw:
            raw[key] = _as_tuple(raw[key])
    return validate_config(ExperimentConfig(**raw))


# -- running ------------------------------------------------------------------

CSV_HEADER = ("case", "variant", "N", "m", "iters", "pnumF", "pnumE",
              "setup_s", "gevp_s", "solve_s", "converged")


@dataclass
class ResultRow:
    case: str
    variant: str
    N: int
    m: int
    iters: int
    pnumF: int
    pnumE: int
    setup_s: float
    gevp_s: float
    solve_s: float
    converged: bool

    def cell(self):
        return f"{self.iters}({self.pnumF},{self.pnumE})"


@dataclass
class CaseSpec:
    label: str
    cells: tuple
    partition: object  # mesh -> Partition
    viscosity: object  # centroids -> per-element values
    N: int
    m: int


def case_specs(cfg):
    """Expand a config into concrete problem descriptions."""
    specs = []
    if cfg.case == "tests":
        for m in cfg.m:
            for nu1, nu2 in zip(cfg.nu1, cfg.nu2):
                for t in cfg.tests:
                    specs.append(CaseSpec(
                        label=f"test{t} m={m} nu={nu1:g}/{nu2:g}",
                        cells=(2 * m,) * 3,
                        partition=lambda mesh: partition_regular(mesh, (2, 2, 2)),
                        viscosity=subdomain_viscosity_tests(t, nu1, nu2),
                        N=8, m=m,
                    ))
    elif cfg.case == "random":
        for m in cfg.m:
            n = cfg.n
            specs.append(CaseSpec(
                label=f"random n={n} m={m} seed={cfg.seed}",
                cells=(n * m,) * 3,
                partition=lambda mesh, n=n: partition_regular(mesh, (n, n, n)),
                viscosity=random_viscosity(cfg.seed),
                N=n ** 3, m=m,
            ))
    else:  # irregular
        for inv_h in cfg.inv_h:
            for N in cfg.N:
                specs.append(CaseSpec(
                    label=f"irregular 1/h={inv_h} N={N} seed={cfg.seed}",
                    cells=(inv_h,) * 3,
                    partition=lambda mesh, N=N: partition_irregular(mesh, N, cfg.seed),
                    viscosity=random_viscosity(cfg.seed + 1),
                    N=N, m=0,  # filled from the mesh once built
                ))
    return specs


def _run_problem(cfg, spec):
    t0 = time.perf_counter()
    mesh = box_mesh(EX_DOMAIN, spec.cells)
    part = spec.partition(mesh)
    globs = classify_globs(mesh, part, mesh.boundary_nodes)
    system = assemble_system(mesh, example_coefficients(spec.viscosity))
    ops = [build_subdomain_operator(system, part, globs, i)
           for i in range(part.n_subdomains)]
    scaling = build_scaling(globs, ops)
    for op in ops:
        op.bsym_inverse()  # shared by both variants: charge to setup
    setup_s = time.perf_counter() - t0
    m = spec.m if spec.m else effective_m(mesh, part.n_subdomains)
    theta_f = face_threshold(cfg.theta_f, m)

    n_hat = globs.interface_nodes.shape[0]
    operator = interface_operator(ops, n_hat)
    rhs = interface_rhs(ops, n_hat)

    rows = []
    variants = ("old", "new") if cfg.variant == "both" else (cfg.variant,)
    for variant in variants:
        try:
            t1 = time.perf_counter()
            basis, _ = adaptive_primal_space(globs, ops, scaling, theta_f,
                                             cfg.theta_e, variant)
            gevp_s = time.perf_counter() - t1
            t2 = time.perf_counter()
            pc = build_preconditioner(ops, basis, scaling)
            rep = gmres_solve(operator, rhs, pc, rel_tol=cfg.rel_tol,
                              max_iter=cfg.max_iter)
            solve_s = time.perf_counter() - t2
        except Exception:
            log.exception("row failed: %s (%s)", spec.label, variant)
            continue
        row = ResultRow(spec.label, variant, part.n_subdomains, m,
                        rep.iterations, basis.pnumF, basis.pnumE,
                        setup_s, gevp_s, solve_s, rep.converged)
        rows.append(row)
        log.info("%-34s %-4s %s  gevp %.2fs solve %.2fs%s",
                 spec.label, variant, row.cell(), gevp_s, solve_s,
                 "" if rep.converged else "  NOT CONVERGED")
    return rows


def run_case(cfg):
    """Run every problem the config describes; a failing problem aborts
    its rows with a logged reason and the rest continue."""
    rows = []
    for spec in case_specs(cfg):
        try:
            rows.extend(_run_problem(cfg, spec))
        except Exception:
            log.exception("case failed: %s", spec.label)
    return rows


# -- reporting ----------------------------------------------------------------


def emit_tables(rows, out_dir):
    """Write results.csv and the aligned results.txt comparison table."""
    if not rows:
        raise ValueError("no result rows to emit")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "results.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(CSV_HEADER)
        for r in rows:
            w.writerow([r.case, r.variant, r.N, r.m, r.iters, r.pnumF, r.pnumE,
                        f"{r.setup_s:.3f}", f"{r.gevp_s:.3f}", f"{r.solve_s:.3f}",
                        str(r.converged).lower()])
    txt_path = out / "results.txt"
    txt_path.write_text(format_table(rows))
    return csv_path, txt_path


def format_table(rows):
    """Side-by-side text table, one line per problem, iters(pnumF,pnumE)
    cells per variant with the variant-specific time."""
    keys = []
    by_key = {}
    for r in rows:
        k = (r.case, r.N, r.m)
        if k not in by_key:
            keys.append(k)
            by_key[k] = {}
        by_key[k][r.variant] = r

    header = ("case", "N", "m", "old", "t_old[s]", "new", "t_new[s]")
    lines = [header]
    for case, N, m in keys:
        pair = by_key[(case, N, m)]
        line = [case, str(N), str(m)]
        for v in ("old", "new"):
            r = pair.get(v)
            if r is None:
                line += ["-", "-"]
            else:
                mark = "" if r.converged else "*"
                line += [r.cell() + mark, f"{r.gevp_s + r.solve_s:.2f}"]
        lines.append(tuple(line))
    widths = [max(len(row[i]) for row in lines) for i in range(len(header))]
    text = "\n".join(
        "  ".join(col.ljust(w) for col, w in zip(row, widths)).rstrip()
        for row in lines
    )
    if any(not r.converged for r in rows):
        text += "\n(* did not reach the residual tolerance)"
    return text + "\n"


def parse_results_csv(path):
    """Re-read an emitted results.csv into ResultRow records."""
    rows = []
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        for rec in reader:
            rows.append(ResultRow(
                case=rec["case"], variant=rec["variant"],
                N=int(rec["N"]), m=int(rec["m"]), iters=int(rec["iters"]),
                pnumF=int(rec["pnumF"]), pnumE=int(rec["pnumE"]),
                setup_s=float(rec["setup_s"]), gevp_s=float(rec["gevp_s"]),
                solve_s=float(rec["solve_s"]),
                converged=rec["converged"] == "true",
            ))
    return rows
