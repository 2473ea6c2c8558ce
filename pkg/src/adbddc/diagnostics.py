"""Machine-checkable invariants of the preconditioner theory.

Each check runs on small built-in model problems and returns a named
pass/fail record with the measured margin, so the CLI `check` command and
the acceptance tests share one implementation.  The checks cover: deluxe
partition of unity, the averaging projection property, Loewner bounds of
the parallel sum, eigenpair residuals of every glob pencil, the jump
energy bounds behind the threshold selection, field-of-values positivity
of the preconditioned operator, and the SPD-limit spectrum.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .adaptive import adaptive_primal_space, deluxe_jump_energy
from .decomposition import classify_globs, partition_regular
from .discretization import Coefficients, assemble_system
from .harness import EX_DOMAIN, example_coefficients, subdomain_viscosity_tests
from .linalg import parallel_sum
from .mesh import box_mesh
from .scaling import build_scaling
from .solver import (
    assemble_dense_schur,
    averaging_and_jump,
    build_preconditioner,
)
from .substructuring import build_subdomain_operator, glob_schur_block

log = logging.getLogger(__name__)

THETA_E = 10.0


@dataclass
class InvariantResult:
    name: str
    ok: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.ok else 'FAIL'}  {self.name}: {self.detail}"


def _build(mesh, coeffs, subs):
    part = partition_regular(mesh, subs)
    globs = classify_globs(mesh, part, mesh.boundary_nodes)
    system = assemble_system(mesh, coeffs)
    ops = [build_subdomain_operator(system, part, globs, i)
           for i in range(part.n_subdomains)]
    return globs, system, ops, build_scaling(globs, ops)


def model_case(m=4):
    """Rotating advection on the model box, viscosity jump 1e-1/1e-5
    across x = 0, 2x2x2 partition."""
    mesh = box_mesh(EX_DOMAIN, (2 * m,) * 3)
    coeffs = example_coefficients(subdomain_viscosity_tests(1, 1e-1, 1e-5))
    return _build(mesh, coeffs, (2, 2, 2))


def diffusion_case(m=3):
    """No advection, constant unit viscosity: the SPD limit."""
    mesh = box_mesh(EX_DOMAIN, (2 * m,) * 3)
    coeffs = Coefficients(
        viscosity=lambda cent: np.ones(len(cent)),
        velocity=lambda p: np.zeros((len(p), 3)),
        reaction=lambda p: np.ones(len(p)),
        source=lambda p: np.zeros(len(p)),
        dirichlet=lambda p: np.where(p[:, 2] < 1e-12, 1.0, 0.0),
    )
    return _build(mesh, coeffs, (2, 2, 2))


# -- individual checks --------------------------------------------------------


def check_partition_of_unity(globs, scaling, tol=1e-10):
    worst = 0.0
    for g in globs.globs:
        D = scaling.of(g)
        total = sum(D.values())
        worst = max(worst, np.abs(total - np.eye(g.size)).max())
    return InvariantResult(
        "partition-of-unity", worst <= tol,
        f"max |sum_i D_i - I| = {worst:.2e} over {len(globs.globs)} globs (tol {tol:g})")


def check_averaging_projection(pc, tol=1e-10, n_samples=5, seed=101):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_samples):
        wt = rng.standard_normal(pc.wt_size)
        e1, p1 = averaging_and_jump(pc, wt)
        e2, _ = averaging_and_jump(pc, e1)
        scale = max(1.0, np.abs(e1).max())
        worst = max(worst, np.abs(e2 - e1).max() / scale,
                    np.abs(e1 + p1 - wt).max() / scale)
    return InvariantResult(
        "averaging-projection", worst <= tol,
        f"max |E_D^2 - E_D| = {worst:.2e} on {n_samples} samples (tol {tol:g})")


def check_parallel_sum_loewner(globs, ops, tol=1e-9):
    worst = 0.0
    for F in globs.faces:
        i, j = F.sharers
        Bi = glob_schur_block(ops[i], F)
        Bj = glob_schur_block(ops[j], F)
        P = parallel_sum(Bi, Bj)
        scale = max(np.abs(Bi).max(), np.abs(Bj).max())
        for B in (Bi, Bj):
            lam = scipy.linalg.eigvalsh(B - P)
            worst = max(worst, -lam.min() / scale)
    return InvariantResult(
        "parallel-sum-loewner", worst <= tol,
        f"max Loewner violation of A:B <= A, B: {worst:.2e} relative "
        f"over {len(globs.faces)} faces (tol {tol:g})")


def _pencil_residual(rep):
    worst = 0.0
    B, Bt = rep.pencil_left, rep.pencil_right
    nb, nt = np.linalg.norm(B), np.linalg.norm(Bt)
    for k, lam in enumerate(rep.eigenvalues):
        v = rep.vectors[:, k]
        nv = np.linalg.norm(v)
        if rep.degenerate[k]:
            r = max(np.linalg.norm(B @ v) / (nb * nv),
                    np.linalg.norm(Bt @ v) / (nt * nv))
        elif np.isinf(lam):
            r = np.linalg.norm(Bt @ v) / (nt * nv)
        else:
            r = (np.linalg.norm(B @ v - lam * (Bt @ v))
                 / ((nb + abs(lam) * nt) * nv))
        worst = max(worst, r)
    return worst


def check_pencil_residuals(report_sets, tol=1e-9):
    worst, count = 0.0, 0
    for reports in report_sets:
        for rep in reports:
            worst = max(worst, _pencil_residual(rep))
            count += 1
    return InvariantResult(
        "pencil-residuals", worst <= tol,
        f"max relative eigenpair residual = {worst:.2e} over {count} pencils (tol {tol:g})")


def _sample_jump_ratio(rng, G, ops, scaling, rows, difference_space):
    """One random sample obeying the glob's constraints; returns
    (jump energy, total Bsym energy)."""
    sharers = list(G.sharers)
    idx = {s: ops[s].glob_index(G) for s in sharers}
    w = {s: rng.standard_normal(ops[s].n_B) for s in sharers}
    if rows.size:
        rp = np.linalg.pinv(rows)
        base = w[sharers[0]][idx[sharers[0]]]
        if difference_space:
            chk = np.concatenate([w[s][idx[s]] - base for s in sharers[1:]])
            chk = chk - rp @ (rows @ chk)
            for block, s in enumerate(sharers[1:]):
                w[s][idx[s]] = base + chk[block * G.size:(block + 1) * G.size]
        else:
            for s in sharers[1:]:
                e = w[s][idx[s]]
                w[s][idx[s]] = e + rp @ (rows @ (base - e))
    lhs = deluxe_jump_energy(G, ops, scaling, [w[s][idx[s]] for s in sharers])
    rhs = sum(w[s] @ ops[s].Bsym @ w[s] for s in sharers)
    return lhs, rhs


def check_lemma_bounds(globs, ops, scaling, reports, theta_f, theta_e,
                       n_samples=20, slack=1e-8, seed=211):
    """Jump energy of constrained samples against the selection bounds:
    2 Theta_F per face, 2 Theta_E per old edge, 2 (n-1) Theta_E per new
    edge."""
    gm = {globs.glob_id(g): g for g in globs.globs}
    rng = np.random.default_rng(seed)
    worst, worst_name = -np.inf, "-"
    for rep in reports:
        if rep.variant == "face":
            const, diff = 2.0 * theta_f, False
        elif rep.variant == "edge_old":
            const, diff = 2.0 * theta_e, False
        elif rep.variant == "edge_new":
            G = gm[rep.glob_id]
            const, diff = 2.0 * (len(G.sharers) - 1) * theta_e, True
        else:
            continue
        G = gm[rep.glob_id]
        for _ in range(n_samples):
            lhs, rhs = _sample_jump_ratio(rng, G, ops, scaling,
                                          rep.constraint_matrix, diff)
            margin = lhs - const * rhs
            if margin > worst:
                worst, worst_name = margin, rep.glob_id
            if margin > slack * max(1.0, rhs):
                return InvariantResult(
                    "lemma-bounds", False,
                    f"bound violated on {rep.glob_id} ({rep.variant}): "
                    f"jump {lhs:.3e} > {const:g} x energy {rhs:.3e}")
    return InvariantResult(
        "lemma-bounds", True,
        f"worst margin {worst:.2e} (glob {worst_name}), "
        f"{n_samples} samples per glob")


def _dense_preconditioned(ops, globs, pc):
    n = globs.interface_nodes.shape[0]
    S = assemble_dense_schur(ops, n)
    T = np.column_stack([pc.apply(S[:, k]) for k in range(n)])
    return S, T


def check_field_of_values(globs, ops, pc, n_samples=100, growth_cap=1e4, seed=307):
    S, T = _dense_preconditioned(ops, globs, pc)
    Bhat = 0.5 * (S + S.T)
    rng = np.random.default_rng(seed)
    lo, hi = np.inf, 0.0
    for _ in range(n_samples):
        w = rng.standard_normal(len(S))
        Bw, Tw = Bhat @ w, T @ w
        den = w @ Bw
        lo = min(lo, (Bw @ Tw) / den)
        hi = max(hi, (Tw @ (Bhat @ Tw)) / den)
    return InvariantResult(
        "field-of-values", lo > 0.0 and hi < growth_cap,
        f"min <Bhat w, T w>/<Bhat w, w> = {lo:.3f} (> 0), "
        f"max <Bhat Tw, Tw>/<Bhat w, w> = {hi:.3e} (< {growth_cap:g}) "
        f"over {n_samples} vectors")


def check_spd_limit(theta_f, theta_e, tol=1e-8):
    globs, system, ops, scaling = diffusion_case()
    basis, _ = adaptive_primal_space(globs, ops, scaling, theta_f, theta_e, "old")
    pc = build_preconditioner(ops, basis, scaling)
    S, T = _dense_preconditioned(ops, globs, pc)
    lam = scipy.linalg.eigvals(T)
    lam = lam.real  # similar to SPD here; imaginary parts are roundoff
    cap = 10.0 * 4.0 * max(theta_f, theta_e) ** 2
    ok = lam.min() >= 1.0 - tol and lam.max() <= cap
    return InvariantResult(
        "spd-limit", ok,
        f"lambda in [{lam.min():.12f}, {lam.max():.3f}], "
        f"required [1 - {tol:g}, {cap:g}]")


# -- suite --------------------------------------------------------------------


def run_invariant_suite(m=4, theta_e=THETA_E):
    """All invariant checks on the built-in model problems."""
    theta_f = 1.0 + math.log(m)
    globs, system, ops, scaling = model_case(m)
    results = [check_partition_of_unity(globs, scaling),
               check_parallel_sum_loewner(globs, ops)]

    spaces = {v: adaptive_primal_space(globs, ops, scaling, theta_f, theta_e, v)
              for v in ("old", "new")}
    results.append(check_pencil_residuals([r for _, r in spaces.values()]))
    for variant, (basis, reports) in spaces.items():
        pc = build_preconditioner(ops, basis, scaling)
        res = check_averaging_projection(pc)
        res.name += f" ({variant})"
        results.append(res)
        res = check_field_of_values(globs, ops, pc)
        res.name += f" ({variant})"
        results.append(res)
        res = check_lemma_bounds(globs, ops, scaling, reports, theta_f, theta_e)
        res.name += f" ({variant})"
        results.append(res)

    results.append(check_spd_limit(theta_f, theta_e))
    for r in results:
        log.info(r.line())
    return results
