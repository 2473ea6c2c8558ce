"""Adaptive primal space construction.

Faces and edges get generalized eigenproblems built from deluxe-scaled
interface blocks; eigenvectors whose eigenvalues reach the threshold become
primal constraints, enforced through a per-glob orthogonal change of basis.

Two edge constructions are provided.  The coupled variant ("old") solves a
pencil over the edge dofs with a parallel-sum right-hand side across all
sharers.  The prior-aware variant ("new") works on the difference unknowns
between sharers, augments each sharer's Schur block with its previously
selected primal dofs (vertices and face constraints), and eliminates the
shared average unknowns, so constraints already enforced elsewhere are not
rediscovered on the edge.
"""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .linalg import (
    NumericalError,
    parallel_sum,
    parallel_sum_chain,
    pseudo_inverse,
    sym_pencil_gevp,
)
from .substructuring import edge_block_with_priors, glob_principal_block, glob_schur_block

log = logging.getLogger(__name__)

SVD_CUT = 1e-10


@dataclass
class GevpReport:
    glob_id: str
    variant: str  # "face" | "edge_old" | "edge_new"
    eigenvalues: np.ndarray  # non-increasing, +inf allowed
    n_primal: int
    constraint_matrix: np.ndarray  # rows over glob dofs (edge_new: stacked differences)
    n_dofs: int
    vectors: np.ndarray = None  # columns aligned with eigenvalues
    degenerate: np.ndarray = None  # mask of common-nullspace modes
    pencil_left: np.ndarray = None
    pencil_right: np.ndarray = None


def _solve_pencil(B, Btil, glob_id):
    try:
        return sym_pencil_gevp(B, Btil)
    except (ValueError, NumericalError) as exc:
        raise NumericalError(f"eigenproblem on glob {glob_id} failed: {exc}") from exc


def face_gevp(glob_id, F, ops, scaling, theta_f):
    """Face eigenproblem between the two sharers i, j:
    B_F v = lambda (Btil_F^(i) : Btil_F^(j)) v with
    B_F = D_j^T B^(i) D_j + D_i^T B^(j) D_i."""
    i, j = F.sharers
    D = scaling.of(F)
    Bi = glob_principal_block(ops[i], F)
    Bj = glob_principal_block(ops[j], F)
    B_F = D[j].T @ Bi @ D[j] + D[i].T @ Bj @ D[i]
    B_F = 0.5 * (B_F + B_F.T)
    Btil = parallel_sum(glob_schur_block(ops[i], F), glob_schur_block(ops[j], F))
    pairs = _solve_pencil(B_F, Btil, glob_id)
    mask = pairs.selection_mask(theta_f)
    rows = (B_F @ pairs.vectors[:, mask]).T
    return GevpReport(glob_id, "face", pairs.values, int(mask.sum()), rows, F.size,
                      pairs.vectors, pairs.degenerate, B_F, Btil)


def edge_gevp_old(glob_id, E, ops, scaling, theta_e):
    """Coupled edge eigenproblem over the edge dofs, all sharers at once."""
    sharers = list(E.sharers)
    D = scaling.of(E)
    B_E = np.zeros((E.size, E.size))
    for i in sharers:
        Bi = glob_principal_block(ops[i], E)
        for k in sharers:
            if k != i:
                B_E += D[k].T @ Bi @ D[k]
    B_E = 0.5 * (B_E + B_E.T)
    Btil = parallel_sum_chain([glob_schur_block(ops[s], E) for s in sharers])
    pairs = _solve_pencil(B_E, Btil, glob_id)
    mask = pairs.selection_mask(theta_e)
    rows = (B_E @ pairs.vectors[:, mask]).T
    return GevpReport(glob_id, "edge_old", pairs.values, int(mask.sum()), rows, E.size,
                      pairs.vectors, pairs.degenerate, B_E, Btil)


def edge_gevp_new(glob_id, E, ops, scaling, theta_e, prior_blocks):
    """Prior-aware edge eigenproblem on the difference unknowns.

    prior_blocks maps sharer id -> (EE, EH, HE, HH), the sharer's Schur
    block keeping the edge dofs and its prior primal dofs, expressed in the
    face-transformed dof system.

    The pencil is M_E vch = lambda Btiltil_E vch over the stacked
    differences vch = (w_k - w_1)_{k>1}; Btiltil eliminates the average
    edge value and all prior components from the congruence-assembled
    right-hand side.
    """
    sharers = list(E.sharers)
    n, ne = len(sharers), E.size
    D = [scaling.of(E)[s] for s in sharers]
    nC = (n - 1) * ne

    # difference map: w_i - w_avg for w_1 = 0, w_k = check_w_k
    J_rows = []
    for i in range(n):
        blocks = [(np.eye(ne) if i == k else np.zeros((ne, ne))) - D[k] for k in range(1, n)]
        J_rows.append(np.hstack(blocks))
    M = np.zeros((nC, nC))
    for i, s in enumerate(sharers):
        Bi = glob_principal_block(ops[s], E)
        M += J_rows[i].T @ Bi @ J_rows[i]
    M = 0.5 * (M + M.T)

    # congruence assembly over (differences, average edge value, priors)
    nH = [prior_blocks[s][3].shape[0] for s in sharers]
    width = nC + ne + sum(nH)
    Btil = np.zeros((width, width))
    off = nC + ne
    for i, s in enumerate(sharers):
        EE, EH, HE, HH = prior_blocks[s]
        T = np.hstack([J_rows[i], np.eye(ne)])
        Btil[: nC + ne, : nC + ne] += T.T @ EE @ T
        hs = slice(off, off + nH[i])
        Btil[: nC + ne, hs] += T.T @ EH
        Btil[hs, : nC + ne] += HE @ T
        Btil[hs, hs] += HH
        off += nH[i]
    Btil = 0.5 * (Btil + Btil.T)

    KK = Btil[:nC, :nC]
    KR = Btil[:nC, nC:]
    RR = Btil[nC:, nC:]
    try:
        c = scipy.linalg.cho_factor(RR)
        Btiltil = KK - KR @ scipy.linalg.cho_solve(c, KR.T)
    except scipy.linalg.LinAlgError:
        Rp = pseudo_inverse(RR)
        rank = int(np.linalg.matrix_rank(RR, tol=SVD_CUT * max(np.abs(RR).max(), 1e-300)))
        log.info("edge %s: singular elimination block, pseudo-inverse rank %d/%d",
                 glob_id, rank, RR.shape[0])
        Btiltil = KK - KR @ Rp @ KR.T
    Btiltil = 0.5 * (Btiltil + Btiltil.T)

    pairs = _solve_pencil(M, Btiltil, glob_id)
    mask = pairs.selection_mask(theta_e)
    rows = (M @ pairs.vectors[:, mask]).T
    return GevpReport(glob_id, "edge_new", pairs.values, int(mask.sum()), rows, ne,
                      pairs.vectors, pairs.degenerate, M, Btiltil)


def deluxe_jump_energy(G, ops, scaling, wlist):
    """Deluxe jump form on glob G for one glob-vector per sharer:
    sum_i <B_G^(i) d_i, d_i> with d_i = w_i - sum_k D^(k) w_k."""
    sharers = list(G.sharers)
    D = scaling.of(G)
    avg = sum(D[s] @ w for s, w in zip(sharers, wlist))
    total = 0.0
    for s, w in zip(sharers, wlist):
        d = w - avg
        total += float(d @ glob_principal_block(ops[s], G) @ d)
    return total


def reduce_edge_constraints(report):
    """Map difference-space edge constraints to rows over the edge dofs.

    Each constraint row splits into its per-sharer difference blocks; the
    stacked blocks are compressed by SVD, keeping right-singular directions
    with sigma >= 1e-10 sigma_max.  Imposing the reduced rows on every
    pairwise difference implies the original constraints.
    """
    ne = report.n_dofs
    rows = report.constraint_matrix
    if rows.size == 0:
        return np.zeros((0, ne))
    stacked = rows.reshape(-1, ne)
    _, s, Vt = scipy.linalg.svd(stacked, full_matrices=False)
    keep = s >= SVD_CUT * s[0] if s.size else np.zeros(0, dtype=bool)
    return Vt[keep]


def build_change_of_basis(n_dofs, rows):
    """Orthogonal transformation whose leading rows span the constraints.

    Returns (Q, r): Q is n x n orthogonal, rows Q[:r] are an orthonormal
    basis of the constraint row space, the rest complete it.  Rank-deficient
    input rows are dropped with a log entry.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.size == 0:
        return np.eye(n_dofs), 0
    if rows.shape[1] != n_dofs:
        raise ValueError(f"constraint rows have width {rows.shape[1]}, expected {n_dofs}")
    _, s, Vt = scipy.linalg.svd(rows, full_matrices=True)
    r = int(np.count_nonzero(s >= SVD_CUT * s[0]))
    if r < rows.shape[0]:
        log.info("change of basis: dropped %d dependent constraint rows", rows.shape[0] - r)
    return Vt, r


class PrimalBasis:
    """Per-glob change-of-basis transformations and the primal numbering.

    Transformed dof g of a glob lives at the same local/global position as
    the glob's g-th nodal dof; the leading n_primal transformed dofs of each
    glob are primal, vertices are always fully primal.
    """

    def __init__(self, globs, transforms, variant):
        self.globs = globs
        self.variant = variant
        self.transforms = transforms  # list of (Q, n_primal) per glob
        offsets = []
        total = 0
        for (_, k) in transforms:
            offsets.append(total)
            total += k
        self.glob_primal_offset = offsets
        self.n_primal_total = total
        self.pnumF = sum(k for g, (_, k) in zip(globs.globs, transforms) if g.kind == "face")
        self.pnumE = sum(k for g, (_, k) in zip(globs.globs, transforms) if g.kind == "edge")
        self.n_vertex = sum(k for g, (_, k) in zip(globs.globs, transforms) if g.kind == "vertex")

    def glob_entries(self, op):
        """(glob, Q, n_primal, local positions, primal offset) for every
        glob on the subdomain's boundary."""
        out = []
        for g, (Q, k), off in zip(self.globs.globs, self.transforms, self.glob_primal_offset):
            if op.sub_id in g.sharers:
                out.append((g, Q, k, op.glob_index(g), off))
        return out

    def subdomain_transform(self, op):
        """Dense orthogonal transformation of the subdomain's B dofs."""
        Qi = np.eye(op.n_B)
        for g, Q, k, idx, _ in self.glob_entries(op):
            Qi[np.ix_(idx, idx)] = Q
        return Qi

    def subdomain_primal(self, op):
        """(local primal positions, global primal ids) for a subdomain, in
        matching order."""
        loc, glob_ids = [], []
        for g, Q, k, idx, off in self.glob_entries(op):
            loc.extend(idx[:k])
            glob_ids.extend(range(off, off + k))
        return np.array(loc, dtype=int), np.array(glob_ids, dtype=int)

    def apply_interface(self, globs_index, u, transpose=False):
        """Apply the assembled transformation (or its transpose) to a
        global interface vector; globs_index caches per-glob positions."""
        out = u.copy()
        for (Q, k), idx in zip(self.transforms, globs_index):
            if Q is not None:
                out[idx] = (Q.T if transpose else Q) @ u[idx]
        return out


def assemble_primal_space(reports, globs, variant):
    """Combine per-glob reports into the primal basis.

    reports maps glob id -> GevpReport for faces and edges of the chosen
    variant; vertices are implicit and always primal.
    """
    transforms = []
    for g in globs.globs:
        gid = globs.glob_id(g)
        if g.kind == "vertex":
            transforms.append((np.eye(g.size), g.size))
            continue
        rep = reports[gid]
        rows = rep.constraint_matrix
        if g.kind == "edge" and rep.variant == "edge_new":
            rows = reduce_edge_constraints(rep)
        Q, r = build_change_of_basis(g.size, rows)
        transforms.append((Q, r))
    return PrimalBasis(globs, transforms, variant)


def adaptive_primal_space(globs, ops_list, scaling, theta_f, theta_e, variant):
    """Run all glob eigenproblems and build the primal space.

    variant is "old" or "new"; faces are processed first in either case,
    since the new edge construction consumes the face constraints as
    priors.  Returns (PrimalBasis, list of GevpReports).
    """
    ops = {op.sub_id: op for op in ops_list}
    reports = {}
    for F in globs.faces:
        gid = globs.glob_id(F)
        reports[gid] = face_gevp(gid, F, ops, scaling, theta_f)

    if variant == "old":
        for E in globs.edges:
            gid = globs.glob_id(E)
            reports[gid] = edge_gevp_old(gid, E, ops, scaling, theta_e)
    elif variant == "new":
        face_q = {}
        for F in globs.faces:
            rep = reports[globs.glob_id(F)]
            face_q[globs.glob_id(F)] = build_change_of_basis(F.size, rep.constraint_matrix)
        trans_inv = {}
        priors = {}
        for op in ops_list:
            # congruence Qi Binv Qi^T where Qi is identity off the face
            # blocks: update only face rows and columns
            Minv = op.bsym_inverse().copy()
            prior_idx = []
            for g in globs.globs:
                if op.sub_id not in g.sharers:
                    continue
                idx = op.glob_index(g)
                if g.kind == "vertex":
                    prior_idx.extend(idx)
                elif g.kind == "face":
                    Q, r = face_q[globs.glob_id(g)]
                    Minv[idx, :] = Q @ Minv[idx, :]
                    Minv[:, idx] = Minv[:, idx] @ Q.T
                    prior_idx.extend(idx[:r])
            trans_inv[op.sub_id] = Minv
            priors[op.sub_id] = np.array(prior_idx, dtype=int)
        for E in globs.edges:
            gid = globs.glob_id(E)
            blocks = {}
            for s in E.sharers:
                op = ops[s]
                blocks[s] = edge_block_with_priors(
                    op, op.glob_index(E), priors[s], bsym_inv=trans_inv[s]
                )
            reports[gid] = edge_gevp_new(gid, E, ops, scaling, theta_e, blocks)
    else:
        raise ValueError(f"unknown variant {variant!r}")

    return assemble_primal_space(reports, globs, variant), list(reports.values())


def dump_gevp_reports(reports, path):
    """CSV dump: glob_id,variant,n_dofs,n_primal,lambda_max,lambda_min."""
    with open(path, "w") as fh:
        fh.write("glob_id,variant,n_dofs,n_primal,lambda_max,lambda_min\n")
        for r in reports:
            finite = r.eigenvalues
            lmax = finite[0] if finite.size else np.nan
            lmin = finite[-1] if finite.size else np.nan
            fh.write(f"{r.glob_id},{r.variant},{r.n_dofs},{r.n_primal},{lmax:g},{lmin:g}\n")
