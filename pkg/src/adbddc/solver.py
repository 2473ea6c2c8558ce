"""BDDC preconditioner assembly and the preconditioned GMRES driver.

The interface system S_hat u = g_hat (nodal coordinates) is solved by full
left-preconditioned GMRES.  The preconditioner works in the transformed
dof system of the primal basis: per subdomain the transformed Schur
operator splits into dual and primal blocks; duals are condensed locally
and the primal-coupled coarse problem is solved directly.  Written as
operators,

    M^-1 = Qhat^T Rtil^T Dtil Stil^-1 Dtil^T Rtil Qhat,

with Qhat the assembled per-glob change of basis, Rtil the injection from
the transformed interface into the partially coupled space (duals per
subdomain, shared primal block) and Dtil the subassembled deluxe scaling.
All factorizations of Stil blocks are general LU: the operator is
nonsymmetric.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import NumericalError

log = logging.getLogger(__name__)


@dataclass
class SolveReport:
    iterations: int
    converged: bool
    solution: np.ndarray
    residual_history: list  # true residuals ||b - A x_k||
    preconditioned_history: list  # relative preconditioned residuals
    setup_time: float = 0.0
    solve_time: float = 0.0
    gevp_time: float = 0.0
    pnumF: int = 0
    pnumE: int = 0
    extra: dict = field(default_factory=dict)


class BddcPreconditioner:
    """M^-1 = Rtil^T Dtil Stil^-1 Dtil^T Rtil in the transformed dof system.

    Setup transforms each subdomain Schur operator, factorizes its dual
    block (certifying an SPD symmetric part) and assembles and factorizes
    the coarse primal problem.
    """

    def __init__(self, ops, primal, scaling):
        self.ops = sorted(ops, key=lambda o: o.sub_id)
        self.primal = primal
        self.scaling = scaling
        globs = primal.globs
        self.n_hat = globs.interface_nodes.shape[0]
        self.n_primal = primal.n_primal_total
        if self.n_primal == 0:
            raise NumericalError("empty primal space: no coarse problem to anchor the solver")
        self._glob_pos = [globs.interface_index(g.nodes) for g in globs.globs]

        # primal dofs live at the leading transformed positions of their glob
        primal_pos = np.empty(self.n_primal, dtype=int)
        for pos, (Q, k), off in zip(self._glob_pos, primal.transforms, primal.glob_primal_offset):
            primal_pos[off:off + k] = pos[:k]
        self.primal_pos = primal_pos

        self.dual_loc = []  # local dual positions per subdomain
        self.primal_loc = []
        self.gprimal = []  # global primal ids per subdomain
        self.gdual_pos = []  # interface positions of the dual dofs
        self.dual_lu = []
        self.SdP = []  # dual x primal coupling
        self.SPd = []
        self.Dbar = []  # transformed scaling, dense per subdomain
        offsets = []
        total = 0
        coarse = np.zeros((self.n_primal, self.n_primal))
        for op in self.ops:
            loc, gids = primal.subdomain_primal(op)
            dual = np.setdiff1d(np.arange(op.n_B), loc)
            Qi = primal.subdomain_transform(op)
            Sbar = Qi @ op.S @ Qi.T
            Dbar = np.zeros((op.n_B, op.n_B))
            for g, Q, k, idx, off in primal.glob_entries(op):
                Dg = scaling.of(g)[op.sub_id]
                Dbar[np.ix_(idx, idx)] = Q @ Dg @ Q.T
            Sdd = Sbar[np.ix_(dual, dual)]
            if dual.size:
                try:
                    scipy.linalg.cho_factor(0.5 * (Sdd + Sdd.T))
                except scipy.linalg.LinAlgError as exc:
                    raise NumericalError(
                        f"dual block of subdomain {op.sub_id} lost positive definiteness"
                    ) from exc
                lu = scipy.linalg.lu_factor(Sdd)
            else:
                lu = None
            SdP = Sbar[np.ix_(dual, loc)]
            SPd = Sbar[np.ix_(loc, dual)]
            SPP = Sbar[np.ix_(loc, loc)]
            contrib = SPP - SPd @ scipy.linalg.lu_solve(lu, SdP) if dual.size else SPP
            coarse[np.ix_(gids, gids)] += contrib

            self.dual_loc.append(dual)
            self.primal_loc.append(loc)
            self.gprimal.append(gids)
            self.gdual_pos.append(op.iface_index[dual])
            self.dual_lu.append(lu)
            self.SdP.append(SdP)
            self.SPd.append(SPd)
            self.Dbar.append(Dbar)
            offsets.append(total)
            total += dual.size
        self.dual_offsets = offsets
        self.n_dual_total = total
        self.wt_size = total + self.n_primal

        self.coarse = coarse
        self.coarse_lu = scipy.linalg.lu_factor(coarse)
        diag = np.abs(np.diag(self.coarse_lu[0]))
        if diag.size and diag.min() <= 1e-14 * max(diag.max(), 1.0):
            bad = int(np.argmin(diag))
            gi = int(np.searchsorted(primal.glob_primal_offset, bad, side="right")) - 1
            gid = globs.glob_id(globs.globs[gi])
            raise NumericalError(
                f"coarse matrix is singular at primal dof {bad} "
                f"(glob {gid}, constraint {bad - primal.glob_primal_offset[gi]})"
            )
        log.info("coarse problem dimension %d (pnumF=%d, pnumE=%d, vertices=%d)",
                 self.n_primal, primal.pnumF, primal.pnumE, primal.n_vertex)

    # -- building-block operators ------------------------------------------

    def _dual_slice(self, i):
        off = self.dual_offsets[i]
        return slice(off, off + self.dual_loc[i].size)

    def transform(self, u, transpose=False):
        """Assembled change of basis Qhat (or its transpose) on interface
        vectors."""
        return self.primal.apply_interface(self._glob_pos, u, transpose)

    def inject(self, v):
        """Rtil: transformed interface vector -> partially coupled vector."""
        w = np.empty(self.wt_size)
        for i in range(len(self.ops)):
            w[self._dual_slice(i)] = v[self.gdual_pos[i]]
        w[self.n_dual_total:] = v[self.primal_pos]
        return w

    def inject_t(self, w):
        """Rtil^T: sums subdomain dual copies back onto interface positions."""
        v = np.zeros(self.n_hat)
        for i in range(len(self.ops)):
            v[self.gdual_pos[i]] += w[self._dual_slice(i)]
        v[self.primal_pos] += w[self.n_dual_total:]
        return v

    def scale(self, w, transpose=False):
        """Dtil (or Dtil^T): per-subdomain transformed deluxe weights,
        subassembled over the partially coupled space."""
        out = np.zeros_like(w)
        wp = w[self.n_dual_total:]
        acc = np.zeros(self.n_primal)
        for i, op in enumerate(self.ops):
            x = np.zeros(op.n_B)
            x[self.dual_loc[i]] = w[self._dual_slice(i)]
            x[self.primal_loc[i]] = wp[self.gprimal[i]]
            D = self.Dbar[i]
            y = D.T @ x if transpose else D @ x
            out[self._dual_slice(i)] = y[self.dual_loc[i]]
            acc[self.gprimal[i]] += y[self.primal_loc[i]]
        out[self.n_dual_total:] = acc
        return out

    def tilde_solve(self, r):
        """Stil^-1 by local dual elimination and the coarse solve."""
        u = np.empty_like(r)
        rp = r[self.n_dual_total:].copy()
        ys = []
        for i in range(len(self.ops)):
            if self.dual_loc[i].size:
                y = scipy.linalg.lu_solve(self.dual_lu[i], r[self._dual_slice(i)])
                rp[self.gprimal[i]] -= self.SPd[i] @ y
            else:
                y = np.zeros(0)
            ys.append(y)
        up = scipy.linalg.lu_solve(self.coarse_lu, rp)
        for i in range(len(self.ops)):
            if self.dual_loc[i].size:
                u[self._dual_slice(i)] = ys[i] - scipy.linalg.lu_solve(
                    self.dual_lu[i], self.SdP[i] @ up[self.gprimal[i]]
                )
        u[self.n_dual_total:] = up
        return u

    def apply(self, r):
        """M^-1 r on nodal interface vectors."""
        v = self.transform(r)
        w = self.inject(v)
        w = self.scale(w, transpose=True)
        w = self.tilde_solve(w)
        w = self.scale(w)
        v = self.inject_t(w)
        return self.transform(v, transpose=True)


def build_preconditioner(ops, primal, scaling):
    return BddcPreconditioner(ops, primal, scaling)


def averaging_and_jump(pc, wt):
    """(E_D wt, P_D wt) with E_D = Rtil Rtil^T Dtil on the partially
    coupled space; diagnostic use."""
    e = pc.inject(pc.inject_t(pc.scale(wt)))
    return e, wt - e


# -- assembled interface system ---------------------------------------------


def interface_operator(ops, n):
    """Matrix action of S_hat = sum R^(i)T S^(i) R^(i)."""

    def apply(u):
        out = np.zeros(n)
        for op in ops:
            out[op.iface_index] += op.S @ u[op.iface_index]
        return out

    return apply


def interface_rhs(ops, n):
    g = np.zeros(n)
    for op in ops:
        g[op.iface_index] += op.g
    return g


def assemble_dense_schur(ops, n):
    S = np.zeros((n, n))
    for op in ops:
        S[np.ix_(op.iface_index, op.iface_index)] += op.S
    return S


def direct_schur_solve(ops, globs, rhs):
    """Dense assembled interface solve; oracle for the iterative path."""
    n = globs.interface_nodes.shape[0]
    S = assemble_dense_schur(ops, n)
    try:
        return scipy.linalg.solve(S, rhs)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError("assembled interface operator is singular") from exc


def gmres_solve(operator, rhs, pc, rel_tol=1e-8, max_iter=300):
    """Full (non-restarted) left-preconditioned GMRES.

    Stops when the preconditioned residual drops below rel_tol relative to
    ||M^-1 rhs||, or at max_iter.  The iterate is formed explicitly every
    step so the reported residual history is made of true residuals.
    """
    t0 = time.perf_counter()
    n = rhs.shape[0]
    z0 = pc.apply(rhs)
    ref = np.linalg.norm(z0)
    if ref == 0.0:
        return SolveReport(0, True, np.zeros(n), [0.0], [0.0],
                           solve_time=time.perf_counter() - t0)

    V = np.zeros((n, max_iter + 1))
    H = np.zeros((max_iter + 1, max_iter))
    V[:, 0] = z0 / ref
    e1 = np.zeros(max_iter + 1)
    e1[0] = ref
    x = np.zeros(n)
    true_hist, pre_hist = [], []
    converged = False
    it = 0
    for j in range(max_iter):
        w = pc.apply(operator(V[:, j]))
        for i in range(j + 1):
            H[i, j] = V[:, i] @ w
            w -= H[i, j] * V[:, i]
        for i in range(j + 1):  # second orthogonalization pass
            c = V[:, i] @ w
            H[i, j] += c
            w -= c * V[:, i]
        H[j + 1, j] = np.linalg.norm(w)

        y = scipy.linalg.lstsq(H[: j + 2, : j + 1], e1[: j + 2], lapack_driver="gelsd")[0]
        res = np.linalg.norm(e1[: j + 2] - H[: j + 2, : j + 1] @ y)
        x = V[:, : j + 1] @ y
        it = j + 1
        pre_hist.append(res / ref)
        true_hist.append(np.linalg.norm(rhs - operator(x)))
        if pre_hist[-1] <= rel_tol:
            converged = True
            break
        if H[j + 1, j] <= 1e-14 * ref:
            log.info("GMRES breakdown at iteration %d (residual %.3e)", it, pre_hist[-1])
            converged = pre_hist[-1] <= rel_tol
            break
        V[:, j + 1] = w / H[j + 1, j]
    else:
        log.warning("GMRES reached max_iter=%d (residual %.3e)", max_iter, pre_hist[-1])

    return SolveReport(it, converged, x, true_hist, pre_hist,
                       solve_time=time.perf_counter() - t0)


def recover_interior(ops, globs, system, u_hat):
    """Back-substitute the interface solution into the interiors; returns
    the full nodal solution with Dirichlet values re-applied."""
    u = system.dirichlet_values.copy()
    u[globs.interface_nodes] = u_hat
    for op in ops:
        ub = u[op.interface_nodes]
        u[op.interior_nodes] = op.lu_II.solve(op.f_I - op.A_IB @ ub)
    return u
