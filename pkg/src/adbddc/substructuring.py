"""Per-subdomain block operators and interface Schur complements.

Each subdomain gets its locally assembled bilinear form (integrals
restricted to its elements, stabilization included), condensed to the
interface by eliminating interior unknowns:

    S = A_BB - A_BI A_II^-1 A_IB,   g = f_B - A_BI A_II^-1 f_I,

with the symmetric/skew split S = Bsym + Zskew.  Glob-level principal and
Schur blocks of Bsym feed the scaling and the adaptive coarse space; Schur
blocks are computed through the inverse-principal-block identity with one
Cholesky factorization of Bsym per subdomain.
"""

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .linalg import NumericalError


class SubdomainOperator:
    """Interface operator of one subdomain.

    B-dofs (interface) and I-dofs (interior) are each sorted by global node
    id; `iface_index` maps local B positions to the global interface
    numbering.
    """

    def __init__(self, sub_id, A_II, A_IB, A_BI, A_BB, S, g, lu_II,
                 interior_nodes, interface_nodes, iface_index):
        self.sub_id = sub_id
        self.A_II = A_II
        self.A_IB = A_IB
        self.A_BI = A_BI
        self.A_BB = A_BB
        self.S = S
        self.Bsym = 0.5 * (S + S.T)
        self.Zskew = 0.5 * (S - S.T)
        self.g = g
        self.lu_II = lu_II
        self.interior_nodes = interior_nodes
        self.interface_nodes = interface_nodes
        self.iface_index = iface_index
        self._node_pos = {int(n): k for k, n in enumerate(interface_nodes)}
        self._bsym_inv = None
        self.f_I = None  # set by build_subdomain_operator

    @property
    def n_B(self):
        return self.interface_nodes.shape[0]

    def glob_index(self, glob):
        """Local B positions of a glob's nodes; raises if the glob is not
        on this subdomain's boundary."""
        try:
            return np.array([self._node_pos[int(n)] for n in glob.nodes], dtype=int)
        except KeyError:
            raise ValueError(
                f"glob with sharers {glob.sharers} is not on subdomain {self.sub_id}"
            ) from None

    def bsym_inverse(self):
        """Dense inverse of Bsym, cached; used for all glob Schur blocks."""
        if self._bsym_inv is None:
            try:
                c = scipy.linalg.cho_factor(self.Bsym)
            except scipy.linalg.LinAlgError as exc:
                raise NumericalError(
                    f"Bsym of subdomain {self.sub_id} is not positive definite "
                    f"(cond ~ {np.linalg.cond(self.Bsym):.2e})"
                ) from exc
            self._bsym_inv = scipy.linalg.cho_solve(c, np.eye(self.n_B))
        return self._bsym_inv


def build_subdomain_operator(system, partition, globs, i):
    """Assemble the local form of subdomain i from the cached element
    blocks and condense it to the interface."""
    mesh = system.mesh
    elems = partition.elements_of(i)
    if elems.size == 0:
        raise ValueError(f"subdomain {i} has no elements")
    conn = mesh.elements[elems]
    local_nodes = np.unique(conn)

    free = system.node_to_free[local_nodes] >= 0
    on_iface = np.isin(local_nodes, globs.interface_nodes)
    interface_nodes = local_nodes[free & on_iface]
    interior_nodes = local_nodes[free & ~on_iface]
    dir_nodes = local_nodes[~free]
    if interface_nodes.size == 0:
        raise ValueError(f"subdomain {i} has no interface unknowns")
    if interior_nodes.size == 0:
        raise ValueError(f"subdomain {i} has no interior unknowns")

    order = np.concatenate([interior_nodes, interface_nodes, dir_nodes])
    pos = {int(n): k for k, n in enumerate(order)}
    loc = np.vectorize(pos.__getitem__)(conn)
    nI, nB = interior_nodes.size, interface_nodes.size
    n_loc = order.size

    rows = np.repeat(loc, 4, axis=1).ravel()
    cols = np.tile(loc, (1, 4)).ravel()
    A = scipy.sparse.coo_matrix(
        (system.elem_matrices[elems].ravel(), (rows, cols)), shape=(n_loc, n_loc)
    ).tocsr()
    load = np.zeros(n_loc)
    np.add.at(load, loc.ravel(), system.elem_rhs[elems].ravel())

    gdir = system.dirichlet_values[dir_nodes]
    f = load[: nI + nB] - A[: nI + nB, nI + nB :] @ gdir
    f_I, f_B = f[:nI], f[nI : nI + nB]

    A_II = A[:nI, :nI].tocsc()
    A_IB = A[:nI, nI : nI + nB].tocsr()
    A_BI = A[nI : nI + nB, :nI].tocsr()
    A_BB = A[nI : nI + nB, nI : nI + nB].tocsr()

    try:
        lu = scipy.sparse.linalg.splu(A_II)
    except RuntimeError as exc:
        raise NumericalError(f"interior block of subdomain {i} is singular") from exc

    S = A_BB.toarray() - A_BI @ lu.solve(A_IB.toarray())
    g = f_B - A_BI @ lu.solve(f_I)

    op = SubdomainOperator(
        sub_id=i,
        A_II=A_II,
        A_IB=A_IB,
        A_BI=A_BI,
        A_BB=A_BB,
        S=S,
        g=g,
        lu_II=lu,
        interior_nodes=interior_nodes,
        interface_nodes=interface_nodes,
        iface_index=globs.interface_index(interface_nodes),
    )
    op.f_I = f_I
    return op


def glob_principal_block(op, glob):
    """Principal submatrix of Bsym on the glob's dofs."""
    idx = op.glob_index(glob)
    return op.Bsym[np.ix_(idx, idx)]


def glob_schur_block(op, glob):
    """Schur complement of Bsym eliminating every B-dof outside the glob.

    Uses (Bsym^-1)[X,X]^-1, equal to B_XX - B_XC B_CC^-1 B_CX.
    """
    idx = op.glob_index(glob)
    return _invert_principal(op.bsym_inverse(), idx, op.sub_id)


def _invert_principal(Minv, idx, sub_id):
    block = Minv[np.ix_(idx, idx)]
    try:
        c = scipy.linalg.cho_factor(block)
        out = scipy.linalg.cho_solve(c, np.eye(len(idx)))
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            f"glob Schur block on subdomain {sub_id} is singular "
            f"(cond ~ {np.linalg.cond(block):.2e})"
        ) from exc
    return 0.5 * (out + out.T)


def edge_block_with_priors(op, edge_idx, prior_idx, bsym_inv=None):
    """Schur complement keeping an edge's dofs plus prior primal dofs.

    edge_idx and prior_idx are positions in the B-dof system the supplied
    inverse refers to; bsym_inv defaults to the subdomain's nodal Bsym
    inverse, but the caller passes the change-of-basis-transformed inverse
    when priors are expressed in a transformed dof system.  Returns the
    blocks (EE, EH, HE, HH) of the eliminated operator.
    """
    if bsym_inv is None:
        bsym_inv = op.bsym_inverse()
    edge_idx = np.asarray(edge_idx, dtype=int)
    prior_idx = np.asarray(prior_idx, dtype=int)
    keep = np.concatenate([edge_idx, prior_idx])
    full = _invert_principal(bsym_inv, keep, op.sub_id)
    ne = edge_idx.size
    return full[:ne, :ne], full[:ne, ne:], full[ne:, :ne], full[ne:, ne:]
