"""Dense symmetric linear algebra kernels: pseudo-inverses, parallel sums,
and a generalized eigensolver for symmetric pencils with singular right-hand
sides."""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


class NumericalError(RuntimeError):
    """Raised when a factorization or eigensolve cannot be completed."""


def _check_symmetric(M, rel_tol, name):
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    scale = np.linalg.norm(M)
    if scale > 0.0 and np.linalg.norm(M - M.T) > rel_tol * scale:
        raise ValueError(f"{name} is not symmetric to within {rel_tol:g} relative")


def pseudo_inverse(M, rel_tol=1e-12):
    """Moore-Penrose pseudo-inverse of a symmetric matrix.

    Uses an eigendecomposition; eigenvalues with magnitude below
    ``rel_tol`` times the largest magnitude are treated as zero.

    Parameters
    ----------
    M : (n, n) ndarray
        Symmetric matrix (checked to 1e-12 relative).
    rel_tol : float
        Relative cutoff separating range from nullspace.

    Returns
    -------
    (n, n) ndarray, symmetric.
    """
    M = np.asarray(M, dtype=float)
    _check_symmetric(M, 1e-12, "M")
    if M.shape[0] == 0:
        return M.copy()
    w, U = scipy.linalg.eigh(0.5 * (M + M.T))
    cut = rel_tol * np.abs(w).max(initial=0.0)
    nz = np.abs(w) > cut
    inv = np.zeros_like(w)
    inv[nz] = 1.0 / w[nz]
    P = (U * inv) @ U.T
    return 0.5 * (P + P.T)


def parallel_sum(A, B, rel_tol=1e-12):
    """Parallel sum A : B = A (A + B)^+ B of two symmetric PSD matrices.

    Symmetric in its arguments and Loewner-dominated by each of them.
    The result is explicitly symmetrized to guard against roundoff.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"shape mismatch: {A.shape} vs {B.shape}")
    _check_symmetric(A, 1e-12, "A")
    _check_symmetric(B, 1e-12, "B")
    P = pseudo_inverse(A + B, rel_tol=rel_tol)
    R = A @ P @ B
    return 0.5 * (R + R.T)


def parallel_sum_chain(mats, rel_tol=1e-12):
    """Left-associative parallel sum of a sequence of PSD matrices."""
    mats = list(mats)
    if not mats:
        raise ValueError("empty chain")
    acc = np.asarray(mats[0], dtype=float)
    for M in mats[1:]:
        acc = parallel_sum(acc, M, rel_tol=rel_tol)
    return acc


@dataclass
class EigenPairList:
    """Eigenpairs of a symmetric pencil B v = lambda Btil v.

    values are non-increasing with +inf modes first; degenerate directions
    (both forms vanish) carry eigenvalue 0.0, are flagged, sorted last and
    never selected as primal.  Finite pairs with nonzero eigenvalue are
    normalized so that (B v)^T v = sign(lambda), which for the PSD case is
    the (B v_l)^T v_m = delta_lm convention.
    """

    values: np.ndarray
    vectors: np.ndarray
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate is None:
            self.degenerate = np.zeros(len(self.values), dtype=bool)

    @property
    def n_infinite(self):
        return int(np.count_nonzero(np.isinf(self.values)))

    def selection_mask(self, theta):
        """Primal selection: eigenvalue >= theta, infinities always in,
        degenerate directions always out."""
        return (self.values >= theta) & ~self.degenerate

    def n_selected(self, theta):
        return int(np.count_nonzero(self.selection_mask(theta)))

    def selected_vectors(self, theta):
        return self.vectors[:, self.selection_mask(theta)]


def sym_pencil_gevp(B, Btil, rel_tol=1e-12):
    """Solve the symmetric generalized eigenproblem B v = lambda Btil v.

    Btil must be symmetric positive semidefinite, possibly singular; B must
    be symmetric.  The nullspace of Btil is split into directions where B
    acts (infinite eigenvalues, always primal candidates) and directions
    annihilated by both forms (degenerate, eigenvalue 0, never primal).
    Finite pairs come from the Btil-whitened problem deflated by the
    infinite directions.

    Parameters
    ----------
    B, Btil : (n, n) ndarray
        Symmetric left-hand side and PSD right-hand side.
    rel_tol : float
        Relative spectral cutoff used for the range/nullspace split.

    Returns
    -------
    EigenPairList
    """
    B = np.asarray(B, dtype=float)
    Btil = np.asarray(Btil, dtype=float)
    if B.shape != Btil.shape:
        raise ValueError(f"shape mismatch: {B.shape} vs {Btil.shape}")
    _check_symmetric(B, 1e-10, "B")
    _check_symmetric(Btil, 1e-10, "Btil")
    n = B.shape[0]
    if n == 0:
        return EigenPairList(np.zeros(0), np.zeros((0, 0)), np.zeros(0, dtype=bool))
    B = 0.5 * (B + B.T)
    Btil = 0.5 * (Btil + Btil.T)

    mu, U = scipy.linalg.eigh(Btil)
    mu_max = mu.max(initial=0.0)
    if mu.min(initial=0.0) < -1e-10 * max(mu_max, 1.0):
        raise ValueError("Btil is not positive semidefinite")
    in_range = mu > rel_tol * mu_max if mu_max > 0.0 else np.zeros(n, dtype=bool)
    V1 = U[:, in_range]
    V0 = U[:, ~in_range]
    mu1 = mu[in_range]

    b_scale = np.abs(scipy.linalg.eigvalsh(B)).max(initial=0.0)

    vals, vecs, degen = [], [], []

    if V0.shape[1] > 0:
        B00 = V0.T @ B @ V0
        beta, P = scipy.linalg.eigh(B00)
        acts = np.abs(beta) > rel_tol * max(b_scale, 1e-300)
        # infinite modes: Btil-null directions on which B acts
        for j in np.argsort(-np.abs(beta)):
            if not acts[j]:
                continue
            v = V0 @ P[:, j]
            v = v / np.sqrt(np.abs(beta[j]))
            vals.append(np.inf)
            vecs.append(v)
            degen.append(False)
        deg_vecs = V0 @ P[:, ~acts]
        B00_pinv = (P[:, acts] * (1.0 / beta[acts])) @ P[:, acts].T
    else:
        deg_vecs = np.zeros((n, 0))
        B00_pinv = None

    if V1.shape[1] > 0:
        W1 = V1 / np.sqrt(mu1)  # Btil-orthonormal basis of range(Btil)
        BW = B @ W1
        Bhat = W1.T @ BW
        if B00_pinv is not None:
            C = V0.T @ BW
            Bhat = Bhat - C.T @ B00_pinv @ C
        Bhat = 0.5 * (Bhat + Bhat.T)
        lam, Y = scipy.linalg.eigh(Bhat)
        Vf = W1 @ Y
        if B00_pinv is not None:
            Vf = Vf - V0 @ (B00_pinv @ (C @ Y))
        order = np.argsort(-lam)
        floor = 1e-14 * max(b_scale, 1e-300)
        for j in order:
            v = Vf[:, j]
            if np.abs(lam[j]) > floor:
                v = v / np.sqrt(np.abs(lam[j]))
            vals.append(float(lam[j]))
            vecs.append(v)
            degen.append(False)

    for j in range(deg_vecs.shape[1]):
        v = deg_vecs[:, j]
        nrm = np.linalg.norm(v)
        if nrm > 0.0:
            v = v / nrm
        vals.append(0.0)
        vecs.append(v)
        degen.append(True)

    values = np.array(vals)
    vectors = np.column_stack(vecs) if vecs else np.zeros((n, 0))
    return EigenPairList(values, vectors, np.array(degen, dtype=bool))
