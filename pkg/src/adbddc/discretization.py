"""Stabilized P1 finite elements for advection-diffusion-reaction problems.

Discretizes L u = -div(nu grad u) + a . grad u + c u on a tetrahedral mesh
with an element-Peclet-switched least-squares stabilization and a symmetric /
skew-symmetric splitting of the advection term.  The assembled bilinear form
is

    b(u, v) + z(u, v),
    b(u, v) = (nu grad u, grad v) + sum_K C_K (L u, L v)_K + (ctil u, v),
    z(u, v) = ((a . grad u, v) - (a . grad v, u)) / 2,

with ctil = c - div(a)/2.  b is SPD whenever ctil >= c0 > 0, which is
checked at the quadrature points during assembly.  On P1 elements the
operator L reduces to a . grad u + c u since the elementwise diffusion term
vanishes.  Dirichlet data enters through a lifting of the boundary values.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .mesh import Mesh, element_diameters

# degree-2 tetrahedral quadrature: 4 points, equal weights V/4
_QA = 0.5854101966249685
_QB = 0.13819660112501053
_QBARY = np.full((4, 4), _QB)
np.fill_diagonal(_QBARY, _QA)


def peclet(h, anorm, nu):
    """Element Peclet number h ||a|| / (2 nu)."""
    return h * anorm / (2.0 * np.asarray(nu))


def stabilization(h, anorm, nu, tau=0.7):
    """Least-squares stabilization weight, switched on the element Peclet
    number: tau h / (2 ||a||) in the advective regime (P >= 1), otherwise
    tau h^2 / (4 nu)."""
    h = np.asarray(h, dtype=float)
    anorm = np.asarray(anorm, dtype=float)
    nu = np.asarray(nu, dtype=float)
    P = peclet(h, anorm, nu)
    advective = P >= 1.0
    safe = np.where(advective, anorm, 1.0)
    return np.where(advective, tau * h / (2.0 * safe), tau * h * h / (4.0 * nu))


@dataclass
class Coefficients:
    """Problem data.  Field callables are vectorized: they take an (n, 3)
    array of points and return an (n,) array ((n, 3) for velocity).
    viscosity is piecewise constant per element, given either as an array of
    per-element values or as a callable on element centroids.
    velocity_div is the analytic divergence of the velocity; None means
    divergence-free."""

    viscosity: Union[np.ndarray, Callable]
    velocity: Callable
    reaction: Callable
    source: Callable
    dirichlet: Callable
    velocity_div: Optional[Callable] = None
    tau: float = 0.7


@dataclass
class AssembledSystem:
    """Assembled global problem restricted to the free (non-Dirichlet)
    unknowns, plus the nodal-level pieces substructuring needs."""

    mesh: Mesh
    matrix: scipy.sparse.csr_matrix  # free x free
    rhs: np.ndarray  # free
    free_nodes: np.ndarray
    node_to_free: np.ndarray  # -1 on Dirichlet nodes
    dirichlet_values: np.ndarray  # nodal, zero on free nodes
    full_matrix: scipy.sparse.csr_matrix  # nodal x nodal, no BCs applied
    elem_matrices: np.ndarray = field(repr=False)  # (n_elements, 4, 4)
    elem_rhs: np.ndarray = field(repr=False)  # (n_elements, 4)
    viscosity: np.ndarray = field(repr=False)  # per element

    @property
    def n_free(self):
        return self.free_nodes.shape[0]


def _p1_gradients(verts):
    """Constant P1 basis gradients per element; verts is (m, 4, 3)."""
    E = verts[:, 1:] - verts[:, :1]
    Einv = np.linalg.inv(E)
    G = np.empty((verts.shape[0], 4, 3))
    G[:, 1:] = np.transpose(Einv, (0, 2, 1))
    G[:, 0] = -G[:, 1:].sum(axis=1)
    return G, np.linalg.det(E) / 6.0


def element_contributions(mesh, coeffs):
    """Per-element 4x4 stiffness blocks and load vectors.

    Returns (elem_matrices, elem_rhs, nu) where elem_matrices includes the
    diffusion, stabilization, reaction and skew-symmetric advection parts.
    Raises if the shifted reaction ctil = c - div(a)/2 is not positive at
    every quadrature point.
    """
    verts = mesh.nodes[mesh.elements]
    m = verts.shape[0]
    G, vol = _p1_gradients(verts)
    if np.any(vol <= 0.0):
        raise ValueError("mesh contains degenerate or inverted elements")

    centroids = verts.mean(axis=1)
    nu = coeffs.viscosity
    nu = np.asarray(nu, dtype=float) if not callable(nu) else np.asarray(nu(centroids), dtype=float)
    if nu.shape != (m,):
        raise ValueError(f"viscosity must give one value per element, got {nu.shape}")
    if np.any(nu <= 0.0):
        raise ValueError("viscosity must be positive")

    qpts = np.einsum("qi,mid->mqd", _QBARY, verts)
    flat = qpts.reshape(-1, 3)
    a_q = np.asarray(coeffs.velocity(flat), dtype=float).reshape(m, 4, 3)
    c_q = np.asarray(coeffs.reaction(flat), dtype=float).reshape(m, 4)
    f_q = np.asarray(coeffs.source(flat), dtype=float).reshape(m, 4)
    if coeffs.velocity_div is None:
        ctil_q = c_q.copy()
    else:
        ctil_q = c_q - 0.5 * np.asarray(coeffs.velocity_div(flat), dtype=float).reshape(m, 4)
    if np.any(ctil_q <= 0.0):
        bad = int(np.argwhere(np.any(ctil_q <= 0.0, axis=1))[0, 0])
        raise ValueError(
            f"shifted reaction c - div(a)/2 is not positive on element {bad}; "
            "the symmetric part of the form would lose definiteness"
        )

    h = element_diameters(mesh)
    samples = np.concatenate([verts, centroids[:, None, :]], axis=1)
    a_s = np.asarray(coeffs.velocity(samples.reshape(-1, 3)), dtype=float).reshape(m, 5, 3)
    anorm = np.sqrt((a_s * a_s).sum(-1)).max(axis=1)
    C = stabilization(h, anorm, nu, coeffs.tau)

    w = vol[:, None] / 4.0  # (m, 1) broadcast over quadrature points

    diff = np.einsum("mid,mjd->mij", G, G) * (nu * vol)[:, None, None]
    react = np.einsum("mq,qi,qj->mij", w * ctil_q, _QBARY, _QBARY)
    adv = np.einsum("mqd,mjd->mqj", a_q, G)  # a . grad(phi_j) at q
    t1 = np.einsum("mq,qi,mqj->mij", w, _QBARY, adv)
    skew = 0.5 * (t1 - np.transpose(t1, (0, 2, 1)))
    Lq = adv + c_q[:, :, None] * _QBARY[None, :, :]  # L phi_j at q
    stab = C[:, None, None] * np.einsum("mq,mqi,mqj->mij", w, Lq, Lq)

    elem_mats = diff + react + skew + stab
    elem_rhs = np.einsum("mq,qi->mi", w * f_q, _QBARY)
    elem_rhs += C[:, None] * np.einsum("mq,mqi->mi", w * f_q, Lq)
    return elem_mats, elem_rhs, nu


def assemble_system(mesh, coeffs, dirichlet_nodes=None):
    """Assemble the stabilized system and eliminate Dirichlet unknowns.

    dirichlet_nodes defaults to all boundary nodes.  Boundary values are
    interpolated from coeffs.dirichlet and lifted into the right-hand side.
    """
    elem_mats, elem_rhs, nu = element_contributions(mesh, coeffs)
    n = mesh.n_nodes
    rows = np.repeat(mesh.elements, 4, axis=1).ravel()
    cols = np.tile(mesh.elements, (1, 4)).ravel()
    full = scipy.sparse.coo_matrix(
        (elem_mats.ravel(), (rows, cols)), shape=(n, n)
    ).tocsr()
    load = np.zeros(n)
    np.add.at(load, mesh.elements.ravel(), elem_rhs.ravel())

    if dirichlet_nodes is None:
        dirichlet_nodes = mesh.boundary_nodes
    dirichlet_nodes = np.asarray(dirichlet_nodes, dtype=int)
    is_dir = np.zeros(n, dtype=bool)
    is_dir[dirichlet_nodes] = True
    free = np.flatnonzero(~is_dir)
    node_to_free = np.full(n, -1, dtype=int)
    node_to_free[free] = np.arange(free.size)

    g = np.zeros(n)
    if dirichlet_nodes.size:
        g[dirichlet_nodes] = np.asarray(
            coeffs.dirichlet(mesh.nodes[dirichlet_nodes]), dtype=float
        )

    A_ff = full[free][:, free].tocsr()
    rhs = load[free] - full[free][:, dirichlet_nodes] @ g[dirichlet_nodes]

    return AssembledSystem(
        mesh=mesh,
        matrix=A_ff,
        rhs=rhs,
        free_nodes=free,
        node_to_free=node_to_free,
        dirichlet_values=g,
        full_matrix=full,
        elem_matrices=elem_mats,
        elem_rhs=elem_rhs,
        viscosity=nu,
    )


def solve_direct(system):
    """Sparse direct solve of the assembled system; returns the full nodal
    solution including Dirichlet values."""
    u = scipy.sparse.linalg.spsolve(system.matrix.tocsc(), system.rhs)
    out = system.dirichlet_values.copy()
    out[system.free_nodes] = u
    return out


def l2_error(mesh, u_nodal, exact):
    """L2 norm of (interpolated nodal field - exact) by quadrature."""
    verts = mesh.nodes[mesh.elements]
    _, vol = _p1_gradients(verts)
    qpts = np.einsum("qi,mid->mqd", _QBARY, verts)
    uh = np.einsum("qi,mi->mq", _QBARY, u_nodal[mesh.elements])
    ue = np.asarray(exact(qpts.reshape(-1, 3)), dtype=float).reshape(uh.shape)
    return float(np.sqrt((((uh - ue) ** 2) * (vol[:, None] / 4.0)).sum()))
