"""Structured tetrahedral meshes of box domains.

Each grid cell is split into six tetrahedra sharing the cell's main
diagonal, so meshes of nested grids are conforming and every element of a
uniform grid has diameter equal to the cell space diagonal.
"""

import itertools

import numpy as np

# permutations of the axis step order; all six tets share the main diagonal
_KUHN_PERMS = list(itertools.permutations(range(3)))


class Mesh:
    """Conforming tetrahedral mesh of an axis-aligned box.

    Attributes
    ----------
    nodes : (n_nodes, 3) float array
    elements : (n_elements, 4) int array, positively oriented
    box : ((x0, x1), (y0, y1), (z0, z1))
    cells : (nx, ny, nz) grid cells per axis
    boundary_tags : dict node -> frozenset of face tags from
        {"x0","x1","y0","y1","z0","z1"}
    """

    def __init__(self, nodes, elements, box, cells, boundary_tags):
        self.nodes = nodes
        self.elements = elements
        self.box = box
        self.cells = cells
        self.boundary_tags = boundary_tags

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_elements(self):
        return self.elements.shape[0]

    @property
    def boundary_nodes(self):
        return np.array(sorted(self.boundary_tags), dtype=int)


def box_mesh(box, cells):
    """Mesh the box with cells[axis] grid cells per axis, six tets per cell.

    Node numbering is lexicographic in (ix, iy, iz) with iz fastest.
    """
    (x0, x1), (y0, y1), (z0, z1) = box
    nx, ny, nz = cells
    if min(nx, ny, nz) < 1:
        raise ValueError(f"cells must be >= 1 per axis, got {cells}")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    zs = np.linspace(z0, z1, nz + 1)
    X, Y, Z = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])

    def nid(ix, iy, iz):
        return (ix * (ny + 1) + iy) * (nz + 1) + iz

    ix, iy, iz = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ix, iy, iz = ix.ravel(), iy.ravel(), iz.ravel()
    corner = {}
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                corner[(dx, dy, dz)] = nid(ix + dx, iy + dy, iz + dz)

    tets = []
    for perm in _KUHN_PERMS:
        steps = [(0, 0, 0)]
        cur = [0, 0, 0]
        for axis in perm:
            cur[axis] = 1
            steps.append(tuple(cur))
        tets.append(np.column_stack([corner[s] for s in steps]))
    elements = np.vstack(tets)

    # flip negatively oriented tets so all volumes come out positive
    verts = nodes[elements]
    det = np.linalg.det(verts[:, 1:] - verts[:, :1])
    neg = det < 0.0
    elements[neg, 2], elements[neg, 3] = (
        elements[neg, 3].copy(),
        elements[neg, 2].copy(),
    )

    boundary_tags = {}
    axis_tags = [("x0", "x1", nx), ("y0", "y1", ny), ("z0", "z1", nz)]
    idx = np.stack(
        np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1), indexing="ij"),
        axis=-1,
    ).reshape(-1, 3)
    for n, (i, j, k) in enumerate(idx):
        tags = set()
        for axis, (lo, hi, count) in enumerate(axis_tags):
            if (i, j, k)[axis] == 0:
                tags.add(lo)
            elif (i, j, k)[axis] == count:
                tags.add(hi)
        if tags:
            boundary_tags[n] = frozenset(tags)

    return Mesh(nodes, elements, box, cells, boundary_tags)


def element_volumes(mesh):
    verts = mesh.nodes[mesh.elements]
    det = np.linalg.det(verts[:, 1:] - verts[:, :1])
    return det / 6.0


def element_diameters(mesh):
    """Maximum pairwise vertex distance of each element."""
    verts = mesh.nodes[mesh.elements]
    d = verts[:, :, None, :] - verts[:, None, :, :]
    return np.sqrt((d * d).sum(-1)).max(axis=(1, 2))


def node_adjacency(mesh):
    """Set of undirected node pairs connected by an element edge."""
    pairs = set()
    for t in mesh.elements:
        for a, b in itertools.combinations(t.tolist(), 2):
            pairs.add((a, b) if a < b else (b, a))
    return pairs


def dump_mesh(mesh, path):
    """Plain-text dump: one "v x y z" line per node then one
    "t i0 i1 i2 i3" line per element."""
    with open(path, "w") as fh:
        for x, y, z in mesh.nodes:
            fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
        for t in mesh.elements:
            fh.write(f"t {t[0]} {t[1]} {t[2]} {t[3]}\n")
