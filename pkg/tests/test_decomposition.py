from collections import defaultdict

import numpy as np
import pytest

from adbddc.decomposition import (
    classify_globs,
    dump_partition,
    element_adjacency,
    node_sharers,
    partition_irregular,
    partition_regular,
    _components,
)
from adbddc.mesh import box_mesh

UNIT = ((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))


def brute_sigma(mesh, part):
    sig = defaultdict(set)
    for e, t in enumerate(mesh.elements):
        for n in t:
            sig[int(n)].add(int(part.subdomain_of[e]))
    return sig


class TestRegularPartition:
    def test_octants(self):
        mesh = box_mesh(UNIT, (4, 4, 4))
        part = partition_regular(mesh, (2, 2, 2))
        assert part.n_subdomains == 8
        assert np.all(part.sizes() == 6 * 8)
        # lexicographic numbering: element centred in the low octant is 0
        cent = mesh.nodes[mesh.elements].mean(axis=1)
        low = np.all(cent < 0.5, axis=1)
        assert np.all(part.subdomain_of[low] == 0)
        hi = np.all(cent > 0.5, axis=1)
        assert np.all(part.subdomain_of[hi] == 7)
        # z fastest: octant (0,0,1) is subdomain 1
        oct001 = (cent[:, 0] < 0.5) & (cent[:, 1] < 0.5) & (cent[:, 2] > 0.5)
        assert np.all(part.subdomain_of[oct001] == 1)

    def test_indivisible_raises(self):
        mesh = box_mesh(UNIT, (3, 3, 3))
        with pytest.raises(ValueError):
            partition_regular(mesh, (2, 2, 2))

    def test_oracle_against_geometry(self):
        mesh = box_mesh(UNIT, (4, 2, 2))
        part = partition_regular(mesh, (2, 1, 2))
        cent = mesh.nodes[mesh.elements].mean(axis=1)
        left = cent[:, 0] < 0.5
        bottom = cent[:, 2] < 0.5
        expect = np.where(left, 0, 2) + np.where(bottom, 0, 1)
        assert np.array_equal(part.subdomain_of, expect)


class TestIrregularPartition:
    def test_cover_balance_connectivity(self):
        mesh = box_mesh(UNIT, (8, 8, 8))
        part = partition_irregular(mesh, 5, seed=3)
        sizes = part.sizes()
        assert sizes.sum() == mesh.n_elements
        assert sizes.min() > 0
        assert sizes.max() <= 1.3 * sizes.min()
        adj = element_adjacency(mesh)
        for s in range(5):
            comps = _components(part.elements_of(s).tolist(), adj)
            assert len(comps) == 1

    def test_deterministic(self):
        mesh = box_mesh(UNIT, (6, 6, 6))
        a = partition_irregular(mesh, 4, seed=11)
        b = partition_irregular(mesh, 4, seed=11)
        assert np.array_equal(a.subdomain_of, b.subdomain_of)

    def test_too_many_subdomains(self):
        mesh = box_mesh(UNIT, (1, 1, 1))
        with pytest.raises(ValueError):
            partition_irregular(mesh, 7, seed=0)

    def test_dump(self, tmp_path):
        mesh = box_mesh(UNIT, (2, 2, 2))
        part = partition_regular(mesh, (2, 1, 1))
        p = tmp_path / "part.txt"
        dump_partition(part, p)
        lines = p.read_text().strip().splitlines()
        assert len(lines) == mesh.n_elements
        assert lines[0].split() == ["0", str(part.subdomain_of[0])]


class TestGlobs:
    def test_two_subdomains_single_face(self):
        mesh = box_mesh(UNIT, (4, 4, 4))
        part = partition_regular(mesh, (2, 1, 1))
        gs = classify_globs(mesh, part, mesh.boundary_nodes)
        assert len(gs.faces) == 1 and not gs.edges and not gs.vertices
        face = gs.faces[0]
        assert face.sharers == (0, 1)
        # interior of the 5x5 interface plane
        assert face.size == 9
        assert np.allclose(mesh.nodes[face.nodes][:, 0], 0.5)

    def test_four_subdomains_faces_and_edge(self):
        mesh = box_mesh(UNIT, (4, 4, 4))
        part = partition_regular(mesh, (2, 2, 1))
        gs = classify_globs(mesh, part, mesh.boundary_nodes)
        assert len(gs.faces) == 4
        assert len(gs.edges) == 1
        assert not gs.vertices
        edge = gs.edges[0]
        assert edge.sharers == (0, 1, 2, 3)
        assert edge.size == 3  # cells_z - 1 line nodes
        assert np.allclose(mesh.nodes[edge.nodes][:, :2], 0.5)

    def test_octants_face_edge_vertex_counts(self):
        mesh = box_mesh(UNIT, (6, 6, 6))
        part = partition_regular(mesh, (2, 2, 2))
        gs = classify_globs(mesh, part, mesh.boundary_nodes)
        assert len(gs.faces) == 12
        assert len(gs.edges) == 6
        assert len(gs.vertices) == 1
        v = gs.vertices[0]
        assert np.allclose(mesh.nodes[v.nodes[0]], [0.5, 0.5, 0.5])
        assert v.sharers == tuple(range(8))
        assert all(e.size == 2 for e in gs.edges)
        assert all(len(e.sharers) == 4 for e in gs.edges)
        assert all(len(f.sharers) == 2 for f in gs.faces)

    def test_sigma_oracle(self):
        # glob labels must agree with brute-force sharing sets per node
        mesh = box_mesh(UNIT, (4, 4, 4))
        part = partition_regular(mesh, (2, 2, 1))
        gs = classify_globs(mesh, part, mesh.boundary_nodes)
        sig = brute_sigma(mesh, part)
        for g in gs.globs:
            for n in g.nodes:
                assert tuple(sorted(sig[int(n)])) == g.sharers
        # each interface node appears in exactly one glob
        seen = np.concatenate([g.nodes for g in gs.globs])
        assert len(seen) == len(np.unique(seen))
        is_dir = set(mesh.boundary_nodes.tolist())
        expect = {
            n
            for n, s in sig.items()
            if len(s) >= 2 and n not in is_dir
        }
        assert set(seen.tolist()) == expect

    def test_node_sharers_matches_oracle(self):
        mesh = box_mesh(UNIT, (2, 2, 2))
        part = partition_regular(mesh, (2, 1, 1))
        sig = brute_sigma(mesh, part)
        assert node_sharers(mesh, part) == {n: frozenset(s) for n, s in sig.items()}

    def test_irregular_globs_consistent(self):
        mesh = box_mesh(UNIT, (6, 6, 6))
        part = partition_irregular(mesh, 4, seed=2)
        gs = classify_globs(mesh, part, mesh.boundary_nodes)
        sig = brute_sigma(mesh, part)
        for g in gs.globs:
            for n in g.nodes:
                assert tuple(sorted(sig[int(n)])) == g.sharers
            if g.kind == "face":
                assert len(g.sharers) == 2
            else:
                assert len(g.sharers) >= 3
