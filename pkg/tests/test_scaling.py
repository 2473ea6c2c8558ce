import numpy as np
import pytest
import scipy.linalg

from adbddc.linalg import NumericalError
from adbddc.scaling import build_scaling, deluxe_scaling, vertex_scaling
from tests.test_linalg import random_spd
from tests.test_substructuring import setup_case


class TestDeluxe:
    def test_equal_blocks(self):
        B = np.array([[2.0, 0.5], [0.5, 1.0]])
        D = deluxe_scaling({0: B, 1: B})
        assert np.allclose(D[0], 0.5 * np.eye(2))
        assert np.allclose(D[1], 0.5 * np.eye(2))

    def test_scalar_weights(self):
        D = deluxe_scaling({3: np.array([[1.0]]), 7: np.array([[3.0]])})
        assert np.isclose(D[3][0, 0], 0.25)
        assert np.isclose(D[7][0, 0], 0.75)

    @pytest.mark.parametrize("seed", range(3))
    def test_partition_of_unity(self, seed):
        rng = np.random.default_rng(seed)
        blocks = {s: random_spd(3, rng, cond=100.0) for s in range(3)}
        D = deluxe_scaling(blocks)
        total = sum(D.values())
        assert np.abs(total - np.eye(3)).max() < 1e-12

    def test_weights_spectrum_in_unit_interval(self):
        # D^(nu) is similar to a PSD contraction: generalized eigenvalues
        # of (B^(nu), sum B) lie in [0, 1]
        rng = np.random.default_rng(9)
        blocks = {s: random_spd(4, rng, cond=1e4) for s in range(2)}
        total = sum(blocks.values())
        for s, B in blocks.items():
            lam = scipy.linalg.eigh(B, total, eigvals_only=True)
            assert lam.min() >= -1e-10 and lam.max() <= 1.0 + 1e-10

    def test_singular_sum_raises(self):
        with pytest.raises(NumericalError):
            deluxe_scaling({0: np.zeros((2, 2)), 1: np.zeros((2, 2))})


class TestVertexScaling:
    def test_eight_sharers(self):
        D = vertex_scaling(tuple(range(8)))
        assert all(np.isclose(m[0, 0], 0.125) for m in D.values())
        assert np.isclose(sum(m[0, 0] for m in D.values()), 1.0)

    def test_single_sharer(self):
        assert np.isclose(vertex_scaling((4,))[4][0, 0], 1.0)


class TestBuildScaling:
    def test_partition_of_unity_on_problem(self):
        mesh, part, globs, system, ops = setup_case(
            cells=(4, 4, 4), subs=(2, 2, 1), a=(1.0, 0.5, 0.0), nu=0.1
        )
        sc = build_scaling(globs, ops)
        for g in globs.globs:
            fam = sc.of(g)
            assert set(fam) == set(g.sharers)
            total = sum(fam.values())
            assert np.abs(total - np.eye(g.size)).max() < 1e-10
