"""Deluxe scaling families per glob, satisfying the partition of unity."""

import numpy as np
import scipy.linalg

from .linalg import NumericalError
from .substructuring import glob_principal_block


def deluxe_scaling(blocks):
    """Deluxe weights D^(nu) = (sum_k B^(k))^-1 B^(nu) from the sharers'
    symmetric-part principal blocks.

    blocks maps sharer id -> symmetric PSD matrix; the sum must be SPD.
    The family sums to the identity by construction.
    """
    sharers = sorted(blocks)
    total = sum(blocks[s] for s in sharers)
    try:
        c = scipy.linalg.cho_factor(total)
    except scipy.linalg.LinAlgError as exc:
        raise NumericalError(
            f"deluxe block sum is singular (cond ~ {np.linalg.cond(total):.2e})"
        ) from exc
    return {s: scipy.linalg.cho_solve(c, blocks[s]) for s in sharers}


def vertex_scaling(sharers):
    """Cardinality weights for a fully primal vertex dof."""
    if not sharers:
        raise ValueError("vertex with no sharers")
    w = 1.0 / len(sharers)
    return {s: np.array([[w]]) for s in sharers}


class ScalingSet:
    """Per-glob scaling matrices, aligned with a GlobSet's glob list."""

    def __init__(self, globs, families):
        self.globs = globs
        self._families = families  # list of dict sub_id -> matrix

    def of(self, glob):
        return self._families[self.globs.globs.index(glob)]


def build_scaling(globs, ops):
    """Deluxe scaling for faces and edges, cardinality for vertices."""
    by_id = {op.sub_id: op for op in ops}
    families = []
    for g in globs.globs:
        if g.kind == "vertex" and g.size == 1:
            families.append(vertex_scaling(g.sharers))
        else:
            blocks = {s: glob_principal_block(by_id[s], g) for s in g.sharers}
            families.append(deluxe_scaling(blocks))
    return ScalingSet(globs, families)
