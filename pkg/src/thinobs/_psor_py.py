"""Pure numpy projected SOR with a multicolour ordering.

Rows of one colour share no matrix entry, so a whole colour class is updated
at once and the result equals a sequential sweep in colour order.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


def greedy_colouring(A: sp.csr_matrix) -> np.ndarray:
    indptr, indices = A.indptr, A.indices
    n = A.shape[0]
    colour = np.full(n, -1, dtype=np.intp)
    for i in range(n):
        used = {colour[j] for j in indices[indptr[i] : indptr[i + 1]] if j != i}
        c = 0
        while c in used:
            c += 1
        colour[i] = c
    return colour


class MulticolourSweeper:
    def __init__(self, A: sp.csr_matrix):
        A = sp.csr_matrix(A)
        self.diag = A.diagonal()
        off = (A - sp.diags(self.diag)).tocsr()
        off.eliminate_zeros()
        colour = greedy_colouring(A)
        self.blocks = []
        for c in range(colour.max() + 1):
            rows = np.flatnonzero(colour == c)
            self.blocks.append((rows, off[rows].tocsr(), self.diag[rows]))

    def __call__(self, u, b, lower, omega, nsweeps):
        for _ in range(nsweeps):
            for rows, off, d in self.blocks:
                gs = (b[rows] - off @ u) / d
                u[rows] = np.maximum((1.0 - omega) * u[rows] + omega * gs, lower[rows])
