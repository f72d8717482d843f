# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Lexicographic projected SOR sweeps over a CSR matrix."""

import numpy as np

cimport numpy as cnp


def psor_sweeps(
    const int[::1] indptr,
    const int[::1] indices,
    const double[::1] data,
    const double[::1] diag,
    const double[::1] b,
    const double[::1] lower,
    double[::1] u,
    double omega,
    int nsweeps,
):
    """Run ``nsweeps`` in-place PSOR sweeps on ``u``.

    The CSR arrays hold the off-diagonal part only; ``diag`` is the diagonal.
    ``lower`` is ``-inf`` on unconstrained rows.
    """
    cdef Py_ssize_t nrows = b.shape[0]
    cdef Py_ssize_t i, k
    cdef int s
    cdef double acc, ui
    cdef double[::1] scaled = np.empty(nrows)
    for i in range(nrows):
        scaled[i] = omega / diag[i]
    with nogil:
        for s in range(nsweeps):
            for i in range(nrows):
                acc = b[i]
                for k in range(indptr[i], indptr[i + 1]):
                    acc = acc - data[k] * u[indices[k]]
                ui = (1.0 - omega) * u[i] + scaled[i] * acc
                if ui < lower[i]:
                    ui = lower[i]
                u[i] = ui
