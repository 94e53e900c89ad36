"""Numba kernels for the Yee leapfrog.

Every output element is written by exactly one loop iteration and read-only
inputs are never aliased with outputs, so results are bit-identical for any
number of worker threads.
"""

import os

import numba as nb
from numba import prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    # the TBB layer warns on common installs; OpenMP or the built-in queue suffice
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@nb.njit(parallel=True, cache=True)
def update_h(hx, hy, hz, ex, ey, ez, ch, sx_h, sy_h, sz_h):
    nx = ex.shape[0]
    ny = ey.shape[1]
    nz = ez.shape[2]
    for i in prange(nx + 1):
        for j in range(ny):
            for k in range(nz):
                hx[i, j, k] -= ch * (
                    (ez[i, j + 1, k] - ez[i, j, k]) * sy_h[j] - (ey[i, j, k + 1] - ey[i, j, k]) * sz_h[k]
                )
    for i in prange(nx):
        for j in range(ny + 1):
            for k in range(nz):
                hy[i, j, k] -= ch * (
                    (ex[i, j, k + 1] - ex[i, j, k]) * sz_h[k] - (ez[i + 1, j, k] - ez[i, j, k]) * sx_h[i]
                )
    for i in prange(nx):
        for j in range(ny):
            for k in range(nz + 1):
                hz[i, j, k] -= ch * (
                    (ey[i + 1, j, k] - ey[i, j, k]) * sx_h[i] - (ex[i, j + 1, k] - ex[i, j, k]) * sy_h[j]
                )


@nb.njit(parallel=True, cache=True)
def update_e(ex, ey, ez, hx, hy, hz, ca_x, cb_x, ca_y, cb_y, ca_z, cb_z, sx_e, sy_e, sz_e):
    nx = ex.shape[0]
    ny = ey.shape[1]
    nz = ez.shape[2]
    for i in prange(nx):
        for j in range(1, ny):
            for k in range(1, nz):
                ex[i, j, k] = ca_x[i, j, k] * ex[i, j, k] + cb_x[i, j, k] * (
                    (hz[i, j, k] - hz[i, j - 1, k]) * sy_e[j] - (hy[i, j, k] - hy[i, j, k - 1]) * sz_e[k]
                )
    for i in prange(1, nx):
        for j in range(ny):
            for k in range(1, nz):
                ey[i, j, k] = ca_y[i, j, k] * ey[i, j, k] + cb_y[i, j, k] * (
                    (hx[i, j, k] - hx[i, j, k - 1]) * sz_e[k] - (hz[i, j, k] - hz[i - 1, j, k]) * sx_e[i]
                )
    for i in prange(1, nx):
        for j in range(1, ny):
            for k in range(nz):
                ez[i, j, k] = ca_z[i, j, k] * ez[i, j, k] + cb_z[i, j, k] * (
                    (hy[i, j, k] - hy[i - 1, j, k]) * sx_e[i] - (hx[i, j, k] - hx[i, j - 1, k]) * sy_e[j]
                )


@nb.njit(parallel=True, cache=True)
def pml_e(e_b, e_c, h_b, h_c, cb_b, cb_c, psi_b, psi_c, idx, b, c, inv_d):
    """CPML correction of the two E components transverse to the slab axis.

    Arrays are views with the slab axis first.  ``e_b`` picks up
    ``-d(h_c)/da`` and ``e_c`` picks up ``+d(h_b)/da``.
    """
    for s in prange(idx.shape[0]):
        a = idx[s]
        bs = b[s]
        cs = c[s] * inv_d
        for p in range(e_b.shape[1]):
            for q in range(e_b.shape[2]):
                psi_b[s, p, q] = bs * psi_b[s, p, q] + cs * (h_c[a, p, q] - h_c[a - 1, p, q])
                e_b[a, p, q] -= cb_b[a, p, q] * psi_b[s, p, q]
        for p in range(e_c.shape[1]):
            for q in range(e_c.shape[2]):
                psi_c[s, p, q] = bs * psi_c[s, p, q] + cs * (h_b[a, p, q] - h_b[a - 1, p, q])
                e_c[a, p, q] += cb_c[a, p, q] * psi_c[s, p, q]


@nb.njit(parallel=True, cache=True)
def pml_h(h_b, h_c, e_b, e_c, psi_b, psi_c, idx, b, c, inv_d, ch):
    """CPML correction of the two H components transverse to the slab axis."""
    for s in prange(idx.shape[0]):
        a = idx[s]
        bs = b[s]
        cs = c[s] * inv_d
        for p in range(h_b.shape[1]):
            for q in range(h_b.shape[2]):
                psi_b[s, p, q] = bs * psi_b[s, p, q] + cs * (e_c[a + 1, p, q] - e_c[a, p, q])
                h_b[a, p, q] += ch * psi_b[s, p, q]
        for p in range(h_c.shape[1]):
            for q in range(h_c.shape[2]):
                psi_c[s, p, q] = bs * psi_c[s, p, q] + cs * (e_b[a + 1, p, q] - e_b[a, p, q])
                h_c[a, p, q] -= ch * psi_c[s, p, q]
