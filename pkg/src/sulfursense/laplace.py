"""Quasi-static 2-D capacitance of a layered microstrip cross-section.

The cross-section is a zero-thickness strip on top of the substrate, a ground
plane at the bottom and an arbitrary stack of dielectric slabs above the
strip plane, enclosed in a grounded box.  Laplace's equation
``div(eps grad phi) = 0`` is discretised with node-centred finite volumes on a
graded tensor-product grid and only the half ``x >= 0`` is solved (mirror
symmetry).  All lengths are normalised by the substrate height so that the
capacitance ratio is exactly invariant under uniform scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, SolverError

EPS0 = 8.8541878128e-12

#: residual tolerance on the linear solve
RESIDUAL_TOL = 1e-8


@dataclass(frozen=True)
class CrossSection:
    """Normalised description of a strip cross-section (unit substrate height).

    ``layers`` lists ``(relative_permittivity, thickness)`` pairs upward from
    the strip plane; the last entry may have infinite thickness and fills the
    rest of the box.
    """

    substrate_eps: float
    strip_width: float
    layers: tuple[tuple[float, float], ...]
    window_width: float
    window_height: float


def _march(a: float, b: float, sa: float, sb: float, growth: float, smax: float) -> list[float]:
    """Nodes strictly inside ``(a, b)`` graded from spacing ``sa`` at ``a`` and ``sb`` at ``b``."""
    mid = 0.5 * (a + b)
    left, x, s = [], a, sa
    while x + s < mid:
        x += s
        left.append(x)
        s = min(s * growth, smax)
    right, x, s = [], b, sb
    while x - s > mid:
        x -= s
        right.append(x)
        s = min(s * growth, smax)
    inner = left + right[::-1]
    # drop a node that would leave a sliver cell at the junction
    if left and right and (right[-1] - left[-1]) < 0.25 * min(sa, sb):
        inner.remove(right[-1])
    return inner


def graded_nodes(keys: Sequence[float], spacing: Sequence[float], growth: float, smax: float) -> np.ndarray:
    """Grid containing every key point, graded away from the local spacings."""
    nodes = [keys[0]]
    for (a, sa), (b, sb) in zip(zip(keys, spacing), zip(keys[1:], spacing[1:])):
        if b - a <= min(sa, sb):
            nodes.append(b)
            continue
        nodes.extend(_march(a, b, sa, sb, growth, smax))
        nodes.append(b)
    return np.asarray(nodes, dtype=float)


def _grid(cs: CrossSection, cells_per_h: float):
    d = 1.0 / cells_per_h
    growth = 1.0 + 1.6 / cells_per_h
    smax = 32.0 * d
    half = 0.5 * cs.strip_width
    xk = [0.0, half, 0.5 * cs.window_width]
    xs = [min(d, half / 4.0), 0.5 * min(d, half / 4.0), smax]
    x = graded_nodes(xk, xs, growth, smax)

    yk, ys = [0.0, 1.0], [d, 0.5 * d]
    top = 1.0
    for _, thick in cs.layers:
        if math.isinf(thick):
            break
        top += thick
        yk.append(top)
        ys.append(min(d, thick / 4.0))
    yk.append(cs.window_height)
    ys.append(smax)
    y = graded_nodes(yk, ys, growth, smax)
    return x, y


def _cell_eps(cs: CrossSection, yc: np.ndarray, air: bool) -> np.ndarray:
    eps = np.ones_like(yc)
    if air:
        return eps
    eps[yc < 1.0] = cs.substrate_eps
    lo = 1.0
    for e, thick in cs.layers:
        hi = lo + thick
        eps[(yc > lo) & (yc < hi)] = e
        lo = hi
    return eps


def solve_capacitance(cs: CrossSection, air: bool = False, cells_per_h: float = 16.0) -> float:
    """Per-unit-length capacitance in F/m of the cross-section.

    ``air=True`` replaces every dielectric with vacuum.  The capacitance is the
    discrete field energy of the finite-volume solution, which is exact for the
    assembled system.
    """
    x, y = _grid(cs, cells_per_h)
    nx, ny = x.size, y.size
    hx, hy = np.diff(x), np.diff(y)
    yc = 0.5 * (y[:-1] + y[1:])
    eps_row = _cell_eps(cs, yc, air)
    eps = np.broadcast_to(eps_row, (nx - 1, ny - 1))

    idx = np.arange(nx * ny).reshape(nx, ny)
    # x-directed edges (i,j)-(i+1,j): dual face spans half cells above and below
    wy = np.zeros((nx - 1, ny))
    wy[:, :-1] += eps * hy / 2.0
    wy[:, 1:] += eps * hy / 2.0
    ax = wy / hx[:, None]
    # y-directed edges (i,j)-(i,j+1)
    wx = np.zeros((nx, ny - 1))
    wx[:-1, :] += eps * hx[:, None] / 2.0
    wx[1:, :] += eps * hx[:, None] / 2.0
    ay = wx / hy[None, :]

    rows = np.concatenate([idx[:-1, :].ravel(), idx[:, :-1].ravel()])
    cols = np.concatenate([idx[1:, :].ravel(), idx[:, 1:].ravel()])
    vals = np.concatenate([ax.ravel(), ay.ravel()])
    off = sp.coo_matrix((vals, (rows, cols)), shape=(nx * ny, nx * ny))
    off = off + off.T
    diag = np.asarray(off.sum(axis=1)).ravel()
    lap = (sp.diags(diag) - off).tocsr()

    phi = np.zeros((nx, ny))
    fixed = np.zeros((nx, ny), dtype=bool)
    fixed[:, 0] = fixed[:, -1] = True
    fixed[-1, :] = True
    j_strip = int(np.argmin(np.abs(y - 1.0)))
    strip = x <= 0.5 * cs.strip_width + 1e-12
    fixed[strip, j_strip] = True
    phi[strip, j_strip] = 1.0

    f = ~fixed.ravel()
    d = fixed.ravel()
    a_ff = lap[f][:, f].tocsc()
    rhs = -(lap[f][:, d] @ phi.ravel()[d])
    sol = spla.spsolve(a_ff, rhs)
    resid = np.linalg.norm(a_ff @ sol - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if not np.all(np.isfinite(sol)) or resid > RESIDUAL_TOL:
        raise SolverError("Laplace solve did not converge", residual=float(resid))
    flat = phi.ravel()
    flat[f] = sol
    phi = flat.reshape(nx, ny)

    energy = np.sum(ax * np.diff(phi, axis=0) ** 2) + np.sum(ay * np.diff(phi, axis=1) ** 2)
    return 2.0 * EPS0 * float(energy)


def make_cross_section(
    substrate_eps: float,
    substrate_height: float,
    strip_width: float,
    layers: Sequence[tuple[float, float]],
    width_factor: float = 20.0,
    height_factor: float = 40.0,
) -> CrossSection:
    """Normalise a physical cross-section (lengths in mm) to unit substrate height."""
    if strip_width <= 0 or substrate_height <= 0:
        raise DomainError("strip width and substrate height must be positive")
    if width_factor < 10 or height_factor < 20:
        raise DomainError("solver window must be >= 10x strip width and >= 20x substrate height")
    h = substrate_height
    w = strip_width / h
    norm = []
    stacked = 1.0
    for eps, thick in layers:
        if thick <= 0:
            continue
        t = thick / h
        norm.append((float(eps), t))
        if math.isinf(t):
            break
        stacked += t
    width = max(width_factor * w, 2.0 * height_factor)
    height = max(height_factor, stacked + height_factor / 2.0)
    return CrossSection(float(substrate_eps), w, tuple(norm), width, height)
