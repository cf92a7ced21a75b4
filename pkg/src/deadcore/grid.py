"""Lattice geometry: grids, scalar fields, domain masks and wide-stencil directions.

Everything here is value-semantic and immutable after construction (arrays are
marked read-only), so instances are safe to share across threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import ndimage

# Node labels used by DomainMask.
INTERIOR = 0
DIRICHLET = 1
EXTERIOR = 2


class InvalidGeometryError(ValueError):
    """A grid, mask or ball violates the geometric preconditions."""


def _float_tuple(x, dim: int, name: str) -> tuple[float, ...]:
    try:
        vals = tuple(float(v) for v in np.atleast_1d(np.asarray(x, dtype=float)))
    except (TypeError, ValueError) as exc:
        raise InvalidGeometryError(f"{name} must be a real vector, got {x!r}") from exc
    if len(vals) != dim:
        raise InvalidGeometryError(f"{name} must have length {dim}, got {len(vals)}")
    return vals


def _int_tuple(x, dim: int, name: str) -> tuple[int, ...]:
    arr = np.atleast_1d(np.asarray(x))
    vals = tuple(int(v) for v in arr)
    if len(vals) != dim:
        raise InvalidGeometryError(f"{name} must have length {dim}, got {len(vals)}")
    return vals


@dataclass(frozen=True)
class GridSpec:
    """Node-centered uniform lattice over a rectangular box.

    Nodes sit at ``origin + index * h`` with indices 0..cells inclusive per
    axis; the per-axis spacing must be equal (isotropic stencil slopes rely
    on a single h).
    """

    dim: int
    origin: tuple[float, ...]
    extent: tuple[float, ...]
    cells: tuple[int, ...]
    h: float

    @property
    def npts(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cells)

    @property
    def node_count(self) -> int:
        return int(np.prod(self.npts))

    def axis_nodes(self, axis: int) -> np.ndarray:
        return self.origin[axis] + self.h * np.arange(self.npts[axis])

    def coords(self) -> np.ndarray:
        """All node positions, shape ``(node_count, dim)``, row-major order."""
        axes = [self.axis_nodes(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def position(self, node: Sequence[int]) -> np.ndarray:
        idx = np.asarray(node, dtype=float)
        return np.asarray(self.origin) + idx * self.h

    @property
    def strides(self) -> tuple[int, ...]:
        """Row-major flat-index strides (in nodes) per axis."""
        s = [1] * self.dim
        for a in range(self.dim - 2, -1, -1):
            s[a] = s[a + 1] * self.npts[a + 1]
        return tuple(s)

    def flat_index(self, node: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(i) for i in node), self.npts))


def make_grid(dim: int, origin, extent, cells) -> GridSpec:
    """Build a GridSpec with derived spacing ``h = extent / cells``.

    Raises InvalidGeometryError for non-positive extents, cells < 4 on any
    axis, or unequal per-axis spacing.
    """
    if dim not in (1, 2, 3):
        raise InvalidGeometryError(f"dim must be 1, 2 or 3, got {dim}")
    origin_t = _float_tuple(origin, dim, "origin")
    extent_t = _float_tuple(extent, dim, "extent")
    cells_t = _int_tuple(cells, dim, "cells")
    if any(e <= 0 for e in extent_t):
        raise InvalidGeometryError(f"extents must be positive, got {extent_t}")
    if any(c < 4 for c in cells_t):
        raise InvalidGeometryError(f"need at least 4 cells per axis, got {cells_t}")
    hs = [e / c for e, c in zip(extent_t, cells_t)]
    h0 = hs[0]
    if any(abs(h - h0) > 1e-12 * max(abs(h0), 1.0) for h in hs):
        raise InvalidGeometryError(f"per-axis spacing must be equal, got {hs}")
    return GridSpec(dim=dim, origin=origin_t, extent=extent_t, cells=cells_t, h=h0)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Gridded real-valued function, values in row-major node order."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.npts:
            vals = vals.reshape(self.grid.npts)
        if not np.all(np.isfinite(vals)):
            raise ValueError("field values must all be finite")
        object.__setattr__(self, "values", _readonly(vals))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "ScalarField":
        return cls(grid, np.zeros(grid.npts))

    @classmethod
    def full(cls, grid: GridSpec, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.npts, float(value)))

    @classmethod
    def from_function(cls, grid: GridSpec, fn: Callable[[np.ndarray], np.ndarray]) -> "ScalarField":
        """Evaluate ``fn`` on all node positions ((n, dim) -> (n,))."""
        vals = np.asarray(fn(grid.coords()), dtype=float).reshape(grid.npts)
        return cls(grid, vals)

    @property
    def flat(self) -> np.ndarray:
        return self.values.ravel()

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, np.array(values, dtype=float))

    def at(self, node: Sequence[int]) -> float:
        return float(self.values[tuple(int(i) for i in node)])


@dataclass(frozen=True, eq=False)
class DomainMask:
    """Interior / Dirichlet-boundary / exterior node labels plus boundary data.

    boundary_values is NaN off the Dirichlet set so accidental reads surface
    as NaNs instead of silent zeros.
    """

    grid: GridSpec
    labels: np.ndarray
    boundary_values: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int8).reshape(self.grid.npts)
        bvals = np.asarray(self.boundary_values, dtype=float).reshape(self.grid.npts)
        if not np.all(np.isfinite(bvals[labels == DIRICHLET])):
            raise InvalidGeometryError("Dirichlet values must be finite")
        _check_axis_neighbors(labels)
        object.__setattr__(self, "labels", _readonly(labels))
        object.__setattr__(self, "boundary_values", _readonly(bvals))

    @property
    def interior_flat(self) -> np.ndarray:
        """Flat indices of interior nodes, ascending (lexicographic scan order)."""
        return np.flatnonzero(self.labels.ravel() == INTERIOR)

    @property
    def dirichlet_flat(self) -> np.ndarray:
        return np.flatnonzero(self.labels.ravel() == DIRICHLET)

    @property
    def n_interior(self) -> int:
        return int(np.count_nonzero(self.labels == INTERIOR))

    def is_interior(self, node: Sequence[int]) -> bool:
        return self.labels[tuple(int(i) for i in node)] == INTERIOR

    def base_field(self, fill: float = 0.0) -> np.ndarray:
        """Working array: ``fill`` on the interior, Dirichlet data on the
        boundary, zero on exterior nodes (which are never read)."""
        out = np.zeros(self.grid.npts)
        out[self.labels == INTERIOR] = fill
        dir_sel = self.labels == DIRICHLET
        out[dir_sel] = self.boundary_values[dir_sel]
        return out

    def max_boundary(self) -> float:
        return float(self.boundary_values[self.labels == DIRICHLET].max())

    def min_boundary(self) -> float:
        return float(self.boundary_values[self.labels == DIRICHLET].min())


def _check_axis_neighbors(labels: np.ndarray) -> None:
    # Every interior node must have readable (non-exterior) +-axis neighbors.
    interior = labels == INTERIOR
    if not interior.any():
        raise InvalidGeometryError("mask has no interior nodes")
    readable = labels != EXTERIOR
    for axis in range(labels.ndim):
        for shift in (1, -1):
            ok = np.zeros_like(interior)
            src = [slice(None)] * labels.ndim
            dst = [slice(None)] * labels.ndim
            if shift == 1:
                src[axis] = slice(1, None)
                dst[axis] = slice(None, -1)
            else:
                src[axis] = slice(None, -1)
                dst[axis] = slice(1, None)
            ok[tuple(dst)] = readable[tuple(src)]
            if np.any(interior & ~ok):
                raise InvalidGeometryError(
                    "interior node lacks a readable axis neighbor "
                    f"(axis {axis}, direction {shift:+d})"
                )


def ball_mask(
    grid: GridSpec,
    center,
    radius: float,
    boundary_fn: Callable[[np.ndarray], np.ndarray],
    reach: int = 1,
) -> DomainMask:
    """Label the lattice for a Dirichlet problem on a ball.

    Nodes with ``|x - center| < radius`` (strict) become interior; nodes
    within ``reach`` (Chebyshev, in nodes) of an interior node become
    Dirichlet with value ``boundary_fn(points)``; the rest are exterior.
    ``reach`` must cover the stencil radius k so every ray lands on a
    readable node.
    """
    center_t = _float_tuple(center, grid.dim, "center")
    radius = float(radius)
    if radius <= 0:
        raise InvalidGeometryError("ball radius must be positive")
    pts = grid.coords()
    dist = np.linalg.norm(pts - np.asarray(center_t), axis=1)
    interior = (dist < radius).reshape(grid.npts)
    if not interior.any():
        raise InvalidGeometryError("ball contains no lattice nodes")

    # The collar must fit: no interior node within `reach` of the array edge.
    idx = np.argwhere(interior)
    lo = idx.min(axis=0)
    hi = idx.max(axis=0)
    for a in range(grid.dim):
        if lo[a] < reach or hi[a] > grid.cells[a] - reach:
            raise InvalidGeometryError(
                f"ball of radius {radius} with a {reach}-node collar exceeds the grid"
            )

    structure = np.ones((2 * reach + 1,) * grid.dim, dtype=bool)
    dilated = ndimage.binary_dilation(interior, structure=structure)
    boundary = dilated & ~interior

    labels = np.full(grid.npts, EXTERIOR, dtype=np.int8)
    labels[interior] = INTERIOR
    labels[boundary] = DIRICHLET

    bvals = np.full(grid.npts, np.nan)
    bpts = pts[boundary.ravel()]
    bv = np.asarray(boundary_fn(bpts), dtype=float)
    if bv.shape != (bpts.shape[0],):
        raise InvalidGeometryError("boundary_fn must map (m, dim) points to (m,) values")
    bvals[boundary] = bv
    return DomainMask(grid=grid, labels=labels, boundary_values=bvals)


@dataclass(frozen=True)
class StencilSet:
    """Primitive lattice directions of max-norm <= k, stored up to sign.

    Operators scan both +e and -e; ``signed`` enumerates the full set in
    lexicographic order, which is also the tie-break order for slope
    extremes.
    """

    dim: int
    k: int
    directions: tuple[tuple[int, ...], ...]

    @property
    def signed(self) -> tuple[tuple[int, ...], ...]:
        full = [d for d in self.directions]
        full += [tuple(-c for c in d) for d in self.directions]
        return tuple(sorted(full))

    def signed_array(self) -> np.ndarray:
        return np.array(self.signed, dtype=np.int64)

    def lengths(self, h: float) -> np.ndarray:
        """Euclidean ray length per signed direction."""
        return h * np.linalg.norm(self.signed_array(), axis=1)


def _primitive(vec: tuple[int, ...]) -> bool:
    g = 0
    for c in vec:
        g = math.gcd(g, abs(c))
    return g == 1


@lru_cache(maxsize=64)
def stencil_directions(dim: int, k: int) -> StencilSet:
    """All primitive, pairwise non-collinear integer directions of max-norm
    <= k, up to sign, in lexicographic order."""
    if dim not in (1, 2, 3):
        raise InvalidGeometryError(f"dim must be 1, 2 or 3, got {dim}")
    if k < 1:
        raise InvalidGeometryError(f"stencil radius k must be >= 1, got {k}")
    rng = range(-k, k + 1)
    dirs = set()
    for vec in np.stack(np.meshgrid(*([list(rng)] * dim), indexing="ij"), axis=-1).reshape(-1, dim):
        tup = tuple(int(c) for c in vec)
        if all(c == 0 for c in tup):
            continue
        # canonical sign: first nonzero coordinate positive
        first = next(c for c in tup if c != 0)
        if first < 0:
            tup = tuple(-c for c in tup)
        if _primitive(tup):
            dirs.add(tup)
    return StencilSet(dim=dim, k=k, directions=tuple(sorted(dirs)))
