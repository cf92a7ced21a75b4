"""Free-boundary geometry: positivity sets, growth-exponent regression,
non-degeneracy constants, porosity and box-counting dimension."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .grid import EXTERIOR, DomainMask, ScalarField


class DegenerateFitError(ValueError):
    """Growth fit impossible (vanishing sup: point too deep in the plateau)."""


@dataclass(frozen=True, eq=False)
class PositivityDecomposition:
    """Partition of the non-exterior nodes into {u > eps} and {u <= eps}.

    Free-boundary nodes are the positive nodes with at least one dead axis
    neighbor (the dead-side candidates are deduplicated to the positive
    side).
    """

    threshold: float
    positive: np.ndarray       # bool, grid shape
    dead: np.ndarray           # bool, grid shape
    fb_nodes: np.ndarray       # flat indices, ascending
    grid_shape: tuple[int, ...]

    @property
    def fb_multi(self) -> np.ndarray:
        return np.stack(np.unravel_index(self.fb_nodes, self.grid_shape), axis=-1)


def decompose(u: ScalarField, mask: DomainMask, eps: float) -> PositivityDecomposition:
    """Split the field at threshold eps (recommended: 10x the solver tol,
    so iteration noise cannot fake a free boundary)."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    nonext = mask.labels != EXTERIOR
    positive = (u.values > eps) & nonext
    dead = nonext & ~positive
    face = ndimage.generate_binary_structure(u.grid.dim, 1)
    near_dead = ndimage.binary_dilation(dead, structure=face)
    fb = positive & near_dead
    return PositivityDecomposition(
        threshold=float(eps),
        positive=positive,
        dead=dead,
        fb_nodes=np.flatnonzero(fb.ravel()),
        grid_shape=u.grid.npts,
    )


def sup_over_ball(
    u: ScalarField,
    x0,
    r: float,
    mask: Optional[DomainMask] = None,
) -> float:
    """max of u over nodes with |x - x0| <= r (non-exterior when a mask is
    given).  Raises on an empty ball."""
    pts = u.grid.coords()
    sel = np.linalg.norm(pts - np.asarray(x0, dtype=float), axis=1) <= r
    if mask is not None:
        sel &= mask.labels.ravel() != EXTERIOR
    if not sel.any():
        raise ValueError(f"ball of radius {r} around {x0} contains no usable nodes")
    return float(u.flat[sel].max())


@dataclass(frozen=True)
class ExponentFit:
    """Least-squares fit of log sup_{B_r} u against log r."""

    center: tuple[float, ...]
    radii: tuple[float, ...]
    sups: tuple[float, ...]
    slope: float
    intercept: float
    r_squared: float

    @property
    def constant(self) -> float:
        """Growth constant exp(intercept): sup ~ constant * r^slope."""
        return float(np.exp(self.intercept))


def growth_exponent_fit(
    u: ScalarField,
    x0,
    radii: Sequence[float],
    mask: Optional[DomainMask] = None,
) -> ExponentFit:
    """Fit the growth exponent of sup_{B_r(x0)} u over the given radii.

    Needs at least 5 strictly increasing radii; raises DegenerateFitError
    when any sup vanishes (x0 too deep inside the plateau).
    """
    radii = [float(r) for r in radii]
    if len(radii) < 5:
        raise ValueError("need at least 5 radii")
    if any(r2 <= r1 for r1, r2 in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    sups = [sup_over_ball(u, x0, r, mask) for r in radii]
    if any(s <= 0 for s in sups):
        raise DegenerateFitError(f"sup over B_r vanishes at some radius around {x0}")
    lr = np.log(radii)
    ls = np.log(sups)
    slope, intercept = np.polyfit(lr, ls, 1)
    fitted = slope * lr + intercept
    ss_res = float(np.sum((ls - fitted) ** 2))
    ss_tot = float(np.sum((ls - ls.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentFit(
        center=tuple(float(c) for c in np.atleast_1d(x0)),
        radii=tuple(radii),
        sups=tuple(float(s) for s in sups),
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r2,
    )


def nondegeneracy_constants(
    u: ScalarField,
    x0,
    radii: Sequence[float],
    beta: float,
    mask: Optional[DomainMask] = None,
) -> tuple[float, float]:
    """(c_hat, C_hat) = min and max over r of sup_{B_r} u / r^beta."""
    fit = growth_exponent_fit(u, x0, radii, mask)
    ratios = [s / r ** beta for s, r in zip(fit.sups, fit.radii)]
    return float(min(ratios)), float(max(ratios))


@dataclass(frozen=True, eq=False)
class PorosityEstimate:
    sigma_hat: float
    box_scales: tuple[float, ...]
    box_counts: tuple[int, ...]
    box_dimension: float


def porosity_estimate(
    dec: PositivityDecomposition,
    radii: Sequence[float],
    h: float,
) -> PorosityEstimate:
    """Porosity ratio and box-counting dimension of the free boundary.

    For every free-boundary node x and every radius r the largest ball
    inside B_r(x) avoiding all free-boundary nodes is found through the
    euclidean distance transform; sigma_hat is the minimum of (that
    radius)/r, honoring the universal quantifier of the porosity
    definition.  The box dimension is fitted over dyadic scales with at
    least 10 occupied boxes (all scales if fewer than two qualify).
    """
    if dec.fb_nodes.size == 0:
        raise ValueError("free boundary is empty")
    radii = [float(r) for r in radii]
    if any(r < 4 * h for r in radii):
        raise ValueError("radii must be >= 4h")
    shape = dec.grid_shape
    dim = len(shape)

    fb_mask = np.zeros(shape, dtype=bool)
    fb_multi = dec.fb_multi
    fb_mask[tuple(fb_multi.T)] = True
    # distance (in h units) from every node to the nearest free-boundary node
    dist = ndimage.distance_transform_edt(~fb_mask) * h

    sigma_hat = np.inf
    for r in radii:
        m = int(np.floor(r / h))
        offs = np.stack(
            np.meshgrid(*([np.arange(-m, m + 1)] * dim), indexing="ij"), axis=-1
        ).reshape(-1, dim)
        offdist = np.linalg.norm(offs, axis=1) * h
        keep = offdist <= r
        offs = offs[keep]
        offdist = offdist[keep]
        for x in fb_multi:
            centers = x + offs
            ok = np.all((centers >= 0) & (centers < np.asarray(shape)), axis=1)
            cand = centers[ok]
            inner = np.minimum(dist[tuple(cand.T)], r - offdist[ok])
            sigma_hat = min(sigma_hat, float(inner.max()) / r)

    scales = []
    counts = []
    s = 1
    max_cells = max(shape) - 1
    while s <= max_cells // 2:
        boxes = {tuple(ix // s) for ix in fb_multi}
        scales.append(s * h)
        counts.append(len(boxes))
        s *= 2
    scales_a = np.asarray(scales)
    counts_a = np.asarray(counts, dtype=float)
    good = counts_a >= 10
    if good.sum() < 2:
        good = counts_a >= 1
    if good.sum() >= 2:
        slope = np.polyfit(np.log(scales_a[good]), np.log(counts_a[good]), 1)[0]
        dhat = -float(slope)
    else:
        dhat = 0.0
    return PorosityEstimate(
        sigma_hat=float(max(sigma_hat, 0.0)),
        box_scales=tuple(float(s) for s in scales),
        box_counts=tuple(int(c) for c in counts),
        box_dimension=dhat,
    )
