"""Direct touching-test verifier for the viscosity inequalities.

Random quadratic probes phi(x) = u(x0) + p.(x-x0) + (x-x0)' Q (x-x0) / 2
are generated at random interior nodes.  When a probe touches the field
from below on the node neighborhood (u - phi >= -tol with equality at x0)
the super-solution inequality  p'Qp <= f(u(x0)) + tol_f  is required, and
the mirrored check applies to probes touching from above.  p'Qp is the
exact value of the operator on the quadratic at the touching point.
Absence of violations is evidence, not proof.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .grid import EXTERIOR, INTERIOR, DomainMask, ScalarField
from .sources import SourceTerm


@dataclass(frozen=True)
class ProbeViolation:
    node: tuple[int, ...]
    side: str                  # "super" (touching from below) or "sub"
    excess: float
    p: tuple[float, ...]
    q: tuple[tuple[float, ...], ...]


@dataclass(frozen=True, eq=False)
class TouchingReport:
    probes: int
    touching_below: int
    touching_above: int
    nodes_tested: int
    worst_super: float
    worst_sub: float
    violations: tuple[ProbeViolation, ...]
    seed: int

    @property
    def clean(self) -> bool:
        return len(self.violations) == 0


def verify_viscosity(
    u: ScalarField,
    mask: DomainMask,
    f: SourceTerm,
    probes: int = 1000,
    radius: int = 2,
    tol: float = 1e-10,
    tol_f: Optional[float] = None,
    seed: int = 0,
) -> TouchingReport:
    """Probe the field with seeded random quadratics and report violations.

    radius is the touching neighborhood half-width in nodes (Chebyshev box,
    exterior nodes excluded).  tol is the touching slack; tol_f defaults to
    10h, the calibrated operator tolerance for exact dead-core profiles.
    """
    if probes < 100:
        raise ValueError("need at least 100 probes")
    if radius < 2:
        raise ValueError("radius must be >= 2 nodes")
    grid = u.grid
    h = grid.h
    if tol_f is None:
        tol_f = 10.0 * h
    rng = np.random.default_rng(seed)

    labels = mask.labels
    interior_multi = np.argwhere(labels == INTERIOR)
    # keep nodes whose probe box stays on the lattice
    ok = np.all(
        (interior_multi - radius >= 0)
        & (interior_multi + radius <= np.asarray(grid.npts) - 1),
        axis=1,
    )
    pool = interior_multi[ok]
    if pool.shape[0] == 0:
        raise ValueError("no interior nodes with a full probe neighborhood")

    dim = grid.dim
    offs = np.stack(
        np.meshgrid(*([np.arange(-radius, radius + 1)] * dim), indexing="ij"), axis=-1
    ).reshape(-1, dim)
    offs = offs[np.any(offs != 0, axis=1)]
    dx_all = offs * h

    vals = u.values
    n_below = 0
    n_above = 0
    worst_super = 0.0
    worst_sub = 0.0
    violations: list[ProbeViolation] = []
    nodes_seen = set()
    q_cap = 10.0 / h

    picks = rng.integers(0, pool.shape[0], size=probes)
    for i in range(probes):
        node = tuple(int(c) for c in pool[picks[i]])
        nodes_seen.add(node)
        nb = node + offs
        keep = labels[tuple(nb.T)] != EXTERIOR
        if not keep.any():
            continue
        nb_keep = nb[keep]
        dx = dx_all[keep]
        u0 = vals[node]
        u_nb = vals[tuple(nb_keep.T)]

        # local slope from immediate axis neighbors bounds the probe gradient
        axis_sel = np.abs(offs[keep]).sum(axis=1) == 1
        if axis_sel.any():
            s_loc = float(np.abs(u_nb[axis_sel] - u0).max()) / h
        else:
            s_loc = 0.0

        direction = rng.normal(size=dim)
        direction /= np.linalg.norm(direction)
        p = direction * rng.uniform(0.0, 2.0 * s_loc) if s_loc > 0 else np.zeros(dim)
        a = rng.normal(size=(dim, dim))
        q = 0.5 * (a + a.T)
        norm = np.linalg.norm(q, 2)
        if norm > 0:
            q *= rng.uniform(0.0, q_cap) / norm

        phi = u0 + dx @ p + 0.5 * np.einsum("ni,ij,nj->n", dx, q, dx)
        diff = u_nb - phi
        op_probe = float(p @ q @ p)
        fv = float(f(max(u0, 0.0), grid.flat_index(node) if f.spatial else None))

        if diff.min() >= -tol:          # phi touches from below
            n_below += 1
            excess = op_probe - fv - tol_f
            worst_super = max(worst_super, excess)
            if excess > 0:
                violations.append(ProbeViolation(
                    node=node, side="super", excess=float(excess),
                    p=tuple(map(float, p)), q=tuple(map(tuple, q.tolist())),
                ))
        if diff.max() <= tol:           # phi touches from above
            n_above += 1
            excess = fv - tol_f - op_probe
            worst_sub = max(worst_sub, excess)
            if excess > 0:
                violations.append(ProbeViolation(
                    node=node, side="sub", excess=float(excess),
                    p=tuple(map(float, p)), q=tuple(map(tuple, q.tolist())),
                ))

    return TouchingReport(
        probes=probes,
        touching_below=n_below,
        touching_above=n_above,
        nodes_tested=len(nodes_seen),
        worst_super=float(worst_super),
        worst_sub=float(worst_sub),
        violations=tuple(violations),
        seed=seed,
    )
