"""Dirichlet solver for the absorption equation via nonlinear Gauss-Seidel.

Each node update solves the scalar equation

    phi(t) = operator(center value t, neighbors fixed) - f(t) = 0

by sign-change bracketing and bisection (phi is piecewise smooth: the
attaining directions switch).  Two sweep orders are offered:

* ``lexicographic``: strictly sequential scalar updates in ascending node
  order; bit-identical across runs.  Intended for small grids and as the
  reference engine.
* ``redblack``: vectorized two-color updates (each color class sees a
  consistent snapshot); optionally accelerated by safeguarded Anderson
  extrapolation over whole sweeps.  Contract: final residual <= tol.

Convergence is declared on the global residual, never on update norms.
Sources are evaluated at max(t, 0) (positive-part convention); field
values may undershoot zero by no more than the solver tolerance.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import EXTERIOR, DomainMask, ScalarField, StencilSet
from .operators import (BLEND_BAND, NeighborTable, _EXTREMUM_GRADIENT as _EXG,
                        _source_gap, blend_coefficients, gradient_from_extremes,
                        neighbor_table)
from .sources import SourceTerm, check_monotone

LEXICOGRAPHIC = "lexicographic"
REDBLACK = "redblack"

# Sweeps of decreasing residual before an automatic damping reduction is
# lifted again (the reduction guards free-boundary oscillation; a single
# transient increase must not throttle the whole solve).
_DAMPING_COOLDOWN = 30



class BracketFailureError(RuntimeError):
    """No sign change found for a node equation after all expansions."""


class PreconditionError(ValueError):
    """Problem data violates the solver preconditions."""


@dataclass
class SolveOptions:
    tol: float = 1e-8
    max_sweeps: int = 50000
    damping: float = 1.0
    sweep_order: str = REDBLACK
    bracket_expansion_cap: int = 48
    # Extensions beyond the core option set (see decisions ledger):
    # sweep-level Anderson extrapolation for the redblack engine.
    accelerate: bool = True
    anderson_window: int = 8

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not (0 < self.damping <= 1):
            raise ValueError("damping must lie in (0, 1]")
        if self.sweep_order not in (LEXICOGRAPHIC, REDBLACK):
            raise ValueError(f"unknown sweep order {self.sweep_order!r}")


@dataclass
class SolveReport:
    sweeps: int
    residual: float
    wall_time: float
    converged: bool
    u_min: float
    u_max: float


# ---------------------------------------------------------------------------
# Scalar node root (reference path, also the public node_update)
# ---------------------------------------------------------------------------

def _pair_line(nbrs, pair_plus, pair_minus, pair_inv2len, pair_inv_l2, inv_2lmax):
    """Blended second-difference coefficients (P, Q) for one node, scalar
    mirror of operators.blend_coefficients: D2(t) = P - 2 t Q."""
    n_pairs = len(pair_plus)
    central = [
        abs(nbrs[pair_plus[j]] - nbrs[pair_minus[j]]) * pair_inv2len[j]
        for j in range(n_pairs)
    ]
    cmax = max(central)
    scale = max(cmax, (max(nbrs) - min(nbrs)) * inv_2lmax)
    thr = cmax - BLEND_BAND * scale
    weights = [max(c - thr, 0.0) for c in central]
    wsum = sum(weights)
    if wsum <= 0.0:
        weights = [1.0] * n_pairs
        wsum = float(n_pairs)
    p = 0.0
    q = 0.0
    for j in range(n_pairs):
        wl = weights[j] / wsum * pair_inv_l2[j]
        p += wl * (nbrs[pair_plus[j]] + nbrs[pair_minus[j]])
        q += wl
    return p, q


def _scalar_root(
    nbrs, inv_len, pair_p, pair_q, f_of_t, u_cur, h,
    cap: int, btol: float, nonneg: bool, node_label,
):
    """Bracketed bisection for one node equation, rooted at the current
    value.

    phi(u_cur) >= 0 means the node must rise: the nearest sign change
    above lies in [u_cur, max(hi, u_cur)] since phi(max nbr) <= 0.
    phi(u_cur) < 0 means it must fall: segments expanding geometrically
    below u_cur (clamped at 0 for non-negative problems) are scanned and
    the first sign-change segment is bisected.  Searching from the current
    value in the imbalance direction picks the nearest root consistently;
    starting from [min nbr, max nbr] regardless of the current value can
    alternate between distinct roots at interior-minimum nodes, where the
    node legitimately sits below every neighbor, and never settle.
    """
    n_dirs = len(nbrs)
    lo = min(nbrs)
    hi = max(nbrs)

    def phi(t):
        sp = -np.inf
        sm = np.inf
        for d in range(n_dirs):
            s = (nbrs[d] - t) * inv_len[d]
            if s > sp:
                sp = s
            if s < sm:
                sm = s
        g = (0.5 * (sp - sm)
             + _EXG * (sm if sm > 0.0 else 0.0)
             + _EXG * (-sp if sp < 0.0 else 0.0))
        return g * g * (pair_p - 2.0 * t * pair_q) - f_of_t(t)

    start = u_cur
    if nonneg and start < 0.0:
        start = 0.0
    if phi(start) >= 0.0:
        a, b = start, max(hi, start)
    else:
        step = max(hi - lo, h)
        prev = start
        a = b = None
        for j in range(cap):
            cand = start - step * (2.0 ** (j + 1) - 1.0)
            if nonneg and cand < 0.0:
                cand = 0.0
            pc = phi(cand)
            if pc >= 0.0:
                a, b = cand, prev
                break
            if nonneg and cand == 0.0:
                break
            prev = cand
        if a is None:
            raise BracketFailureError(
                f"no sign change for node {node_label} after {cap} expansions"
            )
    for _ in range(60):
        if b - a <= btol:
            break
        m = 0.5 * (a + b)
        if phi(m) >= 0.0:
            a = m
        else:
            b = m
    if a == 0.0:
        # root at the origin jump of a Heaviside-type source: the node is
        # exactly dead (phi(0) >= 0 >= phi(0+))
        return 0.0
    return 0.5 * (a + b)


def _nonneg_problem(mask: DomainMask, f: SourceTerm) -> bool:
    return mask.min_boundary() >= 0.0 and f(0.0, 0 if f.spatial else None) == 0.0


def _pair_tables(tab: NeighborTable):
    """Positions of each unsigned pair's arms within the signed row order."""
    sign_pos = {d: i for i, d in enumerate(tab.signed_dirs)}
    plus = [sign_pos[d] for d in tab.pair_dirs]
    minus = [sign_pos[tuple(-c for c in d)] for d in tab.pair_dirs]
    inv2 = [0.5 / float(l) for l in tab.pair_len]
    invl2 = [1.0 / float(l) ** 2 for l in tab.pair_len]
    inv_2lmax = 0.5 / float(tab.pair_len.max())
    return plus, minus, inv2, invl2, inv_2lmax


def node_update(
    u: ScalarField,
    mask: DomainMask,
    node,
    f: SourceTerm,
    stencil: StencilSet,
    damping: float = 1.0,
    bracket_expansion_cap: int = 48,
    bisect_tol: float = 1e-13,
) -> float:
    """Relaxed pointwise update: damped toward the root of the node equation."""
    tab = neighbor_table(mask, stencil)
    node_t = tuple(int(i) for i in node)
    flat = mask.grid.flat_index(node_t)
    try:
        col = tab.pos_in_interior[flat]
    except KeyError:
        raise ValueError(f"node {node_t} is not interior") from None
    u_flat = u.flat
    nbrs = [float(v) for v in u_flat[tab.nbr[:, col]]]
    inv_len = [float(v) for v in tab.inv_len]
    pair_plus, pair_minus, pair_inv2len, pair_inv_l2, inv_2lmax = _pair_tables(tab)
    pair_p, pair_q = _pair_line(nbrs, pair_plus, pair_minus, pair_inv2len, pair_inv_l2, inv_2lmax)
    nonneg = _nonneg_problem(mask, f)
    if f.spatial:
        f_of_t = lambda t: f(max(t, 0.0), flat)
    else:
        f_of_t = lambda t: f(max(t, 0.0))
    t_star = _scalar_root(
        nbrs, inv_len, pair_p, pair_q, f_of_t, float(u_flat[flat]), mask.grid.h,
        bracket_expansion_cap, bisect_tol, nonneg, node_t,
    )
    cur = float(u_flat[flat])
    return (1.0 - damping) * cur + damping * t_star


# ---------------------------------------------------------------------------
# Vectorized color pass (redblack engine)
# ---------------------------------------------------------------------------

class _ColorData:
    def __init__(self, tab: NeighborTable, cols: np.ndarray):
        self.nodes = tab.interior[cols]
        self.nbr = np.ascontiguousarray(tab.nbr[:, cols])
        self.plus_nbr = np.ascontiguousarray(tab.plus_nbr[:, cols])
        self.minus_nbr = np.ascontiguousarray(tab.minus_nbr[:, cols])
        self.inv_len = tab.inv_len[:, None]
        self.pair_len = tab.pair_len
        self.group_rows = tab.group_rows
        self.group_inv_len = (1.0 / tab.group_len)[:, None]


def _vec_phi(gmax, gmin, ginv, pair_p, pair_q, t, f: SourceTerm, nodes):
    """phi(t) from per-length-group neighbor extremes (gmax/gmin are
    (n_groups, n) and t-free; slope extremes over equal-length rays pass
    through the group value extremes)."""
    sp = ((gmax - t) * ginv).max(axis=0)
    sm = ((gmin - t) * ginv).min(axis=0)
    g = gradient_from_extremes(sp, sm)
    op = g * g * (pair_p - 2.0 * t * pair_q)
    fv = f(np.maximum(t, 0.0), nodes if f.spatial else None)
    return op - fv


def _color_pass(
    cd: _ColorData, u_flat: np.ndarray, f: SourceTerm,
    damping: float, cap: int, btol: float, nonneg: bool, h: float,
):
    nv = u_flat[cd.nbr]                      # (D, n) snapshot
    gmax = np.stack([nv[rows].max(axis=0) for rows in cd.group_rows])
    gmin = np.stack([nv[rows].min(axis=0) for rows in cd.group_rows])
    ginv = cd.group_inv_len
    vp = u_flat[cd.plus_nbr]
    vm = u_flat[cd.minus_nbr]
    pair_p, pair_q = blend_coefficients(vp, vm, cd.pair_len)

    lo = gmin.min(axis=0)
    hi = gmax.max(axis=0)
    cur = u_flat[cd.nodes]
    start = np.maximum(cur, 0.0) if nonneg else cur
    phi_start = _vec_phi(gmax, gmin, ginv, pair_p, pair_q, start, f, cd.nodes)

    # phi(current) >= 0: the node must rise; nearest root above lies in
    # [current, max(hi, current)] since phi(max nbr) <= 0
    a = start.copy()
    b = np.maximum(hi, start)

    # phi(current) < 0: the node must fall; scan geometric segments below
    # the current value (clamped at 0 for non-negative problems) and bisect
    # the first sign change
    pend = np.flatnonzero(phi_start < 0.0)
    if pend.size:
        step = np.maximum(hi[pend] - lo[pend], h)
        start_p = start[pend]
        prev = start_p.copy()
        found = np.zeros(pend.size, dtype=bool)
        a_found = np.zeros(pend.size)
        b_found = np.zeros(pend.size)
        live = np.arange(pend.size)
        for j_exp in range(cap):
            cand = start_p[live] - step[live] * (2.0 ** (j_exp + 1) - 1.0)
            if nonneg:
                cand = np.maximum(cand, 0.0)
            sub = pend[live]
            pc = _vec_phi(gmax[:, sub], gmin[:, sub], ginv, pair_p[sub], pair_q[sub],
                          cand, f, cd.nodes[sub])
            hit = pc >= 0.0
            if hit.any():
                idx = live[hit]
                a_found[idx] = cand[hit]
                b_found[idx] = prev[idx]
                found[idx] = True
            keep = ~hit
            if nonneg:
                keep &= cand > 0.0
            prev[live[keep]] = cand[keep]
            live = live[keep]
            if live.size == 0:
                break
        if not found.all():
            bad = int(cd.nodes[pend[np.flatnonzero(~found)[0]]])
            raise BracketFailureError(
                f"no sign change for node (flat index {bad}) after {cap} expansions"
            )
        a[pend] = a_found
        b[pend] = b_found

    t_star = 0.5 * (a + b)
    act = np.flatnonzero(b - a > btol)
    if act.size:
        a_s = a[act]
        b_s = b[act]
        gmax_s = np.ascontiguousarray(gmax[:, act])
        gmin_s = np.ascontiguousarray(gmin[:, act])
        ps_s = pair_p[act]
        il_s = pair_q[act]
        nodes_s = cd.nodes[act]
        for _ in range(60):
            if (b_s - a_s).max() <= btol:
                break
            m = 0.5 * (a_s + b_s)
            pm = _vec_phi(gmax_s, gmin_s, ginv, ps_s, il_s, m, f, nodes_s)
            ge = pm >= 0.0
            a_s = np.where(ge, m, a_s)
            b_s = np.where(ge, b_s, m)
        t_star[act] = np.where(a_s == 0.0, 0.0, 0.5 * (a_s + b_s))

    new = cur + damping * (t_star - cur)
    # exact-zero roots are structural (dead nodes); damping would leave a
    # positive remnant that a jump source keeps charging for
    new[t_star == 0.0] = 0.0
    u_flat[cd.nodes] = new


# ---------------------------------------------------------------------------
# Sweep engines
# ---------------------------------------------------------------------------

def _residual_flat(tab: NeighborTable, u_flat: np.ndarray, f: SourceTerm) -> float:
    t = u_flat[tab.interior]
    op = tab.operator_values(u_flat, t)
    return float(_source_gap(op, t, f, tab.interior).max())


def _solve_lexicographic(tab, mask, f, opts, u_flat):
    grid = mask.grid
    nonneg = _nonneg_problem(mask, f)
    inv_len = [float(v) for v in tab.inv_len]
    pair_plus, pair_minus, pair_inv2len, pair_inv_l2, inv_2lmax = _pair_tables(tab)
    nbr_cols = tab.nbr.T  # (N, D)
    nodes = tab.interior
    spatial = f.spatial
    damping = opts.damping
    calm = 0
    res_prev = np.inf
    res = _residual_flat(tab, u_flat, f)
    sweeps = 0
    while res > opts.tol and sweeps < opts.max_sweeps:
        for col in range(nodes.size):
            flat = int(nodes[col])
            nbrs = [float(u_flat[j]) for j in nbr_cols[col]]
            pair_p, pair_q = _pair_line(nbrs, pair_plus, pair_minus, pair_inv2len, pair_inv_l2, inv_2lmax)
            if spatial:
                f_of_t = lambda t: f(max(t, 0.0), flat)
            else:
                f_of_t = lambda t: f(max(t, 0.0))
            t_star = _scalar_root(
                nbrs, inv_len, pair_p, pair_q, f_of_t, float(u_flat[flat]), grid.h,
                opts.bracket_expansion_cap, 1e-13, nonneg, flat,
            )
            cur = float(u_flat[flat])
            u_flat[flat] = 0.0 if t_star == 0.0 else (1.0 - damping) * cur + damping * t_star
        sweeps += 1
        res_prev, res = res, _residual_flat(tab, u_flat, f)
        if res > res_prev:
            damping = 0.5
            calm = 0
        elif damping < opts.damping:
            calm += 1
            if calm >= _DAMPING_COOLDOWN:
                damping = opts.damping
    return sweeps, res


def _solve_redblack(tab, mask, f, opts, u_flat):
    nonneg = _nonneg_problem(mask, f)
    h = mask.grid.h
    colors = [
        _ColorData(tab, np.flatnonzero(tab.color == c))
        for c in range(tab.n_colors)
        if np.any(tab.color == c)
    ]
    interior = tab.interior
    damping = opts.damping
    calm = 0
    res = _residual_flat(tab, u_flat, f)
    sweeps = 0
    window = max(2, opts.anderson_window)
    hist_g: list[np.ndarray] = []
    hist_f: list[np.ndarray] = []
    rejects = 0
    while res > opts.tol and sweeps < opts.max_sweeps:
        # Inner bisection tolerance: the node equation's stiffness is
        # O(G^2 / h^2), so a root slack of res * h^2 keeps the induced
        # residual well below the current level.
        btol = min(1e-6, max(1e-13, res * h * h * 1e-2))
        u_before = u_flat[interior].copy()
        for cd in colors:
            _color_pass(cd, u_flat, f, damping, opts.bracket_expansion_cap, btol, nonneg, h)
        g_vec = u_flat[interior].copy()
        res_sweep = _residual_flat(tab, u_flat, f)
        res_new = res_sweep

        if opts.accelerate:
            hist_g.append(g_vec)
            hist_f.append(g_vec - u_before)
            if len(hist_g) > window:
                hist_g.pop(0)
                hist_f.pop(0)
            if len(hist_g) >= 2:
                d_f = np.stack([hist_f[i + 1] - hist_f[i] for i in range(len(hist_f) - 1)], axis=1)
                d_g = np.stack([hist_g[i + 1] - hist_g[i] for i in range(len(hist_g) - 1)], axis=1)
                gamma, *_ = np.linalg.lstsq(d_f, hist_f[-1], rcond=None)
                u_acc = hist_g[-1] - d_g @ gamma
                if nonneg:
                    np.clip(u_acc, 0.0, None, out=u_acc)
                if np.all(np.isfinite(u_acc)):
                    saved = u_flat[interior].copy()
                    u_flat[interior] = u_acc
                    res_acc = _residual_flat(tab, u_flat, f)
                    if res_acc < res_sweep:
                        res_new = res_acc
                        rejects = 0
                    else:
                        u_flat[interior] = saved
                        rejects += 1
                        if rejects >= 3:
                            hist_g.clear()
                            hist_f.clear()
                            rejects = 0
        sweeps += 1
        if res_new > res:
            damping = 0.5
            calm = 0
        elif damping < opts.damping:
            calm += 1
            if calm >= _DAMPING_COOLDOWN:
                damping = opts.damping
        res = res_new
    return sweeps, res


def solve_dirichlet(
    mask: DomainMask,
    f: SourceTerm,
    stencil: StencilSet,
    opts: Optional[SolveOptions] = None,
    initial: Optional[ScalarField] = None,
    enforce_preconditions: bool = True,
) -> tuple[ScalarField, SolveReport]:
    """Solve the Dirichlet problem for the absorption equation on a mask.

    Boundary data must be non-negative and f non-decreasing (the comparison
    principle's hypotheses); set ``enforce_preconditions=False`` to override.
    The default initial guess fills the interior with the mean boundary
    value.  Non-convergence within max_sweeps yields converged=False, not an
    exception; bracket failures raise with the offending node.
    """
    opts = opts or SolveOptions()
    if enforce_preconditions:
        if mask.min_boundary() < 0:
            raise PreconditionError(
                "boundary data must be non-negative (override with enforce_preconditions=False)"
            )
        t_hi = max(1.0, 1.5 * abs(mask.max_boundary()))
        rep = check_monotone(f, t_hi)
        if not rep.passed:
            raise PreconditionError(
                f"source fails the monotonicity audit at {rep.worst_point}"
            )

    tab = neighbor_table(mask, stencil)
    if initial is not None:
        u_arr = initial.values.copy()
        dir_sel = mask.labels == 1
        u_arr[dir_sel] = mask.boundary_values[dir_sel]
        u_arr[mask.labels == EXTERIOR] = 0.0
    else:
        bvals = mask.boundary_values[mask.labels == 1]
        u_arr = mask.base_field(fill=float(bvals.mean()))
    u_flat = u_arr.ravel()

    start = time.monotonic()
    if opts.sweep_order == LEXICOGRAPHIC:
        sweeps, res = _solve_lexicographic(tab, mask, f, opts, u_flat)
    else:
        sweeps, res = _solve_redblack(tab, mask, f, opts, u_flat)
    wall = time.monotonic() - start

    field = ScalarField(mask.grid, u_arr)
    nonext = mask.labels != EXTERIOR
    report = SolveReport(
        sweeps=sweeps,
        residual=res,
        wall_time=wall,
        converged=bool(res <= opts.tol),
        u_min=float(u_arr[nonext].min()),
        u_max=float(u_arr[nonext].max()),
    )
    return field, report
