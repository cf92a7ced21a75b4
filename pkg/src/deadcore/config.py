"""Experiment configuration: flat `key = value` files with [section] headers.

Lists are comma separated; floats are written with shortest round-trip
reprs so a config survives write -> read -> write byte-identically.  The
config hash in every output table is the sha256 of the canonical
serialization.
"""
from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .grid import DomainMask, GridSpec, ScalarField, ball_mask, make_grid, stencil_directions
from .radial import RadialDeadCoreSolution, exact_profile
from .solver import SolveOptions
from .sources import SourceTerm, make_source

EXPERIMENTS = (
    "solve",
    "convergence",
    "flatness",
    "borderline",
    "liouville",
    "porosity",
    "audit",
    "verify",
)


@dataclass
class ExperimentConfig:
    """Declarative description of one experiment run."""

    experiment: str
    seed: int = 0
    threads: int = 1

    # geometry
    dim: int = 2
    origin: tuple = (-1.1, -1.1)
    extent: tuple = (2.2, 2.2)
    cells: tuple = (64, 64)
    ball_center: tuple = (0.0, 0.0)
    ball_radius: float = 1.0

    # boundary data family: constant | affine | bump | radial-oracle
    boundary_kind: str = "constant"
    boundary_value: float = 1.0
    boundary_coeffs: tuple = ()

    # absorption term
    source_family: str = "power"
    source_lam: float = 1.0
    source_gamma: float = 1.0

    # discretization / solve
    stencil_k: int = 2
    tol: float = 1e-8
    max_sweeps: int = 20000
    damping: float = 1.0
    sweep_order: str = "redblack"
    bracket_expansion_cap: int = 48
    accelerate: bool = True

    # analysis parameters
    eps: float = 1e-7
    radii: tuple = ()
    probes: int = 1000
    probe_radius: int = 2
    probe_tol: float = 1e-10

    # experiment-specific knobs
    cells_list: tuple = ()          # convergence / borderline levels
    kappa_list: tuple = ()          # flatness sweep
    mu: float = 0.25                # flatness target
    r_list: tuple = ()              # liouville ball radii
    theta: float = 0.25             # liouville boundary fraction
    contrast_lam: float = 32.0      # borderline contrast source
    audit_terms: tuple = ()         # audit: source family tags
    audit_gamma: float = 0.0
    audit_t_max: float = 5.0
    audit_samples: int = 120
    binary_dumps: bool = False

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")


_SECTION_OF = {
    "experiment": "experiment", "seed": "experiment", "threads": "experiment",
    "dim": "grid", "origin": "grid", "extent": "grid", "cells": "grid",
    "ball_center": "domain", "ball_radius": "domain",
    "boundary_kind": "boundary", "boundary_value": "boundary",
    "boundary_coeffs": "boundary",
    "source_family": "source", "source_lam": "source", "source_gamma": "source",
    "stencil_k": "solve", "tol": "solve", "max_sweeps": "solve",
    "damping": "solve", "sweep_order": "solve",
    "bracket_expansion_cap": "solve", "accelerate": "solve",
    "eps": "analysis", "radii": "analysis", "probes": "analysis",
    "probe_radius": "analysis", "probe_tol": "analysis",
    "cells_list": "study", "kappa_list": "study", "mu": "study",
    "r_list": "study", "theta": "study", "contrast_lam": "study",
    "audit_terms": "study", "audit_gamma": "study", "audit_t_max": "study",
    "audit_samples": "study", "binary_dumps": "study",
}

_SECTIONS = ("experiment", "grid", "domain", "boundary", "source", "solve",
             "analysis", "study")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        return ", ".join(_fmt(x) for x in v)
    return str(v)


def _parse(raw: str, like):
    raw = raw.strip()
    if isinstance(like, bool):
        return raw.lower() in ("true", "1", "yes")
    if isinstance(like, int):
        return int(raw)
    if isinstance(like, float):
        return float(raw)
    if isinstance(like, tuple):
        if not raw:
            return ()
        items = [x.strip() for x in raw.split(",")]
        out = []
        for x in items:
            try:
                xv = int(x)
            except ValueError:
                try:
                    xv = float(x)
                except ValueError:
                    xv = x
            out.append(xv)
        return tuple(out)
    return raw


def config_to_text(cfg: ExperimentConfig) -> str:
    buf = io.StringIO()
    defaults = ExperimentConfig(experiment=cfg.experiment)
    for section in _SECTIONS:
        keys = [f.name for f in fields(cfg) if _SECTION_OF[f.name] == section]
        lines = [f"{k} = {_fmt(getattr(cfg, k))}" for k in keys]
        if lines:
            buf.write(f"[{section}]\n")
            buf.write("\n".join(lines))
            buf.write("\n\n")
    return buf.getvalue()


def config_from_text(text: str) -> ExperimentConfig:
    parser = configparser.RawConfigParser(delimiters=("=",))
    parser.optionxform = str
    parser.read_string(text)
    defaults = {f.name: f.default if f.default is not field else None for f in fields(ExperimentConfig)}
    proto = ExperimentConfig(experiment="solve")
    kwargs = {}
    for section in parser.sections():
        for key, raw in parser.items(section):
            if key not in _SECTION_OF:
                raise ValueError(f"unknown config key {key!r}")
            kwargs[key] = _parse(raw, getattr(proto, key))
    return ExperimentConfig(**kwargs)


def write_config(cfg: ExperimentConfig, path) -> None:
    Path(path).write_text(config_to_text(cfg))


def read_config(path) -> ExperimentConfig:
    return config_from_text(Path(path).read_text())


def config_hash(cfg: ExperimentConfig) -> str:
    return hashlib.sha256(config_to_text(cfg).encode()).hexdigest()[:16]


def provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "artifact_version": __version__}


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_grid(cfg: ExperimentConfig, cells=None) -> GridSpec:
    return make_grid(cfg.dim, cfg.origin, cfg.extent, cells or cfg.cells)


def build_source(cfg: ExperimentConfig) -> SourceTerm:
    params = {}
    if cfg.source_family in ("power",):
        params = {"lam": cfg.source_lam, "gamma": cfg.source_gamma}
    elif cfg.source_family == "cubic":
        params = {"lam": cfg.source_lam}
    return make_source(cfg.source_family, **params)


def boundary_function(cfg: ExperimentConfig, source: Optional[SourceTerm] = None):
    """Boundary data families, evaluated at collar node positions.

    constant: value everywhere.
    affine:   coeffs = (a_1..a_dim, b) -> a.x + b.
    bump:     coeffs = (width, direction components...) -> squared cosine cap
              of height boundary_value centered at ball_radius * direction.
    radial-oracle: exact dead-core profile of the configured power source
              with boundary_value at the ball radius (data sampled at the
              actual collar radii; oracle-comparison experiments use this).
    """
    kind = cfg.boundary_kind
    if kind == "constant":
        c = float(cfg.boundary_value)
        return lambda pts: np.full(pts.shape[0], c)
    if kind == "affine":
        coeffs = cfg.boundary_coeffs
        if len(coeffs) != cfg.dim + 1:
            raise ValueError("affine boundary needs dim+1 coefficients")
        a = np.asarray(coeffs[:-1], dtype=float)
        b = float(coeffs[-1])
        return lambda pts: pts @ a + b
    if kind == "bump":
        if not cfg.boundary_coeffs:
            raise ValueError("bump boundary needs (width, direction...) coefficients")
        width = float(cfg.boundary_coeffs[0])
        direction = np.asarray(cfg.boundary_coeffs[1:1 + cfg.dim], dtype=float)
        direction /= np.linalg.norm(direction)
        center = np.asarray(cfg.ball_center) + cfg.ball_radius * direction
        height = float(cfg.boundary_value)
        top = width / 3.0    # flat top so collar nodes attain the full height

        def bump(pts):
            d = np.linalg.norm(pts - center, axis=1)
            arg = np.clip((d - top) / (width - top), 0.0, 1.0)
            return height * np.cos(0.5 * np.pi * arg) ** 2

        return bump
    if kind == "radial-oracle":
        if cfg.source_family != "power":
            raise ValueError("radial-oracle boundary requires a power source")
        sol = RadialDeadCoreSolution(
            lam=cfg.source_lam, gamma=cfg.source_gamma,
            r=cfg.ball_radius, alpha_r=cfg.boundary_value,
            center=tuple(cfg.ball_center),
        )
        center = np.asarray(cfg.ball_center, dtype=float)

        def oracle(pts):
            return exact_profile(sol, np.linalg.norm(pts - center, axis=1))

        return oracle
    raise ValueError(f"unknown boundary kind {kind!r}")


def build_mask(cfg: ExperimentConfig, grid: Optional[GridSpec] = None,
               source: Optional[SourceTerm] = None) -> DomainMask:
    grid = grid or build_grid(cfg)
    return ball_mask(
        grid, cfg.ball_center, cfg.ball_radius,
        boundary_function(cfg, source), reach=cfg.stencil_k,
    )


def build_options(cfg: ExperimentConfig) -> SolveOptions:
    return SolveOptions(
        tol=cfg.tol,
        max_sweeps=cfg.max_sweeps,
        damping=cfg.damping,
        sweep_order=cfg.sweep_order,
        bracket_expansion_cap=cfg.bracket_expansion_cap,
        accelerate=cfg.accelerate,
    )


def build_stencil(cfg: ExperimentConfig):
    return stencil_directions(cfg.dim, cfg.stencil_k)
