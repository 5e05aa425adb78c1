"""Shrake-Rupley solvent accessible surface area."""
from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

VDW_RADII = {"C": 1.7, "N": 1.55, "O": 1.52, "S": 1.8}
DEFAULT_RADIUS = 1.8


def atom_radii(elements) -> np.ndarray:
    return np.array([VDW_RADII.get(e.upper(), DEFAULT_RADIUS) for e in elements], dtype=float)


def sphere_points(n_points: int) -> np.ndarray:
    """Deterministic, near-uniform points on the unit sphere (golden spiral)."""
    k = np.arange(n_points, dtype=float)
    z = 1.0 - (2.0 * k + 1.0) / n_points
    r = np.sqrt(1.0 - z * z)
    phi = k * math.pi * (3.0 - math.sqrt(5.0))
    return np.column_stack([r * np.cos(phi), r * np.sin(phi), z])


def sasa(coords, radii, probe: float = 1.4, n_points: int = 92) -> np.ndarray:
    """Per-atom solvent accessible area in square Angstrom.

    Each atom is inflated by ``probe``; an atom's area is the fraction of its
    ``n_points`` surface points lying outside every other inflated atom, times
    the inflated sphere area.
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 3)
    radii = np.asarray(radii, dtype=float) + probe
    n = len(coords)
    if n == 0:
        return np.zeros(0)
    unit = sphere_points(n_points)
    tree = cKDTree(coords)
    neighbours = tree.query_ball_point(coords, radii + radii.max())
    areas = np.empty(n)
    for i in range(n):
        js = np.array([j for j in neighbours[i] if j != i], dtype=np.int64)
        if len(js):
            d = np.sqrt(((coords[js] - coords[i]) ** 2).sum(axis=1))
            js = js[d < radii[i] + radii[js]]
        pts = coords[i] + radii[i] * unit
        if len(js):
            diff = pts[:, None, :] - coords[js][None, :, :]
            buried = (np.sqrt((diff ** 2).sum(axis=2)) < radii[js][None, :]).any(axis=1)
            exposed = n_points - int(buried.sum())
        else:
            exposed = n_points
        areas[i] = exposed / n_points * 4.0 * math.pi * radii[i] ** 2
    return areas
