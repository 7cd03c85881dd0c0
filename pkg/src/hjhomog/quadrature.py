"""Composite Gauss-Legendre quadrature with breakpoint-aligned panels."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss


@lru_cache(maxsize=32)
def _gl(n: int):
    x, w = leggauss(n)
    return x, w


def lattice_points(a: float, b: float, spacing: float, offset: float = 0.0):
    """All points offset + j*spacing strictly inside (a, b)."""
    j0 = int(np.ceil((a - offset) / spacing))
    j1 = int(np.floor((b - offset) / spacing))
    pts = offset + np.arange(j0, j1 + 1) * spacing
    return pts[(pts > a) & (pts < b)]


def build_edges(a: float, b: float, breakpoints=(), max_panel=None):
    """Panel edges over [a, b]: sorted breakpoints, long gaps subdivided."""
    if b <= a:
        raise ValueError("empty interval")
    pts = [a, b]
    for p in np.atleast_1d(np.asarray(breakpoints, dtype=float)).ravel():
        if a < p < b:
            pts.append(float(p))
    pts = np.array(sorted(pts))
    keep = np.concatenate([[True], np.diff(pts) > 1e-12 * (b - a)])
    pts = pts[keep]
    if pts[-1] != b:
        pts[-1] = b
    if max_panel is None:
        return pts
    edges = [pts[0]]
    for left, right in zip(pts[:-1], pts[1:]):
        m = max(1, int(np.ceil((right - left) / max_panel - 1e-12)))
        edges.extend(left + (right - left) * np.arange(1, m + 1) / m)
    return np.array(edges)


class PanelPlan:
    """Fixed quadrature nodes/weights over [a, b], reusable across integrands."""

    def __init__(self, edges, nodes_per_panel: int = 8):
        edges = np.asarray(edges, dtype=float)
        xr, wr = _gl(nodes_per_panel)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        self.nodes = (mid[:, None] + half[:, None] * xr[None, :]).ravel()
        self.weights = (half[:, None] * wr[None, :]).ravel()
        self.edges = edges
        self.a = float(edges[0])
        self.b = float(edges[-1])

    def integrate(self, values):
        return float(np.dot(np.asarray(values, dtype=float), self.weights))

    def integrate_f(self, f):
        return self.integrate(f(self.nodes))

    def __len__(self):
        return self.nodes.size


def panel_plan(a, b, breakpoints=(), max_panel=None, nodes_per_panel=8):
    return PanelPlan(build_edges(a, b, breakpoints, max_panel), nodes_per_panel)
