"""Observation generation: top-down masks, height buffers, point clouds."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..garments import GarmentTemplate
from . import kernels
from .core import ClothState

WORKSPACE_HALF = 0.9  # table frame extent for rendering and normalization
VISIBILITY_TOLERANCE = 0.004  # meters below the height buffer still visible


@dataclass
class Observation:
    points: np.ndarray  # (N, 3) table frame, meters
    gt_vertex_ids: np.ndarray  # (N,) sim-only correspondence channel
    gt_nocs: np.ndarray  # (N, 3) template canonical coords of those vertices
    step_index: int = 0

    @property
    def num_points(self) -> int:
        return self.points.shape[0]


def render_topdown_mask(
    template: GarmentTemplate,
    state: ClothState | np.ndarray,
    resolution: int = 128,
    half_extent: float = WORKSPACE_HALF,
) -> np.ndarray:
    """Orthographic top-down binary mask over the square workspace."""
    positions = state.positions if isinstance(state, ClothState) else np.asarray(state)
    out = np.zeros((resolution, resolution), dtype=np.bool_)
    pixel = 2.0 * half_extent / resolution
    kernels.rasterize_triangles(
        np.ascontiguousarray(positions[:, :2]),
        np.ascontiguousarray(template.triangles),
        -half_extent,
        pixel,
        resolution,
        out,
    )
    return out


def render_height_buffer(
    template: GarmentTemplate,
    state: ClothState | np.ndarray,
    resolution: int = 128,
    half_extent: float = WORKSPACE_HALF,
) -> np.ndarray:
    positions = state.positions if isinstance(state, ClothState) else np.asarray(state)
    out = np.full((resolution, resolution), -np.inf)
    pixel = 2.0 * half_extent / resolution
    kernels.zbuffer_triangles(
        np.ascontiguousarray(positions),
        np.ascontiguousarray(template.triangles),
        -half_extent,
        pixel,
        resolution,
        out,
    )
    return out


def sample_pointcloud(
    template: GarmentTemplate,
    state: ClothState,
    n_points: int = 1024,
    seed: int = 0,
    half_extent: float = WORKSPACE_HALF,
) -> Observation:
    """Sample surface points area-uniformly from the top-visible surface.

    Sampling draws triangles proportional to current area and rejects points
    hidden below the height buffer; each point carries the id of its
    dominant-barycentric vertex as ground-truth correspondence.
    """
    rng = np.random.default_rng(seed)
    pos = state.positions
    tris = template.triangles
    a, b, c = pos[tris[:, 0]], pos[tris[:, 1]], pos[tris[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise ValueError("degenerate mesh: zero surface area")
    cdf = np.cumsum(areas) / total

    zbuf = render_height_buffer(template, state, resolution=128, half_extent=half_extent)
    pixel = 2.0 * half_extent / 128

    points = np.empty((n_points, 3))
    ids = np.empty(n_points, dtype=np.int64)
    filled = 0
    attempts = 0
    max_attempts = 60 * n_points
    while filled < n_points:
        attempts += 1
        t = int(np.searchsorted(cdf, rng.random()))
        u, v = rng.random(), rng.random()
        su = np.sqrt(u)
        w0, w1, w2 = 1.0 - su, su * (1.0 - v), su * v
        p = w0 * a[t] + w1 * b[t] + w2 * c[t]
        if attempts < max_attempts:
            i = int((p[0] + half_extent) / pixel)
            j = int((p[1] + half_extent) / pixel)
            if 0 <= i < 128 and 0 <= j < 128:
                if p[2] < zbuf[j, i] - VISIBILITY_TOLERANCE:
                    continue
        weights = (w0, w1, w2)
        ids[filled] = tris[t, int(np.argmax(weights))]
        points[filled] = p
        filled += 1

    return Observation(
        points=points,
        gt_vertex_ids=ids,
        gt_nocs=template.nocs[ids].copy(),
        step_index=state.step_index,
    )
