"""Evaluation metrics: IoU against aligned target masks, normalized coverage,
and the end-to-end success check."""

from __future__ import annotations

import numpy as np

from .garments import GarmentTemplate
from .simulation.core import ClothState
from .simulation.sensing import WORKSPACE_HALF, render_topdown_mask


def iou(mask: np.ndarray, target_mask: np.ndarray) -> float:
    """Pixel intersection-over-union; two empty masks count as identical."""
    a = np.asarray(mask, dtype=bool)
    b = np.asarray(target_mask, dtype=bool)
    union = np.logical_or(a, b).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def reference_mask(
    template: GarmentTemplate,
    resolution: int = 128,
    center: tuple[float, float] = (0.0, -0.05),
    rotation: float = 0.0,
    half_extent: float = WORKSPACE_HALF,
) -> np.ndarray:
    """Canonical flat silhouette rendered at a planar placement."""
    verts = template.vertices.copy()
    verts[:, :2] -= verts[:, :2].mean(axis=0)
    if rotation != 0.0:
        c, s = np.cos(rotation), np.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        verts[:, :2] = verts[:, :2] @ rot.T
    verts[:, 0] += center[0]
    verts[:, 1] += center[1]
    return render_topdown_mask(template, verts, resolution, half_extent)


def coverage(
    mask: np.ndarray,
    template: GarmentTemplate,
    reference_count: int | None = None,
) -> float:
    """Top-down pixel count over the flat-pose maximum."""
    if reference_count is None:
        reference_count = int(reference_mask(template, resolution=mask.shape[0]).sum())
    if reference_count == 0:
        return 0.0
    return float(np.asarray(mask, dtype=bool).sum() / reference_count)


def best_fit_target_mask(
    template: GarmentTemplate,
    state: ClothState,
    resolution: int = 128,
    half_extent: float = WORKSPACE_HALF,
) -> tuple[np.ndarray, float]:
    """Target silhouette at the best planar placement for the current state.

    Maximizes IoU over a 1-degree rotation / 1-cm translation grid, searched
    coarse-to-fine (6-degree sweep at half resolution, then +/-3 degrees at
    1-degree steps with a 3x3 cm translation refinement).

    Returns (target_mask, best_iou).
    """
    current = render_topdown_mask(template, state, resolution, half_extent)
    centroid = state.positions[:, :2].mean(axis=0)

    coarse_res = max(32, resolution // 2)
    current_coarse = render_topdown_mask(template, state, coarse_res, half_extent)
    best_deg, best_score = 0, -1.0
    for deg in range(0, 360, 6):
        cand = reference_mask(
            template, coarse_res, tuple(centroid), np.deg2rad(deg), half_extent
        )
        score = iou(current_coarse, cand)
        if score > best_score:
            best_score, best_deg = score, deg

    best = (None, -1.0)
    for deg in range(best_deg - 3, best_deg + 4):
        for dx in (-0.01, 0.0, 0.01):
            for dy in (-0.01, 0.0, 0.01):
                cand = reference_mask(
                    template,
                    resolution,
                    (centroid[0] + dx, centroid[1] + dy),
                    np.deg2rad(deg % 360),
                    half_extent,
                )
                score = iou(current, cand)
                if score > best[1]:
                    best = (cand, score)
    return best


def aligned_iou(
    template: GarmentTemplate,
    state: ClothState,
    resolution: int = 128,
) -> float:
    """IoU of the current silhouette against the best-fit canonical mask."""
    _, score = best_fit_target_mask(template, state, resolution)
    return score


def best_fit_mask_iou(
    reference: np.ndarray,
    template_for_render: GarmentTemplate,
    state: ClothState,
    resolution: int = 128,
) -> float:
    """IoU between the current silhouette and an arbitrary reference mask,
    maximized over planar placements of the reference (same grid as
    ``best_fit_target_mask`` but re-rendering the current state shifted)."""
    current = render_topdown_mask(template_for_render, state, resolution)
    ref_count = reference.sum()
    if ref_count == 0 or current.sum() == 0:
        return iou(current, reference)
    # Align by centroid then search small rotations of the state silhouette.
    return _search_mask_alignment(current, reference, template_for_render, state, resolution)


def _mask_centroid(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    return np.array([xs.mean(), ys.mean()])


def _search_mask_alignment(
    current: np.ndarray,
    reference: np.ndarray,
    template: GarmentTemplate,
    state: ClothState,
    resolution: int,
    half_extent: float = WORKSPACE_HALF,
) -> float:
    pixel = 2 * half_extent / resolution
    ref_c = _mask_centroid(reference)
    centroid = state.positions[:, :2].mean(axis=0)
    target_xy = np.array(
        [(ref_c[0] + 0.5) * pixel - half_extent, (ref_c[1] + 0.5) * pixel - half_extent]
    )
    best = -1.0
    for deg in range(0, 360, 6):
        rad = np.deg2rad(deg)
        c, s = np.cos(rad), np.sin(rad)
        rot = np.array([[c, -s], [s, c]])
        verts = state.positions.copy()
        verts[:, :2] = (verts[:, :2] - centroid) @ rot.T + target_xy
        cand = render_topdown_mask(template, verts, resolution, half_extent)
        score = iou(cand, reference)
        if score > best:
            best = score
            best_rot = rad
    for ddeg in range(-3, 4):
        for dx in (-0.01, 0.0, 0.01):
            for dy in (-0.01, 0.0, 0.01):
                rad = best_rot + np.deg2rad(ddeg)
                c, s = np.cos(rad), np.sin(rad)
                rot = np.array([[c, -s], [s, c]])
                verts = state.positions.copy()
                verts[:, :2] = (verts[:, :2] - centroid) @ rot.T + target_xy + (dx, dy)
                cand = render_topdown_mask(template, verts, resolution, half_extent)
                best = max(best, iou(cand, reference))
    return best


def success_check(
    final_state: ClothState,
    template: GarmentTemplate,
    folded_reference: np.ndarray,
    switch_iou: float | None,
    resolution: int = 128,
    switch_threshold: float = 0.6,
    folded_threshold: float = 0.7,
    area_band: tuple[float, float] = (0.35, 0.55),
) -> bool:
    """Episode success: the stage switch happened on a well-unfolded garment
    and the final silhouette matches the folded reference at a folded area."""
    if switch_iou is None or switch_iou < switch_threshold:
        return False
    flat_count = int(reference_mask(template, resolution).sum())
    final_mask = render_topdown_mask(template, final_state, resolution)
    area_ratio = final_mask.sum() / max(flat_count, 1)
    if not (area_band[0] <= area_ratio <= area_band[1]):
        return False
    folded_iou = best_fit_mask_iou(folded_reference, template, final_state, resolution)
    return folded_iou >= folded_threshold
