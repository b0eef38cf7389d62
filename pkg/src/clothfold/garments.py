"""Procedural garment templates.

Each template is a flat two-panel (front/back) T-shaped mesh stitched at the
perimeter. Geometry lives on a regular grid in the xy plane, which keeps the
mesh exactly bilaterally symmetric about x = 0 and makes the canonical
(normalized) coordinates an exact mirror about 0.5.

Axes: x is left/right (left = negative x), y runs waist -> collar, z is up.
The rest pose lies just above the table plane z = 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TEMPLATE_FORMAT = "garment-template"
TEMPLATE_VERSION = 1

CATEGORIES = ("long-sleeve", "short-sleeve")

KEYPOINT_LABELS = (
    "left_cuff",
    "right_cuff",
    "left_shoulder",
    "right_shoulder",
    "collar",
    "left_waist",
    "right_waist",
)

# Canonical-coordinate z planes for the two panels; seam vertices sit between.
NOCS_Z_FRONT = 0.25
NOCS_Z_BACK = 0.75
NOCS_Z_SEAM = 0.5

# Rest heights above the table (sub-millimeter so the rest pose is already
# in equilibrium against the table plane).
REST_Z_BACK = 0.0003
REST_Z_FRONT = 0.0008
REST_Z_SEAM = 0.0005

SIZE_RANGES = {
    "torso_width": (0.3, 0.8),
    "torso_height": (0.3, 0.9),
    "sleeve_length": (0.04, 0.6),
    "sleeve_width": (0.08, 0.3),
}

DEFAULT_SIZES = {
    "long-sleeve": {
        "torso_width": 0.44,
        "torso_height": 0.62,
        "sleeve_length": 0.50,
        "sleeve_width": 0.14,
    },
    "short-sleeve": {
        "torso_width": 0.48,
        "torso_height": 0.60,
        "sleeve_length": 0.16,
        "sleeve_width": 0.18,
    },
}

DEFAULT_GRID = 0.028  # grid cell size, meters


class SizeParamError(ValueError):
    """A requested size parameter is outside the documented range."""


@dataclass(frozen=True)
class FoldPlan:
    """Two-step folding plan expressed with keypoint labels.

    Pick entries are keypoint labels; place targets are xy points in template
    (rest-pose) coordinates, so they scale with the garment. step1 folds the
    sleeves inward, step2 folds the body in half. The fold direction of step2
    differs between the two categories.
    """

    step1_picks: tuple[str, str]
    step1_places: tuple[tuple[float, float], tuple[float, float]]
    step2_picks: tuple[str, str]
    step2_places: tuple[tuple[float, float], tuple[float, float]]


@dataclass(frozen=True)
class GarmentTemplate:
    category: str
    vertices: np.ndarray  # (V, 3) rest positions, meters
    triangles: np.ndarray  # (T, 3) vertex indices
    nocs: np.ndarray  # (V, 3) canonical coords in [0, 1]^3
    keypoints: dict[str, int]  # label -> vertex id
    size_params: dict[str, float]  # effective (grid-snapped) sizes
    fold_plan: FoldPlan
    mirror_map: np.ndarray = field(repr=False, default=None)  # (V,) partner ids
    panel: np.ndarray = field(repr=False, default=None)  # (V,) 0=front 1=back 2=seam

    @property
    def num_vertices(self) -> int:
        return self.vertices.shape[0]

    def keypoint_position(self, label: str) -> np.ndarray:
        return self.vertices[self.keypoints[label]]

    def silhouette_area(self) -> float:
        """Analytic area of the flat silhouette (front panel triangles)."""
        front = self.triangles[self._front_triangle_mask()]
        a = self.vertices[front[:, 0], :2]
        b = self.vertices[front[:, 1], :2]
        c = self.vertices[front[:, 2], :2]
        cross = (b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1]) - (b[:, 1] - a[:, 1]) * (
            c[:, 0] - a[:, 0]
        )
        return float(np.abs(cross).sum() / 2.0)

    def _front_triangle_mask(self) -> np.ndarray:
        # A triangle belongs to the front panel if none of its vertices is
        # back-panel interior.
        return ~np.any(self.panel[self.triangles] == 1, axis=1)

    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)


def mirror_nocs(coord: np.ndarray) -> np.ndarray:
    """Reflect a canonical coordinate about the x = 0.5 symmetry plane."""
    coord = np.asarray(coord, dtype=float)
    out = coord.copy()
    out[..., 0] = 1.0 - out[..., 0]
    return out


def sample_size_params(category: str, rng: np.random.Generator) -> dict[str, float]:
    """Draw size parameters around the category defaults, inside the ranges."""
    base = DEFAULT_SIZES[category]
    out = {}
    for name, value in base.items():
        lo, hi = SIZE_RANGES[name]
        jitter = value * rng.uniform(0.8, 1.25)
        out[name] = float(min(max(jitter, lo), hi))
    return out


def build_template(
    category: str,
    size_params: dict[str, float] | None = None,
    seed: int = 0,
    grid: float = DEFAULT_GRID,
) -> GarmentTemplate:
    """Build a two-panel garment template.

    When ``size_params`` is None the sizes are sampled deterministically from
    ``seed``; explicit sizes make the result independent of the seed. Raises
    SizeParamError naming the offending field when a size is out of range.
    """
    if category not in CATEGORIES:
        raise ValueError(f"unknown category {category!r}, expected one of {CATEGORIES}")
    if size_params is None:
        size_params = sample_size_params(category, np.random.default_rng(seed))
    merged = dict(DEFAULT_SIZES[category])
    merged.update(size_params)
    for name, value in merged.items():
        if name not in SIZE_RANGES:
            raise SizeParamError(f"unknown size parameter {name!r}")
        lo, hi = SIZE_RANGES[name]
        if not (lo <= value <= hi):
            raise SizeParamError(
                f"size parameter {name}={value} outside allowed range [{lo}, {hi}]"
            )

    h = float(grid)
    # Snap every extent to the grid so keypoints land exactly on vertices and
    # the mesh stays mirror-symmetric in integer index space.
    half_w = max(2, round(merged["torso_width"] / 2.0 / h))
    top = max(2, round(merged["torso_height"] / 2.0 / h))
    bot = -top
    sl_len = max(1, round(merged["sleeve_length"] / h))
    sl_w = max(1, round(merged["sleeve_width"] / h))
    sl_w = min(sl_w, 2 * top - 1)

    effective = {
        "torso_width": 2 * half_w * h,
        "torso_height": 2 * top * h,
        "sleeve_length": sl_len * h,
        "sleeve_width": sl_w * h,
    }

    def cell_inside(i: int, j: int) -> bool:
        if -half_w <= i < half_w and bot <= j < top:
            return True
        if top - sl_w <= j < top:
            if half_w <= i < half_w + sl_len:
                return True
            if -half_w - sl_len <= i < -half_w:
                return True
        return False

    cells = [
        (i, j)
        for i in range(-half_w - sl_len, half_w + sl_len)
        for j in range(bot, top)
        if cell_inside(i, j)
    ]

    # Grid-node bookkeeping: map (i, j) -> front/back vertex ids.
    corner_nodes: set[tuple[int, int]] = set()
    for i, j in cells:
        corner_nodes.update({(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)})

    def node_on_boundary(i: int, j: int) -> bool:
        surrounding = [(i - 1, j - 1), (i, j - 1), (i - 1, j), (i, j)]
        return not all(cell_inside(*c) for c in surrounding)

    nodes = sorted(corner_nodes)
    front_id: dict[tuple[int, int], int] = {}
    back_id: dict[tuple[int, int], int] = {}
    verts: list[tuple[float, float, float]] = []
    panel: list[int] = []

    for i, j in nodes:
        x, y = i * h, j * h
        if node_on_boundary(i, j):
            vid = len(verts)
            verts.append((x, y, REST_Z_SEAM))
            panel.append(2)
            front_id[(i, j)] = vid
            back_id[(i, j)] = vid
        else:
            vid = len(verts)
            verts.append((x, y, REST_Z_FRONT))
            panel.append(0)
            front_id[(i, j)] = vid
            vid = len(verts)
            verts.append((x, y, REST_Z_BACK))
            panel.append(1)
            back_id[(i, j)] = vid

    tris: list[tuple[int, int, int]] = []
    for i, j in cells:
        corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)]
        seam = [node_on_boundary(*c) for c in corners]
        # Quad diagonal: alternate by parity for mirror symmetry, but a
        # seam-to-seam diagonal inside a double-layer quad would be shared by
        # four triangles, so prefer a diagonal touching an interior vertex.
        diag_ac_ok = not (seam[0] and seam[2])
        diag_bd_ok = not (seam[1] and seam[3])
        if diag_ac_ok and diag_bd_ok:
            use_ac = (i + j) % 2 == 0
        else:
            use_ac = diag_ac_ok or not diag_bd_ok
        fa, fb, fc, fd = (front_id[c] for c in corners)
        if use_ac:
            tris.append((fa, fb, fc))
            tris.append((fa, fc, fd))
        else:
            tris.append((fa, fb, fd))
            tris.append((fb, fc, fd))
        ba, bb, bc, bd = (back_id[c] for c in corners)
        if (fa, fb, fc, fd) != (ba, bb, bc, bd):
            if use_ac:
                tris.append((ba, bc, bb))
                tris.append((ba, bd, bc))
            else:
                tris.append((ba, bd, bb))
                tris.append((bb, bd, bc))

    vertices = np.asarray(verts, dtype=np.float64)
    triangles = np.asarray(tris, dtype=np.int64)
    panel_arr = np.asarray(panel, dtype=np.int64)

    # Canonical coordinates from the silhouette bounding box; x reflects about
    # 0.5 because the box is symmetric about x = 0 by construction.
    x_extent = (half_w + sl_len) * h
    y_min, y_max = bot * h, top * h
    nocs = np.empty_like(vertices)
    nocs[:, 0] = (vertices[:, 0] + x_extent) / (2 * x_extent)
    nocs[:, 1] = (vertices[:, 1] - y_min) / (y_max - y_min)
    nocs[:, 2] = np.choose(panel_arr, [NOCS_Z_FRONT, NOCS_Z_BACK, NOCS_Z_SEAM])

    # Mirror partners via exact integer reflection.
    node_index = {}
    for (i, j) in nodes:
        node_index[(i, j, 0)] = front_id[(i, j)]
        node_index[(i, j, 1)] = back_id[(i, j)]
    mirror = np.empty(len(verts), dtype=np.int64)
    for (i, j) in nodes:
        mirror[front_id[(i, j)]] = node_index[(-i, j, 0)]
        mirror[back_id[(i, j)]] = node_index[(-i, j, 1)]

    cuff_row = top - (sl_w + 1) // 2
    keypoints = {
        "collar": front_id[(0, top)],
        "left_shoulder": front_id[(-half_w, top)],
        "right_shoulder": front_id[(half_w, top)],
        "left_cuff": front_id[(-half_w - sl_len, cuff_row)],
        "right_cuff": front_id[(half_w + sl_len, cuff_row)],
        "left_waist": front_id[(-half_w, bot)],
        "right_waist": front_id[(half_w, bot)],
    }

    plan = _category_fold_plan(category, effective)

    return GarmentTemplate(
        category=category,
        vertices=vertices,
        triangles=triangles,
        nocs=nocs,
        keypoints=keypoints,
        size_params=effective,
        fold_plan=plan,
        mirror_map=mirror,
        panel=panel_arr,
    )


def _category_fold_plan(category: str, sizes: dict[str, float]) -> FoldPlan:
    tw = sizes["torso_width"]
    th = sizes["torso_height"]
    sw = sizes["sleeve_width"]
    if category == "long-sleeve":
        # Sleeves cross high over the chest (the half that stays put during
        # the bottom-up half fold); then the waist folds onto the shoulders.
        step1_places = ((-0.06 * tw, 0.24 * th), (0.06 * tw, 0.24 * th))
        return FoldPlan(
            step1_picks=("left_cuff", "right_cuff"),
            step1_places=step1_places,
            step2_picks=("left_waist", "right_waist"),
            step2_places=((-tw / 2, th / 2), (tw / 2, th / 2)),
        )
    # Short sleeves fold straight inward at shoulder height; the half fold
    # runs in the opposite direction (shoulders fold down to the waist).
    row = th / 2 - sw / 2
    step1_places = ((-0.15 * tw, row), (0.15 * tw, row))
    return FoldPlan(
        step1_picks=("left_cuff", "right_cuff"),
        step1_places=step1_places,
        step2_picks=("left_shoulder", "right_shoulder"),
        step2_places=((-tw / 2, -th / 2), (tw / 2, -th / 2)),
    )


def fold_plan(template: GarmentTemplate) -> FoldPlan:
    """Return the category fold plan for a template."""
    return template.fold_plan


def validate_template(template: GarmentTemplate) -> None:
    """Raise AssertionError when any template invariant is violated."""
    nocs = template.nocs
    assert np.all(nocs >= 0.0) and np.all(nocs <= 1.0), "NOCS outside unit cube"
    m = template.mirror_map
    assert np.array_equal(m[m], np.arange(template.num_vertices)), "mirror not involutive"
    mirrored = nocs[m]
    assert np.allclose(mirrored[:, 0], 1.0 - nocs[:, 0]), "NOCS mirror broken"
    assert np.allclose(mirrored[:, 1:], nocs[:, 1:]), "NOCS mirror moved y/z"
    for label in KEYPOINT_LABELS:
        vid = template.keypoints[label]
        assert 0 <= vid < template.num_vertices, f"keypoint {label} unresolved"
    _check_manifold_connected(template)


def _check_manifold_connected(template: GarmentTemplate) -> None:
    tris = template.triangles
    edge_count: dict[tuple[int, int], int] = {}
    for tri in tris:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edge_count[key] = edge_count.get(key, 0) + 1
    assert max(edge_count.values()) <= 2, "non-manifold edge"

    parent = list(range(template.num_vertices))

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a, b in edge_count:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    roots = {find(v) for v in range(template.num_vertices)}
    assert len(roots) == 1, "mesh not connected"


def point_in_silhouette(template: GarmentTemplate, xy: np.ndarray) -> bool:
    """Check whether an xy point lies inside the flat rest-pose silhouette."""
    sizes = template.size_params
    x, y = float(xy[0]), float(xy[1])
    tw2 = sizes["torso_width"] / 2
    th2 = sizes["torso_height"] / 2
    if -tw2 <= x <= tw2 and -th2 <= y <= th2:
        return True
    if th2 - sizes["sleeve_width"] <= y <= th2:
        if tw2 <= abs(x) <= tw2 + sizes["sleeve_length"]:
            return True
    return False


def save_template(template: GarmentTemplate, path: str | Path) -> None:
    doc = {
        "format": TEMPLATE_FORMAT,
        "version": TEMPLATE_VERSION,
        "category": template.category,
        "size_params": template.size_params,
        "vertices": template.vertices.tolist(),
        "triangles": template.triangles.tolist(),
        "nocs": template.nocs.tolist(),
        "keypoints": template.keypoints,
        "panel": template.panel.tolist(),
        "mirror_map": template.mirror_map.tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_template(path: str | Path) -> GarmentTemplate:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != TEMPLATE_FORMAT:
        raise ValueError(f"not a template file: {path}")
    if doc.get("version") != TEMPLATE_VERSION:
        raise ValueError(f"unsupported template version {doc.get('version')}")
    return GarmentTemplate(
        category=doc["category"],
        vertices=np.asarray(doc["vertices"], dtype=np.float64),
        triangles=np.asarray(doc["triangles"], dtype=np.int64),
        nocs=np.asarray(doc["nocs"], dtype=np.float64),
        keypoints={k: int(v) for k, v in doc["keypoints"].items()},
        size_params={k: float(v) for k, v in doc["size_params"].items()},
        fold_plan=_category_fold_plan(doc["category"], doc["size_params"]),
        mirror_map=np.asarray(doc["mirror_map"], dtype=np.int64),
        panel=np.asarray(doc["panel"], dtype=np.int64),
    )
