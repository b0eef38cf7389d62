"""Scripted demonstrator and reward oracle.

Stands in for the human demonstrator and for the downstream reward
definitions: semantic-keypoint fling choices, fold-plan execution, and the
canonicalization / alignment rewards computed from simulator ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .garments import GarmentTemplate
from .metrics import reference_mask
from .simulation.core import ClothState, Simulator
from .simulation.primitives import execute_pick_place
from .simulation.sensing import (
    VISIBILITY_TOLERANCE,
    WORKSPACE_HALF,
    Observation,
    render_height_buffer,
    render_topdown_mask,
    sample_pointcloud,
)

TARGET_CENTER = (0.0, -0.05)

# Stage thresholds for the scripted demonstrator: coverage alone misses
# curled sleeves, so flattening also requires a high canonicalization reward.
FLAT_COVERAGE = 0.75
FLAT_RC = 0.80

# Grasp preference sets: semantic-rich regions early, shoulders once the
# garment is recognizable.
EARLY_PAIRS = (
    ("left_shoulder", "right_shoulder"),
    ("left_waist", "right_waist"),
    ("left_cuff", "right_cuff"),
    ("collar", "left_waist"),
    ("collar", "right_waist"),
)
LATE_PAIRS = (
    ("left_shoulder", "right_shoulder"),
    ("left_waist", "right_waist"),
)

MIN_PICK_SEPARATION = 0.08


class RecrumpleSignal(RuntimeError):
    """No preferred keypoint is visible; the episode should re-crumple."""


def procrustes_2d(
    source: np.ndarray, target: np.ndarray
) -> tuple[float, np.ndarray]:
    """Closed-form planar rigid alignment (rotation + translation, no scale).

    Returns (theta, t) minimizing sum ||R(theta) s + t - q||^2 over
    corresponding rows of source and target.
    """
    s = np.asarray(source, dtype=np.float64)
    q = np.asarray(target, dtype=np.float64)
    sc = s.mean(axis=0)
    qc = q.mean(axis=0)
    s0 = s - sc
    q0 = q - qc
    dot = float((s0 * q0).sum())
    cross = float((s0[:, 0] * q0[:, 1] - s0[:, 1] * q0[:, 0]).sum())
    theta = 0.0 if (dot == 0.0 and cross == 0.0) else float(np.arctan2(cross, dot))
    c, sn = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -sn], [sn, c]])
    t = qc - rot @ sc
    return theta, t


def apply_rigid_2d(points_xy: np.ndarray, theta: float, t: np.ndarray) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    rot = np.array([[c, -s], [s, c]])
    return points_xy @ rot.T + t


@dataclass
class OracleContext:
    """Per-template cache: canonical pose, reference pixel counts."""

    template: GarmentTemplate
    resolution: int = 128
    canonical_xy: np.ndarray = field(init=False)
    canonical_z: np.ndarray = field(init=False)
    diagonal: float = field(init=False)
    reference_count: int = field(init=False)

    def __post_init__(self):
        verts = self.template.vertices
        xy = verts[:, :2] - verts[:, :2].mean(axis=0)
        self.canonical_xy = xy + np.asarray(TARGET_CENTER)
        self.canonical_z = verts[:, 2].copy()
        lo, hi = verts.min(axis=0), verts.max(axis=0)
        self.diagonal = float(np.linalg.norm((hi - lo)[:2]))
        self.reference_count = int(
            reference_mask(self.template, self.resolution, TARGET_CENTER).sum()
        )


_CTX_CACHE: dict[int, OracleContext] = {}


def context_for(template: GarmentTemplate, resolution: int = 128) -> OracleContext:
    key = id(template)
    ctx = _CTX_CACHE.get(key)
    if ctx is None or ctx.resolution != resolution:
        ctx = OracleContext(template, resolution)
        _CTX_CACHE[key] = ctx
    return ctx


def compute_rewards(
    state_before: ClothState,
    state_after: ClothState,
    template: GarmentTemplate,
    weights: tuple[float, float] = (0.5, 0.5),
) -> tuple[float, float]:
    """Canonicalization and alignment rewards of the post-action state.

    R_C = 1 - (mean particle distance to the canonical flat pose after the
    optimal planar rigid alignment) / garment diagonal, clamped to [0, 1].
    The alignment considers both the direct correspondence and the bilateral
    mirror (a garment flattened face-down is equally canonical).
    R_A = 1 - (w_t ||translation|| / 0.5 m + w_r |rotation| / pi) of that
    alignment, clamped to [0, 1]; a collapsed garment scores R_A = 0.
    """
    del state_before  # greedy one-step target: only the outcome matters
    ctx = context_for(template)
    pos = state_after.positions
    xy = pos[:, :2]

    spread = np.linalg.svd(np.cov(xy.T), compute_uv=False)
    degenerate = spread[-1] < 1e-6

    best = None
    for target_xy, target_z in (
        (ctx.canonical_xy, ctx.canonical_z),
        (ctx.canonical_xy_mirror, ctx.canonical_z_mirror),
    ):
        theta, t = procrustes_2d(xy, target_xy)
        aligned_xy = apply_rigid_2d(xy, theta, t)
        residual = np.sqrt(
            ((aligned_xy - target_xy) ** 2).sum(axis=1) + (pos[:, 2] - target_z) ** 2
        )
        mean_res = residual.mean()
        if best is None or mean_res < best[0]:
            best = (mean_res, theta)
    mean_res, theta = best
    r_c = float(np.clip(1.0 - mean_res / ctx.diagonal, 0.0, 1.0))

    if degenerate:
        return r_c, 0.0
    w_t, w_r = weights
    translation = float(
        np.linalg.norm(xy.mean(axis=0) - ctx.canonical_xy.mean(axis=0))
    )
    r_a = float(np.clip(1.0 - (w_t * translation / 0.5 + w_r * abs(theta) / np.pi), 0.0, 1.0))
    return r_c, r_a


def state_coverage(state: ClothState, template: GarmentTemplate) -> float:
    ctx = context_for(template)
    mask = render_topdown_mask(template, state, ctx.resolution)
    return float(mask.sum() / max(ctx.reference_count, 1))


def is_flattened(state: ClothState, template: GarmentTemplate) -> bool:
    cov = state_coverage(state, template)
    if cov < FLAT_COVERAGE:
        return False
    r_c, _ = compute_rewards(state, state, template)
    return r_c >= FLAT_RC


def _visible_keypoints(state: ClothState, template: GarmentTemplate) -> dict[str, bool]:
    zbuf = render_height_buffer(template, state, 128)
    pixel = 2 * WORKSPACE_HALF / 128
    out = {}
    for label, vid in template.keypoints.items():
        p = state.positions[vid]
        i = int((p[0] + WORKSPACE_HALF) / pixel)
        j = int((p[1] + WORKSPACE_HALF) / pixel)
        if not (0 <= i < 128 and 0 <= j < 128):
            out[label] = False
            continue
        out[label] = p[2] >= zbuf[j, i] - 2 * VISIBILITY_TOLERANCE
    return out


@dataclass
class OracleAction:
    action_type: str  # fling | fold1 | fold2
    stage: int  # 0 = unfolding, 1 = folding
    p_left: np.ndarray
    p_right: np.ndarray
    q_left: np.ndarray | None = None
    q_right: np.ndarray | None = None
    pick_labels: tuple[str, str] | None = None
    p_left_nocs: np.ndarray | None = None
    p_right_nocs: np.ndarray | None = None


def demo_action(
    state: ClothState,
    template: GarmentTemplate,
    fold_progress: int = 0,
    rng: np.random.Generator | None = None,
) -> OracleAction:
    """Scripted next action: semantic fling until flattened, then the two
    fold-plan steps. Occluded preferred keypoints fall back to the next pair
    in the stage's preference set; with nothing visible, re-crumple."""
    rng = rng or np.random.default_rng(0)
    if is_flattened(state, template) or fold_progress > 0:
        return _fold_action(state, template, fold_progress)

    cov = state_coverage(state, template)
    pairs = list(LATE_PAIRS if cov >= 0.55 else EARLY_PAIRS)
    order = rng.permutation(len(pairs))
    visible = _visible_keypoints(state, template)
    for idx in order:
        la, lb = pairs[idx]
        if not (visible[la] and visible[lb]):
            continue
        pa = state.positions[template.keypoints[la]]
        pb = state.positions[template.keypoints[lb]]
        if np.linalg.norm(pa - pb) < MIN_PICK_SEPARATION:
            continue
        if pa[0] > pb[0]:
            la, lb = lb, la
            pa, pb = pb, pa
        return OracleAction(
            action_type="fling",
            stage=0,
            p_left=pa.copy(),
            p_right=pb.copy(),
            pick_labels=(la, lb),
            p_left_nocs=template.nocs[template.keypoints[la]].copy(),
            p_right_nocs=template.nocs[template.keypoints[lb]].copy(),
        )
    raise RecrumpleSignal("no preferred keypoint pair visible")


def _fold_action(
    state: ClothState, template: GarmentTemplate, fold_progress: int
) -> OracleAction:
    plan = template.fold_plan
    picks = plan.step1_picks if fold_progress == 0 else plan.step2_picks
    places = plan.step1_places if fold_progress == 0 else plan.step2_places
    # Map template-frame place targets into the garment's current pose.
    rest_xy = template.vertices[:, :2]
    theta, t = procrustes_2d(rest_xy, state.positions[:, :2])
    la, lb = picks
    pa = state.positions[template.keypoints[la]].copy()
    pb = state.positions[template.keypoints[lb]].copy()
    qa = np.append(apply_rigid_2d(np.asarray(places[0])[None], theta, t)[0], 0.0)
    qb = np.append(apply_rigid_2d(np.asarray(places[1])[None], theta, t)[0], 0.0)
    if pa[0] > pb[0]:
        pa, pb = pb, pa
        qa, qb = qb, qa
        la, lb = lb, la
    return OracleAction(
        action_type="fold1" if fold_progress == 0 else "fold2",
        stage=1,
        p_left=pa,
        p_right=pb,
        q_left=qa,
        q_right=qb,
        pick_labels=(la, lb),
        p_left_nocs=template.nocs[template.keypoints[la]].copy(),
        p_right_nocs=template.nocs[template.keypoints[lb]].copy(),
    )


def heuristic_flat_grasp(
    state: ClothState, template: GarmentTemplate
) -> tuple[np.ndarray, np.ndarray]:
    """Best fling grasp on a well-shaped garment: the two shoulders."""
    left = state.positions[template.keypoints["left_shoulder"]].copy()
    right = state.positions[template.keypoints["right_shoulder"]].copy()
    return left, right


def oracle_folded_state(sim: Simulator, seed: int = 0) -> ClothState:
    """Execute the fold plan from the canonical flat pose (the folded
    reference used by the success check)."""
    template = sim.template
    state = sim.rest_state(TARGET_CENTER)
    for progress in (0, 1):
        action = _fold_action(state, template, progress)
        state = execute_pick_place(
            sim, state, action.p_left, action.q_left, action.p_right, action.q_right
        )
    return state


def sample_demo_observation(
    sim: Simulator, state: ClothState, n_points: int, seed: int
) -> Observation:
    return sample_pointcloud(sim.template, state, n_points, seed)


def run_demo_episode(
    sim: Simulator,
    episode_seed: int,
    n_points: int = 256,
    max_steps: int = 10,
    episode_index: int = 0,
):
    """One scripted episode: crumple, fling until flattened, fold twice.

    Returns (records, final_state, step_count). Occlusion dead-ends
    re-crumple with a derived seed (at most twice).
    """
    from .learning.records import DemoRecord
    from .simulation.primitives import GraspMissError, crumple, execute_fling

    template = sim.template
    rng = np.random.default_rng(episode_seed)
    state = crumple(template, episode_seed, sim=sim)
    records: list[DemoRecord] = []
    fold_progress = 0
    recrumples = 0
    step = 0
    while step < max_steps:
        obs = sample_pointcloud(template, state, n_points, seed=episode_seed * 1000 + step)
        try:
            action = demo_action(state, template, fold_progress, rng)
        except RecrumpleSignal:
            if recrumples >= 2:
                break
            recrumples += 1
            state = crumple(template, episode_seed + 7919 * recrumples, sim=sim)
            step += 1
            continue
        record = DemoRecord(
            points=obs.points,
            gt_nocs=obs.gt_nocs,
            action_type=action.action_type,
            stage_label=float(action.stage),
            p_left=action.p_left,
            p_right=action.p_right,
            q_left=action.q_left,
            q_right=action.q_right,
            p_left_nocs=action.p_left_nocs,
            p_right_nocs=action.p_right_nocs,
            episode=episode_index,
            step=step,
        )
        try:
            if action.action_type == "fling":
                state = execute_fling(sim, state, action.p_left, action.p_right)
            else:
                state = execute_pick_place(
                    sim, state, action.p_left, action.q_left, action.p_right, action.q_right
                )
        except GraspMissError:
            step += 1
            continue
        records.append(record)
        if action.action_type == "fold1":
            fold_progress = 1
        elif action.action_type == "fold2":
            step += 1
            break
        step += 1
    return records, state, step


def generate_demo_dataset(
    templates: list[GarmentTemplate],
    episodes_each: int,
    seed: int,
    n_points: int = 256,
    workers: int = 1,
):
    """Scripted demonstration dataset over a set of templates.

    Returns (records, steps_per_episode). Deterministic for a fixed seed
    regardless of worker count.
    """
    jobs = []
    for t_idx, template in enumerate(templates):
        for e in range(episodes_each):
            episode_seed = seed + 100_003 * t_idx + 17 * e
            jobs.append((t_idx, episode_seed, len(jobs)))

    if workers <= 1:
        results = [
            _demo_episode_job(templates[t_idx], episode_seed, n_points, index)
            for t_idx, episode_seed, index in jobs
        ]
    else:
        from concurrent.futures import ProcessPoolExecutor

        from .garments import save_template
        import tempfile, os

        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for i, template in enumerate(templates):
                p = os.path.join(tmp, f"t{i}.json")
                save_template(template, p)
                paths.append(p)
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(_demo_episode_job_from_path, paths[t_idx], episode_seed, n_points, index)
                    for t_idx, episode_seed, index in jobs
                ]
                results = [f.result() for f in futures]

    records = []
    steps = []
    for recs, n_steps in results:
        records.extend(recs)
        steps.append(n_steps)
    return records, steps


def _demo_episode_job(template, episode_seed: int, n_points: int, index: int):
    sim = Simulator(template)
    records, _, steps = run_demo_episode(sim, episode_seed, n_points, episode_index=index)
    return records, steps


def _demo_episode_job_from_path(path: str, episode_seed: int, n_points: int, index: int):
    from .garments import load_template

    return _demo_episode_job(load_template(path), episode_seed, n_points, index)
