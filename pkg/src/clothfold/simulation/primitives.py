"""Action primitives executed by gripper trajectories.

All primitives snap requested points to cloth particles (2 cm radius),
drive gripper waypoints through the PBD solver, and settle before returning.
Every primitive is deterministic for a fixed (state, arguments, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..garments import GarmentTemplate
from .core import ClothState, SimConfig, Simulator, _Grippers


class GraspMissError(RuntimeError):
    """No cloth particle within the grasp snap radius."""


class DegeneratePairError(ValueError):
    """The two requested grasp points coincide."""


class CrossingArmsError(ValueError):
    """Dual-arm pick-and-place paths would cross."""


@dataclass
class FlingProfile:
    lift_height: float = 0.42
    lift_time: float = 0.40
    center_time: float = 0.40
    stretch_speed: float = 0.25
    strain_target: float = 1.05  # gripper separation / rest-pose distance
    max_separation: float = 1.30
    swing_forward: float = 0.26
    swing_time: float = 0.32
    lay_back: float = 0.46
    lay_time: float = 0.50
    lay_height: float = 0.06
    center: tuple[float, float] = (0.0, -0.05)


@dataclass
class _Rig:
    """Active grippers + attachment arrays bound to a working state."""

    grippers: _Grippers
    att_particles: np.ndarray
    att_offsets: np.ndarray
    att_gids: np.ndarray

    def att(self):
        return self.att_particles, self.att_offsets, self.att_gids


def snap_to_particle(state: ClothState, point: np.ndarray, radius: float = 0.02) -> int:
    p = np.asarray(point, dtype=np.float64)
    d = np.linalg.norm(state.positions - p, axis=1)
    idx = int(np.argmin(d))
    if d[idx] > radius:
        raise GraspMissError(
            f"no particle within {radius * 100:.0f} cm of {np.round(p, 3).tolist()}"
        )
    return idx


def _attach(
    sim: Simulator, state: ClothState, particle_groups: list[list[int]]
) -> _Rig:
    """One gripper per group; each particle keeps its offset to the gripper."""
    n_g = len(particle_groups)
    gpos = np.zeros((n_g, 3))
    parts, offs, gids = [], [], []
    for g, group in enumerate(particle_groups):
        anchor = state.positions[group].mean(axis=0)
        gpos[g] = anchor
        for p in group:
            parts.append(p)
            offs.append(state.positions[p] - anchor)
            gids.append(g)
            state.attachments[int(p)] = g
    rig = _Rig(
        grippers=_Grippers(positions=gpos, velocities=np.zeros((n_g, 3))),
        att_particles=np.array(parts, dtype=np.int64),
        att_offsets=np.array(offs, dtype=np.float64),
        att_gids=np.array(gids, dtype=np.int64),
    )
    return rig


def _grasp_particles(sim: Simulator, state: ClothState, point: np.ndarray) -> list[int]:
    idx = snap_to_particle(state, point, sim.config.grasp_radius)
    if sim.config.multi_layer_grasp:
        d = np.linalg.norm(state.positions - state.positions[idx], axis=1)
        return [int(i) for i in np.nonzero(d <= sim.config.grasp_radius)[0]]
    return [idx]


def _release(state: ClothState) -> None:
    state.attachments = {}


def _move(
    sim: Simulator,
    state: ClothState,
    rig: _Rig,
    targets: np.ndarray,
    duration: float,
) -> None:
    """Linearly interpolate gripper positions to targets over ``duration``."""
    cfg = sim.config
    steps = max(1, int(round(duration / cfg.dt)))
    start = rig.grippers.positions.copy()
    targets = np.asarray(targets, dtype=np.float64)
    for s in range(1, steps + 1):
        new = start + (targets - start) * (s / steps)
        rig.grippers.velocities = (new - rig.grippers.positions) / cfg.dt
        rig.grippers.positions = new
        sim._step_inplace(state, rig.grippers, rig.att())
    rig.grippers.velocities[:] = 0.0


def _hold(sim: Simulator, state: ClothState, rig: _Rig, duration: float) -> None:
    steps = max(1, int(round(duration / sim.config.dt)))
    rig.grippers.velocities[:] = 0.0
    for _ in range(steps):
        sim._step_inplace(state, rig.grippers, rig.att())


def execute_fling(
    sim: Simulator,
    state: ClothState,
    p1: np.ndarray,
    p2: np.ndarray,
    profile: FlingProfile | None = None,
) -> ClothState:
    """Dual-arm fling: grasp, lift, stretch to tension, swing, lay, release.

    End-effector rotation is implicit: point grippers are carried along the
    p1 -> p2 line, so their approach is always oriented with the pair.
    """
    prof = profile or FlingProfile()
    p1 = np.asarray(p1, dtype=np.float64)
    p2 = np.asarray(p2, dtype=np.float64)
    if np.linalg.norm(p1 - p2) < 1e-9:
        raise DegeneratePairError("fling requires two distinct grasp points")
    work = state.copy()
    g1 = _grasp_particles(sim, work, p1)
    g2 = _grasp_particles(sim, work, p2)
    if set(g1) & set(g2):
        raise DegeneratePairError("fling grasps snapped to the same particle")
    # Left gripper = smaller x, so the stretch axis is consistent.
    if work.positions[g1[0], 0] > work.positions[g2[0], 0]:
        g1, g2 = g2, g1
    rig = _attach(sim, work, [g1, g2])

    rest_d = float(
        np.linalg.norm(
            sim.template.vertices[g1[0]] - sim.template.vertices[g2[0]]
        )
    )
    rest_d = max(rest_d, 0.08)

    # Lift straight up.
    up = rig.grippers.positions.copy()
    up[:, 2] = prof.lift_height
    _move(sim, work, rig, up, prof.lift_time)

    # Center the pair on the workspace target, oriented along x.
    cx, cy = prof.center
    d0 = max(float(np.linalg.norm(rig.grippers.positions[0] - rig.grippers.positions[1])), 0.10)
    d0 = min(d0, rest_d)  # never start beyond the cloth's rest span
    centered = np.array(
        [
            [cx - d0 / 2, cy, prof.lift_height],
            [cx + d0 / 2, cy, prof.lift_height],
        ]
    )
    _move(sim, work, rig, centered, prof.center_time)

    # Stretch until the inter-gripper strain reaches the tension threshold.
    target_sep = min(prof.strain_target * rest_d, prof.max_separation)
    while True:
        sep = float(np.linalg.norm(rig.grippers.positions[0] - rig.grippers.positions[1]))
        if sep >= target_sep:
            break
        new_sep = min(sep + prof.stretch_speed * sim.config.dt, target_sep)
        stretch_t = rig.grippers.positions.copy()
        stretch_t[0, 0] = cx - new_sep / 2
        stretch_t[1, 0] = cx + new_sep / 2
        _move(sim, work, rig, stretch_t, sim.config.dt)

    # Swing forward then lay backwards at low height.
    swing = rig.grippers.positions.copy()
    swing[:, 1] += prof.swing_forward
    _move(sim, work, rig, swing, prof.swing_time)
    lay = rig.grippers.positions.copy()
    lay[:, 1] -= prof.lay_back
    lay[:, 2] = prof.lay_height
    _move(sim, work, rig, lay, prof.lay_time)

    _release(work)
    return sim.settle(work)


def execute_pick_place(
    sim: Simulator,
    state: ClothState,
    p1: np.ndarray,
    q1: np.ndarray,
    p2: np.ndarray | None = None,
    q2: np.ndarray | None = None,
    lift_height: float = 0.12,
    speed: float = 1.3,
    arc_fraction: float = 0.4,
    end_height: float = 0.02,
    hold_time: float = 0.4,
) -> ClothState:
    """Pick, carry over an arc whose apex clears the place locations, lower,
    hold, release.

    The transport speed is tuned so folds carry the hanging cloth across the
    fold line (there is no cloth-on-cloth contact to stack layers slowly).
    Dual-arm moves whose xy paths cross are rejected. When simultaneous
    transport would bring the grippers too close, the arm farther from the
    shared midpoint of the four endpoints moves first (sequential transport).
    """
    p1 = np.asarray(p1, dtype=np.float64)
    q1 = np.asarray(q1, dtype=np.float64)
    dual = p2 is not None
    if dual:
        p2 = np.asarray(p2, dtype=np.float64)
        q2 = np.asarray(q2, dtype=np.float64)
        if _segments_cross(p1[:2], q1[:2], p2[:2], q2[:2]):
            raise CrossingArmsError("pick-and-place paths cross in the plane")

    work = state.copy()
    groups = [_grasp_particles(sim, work, p1)]
    if dual:
        g2 = _grasp_particles(sim, work, p2)
        if set(groups[0]) & set(g2):
            raise DegeneratePairError("pick points snapped to the same particle")
        groups.append(g2)
    rig = _attach(sim, work, groups)

    starts = rig.grippers.positions.copy()
    places = [q1] if not dual else [q1, q2]
    ends = np.array([[q[0], q[1], end_height] for q in places])
    travel = float(np.linalg.norm((ends - starts)[:, :2], axis=1).max())
    apex = max(lift_height, arc_fraction * travel)

    if dual and _paths_too_close(starts, ends):
        order = _transport_order(starts, ends)
        for g in order:
            solo_end = rig.grippers.positions.copy()
            solo_end[g] = ends[g]
            _arc_move(sim, work, rig, solo_end, apex, end_height, speed)
    else:
        _arc_move(sim, work, rig, ends, apex, end_height, speed)

    if hold_time > 0:
        _hold(sim, work, rig, hold_time)
    _release(work)
    return sim.settle(work)


def _arc_move(
    sim: Simulator,
    work: ClothState,
    rig: _Rig,
    ends: np.ndarray,
    apex: float,
    end_height: float,
    speed: float,
    segments: int = 10,
) -> None:
    starts = rig.grippers.positions.copy()
    travel = float(np.linalg.norm((ends - starts)[:, :2], axis=1).max())
    seg_time = max(sim.config.dt, (travel / segments) / speed if travel > 0 else 0.05)
    for s in np.linspace(0.0, 1.0, segments + 1)[1:]:
        mid = starts + (ends - starts) * s
        mid[:, 2] = end_height + np.sin(np.pi * s) * max(apex - end_height, 0.0)
        _move(sim, work, rig, mid, seg_time)


def _segments_cross(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1 = orient(b0, b1, a0)
    d2 = orient(b0, b1, a1)
    d3 = orient(a0, a1, b0)
    d4 = orient(a0, a1, b1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


def _paths_too_close(start: np.ndarray, end: np.ndarray, min_sep: float = 0.05) -> bool:
    for t in np.linspace(0.0, 1.0, 11):
        a = start[0] + (end[0] - start[0]) * t
        b = start[1] + (end[1] - start[1]) * t
        if np.linalg.norm((a - b)[:2]) < min_sep:
            return True
    return False


def _transport_order(start: np.ndarray, end: np.ndarray) -> list[int]:
    mid = (start.mean(axis=0) + end.mean(axis=0)) / 2
    d0 = np.linalg.norm(start[0] - mid)
    d1 = np.linalg.norm(start[1] - mid)
    return [0, 1] if d0 >= d1 else [1, 0]


def execute_drag(
    sim: Simulator,
    state: ClothState,
    target_points: list[np.ndarray],
    bases: np.ndarray,
    band_distance: float = 0.55,
    band_tolerance: float = 0.05,
) -> ClothState:
    """Reposition by pulling: grasp on the base-to-target lines, pull until
    the garment centroid sits at the target band distance from the base
    midpoint. Returns the state unchanged when already in the band."""
    base_mid = np.asarray(bases, dtype=np.float64).mean(axis=0)
    centroid = state.positions[:, :2].mean(axis=0)
    dist = float(np.linalg.norm(centroid - base_mid))
    if abs(dist - band_distance) <= band_tolerance:
        return state

    work = state.copy()
    groups = []
    taken: set[int] = set()
    for t, point in enumerate(target_points[:2]):
        base = np.asarray(bases[min(t, len(bases) - 1)], dtype=np.float64)
        particle = _line_grasp(work, base, np.asarray(point, dtype=np.float64)[:2])
        if particle in taken:
            particle = _nearest_free(work, base, taken)
        taken.add(particle)
        groups.append([particle])
    rig = _attach(sim, work, groups)

    for _ in range(3):
        centroid = work.positions[:, :2].mean(axis=0)
        dist = float(np.linalg.norm(centroid - base_mid))
        if abs(dist - band_distance) <= band_tolerance:
            break
        direction = (centroid - base_mid) / max(dist, 1e-9)
        desired = base_mid + direction * band_distance
        delta = desired - centroid
        targets = rig.grippers.positions.copy()
        targets[:, :2] += delta
        targets[:, 2] = 0.03
        _move(sim, work, rig, targets, max(0.2, np.linalg.norm(delta) / 0.3))
    _release(work)
    return sim.settle(work)


def _line_grasp(state: ClothState, base: np.ndarray, target: np.ndarray) -> int:
    """Particle on the base->target segment nearest the base; falls back to
    the particle nearest the segment when none lies within the corridor."""
    pts = state.positions[:, :2]
    seg = target - base
    seg_len = np.linalg.norm(seg)
    if seg_len < 1e-9:
        return int(np.argmin(np.linalg.norm(pts - base, axis=1)))
    u = seg / seg_len
    rel = pts - base
    along = rel @ u
    perp = np.abs(rel[:, 0] * u[1] - rel[:, 1] * u[0])
    corridor = (perp <= 0.03) & (along >= 0.0) & (along <= seg_len)
    if corridor.any():
        ids = np.nonzero(corridor)[0]
        return int(ids[np.argmin(along[ids])])
    clamped = np.clip(along, 0.0, seg_len)
    foot = base + np.outer(clamped, u)
    return int(np.argmin(np.linalg.norm(pts - foot, axis=1)))


def _nearest_free(state: ClothState, point: np.ndarray, taken: set[int]) -> int:
    d = np.linalg.norm(state.positions[:, :2] - point, axis=1)
    for idx in np.argsort(d):
        if int(idx) not in taken:
            return int(idx)
    raise GraspMissError("no free particle available")


def execute_mop(
    sim: Simulator,
    state: ClothState,
    bases: np.ndarray,
    band_distance: float = 0.55,
    band_tolerance: float = 0.05,
) -> ClothState:
    """Reposition a folded garment by its bounding-box edge, preserving shape.

    Particles along the trailing bounding-box edge are clamped rigidly (the
    gripper acts as a bar) and carried so the centroid lands in the target
    band."""
    base_mid = np.asarray(bases, dtype=np.float64).mean(axis=0)
    centroid = state.positions[:, :2].mean(axis=0)
    dist = float(np.linalg.norm(centroid - base_mid))
    if abs(dist - band_distance) <= band_tolerance:
        return state

    direction = (centroid - base_mid) / max(dist, 1e-9)
    desired = base_mid + direction * band_distance
    delta = desired - centroid

    work = state.copy()
    motion = delta / max(np.linalg.norm(delta), 1e-9)
    proj = work.positions[:, :2] @ motion
    edge = proj <= proj.min() + 0.025
    group = [int(i) for i in np.nonzero(edge)[0]]
    rig = _attach(sim, work, [group])
    targets = rig.grippers.positions.copy()
    targets[:, :2] += delta
    _move(sim, work, rig, targets, max(0.2, np.linalg.norm(delta) / 0.25))
    _release(work)
    return sim.settle(work)


def crumple(
    template: GarmentTemplate,
    seed: int,
    sim: Simulator | None = None,
    config: SimConfig | None = None,
) -> ClothState:
    """Random crumpled initial state: grasp a uniform random particle, lift to
    a uniform height in [0.5, 1.0] m, settle, release, settle."""
    sim = sim or Simulator(template, config)
    rng = np.random.default_rng(seed)
    state = sim.rest_state()
    particle = int(rng.integers(0, state.positions.shape[0]))
    height = float(rng.uniform(0.5, 1.0))
    rig = _attach(sim, state, [[particle]])
    target = np.array([[0.0, -0.05, height]])
    _move(sim, state, rig, target, max(0.4, height / 0.8))
    _hold(sim, state, rig, 0.35)
    _release(state)
    return sim.settle(state)


CORNER_LABELS = ("left_cuff", "right_cuff", "left_waist", "right_waist")


def random_pick_place_init(
    template: GarmentTemplate,
    seed: int,
    sim: Simulator | None = None,
    config: SimConfig | None = None,
) -> ClothState:
    """Smoothed garment with one random corner pick-and-place perturbation."""
    sim = sim or Simulator(template, config)
    rng = np.random.default_rng(seed)
    state = sim.rest_state()
    label = CORNER_LABELS[int(rng.integers(0, len(CORNER_LABELS)))]
    pick = state.positions[template.keypoints[label]].copy()
    centroid = state.positions.mean(axis=0)
    frac = rng.uniform(0.8, 1.5)
    place = pick + (centroid - pick) * frac
    place[:2] += rng.normal(0.0, 0.02, size=2)
    place[2] = 0.0
    return execute_pick_place(sim, state, pick, place, lift_height=0.12)
