"""Position-based-dynamics cloth core.

A ``Simulator`` binds one garment template to its derived constraint arrays
and advances ``ClothState`` values. One instance is single-threaded; run
multiple instances for parallel data collection.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..garments import GarmentTemplate
from . import kernels

STATE_FORMAT = "cloth-state"
STATE_VERSION = 1


class SimulationFault(RuntimeError):
    def __init__(self, message: str, step_index: int):
        super().__init__(f"{message} (step {step_index})")
        self.step_index = step_index


@dataclass
class SimConfig:
    gravity: float = 9.81
    substeps: int = 8
    iterations: int = 10
    stretch_stiffness: float = 0.95
    bend_stiffness: float = 0.25
    damping: float = 1.2  # per-second velocity decay
    friction: float = 0.45  # tangential velocity loss on table contact
    dt: float = 0.02
    seed: int = 0
    settle_velocity: float = 0.001  # m/s
    settle_max_steps: int = 600
    grasp_radius: float = 0.02
    multi_layer_grasp: bool = False

    def validate(self) -> None:
        positives = (
            "gravity",
            "substeps",
            "iterations",
            "damping",
            "dt",
            "settle_velocity",
            "settle_max_steps",
            "grasp_radius",
        )
        for name in positives:
            if getattr(self, name) <= 0:
                raise ValueError(f"SimConfig.{name} must be positive")
        for name in ("stretch_stiffness", "bend_stiffness"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"SimConfig.{name} must be in (0, 1]")
        if not (0.0 <= self.friction <= 1.0):
            raise ValueError("SimConfig.friction must be in [0, 1]")


@dataclass
class ClothState:
    positions: np.ndarray  # (V, 3)
    velocities: np.ndarray  # (V, 3)
    attachments: dict[int, int]  # particle id -> gripper id
    template_ref: str
    step_index: int = 0

    def copy(self) -> "ClothState":
        return ClothState(
            positions=self.positions.copy(),
            velocities=self.velocities.copy(),
            attachments=dict(self.attachments),
            template_ref=self.template_ref,
            step_index=self.step_index,
        )


def _mesh_constraints(template: GarmentTemplate):
    tris = template.triangles
    verts = template.vertices
    edges: dict[tuple[int, int], list[int]] = {}
    for t, tri in enumerate(tris):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges.setdefault(key, []).append(t)
    stretch = np.array(sorted(edges), dtype=np.int64)
    rest = np.linalg.norm(verts[stretch[:, 0]] - verts[stretch[:, 1]], axis=1)

    # Bending as a distance constraint between the opposite vertices of each
    # pair of triangles sharing an edge.
    bend_pairs = []
    for (a, b), tlist in sorted(edges.items()):
        if len(tlist) != 2:
            continue
        opp = []
        for t in tlist:
            for v in tris[t]:
                if v != a and v != b:
                    opp.append(int(v))
        if opp[0] != opp[1]:
            bend_pairs.append((min(opp), max(opp)))
    bend = np.array(sorted(set(bend_pairs)), dtype=np.int64)
    bend_rest = np.linalg.norm(verts[bend[:, 0]] - verts[bend[:, 1]], axis=1)
    return stretch, rest, bend, bend_rest


@dataclass
class _Grippers:
    positions: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    velocities: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))


class Simulator:
    """PBD cloth simulator bound to one template."""

    def __init__(self, template: GarmentTemplate, config: SimConfig | None = None):
        self.template = template
        self.config = config or SimConfig()
        self.config.validate()
        stretch, rest, bend, bend_rest = _mesh_constraints(template)
        self._stretch_i = np.ascontiguousarray(stretch[:, 0])
        self._stretch_j = np.ascontiguousarray(stretch[:, 1])
        self._stretch_rest = np.ascontiguousarray(rest)
        self._bend_i = np.ascontiguousarray(bend[:, 0])
        self._bend_j = np.ascontiguousarray(bend[:, 1])
        self._bend_rest = np.ascontiguousarray(bend_rest)
        self._prev = np.zeros_like(template.vertices)

    # ------------------------------------------------------------------

    def rest_state(self, center: tuple[float, float] = (0.0, -0.05)) -> ClothState:
        """Template rest pose placed with its centroid above ``center``."""
        pos = self.template.vertices.copy()
        centroid = pos[:, :2].mean(axis=0)
        pos[:, 0] += center[0] - centroid[0]
        pos[:, 1] += center[1] - centroid[1]
        return ClothState(
            positions=pos,
            velocities=np.zeros_like(pos),
            attachments={},
            template_ref=self.template.category,
        )

    def _attachment_arrays(self, state: ClothState, grippers: _Grippers):
        if not state.attachments:
            return (
                np.zeros(0, dtype=np.int64),
                np.zeros((0, 3)),
                np.zeros(0, dtype=np.int64),
            )
        particles = np.array(sorted(state.attachments), dtype=np.int64)
        gids = np.array([state.attachments[int(p)] for p in particles], dtype=np.int64)
        offsets = state.positions[particles] - grippers.positions[gids]
        return particles, offsets, gids

    def step(self, state: ClothState, grippers: _Grippers | None = None) -> ClothState:
        """Advance one fixed timestep; returns a new state."""
        out = state.copy()
        self._step_inplace(out, grippers or _Grippers(), None)
        return out

    def _step_inplace(
        self,
        state: ClothState,
        grippers: _Grippers,
        att: tuple[np.ndarray, np.ndarray, np.ndarray] | None,
    ) -> None:
        cfg = self.config
        pos, vel = state.positions, state.velocities
        if att is None:
            att = self._attachment_arrays(state, grippers)
        att_particles, att_offsets, att_gids = att
        inv_mass = np.ones(pos.shape[0])
        inv_mass[att_particles] = 0.0
        dt_sub = cfg.dt / cfg.substeps
        damp = max(0.0, 1.0 - cfg.damping * dt_sub)
        k_stretch = 1.0 - (1.0 - cfg.stretch_stiffness) ** (1.0 / cfg.iterations)
        k_bend = 1.0 - (1.0 - cfg.bend_stiffness) ** (1.0 / cfg.iterations)
        kernels.solve_step(
            pos,
            vel,
            inv_mass,
            self._prev,
            self._stretch_i,
            self._stretch_j,
            self._stretch_rest,
            self._bend_i,
            self._bend_j,
            self._bend_rest,
            att_particles,
            att_offsets,
            att_gids,
            grippers.positions,
            grippers.velocities,
            cfg.gravity,
            damp,
            dt_sub,
            cfg.substeps,
            cfg.iterations,
            k_stretch,
            k_bend,
            cfg.friction,
        )
        state.step_index += 1
        if not np.isfinite(pos).all():
            raise SimulationFault("non-finite particle positions", state.step_index)

    def settle(self, state: ClothState, grippers: _Grippers | None = None) -> ClothState:
        """Step until max free-particle speed < settle_velocity (or cap)."""
        out = state.copy()
        g = grippers or _Grippers()
        att = self._attachment_arrays(out, g)
        inv_mass = np.ones(out.positions.shape[0])
        inv_mass[att[0]] = 0.0
        for _ in range(self.config.settle_max_steps):
            self._step_inplace(out, g, att)
            if kernels.max_speed(out.velocities, inv_mass) < self.config.settle_velocity:
                break
        return out


def save_state(state: ClothState, path: str | Path) -> None:
    doc = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "template_ref": state.template_ref,
        "step_index": state.step_index,
        "positions": state.positions.tolist(),
        "velocities": state.velocities.tolist(),
        "attachments": {str(k): int(v) for k, v in state.attachments.items()},
    }
    Path(path).write_text(json.dumps(doc))


def load_state(path: str | Path) -> ClothState:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != STATE_FORMAT:
        raise ValueError(f"not a cloth state file: {path}")
    if doc.get("version") != STATE_VERSION:
        raise ValueError(f"unsupported state version {doc.get('version')}")
    return ClothState(
        positions=np.asarray(doc["positions"], dtype=np.float64),
        velocities=np.asarray(doc["velocities"], dtype=np.float64),
        attachments={int(k): int(v) for k, v in doc["attachments"].items()},
        template_ref=doc["template_ref"],
        step_index=int(doc["step_index"]),
    )
