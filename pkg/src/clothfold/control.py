"""Episode state machine, reachability model, and batch evaluation.

The controller observes, smooths the stage score, flings until the smoothed
score crosses the threshold, then executes the two fold steps; unreachable
action points trigger drag (unfolding) or mop (folding) repositioning, which
consume a step from the same 10-step budget.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import metrics, oracle
from .garments import GarmentTemplate
from .policy import network as net
from .simulation.core import ClothState, SimConfig, SimulationFault, Simulator
from .simulation.primitives import (
    CrossingArmsError,
    DegeneratePairError,
    GraspMissError,
    crumple,
    execute_drag,
    execute_fling,
    execute_mop,
    execute_pick_place,
)
from .simulation.sensing import Observation, render_topdown_mask, sample_pointcloud


@dataclass
class Workspace:
    bases: np.ndarray = field(
        default_factory=lambda: np.array([[-0.4, -0.6], [0.4, -0.6]])
    )
    reach_radius: float = 0.9
    band_distance: float = 0.55
    band_tolerance: float = 0.05
    table_half: float = 0.9

    def validate(self) -> None:
        if self.reach_radius <= 0:
            raise ValueError("reach radius must be positive")
        if np.abs(self.bases).max() > self.table_half:
            raise ValueError("bases must lie inside the table bounds")

    @property
    def base_midpoint(self) -> np.ndarray:
        return self.bases.mean(axis=0)

    @property
    def target_center(self) -> np.ndarray:
        mid = self.base_midpoint
        return mid + np.array([0.0, self.band_distance])


def reachable(point: np.ndarray, workspace: Workspace) -> tuple[bool, bool]:
    """Per-arm reachability of an xy(z) point (left arm, right arm)."""
    p = np.asarray(point, dtype=np.float64)[:2]
    d_left = float(np.linalg.norm(p - workspace.bases[0]))
    d_right = float(np.linalg.norm(p - workspace.bases[1]))
    return d_left <= workspace.reach_radius, d_right <= workspace.reach_radius


def assign_arms(p1: np.ndarray, p2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Left arm takes the smaller-x point of the pair."""
    if p1[0] <= p2[0]:
        return p1, p2
    return p2, p1


def pair_reachable(p1: np.ndarray, p2: np.ndarray, workspace: Workspace) -> bool:
    left, right = assign_arms(np.asarray(p1), np.asarray(p2))
    return reachable(left, workspace)[0] and reachable(right, workspace)[1]


def drag_targets(
    optimal_points: list[np.ndarray],
    state: ClothState,
    workspace: Workspace,
) -> list[np.ndarray]:
    """Grasp points for the drag primitive: garment points on the lines that
    join each robot base to its optimal action point. Empty when the garment
    is already inside the target band (no drag needed)."""
    from .simulation.primitives import _line_grasp

    centroid = state.positions[:, :2].mean(axis=0)
    dist = float(np.linalg.norm(centroid - workspace.base_midpoint))
    if abs(dist - workspace.band_distance) <= workspace.band_tolerance:
        return []
    out = []
    for i, point in enumerate(optimal_points[:2]):
        base = workspace.bases[min(i, len(workspace.bases) - 1)]
        particle = _line_grasp(state, base, np.asarray(point, dtype=np.float64)[:2])
        out.append(state.positions[particle].copy())
    return out


# ---------------------------------------------------------------------------
# policies


class OraclePolicy:
    """Scripted policy: semantic flings until flattened, then the fold plan."""

    def __init__(self, template: GarmentTemplate, seed: int = 0):
        self.template = template
        self.rng = np.random.default_rng(seed)
        self.fold_progress = 0

    def reset(self) -> None:
        self.fold_progress = 0

    def stage_score(self, obs: Observation, state: ClothState) -> float:
        return 1.0 if oracle.is_flattened(state, self.template) else 0.0

    def fling_points(self, obs, state) -> tuple[np.ndarray, np.ndarray]:
        action = oracle.demo_action(state, self.template, 0, self.rng)
        return action.p_left, action.p_right

    def fold_points(self, obs, state, step: int):
        action = oracle._fold_action(state, self.template, step - 1)
        return action.p_left, action.q_left, action.p_right, action.q_right


class NetPolicy:
    """Trained-policy wrapper: argmax fling pair, voted fold points."""

    def __init__(self, params, config: net.PolicyConfig):
        self.params = params
        self.config = config

    def reset(self) -> None:
        pass

    def _forward(self, obs: Observation) -> net.PolicyOutput:
        return net.forward(obs.points, self.params, self.config)

    def stage_score(self, obs, state) -> float:
        return self._forward(obs).stage

    def fling_points(self, obs, state):
        out = self._forward(obs)
        _, _, p1, p2 = out.select_pair()
        return p1, p2

    def fold_points(self, obs, state, step: int):
        out = self._forward(obs)
        pts = out.fold_points(step)
        return pts[0], pts[2], pts[1], pts[3]


class RandomPairPolicy(NetPolicy):
    """Baseline: same candidates, uniformly random eligible pair."""

    def __init__(self, params, config: net.PolicyConfig, seed: int = 0):
        super().__init__(params, config)
        self.rng = np.random.default_rng(seed)

    def fling_points(self, obs, state):
        out = self._forward(obs)
        valid = np.nonzero(out.candidate_valid)[0]
        if len(valid) < 2:
            return super().fling_points(obs, state)
        j, k = self.rng.choice(valid, size=2, replace=False)
        return out.candidates_task.data[int(j)].copy(), out.candidates_task.data[int(k)].copy()


# ---------------------------------------------------------------------------
# episode loop


@dataclass
class EpisodeConfig:
    max_steps: int = 10
    ema_coefficient: float = 0.6  # weight of the newest raw score
    stage_threshold: float = 0.75
    n_points: int = 256
    resolution: int = 128
    seed: int = 0
    count_repositions: bool = True  # drag/mop consume budget steps


@dataclass
class EpisodeLog:
    steps: list[dict] = field(default_factory=list)
    status: str = "running"  # success | step-limit | fault
    success: bool = False
    switch_iou: float | None = None
    switch_step: int | None = None
    final_coverage: float = 0.0
    final_iou: float = 0.0
    seed: int = 0

    def to_json(self) -> dict:
        return {
            "steps": self.steps,
            "status": self.status,
            "success": self.success,
            "switch_iou": self.switch_iou,
            "switch_step": self.switch_step,
            "final_coverage": self.final_coverage,
            "final_iou": self.final_iou,
            "seed": self.seed,
        }


def save_episode_logs(logs: list[EpisodeLog], path: str | Path) -> None:
    lines = [json.dumps({"format": "clothfold-episodes", "version": 1})]
    lines.extend(json.dumps(log.to_json()) for log in logs)
    Path(path).write_text("\n".join(lines) + "\n")


def run_episode(
    policy,
    sim: Simulator,
    workspace: Workspace,
    config: EpisodeConfig,
    initial_state: ClothState | None = None,
    folded_reference: np.ndarray | None = None,
) -> EpisodeLog:
    """One unfold-then-fold episode under the 10-step budget."""
    template = sim.template
    ctx = oracle.context_for(template)
    state = initial_state.copy() if initial_state is not None else crumple(
        template, config.seed, sim=sim
    )
    policy.reset()
    log = EpisodeLog(seed=config.seed)
    smoothed: float | None = None
    folding = False
    fold_step = 1
    rng = np.random.default_rng(config.seed + 31)

    def measure(st: ClothState) -> dict:
        mask = render_topdown_mask(template, st, config.resolution)
        return {
            "coverage": float(mask.sum() / max(ctx.reference_count, 1)),
        }

    step = 0
    while step < config.max_steps:
        obs = sample_pointcloud(
            template, state, config.n_points, seed=config.seed * 4099 + step
        )
        raw = float(policy.stage_score(obs, state))
        if smoothed is None:
            smoothed = raw
        else:
            smoothed = (
                config.ema_coefficient * raw + (1 - config.ema_coefficient) * smoothed
            )
        if not folding and smoothed >= config.stage_threshold:
            folding = True
            log.switch_step = step
            log.switch_iou = metrics.aligned_iou(template, state, config.resolution)

        entry = {
            "step": step,
            "stage_score": raw,
            "smoothed_score": smoothed,
            "before": measure(state),
        }
        try:
            if folding:
                p1, q1, p2, q2 = policy.fold_points(obs, state, fold_step)
                points_ok = pair_reachable(p1, p2, workspace) and pair_reachable(
                    q1, q2, workspace
                )
                if not points_ok:
                    entry["action"] = "mop"
                    state = execute_mop(
                        sim,
                        state,
                        workspace.bases,
                        workspace.band_distance,
                        workspace.band_tolerance,
                    )
                else:
                    entry["action"] = f"fold{fold_step}"
                    entry["params"] = [
                        np.round(p, 4).tolist() for p in (p1, q1, p2, q2)
                    ]
                    state = execute_pick_place(sim, state, p1, q1, p2, q2)
                    fold_step += 1
            else:
                p1, p2 = policy.fling_points(obs, state)
                if not pair_reachable(p1, p2, workspace):
                    entry["action"] = "drag"
                    state = execute_drag(
                        sim,
                        state,
                        [p1, p2],
                        workspace.bases,
                        workspace.band_distance,
                        workspace.band_tolerance,
                    )
                else:
                    entry["action"] = "fling"
                    entry["params"] = [np.round(p, 4).tolist() for p in (p1, p2)]
                    state = execute_fling(sim, state, p1, p2)
        except (GraspMissError, DegeneratePairError, CrossingArmsError) as err:
            entry["action"] = entry.get("action", "fault-retry")
            entry["error"] = str(err)
        except SimulationFault as err:
            entry["error"] = str(err)
            log.steps.append(entry)
            log.status = "fault"
            break
        except oracle.RecrumpleSignal:
            entry["action"] = "recrumple"
            state = crumple(template, config.seed + 7919 * (step + 1), sim=sim)
        entry["after"] = measure(state)
        log.steps.append(entry)
        step += 1
        if folding and fold_step > 2:
            break

    if log.status == "running":
        log.status = "success-eval" if folding and fold_step > 2 else "step-limit"
    log.final_coverage = measure(state)["coverage"]
    log.final_iou = metrics.aligned_iou(template, state, config.resolution)
    if log.status == "success-eval":
        if folded_reference is None:
            folded_reference = render_topdown_mask(
                template, oracle.oracle_folded_state(sim), config.resolution
            )
        log.success = metrics.success_check(
            state, template, folded_reference, log.switch_iou, config.resolution
        )
        log.status = "success" if log.success else "fold-mismatch"
    return log


# ---------------------------------------------------------------------------
# batch evaluation and reports


def make_policy(spec: dict, template: GarmentTemplate):
    """Build a policy from a serializable spec.

    kinds: {"kind": "oracle"}, {"kind": "net", "ckpt": path},
    {"kind": "random", "ckpt": path, "seed": int}.
    """
    kind = spec["kind"]
    if kind == "oracle":
        return OraclePolicy(template, seed=spec.get("seed", 0))
    from .policy.checkpoint import load_checkpoint

    params, pcfg = load_checkpoint(spec["ckpt"])
    if kind == "net":
        return NetPolicy(params, pcfg)
    if kind == "random":
        return RandomPairPolicy(params, pcfg, seed=spec.get("seed", 0))
    raise ValueError(f"unknown policy kind {kind!r}")


def _episode_job(template_path: str, policy_spec: dict, config_dict: dict) -> dict:
    from .garments import load_template

    template = load_template(template_path)
    sim = Simulator(template)
    config = EpisodeConfig(**config_dict)
    spec = dict(policy_spec)
    spec.setdefault("seed", config.seed)
    policy = make_policy(spec, template)
    folded_ref = _folded_reference(sim, config.resolution)
    log = run_episode(policy, sim, Workspace(), config, folded_reference=folded_ref)
    return log.to_json()


def evaluate_policy(
    policy_spec: dict,
    templates: list[GarmentTemplate],
    episodes_each: int,
    config: EpisodeConfig,
    workers: int = 1,
) -> list[tuple[int, EpisodeLog]]:
    """Seeded episodes per template, optionally across worker processes.

    Results are deterministic and independent of the worker count.
    """
    import os
    import tempfile

    from .garments import save_template

    jobs = []
    for t_idx in range(len(templates)):
        for e in range(episodes_each):
            jobs.append((t_idx, config.seed + 1000 * t_idx + e))

    with tempfile.TemporaryDirectory() as tmp:
        paths = []
        for i, template in enumerate(templates):
            p = os.path.join(tmp, f"t{i}.json")
            save_template(template, p)
            paths.append(p)
        job_args = [
            (paths[t_idx], policy_spec, {**config.__dict__, "seed": seed})
            for t_idx, seed in jobs
        ]
        if workers <= 1:
            raw = [_episode_job(*args) for args in job_args]
        else:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_episode_job, *args) for args in job_args]
                raw = [f.result() for f in futures]

    results = []
    for (t_idx, _), doc in zip(jobs, raw):
        log = EpisodeLog(
            steps=doc["steps"],
            status=doc["status"],
            success=doc["success"],
            switch_iou=doc["switch_iou"],
            switch_step=doc["switch_step"],
            final_coverage=doc["final_coverage"],
            final_iou=doc["final_iou"],
            seed=doc["seed"],
        )
        results.append((t_idx, log))
    return results


_FOLDED_REF_CACHE: dict[int, np.ndarray] = {}


def _folded_reference(sim: Simulator, resolution: int) -> np.ndarray:
    key = id(sim.template)
    if key not in _FOLDED_REF_CACHE:
        _FOLDED_REF_CACHE[key] = render_topdown_mask(
            sim.template, oracle.oracle_folded_state(sim), resolution
        )
    return _FOLDED_REF_CACHE[key]


def eval_report(
    results: list[tuple[int, EpisodeLog]], templates: list[GarmentTemplate]
) -> str:
    """Tabular text report: per-garment IoU / coverage / success, mean +- std."""
    lines = [
        f"{'garment':>8} {'category':>14} {'IoU':>14} {'coverage':>14} {'success':>10}"
    ]
    per_template: dict[int, list[EpisodeLog]] = {}
    for t_idx, log in results:
        per_template.setdefault(t_idx, []).append(log)
    all_iou, all_cov, all_succ = [], [], []
    for t_idx in sorted(per_template):
        logs = per_template[t_idx]
        ious = [log.final_iou for log in logs]
        covs = [log.final_coverage for log in logs]
        succ = [log.success for log in logs]
        all_iou.extend(ious)
        all_cov.extend(covs)
        all_succ.extend(succ)
        lines.append(
            f"{t_idx:>8} {templates[t_idx].category:>14} "
            f"{np.mean(ious):>7.3f}±{np.std(ious):<6.3f} "
            f"{np.mean(covs):>7.3f}±{np.std(covs):<6.3f} "
            f"{int(np.sum(succ)):>4d}/{len(succ):<4d}"
        )
    lines.append(
        f"{'mean':>8} {'':>14} "
        f"{np.mean(all_iou):>7.3f}±{np.std(all_iou):<6.3f} "
        f"{np.mean(all_cov):>7.3f}±{np.std(all_cov):<6.3f} "
        f"{int(np.sum(all_succ)):>4d}/{len(all_succ):<4d}"
    )
    return "\n".join(lines)


def transfer_eval(
    params_long,
    config_long: net.PolicyConfig,
    params_short,
    config_short: net.PolicyConfig,
    templates_long: list[GarmentTemplate],
    templates_short: list[GarmentTemplate],
    n_points: int = 256,
    seed: int = 0,
    table_half: float = 0.9,
) -> str:
    """Cross-category fold-point validity: swap the two pretrained models and
    check that predicted fold points stay inside the workspace on flattened
    states of the other category. Includes same-category control rows."""
    rows = []
    cases = [
        ("long->short", params_long, config_long, templates_short),
        ("short->long", params_short, config_short, templates_long),
        ("long->long (control)", params_long, config_long, templates_long),
        ("short->short (control)", params_short, config_short, templates_short),
    ]
    for name, params, pcfg, templates in cases:
        valid = 0
        total = 0
        for t_idx, template in enumerate(templates):
            sim = Simulator(template)
            state = sim.rest_state(oracle.TARGET_CENTER)
            obs = sample_pointcloud(template, state, n_points, seed=seed + t_idx)
            out = net.forward(obs.points, params, pcfg)
            for step in (1, 2):
                pts = out.fold_points(step)
                ok = np.all(np.abs(pts[:, :2]) <= table_half) and np.all(
                    pts[:, 2] >= 0.0
                )
                valid += int(ok)
                total += 1
        rows.append((name, valid, total))
    lines = [f"{'case':>24} {'valid fold-point sets':>24}"]
    for name, valid, total in rows:
        lines.append(f"{name:>24} {valid:>12d}/{total:<6d}")
    return "\n".join(lines)
