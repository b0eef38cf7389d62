"""Training pipelines: supervised on demonstrations, self-supervised score
regression in simulation, and preference fine-tuning."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from ..nn.autodiff import Tensor
from ..policy import network as net
from . import losses
from .optim import adam_init, backward_grads, hybrid_step, optimize_step
from .records import DemoRecord, ExplorationRecord, PreferenceRecord


@dataclass
class TrainConfig:
    seed: int = 0
    n_points: int = 256
    num_candidates: int = 16
    alpha: float = 50.0
    category: str = ""
    # supervised
    lr: float = 3e-3
    epochs: int = 20
    batch_size: int = 8
    w_stage: float = 1.0
    w_nocs: float = 5.0
    w_kp: float = 2.0
    w_fold: float = 2.0
    w_score: float = 4.0
    # self-supervised protocol
    explore_p: float = 0.8
    init_pick_place_p: float = 0.3
    selfsup_episodes: int = 40
    selfsup_steps: int = 2
    selfsup_updates: int = 300
    update_batch: int = 8
    hybrid_lr: float = 1e-3
    lr_demo_scale: float = 0.1
    # preference phase
    pref_epochs: int = 60
    pref_samples_per_step: int = 8
    pref_collect_p: float = 0.05

    def policy_config(self) -> net.PolicyConfig:
        return net.PolicyConfig(
            num_points=self.n_points,
            num_candidates=self.num_candidates,
            alpha=self.alpha,
            category=self.category,
        )


def subsample_observation(
    points: np.ndarray, gt_nocs: np.ndarray, n: int, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    if points.shape[0] == n:
        return points, gt_nocs
    if points.shape[0] > n:
        idx = rng.choice(points.shape[0], size=n, replace=False)
    else:
        idx = rng.choice(points.shape[0], size=n, replace=True)
    return points[idx], gt_nocs[idx]


def demo_record_loss(
    record: DemoRecord,
    params: dict[str, Tensor],
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tensor:
    pcfg = config.policy_config()
    points, gt_nocs = subsample_observation(
        record.points, record.gt_nocs, config.n_points, rng
    )
    out = net.forward(points, params, pcfg)
    loss = losses.bce_loss(out.stage_score, record.stage_label) * config.w_stage
    loss = loss + losses.nocs_symmetric_huber(out.nocs, gt_nocs) * config.w_nocs
    if record.action_type == "fling":
        kp = (
            losses.kp_all_loss(
                out.candidates_nocs,
                out.candidates_task,
                record.p_left_nocs,
                record.p_left,
            )
            + losses.kp_all_loss(
                out.candidates_nocs,
                out.candidates_task,
                record.p_right_nocs,
                record.p_right,
            )
        ) * 0.5
        loss = loss + kp * config.w_kp
    else:
        target = np.stack(
            [record.p_left, record.p_right, record.q_left, record.q_right]
        )
        head = out.fold1 if record.action_type == "fold1" else out.fold2
        loss = loss + losses.smooth_l1(head, target) * config.w_fold
    return loss


def _batch_loss(
    records: Iterable[DemoRecord],
    params: dict[str, Tensor],
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tensor | None:
    total = None
    for record in records:
        term = demo_record_loss(record, params, config, rng)
        total = term if total is None else total + term
    return total


def train_supervised(
    dataset: list[DemoRecord],
    config: TrainConfig,
    params: dict[str, Tensor] | None = None,
) -> tuple[dict[str, Tensor], list[dict]]:
    """Adam training on demonstration records. Returns (params, history)."""
    pcfg = config.policy_config()
    if params is None:
        params = net.init_params(pcfg, seed=config.seed)
    state = adam_init(params)
    rng = np.random.default_rng(config.seed)
    history: list[dict] = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(dataset))
        epoch_loss = 0.0
        batches = 0
        for start in range(0, len(order), config.batch_size):
            batch = [dataset[i] for i in order[start : start + config.batch_size]]
            loss = _batch_loss(batch, params, config, rng)
            if loss is None:
                continue
            grads = backward_grads(params, loss)
            optimize_step(params, grads, state, config.lr)
            epoch_loss += float(loss.data) / len(batch)
            batches += 1
        history.append({"epoch": epoch, "loss": epoch_loss / max(batches, 1)})
    return params, history


# ---------------------------------------------------------------------------
# self-supervised phase


def sample_init_kind(rng: np.random.Generator, p_pick_place: float = 0.3) -> str:
    """Initial-state mix: random pick-and-place vs random lift (crumple)."""
    return "pick_place" if rng.random() < p_pick_place else "lift"


def choose_exploration(rng: np.random.Generator, p_explore: float = 0.8) -> bool:
    """Whether this step executes a random candidate pair instead of the best."""
    return rng.random() < p_explore


def pair_row(j: int, k: int, num_candidates: int) -> int:
    """Row of unordered pair (j, k), j < k, in lexicographic enumeration."""
    if j > k:
        j, k = k, j
    return j * num_candidates - j * (j + 1) // 2 + (k - j - 1)


def exploration_record_loss(
    record: ExplorationRecord,
    params: dict[str, Tensor],
    config: TrainConfig,
    rng: np.random.Generator,
) -> Tensor:
    pcfg = config.policy_config()
    points, _ = subsample_observation(
        record.points, record.gt_nocs, config.n_points, rng
    )
    out = net.forward(points, params, pcfg)
    row = pair_row(record.pair[0], record.pair[1], config.num_candidates)
    loss = losses.smooth_l1(out.r_c[np.array([row])], np.array([record.r_c]))
    loss = loss + losses.smooth_l1(out.r_a[np.array([row])], np.array([record.r_a]))
    return loss * config.w_score


def collect_exploration(
    templates: list,
    params: dict[str, Tensor],
    config: TrainConfig,
    workers: int = 1,
) -> tuple[list[ExplorationRecord], list[DemoRecord], dict]:
    """Roll out fling exploration episodes and label them with oracle rewards.

    Returns (exploration records, heuristic flat-grasp demo records, stats).
    """
    jobs = [
        (e % len(templates), config.seed + 7717 * e, e)
        for e in range(config.selfsup_episodes)
    ]
    if workers <= 1:
        results = [
            _exploration_episode(templates[t_idx], params, config, ep_seed, index)
            for t_idx, ep_seed, index in jobs
        ]
    else:
        import os
        import tempfile

        from concurrent.futures import ProcessPoolExecutor

        from ..garments import save_template
        from ..policy.checkpoint import save_checkpoint

        with tempfile.TemporaryDirectory() as tmp:
            paths = []
            for i, template in enumerate(templates):
                p = os.path.join(tmp, f"t{i}.json")
                save_template(template, p)
                paths.append(p)
            ckpt = os.path.join(tmp, "params.ckpt")
            save_checkpoint(ckpt, params, config.policy_config())
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(
                        _exploration_episode_job,
                        paths[t_idx],
                        ckpt,
                        config,
                        ep_seed,
                        index,
                    )
                    for t_idx, ep_seed, index in jobs
                ]
                results = [f.result() for f in futures]

    exploration: list[ExplorationRecord] = []
    heuristic: list[DemoRecord] = []
    stats = {"explore": 0, "total_steps": 0, "pick_place": 0, "lift": 0}
    for recs, heur, st in results:
        exploration.extend(recs)
        heuristic.extend(heur)
        for key in st:
            stats[key] += st[key]
    return exploration, heuristic, stats


def _exploration_episode_job(template_path, ckpt_path, config, ep_seed, index):
    from ..garments import load_template
    from ..policy.checkpoint import load_checkpoint

    template = load_template(template_path)
    params, _ = load_checkpoint(ckpt_path)
    return _exploration_episode(template, params, config, ep_seed, index)


def _exploration_episode(template, params, config: TrainConfig, ep_seed: int, index: int):
    from .. import oracle
    from ..simulation.core import Simulator
    from ..simulation.primitives import (
        DegeneratePairError,
        GraspMissError,
        crumple,
        execute_fling,
        random_pick_place_init,
    )
    from ..simulation.sensing import sample_pointcloud

    pcfg = config.policy_config()
    sim = Simulator(template)
    rng = np.random.default_rng(ep_seed)
    kind = sample_init_kind(rng, config.init_pick_place_p)
    if kind == "pick_place":
        state = random_pick_place_init(template, ep_seed, sim=sim)
    else:
        state = crumple(template, ep_seed, sim=sim)
    stats = {
        "explore": 0,
        "total_steps": 0,
        "pick_place": int(kind == "pick_place"),
        "lift": int(kind == "lift"),
    }
    exploration: list[ExplorationRecord] = []
    heuristic: list[DemoRecord] = []

    if kind == "pick_place":
        # Well-shaped state: add the heuristic best-grasp supervision.
        obs = sample_pointcloud(template, state, config.n_points, seed=ep_seed)
        left, right = oracle.heuristic_flat_grasp(state, template)
        heuristic.append(
            DemoRecord(
                points=obs.points,
                gt_nocs=obs.gt_nocs,
                action_type="fling",
                stage_label=0.0,
                p_left=left,
                p_right=right,
                p_left_nocs=template.nocs[template.keypoints["left_shoulder"]].copy(),
                p_right_nocs=template.nocs[template.keypoints["right_shoulder"]].copy(),
                provenance="heuristic_flat",
                episode=index,
            )
        )

    for step in range(config.selfsup_steps):
        obs = sample_pointcloud(
            template, state, config.n_points, seed=ep_seed * 613 + step
        )
        out = net.forward(obs.points, params, pcfg)
        explored = choose_exploration(rng, config.explore_p)
        stats["explore"] += int(explored)
        stats["total_steps"] += 1
        valid = np.nonzero(out.candidate_valid)[0]
        if len(valid) < 2:
            break
        if explored:
            j, k = sorted(rng.choice(valid, size=2, replace=False).tolist())
        else:
            j, k, _, _ = out.select_pair()
        p1 = out.candidates_task.data[j]
        p2 = out.candidates_task.data[k]
        before = state
        try:
            state = execute_fling(sim, state, p1, p2)
        except (GraspMissError, DegeneratePairError):
            continue
        r_c, r_a = oracle.compute_rewards(before, state, template)
        exploration.append(
            ExplorationRecord(
                points=obs.points,
                gt_nocs=obs.gt_nocs,
                pair=(int(j), int(k)),
                r_c=r_c,
                r_a=r_a,
                episode=index,
                step=step,
                explored=explored,
            )
        )
    return exploration, heuristic, stats


def train_selfsup(
    params: dict[str, Tensor],
    templates: list,
    demo_records: list[DemoRecord],
    config: TrainConfig,
    workers: int = 1,
    exploration_records: list[ExplorationRecord] | None = None,
) -> tuple[dict[str, Tensor], dict]:
    """Self-supervised score training with hybrid demonstration replay.

    Collects fling rollouts (unless records are supplied), then runs hybrid
    gradient steps: score regression on exploration data plus demonstration
    replay at a reduced learning rate so the fold heads do not degrade.
    """
    if exploration_records is None:
        exploration, heuristic, stats = collect_exploration(
            templates, params, config, workers
        )
    else:
        exploration, heuristic, stats = exploration_records, [], {}
    demo_pool = list(demo_records) + list(heuristic)
    rng = np.random.default_rng(config.seed + 1)
    history = []
    for update in range(config.selfsup_updates):
        if not exploration:
            break
        expl_idx = rng.choice(len(exploration), size=min(config.update_batch, len(exploration)), replace=False)
        expl_batch = [exploration[i] for i in expl_idx]
        demo_batch = []
        if demo_pool:
            demo_idx = rng.choice(len(demo_pool), size=min(config.update_batch, len(demo_pool)), replace=False)
            demo_batch = [demo_pool[i] for i in demo_idx]

        def demo_loss():
            return _batch_loss(demo_batch, params, config, rng) if demo_batch else None

        def expl_loss():
            total = None
            for rec in expl_batch:
                term = exploration_record_loss(rec, params, config, rng)
                total = term if total is None else total + term
            return total

        step_losses = hybrid_step(
            params,
            demo_loss,
            expl_loss,
            config.hybrid_lr * config.lr_demo_scale,
            config.hybrid_lr,
        )
        history.append(step_losses)
    stats["history"] = history
    stats["num_exploration"] = len(exploration)
    return params, stats


# ---------------------------------------------------------------------------
# preference phase


@dataclass
class PreferenceDataset:
    samples: dict[str, np.ndarray] = field(default_factory=dict)  # id -> (N, 3)
    records: list[PreferenceRecord] = field(default_factory=list)

    def grouped(self) -> dict[str, list[PreferenceRecord]]:
        out: dict[str, list[PreferenceRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.sample_id, []).append(rec)
        return out


def preference_sample_loss(
    points: np.ndarray,
    records: list[PreferenceRecord],
    params: dict[str, Tensor],
    config: TrainConfig,
) -> Tensor:
    pcfg = config.policy_config()
    out = net.forward(points, params, pcfg)
    comparisons = []
    for rec in records:
        r1 = out.r_ca[np.array([pair_row(*rec.sigma1, config.num_candidates)])]
        r2 = out.r_ca[np.array([pair_row(*rec.sigma2, config.num_candidates)])]
        comparisons.append((r1.reshape(()), r2.reshape(()), rec.mu))
    return losses.preference_loss(comparisons)


def finetune_preferences(
    params: dict[str, Tensor],
    pref_dataset: PreferenceDataset,
    sim_batches: list[ExplorationRecord],
    config: TrainConfig,
) -> tuple[dict[str, Tensor], list[dict]]:
    """Hybrid preference fine-tuning: Bradley-Terry loss on annotations plus
    (optionally) score regression on simulation data. No records, no update."""
    grouped = pref_dataset.grouped()
    sample_ids = sorted(grouped)
    if not sample_ids:
        return params, []
    rng = np.random.default_rng(config.seed + 2)
    history = []
    for epoch in range(config.pref_epochs):
        order = rng.permutation(len(sample_ids))
        epoch_loss = 0.0
        steps = 0
        for start in range(0, len(order), config.pref_samples_per_step):
            chunk = [sample_ids[i] for i in order[start : start + config.pref_samples_per_step]]

            def pref_loss():
                total = None
                for sid in chunk:
                    term = preference_sample_loss(
                        pref_dataset.samples[sid], grouped[sid], params, config
                    )
                    total = term if total is None else total + term
                return total

            def sim_loss():
                if not sim_batches:
                    return None
                idx = rng.choice(len(sim_batches), size=min(config.update_batch, len(sim_batches)), replace=False)
                total = None
                for i in idx:
                    term = exploration_record_loss(sim_batches[i], params, config, rng)
                    total = term if total is None else total + term
                return total

            step_losses = hybrid_step(
                params,
                sim_loss,
                pref_loss,
                config.hybrid_lr * config.lr_demo_scale,
                config.hybrid_lr,
            )
            epoch_loss += step_losses.get("other", 0.0)
            steps += 1
        history.append({"epoch": epoch, "loss": epoch_loss / max(steps, 1)})
    return params, history
