"""Dataset records and their line-delimited file format.

Files are JSONL with a versioned header line:

    {"format": "clothfold-dataset", "version": 1, "kind": "demo"}

followed by one record object per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DATASET_FORMAT = "clothfold-dataset"
DATASET_VERSION = 1

LEGAL_MU = ((1.0, 0.0), (0.0, 1.0), (0.5, 0.5))


@dataclass
class DemoRecord:
    points: np.ndarray  # (N, 3) observation
    gt_nocs: np.ndarray  # (N, 3) per-point canonical targets
    action_type: str  # fling | fold1 | fold2
    stage_label: float  # 0 = unfolding, 1 = folding
    p_left: np.ndarray
    p_right: np.ndarray
    q_left: np.ndarray | None = None
    q_right: np.ndarray | None = None
    p_left_nocs: np.ndarray | None = None
    p_right_nocs: np.ndarray | None = None
    provenance: str = "oracle"
    episode: int = 0
    step: int = 0

    def validate(self) -> None:
        if self.action_type not in ("fling", "fold1", "fold2"):
            raise ValueError(f"bad action type {self.action_type!r}")
        if self.action_type == "fling":
            if self.q_left is not None or self.q_right is not None:
                raise ValueError("fling records carry no place points")
        else:
            if self.q_left is None or self.q_right is None:
                raise ValueError("fold records need place points")
        for p in (self.p_left, self.p_right):
            d = np.linalg.norm(self.points - np.asarray(p), axis=1).min()
            if d > 0.05:
                raise ValueError(f"action point {np.round(p,3).tolist()} off the cloud ({d:.3f} m)")

    def to_json(self) -> dict:
        doc = {
            "points": _round(self.points),
            "gt_nocs": _round(self.gt_nocs),
            "action_type": self.action_type,
            "stage_label": self.stage_label,
            "p_left": _round(self.p_left),
            "p_right": _round(self.p_right),
            "provenance": self.provenance,
            "episode": self.episode,
            "step": self.step,
        }
        for name in ("q_left", "q_right", "p_left_nocs", "p_right_nocs"):
            value = getattr(self, name)
            if value is not None:
                doc[name] = _round(value)
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "DemoRecord":
        return cls(
            points=np.asarray(doc["points"], dtype=np.float64),
            gt_nocs=np.asarray(doc["gt_nocs"], dtype=np.float64),
            action_type=doc["action_type"],
            stage_label=float(doc["stage_label"]),
            p_left=np.asarray(doc["p_left"], dtype=np.float64),
            p_right=np.asarray(doc["p_right"], dtype=np.float64),
            q_left=_opt(doc, "q_left"),
            q_right=_opt(doc, "q_right"),
            p_left_nocs=_opt(doc, "p_left_nocs"),
            p_right_nocs=_opt(doc, "p_right_nocs"),
            provenance=doc.get("provenance", "oracle"),
            episode=int(doc.get("episode", 0)),
            step=int(doc.get("step", 0)),
        )


@dataclass
class ExplorationRecord:
    points: np.ndarray
    gt_nocs: np.ndarray
    pair: tuple[int, int]
    r_c: float
    r_a: float
    episode: int = 0
    step: int = 0
    explored: bool = True

    def validate(self, num_candidates: int | None = None) -> None:
        if not (np.isfinite(self.r_c) and np.isfinite(self.r_a)):
            raise ValueError("non-finite rewards")
        j, k = self.pair
        if j == k or j < 0 or k < 0:
            raise ValueError(f"bad pair {self.pair}")
        if num_candidates is not None and max(j, k) >= num_candidates:
            raise ValueError(f"pair {self.pair} outside candidate set")

    def to_json(self) -> dict:
        return {
            "points": _round(self.points),
            "gt_nocs": _round(self.gt_nocs),
            "pair": list(self.pair),
            "r_c": self.r_c,
            "r_a": self.r_a,
            "episode": self.episode,
            "step": self.step,
            "explored": self.explored,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExplorationRecord":
        return cls(
            points=np.asarray(doc["points"], dtype=np.float64),
            gt_nocs=np.asarray(doc["gt_nocs"], dtype=np.float64),
            pair=(int(doc["pair"][0]), int(doc["pair"][1])),
            r_c=float(doc["r_c"]),
            r_a=float(doc["r_a"]),
            episode=int(doc.get("episode", 0)),
            step=int(doc.get("step", 0)),
            explored=bool(doc.get("explored", True)),
        )


@dataclass
class PreferenceRecord:
    sample_id: str
    sigma1: tuple[int, int]
    sigma2: tuple[int, int]
    mu: tuple[float, float]
    annotator: str = ""
    timestamp: float = 0.0

    def validate(self) -> None:
        if tuple(self.sigma1) == tuple(self.sigma2):
            raise ValueError("sigma1 and sigma2 must differ")
        if tuple(self.mu) not in LEGAL_MU:
            raise ValueError(f"illegal mu {self.mu}")

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "sigma1": list(self.sigma1),
            "sigma2": list(self.sigma2),
            "mu": list(self.mu),
            "annotator": self.annotator,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "PreferenceRecord":
        return cls(
            sample_id=str(doc["sample_id"]),
            sigma1=(int(doc["sigma1"][0]), int(doc["sigma1"][1])),
            sigma2=(int(doc["sigma2"][0]), int(doc["sigma2"][1])),
            mu=(float(doc["mu"][0]), float(doc["mu"][1])),
            annotator=doc.get("annotator", ""),
            timestamp=float(doc.get("timestamp", 0.0)),
        )


_KINDS = {
    "demo": DemoRecord,
    "exploration": ExplorationRecord,
    "preference": PreferenceRecord,
}


def _round(arr) -> list:
    return np.asarray(arr, dtype=np.float64).round(7).tolist()


def _opt(doc: dict, key: str) -> np.ndarray | None:
    return np.asarray(doc[key], dtype=np.float64) if key in doc else None


def save_records(records: list, kind: str, path: str | Path) -> None:
    if kind not in _KINDS:
        raise ValueError(f"unknown dataset kind {kind!r}")
    lines = [
        json.dumps({"format": DATASET_FORMAT, "version": DATASET_VERSION, "kind": kind})
    ]
    lines.extend(json.dumps(r.to_json()) for r in records)
    Path(path).write_text("\n".join(lines) + "\n")


def load_records(path: str | Path) -> tuple[str, list]:
    text = Path(path).read_text().strip().splitlines()
    if not text:
        raise ValueError(f"empty dataset file {path}")
    header = json.loads(text[0])
    if header.get("format") != DATASET_FORMAT:
        raise ValueError(f"not a dataset file: {path}")
    if header.get("version") != DATASET_VERSION:
        raise ValueError(f"unsupported dataset version {header.get('version')}")
    kind = header["kind"]
    cls = _KINDS[kind]
    return kind, [cls.from_json(json.loads(line)) for line in text[1:]]
