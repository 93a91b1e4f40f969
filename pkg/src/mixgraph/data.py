"""Trajectory file loading, windowing, velocities and class encodings.

Scene files are tab-separated text, one record per line::

    frame_id <TAB> agent_id <TAB> class_label <TAB> x <TAB> y

Lines starting with ``#`` and blank lines are skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

SDD_CLASSES = ("biker", "pedestrian", "car", "cart", "bus", "skater")


class DataError(ValueError):
    """Malformed or inconsistent trajectory data."""


@dataclass(frozen=True)
class ClassVocabulary:
    labels: tuple[str, ...] = SDD_CLASSES

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise DataError("class vocabulary must contain at least one label")
        if len(set(labels)) != len(labels):
            raise DataError(f"class vocabulary has duplicate labels: {labels}")
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        return self.labels.index(label)


class Record(NamedTuple):
    frame_id: int
    agent_id: int
    class_index: int
    x: float
    y: float


@dataclass
class TrajectoryScene:
    records: list[Record] = field(default_factory=list)
    name: str = ""

    def frames(self) -> list[int]:
        return sorted({r.frame_id for r in self.records})


@dataclass
class SceneWindow:
    """M agents observed for ``obs_len`` steps with ``pred_len`` labeled future steps.

    Position arrays are indexed ``[time, agent, xy]``.
    """

    agent_ids: list[int]
    class_indices: list[int]
    obs_positions: np.ndarray
    pred_positions: np.ndarray
    obs_velocities: np.ndarray
    start_frame: int = 0
    scene: str = ""

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def obs_len(self) -> int:
        return self.obs_positions.shape[0]

    @property
    def pred_len(self) -> int:
        return self.pred_positions.shape[0]

    def future_displacements(self) -> np.ndarray:
        """Per-step displacements of the future, the first taken from the last observation."""
        full = np.concatenate([self.obs_positions[-1:], self.pred_positions], axis=0)
        return np.diff(full, axis=0)

    def permuted(self, order: Sequence[int]) -> "SceneWindow":
        order = list(order)
        return SceneWindow(
            agent_ids=[self.agent_ids[i] for i in order],
            class_indices=[self.class_indices[i] for i in order],
            obs_positions=self.obs_positions[:, order].copy(),
            pred_positions=self.pred_positions[:, order].copy(),
            obs_velocities=self.obs_velocities[:, order].copy(),
            start_frame=self.start_frame,
            scene=self.scene,
        )


def parse_scene(lines: Iterable[str], vocab: ClassVocabulary | None = None, source: str = "<text>") -> TrajectoryScene:
    vocab = vocab or ClassVocabulary()
    seen: dict[tuple[int, int], int] = {}
    agent_class: dict[int, tuple[int, int]] = {}
    records = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise DataError(f"{source}:{lineno}: expected 5 tab-separated fields, got {len(parts)}")
        try:
            frame, agent = int(parts[0]), int(parts[1])
        except ValueError:
            raise DataError(f"{source}:{lineno}: frame_id and agent_id must be integers") from None
        label = parts[2].strip()
        if label not in vocab.labels:
            raise DataError(f"{source}:{lineno}: unknown class label {label!r}")
        try:
            x, y = float(parts[3]), float(parts[4])
        except ValueError:
            raise DataError(f"{source}:{lineno}: non-numeric coordinate") from None
        if not (np.isfinite(x) and np.isfinite(y)):
            raise DataError(f"{source}:{lineno}: non-finite coordinate")
        if (frame, agent) in seen:
            raise DataError(
                f"{source}:{lineno}: duplicate record for frame {frame}, agent {agent} "
                f"(first at line {seen[frame, agent]})"
            )
        seen[frame, agent] = lineno
        cls = vocab.index(label)
        if agent in agent_class and agent_class[agent][0] != cls:
            prev_cls, prev_line = agent_class[agent]
            raise DataError(
                f"{source}:{lineno}: agent {agent} has class {label!r} but was "
                f"{vocab.labels[prev_cls]!r} at line {prev_line}"
            )
        agent_class.setdefault(agent, (cls, lineno))
        records.append(Record(frame, agent, cls, x, y))
    records.sort(key=lambda r: (r.frame_id, r.agent_id))
    return TrajectoryScene(records, name=source)


def load_scene_file(path, vocab: ClassVocabulary | None = None) -> TrajectoryScene:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_scene(fh, vocab, source=path.name)


def load_dataset_dir(directory, vocab: ClassVocabulary | None = None) -> list[TrajectoryScene]:
    """Load every ``*.txt`` / ``*.tsv`` file in ``directory``, in sorted name order."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError(f"data directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.suffix in (".txt", ".tsv") and p.is_file())
    return [load_scene_file(p, vocab) for p in files]


def compute_velocities(positions: np.ndarray) -> np.ndarray:
    """First difference along time; the first step is zero."""
    positions = np.asarray(positions, dtype=np.float64)
    vel = np.zeros_like(positions)
    vel[1:] = positions[1:] - positions[:-1]
    return vel


def build_windows(scene: TrajectoryScene, obs_len: int = 8, pred_len: int = 12, stride: int = 1) -> list[SceneWindow]:
    """Slide a window of ``obs_len + pred_len`` consecutive scene frames.

    Consecutive entries of the scene's sorted frame list count as consecutive
    time steps. Only agents present at every frame of a window are kept.
    """
    if obs_len < 2 or pred_len < 1 or stride < 1:
        raise ValueError(f"invalid window lengths obs={obs_len} pred={pred_len} stride={stride}")
    span = obs_len + pred_len
    frames = scene.frames()
    if len(frames) < span:
        return []
    pos: dict[tuple[int, int], tuple[float, float]] = {}
    by_frame: dict[int, set[int]] = {}
    cls: dict[int, int] = {}
    for r in scene.records:
        pos[r.frame_id, r.agent_id] = (r.x, r.y)
        by_frame.setdefault(r.frame_id, set()).add(r.agent_id)
        cls[r.agent_id] = r.class_index

    windows = []
    for start in range(0, len(frames) - span + 1, stride):
        wf = frames[start : start + span]
        agents = set.intersection(*(by_frame[f] for f in wf))
        if not agents:
            continue
        ids = sorted(agents)
        xy = np.array([[pos[f, a] for a in ids] for f in wf], dtype=np.float64)
        obs = xy[:obs_len]
        windows.append(
            SceneWindow(
                agent_ids=ids,
                class_indices=[cls[a] for a in ids],
                obs_positions=obs,
                pred_positions=xy[obs_len:],
                obs_velocities=compute_velocities(obs),
                start_frame=wf[0],
                scene=scene.name,
            )
        )
    return windows


def encode_one_hot(class_indices: Sequence[int], vocab: ClassVocabulary | int) -> np.ndarray:
    """L x M matrix whose column i is the one-hot code of agent i's class."""
    n_classes = vocab if isinstance(vocab, int) else len(vocab)
    idx = np.asarray(list(class_indices), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n_classes):
        bad = idx[(idx < 0) | (idx >= n_classes)][0]
        raise DataError(f"class index {bad} out of range 0..{n_classes - 1}")
    out = np.zeros((n_classes, idx.size))
    out[idx, np.arange(idx.size)] = 1.0
    return out


def synthetic_scene(
    n_frames: int = 20,
    speed: float = 2.0,
    turn_rate: float = 0.05,
    vocab: ClassVocabulary | None = None,
) -> TrajectoryScene:
    """Deterministic six-agent, three-class scene.

    Five agents move at constant velocity; agent 5 turns at a fixed angular
    rate. Used for overfit and ablation smoke runs.
    """
    vocab = vocab or ClassVocabulary()
    classes = ["pedestrian", "car", "biker", "pedestrian", "car", "biker"]
    starts = [(0.0, 0.0), (40.0, 10.0), (10.0, 60.0), (80.0, 80.0), (5.0, 120.0), (60.0, 30.0)]
    headings = [0.0, np.pi / 2, np.pi / 4, np.pi, -np.pi / 3, 0.5]
    speeds = [speed * s for s in (0.5, 1.5, 1.0, 0.5, 1.25, 1.0)]
    records = []
    for agent, (label, (x0, y0), th, v) in enumerate(zip(classes, starts, headings, speeds)):
        x, y = x0, y0
        for f in range(n_frames):
            records.append(Record(f, agent, vocab.index(label), float(x), float(y)))
            if agent == 5:
                th += turn_rate
            x += v * np.cos(th)
            y += v * np.sin(th)
    records.sort(key=lambda r: (r.frame_id, r.agent_id))
    return TrajectoryScene(records, name="synthetic")


def write_scene_file(scene: TrajectoryScene, path, vocab: ClassVocabulary | None = None) -> None:
    vocab = vocab or ClassVocabulary()
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write("# frame_id\tagent_id\tclass\tx\ty\n")
        for r in scene.records:
            fh.write(f"{r.frame_id}\t{r.agent_id}\t{vocab.labels[r.class_index]}\t{float(r.x)!r}\t{float(r.y)!r}\n")
