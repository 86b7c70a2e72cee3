"""Synthetic event-camera data: procedural scenes, motion, polarity events.

A sample is built in three stages: a deterministic procedural texture
(one family per class id), a sequence of crops shifted one step at a
time to fake camera/scene motion, and per-pixel brightness differencing
with a contrast threshold to produce sparse {-1, 0, +1} event frames.
The first event frame of a sequence is defined as all zeros, so a
sequence of T crops yields T event frames.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .rng import derive_rng
from .validation import require

NUM_SCENE_CLASSES = 8


@dataclass(frozen=True)
class Scene:
    """A grayscale procedural image with its provenance."""

    class_id: int
    image: np.ndarray   # (H0, W0) floats in [0, 1]
    seed: int


@dataclass(frozen=True)
class DvsConfig:
    """Event synthesis settings (desk-scale defaults)."""

    contrast_threshold: float = 0.1
    crop_height: int = 32
    crop_width: int = 32
    shift: int = 1
    axis: str = "x"
    timesteps: int = 5

    def __post_init__(self):
        require(0 < self.contrast_threshold < 1,
                "contrast_threshold must lie in (0, 1)")
        require(self.crop_height > 0 and self.crop_width > 0,
                "crop size must be positive")
        require(self.shift >= 0, "shift must be >= 0")
        require(self.axis in ("x", "y"), "axis must be 'x' or 'y'")
        require(self.timesteps >= 2, "need at least 2 timesteps")


def _normalize(img: np.ndarray) -> np.ndarray:
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def generate_scene(class_id: int, seed: int, size=(64, 64)) -> Scene:
    """Deterministic texture for ``class_id``; per-seed jitter within class.

    Eight families (stripes at two orientations, checkerboard, blobs,
    rings, dot grid, ramp-plus-waves, concentric squares), distinct
    enough that a linear probe separates them above chance.
    """
    require(0 <= class_id < NUM_SCENE_CLASSES,
            f"unknown class {class_id}; have {NUM_SCENE_CLASSES} generators")
    h, w = size
    rng = derive_rng(seed, "scene", class_id)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    phase = rng.uniform(0, 2 * np.pi)
    freq = rng.uniform(0.9, 1.1)
    if class_id == 0:      # diagonal stripes
        img = np.sin(2 * np.pi * freq * (xx + yy) / 12.0 + phase)
    elif class_id == 1:    # checkerboard
        cell = 6
        img = ((xx // cell + yy // cell) % 2).astype(np.float64)
        img += 0.12 * rng.standard_normal((h, w))
    elif class_id == 2:    # smooth blob field
        img = gaussian_filter(rng.standard_normal((h, w)), sigma=4.0)
    elif class_id == 3:    # radial rings
        cy, cx = rng.uniform(0.3, 0.7, 2) * (h, w)
        r = np.hypot(yy - cy, xx - cx)
        img = np.sin(2 * np.pi * freq * r / 8.0 + phase)
    elif class_id == 4:    # vertical stripes
        img = np.sin(2 * np.pi * freq * xx / 7.0 + phase)
    elif class_id == 5:    # dot grid
        cell = 8
        img = -np.hypot((xx % cell) - cell / 2, (yy % cell) - cell / 2)
        img += 0.10 * rng.standard_normal((h, w))
    elif class_id == 6:    # ramp with horizontal waves
        img = xx / w + 0.35 * np.sin(2 * np.pi * yy / 10.0 + phase)
    else:                  # concentric squares
        cy, cx = rng.uniform(0.35, 0.65, 2) * (h, w)
        r = np.maximum(np.abs(yy - cy), np.abs(xx - cx))
        img = ((r // 4) % 2).astype(np.float64)
        img += 0.12 * rng.standard_normal((h, w))
    return Scene(class_id, _normalize(img), seed)


def frames_from_motion(scene: Scene, cfg: DvsConfig,
                       origin=(0, 0)) -> np.ndarray:
    """T crops of the scene, shifted ``cfg.shift`` px per step along
    ``cfg.axis``. Returns (T, H, W) floats in [0, 1]."""
    img = scene.image
    row0, col0 = origin
    travel = (cfg.timesteps - 1) * cfg.shift
    end_row = row0 + cfg.crop_height + (travel if cfg.axis == "y" else 0)
    end_col = col0 + cfg.crop_width + (travel if cfg.axis == "x" else 0)
    require(row0 >= 0 and col0 >= 0 and end_row <= img.shape[0]
            and end_col <= img.shape[1],
            f"motion path exceeds scene bounds {img.shape}")
    frames = np.empty((cfg.timesteps, cfg.crop_height, cfg.crop_width))
    for t in range(cfg.timesteps):
        dr = t * cfg.shift if cfg.axis == "y" else 0
        dc = t * cfg.shift if cfg.axis == "x" else 0
        frames[t] = img[row0 + dr: row0 + dr + cfg.crop_height,
                        col0 + dc: col0 + dc + cfg.crop_width]
    return frames


def events_from_frames(frames: np.ndarray,
                       contrast_threshold: float) -> np.ndarray:
    """Per-pixel polarity events from consecutive brightness differences.

    Frame t (t >= 2) is sign(F[t] - F[t-1]) where the magnitude exceeds
    the threshold, else 0; frame 1 is all zeros. Returns (T, H, W) int8.
    """
    frames = np.asarray(frames, dtype=np.float64)
    require(frames.ndim == 3 and frames.shape[0] >= 2,
            "need at least two frames")
    diff = np.diff(frames, axis=0)
    events = np.zeros(frames.shape, dtype=np.int8)
    events[1:] = np.sign(diff) * (np.abs(diff) > contrast_threshold)
    return events


@dataclass(frozen=True)
class EventDataset:
    """Labeled event sequences with a deterministic 50/50 split."""

    events: np.ndarray        # (M, T, H, W) int8 in {-1, 0, +1}
    labels: np.ndarray        # (M,) int64
    train_index: np.ndarray   # indices into events
    eval_index: np.ndarray
    seed: int

    def subset(self, which: str):
        idx = self.train_index if which == "train" else self.eval_index
        return self.events[idx], self.labels[idx]


def make_dataset(classes: int, per_class: int, cfg: DvsConfig,
                 seed: int) -> EventDataset:
    """Generate ``classes * per_class`` event sequences, split 50/50.

    The split is a pure function of (seed, class, index): a derived
    permutation per class sends the first half to training. Samples
    vary within a class through per-sample scene jitter and crop origin.
    """
    require(1 <= classes <= NUM_SCENE_CLASSES,
            f"classes must lie in [1, {NUM_SCENE_CLASSES}]")
    require(per_class >= 2 and per_class % 2 == 0,
            "per_class must be even (50/50 split)")
    travel = (cfg.timesteps - 1) * cfg.shift
    scene_h = cfg.crop_height + (travel if cfg.axis == "y" else 0) + 4
    scene_w = cfg.crop_width + (travel if cfg.axis == "x" else 0) + 4
    all_events, labels = [], []
    train_idx, eval_idx = [], []
    for cls in range(classes):
        split_rng = derive_rng(seed, "split", cls)
        order = split_rng.permutation(per_class)
        train_local = set(order[: per_class // 2].tolist())
        for i in range(per_class):
            sample_rng = derive_rng(seed, "sample", cls, i)
            scene_seed = int(sample_rng.integers(0, 2 ** 31))
            scene = generate_scene(cls, scene_seed, size=(scene_h, scene_w))
            max_row = scene_h - cfg.crop_height - (travel if cfg.axis == "y" else 0)
            max_col = scene_w - cfg.crop_width - (travel if cfg.axis == "x" else 0)
            origin = (int(sample_rng.integers(0, max_row + 1)),
                      int(sample_rng.integers(0, max_col + 1)))
            frames = frames_from_motion(scene, cfg, origin)
            events = events_from_frames(frames, cfg.contrast_threshold)
            flat_index = len(all_events)
            all_events.append(events)
            labels.append(cls)
            (train_idx if i in train_local else eval_idx).append(flat_index)
    return EventDataset(
        events=np.stack(all_events),
        labels=np.asarray(labels, dtype=np.int64),
        train_index=np.asarray(train_idx, dtype=np.int64),
        eval_index=np.asarray(eval_idx, dtype=np.int64),
        seed=seed,
    )


# -- on-disk format (flat binary + JSON index) --------------------------------

def save_dataset(dataset: EventDataset, out_dir) -> Path:
    """Write one flat int8 tensor file per sample plus ``index.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    train_set = set(dataset.train_index.tolist())
    for i in range(dataset.events.shape[0]):
        rel = f"sample_{i:05d}.bin"
        dataset.events[i].astype("<i1").tofile(out_dir / rel)
        entries.append({
            "path": rel,
            "label": int(dataset.labels[i]),
            "split": "train" if i in train_set else "eval",
            "shape": list(dataset.events[i].shape),
        })
    index = {
        "seed": dataset.seed,
        "dtype": "int8",
        "samples": entries,
    }
    index_path = out_dir / "index.json"
    with open(index_path, "w", encoding="utf-8") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return index_path


def load_dataset(in_dir) -> EventDataset:
    in_dir = Path(in_dir)
    with open(in_dir / "index.json", "r", encoding="utf-8") as fh:
        index = json.load(fh)
    events, labels, train_idx, eval_idx = [], [], [], []
    for i, entry in enumerate(index["samples"]):
        shape = tuple(entry["shape"])
        arr = np.fromfile(in_dir / entry["path"], dtype="<i1").reshape(shape)
        events.append(arr)
        labels.append(entry["label"])
        (train_idx if entry["split"] == "train" else eval_idx).append(i)
    return EventDataset(
        events=np.stack(events),
        labels=np.asarray(labels, dtype=np.int64),
        train_index=np.asarray(train_idx, dtype=np.int64),
        eval_index=np.asarray(eval_idx, dtype=np.int64),
        seed=index["seed"],
    )
