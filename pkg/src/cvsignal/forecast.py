"""Next-second total-count forecasting per corridor segment from CV features.

The recurrent model sees only CV-derived inputs (distances, speeds, waiting
times, counts, upstream phase, direction); labels during offline training
are the true totals from simulation. A small candidate grid replaces any
large-scale hyperparameter search, and the model with the lowest validation
RMSE wins.
"""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .corridor import GREEN, MAJOR_EAST, MAJOR_WEST, RED, Segment, YELLOW
from .lstm import (
    NadamConfig,
    NadamState,
    forward_batch,
    init_params,
    loss_and_gradients,
    nadam_step,
)
from .units import STOP_SPEED_MPH

PHASE_LEVELS = (GREEN, YELLOW, RED, "none")
DIRECTION_LEVELS = (MAJOR_EAST, MAJOR_WEST, "minor")
FEATURE_NAMES = (
    "cv_to_cv_distance_m", "cv_speed_mph", "cv_waiting_s", "num_cvs",
    "phase_green", "phase_yellow", "phase_red", "phase_none",
    "dir_major_east", "dir_major_west", "dir_minor",
)
NUM_FEATURES = len(FEATURE_NAMES)
DEFAULT_LOOKBACK = 10
PHASE_VOTE_WINDOW_S = 5


class FeatureBuilder:
    """Stateful per-segment feature extractor fed one second at a time.

    Waiting time accumulates per CV from its first broadcast; the upstream
    phase is the majority vote over the trailing vote window ("none" when the
    segment has no upstream signal).
    """

    def __init__(self, segment: Segment, vote_window_s: int = PHASE_VOTE_WINDOW_S):
        self.segment = segment
        self.vote_window_s = vote_window_s
        self._waiting: dict[int, float] = {}
        self._phases: list[str] = []
        self._dir_onehot = [
            1.0 if segment.direction == lvl else 0.0 for lvl in DIRECTION_LEVELS
        ]

    def update(self, bsms, upstream_phase: str | None) -> np.ndarray:
        """One feature vector for the current second."""
        phase = upstream_phase if self.segment.upstream_intersection_id else None
        self._phases.append(phase or "none")
        if len(self._phases) > self.vote_window_s:
            self._phases.pop(0)
        vote = Counter(self._phases).most_common(1)[0][0]

        mine = [b for b in bsms if b.segment_id == self.segment.id]
        n = len(mine)
        if n:
            for b in mine:
                if b.speed_mph < STOP_SPEED_MPH:
                    self._waiting[b.vehicle_id] = self._waiting.get(b.vehicle_id, 0.0) + 1.0
                else:
                    self._waiting.setdefault(b.vehicle_id, 0.0)
            mean_speed = sum(b.speed_mph for b in mine) / n
            mean_wait = sum(self._waiting[b.vehicle_id] for b in mine) / n
            if n >= 2:
                pos = sorted(b.position_m for b in mine)
                mean_dist = (pos[-1] - pos[0]) / (n - 1)
            else:
                mean_dist = 0.0
        else:
            mean_speed = mean_wait = mean_dist = 0.0

        vec = [mean_dist, mean_speed, mean_wait, float(n)]
        vec.extend(1.0 if vote == lvl else 0.0 for lvl in PHASE_LEVELS)
        vec.extend(self._dir_onehot)
        return np.array(vec)


def build_features(bsm_seconds, phase_log, segment: Segment,
                   vote_window_s: int = PHASE_VOTE_WINDOW_S) -> np.ndarray:
    """Feature matrix (seconds x features) for a window of per-second BSM
    snapshots and the matching upstream phase log."""
    if len(bsm_seconds) < 1:
        raise ValueError("window must cover at least one second")
    if len(phase_log) != len(bsm_seconds):
        raise ValueError("phase log and BSM window lengths differ")
    builder = FeatureBuilder(segment, vote_window_s)
    return np.stack([
        builder.update(bsms, phase) for bsms, phase in zip(bsm_seconds, phase_log)
    ])


# -- model -----------------------------------------------------------------


@dataclass
class LstmModel:
    params: dict[str, np.ndarray]
    hidden: int
    lookback: int
    input_dim: int
    batch_size: int
    feature_mean: np.ndarray
    feature_std: np.ndarray
    label_mean: float = 0.0
    label_std: float = 1.0
    val_rmse: float = float("nan")
    epochs_trained: int = 0
    meta: dict = field(default_factory=dict)


def forward(model: LstmModel, feature_sequence: np.ndarray) -> float:
    """Predicted total count for the next second, clamped at zero."""
    seq = np.asarray(feature_sequence, dtype=float)
    if seq.shape != (model.lookback, model.input_dim):
        raise ValueError(
            f"expected sequence shape {(model.lookback, model.input_dim)}, "
            f"got {seq.shape}"
        )
    z = (seq - model.feature_mean) / model.feature_std
    y, _ = forward_batch(model.params, z[None, :, :])
    return max(0.0, float(y[0]) * model.label_std + model.label_mean)


def predict_batch(model: LstmModel, sequences: np.ndarray) -> np.ndarray:
    z = (sequences - model.feature_mean) / model.feature_std
    y, _ = forward_batch(model.params, z)
    return np.maximum(y * model.label_std + model.label_mean, 0.0)


# -- metrics ----------------------------------------------------------------


def rmse(actual, predicted) -> float:
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape or a.size == 0:
        raise ValueError("sequences must be non-empty and equally long")
    return float(np.sqrt(np.mean((a - p) ** 2)))


def required_samples(sigma: float, tolerance: float, z_alpha: float = 1.96) -> int:
    """Sample size for estimating a mean within `tolerance` at 95% confidence."""
    if tolerance <= 0:
        raise ValueError("tolerance must be > 0")
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return max(1, math.ceil((z_alpha * sigma / tolerance) ** 2))


# -- dataset ----------------------------------------------------------------


def make_windows(features: np.ndarray, labels: np.ndarray,
                 lookback: int) -> tuple[np.ndarray, np.ndarray]:
    """Sliding lookback windows over one contiguous per-segment series."""
    n = len(labels)
    if n < lookback:
        return (np.empty((0, lookback, features.shape[1])), np.empty(0))
    idx = np.arange(lookback - 1, n)
    x = np.stack([features[i - lookback + 1:i + 1] for i in idx])
    y = labels[idx]
    return x, y


def write_dataset(path, rows) -> None:
    """Per-second dataset rows: (time_s, segment_id, features..., label)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time_s", "segment_id", *FEATURE_NAMES, "label"])
        for t, seg_id, feats, label in rows:
            w.writerow([f"{t:.1f}", seg_id, *[f"{v:.6g}" for v in feats], f"{label:.6g}"])


def read_dataset(path):
    """Returns {segment_id: (features array, labels array)} keyed series."""
    series: dict[str, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            feats = [float(row[name]) for name in FEATURE_NAMES]
            series.setdefault(row["segment_id"], []).append((feats, float(row["label"])))
    out = {}
    for seg_id, items in series.items():
        out[seg_id] = (np.array([f for f, _ in items]), np.array([l for _, l in items]))
    return out


# -- training ----------------------------------------------------------------

DEFAULT_GRID = ({"hidden": 10}, {"hidden": 20}, {"hidden": 50})
DEFAULT_BATCHES = (32, 64)


def _train_one(x_train, y_train_z, x_val, y_val, y_mean, y_std, hidden,
               batch_size, nadam_cfg, seed, max_epochs, patience):
    params = init_params(x_train.shape[2], hidden, seed)
    state = NadamState()
    rng = np.random.default_rng([seed, 7])
    n = len(x_train)
    best_rmse = float("inf")
    best_params = None
    best_epoch = 0
    stale = 0
    for epoch in range(max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            sel = order[start:start + batch_size]
            _, grads = loss_and_gradients(params, x_train[sel], y_train_z[sel])
            nadam_step(params, grads, state, nadam_cfg)
        val_pred, _ = forward_batch(params, x_val)
        val_rmse = rmse(y_val, np.maximum(val_pred * y_std + y_mean, 0.0))
        if val_rmse < best_rmse - 1e-9:
            best_rmse = val_rmse
            best_params = {k: v.copy() for k, v in params.items()}
            best_epoch = epoch + 1
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return best_params, best_rmse, best_epoch


def train(x: np.ndarray, y: np.ndarray, *, lookback: int = DEFAULT_LOOKBACK,
          grid=DEFAULT_GRID, batch_sizes=DEFAULT_BATCHES,
          nadam: NadamConfig | None = None, seed: int = 0,
          max_epochs: int = 50, patience: int = 5,
          val_fraction: float = 0.3) -> LstmModel:
    """Grid-train candidate models and return the lowest-validation-RMSE one.

    `x` holds lookback windows (n, lookback, features); `y` the next-second
    totals. 70% of the windows train, 30% validate; the split and every
    weight initialization derive from `seed`, so training is reproducible.
    """
    if len(x) == 0:
        raise ValueError("empty dataset")
    if len(x) != len(y):
        raise ValueError("features and labels differ in length")
    nadam_cfg = nadam or NadamConfig()
    split_rng = np.random.default_rng([seed, 13])
    order = split_rng.permutation(len(x))
    n_val = max(1, int(round(val_fraction * len(x))))
    if n_val >= len(x):
        n_val = len(x) - 1 if len(x) > 1 else 1
    val_idx, train_idx = order[:n_val], order[n_val:]
    if len(train_idx) == 0:
        train_idx = val_idx
    x_train_raw, y_train = x[train_idx], y[train_idx]
    x_val_raw, y_val = x[val_idx], y[val_idx]

    mean = x_train_raw.reshape(-1, x.shape[2]).mean(axis=0)
    std = x_train_raw.reshape(-1, x.shape[2]).std(axis=0)
    std[std < 1e-8] = 1.0
    x_train = (x_train_raw - mean) / std
    x_val = (x_val_raw - mean) / std
    y_mean = float(y_train.mean())
    y_std = float(y_train.std())
    if y_std < 1e-8:
        y_std = 1.0
    y_train_z = (y_train - y_mean) / y_std

    best = None
    grid_results = []
    for ci, cand in enumerate(grid):
        for bj, batch in enumerate(batch_sizes):
            params, val_rmse, epochs = _train_one(
                x_train, y_train_z, x_val, y_val, y_mean, y_std, cand["hidden"],
                batch, nadam_cfg, seed * 10007 + ci * 101 + bj, max_epochs, patience,
            )
            grid_results.append([cand["hidden"], batch, val_rmse])
            if best is None or val_rmse < best[0]:
                best = (val_rmse, params, cand["hidden"], batch, epochs)
    val_rmse, params, hidden, batch, epochs = best
    return LstmModel(
        params=params,
        hidden=hidden,
        lookback=lookback,
        input_dim=x.shape[2],
        batch_size=batch,
        feature_mean=mean,
        feature_std=std,
        label_mean=y_mean,
        label_std=y_std,
        val_rmse=val_rmse,
        epochs_trained=epochs,
        meta={"grid_results": grid_results},
    )


# -- checkpoints --------------------------------------------------------------


def save_model(path, model: LstmModel) -> None:
    meta = {
        "hidden": model.hidden,
        "lookback": model.lookback,
        "input_dim": model.input_dim,
        "batch_size": model.batch_size,
        "label_mean": model.label_mean,
        "label_std": model.label_std,
        "val_rmse": model.val_rmse,
        "epochs_trained": model.epochs_trained,
        "feature_names": list(FEATURE_NAMES),
        **model.meta,
    }
    np.savez(
        path,
        meta=json.dumps(meta),
        feature_mean=model.feature_mean,
        feature_std=model.feature_std,
        **{f"param_{k}": v for k, v in model.params.items()},
    )


def load_model(path) -> LstmModel:
    data = np.load(path, allow_pickle=False)
    meta = json.loads(str(data["meta"]))
    params = {k[len("param_"):]: data[k] for k in data.files if k.startswith("param_")}
    return LstmModel(
        params=params,
        hidden=int(meta["hidden"]),
        lookback=int(meta["lookback"]),
        input_dim=int(meta["input_dim"]),
        batch_size=int(meta["batch_size"]),
        feature_mean=data["feature_mean"],
        feature_std=data["feature_std"],
        label_mean=float(meta.get("label_mean", 0.0)),
        label_std=float(meta.get("label_std", 1.0)),
        val_rmse=float(meta["val_rmse"]),
        epochs_trained=int(meta["epochs_trained"]),
        meta={k: v for k, v in meta.items() if k not in {
            "hidden", "lookback", "input_dim", "batch_size", "label_mean",
            "label_std", "val_rmse", "epochs_trained", "feature_names"}},
    )
