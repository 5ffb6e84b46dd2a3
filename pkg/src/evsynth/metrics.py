"""Evaluation metrics: Fréchet distance, pose errors, classification scores.

The feature extractor is a fixed random projection of downsampled grayscale
frames, so Fréchet values are only comparable between runs of this toolkit,
never against published numbers from learned feature spaces.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .ppm import resize_bilinear

FEATURE_GRID = 16  # frames are pooled to FEATURE_GRID^2 grayscale pixels


@dataclass(frozen=True)
class FeatureSet:
    features: np.ndarray  # (n, d)

    def __post_init__(self):
        f = np.asarray(self.features, np.float64)
        if f.ndim != 2:
            raise ValueError("features must be a 2-D (n, d) matrix")
        if not np.all(np.isfinite(f)):
            raise ValueError("features must be finite")
        object.__setattr__(self, "features", f)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]


def projection_matrix(d: int, seed: int) -> np.ndarray:
    """Seeded (d, 256) Gaussian projection scaled by 1/sqrt(256)."""
    rng = np.random.default_rng(seed)
    return rng.standard_normal((d, FEATURE_GRID * FEATURE_GRID)) / FEATURE_GRID


def extract_features(frames, d: int = 64, seed: int = 0,
                     projection: np.ndarray | None = None) -> FeatureSet:
    """Downsample frames to 16x16 grayscale, flatten, and project to d dims.

    ``projection`` overrides the seeded matrix (test hook; pass identity to
    get the raw pooled pixels back).
    """
    if len(frames) == 0:
        raise ValueError("empty frame list")
    if projection is None:
        projection = projection_matrix(d, seed)
    rows = []
    for frame in frames:
        channels = frame.channels if hasattr(frame, "channels") else np.asarray(frame)
        gray = channels.mean(axis=2) if channels.ndim == 3 else channels
        if gray.shape != (FEATURE_GRID, FEATURE_GRID):
            gray = resize_bilinear(gray, FEATURE_GRID, FEATURE_GRID)
        rows.append(projection @ gray.ravel())
    return FeatureSet(np.stack(rows))


def _sym_sqrt(mat: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    """Square root of a symmetric PSD matrix via eigendecomposition."""
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    if vals.min() < -tol:
        raise ValueError(f"matrix is indefinite (min eigenvalue {vals.min():.3e})")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def fid(a: FeatureSet, b: FeatureSet) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The cross term uses the similarity transform (S_a^1/2 S_b S_a^1/2)^1/2,
    which keeps the product symmetric PSD up to round-off.
    """
    if a.d != b.d:
        raise ValueError(f"feature dimension mismatch {a.d} vs {b.d}")
    if a.n < 2 or b.n < 2:
        raise ValueError("need at least 2 samples per set for covariance")
    mu_a, mu_b = a.features.mean(axis=0), b.features.mean(axis=0)
    cov_a = np.cov(a.features, rowvar=False).reshape(a.d, a.d)
    cov_b = np.cov(b.features, rowvar=False).reshape(b.d, b.d)
    sqrt_a = _sym_sqrt(cov_a)
    cross = _sym_sqrt(sqrt_a @ cov_b @ sqrt_a)
    value = (float((mu_a - mu_b) @ (mu_a - mu_b))
             + float(np.trace(cov_a + cov_b)) - 2.0 * float(np.trace(cross)))
    return max(value, 0.0)


@dataclass(frozen=True)
class PoseSet:
    """Aligned prediction/truth joint arrays, 2-D pixels or 3-D millimeters."""

    joints: np.ndarray  # (frames, joints, 2 or 3)
    visible: np.ndarray | None = None  # (frames, joints) bool, default all

    def __post_init__(self):
        j = np.asarray(self.joints, np.float64)
        if j.ndim != 3 or j.shape[2] not in (2, 3):
            raise ValueError(f"joints must be (F, J, 2|3), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("joint coordinates must be finite")
        vis = (np.ones(j.shape[:2], bool) if self.visible is None
               else np.asarray(self.visible, bool))
        if vis.shape != j.shape[:2]:
            raise ValueError("visibility shape must match (frames, joints)")
        object.__setattr__(self, "joints", j)
        object.__setattr__(self, "visible", vis)


def _joint_errors(pred: PoseSet, truth: PoseSet) -> np.ndarray:
    if pred.joints.shape != truth.joints.shape:
        raise ValueError(f"shape mismatch {pred.joints.shape} vs {truth.joints.shape}")
    vis = pred.visible & truth.visible
    if not vis.any():
        raise ValueError("no visible joints to evaluate")
    dists = np.linalg.norm(pred.joints - truth.joints, axis=2)
    return dists[vis]


def mpjpe(pred: PoseSet, truth: PoseSet) -> float:
    """Mean Euclidean joint error over frames and visible joints."""
    return float(_joint_errors(pred, truth).mean())


def ap_at(pred: PoseSet, truth: PoseSet, fraction: float, image_height: int) -> float:
    """Percentage of visible joints within fraction * image height."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError("fraction must lie in (0, 1]")
    errors = _joint_errors(pred, truth)
    return float((errors <= fraction * image_height).mean() * 100.0)


def pve(pred_vertices: np.ndarray, truth_vertices: np.ndarray) -> float:
    """Mean per-vertex Euclidean error in millimeters."""
    p = np.asarray(pred_vertices, np.float64)
    g = np.asarray(truth_vertices, np.float64)
    if p.shape != g.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {g.shape}")
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(g))):
        raise ValueError("vertices must be finite")
    return float(np.linalg.norm(p - g, axis=-1).mean())


def pck_at(pred: PoseSet, truth: PoseSet, mm: float) -> float:
    """Percentage of visible joints with error strictly below mm."""
    if mm <= 0:
        raise ValueError("threshold must be > 0")
    errors = _joint_errors(pred, truth)
    return float((errors < mm).mean() * 100.0)


def auc_pck(pred: PoseSet, truth: PoseSet, mm_max: float = 100.0,
            step: float = 1.0) -> float:
    """Mean of pck_at over thresholds {step, 2 step, ..., mm_max}."""
    if not 0 < step < mm_max:
        raise ValueError("need 0 < step < mm_max")
    thresholds = np.arange(step, mm_max + step / 2, step)
    return float(np.mean([pck_at(pred, truth, float(mm)) for mm in thresholds]))


def classification_scores(pred_labels, true_labels) -> tuple[float, float]:
    """(accuracy %, macro precision %); zero-prediction classes count as 0."""
    if len(pred_labels) != len(true_labels):
        raise ValueError("label list length mismatch")
    if not pred_labels:
        raise ValueError("empty label lists")
    pred = list(pred_labels)
    true = list(true_labels)
    accuracy = sum(p == t for p, t in zip(pred, true)) / len(pred) * 100.0
    classes = sorted(set(true) | set(pred))
    precisions = []
    for c in classes:
        predicted_c = sum(p == c for p in pred)
        if predicted_c == 0:
            precisions.append(0.0)
        else:
            correct_c = sum(p == c and t == c for p, t in zip(pred, true))
            precisions.append(correct_c / predicted_c * 100.0)
    return accuracy, float(np.mean(precisions))


def write_metrics_csv(metrics: dict[str, float], path) -> None:
    with open(path, "w") as f:
        f.write("metric,value\n")
        for name, value in metrics.items():
            f.write(f"{name},{value!r}\n")


def format_metrics_table(metrics: dict[str, float]) -> str:
    width = max(len(k) for k in metrics) if metrics else 0
    lines = [f"{name.ljust(width)}  {value:.6g}" for name, value in metrics.items()]
    return "\n".join(lines)
