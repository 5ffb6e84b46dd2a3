"""Condition signals for generation: class text, 2D skeleton maps, normal maps.

Text embeds through a deterministic hashed bag-of-tokens (stand-in for a
learned text encoder), skeletons rasterize to single-channel control images,
and capsule bodies ray-cast to RGB-encoded normal maps.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .ppm import read_ppm, resize_bilinear

PROMPT_PREFIX = "A photo of "
POSE_PROMPT = "A moving human"

# 13-joint layout: head, shoulders, elbows, wrists, hips, knees, ankles
DEFAULT_JOINT_NAMES = (
    "head",
    "l_shoulder", "r_shoulder",
    "l_elbow", "r_elbow",
    "l_wrist", "r_wrist",
    "l_hip", "r_hip",
    "l_knee", "r_knee",
    "l_ankle", "r_ankle",
)
DEFAULT_BONES = (
    (0, 1), (0, 2),          # head to shoulders
    (1, 3), (3, 5),          # left arm
    (2, 4), (4, 6),          # right arm
    (1, 7), (2, 8),          # trunk
    (7, 9), (9, 11),         # left leg
    (8, 10), (10, 12),       # right leg
)


@dataclass(frozen=True)
class Condition:
    """Tagged conditioning variant fed to the denoiser."""

    kind: str  # "class_text" | "skeleton" | "normal_map" | "unconditional"
    prompt: str | None = None
    embedding: np.ndarray | None = None  # (D,)
    control_image: np.ndarray | None = None  # (H, W) or (H, W, 3)

    @staticmethod
    def unconditional() -> "Condition":
        return Condition("unconditional")

    @staticmethod
    def class_text(label: str, dim: int) -> "Condition":
        prompt = format_class_prompt(label)
        return Condition("class_text", prompt=prompt, embedding=embed_text(prompt, dim))

    @staticmethod
    def skeleton(control_image: np.ndarray) -> "Condition":
        return Condition("skeleton", control_image=np.asarray(control_image, np.float64))

    @staticmethod
    def normal_map(control_image: np.ndarray) -> "Condition":
        return Condition("normal_map", control_image=np.asarray(control_image, np.float64))


@dataclass(frozen=True)
class Skeleton2D:
    joints: np.ndarray  # (J, 2) pixel coordinates
    visible: np.ndarray  # (J,) bool
    bones: tuple[tuple[int, int], ...] = DEFAULT_BONES

    def __post_init__(self):
        joints = np.asarray(self.joints, np.float64)
        visible = np.asarray(self.visible, bool)
        if joints.ndim != 2 or joints.shape[1] != 2:
            raise ValueError(f"joints must be (J, 2), got {joints.shape}")
        if len(visible) != len(joints):
            raise ValueError("visible flags must match joint count")
        if not np.all(np.isfinite(joints)):
            raise ValueError("joint coordinates must be finite")
        for a, b in self.bones:
            if not (0 <= a < len(joints) and 0 <= b < len(joints)):
                raise ValueError(f"bone ({a}, {b}) indexes outside {len(joints)} joints")
        object.__setattr__(self, "joints", joints)
        object.__setattr__(self, "visible", visible)


@dataclass(frozen=True)
class Capsule:
    p0: np.ndarray  # camera-space endpoint (3,)
    p1: np.ndarray
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("capsule radius must be > 0")
        object.__setattr__(self, "p0", np.asarray(self.p0, np.float64))
        object.__setattr__(self, "p1", np.asarray(self.p1, np.float64))


@dataclass(frozen=True)
class CapsuleBody:
    capsules: tuple[Capsule, ...]
    focal: float
    principal_point: tuple[float, float]

    def __post_init__(self):
        if not self.capsules:
            raise ValueError("body needs at least one capsule")


def format_class_prompt(label: str) -> str:
    """Prefix a class label with the text-conditioning template."""
    if not label:
        raise ValueError("empty class label")
    return PROMPT_PREFIX + label


def _mix64(h: int) -> int:
    """splitmix64 finalizer; stable across platforms."""
    h &= 0xFFFFFFFFFFFFFFFF
    h = (h ^ (h >> 30)) * 0xBF58476D1CE4E5B9 & 0xFFFFFFFFFFFFFFFF
    h = (h ^ (h >> 27)) * 0x94D049BB133111EB & 0xFFFFFFFFFFFFFFFF
    return h ^ (h >> 31)


def _token_hash(token: str) -> int:
    """FNV-1a over UTF-8 bytes, then splitmix64."""
    h = 0xCBF29CE484222325
    for b in token.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return _mix64(h)


def embed_text(prompt: str, dim: int) -> np.ndarray:
    """Hash tokens into dim signed buckets, sum, and normalize to unit length."""
    if dim < 1:
        raise ValueError("embedding dimension must be >= 1")
    vec = np.zeros(dim, np.float64)
    for token in re.split(r"[^0-9a-z]+", prompt.lower()):
        if not token:
            continue
        h = _token_hash(token)
        bucket = (h >> 1) % dim
        sign = 1.0 if h & 1 else -1.0
        vec[bucket] += sign
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def nearest_label(query: str, seen_labels: list[str], dim: int = 64) -> tuple[str, float]:
    """Closest seen label by cosine similarity of embeddings; first wins ties."""
    if not seen_labels:
        raise ValueError("seen label list is empty")
    q = embed_text(query, dim)
    best_label, best_sim = seen_labels[0], -np.inf
    for label in seen_labels:
        v = embed_text(label, dim)
        denom = np.linalg.norm(q) * np.linalg.norm(v)
        sim = float(q @ v / denom) if denom > 0 else 0.0
        if sim > best_sim:
            best_label, best_sim = label, sim
    return best_label, best_sim


def _dist_to_segment(px, py, a, b):
    """Distance of every pixel center (px, py grids) to segment a-b."""
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        return np.hypot(px - a[0], py - a[1])
    s = ((px - a[0]) * d[0] + (py - a[1]) * d[1]) / dd
    s = np.clip(s, 0.0, 1.0)
    return np.hypot(px - (a[0] + s * d[0]), py - (a[1] + s * d[1]))


def rasterize_skeleton(sk: Skeleton2D, width: int, height: int,
                       bone_width: float = 3.0, joint_radius: float = 4.0) -> np.ndarray:
    """Draw visible bones and joints as a white-on-black (H, W) control image.

    A pixel is lit if its center lies within bone_width/2 of a visible bone
    segment or within joint_radius of a visible joint.
    """
    image = np.zeros((height, width), np.float64)
    px, py = np.meshgrid(np.arange(width, dtype=np.float64),
                         np.arange(height, dtype=np.float64))
    for a_idx, b_idx in sk.bones:
        if sk.visible[a_idx] and sk.visible[b_idx]:
            dist = _dist_to_segment(px, py, sk.joints[a_idx], sk.joints[b_idx])
            image[dist <= bone_width / 2.0] = 1.0
    for j in range(len(sk.joints)):
        if sk.visible[j]:
            dist = np.hypot(px - sk.joints[j, 0], py - sk.joints[j, 1])
            image[dist <= joint_radius] = 1.0
    return image


def _ray_capsule(origin, direction, cap: Capsule):
    """Nearest intersection parameter along the ray, or None."""
    a, b, r = cap.p0, cap.p1, cap.radius
    d = b - a
    dd = float(d @ d)
    best = None

    def consider(t):
        nonlocal best
        if t is not None and t > 1e-9 and (best is None or t < best):
            best = t

    # spherical caps at both endpoints
    for center in (a, b):
        oc = origin - center
        bq = float(direction @ oc)
        cq = float(oc @ oc) - r * r
        disc = bq * bq - cq
        if disc >= 0:
            consider(-bq - np.sqrt(disc))
    # cylindrical side (skip for degenerate sphere capsules)
    if dd > 0:
        ao = origin - a
        k = direction - d * (float(direction @ d) / dd)
        w_vec = ao - d * (float(ao @ d) / dd)
        aq = float(k @ k)
        if aq > 1e-16:
            bq = float(w_vec @ k)
            cq = float(w_vec @ w_vec) - r * r
            disc = bq * bq - aq * cq
            if disc >= 0:
                t = (-bq - np.sqrt(disc)) / aq
                s = (float(ao @ d) + t * float(direction @ d)) / dd
                if 0.0 <= s <= 1.0:
                    consider(t)
    return best


def capsule_normal(point, cap: Capsule) -> np.ndarray:
    """Unit surface normal at a point on the capsule surface."""
    d = cap.p1 - cap.p0
    dd = float(d @ d)
    if dd == 0.0:
        axis_point = cap.p0
    else:
        s = np.clip(float((point - cap.p0) @ d) / dd, 0.0, 1.0)
        axis_point = cap.p0 + s * d
    n = point - axis_point
    return n / np.linalg.norm(n)


def capsule_normal_map(body: CapsuleBody, width: int, height: int) -> np.ndarray:
    """Ray-cast the body and encode nearest-hit normals as (n+1)/2 RGB.

    Pixels that miss every capsule render 0.5-gray.
    """
    cx, cy = body.principal_point
    image = np.full((height, width, 3), 0.5)
    origin = np.zeros(3)
    for py in range(height):
        for px in range(width):
            direction = np.array([(px - cx) / body.focal, (py - cy) / body.focal, 1.0])
            direction /= np.linalg.norm(direction)
            best_t, best_cap = None, None
            for cap in body.capsules:
                t = _ray_capsule(origin, direction, cap)
                if t is not None and (best_t is None or t < best_t):
                    best_t, best_cap = t, cap
            if best_cap is not None:
                n = capsule_normal(origin + best_t * direction, best_cap)
                # scene z points away from the camera; report camera-facing as +z
                image[py, px] = (np.array([n[0], n[1], -n[2]]) + 1.0) / 2.0
    return image


def load_control_image(path, width: int, height: int) -> np.ndarray:
    """Read a P6 control image, normalize to [0,1], and resize bilinearly."""
    image = read_ppm(path)
    if image.shape[:2] != (height, width):
        image = resize_bilinear(image, height, width)
    return np.clip(image, 0.0, 1.0)


def read_skeleton_csv(path):
    """Rows (frame_id, joint_id, x, y, visible) -> {frame_id: Skeleton2D}."""
    import csv

    per_frame: dict[int, dict[int, tuple[float, float, bool]]] = {}
    with open(path, newline="") as f:
        for row in csv.reader(f):
            if not row or row[0].startswith("#") or row[0] == "frame_id":
                continue
            fid, jid = int(row[0]), int(row[1])
            per_frame.setdefault(fid, {})[jid] = (float(row[2]), float(row[3]),
                                                  bool(int(row[4])))
    skeletons = {}
    for fid, joints in per_frame.items():
        n = max(joints) + 1
        coords = np.zeros((n, 2))
        visible = np.zeros(n, bool)
        for jid, (x, y, v) in joints.items():
            coords[jid] = (x, y)
            visible[jid] = v
        bones = DEFAULT_BONES if n == len(DEFAULT_JOINT_NAMES) else ()
        skeletons[fid] = Skeleton2D(coords, visible, bones)
    return skeletons


def read_bone_table(path) -> tuple[tuple[int, int], ...]:
    """Plain-text pairs file: one ``a b`` joint-index pair per line."""
    bones = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            a, b = line.split()
            bones.append((int(a), int(b)))
    return tuple(bones)
