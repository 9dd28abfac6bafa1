"""Analytic synthetic scenes: closed-form depth, flow, and texture.

Geometry is restricted to planes and spheres under known camera motion so
every ground-truth quantity (depth, backward/forward flow, point maps,
occlusion) has a closed form — no renderer error enters tolerance budgets.

Poses are world-to-camera: X_cam = R @ X_world + t. The camera looks down
its +Z axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Intrinsics, pixel_centers
from .grid import inside_bounds

OCCLUSION_TOL = 1e-4  # meters


@dataclass(frozen=True)
class Plane:
    """World-space plane {X : normal . X = offset}; normal need not be unit."""

    normal: tuple[float, float, float]
    offset: float

    kind = "plane"


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float

    kind = "sphere"

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError(f"sphere radius must be positive, got {self.radius}")


def fronto_parallel_plane(depth: float) -> Plane:
    """Plane z = depth in world coordinates (fronto-parallel to an identity pose)."""
    return Plane(normal=(0.0, 0.0, 1.0), offset=depth)


@dataclass(frozen=True)
class Pose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray  # (3, 3)
    translation: np.ndarray  # (3,)

    @property
    def camera_center(self) -> np.ndarray:
        """Camera center in world coordinates, -R^T t."""
        return -self.rotation.T @ self.translation

    @staticmethod
    def from_center(center, rotation=None) -> "Pose":
        r = np.eye(3) if rotation is None else np.asarray(rotation, dtype=np.float64)
        c = np.asarray(center, dtype=np.float64)
        return Pose(rotation=r, translation=-r @ c)


def linear_trajectory(start, step, frames: int) -> list[Pose]:
    """Identity-rotation poses with camera centers start + i * step."""
    start = np.asarray(start, dtype=np.float64)
    step = np.asarray(step, dtype=np.float64)
    return [Pose.from_center(start + i * step) for i in range(frames)]


def roll_trajectory(center, angles) -> list[Pose]:
    """Poses rotating about the optical (+Z) axis at a fixed camera center."""
    poses = []
    for a in angles:
        c, s = np.cos(a), np.sin(a)
        r = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        poses.append(Pose.from_center(center, rotation=r))
    return poses


@dataclass
class SceneSpec:
    geometry: Plane | Sphere
    trajectory: list[Pose]
    intrinsics: Intrinsics
    resolution: tuple[int, int]  # (H, W)
    texture_seed: int = 0

    def __post_init__(self):
        if len(self.trajectory) < 2:
            raise ValueError("trajectory needs at least 2 poses")
        h, w = self.resolution
        if h < 1 or w < 1:
            raise ValueError(f"resolution must be positive, got {self.resolution}")

    @property
    def num_frames(self) -> int:
        return len(self.trajectory)


def _ray_directions(spec: SceneSpec, pose: Pose) -> tuple[np.ndarray, np.ndarray]:
    """World-space ray origins (camera center) and directions with unit camera-Z.

    With dir_cam = ((u-cx)/fx, (v-cy)/fy, 1), the ray parameter s at a hit
    equals the camera-space depth Z directly.
    """
    h, w = spec.resolution
    k = spec.intrinsics
    u, v = pixel_centers(h, w)
    dir_cam = np.stack([(u - k.cx) / k.fx, (v - k.cy) / k.fy, np.ones_like(u)], axis=2)
    dir_world = dir_cam @ pose.rotation  # == (R^T @ d) per pixel
    return pose.camera_center, dir_world


def _intersect(geometry, origin: np.ndarray, dirs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First positive ray parameter per pixel and a hit mask."""
    if isinstance(geometry, Plane):
        n = np.asarray(geometry.normal, dtype=np.float64)
        denom = dirs @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            s = (geometry.offset - origin @ n) / denom
        hit = (np.abs(denom) > 1e-12) & (s > 0)
        return np.where(hit, s, 0.0), hit
    if isinstance(geometry, Sphere):
        c = np.asarray(geometry.center, dtype=np.float64)
        oc = origin - c
        a = np.sum(dirs * dirs, axis=2)
        b = 2.0 * (dirs @ oc)
        c0 = float(oc @ oc) - geometry.radius ** 2
        disc = b * b - 4.0 * a * c0
        hit = disc >= 0
        sq = np.sqrt(np.where(hit, disc, 0.0))
        s_near = (-b - sq) / (2.0 * a)
        s_far = (-b + sq) / (2.0 * a)
        # Nearest intersection in front of the camera (far root if inside).
        s = np.where(s_near > 0, s_near, s_far)
        hit = hit & (s > 0)
        return np.where(hit, s, 0.0), hit
    raise TypeError(f"unsupported geometry {type(geometry).__name__}")


def render_depth(spec: SceneSpec, frame: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel camera-space depth and validity (rays that hit the geometry).

    Missed pixels carry depth 0 and are flagged invalid.
    """
    pose = spec.trajectory[frame]
    origin, dirs = _ray_directions(spec, pose)
    s, hit = _intersect(spec.geometry, origin, dirs)
    return s.astype(np.float32)[:, :, None], hit


def hit_points_world(spec: SceneSpec, frame: int) -> tuple[np.ndarray, np.ndarray]:
    """World-space intersection points per pixel, (H, W, 3) float64, plus hit mask."""
    pose = spec.trajectory[frame]
    origin, dirs = _ray_directions(spec, pose)
    s, hit = _intersect(spec.geometry, origin, dirs)
    return origin + s[:, :, None] * dirs, hit


def render_flow(spec: SceneSpec, frame_from: int, frame_to: int
                ) -> tuple[np.ndarray, np.ndarray]:
    """Backward flow on frame_to's grid pointing into frame_from.

    For each pixel of frame_to, its world point is re-projected into
    frame_from; flow = source - destination pixel coordinates. Pixels are
    invalid when the ray misses, the point sits behind frame_from's camera,
    re-projects out of bounds, or is occluded in frame_from (exact ray test
    with a 1e-4 m depth tolerance).
    """
    h, w = spec.resolution
    k = spec.intrinsics
    pose_from = spec.trajectory[frame_from]
    points, hit = hit_points_world(spec, frame_to)

    p_from = points @ pose_from.rotation.T + pose_from.translation
    z_from = p_from[:, :, 2]
    valid = hit & (z_from > 0)

    with np.errstate(divide="ignore", invalid="ignore"):
        u_src = k.fx * p_from[:, :, 0] / z_from + k.cx
        v_src = k.fy * p_from[:, :, 1] / z_from + k.cy
    u_dst, v_dst = pixel_centers(h, w)
    flow = np.stack([u_src - u_dst, v_src - v_dst], axis=2)
    flow = np.where(valid[:, :, None], flow, 0.0).astype(np.float32)

    valid &= inside_bounds(u_src - 0.5, v_src - 0.5, h, w)

    # Occlusion: cast the exact ray from frame_from through the point and
    # compare first-hit depth against the point's depth.
    origin = pose_from.camera_center
    dirs = (points - origin) / np.where(z_from == 0, 1.0, z_from)[:, :, None]
    s_first, hit_from = _intersect(spec.geometry, origin, dirs)
    occluded = hit_from & (s_first < z_from - OCCLUSION_TOL)
    valid &= ~occluded
    return flow, valid


def render_rgb(spec: SceneSpec, frame: int) -> np.ndarray:
    """Procedural texture in [0, 1] attached to world coordinates.

    A seeded sum of low-frequency sinusoids of the hit point, so texture
    moves exactly with the geometry under camera motion. Missed rays render
    mid-gray.
    """
    points, hit = hit_points_world(spec, frame)
    rng = np.random.default_rng(spec.texture_seed)
    h, w = spec.resolution
    out = np.empty((h, w, 3), dtype=np.float64)
    for ch in range(3):
        waves = 4
        freq = rng.uniform(-1.5, 1.5, size=(waves, 3))
        phase = rng.uniform(0.0, 2.0 * np.pi, size=waves)
        amp = rng.uniform(0.5, 1.0, size=waves)
        acc = np.zeros((h, w), dtype=np.float64)
        for j in range(waves):
            acc += amp[j] * np.sin(points @ freq[j] + phase[j])
        out[:, :, ch] = 0.5 + 0.5 * acc / np.sum(amp)
    out[~hit] = 0.5
    return out.astype(np.float32)


def camera_offset(spec: SceneSpec, frame_from: int, frame_to: int) -> np.ndarray:
    """frame_from's camera center expressed in frame_to's camera coordinates.

    Subtracting this from frame_to's point map yields vectors whose norms
    are distances from frame_from's camera — the exact translation the
    median-based compensation estimates.
    """
    pose_to = spec.trajectory[frame_to]
    c_from = spec.trajectory[frame_from].camera_center
    return pose_to.rotation @ c_from + pose_to.translation


# ---------------------------------------------------------------------------
# JSON (de)serialization for the CLI.

def scene_to_dict(spec: SceneSpec) -> dict:
    g = spec.geometry
    if isinstance(g, Plane):
        geom = {"kind": "plane", "normal": list(g.normal), "offset": g.offset}
    else:
        geom = {"kind": "sphere", "center": list(g.center), "radius": g.radius}
    k = spec.intrinsics
    return {
        "geometry": geom,
        "trajectory": [{"rotation": p.rotation.reshape(-1).tolist(),
                        "translation": p.translation.tolist()}
                       for p in spec.trajectory],
        "intrinsics": {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy},
        "resolution": list(spec.resolution),
        "texture_seed": spec.texture_seed,
    }


def scene_from_dict(d: dict) -> SceneSpec:
    try:
        geom_d = d["geometry"]
        kind = geom_d["kind"]
        if kind == "plane":
            geometry = Plane(normal=tuple(geom_d["normal"]), offset=float(geom_d["offset"]))
        elif kind == "sphere":
            geometry = Sphere(center=tuple(geom_d["center"]), radius=float(geom_d["radius"]))
        else:
            raise ValueError(f"unknown geometry kind {kind!r}")
        trajectory = [Pose(rotation=np.asarray(p["rotation"], dtype=np.float64).reshape(3, 3),
                           translation=np.asarray(p["translation"], dtype=np.float64))
                      for p in d["trajectory"]]
        ki = d["intrinsics"]
        intrinsics = Intrinsics(fx=float(ki["fx"]), fy=float(ki["fy"]),
                                cx=float(ki["cx"]), cy=float(ki["cy"]))
        resolution = (int(d["resolution"][0]), int(d["resolution"][1]))
        seed = int(d.get("texture_seed", 0))
    except KeyError as e:
        raise ValueError(f"scene spec missing field {e.args[0]!r}") from None
    return SceneSpec(geometry=geometry, trajectory=trajectory,
                     intrinsics=intrinsics, resolution=resolution, texture_seed=seed)
