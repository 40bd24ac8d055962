"""Camera model: rigid view transforms, pinhole focal lengths, benchmark paths.

Conventions (see docs/CONVENTIONS.md): right-handed world, camera forward is
-z in view space, square pixels. View matrices are built in float32 with a
fixed operation order so every implementation reproduces them bit for bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

MIN_FOV_Y = 1e-4  # radians; below this the focal length blows up


class DegenerateFrame(ValueError):
    """look_at frame collapsed: zero forward or up parallel to forward."""


class IndexOutOfRange(IndexError):
    """Frame index outside [0, frame_count)."""


class InvalidCamera(ValueError):
    """Camera field violates an invariant."""


class PathFormatError(ValueError):
    """Camera path JSON is malformed or missing fields."""


@dataclass(frozen=True, eq=False)
class Camera:
    """World-to-view rigid transform plus pinhole intrinsics."""

    view: np.ndarray          # (4, 4) float32, world -> view, forward = -z
    fov_y: float              # radians
    width: int
    height: int
    near: float = 0.1
    far: float = 1000.0

    def __post_init__(self):
        view = np.asarray(self.view, np.float32)
        if view.shape != (4, 4):
            raise InvalidCamera(f"view must be 4x4, got {view.shape}")
        view.setflags(write=False)
        object.__setattr__(self, "view", view)
        if not (0 < self.near < self.far):
            raise InvalidCamera(f"need 0 < near < far, got "
                                f"near={self.near} far={self.far}")
        if self.width < 1 or self.height < 1:
            raise InvalidCamera("viewport dims must be >= 1")
        if not (self.fov_y >= MIN_FOV_Y):
            raise InvalidCamera(f"fov_y {self.fov_y} below {MIN_FOV_Y}")
        r = view[:3, :3].astype(np.float64)
        if not np.allclose(r @ r.T, np.eye(3), atol=1e-5):
            raise InvalidCamera("view rotation block is not orthonormal")

    @property
    def eye(self) -> np.ndarray:
        """Camera position in world space, float32."""
        r = self.view[:3, :3]
        return (-(r.T @ self.view[:3, 3])).astype(np.float32)


def focal(camera: Camera) -> tuple[float, float]:
    """Pixel focal lengths (fx, fy); fy = height / (2 tan(fov_y / 2)), fx = fy."""
    fy = camera.height / (2.0 * math.tan(0.5 * camera.fov_y))
    return fy, fy


def _dot3(a: np.ndarray, b: np.ndarray) -> np.float32:
    # left-to-right accumulation, each step rounded to float32
    return (a[0] * b[0] + a[1] * b[1]) + a[2] * b[2]


def _normalize32(v: np.ndarray, what: str) -> np.ndarray:
    n = np.float32(np.sqrt(_dot3(v, v)))
    if n < np.float32(1e-12):
        raise DegenerateFrame(f"{what} has zero length")
    return v / n


def _cross32(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # elementwise so each product/difference rounds to float32 individually
    return np.float32([a[1] * b[2] - a[2] * b[1],
                       a[2] * b[0] - a[0] * b[2],
                       a[0] * b[1] - a[1] * b[0]])


def look_at(position, target, up, fov_y: float, width: int, height: int,
            near: float = 0.1, far: float = 1000.0) -> Camera:
    """Rigid view transform placing target on the -z axis of view space."""
    position = np.asarray(position, np.float32)
    target = np.asarray(target, np.float32)
    up = np.asarray(up, np.float32)
    forward = _normalize32(target - position, "forward (position == target?)")
    right = _cross32(forward, up)
    n = np.float32(np.sqrt(_dot3(right, right)))
    if n < np.float32(1e-6):
        raise DegenerateFrame("up is parallel to the view direction")
    right = right / n
    true_up = _cross32(right, forward)

    view = np.eye(4, dtype=np.float32)
    view[0, :3] = right
    view[1, :3] = true_up
    view[2, :3] = -forward
    view[0, 3] = -_dot3(right, position)
    view[1, 3] = -_dot3(true_up, position)
    view[2, 3] = _dot3(forward, position)
    return Camera(view, fov_y, width, height, near, far)


# --- benchmark paths ---------------------------------------------------------

@dataclass(frozen=True)
class Keyframe:
    position: tuple
    target: tuple
    up: tuple
    fov_y: float  # radians


@dataclass(frozen=True)
class CameraPath:
    keyframes: tuple        # of Keyframe
    frame_count: int

    def __post_init__(self):
        if len(self.keyframes) < 1:
            raise PathFormatError("path needs at least one keyframe")
        if self.frame_count < 1:
            raise PathFormatError("frame_count must be >= 1")


def sample_path(path: CameraPath, frame_index: int, width: int, height: int,
                near: float = 0.1, far: float = 1000.0) -> Camera:
    """Pose at frame_index: linear in position/target/fov, up renormalized.

    Interpolation runs in float64 (t = index/(frames-1) mapped across the
    keyframe polyline); the view matrix is then built in float32 by look_at.
    """
    if not (0 <= frame_index < path.frame_count):
        raise IndexOutOfRange(f"frame {frame_index} outside "
                              f"[0, {path.frame_count})")
    keys = path.keyframes
    if len(keys) == 1 or path.frame_count == 1:
        k = keys[0]
        return look_at(k.position, k.target, k.up, k.fov_y,
                       width, height, near, far)
    t = frame_index / (path.frame_count - 1)
    s = t * (len(keys) - 1)
    i = min(int(math.floor(s)), len(keys) - 2)
    u = s - i
    a, b = keys[i], keys[i + 1]

    def lerp3(p, q):
        return tuple(p[c] + (q[c] - p[c]) * u for c in range(3))

    return look_at(lerp3(a.position, b.position),
                   lerp3(a.target, b.target),
                   lerp3(a.up, b.up),
                   a.fov_y + (b.fov_y - a.fov_y) * u,
                   width, height, near, far)


def path_from_json(text: str) -> CameraPath:
    """Parse the camera path JSON format (fov in degrees on disk)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise PathFormatError(f"not valid JSON: {e}") from None
    if not isinstance(doc, dict):
        raise PathFormatError("top level must be an object")
    try:
        frame_count = doc["frame_count"]
        raw_keys = doc["keyframes"]
    except KeyError as e:
        raise PathFormatError(f"missing field {e.args[0]!r}") from None
    if not isinstance(frame_count, int) or isinstance(frame_count, bool):
        raise PathFormatError("frame_count must be an integer")
    if not isinstance(raw_keys, list):
        raise PathFormatError("keyframes must be a list")
    keys = []
    for i, k in enumerate(raw_keys):
        try:
            pos, tgt, up = k["position"], k["target"], k["up"]
            fov_deg = k["fov_y_deg"]
        except (TypeError, KeyError):
            raise PathFormatError(f"keyframe {i} missing a field") from None
        for name, v in (("position", pos), ("target", tgt), ("up", up)):
            if (not isinstance(v, list) or len(v) != 3
                    or not all(isinstance(c, (int, float)) for c in v)):
                raise PathFormatError(f"keyframe {i}: {name} must be [x,y,z]")
        if not isinstance(fov_deg, (int, float)) or isinstance(fov_deg, bool):
            raise PathFormatError(f"keyframe {i}: fov_y_deg must be a number")
        keys.append(Keyframe(tuple(float(c) for c in pos),
                             tuple(float(c) for c in tgt),
                             tuple(float(c) for c in up),
                             math.radians(float(fov_deg))))
    return CameraPath(tuple(keys), frame_count)


def path_to_json(path: CameraPath) -> str:
    doc = {
        "frame_count": path.frame_count,
        "keyframes": [
            {"position": list(k.position), "target": list(k.target),
             "up": list(k.up), "fov_y_deg": math.degrees(k.fov_y)}
            for k in path.keyframes
        ],
    }
    return json.dumps(doc, indent=2)
