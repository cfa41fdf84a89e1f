"""Synthetic paired 2D/3D hand keypoints from a 21-joint kinematic model.

Joint ordering (converters from other datasets must remap to this)::

    0            palm root
    1  2  3  4   thumb   base -> tip
    5  6  7  8   index   base -> tip
    9 10 11 12   middle  base -> tip
   13 14 15 16   ring    base -> tip
   17 18 19 20   pinky   base -> tip

The hand frame of a right hand has x pointing to the thumb side, y along the
extended fingers and z out of the back of the hand. Lengths are millimetres.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegeneratePoseError, FormatError, JointLimitError

N_JOINTS = 21
N_FINGERS = 5
FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
PALM = 0
MIDDLE_BASE = 9
# index of the first global DOF that is a translation
N_GLOBAL = 6
N_DOF = N_GLOBAL + 4 * N_FINGERS

PARENTS = (-1,) + tuple(
    0 if k == 0 else 1 + 4 * f + k - 1 for f in range(N_FINGERS) for k in range(4)
)


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


# (base direction, base length, phalanx direction, phalanx lengths)
_FINGER_GEOMETRY = (
    ((1.0, -0.3, 0.0), 28.0, (0.7, 0.7, -0.3), (35.0, 30.0, 25.0)),
    ((0.35, 1.0, 0.0), 45.0, (0.12, 1.0, 0.0), (40.0, 25.0, 20.0)),
    ((0.0, 1.0, 0.0), 45.0, (0.0, 1.0, 0.0), (45.0, 28.0, 22.0)),
    ((-0.3, 1.0, 0.0), 43.0, (-0.1, 1.0, 0.0), (42.0, 27.0, 21.0)),
    ((-0.6, 1.0, 0.0), 40.0, (-0.25, 1.0, 0.0), (33.0, 20.0, 18.0)),
)


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def global_rotation(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Root orientation ``Rz(roll) @ Rx(pitch) @ Ry(yaw)``; roll spins about the optical axis."""
    return rot_z(roll) @ rot_x(pitch) @ rot_y(yaw)


@dataclass(frozen=True)
class HandSkeleton:
    """Tree of 21 joints with one bone per non-root joint.

    ``rest_dirs[j]`` and ``bone_lengths[j]`` describe the bone ending at joint
    ``j`` (row 0 is unused). ``flex_limits`` and ``abd_limits`` are in radians.
    """

    rest_dirs: np.ndarray
    bone_lengths: np.ndarray
    parents: tuple = PARENTS
    flex_limits: tuple = (0.0, math.pi / 2)
    abd_limits: tuple = (-math.radians(15.0), math.radians(15.0))

    @property
    def n_dof(self) -> int:
        return N_DOF

    def limits(self) -> tuple[np.ndarray, np.ndarray]:
        """Lower and upper bound per DOF (global pose unbounded)."""
        lo = np.full(N_DOF, -np.inf)
        hi = np.full(N_DOF, np.inf)
        for f in range(N_FINGERS):
            k = N_GLOBAL + 4 * f
            lo[k], hi[k] = self.abd_limits
            lo[k + 1 : k + 4], hi[k + 1 : k + 4] = self.flex_limits
        return lo, hi

    def bones(self) -> list[tuple[int, int]]:
        return [(self.parents[j], j) for j in range(1, N_JOINTS)]


def default_skeleton() -> HandSkeleton:
    dirs = np.zeros((N_JOINTS, 3))
    lengths = np.zeros(N_JOINTS)
    for f, (base_dir, base_len, phal_dir, phal_lens) in enumerate(_FINGER_GEOMETRY):
        j = 1 + 4 * f
        dirs[j] = _unit(base_dir)
        lengths[j] = base_len
        for k in range(3):
            dirs[j + 1 + k] = _unit(phal_dir)
            lengths[j + 1 + k] = phal_lens[k]
    return HandSkeleton(rest_dirs=dirs, bone_lengths=lengths)


def _finger_frame(phalanx_dir: np.ndarray) -> np.ndarray:
    # columns: flexion axis, bone direction, dorsal normal
    y = phalanx_dir
    z = np.array([0.0, 0.0, 1.0])
    z = z - y * (z @ y)
    z = z / np.linalg.norm(z)
    x = np.cross(y, z)
    return np.stack([x, y, z], axis=1)


def forward_kinematics(
    skel: HandSkeleton,
    angles: Sequence[float],
    handedness: str = "R",
    check_limits: bool = True,
) -> np.ndarray:
    """Joint positions (21 x 3) for a DOF vector.

    ``angles`` layout: roll, pitch, yaw, tx, ty, tz, then per finger
    (abduction, base flexion, middle flexion, distal flexion). Flexion bends
    towards the palm. A left hand is the mirror image of the right hand in
    its own frame.
    """
    a = np.asarray(angles, dtype=np.float64)
    if a.shape != (N_DOF,):
        raise JointLimitError(f"expected {N_DOF} angles, got shape {a.shape}")
    if check_limits:
        lo, hi = skel.limits()
        bad = np.nonzero((a < lo) | (a > hi))[0]
        if bad.size:
            raise JointLimitError(f"angles out of limits at DOF indices {bad.tolist()}")
    if handedness not in ("L", "R"):
        raise ValueError(f"handedness must be 'L' or 'R', got {handedness!r}")

    local = np.zeros((N_JOINTS, 3))
    for f in range(N_FINGERS):
        j = 1 + 4 * f
        local[j] = local[PALM] + skel.bone_lengths[j] * skel.rest_dirs[j]
        frame = _finger_frame(skel.rest_dirs[j + 1])
        abd, *flex = a[N_GLOBAL + 4 * f : N_GLOBAL + 4 * f + 4]
        rot = rot_z(abd)
        for k in range(3):
            rot = rot @ rot_x(-flex[k])
            # rotation expressed in the finger frame keeps the rest pose exact
            step = rot @ np.array([0.0, skel.bone_lengths[j + 1 + k], 0.0])
            local[j + 1 + k] = local[j + k] + frame @ step
    if handedness == "L":
        local[:, 0] = -local[:, 0]
    rot_g = global_rotation(a[0], a[1], a[2])
    return local @ rot_g.T + a[3:6]


@dataclass(frozen=True)
class Camera:
    """Pinhole camera looking down +z; ``hand_distance`` is added to depth before projecting."""

    focal: float = 400.0
    principal: tuple = (160.0, 160.0)
    hand_distance: float = 400.0

    def __post_init__(self):
        if not self.focal > 0:
            raise ValueError("focal length must be positive")
        if self.hand_distance < 0:
            raise ValueError("hand distance must be non-negative")


def project(joints3d, cam: Camera) -> np.ndarray:
    p = np.asarray(joints3d, dtype=np.float64)
    depth = p[..., 2] + cam.hand_distance
    if np.any(depth <= 0):
        raise DegeneratePoseError("joint with non-positive depth cannot be projected")
    u = cam.focal * p[..., 0] / depth + cam.principal[0]
    v = cam.focal * p[..., 1] / depth + cam.principal[1]
    return np.stack([u, v], axis=-1)


def mirror(joints) -> np.ndarray:
    """Reflect keypoints across the x axis (x -> -x); turns a left hand into a right hand."""
    out = np.array(joints, dtype=np.float64)
    out[..., 0] = -out[..., 0]
    return out


def normalize_pose(joints, flags: Iterable[str] = "TS", handedness: str = "R"):
    """Apply the T/S/H normalizations to one pose of 21 keypoints (2D or 3D).

    H mirrors left hands to right hands, T subtracts the palm joint and S
    divides by the palm -> middle-base distance. Returns ``(keypoints, scale)``
    where ``scale`` is the divisor used by S (1.0 when S is off).
    """
    flags = set(flags)
    unknown = flags - {"T", "S", "H"}
    if unknown:
        raise ValueError(f"unknown normalization flags {sorted(unknown)}")
    x = np.array(joints, dtype=np.float64)
    if x.shape[0] != N_JOINTS:
        raise ValueError(f"expected {N_JOINTS} keypoints, got {x.shape[0]}")
    if "H" in flags and handedness == "L":
        x = mirror(x)
    if "T" in flags:
        x = x - x[PALM]
    scale = 1.0
    if "S" in flags:
        scale = float(np.linalg.norm(x[MIDDLE_BASE] - x[PALM]))
        if scale == 0.0:
            raise DegeneratePoseError("reference bone has zero length")
        x = x / scale
    return x, scale


def wrist_to_palm(joints, weight: float = 0.5) -> np.ndarray:
    """Move joint 0 from the wrist towards the middle-finger base (midpoint by default)."""
    x = np.array(joints, dtype=np.float64)
    x[PALM] = (1.0 - weight) * x[PALM] + weight * x[MIDDLE_BASE]
    return x


@dataclass
class PoseSample:
    angles: np.ndarray
    joints3d: np.ndarray  # (21, 3)
    joints2d: np.ndarray  # (21, 2)
    handedness: str = "R"
    labeled: bool = True
    index: int = 0


def make_sample(
    skel: HandSkeleton, cam: Camera, angles, handedness="R", labeled=True, index=0
) -> PoseSample:
    j3 = forward_kinematics(skel, angles, handedness)
    return PoseSample(
        angles=np.asarray(angles, dtype=np.float64),
        joints3d=j3,
        joints2d=project(j3, cam),
        handedness=handedness,
        labeled=labeled,
        index=index,
    )


def augment(
    sample: PoseSample,
    cam: Camera,
    rng: np.random.Generator | None = None,
    angle: float | None = None,
    flip: bool | None = None,
    max_angle: float = math.radians(45.0),
) -> PoseSample:
    """Keypoint-space rotation about the optical axis plus an optional horizontal flip.

    ``angle``/``flip`` override the random draws. Both modalities and the
    DOF vector are transformed consistently, and a flip toggles handedness.
    """
    if angle is None:
        angle = float(rng.uniform(-max_angle, max_angle))
    if flip is None:
        flip = bool(rng.random() < 0.5)

    rot = rot_z(angle)
    j3 = sample.joints3d @ rot.T
    c = np.asarray(cam.principal, dtype=np.float64)
    j2 = (sample.joints2d - c) @ rot[:2, :2].T + c
    ang = sample.angles.copy()
    ang[0] += angle
    ang[3:5] = rot[:2, :2] @ ang[3:5]
    hand = sample.handedness
    if flip:
        j3 = mirror(j3)
        j2 = j2.copy()
        j2[:, 0] = 2.0 * c[0] - j2[:, 0]
        ang[0], ang[2], ang[3] = -ang[0], -ang[2], -ang[3]
        hand = "L" if hand == "R" else "R"
    return replace(sample, angles=ang, joints3d=j3, joints2d=j2, handedness=hand)


@dataclass(frozen=True)
class GeneratorConfig:
    """Sampling ranges for synthetic poses.

    Roll about the optical axis is unrestricted; pitch and yaw are bounded so
    the palm never turns edge-on, which keeps the 2D reference bone from
    collapsing under projection. With ``dip_coupling`` set, each finger's
    distal flexion is that fraction of its middle flexion (the usual
    tendon coupling of real fingers); ``None`` samples it independently.
    """

    max_tilt: float = math.radians(60.0)
    dip_coupling: float | None = 2.0 / 3.0
    max_shift: float = 40.0
    max_depth_jitter: float = 50.0
    left_fraction: float = 0.5
    skeleton: HandSkeleton = field(default_factory=default_skeleton)
    camera: Camera = field(default_factory=Camera)


def sample_angles(rng: np.random.Generator, cfg: GeneratorConfig) -> np.ndarray:
    lo, hi = cfg.skeleton.limits()
    a = np.empty(N_DOF)
    a[0] = rng.uniform(-math.pi, math.pi)
    a[1:3] = rng.uniform(-cfg.max_tilt, cfg.max_tilt, size=2)
    a[3:5] = rng.uniform(-cfg.max_shift, cfg.max_shift, size=2)
    a[5] = rng.uniform(-cfg.max_depth_jitter, cfg.max_depth_jitter)
    a[N_GLOBAL:] = rng.uniform(lo[N_GLOBAL:], hi[N_GLOBAL:])
    if cfg.dip_coupling is not None:
        for f in range(N_FINGERS):
            k = N_GLOBAL + 4 * f
            a[k + 3] = cfg.dip_coupling * a[k + 2]
    return a


def generate_dataset(
    n: int, seed: int, label_fraction: float = 1.0, cfg: GeneratorConfig | None = None
) -> list[PoseSample]:
    """Generate ``n`` samples; sample ``i`` depends only on ``(seed, i)``.

    Exactly ``round(label_fraction * n)`` samples are marked labeled.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < label_fraction <= 1.0:
        raise ValueError("label_fraction must lie in (0, 1]")
    cfg = cfg or GeneratorConfig()
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        angles = sample_angles(rng, cfg)
        hand = "L" if rng.random() < cfg.left_fraction else "R"
        samples.append(make_sample(cfg.skeleton, cfg.camera, angles, hand, True, i))
    return mask_labels(samples, label_fraction, seed)


def mask_labels(samples: list[PoseSample], fraction: float, seed: int) -> list[PoseSample]:
    """Copy of ``samples`` with exactly ``round(fraction * n)`` marked labeled."""
    n = len(samples)
    k = int(round(fraction * n))
    keep = set(np.random.default_rng(seed).permutation(n)[:k].tolist())
    return [replace(s, labeled=i in keep) for i, s in enumerate(samples)]


def _fmt(values) -> str:
    return "[" + ", ".join(format(float(v), ".17g") for v in np.ravel(values)) + "]"


def format_record(s: PoseSample) -> str:
    return (
        f'{{"index": {s.index}, "handedness": "{s.handedness}", '
        f'"labeled": {"true" if s.labeled else "false"}, '
        f'"joints3d": {_fmt(s.joints3d)}, "joints2d": {_fmt(s.joints2d)}, '
        f'"angles": {_fmt(s.angles)}}}'
    )


def write_dataset(path, samples: Sequence[PoseSample]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            fh.write(format_record(s) + "\n")


def parse_record(line: str) -> PoseSample:
    try:
        rec = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"malformed record: {exc}") from exc
    if not isinstance(rec, dict):
        raise FormatError("record is not an object")
    missing = {"index", "handedness", "labeled", "joints3d", "joints2d", "angles"} - rec.keys()
    if missing:
        raise FormatError(f"record lacks fields {sorted(missing)}")
    if rec["handedness"] not in ("L", "R"):
        raise FormatError(f"bad handedness {rec['handedness']!r}")
    if not isinstance(rec["labeled"], bool):
        raise FormatError("labeled must be true/false")
    j3 = np.asarray(rec["joints3d"], dtype=np.float64)
    j2 = np.asarray(rec["joints2d"], dtype=np.float64)
    ang = np.asarray(rec["angles"], dtype=np.float64)
    if j3.shape != (3 * N_JOINTS,) or j2.shape != (2 * N_JOINTS,):
        raise FormatError(f"wrong keypoint arity: joints3d {j3.size}, joints2d {j2.size}")
    if ang.ndim != 1:
        raise FormatError("angles must be a flat list")
    return PoseSample(
        angles=ang,
        joints3d=j3.reshape(N_JOINTS, 3),
        joints2d=j2.reshape(N_JOINTS, 2),
        handedness=rec["handedness"],
        labeled=rec["labeled"],
        index=int(rec["index"]),
    )


def read_dataset(path) -> list[PoseSample]:
    text = Path(path).read_text(encoding="utf-8")
    return [parse_record(line) for line in text.splitlines() if line.strip()]
