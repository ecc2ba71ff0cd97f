"""Deterministic planar rigid-body world for cluttered shelf manipulation.

A kinematic palm-and-two-finger gripper moves among discs and boxes on a
bounded shelf surface. Contacts are resolved with restitution-free impulses
plus Coulomb friction; ground friction brings free objects to rest. All
stepping is fixed-substep float64 arithmetic, so identical inputs give
bit-identical trajectories.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

# ---------------------------------------------------------------------------
# tunable physics constants
# ---------------------------------------------------------------------------
GRAVITY = 9.81                 # m/s^2, sets the ground-friction deceleration
DEFAULT_SUBSTEPS = 10          # physics substeps per control interval
WALL_HALF_THICKNESS = 0.005    # m, walls become thin boxes for impulse purposes
ROBOT_SURFACE_FRICTION = 0.4   # gripper/object friction coefficient
WALL_SURFACE_FRICTION = 0.3    # wall/object friction coefficient
POSITION_CORRECTION = 0.8      # fraction of penetration removed per substep
PENETRATION_SLOP = 1e-5        # m, penetration tolerated before correction
ANGULAR_GROUND_FRICTION = 0.5  # scales the spin-down from ground friction

DEFAULT_GRASP_OFFSET = (0.0625, 0.0)

_TWO_PI = 2.0 * math.pi


class NumericDomainError(ValueError):
    """A state or control contained non-finite components."""


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    return math.pi - (math.pi - theta) % _TWO_PI


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=np.float64), _TWO_PI)


# ---------------------------------------------------------------------------
# scene and state types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObjectSpec:
    """Nominal (undisturbed) description of one movable object.

    shape is "disc" (dims = (radius,)) or "box" (dims = (half_x, half_y));
    pose is the nominal (x, y, theta) on the shelf surface.
    """

    shape: str
    dims: tuple[float, ...]
    mass: float
    friction: float
    pose: tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(float(v) for v in self.dims))
        object.__setattr__(self, "pose", tuple(float(v) for v in self.pose))
        if self.shape not in ("disc", "box"):
            raise ValueError(f"unknown shape {self.shape!r}")
        n_dims = 1 if self.shape == "disc" else 2
        if len(self.dims) != n_dims:
            raise ValueError(f"{self.shape} expects {n_dims} dims, got {self.dims}")
        if any(d <= 0.0 for d in self.dims):
            raise ValueError("shape dimensions must be positive")
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.friction < 0.0:
            raise ValueError("friction must be nonnegative")


@dataclass(frozen=True)
class GripperGeometry:
    """Rigid gripper body: palm plus two fingers, expressed in gripper frame.

    parts holds (offset_x, offset_y, half_x, half_y) boxes; capture is the
    (x_min, x_max, half_y) rectangle between the fingers that counts as a
    successful pre-grasp region. +x is the gripper's forward direction.
    """

    parts: tuple[tuple[float, float, float, float], ...] = (
        (0.0, 0.0, 0.015, 0.06),     # palm bar
        (0.065, 0.05, 0.05, 0.01),   # left finger
        (0.065, -0.05, 0.05, 0.01),  # right finger
    )
    capture: tuple[float, float, float] = (0.02, 0.105, 0.04)

    def __post_init__(self):
        object.__setattr__(
            self, "parts", tuple(tuple(float(v) for v in p) for p in self.parts)
        )
        object.__setattr__(self, "capture", tuple(float(v) for v in self.capture))

    def bound_radius(self) -> float:
        """Radius of a circle around the gripper origin covering every part."""
        r = 0.0
        for ox, oy, hx, hy in self.parts:
            r = max(r, math.hypot(ox, oy) + math.hypot(hx, hy))
        return r


@dataclass(frozen=True)
class SceneDescription:
    """Immutable scene: shelf boundary, static walls, objects, robot start.

    boundary is (x_min, y_min, x_max, y_max); walls are line segments
    ((x1, y1), (x2, y2)); grasp_offset is the goal point G in gripper frame.
    """

    boundary: tuple[float, float, float, float]
    walls: tuple[tuple[tuple[float, float], tuple[float, float]], ...]
    objects: tuple[ObjectSpec, ...]
    robot_start: tuple[float, float, float]
    target_index: int
    grasp_offset: tuple[float, float] = DEFAULT_GRASP_OFFSET
    gripper: GripperGeometry = field(default_factory=GripperGeometry)

    def __post_init__(self):
        object.__setattr__(self, "boundary", tuple(float(v) for v in self.boundary))
        object.__setattr__(
            self,
            "walls",
            tuple(
                (tuple(float(v) for v in a), tuple(float(v) for v in b))
                for a, b in self.walls
            ),
        )
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(
            self, "robot_start", tuple(float(v) for v in self.robot_start)
        )
        object.__setattr__(self, "grasp_offset", tuple(float(v) for v in self.grasp_offset))
        xmin, ymin, xmax, ymax = self.boundary
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("boundary must satisfy x_min < x_max and y_min < y_max")
        if not self.objects:
            raise ValueError("scene needs at least one object")
        if not 0 <= self.target_index < len(self.objects):
            raise ValueError("target_index out of range")

    @property
    def n_objects(self) -> int:
        return len(self.objects)


@dataclass(frozen=True)
class ParameterBounds:
    """Per-object randomization intervals (applied independently per object)."""

    mass: tuple[float, float] = (0.5, 0.8)
    friction: tuple[float, float] = (0.2, 0.4)
    size_scale: tuple[float, float] = (0.95, 1.05)

    def __post_init__(self):
        for name in ("mass", "friction", "size_scale"):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name} bounds need 0 < lower <= upper, got {lo}, {hi}")


@dataclass(frozen=True)
class WorldRealization:
    """One concrete draw of the per-object physical parameters.

    realization_id 0 is reserved for the exact nominal parameter set.
    """

    realization_id: int
    masses: tuple[float, ...]
    frictions: tuple[float, ...]
    size_scales: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(v) for v in self.masses))
        object.__setattr__(self, "frictions", tuple(float(v) for v in self.frictions))
        object.__setattr__(self, "size_scales", tuple(float(v) for v in self.size_scales))
        if not len(self.masses) == len(self.frictions) == len(self.size_scales):
            raise ValueError("per-object parameter tuples must have equal length")


def nominal_realization(scene: SceneDescription) -> WorldRealization:
    """Realization 0: the scene's nominal parameters, bit-exact."""
    return WorldRealization(
        realization_id=0,
        masses=tuple(o.mass for o in scene.objects),
        frictions=tuple(o.friction for o in scene.objects),
        size_scales=tuple(1.0 for _ in scene.objects),
    )


def sample_world_realization(
    scene: SceneDescription,
    bounds: ParameterBounds,
    rng: np.random.Generator,
    realization_id: int = 1,
) -> WorldRealization:
    """Draw each object's (mass, friction, size_scale) uniformly within bounds."""
    masses, frictions, scales = [], [], []
    for _ in scene.objects:
        masses.append(float(rng.uniform(*bounds.mass)))
        frictions.append(float(rng.uniform(*bounds.friction)))
        scales.append(float(rng.uniform(*bounds.size_scale)))
    return WorldRealization(realization_id, tuple(masses), tuple(frictions), tuple(scales))


@dataclass
class SystemState:
    """Full world state: robot pose/velocity, object poses/velocities, topple flags.

    Angles are stored wrapped to (-pi, pi]. Toppled objects are frozen where
    their center left the shelf; the flag is monotone under stepping.
    """

    robot_pose: np.ndarray
    robot_velocity: np.ndarray
    object_poses: np.ndarray
    object_velocities: np.ndarray
    toppled: np.ndarray

    def __post_init__(self):
        self.robot_pose = np.array(self.robot_pose, dtype=np.float64)
        self.robot_velocity = np.array(self.robot_velocity, dtype=np.float64)
        self.object_poses = np.array(self.object_poses, dtype=np.float64).reshape(-1, 3)
        self.object_velocities = np.array(
            self.object_velocities, dtype=np.float64
        ).reshape(-1, 3)
        self.toppled = np.array(self.toppled, dtype=bool).reshape(-1)
        self.robot_pose[2] = wrap_angle(float(self.robot_pose[2]))
        self.object_poses[:, 2] = wrap_angles(self.object_poses[:, 2])

    @property
    def n_objects(self) -> int:
        return self.object_poses.shape[0]

    def copy(self) -> "SystemState":
        return SystemState(
            self.robot_pose,
            self.robot_velocity,
            self.object_poses,
            self.object_velocities,
            self.toppled,
        )

    def allclose(self, other: "SystemState", tol: float = 0.0) -> bool:
        return (
            np.allclose(self.robot_pose, other.robot_pose, rtol=0, atol=tol)
            and np.allclose(self.robot_velocity, other.robot_velocity, rtol=0, atol=tol)
            and np.allclose(self.object_poses, other.object_poses, rtol=0, atol=tol)
            and np.allclose(
                self.object_velocities, other.object_velocities, rtol=0, atol=tol
            )
            and bool(np.all(self.toppled == other.toppled))
        )


Trajectory = list  # list[SystemState]


@dataclass
class ControlSequence:
    """Sequence of commanded gripper velocities (v_x, v_y, omega), each held dt s."""

    commands: np.ndarray
    dt: float

    def __post_init__(self):
        self.commands = np.array(self.commands, dtype=np.float64).reshape(-1, 3)
        self.dt = float(self.dt)
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")

    def __len__(self) -> int:
        return self.commands.shape[0]

    def slice(self, start: int, end: int) -> "ControlSequence":
        return ControlSequence(self.commands[start:end].copy(), self.dt)

    def copy(self) -> "ControlSequence":
        return ControlSequence(self.commands.copy(), self.dt)


def initial_state(scene: SceneDescription) -> SystemState:
    """Nominal start state: robot at robot_start, objects at rest at their poses."""
    return SystemState(
        robot_pose=np.array(scene.robot_start, dtype=np.float64),
        robot_velocity=np.zeros(3),
        object_poses=np.array([o.pose for o in scene.objects], dtype=np.float64),
        object_velocities=np.zeros((scene.n_objects, 3)),
        toppled=np.zeros(scene.n_objects, dtype=bool),
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Gaussian pose-noise levels for object positions and headings."""

    sigma_pos: float = 0.01
    sigma_theta: float = math.radians(5.0)


DEFAULT_INITIAL_NOISE = NoiseSpec(0.01, math.radians(5.0))
DEFAULT_OBSERVATION_NOISE = NoiseSpec(0.005, math.radians(2.0))


def sample_initial_states(
    state: SystemState,
    noise: NoiseSpec,
    n_samples: int,
    rng: np.random.Generator,
) -> list[SystemState]:
    """Perturb object poses with zero-mean Gaussian noise; robot and velocities exact."""
    draws = rng.normal(size=(n_samples, state.n_objects, 3))
    draws[:, :, 0] *= noise.sigma_pos
    draws[:, :, 1] *= noise.sigma_pos
    draws[:, :, 2] *= noise.sigma_theta
    samples = []
    for k in range(n_samples):
        samples.append(
            SystemState(
                state.robot_pose,
                state.robot_velocity,
                state.object_poses + draws[k],
                state.object_velocities,
                state.toppled,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# scene serialization
# ---------------------------------------------------------------------------


def scene_to_dict(scene: SceneDescription) -> dict:
    d = {
        "boundary": list(scene.boundary),
        "walls": [[list(a), list(b)] for a, b in scene.walls],
        "objects": [
            {
                "shape": o.shape,
                "dims": list(o.dims),
                "mass": o.mass,
                "friction": o.friction,
                "pose": list(o.pose),
            }
            for o in scene.objects
        ],
        "robot_start": list(scene.robot_start),
        "target_index": scene.target_index,
        "grasp_offset": list(scene.grasp_offset),
        "gripper": {
            "parts": [list(p) for p in scene.gripper.parts],
            "capture": list(scene.gripper.capture),
        },
    }
    return {"scene": d}


def scene_from_dict(data: dict) -> SceneDescription:
    d = data["scene"] if "scene" in data else data
    kwargs = {}
    if "grasp_offset" in d:
        kwargs["grasp_offset"] = tuple(d["grasp_offset"])
    if "gripper" in d:
        g = d["gripper"]
        kwargs["gripper"] = GripperGeometry(
            parts=tuple(tuple(p) for p in g["parts"]),
            capture=tuple(g["capture"]),
        )
    return SceneDescription(
        boundary=tuple(d["boundary"]),
        walls=tuple((tuple(a), tuple(b)) for a, b in d["walls"]),
        objects=tuple(
            ObjectSpec(
                shape=o["shape"],
                dims=tuple(o["dims"]),
                mass=o["mass"],
                friction=o["friction"],
                pose=tuple(o["pose"]),
            )
            for o in d["objects"]
        ),
        robot_start=tuple(d["robot_start"]),
        target_index=int(d["target_index"]),
        **kwargs,
    )


def save_scene(scene: SceneDescription, path) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=2, sort_keys=True)
        f.write("\n")


def load_scene(path) -> SceneDescription:
    with open(path) as f:
        return scene_from_dict(json.load(f))


# ---------------------------------------------------------------------------
# gripper frame helpers
# ---------------------------------------------------------------------------


def robot_part_boxes(scene: SceneDescription, robot_pose) -> list[tuple]:
    """World-frame (cx, cy, cos, sin, hx, hy) boxes of the gripper parts."""
    x, y, th = float(robot_pose[0]), float(robot_pose[1]), float(robot_pose[2])
    c, s = math.cos(th), math.sin(th)
    return [
        (x + c * ox - s * oy, y + s * ox + c * oy, c, s, hx, hy)
        for ox, oy, hx, hy in scene.gripper.parts
    ]


def gripper_point(scene: SceneDescription, robot_pose) -> tuple[float, float]:
    """World coordinates of the grasp point G."""
    x, y, th = float(robot_pose[0]), float(robot_pose[1]), float(robot_pose[2])
    gx, gy = scene.grasp_offset
    c, s = math.cos(th), math.sin(th)
    return (x + c * gx - s * gy, y + s * gx + c * gy)


def gripper_forward(robot_pose) -> tuple[float, float]:
    th = float(robot_pose[2])
    return (math.cos(th), math.sin(th))


def point_in_capture_region(scene: SceneDescription, robot_pose, px: float, py: float) -> bool:
    """Is a world point inside the gripper's capture rectangle?"""
    x, y, th = float(robot_pose[0]), float(robot_pose[1]), float(robot_pose[2])
    c, s = math.cos(th), math.sin(th)
    dx, dy = px - x, py - y
    lx = c * dx + s * dy
    ly = -s * dx + c * dy
    x0, x1, half_y = scene.gripper.capture
    return x0 <= lx <= x1 and -half_y <= ly <= half_y


# ---------------------------------------------------------------------------
# static collision query
# ---------------------------------------------------------------------------


def _segment_box_penetration(ax, ay, bx, by, cx, cy, c, s, hx, hy) -> float:
    """Depth by which segment (a, b) penetrates the oriented box; 0 if tangent/apart."""
    # segment endpoints in box frame
    p1x = c * (ax - cx) + s * (ay - cy)
    p1y = -s * (ax - cx) + c * (ay - cy)
    p2x = c * (bx - cx) + s * (by - cy)
    p2y = -s * (bx - cx) + c * (by - cy)
    dx, dy = p2x - p1x, p2y - p1y
    t0, t1 = 0.0, 1.0
    for p, d, h in ((p1x, dx, hx), (p1y, dy, hy)):
        if abs(d) < 1e-15:
            if abs(p) > h:
                return 0.0
            continue
        ta = (-h - p) / d
        tb = (h - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return 0.0
    tm = 0.5 * (t0 + t1)
    mx, my = p1x + tm * dx, p1y + tm * dy
    return max(0.0, min(hx - abs(mx), hy - abs(my)))


def check_static_collision(state: SystemState, scene: SceneDescription) -> bool:
    """True iff the gripper body strictly overlaps a wall or pokes past the boundary.

    Tangency at exactly zero clearance does not count as a collision.
    """
    xmin, ymin, xmax, ymax = scene.boundary
    for cx, cy, c, s, hx, hy in robot_part_boxes(scene, state.robot_pose):
        for ex, ey in ((hx, hy), (hx, -hy), (-hx, hy), (-hx, -hy)):
            px = cx + c * ex - s * ey
            py = cy + s * ex + c * ey
            if px < xmin or px > xmax or py < ymin or py > ymax:
                return True
        for (ax, ay), (bx, by) in scene.walls:
            if _segment_box_penetration(ax, ay, bx, by, cx, cy, c, s, hx, hy) > 0.0:
                return True
    return False


# ---------------------------------------------------------------------------
# simulation internals
# ---------------------------------------------------------------------------


class _SimWorld:
    """Precomputed per-(scene, realization) physics tables."""

    def __init__(self, scene: SceneDescription, realization: WorldRealization):
        if len(realization.masses) != scene.n_objects:
            raise ValueError("realization object count does not match scene")
        self.boundary = scene.boundary
        self.gripper_parts = scene.gripper.parts
        self.part_bounds = [math.hypot(hx, hy) for _, _, hx, hy in self.gripper_parts]
        self.kinds: list[int] = []          # 0 disc, 1 box
        self.dims: list[tuple] = []         # (r,) or (hx, hy), size-scaled
        self.bound: list[float] = []        # bounding circle radius
        self.inv_mass: list[float] = []
        self.inv_inertia: list[float] = []
        self.friction: list[float] = []
        self.gyration: list[float] = []
        for i, obj in enumerate(scene.objects):
            m = realization.masses[i]
            sc = realization.size_scales[i]
            if obj.shape == "disc":
                r = obj.dims[0] * sc
                self.kinds.append(0)
                self.dims.append((r,))
                self.bound.append(r)
                inertia = 0.5 * m * r * r
            else:
                hx, hy = obj.dims[0] * sc, obj.dims[1] * sc
                self.kinds.append(1)
                self.dims.append((hx, hy))
                self.bound.append(math.hypot(hx, hy))
                inertia = m * (hx * hx + hy * hy) / 3.0
            self.inv_mass.append(1.0 / m)
            self.inv_inertia.append(1.0 / inertia)
            self.friction.append(realization.frictions[i])
            self.gyration.append(math.sqrt(inertia / m))
        # walls as thin static boxes
        self.wall_boxes: list[tuple] = []
        for (ax, ay), (bx, by) in scene.walls:
            cx, cy = 0.5 * (ax + bx), 0.5 * (ay + by)
            ang = math.atan2(by - ay, bx - ax)
            half_len = 0.5 * math.hypot(bx - ax, by - ay)
            self.wall_boxes.append(
                (cx, cy, math.cos(ang), math.sin(ang), half_len, WALL_HALF_THICKNESS)
            )
        self.n = scene.n_objects


@lru_cache(maxsize=512)
def _sim_world(scene: SceneDescription, realization: WorldRealization) -> _SimWorld:
    return _SimWorld(scene, realization)


def _circle_circle(ax, ay, ra, bx, by, rb):
    dx, dy = bx - ax, by - ay
    rsum = ra + rb
    d2 = dx * dx + dy * dy
    if d2 >= rsum * rsum:
        return None
    d = math.sqrt(d2)
    if d < 1e-12:
        return (1.0, 0.0, rsum, ax, ay)
    nx, ny = dx / d, dy / d
    depth = rsum - d
    return (nx, ny, depth, ax + nx * (ra - 0.5 * depth), ay + ny * (ra - 0.5 * depth))


def _circle_box(cx, cy, r, bx, by, bc, bs, hx, hy):
    """Circle (A) against oriented box (B); normal points from circle to box."""
    dx, dy = cx - bx, cy - by
    lx = bc * dx + bs * dy
    ly = -bs * dx + bc * dy
    qx = min(max(lx, -hx), hx)
    qy = min(max(ly, -hy), hy)
    if qx == lx and qy == ly:
        # center inside: exit through the nearest face
        px_depth = hx - abs(lx)
        py_depth = hy - abs(ly)
        if px_depth <= py_depth:
            ox = 1.0 if lx >= 0.0 else -1.0
            out_lx, out_ly = ox, 0.0
            depth = px_depth + r
            fx, fy = ox * hx, ly
        else:
            oy = 1.0 if ly >= 0.0 else -1.0
            out_lx, out_ly = 0.0, oy
            depth = py_depth + r
            fx, fy = lx, oy * hy
    else:
        ddx, ddy = lx - qx, ly - qy
        dist2 = ddx * ddx + ddy * ddy
        if dist2 >= r * r:
            return None
        dist = math.sqrt(dist2)
        out_lx, out_ly = ddx / dist, ddy / dist
        depth = r - dist
        fx, fy = qx, qy
    # box frame -> world
    owx = bc * out_lx - bs * out_ly
    owy = bs * out_lx + bc * out_ly
    pwx = bx + bc * fx - bs * fy
    pwy = by + bs * fx + bc * fy
    return (-owx, -owy, depth, pwx, pwy)


def _box_box(ax, ay, ac, as_, ahx, ahy, bx, by, bc, bs, bhx, bhy):
    """Oriented box A against oriented box B via separating axes; normal A -> B."""
    dx, dy = bx - ax, by - ay
    axes = (
        (ac, as_),
        (-as_, ac),
        (bc, bs),
        (-bs, bc),
    )
    best = None
    for ux, uy in axes:
        ea = ahx * abs(ux * ac + uy * as_) + ahy * abs(-ux * as_ + uy * ac)
        eb = bhx * abs(ux * bc + uy * bs) + bhy * abs(-ux * bs + uy * bc)
        sep = dx * ux + dy * uy
        overlap = ea + eb - abs(sep)
        if overlap <= 0.0:
            return None
        if best is None or overlap < best[0]:
            if sep < 0.0:
                best = (overlap, -ux, -uy)
            else:
                best = (overlap, ux, uy)
    depth, nx, ny = best
    # representative contact point: mean of penetrating corners
    pts_x, pts_y, count = 0.0, 0.0, 0
    for (px, py, pc, ps, phx, phy, ox, oy, oc, os_, ohx, ohy) in (
        (ax, ay, ac, as_, ahx, ahy, bx, by, bc, bs, bhx, bhy),
        (bx, by, bc, bs, bhx, bhy, ax, ay, ac, as_, ahx, ahy),
    ):
        for ex, ey in ((phx, phy), (phx, -phy), (-phx, phy), (-phx, -phy)):
            wx = px + pc * ex - ps * ey
            wy = py + ps * ex + pc * ey
            vx, vy = wx - ox, wy - oy
            if abs(oc * vx + os_ * vy) <= ohx and abs(-os_ * vx + oc * vy) <= ohy:
                pts_x += wx
                pts_y += wy
                count += 1
    if count:
        return (nx, ny, depth, pts_x / count, pts_y / count)
    return (nx, ny, depth, 0.5 * (ax + bx), 0.5 * (ay + by))


def _resolve_contact(A, B, a_invm, a_invi, b_invm, b_invi, mu, nx, ny, depth, px, py):
    """Impulse + positional correction for one contact; bodies are [x,y,th,vx,vy,w].

    Normal points from A to B. Infinite-mass bodies (inv mass 0) read their
    velocity but are never written, which covers both static walls and the
    kinematic gripper.
    """
    rax, ray = px - A[0], py - A[1]
    rbx, rby = px - B[0], py - B[1]
    avx = A[3] - A[5] * ray
    avy = A[4] + A[5] * rax
    bvx = B[3] - B[5] * rby
    bvy = B[4] + B[5] * rbx
    vn = (bvx - avx) * nx + (bvy - avy) * ny
    if vn < 0.0:
        ran = rax * ny - ray * nx
        rbn = rbx * ny - rby * nx
        kn = a_invm + b_invm + a_invi * ran * ran + b_invi * rbn * rbn
        jn = -vn / kn
        if a_invm != 0.0 or a_invi != 0.0:
            A[3] -= jn * nx * a_invm
            A[4] -= jn * ny * a_invm
            A[5] -= jn * ran * a_invi
        if b_invm != 0.0 or b_invi != 0.0:
            B[3] += jn * nx * b_invm
            B[4] += jn * ny * b_invm
            B[5] += jn * rbn * b_invi
        # Coulomb friction against the post-impulse tangential slip
        tx, ty = -ny, nx
        avx = A[3] - A[5] * ray
        avy = A[4] + A[5] * rax
        bvx = B[3] - B[5] * rby
        bvy = B[4] + B[5] * rbx
        vt = (bvx - avx) * tx + (bvy - avy) * ty
        rat = rax * ty - ray * tx
        rbt = rbx * ty - rby * tx
        kt = a_invm + b_invm + a_invi * rat * rat + b_invi * rbt * rbt
        jt = -vt / kt
        jmax = mu * jn
        if jt > jmax:
            jt = jmax
        elif jt < -jmax:
            jt = -jmax
        if a_invm != 0.0 or a_invi != 0.0:
            A[3] -= jt * tx * a_invm
            A[4] -= jt * ty * a_invm
            A[5] -= jt * rat * a_invi
        if b_invm != 0.0 or b_invi != 0.0:
            B[3] += jt * tx * b_invm
            B[4] += jt * ty * b_invm
            B[5] += jt * rbt * b_invi
    if depth > PENETRATION_SLOP:
        inv_sum = a_invm + b_invm
        if inv_sum > 0.0:
            corr = POSITION_CORRECTION * (depth - PENETRATION_SLOP) / inv_sum
            if a_invm != 0.0:
                A[0] -= corr * a_invm * nx
                A[1] -= corr * a_invm * ny
            if b_invm != 0.0:
                B[0] += corr * b_invm * nx
                B[1] += corr * b_invm * ny


def _object_contact(sim, objs, i, other, o_invm, o_invi, o_mu, box):
    """Collide object i against a body described by an oriented box."""
    o = objs[i]
    mu = math.sqrt(sim.friction[i] * o_mu)
    bx, by, bc, bs, bhx, bhy = box
    if sim.kinds[i] == 0:
        hit = _circle_box(o[0], o[1], sim.dims[i][0], bx, by, bc, bs, bhx, bhy)
    else:
        c = math.cos(o[2])
        s = math.sin(o[2])
        hx, hy = sim.dims[i]
        hit = _box_box(o[0], o[1], c, s, hx, hy, bx, by, bc, bs, bhx, bhy)
    if hit is not None:
        _resolve_contact(
            o, other, sim.inv_mass[i], sim.inv_inertia[i], o_invm, o_invi, mu, *hit
        )


def _substep(sim: _SimWorld, robot, objs, toppled, h: float) -> None:
    # integrate the kinematic gripper
    robot[0] += robot[3] * h
    robot[1] += robot[4] * h
    robot[2] = wrap_angle(robot[2] + robot[5] * h)
    # integrate objects and apply ground Coulomb friction
    for i in range(sim.n):
        if toppled[i]:
            continue
        o = objs[i]
        o[0] += o[3] * h
        o[1] += o[4] * h
        o[2] = wrap_angle(o[2] + o[5] * h)
        speed = math.hypot(o[3], o[4])
        dec = sim.friction[i] * GRAVITY * h
        if speed <= dec:
            o[3] = 0.0
            o[4] = 0.0
        else:
            k = (speed - dec) / speed
            o[3] *= k
            o[4] *= k
        wdec = ANGULAR_GROUND_FRICTION * dec / sim.gyration[i]
        if o[5] > wdec:
            o[5] -= wdec
        elif o[5] < -wdec:
            o[5] += wdec
        else:
            o[5] = 0.0
    # gripper -> object contacts
    rc, rs = math.cos(robot[2]), math.sin(robot[2])
    for p_idx, (ox, oy, hx, hy) in enumerate(sim.gripper_parts):
        pcx = robot[0] + rc * ox - rs * oy
        pcy = robot[1] + rs * ox + rc * oy
        pb = sim.part_bounds[p_idx]
        for i in range(sim.n):
            if toppled[i]:
                continue
            o = objs[i]
            dx, dy = o[0] - pcx, o[1] - pcy
            lim = pb + sim.bound[i]
            if dx * dx + dy * dy > lim * lim:
                continue
            _object_contact(
                sim, objs, i, robot, 0.0, 0.0, ROBOT_SURFACE_FRICTION,
                (pcx, pcy, rc, rs, hx, hy),
            )
    # object -> object contacts
    for i in range(sim.n):
        if toppled[i]:
            continue
        oi = objs[i]
        for j in range(i + 1, sim.n):
            if toppled[j]:
                continue
            oj = objs[j]
            dx, dy = oj[0] - oi[0], oj[1] - oi[1]
            lim = sim.bound[i] + sim.bound[j]
            if dx * dx + dy * dy > lim * lim:
                continue
            mu = math.sqrt(sim.friction[i] * sim.friction[j])
            ki, kj = sim.kinds[i], sim.kinds[j]
            if ki == 0 and kj == 0:
                hit = _circle_circle(
                    oi[0], oi[1], sim.dims[i][0], oj[0], oj[1], sim.dims[j][0]
                )
                if hit is not None:
                    _resolve_contact(
                        oi, oj, sim.inv_mass[i], sim.inv_inertia[i],
                        sim.inv_mass[j], sim.inv_inertia[j], mu, *hit,
                    )
            else:
                # orient so a disc is always the first body of a mixed pair
                if ki == 0:
                    a, b = i, j
                else:
                    a, b = j, i
                oa, ob = objs[a], objs[b]
                cb, sb = math.cos(ob[2]), math.sin(ob[2])
                if sim.kinds[a] == 0:
                    hit = _circle_box(
                        oa[0], oa[1], sim.dims[a][0],
                        ob[0], ob[1], cb, sb, *sim.dims[b],
                    )
                else:
                    ca, sa = math.cos(oa[2]), math.sin(oa[2])
                    hit = _box_box(
                        oa[0], oa[1], ca, sa, *sim.dims[a],
                        ob[0], ob[1], cb, sb, *sim.dims[b],
                    )
                if hit is not None:
                    _resolve_contact(
                        oa, ob, sim.inv_mass[a], sim.inv_inertia[a],
                        sim.inv_mass[b], sim.inv_inertia[b], mu, *hit,
                    )
    # wall -> object contacts
    for wall in sim.wall_boxes:
        wcx, wcy = wall[0], wall[1]
        wb = math.hypot(wall[4], wall[5])
        for i in range(sim.n):
            if toppled[i]:
                continue
            o = objs[i]
            dx, dy = o[0] - wcx, o[1] - wcy
            lim = wb + sim.bound[i]
            if dx * dx + dy * dy > lim * lim:
                continue
            _object_contact(
                sim, objs, i, _STATIC_BODY, 0.0, 0.0, WALL_SURFACE_FRICTION, wall
            )
    # shelf boundary: center out means the object toppled off
    xmin, ymin, xmax, ymax = sim.boundary
    for i in range(sim.n):
        if toppled[i]:
            continue
        o = objs[i]
        if o[0] < xmin or o[0] > xmax or o[1] < ymin or o[1] > ymax:
            toppled[i] = True
            o[3] = 0.0
            o[4] = 0.0
            o[5] = 0.0


_STATIC_BODY = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]


def _check_finite_state(state: SystemState) -> None:
    for arr in (
        state.robot_pose,
        state.robot_velocity,
        state.object_poses,
        state.object_velocities,
    ):
        if not np.all(np.isfinite(arr)):
            raise NumericDomainError("state contains non-finite components")


def _check_finite_control(u) -> None:
    if not (math.isfinite(u[0]) and math.isfinite(u[1]) and math.isfinite(u[2])):
        raise NumericDomainError("control contains non-finite components")


def _state_to_internal(state: SystemState):
    robot = [
        float(state.robot_pose[0]),
        float(state.robot_pose[1]),
        float(state.robot_pose[2]),
        0.0,
        0.0,
        0.0,
    ]
    objs = [
        [
            float(state.object_poses[i, 0]),
            float(state.object_poses[i, 1]),
            float(state.object_poses[i, 2]),
            float(state.object_velocities[i, 0]),
            float(state.object_velocities[i, 1]),
            float(state.object_velocities[i, 2]),
        ]
        for i in range(state.n_objects)
    ]
    toppled = [bool(t) for t in state.toppled]
    return robot, objs, toppled


def _internal_to_state(robot, objs, toppled, control) -> SystemState:
    return SystemState(
        robot_pose=np.array(robot[:3]),
        robot_velocity=np.array(
            [float(control[0]), float(control[1]), float(control[2])]
        ),
        object_poses=np.array([o[:3] for o in objs]),
        object_velocities=np.array([o[3:] for o in objs]),
        toppled=np.array(toppled, dtype=bool),
    )


def _advance(sim, robot, objs, toppled, control, dt, substeps):
    robot[3] = float(control[0])
    robot[4] = float(control[1])
    robot[5] = float(control[2])
    h = dt / substeps
    for _ in range(substeps):
        _substep(sim, robot, objs, toppled, h)


def step(
    state: SystemState,
    control,
    scene: SceneDescription,
    realization: WorldRealization,
    dt: float,
    substeps: int = DEFAULT_SUBSTEPS,
) -> SystemState:
    """Advance the world by one control interval of dt seconds.

    The gripper moves kinematically at the commanded (v_x, v_y, omega);
    objects respond through contact impulses and ground friction. The update
    is pure and deterministic: equal inputs give bit-identical outputs.
    """
    _check_finite_state(state)
    _check_finite_control(control)
    sim = _sim_world(scene, realization)
    if sim.n != state.n_objects:
        raise ValueError("state object count does not match scene")
    robot, objs, toppled = _state_to_internal(state)
    _advance(sim, robot, objs, toppled, control, dt, substeps)
    return _internal_to_state(robot, objs, toppled, control)


def rollout(
    x0: SystemState,
    controls: ControlSequence,
    scene: SceneDescription,
    realization: WorldRealization,
    substeps: int = DEFAULT_SUBSTEPS,
) -> list[SystemState]:
    """Roll the control sequence out from x0; returns N+1 states, x0 first."""
    _check_finite_state(x0)
    sim = _sim_world(scene, realization)
    if sim.n != x0.n_objects:
        raise ValueError("state object count does not match scene")
    states = [x0.copy()]
    robot, objs, toppled = _state_to_internal(x0)
    for t in range(len(controls)):
        u = controls.commands[t]
        _check_finite_control(u)
        _advance(sim, robot, objs, toppled, u, controls.dt, substeps)
        states.append(_internal_to_state(robot, objs, toppled, u))
    return states
