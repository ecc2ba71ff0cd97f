"""Random cluttered-shelf scene generation.

Scenes are built to make a straight reach for the target fail: the target
sits deep on a three-walled shelf with the front edge open, and at least two
blocker objects are planted directly on the line from the robot's start pose
to the target. Remaining objects fill the shelf uniformly. All placement is
rejection sampling against exact footprint overlap tests, so a fixed seed
yields a deterministic scene with zero initial overlaps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import (
    GripperGeometry,
    ObjectSpec,
    SceneDescription,
    _box_box,
    _circle_box,
    _circle_circle,
    check_static_collision,
    initial_state,
)

MAX_OBJECTS = 10
MIN_OBJECTS = 3


class SceneGenerationError(RuntimeError):
    """Rejection sampling ran out of attempts while placing objects."""


@dataclass(frozen=True)
class SceneGenParams:
    """Knobs for generate_random_scene.

    Nominal masses and frictions are drawn inside the same intervals the
    disturbed-world sampler uses, so the nominal world is a member of the
    randomization family. clearance is the minimum initial gap between
    footprints in meters.
    """

    n_objects: int = 10
    shelf_width: float = 0.6
    shelf_depth: float = 0.5
    mass_range: tuple[float, float] = (0.5, 0.8)
    friction_range: tuple[float, float] = (0.2, 0.4)
    disc_radius_range: tuple[float, float] = (0.02, 0.035)
    box_half_range: tuple[float, float] = (0.02, 0.04)
    disc_fraction: float = 0.5
    clearance: float = 0.01
    max_attempts: int = 1000

    def __post_init__(self):
        if not MIN_OBJECTS <= self.n_objects <= MAX_OBJECTS:
            raise ValueError(
                f"n_objects must lie in [{MIN_OBJECTS}, {MAX_OBJECTS}], got {self.n_objects}"
            )
        if self.shelf_width <= 0.0 or self.shelf_depth <= 0.0:
            raise ValueError("shelf dimensions must be positive")
        for name in ("mass_range", "friction_range", "disc_radius_range", "box_half_range"):
            lo, hi = getattr(self, name)
            if not (0.0 < lo <= hi):
                raise ValueError(f"{name} needs 0 < lower <= upper, got {lo}, {hi}")
        if not 0.0 <= self.disc_fraction <= 1.0:
            raise ValueError("disc_fraction must lie in [0, 1]")
        if self.clearance < 0.0:
            raise ValueError("clearance must be nonnegative")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")


def _bound_radius(spec: ObjectSpec) -> float:
    if spec.shape == "disc":
        return spec.dims[0]
    return math.hypot(spec.dims[0], spec.dims[1])


def _inradius(spec: ObjectSpec) -> float:
    if spec.shape == "disc":
        return spec.dims[0]
    return min(spec.dims)


def _footprint_box(spec: ObjectSpec, pose=None) -> tuple:
    x, y, th = pose if pose is not None else spec.pose
    return (x, y, math.cos(th), math.sin(th), spec.dims[0], spec.dims[1])


def _footprints_overlap(a: ObjectSpec, b: ObjectSpec, clearance: float) -> bool:
    """Do the two footprints come within `clearance` of touching?"""
    if a.shape == "disc" and b.shape == "disc":
        hit = _circle_circle(
            a.pose[0], a.pose[1], a.dims[0] + clearance, b.pose[0], b.pose[1], b.dims[0]
        )
    elif a.shape == "disc":
        hit = _circle_box(a.pose[0], a.pose[1], a.dims[0] + clearance, *_footprint_box(b))
    elif b.shape == "disc":
        hit = _circle_box(b.pose[0], b.pose[1], b.dims[0] + clearance, *_footprint_box(a))
    else:
        ax, ay, ac, as_, ahx, ahy = _footprint_box(a)
        hit = _box_box(
            ax, ay, ac, as_, ahx + clearance, ahy + clearance, *_footprint_box(b)
        )
    return hit is not None


def _hits_robot(spec: ObjectSpec, parts, clearance: float) -> bool:
    for cx, cy, c, s, hx, hy in parts:
        if spec.shape == "disc":
            hit = _circle_box(
                spec.pose[0], spec.pose[1], spec.dims[0] + clearance, cx, cy, c, s, hx, hy
            )
        else:
            ox, oy, oc, os_, ohx, ohy = _footprint_box(spec)
            hit = _box_box(ox, oy, oc, os_, ohx + clearance, ohy + clearance, cx, cy, c, s, hx, hy)
        if hit is not None:
            return True
    return False


def _point_segment_distance(px, py, ax, ay, bx, by) -> float:
    dx, dy = bx - ax, by - ay
    l2 = dx * dx + dy * dy
    if l2 < 1e-18:
        return math.hypot(px - ax, py - ay)
    t = min(1.0, max(0.0, ((px - ax) * dx + (py - ay) * dy) / l2))
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


def segment_hits_footprint(ax, ay, bx, by, spec: ObjectSpec) -> bool:
    """Does the open segment (a, b) pass through the object's footprint?"""
    if spec.shape == "disc":
        return _point_segment_distance(spec.pose[0], spec.pose[1], ax, ay, bx, by) < spec.dims[0]
    # clip the segment against the oriented box's slabs
    cx, cy, c, s, hx, hy = _footprint_box(spec)
    p1x = c * (ax - cx) + s * (ay - cy)
    p1y = -s * (ax - cx) + c * (ay - cy)
    p2x = c * (bx - cx) + s * (by - cy)
    p2y = -s * (bx - cx) + c * (by - cy)
    dx, dy = p2x - p1x, p2y - p1y
    t0, t1 = 0.0, 1.0
    for p, d, h in ((p1x, dx, hx), (p1y, dy, hy)):
        if abs(d) < 1e-15:
            if abs(p) > h:
                return False
            continue
        ta, tb = (-h - p) / d, (h - p) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


def count_blockers_on_ray(scene: SceneDescription) -> int:
    """Non-target objects whose footprint the robot-start-to-target segment crosses."""
    ax, ay = scene.robot_start[0], scene.robot_start[1]
    tx, ty, _ = scene.objects[scene.target_index].pose
    return sum(
        1
        for i, obj in enumerate(scene.objects)
        if i != scene.target_index and segment_hits_footprint(ax, ay, tx, ty, obj)
    )


def _draw_shape(params: SceneGenParams, rng: np.random.Generator, force_disc=False):
    if force_disc or rng.uniform() < params.disc_fraction:
        return "disc", (float(rng.uniform(*params.disc_radius_range)),)
    return "box", (
        float(rng.uniform(*params.box_half_range)),
        float(rng.uniform(*params.box_half_range)),
    )


class _RestartScene(Exception):
    """Internal: tear the partial scene down and redraw from the target."""


_LOCAL_CAP = 150  # per-object draws before the whole layout restarts


def generate_random_scene(
    params: SceneGenParams, rng: np.random.Generator
) -> SceneDescription:
    """Generate one cluttered shelf scene.

    Object 0 is the target (always a disc, graspable by construction), the
    next two are blockers planted on the robot-to-target line, and the rest
    are uniform clutter. A stuck placement restarts the whole layout; the
    attempt budget is shared across restarts, and exhausting it raises
    SceneGenerationError.
    """
    w, h = params.shelf_width, params.shelf_depth
    boundary = (0.0, 0.0, w, h)
    walls = (
        ((0.0, 0.0), (0.0, h)),
        ((0.0, h), (w, h)),
        ((w, 0.0), (w, h)),
    )
    robot_start = (0.5 * w, 0.07, 0.5 * math.pi)
    parts = _start_part_boxes(robot_start)
    ax, ay = robot_start[0], robot_start[1]

    budget = params.max_attempts
    placed: list[ObjectSpec] = []

    def draw_params():
        return (
            float(rng.uniform(*params.mass_range)),
            float(rng.uniform(*params.friction_range)),
        )

    def try_place(make_spec) -> ObjectSpec:
        nonlocal budget
        local = 0
        while budget > 0 and local < _LOCAL_CAP:
            budget -= 1
            local += 1
            spec = make_spec()
            br = _bound_radius(spec)
            margin = br + 0.012  # wall thickness plus a thin gap
            x, y = spec.pose[0], spec.pose[1]
            if not (margin <= x <= w - margin and margin <= y <= h - margin):
                continue
            if _hits_robot(spec, parts, params.clearance):
                continue
            if any(_footprints_overlap(spec, other, params.clearance) for other in placed):
                continue
            placed.append(spec)
            return spec
        raise _RestartScene

    # target: deep on the shelf, roughly centered
    def make_target():
        mass, mu = draw_params()
        shape, dims = _draw_shape(params, rng, force_disc=True)
        pose = (
            float(rng.uniform(0.3 * w, 0.7 * w)),
            float(rng.uniform(0.66 * h, 0.82 * h)),
            0.0,
        )
        return ObjectSpec(shape, dims, mass, mu, pose)

    def make_blocker(target, f_lo, f_hi):
        tx, ty = target.pose[0], target.pose[1]
        seg_len = math.hypot(tx - ax, ty - ay)
        ux, uy = (tx - ax) / seg_len, (ty - ay) / seg_len
        nxp, nyp = -uy, ux  # perpendicular, for bounded jitter off the line

        def make():
            mass, mu = draw_params()
            shape, dims = _draw_shape(params, rng)
            inr = dims[0] if shape == "disc" else min(dims)
            f = float(rng.uniform(f_lo, f_hi))
            j = float(rng.uniform(-0.4, 0.4)) * inr
            theta = float(rng.uniform(-math.pi, math.pi)) if shape == "box" else 0.0
            pose = (
                ax + f * seg_len * ux + j * nxp,
                ay + f * seg_len * uy + j * nyp,
                theta,
            )
            return ObjectSpec(shape, dims, mass, mu, pose)

        return make

    def make_filler():
        mass, mu = draw_params()
        shape, dims = _draw_shape(params, rng)
        theta = float(rng.uniform(-math.pi, math.pi)) if shape == "box" else 0.0
        pose = (
            float(rng.uniform(0.05 * w, 0.95 * w)),
            float(rng.uniform(0.15 * h, 0.95 * h)),
            theta,
        )
        return ObjectSpec(shape, dims, mass, mu, pose)

    while budget > 0:
        placed.clear()
        try:
            target = try_place(make_target)
            # two blockers on the line, one mid-way and one closer to the target
            try_place(make_blocker(target, 0.42, 0.58))
            try_place(make_blocker(target, 0.60, 0.78))
            for _ in range(params.n_objects - 3):
                try_place(make_filler)
        except _RestartScene:
            continue
        scene = SceneDescription(
            boundary=boundary,
            walls=walls,
            objects=tuple(placed),
            robot_start=robot_start,
            target_index=0,
        )
        if check_static_collision(initial_state(scene), scene):
            raise SceneGenerationError("robot start pose collides in the generated scene")
        if count_blockers_on_ray(scene) < 2:
            raise SceneGenerationError("generated scene lost its blockers")
        return scene
    raise SceneGenerationError(
        f"could not place {params.n_objects} objects within {params.max_attempts} attempts"
    )


def _start_part_boxes(robot_start) -> list[tuple]:
    """Gripper part boxes at the start pose, with the default gripper geometry."""
    x, y, th = robot_start
    c, s = math.cos(th), math.sin(th)
    return [
        (x + c * ox - s * oy, y + s * ox + c * oy, c, s, hx, hy)
        for ox, oy, hx, hy in GripperGeometry().parts
    ]
