"""SVG rendering of execution logs.

One frame per keyframe (initial state plus one per executed step) and a
summary overlay showing the realized robot path, colored by execution mode:
open-loop steps green, replanned steps orange.

The world-to-pixel transform is px = margin + (x - xmin) * scale,
py = margin + (ymax - y) * scale, and its parameters are stamped on the svg
root as data attributes. Every object sits in a group with id "obj-<i>" whose
translate() components are written with full float precision, so drawn
positions can be inverted back to the logged poses exactly.
"""

from __future__ import annotations

import math
import os

from .executor import ExecutionLog, OPEN_LOOP
from .world import (
    SceneDescription,
    SystemState,
    WALL_HALF_THICKNESS,
    gripper_point,
    robot_part_boxes,
)

SCALE = 800.0  # pixels per meter
MARGIN = 24.0

MODE_COLORS = {OPEN_LOOP: "#2f9e44", "mpc": "#e8590c"}
_TARGET_FILL = "#e03131"
_OBJECT_FILL = "#74a9cf"
_TOPPLED_FILL = "#cccccc"
_ROBOT_FILL = "#495057"


class _Transform:
    def __init__(self, boundary):
        self.xmin, self.ymin, self.xmax, self.ymax = boundary
        self.width = MARGIN * 2 + (self.xmax - self.xmin) * SCALE
        self.height = MARGIN * 2 + (self.ymax - self.ymin) * SCALE

    def px(self, x: float) -> float:
        return MARGIN + (x - self.xmin) * SCALE

    def py(self, y: float) -> float:
        return MARGIN + (self.ymax - y) * SCALE


def _svg_open(tr: _Transform, extra_height: float = 0.0) -> str:
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" '
        f'width="{tr.width!r}" height="{tr.height + extra_height!r}" '
        f'viewBox="0 0 {tr.width!r} {tr.height + extra_height!r}" '
        f'data-scale="{SCALE!r}" data-xmin="{tr.xmin!r}" '
        f'data-ymax="{tr.ymax!r}" data-margin="{MARGIN!r}">\n'
        f'<rect width="100%" height="100%" fill="#ffffff"/>\n'
    )


def _draw_scene_static(scene: SceneDescription, tr: _Transform) -> list[str]:
    parts = [
        f'<rect x="{tr.px(scene.boundary[0])!r}" y="{tr.py(scene.boundary[3])!r}" '
        f'width="{(scene.boundary[2] - scene.boundary[0]) * SCALE!r}" '
        f'height="{(scene.boundary[3] - scene.boundary[1]) * SCALE!r}" '
        f'fill="none" stroke="#adb5bd" stroke-dasharray="4 3"/>'
    ]
    w = 2.0 * WALL_HALF_THICKNESS * SCALE
    for (ax, ay), (bx, by) in scene.walls:
        parts.append(
            f'<line x1="{tr.px(ax)!r}" y1="{tr.py(ay)!r}" '
            f'x2="{tr.px(bx)!r}" y2="{tr.py(by)!r}" '
            f'stroke="#343a40" stroke-width="{w!r}" stroke-linecap="square"/>'
        )
    return parts


def _draw_objects(scene: SceneDescription, state: SystemState, tr: _Transform) -> list[str]:
    parts = []
    for i, spec in enumerate(scene.objects):
        x, y, th = (float(v) for v in state.object_poses[i])
        if state.toppled[i]:
            fill = _TOPPLED_FILL
        elif i == scene.target_index:
            fill = _TARGET_FILL
        else:
            fill = _OBJECT_FILL
        rot = -math.degrees(th)
        parts.append(
            f'<g id="obj-{i}" transform="translate({tr.px(x)!r},{tr.py(y)!r}) rotate({rot!r})">'
        )
        if spec.shape == "disc":
            r = spec.dims[0] * SCALE
            parts.append(f'<circle r="{r!r}" fill="{fill}" stroke="#343a40"/>')
            parts.append(f'<line x1="0" y1="0" x2="{r!r}" y2="0" stroke="#343a40"/>')
        else:
            hx, hy = spec.dims[0] * SCALE, spec.dims[1] * SCALE
            parts.append(
                f'<rect x="{-hx!r}" y="{-hy!r}" width="{2 * hx!r}" height="{2 * hy!r}" '
                f'fill="{fill}" stroke="#343a40"/>'
            )
        parts.append("</g>")
    return parts


def _draw_robot(scene: SceneDescription, state: SystemState, tr: _Transform, color: str) -> list[str]:
    parts = []
    for cx, cy, c, s, hx, hy in robot_part_boxes(scene, state.robot_pose):
        rot = -math.degrees(math.atan2(s, c))
        phx, phy = hx * SCALE, hy * SCALE
        parts.append(
            f'<g transform="translate({tr.px(cx)!r},{tr.py(cy)!r}) rotate({rot!r})">'
            f'<rect x="{-phx!r}" y="{-phy!r}" width="{2 * phx!r}" height="{2 * phy!r}" '
            f'fill="{_ROBOT_FILL}" stroke="{color}" stroke-width="1.5"/></g>'
        )
    gx, gy = gripper_point(scene, state.robot_pose)
    parts.append(
        f'<circle cx="{tr.px(gx)!r}" cy="{tr.py(gy)!r}" r="3" fill="{color}"/>'
    )
    return parts


def render_frame(
    scene: SceneDescription, state: SystemState, label: str, mode: str | None = None
) -> str:
    """Render one state to an SVG string."""
    tr = _Transform(scene.boundary)
    color = MODE_COLORS.get(mode, "#343a40")
    out = [_svg_open(tr)]
    out.extend(_draw_scene_static(scene, tr))
    out.extend(_draw_objects(scene, state, tr))
    out.extend(_draw_robot(scene, state, tr, color))
    out.append(
        f'<text x="{MARGIN!r}" y="16" font-family="monospace" font-size="12" '
        f'fill="{color}">{label}</text>'
    )
    out.append("</svg>\n")
    return "\n".join(out)


def _summary_svg(log: ExecutionLog, scene: SceneDescription) -> str:
    tr = _Transform(scene.boundary)
    out = [_svg_open(tr)]
    out.extend(_draw_scene_static(scene, tr))
    # planned gripper path, when the run carried an upfront plan
    if log.planned_states:
        pts = " ".join(
            f"{tr.px(gx)!r},{tr.py(gy)!r}"
            for gx, gy in (gripper_point(scene, s.robot_pose) for s in log.planned_states)
        )
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="#868e96" '
            f'stroke-dasharray="6 4" stroke-width="1.5"/>'
        )
    # realized gripper path, one segment per step, colored by mode
    prev = log.initial_true_state
    for rec in log.steps:
        x1, y1 = gripper_point(scene, prev.robot_pose)
        x2, y2 = gripper_point(scene, rec.true_state.robot_pose)
        color = MODE_COLORS.get(rec.mode, "#343a40")
        out.append(
            f'<line x1="{tr.px(x1)!r}" y1="{tr.py(y1)!r}" '
            f'x2="{tr.px(x2)!r}" y2="{tr.py(y2)!r}" '
            f'stroke="{color}" stroke-width="2.5"/>'
        )
        prev = rec.true_state
    final = log.steps[-1].true_state if log.steps else log.initial_true_state
    out.extend(_draw_objects(scene, final, tr))
    out.extend(_draw_robot(scene, final, tr, "#343a40"))
    label = (
        f"{log.method} seed={log.seed} success={str(log.success).lower()} "
        f"open-loop={log.percent_open_loop:.0f}%"
    )
    out.append(
        f'<text x="{MARGIN!r}" y="16" font-family="monospace" font-size="12" '
        f'fill="#343a40">{label}</text>'
    )
    out.append("</svg>\n")
    return "\n".join(out)


def render_trace(log: ExecutionLog, scene: SceneDescription, out_dir) -> list[str]:
    """Write one SVG per keyframe plus summary.svg; returns the written paths.

    Frame 0 is the initial true state; frame k is the true state after step
    k. Frame borders and labels are colored by the step's execution mode.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    frames = [(log.initial_true_state, None, "step 0 (initial)")]
    for rec in log.steps:
        frames.append((rec.true_state, rec.mode, f"step {rec.index + 1} [{rec.mode}]"))
    for k, (state, mode, label) in enumerate(frames):
        path = os.path.join(out_dir, f"frame_{k:03d}.svg")
        with open(path, "w") as f:
            f.write(render_frame(scene, state, label, mode))
        written.append(path)
    path = os.path.join(out_dir, "summary.svg")
    with open(path, "w") as f:
        f.write(_summary_svg(log, scene))
    written.append(path)
    return written
