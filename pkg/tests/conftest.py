"""Shared fixtures: small hand-built scenes used across the test modules."""

import math

import numpy as np
import pytest

from contraplan.world import (
    GripperGeometry,
    ObjectSpec,
    ParameterBounds,
    SceneDescription,
    initial_state,
    nominal_realization,
)


@pytest.fixture
def empty_scene():
    """One far-away disc on a 1 m shelf; robot has free space around the origin."""
    return SceneDescription(
        boundary=(-0.5, -0.5, 0.5, 0.5),
        walls=(),
        objects=(ObjectSpec("disc", (0.03,), 0.6, 0.3, (0.4, 0.4, 0.0)),),
        robot_start=(0.0, 0.0, 0.0),
        target_index=0,
    )


@pytest.fixture
def push_scene():
    """A disc directly ahead of the robot, close enough to reach by pushing."""
    return SceneDescription(
        boundary=(-0.5, -0.5, 1.0, 0.5),
        walls=(),
        objects=(ObjectSpec("disc", (0.04,), 0.6, 0.3, (0.22, 0.0, 0.0)),),
        robot_start=(0.0, 0.0, 0.0),
        target_index=0,
    )


@pytest.fixture
def cluttered_scene():
    """Three objects with the target behind two blockers, plus one wall."""
    return SceneDescription(
        boundary=(-0.1, -0.4, 1.0, 0.4),
        walls=(((0.9, -0.4), (0.9, 0.4)),),
        objects=(
            ObjectSpec("disc", (0.035,), 0.6, 0.3, (0.30, 0.08, 0.0)),
            ObjectSpec("box", (0.03, 0.03), 0.7, 0.25, (0.45, -0.06, 0.2)),
            ObjectSpec("disc", (0.04,), 0.55, 0.35, (0.62, 0.02, 0.0)),
        ),
        robot_start=(0.0, 0.0, 0.0),
        target_index=2,
    )


@pytest.fixture
def default_bounds():
    return ParameterBounds(mass=(0.5, 0.8), friction=(0.2, 0.4), size_scale=(0.95, 1.05))


@pytest.fixture
def rng():
    return np.random.default_rng(7)
