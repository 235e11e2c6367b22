"""Synthetic centerline generators for simulation and tests."""
from __future__ import annotations

import numpy as np

from .vehicle import Track

__all__ = ["straight_track", "circle_track", "s_curve_track", "test_track"]


def straight_track(length: float = 500.0, n: int = 101, d_max: float = 10.0) -> Track:
    xs = np.linspace(0.0, length, n)
    points = np.stack([xs, np.zeros_like(xs)], axis=-1)
    return Track(points=points, closed=False, d_max=d_max)


def circle_track(radius: float = 200.0, n: int = 400, d_max: float = 10.0) -> Track:
    """Closed circular centerline, counterclockwise, starting at the bottom
    heading +x."""
    phi = np.linspace(-0.5 * np.pi, 1.5 * np.pi, n, endpoint=False)
    points = radius * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    points -= points[0]
    return Track(points=points, closed=True, d_max=d_max)


def s_curve_track(d_max: float = 10.0) -> Track:
    """Open track: straight lead-in, a left and a right arc, straight exit.

    Curvature stays within +-1/150 so a 30 m/s vehicle can follow it with
    moderate steering; roughly 450 m long.
    """
    pieces = []
    pos = np.zeros(2)
    heading = 0.0

    def straight(length, n):
        nonlocal pos
        t = np.linspace(0.0, length, n, endpoint=False)[1:]
        seg = pos + np.outer(t, [np.cos(heading), np.sin(heading)])
        pos = pos + length * np.array([np.cos(heading), np.sin(heading)])
        pieces.append(seg)

    def arc(radius, angle, n):
        # positive angle turns left
        nonlocal pos, heading
        sgn = np.sign(angle)
        center = pos + radius * np.array([-np.sin(heading), np.cos(heading)]) * sgn
        phi0 = np.arctan2(pos[1] - center[1], pos[0] - center[0])
        phis = phi0 + np.linspace(0.0, angle, n, endpoint=False)[1:]
        seg = center + radius * np.stack([np.cos(phis), np.sin(phis)], axis=-1)
        pieces.append(seg)
        heading = heading + angle
        pos = center + radius * np.array(
            [np.cos(phi0 + angle), np.sin(phi0 + angle)]
        )

    pieces.append(np.zeros((1, 2)))
    straight(100.0, 26)
    arc(150.0, np.deg2rad(45.0), 40)
    arc(150.0, np.deg2rad(-45.0), 40)
    straight(120.0, 31)
    points = np.concatenate(pieces, axis=0)
    return Track(points=points, closed=False, d_max=d_max)


def test_track(d_max: float = 10.0) -> Track:
    """Default simulation track."""
    return s_curve_track(d_max=d_max)
