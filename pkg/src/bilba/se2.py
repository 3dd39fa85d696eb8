"""Planar rigid transforms stored as ``(x, y, theta)`` arrays.

Composition follows the usual convention: ``compose(a, b)`` maps a point
expressed in frame ``b`` through ``b`` then ``a``.
"""

from __future__ import annotations

import math

import numpy as np

SMALL_ANGLE = 1e-9


def pose(x: float, y: float, theta: float) -> np.ndarray:
    return np.array([x, y, theta], dtype=float)


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    c, s = math.cos(a[2]), math.sin(a[2])
    return np.array(
        [
            a[0] + c * b[0] - s * b[1],
            a[1] + s * b[0] + c * b[1],
            a[2] + b[2],
        ]
    )


def inverse(a: np.ndarray) -> np.ndarray:
    c, s = math.cos(a[2]), math.sin(a[2])
    return np.array(
        [
            -(c * a[0] + s * a[1]),
            -(-s * a[0] + c * a[1]),
            -a[2],
        ]
    )


def transform_points(a: np.ndarray, pts: np.ndarray) -> np.ndarray:
    pts = np.asarray(pts, dtype=float)
    return pts @ rot(a[2]).T + a[:2]


def _v_coeffs(theta: float) -> tuple[float, float]:
    # V = a*I + b*J, J the 2x2 skew generator
    if abs(theta) < 1e-6:
        t2 = theta * theta
        return 1.0 - t2 / 6.0, theta / 2.0 - theta * t2 / 24.0
    return math.sin(theta) / theta, (1.0 - math.cos(theta)) / theta


def exp(xi: np.ndarray) -> np.ndarray:
    """Tangent vector ``(theta, rho_x, rho_y)`` to a pose ``(x, y, theta)``."""
    theta, rx, ry = float(xi[0]), float(xi[1]), float(xi[2])
    a, b = _v_coeffs(theta)
    return np.array([a * rx - b * ry, b * rx + a * ry, theta])


def log(g: np.ndarray) -> np.ndarray:
    """Pose ``(x, y, theta)`` to tangent vector ``(theta, rho_x, rho_y)``.

    The rotation is wrapped into ``(-pi, pi]`` first.
    """
    theta = wrap_angle(float(g[2]))
    if theta == -math.pi:
        theta = math.pi
    a, b = _v_coeffs(theta)
    det = a * a + b * b
    x, y = float(g[0]), float(g[1])
    return np.array([theta, (a * x + b * y) / det, (-b * x + a * y) / det])
