"""Cubic Bezier segments in the 7-D joint space
(robot1 x, y, robot2 x, y, object x, y, yaw)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "JOINT_DIM",
    "BezierSegment",
    "bernstein",
    "bezier_eval",
    "bezier_derivative",
    "gauss_legendre_unit",
]

JOINT_DIM = 7


def bernstein(s, order: int = 0) -> np.ndarray:
    """Cubic Bernstein basis (or its s-derivative) evaluated at ``s``; shape (len(s), 4)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u = 1.0 - s
    if order == 0:
        return np.stack([u**3, 3 * s * u**2, 3 * s**2 * u, s**3], axis=1)
    if order == 1:
        return np.stack([-3 * u**2, 3 * u**2 - 6 * s * u, 6 * s * u - 3 * s**2, 3 * s**2], axis=1)
    if order == 2:
        return np.stack([6 * u, -12 * u + 6 * s, 6 * u - 12 * s, 6 * s], axis=1)
    raise ValueError("order must be 0, 1 or 2")


@dataclass
class BezierSegment:
    control_points: np.ndarray
    region_index: int = 0
    span: float = 1.0

    def __post_init__(self):
        self.control_points = np.asarray(self.control_points, dtype=float)
        if self.control_points.shape[0] != 4:
            raise ValueError("a cubic segment has exactly four control points")

    def to_dict(self) -> dict:
        return {"control_points": self.control_points.tolist(),
                "region_index": self.region_index, "span": self.span}

    @classmethod
    def from_dict(cls, d: dict) -> "BezierSegment":
        return cls(d["control_points"], int(d["region_index"]), float(d.get("span", 1.0)))


def bezier_eval(seg: BezierSegment, s) -> np.ndarray:
    scalar = np.ndim(s) == 0
    out = bernstein(s) @ seg.control_points
    return out[0] if scalar else out


def bezier_derivative(seg: BezierSegment, s, order: int = 1) -> np.ndarray:
    """Time derivative: the s-derivative divided by ``span**order``."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    scalar = np.ndim(s) == 0
    out = (bernstein(s, order) @ seg.control_points) / seg.span**order
    return out[0] if scalar else out


def gauss_legendre_unit(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0
