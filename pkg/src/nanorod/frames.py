"""Piecewise rod configurations: a centerline with an orthonormal frame.

A frame curve is a sequence of closed-form segments (straight, circular arc,
helix), each with a constant skew generator A = R^T R'.  Consecutive segments
may join continuously or through a jump carrying a translation offset and a
relative rotation; jumps are the singular points of the limit model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InadmissibleFrame
from .geometry import rotation_from_axis_angle, skew_exp, skew_exp_integral

E1 = np.array([1.0, 0.0, 0.0])


@dataclass(frozen=True)
class Segment:
    """One closed-form piece of the centerline.

    ``arc`` bends with curvature ``curvature`` in the given plane ('xy' or
    'xz'); ``helix`` combines bending with twist rate ``torsion``.  A pure
    twist is ``helix`` with zero curvature.
    """

    kind: str
    length: float
    curvature: float = 0.0
    torsion: float = 0.0
    plane: str = "xy"

    def generator(self) -> np.ndarray:
        if self.length <= 0:
            raise InadmissibleFrame(f"segment length must be positive, got {self.length}")
        k, t = self.curvature, self.torsion
        if self.kind == "straight":
            return np.zeros((3, 3))
        if self.kind == "arc":
            if self.plane == "xy":
                return np.array([[0.0, -k, 0.0], [k, 0.0, 0.0], [0.0, 0.0, 0.0]])
            if self.plane == "xz":
                return np.array([[0.0, 0.0, -k], [0.0, 0.0, 0.0], [k, 0.0, 0.0]])
            raise InadmissibleFrame(f"unknown arc plane {self.plane!r}")
        if self.kind == "helix":
            return np.array([[0.0, -k, 0.0], [k, 0.0, -t], [0.0, t, 0.0]])
        raise InadmissibleFrame(f"unknown segment kind {self.kind!r}")


@dataclass(frozen=True)
class Jump:
    """Discontinuity data at a breakpoint: offset of the centerline and relative rotation."""

    offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    angle: float = 0.0

    def rotation(self) -> np.ndarray:
        return rotation_from_axis_angle(self.axis, self.angle)

    @property
    def is_trivial(self) -> bool:
        return float(np.linalg.norm(self.offset)) == 0.0 and self.angle == 0.0


class FrameCurve:
    """Piecewise centerline/frame built from segments and optional jumps.

    ``jumps[i]`` sits between segments i and i+1; ``None`` joins them
    continuously.  Within each segment the frame is R(s) = R0 exp(s A), the
    centerline integrates the first frame column.
    """

    def __init__(self, segments, jumps=None, start_rotation=None, start_point=None):
        segments = list(segments)
        if not segments:
            raise InadmissibleFrame("frame curve needs at least one segment")
        jumps = list(jumps) if jumps is not None else [None] * (len(segments) - 1)
        if len(jumps) != len(segments) - 1:
            raise InadmissibleFrame(
                f"{len(segments)} segments need {len(segments) - 1} jump slots, got {len(jumps)}"
            )
        self.segments = segments
        self.jumps = jumps
        self._starts = []  # (arclength, R0, y0, A) per segment
        R = np.eye(3) if start_rotation is None else np.asarray(start_rotation, dtype=float)
        y = np.zeros(3) if start_point is None else np.asarray(start_point, dtype=float)
        s = 0.0
        for idx, seg in enumerate(segments):
            A = seg.generator()
            self._starts.append((s, R.copy(), y.copy(), A))
            y = y + R @ (skew_exp_integral(A, seg.length) @ E1)
            R = R @ skew_exp(A * seg.length)
            s += seg.length
            if idx < len(jumps) and jumps[idx] is not None:
                y = y + np.asarray(jumps[idx].offset, dtype=float)
                R = R @ jumps[idx].rotation()
        self.total_length = s

    @property
    def breakpoints(self):
        return [start for (start, _, _, _) in self._starts[1:]]

    def jump_records(self):
        """Nontrivial jumps as (arclength, offset, relative rotation)."""
        out = []
        for idx, jump in enumerate(self.jumps):
            if jump is not None and not jump.is_trivial:
                sigma = self._starts[idx + 1][0]
                out.append((sigma, np.asarray(jump.offset, dtype=float), jump.rotation()))
        return out

    def _segment_at(self, s: float):
        if s < -1e-12 or s > self.total_length + 1e-12:
            raise InadmissibleFrame(f"arclength {s} outside [0, {self.total_length}]")
        for start, R0, y0, A in reversed(self._starts):
            if s >= start - 1e-12:
                return start, R0, y0, A
        return self._starts[0]

    def frame(self, s: float) -> np.ndarray:
        start, R0, _, A = self._segment_at(s)
        return R0 @ skew_exp(A * (s - start))

    def position(self, s: float) -> np.ndarray:
        start, R0, y0, A = self._segment_at(s)
        return y0 + R0 @ (skew_exp_integral(A, s - start) @ E1)

    def generator(self, s: float) -> np.ndarray:
        """The skew matrix R^T dR/ds of the segment containing s."""
        return self._segment_at(s)[3]

    def directors(self, s: float):
        R = self.frame(s)
        return R[:, 0], R[:, 1], R[:, 2]

    def check_admissible(self, samples_per_segment: int = 7, tol: float = 1e-8) -> None:
        for idx, seg in enumerate(self.segments):
            start = self._starts[idx][0]
            for u in np.linspace(0.0, seg.length * (1.0 - 1e-12), samples_per_segment):
                R = self.frame(start + u)
                if np.linalg.norm(R.T @ R - np.eye(3)) > tol or np.linalg.det(R) < 0.5:
                    raise InadmissibleFrame(f"frame not a rotation at arclength {start + u}")


def single_segment(kind: str, length: float, curvature: float = 0.0, torsion: float = 0.0, plane: str = "xy") -> FrameCurve:
    return FrameCurve([Segment(kind, length, curvature, torsion, plane)])
