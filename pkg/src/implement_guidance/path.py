"""Reference path: construction, sampling and projection of world poses.

A :class:`ReferencePath` is a dense sequence of samples.  Between consecutive
samples the geometry is a circular-arc piece of constant curvature (a straight
chord when the curvature is zero), so paths built from lines and arcs are
represented without interpolation error and projection onto them is exact.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import PathError, ProjectionError
from .geometry import FrenetState, wrap_angle

logger = logging.getLogger(__name__)

DS_MAX = 0.05
CORRIDOR_HALF_WIDTH = 10.0
_TIE_TOL = 1e-9
_ARC_K_MIN = 1e-6


@dataclass(frozen=True)
class WorldPose:
    """Vehicle pose in the world frame; ``delta`` is the applied steering angle."""

    x: float
    y: float
    theta: float
    delta: float = 0.0


@dataclass(frozen=True)
class PathSample:
    s: float
    x: float
    y: float
    heading: float
    curvature: float

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Line:
    length: float
    label: str | None = None


@dataclass(frozen=True)
class Arc:
    length: float
    curvature: float
    label: str | None = None


Segment = Union[Line, Arc]


@dataclass(frozen=True)
class SegmentSpan:
    label: str
    kind: str  # "line", "arc" or "recorded"
    s_start: float
    s_end: float
    curvature: float


@dataclass(frozen=True)
class Projection:
    """Result of projecting a pose: Frenet state plus local path data."""

    frenet: FrenetState
    curvature: float
    heading: float
    index: int
    distance: float
    ambiguous: bool = False


@dataclass
class ProjectionCursor:
    """Warm-start state for repeated projections along one trajectory.

    Owned by a single caller; the path itself is never mutated.
    """

    index: int | None = None
    window: int = 40


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


class ReferencePath:
    """Immutable sampled trajectory with per-sample heading and signed curvature."""

    def __init__(
        self,
        s: Sequence[float],
        x: Sequence[float],
        y: Sequence[float],
        heading: Sequence[float],
        curvature: Sequence[float],
        *,
        piece_curvature: Sequence[float] | None = None,
        geometric_curvature: Sequence[float] | None = None,
        piece_labels: Sequence[str] | None = None,
        spans: Sequence[SegmentSpan] | None = None,
        ds_max: float = DS_MAX,
        c_max: float = math.inf,
    ):
        self._s = _frozen(s)
        self._x = _frozen(x)
        self._y = _frozen(y)
        self._h = _frozen(heading)
        self._c = _frozen(curvature)
        n = self._s.size
        if n < 2:
            raise PathError("a path needs at least 2 samples")
        if not all(a.shape == (n,) for a in (self._x, self._y, self._h, self._c)):
            raise PathError("sample arrays must have equal length")
        if not all(np.isfinite(a).all() for a in (self._s, self._x, self._y, self._h, self._c)):
            raise PathError("path samples must be finite")
        if self._s[0] != 0.0:
            raise PathError("curvilinear abscissa must start at 0")
        ds = np.diff(self._s)
        if not (ds > 0).all():
            raise PathError("curvilinear abscissa must be strictly increasing")
        if ds.max() > ds_max * (1.0 + 1e-9):
            raise PathError(f"sample spacing {ds.max():.4f} m exceeds ds_max {ds_max:.4f} m")
        if (np.abs(np.diff(self._h)) >= math.pi).any():
            raise PathError("heading jumps by pi or more between samples")
        if (np.abs(self._c) > c_max * (1.0 + 1e-12)).any():
            raise PathError(f"curvature exceeds c_max = {c_max:.6f} 1/m")
        self.ds_max = ds_max
        self.c_max = c_max

        self._pc = _frozen(piece_curvature if piece_curvature is not None else 0.5 * (self._c[:-1] + self._c[1:]))
        self._pk = _frozen(geometric_curvature if geometric_curvature is not None else np.zeros(n - 1))
        if self._pc.shape != (n - 1,) or self._pk.shape != (n - 1,):
            raise PathError("piece arrays must have one entry per sample interval")
        self._pl = _frozen(ds)
        # start direction of each geometric piece; chord direction for straight pieces
        chord = np.arctan2(np.diff(self._y), np.diff(self._x))
        self._pdir = _frozen(np.where(self._pk != 0.0, self._h[:-1], chord))
        self._labels = tuple(piece_labels) if piece_labels is not None else ("path",) * (n - 1)
        if len(self._labels) != n - 1:
            raise PathError("one label per sample interval is required")
        if spans is None:
            spans = (SegmentSpan("path", "recorded", 0.0, float(self._s[-1]), float(np.max(np.abs(self._c)))),)
        self.spans: tuple[SegmentSpan, ...] = tuple(spans)

    # -- basic accessors -------------------------------------------------
    def __len__(self) -> int:
        return int(self._s.size)

    @property
    def s(self) -> np.ndarray:
        return self._s

    @property
    def x(self) -> np.ndarray:
        return self._x

    @property
    def y(self) -> np.ndarray:
        return self._y

    @property
    def heading(self) -> np.ndarray:
        return self._h

    @property
    def curvature(self) -> np.ndarray:
        return self._c

    @property
    def total_length(self) -> float:
        return float(self._s[-1])

    @property
    def samples(self) -> list[PathSample]:
        return [
            PathSample(float(s), float(x), float(y), float(h), float(c))
            for s, x, y, h, c in zip(self._s, self._x, self._y, self._h, self._c)
        ]

    @property
    def max_abs_curvature(self) -> float:
        return float(max(np.max(np.abs(self._c)), np.max(np.abs(self._pc))))

    # -- evaluation at an abscissa ----------------------------------------
    def piece_index(self, s: float) -> int:
        i = int(np.searchsorted(self._s, s, side="right")) - 1
        return min(max(i, 0), self._s.size - 2)

    def curvature_at(self, s: float) -> float:
        return float(self._pc[self.piece_index(s)])

    def label_at(self, s: float) -> str:
        return self._labels[self.piece_index(s)]

    def kind_of(self, label: str) -> str:
        for span in self.spans:
            if span.label == label:
                return span.kind
        raise KeyError(label)

    def heading_at(self, s: float) -> float:
        i = self.piece_index(s)
        return self._heading_in_piece(i, s - self._s[i])

    def _heading_in_piece(self, i: int, sigma: float) -> float:
        if self._pk[i] != 0.0:
            return float(self._h[i] + self._pk[i] * sigma)
        frac = sigma / self._pl[i]
        return float(self._h[i] + (self._h[i + 1] - self._h[i]) * frac)

    def _point_in_piece(self, i: int, sigma: float) -> tuple[float, float, float]:
        """World point and geometric tangent direction at ``sigma`` into piece ``i``."""
        k = self._pk[i]
        h0 = self._pdir[i]
        half = 0.5 * k * sigma
        mid = h0 + half
        scale = sigma * np.sinc(half / math.pi)
        return (
            float(self._x[i] + scale * math.cos(mid)),
            float(self._y[i] + scale * math.sin(mid)),
            float(h0 + k * sigma),
        )

    def point_at(self, s: float) -> tuple[float, float]:
        i = self.piece_index(s)
        px, py, _ = self._point_in_piece(i, s - self._s[i])
        return px, py

    def pose_at(self, s: float, y: float = 0.0, theta_tilde: float = 0.0, delta: float = 0.0) -> WorldPose:
        """World pose whose Frenet coordinates are ``(s, y, theta_tilde)``."""
        i = self.piece_index(s)
        px, py, gdir = self._point_in_piece(i, s - self._s[i])
        heading = self._heading_in_piece(i, s - self._s[i])
        return WorldPose(
            px - y * math.sin(gdir),
            py + y * math.cos(gdir),
            wrap_angle(heading + theta_tilde),
            delta,
        )

    # -- projection --------------------------------------------------------
    def _closest(self, qx: float, qy: float, lo: int, hi: int):
        """Closest point of ``(qx, qy)`` on every piece in ``[lo, hi)``.

        Returns arrays ``(sigma, distance)``.
        """
        x0 = self._x[lo:hi]
        y0 = self._y[lo:hi]
        h0 = self._pdir[lo:hi]
        k = self._pk[lo:hi]
        length = self._pl[lo:hi]
        ch, sh = np.cos(h0), np.sin(h0)
        dx, dy = qx - x0, qy - y0
        sigma = dx * ch + dy * sh
        arc = np.abs(k) >= _ARC_K_MIN
        if arc.any():
            ka = k[arc]
            rx = dx[arc] + sh[arc] / ka
            ry = dy[arc] - ch[arc] / ka
            hq = np.arctan2(ka * rx, -ka * ry)
            dphi = np.pi - np.mod(np.pi - (hq - h0[arc]), 2.0 * np.pi)
            sigma[arc] = dphi / ka
        bent = (~arc) & (k != 0.0)
        for _ in range(2 if bent.any() else 0):
            # Newton refinement for barely curved pieces
            px, py, pdir = self._points(lo, hi, sigma)
            ex, ey = qx - px, qy - py
            f = ex * np.cos(pdir) + ey * np.sin(pdir)
            lat = -ex * np.sin(pdir) + ey * np.cos(pdir)
            sigma = np.where(bent, sigma + f / (1.0 - k * lat), sigma)
        clamped = (sigma < 0.0) | (sigma > length)
        sigma = np.clip(sigma, 0.0, length)
        px, py, _ = self._points(lo, hi, sigma)
        dist = np.hypot(qx - px, qy - py)
        if clamped.any():
            # on a strongly curved piece the opposite endpoint can beat the clamped one
            d_start = np.hypot(dx, dy)
            ex_x, ex_y, _ = self._points(lo, hi, length)
            d_end = np.hypot(qx - ex_x, qy - ex_y)
            use_start = clamped & (d_start < dist)
            sigma = np.where(use_start, 0.0, sigma)
            dist = np.where(use_start, d_start, dist)
            use_end = clamped & (d_end < dist)
            sigma = np.where(use_end, length, sigma)
            dist = np.where(use_end, d_end, dist)
        return sigma, dist

    def _points(self, lo: int, hi: int, sigma: np.ndarray):
        k = self._pk[lo:hi]
        h0 = self._pdir[lo:hi]
        half = 0.5 * k * sigma
        mid = h0 + half
        scale = sigma * np.sinc(half / np.pi)
        return self._x[lo:hi] + scale * np.cos(mid), self._y[lo:hi] + scale * np.sin(mid), h0 + k * sigma

    def _search(self, qx: float, qy: float, lo: int, hi: int):
        sigma, dist = self._closest(qx, qy, lo, hi)
        best = int(np.argmin(dist))
        d_best = float(dist[best])
        s_all = self._s[lo:hi] + sigma
        tied = np.abs(dist - d_best) <= _TIE_TOL
        ambiguous = False
        # near-ties within one sample spacing are the same minimum seen from adjacent pieces
        if tied.sum() > 1 and np.ptp(s_all[tied]) > self.ds_max:
            ambiguous = True
            # a tied piece whose start point also ties contributes its start abscissa
            d_start = np.hypot(qx - self._x[lo:hi], qy - self._y[lo:hi])
            start_ties = tied & (np.abs(d_start - d_best) <= _TIE_TOL)
            sigma = np.where(start_ties, 0.0, sigma)
            s_tied = (self._s[lo:hi] + sigma)[tied]
            # genuine ties resolve to the smallest abscissa
            best = int(np.flatnonzero(tied)[np.argmin(s_tied)])
        return lo + best, float(sigma[best]), float(dist[best]), ambiguous

    def project(
        self,
        pose: WorldPose,
        corridor_half_width: float = CORRIDOR_HALF_WIDTH,
        cursor: ProjectionCursor | None = None,
    ) -> Projection:
        """Project ``pose`` onto the path (see :func:`project`)."""
        n_pieces = self._s.size - 1
        found = None
        if cursor is not None and cursor.index is not None:
            lo = max(cursor.index - cursor.window, 0)
            hi = min(cursor.index + cursor.window + 1, n_pieces)
            i, sigma, dist, ambiguous = self._search(pose.x, pose.y, lo, hi)
            at_edge = (i == lo and lo > 0) or (i == hi - 1 and hi < n_pieces)
            if not at_edge:
                found = (i, sigma, dist, ambiguous)
        if found is None:
            found = self._search(pose.x, pose.y, 0, n_pieces)
        i, sigma, dist, ambiguous = found
        if sigma >= self._pl[i] and i + 1 < n_pieces:
            # a shared endpoint belongs to the following piece
            i, sigma = i + 1, 0.0
        if cursor is not None:
            cursor.index = i
        px, py, gdir = self._point_in_piece(i, sigma)
        y = -(pose.x - px) * math.sin(gdir) + (pose.y - py) * math.cos(gdir)
        if not abs(y) < corridor_half_width or not dist < corridor_half_width:
            raise ProjectionError(
                f"pose ({pose.x:.3f}, {pose.y:.3f}) is {dist:.3f} m from the path, "
                f"outside the {corridor_half_width:.3f} m corridor"
            )
        heading = self._heading_in_piece(i, sigma)
        frenet = FrenetState(
            s=float(self._s[i] + sigma),
            y=float(y),
            theta_tilde=wrap_angle(pose.theta - heading),
        )
        return Projection(frenet, float(self._pc[i]), heading, i, dist, ambiguous)

    # -- export ------------------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["s", "x", "y", "heading", "curvature"])
        for row in zip(self._s, self._x, self._y, self._h, self._c):
            writer.writerow([f"{v:.9g}" for v in row])
        return buf.getvalue()


def project(
    path: ReferencePath,
    pose: WorldPose,
    corridor_half_width: float = CORRIDOR_HALF_WIDTH,
    cursor: ProjectionCursor | None = None,
) -> Projection:
    """Frenet coordinates of ``pose`` relative to ``path``.

    ``s`` is the abscissa of the closest path point, ``y`` the signed
    distance (positive to the left of the tangent) and ``theta_tilde`` the
    wrapped heading error.  With a ``cursor`` the search starts in a window
    around the previous match and falls back to a global search when the
    best candidate lies on the window edge.  Equidistant candidates farther
    apart than one sample spacing resolve to the smallest ``s`` and set
    ``ambiguous``.  Raises :class:`ProjectionError` outside the corridor.
    """
    return path.project(pose, corridor_half_width, cursor)


def _auto_labels(segments: Sequence[Segment]) -> list[str]:
    labels = []
    n_line = n_arc = 0
    for seg in segments:
        if seg.label is not None:
            labels.append(seg.label)
        elif isinstance(seg, Line):
            n_line += 1
            labels.append(f"L{n_line}")
        else:
            n_arc += 1
            labels.append(f"C{n_arc}")
    return labels


def build_path(
    segments: Sequence[Segment],
    start_pose: WorldPose | None = None,
    ds: float = DS_MAX,
    c_max: float = math.inf,
) -> ReferencePath:
    """Sample a chain of lines and constant-curvature arcs.

    Segments without a label are named ``L1, L2, ...`` and ``C1, C2, ...``
    in order of appearance.  Each segment is split into equal steps no longer
    than ``ds``; positions follow the exact line/arc geometry.
    """
    if not ds > 0:
        raise PathError(f"sample spacing must be positive, got {ds}")
    if not segments:
        raise PathError("at least one segment is required")
    start_pose = start_pose or WorldPose(0.0, 0.0, 0.0)
    labels = _auto_labels(segments)
    if len(set(labels)) != len(labels):
        raise PathError(f"segment labels must be unique, got {labels}")

    s_list = [0.0]
    x_list = [start_pose.x]
    y_list = [start_pose.y]
    h_list = [start_pose.theta]
    c_list: list[float] = []
    piece_k: list[float] = []
    piece_labels: list[str] = []
    spans: list[SegmentSpan] = []
    for seg, label in zip(segments, labels):
        if not (math.isfinite(seg.length) and seg.length > 0):
            raise PathError(f"segment {label} must have a positive length, got {seg.length}")
        k = seg.curvature if isinstance(seg, Arc) else 0.0
        if not math.isfinite(k):
            raise PathError(f"segment {label} curvature must be finite")
        if abs(k) > c_max:
            raise PathError(f"segment {label} curvature {k:.6f} 1/m exceeds c_max {c_max:.6f} 1/m")
        n = max(1, math.ceil(seg.length / ds - 1e-9))
        step = seg.length / n
        x0, y0, h0, s0 = x_list[-1], y_list[-1], h_list[-1], s_list[-1]
        for j in range(1, n + 1):
            sigma = j * step if j < n else seg.length
            half = 0.5 * k * sigma
            scale = sigma * (math.sin(half) / half if half != 0.0 else 1.0)
            x_list.append(x0 + scale * math.cos(h0 + half))
            y_list.append(y0 + scale * math.sin(h0 + half))
            h_list.append(h0 + k * sigma)
            s_list.append(s0 + sigma)
            c_list.append(k)
            piece_k.append(k)
            piece_labels.append(label)
        spans.append(SegmentSpan(label, "arc" if isinstance(seg, Arc) else "line", s0, s0 + seg.length, k))
    # a sample carries the curvature of the piece it starts; the last one closes the path
    sample_c = c_list + [c_list[-1]]
    return ReferencePath(
        s_list,
        x_list,
        y_list,
        h_list,
        sample_c,
        piece_curvature=piece_k,
        geometric_curvature=piece_k,
        piece_labels=piece_labels,
        spans=spans,
        ds_max=max(DS_MAX, ds),
        c_max=c_max,
    )


def _moving_average(values: np.ndarray, window: int) -> np.ndarray:
    if window <= 1:
        return values.copy()
    if window % 2 == 0:
        window += 1
    half = min(window // 2, (values.size - 1) // 2)
    if half == 0:
        return values.copy()
    padded = np.concatenate([np.full(half, values[0]), values, np.full(half, values[-1])])
    kernel = np.ones(2 * half + 1) / (2 * half + 1)
    out = np.convolve(padded, kernel, mode="valid")
    # keep endpoints unbiased by the edge padding
    out[:half] = values[:half]
    out[-half:] = values[-half:]
    return out


def load_path(
    points: Iterable[Sequence[float]],
    smoothing_window: int = 1,
    c_max: float = math.inf,
    ds_max: float | None = None,
) -> ReferencePath:
    """Build a path from recorded world points.

    The abscissa is the cumulative chord length.  Headings are the mean of
    adjacent chord directions, smoothed by a centered moving average of
    ``smoothing_window`` samples; curvature is their finite-difference
    derivative, clamped to ``c_max`` with a warning.
    """
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise PathError("points must be a sequence of (x, y) pairs")
    if pts.shape[0] < 3:
        raise PathError(f"at least 3 points are required, got {pts.shape[0]}")
    if not np.isfinite(pts).all():
        raise PathError("points contain NaN or infinite coordinates")
    d = np.diff(pts, axis=0)
    chord = np.hypot(d[:, 0], d[:, 1])
    if (chord == 0.0).any():
        i = int(np.flatnonzero(chord == 0.0)[0])
        raise PathError(f"duplicate consecutive points at index {i}")
    s = np.concatenate([[0.0], np.cumsum(chord)])
    phi = np.unwrap(np.arctan2(d[:, 1], d[:, 0]))
    if (np.abs(np.diff(phi)) >= math.pi).any():
        raise PathError("path reverses direction between consecutive points")
    heading = np.empty(pts.shape[0])
    heading[0] = phi[0]
    heading[-1] = phi[-1]
    heading[1:-1] = 0.5 * (phi[:-1] + phi[1:])
    heading = _moving_average(heading, smoothing_window)
    curvature = np.gradient(heading, s)
    over = np.abs(curvature) > c_max
    if over.any():
        logger.warning("clamping %d curvature estimates to c_max = %.4f 1/m", int(over.sum()), c_max)
        curvature = np.clip(curvature, -c_max, c_max)
    if ds_max is None:
        ds_max = max(DS_MAX, float(chord.max()))
        if chord.max() > DS_MAX:
            logger.warning("recorded points are up to %.3f m apart; chord interpolation is coarse", chord.max())
    return ReferencePath(s, pts[:, 0], pts[:, 1], heading, curvature, ds_max=ds_max, c_max=c_max)


def read_points_csv(source: str | Path) -> list[tuple[float, float]]:
    """Read an ``x,y`` point file."""
    with open(source, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["x", "y"]:
            raise PathError(f"{source}: expected header 'x,y', got {reader.fieldnames}")
        try:
            return [(float(row["x"]), float(row["y"])) for row in reader]
        except (TypeError, ValueError) as exc:
            raise PathError(f"{source}: malformed coordinate ({exc})") from exc


def field_course_segments(
    line_lengths: tuple[float, float, float] = (30.0, 30.0, 30.0),
    c1_radius: float = 15.0,
    c1_turn: float = 0.5 * math.pi,
    c2_radius: float = 10.0,
    c2_turn: float = -0.5 * math.pi,
) -> list[Segment]:
    """Three straight lines joined by two curves of opposite turn direction.

    Turn angles are signed (positive = left); radii are positive.
    """
    l1, l2, l3 = line_lengths
    return [
        Line(l1, "L1"),
        Arc(c1_radius * abs(c1_turn), math.copysign(1.0 / c1_radius, c1_turn), "C1"),
        Line(l2, "L2"),
        Arc(c2_radius * abs(c2_turn), math.copysign(1.0 / c2_radius, c2_turn), "C2"),
        Line(l3, "L3"),
    ]
