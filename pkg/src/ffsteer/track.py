"""Closed race tracks as arc-length parameterised centerlines.

A track is built from straight, arc and clothoid segments (or imported from
CSV), resampled at a uniform spacing, and queried through :meth:`Track.project`
to obtain progress and signed lateral/heading errors of a vehicle pose.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ffsteer.errors import NonClosure, OffTrack

TWO_PI = 2.0 * math.pi
_RK4_SUBSTEP = 0.1
_CLOSURE_TOL = 0.5
_PROJECT_WINDOW = 20.0
_MAX_PROJECT_DIST = 50.0


@dataclass(frozen=True)
class Segment:
    """One piece of centerline.

    ``kind`` is ``"straight"``, ``"arc"`` or ``"clothoid"``. Arcs use
    ``curvature``; clothoids ramp linearly from ``curvature`` to
    ``curvature_end`` over ``length``.
    """

    kind: str
    length: float
    curvature: float = 0.0
    curvature_end: float | None = None

    def curvature_at(self, u: float) -> float:
        """Curvature at distance ``u`` from the segment start."""
        if self.kind == "straight":
            return 0.0
        if self.kind == "arc":
            return self.curvature
        k1 = self.curvature if self.curvature_end is None else self.curvature_end
        return self.curvature + (k1 - self.curvature) * u / self.length

    @classmethod
    def from_dict(cls, d: dict) -> "Segment":
        return cls(
            kind=d["kind"],
            length=float(d["length"]),
            curvature=float(d.get("curvature", 0.0)),
            curvature_end=None if d.get("curvature_end") is None else float(d["curvature_end"]),
        )

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "length": self.length, "curvature": self.curvature}
        if self.curvature_end is not None:
            out["curvature_end"] = self.curvature_end
        return out


@dataclass(frozen=True)
class TrackPoint:
    s: float
    x: float
    y: float
    heading: float
    curvature: float


@dataclass(frozen=True)
class Projection:
    s: float
    lateral_error: float
    heading_error: float


def wrap_angle(a: float) -> float:
    """Wrap an angle to ``[-pi, pi)``."""
    return (a + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True, eq=False)
class Track:
    """Uniformly resampled centerline.

    For closed tracks the last stored point precedes ``total_length``; the
    point at ``s = total_length`` coincides with the start and is implied.
    """

    s: np.ndarray
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    curvature: np.ndarray
    closed: bool
    total_length: float
    _ext: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for name in ("s", "x", "y", "heading", "curvature"):
            arr = np.ascontiguousarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.s)
        if n < 2:
            raise ValueError("a track needs at least two points")
        if np.any(np.diff(self.s) <= 0.0) or self.s[0] != 0.0:
            raise ValueError("s must start at 0 and increase strictly")
        if self.closed:
            # heading of the implied closing point, continuous with the last sample
            h_end = self.heading[-1] + wrap_angle(self.heading[0] - self.heading[-1])
            ext = {
                "s": np.append(self.s, self.total_length),
                "x": np.append(self.x, self.x[0]),
                "y": np.append(self.y, self.y[0]),
                "heading": np.append(self.heading, h_end),
                "curvature": np.append(self.curvature, self.curvature[0]),
            }
            ext["turn"] = h_end - self.heading[0]
        else:
            ext = {k: getattr(self, k) for k in ("s", "x", "y", "heading", "curvature")}
            ext["turn"] = self.heading[-1] - self.heading[0]
        ext["ds"] = float(self.total_length / (n if self.closed else n - 1))
        self._ext.update(ext)

    # ------------------------------------------------------------------ basics
    def __len__(self) -> int:
        return len(self.s)

    @property
    def spacing(self) -> float:
        return self._ext["ds"]

    @property
    def points(self) -> list[TrackPoint]:
        return [
            TrackPoint(float(a), float(b), float(c), float(d), float(e))
            for a, b, c, d, e in zip(self.s, self.x, self.y, self.heading, self.curvature)
        ]

    @property
    def total_turn(self) -> float:
        """Net heading change over the track [rad]."""
        return float(self._ext["turn"])

    def wrap_s(self, s):
        if self.closed:
            return np.mod(s, self.total_length) if isinstance(s, np.ndarray) else s % self.total_length
        return np.clip(s, 0.0, self.total_length)

    def _interp(self, key: str, s):
        ext = self._ext
        return np.interp(self.wrap_s(s), ext["s"], ext[key])

    def curvature_at(self, s):
        return self._interp("curvature", s)

    def heading_at(self, s):
        return self._interp("heading", s)

    def position_at(self, s) -> tuple:
        return self._interp("x", s), self._interp("y", s)

    def curvature_integral(self) -> float:
        """Integral of curvature over arc length (trapezoid on the samples)."""
        ext = self._ext
        return float(np.trapezoid(ext["curvature"], ext["s"]))

    # -------------------------------------------------------------- projection
    def project(self, x: float, y: float, s_hint: float) -> Projection:
        """Project a point onto the centerline near ``s_hint``.

        Returns the arc length of the locally nearest centerline point and the
        signed lateral error (positive to the left of the path tangent). The
        heading error is left as zero here; use :meth:`project_pose`.
        """
        s, e = self._project_xy(x, y, s_hint)
        return Projection(s, e, 0.0)

    def project_pose(self, x: float, y: float, yaw: float, s_hint: float) -> Projection:
        s, e = self._project_xy(x, y, s_hint)
        return Projection(s, e, wrap_angle(yaw - float(self.heading_at(s))))

    def _nearest_index(self, qx: float, qy: float, s_hint: float) -> int:
        n = len(self.s)
        ds = self.spacing
        w = int(math.ceil(_PROJECT_WINDOW / ds))
        i0 = int(round(float(self.wrap_s(s_hint)) / ds))
        offs = np.arange(-w, w + 1)
        if self.closed:
            idx = (i0 + offs) % n
        else:
            idx = np.clip(i0 + offs, 0, n - 1)
        d2 = (self.x[idx] - qx) ** 2 + (self.y[idx] - qy) ** 2
        j = int(np.argmin(d2))
        at_edge = self.closed and (j == 0 or j == len(idx) - 1)
        if at_edge or d2[j] > _MAX_PROJECT_DIST**2:
            d2_all = (self.x - qx) ** 2 + (self.y - qy) ** 2
            k = int(np.argmin(d2_all))
            if d2_all[k] > _MAX_PROJECT_DIST**2:
                raise OffTrack(f"point ({qx:.2f}, {qy:.2f}) is {math.sqrt(d2_all[k]):.1f} m from the centerline")
            return k
        return int(idx[j])

    def _local_offset(self, k: int, qx: float, qy: float) -> tuple[float, float]:
        # osculating-circle projection at sample k: exact on arcs and straights
        h = self.heading[k]
        tx, ty = math.cos(h), math.sin(h)
        dx, dy = qx - self.x[k], qy - self.y[k]
        along = dx * tx + dy * ty
        lat = -dx * ty + dy * tx
        kappa = self.curvature[k]
        if abs(kappa) < 1e-6:
            return along, lat
        r = 1.0 / kappa
        sgn = 1.0 if r > 0 else -1.0
        # vector from circle center to the query point, in (t, n) coordinates
        ct, cn = along, lat - r
        dist = math.hypot(ct, cn)
        phi = math.atan2(ct, -sgn * cn)
        return phi * abs(r), r - sgn * dist

    def _project_xy(self, x: float, y: float, s_hint: float) -> tuple[float, float]:
        k = self._nearest_index(x, y, s_hint)
        ds = self.spacing
        n = len(self.s)
        off, lat = self._local_offset(k, x, y)
        for _ in range(2):
            if abs(off) <= 0.5 * ds:
                break
            step = int(round(off / ds))
            k2 = k + step
            if self.closed:
                k2 %= n
            else:
                k2 = min(max(k2, 0), n - 1)
            if k2 == k:
                break
            k = k2
            off, lat = self._local_offset(k, x, y)
        s = float(self.s[k] + off)
        s = float(self.wrap_s(s))
        return s, lat

    # ------------------------------------------------------------------- I/O
    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "x", "y", "heading", "curvature"])
            for row in zip(self.s, self.x, self.y, self.heading, self.curvature):
                w.writerow([repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path: str | Path, closed: bool = True, spacing: float | None = None) -> "Track":
        """Load a centerline CSV.

        ``s``, ``heading`` and ``curvature`` are recomputed from positions when
        absent. The implied closing point is assumed for closed tracks.
        """
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ValueError(f"{path}: no rows")
        x = np.array([float(r["x"]) for r in rows])
        y = np.array([float(r["y"]) for r in rows])
        has = rows[0].keys()
        if "s" in has and rows[0]["s"] not in ("", None):
            s = np.array([float(r["s"]) for r in rows])
        else:
            seg = np.hypot(np.diff(x), np.diff(y))
            s = np.concatenate([[0.0], np.cumsum(seg)])
        if closed:
            total = float(s[-1] + math.hypot(x[0] - x[-1], y[0] - y[-1]))
        else:
            total = float(s[-1])
        if "heading" in has and rows[0]["heading"] not in ("", None):
            heading = np.unwrap(np.array([float(r["heading"]) for r in rows]))
        else:
            heading = _headings_from_positions(x, y, closed)
        if "curvature" in has and rows[0]["curvature"] not in ("", None):
            curvature = np.array([float(r["curvature"]) for r in rows])
        else:
            curvature = _curvature_from_heading(s, heading, total, closed)
        track = cls(s=s - s[0], x=x, y=y, heading=heading, curvature=curvature, closed=closed, total_length=total)
        if spacing is not None:
            track = resample(track, spacing)
        return track


def _headings_from_positions(x: np.ndarray, y: np.ndarray, closed: bool) -> np.ndarray:
    if closed:
        dx = np.roll(x, -1) - np.roll(x, 1)
        dy = np.roll(y, -1) - np.roll(y, 1)
    else:
        dx, dy = np.gradient(x), np.gradient(y)
    return np.unwrap(np.arctan2(dy, dx))


def _curvature_from_heading(s: np.ndarray, h: np.ndarray, total: float, closed: bool) -> np.ndarray:
    if not closed:
        return np.gradient(h, s)
    turn = wrap_angle(h[0] - h[-1]) + h[-1] - h[0]
    s_ext = np.concatenate([[s[-1] - total], s, [total]])
    h_ext = np.concatenate([[h[-1] - turn], h, [h[0] + turn]])
    return np.gradient(h_ext, s_ext)[1:-1]


def resample(track: Track, spacing: float) -> Track:
    """Linearly resample a track at (approximately) ``spacing`` metres."""
    L = track.total_length
    if track.closed:
        n = max(int(round(L / spacing)), 3)
        s_new = np.arange(n) * (L / n)
    else:
        n = max(int(round(L / spacing)), 1) + 1
        s_new = np.linspace(0.0, L, n)
    ext = track._ext
    return Track(
        s=s_new,
        x=np.interp(s_new, ext["s"], ext["x"]),
        y=np.interp(s_new, ext["s"], ext["y"]),
        heading=np.interp(s_new, ext["s"], ext["heading"]),
        curvature=np.interp(s_new, ext["s"], ext["curvature"]),
        closed=track.closed,
        total_length=L,
    )


# ---------------------------------------------------------------- building
def _rk4_pose(x: float, y: float, h: float, seg: Segment, u: float, du: float) -> tuple[float, float, float]:
    """One classic RK4 step of (x, y, heading)' = (cos h, sin h, curvature(u))."""
    k_a = seg.curvature_at(u)
    k_m = seg.curvature_at(u + 0.5 * du)
    k_b = seg.curvature_at(u + du)
    h2 = h + 0.5 * du * k_a
    h3 = h + 0.5 * du * k_m
    h4 = h + du * k_m
    x += du * (math.cos(h) + 2.0 * math.cos(h2) + 2.0 * math.cos(h3) + math.cos(h4)) / 6.0
    y += du * (math.sin(h) + 2.0 * math.sin(h2) + 2.0 * math.sin(h3) + math.sin(h4)) / 6.0
    h += du * (k_a + 4.0 * k_m + k_b) / 6.0
    return x, y, h


def _integrate(segments: Sequence[Segment], s_query: np.ndarray) -> tuple[np.ndarray, ...]:
    """Integrate the centerline ODE and sample pose at sorted ``s_query``."""
    out_x = np.empty(len(s_query))
    out_y = np.empty(len(s_query))
    out_h = np.empty(len(s_query))
    out_k = np.empty(len(s_query))
    x = y = h = 0.0
    s0 = 0.0
    q = 0
    nq = len(s_query)
    for seg in segments:
        s1 = s0 + seg.length
        nsub = max(int(math.ceil(seg.length / _RK4_SUBSTEP)), 1)
        du = seg.length / nsub
        u = 0.0
        for _ in range(nsub):
            u_next = u + du
            # emit all queries inside [s0 + u, s0 + u_next)
            while q < nq and s_query[q] < s0 + u_next - 1e-12:
                dq = s_query[q] - (s0 + u)
                out_x[q], out_y[q], out_h[q] = _rk4_pose(x, y, h, seg, u, dq) if dq > 0 else (x, y, h)
                out_k[q] = seg.curvature_at(max(dq, 0.0) + u)
                q += 1
            x, y, h = _rk4_pose(x, y, h, seg, u, du)
            u = u_next
        s0 = s1
    while q < nq:
        out_x[q], out_y[q], out_h[q] = x, y, h
        out_k[q] = segments[-1].curvature_at(segments[-1].length)
        q += 1
    return out_x, out_y, out_h, out_k


def build_synthetic_track(
    segments: Iterable[Segment | dict],
    closed: bool = True,
    spacing: float = 1.0,
) -> Track:
    """Build a track from segments, resampled at uniform ``spacing``.

    Raises:
        NonClosure: if ``closed`` and the end point misses the start by 0.5 m
            or more.
    """
    segs = [s if isinstance(s, Segment) else Segment.from_dict(s) for s in segments]
    if not segs:
        raise ValueError("no segments")
    for seg in segs:
        if seg.length <= 0.0:
            raise ValueError(f"segment length must be positive: {seg}")
        if seg.kind not in ("straight", "arc", "clothoid"):
            raise ValueError(f"unknown segment kind {seg.kind!r}")
    L = float(sum(seg.length for seg in segs))
    if closed:
        n = max(int(round(L / spacing)), 3)
        s = np.arange(n + 1) * (L / n)
        s[-1] = L
    else:
        n = max(int(round(L / spacing)), 1)
        s = np.linspace(0.0, L, n + 1)
    x, y, h, k = _integrate(segs, s)
    if closed:
        res_x, res_y = x[-1] - x[0], y[-1] - y[0]
        residual = math.hypot(res_x, res_y)
        if residual >= _CLOSURE_TOL:
            raise NonClosure(f"closure residual {residual:.3f} m >= {_CLOSURE_TOL} m")
        turn = h[-1] - h[0]
        res_h = turn - TWO_PI * round(turn / TWO_PI)
        frac = s / L
        x = x - frac * res_x
        y = y - frac * res_y
        h = h - frac * res_h
        k = k - res_h / L
        x, y, h, k, s = x[:-1], y[:-1], h[:-1], k[:-1], s[:-1]
    return Track(s=s, x=x, y=y, heading=h, curvature=k, closed=closed, total_length=L)


def default_segments() -> list[Segment]:
    """Benchmark layout: two hairpins, two fast sweepers, three straights per half.

    The second half repeats the first; since the first half turns by exactly
    pi, the layout closes by point symmetry.
    """
    sweep_ramp, sweep_arc, k_sweep = 50.0, 50.0, 0.01
    hp_ramp, k_hp = 25.0, 0.05
    sweep_turn = k_sweep * (sweep_ramp + sweep_arc)
    hp_arc = (math.pi - sweep_turn - k_hp * hp_ramp) / k_hp
    half = [
        Segment("straight", 250.0),
        Segment("clothoid", sweep_ramp, 0.0, k_sweep),
        Segment("arc", sweep_arc, k_sweep),
        Segment("clothoid", sweep_ramp, k_sweep, 0.0),
        Segment("straight", 150.0),
        Segment("clothoid", hp_ramp, 0.0, k_hp),
        Segment("arc", hp_arc, k_hp),
        Segment("clothoid", hp_ramp, k_hp, 0.0),
        Segment("straight", 100.0),
    ]
    return half + half


def default_track(spacing: float = 1.0) -> Track:
    return build_synthetic_track(default_segments(), closed=True, spacing=spacing)
