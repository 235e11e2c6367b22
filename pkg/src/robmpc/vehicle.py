"""Bicycle-model lateral dynamics, track geometry, symmetry reduction and the
car-maneuvering uncertain optimal control instance.

The full state is x = (p1, p2, theta, v_y, r); the symmetry-reduced state is
(v_y, r, xi, d, kappa) where xi is the heading relative to the local track
tangent, d the signed lateral offset (left of the tangent positive) and kappa
the local curvature of the centerline.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace

import numpy as np

from .ocp import TimeGrid, UMocpInstance, UncertaintyBox

__all__ = [
    "VehicleParams",
    "VehicleState",
    "Track",
    "ReducedState",
    "dynamics_rhs",
    "make_dynamics",
    "project_to_track",
    "local_track_params",
    "symmetry_reduce",
    "mirror_reduce",
    "wrap_angle",
    "arc_coordinates",
    "build_car_umocp",
    "DEFAULT_KAPPA_RANGE",
]

DEFAULT_KAPPA_RANGE = (-0.1, 0.1)


@dataclass(frozen=True)
class VehicleParams:
    c_alpha_f: float = 65100.0  # front cornering stiffness
    c_alpha_r: float = 54100.0  # rear cornering stiffness
    l_f: float = 1.0
    l_r: float = 1.45
    m: float = 1275.0
    i_z: float = 1627.0
    v_x: float = 30.0

    def __post_init__(self):
        for name in ("c_alpha_f", "c_alpha_r", "l_f", "l_r", "m", "i_z"):
            if np.any(np.asarray(getattr(self, name)) <= 0):
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class VehicleState:
    p1: float
    p2: float
    theta: float
    v_y: float
    r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.theta, self.v_y, self.r])

    @staticmethod
    def from_array(x) -> "VehicleState":
        p1, p2, theta, v_y, r = (float(v) for v in x)
        return VehicleState(p1, p2, theta, v_y, r)


@dataclass(frozen=True)
class ReducedState:
    v_y: float
    r: float
    xi: float
    d: float
    kappa: float

    def as_array(self) -> np.ndarray:
        return np.array([self.v_y, self.r, self.xi, self.d, self.kappa])

    @staticmethod
    def from_array(x) -> "ReducedState":
        v_y, r, xi, d, kappa = (float(v) for v in x)
        return ReducedState(v_y, r, xi, d, kappa)


def wrap_angle(x):
    """Wrap an angle to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(x, dtype=float), 2.0 * np.pi)


def dynamics_rhs(params: VehicleParams, state, u):
    """Right-hand side of the five-state bicycle model; vectorized over
    leading axes of state.  Model parameters may themselves be arrays
    broadcastable against the batch (used by the sensitivity study)."""
    vx = np.asarray(params.v_x, dtype=float)
    if np.any(vx == 0.0):
        raise ValueError("longitudinal speed v_x must be nonzero")
    state = np.asarray(state, dtype=float)
    theta = state[..., 2]
    v_y = state[..., 3]
    r = state[..., 4]
    caf, car = params.c_alpha_f, params.c_alpha_r
    lf, lr = params.l_f, params.l_r
    m, iz = params.m, params.i_z
    cu = np.cos(u)
    c1 = -(caf * cu + car) / (m * vx)
    c2 = -(lf * caf * cu - lr * car) / (m * vx) - vx
    c3 = caf * cu / m
    c4 = -(lf * caf * cu - lr * car) / (iz * vx)
    c5 = -(lf**2 * caf * cu + lr**2 * car) / (iz * vx)
    c6 = lf * caf * cu / iz
    out = np.empty_like(state)
    out[..., 0] = vx * np.cos(theta) - v_y * np.sin(theta)
    out[..., 1] = vx * np.sin(theta) + v_y * np.cos(theta)
    out[..., 2] = r
    out[..., 3] = c1 * v_y + c2 * r + c3 * u
    out[..., 4] = c4 * v_y + c5 * r + c6 * u
    return out


def make_dynamics(params: VehicleParams):
    def f(x, u):
        return dynamics_rhs(params, x, u)

    return f


@dataclass(frozen=True)
class Track:
    """Polyline centerline with cumulative arclength."""

    points: np.ndarray  # (n, 2)
    closed: bool = False
    d_max: float = 10.0
    kappa_range: tuple[float, float] = DEFAULT_KAPPA_RANGE

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("centerline needs at least two planar points")
        seg = np.diff(pts, axis=0)
        seg_len = np.hypot(seg[:, 0], seg[:, 1])
        if np.any(seg_len == 0.0):
            raise ValueError("consecutive centerline points must be distinct")
        if self.d_max <= 0:
            raise ValueError("d_max must be positive")
        object.__setattr__(self, "points", pts)

    @property
    def segments(self) -> np.ndarray:
        pts = self.points
        if self.closed:
            return np.vstack([pts, pts[:1]])
        return pts

    @property
    def seg_vectors(self) -> np.ndarray:
        p = self.segments
        return np.diff(p, axis=0)

    @property
    def seg_lengths(self) -> np.ndarray:
        v = self.seg_vectors
        return np.hypot(v[:, 0], v[:, 1])

    @property
    def cum_length(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.seg_lengths)])

    @property
    def length(self) -> float:
        return float(self.cum_length[-1])

    @property
    def seg_angles(self) -> np.ndarray:
        v = self.seg_vectors
        return np.arctan2(v[:, 1], v[:, 0])

    def wrap_s(self, s: float) -> float:
        if self.closed:
            return float(np.mod(s, self.length))
        return float(np.clip(s, 0.0, self.length))

    def transformed(self, rotation: float = 0.0, translation=(0.0, 0.0)) -> "Track":
        c, s = np.cos(rotation), np.sin(rotation)
        rot = np.array([[c, -s], [s, c]])
        return replace(self, points=self.points @ rot.T + np.asarray(translation))

    def mirrored(self) -> "Track":
        """Reflection across the x-axis (reverses the left/right convention)."""
        return replace(self, points=self.points * np.array([1.0, -1.0]))

    @staticmethod
    def from_csv(path_or_buffer) -> "Track":
        if hasattr(path_or_buffer, "read"):
            text = path_or_buffer.read()
        else:
            with open(path_or_buffer, "r", encoding="utf-8", newline="") as fh:
                text = fh.read()
        closed = False
        d_max = 10.0
        rows = []
        for raw in text.replace("\r\n", "\n").split("\n"):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta = line[1:].strip()
                if ":" in meta:
                    key, _, value = meta.partition(":")
                    key = key.strip().lower()
                    value = value.strip()
                    if key == "closed":
                        closed = value.lower() == "true"
                    elif key == "d_max":
                        d_max = float(value)
                continue
            if line.lower().replace(" ", "") == "x,y":
                continue
            xs, ys = line.split(",")
            rows.append((float(xs), float(ys)))
        return Track(points=np.array(rows), closed=closed, d_max=d_max)

    def to_csv(self, path) -> None:
        buf = io.StringIO()
        buf.write(f"# closed: {'true' if self.closed else 'false'}\n")
        buf.write(f"# d_max: {format(self.d_max, '.17g')}\n")
        buf.write("x,y\n")
        for x, y in self.points:
            buf.write(f"{format(x, '.17g')},{format(y, '.17g')}\n")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())


def project_to_track(track: Track, p) -> tuple[np.ndarray, float, float]:
    """Closest point on the centerline: returns (foot point, arclength, signed
    distance).  Ties are broken toward the smallest arclength; the sign is
    positive left of the local tangent."""
    p = np.asarray(p, dtype=float)
    a = track.segments[:-1]
    v = track.seg_vectors
    lengths = track.seg_lengths
    t = np.clip(np.einsum("ij,ij->i", p - a, v) / lengths**2, 0.0, 1.0)
    feet = a + t[:, None] * v
    dists = np.hypot(*(p - feet).T)
    best = dists.min()
    candidates = np.nonzero(dists <= best + 1e-12)[0]
    s_cands = track.cum_length[candidates] + t[candidates] * lengths[candidates]
    pick = candidates[np.argmin(s_cands)]
    foot = feet[pick]
    s = track.wrap_s(track.cum_length[pick] + t[pick] * lengths[pick])
    cross = v[pick, 0] * (p[1] - foot[1]) - v[pick, 1] * (p[0] - foot[0])
    d = float(np.sign(cross) * dists[pick]) if dists[pick] > 0 else 0.0
    return foot, s, d


def _segment_index(track: Track, s: float) -> int:
    s = track.wrap_s(s)
    idx = int(np.searchsorted(track.cum_length, s, side="right") - 1)
    return min(max(idx, 0), len(track.seg_lengths) - 1)


def local_track_params(track: Track, s: float) -> tuple[float, float]:
    """Tangent angle and curvature at arclength s.  Curvature is a central
    finite difference of the tangent angle over one segment on each side,
    clamped to the track's curvature range."""
    i = _segment_index(track, s)
    angles = track.seg_angles
    lengths = track.seg_lengths
    n = len(lengths)
    tangent = float(angles[i])
    if track.closed:
        ip, im = (i + 1) % n, (i - 1) % n
    else:
        ip, im = min(i + 1, n - 1), max(i - 1, 0)
    if ip == im:
        kappa = 0.0
    else:
        dtheta = float(wrap_angle(angles[ip] - angles[im]))
        ds = 0.5 * (lengths[im] + lengths[ip]) + (lengths[i] if ip != i and im != i else 0.0)
        if im == i:  # open track, first segment
            ds = 0.5 * (lengths[i] + lengths[ip])
        elif ip == i:  # open track, last segment
            ds = 0.5 * (lengths[im] + lengths[i])
        kappa = dtheta / ds
    lo, hi = track.kappa_range
    return tangent, float(np.clip(kappa, lo, hi))


def symmetry_reduce(track: Track, state: VehicleState) -> ReducedState:
    """Project the world state onto the five-parameter reduced description."""
    _, s, d = project_to_track(track, (state.p1, state.p2))
    tangent, kappa = local_track_params(track, s)
    xi = float(wrap_angle(state.theta - tangent))
    return ReducedState(v_y=state.v_y, r=state.r, xi=xi, d=d, kappa=kappa)


def mirror_reduce(x: ReducedState) -> tuple[ReducedState, bool]:
    """Reflect onto the d >= 0 half-space stored in the library.  Controls
    retrieved for a mirrored state must be negated before application."""
    if x.d < 0:
        return ReducedState(-x.v_y, -x.r, -x.xi, -x.d, -x.kappa), True
    return x, False


def arc_coordinates(kappa: float, p: np.ndarray):
    """Arclength and signed distance of points relative to the constant
    curvature arc through the origin with tangent along +x.

    p has shape (..., 2); returns (s, d) arrays.  Valid for |kappa * s| < pi.
    """
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    if abs(kappa) < 1e-12:
        return x.copy(), y.copy()
    cy = 1.0 / kappa
    sgn = np.sign(kappa)
    s = np.arctan2(sgn * x, sgn * (cy - y)) / kappa
    d = cy - sgn * np.hypot(x, y - cy)
    return s, d


def build_car_umocp(
    params: VehicleParams,
    x0: ReducedState,
    grid: TimeGrid,
    unc: UncertaintyBox,
    d_max: float = 10.0,
    u_min: float = -0.5,
    u_max: float = 0.5,
) -> UMocpInstance:
    """Local maneuvering problem at a reduced state: minimize the squared
    centerline offset and the negative arclength progress on the constant
    curvature local track, with |d| <= d_max enforced robustly.  The
    uncertainty acts on the initial lateral offset d."""
    kappa = x0.kappa
    base = np.array([0.0, x0.d, x0.xi, x0.v_y, x0.r])

    def perturb(x0_vec, alpha):
        alpha = np.asarray(alpha, dtype=float)
        out = np.broadcast_to(x0_vec, alpha.shape[:-1] + x0_vec.shape).copy()
        out[..., 1] += alpha[..., 0]
        return out

    def offset(states):
        _, d = arc_coordinates(kappa, states[..., 0:2])
        return d

    def j1_running(states, u_values):
        return offset(states) ** 2

    def j2_terminal(x_final, u_values):
        s, _ = arc_coordinates(kappa, x_final[..., 0:2])
        return -s

    def corridor(states, u_values):
        return np.abs(offset(states)) - d_max

    zero_running = lambda states, u_values: np.zeros(states.shape[:-1])
    zero_terminal = lambda x_final, u_values: np.zeros(x_final.shape[:-1])

    return UMocpInstance(
        n_x=5,
        k=2,
        dynamics=make_dynamics(params),
        running_costs=(j1_running, zero_running),
        terminal_costs=(zero_terminal, j2_terminal),
        constraints=(corridor,),
        x0=base,
        perturb=perturb,
    )
