"""Deterministic lap simulator for the controller-tuning benchmark.

A kinematic bicycle follows a closed test track (two main straights, two
turns of different radii joined by a short diagonal connector) at a reference
speed profile: 55 km/h on straights, lateral-acceleration-limited in corners,
with bounded longitudinal ramps. A rear-axle tracking controller with three
free gains steers the vehicle; longitudinal speed tracks the profile exactly
(the longitudinal controller is given, not tuned).

One measurement episode runs from T0=0 to T2 (default 120 s). At T1 (default
100 s, calibrated to land on the long straight) a virtual disturbance offsets
the MEASURED cross-track error by +1 m; the trace always records true errors.
The tracking objective integrates |e_ct|+|e_ca| before the disturbance; the
two safety functions bound the pre-disturbance cross-track error (2 m) and
the post-disturbance yaw rate (0.2 rad/s).

The inner loop is numba-compiled (IEEE semantics, no fastmath) with a plain
Python fallback; traces are bit-reproducible for identical inputs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .grid import DomainGrid

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def deco(fn):
            return fn

        return deco


__all__ = [
    "TrackConfig",
    "VehicleConfig",
    "Track",
    "VehicleState",
    "ControllerParams",
    "SimTrace",
    "build_track",
    "default_track",
    "controller_steering",
    "simulate_lap",
    "evaluate_objective",
    "evaluate_constraints",
    "estimate_lipschitz",
    "VehicleTuningProblem",
]

TRACE_COLUMNS = ("t", "x", "y", "psi", "v", "delta", "e_ct", "e_ca", "yaw_rate")

G1_MARGIN = 2.0  # m, cross-track threshold
G2_MARGIN = 0.2  # rad/s, yaw-rate threshold


@dataclass(frozen=True)
class TrackConfig:
    """Geometry, speed law, and episode timing of the test track.

    The loop is: long straight, semicircle of ``radius_entry``, short
    straight, then a compound turn of ``radius_exit`` (arc, diagonal
    connector, arc) that closes the loop. Closure fixes the connector from
    the other lengths; ``radius_entry`` must exceed ``radius_exit``. The
    episode start position is calibrated so that reference time T1 lands
    ``t1_anchor`` meters into the long straight on its second pass.
    """

    long_straight: float = 380.0
    short_straight: float = 150.0
    radius_entry: float = 40.0
    radius_exit: float = 25.0
    v_straight: float = 55.0 / 3.6
    a_lat_max: float = 3.0
    a_long_max: float = 2.0
    t1: float = 100.0
    t2: float = 120.0
    t1_anchor: float = 25.0
    window_margin: float = 4.0
    table_ds: float = 0.5

    @classmethod
    def from_file(cls, path) -> "TrackConfig":
        """Load from a TOML key-value file ([track] section or top level)."""
        try:
            import tomllib
        except ImportError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        doc = doc.get("track", doc)
        return cls(**{k: float(v) for k, v in doc.items()})


@dataclass(frozen=True)
class VehicleConfig:
    """Vehicle, controller, and gain-box parameters.

    Gain bounds were calibrated by grid sweep so the normalized box contains
    stable, marginal, and yaw-constraint-violating controllers at the track's
    straight-line speed.
    """

    wheelbase: float = 2.7
    delta_max: float = 0.5
    dt: float = 0.01
    lp_tau: float = 0.1  # low-pass on the measured e_ct derivative
    den_min: float = 0.2  # feedforward saturation near the curvature singularity
    disturbance: float = 1.0
    # The controller's curvature map underestimates the true reference
    # curvature; cornering accuracy then genuinely depends on the feedback
    # gains instead of being absorbed by the feedforward term.
    kappa_map_factor: float = 0.85
    gain_lo: tuple[float, float, float] = (0.005, 0.06, 0.0)
    gain_hi: tuple[float, float, float] = (0.024, 0.60, 0.0020)
    initial_gains: tuple[float, float, float] = (0.0055, 0.134, 0.0)
    divergence_limit: float = 10.0  # multiples of the track extent


@dataclass(frozen=True)
class ControllerParams:
    """The three tunable gains of the tracking controller (physical units)."""

    k_ct: float  # 1/m^2, cross-track gain
    k_ca: float  # 1/m, course-angle gain
    k_d: float  # s/m^2, cross-track damping gain

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.k_ct, self.k_ca, self.k_d)

    @classmethod
    def from_normalized(cls, normalized, cfg: VehicleConfig) -> "ControllerParams":
        normalized = np.asarray(normalized, dtype=float)
        if np.any(normalized < 0.0) or np.any(normalized > 1.0):
            raise ValueError("normalized gains must lie in [0, 1]")
        lo = np.asarray(cfg.gain_lo)
        hi = np.asarray(cfg.gain_hi)
        vals = lo + normalized * (hi - lo)
        return cls(*map(float, vals))

    def to_normalized(self, cfg: VehicleConfig) -> np.ndarray:
        lo = np.asarray(cfg.gain_lo)
        hi = np.asarray(cfg.gain_hi)
        return (np.asarray(self.as_tuple()) - lo) / (hi - lo)


@dataclass(frozen=True)
class VehicleState:
    """Pose and actuation sample of the simulated vehicle."""

    x: float
    y: float
    psi: float
    v: float
    yaw_rate: float
    delta: float


@dataclass
class Track:
    """Closed track: analytic segments plus a sampled speed profile."""

    config: TrackConfig
    seg_type: np.ndarray  # 0 = straight, 1 = left arc
    seg_length: np.ndarray
    seg_x0: np.ndarray
    seg_y0: np.ndarray
    seg_psi0: np.ndarray
    seg_curv: np.ndarray
    seg_s0: np.ndarray
    total_length: float
    speed_table: np.ndarray  # v over s at config.table_ds, one wrap row appended
    start_s: float  # arc position of the episode start (T0)
    extent: float  # bounding-box size, used by the divergence guard

    def reference_pose(self, s: float) -> tuple[float, float, float, float]:
        """(x, y, heading, curvature) at arc position ``s`` (wrapped)."""
        s = float(s) % self.total_length
        k = int(np.searchsorted(self.seg_s0, s, side="right") - 1)
        u = s - self.seg_s0[k]
        psi0 = self.seg_psi0[k]
        if self.seg_type[k] == 0:
            return (
                self.seg_x0[k] + u * math.cos(psi0),
                self.seg_y0[k] + u * math.sin(psi0),
                psi0,
                0.0,
            )
        curv = self.seg_curv[k]
        radius = 1.0 / curv
        cx = self.seg_x0[k] - radius * math.sin(psi0)
        cy = self.seg_y0[k] + radius * math.cos(psi0)
        psi = psi0 + curv * u
        return (cx + radius * math.sin(psi), cy - radius * math.cos(psi), psi, curv)

    def speed_at(self, s: float) -> float:
        s = float(s) % self.total_length
        idx = s / self.config.table_ds
        i = int(idx)
        frac = idx - i
        return float(self.speed_table[i] * (1.0 - frac) + self.speed_table[i + 1] * frac)

    def reference_time_grid(self) -> tuple[np.ndarray, np.ndarray]:
        """(s, t) samples of the reference timing from the track origin."""
        ds = self.config.table_ds
        n = len(self.speed_table) - 1
        s = np.arange(n + 1) * ds
        v_mid = 0.5 * (self.speed_table[:-1] + self.speed_table[1:])
        t = np.concatenate([[0.0], np.cumsum(ds / v_mid)])
        return s, t


def _speed_profile(cfg: TrackConfig, seg_type, seg_length, seg_curv, total: float) -> np.ndarray:
    ds = cfg.table_ds
    n = int(math.ceil(total / ds))
    s = np.arange(n) * ds
    limit = np.full(n, cfg.v_straight)
    bounds = np.concatenate([[0.0], np.cumsum(seg_length)])
    for k in range(len(seg_length)):
        if seg_type[k] == 1:
            radius = 1.0 / seg_curv[k]
            v_corner = min(cfg.v_straight, math.sqrt(cfg.a_lat_max * radius))
            in_seg = (s >= bounds[k]) & (s < bounds[k + 1])
            limit[in_seg] = v_corner
    v = limit.copy()
    # Accel-limited forward pass and brake-limited backward pass, cyclic.
    for _ in range(3):
        for i in range(n):
            j = (i + 1) % n
            v[j] = min(v[j], math.sqrt(v[i] ** 2 + 2.0 * cfg.a_long_max * ds))
        for i in range(n - 1, -1, -1):
            j = (i + 1) % n
            v[i] = min(v[i], math.sqrt(v[j] ** 2 + 2.0 * cfg.a_long_max * ds))
    return np.concatenate([v, [v[0]]])


def build_track(cfg: TrackConfig | None = None) -> Track:
    """Construct the closed track and calibrate the episode start position.

    Raises ``ValueError`` when the configuration cannot close geometrically or
    when the disturbance window [T1, T2) cannot be placed on the long straight
    at the configured speed profile.
    """
    cfg = cfg or TrackConfig()
    r1, r2 = cfg.radius_entry, cfg.radius_exit
    a, b = cfg.long_straight, cfg.short_straight
    if r1 <= r2:
        raise ValueError("track closure requires radius_entry > radius_exit")
    if a <= b:
        raise ValueError("the long straight must be longer than the short straight")
    # Closure of the compound turn: connector length and tilt.
    phi = math.atan2(2.0 * (r1 - r2), a - b)
    c = math.hypot(a - b, 2.0 * (r1 - r2))

    segments = []  # (type, length, x0, y0, psi0, curvature)
    segments.append((0, a, 0.0, 0.0, 0.0, 0.0))
    segments.append((1, math.pi * r1, a, 0.0, 0.0, 1.0 / r1))
    segments.append((0, b, a, 2.0 * r1, math.pi, 0.0))
    segments.append((1, r2 * phi, a - b, 2.0 * r1, math.pi, 1.0 / r2))
    x4 = a - b - r2 * math.sin(phi)
    y4 = 2.0 * r1 - r2 + r2 * math.cos(phi)
    segments.append((0, c, x4, y4, math.pi + phi, 0.0))
    x5 = x4 + c * math.cos(math.pi + phi)
    y5 = y4 + c * math.sin(math.pi + phi)
    segments.append((1, r2 * (math.pi - phi), x5, y5, math.pi + phi, 1.0 / r2))

    seg_type = np.array([s[0] for s in segments], dtype=np.int64)
    seg_length = np.array([s[1] for s in segments])
    seg_x0 = np.array([s[2] for s in segments])
    seg_y0 = np.array([s[3] for s in segments])
    seg_psi0 = np.array([s[4] for s in segments])
    seg_curv = np.array([s[5] for s in segments])
    seg_s0 = np.concatenate([[0.0], np.cumsum(seg_length)[:-1]])
    total = float(np.sum(seg_length))

    # Closure check: end of the last arc must return to the origin.
    end_x = x5 + r2 * (math.sin(2.0 * math.pi) - math.sin(math.pi + phi))
    end_y = y5 + r2 * (-math.cos(2.0 * math.pi) + math.cos(math.pi + phi))
    if math.hypot(end_x, end_y) > 1e-6:
        raise ValueError(f"track does not close (gap {math.hypot(end_x, end_y):.3e} m)")

    speed = _speed_profile(cfg, seg_type, seg_length, seg_curv, total)
    track = Track(
        config=cfg,
        seg_type=seg_type,
        seg_length=seg_length,
        seg_x0=seg_x0,
        seg_y0=seg_y0,
        seg_psi0=seg_psi0,
        seg_curv=seg_curv,
        seg_s0=seg_s0,
        total_length=total,
        speed_table=speed,
        start_s=0.0,
        extent=max(a, 2.0 * r1 + r2),
    )

    # Calibrate the start position: T1 lands t1_anchor meters into the long
    # straight (track origin) on the second pass.
    s_ref, t_ref = track.reference_time_grid()
    lap_time = float(t_ref[-1])
    t_anchor = float(np.interp(cfg.t1_anchor, s_ref, t_ref))
    t_first_entry = cfg.t1 - lap_time - t_anchor
    if not 0.0 < t_first_entry < lap_time:
        raise ValueError(
            "cannot place T1 on the second pass of the long straight; "
            "adjust the straight lengths or timing"
        )
    start_s = float(np.interp(lap_time - t_first_entry, t_ref, s_ref)) % total
    track.start_s = start_s

    # Validate that the whole [T1, T2) window stays on the long straight.
    t_start = float(np.interp(start_s, s_ref, t_ref))

    def s_at(t_episode: float) -> float:
        t_abs = t_start + t_episode
        laps = math.floor(t_abs / lap_time)
        return float(np.interp(t_abs - laps * lap_time, t_ref, s_ref)) % total

    for t_probe in (cfg.t1, cfg.t2 - 1e-9):
        s_probe = s_at(t_probe)
        if not cfg.window_margin <= s_probe <= a - cfg.window_margin:
            raise ValueError(
                f"disturbance window leaves the long straight at t={t_probe:.1f}s "
                f"(reference s={s_probe:.1f} m); lengthen the long straight"
            )
    return track


_DEFAULT_TRACK: Track | None = None


def default_track() -> Track:
    """The calibrated default track, built once per process."""
    global _DEFAULT_TRACK
    if _DEFAULT_TRACK is None:
        _DEFAULT_TRACK = build_track(TrackConfig())
    return _DEFAULT_TRACK


@njit(cache=True)
def _wrap_pi(a):
    return a - 2.0 * math.pi * math.floor((a + math.pi) / (2.0 * math.pi))


@njit(cache=True)
def _steering(e_meas, e_ca, edot, kappa_ref, k_ct, k_ca, k_d, wheelbase, delta_max, den_min):
    den = 1.0 - kappa_ref * e_meas
    if den < den_min:
        den = den_min
    kappa_cmd = kappa_ref * math.cos(e_ca) / den - k_ct * e_meas - k_ca * math.sin(e_ca) - k_d * edot
    delta = math.atan(wheelbase * kappa_cmd)
    if delta > delta_max:
        delta = delta_max
    elif delta < -delta_max:
        delta = -delta_max
    return delta


@njit(cache=True)
def _project(x, y, seg_type, seg_length, seg_x0, seg_y0, seg_psi0, seg_curv, seg_s0):
    best_d2 = 1e300
    best_s = 0.0
    best_e = 0.0
    best_psi = 0.0
    best_kappa = 0.0
    for k in range(seg_type.shape[0]):
        if seg_type[k] == 0:
            cs = math.cos(seg_psi0[k])
            sn = math.sin(seg_psi0[k])
            dx = x - seg_x0[k]
            dy = y - seg_y0[k]
            u = dx * cs + dy * sn
            if u < 0.0:
                u = 0.0
            elif u > seg_length[k]:
                u = seg_length[k]
            px = seg_x0[k] + u * cs
            py = seg_y0[k] + u * sn
            ddx = x - px
            ddy = y - py
            d2 = ddx * ddx + ddy * ddy
            if d2 < best_d2:
                best_d2 = d2
                best_s = seg_s0[k] + u
                best_e = -ddx * sn + ddy * cs
                best_psi = seg_psi0[k]
                best_kappa = 0.0
        else:
            curv = seg_curv[k]
            radius = 1.0 / curv
            cx = seg_x0[k] - radius * math.sin(seg_psi0[k])
            cy = seg_y0[k] + radius * math.cos(seg_psi0[k])
            vx = x - cx
            vy = y - cy
            rho = math.hypot(vx, vy)
            ang0 = seg_psi0[k] - 0.5 * math.pi
            sweep = curv * seg_length[k]
            rel = math.atan2(vy, vx) - ang0
            rel -= 2.0 * math.pi * math.floor(rel / (2.0 * math.pi))
            if rel <= sweep:
                u = rel / curv
                d = rho - radius
                d2 = d * d
                if d2 < best_d2:
                    best_d2 = d2
                    best_s = seg_s0[k] + u
                    best_e = radius - rho  # toward the center is left of path
                    best_psi = seg_psi0[k] + rel
                    best_kappa = curv
            else:
                for uu in (0.0, seg_length[k]):
                    psi_u = seg_psi0[k] + curv * uu
                    px = cx + radius * math.sin(psi_u)
                    py = cy - radius * math.cos(psi_u)
                    ddx = x - px
                    ddy = y - py
                    d2 = ddx * ddx + ddy * ddy
                    if d2 < best_d2:
                        best_d2 = d2
                        best_s = seg_s0[k] + uu
                        best_e = -ddx * math.sin(psi_u) + ddy * math.cos(psi_u)
                        best_psi = psi_u
                        best_kappa = curv
    return best_s, best_e, best_psi, best_kappa


@njit(cache=True)
def _run_lap(
    seg_type,
    seg_length,
    seg_x0,
    seg_y0,
    seg_psi0,
    seg_curv,
    seg_s0,
    speed_table,
    table_ds,
    total_length,
    x,
    y,
    psi,
    k_ct,
    k_ca,
    k_d,
    wheelbase,
    delta_max,
    dt,
    n_steps,
    i_disturb,
    disturbance,
    lp_tau,
    den_min,
    kappa_map,
    guard,
    out,
):
    e_meas_prev = 0.0
    edot_f = 0.0
    for step in range(n_steps):
        s, e_ct, psi_ref, kappa_ref = _project(
            x, y, seg_type, seg_length, seg_x0, seg_y0, seg_psi0, seg_curv, seg_s0
        )
        e_ca = _wrap_pi(psi - psi_ref)
        sw = s - total_length * math.floor(s / total_length)
        idx = sw / table_ds
        i0 = int(idx)
        frac = idx - i0
        v = speed_table[i0] * (1.0 - frac) + speed_table[i0 + 1] * frac

        e_meas = e_ct
        if step >= i_disturb:
            e_meas = e_ct + disturbance
        if step == 0:
            e_meas_prev = e_meas
        edot_raw = (e_meas - e_meas_prev) / dt
        edot_f += (dt / lp_tau) * (edot_raw - edot_f)
        delta = _steering(
            e_meas,
            e_ca,
            edot_f,
            kappa_map * kappa_ref,
            k_ct,
            k_ca,
            k_d,
            wheelbase,
            delta_max,
            den_min,
        )
        yaw_rate = v * math.tan(delta) / wheelbase

        out[step, 0] = step * dt
        out[step, 1] = x
        out[step, 2] = y
        out[step, 3] = psi
        out[step, 4] = v
        out[step, 5] = delta
        out[step, 6] = e_ct
        out[step, 7] = e_ca
        out[step, 8] = yaw_rate

        x += dt * v * math.cos(psi)
        y += dt * v * math.sin(psi)
        psi += dt * yaw_rate
        e_meas_prev = e_meas
        if abs(x) > guard or abs(y) > guard:
            return step + 1
    return n_steps


@dataclass
class SimTrace:
    """Sampled episode: time series plus the timeline markers T0 < T1 < T2."""

    data: np.ndarray  # (n, 9) columns per TRACE_COLUMNS
    dt: float
    t0: float
    t1: float
    t2: float
    diverged: bool

    def __post_init__(self):
        if not self.t0 < self.t1 < self.t2:
            raise ValueError("markers must satisfy t0 < t1 < t2")

    def column(self, name: str) -> np.ndarray:
        return self.data[:, TRACE_COLUMNS.index(name)]

    @property
    def n(self) -> int:
        return self.data.shape[0]

    def state_at(self, i: int) -> VehicleState:
        row = self.data[i]
        return VehicleState(x=row[1], y=row[2], psi=row[3], v=row[4], yaw_rate=row[8], delta=row[5])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(",".join(TRACE_COLUMNS) + "\n")
            for row in self.data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def controller_steering(
    e_ct_measured: float,
    e_ca: float,
    e_ct_rate: float,
    kappa_ref: float,
    params: ControllerParams,
    cfg: VehicleConfig | None = None,
) -> float:
    """Steering angle of the rear-axle tracking law for one state sample.

    Commanded curvature is the saturated curvature feedforward minus the three
    gain terms; the steering angle is ``atan(wheelbase * kappa)`` clipped to
    the actuator limit. Positive cross-track error means left of the path and
    positive steering turns left.
    """
    cfg = cfg or VehicleConfig()
    return float(
        _steering(
            e_ct_measured,
            e_ca,
            e_ct_rate,
            kappa_ref,
            params.k_ct,
            params.k_ca,
            params.k_d,
            cfg.wheelbase,
            cfg.delta_max,
            cfg.den_min,
        )
    )


def simulate_lap(
    params: ControllerParams,
    track: Track | None = None,
    disturbance: float | None = None,
    vehicle: VehicleConfig | None = None,
) -> SimTrace:
    """Integrate one measurement episode with explicit Euler at fixed dt.

    The vehicle starts on the path at the calibrated start position, aligned
    and at the reference speed. Runaway trajectories (outside the divergence
    guard) truncate the trace and set the ``diverged`` flag, which downstream
    evaluation treats as a track-leaving violation.
    """
    track = track or default_track()
    vehicle = vehicle or VehicleConfig()
    if disturbance is None:
        disturbance = vehicle.disturbance
    cfg = track.config
    n_steps = int(round(cfg.t2 / vehicle.dt))
    i_disturb = int(round(cfg.t1 / vehicle.dt))
    x0, y0, psi0, _ = track.reference_pose(track.start_s)
    out = np.empty((n_steps, len(TRACE_COLUMNS)))
    filled = _run_lap(
        track.seg_type,
        track.seg_length,
        track.seg_x0,
        track.seg_y0,
        track.seg_psi0,
        track.seg_curv,
        track.seg_s0,
        track.speed_table,
        cfg.table_ds,
        track.total_length,
        x0,
        y0,
        psi0,
        params.k_ct,
        params.k_ca,
        params.k_d,
        vehicle.wheelbase,
        vehicle.delta_max,
        vehicle.dt,
        n_steps,
        i_disturb,
        float(disturbance),
        vehicle.lp_tau,
        vehicle.den_min,
        vehicle.kappa_map_factor,
        vehicle.divergence_limit * track.extent,
        out,
    )
    return SimTrace(
        data=out[:filled],
        dt=vehicle.dt,
        t0=0.0,
        t1=cfg.t1,
        t2=cfg.t2,
        diverged=filled < n_steps,
    )


def _window_indices(trace: SimTrace) -> tuple[int, int]:
    i1 = int(round(trace.t1 / trace.dt))
    i2 = int(round(trace.t2 / trace.dt))
    return i1, i2


def evaluate_objective(trace: SimTrace) -> float:
    """Tracking cost: time-normalized integral of |e_ct|+|e_ca| plus max |e_ct|.

    Both terms are evaluated on the pre-disturbance window [T0, T1). The
    harness negates the value for maximization.
    """
    i1, _ = _window_indices(trace)
    if trace.n < i1 + 1:
        raise ValueError("trace does not cover [T0, T1)")
    e_ct = np.abs(trace.column("e_ct"))
    e_ca = np.abs(trace.column("e_ca"))
    integral = float(np.trapezoid(e_ct[: i1 + 1] + e_ca[: i1 + 1], dx=trace.dt))
    return integral / (trace.t1 - trace.t0) + float(np.max(e_ct[:i1]))


def evaluate_constraints(trace: SimTrace) -> tuple[float, float]:
    """Safety margins: (2 m - max pre-T1 |e_ct|, 0.2 rad/s - max post-T1 yaw).

    Diverged traces count as track-leaving: the cross-track margin is forced
    nonpositive (and the yaw margin too when the trace ends before T1).
    """
    i1, i2 = _window_indices(trace)
    if trace.diverged:
        e_ct = np.abs(trace.column("e_ct"))
        g1 = G1_MARGIN - float(np.max(e_ct[:i1])) if trace.n > 0 else 0.0
        g1 = min(g1, -1.0)
        if trace.n > i1:
            g2 = G2_MARGIN - float(np.max(np.abs(trace.column("yaw_rate")[i1:])))
        else:
            g2 = -1.0
        return g1, g2
    if trace.n < i2:
        raise ValueError("trace does not cover [T0, T2)")
    g1 = G1_MARGIN - float(np.max(np.abs(trace.column("e_ct")[:i1])))
    g2 = G2_MARGIN - float(np.max(np.abs(trace.column("yaw_rate")[i1:i2])))
    return g1, g2


def estimate_lipschitz(fn, grid: DomainGrid, factor: float = 1.5) -> float:
    """Lipschitz estimate: max finite-difference slope over adjacent grid pairs.

    ``fn`` maps an (n, d) array of points to n values (or one point to one
    value). Non-finite evaluations are excluded with a warning. The safety
    factor compensates for curvature between grid points.
    """
    try:
        values = np.asarray(fn(grid.points), dtype=float).reshape(-1)
        if values.shape[0] != grid.size:
            raise TypeError
    except TypeError:
        values = np.array([float(fn(p)) for p in grid.points])
    pairs = grid.axis_neighbor_pairs()
    va = values[pairs[:, 0]]
    vb = values[pairs[:, 1]]
    finite = np.isfinite(va) & np.isfinite(vb)
    if not finite.all():
        warnings.warn("non-finite evaluations excluded from Lipschitz estimate")
    if not finite.any():
        return 0.0
    dist = np.linalg.norm(grid.points[pairs[finite, 0]] - grid.points[pairs[finite, 1]], axis=1)
    slopes = np.abs(va[finite] - vb[finite]) / dist
    return float(np.max(slopes)) * factor


# Conservative Lipschitz constants for (g1, g2) over the normalized gain box:
# fine-grid slope estimates (at most 3.9 and 0.45 raw in any dimension) with
# the standard 1.5 safety factor, rounded up.
DEFAULT_SIM_LIPSCHITZ = {
    1: (6.0, 0.7),
    2: (6.0, 0.7),
    3: (6.0, 0.7),
}

# Hard measurement-noise bounds for (objective, g1, g2).
DEFAULT_SIM_NOISE_BOUND = (0.03, 0.1, 0.1)


# Order in which gains become tunable as the study dimension grows: the
# course-angle gain first (a simple, safe-interior 1-D task), then the
# cross-track gain (which drives toward the yaw-rate safety boundary), then
# the damping gain.
ACTIVE_GAIN_ORDER = (1, 0, 2)


class VehicleTuningProblem:
    """Controller-tuning benchmark: normalized gains in, noisy outcomes out.

    Dimension d tunes the first d gains of ``ACTIVE_GAIN_ORDER``; the rest
    stay at the initial controller's values. The simulator is deterministic,
    so ground truth per queried point is computed once and cached;
    measurements add seeded uniform noise inside the hard bounds.
    """

    def __init__(
        self,
        dimension: int,
        track: Track | None = None,
        vehicle: VehicleConfig | None = None,
        grid: DomainGrid | None = None,
        lipschitz=None,
        noise_bound=None,
    ):
        if dimension not in (1, 2, 3):
            raise ValueError("dimension must be 1, 2, or 3")
        self.dimension = dimension
        self.q = 2
        self.track = track or default_track()
        self.vehicle = vehicle or VehicleConfig()
        self.grid = grid or DomainGrid.regular(dimension)
        self.lipschitz = np.asarray(
            lipschitz if lipschitz is not None else DEFAULT_SIM_LIPSCHITZ[dimension], dtype=float
        )
        self.noise_bound = np.asarray(
            noise_bound if noise_bound is not None else DEFAULT_SIM_NOISE_BOUND, dtype=float
        )
        self.active = ACTIVE_GAIN_ORDER[:dimension]
        init = ControllerParams(*self.vehicle.initial_gains).to_normalized(self.vehicle)
        self.initial_normalized = init[list(self.active)]
        # Snap the initial controller to the nearest grid point.
        res = self.grid.resolutions
        snapped = np.array(
            [round(v * (r - 1)) / (r - 1) for v, r in zip(self.initial_normalized, res)]
        )
        self.theta0 = snapped
        self.theta0_index = self.grid.index_of(snapped)
        self._cache: dict[bytes, tuple[float, np.ndarray]] = {}

    def gains(self, theta) -> ControllerParams:
        full = ControllerParams(*self.vehicle.initial_gains).to_normalized(self.vehicle)
        full = np.asarray(full, dtype=float)
        theta = np.asarray(theta, dtype=float).reshape(-1)
        for slot, value in zip(self.active, theta):
            full[slot] = value
        return ControllerParams.from_normalized(full, self.vehicle)

    def _truth(self, theta) -> tuple[float, np.ndarray]:
        key = np.asarray(theta, dtype=float).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        trace = simulate_lap(self.gains(theta), self.track, vehicle=self.vehicle)
        if trace.diverged:
            objective = -1e3  # deep-unsafe sentinel; a safe optimizer never queries here
        else:
            objective = -evaluate_objective(trace)
        g1, g2 = evaluate_constraints(trace)
        result = (objective, np.array([g1, g2]))
        self._cache[key] = result
        return result

    def true_objective(self, theta) -> float:
        return self._truth(theta)[0]

    def true_constraints(self, theta) -> np.ndarray:
        return self._truth(theta)[1].copy()

    def is_safe(self, theta) -> bool:
        return bool(np.all(self._truth(theta)[1] >= 0.0))

    def measure(self, theta, rng: np.random.Generator) -> tuple[float, np.ndarray]:
        objective, constraints = self._truth(theta)
        y0 = objective + float(rng.uniform(-self.noise_bound[0], self.noise_bound[0]))
        ys = constraints + rng.uniform(-self.noise_bound[1:], self.noise_bound[1:])
        return y0, ys
