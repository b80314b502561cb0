"""Double-track vehicle plant with Magic-Formula tires.

State vector layout (``VehicleState.to_array``)::

    [x, y, yaw, v_x, v_y, yaw_rate, delta]

The steering actuator (first-order lag with rate and angle limits) is part of
the integrated state so the whole right-hand side is advanced by one RK4
step. Quasi-static load transfer is resolved inside each right-hand-side
evaluation by a fixed number of fixed-point sweeps started from the static
loads, which keeps the right-hand side a smooth function of the state.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit

from ffsteer.errors import NotAttainable, NumericalDivergence

GRAVITY = 9.81
MIN_VX = 1.0
MAX_SPEED = 150.0
MAX_YAW_RATE = 10.0
_LOAD_SWEEPS = 5

# parameter vector indices
(
    P_M, P_IZ, P_LF, P_LR, P_TWF, P_TWR, P_H, P_BF, P_CF, P_DF, P_EF, P_BR, P_CR, P_DR, P_ER,
    P_TAU, P_RATE, P_MAXD, P_CD, P_FDRV, P_FBRK, P_KLOAD, P_ROLLF, P_CL, P_AEROF, P_G,
) = range(26)
N_PARAMS = 26

# measurement vector indices
M_AX, M_AY, M_AF, M_AR, M_FZ = 0, 1, 2, 3, 4
N_MEAS = 8


@dataclass(frozen=True)
class TireParams:
    """Magic-Formula lateral coefficients; ``D`` is the peak friction coefficient."""

    B: float
    C: float
    D: float
    E: float

    def validate(self) -> None:
        if not (self.B > 0 and self.C > 0 and self.D > 0 and self.E < 1):
            raise ValueError(f"Magic-Formula peak must occur at finite slip: {self}")


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle configuration, all SI.

    ``roll_stiffness_front`` is the front axle's share of the lateral load
    transfer; ``load_sensitivity`` makes the friction coefficient degrade
    linearly with load above the static wheel load. ``downforce_coeff`` [N
    per (m/s)^2] adds speed-dependent vertical load split by
    ``aero_balance_front``; together with load sensitivity it makes the
    understeer gradient depend on speed.
    """

    mass: float = 750.0
    yaw_inertia: float = 1000.0
    wheelbase: float = 3.0
    l_f: float = 1.6
    l_r: float = 1.4
    track_width_f: float = 1.6
    track_width_r: float = 1.55
    h_cg: float = 0.25
    tire_front: TireParams = field(default_factory=lambda: TireParams(B=9.0, C=1.9, D=3.4, E=0.3))
    tire_rear: TireParams = field(default_factory=lambda: TireParams(B=13.0, C=1.9, D=3.5, E=0.3))
    tau_steer: float = 0.06
    steer_rate_limit: float = 0.8
    steer_angle_limit: float = 0.4
    drag_coeff: float = 0.6
    max_drive_force: float = 10000.0
    max_brake_force: float = 20000.0
    load_sensitivity: float = 0.2
    roll_stiffness_front: float = 0.6
    downforce_coeff: float = 1.0
    aero_balance_front: float = 0.45
    gravity: float = GRAVITY

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if abs(self.l_f + self.l_r - self.wheelbase) > 1e-12:
            raise ValueError("l_f + l_r must equal the wheelbase")
        for name in ("mass", "yaw_inertia", "wheelbase", "l_f", "l_r", "track_width_f", "track_width_r", "h_cg"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_steer <= 0 or self.steer_rate_limit <= 0 or self.steer_angle_limit <= 0:
            raise ValueError("steering actuator parameters must be positive")
        self.tire_front.validate()
        self.tire_rear.validate()

    def to_array(self) -> np.ndarray:
        p = np.empty(N_PARAMS)
        tf, tr = self.tire_front, self.tire_rear
        p[:] = [
            self.mass, self.yaw_inertia, self.l_f, self.l_r, self.track_width_f, self.track_width_r,
            self.h_cg, tf.B, tf.C, tf.D, tf.E, tr.B, tr.C, tr.D, tr.E, self.tau_steer,
            self.steer_rate_limit, self.steer_angle_limit, self.drag_coeff, self.max_drive_force,
            self.max_brake_force, self.load_sensitivity, self.roll_stiffness_front,
            self.downforce_coeff, self.aero_balance_front, self.gravity,
        ]
        return p

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleParams":
        d = dict(d)
        for key in ("tire_front", "tire_rear"):
            if key in d and isinstance(d[key], dict):
                d[key] = TireParams(**d[key])
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> "VehicleParams":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def with_mass_scale(self, factor: float) -> "VehicleParams":
        return replace(self, mass=self.mass * factor, yaw_inertia=self.yaw_inertia * factor)

    def linear_understeer_gradient(self) -> float:
        """Understeer gradient of the linearised single-track model [rad/(m/s^2)]."""
        tf, tr = self.tire_front, self.tire_rear
        return (1.0 / (tf.B * tf.C * tf.D) - 1.0 / (tr.B * tr.C * tr.D)) / self.gravity


@dataclass(frozen=True)
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    yaw: float = 0.0
    v_x: float = 10.0
    v_y: float = 0.0
    yaw_rate: float = 0.0
    delta: float = 0.0
    F_z: tuple = (0.0, 0.0, 0.0, 0.0)

    def to_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.yaw, self.v_x, self.v_y, self.yaw_rate, self.delta])

    @classmethod
    def from_array(cls, a: np.ndarray, F_z=(0.0, 0.0, 0.0, 0.0)) -> "VehicleState":
        return cls(*(float(v) for v in a[:7]), F_z=tuple(float(f) for f in F_z))


@dataclass(frozen=True)
class Measurement:
    t: float
    v_x: float
    a_x_actual: float
    a_y_actual: float
    delta: float
    yaw_rate: float
    alpha_f: float
    alpha_r: float


# ---------------------------------------------------------------- numba core
@njit(cache=True)
def _magic_formula(alpha, B, C, D, E):
    ba = B * alpha
    return D * math.sin(C * math.atan(ba - E * (ba - math.atan(ba))))


@njit(cache=True)
def _rhs(st, delta_cmd, f_drive, p, out, aux):
    """Write state derivative into ``out``; ``aux`` receives ax, ay, af, ar, Fz[4]."""
    m = p[P_M]
    lf = p[P_LF]
    lr = p[P_LR]
    l = lf + lr
    twf = p[P_TWF]
    twr = p[P_TWR]
    h = p[P_H]
    g = p[P_G]
    kload = p[P_KLOAD]

    yaw = st[2]
    vx = st[3]
    vy = st[4]
    r = st[5]
    delta = st[6]

    # steering actuator
    lim = p[P_MAXD]
    cmd = min(max(delta_cmd, -lim), lim)
    ddelta = (cmd - delta) / p[P_TAU]
    rate = p[P_RATE]
    ddelta = min(max(ddelta, -rate), rate)

    fdown = p[P_CL] * vx * vx
    fz0f = 0.5 * (m * g * lr / l)
    fz0r = 0.5 * (m * g * lf / l)
    fzsf = fz0f + 0.5 * fdown * p[P_AEROF]
    fzsr = fz0r + 0.5 * fdown * (1.0 - p[P_AEROF])

    # wheel order: FL, FR, RL, RR; y positive to the left
    xw = (lf, lf, -lr, -lr)
    yw = (0.5 * twf, -0.5 * twf, 0.5 * twr, -0.5 * twr)
    cd = math.cos(delta)
    sd = math.sin(delta)

    alpha = np.empty(4)
    for i in range(4):
        vwx = vx - r * yw[i]
        vwy = vy + r * xw[i]
        a = -math.atan2(vwy, vwx)
        if i < 2:
            # lateral slip in the steered wheel frame
            a = delta + a
        alpha[i] = a

    fz = np.empty(4)
    fxb = np.empty(4)
    fyb = np.empty(4)
    ax = 0.0
    ay = 0.0
    drag = p[P_CD] * vx * abs(vx)
    for _ in range(_LOAD_SWEEPS):
        dlong = 0.5 * m * ax * h / l
        dlatf = p[P_ROLLF] * m * ay * h / twf
        dlatr = (1.0 - p[P_ROLLF]) * m * ay * h / twr
        fz[0] = fzsf - dlong - dlatf
        fz[1] = fzsf - dlong + dlatf
        fz[2] = fzsr + dlong - dlatr
        fz[3] = fzsr + dlong + dlatr
        fzsum = 0.0
        for i in range(4):
            if fz[i] < 1.0:
                fz[i] = 1.0
            fzsum += fz[i]
        sum_fx = 0.0
        sum_fy = 0.0
        for i in range(4):
            if i < 2:
                B = p[P_BF]
                C = p[P_CF]
                D0 = p[P_DF]
                E = p[P_EF]
                fzn = fz0f
            else:
                B = p[P_BR]
                C = p[P_CR]
                D0 = p[P_DR]
                E = p[P_ER]
                fzn = fz0r
            mu = D0 * (1.0 - kload * (fz[i] - fzn) / fzn)
            if mu < 0.1 * D0:
                mu = 0.1 * D0
            if f_drive >= 0.0:
                fx = 0.5 * f_drive if i >= 2 else 0.0
            else:
                fx = f_drive * fz[i] / fzsum
            cap = 0.98 * mu * fz[i]
            if fx > cap:
                fx = cap
            elif fx < -cap:
                fx = -cap
            util = fx / (mu * fz[i])
            scale = math.sqrt(1.0 - util * util)
            fy = fz[i] * scale * _magic_formula(alpha[i], B, C, mu, E)
            if i < 2:
                fxb[i] = fx * cd - fy * sd
                fyb[i] = fx * sd + fy * cd
            else:
                fxb[i] = fx
                fyb[i] = fy
            sum_fx += fxb[i]
            sum_fy += fyb[i]
        ax = (sum_fx - drag) / m
        ay = sum_fy / m

    mz = 0.0
    for i in range(4):
        mz += xw[i] * fyb[i] - yw[i] * fxb[i]

    cy = math.cos(yaw)
    sy = math.sin(yaw)
    out[0] = vx * cy - vy * sy
    out[1] = vx * sy + vy * cy
    out[2] = r
    out[3] = ax + vy * r
    out[4] = ay - vx * r
    out[5] = mz / p[P_IZ]
    out[6] = ddelta

    aux[M_AX] = ax
    aux[M_AY] = ay
    aux[M_AF] = delta - math.atan2(vy + lf * r, vx)
    aux[M_AR] = -math.atan2(vy - lr * r, vx)
    for i in range(4):
        aux[M_FZ + i] = fz[i]


@njit(cache=True)
def _rk4(st, delta_cmd, f_drive, p, dt):
    n = st.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    aux = np.empty(N_MEAS)
    tmp = np.empty(n)
    _rhs(st, delta_cmd, f_drive, p, k1, aux)
    for i in range(n):
        tmp[i] = st[i] + 0.5 * dt * k1[i]
    _rhs(tmp, delta_cmd, f_drive, p, k2, aux)
    for i in range(n):
        tmp[i] = st[i] + 0.5 * dt * k2[i]
    _rhs(tmp, delta_cmd, f_drive, p, k3, aux)
    for i in range(n):
        tmp[i] = st[i] + dt * k3[i]
    _rhs(tmp, delta_cmd, f_drive, p, k4, aux)
    nxt = np.empty(n)
    for i in range(n):
        nxt[i] = st[i] + dt * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0
    lim = p[P_MAXD]
    if nxt[6] > lim:
        nxt[6] = lim
    elif nxt[6] < -lim:
        nxt[6] = -lim
    if nxt[3] < MIN_VX:
        nxt[3] = MIN_VX
    return nxt


@njit(cache=True)
def _advance(st, delta_cmd, f_drive, p, dt, nsteps):
    """Integrate ``nsteps`` RK4 steps at constant inputs.

    Returns (state, meas, ok); ``meas`` is evaluated at the final state and
    ``ok`` is False once the state leaves its sanity bounds.
    """
    x = st.copy()
    ok = True
    for _ in range(nsteps):
        x = _rk4(x, delta_cmd, f_drive, p, dt)
        if (
            not (abs(x[5]) <= MAX_YAW_RATE)
            or not (math.hypot(x[3], x[4]) <= MAX_SPEED)
        ):
            ok = False
            break
    der = np.empty(x.shape[0])
    meas = np.empty(N_MEAS)
    _rhs(x, delta_cmd, f_drive, p, der, meas)
    return x, meas, ok


@njit(cache=True)
def _settle(st, p, delta_cmd, v_target, dt, n_settle, n_window):
    """Hold constant steering and speed (PI drive force); window-average outputs."""
    x = st.copy()
    integ = 0.0
    m = p[P_M]
    acc = np.zeros(6)
    der = np.empty(x.shape[0])
    meas = np.empty(N_MEAS)
    ok = True
    for k in range(n_settle + n_window):
        err = v_target - x[3]
        integ += err * dt
        f = p[P_CD] * x[3] * x[3] + m * (2.0 * err + 1.0 * integ)
        if f > p[P_FDRV]:
            f = p[P_FDRV]
        elif f < -p[P_FBRK]:
            f = -p[P_FBRK]
        x = _rk4(x, delta_cmd, f, p, dt)
        if not (abs(x[5]) <= MAX_YAW_RATE) or not (math.hypot(x[3], x[4]) <= MAX_SPEED):
            ok = False
            break
        if k >= n_settle:
            _rhs(x, delta_cmd, f, p, der, meas)
            acc[0] += meas[M_AY]
            acc[1] += x[6]
            acc[2] += meas[M_AF]
            acc[3] += meas[M_AR]
            acc[4] += x[3]
            acc[5] += x[5]
    if ok:
        for i in range(6):
            acc[i] /= n_window
    return acc, ok


# ------------------------------------------------------------------ Python API
def _meas_from(t: float, x: np.ndarray, meas: np.ndarray) -> Measurement:
    return Measurement(
        t=t,
        v_x=float(x[3]),
        a_x_actual=float(meas[M_AX]),
        a_y_actual=float(meas[M_AY]),
        delta=float(x[6]),
        yaw_rate=float(x[5]),
        alpha_f=float(meas[M_AF]),
        alpha_r=float(meas[M_AR]),
    )


def step(
    state: VehicleState,
    params: VehicleParams,
    delta_cmd: float,
    F_drive: float,
    dt: float,
    t: float = 0.0,
) -> tuple[VehicleState, Measurement]:
    """Advance the plant by one RK4 step of ``dt`` seconds.

    Raises:
        NumericalDivergence: if speed exceeds 150 m/s or |yaw rate| 10 rad/s.
    """
    if not (0.0 < dt <= 0.005):
        raise ValueError("dt must be in (0, 0.005]")
    if not (math.isfinite(delta_cmd) and math.isfinite(F_drive)):
        raise ValueError("inputs must be finite")
    x, meas, ok = _advance(state.to_array(), float(delta_cmd), float(F_drive), params.to_array(), dt, 1)
    if not ok:
        raise NumericalDivergence(f"state left sanity bounds: {x}")
    return VehicleState.from_array(x, meas[M_FZ:M_FZ + 4]), _meas_from(t + dt, x, meas)


class Plant:
    """Array-level plant used by the simulation loops."""

    def __init__(self, params: VehicleParams, dt: float = 0.001):
        if not (0.0 < dt <= 0.005):
            raise ValueError("dt must be in (0, 0.005]")
        self.params = params
        self.p = params.to_array()
        self.dt = dt

    def advance(self, x: np.ndarray, delta_cmd: float, f_drive: float, nsteps: int):
        x2, meas, ok = _advance(x, float(delta_cmd), float(f_drive), self.p, self.dt, int(nsteps))
        if not ok:
            raise NumericalDivergence(f"state left sanity bounds: vx={x2[3]:.2f} r={x2[5]:.2f}")
        return x2, meas


def kinetic_energy(params: VehicleParams, state: VehicleState) -> float:
    return 0.5 * params.mass * (state.v_x**2 + state.v_y**2) + 0.5 * params.yaw_inertia * state.yaw_rate**2


def steady_state_point(
    params: VehicleParams,
    v_x: float,
    delta: float,
    dt: float = 0.001,
    t_settle: float = 4.0,
    t_window: float = 1.0,
) -> dict | None:
    """Constant-steer, constant-speed run; returns window means or None on spin-out."""
    p = params.to_array()
    l = params.wheelbase
    r0 = v_x * delta / (l + params.linear_understeer_gradient() * v_x**2)
    x0 = np.array([0.0, 0.0, 0.0, v_x, 0.0, r0, delta])
    acc, ok = _settle(x0, p, float(delta), float(v_x), dt, int(round(t_settle / dt)), int(round(t_window / dt)))
    if not ok:
        return None
    a_y, d, af, ar, vx, r = (float(v) for v in acc)
    return {"a_y": a_y, "delta": d, "alpha_f": af, "alpha_r": ar, "v_x": vx, "yaw_rate": r}


def steady_state_sweep(
    params: VehicleParams,
    v_x: float,
    a_y_targets,
    tol: float = 0.05,
    dt: float = 0.001,
) -> list[dict]:
    """Find constant-radius steady states hitting each lateral acceleration.

    Bisection on the steering angle until the settled mean lateral
    acceleration is within ``tol`` of the target. Each result carries
    ``a_y``, ``delta`` and ``delta_dev = delta - a_y l / v_x^2`` (plus the
    window-mean slip angles).

    Raises:
        NotAttainable: if no steering angle reaches the target.
    """
    l = params.wheelbase
    out = []
    for target in a_y_targets:
        target = float(target)
        if target == 0.0:
            out.append({"a_y": 0.0, "delta": 0.0, "delta_dev": 0.0, "alpha_f": 0.0, "alpha_r": 0.0,
                        "v_x": float(v_x), "yaw_rate": 0.0})
            continue
        sgn = 1.0 if target > 0 else -1.0
        goal = abs(target)

        def evaluate(d):
            res = steady_state_point(params, v_x, sgn * d, dt=dt)
            return res, (-math.inf if res is None else sgn * res["a_y"])

        guess = goal * (l / v_x**2 + max(params.linear_understeer_gradient(), 0.0))
        lo, hi = 0.0, guess
        res_hi, ay_hi = evaluate(hi)
        while ay_hi < goal:
            lo = hi if ay_hi > -math.inf else lo
            hi *= 1.25
            if hi > params.steer_angle_limit or ay_hi == -math.inf:
                raise NotAttainable(f"a_y = {target} m/s^2 not attainable at v_x = {v_x} m/s")
            res_hi, ay_hi = evaluate(hi)
        best = res_hi
        if abs(ay_hi - goal) > tol:
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                res, ay = evaluate(mid)
                if res is not None and abs(ay - goal) <= tol:
                    best = res
                    break
                if ay < goal:
                    lo = mid
                else:
                    hi = mid
            else:
                raise NotAttainable(f"bisection did not converge for a_y = {target}")
        best = dict(best)
        best["delta_dev"] = best["delta"] - best["a_y"] * l / best["v_x"] ** 2
        out.append(best)
    return out
