"""Fixed-step numerical flows: autonomous, skew-product, and trajectories.

All integration is classical 4th-order Runge-Kutta with a fixed step, so
trajectories compose exactly on the shared step mesh and repeated runs are
bitwise reproducible. Requested times are rounded to the nearest step
multiple. Backward time integrates with a negated step, which is arithmetic
for arithmetic identical to integrating the negated field forward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FlowConfig:
    """Integrator parameters. blowup_bound flags trajectories that leave the
    region of interest (sup-norm); it must exceed the diameter of any grid
    domain in use."""

    step: float = 1e-3
    method: str = "rk4"
    blowup_bound: float = 1e6

    def __post_init__(self):
        if self.step <= 0:
            raise ValueError("step must be positive")
        if self.method != "rk4":
            raise ValueError(f"unsupported method {self.method!r}")
        if self.blowup_bound <= 0:
            raise ValueError("blowup_bound must be positive")


@dataclass(frozen=True)
class SkewState:
    """Point (s, x) of the extended phase space; s is the base-time
    coordinate, advanced additively by the flow."""

    s: float
    x: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=np.float64)))


@dataclass
class FlowResult:
    endpoint: SkewState
    escaped: bool = False
    escape_time: float | None = None


class Trajectory:
    """Sequence of SkewStates on the integrator mesh of [t0, t1]."""

    def __init__(self, states, escaped=False, escape_time=None):
        self.states = list(states)
        self.escaped = escaped
        self.escape_time = escape_time

    def __len__(self):
        return len(self.states)

    def __getitem__(self, i):
        return self.states[i]

    def __iter__(self):
        return iter(self.states)


def round_to_steps(t: float, step: float) -> int:
    """Number of steps for a requested signed time (nearest multiple)."""
    return int(round(t / step))


def rk4_step(field, t, X, h, params=None):
    """One classical RK4 step for the batch X (n, d); h may be negative."""
    k1 = field.eval_batch(t, X, params, check=False)
    k2 = field.eval_batch(t + h / 2, X + (h / 2) * k1, params, check=False)
    k3 = field.eval_batch(t + h / 2, X + (h / 2) * k2, params, check=False)
    k4 = field.eval_batch(t + h, X + h * k3, params, check=False)
    return X + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def evolve(field, s0, X0, n_steps, h, cfg, params=None, observer=None):
    """Integrate a batch for n_steps of signed size h from base time s0.

    Escaped points (sup-norm beyond cfg.blowup_bound, or non-finite) are
    frozen at their last valid state and masked out. observer, if given, is
    called as observer(k, t_k, X, alive) at every mesh point including k=0.
    Returns (X, alive, escape_step) where escape_step[i] is the first dead
    step index or -1.
    """
    X = np.array(X0, dtype=np.float64)
    n = X.shape[0]
    alive = np.ones(n, dtype=bool)
    escape_step = np.full(n, -1, dtype=np.int64)
    bound = cfg.blowup_bound
    if observer is not None:
        observer(0, s0, X, alive)
    for k in range(n_steps):
        t_k = s0 + k * h
        X_new = rk4_step(field, t_k, X, h, params)
        with np.errstate(invalid="ignore"):
            ok = np.all(np.isfinite(X_new), axis=1) & (
                np.max(np.abs(X_new), axis=1) <= bound)
        died = alive & ~ok
        escape_step[died] = k + 1
        alive = alive & ok
        X = np.where(alive[:, None], X_new, X)
        if observer is not None:
            observer(k + 1, s0 + (k + 1) * h, X, alive)
    return X, alive, escape_step


def flow_auto(f0, x, t, cfg: FlowConfig) -> FlowResult:
    """Flow a point of the autonomous field f0 for signed time t."""
    if f0.uses_time:
        raise ValueError("flow_auto requires an autonomous field")
    return flow_skew(f0, SkewState(0.0, x), t, cfg)


def flow_skew(fn, state: SkewState, t, cfg: FlowConfig) -> FlowResult:
    """Flow (s, x) for signed time t; the base component lands at s + t."""
    n = round_to_steps(t, cfg.step)
    if n == 0:
        return FlowResult(SkewState(state.s + t, state.x.copy()))
    h = cfg.step if n > 0 else -cfg.step
    X, alive, esc = evolve(fn, state.s, state.x[None, :], abs(n), h, cfg)
    if not alive[0]:
        esc_t = float(esc[0]) * abs(h)
        return FlowResult(SkewState(state.s + t, X[0]), escaped=True,
                          escape_time=esc_t)
    return FlowResult(SkewState(state.s + t, X[0]))


def trajectory(f, state: SkewState, t0, t1, cfg: FlowConfig) -> Trajectory:
    """States at every integrator step of [t0, t1] through (state at 0).

    t0 <= 0 <= t1 are offsets relative to the state. Escape truncates the
    affected end of the sequence and sets the escaped flag.
    """
    if not (t0 <= 0 <= t1):
        raise ValueError("need t0 <= 0 <= t1")
    n_back = abs(round_to_steps(t0, cfg.step))
    n_fwd = round_to_steps(t1, cfg.step)
    h = cfg.step
    escaped = False
    escape_time = None

    def leg(n_steps, sign):
        states = []

        def obs(k, t_k, X, alive):
            if k > 0 and alive[0]:
                states.append(SkewState(t_k, X[0].copy()))

        _, alive, esc = evolve(f, state.s, state.x[None, :], n_steps,
                               sign * h, cfg, observer=obs)
        return states, bool(alive[0]), esc[0]

    back_states, back_ok, back_esc = leg(n_back, -1) if n_back else ([], True, -1)
    fwd_states, fwd_ok, fwd_esc = leg(n_fwd, +1) if n_fwd else ([], True, -1)
    if not back_ok:
        escaped = True
        escape_time = -float(back_esc) * h
    if not fwd_ok:
        escaped = True
        escape_time = float(fwd_esc) * h
    states = list(reversed(back_states)) + [SkewState(state.s, state.x.copy())] + fwd_states
    return Trajectory(states, escaped=escaped, escape_time=escape_time)
