"""Coupled guidance/compliance/adaptation dynamics.

The model tracks three non-negative state variables per manufacturer:

    g   guidance issuance level
    c   compliance effort
    m   market adaptation

plus an algebraic feedback level f derived from the instantaneous state.
The evolution is the coupled nonlinear system

    dg/dt = alpha1 * (1 - exp(-phi1 * t)) - beta1 * f
    dc/dt = alpha2 * g * (1 - exp(-phi2 * c)) - beta2 * c / (1 + gamma1 * m)
    dm/dt = alpha3 * c * (1 - exp(-phi3 * g)) - beta3 * m
    f     = alpha4 * m * (1 - exp(-phi4 * c)) / (1 + gamma2 * c)

Integration is fixed-step classical RK4. After every step each component
is clamped at zero (the quantities are semantically non-negative) and the
number of clamp events is counted so runs can be audited. All functions
here are pure; identical inputs give bit-identical outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace

from .errors import ArgumentError, DomainError, NumericalError

__all__ = [
    "ModelParameters",
    "SystemState",
    "Trajectory",
    "PARAM_FIELDS",
    "DEFAULT_PARAMETERS",
    "DEFAULT_PARAM_BOUNDS",
    "DEFAULT_INITIAL_STATE",
    "eval_feedback",
    "eval_derivatives",
    "step_rk4",
    "integrate",
    "advance",
    "write_trajectory_csv",
]

# Steps above this are refused rather than silently ground through.
MAX_STEPS = 10_000_000


@dataclass(frozen=True)
class ModelParameters:
    """The 13 coefficients of the coupled system.

    alpha* are gain coefficients, phi* saturation rates, beta* damping
    coefficients, gamma* dilution coefficients. All must be finite and
    non-negative.
    """

    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha3: float = 0.0
    alpha4: float = 0.0
    phi1: float = 0.0
    phi2: float = 0.0
    phi3: float = 0.0
    phi4: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0

    def replace(self, **changes: float) -> "ModelParameters":
        return replace(self, **changes)


PARAM_FIELDS: tuple[str, ...] = tuple(f.name for f in fields(ModelParameters))

#: Box constraints used by calibration and by bounded parameter updates.
#: Saturation rates get a tighter box to keep the exponentials well-scaled.
DEFAULT_PARAM_BOUNDS: dict[str, tuple[float, float]] = {
    name: ((0.0, 5.0) if name.startswith("phi") else (0.0, 10.0))
    for name in PARAM_FIELDS
}

#: Baseline coefficient set shipped with the package. Chosen so that the
#: default simulation is stable (no clamping from the default start) and
#: the feedback loop is strong enough that damping produces the expected
#: saturation behaviour.
DEFAULT_PARAMETERS = ModelParameters(
    alpha1=0.5,
    alpha2=0.4,
    alpha3=0.35,
    alpha4=0.6,
    phi1=0.6,
    phi2=0.5,
    phi3=0.5,
    phi4=0.5,
    beta1=0.3,
    beta2=0.25,
    beta3=0.3,
    gamma1=0.4,
    gamma2=0.3,
)


@dataclass(frozen=True)
class SystemState:
    """A point of the system: time plus the three state components."""

    t: float
    g: float
    c: float
    m: float


DEFAULT_INITIAL_STATE = SystemState(t=0.0, g=0.5, c=0.5, m=0.5)


@dataclass
class Trajectory:
    """Uniformly-spaced integration output.

    samples holds (state, f) pairs where f is the feedback level evaluated
    at that state; spacing between consecutive sample times is exactly dt.
    clamp_events counts components clamped to zero during integration.
    """

    samples: list[tuple[SystemState, float]]
    dt: float
    clamp_events: int = 0

    def __len__(self) -> int:
        return len(self.samples)

    def terminal(self) -> tuple[SystemState, float]:
        return self.samples[-1]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _check_parameters(p: ModelParameters) -> None:
    for name in PARAM_FIELDS:
        v = getattr(p, name)
        if not math.isfinite(v):
            raise DomainError(f"parameter {name} is not finite: {v!r}")
        if v < 0.0:
            raise DomainError(f"parameter {name} must be >= 0, got {v!r}")


def _check_state(s: SystemState) -> None:
    for name in ("t", "g", "c", "m"):
        v = getattr(s, name)
        if not math.isfinite(v):
            raise DomainError(f"state field {name} is not finite: {v!r}")
        if v < 0.0:
            raise DomainError(f"state field {name} must be >= 0, got {v!r}")


def _exp(x: float) -> float:
    # math.exp raises OverflowError instead of returning inf; a runaway
    # stage value should surface as a NumericalError downstream, not as
    # an uncaught OverflowError here.
    if x > 709.0:
        return math.inf
    return math.exp(x)


# ---------------------------------------------------------------------------
# pointwise evaluation
# ---------------------------------------------------------------------------

def eval_feedback(state: SystemState, p: ModelParameters) -> float:
    """Feedback level f at a state; bounded by alpha4 * m."""
    _check_state(state)
    _check_parameters(p)
    c, m = state.c, state.m
    return p.alpha4 * (m * (1.0 - _exp(-p.phi4 * c)) / (1.0 + p.gamma2 * c))


def eval_derivatives(state: SystemState, p: ModelParameters) -> tuple[float, float, float]:
    """Time derivatives (dg, dc, dm) at a state."""
    _check_state(state)
    _check_parameters(p)
    deriv = _make_deriv(p)
    return deriv(state.t, state.g, state.c, state.m)


def _make_deriv(p: ModelParameters):
    """Bind parameters into a fast (t, g, c, m) -> (dg, dc, dm) closure."""
    a1, a2, a3, a4 = p.alpha1, p.alpha2, p.alpha3, p.alpha4
    f1, f2, f3, f4 = p.phi1, p.phi2, p.phi3, p.phi4
    b1, b2, b3 = p.beta1, p.beta2, p.beta3
    g1, g2 = p.gamma1, p.gamma2

    def deriv(t: float, g: float, c: float, m: float) -> tuple[float, float, float]:
        f = a4 * (m * (1.0 - _exp(-f4 * c)) / (1.0 + g2 * c))
        dg = a1 * (1.0 - _exp(-f1 * t)) - b1 * f
        dc = a2 * g * (1.0 - _exp(-f2 * c)) - b2 * (c / (1.0 + g1 * m))
        dm = a3 * c * (1.0 - _exp(-f3 * g)) - b3 * m
        return dg, dc, dm

    return deriv


# ---------------------------------------------------------------------------
# integration
# ---------------------------------------------------------------------------

def _rk4_once(deriv, t: float, g: float, c: float, m: float, dt: float) -> tuple[float, float, float]:
    half = 0.5 * dt
    k1g, k1c, k1m = deriv(t, g, c, m)
    k2g, k2c, k2m = deriv(t + half, g + half * k1g, c + half * k1c, m + half * k1m)
    k3g, k3c, k3m = deriv(t + half, g + half * k2g, c + half * k2c, m + half * k2m)
    k4g, k4c, k4m = deriv(t + dt, g + dt * k3g, c + dt * k3c, m + dt * k3m)
    sixth = dt / 6.0
    return (
        g + sixth * (k1g + 2.0 * k2g + 2.0 * k3g + k4g),
        c + sixth * (k1c + 2.0 * k2c + 2.0 * k3c + k4c),
        m + sixth * (k1m + 2.0 * k2m + 2.0 * k3m + k4m),
    )


def _check_dt(dt: float) -> None:
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0.0):
        raise ArgumentError(f"dt must be a positive finite number, got {dt!r}")


def step_rk4(state: SystemState, p: ModelParameters, dt: float) -> SystemState:
    """One classical RK4 step; components clamped at zero afterwards."""
    _check_dt(dt)
    _check_state(state)
    _check_parameters(p)
    deriv = _make_deriv(p)
    g, c, m = _rk4_once(deriv, state.t, state.g, state.c, state.m, dt)
    return SystemState(
        t=state.t + dt,
        g=g if g > 0.0 else 0.0,
        c=c if c > 0.0 else 0.0,
        m=m if m > 0.0 else 0.0,
    )


def _integrate_raw(
    t0: float,
    g0: float,
    c0: float,
    m0: float,
    p: ModelParameters,
    steps: int,
    dt: float,
) -> tuple[list[tuple[float, float, float]], int]:
    """Core fixed-step loop on plain floats.

    Sample times are reconstructed as t0 + k*dt (not accumulated) so
    spacing stays exact to machine precision. Returns steps+1 samples
    and the clamp-event count.
    """
    deriv = _make_deriv(p)
    out = [(g0, c0, m0)]
    clamps = 0
    g, c, m = g0, c0, m0
    for k in range(steps):
        t = t0 + k * dt
        g, c, m = _rk4_once(deriv, t, g, c, m, dt)
        if g < 0.0:
            g = 0.0
            clamps += 1
        if c < 0.0:
            c = 0.0
            clamps += 1
        if m < 0.0:
            m = 0.0
            clamps += 1
        if not (math.isfinite(g) and math.isfinite(c) and math.isfinite(m)):
            raise NumericalError(
                f"non-finite state after integration step {k}: "
                f"g={g!r} c={c!r} m={m!r}",
                step_index=k,
            )
        out.append((g, c, m))
    return out, clamps


def _step_count(horizon: float, dt: float) -> int:
    # ceil with a relative guard so horizons that are exact multiples of dt
    # do not gain a spurious extra step from float division.
    steps = math.ceil(horizon / dt - 1e-9)
    return max(steps, 1)


def integrate(
    initial: SystemState,
    p: ModelParameters,
    horizon: float,
    dt: float,
) -> Trajectory:
    """Integrate over [t0, t0 + horizon] with fixed step dt.

    Produces ceil(horizon/dt) + 1 samples, the first being the initial
    state; every sample carries the feedback level of its state.
    """
    _check_dt(dt)
    if not (math.isfinite(horizon) and horizon >= dt):
        raise ArgumentError(f"horizon must satisfy horizon >= dt, got {horizon!r}")
    _check_state(initial)
    _check_parameters(p)
    steps = _step_count(horizon, dt)
    if steps > MAX_STEPS:
        raise ArgumentError(f"horizon/dt requires {steps} steps; limit is {MAX_STEPS}")

    raw, clamps = _integrate_raw(initial.t, initial.g, initial.c, initial.m, p, steps, dt)
    a4, f4, g2 = p.alpha4, p.phi4, p.gamma2
    samples: list[tuple[SystemState, float]] = []
    for k, (g, c, m) in enumerate(raw):
        state = SystemState(t=initial.t + k * dt, g=g, c=c, m=m)
        f = a4 * (m * (1.0 - _exp(-f4 * c)) / (1.0 + g2 * c))
        samples.append((state, f))
    return Trajectory(samples=samples, dt=dt, clamp_events=clamps)


def advance(
    state: SystemState,
    p: ModelParameters,
    dt: float,
    substeps: int,
) -> tuple[SystemState, float, float, int]:
    """Advance one decision interval of length dt in `substeps` RK4 substeps.

    Returns (new_state, feedback_at_new_state, compliance_cost, clamp_events)
    where compliance_cost is the left-endpoint quadrature of the damping
    term beta2 * c / (1 + gamma1 * m) over the interval.
    """
    _check_dt(dt)
    if not (isinstance(substeps, int) and substeps >= 1):
        raise ArgumentError(f"substeps must be a positive integer, got {substeps!r}")
    _check_state(state)
    _check_parameters(p)
    h = dt / substeps
    deriv = _make_deriv(p)
    b2, g1 = p.beta2, p.gamma1
    g, c, m = state.g, state.c, state.m
    cost = 0.0
    clamps = 0
    for k in range(substeps):
        t = state.t + k * h
        cost += b2 * (c / (1.0 + g1 * m)) * h
        g, c, m = _rk4_once(deriv, t, g, c, m, h)
        if g < 0.0:
            g = 0.0
            clamps += 1
        if c < 0.0:
            c = 0.0
            clamps += 1
        if m < 0.0:
            m = 0.0
            clamps += 1
        if not (math.isfinite(g) and math.isfinite(c) and math.isfinite(m)):
            raise NumericalError(
                f"non-finite state after substep {k}", step_index=k
            )
    new_state = SystemState(t=state.t + dt, g=g, c=c, m=m)
    f = p.alpha4 * (m * (1.0 - _exp(-p.phi4 * c)) / (1.0 + p.gamma2 * c))
    return new_state, f, cost, clamps


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(x, ".17g")


def trajectory_csv_lines(traj: Trajectory) -> list[str]:
    """CSV rows (header first) with full double precision."""
    lines = ["t,G,C,M,F"]
    for state, f in traj.samples:
        lines.append(
            f"{_fmt(state.t)},{_fmt(state.g)},{_fmt(state.c)},{_fmt(state.m)},{_fmt(f)}"
        )
    return lines


def write_trajectory_csv(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(trajectory_csv_lines(traj)) + "\n")
