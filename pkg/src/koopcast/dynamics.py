"""Deterministic generators for four nonlinear dynamical systems.

All systems are integrated with the fully explicit Euler method: the
benchmark trajectories are defined by the scheme, not by ODE accuracy, so a
higher-order integrator would change the data. Initial conditions come from
a seeded PCG64 generator (the name is recorded in the trajectory file header
so another implementation can reproduce the stream).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from .errors import ConfigurationError, SimulationDivergedError

_TRAIN_RNG_NAME = "pcg64"


def _pendulum(state, params, t):
    theta, omega = state
    return np.array([omega, -(params["g"] / params["l"]) * math.sin(theta)])


def _duffing(state, params, t):
    x, v = state
    dv = (
        params["gamma"] * math.cos(params["omega"] * t)
        - params["delta"] * v
        - params["alpha"] * x
        - params["beta"] * x**3
    )
    return np.array([v, dv])


def _lotka_volterra(state, params, t):
    prey, predator = state
    return np.array(
        [
            params["alpha"] * prey - params["beta"] * prey * predator,
            params["delta"] * prey * predator - params["gamma"] * predator,
        ]
    )


def _lorenz63(state, params, t):
    x, y, z = state
    return np.array(
        [
            params["sigma"] * (y - x),
            x * (params["rho"] - z) - y,
            x * y - params["beta"] * z,
        ]
    )


@dataclass(frozen=True)
class SystemDef:
    dim: int
    columns: tuple[str, ...]
    defaults: Dict[str, float]
    vector_field: Callable
    draw_initial: Callable  # rng -> state


SYSTEMS: Dict[str, SystemDef] = {
    "pendulum": SystemDef(
        dim=2,
        columns=("theta", "omega"),
        defaults={"g": 9.81, "l": 1.0},
        vector_field=_pendulum,
        draw_initial=lambda rng: np.array(
            [rng.uniform(-math.pi, math.pi), rng.uniform(-1.0, 1.0)]
        ),
    ),
    "duffing": SystemDef(
        dim=2,
        columns=("x", "v"),
        defaults={"alpha": 1.0, "beta": 5.0, "delta": 0.3, "gamma": 8.0, "omega": 0.5},
        vector_field=_duffing,
        draw_initial=lambda rng: np.array(
            [rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)]
        ),
    ),
    "lotka_volterra": SystemDef(
        dim=2,
        columns=("prey", "predator"),
        defaults={"alpha": 1.1, "beta": 0.4, "delta": 0.1, "gamma": 0.4},
        vector_field=_lotka_volterra,
        draw_initial=lambda rng: np.array(
            [rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)]
        ),
    ),
    "lorenz63": SystemDef(
        dim=3,
        columns=("x", "y", "z"),
        defaults={"sigma": 10.0, "rho": 28.0, "beta": 8.0 / 3.0},
        vector_field=_lorenz63,
        draw_initial=lambda rng: np.array(
            [rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5), rng.uniform(0.5, 1.5)]
        ),
    ),
}


@dataclass(frozen=True)
class SystemSpec:
    """A fully determined simulation: system kind, parameters, step size,
    total step count, and the seed for the initial-condition draw."""

    kind: str
    parameters: Dict[str, float] = field(default_factory=dict)
    dt: float = 0.01
    steps: int = 20_000
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SYSTEMS:
            raise ConfigurationError(
                f"unknown system {self.kind!r}; choose from {sorted(SYSTEMS)}"
            )
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        merged = dict(SYSTEMS[self.kind].defaults)
        unknown = set(self.parameters) - set(merged)
        if unknown:
            raise ConfigurationError(
                f"unknown parameters {sorted(unknown)} for {self.kind}; "
                f"expected {sorted(merged)}"
            )
        merged.update(self.parameters)
        object.__setattr__(self, "parameters", merged)

    @property
    def dim(self) -> int:
        return SYSTEMS[self.kind].dim

    @property
    def columns(self) -> tuple[str, ...]:
        return SYSTEMS[self.kind].columns


@dataclass(frozen=True)
class Trajectory:
    """A simulated state sequence: row k is the state at time k * dt."""

    states: np.ndarray  # [steps, dim]
    spec: SystemSpec


def euler_step(state: np.ndarray, spec: SystemSpec, t: float) -> np.ndarray:
    """One explicit Euler update: state + dt * f(state, t)."""
    state = np.asarray(state, dtype=np.float64)
    if not np.all(np.isfinite(state)):
        raise SimulationDivergedError(
            f"non-finite state {state} entering the step at t={t}"
        )
    system = SYSTEMS[spec.kind]
    # Divergence is detected and reported by the caller; don't warn en route.
    with np.errstate(over="ignore", invalid="ignore"):
        return state + spec.dt * system.vector_field(state, spec.parameters, t)


def generate(spec: SystemSpec) -> Trajectory:
    """Simulate a full trajectory; identical specs give bit-identical output."""
    system = SYSTEMS[spec.kind]
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    states = np.empty((spec.steps, system.dim))
    states[0] = system.draw_initial(rng)
    for k in range(spec.steps - 1):
        states[k + 1] = euler_step(states[k], spec, k * spec.dt)
        if not np.all(np.isfinite(states[k + 1])):
            raise SimulationDivergedError(
                f"{spec.kind} trajectory diverged at step {k + 1}", step=k + 1
            )
    return Trajectory(states=states, spec=spec)


def split(n_steps: int) -> tuple[tuple[int, int], tuple[int, int], tuple[int, int]]:
    """Contiguous train/validation/test index ranges covering a trajectory.

    20000 steps split exactly into 14000/2000/4000; other lengths split
    proportionally 70/10/20 with the remainder going to the test range.
    """
    if n_steps < 100:
        raise ConfigurationError(
            f"need at least 100 steps to split, got {n_steps}"
        )
    train_end = n_steps * 7 // 10
    val_end = train_end + n_steps // 10
    return (0, train_end), (train_end, val_end), (val_end, n_steps)


def format_header(spec: SystemSpec) -> str:
    """Metadata comment embedded at the top of trajectory CSV files."""
    params = ";".join(f"{k}={spec.parameters[k]!r}" for k in sorted(spec.parameters))
    return (
        f"# system={spec.kind} dt={spec.dt!r} seed={spec.seed} "
        f"params={params} rng={_TRAIN_RNG_NAME}"
    )


def write_trajectory_csv(trajectory: Trajectory, path) -> None:
    """Write a metadata-headed CSV, one row per step, 17 significant digits."""
    spec = trajectory.spec
    with open(path, "w", newline="\n") as f:
        f.write(format_header(spec) + "\n")
        f.write(",".join(spec.columns) + "\n")
        for row in trajectory.states:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
