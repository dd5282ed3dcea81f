import math

import numpy as np
import pytest

from koopcast.errors import ConfigurationError, SimulationDivergedError
from koopcast.dynamics import (
    SystemSpec,
    Trajectory,
    euler_step,
    generate,
    split,
    write_trajectory_csv,
)


# ---------------------------------------------------------------- single steps
# Hand-derived Euler updates at dt=0.01 with the published default parameters.


def test_lorenz_hand_step():
    spec = SystemSpec(kind="lorenz63", dt=0.01, steps=2, seed=0)
    out = euler_step(np.array([1.0, 1.0, 1.0]), spec, t=0.0)
    expected = np.array([1.0, 1.26, 1.0 - (5.0 / 3.0) * 0.01])
    assert np.max(np.abs(out - expected)) <= 1e-12


def test_lotka_volterra_hand_step():
    spec = SystemSpec(kind="lotka_volterra", dt=0.01, steps=2, seed=0)
    out = euler_step(np.array([1.0, 1.0]), spec, t=0.0)
    assert np.max(np.abs(out - np.array([1.007, 0.997]))) <= 1e-12


def test_duffing_hand_step():
    spec = SystemSpec(kind="duffing", dt=0.01, steps=2, seed=0)
    out = euler_step(np.array([0.0, 0.0]), spec, t=0.0)
    assert np.max(np.abs(out - np.array([0.0, 0.08]))) <= 1e-12


def test_pendulum_hand_step():
    spec = SystemSpec(kind="pendulum", dt=0.01, steps=2, seed=0)
    out = euler_step(np.array([math.pi / 2, 0.0]), spec, t=0.0)
    assert np.max(np.abs(out - np.array([math.pi / 2, -0.0981]))) <= 1e-12


def test_duffing_forcing_depends_on_time():
    spec = SystemSpec(kind="duffing", dt=0.01, steps=2, seed=0)
    at_zero = euler_step(np.zeros(2), spec, t=0.0)
    later = euler_step(np.zeros(2), spec, t=math.pi / 0.5)  # cos flips sign
    assert at_zero[1] == pytest.approx(0.08)
    assert later[1] == pytest.approx(-0.08)


def test_euler_step_rejects_non_finite_state():
    spec = SystemSpec(kind="pendulum", dt=0.01, steps=2, seed=0)
    with pytest.raises(SimulationDivergedError):
        euler_step(np.array([np.nan, 0.0]), spec, t=0.0)


# ---------------------------------------------------------------- generate


def test_generation_is_bitwise_deterministic():
    spec = SystemSpec(kind="lorenz63", steps=500, seed=42)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.states, b.states)


def test_different_seeds_differ():
    a = generate(SystemSpec(kind="pendulum", steps=100, seed=1))
    b = generate(SystemSpec(kind="pendulum", steps=100, seed=2))
    assert not np.array_equal(a.states, b.states)


def test_pendulum_energy_drift_is_bounded():
    spec = SystemSpec(kind="pendulum", dt=0.001, steps=2000, seed=5)
    traj = generate(spec)
    theta, omega = traj.states[:, 0], traj.states[:, 1]
    g_over_l = spec.parameters["g"] / spec.parameters["l"]
    energy = 0.5 * omega**2 + g_over_l * (1.0 - np.cos(theta))
    drift = np.abs(energy - energy[0]) / energy[0]
    assert np.max(drift) <= 0.05


def test_lotka_volterra_stays_positive_over_full_run():
    traj = generate(SystemSpec(kind="lotka_volterra", dt=0.01, steps=20_000, seed=7))
    assert np.all(traj.states > 0.0)


def test_all_systems_produce_finite_default_runs():
    for kind in ("pendulum", "duffing", "lotka_volterra", "lorenz63"):
        traj = generate(SystemSpec(kind=kind, steps=20_000, seed=3))
        assert np.all(np.isfinite(traj.states))
        assert traj.states.shape == (20_000, traj.spec.dim)


def test_coarse_vs_fine_euler_divergence_is_smooth():
    # Non-chaotic systems: dt vs dt/10 (subsampled) stay within 10% over the
    # first 100 coarse steps.
    for kind in ("pendulum", "lotka_volterra"):
        coarse_spec = SystemSpec(kind=kind, dt=0.001, steps=101, seed=11)
        coarse = generate(coarse_spec).states
        fine = generate(SystemSpec(kind=kind, dt=0.0001, steps=1001, seed=11)).states
        fine_sub = fine[::10]
        scale = np.max(np.abs(coarse), axis=0)
        gap = np.abs(coarse - fine_sub) / scale
        assert np.max(gap) <= 0.10


def test_initial_conditions_within_documented_ranges():
    for kind, low, high in (
        ("duffing", -0.1, 0.1),
        ("lotka_volterra", 0.5, 1.5),
        ("lorenz63", 0.5, 1.5),
    ):
        for seed in range(5):
            first = generate(SystemSpec(kind=kind, steps=2, seed=seed)).states[0]
            assert np.all(first >= low) and np.all(first <= high)
    for seed in range(5):
        theta, omega = generate(SystemSpec(kind="pendulum", steps=2, seed=seed)).states[0]
        assert -math.pi <= theta <= math.pi
        assert -1.0 <= omega <= 1.0


def test_divergence_reports_step_index():
    # A huge dt blows the Lorenz system up quickly.
    spec = SystemSpec(kind="lorenz63", dt=10.0, steps=1000, seed=0)
    with pytest.raises(SimulationDivergedError) as err:
        generate(spec)
    assert err.value.step is not None and err.value.step > 0


# ---------------------------------------------------------------- spec validation


def test_unknown_system_rejected():
    with pytest.raises(ConfigurationError):
        SystemSpec(kind="rossler")


def test_unknown_parameter_rejected():
    with pytest.raises(ConfigurationError):
        SystemSpec(kind="pendulum", parameters={"mass": 2.0})


def test_parameter_override_merges_with_defaults():
    spec = SystemSpec(kind="lorenz63", parameters={"rho": 14.0})
    assert spec.parameters["rho"] == 14.0
    assert spec.parameters["sigma"] == 10.0


def test_bad_dt_and_steps_rejected():
    with pytest.raises(ConfigurationError):
        SystemSpec(kind="pendulum", dt=0.0)
    with pytest.raises(ConfigurationError):
        SystemSpec(kind="pendulum", steps=0)


# ---------------------------------------------------------------- split


def test_split_20000_matches_published_protocol():
    assert split(20_000) == ((0, 14_000), (14_000, 16_000), (16_000, 20_000))


def test_split_100_proportional():
    assert split(100) == ((0, 70), (70, 80), (80, 100))


def test_split_ranges_disjoint_and_exhaustive():
    rng = np.random.default_rng(13)
    for n in rng.integers(100, 50_000, size=20):
        (a0, a1), (b0, b1), (c0, c1) = split(int(n))
        assert a0 == 0 and a1 == b0 and b1 == c0 and c1 == n
        assert a1 > a0 and b1 > b0 and c1 > c0


def test_split_rejects_tiny_series():
    with pytest.raises(ConfigurationError):
        split(99)


# ---------------------------------------------------------------- CSV export


def test_trajectory_csv_has_metadata_and_roundtrip_precision(tmp_path):
    spec = SystemSpec(kind="lorenz63", steps=50, seed=9)
    traj = generate(spec)
    path = tmp_path / "lorenz.csv"
    write_trajectory_csv(traj, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# system=lorenz63 ")
    assert "seed=9" in lines[0] and "rng=pcg64" in lines[0]
    assert lines[1] == "x,y,z"
    parsed = np.array([[float(v) for v in line.split(",")] for line in lines[2:]])
    assert np.array_equal(parsed, traj.states)  # repr() roundtrips float64


def test_trajectory_csv_bytes_deterministic(tmp_path):
    spec = SystemSpec(kind="duffing", steps=64, seed=4)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    write_trajectory_csv(generate(spec), p1)
    write_trajectory_csv(generate(spec), p2)
    assert p1.read_bytes() == p2.read_bytes()
