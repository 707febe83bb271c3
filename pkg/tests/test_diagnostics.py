import numpy as np
import pytest

from acmhd.diagnostics import (
    DiagRecord,
    TestField as SpaceTimeTest,
    bump_profile,
    energy,
    energy_balance_residual,
    energy_inequality_margins,
    make_record,
    pressure_rate_series,
    spacetime_norm,
    time_modulus,
    wave_residual,
    weak_residual,
)
from acmhd.solver import (
    AcState,
    IncState,
    Trajectory,
    integrate,
    make_initial_data,
    taylor_green,
    to_incompressible,
)
from acmhd.spectral import ContractError, Field, dealias, to_spectral, zeros
from acmhd.vector import curl, gradient

from conftest import band_limited


def _zero_state(grid, eps=1e-2):
    z, v = zeros(grid), zeros(grid, vector=True)
    return AcState(v, v, z, z, eps)


def _tg_state(grid, eps=1e-2, mu=1.0):
    z, v = zeros(grid), zeros(grid, vector=True)
    return AcState(taylor_green(grid), v, z, z, eps, 0.0, mu)


def _static_traj(state, n=5, dt=0.25):
    traj = Trajectory(dt=dt, cadence=1)
    for i in range(n):
        traj.add_snapshot(type(state)(**{**state.__dict__, "time": i * dt}))
    return traj


class TestEnergy:
    def test_zero(self, g16):
        assert energy(_zero_state(g16)) == 0.0

    def test_taylor_green(self, g32):
        assert energy(_tg_state(g32)) == pytest.approx(np.pi**3, rel=1e-12)

    def test_constant_pressure(self, g16):
        z, v = zeros(g16), zeros(g16, vector=True)
        p = to_spectral(Field(g16, np.full(g16.physical_shape, 2.0)))
        s = AcState(v, v, p, z, 0.1)
        assert energy(s) == pytest.approx(0.5 * 0.1 * 4.0 * (2 * np.pi) ** 3, rel=1e-12)

    def test_additive(self, g16):
        s = make_initial_data("ill_prepared", 1e-2, g16, seed=2)
        z, v = zeros(g16), zeros(g16, vector=True)
        e = s.epsilon
        parts = [AcState(s.u, v, z, z, e), AcState(v, s.B, z, z, e),
                 AcState(v, v, s.p, z, e), AcState(v, v, z, s.phi, e)]
        assert sum(energy(x) for x in parts) == pytest.approx(energy(s), rel=1e-13)

    def test_record_rejects_negative(self):
        with pytest.raises(ValueError):
            DiagRecord(0.0, -1.0, 0.0, 0.0, 0.0, 0.0)


class TestEnergyBalance:
    def test_linear_single_mode(self, g16):
        x, _, _ = g16.coordinates()
        u = to_spectral(Field(g16, np.stack([np.sin(x + 2 * x * 0), np.sin(x), 0 * x])))
        z = zeros(g16)
        s = AcState(u, zeros(g16, vector=True), z, z, 1e-2)
        traj = integrate(s, 0.01, 50, nonlinear=False)
        assert energy_balance_residual(traj) <= 1e-10

    def test_inviscid_conserves(self, g16):
        s = make_initial_data("well_prepared", 1e-2, g16)
        traj = integrate(s, 2e-3, 500, diffusion=False, keep_snapshots=False)
        assert energy_balance_residual(traj) <= 1e-6

    def test_order_two(self, g16):
        s = make_initial_data("well_prepared", 1e-2, g16)
        r1 = energy_balance_residual(integrate(s, 0.005, 40, keep_snapshots=False))
        r2 = energy_balance_residual(integrate(s, 0.0025, 80, keep_snapshots=False))
        assert 3.2 <= r1 / r2 <= 4.8

    def test_empty(self):
        with pytest.raises(ValueError):
            energy_balance_residual(Trajectory(dt=0.1, cadence=1))

    def test_trapezoid_variant(self, g16):
        s = make_initial_data("well_prepared", 1e-2, g16)
        traj = integrate(s, 0.005, 20, keep_snapshots=False)
        assert energy_balance_residual(traj, "trapezoid") < 1e-3
        with pytest.raises(ValueError):
            energy_balance_residual(traj, "simpson")


class TestSpacetimeNorm:
    def test_time_constant(self, g16):
        s = _tg_state(g16)
        traj = _static_traj(s)  # spans T = 1
        val = spacetime_norm(traj, 2, 2)
        assert val == pytest.approx(np.sqrt(2 * energy(s)), rel=1e-12)

    def test_sup_of_decaying_run(self, g16):
        s = _tg_state(g16)
        traj = integrate(s, 0.01, 10, nonlinear=False)
        assert spacetime_norm(traj, np.inf, 2) == pytest.approx(np.sqrt(2 * energy(s)), rel=1e-12)

    def test_homogeneous_degree_one(self, g16):
        s = make_initial_data("ill_prepared", 1e-2, g16, seed=1)
        traj = integrate(s, 0.01, 4, nonlinear=False)
        a = spacetime_norm(traj, 4, 4, -2.0, quantity_name="p")
        b = spacetime_norm(traj, 4, 4, -2.0, quantity_name=lambda st: 3.0 * st.p.data)
        assert b == pytest.approx(3 * a, rel=1e-12)

    def test_monotone_in_T(self, g16):
        s = make_initial_data("ill_prepared", 1e-2, g16, seed=1)
        traj = integrate(s, 0.01, 8, nonlinear=False)
        short = Trajectory(dt=0.01, cadence=1)
        for st in traj.snapshots[:5]:
            short.add_snapshot(st)
        assert spacetime_norm(short, 2, 4, quantity_name="Qu") <= spacetime_norm(traj, 2, 4, quantity_name="Qu")

    def test_missing_snapshots(self):
        with pytest.raises(ValueError):
            spacetime_norm(Trajectory(dt=0.1, cadence=1), 2, 2)

    def test_incompressible_has_no_pressure(self, g16):
        s = to_incompressible(_tg_state(g16))
        traj = integrate(s, 0.01, 2)
        with pytest.raises(ContractError):
            spacetime_norm(traj, 2, 2, quantity_name="p")


class TestWaveResidual:
    def test_zero_state(self, g16):
        traj = integrate(_zero_state(g16), 0.01, 4, nonlinear=False)
        assert wave_residual(traj) == 0.0

    def test_linear_fd_order(self, g16):
        s = make_initial_data("ill_prepared", 1e-2, g16, seed=4)
        traj = integrate(s, 0.0025, 64, nonlinear=False, diffusion=False, record=False)
        r1, r2 = wave_residual(traj, stride=2), wave_residual(traj, stride=1)
        assert 3.2 <= r1 / r2 <= 4.8

    def test_potential_converges(self, g16):
        s = make_initial_data("ill_prepared", 1e-2, g16, seed=4)
        traj = integrate(s, 0.0025, 64, record=False)
        r = [wave_residual(traj, "potential", stride=k) for k in (4, 2, 1)]
        assert r[0] > r[1] > r[2]

    def test_needs_three(self, g16):
        traj = integrate(_zero_state(g16), 0.01, 1)
        with pytest.raises(ValueError):
            wave_residual(traj)

    def test_rejects_incompressible(self, g16):
        traj = integrate(to_incompressible(_tg_state(g16)), 0.01, 3)
        with pytest.raises(ContractError):
            wave_residual(traj)

    def test_bad_kind(self, g16):
        traj = integrate(_zero_state(g16), 0.01, 3)
        with pytest.raises(ValueError):
            wave_residual(traj, "density")


class TestWeakResidual:
    def _tests(self, grid, T, seeds=(1, 2)):
        return [SpaceTimeTest(dealias(curl(band_limited(grid, s, vector=True, kmax=4))), bump_profile(T))
                for s in seeds]

    def test_zero_solution(self, g16):
        v = zeros(g16, vector=True)
        traj = integrate(IncState(v, v), 0.05, 4)
        assert weak_residual(traj, self._tests(g16, 0.2)) == 0.0

    def test_orthogonal_mode(self, g16):
        # u = (0, sin x, 0) decays as e^{-t}; psi = (0, 0, sin y) shares no mode
        x, y, _ = g16.coordinates()
        u = to_spectral(Field(g16, np.stack([0 * x, np.sin(x), 0 * x])))
        psi = to_spectral(Field(g16, np.stack([0 * x, 0 * x, np.sin(y)])))
        traj = integrate(IncState(u, zeros(g16, vector=True)), 0.05, 8)
        assert weak_residual(traj, [SpaceTimeTest(psi, bump_profile(0.4))]) <= 1e-12

    def test_rejects_gradient_test_field(self, g16):
        with pytest.raises(ContractError):
            SpaceTimeTest(gradient(band_limited(g16, 3)), bump_profile(1.0))

    def test_second_order(self, g16):
        s = to_incompressible(make_initial_data("well_prepared", 1e-2, g16))
        T = 0.25
        tests = self._tests(g16, T)
        r = [weak_residual(integrate(s, T / n, n, record=False), tests) for n in (16, 32)]
        assert 3.2 <= r[0] / r[1] <= 4.8

    def test_energy_inequality_holds(self, g16):
        s = to_incompressible(make_initial_data("well_prepared", 1e-2, g16))
        traj = integrate(s, 0.0025, 80, keep_snapshots=False)
        assert energy_inequality_margins(traj).min() >= -1e-8 * traj.records[0].energy


class TestTimeModulus:
    def test_zero_shift(self, g16):
        traj = integrate(make_initial_data("well_prepared", 1e-2, g16), 0.01, 4)
        assert time_modulus(traj, 0.0) == 0.0

    def test_constant_field(self, g16):
        traj = _static_traj(_tg_state(g16))
        assert time_modulus(traj, 0.5, "P", "u") == 0.0

    def test_range_and_multiple(self, g16):
        traj = integrate(make_initial_data("well_prepared", 1e-2, g16), 0.01, 4)
        with pytest.raises(ValueError):
            time_modulus(traj, 0.05)
        with pytest.raises(ValueError):
            time_modulus(traj, 0.015)
        with pytest.raises(ValueError):
            time_modulus(traj, 0.01, "X")

    def test_subadditive(self, g16):
        traj = integrate(make_initial_data("ill_prepared", 1e-2, g16, seed=1), 0.005, 16)
        m1, m2 = time_modulus(traj, 0.01, "P", "u"), time_modulus(traj, 0.02, "P", "u")
        assert m2 <= 2 * m1 * (1 + 1e-12)


class TestPressureRate:
    def test_quadratic_in_time(self, g16):
        # p = t^2 cos x: centered differences are exact, |k| = 1
        x, _, _ = g16.coordinates()
        f = to_spectral(Field(g16, np.cos(x)))
        z = zeros(g16, vector=True)
        eps, step = 1e-2, 0.1
        traj = Trajectory(dt=step, cadence=1)
        for i in range(5):
            t = i * step
            traj.add_snapshot(AcState(z, z, f.with_data(t**2 * f.data), zeros(g16), eps, t))
        t, v = pressure_rate_series(traj)
        expect = eps * 2 * t * np.sqrt(4 * np.pi**3) / np.sqrt(2)
        assert np.allclose(v, expect, rtol=1e-12)

    def test_needs_three(self, g16):
        traj = Trajectory(dt=0.1, cadence=1)
        traj.add_snapshot(make_initial_data("well_prepared", 1e-2, g16))
        with pytest.raises(ValueError):
            pressure_rate_series(traj)


class TestRecords:
    def test_q_norms_optional(self, g16):
        s = make_initial_data("ill_prepared", 1e-2, g16, seed=1)
        assert make_record(s, q_norms=False).q_norms == {}
        rec = make_record(s)
        assert rec.q_norms[("Qu", 4, 0.0)] > 0
