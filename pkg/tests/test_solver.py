import numpy as np
import pytest
from scipy.linalg import expm

from acmhd.diagnostics import energy
from acmhd.spectral import Field, dealias, l2_norm, spectral_inner, to_spectral, zeros
from acmhd.solver import (
    AcState,
    IncState,
    InitialDataError,
    StabilityError,
    acoustic_step,
    diffusion_step,
    integrate,
    make_initial_data,
    nonlinear_rhs,
    reference_step,
    strang_step,
    taylor_green,
    to_incompressible,
)
from acmhd.vector import div_array

from conftest import band_limited


def _state(grid, u, B=None, p=None, phi=None, eps=1e-2, mu=1.0):
    z = zeros(grid)
    return AcState(u, B if B is not None else zeros(grid, vector=True),
                   p if p is not None else z, phi if phi is not None else z, eps, 0.0, mu)


def _random_state(grid, seed, eps=1e-2):
    return AcState(
        dealias(band_limited(grid, seed, vector=True)),
        dealias(band_limited(grid, seed + 1, vector=True)),
        dealias(band_limited(grid, seed + 2)),
        dealias(band_limited(grid, seed + 3)),
        eps,
    )


def _plane_wave(grid, amp=0.7):
    # u = A khat cos(k.x) with k = (1, 2, 0)
    x, y, _ = grid.coordinates()
    k = np.array([1.0, 2.0, 0.0])
    khat = k / np.linalg.norm(k)
    c = np.cos(x + 2 * y)
    u = Field(grid, np.stack([amp * khat[i] * c for i in range(3)]))
    return to_spectral(u), np.linalg.norm(k)


class TestNonlinear:
    def test_zero_state(self, g16):
        du, dB = nonlinear_rhs(_state(g16, zeros(g16, vector=True)))
        assert np.abs(du.data).max() == 0 and np.abs(dB.data).max() == 0

    def test_constant_velocity(self, g16):
        u = zeros(g16, vector=True).data.copy()
        u[:, 0, 0, 0] = (1.0, -2.0, 0.5)
        du, _ = nonlinear_rhs(_state(g16, Field(g16, u, spectral=True)))
        assert np.abs(du.data).max() < 1e-14

    def test_energy_pairing(self, g32):
        s = _random_state(g32, 10)
        du, dB = nonlinear_rhs(s)
        pair = spectral_inner(du.data, s.u.data, g32) + spectral_inner(dB.data, s.B.data, g32)
        scale = l2_norm(du) * l2_norm(s.u) + l2_norm(dB) * l2_norm(s.B)
        assert abs(pair) <= 1e-10 * scale


class TestAcoustic:
    def test_solenoidal_unchanged(self, g16):
        tg = taylor_green(g16)
        s = acoustic_step(_state(g16, tg), 0.3)
        assert np.abs(s.u.data - tg.data).max() < 1e-15
        assert np.abs(s.p.data).max() < 1e-15

    @pytest.mark.parametrize("eps", [1.0, 1e-2, 1e-4])
    def test_plane_wave(self, g16, eps):
        u0, kk = _plane_wave(g16)
        t = 0.37
        s = acoustic_step(_state(g16, u0, eps=eps), t)
        expect = np.cos(kk * t / np.sqrt(eps)) * u0.data
        assert np.abs(s.u.data - expect).max() < 1e-13

    def test_energy_conserved(self, g32):
        s = _random_state(g32, 20)
        e0 = energy(s)
        assert energy(acoustic_step(s, 0.05)) == pytest.approx(e0, rel=1e-12)

    def test_rejects_nonpositive_dt(self, g16):
        with pytest.raises(ValueError):
            acoustic_step(_state(g16, taylor_green(g16)), 0.0)


class TestDiffusion:
    def test_single_mode(self, g16):
        x, _, _ = g16.coordinates()
        u = to_spectral(Field(g16, np.stack([np.sin(x), 0 * x, 0 * x])))
        s = diffusion_step(_state(g16, u), 0.1)
        assert np.abs(s.u.data - np.exp(-0.1) * u.data).max() < 1e-15

    def test_mean_untouched(self, g16):
        u = zeros(g16, vector=True).data.copy()
        u[:, 0, 0, 0] = 1.0
        s = diffusion_step(_state(g16, Field(g16, u, spectral=True)), 1.0)
        assert np.array_equal(s.u.data[:, 0, 0, 0], u[:, 0, 0, 0])

    def test_semigroup(self, g32):
        s = _random_state(g32, 30)
        a = diffusion_step(diffusion_step(s, 0.05), 0.05)
        b = diffusion_step(s, 0.1)
        assert np.abs(a.u.data - b.u.data).max() <= 1e-12 * np.abs(s.u.data).max()
        assert np.array_equal(a.p.data, s.p.data)

    def test_viscosity_scales_u_only(self, g16):
        x, _, _ = g16.coordinates()
        v = to_spectral(Field(g16, np.stack([np.sin(x), 0 * x, 0 * x])))
        s = diffusion_step(_state(g16, v, B=v, mu=0.5), 0.2)
        assert np.abs(s.u.data - np.exp(-0.1) * v.data).max() < 1e-15
        assert np.abs(s.B.data - np.exp(-0.2) * v.data).max() < 1e-15


class TestStrang:
    def test_zero_fixed_point(self, g16):
        s = _state(g16, zeros(g16, vector=True))
        for _ in range(3):
            s = strang_step(s, 0.1)
        assert np.abs(s.u.data).max() == 0

    def test_linear_solenoidal_exact(self, g16):
        # on transverse modes the acoustic flow is the identity, so the split
        # linear step is the exact heat flow
        tg = taylor_green(g16)
        s = _state(g16, tg, B=tg * 0.5, eps=1e-2, mu=0.7)
        for _ in range(20):
            s = strang_step(s, 0.01, nonlinear=False)
        assert np.abs(s.u.data - np.exp(-0.7 * 3 * 0.2) * tg.data).max() <= 1e-10
        assert np.abs(s.B.data - np.exp(-3 * 0.2) * 0.5 * tg.data).max() <= 1e-10

    def test_linear_longitudinal_second_order(self, g16):
        # damped acoustic mode: a' = -i w b - k^2 a, b' = -i w a, b = sqrt(eps) p
        u0, kk = _plane_wave(g16)
        eps, T = 1e-2, 0.2
        w = kk / np.sqrt(eps)
        M = np.array([[-kk**2, -1j * w], [-1j * w, 0.0]])
        amp = expm(M * T) @ np.array([1.0, 0.0])

        def err(n):
            s = _state(g16, u0, eps=eps)
            for _ in range(n):
                s = strang_step(s, T / n, nonlinear=False)
            return np.abs(s.u.data - amp[0] * u0.data).max()

        e1, e2 = err(50), err(100)
        assert 3.6 <= e1 / e2 <= 4.4

    def test_second_order(self, g16):
        s0 = make_initial_data("ill_prepared", 1e-1, g16, seed=3)
        T = 0.1

        def run(n):
            s = s0
            for _ in range(n):
                s = strang_step(s, T / n)
            return s.u.data

        a, b, c = run(8), run(16), run(32)
        ratio = np.abs(a - b).max() / np.abs(b - c).max()
        assert 3.2 <= ratio <= 4.8

    def test_stability_refusal(self, g16):
        s = make_initial_data("well_prepared", 1e-2, g16)
        with pytest.raises(StabilityError) as info:
            strang_step(s, 1.0, diffusion=False)
        assert info.value.cfl > 0.5


class TestReference:
    def test_divergence_free(self, g32):
        s = to_incompressible(make_initial_data("well_prepared", 1e-2, g32))
        for _ in range(4):
            s = reference_step(s, 0.01)
        for v in (s.u.data, s.B.data):
            assert np.sqrt(spectral_inner(div_array(v, g32), div_array(v, g32), g32)) < 1e-12

    def test_elsasser_symmetry(self, g16):
        tg = taylor_green(g16)
        s = IncState(tg, tg)
        for _ in range(5):
            s = reference_step(s, 0.02)
        assert np.array_equal(s.u.data, s.B.data)

    def test_energy_non_increasing(self, g16):
        s = to_incompressible(make_initial_data("well_prepared", 1e-2, g16))
        e = energy(s)
        for _ in range(10):
            s = reference_step(s, 0.01)
            assert energy(s) <= e
            e = energy(s)


class TestInitialData:
    def test_well_prepared(self, g32):
        s = make_initial_data("well_prepared", 1e-2, g32)
        assert np.abs(div_array(s.u.data, g32)).max() < 1e-12
        assert np.abs(s.p.data).max() == 0 and np.abs(s.phi.data).max() == 0

    def test_taylor_green_energy(self, g32):
        u = taylor_green(g32)
        assert 0.5 * l2_norm(u) ** 2 == pytest.approx(np.pi**3, rel=1e-12)

    def test_ill_prepared_scaling(self, g32):
        eps = 1e-2
        s = make_initial_data("ill_prepared", eps, g32, seed=1)
        ref = l2_norm(taylor_green(g32))
        assert np.sqrt(eps) * l2_norm(s.p) == pytest.approx(eps**0.25 * 0.5 * ref, rel=1e-12)

    def test_custom_budget(self, g16):
        u = taylor_green(g16)
        p_big = band_limited(g16, 0) * 1e6
        with pytest.raises(InitialDataError, match="sqrt_eps_p0"):
            make_initial_data("custom", 1e-2, g16, u0=u, B0=u, p0=p_big)
        ok = make_initial_data("custom", 1e-2, g16, u0=u, B0=u)
        assert ok.epsilon == 1e-2

    def test_unknown_kind(self, g16):
        with pytest.raises(ValueError):
            make_initial_data("nope", 1e-2, g16)

    def test_deterministic(self, g16):
        a = make_initial_data("ill_prepared", 1e-2, g16, seed=5)
        b = make_initial_data("ill_prepared", 1e-2, g16, seed=5)
        ta = integrate(a, 0.01, 3, record=False)
        tb = integrate(b, 0.01, 3, record=False)
        assert np.array_equal(ta.snapshots[-1].u.data, tb.snapshots[-1].u.data)


class TestTrajectory:
    def test_cadence_and_times(self, g16):
        s = make_initial_data("well_prepared", 1e-2, g16)
        traj = integrate(s, 0.01, 6, cadence=2)
        assert len(traj) == 4
        assert np.allclose(traj.times, [0, 0.02, 0.04, 0.06])
        assert len(traj.records) == 7

    def test_times_must_increase(self, g16):
        s = make_initial_data("well_prepared", 1e-2, g16)
        traj = integrate(s, 0.01, 1)
        with pytest.raises(ValueError):
            traj.add_snapshot(s)
