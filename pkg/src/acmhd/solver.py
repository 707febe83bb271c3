"""Time integration of the artificial-compressibility MHD system and of the
incompressible reference system.

Both integrators use Strang splitting around an explicit RK2 step for the
dealiased quadratic terms. Linear sub-flows (acoustic exchange between the
longitudinal velocity and the pressure, and diffusion) are solved exactly
mode by mode, so the step size is limited only by advection.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Iterator

import numpy as np

from .spectral import ContractError, Field, Grid3, fwd, inv, spectral_inner, to_spectral
from .vector import cross_array, curl_array, div_array, grad_array, p_array

logger = logging.getLogger(__name__)

DEFAULT_CFL = 0.5
B_AMPLITUDE = 1.0


class StabilityError(RuntimeError):
    """Raised when a step would violate the advective CFL bound."""

    def __init__(self, dt: float, cfl: float, limit: float) -> None:
        super().__init__(
            f"dt={dt:.3e} gives advective CFL {cfl:.3f} above the limit {limit:.3f}"
        )
        self.dt = dt
        self.cfl = cfl
        self.limit = limit


@dataclass(frozen=True)
class AcState:
    u: Field
    B: Field
    p: Field
    phi: Field
    epsilon: float
    time: float = 0.0
    mu: float = 1.0

    def __post_init__(self) -> None:
        g = self.u.grid
        for f in (self.B, self.p, self.phi):
            if f.grid != g:
                raise ContractError("all fields of a state must share one grid")
        for f in (self.u, self.B, self.p, self.phi):
            if not f.spectral:
                raise ContractError("state fields are stored in spectral form")
        if not (self.u.is_vector and self.B.is_vector) or self.p.is_vector or self.phi.is_vector:
            raise ContractError("u, B must be vectors and p, phi scalars")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon!r}")
        if self.mu < 0:
            raise ValueError(f"mu must be non-negative, got {self.mu!r}")

    @property
    def grid(self) -> Grid3:
        return self.u.grid


@dataclass(frozen=True)
class IncState:
    u: Field
    B: Field
    time: float = 0.0
    mu: float = 1.0

    def __post_init__(self) -> None:
        if self.u.grid != self.B.grid:
            raise ContractError("u and B must share one grid")
        if not (self.u.spectral and self.B.spectral):
            raise ContractError("state fields are stored in spectral form")

    @property
    def grid(self) -> Grid3:
        return self.u.grid


def _check_dt(dt: float) -> None:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")


def _check_cfl(up: np.ndarray, Bp: np.ndarray, grid: Grid3, dt: float, cfl: float) -> None:
    vmax = max(np.sqrt(np.sum(up**2, axis=0)).max(), np.sqrt(np.sum(Bp**2, axis=0)).max())
    c = dt * vmax / grid.dx
    if c > cfl:
        raise StabilityError(dt, c, cfl)


# Nonlinear terms.

def _ac_rhs(u: np.ndarray, B: np.ndarray, grid: Grid3, dt_cfl: tuple[float, float] | None = None):
    n = grid.n
    phys = inv(
        np.concatenate(
            [u, curl_array(u, grid), div_array(u, grid)[None], B, curl_array(B, grid)]
        ),
        n,
    )
    up, w, divu, Bp, J = phys[0:3], phys[3:6], phys[6], phys[7:10], phys[10:13]
    if dt_cfl is not None:
        _check_cfl(up, Bp, grid, *dt_cfl)
    # (u.grad)u = grad(|u|^2/2) - u x curl u
    vec = cross_array(up, w) - 0.5 * divu * up + cross_array(J, Bp)
    hat = fwd(
        np.concatenate([vec, 0.5 * np.sum(up * up, axis=0)[None], cross_array(up, Bp)])
    )
    mask = grid.dealias_mask
    du = (hat[0:3] - grad_array(hat[3], grid)) * mask
    dB = curl_array(hat[4:7] * mask, grid)
    return du, dB


def _ref_rhs(u: np.ndarray, B: np.ndarray, grid: Grid3, dt_cfl: tuple[float, float] | None = None):
    n = grid.n
    phys = inv(np.concatenate([u, curl_array(u, grid), B, curl_array(B, grid)]), n)
    up, w, Bp, J = phys[0:3], phys[3:6], phys[6:9], phys[9:12]
    if dt_cfl is not None:
        _check_cfl(up, Bp, grid, *dt_cfl)
    # P(-(u.grad)u + (B.grad)B) = P(u x curl u + curl B x B)
    hat = fwd(np.concatenate([cross_array(up, w) + cross_array(J, Bp), cross_array(up, Bp)]))
    mask = grid.dealias_mask
    du = p_array(hat[0:3] * mask, grid)
    dB = curl_array(hat[3:6] * mask, grid)
    return du, dB


def nonlinear_rhs(s: AcState) -> tuple[Field, Field]:
    """Quadratic tendencies ``(du, dB)`` of the artificial-compressibility system.

    ``du = -(u.grad)u - (div u) u / 2 + curl B x B`` and ``dB = curl(u x B)``,
    with products formed on the grid and dealiased.
    """
    du, dB = _ac_rhs(s.u.data, s.B.data, s.grid)
    return s.u.with_data(du), s.B.with_data(dB)


def _rk2(rhs, u, B, grid, dt, cfl):
    """Explicit midpoint rule."""
    k1u, k1B = rhs(u, B, grid, (dt, cfl) if cfl is not None else None)
    k2u, k2B = rhs(u + 0.5 * dt * k1u, B + 0.5 * dt * k1B, grid)
    return u + dt * k2u, B + dt * k2B


# Linear sub-flows.

@lru_cache(maxsize=16)
def _acoustic_tables(grid: Grid3, eps: float, dt: float):
    k = grid.k_vector
    kk = np.sqrt(k[0] ** 2 + k[1] ** 2 + k[2] ** 2)
    khat = k / np.where(kk == 0, 1.0, kk)
    theta = kk / np.sqrt(eps) * dt
    return khat, np.cos(theta), np.sin(theta)


@lru_cache(maxsize=16)
def _heat_factor(grid: Grid3, coef: float, dt: float) -> np.ndarray:
    return np.exp(-coef * grid.k2 * dt)


def _acoustic(v: np.ndarray, q: np.ndarray, grid: Grid3, eps: float, dt: float):
    """Exact flow of ``v' = -grad q``, ``eps q' = -div v``.

    Per mode the longitudinal velocity and ``sqrt(eps) q`` rotate at
    angular frequency ``|k| / sqrt(eps)``.
    """
    khat, c, s = _acoustic_tables(grid, eps, dt)
    a = khat[0] * v[0] + khat[1] * v[1] + khat[2] * v[2]
    se = np.sqrt(eps)
    b = se * q
    a_new = c * a - 1j * s * b
    b_new = c * b - 1j * s * a
    return v + khat * (a_new - a), b_new / se


def _diffuse(v: np.ndarray, grid: Grid3, coef: float, dt: float) -> tuple[np.ndarray, float]:
    """Exact heat flow; also returns the energy it removed."""
    if coef == 0:
        return v, 0.0
    f = _heat_factor(grid, coef, dt)
    w = grid.weights * grid.volume
    lost = 0.5 * float(np.sum((np.abs(v) ** 2 * (1 - f**2)).real * w))
    return v * f, lost


def acoustic_step(s: AcState, dt: float) -> AcState:
    _check_dt(dt)
    g = s.grid
    u, p = _acoustic(s.u.data, s.p.data, g, s.epsilon, dt)
    B, phi = _acoustic(s.B.data, s.phi.data, g, s.epsilon, dt)
    return replace(
        s,
        u=s.u.with_data(u),
        B=s.B.with_data(B),
        p=s.p.with_data(p),
        phi=s.phi.with_data(phi),
        time=s.time + dt,
    )


def diffusion_step(s: AcState, dt: float) -> AcState:
    _check_dt(dt)
    u, _ = _diffuse(s.u.data, s.grid, s.mu, dt)
    B, _ = _diffuse(s.B.data, s.grid, 1.0, dt)
    return replace(s, u=s.u.with_data(u), B=s.B.with_data(B), time=s.time + dt)


def _strang_arrays(
    s: AcState,
    dt: float,
    nonlinear: bool,
    diffusion: bool,
    cfl: float | None,
) -> tuple[AcState, float]:
    g, eps = s.grid, s.epsilon
    mu, eta = (s.mu, 1.0) if diffusion else (0.0, 0.0)
    h = 0.5 * dt
    u, p = _acoustic(s.u.data, s.p.data, g, eps, h)
    B, phi = _acoustic(s.B.data, s.phi.data, g, eps, h)
    u, l1 = _diffuse(u, g, mu, h)
    B, l2 = _diffuse(B, g, eta, h)
    if nonlinear:
        u, B = _rk2(_ac_rhs, u, B, g, dt, cfl)
    u, l3 = _diffuse(u, g, mu, h)
    B, l4 = _diffuse(B, g, eta, h)
    u, p = _acoustic(u, p, g, eps, h)
    B, phi = _acoustic(B, phi, g, eps, h)
    out = replace(
        s,
        u=s.u.with_data(u),
        B=s.B.with_data(B),
        p=s.p.with_data(p),
        phi=s.phi.with_data(phi),
        time=s.time + dt,
    )
    return out, l1 + l2 + l3 + l4


def strang_step(
    s: AcState,
    dt: float,
    *,
    nonlinear: bool = True,
    diffusion: bool = True,
    cfl: float | None = DEFAULT_CFL,
) -> AcState:
    """One second-order split step of length ``dt``.

    ``cfl=None`` skips the advective stability check.
    """
    _check_dt(dt)
    return _strang_arrays(s, dt, nonlinear, diffusion, cfl)[0]


def _reference_arrays(s: IncState, dt: float, cfl: float | None, nonlinear: bool = True):
    g = s.grid
    h = 0.5 * dt
    u, l1 = _diffuse(s.u.data, g, s.mu, h)
    B, l2 = _diffuse(s.B.data, g, 1.0, h)
    if nonlinear:
        u, B = _rk2(_ref_rhs, u, B, g, dt, cfl)
    u, l3 = _diffuse(u, g, s.mu, h)
    B, l4 = _diffuse(B, g, 1.0, h)
    out = replace(s, u=s.u.with_data(u), B=s.B.with_data(B), time=s.time + dt)
    return out, l1 + l2 + l3 + l4


def reference_step(s: IncState, dt: float, *, cfl: float | None = DEFAULT_CFL) -> IncState:
    _check_dt(dt)
    return _reference_arrays(s, dt, cfl)[0]


def to_incompressible(s: AcState) -> IncState:
    """Reference state built from the solenoidal parts of ``s``."""
    g = s.grid
    return IncState(
        u=s.u.with_data(p_array(s.u.data, g)),
        B=s.B.with_data(p_array(s.B.data, g)),
        time=s.time,
        mu=s.mu,
    )


# Initial data.

def taylor_green(grid: Grid3, amplitude: float = 1.0) -> Field:
    x, y, z = grid.coordinates()
    u = np.stack(
        [
            np.sin(x) * np.cos(y) * np.cos(z),
            -np.cos(x) * np.sin(y) * np.cos(z),
            np.zeros_like(x),
        ]
    )
    return to_spectral(Field(grid, amplitude * u))


def rotated_taylor_green(grid: Grid3, amplitude: float = 1.0) -> Field:
    """Taylor-Green pattern with axes cycled ``(x, y, z) -> (y, z, x)``."""
    x, y, z = grid.coordinates()
    b = np.stack(
        [
            np.zeros_like(x),
            np.sin(y) * np.cos(z) * np.cos(x),
            -np.cos(y) * np.sin(z) * np.cos(x),
        ]
    )
    return to_spectral(Field(grid, amplitude * b))


class InitialDataError(ValueError):
    pass


def _zero_mean(f: Field) -> Field:
    d = f.data.copy()
    d[..., 0, 0, 0] = 0.0
    return f.with_data(d)


def _gradient_field(grid: Grid3, rng: np.random.Generator, kmax: float, norm: float) -> Field:
    from .spectral import l2_norm, random_field

    phi = random_field(grid, rng, kmax=kmax)
    g = Field(grid, grad_array(phi.data, grid), spectral=True)
    return g * (norm / l2_norm(g))


def id_budget(epsilon: float, u0: Field, B0: Field) -> float:
    """Largest admissible ``||sqrt(eps) p0||_L2`` for custom data.

    Scales like ``eps^(1/4)`` so that the budget vanishes as eps -> 0.
    """
    from .spectral import l2_norm

    return epsilon**0.25 * max(l2_norm(u0) + l2_norm(B0), 1.0)


def make_initial_data(
    kind: str,
    epsilon: float,
    grid: Grid3,
    seed: int = 0,
    *,
    mu: float = 1.0,
    b_amplitude: float = B_AMPLITUDE,
    u0: Field | None = None,
    B0: Field | None = None,
    p0: Field | None = None,
    phi0: Field | None = None,
) -> AcState:
    """Initial state for the artificial-compressibility system.

    ``well_prepared``: Taylor-Green velocity, rotated Taylor-Green magnetic
    field of amplitude ``b_amplitude``, zero pressure and potential.
    ``ill_prepared``: the same plus O(1) random gradient parts in u and B and
    random pressure/potential of size ``eps^(-1/4)``.
    ``custom``: caller-provided fields, checked against the initial-data
    budget (see :func:`id_budget`).
    """
    from .spectral import l2_norm, random_field, zeros

    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon!r}")
    zero_s = zeros(grid)
    if kind == "well_prepared":
        u = taylor_green(grid)
        B = rotated_taylor_green(grid, b_amplitude)
        return AcState(u, B, zero_s, zero_s, epsilon, 0.0, mu)
    if kind == "ill_prepared":
        rng = np.random.default_rng(seed)
        u = taylor_green(grid)
        B = rotated_taylor_green(grid, b_amplitude)
        ref = l2_norm(u)
        u = u + _gradient_field(grid, rng, 3.0, 0.5 * ref)
        B = B + _gradient_field(grid, rng, 3.0, 0.5 * ref)
        scale = epsilon**-0.25
        p = random_field(grid, rng, kmax=3.0)
        phi = random_field(grid, rng, kmax=3.0)
        p = p * (0.5 * ref * scale / l2_norm(p))
        phi = phi * (0.5 * ref * scale / l2_norm(phi))
        return AcState(u, B, p, phi, epsilon, 0.0, mu)
    if kind == "custom":
        if u0 is None or B0 is None:
            raise InitialDataError("custom data needs at least u0 and B0")
        fields = []
        for f, vec in ((u0, True), (B0, True), (p0, False), (phi0, False)):
            if f is None:
                f = zeros(grid)
            if f.grid != grid or f.is_vector != vec:
                raise InitialDataError("custom field has the wrong grid or rank")
            if not f.spectral:
                f = to_spectral(f)
            fields.append(f.with_data(f.data * grid.dealias_mask))
        u, B, p, phi = fields
        p, phi = _zero_mean(p), _zero_mean(phi)
        budget = id_budget(epsilon, u, B)
        norms = {
            "sqrt_eps_p0": np.sqrt(epsilon) * l2_norm(p),
            "sqrt_eps_phi0": np.sqrt(epsilon) * l2_norm(phi),
        }
        bad = {k: v for k, v in norms.items() if v > budget}
        if bad:
            detail = ", ".join(f"{k}={v:.6g}" for k, v in bad.items())
            raise InitialDataError(f"initial data exceed budget {budget:.6g}: {detail}")
        return AcState(u, B, p, phi, epsilon, 0.0, mu)
    raise ValueError(f"unknown initial data kind {kind!r}")


# Trajectories.

@dataclass
class Trajectory:
    """Snapshots at a fixed cadence plus one diagnostic record per step."""

    dt: float
    cadence: int
    nonlinear: bool = True
    diffusion: bool = True
    times: list[float] = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)

    def add_snapshot(self, state) -> None:
        if self.times and state.time <= self.times[-1]:
            raise ValueError("snapshot times must increase")
        self.times.append(state.time)
        self.snapshots.append(state)

    @property
    def sample_dt(self) -> float:
        return self.dt * self.cadence

    def __len__(self) -> int:
        return len(self.snapshots)


def integrate(
    state,
    dt: float,
    n_steps: int,
    *,
    cadence: int = 1,
    keep_snapshots: bool = True,
    record: bool = True,
    nonlinear: bool = True,
    diffusion: bool = True,
    cfl: float | None = DEFAULT_CFL,
    on_snapshot: Callable | None = None,
) -> Trajectory:
    """Advance ``state`` (AcState or IncState) by ``n_steps`` steps of ``dt``."""
    from .diagnostics import make_record

    if cadence < 1:
        raise ValueError("cadence must be >= 1")
    traj = Trajectory(dt=dt, cadence=cadence, nonlinear=nonlinear, diffusion=diffusion)
    for i, (s, lost) in enumerate(
        iter_steps(state, dt, n_steps, nonlinear=nonlinear, diffusion=diffusion, cfl=cfl)
    ):
        snap = i % cadence == 0
        if record:
            traj.records.append(make_record(s, lost, q_norms=snap))
        if snap:
            if keep_snapshots:
                traj.add_snapshot(s)
            if on_snapshot is not None:
                on_snapshot(s)
    return traj


def iter_steps(
    state,
    dt: float,
    n_steps: int,
    *,
    nonlinear: bool = True,
    diffusion: bool = True,
    cfl: float | None = DEFAULT_CFL,
) -> Iterator[tuple[object, float]]:
    """Yield ``(state, dissipated_energy)`` for the initial state and each step.

    Times are recomputed as ``t0 + i*dt`` to avoid drift from summation.
    """
    _check_dt(dt)
    t0 = state.time
    yield state, 0.0
    s = state
    for i in range(1, n_steps + 1):
        if isinstance(s, AcState):
            s, lost = _strang_arrays(s, dt, nonlinear, diffusion, cfl)
        else:
            s, lost = _reference_arrays(s, dt, cfl, nonlinear)
        s = replace(s, time=t0 + i * dt)
        yield s, lost
