"""Energy ledger, space-time norms, wave-equation and weak-form residuals."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .solver import AcState, IncState, Trajectory, _ac_rhs
from .spectral import (
    ContractError,
    Field,
    Grid3,
    inv,
    lp_norm_array,
    sobolev_symbol,
    spectral_inner,
)
from .vector import div_array, grad_array, p_array, q_array


@dataclass
class DiagRecord:
    time: float
    energy: float
    enstrophy_u: float
    enstrophy_B: float
    div_u_norm: float
    div_B_norm: float
    q_norms: dict = field(default_factory=dict)
    # energy removed by the diffusion sub-flows during the step ending here
    dissipation: float = 0.0

    def __post_init__(self) -> None:
        if self.energy < 0 or min(self.enstrophy_u, self.enstrophy_B) < 0:
            raise ValueError("energy and enstrophies must be non-negative")


def _sq(a: np.ndarray, grid: Grid3) -> float:
    return spectral_inner(a, a, grid)


def energy(s: AcState | IncState) -> float:
    g = s.grid
    e = _sq(s.u.data, g) + _sq(s.B.data, g)
    if isinstance(s, AcState):
        e += s.epsilon * (_sq(s.p.data, g) + _sq(s.phi.data, g))
    return 0.5 * e


def enstrophy(v: np.ndarray, grid: Grid3) -> float:
    """``||grad v||_L2^2``."""
    k = grid.k_vector
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    return spectral_inner(v * np.sqrt(k2), v * np.sqrt(k2), grid)


def make_record(s: AcState | IncState, dissipation: float = 0.0, q_norms: bool = True) -> DiagRecord:
    """Diagnostics of one state; ``q_norms=False`` skips the L4 norms of Qu, QB."""
    g = s.grid
    u, B = s.u.data, s.B.data
    div_u = div_array(u, g)
    div_B = div_array(B, g)
    qn = {}
    if q_norms:
        phys = inv(np.concatenate([q_array(u, g), q_array(B, g)]), g.n)
        qn[("Qu", 4, 0.0)] = lp_norm_array(np.sqrt(np.sum(phys[:3] ** 2, axis=0)), g, 4)
        qn[("QB", 4, 0.0)] = lp_norm_array(np.sqrt(np.sum(phys[3:] ** 2, axis=0)), g, 4)
    return DiagRecord(
        time=s.time,
        energy=energy(s),
        enstrophy_u=enstrophy(u, g),
        enstrophy_B=enstrophy(B, g),
        div_u_norm=float(np.sqrt(_sq(div_u, g))),
        div_B_norm=float(np.sqrt(_sq(div_B, g))),
        q_norms=qn,
        dissipation=dissipation,
    )


def _dissipation_series(traj: Trajectory, quadrature: str, mu: float) -> np.ndarray:
    recs = traj.records
    if quadrature == "exact":
        d = np.array([r.dissipation for r in recs])
        d[0] = 0.0
        return np.cumsum(d)
    if quadrature == "trapezoid":
        rate = np.array([mu * r.enstrophy_u + r.enstrophy_B for r in recs])
        inc = 0.5 * traj.dt * (rate[1:] + rate[:-1])
        return np.concatenate([[0.0], np.cumsum(inc)])
    raise ValueError(f"unknown quadrature {quadrature!r}")


def energy_balance_series(traj: Trajectory, quadrature: str = "exact", mu: float = 1.0) -> np.ndarray:
    """``E(t_n) + int_0^t_n dissipation - E(0)`` at every recorded step."""
    if not traj.records:
        raise ValueError("trajectory has no diagnostic records")
    e = np.array([r.energy for r in traj.records])
    return e + _dissipation_series(traj, quadrature, mu) - e[0]


def energy_balance_residual(traj: Trajectory, quadrature: str = "exact", mu: float = 1.0) -> float:
    """Max relative defect of the energy equality over the trajectory.

    ``quadrature="exact"`` uses the energy removed by each exact diffusion
    sub-flow, which is the time integral of ``mu|grad u|^2 + |grad B|^2``
    along that sub-flow; ``"trapezoid"`` integrates the recorded
    enstrophies instead.
    """
    bal = energy_balance_series(traj, quadrature, mu)
    e0 = traj.records[0].energy
    if e0 == 0:
        return float(np.abs(bal).max())
    return float(np.abs(bal).max() / e0)


# Quantities extracted from snapshots.

def quantity(s: AcState | IncState, name: str) -> np.ndarray:
    g = s.grid
    if name in ("u", "B"):
        return getattr(s, name).data
    if name in ("p", "phi"):
        if not isinstance(s, AcState):
            raise ContractError(f"{name} is not part of an incompressible state")
        return getattr(s, name).data
    if name in ("Pu", "PB"):
        return p_array(getattr(s, name[1]).data, g)
    if name in ("Qu", "QB"):
        return q_array(getattr(s, name[1]).data, g)
    if name in ("div_u", "div_B"):
        return div_array(getattr(s, name[-1]).data, g)
    raise ValueError(f"unknown quantity {name!r}")


def _trapezoid_weights(times: Sequence[float]) -> np.ndarray:
    t = np.asarray(times, float)
    w = np.zeros_like(t)
    if len(t) < 2:
        return w
    d = np.diff(t)
    w[:-1] += 0.5 * d
    w[1:] += 0.5 * d
    return w


def _spatial_norm(a: np.ndarray, grid: Grid3, r: float) -> float:
    if r == 2:
        return float(np.sqrt(max(_sq(a, grid), 0.0)))
    phys = inv(a, grid.n)
    mag = np.sqrt(np.sum(phys**2, axis=0)) if phys.ndim == 4 else np.abs(phys)
    return lp_norm_array(mag, grid, r)


def combine_in_time(values: Sequence[float], times: Sequence[float], q: float) -> float:
    """``(int |v(t)|^q dt)^(1/q)`` by the trapezoid rule; ``q=inf`` is the max."""
    v = np.asarray(values, float)
    if np.isinf(q):
        return float(v.max()) if v.size else 0.0
    w = _trapezoid_weights(times)
    return float(np.sum(w * v**q) ** (1.0 / q))


def spacetime_norm(
    traj: Trajectory,
    time_exp: float,
    space_exp: float,
    sobolev_order: float = 0.0,
    flavor: str = "inhomogeneous",
    quantity_name: str | Callable = "u",
) -> float:
    """``|| (I - Delta)^(s/2) f ||_{L^q_t L^r_x}`` over the stored snapshots.

    ``quantity_name`` is a name understood by :func:`quantity` or a callable
    mapping a state to a spectral array.
    """
    if len(traj.snapshots) < 2 and not np.isinf(time_exp):
        raise ValueError("need at least two snapshots for a time integral")
    if not traj.snapshots:
        raise ValueError("trajectory stores no snapshots")
    g = traj.snapshots[0].grid
    sym = sobolev_symbol(g, sobolev_order, flavor) if sobolev_order != 0 else 1.0
    get = quantity_name if callable(quantity_name) else (lambda s: quantity(s, quantity_name))
    vals = [_spatial_norm(get(s) * sym, g, space_exp) for s in traj.snapshots]
    return combine_in_time(vals, traj.times, time_exp)


# Acoustic wave structure.

def wave_terms(s: AcState, which: str, nonlinear: bool, diffusion: bool) -> tuple[np.ndarray, np.ndarray]:
    """``(Delta f, source)`` for the tau-rescaled wave equation of p or phi."""
    g = s.grid
    k2 = g.k2 * g.nyquist_free
    if which == "pressure":
        mu = s.mu if diffusion else 0.0
        src = mu * k2 * div_array(s.u.data, g)
        if nonlinear:
            du, _ = _ac_rhs(s.u.data, s.B.data, g)
            src = src - div_array(du, g)
        return -k2 * s.p.data, src
    if which == "potential":
        eta = 1.0 if diffusion else 0.0
        return -k2 * s.phi.data, eta * k2 * div_array(s.B.data, g)
    raise ValueError(f"which must be 'pressure' or 'potential', got {which!r}")


def wave_residual(traj: Trajectory, which: str = "pressure", stride: int = 1) -> float:
    """Relative ``L^2_tau W^{-2,2}`` residual of the acoustic wave equation.

    With ``tau = t / sqrt(eps)``, the pressure obeys
    ``f_tautau - Delta f = -mu Delta div u + div N`` where ``N`` is minus
    the quadratic momentum tendency, and the potential obeys
    ``f_tautau - Delta f = -Delta div B``. The second tau-derivative is a
    centered difference over snapshots ``stride`` apart.
    """
    snaps = traj.snapshots[::stride]
    if len(snaps) < 3:
        raise ValueError("wave residual needs at least three snapshots")
    if not isinstance(snaps[0], AcState):
        raise ContractError("wave residual needs artificial-compressibility snapshots")
    g = snaps[0].grid
    eps = snaps[0].epsilon
    dtau = traj.sample_dt * stride / np.sqrt(eps)
    key = "p" if which == "pressure" else "phi"
    sym = sobolev_symbol(g, -2.0, "inhomogeneous")
    nl = getattr(traj, "nonlinear", True)
    diff = getattr(traj, "diffusion", True)

    res2 = 0.0
    scale2 = 0.0
    ref2 = 0.0
    for i in range(1, len(snaps) - 1):
        f0 = getattr(snaps[i - 1], key).data
        f1 = getattr(snaps[i], key).data
        f2 = getattr(snaps[i + 1], key).data
        ftt = (f2 - 2 * f1 + f0) / dtau**2
        lap, src = wave_terms(snaps[i], which, nl, diff)
        r = ftt - lap - src
        res2 += dtau * _sq(r * sym, g)
        scale2 += dtau * (np.sqrt(_sq(lap * sym, g)) + np.sqrt(_sq(src * sym, g))) ** 2
        ref2 += dtau * 2 * energy(snaps[i])
    # identically quiet fields (e.g. the potential for solenoidal data):
    # report the absolute residual instead of a ratio of roundoff
    if np.sqrt(scale2) <= 1e-12 * max(np.sqrt(ref2), 1.0):
        return float(np.sqrt(res2))
    return float(np.sqrt(res2 / scale2))


# Weak formulation.

@dataclass(frozen=True)
class TestField:
    """Separable test field ``chi(t) psi(x)`` with ``psi`` divergence free."""

    psi: Field
    profile: Callable[[float], tuple[float, float]]

    def __post_init__(self) -> None:
        psi = self.psi
        if not (psi.spectral and psi.is_vector):
            raise ContractError("psi must be a spectral vector field")
        g = psi.grid
        d = np.sqrt(_sq(div_array(psi.data, g), g))
        scale = np.sqrt(enstrophy(psi.data, g))
        if d > 1e-12 * max(scale, 1.0):
            raise ContractError(f"test field is not divergence free (||div psi|| = {d:.3e})")


def bump_profile(T: float) -> Callable[[float], tuple[float, float]]:
    """``chi(t) = sin^2(pi t / T)`` and its derivative."""

    def chi(t: float) -> tuple[float, float]:
        a = np.pi / T
        return float(np.sin(a * t) ** 2), float(2 * a * np.sin(a * t) * np.cos(a * t))

    return chi


def weak_residual(traj: Trajectory, tests: Sequence[TestField]) -> float:
    """Max over tests of the defect in the two distributional identities.

    Space integrals are exact for band-limited data; the time integral uses
    the trapezoid rule over the stored snapshots.
    """
    if not traj.snapshots:
        raise ValueError("trajectory stores no snapshots")
    snaps = traj.snapshots
    g = snaps[0].grid
    w = _trapezoid_weights(traj.times)
    dv = g.dx**3
    k = g.k_vector
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    phys = [inv(np.concatenate([s.u.data, s.B.data]), g.n) for s in snaps]
    worst = 0.0
    for test in tests:
        psi = test.psi.data
        dpsi = np.stack([inv(grad_array(psi[j], g), g.n) for j in range(3)])  # [j, i] = d_i psi_j
        total_m = 0.0
        total_b = 0.0
        for s, ph, wt in zip(snaps, phys, w):
            chi, dchi = test.profile(s.time)
            mu = s.mu
            u, B = ph[:3], ph[3:]
            uu = np.einsum("i...,j...,ji...->...", u, u, dpsi).sum() * dv
            bb = np.einsum("i...,j...,ji...->...", B, B, dpsi).sum() * dv
            ub = np.einsum("i...,j...,ji...->...", u, B, dpsi).sum() * dv
            bu = np.einsum("i...,j...,ji...->...", B, u, dpsi).sum() * dv
            # grad u : grad psi = sum_k |k|^2 u_k . conj(psi_k)
            gu = spectral_inner(s.u.data * k2, psi, g)
            gb = spectral_inner(s.B.data * k2, psi, g)
            m = chi * (mu * gu + bb - uu) - dchi * spectral_inner(s.u.data, psi, g)
            b = chi * (gb - ub + bu) - dchi * spectral_inner(s.B.data, psi, g)
            total_m += wt * m
            total_b += wt * b
        chi0, _ = test.profile(snaps[0].time)
        total_m -= chi0 * spectral_inner(snaps[0].u.data, psi, g)
        total_b -= chi0 * spectral_inner(snaps[0].B.data, psi, g)
        worst = max(worst, abs(total_m), abs(total_b))
    return float(worst)


def energy_inequality_margins(traj: Trajectory, quadrature: str = "exact", mu: float = 1.0) -> np.ndarray:
    """``E(0) - E(t) - int_0^t dissipation`` at each recorded time (>= 0 when it holds)."""
    return -energy_balance_series(traj, quadrature, mu)


# Time regularity.

def time_modulus(traj: Trajectory, h: float, component: str = "P", field_name: str = "B") -> float:
    """``|| f(t+h) - f(t) ||_{L^2([0, T-h] x box)}`` for ``f`` = P or Q part of u or B."""
    if component not in ("P", "Q") or field_name not in ("u", "B"):
        raise ValueError("component must be P|Q and field u|B")
    if len(traj.snapshots) < 2:
        raise ValueError("need at least two snapshots")
    step = traj.sample_dt
    T = traj.times[-1] - traj.times[0]
    if h < 0 or h > T + 1e-12 * max(T, 1.0):
        raise ValueError(f"h={h!r} outside [0, {T}]")
    m = h / step
    if abs(m - round(m)) > 1e-9 * max(m, 1.0):
        raise ValueError(f"h={h!r} is not a multiple of the snapshot spacing {step!r}")
    m = int(round(m))
    if m == 0:
        return 0.0
    name = component + field_name
    g = traj.snapshots[0].grid
    vals = [quantity(s, name) for s in traj.snapshots]
    diffs = [_sq(vals[i + m] - vals[i], g) for i in range(len(vals) - m)]
    times = traj.times[: len(vals) - m]
    if len(times) < 2:
        return 0.0
    return float(np.sqrt(np.sum(_trapezoid_weights(times) * np.array(diffs))))


def pressure_rate_series(traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """``(t, ||eps p_t||_{H^-1})`` at interior snapshots (centered differences)."""
    snaps = traj.snapshots
    if len(snaps) < 3:
        raise ValueError("need at least three snapshots")
    if not isinstance(snaps[0], AcState):
        raise ContractError("pressure rate needs artificial-compressibility snapshots")
    g = snaps[0].grid
    sym = sobolev_symbol(g, -1.0, "inhomogeneous")
    step = traj.sample_dt
    vals = [
        np.sqrt(_sq(snaps[i].epsilon * (snaps[i + 1].p.data - snaps[i - 1].p.data) / (2 * step) * sym, g))
        for i in range(1, len(snaps) - 1)
    ]
    return np.array(traj.times[1:-1]), np.array(vals)
