"""Parameter sweeps, rate fits, mollifier tabulation and the sponge-layer
local-decay probe."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .diagnostics import (
    combine_in_time,
    energy,
    time_modulus,
)
from .solver import (
    DEFAULT_CFL,
    AcState,
    StabilityError,
    Trajectory,
    _acoustic,
    iter_steps,
    make_initial_data,
    to_incompressible,
)
from .spectral import Grid3, fwd, inv, lp_norm_array, random_field, spectral_inner
from .vector import grad_array, mollifier_symbol, p_array, q_array

logger = logging.getLogger(__name__)

# Relative level below which a measured norm is treated as roundoff.
ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True)
class RateFit:
    """Least-squares power law ``y = prefactor * x**exponent``."""

    exponent: float
    prefactor: float
    r_squared: float
    pairs: tuple[tuple[float, float], ...]
    below_floor: bool = False

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "prefactor": self.prefactor,
            "r_squared": self.r_squared,
            "below_floor": self.below_floor,
            "pairs": [list(p) for p in self.pairs],
        }


def fit_rate(pairs: Iterable[tuple[float, float]], floor: float | None = None) -> RateFit:
    """Fit a line to ``(log x, log y)``.

    If ``floor`` is given and every ``y`` lies at or below it, no fit is
    attempted and the result is flagged ``below_floor``.
    """
    pairs = tuple((float(x), float(y)) for x, y in pairs)
    if len(pairs) < 3:
        raise ValueError("a rate fit needs at least three pairs")
    if floor is not None and all(abs(y) <= floor for _, y in pairs):
        return RateFit(float("nan"), float("nan"), float("nan"), pairs, below_floor=True)
    x = np.array([p[0] for p in pairs])
    y = np.array([p[1] for p in pairs])
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("rate fits need strictly positive values")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else max(0.0, 1.0 - ss_res / ss_tot)
    return RateFit(float(slope), float(np.exp(intercept)), r2, pairs)


@dataclass(frozen=True)
class SweepSpec:
    epsilons: tuple[float, ...]
    grid: Grid3
    horizon: float
    dt: float | None = None
    cfl: float = DEFAULT_CFL
    kind: str = "well_prepared"
    seed: int = 0
    cadence: int = 8
    mu: float = 1.0
    nonlinear: bool = True

    def __post_init__(self) -> None:
        eps = tuple(float(e) for e in self.epsilons)
        object.__setattr__(self, "epsilons", eps)
        if any(e <= 0 for e in eps):
            raise ValueError("epsilons must be positive")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilons must be strictly decreasing")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.cadence < 1:
            raise ValueError("cadence must be >= 1")

    def check_fit_span(self) -> None:
        if len(self.epsilons) < 3 or self.epsilons[0] / self.epsilons[-1] < 100:
            raise ValueError("a rate fit needs >= 3 epsilons spanning >= 2 decades")

    def step_size(self, state=None) -> tuple[float, int]:
        """``(dt, n_steps)`` covering the horizon exactly."""
        if self.dt is not None:
            dt = self.dt
        else:
            if state is None:
                raise ValueError("CFL-driven dt needs an initial state")
            u = inv(state.u.data, self.grid.n)
            B = inv(state.B.data, self.grid.n)
            vmax = max(np.sqrt((u**2).sum(0)).max(), np.sqrt((B**2).sum(0)).max(), 1e-300)
            # the velocity may grow; keep a margin of two below the bound
            dt = 0.5 * self.cfl * self.grid.dx / vmax
        n = max(1, int(np.ceil(self.horizon / dt - 1e-9)))
        return self.horizon / n, n


def _l4(a: np.ndarray, grid: Grid3) -> float:
    phys = inv(a, grid.n)
    return lp_norm_array(np.sqrt(np.sum(phys**2, axis=0)), grid, 4)


def _sq(a: np.ndarray, grid: Grid3) -> float:
    return spectral_inner(a, a, grid)


@dataclass
class SweepRun:
    epsilon: float
    status: str = "ok"
    message: str = ""
    qu_l2l4: float = float("nan")
    qb_l2l4: float = float("nan")
    pu_err: float = float("nan")
    pb_err: float = float("nan")
    u_l2: float = float("nan")
    final_energy: float = float("nan")
    times: list = field(default_factory=list, repr=False)
    series: dict = field(default_factory=dict, repr=False)

    def row(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "status": self.status,
            "qu_L2L4": self.qu_l2l4,
            "qB_L2L4": self.qb_l2l4,
            "Pu_err_L2L2": self.pu_err,
            "PB_err_L2L2": self.pb_err,
            "u_L2L2": self.u_l2,
            "final_energy": self.final_energy,
        }


@dataclass
class SweepReport:
    spec: SweepSpec
    dt: float
    n_steps: int
    runs: list[SweepRun]
    fits: dict[str, RateFit]
    reference_l2: dict = field(default_factory=dict)

    def ok_runs(self) -> list[SweepRun]:
        return [r for r in self.runs if r.status == "ok"]

    def series(self, key: str) -> list[float]:
        return [getattr(r, key) for r in self.ok_runs()]

    def as_dict(self) -> dict:
        return {
            "dt": self.dt,
            "n_steps": self.n_steps,
            "runs": [r.row() | {"message": r.message} for r in self.runs],
            "fits": {k: v.as_dict() for k, v in self.fits.items()},
            "reference": self.reference_l2,
        }


def _ac_initial(spec: SweepSpec, eps: float) -> AcState:
    return make_initial_data(spec.kind, eps, spec.grid, spec.seed, mu=spec.mu)


def epsilon_sweep(spec: SweepSpec, keep_series: bool = False) -> SweepReport:
    """Run every epsilon against one incompressible reference run.

    All runs share the grid and step size; measurements are taken every
    ``spec.cadence`` steps and integrated in time with the trapezoid rule.
    A run that trips the stability check is marked ``unstable`` and the
    sweep continues with the others.
    """
    g = spec.grid
    first = _ac_initial(spec, spec.epsilons[0])
    dt, n = spec.step_size(first)
    ref0 = to_incompressible(first)

    ref_u: list[np.ndarray] = []
    ref_b: list[np.ndarray] = []
    times: list[float] = []
    for i, (s, _) in enumerate(iter_steps(ref0, dt, n, nonlinear=spec.nonlinear, cfl=spec.cfl)):
        if i % spec.cadence == 0:
            ref_u.append(s.u.data)
            ref_b.append(s.B.data)
            times.append(s.time)
    ref_l2 = {
        "u_L2L2": combine_in_time([np.sqrt(_sq(a, g)) for a in ref_u], times, 2),
        "B_L2L2": combine_in_time([np.sqrt(_sq(a, g)) for a in ref_b], times, 2),
    }

    runs = []
    for eps in spec.epsilons:
        run = SweepRun(eps)
        qu, qb, du, db, ul = [], [], [], [], []
        state = _ac_initial(spec, eps)
        try:
            for i, (s, _) in enumerate(iter_steps(state, dt, n, nonlinear=spec.nonlinear, cfl=spec.cfl)):
                if i % spec.cadence:
                    continue
                j = i // spec.cadence
                u, B = s.u.data, s.B.data
                qu.append(_l4(q_array(u, g), g))
                qb.append(_l4(q_array(B, g), g))
                du.append(np.sqrt(_sq(p_array(u, g) - ref_u[j], g)))
                db.append(np.sqrt(_sq(p_array(B, g) - ref_b[j], g)))
                ul.append(np.sqrt(_sq(u, g)))
                state = s
        except StabilityError as exc:
            run.status = "unstable"
            run.message = str(exc)
            logger.warning("epsilon=%g aborted: %s", eps, exc)
            runs.append(run)
            continue
        run.qu_l2l4 = combine_in_time(qu, times, 2)
        run.qb_l2l4 = combine_in_time(qb, times, 2)
        run.pu_err = combine_in_time(du, times, 2)
        run.pb_err = combine_in_time(db, times, 2)
        run.u_l2 = combine_in_time(ul, times, 2)
        run.final_energy = energy(state)
        if keep_series:
            run.times = list(times)
            run.series = {"qu": qu, "qb": qb, "pu_err": du, "pb_err": db}
        runs.append(run)

    report = SweepReport(spec, dt, n, runs, {}, ref_l2)
    ok = report.ok_runs()
    if len(ok) >= 3:
        scale_u = max(ref_l2["u_L2L2"], 1.0)
        scale_b = max(ref_l2["B_L2L2"], 1.0)
        for key, attr, scale in (
            ("Qu_L2L4", "qu_l2l4", scale_u),
            ("QB_L2L4", "qb_l2l4", scale_b),
            ("Pu_err_L2L2", "pu_err", scale_u),
            ("PB_err_L2L2", "pb_err", scale_b),
        ):
            pairs = [(r.epsilon, getattr(r, attr)) for r in ok]
            report.fits[key] = fit_rate(pairs, floor=ROUNDOFF_FLOOR * scale)
    return report


def self_convergence(spec: SweepSpec) -> RateFit:
    """Fit ``||u^{eps_k} - u^{eps_{k+1}}||_{L2_t L2_x}`` against ``eps_k``.

    All members advance in lockstep so only the current states are held.
    """
    if len(spec.epsilons) < 3:
        raise ValueError("self-convergence needs at least three epsilons")
    g = spec.grid
    states = [_ac_initial(spec, e) for e in spec.epsilons]
    dt, n = spec.step_size(states[0])
    gens = [iter_steps(s, dt, n, nonlinear=spec.nonlinear, cfl=spec.cfl) for s in states]
    diffs: list[list[float]] = [[] for _ in range(len(states) - 1)]
    times = []
    for i, group in enumerate(zip(*gens)):
        if i % spec.cadence:
            continue
        times.append(group[0][0].time)
        for k in range(len(states) - 1):
            d = group[k][0].u.data - group[k + 1][0].u.data
            diffs[k].append(np.sqrt(_sq(d, g)))
    pairs = [(spec.epsilons[k], combine_in_time(diffs[k], times, 2)) for k in range(len(diffs))]
    scale = max(np.sqrt(_sq(states[0].u.data, g)) * np.sqrt(spec.horizon), 1.0)
    if len(pairs) < 3:
        # two differences are not enough for a fit; report the trend as-is
        x = np.array([p[0] for p in pairs])
        y = np.array([p[1] for p in pairs])
        if np.all(y <= ROUNDOFF_FLOOR * scale):
            return RateFit(float("nan"), float("nan"), float("nan"), tuple(pairs), below_floor=True)
        slope = float(np.log(y[0] / y[1]) / np.log(x[0] / x[1]))
        return RateFit(slope, float(y[0] / x[0] ** slope), 1.0, tuple(pairs))
    return fit_rate(pairs, floor=ROUNDOFF_FLOOR * scale)


def h_sweep(traj: Trajectory, fractions: Sequence[float], component: str = "P", field_name: str = "B") -> RateFit:
    """Fit the time modulus against shifts ``h = fraction * T``."""
    T = traj.times[-1] - traj.times[0]
    pairs = [(f * T, time_modulus(traj, f * T, component, field_name)) for f in fractions]
    return fit_rate(pairs)


# Mollifier estimates.

@dataclass
class MollifierReport:
    alphas: tuple[float, ...]
    # ratio[estimate][field index][alpha index]
    ratios: dict[str, np.ndarray]

    def spread(self, estimate: str) -> np.ndarray:
        """Per field, max over alpha divided by the median over alpha."""
        r = self.ratios[estimate]
        return r.max(axis=1) / np.median(r, axis=1)

    def max_ratio(self, estimate: str) -> float:
        return float(self.ratios[estimate].max())

    def as_dict(self) -> dict:
        return {
            "alphas": list(self.alphas),
            "max_ratio": {k: self.max_ratio(k) for k in self.ratios},
            "max_spread": {k: float(self.spread(k).max()) for k in self.ratios},
        }


DYADIC_ALPHAS = tuple(2.0**-j for j in range(1, 6))


def mollifier_ratios(f_hat: np.ndarray, grid: Grid3, alphas: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Ratios of the two sides of the mollifier estimates for one scalar field.

    ``y1``: ``||f - f*psi_a||_L4 / (a^(1/4) ||grad f||_L2)`` (p=4, sigma=3/4).
    ``y2``: ``||f*psi_a||_Linf / (a^(-3/2) ||f||_L2)``.
    """
    grad = grad_array(f_hat, grid)
    grad_l2 = np.sqrt(_sq(grad, grid))
    f_l2 = np.sqrt(_sq(f_hat, grid))
    sigma = 3 * (0.5 - 0.25)
    y1, y2 = [], []
    for a in alphas:
        smooth = f_hat * mollifier_symbol(grid, a)
        rough = inv(f_hat - smooth, grid.n)
        y1.append(lp_norm_array(np.abs(rough), grid, 4) / (a ** (1 - sigma) * grad_l2))
        y2.append(np.abs(inv(smooth, grid.n)).max() / (a**-1.5 * f_l2))
    return np.array(y1), np.array(y2)


def mollifier_estimate_check(
    grid: Grid3,
    seeds: Sequence[int],
    alphas: Sequence[float] = DYADIC_ALPHAS,
) -> MollifierReport:
    """Tabulate both estimates on zero-mean random band-limited fields."""
    r1, r2 = [], []
    for seed in seeds:
        f = random_field(grid, np.random.default_rng(seed))
        a, b = mollifier_ratios(f.data, grid, alphas)
        r1.append(a)
        r2.append(b)
    return MollifierReport(tuple(alphas), {"y1": np.array(r1), "y2": np.array(r2)})


# Local decay under an absorbing layer.

@dataclass(frozen=True)
class SpongeConfig:
    """Damping ``sigma(x)`` ramping quadratically to ``strength`` at the box edge.

    Lengths are fractions of the box; the sponge starts where the distance
    from the centre along some axis exceeds ``inner``.
    """

    enabled: bool = True
    inner: float = 0.375
    strength: float = 40.0
    window: float = 0.25

    def __post_init__(self) -> None:
        if not 0 < self.inner < 0.5:
            raise ValueError("sponge inner radius must lie in (0, 0.5)")
        if self.window <= 0:
            raise ValueError("window half-width must be positive")
        if self.enabled and self.window > self.inner:
            raise ValueError("observation window overlaps the sponge layer")


@dataclass
class DecayReport:
    taus: list[float]
    averages: list[float]
    sponge: bool

    def decreasing(self) -> bool:
        a = self.averages
        return all(b < c for c, b in zip(a, a[1:]))

    def doubling_ratios(self) -> list[float]:
        """``avg(2 tau) / avg(tau)``: near 1/2 once the window has emptied,
        near 1 when the window energy settles to a plateau."""
        a = self.averages
        return [b / c if c > 0 else 0.0 for c, b in zip(a, a[1:])]

    def as_dict(self) -> dict:
        return {
            "taus": self.taus,
            "averages": self.averages,
            "doubling_ratios": self.doubling_ratios(),
            "sponge": self.sponge,
        }


def sponge_profile(grid: Grid3, cfg: SpongeConfig) -> np.ndarray:
    L = grid.length
    dist = [np.abs(c - 0.5 * L) / L for c in grid.coordinates()]
    d = np.maximum(np.maximum(dist[0], dist[1]), dist[2])
    ramp = np.clip((d - cfg.inner) / (0.5 - cfg.inner), 0.0, None)
    return cfg.strength * ramp**2


def window_mask(grid: Grid3, cfg: SpongeConfig) -> np.ndarray:
    L = grid.length
    dist = [np.abs(c - 0.5 * L) / L for c in grid.coordinates()]
    return (dist[0] <= cfg.window) & (dist[1] <= cfg.window) & (dist[2] <= cfg.window)


def gaussian_pulse(grid: Grid3, width: float, amplitude: float = 1.0) -> np.ndarray:
    """Spectral gradient of a centred Gaussian: a compactly concentrated acoustic pulse."""
    L = grid.length
    x, y, z = grid.coordinates()
    r2 = (x - L / 2) ** 2 + (y - L / 2) ** 2 + (z - L / 2) ** 2
    g = amplitude * np.exp(-r2 / (2 * width**2))
    return grad_array(fwd(g), grid) * grid.dealias_mask


def local_decay_probe(
    grid: Grid3,
    epsilon: float,
    cfg: SpongeConfig,
    tau0: float,
    doublings: int = 4,
    dtau: float | None = None,
    u0: np.ndarray | None = None,
) -> DecayReport:
    """Time-averaged window energy of ``Qu`` for ``tau = tau0 * 2^j``.

    Acoustic-only evolution; the sponge damps u and p in physical space
    after each exact acoustic step.
    """
    se = np.sqrt(epsilon)
    if u0 is None:
        u0 = gaussian_pulse(grid, width=grid.length / 16)
    if dtau is None:
        dtau = 0.5 * grid.dx
    tau_end = tau0 * 2**doublings
    n = int(np.ceil(tau_end / dtau - 1e-9))
    dt = dtau * se
    damp = np.exp(-sponge_profile(grid, cfg) * dt) if cfg.enabled else None
    mask = window_mask(grid, cfg)
    u = np.array(u0, complex)
    p = np.zeros(grid.spectral_shape, complex)

    def window_energy(u_hat: np.ndarray) -> float:
        q = inv(q_array(u_hat, grid), grid.n)
        return float(np.sum(np.sum(q**2, axis=0) * mask) * grid.dx**3)

    taus = [0.0]
    vals = [window_energy(u)]
    for i in range(1, n + 1):
        u, p = _acoustic(u, p, grid, epsilon, dt)
        if damp is not None:
            phys = inv(np.concatenate([u, p[None]]), grid.n) * damp
            spec = fwd(phys)
            u, p = spec[:3], spec[3]
        taus.append(i * dtau)
        vals.append(window_energy(u))
    taus_arr = np.array(taus)
    vals_arr = np.array(vals)
    out_t, out_a = [], []
    for j in range(doublings + 1):
        tau = tau0 * 2**j
        sel = taus_arr <= tau + 1e-12
        avg = np.trapezoid(vals_arr[sel], taus_arr[sel]) / tau
        out_t.append(float(tau))
        out_a.append(float(avg))
    return DecayReport(out_t, out_a, cfg.enabled)
