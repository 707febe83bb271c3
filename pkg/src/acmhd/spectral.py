"""Periodic-box discretization and Fourier multipliers.

Arrays are indexed ``[..., i1, i2, i3]`` with ``x_a = i_a * L / N``. The
spectral representation is the real-to-complex transform along the last
axis, normalized so that the ``k = 0`` coefficient equals the field mean.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

logger = logging.getLogger(__name__)

_AXES = (-3, -2, -1)


class ContractError(ValueError):
    """An operation received a field in the wrong representation or shape."""


class ZeroModeCounter:
    """Counts how often a nonzero mean was discarded by a singular multiplier."""

    def __init__(self) -> None:
        self.count = 0

    def hit(self, where: str, value: float) -> None:
        self.count += 1
        logger.debug("%s: zeroing nonzero k=0 mode (|mean|=%.3e)", where, value)

    def reset(self) -> None:
        self.count = 0


zero_mode_events = ZeroModeCounter()


@dataclass(frozen=True)
class Grid3:
    """Cubic periodic box ``[0, L)^3`` sampled with ``n`` points per axis."""

    n: int
    length: float = 2 * np.pi

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n!r}")
        if not self.length > 0:
            raise ValueError(f"box length must be positive, got {self.length!r}")

    @property
    def dx(self) -> float:
        return self.length / self.n

    @property
    def volume(self) -> float:
        return self.length**3

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n // 2 + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n)

    @cached_property
    def index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Signed integer mode indices, broadcastable to the spectral shape."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n).astype(int)
        half = np.arange(self.n // 2 + 1)
        return full[:, None, None], full[None, :, None], half[None, None, :]

    @cached_property
    def nyquist_free(self) -> np.ndarray:
        """False on every mode that carries the Nyquist index on some axis."""
        h = self.n // 2
        i1, i2, i3 = self.index
        return (np.abs(i1) != h) & (np.abs(i2) != h) & (i3 != h)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        scale = 2 * np.pi / self.length
        return tuple(scale * i.astype(float) for i in self.index)

    @cached_property
    def k_vector(self) -> np.ndarray:
        """Wavenumber vector with Nyquist modes zeroed, shape ``(3, *spectral_shape)``."""
        k = np.stack(np.broadcast_arrays(*self.wavenumbers)).astype(float)
        return k * self.nyquist_free

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2 on the full (unmasked) mode set."""
        k1, k2, k3 = self.wavenumbers
        return k1**2 + k2**2 + k3**2

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        i1, i2, i3 = self.index
        return (3 * np.abs(i1) <= self.n) & (3 * np.abs(i2) <= self.n) & (3 * i3 <= self.n)

    @cached_property
    def weights(self) -> np.ndarray:
        """Multiplicity of each stored half-spectrum mode in the full spectrum."""
        w = np.full(self.n // 2 + 1, 2.0)
        w[0] = 1.0
        w[-1] = 1.0
        return w[None, None, :]

    def coordinates(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = np.arange(self.n) * self.dx
        return np.meshgrid(x, x, x, indexing="ij")


def _frozen(a: np.ndarray) -> np.ndarray:
    v = np.asarray(a).view()
    v.flags.writeable = False
    return v


@dataclass(frozen=True)
class Field:
    """Scalar or 3-vector field on a grid, in physical or spectral form.

    ``data`` is read-only. Vector fields carry a leading component axis.
    """

    grid: Grid3
    data: np.ndarray = field(repr=False)
    spectral: bool = False

    def __post_init__(self) -> None:
        shape = self.grid.spectral_shape if self.spectral else self.grid.physical_shape
        d = np.asarray(self.data)
        if d.shape not in (shape, (3, *shape)):
            raise ContractError(f"data shape {d.shape} does not match grid {shape}")
        if self.spectral:
            d = d.astype(complex, copy=False)
        elif np.iscomplexobj(d):
            raise ContractError("physical fields must be real")
        else:
            d = d.astype(float, copy=False)
        object.__setattr__(self, "data", _frozen(d))

    @property
    def rank(self) -> str:
        return "vector3" if self.data.ndim == 4 else "scalar"

    @property
    def is_vector(self) -> bool:
        return self.data.ndim == 4

    def with_data(self, data: np.ndarray) -> "Field":
        return Field(self.grid, data, self.spectral)

    def component(self, i: int) -> "Field":
        if not self.is_vector:
            raise ContractError("scalar field has no components")
        return Field(self.grid, self.data[i], self.spectral)

    def __add__(self, other: "Field") -> "Field":
        _same_kind(self, other)
        return self.with_data(self.data + other.data)

    def __sub__(self, other: "Field") -> "Field":
        _same_kind(self, other)
        return self.with_data(self.data - other.data)

    def __mul__(self, c: float) -> "Field":
        return self.with_data(self.data * c)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_data(-self.data)


def _same_kind(a: Field, b: Field) -> None:
    if a.grid != b.grid or a.spectral != b.spectral or a.data.shape != b.data.shape:
        raise ContractError("fields differ in grid, representation or rank")


def require_spectral(*fields: Field) -> None:
    for f in fields:
        if not f.spectral:
            raise ContractError("operation requires spectral representation")


def require_physical(*fields: Field) -> None:
    for f in fields:
        if f.spectral:
            raise ContractError("operation requires physical representation")


# Array-level transforms; the solver calls these directly.

def fwd(a: np.ndarray) -> np.ndarray:
    return sfft.rfftn(a, axes=_AXES, norm="forward")


def inv(a: np.ndarray, n: int) -> np.ndarray:
    return sfft.irfftn(a, s=(n, n, n), axes=_AXES, norm="forward")


def to_spectral(f: Field) -> Field:
    require_physical(f)
    return Field(f.grid, fwd(f.data), spectral=True)


def to_physical(f: Field) -> Field:
    require_spectral(f)
    return Field(f.grid, inv(f.data, f.grid.n), spectral=False)


def zeros(grid: Grid3, vector: bool = False, spectral: bool = True) -> Field:
    shape = grid.spectral_shape if spectral else grid.physical_shape
    if vector:
        shape = (3, *shape)
    return Field(grid, np.zeros(shape, complex if spectral else float), spectral)


def partial_derivative(f: Field, axis: int) -> Field:
    """Derivative along ``axis`` (1, 2 or 3)."""
    require_spectral(f)
    if axis not in (1, 2, 3):
        raise ValueError(f"axis must be 1, 2 or 3, got {axis!r}")
    return f.with_data(1j * f.grid.k_vector[axis - 1] * f.data)


def sobolev_symbol(grid: Grid3, order: float, flavor: str = "inhomogeneous") -> np.ndarray:
    if flavor == "inhomogeneous":
        sym = (1.0 + grid.k2) ** (order / 2)
    elif flavor == "homogeneous":
        k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
        sym = k2 ** (order / 2)
        sym[0, 0, 0] = 0.0 if order < 0 else (1.0 if order == 0 else 0.0)
    else:
        raise ValueError(f"unknown flavor {flavor!r}")
    return sym * grid.nyquist_free


def sobolev_multiplier(f: Field, order: float, flavor: str = "inhomogeneous") -> Field:
    """Scale each mode by ``(1+|k|^2)^(s/2)`` or, homogeneous, ``|k|^s``.

    The homogeneous flavor drops the mean for negative orders.
    """
    require_spectral(f)
    if flavor == "homogeneous" and order < 0:
        mean = np.abs(f.data[..., 0, 0, 0]).max()
        if mean > 0:
            zero_mode_events.hit("sobolev_multiplier", float(mean))
    return f.with_data(f.data * sobolev_symbol(f.grid, order, flavor))


def laplacian(f: Field) -> Field:
    require_spectral(f)
    return f.with_data(-f.grid.k2 * f.grid.nyquist_free * f.data)


def inverse_laplacian(f: Field) -> Field:
    require_spectral(f)
    mean = np.abs(f.data[..., 0, 0, 0]).max()
    if mean > 0:
        zero_mode_events.hit("inverse_laplacian", float(mean))
    return f.with_data(inverse_laplacian_array(f.data, f.grid))


def inverse_laplacian_array(a: np.ndarray, grid: Grid3) -> np.ndarray:
    k2 = np.where(grid.k2 == 0, 1.0, grid.k2)
    out = -a / k2 * grid.nyquist_free
    out[..., 0, 0, 0] = 0.0
    return out


def dealias(f: Field) -> Field:
    """2/3 rule: drop modes with any axis index above N/3."""
    require_spectral(f)
    return f.with_data(f.data * f.grid.dealias_mask)


# Quadrature.

def inner(a: Field, b: Field) -> float:
    """``integral of a . b`` over the box, evaluated in the representation given."""
    _same_kind(a, b)
    if a.spectral:
        return spectral_inner(a.data, b.data, a.grid)
    return float(np.sum(a.data * b.data) * a.grid.dx**3)


def spectral_inner(a: np.ndarray, b: np.ndarray, grid: Grid3) -> float:
    prod = (a * b.conj()).real * grid.weights
    return float(prod.sum() * grid.volume)


def l2_norm(f: Field) -> float:
    return float(np.sqrt(max(inner(f, f), 0.0)))


def lp_norm(f: Field, p: float) -> float:
    """Discrete L^p norm; vector fields use the pointwise Euclidean length."""
    if f.spectral:
        f = to_physical(f)
    mag = np.sqrt(np.sum(f.data**2, axis=0)) if f.is_vector else np.abs(f.data)
    return lp_norm_array(mag, f.grid, p)


def lp_norm_array(mag: np.ndarray, grid: Grid3, p: float) -> float:
    if np.isinf(p):
        return float(mag.max())
    return float((np.sum(mag**p) * grid.dx**3) ** (1.0 / p))


def random_field(
    grid: Grid3,
    rng: np.random.Generator,
    vector: bool = False,
    kmax: float | None = None,
    zero_mean: bool = True,
    slope: float = 0.0,
) -> Field:
    """Real Gaussian band-limited field in spectral form.

    Mode amplitudes scale as ``|k|^(-slope/2)`` for indices up to ``kmax``
    (default: the dealiased band).
    """
    shape = (3, *grid.physical_shape) if vector else grid.physical_shape
    hat = fwd(rng.standard_normal(shape))
    idx = np.sqrt(sum(i.astype(float) ** 2 for i in grid.index))
    keep = grid.dealias_mask & grid.nyquist_free
    if kmax is not None:
        keep = keep & (idx <= kmax)
    amp = np.where(idx > 0, idx, 1.0) ** (-slope / 2)
    hat = hat * keep * amp
    if zero_mean:
        hat[..., 0, 0, 0] = 0.0
    return Field(grid, hat, spectral=True)
