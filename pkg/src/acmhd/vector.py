"""Vector calculus on spectral fields: grad/div/curl, Leray projectors,
products, Gaussian mollification and the vector-identity residuals."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import (
    ContractError,
    Field,
    Grid3,
    dealias,
    fwd,
    inv,
    l2_norm,
    require_spectral,
    to_physical,
    to_spectral,
)


def _require_vector(*fields: Field) -> None:
    for f in fields:
        if not f.is_vector:
            raise ContractError("expected a vector field")


def _require_scalar(*fields: Field) -> None:
    for f in fields:
        if f.is_vector:
            raise ContractError("expected a scalar field")


# Array kernels (spectral in, spectral out).

def grad_array(a: np.ndarray, grid: Grid3) -> np.ndarray:
    return 1j * grid.k_vector * a


def div_array(v: np.ndarray, grid: Grid3) -> np.ndarray:
    k = grid.k_vector
    return 1j * (k[0] * v[0] + k[1] * v[1] + k[2] * v[2])


def curl_array(v: np.ndarray, grid: Grid3) -> np.ndarray:
    k = grid.k_vector
    return 1j * np.stack(
        [
            k[1] * v[2] - k[2] * v[1],
            k[2] * v[0] - k[0] * v[2],
            k[0] * v[1] - k[1] * v[0],
        ]
    )


def cross_array(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    )


def q_array(v: np.ndarray, grid: Grid3) -> np.ndarray:
    """Gradient part ``k (k . v) / |k|^2``; the mean goes to the solenoidal part."""
    k = grid.k_vector
    k2 = k[0] ** 2 + k[1] ** 2 + k[2] ** 2
    kv = (k[0] * v[0] + k[1] * v[1] + k[2] * v[2]) / np.where(k2 == 0, 1.0, k2)
    return k * kv


def p_array(v: np.ndarray, grid: Grid3) -> np.ndarray:
    return v - q_array(v, grid)


# Field-level operations.

def gradient(f: Field) -> Field:
    require_spectral(f)
    _require_scalar(f)
    return Field(f.grid, grad_array(f.data, f.grid), spectral=True)


def divergence(v: Field) -> Field:
    require_spectral(v)
    _require_vector(v)
    return Field(v.grid, div_array(v.data, v.grid), spectral=True)


def curl(v: Field) -> Field:
    require_spectral(v)
    _require_vector(v)
    return v.with_data(curl_array(v.data, v.grid))


def cross(a: Field, b: Field) -> Field:
    """Pointwise ``a x b``.

    Spectral inputs are dealiased, multiplied on the grid and the product is
    dealiased again; physical inputs are multiplied as given.
    """
    _require_vector(a, b)
    if a.spectral != b.spectral or a.grid != b.grid:
        raise ContractError("cross product needs matching grids and representations")
    if not a.spectral:
        return a.with_data(cross_array(a.data, b.data))
    n = a.grid.n
    pa = inv(dealias(a).data, n)
    pb = inv(dealias(b).data, n)
    return dealias(a.with_data(fwd(cross_array(pa, pb))))


def dot(a: Field, b: Field) -> Field:
    _require_vector(a, b)
    if a.spectral:
        n = a.grid.n
        pa = inv(dealias(a).data, n)
        pb = inv(dealias(b).data, n)
        return dealias(Field(a.grid, fwd(np.sum(pa * pb, axis=0)), spectral=True))
    return Field(a.grid, np.sum(a.data * b.data, axis=0))


def leray_Q(v: Field) -> Field:
    require_spectral(v)
    _require_vector(v)
    return v.with_data(q_array(v.data, v.grid))


def leray_P(v: Field) -> Field:
    require_spectral(v)
    _require_vector(v)
    return v.with_data(p_array(v.data, v.grid))


@dataclass(frozen=True)
class HelmholtzSplit:
    solenoidal_part: Field
    gradient_part: Field


def helmholtz_split(v: Field) -> HelmholtzSplit:
    q = leray_Q(v)
    return HelmholtzSplit(solenoidal_part=v - q, gradient_part=q)


def mollifier_symbol(grid: Grid3, alpha: float) -> np.ndarray:
    return np.exp(-0.5 * grid.k2 * alpha**2) * grid.nyquist_free


def mollify(f: Field, alpha: float) -> Field:
    """Convolve with a unit-mass Gaussian of width ``alpha``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha!r}")
    spectral = f.spectral
    g = f if spectral else to_spectral(f)
    out = g.with_data(g.data * mollifier_symbol(g.grid, alpha))
    return out if spectral else to_physical(out)


def _refine(f: Field, m: int) -> Field:
    """Embed a band-limited spectral field into an ``m``-point grid."""
    g = f.grid
    fine = Grid3(m, g.length)
    out = np.zeros((*f.data.shape[:-3], *fine.spectral_shape), complex)
    i1, i2, i3 = g.index
    keep = f.data * g.nyquist_free
    out[..., i1, i2, i3] = keep
    return Field(fine, out, spectral=True)


def vector_identity_residuals(A: Field, H: Field) -> tuple[float, float, float]:
    """Relative L2 residuals of the three product-rule identities for A, H:

    ``grad|A|^2 = 2 (A.grad) A + 2 A x curl A``,
    ``curl(A x H) = A div H - H div A + (H.grad) A - (A.grad) H``,
    ``div((A x H) x H) = (curl H x H) . A + curl(A x H) . H``.

    Both sides are evaluated on a grid refined by two so that every cubic
    product of dealiased inputs is represented without aliasing.
    """
    require_spectral(A, H)
    _require_vector(A, H)
    m = 2 * A.grid.n
    A = _refine(dealias(A), m)
    H = _refine(dealias(H), m)
    g = A.grid

    def phys(a: np.ndarray) -> np.ndarray:
        return inv(a, m)

    def spec(a: np.ndarray) -> np.ndarray:
        return fwd(a)

    a, h = phys(A.data), phys(H.data)
    curl_a = phys(curl_array(A.data, g))
    curl_h = phys(curl_array(H.data, g))
    div_a = phys(div_array(A.data, g))
    div_h = phys(div_array(H.data, g))
    grad_a = np.stack([phys(grad_array(A.data[i], g)) for i in range(3)])  # [i, j] = d_j a_i
    grad_h = np.stack([phys(grad_array(H.data[i], g)) for i in range(3)])

    def advect(w: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
        return np.einsum("j...,ij...->i...", w, grad_v)

    # v1
    lhs1 = phys(grad_array(spec(np.sum(a * a, axis=0)), g))
    rhs1 = 2 * advect(a, grad_a) + 2 * cross_array(a, curl_a)
    # v2
    axh = cross_array(a, h)
    lhs2 = phys(curl_array(spec(axh), g))
    rhs2 = a * div_h - h * div_a + advect(h, grad_a) - advect(a, grad_h)
    # v3
    lhs3 = phys(div_array(spec(cross_array(axh, h)), g))
    # div(X x H) = H . curl X - X . curl H with X = A x H
    rhs3 = np.sum(cross_array(curl_h, h) * a, axis=0) + np.sum(lhs2 * h, axis=0)

    def rel(lhs: np.ndarray, rhs: np.ndarray) -> float:
        scale = np.sqrt(np.sum(lhs**2)) + np.sqrt(np.sum(rhs**2))
        if scale == 0:
            return 0.0
        return float(np.sqrt(np.sum((lhs - rhs) ** 2)) / scale)

    return rel(lhs1, rhs1), rel(lhs2, rhs2), rel(lhs3, rhs3)


def relative_l2(a: Field, b: Field) -> float:
    """``||a - b|| / ||b||`` with the convention 0/0 = 0."""
    den = l2_norm(b)
    num = l2_norm(a - b)
    return num / den if den > 0 else num
