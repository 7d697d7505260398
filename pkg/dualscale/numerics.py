import math
from dataclasses import dataclass, replace
from typing import Callable, Optional, Tuple, Union

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import minimize_scalar
from scipy.special import j0

from dualscale.errors import NotPositiveSemidefinite

__all__ = [
    "PSD_TOLERANCE",
    "QuadratureRule",
    "RngStream",
    "as_hermitian",
    "bessel_j0",
    "clamp_psd",
    "gauss_legendre",
    "maximize_unimodal_1d",
    "psd_sqrt",
    "sample_complex_gaussian",
]

PSD_TOLERANCE = 1e-10
DEFAULT_GRID_POINTS = 1000


def bessel_j0(x: float) -> float:
    if not math.isfinite(x):
        raise ValueError(f"bessel_j0 needs a finite argument, got {x}")
    return float(j0(x))


@dataclass(frozen=True)
class QuadratureRule:
    nodes: NDArray[np.float64]
    weights: NDArray[np.float64]

    def integrate(self, f: Callable[[NDArray[np.float64]], NDArray]) -> complex:
        return np.sum(self.weights * f(self.nodes))


def gauss_legendre(order: int, a: float, b: float) -> QuadratureRule:
    """Gauss-Legendre rule mapped from [-1, 1] onto [a, b]."""
    if order < 1:
        raise ValueError(f"quadrature order must be >= 1, got {order}")
    if not a < b:
        raise ValueError(f"quadrature interval needs a < b, got [{a}, {b}]")
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    return QuadratureRule(nodes=mid + half * x, weights=half * w)


@dataclass(frozen=True)
class RngStream:
    """Value-type random stream: equal fields always reproduce the same draws."""

    master_seed: int
    stream_id: int = 0
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if self.master_seed < 0 or self.stream_id < 0:
            raise ValueError("seed and stream id must be non-negative")

    def child(self, index: int) -> "RngStream":
        return replace(self, path=self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.master_seed, spawn_key=(self.stream_id, *self.path))
        return np.random.Generator(np.random.PCG64(seq))


def as_hermitian(matrix: NDArray) -> NDArray[np.complex128]:
    m = np.asarray(matrix, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return 0.5 * (m + m.conj().T)


def _checked_eigh(matrix: NDArray) -> Tuple[NDArray[np.float64], NDArray[np.complex128]]:
    vals, vecs = np.linalg.eigh(as_hermitian(matrix))
    if vals.size and vals[0] < -PSD_TOLERANCE:
        raise NotPositiveSemidefinite(f"min eigenvalue {vals[0]:.3e} below -{PSD_TOLERANCE:g}")
    return np.clip(vals, 0.0, None), vecs


def clamp_psd(matrix: NDArray) -> NDArray[np.complex128]:
    """Hermitian PSD copy; only rebuilt when a small negative eigenvalue was clamped."""
    m = as_hermitian(matrix)
    vals, vecs = np.linalg.eigh(m)
    if not vals.size or vals[0] >= 0.0:
        return m
    if vals[0] < -PSD_TOLERANCE:
        raise NotPositiveSemidefinite(f"min eigenvalue {vals[0]:.3e} below -{PSD_TOLERANCE:g}")
    return as_hermitian((vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T)


def psd_sqrt(matrix: NDArray) -> NDArray[np.complex128]:
    """Factor F with F F^H = matrix; eigenvalues under the rank floor are zeroed."""
    vals, vecs = _checked_eigh(matrix)
    if vals.size:
        floor = vals[-1] * vals.size * np.finfo(np.float64).eps
        vals = np.where(vals <= floor, 0.0, vals)
    return vecs * np.sqrt(vals)


def sample_complex_gaussian(
    cov: NDArray, rng: Union[RngStream, np.random.Generator], count: int
) -> NDArray[np.complex128]:
    """Draw `count` rows from CN(0, cov)."""
    if count < 0:
        raise ValueError(f"count must be non-negative, got {count}")
    factor = psd_sqrt(cov)
    gen = rng.generator() if isinstance(rng, RngStream) else rng
    dim = factor.shape[0]
    white = (gen.standard_normal((count, dim)) + 1j * gen.standard_normal((count, dim))) / math.sqrt(2.0)
    return white @ factor.T


def _bounded_argmax(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded", options={"xatol": tol})
    return float(min(max(res.x, a), b))


def maximize_unimodal_1d(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float,
    grid_points: int = DEFAULT_GRID_POINTS,
    f_batch: Optional[Callable[[NDArray[np.float64]], NDArray[np.float64]]] = None,
) -> Tuple[float, float]:
    """Bounded golden/Brent search, then a uniform-grid pass with local refinement.

    The grid pass keeps the result within reach of the grid maximum when f is
    not unimodal. Ties go to the smaller argument.
    """
    if a > b:
        raise ValueError(f"interval needs a <= b, got [{a}, {b}]")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if a == b:
        return a, float(f(a))

    candidates = []
    x_search = _bounded_argmax(f, a, b, tol)
    candidates.append((x_search, float(f(x_search))))

    xs = np.linspace(a, b, max(int(grid_points), 2))
    ys = np.asarray(f_batch(xs) if f_batch is not None else [f(float(x)) for x in xs], dtype=np.float64)
    best = int(np.argmax(ys))
    candidates.append((float(xs[best]), float(ys[best])))

    lo = float(xs[max(best - 1, 0)])
    hi = float(xs[min(best + 1, xs.size - 1)])
    if hi > lo:
        x_local = _bounded_argmax(f, lo, hi, tol)
        candidates.append((x_local, float(f(x_local))))

    x_best, f_best = candidates[0]
    for x, fx in candidates[1:]:
        if fx > f_best or (fx == f_best and x < x_best):
            x_best, f_best = x, fx
    return x_best, f_best
