"""Uniform tensor-product charts and sampled tensor fields.

A chart is an n-dimensional box grid, either periodic (first and last
grid lines identified, spacing L/res) or open (both endpoints sampled,
spacing L/(res-1)).  Fields store one numpy array with the grid axes
leading and any component axes trailing, so a symmetric 2-tensor on a
3d chart of resolution 16 has shape (16, 16, 16, 3, 3).

Derivatives are 4th-order central finite differences.  On periodic
charts the stencils wrap; on open charts boundary points fall back to
one-sided stencils of the same order and ``valid_mask`` marks the
interior region where the central stencils apply.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

PERIODIC = "periodic"
OPEN = "open"

MIN_RESOLUTION = 8


class ChartMismatchError(ValueError):
    """Operation mixing fields from different charts."""


def fornberg_weights(z: float, x, m: int) -> np.ndarray:
    """Finite-difference weights on arbitrary nodes (Fornberg's recursion).

    Returns w of shape (m+1, len(x)) with sum_j w[k, j] f(x[j]) approximating
    f^(k)(z); exact for polynomials of degree <= len(x)-1-k... exact whenever
    f is a polynomial of degree <= len(x)-1.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    w = np.zeros((m + 1, n))
    c1, c4 = 1.0, x[0] - z
    w[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            for k in range(mn, 0, -1):
                w[k, i] = c1 * (k * w[k - 1, i - 1] - c5 * w[k, i - 1]) / c2
            w[0, i] = -c1 * c5 * w[0, i - 1] / c2
            for k in range(mn, 0, -1):
                w[k, j] = (c4 * w[k, j] - k * w[k - 1, j]) / c3
            w[0, j] = c4 * w[0, j] / c3
        c1 = c2
    return w


@lru_cache(maxsize=None)
def _edge_weights(order: int, npts: int, at: int) -> tuple[float, ...]:
    """One-sided weights for d^order/dx^order at node ``at`` of 0..npts-1."""
    return tuple(fornberg_weights(float(at), np.arange(npts, dtype=float), order)[order])


@dataclass(frozen=True)
class Chart:
    """Uniform grid on a box, periodic or open.

    Parameters
    ----------
    n : spatial dimension (>= 2)
    topology : "periodic" or "open"
    extents : per-axis (lo, hi) tuples
    resolutions : per-axis point counts (>= 8)
    """

    n: int
    topology: str
    extents: tuple[tuple[float, float], ...]
    resolutions: tuple[int, ...]

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"chart dimension must be >= 2, got {self.n}")
        if self.topology not in (PERIODIC, OPEN):
            raise ValueError(f"unknown topology {self.topology!r}")
        if len(self.extents) != self.n or len(self.resolutions) != self.n:
            raise ValueError("extents/resolutions must have one entry per axis")
        for res in self.resolutions:
            if res < MIN_RESOLUTION:
                raise ValueError(f"resolution {res} < {MIN_RESOLUTION}")
        for lo, hi in self.extents:
            if not hi > lo:
                raise ValueError(f"empty extent ({lo}, {hi})")

    @property
    def periodic(self) -> bool:
        return self.topology == PERIODIC

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolutions

    @property
    def spacings(self) -> tuple[float, ...]:
        out = []
        for (lo, hi), res in zip(self.extents, self.resolutions):
            denom = res if self.periodic else res - 1
            out.append((hi - lo) / denom)
        return tuple(out)

    def axis_coords(self, axis: int) -> np.ndarray:
        lo, _ = self.extents[axis]
        h = self.spacings[axis]
        return lo + h * np.arange(self.resolutions[axis])

    def coords(self) -> list[np.ndarray]:
        """Broadcast coordinate arrays, one per axis, each of full grid shape."""
        axes = [self.axis_coords(a) for a in range(self.n)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def valid_mask(self, depth: int) -> np.ndarray:
        """True where stencils up to ``depth`` layers stay central.

        Periodic charts are valid everywhere; open charts lose ``depth``
        cells along each boundary.
        """
        mask = np.ones(self.shape, dtype=bool)
        if self.periodic or depth == 0:
            return mask
        for axis in range(self.n):
            sl = [slice(None)] * self.n
            sl[axis] = slice(0, depth)
            mask[tuple(sl)] = False
            sl[axis] = slice(-depth, None)
            mask[tuple(sl)] = False
        return mask

    # -- differentiation ---------------------------------------------------

    def diff(self, arr: np.ndarray, axis: int) -> np.ndarray:
        """4th-order first derivative along a grid axis.

        ``arr`` has the grid axes leading; trailing component axes ride along.
        """
        h = self.spacings[axis]
        if self.periodic:
            r = lambda s: np.roll(arr, -s, axis=axis)
            return (-r(2) + 8.0 * r(1) - 8.0 * r(-1) + r(-2)) / (12.0 * h)
        return self._diff_open(arr, axis, order=1, h=h)

    def diff2(self, arr: np.ndarray, axis_a: int, axis_b: int) -> np.ndarray:
        """4th-order second derivative; mixed axes compose first derivatives."""
        if axis_a != axis_b:
            return self.diff(self.diff(arr, axis_a), axis_b)
        h = self.spacings[axis_a]
        if self.periodic:
            r = lambda s: np.roll(arr, -s, axis=axis_a)
            return (-r(2) + 16.0 * r(1) - 30.0 * arr + 16.0 * r(-1) - r(-2)) / (
                12.0 * h * h
            )
        return self._diff_open(arr, axis_a, order=2, h=h)

    def _diff_open(self, arr: np.ndarray, axis: int, order: int, h: float) -> np.ndarray:
        out = np.empty_like(arr)
        npts = 5 if order == 1 else 6  # nodes needed for 4th-order one-sided
        take = lambda s: arr[(slice(None),) * axis + (s,)]
        put = lambda s: (slice(None),) * axis + (s,)
        if order == 1:
            out[put(slice(2, -2))] = (
                -take(slice(4, None))
                + 8.0 * take(slice(3, -1))
                - 8.0 * take(slice(1, -3))
                + take(slice(0, -4))
            ) / (12.0 * h)
        else:
            out[put(slice(2, -2))] = (
                -take(slice(4, None))
                + 16.0 * take(slice(3, -1))
                - 30.0 * take(slice(2, -2))
                + 16.0 * take(slice(1, -3))
                - take(slice(0, -4))
            ) / (12.0 * h * h)
        size = arr.shape[axis]
        for edge_at in (0, 1):
            w = _edge_weights(order, npts, edge_at)
            acc = sum(w[j] * take(slice(j, j + 1)) for j in range(npts))
            out[put(slice(edge_at, edge_at + 1))] = acc / h**order
        for edge_at in (size - 2, size - 1):
            local = edge_at - (size - npts)
            w = _edge_weights(order, npts, local)
            acc = sum(
                w[j] * take(slice(size - npts + j, size - npts + j + 1))
                for j in range(npts)
            )
            out[put(slice(edge_at, edge_at + 1))] = acc / h**order
        return out

    def integrate(self, arr: np.ndarray) -> float:
        """Grid-sum quadrature of a scalar sample (trapezoid-free; periodic
        boxes are exact for smooth periodic integrands)."""
        cell = float(np.prod(self.spacings))
        return float(np.sum(arr) * cell)


def ensure_same_chart(*fields_or_charts) -> Chart:
    charts = [f.chart if isinstance(f, TensorField) else f for f in fields_or_charts]
    first = charts[0]
    for other in charts[1:]:
        if other != first:
            raise ChartMismatchError("fields live on different charts")
    return first


@dataclass
class TensorField:
    """Sampled tensor field of rank 0, 1, or 2 on a chart.

    Symmetric rank-2 fields are stored canonically symmetric (exact
    T_ij == T_ji).  Metric fields may carry sampled analytic derivative
    arrays ``d1`` (shape grid + (k, i, j)) and ``d2`` (grid + (k, l, i, j))
    used by curvature routines in place of finite differences.
    """

    chart: Chart
    rank: int
    data: np.ndarray
    symmetric: bool = False
    d1: np.ndarray | None = field(default=None, repr=False)
    d2: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def scalar(cls, chart: Chart, data) -> "TensorField":
        data = np.asarray(data, dtype=float)
        if data.shape != chart.shape:
            raise ValueError(f"scalar field shape {data.shape} != grid {chart.shape}")
        return cls(chart, 0, data)

    @classmethod
    def vector(cls, chart: Chart, data) -> "TensorField":
        data = np.asarray(data, dtype=float)
        if data.shape != chart.shape + (chart.n,):
            raise ValueError("vector field shape mismatch")
        return cls(chart, 1, data)

    @classmethod
    def sym2(cls, chart: Chart, data, tol: float = 1e-8, **derivs) -> "TensorField":
        data = np.asarray(data, dtype=float)
        if data.shape != chart.shape + (chart.n, chart.n):
            raise ValueError(
                f"rank-2 field shape {data.shape} != {chart.shape + (chart.n, chart.n)}"
            )
        transposed = np.swapaxes(data, -1, -2)
        scale = max(1.0, float(np.max(np.abs(data))))
        if np.max(np.abs(data - transposed)) > tol * scale:
            raise ValueError("rank-2 field is not symmetric")
        return cls(chart, 2, 0.5 * (data + transposed), symmetric=True, **derivs)

    def __post_init__(self):
        if self.rank not in (0, 1, 2):
            raise ValueError(f"rank must be 0, 1, or 2, got {self.rank}")

    @property
    def n(self) -> int:
        return self.chart.n


def sym2_inverse(field: TensorField) -> np.ndarray:
    """Pointwise inverse of a symmetric rank-2 field (per-point cholesky
    certifies positive definiteness first)."""
    cholesky_pd(field)
    return np.linalg.inv(field.data)


def cholesky_pd(field: TensorField) -> np.ndarray:
    """Batched Cholesky factor; LinAlgError here means not positive definite."""
    try:
        return np.linalg.cholesky(field.data)
    except np.linalg.LinAlgError as err:
        raise np.linalg.LinAlgError(
            "field is not positive definite at some grid point"
        ) from err


def generalized_symmetric_eig(a: np.ndarray, b_chol: np.ndarray):
    """Solve A v = lambda B v for symmetric A, SPD B given B's Cholesky factor.

    Reduces to a standard symmetric problem via L^-1 A L^-T and maps the
    orthonormal eigenvectors back with L^-T, so the returned frame is
    B-orthonormal: V^T B V = I.  Eigenvalues ascend along the last axis;
    eigenvectors are the columns v_i = V[..., :, i].
    """
    l_inv = np.linalg.inv(b_chol)
    reduced = l_inv @ a @ np.swapaxes(l_inv, -1, -2)
    reduced = 0.5 * (reduced + np.swapaxes(reduced, -1, -2))
    eigvals, eigvecs = np.linalg.eigh(reduced)
    frame = np.swapaxes(l_inv, -1, -2) @ eigvecs
    return eigvals, frame
