"""The exact hyperbolic normal form g = r^-2 (dr^2 + g_r) with

    g_r = gamma - r^2 P + (r^4 / 4) Q,      Q_ij = gamma^{kl} P_ik P_jl,

its level-set geometry, and the residual checks tying the level-set
principal curvatures to the spectrum of P.

For each level r the fundamental forms are assembled directly from the
stored polynomial coefficients (no differentiation):

    I_r   = r^-2 gamma - P + (r^2/4) Q
    II_r  = -r^-2 gamma + (r^2/4) Q          (outward normal -r d/dr)
    III_r = r^-2 gamma + P + (r^2/4) Q

In a frame diagonalizing P the Weingarten eigenvalues are
kappa_i = -(1 + u_i)/(1 - u_i) with u_i = (r^2/2) lambda_i, so the
curvature radii 2/(1 - kappa_i) equal 1 - (r^2/2) lambda_i; the
``key_identity_residual`` check recomputes kappa through the generalized
eigenproblem II v = kappa I v and compares against the spectrum through
that relation, pairing both sides as sorted sequences.

The expansion is admissible for 0 < r < r_max = inf_pts sqrt(2/lambda_max)
(unbounded when P has no positive eigenvalues); beyond that g_r loses
positive definiteness.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .conformal import SpectralField, eigen_rel, q_tensor
from .fields import (
    Chart,
    TensorField,
    cholesky_pd,
    ensure_same_chart,
    fornberg_weights,
    generalized_symmetric_eig,
)
from .tensor_core import (
    EINSUM_OPTS,
    christoffel,
    christoffel_derivative_from_arrays,
    christoffel_from_arrays,
    riemann,
    riemann_from_parts,
    _resolve_mode,
    _sym2_unchecked,
)


class FoliationRangeError(ValueError):
    """Requested r lies outside the range where g_r stays positive definite."""


@dataclass
class FGExpansion:
    """Stored expansion data: the boundary metric, P, and Q = Q(P)."""

    gamma: TensorField
    p: TensorField
    q: TensorField
    _spectral: SpectralField | None = None

    @property
    def chart(self) -> Chart:
        return self.gamma.chart

    def spectral(self) -> SpectralField:
        if self._spectral is None:
            self._spectral = eigen_rel(self.gamma, self.p)
        return self._spectral

    def r_max_field(self) -> np.ndarray:
        """Per-point largest admissible r (inf where lambda_max <= 0)."""
        lam_max = self.spectral().eigenvalues[..., -1]
        out = np.full(lam_max.shape, np.inf)
        pos = lam_max > 0.0
        out[pos] = np.sqrt(2.0 / lam_max[pos])
        return out

    def r_max(self) -> float:
        return float(np.min(self.r_max_field()))

    def check_r(self, r: float):
        if not r > 0.0:
            raise FoliationRangeError(f"r must be positive, got {r}")
        rmax = self.r_max()
        if r >= rmax:
            raise FoliationRangeError(
                f"g_r loses positivity at some point for r >= {rmax:.6g} (got {r})"
            )

    def metric_at(self, r: float) -> TensorField:
        """g_r sampled on the chart; analytic derivative samples propagate
        linearly from gamma, P, Q when all three carry them."""
        self.check_r(r)
        return self._metric_at_unchecked(r)

    def _metric_at_unchecked(self, r: float) -> TensorField:
        c2, c4 = r * r, 0.25 * r**4
        data = self.gamma.data - c2 * self.p.data + c4 * self.q.data
        d1 = d2 = None
        if all(f.d1 is not None for f in (self.gamma, self.p, self.q)):
            d1 = self.gamma.d1 - c2 * self.p.d1 + c4 * self.q.d1
            if all(f.d2 is not None for f in (self.gamma, self.p, self.q)):
                d2 = self.gamma.d2 - c2 * self.p.d2 + c4 * self.q.d2
        return TensorField(self.chart, 2, data, symmetric=True, d1=d1, d2=d2)

    def radial_derivative_at(self, r: float) -> np.ndarray:
        """d g_r / d r = -2 r P + r^3 Q, evaluated analytically."""
        return -2.0 * r * self.p.data + r**3 * self.q.data


def build_expansion(gamma: TensorField, p: TensorField) -> FGExpansion:
    """Assemble the expansion from a boundary metric and a symmetric P."""
    ensure_same_chart(gamma, p)
    if p.rank != 2 or not p.symmetric:
        raise ValueError("P must be a symmetric rank-2 field")
    return FGExpansion(gamma, p, q_tensor(gamma, p))


@dataclass
class LevelSetGeometry:
    """Geometry of one level set: fundamental forms, and (after
    ``weingarten``) the shape operator, principal curvatures (ascending),
    and curvature radii."""

    expansion: FGExpansion
    r: float
    first: TensorField
    second: TensorField
    third: TensorField
    shape_operator: np.ndarray | None = None
    kappa: np.ndarray | None = None

    @property
    def chart(self) -> Chart:
        return self.expansion.chart


def fundamental_forms(exp: FGExpansion, r: float) -> LevelSetGeometry:
    """First, second and third fundamental forms of the level set at r,
    each assembled independently from the stored tensors."""
    exp.check_r(r)
    inv_r2 = 1.0 / (r * r)
    quarter_r2 = 0.25 * r * r
    g, p, q = exp.gamma.data, exp.p.data, exp.q.data
    chart = exp.chart
    first = TensorField(chart, 2, inv_r2 * g - p + quarter_r2 * q, symmetric=True)
    second = TensorField(chart, 2, -inv_r2 * g + quarter_r2 * q, symmetric=True)
    third = TensorField(chart, 2, inv_r2 * g + p + quarter_r2 * q, symmetric=True)
    return LevelSetGeometry(exp, r, first, second, third)


def weingarten(geom: LevelSetGeometry) -> LevelSetGeometry:
    """Shape operator I^-1 II and principal curvatures from the generalized
    eigenproblem II v = kappa I v (ascending)."""
    chol = cholesky_pd(geom.first)
    kappa, _ = generalized_symmetric_eig(geom.second.data, chol)
    first_inv = np.linalg.inv(geom.first.data)
    shape_op = np.einsum(
        "...ik,...kj->...ij", first_inv, geom.second.data, **EINSUM_OPTS
    )
    if not np.all(kappa < 1.0):
        raise FoliationRangeError(
            "a principal curvature reached 1; r is outside the valid range"
        )
    return replace(geom, shape_operator=shape_op, kappa=kappa)


def level_set_geometry(exp: FGExpansion, r: float) -> LevelSetGeometry:
    return weingarten(fundamental_forms(exp, r))


def curvature_radii(geom: LevelSetGeometry) -> np.ndarray:
    """Hyperbolic curvature radii 2/(1 - kappa_i), shape grid + (n,)."""
    if geom.kappa is None:
        geom = weingarten(geom)
    if not np.all(geom.kappa < 1.0):
        raise FoliationRangeError("kappa >= 1 signals r outside the valid range")
    return 2.0 / (1.0 - geom.kappa)


def kappa_closed_form(spectral: SpectralField, r: float) -> np.ndarray:
    """-(1 + (r^2/2) lambda) / (1 - (r^2/2) lambda), sorted ascending."""
    u = 0.5 * r * r * spectral.eigenvalues
    kappa = -(1.0 + u) / (1.0 - u)
    return kappa[..., ::-1]  # lambda ascending makes this expression descending


def key_identity_residual(exp: FGExpansion, geom: LevelSetGeometry,
                          spectral: SpectralField) -> np.ndarray:
    """| 1 - (r^2/2) lambda_i - 2/(1 - kappa_i) | per point and i.

    kappa comes from the generalized eigenproblem, lambda from the
    relative eigenproblem of P; the two ascending spectra pair through
    the order-reversing relation, so both sides are compared as sorted
    sequences.
    """
    if geom.kappa is None:
        geom = weingarten(geom)
    r = geom.r
    lhs = 1.0 - 0.5 * r * r * spectral.eigenvalues  # descending in i
    lhs_sorted = lhs[..., ::-1]
    rhs = 2.0 / (1.0 - geom.kappa)  # ascending already
    return np.abs(lhs_sorted - rhs)


def horospherical_metric(geom: LevelSetGeometry) -> tuple[TensorField, float]:
    """h = I - 2 II + III and the sup-norm of h - 4 r^-2 gamma.

    The combination telescopes algebraically to 4 r^-2 gamma, so the
    residual is pure floating-point noise for any admissible input.
    """
    h = geom.first.data - 2.0 * geom.second.data + geom.third.data
    target = (4.0 / (geom.r * geom.r)) * geom.expansion.gamma.data
    residual = float(np.max(np.abs(h - target)))
    return TensorField(geom.chart, 2, h, symmetric=True), residual


def ambient_expansion_check(exp: FGExpansion) -> tuple[float, float, float]:
    """Taylor data of g_rho (the rho = -r^2/2 substitution) at rho = 0.

    Returns sup-norms of g'(0) - 2P, g''(0) - 2Q, and g''', read off the
    stored polynomial coefficients; all three vanish identically.
    """
    # rho-coefficients of g_rho = c0 + c1 rho + c2 rho^2 (+ 0 rho^3)
    c1 = -2.0 * (-exp.p.data)  # r^2-coefficient is -P
    c2 = 4.0 * (0.25 * exp.q.data)  # r^4-coefficient is Q/4
    res1 = float(np.max(np.abs(c1 - 2.0 * exp.p.data)))
    res2 = float(np.max(np.abs(2.0 * c2 - 2.0 * exp.q.data)))
    res3 = 0.0  # the quartic has no rho^3 term
    return res1, res2, res3


def tangential_decomposition_residual(exp: FGExpansion, r: float,
                                      derivatives: str = "auto") -> float:
    """Sup-norm of the level-set curvature decomposition

        r R^{g_r}_ijkl - 1/2 (g_il g'_jk + g'_il g_jk - g'_ik g_jl - g_ik g'_jl)
        + (r/4) (g'_il g'_jk - g'_ik g'_jl)

    with g = g_r differentiated on the chart and g' = d g_r / d r taken
    from the expansion polynomial.  Vanishes exactly when the boundary
    data is locally conformally flat; otherwise it is a reported
    diagnostic, not a check.
    """
    exp.check_r(r)
    g_field = exp.metric_at(r)
    mode = _resolve_mode(g_field, derivatives, need_d2=True)
    Gamma = christoffel(g_field, mode)
    riem = riemann(g_field, Gamma, mode)
    g = g_field.data
    gp = exp.radial_derivative_at(r)
    outer = lambda a, b: np.einsum("...il,...jk->...ijkl", a, b, **EINSUM_OPTS)
    pair = lambda a, b: np.einsum("...ik,...jl->...ijkl", a, b, **EINSUM_OPTS)
    combo = outer(g, gp) + outer(gp, g) - pair(gp, g) - pair(g, gp)
    quad = outer(gp, gp) - pair(gp, gp)
    tensor = r * riem - 0.5 * combo + 0.25 * r * quad
    depth = 0 if mode == "analytic" else 4
    mask = exp.chart.valid_mask(depth)
    return float(np.max(np.abs(tensor.reshape(mask.shape + (-1,))[mask])))


# ---------------------------------------------------------------------------
# bulk curvature on the (n+1)-dimensional product grid

@dataclass
class BulkResidual:
    """sup |Riem_g + g (.) g| for the bulk metric g = r^-2 (dr^2 + g_r),
    where (g (.) g)_ijkl = g_ik g_jl - g_il g_jk, plus the per-point
    residual field and the mask it was maximized over."""

    max_residual: float
    field: np.ndarray
    mask: np.ndarray
    r0: float
    spacing: float


def bulk_curvature_residual(exp: FGExpansion, r0: float,
                            spacing: float | None = None, slices: int = 5,
                            derivatives: str = "auto") -> BulkResidual:
    """Assemble the bulk metric on a radial window around r0 and measure
    how far its curvature is from constant -1.

    Radial derivatives at the center slice use full-window finite
    difference stencils (exact here: the radial dependence of dr^2 + g_r
    is a quartic polynomial and the window holds >= 5 nodes).  Tangential
    derivatives follow the chart machinery in the requested mode.  The
    r^-2 conformal factor is peeled off analytically: curvature is built
    for ghat = dr^2 + g_r and mapped through the conformal-change formula,
    which keeps the check meaningful at small r.
    """
    if slices < 5 or slices % 2 == 0:
        raise ValueError("need an odd number of slices >= 5")
    if spacing is None:
        spacing = r0 / 20.0
    half = (slices - 1) // 2
    rs = r0 + spacing * (np.arange(slices) - half)
    exp.check_r(float(rs[-1]))
    exp.check_r(float(rs[0]))

    chart = exp.chart
    n = chart.n
    dim = n + 1
    shape = chart.shape
    g_fields = [exp._metric_at_unchecked(float(r)) for r in rs]
    mode = _resolve_mode(g_fields[0], derivatives, need_d2=True)

    def ghat(m: int) -> np.ndarray:
        out = np.zeros(shape + (dim, dim))
        out[..., 0, 0] = 1.0
        out[..., 1:, 1:] = g_fields[m].data
        return out

    def tangential_d1(m: int, axis: int) -> np.ndarray:
        """d_axis ghat at slice m (only the tangential block varies)."""
        out = np.zeros(shape + (dim, dim))
        if mode == "analytic":
            out[..., 1:, 1:] = g_fields[m].d1[..., axis, :, :]
        else:
            out[..., 1:, 1:] = chart.diff(g_fields[m].data, axis)
        return out

    w = fornberg_weights(float(r0), rs, 2)
    w1, w2 = w[1], w[2]

    ghat_all = [ghat(m) for m in range(slices)]
    ghat_c = ghat_all[half]

    d1hat = np.zeros(shape + (dim, dim, dim))
    d2hat = np.zeros(shape + (dim, dim, dim, dim))
    for m in range(slices):
        d1hat[..., 0, :, :] += w1[m] * ghat_all[m]
        d2hat[..., 0, 0, :, :] += w2[m] * ghat_all[m]
    for axis in range(n):
        tangent_slices = [tangential_d1(m, axis) for m in range(slices)]
        d1hat[..., axis + 1, :, :] = tangent_slices[half]
        mixed = sum(w1[m] * tangent_slices[m] for m in range(slices))
        d2hat[..., 0, axis + 1, :, :] = mixed
        d2hat[..., axis + 1, 0, :, :] = mixed
        del tangent_slices
        for axis_b in range(axis, n):
            if mode == "analytic":
                block = g_fields[half].d2[..., axis, axis_b, :, :]
            else:
                block = chart.diff2(g_fields[half].data, axis, axis_b)
            d2hat[..., axis + 1, axis_b + 1, 1:, 1:] = block
            d2hat[..., axis_b + 1, axis + 1, 1:, 1:] = block
    del ghat_all

    ghat_inv = np.linalg.inv(ghat_c)
    Gamma = christoffel_from_arrays(ghat_inv, d1hat)
    dGamma = np.stack(
        [
            christoffel_derivative_from_arrays(ghat_inv, d1hat, d2hat, a)
            for a in range(dim)
        ],
        axis=-4,
    )
    del d1hat, d2hat
    riem_hat = riemann_from_parts(ghat_c, Gamma, dGamma)
    del dGamma

    # conformal change g = e^{2 psi} ghat with psi = -ln r:
    #   Riem_g = e^{2 psi} (Riem_ghat - ghat (^) T),
    #   T = hess(psi) - dpsi dpsi + 1/2 |dpsi|^2 ghat,
    # where only the radial component of dpsi is nonzero and analytic.
    inv_r = 1.0 / r0
    t_tensor = inv_r * Gamma[..., 0, :, :]  # -Gamma^mu dpsi_mu term
    t_tensor = t_tensor.copy()
    t_tensor[..., 0, 0] += inv_r * inv_r  # hess entry d_r d_r psi
    t_tensor[..., 0, 0] -= inv_r * inv_r  # dpsi (x) dpsi
    grad_sq = ghat_inv[..., 0, 0] * inv_r * inv_r
    t_tensor += 0.5 * grad_sq[..., None, None] * ghat_c
    del Gamma

    kn = (
        np.einsum("...ik,...jl->...ijkl", ghat_c, t_tensor, **EINSUM_OPTS)
        + np.einsum("...jl,...ik->...ijkl", ghat_c, t_tensor, **EINSUM_OPTS)
        - np.einsum("...il,...jk->...ijkl", ghat_c, t_tensor, **EINSUM_OPTS)
        - np.einsum("...jk,...il->...ijkl", ghat_c, t_tensor, **EINSUM_OPTS)
    )
    riem_bulk = (inv_r * inv_r) * (riem_hat - kn)
    del riem_hat, kn

    g_bulk = (inv_r * inv_r) * ghat_c
    wedge = np.einsum("...ik,...jl->...ijkl", g_bulk, g_bulk, **EINSUM_OPTS)
    wedge -= np.einsum("...il,...jk->...ijkl", g_bulk, g_bulk, **EINSUM_OPTS)
    residual = riem_bulk + wedge
    del riem_bulk, wedge

    field = np.max(np.abs(residual), axis=tuple(range(-4, 0)))
    depth = 0 if mode == "analytic" else 4
    mask = chart.valid_mask(depth)
    return BulkResidual(float(np.max(field[mask])), field, mask, r0, spacing)
