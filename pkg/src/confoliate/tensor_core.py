"""Curvature of sampled metrics: Christoffel symbols, Riemann, Ricci,
scalar curvature, covariant derivatives, and Laplacians.

Conventions (sign choices match a unit round sphere having Ric = (n-1) g):

    Gamma^k_ij = 1/2 g^{kl} (d_i g_jl + d_j g_il - d_l g_ij)
    R^m_{jkl}  = d_k Gamma^m_{lj} - d_l Gamma^m_{kj}
                 + Gamma^m_{kp} Gamma^p_{lj} - Gamma^m_{lp} Gamma^p_{kj}
    R_ijkl     = g_im R^m_{jkl},   Ric_jl = R^k_{jkl},   R = g^{jl} Ric_jl

Metric derivatives come from 4th-order finite differences by default; a
metric field carrying sampled analytic derivative arrays (``d1``/``d2``)
can be differentiated exactly, which makes every curvature output a
pointwise algebraic function of the samples.  The ``derivatives``
argument selects "fd", "analytic", or "auto" (analytic when available).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import Chart, TensorField, cholesky_pd, ensure_same_chart, sym2_inverse

EINSUM_OPTS = {"optimize": True}


def _sym2_unchecked(chart: Chart, arr: np.ndarray) -> TensorField:
    """Symmetrize a computed rank-2 field without the input-validation gate
    (open-chart boundary points carry one-sided-stencil values that only the
    valid mask is meant to judge)."""
    sym = 0.5 * (arr + np.swapaxes(arr, -1, -2))
    return TensorField(chart, 2, sym, symmetric=True)


def _resolve_mode(gamma: TensorField, derivatives: str, need_d2: bool) -> str:
    if derivatives == "auto":
        have = gamma.d1 is not None and (gamma.d2 is not None or not need_d2)
        return "analytic" if have else "fd"
    if derivatives == "analytic":
        if gamma.d1 is None or (need_d2 and gamma.d2 is None):
            raise ValueError("analytic derivatives requested but not attached")
        return "analytic"
    if derivatives == "fd":
        return "fd"
    raise ValueError(f"derivatives must be auto|fd|analytic, got {derivatives!r}")


def metric_d1(gamma: TensorField, derivatives: str = "auto") -> np.ndarray:
    """d_k gamma_ij, shape grid + (k, i, j)."""
    mode = _resolve_mode(gamma, derivatives, need_d2=False)
    if mode == "analytic":
        return gamma.d1
    chart = gamma.chart
    return np.stack([chart.diff(gamma.data, a) for a in range(chart.n)], axis=-3)


def _grad_combination(d1: np.ndarray) -> np.ndarray:
    """S_pij = d_i g_jp + d_j g_ip - d_p g_ij from the d1 array."""
    di_gjp = np.einsum("...ijp->...pij", d1, **EINSUM_OPTS)
    dj_gip = np.einsum("...jip->...pij", d1, **EINSUM_OPTS)
    return di_gjp + dj_gip - d1


def christoffel_from_arrays(g_inv: np.ndarray, d1: np.ndarray) -> np.ndarray:
    """Connection coefficients from explicit inverse-metric and d1 arrays."""
    s = _grad_combination(d1)
    return 0.5 * np.einsum("...kp,...pij->...kij", g_inv, s, **EINSUM_OPTS)


def christoffel_derivative_from_arrays(
    g_inv: np.ndarray, d1: np.ndarray, d2: np.ndarray, axis: int
) -> np.ndarray:
    """d_axis Gamma^m_ij computed algebraically from metric derivatives."""
    da_g = d1[..., axis, :, :]
    da_ginv = -np.einsum(
        "...mc,...cd,...dp->...mp", g_inv, da_g, g_inv, **EINSUM_OPTS
    )
    s = _grad_combination(d1)
    da_s = (
        np.einsum("...ijp->...pij", d2[..., axis, :, :, :], **EINSUM_OPTS)
        + np.einsum("...jip->...pij", d2[..., axis, :, :, :], **EINSUM_OPTS)
        - d2[..., axis, :, :, :]
    )
    return 0.5 * (
        np.einsum("...mp,...pij->...mij", da_ginv, s, **EINSUM_OPTS)
        + np.einsum("...mp,...pij->...mij", g_inv, da_s, **EINSUM_OPTS)
    )


def riemann_from_parts(g: np.ndarray, Gamma: np.ndarray,
                       dGamma: np.ndarray) -> np.ndarray:
    """Lowered R_ijkl from the metric, connection, and stacked dGamma
    (dGamma has layout ... + (a, m, i, j) = d_a Gamma^m_ij)."""
    half = np.einsum("...kmlj->...mjkl", dGamma, **EINSUM_OPTS)
    half = half + np.einsum("...mkp,...plj->...mjkl", Gamma, Gamma, **EINSUM_OPTS)
    r_up = half - np.swapaxes(half, -2, -1)
    return np.einsum("...im,...mjkl->...ijkl", g, r_up, **EINSUM_OPTS)


def christoffel(gamma: TensorField, derivatives: str = "auto",
                gamma_inv: np.ndarray | None = None) -> np.ndarray:
    """Levi-Civita connection coefficients, shape grid + (k, i, j)."""
    if gamma.rank != 2 or not gamma.symmetric:
        raise ValueError("christoffel needs a symmetric rank-2 metric field")
    if gamma_inv is None:
        gamma_inv = sym2_inverse(gamma)
    d1 = metric_d1(gamma, derivatives)
    return christoffel_from_arrays(gamma_inv, d1)


def christoffel_derivative_axis(
    gamma: TensorField,
    Gamma: np.ndarray,
    axis: int,
    derivatives: str = "auto",
    gamma_inv: np.ndarray | None = None,
) -> np.ndarray:
    """d_axis Gamma^m_ij, shape grid + (m, i, j)."""
    mode = _resolve_mode(gamma, derivatives, need_d2=True)
    if mode == "fd":
        return gamma.chart.diff(Gamma, axis)
    if gamma_inv is None:
        gamma_inv = sym2_inverse(gamma)
    return christoffel_derivative_from_arrays(gamma_inv, gamma.d1, gamma.d2, axis)


def riemann(gamma: TensorField, Gamma: np.ndarray,
            derivatives: str = "auto") -> np.ndarray:
    """Lowered curvature tensor R_ijkl, shape grid + (i, j, k, l).

    Antisymmetry in the last index pair is exact by construction; the
    remaining index symmetries hold to truncation (fd) or rounding
    (analytic) error.
    """
    n = gamma.n
    dG = np.stack(
        [christoffel_derivative_axis(gamma, Gamma, a, derivatives) for a in range(n)],
        axis=-4,
    )  # grid + (a, m, i, j)
    return riemann_from_parts(gamma.data, Gamma, dG)


def ricci(riem: np.ndarray, gamma: TensorField,
          gamma_inv: np.ndarray | None = None) -> TensorField:
    """Ricci tensor by contraction of the lowered Riemann tensor."""
    if gamma_inv is None:
        gamma_inv = sym2_inverse(gamma)
    ric = np.einsum("...ik,...ijkl->...jl", gamma_inv, riem, **EINSUM_OPTS)
    return _sym2_unchecked(gamma.chart, ric)


def ricci_direct(gamma: TensorField, Gamma: np.ndarray,
                 derivatives: str = "auto",
                 gamma_inv: np.ndarray | None = None) -> TensorField:
    """Ricci without materializing the rank-4 tensor (needed on large grids)."""
    n = gamma.n
    shape = gamma.chart.shape + (n, n)
    t1 = np.zeros(shape)
    t2 = np.zeros(shape)
    for a in range(n):
        dG_a = christoffel_derivative_axis(gamma, Gamma, a, derivatives, gamma_inv)
        t1 += dG_a[..., a, :, :]  # d_k Gamma^k_{lj} accumulated over k = a
        t2[..., a, :] = np.einsum("...kkj->...j", dG_a, **EINSUM_OPTS)
    trace = np.einsum("...kkp->...p", Gamma, **EINSUM_OPTS)
    e1 = np.einsum("...p,...plj->...lj", trace, Gamma, **EINSUM_OPTS)
    e2 = np.einsum("...klp,...pkj->...lj", Gamma, Gamma, **EINSUM_OPTS)
    ric = t1 - t2 + e1 - e2
    return _sym2_unchecked(gamma.chart, ric)


def scalar(ric: TensorField, gamma: TensorField,
           gamma_inv: np.ndarray | None = None) -> TensorField:
    """Scalar curvature R = g^{jl} Ric_jl."""
    ensure_same_chart(ric, gamma)
    if gamma_inv is None:
        gamma_inv = sym2_inverse(gamma)
    return TensorField.scalar(
        gamma.chart, np.einsum("...jl,...jl->...", gamma_inv, ric.data, **EINSUM_OPTS)
    )


@dataclass
class CurvatureBundle:
    """Christoffel, Riemann, Ricci and scalar curvature of one metric.

    ``riemann`` may be None when built with keep_riemann=False (memory
    relief on large grids); every other consumer only needs Ricci.
    ``mask`` marks the grid points where the finite-difference stencils
    were fully central (everything, for analytic derivatives).
    """

    gamma: TensorField
    gamma_inv: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray | None
    ricci: TensorField
    scalar: TensorField
    derivatives: str
    mask: np.ndarray

    @property
    def chart(self) -> Chart:
        return self.gamma.chart


def curvature_bundle(gamma: TensorField, derivatives: str = "auto",
                     keep_riemann: bool = True) -> CurvatureBundle:
    mode = _resolve_mode(gamma, derivatives, need_d2=True)
    cholesky_pd(gamma)  # positive definiteness gate
    gamma_inv = np.linalg.inv(gamma.data)
    Gamma = christoffel(gamma, mode, gamma_inv)
    if keep_riemann:
        riem = riemann(gamma, Gamma, mode)
        ric = ricci(riem, gamma, gamma_inv)
    else:
        riem = None
        ric = ricci_direct(gamma, Gamma, mode, gamma_inv)
    scal = scalar(ric, gamma, gamma_inv)
    depth = 0 if mode == "analytic" else 4
    mask = gamma.chart.valid_mask(depth)
    return CurvatureBundle(gamma, gamma_inv, Gamma, riem, ric, scal, mode, mask)


# ---------------------------------------------------------------------------
# scalar field calculus

def laplacian(gamma: TensorField, f: TensorField,
              Gamma: np.ndarray | None = None,
              gamma_inv: np.ndarray | None = None) -> TensorField:
    """Laplace-Beltrami: g^{ij} (d_i d_j f - Gamma^k_ij d_k f)."""
    chart = ensure_same_chart(gamma, f)
    if f.rank != 0:
        raise ValueError("laplacian acts on scalar fields")
    if gamma_inv is None:
        gamma_inv = sym2_inverse(gamma)
    if Gamma is None:
        Gamma = christoffel(gamma, gamma_inv=gamma_inv)
    n = chart.n
    df = np.stack([chart.diff(f.data, a) for a in range(n)], axis=-1)
    hess = np.empty(chart.shape + (n, n))
    for a in range(n):
        for b in range(a, n):
            hess[..., a, b] = chart.diff2(f.data, a, b)
            hess[..., b, a] = hess[..., a, b]
    corr = np.einsum("...kij,...k->...ij", Gamma, df, **EINSUM_OPTS)
    out = np.einsum("...ij,...ij->...", gamma_inv, hess - corr, **EINSUM_OPTS)
    return TensorField.scalar(chart, out)


def grad_norm_sq(gamma: TensorField, f: TensorField,
                 gamma_inv: np.ndarray | None = None) -> TensorField:
    """|df|^2 = g^{ij} d_i f d_j f."""
    chart = ensure_same_chart(gamma, f)
    if f.rank != 0:
        raise ValueError("grad_norm_sq acts on scalar fields")
    if gamma_inv is None:
        gamma_inv = sym2_inverse(gamma)
    df = np.stack([chart.diff(f.data, a) for a in range(chart.n)], axis=-1)
    out = np.einsum("...ij,...i,...j->...", gamma_inv, df, df, **EINSUM_OPTS)
    return TensorField.scalar(chart, out)


def covariant_derivative_sym2(gamma: TensorField, Gamma: np.ndarray,
                              t: TensorField) -> np.ndarray:
    """nabla_k T_ij for symmetric rank-2 T, shape grid + (k, i, j)."""
    chart = ensure_same_chart(gamma, t)
    n = chart.n
    dt = np.stack([chart.diff(t.data, a) for a in range(n)], axis=-3)
    corr_i = np.einsum("...lki,...lj->...kij", Gamma, t.data, **EINSUM_OPTS)
    corr_j = np.einsum("...lkj,...il->...kij", Gamma, t.data, **EINSUM_OPTS)
    return dt - corr_i - corr_j


# ---------------------------------------------------------------------------
# invariant residuals (diagnostics used by tests and the verify command)

def _masked_max(arr: np.ndarray, mask: np.ndarray) -> float:
    flat = arr.reshape(mask.shape + (-1,))
    return float(np.max(np.abs(flat[mask])))


def riemann_symmetry_residuals(bundle: CurvatureBundle) -> dict[str, float]:
    """Max violations of the index symmetries and the first Bianchi identity."""
    riem = bundle.riemann
    if riem is None:
        raise ValueError("bundle was built without the Riemann tensor")
    mask = bundle.mask
    anti_ij = riem + np.einsum("...ijkl->...jikl", riem)
    anti_kl = riem + np.einsum("...ijkl->...ijlk", riem)
    pair = riem - np.einsum("...ijkl->...klij", riem)
    bianchi = (
        riem
        + np.einsum("...ijkl->...iklj", riem)
        + np.einsum("...ijkl->...iljk", riem)
    )
    return {
        "antisymmetry_first_pair": _masked_max(anti_ij, mask),
        "antisymmetry_second_pair": _masked_max(anti_kl, mask),
        "pair_interchange": _masked_max(pair, mask),
        "first_bianchi": _masked_max(bianchi, mask),
    }


def ricci_trace_residual(bundle: CurvatureBundle) -> float:
    """sup |g^{ij} Ric_ij - R| (zero by construction; guards refactors)."""
    contracted = np.einsum(
        "...ij,...ij->...", bundle.gamma_inv, bundle.ricci.data, **EINSUM_OPTS
    )
    return _masked_max(contracted - bundle.scalar.data, bundle.mask)
