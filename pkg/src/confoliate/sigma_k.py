"""Elementary symmetric functions of the spectrum, Garding-cone
membership, and the foliation functionals built from the level-set
principal curvatures.

With kappa_i = -(1 + u_i)/(1 - u_i) and u_i = (r^2/2) lambda_i, the ratio
(1 + kappa_i)/(1 - kappa_i) collapses to -u_i, so the degree-k functional

    F_k = sum_{i1<...<ik} prod_j (1 + kappa_{ij})/(1 - kappa_{ij})

equals (-r^2/2)^k sigma_k(lambda) pointwise.  On data normalized to
sigma_k(lambda) = 1 its magnitude is (r^2/2)^k while its sign alternates
as (-1)^k; both are reported separately because the two conventions
differ by exactly that sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conformal import SpectralField
from .normal_form import LevelSetGeometry, curvature_radii
from .tensor_core import CurvatureBundle


def sigma(lam: np.ndarray, k: int) -> np.ndarray:
    """k-th elementary symmetric polynomial of the last axis of ``lam``.

    Evaluated through the coefficient recurrence for prod_i (x + lam_i),
    which is numerically stable and O(n k) per point.  sigma_0 is 1.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"k must lie in 0..{n}, got {k}")
    coeffs = np.zeros(lam.shape[:-1] + (k + 1,))
    coeffs[..., 0] = 1.0
    for i in range(n):
        top = min(i + 1, k)
        for j in range(top, 0, -1):
            coeffs[..., j] += lam[..., i] * coeffs[..., j - 1]
    return coeffs[..., k]


def in_gamma_k(lam: np.ndarray, k: int) -> np.ndarray:
    """Membership in the cone Gamma_k: sigma_1 > 0, ..., sigma_k > 0.

    This positivity characterization matches the connected-component
    definition (the component of {sigma_k > 0} containing the positive
    cone); the test suite cross-checks it against a segment-path oracle.
    """
    lam = np.asarray(lam, dtype=float)
    n = lam.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in 1..{n}, got {k}")
    ok = np.ones(lam.shape[:-1], dtype=bool)
    for j in range(1, k + 1):
        ok &= sigma(lam, j) > 0.0
    return ok


def scalar_correspondence_residual(spectral: SpectralField,
                                   geom: LevelSetGeometry,
                                   bundle: CurvatureBundle,
                                   r: float) -> np.ndarray:
    """| R - (4(n-1)/r^2) (n - sum_i rho_i) | per point, radii from the
    level-set eigenproblem path."""
    n = spectral.n
    radii = curvature_radii(geom)
    rhs = (4.0 * (n - 1.0) / (r * r)) * (n - radii.sum(axis=-1))
    return np.abs(bundle.scalar.data - rhs)


def mean_radii_check(spectral: SpectralField, geom: LevelSetGeometry,
                     mean_scalar: float, r: float,
                     tol: float = 1e-6) -> float:
    """Residual of the constant-scalar-curvature foliation formula

        (1/n) sum_i 2/(1 - kappa_i) = 1 - r^2 S / (4 n (n-1)).

    ``mean_scalar`` is the constant value S the input metric is supposed
    to carry; if the pointwise scalar curvature implied by the spectrum
    (2(n-1) sigma_1(lambda)) strays from S by more than 10x tol the input
    is rejected as misuse.
    """
    n = spectral.n
    pointwise_r = 2.0 * (n - 1.0) * sigma(spectral.eigenvalues, 1)
    stray = float(np.max(np.abs(pointwise_r - mean_scalar)))
    if stray > 10.0 * tol * max(1.0, abs(mean_scalar)):
        raise ValueError(
            f"scalar curvature varies by {stray:.3e}; the formula applies to "
            "constant-scalar-curvature representatives"
        )
    radii = curvature_radii(geom)
    mean_radii = radii.mean(axis=-1)
    target = 1.0 - r * r * mean_scalar / (4.0 * n * (n - 1.0))
    return float(np.max(np.abs(mean_radii - target)))


@dataclass
class FoliationFunctional:
    """Per-point value of F_k with its magnitude gap and sign."""

    k: int
    r: float
    value: np.ndarray
    magnitude_gap: np.ndarray  # |F_k| - (r^2/2)^k
    sign: np.ndarray


def foliation_functional(geom: LevelSetGeometry, k: int,
                         r: float | None = None) -> FoliationFunctional:
    """F_k = sigma_k of the ratios (1 + kappa_i)/(1 - kappa_i)."""
    if geom.kappa is None:
        raise ValueError("run weingarten first: the functional needs kappa")
    r = geom.r if r is None else r
    denom = 1.0 - geom.kappa
    if np.min(np.abs(denom)) < 1e-12:
        raise ZeroDivisionError("1 - kappa_i vanishes; functional undefined")
    ratios = (1.0 + geom.kappa) / denom
    value = sigma(ratios, k)
    gap = np.abs(value) - (0.5 * r * r) ** k
    return FoliationFunctional(k, r, value, gap, np.sign(value))


def normalize_sigma_k(gamma, spectral: SpectralField, k: int,
                      tol: float = 1e-8) -> float:
    """Constant rescale c with sigma_k = 1 for c^2 gamma.

    The eigenvalues of P relative to c^2 gamma are lambda / c^2, so
    c^2 = sigma_k(lambda)^{1/k}.  Only homogeneous inputs qualify:
    sigma_k must be constant over the chart and the spectrum must lie in
    Gamma_k everywhere.
    """
    lam = spectral.eigenvalues
    if not np.all(in_gamma_k(lam, k)):
        raise ValueError(f"spectrum leaves Gamma_{k}; normalization undefined")
    values = sigma(lam, k)
    mean = float(values.mean())
    if float(np.max(np.abs(values - mean))) > tol * max(1.0, abs(mean)):
        raise ValueError(
            f"sigma_{k} varies over the chart; only homogeneous inputs "
            "are supported"
        )
    c_sq = mean ** (1.0 / k)
    return float(np.sqrt(c_sq))
