"""Schouten tensor, its spectrum relative to the metric, conformal
rescaling of scalar curvature, and a normalized constant-scalar-curvature
(Yamabe) flow.

For n >= 3 the trace-adjusted Ricci tensor

    P = (Ric - R/(2(n-1)) gamma) / (n-2)

drives everything downstream: its eigenvalues lambda_i relative to gamma
(generalized symmetric eigenproblem via Cholesky reduction) are the
quantities the level-set foliation modules consume.  In n = 2 the tensor
is not determined by the metric; ``check_p2`` reports how far a
user-supplied candidate is from the two constraints it must satisfy
(trace = R/2 and divergence = dR).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import (
    TensorField,
    cholesky_pd,
    ensure_same_chart,
    generalized_symmetric_eig,
    sym2_inverse,
)
from .tensor_core import (
    EINSUM_OPTS,
    CurvatureBundle,
    covariant_derivative_sym2,
    grad_norm_sq,
    laplacian,
)


class FlowInstabilityError(RuntimeError):
    """Residual blew up during the flow; the step size is too large."""


@dataclass
class SpectralField:
    """Per-point eigenvalues (ascending) and gamma-orthonormal eigenframe
    of P relative to gamma: P v_i = lambda_i gamma v_i, V^T gamma V = I."""

    chart: object
    eigenvalues: np.ndarray  # grid + (n,)
    frame: np.ndarray  # grid + (n, n), columns are eigenvectors

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[-1]


@dataclass
class ConformalFactor:
    """Scalar field phi defining the conformal metric e^{2 phi} gamma."""

    phi: TensorField

    def __post_init__(self):
        if self.phi.rank != 0:
            raise ValueError("conformal factor must be a scalar field")
        if not np.all(np.isfinite(self.phi.data)):
            raise ValueError("conformal factor must be finite everywhere")


def schouten(gamma: TensorField, bundle: CurvatureBundle) -> TensorField:
    """P = (Ric - R/(2(n-1)) gamma) / (n-2); requires n >= 3."""
    ensure_same_chart(gamma, bundle.gamma)
    n = gamma.n
    if n < 3:
        raise ValueError(
            "the trace adjustment is singular for n = 2; supply P directly "
            "and validate it with check_p2"
        )
    ric = bundle.ricci.data
    r = bundle.scalar.data[..., None, None]
    p = (ric - r / (2.0 * (n - 1.0)) * gamma.data) / (n - 2.0)
    return TensorField(gamma.chart, 2, 0.5 * (p + np.swapaxes(p, -1, -2)),
                       symmetric=True)


def check_p2(gamma: TensorField, p: TensorField,
             bundle: CurvatureBundle) -> tuple[float, float]:
    """Residuals of the n = 2 constraints on a candidate P.

    Returns (sup |tr_gamma P - R/2|, sup |gamma^{jk} nabla_k P_ij - dR_i|)
    over the stencil-valid region.  Both vanish for an admissible P.
    """
    chart = ensure_same_chart(gamma, p, bundle.gamma)
    if gamma.n != 2:
        raise ValueError("check_p2 applies to 2-dimensional charts")
    gamma_inv = bundle.gamma_inv
    trace = np.einsum("...ij,...ij->...", gamma_inv, p.data, **EINSUM_OPTS)
    trace_res = trace - 0.5 * bundle.scalar.data
    grad_p = covariant_derivative_sym2(gamma, bundle.christoffel, p)
    divergence = np.einsum("...jk,...kij->...i", gamma_inv, grad_p, **EINSUM_OPTS)
    d_scal = np.stack(
        [chart.diff(bundle.scalar.data, a) for a in range(chart.n)], axis=-1
    )
    div_res = divergence - d_scal
    mask = chart.valid_mask(6)  # curvature depth 4 plus one more derivative
    return (
        float(np.max(np.abs(trace_res[mask]))),
        float(np.max(np.abs(div_res[mask]))),
    )


def q_tensor(gamma: TensorField, p: TensorField) -> TensorField:
    """Q_ij = gamma^{kl} P_ik P_jl (positive semidefinite).

    When both inputs carry sampled analytic derivatives, the product/inverse
    rules propagate them onto Q, keeping downstream bulk-curvature checks
    free of tangential truncation error.
    """
    ensure_same_chart(gamma, p)
    gamma_inv = sym2_inverse(gamma)
    q = np.einsum("...kl,...ik,...jl->...ij", gamma_inv, p.data, p.data,
                  **EINSUM_OPTS)
    d1 = d2 = None
    if gamma.d1 is not None and p.d1 is not None:
        d1, d2 = _q_derivatives(gamma, p, gamma_inv)
    return TensorField(gamma.chart, 2, 0.5 * (q + np.swapaxes(q, -1, -2)),
                       symmetric=True, d1=d1, d2=d2)


def _inv_derivatives(gamma: TensorField, gamma_inv: np.ndarray):
    """d1/d2 arrays of the inverse metric via d(M^-1) = -M^-1 dM M^-1."""
    mm = lambda a, b: np.einsum("...ij,...jk->...ik", a, b, **EINSUM_OPTS)
    n = gamma.n
    d1g, d2g = gamma.d1, gamma.d2
    dinv = np.stack(
        [-mm(mm(gamma_inv, d1g[..., a, :, :]), gamma_inv) for a in range(n)],
        axis=-3,
    )
    d2inv = None
    if d2g is not None:
        d2inv = np.empty(gamma.chart.shape + (n, n, n, n))
        for a in range(n):
            for b in range(n):
                term = mm(mm(dinv[..., b, :, :], d1g[..., a, :, :]), gamma_inv)
                term = term + mm(mm(gamma_inv, d2g[..., a, b, :, :]), gamma_inv)
                term = term + mm(mm(gamma_inv, d1g[..., a, :, :]), dinv[..., b, :, :])
                d2inv[..., a, b, :, :] = -term
    return dinv, d2inv


def _q_derivatives(gamma: TensorField, p: TensorField, gamma_inv: np.ndarray):
    """Product-rule d1/d2 of Q = P gamma^{-1} P."""
    mm = lambda a, b: np.einsum("...ij,...jk->...ik", a, b, **EINSUM_OPTS)
    n = gamma.n
    pd = p.data
    dinv, d2inv = _inv_derivatives(gamma, gamma_inv)
    dp, d2p = p.d1, p.d2

    def dq(a):
        return (
            mm(mm(dp[..., a, :, :], gamma_inv), pd)
            + mm(mm(pd, dinv[..., a, :, :]), pd)
            + mm(mm(pd, gamma_inv), dp[..., a, :, :])
        )

    d1 = np.stack([dq(a) for a in range(n)], axis=-3)
    d2 = None
    if d2p is not None and d2inv is not None:
        d2 = np.empty(gamma.chart.shape + (n, n, n, n))
        for a in range(n):
            pa, ma = dp[..., a, :, :], dinv[..., a, :, :]
            for b in range(n):
                pb, mb = dp[..., b, :, :], dinv[..., b, :, :]
                acc = mm(mm(d2p[..., a, b, :, :], gamma_inv), pd)
                acc = acc + mm(mm(pa, mb), pd) + mm(mm(pa, gamma_inv), pb)
                acc = acc + mm(mm(pb, ma), pd) + mm(mm(pd, d2inv[..., a, b, :, :]), pd)
                acc = acc + mm(mm(pd, ma), pb)
                acc = acc + mm(mm(pb, gamma_inv), pa) + mm(mm(pd, mb), pa)
                acc = acc + mm(mm(pd, gamma_inv), d2p[..., a, b, :, :])
                d2[..., a, b, :, :] = acc
    return d1, d2


def eigen_rel(gamma: TensorField, p: TensorField) -> SpectralField:
    """Eigenvalues/eigenvectors of P relative to gamma, ascending."""
    ensure_same_chart(gamma, p)
    chol = cholesky_pd(gamma)
    eigvals, frame = generalized_symmetric_eig(p.data, chol)
    return SpectralField(gamma.chart, eigvals, frame)


def conformal_metric(gamma: TensorField, phi: ConformalFactor) -> TensorField:
    """The rescaled metric e^{2 phi} gamma as a plain sampled field."""
    ensure_same_chart(gamma, phi.phi)
    weight = np.exp(2.0 * phi.phi.data)[..., None, None]
    return TensorField(gamma.chart, 2, weight * gamma.data, symmetric=True)


def conformal_scalar(gamma: TensorField, bundle: CurvatureBundle,
                     phi: ConformalFactor) -> TensorField:
    """Scalar curvature of e^{2 phi} gamma:

    R~ = e^{-2 phi} (R - 2(n-1) Lap phi - (n-1)(n-2) |grad phi|^2).
    """
    chart = ensure_same_chart(gamma, bundle.gamma, phi.phi)
    n = chart.n
    lap = laplacian(gamma, phi.phi, bundle.christoffel, bundle.gamma_inv).data
    grad2 = grad_norm_sq(gamma, phi.phi, bundle.gamma_inv).data
    r = bundle.scalar.data
    out = np.exp(-2.0 * phi.phi.data) * (
        r - 2.0 * (n - 1.0) * lap - (n - 1.0) * (n - 2.0) * grad2
    )
    return TensorField.scalar(chart, out)


# ---------------------------------------------------------------------------
# Yamabe flow

@dataclass
class FlowConfig:
    """Explicit-Euler flow controls.

    dt_factor scales the squared minimum grid spacing.  The 4th-order
    Laplacian stencil bounds the stable step at 3 h^2 / (16 n (n-1));
    for n = 3 that is h^2/32, so the default 0.02 h^2 sits at ~64% of the
    bound.
    """

    max_steps: int = 5000
    dt_factor: float = 0.02
    tol: float = 1e-4


@dataclass
class FlowReport:
    converged: bool
    steps: int
    residuals: np.ndarray  # sup |R~ - Rbar| / max(1, |Rbar|) per step
    means: np.ndarray  # volume-weighted mean of R~ per step
    volume_drifts: np.ndarray  # relative volume change per step
    dt: float
    message: str = ""

    def monotone_after(self, step: int, slack: float = 0.0) -> bool:
        """True when the residual history never increases past ``step``."""
        tail = self.residuals[step:]
        if tail.size < 2:
            return True
        return bool(np.all(np.diff(tail) <= slack))

    def history_rows(self):
        for k in range(self.steps + 1):
            yield k, float(self.residuals[k]), float(self.means[k])


def yamabe_flow(gamma: TensorField, bundle: CurvatureBundle,
                config: FlowConfig | None = None,
                phi0: TensorField | None = None) -> tuple[ConformalFactor, FlowReport]:
    """Drive e^{2 phi} gamma toward constant scalar curvature.

    Normalized explicit-Euler flow d phi/dt = Rbar - R~ with Rbar the
    e^{2 phi} gamma volume-weighted mean of R~; the normalization keeps the
    total conformal volume fixed up to O(dt^2) per step.  Terminates when
    sup |R~ - Rbar| / max(1, |Rbar|) < tol.  Non-convergence at max_steps
    returns a flagged report; a residual that grows past ten times its
    running minimum raises FlowInstabilityError.
    """
    chart = ensure_same_chart(gamma, bundle.gamma)
    if chart.n < 3:
        raise ValueError("the flow requires n >= 3")
    config = config or FlowConfig()
    n = chart.n
    h_min = min(chart.spacings)
    dt = config.dt_factor * h_min * h_min

    sqrt_det = np.sqrt(np.linalg.det(gamma.data))
    phi = np.zeros(chart.shape) if phi0 is None else phi0.data.copy()

    residuals, means, drifts = [], [], []
    volume_prev = None
    running_min = np.inf
    converged = False
    message = ""
    step = 0
    for step in range(config.max_steps + 1):
        factor = ConformalFactor(TensorField.scalar(chart, phi))
        r_tilde = conformal_scalar(gamma, bundle, factor).data
        weights = np.exp(n * phi) * sqrt_det
        volume = float(np.sum(weights))
        r_bar = float(np.sum(r_tilde * weights) / volume)
        residual = float(np.max(np.abs(r_tilde - r_bar)) / max(1.0, abs(r_bar)))

        residuals.append(residual)
        means.append(r_bar)
        drifts.append(0.0 if volume_prev is None
                      else abs(volume - volume_prev) / volume_prev)
        volume_prev = volume

        if residual < config.tol:
            converged = True
            break
        running_min = min(running_min, residual)
        if residual > 10.0 * running_min and np.isfinite(running_min):
            raise FlowInstabilityError(
                f"residual {residual:.3e} exceeds 10x its running minimum "
                f"{running_min:.3e} at step {step}; reduce dt_factor "
                f"(current dt = {dt:.3e})"
            )
        if step == config.max_steps:
            message = f"no convergence within {config.max_steps} steps"
            break
        phi = phi + dt * (r_bar - r_tilde)

    report = FlowReport(
        converged=converged,
        steps=step,
        residuals=np.asarray(residuals),
        means=np.asarray(means),
        volume_drifts=np.asarray(drifts),
        dt=dt,
        message=message,
    )
    return ConformalFactor(TensorField.scalar(chart, phi)), report
