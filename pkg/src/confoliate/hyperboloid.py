"""Hypersurfaces of hyperbolic space realized inside Minkowski spacetime.

Vectors carry components (x1, x2, x3, t) with inner product
<u, v> = x_u . x_v - t_u t_v.  The hyperboloid is <p, p> = -1, t > 0; unit
normals of immersed surfaces live on <v, v> = +1; the map psi = phi + eta
lands on the forward null cone and pulls the ambient metric back to the
horospherical metric of the surface.

Closed surfaces are sampled on a latitude-longitude grid with a half-cell
offset in theta (no pole samples).  Derivatives are spectral: plain FFT
along the periodic longitude, and FFT after the standard sphere doubling
(theta -> 2 pi - theta, phi -> phi + pi) along latitude, so smooth
immersions differentiate to rounding accuracy.  Non-closed test surfaces
(a strip around a totally geodesic plane) use FFT along the periodic
angle and one-dimensional high-order differences along the open axis.

Sign conventions follow the second fundamental form II = -1/2 L_N g: a
geodesic sphere at distance d from the vertex has kappa = -coth(d) for
the outward normal and +coth(d) for the inward one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fields import cholesky_pd, fornberg_weights, generalized_symmetric_eig


def minkowski_dot(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.einsum("...i,...i->...", u[..., :3], v[..., :3]) - u[..., 3] * v[..., 3]


def _fft_diff(arr: np.ndarray, axis: int, period: float) -> np.ndarray:
    n = arr.shape[axis]
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    if n % 2 == 0:
        freqs[n // 2] = 0.0  # drop the unpaired Nyquist mode
    k = 2.0j * np.pi * freqs / period
    shape = [1] * arr.ndim
    shape[axis] = n
    spectrum = np.fft.fft(arr, axis=axis)
    return np.real(np.fft.ifft(k.reshape(shape) * spectrum, axis=axis))


@dataclass(frozen=True)
class SphereGrid:
    """Latitude-longitude parameter grid: theta_i = (i + 1/2) pi / n_theta,
    phi_j = 2 pi j / n_phi (n_phi even)."""

    n_theta: int = 64
    n_phi: int = 64

    def __post_init__(self):
        if self.n_phi % 2 != 0:
            raise ValueError("n_phi must be even (the pole doubling shifts by pi)")
        if self.n_theta < 8 or self.n_phi < 8:
            raise ValueError("grid too coarse")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def theta(self) -> np.ndarray:
        return (np.arange(self.n_theta) + 0.5) * np.pi / self.n_theta

    @property
    def phi(self) -> np.ndarray:
        return np.arange(self.n_phi) * 2.0 * np.pi / self.n_phi

    def directions(self) -> np.ndarray:
        """Unit sphere points omega(theta, phi), shape (n_theta, n_phi, 3)."""
        th = self.theta[:, None]
        ph = self.phi[None, :]
        return np.stack(
            [
                np.sin(th) * np.cos(ph),
                np.sin(th) * np.sin(ph),
                np.broadcast_to(np.cos(th), (self.n_theta, self.n_phi)),
            ],
            axis=-1,
        )

    def diff(self, arr: np.ndarray, axis: int) -> np.ndarray:
        if axis == 1:
            return _fft_diff(arr, 1, 2.0 * np.pi)
        # double across the pole: F(2pi - theta, phi + pi) = F(theta, phi)
        mirrored = np.roll(arr[::-1], self.n_phi // 2, axis=1)
        extended = np.concatenate([arr, mirrored], axis=0)
        return _fft_diff(extended, 0, 2.0 * np.pi)[: self.n_theta]

    def valid_mask(self) -> np.ndarray:
        return np.ones(self.shape, dtype=bool)

    def round_metric(self) -> np.ndarray:
        """Standard round metric in these coordinates: diag(1, sin^2 theta)."""
        g = np.zeros(self.shape + (2, 2))
        g[..., 0, 0] = 1.0
        g[..., 1, 1] = np.sin(self.theta)[:, None] ** 2
        return g


@dataclass(frozen=True)
class StripGrid:
    """Periodic angle x open radial band: used for non-closed test surfaces."""

    s_lo: float
    s_hi: float
    n_s: int = 48
    n_b: int = 64

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_s, self.n_b)

    @property
    def s(self) -> np.ndarray:
        return np.linspace(self.s_lo, self.s_hi, self.n_s)

    @property
    def b(self) -> np.ndarray:
        return np.arange(self.n_b) * 2.0 * np.pi / self.n_b

    def diff(self, arr: np.ndarray, axis: int) -> np.ndarray:
        if axis == 1:
            return _fft_diff(arr, 1, 2.0 * np.pi)
        h = self.s[1] - self.s[0]
        out = np.empty_like(arr)
        npts = 9  # 8th-order central
        w = fornberg_weights(0.0, np.arange(-4, 5, dtype=float), 1)[1]
        acc = sum(w[j] * arr[j : arr.shape[0] - (8 - j)] for j in range(npts))
        out[4:-4] = acc / h
        for edge in range(4):
            we = fornberg_weights(float(edge), np.arange(npts, dtype=float), 1)[1]
            out[edge] = sum(we[j] * arr[j] for j in range(npts)) / h
            wr = fornberg_weights(float(npts - 1 - edge), np.arange(npts, dtype=float), 1)[1]
            out[-1 - edge] = sum(wr[j] * arr[arr.shape[0] - npts + j] for j in range(npts)) / h
        return out

    def valid_mask(self) -> np.ndarray:
        mask = np.ones(self.shape, dtype=bool)
        mask[:4] = False
        mask[-4:] = False
        return mask


@dataclass
class Immersion:
    """Sampled surface in the hyperboloid with its de Sitter unit normal.

    Invariants (validated at construction): <phi, phi> = -1 with t > 0,
    <eta, eta> = 1, <eta, phi> = 0, and <eta, dphi> = 0.
    """

    grid: SphereGrid | StripGrid
    phi: np.ndarray  # shape grid + (4,)
    eta: np.ndarray
    orientation: str  # "outward" | "inward"
    dphi: np.ndarray = field(default=None, repr=False)  # grid + (2, 4)

    def __post_init__(self):
        if self.orientation not in ("outward", "inward"):
            raise ValueError("orientation must be outward or inward")
        if self.dphi is None:
            self.dphi = np.stack(
                [self.grid.diff(self.phi, a) for a in range(2)], axis=-2
            )
        norm_phi = minkowski_dot(self.phi, self.phi)
        if np.max(np.abs(norm_phi + 1.0)) > 1e-12 or np.min(self.phi[..., 3]) <= 0:
            raise ValueError("phi does not take values in the upper hyperboloid")
        mask = self.grid.valid_mask()
        checks = {
            "<eta,eta>-1": minkowski_dot(self.eta, self.eta) - 1.0,
            "<eta,phi>": minkowski_dot(self.eta, self.phi),
            "<eta,dphi_theta>": minkowski_dot(self.eta, self.dphi[..., 0, :]),
            "<eta,dphi_phi>": minkowski_dot(self.eta, self.dphi[..., 1, :]),
        }
        for name, vals in checks.items():
            worst = float(np.max(np.abs(vals[mask])))
            if worst > 1e-10:
                raise ValueError(f"normal map invalid: |{name}| = {worst:.3e}")

    @property
    def deta(self) -> np.ndarray:
        return np.stack([self.grid.diff(self.eta, a) for a in range(2)], axis=-2)


def _solve_normal(phi: np.ndarray, dphi: np.ndarray, orientation: str) -> np.ndarray:
    """Unit spacelike normal from the linear system <eta, phi> = 0,
    <eta, d_a phi> = 0, <eta, eta> = 1, sign fixed by the orientation flag
    (outward normals have positive t-component: hyperbolic distance from
    the vertex grows with t)."""
    minkowski = np.diag([1.0, 1.0, 1.0, -1.0])
    rows = np.stack([phi, dphi[..., 0, :], dphi[..., 1, :]], axis=-2) @ minkowski
    _, svals, vt = np.linalg.svd(rows)
    eta = vt[..., -1, :]
    if np.min(svals[..., -2] - svals[..., -1]) <= 0:
        raise ValueError("tangent system is degenerate; not an immersion")
    norms = minkowski_dot(eta, eta)
    if np.min(norms) <= 0:
        raise ValueError("normal direction is not spacelike")
    eta = eta / np.sqrt(norms)[..., None]
    t_comp = eta[..., 3]
    ambiguous = np.abs(t_comp) <= 1e-9
    sign_ref = np.where(ambiguous, 1.0, np.sign(t_comp))
    if np.any(ambiguous):
        # t-component vanishes (e.g. a surface through the vertex): both
        # sides are geometrically equivalent, but the SVD sign is arbitrary
        # per point, so pick one coherent side via the spatial component
        # that stays farthest from zero on the ambiguous set.
        spatial = eta[..., :3][ambiguous]
        axis = int(np.argmax(np.min(np.abs(spatial), axis=0)))
        if np.min(np.abs(spatial[:, axis])) <= 1e-9:
            raise ValueError(
                "cannot orient the normal coherently; supply eta explicitly"
            )
        sign_ref = sign_ref.copy()
        sign_ref[ambiguous] = np.sign(spatial[:, axis])
    eta = eta * sign_ref[..., None]
    if orientation == "inward":
        eta = -eta
    return eta


def from_positions(grid, phi: np.ndarray, orientation: str = "outward") -> Immersion:
    """Build an immersion from position samples alone (normal via the
    pointwise orthogonality system)."""
    dphi = np.stack([grid.diff(phi, a) for a in range(2)], axis=-2)
    eta = _solve_normal(phi, dphi, orientation)
    return Immersion(grid, phi, eta, orientation, dphi)


def geodesic_sphere(d: float, grid: SphereGrid | None = None,
                    orientation: str = "outward") -> Immersion:
    """Distance sphere around the vertex: phi = (sinh(d) w, cosh(d)),
    outward normal (cosh(d) w, sinh(d))."""
    if d <= 0:
        raise ValueError("geodesic sphere needs d > 0")
    grid = grid or SphereGrid()
    omega = grid.directions()
    phi = np.concatenate(
        [np.sinh(d) * omega, np.full(grid.shape + (1,), np.cosh(d))], axis=-1
    )
    eta = np.concatenate(
        [np.cosh(d) * omega, np.full(grid.shape + (1,), np.sinh(d))], axis=-1
    )
    if orientation == "inward":
        eta = -eta
    return Immersion(grid, phi, eta, orientation)


def radial_graph(grid: SphereGrid, rho: np.ndarray,
                 orientation: str = "outward") -> Immersion:
    """Surface phi = (sinh(rho) w, cosh(rho)) for per-point radius rho."""
    rho = np.asarray(rho, dtype=float)
    omega = grid.directions()
    phi = np.concatenate(
        [np.sinh(rho)[..., None] * omega, np.cosh(rho)[..., None]], axis=-1
    )
    return from_positions(grid, phi, orientation)


def totally_geodesic_plane(grid: StripGrid | None = None,
                           orientation: str = "outward") -> Immersion:
    """A band of the totally geodesic plane x3 = 0, polar-parameterized."""
    grid = grid or StripGrid(0.3, 1.8)
    s = grid.s[:, None]
    b = grid.b[None, :]
    shape = grid.shape
    phi = np.stack(
        [
            np.broadcast_to(np.sinh(s) * np.cos(b), shape),
            np.broadcast_to(np.sinh(s) * np.sin(b), shape),
            np.zeros(shape),
            np.broadcast_to(np.cosh(s), shape),
        ],
        axis=-1,
    )
    return from_positions(grid, phi, orientation)


def lightcone_map(imm: Immersion) -> np.ndarray:
    """psi = phi + eta on the forward null cone."""
    psi = imm.phi + imm.eta
    if np.min(psi[..., 3]) <= 0.0:
        raise ValueError(
            "light-cone map left the forward cone; flip the orientation"
        )
    null_defect = float(np.max(np.abs(minkowski_dot(psi, psi))))
    scale = float(np.max(psi[..., 3]) ** 2)
    if null_defect > 1e-10 * max(1.0, scale):
        raise ValueError(f"light-cone map not null: defect {null_defect:.3e}")
    return psi


def _mink_gram(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise Minkowski products of two derivative stacks (..., 2, 4)."""
    return np.einsum("...af,...bf->...ab", a[..., :3], b[..., :3]) \
        - a[..., :, 3, None] * b[..., None, :, 3]


def fundamental_forms(imm: Immersion):
    """(I, II, III) in parameter coordinates; II uses the -1/2 Lie
    derivative convention (ambient form -<d eta, d phi> symmetrized)."""
    dphi, deta = imm.dphi, imm.deta
    first = _mink_gram(dphi, dphi)
    cross = _mink_gram(deta, dphi)
    second = -0.5 * (cross + np.swapaxes(cross, -1, -2))
    third = _mink_gram(deta, deta)
    return first, second, third


@dataclass
class PullbackResult:
    metric: np.ndarray  # grid + (2, 2)
    degenerate: np.ndarray  # bool per point
    flagged: bool


def horospherical_pullback(imm: Immersion, tol: float = 1e-3) -> PullbackResult:
    """psi^* g_L by spectral differentiation of the light-cone map.

    Degeneracy is judged against the first fundamental form: the
    generalized eigenvalues of the pullback relative to I are (1-kappa_i)^2,
    so a point with one of them below ``tol`` has a principal curvature
    within sqrt(tol) of 1, i.e. the surface fails horospherical convexity
    there and the Gauss map stops being an immersion.
    """
    psi = lightcone_map(imm)
    dpsi = np.stack([imm.grid.diff(psi, a) for a in range(2)], axis=-2)
    h = _mink_gram(dpsi, dpsi)
    first = _mink_gram(imm.dphi, imm.dphi)
    rel_eigs, _ = generalized_symmetric_eig(h, np.linalg.cholesky(first))
    degenerate = rel_eigs[..., 0] <= tol
    mask = imm.grid.valid_mask()
    return PullbackResult(h, degenerate, bool(np.any(degenerate[mask])))


def principal_curvatures_ambient(imm: Immersion) -> np.ndarray:
    """kappa_i (ascending) from the generalized problem II v = kappa I v."""
    first, second, third = fundamental_forms(imm)
    del third
    chol = np.linalg.cholesky(first)
    kappa, _ = generalized_symmetric_eig(second, chol)
    return kappa


def is_horospherically_convex(kappa: np.ndarray) -> np.ndarray:
    """True where all kappa_i < 1 or all kappa_i > 1."""
    below = np.all(kappa < 1.0, axis=-1)
    above = np.all(kappa > 1.0, axis=-1)
    return below | above


def geodesic_defining_function(x_norm) -> np.ndarray:
    """r = 2 e^{-d} = 2 / (|x| + sqrt(1 + |x|^2)) for hyperboloid radius |x|."""
    x_norm = np.asarray(x_norm, dtype=float)
    return 2.0 / (x_norm + np.sqrt(1.0 + x_norm * x_norm))
