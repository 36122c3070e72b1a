"""confoliate: hyperbolic normal-form metrics, level-set foliations, and
curvature-radii spectra near conformal infinity."""

from .conformal import (
    ConformalFactor,
    FlowConfig,
    FlowInstabilityError,
    FlowReport,
    SpectralField,
    check_p2,
    conformal_metric,
    conformal_scalar,
    eigen_rel,
    q_tensor,
    schouten,
    yamabe_flow,
)
from .expressions import ExpressionError, evaluate, parse_expression, to_text
from .fields import Chart, ChartMismatchError, TensorField
from .hyperboloid import (
    Immersion,
    SphereGrid,
    StripGrid,
    geodesic_defining_function,
    geodesic_sphere,
    horospherical_pullback,
    is_horospherically_convex,
    lightcone_map,
    minkowski_dot,
    principal_curvatures_ambient,
    radial_graph,
    totally_geodesic_plane,
)
from .metric_spec import (
    MetricSpec,
    SpecError,
    builtin_spec,
    load_spec,
    materialize,
    spec_from_dict,
)
from .normal_form import (
    FGExpansion,
    FoliationRangeError,
    LevelSetGeometry,
    ambient_expansion_check,
    build_expansion,
    bulk_curvature_residual,
    curvature_radii,
    fundamental_forms,
    horospherical_metric,
    kappa_closed_form,
    key_identity_residual,
    level_set_geometry,
    tangential_decomposition_residual,
    weingarten,
)
from .sigma_k import (
    foliation_functional,
    in_gamma_k,
    mean_radii_check,
    normalize_sigma_k,
    scalar_correspondence_residual,
    sigma,
)
from .tensor_core import (
    CurvatureBundle,
    christoffel,
    covariant_derivative_sym2,
    curvature_bundle,
    grad_norm_sq,
    laplacian,
    ricci,
    ricci_direct,
    riemann,
    scalar,
)

__version__ = "0.1.0"
