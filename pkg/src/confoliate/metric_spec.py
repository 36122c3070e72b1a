"""Declarative metric specifications and their materialization.

A spec pairs a chart description with a metric source: either one of the
builtin families (flat-torus, perturbed-torus, round-sphere-stereographic)
or an explicit symmetric matrix of component expressions, optionally with
analytic first/second derivative expressions.

The JSON file format::

    {"chart":  {"n": 3, "topology": "periodic-box",
                "extent": [0.0, 6.283185307179586], "resolution": 16},
     "metric": {"builtin": "perturbed-torus",
                "params": {"eps": 0.05, "mode": [0, 1, 0]}}}

Component form uses "components" (n x n nested array of expression
strings, symmetric as written) plus optional "d1" (n x n x n, entry
[k][i][j] = d gamma_ij / d x_k) and "d2" (n x n x n x n, entry
[k][l][i][j]).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .expressions import ExpressionError, Node, evaluate, parse_expression
from .fields import OPEN, PERIODIC, Chart, TensorField

TWO_PI = 2.0 * math.pi

BUILTIN_NAMES = ("flat-torus", "perturbed-torus", "round-sphere-stereographic")


class SpecError(ValueError):
    """Invalid metric specification or materialization failure."""


@dataclass(frozen=True)
class BuiltinSource:
    name: str
    params: dict

    def __post_init__(self):
        if self.name not in BUILTIN_NAMES:
            raise SpecError(f"unknown builtin metric {self.name!r}")


@dataclass(frozen=True)
class ComponentSource:
    components: tuple[tuple[Node, ...], ...]
    d1: tuple | None = None  # [k][i][j] expression nodes
    d2: tuple | None = None  # [k][l][i][j]


@dataclass(frozen=True)
class MetricSpec:
    chart: Chart
    source: BuiltinSource | ComponentSource

    @property
    def builtin_name(self) -> str | None:
        return self.source.name if isinstance(self.source, BuiltinSource) else None


def default_chart(builtin: str, n: int, resolution: int, half_width: float = 2.0) -> Chart:
    if builtin in ("flat-torus", "perturbed-torus"):
        return Chart(n, PERIODIC, ((0.0, TWO_PI),) * n, (resolution,) * n)
    if builtin == "round-sphere-stereographic":
        return Chart(n, OPEN, ((-half_width, half_width),) * n, (resolution,) * n)
    raise SpecError(f"unknown builtin metric {builtin!r}")


def builtin_spec(
    name: str,
    n: int,
    resolution: int,
    eps: float = 0.05,
    mode=(0, 1, 0),
    half_width: float = 2.0,
    chart: Chart | None = None,
) -> MetricSpec:
    """Convenience constructor for the builtin metric families."""
    if chart is None:
        chart = default_chart(name, n, resolution, half_width)
    params: dict = {}
    if name == "perturbed-torus":
        mode = tuple(int(m) for m in mode)
        if len(mode) != n:
            raise SpecError(f"mode vector needs {n} entries, got {len(mode)}")
        if not 0.0 <= eps < 1.0:
            raise SpecError("perturbed-torus requires 0 <= eps < 1")
        params = {"eps": float(eps), "mode": mode}
    return MetricSpec(chart, BuiltinSource(name, params))


# ---------------------------------------------------------------------------
# builtin samplers: return (gamma, d1, d2) arrays on the chart grid

def _sample_flat_torus(chart: Chart, params):
    n = chart.n
    shape = chart.shape
    gamma = np.zeros(shape + (n, n))
    gamma[...] = np.eye(n)
    d1 = np.zeros(shape + (n, n, n))
    d2 = np.zeros(shape + (n, n, n, n))
    return gamma, d1, d2


def _sample_perturbed_torus(chart: Chart, params):
    n = chart.n
    eps = float(params["eps"])
    mode = np.asarray(params["mode"], dtype=float)
    coords = chart.coords()
    phase = sum(m * x for m, x in zip(mode, coords))
    gamma = np.zeros(chart.shape + (n, n))
    gamma[...] = np.eye(n)
    gamma[..., 0, 0] += eps * np.sin(phase)
    d1 = np.zeros(chart.shape + (n, n, n))
    d2 = np.zeros(chart.shape + (n, n, n, n))
    cos_ph = eps * np.cos(phase)
    sin_ph = eps * np.sin(phase)
    for k in range(n):
        d1[..., k, 0, 0] = mode[k] * cos_ph
        for l in range(n):
            d2[..., k, l, 0, 0] = -mode[k] * mode[l] * sin_ph
    return gamma, d1, d2


def _sample_round_sphere(chart: Chart, params):
    # stereographic components (4 / (1 + |y|^2)^2) delta_ij
    n = chart.n
    coords = chart.coords()
    s = sum(y * y for y in coords)
    one_s = 1.0 + s
    conf = 4.0 / one_s**2
    dconf = [-16.0 * coords[k] / one_s**3 for k in range(n)]
    eye = np.eye(n)
    gamma = conf[..., None, None] * eye
    d1 = np.zeros(chart.shape + (n, n, n))
    d2 = np.zeros(chart.shape + (n, n, n, n))
    for k in range(n):
        d1[..., k, :, :] = dconf[k][..., None, None] * eye
        for l in range(n):
            dd = 96.0 * coords[k] * coords[l] / one_s**4
            if k == l:
                dd = dd - 16.0 / one_s**3
            d2[..., k, l, :, :] = dd[..., None, None] * eye
    return gamma, d1, d2


_BUILTIN_SAMPLERS = {
    "flat-torus": _sample_flat_torus,
    "perturbed-torus": _sample_perturbed_torus,
    "round-sphere-stereographic": _sample_round_sphere,
}


# ---------------------------------------------------------------------------
# materialization

def _eval_grid(node: Node, coords, what: str) -> np.ndarray:
    values = evaluate(node, coords)
    values = np.broadcast_to(np.asarray(values, dtype=float), coords[0].shape).copy()
    if not np.all(np.isfinite(values)):
        raise SpecError(f"evaluation of {what} is non-finite on the chart domain")
    return values


def _sample_components(chart: Chart, source: ComponentSource):
    n = chart.n
    comps = source.components
    if len(comps) != n or any(len(row) != n for row in comps):
        raise SpecError(f"component matrix must be {n}x{n}")
    for i in range(n):
        for j in range(i + 1, n):
            if comps[i][j] != comps[j][i]:
                raise SpecError(
                    f"component matrix not symmetric as written at ({i + 1},{j + 1})"
                )
    coords = chart.coords()
    gamma = np.zeros(chart.shape + (n, n))
    for i in range(n):
        for j in range(n):
            gamma[..., i, j] = _eval_grid(comps[i][j], coords, f"gamma[{i}][{j}]")
    d1 = d2 = None
    if source.d1 is not None:
        d1 = np.zeros(chart.shape + (n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(n):
                    d1[..., k, i, j] = _eval_grid(
                        source.d1[k][i][j], coords, f"d1[{k}][{i}][{j}]"
                    )
    if source.d2 is not None:
        d2 = np.zeros(chart.shape + (n, n, n, n))
        for k in range(n):
            for l in range(n):
                for i in range(n):
                    for j in range(n):
                        d2[..., k, l, i, j] = _eval_grid(
                            source.d2[k][l][i][j], coords, f"d2[{k}][{l}][{i}][{j}]"
                        )
    return gamma, d1, d2


def materialize(spec: MetricSpec) -> tuple[Chart, TensorField]:
    """Sample the metric on its chart and validate it.

    The returned field is canonically symmetric, positive definite at every
    grid point (smallest eigenvalue checked), and carries analytic
    derivative samples when the source provides them (all builtins do).
    """
    chart = spec.chart
    if isinstance(spec.source, BuiltinSource):
        gamma, d1, d2 = _BUILTIN_SAMPLERS[spec.source.name](chart, spec.source.params)
    else:
        gamma, d1, d2 = _sample_components(chart, spec.source)
    if not np.all(np.isfinite(gamma)):
        raise SpecError("sampled metric has non-finite entries")
    smallest = np.linalg.eigvalsh(gamma)[..., 0]
    if not np.all(smallest > 0.0):
        bad = int(np.sum(smallest <= 0.0))
        raise SpecError(f"sampled metric not positive definite at {bad} grid points")
    field = TensorField.sym2(chart, gamma, d1=d1, d2=d2)
    return chart, field


# ---------------------------------------------------------------------------
# JSON interface

_TOPOLOGY_TAGS = {"periodic-box": PERIODIC, "open-box": OPEN}


def _chart_from_json(obj) -> Chart:
    try:
        n = int(obj["n"])
        topology = obj["topology"]
        extent = obj["extent"]
        resolution = obj["resolution"]
    except (KeyError, TypeError) as err:
        raise SpecError(f"chart section missing key: {err}") from None
    if topology not in _TOPOLOGY_TAGS:
        raise SpecError(f"topology must be periodic-box or open-box, got {topology!r}")
    if isinstance(extent[0], (int, float)):
        extents = (tuple(float(v) for v in extent),) * n
    else:
        extents = tuple(tuple(float(v) for v in pair) for pair in extent)
    if isinstance(resolution, int):
        resolutions = (resolution,) * n
    else:
        resolutions = tuple(int(r) for r in resolution)
    try:
        return Chart(n, _TOPOLOGY_TAGS[topology], extents, resolutions)
    except ValueError as err:
        raise SpecError(str(err)) from None


def _parse_expr_array(nested, n_vars: int, depth: int):
    if depth == 0:
        if not isinstance(nested, str):
            raise SpecError("expression entries must be strings")
        try:
            return parse_expression(nested, n_vars=n_vars)
        except ExpressionError as err:
            raise SpecError(f"bad expression {nested!r}: {err}") from None
    if not isinstance(nested, (list, tuple)):
        raise SpecError("expression array has wrong nesting depth")
    return tuple(_parse_expr_array(item, n_vars, depth - 1) for item in nested)


def spec_from_dict(obj: dict) -> MetricSpec:
    if not isinstance(obj, dict) or "chart" not in obj or "metric" not in obj:
        raise SpecError('spec file needs "chart" and "metric" sections')
    chart = _chart_from_json(obj["chart"])
    metric = obj["metric"]
    if "builtin" in metric:
        params = dict(metric.get("params", {}))
        name = metric["builtin"]
        if name == "perturbed-torus":
            params.setdefault("eps", 0.05)
            mode = params.get("mode")
            if mode is None or len(mode) != chart.n:
                raise SpecError("perturbed-torus params need a length-n mode vector")
            params["mode"] = tuple(int(m) for m in mode)
            if not 0.0 <= float(params["eps"]) < 1.0:
                raise SpecError("perturbed-torus requires 0 <= eps < 1")
        return MetricSpec(chart, BuiltinSource(name, params))
    if "components" in metric:
        comps = _parse_expr_array(metric["components"], chart.n, 2)
        d1 = d2 = None
        if "d1" in metric:
            d1 = _parse_expr_array(metric["d1"], chart.n, 3)
        if "d2" in metric:
            d2 = _parse_expr_array(metric["d2"], chart.n, 4)
        return MetricSpec(chart, ComponentSource(comps, d1, d2))
    raise SpecError('metric section needs "builtin" or "components"')


def load_spec(path) -> MetricSpec:
    """Load a metric spec from a JSON file."""
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as err:
        raise SpecError(f"not valid JSON: {err}") from None
    return spec_from_dict(obj)
