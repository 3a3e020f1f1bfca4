"""Error norms, convergence studies and table emission.

A study is described by a flat :class:`ExperimentConfig`; :func:`run_experiment`
computes the reference once, runs the refinement ladder and returns a
:class:`ConvergenceReport` that :func:`emit` writes as CSV or markdown.
"""
from __future__ import annotations

import csv
import enum
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .core import ModelParams, ProblemCase, make_case
from .fem import (PROJECTIONS, FemSystem, QUADRATURE, h1_distance_to_field, initial_vector, interpolated_load,
                  l2_distance_to_field, quadrature_points, system_for, field_l2_norm)
from .mesh import TriMesh, build_uniform, nested_inject
from .oracle import evaluate_sine_series, evaluate_sine_series_gradient, modal_coefficients
from .stepper import SchemeKind, solve

NORMS = ("l2", "h1", "linf")
LOADS = ("quadrature", "interpolate")
CSV_COLUMNS = ("case", "scheme", "alpha", "beta", "a", "b", "mu", "study",
               "level_param", "norm", "error", "rate")


class ConfigError(ValueError):
    pass


class ExperimentError(RuntimeError):
    pass


class Study(enum.Enum):
    TEMPORAL_RATE = "temporal_rate"
    SPATIAL_RATE = "spatial_rate"
    TEMPORAL_PREFACTOR = "temporal_prefactor"
    SPATIAL_PREFACTOR = "spatial_prefactor"
    INHOMOGENEOUS = "inhomogeneous"

    @property
    def temporal(self) -> bool:
        return self in (Study.TEMPORAL_RATE, Study.TEMPORAL_PREFACTOR)

    @property
    def prefactor(self) -> bool:
        return self in (Study.TEMPORAL_PREFACTOR, Study.SPATIAL_PREFACTOR)


class Reference(enum.Enum):
    NESTED = "nested"
    SPECTRAL = "spectral"
    EXACT = "exact"


# ---------------------------------------------------------------------------
# norms and rates
# ---------------------------------------------------------------------------


def _mesh_of(coeffs) -> TriMesh:
    n = int(np.asarray(coeffs).shape[-1])
    m = int(round(math.sqrt(n))) + 1
    if (m - 1) ** 2 != n:
        raise ValueError(f"{n} coefficients do not belong to a uniform mesh")
    return build_uniform(m)


def _difference(fine: FemSystem, reference, candidate) -> np.ndarray:
    reference = np.asarray(reference, dtype=float)
    if reference.shape != (fine.n_dofs,):
        raise ValueError("reference does not live on the fine mesh")
    coarse = _mesh_of(candidate)
    if coarse.m == fine.mesh.m:
        return np.asarray(candidate, dtype=float) - reference
    return nested_inject(coarse, fine.mesh, candidate) - reference


def l2_error(fine: FemSystem, reference, candidate) -> float:
    """``||I candidate - reference||_{L2}`` with the fine mass matrix."""
    d = _difference(fine, reference, candidate)
    return float(math.sqrt(max(d @ (fine.M @ d), 0.0)))


def h1_error(fine: FemSystem, reference, candidate) -> float:
    """H1 seminorm of the difference, ``sqrt(d^T K d)`` on the fine mesh."""
    d = _difference(fine, reference, candidate)
    return float(math.sqrt(max(d @ (fine.K @ d), 0.0)))


def linf_error(fine: FemSystem, reference, candidate) -> float:
    """Largest nodal difference on the fine mesh."""
    d = _difference(fine, reference, candidate)
    return float(np.max(np.abs(d))) if d.size else 0.0


def normalized_l2_error(fine: FemSystem, reference, candidate, v_norm: float) -> float:
    if not v_norm > 0:
        raise ValueError("normalization needs a positive norm")
    return l2_error(fine, reference, candidate) / v_norm


_NESTED = {"l2": l2_error, "h1": h1_error, "linf": linf_error}


def field_errors(mesh: TriMesh, coeffs, value, gradient=None, norms=("l2",)) -> Dict[str, float]:
    """Errors of a P1 function against a field given by ``value(x, y)``."""
    out = {}
    for norm in norms:
        if norm == "l2":
            out[norm] = l2_distance_to_field(mesh, coeffs, value)
        elif norm == "h1":
            if gradient is None:
                raise ExperimentError("H1 error needs the reference gradient")
            out[norm] = h1_distance_to_field(mesh, coeffs, gradient)
        elif norm == "linf":
            bary, _ = QUADRATURE["seven"]
            pts, _ = quadrature_points(mesh, "seven")
            full = mesh.to_full(coeffs)
            uh = np.einsum("qk,tk->tq", bary, full[mesh.triangles])
            d_quad = np.abs(uh - value(pts[..., 0], pts[..., 1]))
            d_node = np.abs(full - value(mesh.nodes[:, 0], mesh.nodes[:, 1]))
            out[norm] = float(max(d_quad.max(), d_node.max()))
        else:
            raise ConfigError(f"unknown norm {norm!r}")
    return out


def eoc(errors: Sequence[float], steps: Sequence[float]) -> List[float]:
    """Rates ``log(e_{i-1}/e_i) / log(s_{i-1}/s_i)``; NaN where undefined."""
    e = np.asarray(errors, dtype=float)
    s = np.asarray(steps, dtype=float)
    if e.shape != s.shape:
        raise ValueError("errors and steps must have equal length")
    rates = []
    for i in range(1, e.size):
        if e[i - 1] > 0 and e[i] > 0 and s[i - 1] > 0 and s[i] > 0 and s[i] != s[i - 1]:
            rates.append(math.log(e[i - 1] / e[i]) / math.log(s[i - 1] / s[i]))
        else:
            rates.append(float("nan"))
    return rates


def fitted_slope(levels: Sequence[float], errors: Sequence[float],
                 points: Optional[int] = None) -> float:
    """Least-squares slope of ``log(error)`` against ``log(level)``.

    ``points`` keeps only that many entries with the smallest levels, i.e. the
    asymptotic tail; ``None`` fits everything.
    """
    e = np.asarray(errors, dtype=float)
    if np.any(e <= 0):
        return float("nan")
    x = np.log(np.asarray(levels, dtype=float))
    y = np.log(e)
    if points is not None:
        keep = np.argsort(x)[:max(int(points), 2)]
        x, y = x[keep], y[keep]
    if x.size < 2 or not np.all(np.isfinite(y)):
        return float("nan")
    return float(np.polyfit(x, y, 1)[0])


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _as_tuple(value, kind):
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(kind(v) for v in value)
    return (kind(value),)


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat description of one convergence study.

    ``mesh_list`` and ``n_list`` are the spatial and temporal ladders; the
    study fixes one of them to a single entry. Prefactor studies sweep the
    horizon over ``t_list``. Reference kinds: ``nested`` (fine run with
    ``m_ref``/``N_ref``), ``spectral`` (oracle with ``mode_cut``), ``exact``.
    """

    alpha: float
    beta: float
    a: float = 1.0
    b: float = 1.0
    mu: float = 1.0
    T: float = 0.5
    case: str = "a"
    scheme: str = "sbd"
    study: str = "temporal_rate"
    mesh_list: tuple = (128,)
    n_list: tuple = (20, 40, 80, 160, 320)
    t_list: tuple = ()
    reference: str = "nested"
    m_ref: Optional[int] = None
    N_ref: Optional[int] = None
    reference_scheme: str = "sbd"
    mode_cut: Optional[int] = None
    norms: tuple = ("l2",)
    projection: str = "l2"
    load: str = "quadrature"
    fit_points: Optional[int] = 3
    normalize: Optional[bool] = None
    workers: int = 1
    out_dir: Optional[str] = None
    format: str = "csv"

    def __post_init__(self):
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("mesh_list", _as_tuple(self.mesh_list, int))
        set_("n_list", _as_tuple(self.n_list, int))
        set_("t_list", _as_tuple(self.t_list, float))
        set_("norms", _as_tuple(self.norms, lambda s: str(s).lower()))
        set_("scheme", SchemeKind.parse(self.scheme).value)
        set_("reference_scheme", SchemeKind.parse(self.reference_scheme).value)
        try:
            study = Study(str(self.study).lower())
            ref = Reference(str(self.reference).lower())
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        set_("study", study.value)
        set_("reference", ref.value)
        if self.projection not in PROJECTIONS:
            raise ConfigError(f"projection must be one of {PROJECTIONS}")
        if self.load not in LOADS:
            raise ConfigError(f"load must be one of {LOADS}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.format not in ("csv", "md"):
            raise ConfigError("format must be csv or md")
        for norm in self.norms:
            if norm not in NORMS:
                raise ConfigError(f"unknown norm {norm!r}")
        self.params  # validates the model constants
        self._check_ladders(study, ref)

    def _check_ladders(self, study: Study, ref: Reference):
        for name in ("mesh_list", "n_list"):
            ladder = getattr(self, name)
            if not ladder:
                raise ConfigError(f"{name} must not be empty")
            if any(b <= a for a, b in zip(ladder, ladder[1:])):
                raise ConfigError(f"{name} must be strictly increasing")
        if study.prefactor:
            t = self.t_list
            if not t or any(x <= 0 for x in t):
                raise ConfigError("prefactor studies need a positive t_list")
            if self.fit_points is not None and self.fit_points < 2:
                raise ConfigError("fit_points must be at least 2")
            if len(set(t)) != len(t) or not (list(t) == sorted(t) or list(t) == sorted(t, reverse=True)):
                raise ConfigError("t_list must be strictly monotone")
        if study.temporal:
            if len(self.mesh_list) != 1:
                raise ConfigError("temporal studies use a single mesh")
            if ref is not Reference.NESTED:
                raise ConfigError("temporal studies use a fine-step reference on the same mesh")
            if self.m_ref not in (None, self.mesh_list[0]):
                raise ConfigError("temporal studies keep the mesh of the ladder")
            if self.N_ref is None or self.N_ref <= max(self.n_list):
                raise ConfigError("N_ref must exceed every ladder entry")
        else:
            if len(self.n_list) != 1:
                raise ConfigError("spatial studies use a single step count")
            if ref is Reference.NESTED:
                if self.m_ref is None or self.m_ref <= max(self.mesh_list):
                    raise ConfigError("m_ref must exceed every ladder entry")
                if any(self.m_ref % m for m in self.mesh_list):
                    raise ConfigError("m_ref must be a multiple of every ladder mesh")
            if ref is Reference.SPECTRAL and self.mode_cut is not None and self.mode_cut < 1:
                raise ConfigError("mode_cut must be positive")

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.alpha, self.beta, self.a, self.b, self.mu, self.T)

    @property
    def problem(self) -> ProblemCase:
        return make_case(self.case, self.params)

    @property
    def study_kind(self) -> Study:
        return Study(self.study)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        missing = {"alpha", "beta"} - set(data)
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(sorted(missing))}")
        return cls(**data)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass
class ReportRow:
    level: float
    errors: Dict[str, float]
    rates: Dict[str, Optional[float]] = field(default_factory=dict)


@dataclass
class ConvergenceReport:
    config: ExperimentConfig
    rows: List[ReportRow]
    reference_description: str = ""
    wall_time: float = 0.0
    slope: Dict[str, float] = field(default_factory=dict)

    @property
    def levels(self) -> np.ndarray:
        return np.array([r.level for r in self.rows], dtype=float)

    def errors(self, norm: str = "l2") -> np.ndarray:
        return np.array([r.errors[norm] for r in self.rows])

    def rates(self, norm: str = "l2") -> np.ndarray:
        return np.array([r.rates.get(norm) for r in self.rows[1:]], dtype=float)


# ---------------------------------------------------------------------------
# experiment driver
# ---------------------------------------------------------------------------


def simulate(params: ModelParams, case: ProblemCase, scheme, m: int, N: int,
             projection: str = "l2", load: str = "quadrature") -> np.ndarray:
    """Final-time interior coefficients of one fully discrete run.

    ``load="interpolate"`` replaces the source load vector by ``M I_h f``
    (separable sources only).
    """
    sys = system_for(m)
    v = initial_vector(sys, case.initial, projection)
    source = case.source
    if source is not None and load == "interpolate":
        if not source.separable:
            raise ConfigError("interpolated loads need a separable source")
        spatial = interpolated_load(sys, source.spatial)
        temporal = source.temporal

        def source(t):
            return float(temporal(t)) * spatial
    elif load not in LOADS:
        raise ConfigError(f"load must be one of {LOADS}")
    traj = solve(scheme, sys, params, v, source, N, store_every=N)
    return traj.final


def _field_reference(config: ExperimentConfig, params: ModelParams, case: ProblemCase):
    t = params.T
    if config.reference == Reference.EXACT.value:
        if case.exact is None:
            raise ExperimentError(f"case {case.name!r} has no exact solution")
        grad = None
        if case.exact_gradient is not None:
            def grad(x, y):
                return case.exact_gradient(x, y, t)

        return (lambda x, y: case.exact(x, y, t)), grad, "exact solution"
    coeffs = modal_coefficients(params, case, t, config.mode_cut)

    def value(x, y):
        pts = np.stack([np.ravel(x), np.ravel(y)], axis=1)
        return evaluate_sine_series(coeffs, pts).reshape(np.shape(x))

    def grad(x, y):
        pts = np.stack([np.ravel(x), np.ravel(y)], axis=1)
        gx, gy = evaluate_sine_series_gradient(coeffs, pts)
        return gx.reshape(np.shape(x)), gy.reshape(np.shape(x))

    return value, grad, f"spectral oracle, mode_cut={coeffs.shape[0]}"


def _level_errors(config, params, case, fine_sys, ref_coeffs, ref_field, m, N):
    U = simulate(params, case, config.scheme, m, N, config.projection, config.load)
    if ref_field is not None:
        value, grad, _ = ref_field
        return field_errors(build_uniform(m), U, value, grad, config.norms)
    return {norm: _NESTED[norm](fine_sys, ref_coeffs, U) for norm in config.norms}


def run_experiment(config: ExperimentConfig) -> ConvergenceReport:
    """Run the reference and the ladder of one study and assemble the table."""
    start = time.perf_counter()
    study = config.study_kind
    base = config.params
    case = config.problem
    if study is Study.INHOMOGENEOUS and case.source is None:
        raise ConfigError("the inhomogeneous study needs a case with a source")
    normalize = config.normalize if config.normalize is not None else case.initial is not None
    v_norm = field_l2_norm(case.initial) if normalize else 1.0
    if normalize and not v_norm > 0:
        raise ConfigError("cannot normalize by zero initial data")

    if study.prefactor:
        horizons = list(config.t_list)
    else:
        horizons = [base.T]
    if study.temporal:
        m = config.mesh_list[0]
        ladder = [(m, N) for N in config.n_list]
    else:
        N = config.n_list[0]
        ladder = [(m, N) for m in config.mesh_list]

    rows: List[ReportRow] = []
    description = ""
    for T in horizons:
        params = base.with_horizon(T)
        fine_sys, ref_coeffs, ref_field = None, None, None
        try:
            if config.reference == Reference.NESTED.value:
                if study.temporal:
                    m_ref, N_ref, ref_scheme = config.mesh_list[0], config.N_ref, config.reference_scheme
                else:
                    m_ref, N_ref, ref_scheme = config.m_ref, config.n_list[0], config.scheme
                fine_sys = system_for(m_ref)
                ref_coeffs = simulate(params, case, ref_scheme, m_ref, N_ref, config.projection, config.load)
                description = f"{ref_scheme} run with m={m_ref}, N={N_ref}"
            else:
                ref_field = _field_reference(config, params, case)
                description = ref_field[2]
        except Exception as exc:
            raise ExperimentError(f"reference computation failed at T={T}: {exc}") from exc
        levels = ladder if not study.prefactor else ladder[:1]

        def run_level(level, params=params, fine_sys=fine_sys, ref_coeffs=ref_coeffs,
                      ref_field=ref_field, T=T):
            m, N = level
            try:
                return _level_errors(config, params, case, fine_sys, ref_coeffs, ref_field, m, N)
            except Exception as exc:
                raise ExperimentError(f"ladder run m={m}, N={N}, T={T} failed: {exc}") from exc

        if config.workers > 1 and len(levels) > 1:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                results = list(pool.map(run_level, levels))
        else:
            results = [run_level(level) for level in levels]
        for (m, N), errs in zip(levels, results):
            if normalize and "l2" in errs:
                errs["l2"] /= v_norm
            if study.prefactor:
                level = T
            else:
                level = N if study.temporal else m
            rows.append(ReportRow(level, errs))

    if study.prefactor:
        steps = [r.level for r in rows]
    elif study.temporal:
        steps = [base.T / r.level for r in rows]
    else:
        steps = [1.0 / r.level for r in rows]
    slopes = {}
    for norm in config.norms:
        rates = eoc([r.errors[norm] for r in rows], steps)
        for row, rate in zip(rows[1:], rates):
            row.rates[norm] = rate
        if study.prefactor:
            slopes[norm] = fitted_slope(steps, [r.errors[norm] for r in rows], config.fit_points)
    return ConvergenceReport(config, rows, description, time.perf_counter() - start, slopes)


# ---------------------------------------------------------------------------
# emission
# ---------------------------------------------------------------------------


def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return repr(float(x))


def report_csv(report: ConvergenceReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    c = report.config
    for row in report.rows:
        for norm in c.norms:
            writer.writerow([c.case, c.scheme, repr(c.alpha), repr(c.beta), repr(c.a), repr(c.b),
                             repr(c.mu), c.study, _fmt(row.level), norm,
                             _fmt(row.errors[norm]), _fmt(row.rates.get(norm))])
    return buf.getvalue()


def _level_label(study: str) -> str:
    if Study(study).prefactor:
        return "t_N"
    return "N" if Study(study).temporal else "m"


def markdown_table(reports: Sequence[ConvergenceReport], title: str = "") -> str:
    """Side-by-side table; one error and one rate column per report and norm."""
    if not reports:
        raise ValueError("no reports to tabulate")
    first = reports[0]
    levels = [r.level for r in first.rows]
    for rep in reports[1:]:
        if [r.level for r in rep.rows] != levels:
            raise ValueError("reports in one table must share the ladder")
    header = [_level_label(first.config.study)]
    for rep in reports:
        for norm in rep.config.norms:
            label = rep.config.scheme.upper()
            if len(rep.config.norms) > 1:
                label += f" {norm}"
            header += [label, "rate"]
    lines = []
    if title:
        lines += [f"### {title}", ""]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for i, level in enumerate(levels):
        cells = [f"{level:g}"]
        for rep in reports:
            row = rep.rows[i]
            for norm in rep.config.norms:
                rate = row.rates.get(norm)
                cells.append(f"{row.errors[norm]:.2e}")
                cells.append("" if rate is None or math.isnan(rate) else f"{rate:.2f}")
        lines.append("| " + " | ".join(cells) + " |")
    slope_cells = []
    for rep in reports:
        for norm, s in rep.slope.items():
            slope_cells.append(f"{rep.config.scheme.upper()} {norm}: {s:.3f}")
    if slope_cells:
        lines += ["", "fitted slope: " + ", ".join(slope_cells)]
    return "\n".join(lines) + "\n"


def emit(report: ConvergenceReport, format: str = "csv", path=None) -> str:
    """Render ``report`` as CSV or markdown; write it to ``path`` if given."""
    if format == "csv":
        text = report_csv(report)
    elif format in ("md", "markdown"):
        c = report.config
        title = f"case ({c.case}), alpha={c.alpha:g}, beta={c.beta:g}, {c.study}"
        text = markdown_table([report], title) if report.rows else f"### {title}\n\n(empty)\n"
    else:
        raise ValueError(f"unknown format {format!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text


# ---------------------------------------------------------------------------
# table presets
# ---------------------------------------------------------------------------

PAIRS = ((0.25, 0.75), (0.5, 0.5), (0.75, 0.25))
T_LADDER = (1e-3, 1e-4, 1e-5, 1e-6, 1e-7)


def table_preset(name: str, desk_scale: bool = True) -> List[ExperimentConfig]:
    """Configurations of one named benchmark study.

    ``desk_scale`` shrinks the fine resolutions so every preset finishes in
    minutes; the rates, not the absolute errors, are the target.
    """
    key = name.lower()
    if key == "t1":
        m, N_ref = (128, 1024) if desk_scale else (512, 1000)
        return [ExperimentConfig(al, be, case=c, scheme=s, study="temporal_rate",
                                 mesh_list=(m,), n_list=(20, 40, 80, 160, 320), N_ref=N_ref)
                for al, be in PAIRS for c in ("a", "b") for s in ("be", "sbd")]
    if key == "t2":
        m, N_ref = (128, 640) if desk_scale else (512, 640)
        return [ExperimentConfig(0.25, 0.75, case=c, scheme=s, study="temporal_prefactor",
                                 mesh_list=(m,), n_list=(10,), t_list=T_LADDER, N_ref=N_ref)
                for c in ("a", "b") for s in ("be", "sbd")]
    if key == "t3":
        ladder, N, m_ref = ((8, 16, 32, 64), 256, 256) if desk_scale else ((8, 16, 32, 64, 128), 500, 512)
        return [ExperimentConfig(al, be, case=c, scheme="sbd", study="spatial_rate",
                                 mesh_list=ladder, n_list=(N,), m_ref=m_ref, norms=("l2", "linf"))
                for al, be in PAIRS for c in ("a", "b")]
    if key == "t4":
        N, m_ref = (256, 256) if desk_scale else (500, 512)
        return [ExperimentConfig(0.25, 0.75, case=c, scheme=s, study="spatial_prefactor",
                                 mesh_list=(64,), n_list=(N,), t_list=T_LADDER, m_ref=m_ref)
                for c in ("a", "b") for s in ("be", "sbd")]
    if key == "t6":
        ladder, N, cut = ((8, 16, 32, 64), 1024, 255) if desk_scale else ((8, 16, 32, 64, 128), 500, 511)
        return [ExperimentConfig(0.25, 0.75, case="c", scheme="sbd", study="inhomogeneous",
                                 mesh_list=ladder, n_list=(N,), reference="exact", norms=("l2", "linf")),
                ExperimentConfig(0.25, 0.75, case="d", scheme="sbd", study="inhomogeneous",
                                 mesh_list=ladder, n_list=(N,), reference="spectral", mode_cut=cut,
                                 norms=("l2", "linf"))]
    raise ConfigError(f"unknown table {name!r}; choose t1, t2, t3, t4 or t6")


def run_table(name: str, desk_scale: bool = True, progress=None) -> tuple:
    """Run a preset; return the reports and markdown tables grouped by case and parameters."""
    reports = []
    for cfg in table_preset(name, desk_scale):
        rep = run_experiment(cfg)
        if progress is not None:
            progress(rep)
        reports.append(rep)
    groups: Dict[tuple, List[ConvergenceReport]] = {}
    for rep in reports:
        c = rep.config
        groups.setdefault((c.case, c.alpha, c.beta), []).append(rep)
    parts = [markdown_table(reps, f"case ({case}), alpha={al:g}, beta={be:g}")
             for (case, al, be), reps in groups.items()]
    return reports, "\n".join(parts)


def with_overrides(config: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(config, **kw)
