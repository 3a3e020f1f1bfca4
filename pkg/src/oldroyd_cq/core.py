"""Model parameters, problem cases and the scalar symbol ``g(z)``.

The model is the time-fractional Oldroyd-B equation on the unit square,

    (1 + a d_t^alpha) u_t = mu (1 + b d_t^beta) Laplace(u) + f,

with homogeneous Dirichlet data, ``u(0) = v`` and ``(I^{1-alpha} u_t)(0) = 0``.
After a Laplace transform every Dirichlet eigenmode with eigenvalue ``lam``
evolves through the symbol

    g(z) = (z + a z^(alpha+1)) / (mu (1 + b z^beta)),

which is shared by the time steppers (as a consistency target) and by the
contour-integral oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import gamma as gamma_fn


class ParameterError(ValueError):
    """Raised when a model parameter lies outside its admissible range."""


class DomainError(ValueError):
    """Raised when a complex argument lies on the branch cut or at zero."""


@dataclass(frozen=True)
class ModelParams:
    """The five PDE constants plus the time horizon ``T``.

    ``a = 0`` and ``b = 0`` are admitted so that the classical heat equation
    can be used as a degenerate regression target.
    """

    alpha: float
    beta: float
    a: float = 1.0
    b: float = 1.0
    mu: float = 1.0
    T: float = 0.5

    def __post_init__(self):
        validate(self)

    def with_horizon(self, T: float) -> "ModelParams":
        return ModelParams(self.alpha, self.beta, self.a, self.b, self.mu, T)


def validate(params: ModelParams) -> ModelParams:
    """Check parameter ranges; return ``params`` unchanged when valid."""
    for name in ("alpha", "beta"):
        value = getattr(params, name)
        if not (math.isfinite(value) and 0.0 < value < 1.0):
            raise ParameterError(f"{name} must lie in (0,1), got {value!r}")
    if not (math.isfinite(params.mu) and params.mu > 0.0):
        raise ParameterError(f"mu must be positive, got {params.mu!r}")
    for name in ("a", "b"):
        value = getattr(params, name)
        if not (math.isfinite(value) and value >= 0.0):
            raise ParameterError(f"{name} must be nonnegative, got {value!r}")
    if not (math.isfinite(params.T) and params.T > 0.0):
        raise ParameterError(f"T must be positive, got {params.T!r}")
    return params


def g_symbol(params: ModelParams, z):
    """Evaluate ``g(z)`` on the principal branch.

    Accepts a scalar or an array of complex points. Points at the origin or on
    the closed negative real axis raise :class:`DomainError`.
    """
    zz = np.asarray(z, dtype=complex)
    if np.any(zz == 0) or np.any(np.abs(np.angle(zz)) >= np.pi):
        raise DomainError("g(z) is defined only for z != 0 off the negative real axis")
    p = params
    val = (zz + p.a * zz ** (p.alpha + 1.0)) / (p.mu * (1.0 + p.b * zz**p.beta))
    return val if val.ndim else complex(val)


# ---------------------------------------------------------------------------
# spatial fields and sources
# ---------------------------------------------------------------------------

Field2D = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScalarField:
    """A function on the unit square, optionally with gradient and sine data.

    ``sine_coef(k, l)`` returns the coefficient of ``sin(k pi x) sin(l pi y)``
    in the expansion of the field; it is what the spectral oracle consumes.
    ``regularity_tag`` is bookkeeping only ("smooth" or "nonsmooth").
    """

    value: Field2D
    gradient: Optional[Callable[[np.ndarray, np.ndarray], tuple]] = None
    regularity_tag: str = "smooth"
    sine_coef: Optional[Callable[[int, int], float]] = None
    name: str = "custom"

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(self.value(x, y), np.broadcast(x, y).shape).astype(float)


@dataclass(frozen=True)
class SourceTerm:
    """Right-hand side ``f(x, y, t)``.

    Separable sources are ``spatial(x, y) * temporal(t)``; a closed-form
    Laplace transform of ``temporal`` makes them usable by the oracle.
    Non-separable sources pass ``field(x, y, t)`` instead.
    """

    spatial: Optional[ScalarField] = None
    temporal: Optional[Callable[[float], float]] = None
    laplace: Optional[Callable[[np.ndarray], np.ndarray]] = None
    field: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.field is None and (self.spatial is None or self.temporal is None):
            raise ValueError("source needs either field(x, y, t) or spatial and temporal parts")

    @property
    def separable(self) -> bool:
        return self.field is None

    def __call__(self, x, y, t: float):
        if self.field is not None:
            return np.asarray(self.field(x, y, t), dtype=float)
        return self.spatial(x, y) * float(self.temporal(t))


@dataclass(frozen=True)
class ProblemCase:
    """Initial data ``v`` and source ``f`` of one experiment."""

    name: str
    initial: Optional[ScalarField] = None
    source: Optional[SourceTerm] = None
    exact: Optional[Callable[[np.ndarray, np.ndarray, float], np.ndarray]] = field(
        default=None, compare=False
    )
    exact_gradient: Optional[Callable[[np.ndarray, np.ndarray, float], tuple]] = field(
        default=None, compare=False
    )

    @property
    def smooth(self) -> bool:
        return self.initial is None or self.initial.regularity_tag == "smooth"


# ---------------------------------------------------------------------------
# the four experiment cases and helpers
# ---------------------------------------------------------------------------


def _bubble_sine(k: int, l: int) -> float:
    if k % 2 == 0 or l % 2 == 0:
        return 0.0
    return 64.0 / (k**3 * l**3 * math.pi**6)


def _half_indicator_sine(k: int, l: int) -> float:
    return 4.0 * (1.0 - math.cos(k * math.pi / 2)) * (1.0 - math.cos(l * math.pi)) / (
        k * l * math.pi**2
    )


def bubble_field() -> ScalarField:
    """``x y (1 - x)(1 - y)``, smooth and vanishing on the boundary."""

    def value(x, y):
        return x * y * (1 - x) * (1 - y)

    def gradient(x, y):
        return (1 - 2 * x) * y * (1 - y), (1 - 2 * y) * x * (1 - x)

    return ScalarField(value, gradient, "smooth", _bubble_sine, "bubble")


def half_indicator_field() -> ScalarField:
    """Indicator of ``(0, 1/2] x (0, 1)``; only in L2."""

    def value(x, y):
        return np.where((x > 0) & (x <= 0.5) & (y > 0) & (y < 1), 1.0, 0.0)

    return ScalarField(value, None, "nonsmooth", _half_indicator_sine, "half_indicator")


def sine_mode_field(k: int, l: int) -> ScalarField:
    """``sin(k pi x) sin(l pi y)``."""
    if k < 1 or l < 1:
        raise ValueError("mode indices must be positive")

    def value(x, y):
        return np.sin(k * np.pi * x) * np.sin(l * np.pi * y)

    def gradient(x, y):
        return (
            k * np.pi * np.cos(k * np.pi * x) * np.sin(l * np.pi * y),
            l * np.pi * np.sin(k * np.pi * x) * np.cos(l * np.pi * y),
        )

    def coef(kk, ll):
        return 1.0 if (kk, ll) == (k, l) else 0.0

    return ScalarField(value, gradient, "smooth", coef, f"mode({k},{l})")


def zero_field() -> ScalarField:
    return ScalarField(lambda x, y: np.zeros(np.broadcast(x, y).shape),
                       lambda x, y: (np.zeros_like(x), np.zeros_like(y)),
                       "smooth", lambda k, l: 0.0, "zero")


def case_a() -> ProblemCase:
    return ProblemCase("a", initial=bubble_field())


def case_b() -> ProblemCase:
    return ProblemCase("b", initial=half_indicator_field())


def single_mode_case(k: int, l: int) -> ProblemCase:
    return ProblemCase(f"mode{k}{l}", initial=sine_mode_field(k, l))


def case_c(params: ModelParams) -> ProblemCase:
    """Manufactured source with exact solution ``t^2 sin(2 pi x) sin(2 pi y)``."""
    al, be, a, b, mu = params.alpha, params.beta, params.a, params.b, params.mu
    pi2 = math.pi**2
    c_a = 2.0 * a / gamma_fn(2.0 - al)
    c_b = 16.0 * pi2 * mu * b / gamma_fn(3.0 - be)

    def temporal(t):
        if t <= 0.0:
            return 0.0
        return 2 * t + c_a * t ** (1 - al) + 8 * pi2 * mu * t**2 + c_b * t ** (2 - be)

    def laplace(z):
        z = np.asarray(z, dtype=complex)
        return (2.0 / z**2 + 2.0 * a * z ** (al - 2.0) + 16 * pi2 * mu / z**3
                + 16 * pi2 * mu * b * z ** (be - 3.0))

    spatial = sine_mode_field(2, 2)

    def exact(x, y, t):
        return t**2 * spatial(x, y)

    def exact_gradient(x, y, t):
        gx, gy = spatial.gradient(x, y)
        return t**2 * gx, t**2 * gy

    return ProblemCase("c", source=SourceTerm(spatial, temporal, laplace, name="c"),
                       exact=exact, exact_gradient=exact_gradient)


def case_d() -> ProblemCase:
    """Source ``(1 + t^0.2)`` times the half indicator; no closed-form solution."""
    g12 = gamma_fn(1.2)

    def temporal(t):
        return 1.0 + max(t, 0.0) ** 0.2

    def laplace(z):
        z = np.asarray(z, dtype=complex)
        return 1.0 / z + g12 * z ** (-1.2)

    return ProblemCase("d", source=SourceTerm(half_indicator_field(), temporal, laplace, name="d"))


def make_case(name: str, params: Optional[ModelParams] = None) -> ProblemCase:
    """Look up one of the named cases ``a``, ``b``, ``c``, ``d``, ``zero``."""
    key = name.strip().lower()
    if key == "a":
        return case_a()
    if key == "b":
        return case_b()
    if key == "c":
        if params is None:
            raise ValueError("case c depends on the model parameters")
        return case_c(params)
    if key == "d":
        return case_d()
    if key == "zero":
        return ProblemCase("zero", initial=zero_field())
    if key.startswith("mode"):
        digits = key[4:].replace(",", " ").split()
        k, l = (int(d) for d in digits) if len(digits) == 2 else (int(key[4]), int(key[5]))
        return single_mode_case(k, l)
    raise ValueError(f"unknown case {name!r}")
