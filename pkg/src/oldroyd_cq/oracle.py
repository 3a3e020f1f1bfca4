"""Spectral reference solutions by numerical Laplace inversion.

Each Dirichlet mode ``sin(k pi x) sin(l pi y)`` with ``lam = pi^2 (k^2 + l^2)``
has the transform

    u_hat(z) = g(z) / (z (g(z) + lam)) * v_kl
             + f_hat(z) / (mu (1 + b z^beta) (g(z) + lam)) * f_kl,

which is inverted along the sectorial contour made of the arc
``delta e^{i psi}, |psi| <= theta`` and the rays ``rho e^{+-i theta}``.
Conjugate symmetry reduces the integral to the upper half:
``u(t) = Im(int_upper e^{zt} F(z) dz) / pi``. Arc and rays are integrated with
Gauss-Legendre panels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from .core import ModelParams, ProblemCase, g_symbol


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class Contour:
    """Upper half of the inversion contour; ``delta=None`` means ``1/t``."""

    theta: float
    delta: Optional[float] = None
    n_points: int = 400
    n_arc: int = 100
    eps_trunc: float = 1e-14
    panel_size: int = 20

    def check(self, alpha: float):
        upper = math.pi / (1.0 + alpha)
        if not (math.pi / 2 < self.theta < upper):
            raise ValueError(f"theta={self.theta} outside (pi/2, pi/(1+alpha)) = "
                             f"({math.pi / 2:.4f}, {upper:.4f})")

    def rho_max(self, t: float) -> float:
        # |exp(z t)| = eps_trunc at the end of the ray
        return math.log(self.eps_trunc) / (t * math.cos(self.theta))


def default_theta(alpha: float, fraction: float = 0.8) -> float:
    return math.pi / 2 + fraction * (math.pi / (1.0 + alpha) - math.pi / 2)


def default_contour(alpha: float, **kw) -> Contour:
    return Contour(default_theta(alpha), **kw)


@lru_cache(maxsize=64)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def contour_nodes(contour: Contour, t: float):
    """Nodes ``z`` and weights ``dz`` of the upper half contour."""
    if not t > 0:
        raise ValueError("t must be positive")
    delta = 1.0 / t if contour.delta is None else contour.delta
    theta = contour.theta
    x, w = _gauss(contour.n_arc)
    psi = 0.5 * theta * (x + 1.0)
    z_arc = delta * np.exp(1j * psi)
    dz_arc = 0.5 * theta * w * 1j * z_arc

    rho_end = contour.rho_max(t)
    if rho_end <= delta:
        z_ray = np.empty(0, complex)
        dz_ray = np.empty(0, complex)
    else:
        n_panels = max(contour.n_points // contour.panel_size, 1)
        xp, wp = _gauss(contour.panel_size)
        # geometric panels: the near-pole of 1/(g + lam) scales with rho
        edges = np.geomspace(delta, rho_end, n_panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[1:] + edges[:-1])
        rho = (mid[:, None] + half[:, None] * xp[None, :]).ravel()
        wr = (half[:, None] * wp[None, :]).ravel()
        direction = np.exp(1j * theta)
        z_ray = rho * direction
        dz_ray = wr * direction
    return np.concatenate([z_arc, z_ray]), np.concatenate([dz_arc, dz_ray])


def contour_inverse_laplace(F: Callable, t: float, contour: Optional[Contour] = None,
                            alpha: float = 0.5):
    """``(1 / 2 pi i) int_Gamma e^{zt} F(z) dz`` for conjugate-symmetric ``F``.

    ``F`` maps a 1-d array of nodes to an array whose first axis runs over the
    nodes; trailing axes are carried through, so many transforms can share one
    quadrature.
    """
    contour = default_contour(alpha) if contour is None else contour
    z, dz = contour_nodes(contour, t)
    vals = np.asarray(F(z), dtype=complex)
    kernel = np.exp(z * t) * dz
    total = np.tensordot(kernel, vals, axes=(0, 0))
    out = total.imag / math.pi
    if not np.all(np.isfinite(out)):
        raise OracleError("non-finite quadrature sum in Laplace inversion")
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# modal transforms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralMode:
    k: int
    l: int
    v_coef: float = 0.0
    f_coef: float = 0.0

    @property
    def lam(self) -> float:
        return math.pi**2 * (self.k**2 + self.l**2)


def uhat_mode(params: ModelParams, z, lam, v_coef=1.0, fhat_value=0.0):
    """Laplace transform of one modal coefficient."""
    z = np.asarray(z, dtype=complex)
    g = g_symbol(params, z)
    denom = g + lam
    if np.any(denom == 0):
        raise OracleError("g(z) + lam vanishes on the contour")
    out = g / (z * denom) * v_coef
    if np.any(np.asarray(fhat_value) != 0):
        out = out + fhat_value / (params.mu * (1.0 + params.b * z**params.beta) * denom)
    return out


def modal_solution(params: ModelParams, lams, t: float, v_coef=1.0,
                   fhat: Optional[Callable] = None, derivative: int = 0,
                   contour: Optional[Contour] = None, chunk: int = 4096) -> np.ndarray:
    """Time-``t`` value (or ``derivative``-th time derivative) of modal solutions.

    ``lams`` is an array of eigenvalues; ``v_coef`` may broadcast against it.
    The source part uses the transform ``fhat`` of the modal forcing.
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=float))
    v_coef = np.broadcast_to(np.asarray(v_coef, dtype=float), lams.shape)
    contour = default_contour(params.alpha) if contour is None else contour
    contour.check(params.alpha)
    z, dz = contour_nodes(contour, t)
    g = g_symbol(params, z)
    kernel = np.exp(z * t) * dz * z**derivative
    init_part = (g / z)[:, None]
    if fhat is not None:
        src = (np.asarray(fhat(z), dtype=complex)
               / (params.mu * (1.0 + params.b * z**params.beta)))[:, None]
    out = np.empty(lams.shape)
    for s in range(0, lams.size, chunk):
        lam = lams[s:s + chunk][None, :]
        inv = 1.0 / (g[:, None] + lam)
        vals = init_part * inv * v_coef[s:s + chunk][None, :]
        if fhat is not None:
            vals = vals + src * inv
        out[s:s + chunk] = (kernel @ vals).imag / math.pi
    if not np.all(np.isfinite(out)):
        raise OracleError("non-finite quadrature sum in modal inversion")
    return out


def sine_coefficients(case_or_field, k: int, l: int) -> float:
    """Coefficient of ``sin(k pi x) sin(l pi y)`` in the initial data (or a field)."""
    if k < 1 or l < 1:
        raise ValueError("mode indices start at 1")
    field = getattr(case_or_field, "initial", case_or_field)
    if field is None:
        return 0.0
    if field.sine_coef is None:
        raise OracleError(f"field {field.name!r} has no closed-form sine coefficients")
    return float(field.sine_coef(k, l))


def _coefficient_table(field, mode_cut: int) -> np.ndarray:
    table = np.zeros((mode_cut, mode_cut))
    if field is None:
        return table
    if field.sine_coef is None:
        raise OracleError(f"field {field.name!r} has no closed-form sine coefficients")
    for k in range(1, mode_cut + 1):
        for l in range(1, mode_cut + 1):
            table[k - 1, l - 1] = field.sine_coef(k, l)
    return table


def default_mode_cut(case: ProblemCase) -> int:
    fields = [case.initial, case.source.spatial if case.source is not None else None]
    rough = any(f is not None and f.regularity_tag == "nonsmooth" for f in fields)
    return 63 if rough else 31


def modal_coefficients(params: ModelParams, case: ProblemCase, t: float,
                       mode_cut: Optional[int] = None,
                       contour: Optional[Contour] = None) -> np.ndarray:
    """Table ``u_kl(t)`` of sine coefficients of the exact solution."""
    mode_cut = default_mode_cut(case) if mode_cut is None else int(mode_cut)
    if mode_cut < 1:
        raise ValueError("mode_cut must be at least 1")
    if not t > 0:
        raise ValueError("the oracle needs t > 0")
    cv = _coefficient_table(case.initial, mode_cut)
    src = case.source
    if src is not None:
        if not src.separable or src.laplace is None or src.spatial is None:
            raise OracleError("the oracle needs a separable source with a closed-form transform")
        cf = _coefficient_table(src.spatial, mode_cut)
    else:
        cf = np.zeros_like(cv)
    kk = np.arange(1, mode_cut + 1)
    ssum = kk[:, None] ** 2 + kk[None, :] ** 2
    active = (cv != 0) | (cf != 0)
    uniq, inverse = np.unique(ssum[active], return_inverse=True)
    lams = math.pi**2 * uniq.astype(float)
    out = np.zeros_like(cv)
    if uniq.size == 0:
        return out
    unit_v = modal_solution(params, lams, t, 1.0, None, contour=contour)
    vals = cv[active] * unit_v[inverse]
    if src is not None:
        unit_f = modal_solution(params, lams, t, 0.0, src.laplace, contour=contour)
        vals = vals + cf[active] * unit_f[inverse]
    out[active] = vals
    return out


def evaluate_sine_series(coeffs: np.ndarray, points, chunk: int = 20000) -> np.ndarray:
    """``sum_kl c_kl sin(k pi x) sin(l pi y)`` at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    K = coeffs.shape[0]
    kk = np.arange(1, K + 1) * math.pi
    out = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], chunk):
        p = pts[s:s + chunk]
        sx = np.sin(p[:, :1] * kk[None, :])
        sy = np.sin(p[:, 1:2] * kk[None, :])
        out[s:s + chunk] = np.einsum("pl,pl->p", sx @ coeffs, sy)
    return out


def reference_solution(params: ModelParams, case: ProblemCase, t: float, points,
                       mode_cut: Optional[int] = None,
                       contour: Optional[Contour] = None) -> np.ndarray:
    """Mode-summed exact solution at ``points`` (shape ``(P, 2)``)."""
    coeffs = modal_coefficients(params, case, t, mode_cut, contour)
    return evaluate_sine_series(coeffs, points)


def decay_probe(params: ModelParams, t_grid, lam=None, nu: int = 1, m: int = 0,
                contour: Optional[Contour] = None) -> float:
    """Log-log slope of ``sup_lam lam^nu |E_lam^{(m)}(t)|`` over ``t_grid``.

    ``lam`` may be a single eigenvalue or an array; the default is a geometric
    sweep wide enough to contain the maximiser for every ``t`` in the grid.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    if np.any(t_grid <= 0) or np.any(t_grid > params.T):
        raise ValueError("t_grid must lie in (0, T]")
    if lam is None:
        lam = np.geomspace(2 * math.pi**2, 1e16, 400)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    values = []
    for t in t_grid:
        e = modal_solution(params, lam, float(t), 1.0, None, derivative=m, contour=contour)
        values.append(np.max(lam**nu * np.abs(e)))
    slope, _ = np.polyfit(np.log(t_grid), np.log(values), 1)
    return float(slope)


def evaluate_sine_series_gradient(coeffs: np.ndarray, points, chunk: int = 20000):
    """Gradient ``(d/dx, d/dy)`` of the sine series at each point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    K = coeffs.shape[0]
    kk = np.arange(1, K + 1) * math.pi
    gx = np.empty(pts.shape[0])
    gy = np.empty(pts.shape[0])
    for s in range(0, pts.shape[0], chunk):
        p = pts[s:s + chunk]
        sx, cx = np.sin(p[:, :1] * kk), np.cos(p[:, :1] * kk) * kk
        sy, cy = np.sin(p[:, 1:2] * kk), np.cos(p[:, 1:2] * kk) * kk
        gx[s:s + chunk] = np.einsum("pl,pl->p", cx @ coeffs, sy)
        gy[s:s + chunk] = np.einsum("pl,pl->p", sx @ coeffs, cy)
    return gx, gy
