"""Convolution-quadrature weights and discrete convolutions.

For a kernel ``K(z) = z^gamma`` the weights are the Taylor coefficients of
``(delta(xi) / tau)^gamma`` with

* backward Euler: ``delta(xi) = 1 - xi``
* second-order backward difference: ``delta(xi) = (1 - xi) + (1 - xi)^2 / 2``.

Both are produced by O(N) recurrences.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class Generator(enum.Enum):
    BE = "be"
    SBD = "sbd"


@dataclass(frozen=True, eq=False)
class CqWeights:
    generator: Generator
    gamma: float
    tau: float
    weights: np.ndarray

    def __len__(self):
        return self.weights.shape[0]

    def __getitem__(self, j):
        return self.weights[j]

    @property
    def N(self) -> int:
        return self.weights.shape[0] - 1


def _check(tau, N):
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau!r}")
    if N < 0 or int(N) != N:
        raise ValueError(f"N must be a nonnegative integer, got {N!r}")


@lru_cache(maxsize=256)
def _be_coefficients(gamma: float, N: int) -> np.ndarray:
    c = np.empty(N + 1)
    c[0] = 1.0
    for j in range(1, N + 1):
        c[j] = c[j - 1] * (j - 1 - gamma) / j
    c.setflags(write=False)
    return c


@lru_cache(maxsize=256)
def _sbd_coefficients(gamma: float, N: int) -> np.ndarray:
    # power of the quadratic p(xi) = 3/2 - 2 xi + xi^2 / 2
    p = (1.5, -2.0, 0.5)
    q = np.zeros(N + 1)
    q[0] = p[0] ** gamma
    for n in range(1, N + 1):
        acc = 0.0
        for k in (1, 2):
            if k > n:
                break
            acc += (k * (gamma + 1.0) - n) * p[k] * q[n - k]
        q[n] = acc / (n * p[0])
    q.setflags(write=False)
    return q


def be_weights(gamma: float, tau: float, N: int) -> CqWeights:
    """Weights of ``((1 - xi) / tau)^gamma``."""
    _check(tau, N)
    c = _be_coefficients(float(gamma), int(N))
    return CqWeights(Generator.BE, float(gamma), float(tau), tau ** (-gamma) * c)


def sbd_weights(gamma: float, tau: float, N: int) -> CqWeights:
    """Weights of ``(delta(xi) / tau)^gamma`` for the BDF2 generating function."""
    _check(tau, N)
    q = _sbd_coefficients(float(gamma), int(N))
    return CqWeights(Generator.SBD, float(gamma), float(tau), tau ** (-gamma) * q)


def weights(generator, gamma: float, tau: float, N: int) -> CqWeights:
    generator = Generator(generator)
    if generator is Generator.BE:
        return be_weights(gamma, tau, N)
    return sbd_weights(gamma, tau, N)


def discrete_convolution(w: CqWeights, history) -> np.ndarray:
    """``sum_{j=0}^{n} w_{n-j} phi^j`` for ``history = (phi^0, ..., phi^n)``.

    ``history`` may hold scalars or vectors along its first axis.
    """
    hist = np.asarray(history, dtype=float)
    n = hist.shape[0] - 1
    if n < 0:
        raise ValueError("empty history")
    if n > w.N:
        raise ValueError(f"history of length {n + 1} exceeds the {w.N + 1} available weights")
    coef = w.weights[n::-1]
    return np.tensordot(coef, hist, axes=(0, 0))


def modified_conv_beta(w: CqWeights, history) -> np.ndarray:
    """Corrected rule ``sum_{j=1}^{n} w_{n-j} phi^j + w_{n-1} phi^0 / 2``."""
    hist = np.asarray(history, dtype=float)
    n = hist.shape[0] - 1
    if n < 1:
        raise ValueError("the modified quadrature is defined from step 1 on")
    if n > w.N:
        raise ValueError(f"history of length {n + 1} exceeds the {w.N + 1} available weights")
    out = np.tensordot(w.weights[n - 1::-1], hist[1:], axes=(0, 0))
    return out + 0.5 * w.weights[n - 1] * hist[0]


def correction_sequence(N: int) -> np.ndarray:
    """``(0, 3/2, 1, 1, ...)`` of length ``N + 1``; SBD image of ``t`` at the nodes."""
    if N < 1:
        raise ValueError("need N >= 1")
    seq = np.ones(N + 1)
    seq[0] = 0.0
    seq[1] = 1.5
    return seq
