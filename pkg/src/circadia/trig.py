"""Individual-level trigonometric regression on a 24-hour period.

Coefficient vectors use the linear parameterization

    h(t) = g0 + sum_k g[2k-1] sin(k pi t / 12) + g[2k] cos(k pi t / 12)

and convert to the amplitude-phase form

    f(t) = m + sum_k A_k cos(k pi t / 12 + phi_k)

with ``g[2k-1] = -A_k sin(phi_k)`` and ``g[2k] = A_k cos(phi_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .exceptions import (
    InputError,
    InsufficientDataError,
    ParameterError,
    SingularDesignError,
)

__all__ = [
    "SubjectSeries",
    "CohortData",
    "LinearParams",
    "AmpPhaseParams",
    "IndividualFit",
    "design_matrix",
    "fit_individual",
    "gamma_to_theta",
    "theta_to_gamma",
    "circular_diff",
    "predict",
    "n_coefficients",
]

# smallest eigenvalue of W'W allowed, relative to n
RANK_TOLERANCE = 1e-10


def n_coefficients(order: int) -> int:
    return 2 * int(order) + 1


def _finite_vector(values, name) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise InputError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite entries")
    return arr


def _check_order(order) -> int:
    k = int(order)
    if k != order or k < 0:
        raise ParameterError(f"harmonic order must be a non-negative integer, got {order!r}")
    return k


@dataclass(frozen=True, eq=False)
class SubjectSeries:
    """Timestamped measurements of one individual (times in hours)."""

    subject_id: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = _finite_vector(self.times, "times")
        values = _finite_vector(self.values, "values")
        if times.size != values.size:
            raise InputError(
                f"subject {self.subject_id!r}: {times.size} times but {values.size} values"
            )
        if times.size < 1:
            raise InputError(f"subject {self.subject_id!r} has no measurements")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.times.size


@dataclass(frozen=True, eq=False)
class CohortData:
    """A named group of subjects analysed together."""

    cohort_id: str
    subjects: tuple

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if not subjects:
            raise InputError(f"cohort {self.cohort_id!r} has no subjects")
        ids = [s.subject_id for s in subjects]
        if len(set(ids)) != len(ids):
            raise InputError(f"cohort {self.cohort_id!r} has duplicate subject ids")
        object.__setattr__(self, "cohort_id", str(self.cohort_id))
        object.__setattr__(self, "subjects", subjects)

    @property
    def M(self) -> int:
        return len(self.subjects)

    def __len__(self):
        return len(self.subjects)

    def __iter__(self):
        return iter(self.subjects)


@dataclass(frozen=True, eq=False)
class LinearParams:
    """Coefficients ``(g0, g1, g2, ..., g[2K-1], g[2K])`` of the linear model."""

    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _finite_vector(self.coeffs, "coefficients")
        if coeffs.size % 2 != 1:
            raise ParameterError(f"expected 2K+1 coefficients, got {coeffs.size}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @property
    def order(self) -> int:
        return (self.coeffs.size - 1) // 2


@dataclass(frozen=True, eq=False)
class AmpPhaseParams:
    """Midline plus per-harmonic amplitude (>= 0) and phase in [-pi, pi)."""

    midline: float
    amplitudes: np.ndarray
    phases: np.ndarray

    def __post_init__(self):
        amps = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        phases = np.atleast_1d(np.asarray(self.phases, dtype=float))
        if amps.shape != phases.shape or amps.ndim != 1:
            raise ParameterError("amplitudes and phases must be 1-d arrays of equal length")
        if np.any(amps < 0):
            raise ParameterError("amplitudes must be non-negative")
        if not (np.all(np.isfinite(amps)) and np.all(np.isfinite(phases)) and math.isfinite(self.midline)):
            raise ParameterError("non-finite amplitude-phase parameter")
        amps.setflags(write=False)
        phases.setflags(write=False)
        object.__setattr__(self, "midline", float(self.midline))
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "phases", phases)

    @property
    def order(self) -> int:
        return self.amplitudes.size


@dataclass(frozen=True, eq=False)
class IndividualFit:
    """Least-squares fit of one subject.

    ``within_cov`` is ``sigma2 * inv(W'W)``; ``xtx_inv`` keeps the unscaled
    inverse so bootstrap refits can rescale it without refactoring.
    """

    params: LinearParams
    residuals: np.ndarray
    sigma2: float
    within_cov: np.ndarray
    n: int
    times: np.ndarray = field(repr=False)
    xtx_inv: np.ndarray = field(repr=False)
    subject_id: str = ""

    @property
    def order(self) -> int:
        return self.params.order

    @property
    def gamma(self) -> np.ndarray:
        return self.params.coeffs


def design_matrix(times, order: int) -> np.ndarray:
    """Rows ``[1, sin(pi t/12), cos(pi t/12), ..., sin(K pi t/12), cos(K pi t/12)]``."""
    t = _finite_vector(np.atleast_1d(times), "times")
    k = _check_order(order)
    W = np.empty((t.size, n_coefficients(k)))
    W[:, 0] = 1.0
    for h in range(1, k + 1):
        arg = h * math.pi * t / 12.0
        W[:, 2 * h - 1] = np.sin(arg)
        W[:, 2 * h] = np.cos(arg)
    return W


def _solve_normal(W, y):
    xtx = W.T @ W
    try:
        factor = linalg.cho_factor(xtx, lower=True, check_finite=False)
        coef = linalg.cho_solve(factor, W.T @ y, check_finite=False)
        xtx_inv = linalg.cho_solve(factor, np.eye(xtx.shape[0]), check_finite=False)
    except linalg.LinAlgError:
        coef = linalg.lstsq(W, y, lapack_driver="gelsy", check_finite=False)[0]
        xtx_inv = linalg.pinv(xtx)
    return coef, 0.5 * (xtx_inv + xtx_inv.T)


def fit_individual(series: SubjectSeries, order: int) -> IndividualFit:
    """Ordinary least-squares fit of an order-``order`` trigonometric model.

    Raises
    ------
    InsufficientDataError
        If ``n <= 2K + 1``, where the residual variance is undefined.
    SingularDesignError
        If the design matrix is rank deficient, e.g. all times equal mod 24.
    """
    k = _check_order(order)
    p = n_coefficients(k)
    n = series.n
    if n <= p:
        raise InsufficientDataError(
            f"subject {series.subject_id!r}: {n} measurements, order {k} needs more than {p}"
        )
    W = design_matrix(series.times, k)
    eigmin = np.linalg.eigvalsh(W.T @ W)[0]
    if eigmin < RANK_TOLERANCE * n:
        raise SingularDesignError(
            f"subject {series.subject_id!r}: design matrix is rank deficient for order {k}"
        )
    coef, xtx_inv = _solve_normal(W, series.values)
    resid = series.values - W @ coef
    sigma2 = float(resid @ resid) / (n - p)
    resid.setflags(write=False)
    return IndividualFit(
        params=LinearParams(coef),
        residuals=resid,
        sigma2=sigma2,
        within_cov=sigma2 * xtx_inv,
        n=n,
        times=series.times,
        xtx_inv=xtx_inv,
        subject_id=series.subject_id,
    )


def gamma_to_theta(p: LinearParams) -> AmpPhaseParams:
    g = p.coeffs
    sin_part, cos_part = g[1::2], g[2::2]
    amps = np.hypot(sin_part, cos_part)
    phases = np.arctan2(-sin_part, cos_part)
    # atan2 returns +pi for (-0.0, negative); keep the half-open convention
    phases = np.where(phases >= math.pi, -math.pi, phases)
    phases = np.where(amps == 0, 0.0, phases)
    return AmpPhaseParams(float(g[0]), amps, phases)


def theta_to_gamma(p: AmpPhaseParams) -> LinearParams:
    coeffs = np.empty(n_coefficients(p.order))
    coeffs[0] = p.midline
    coeffs[1::2] = -p.amplitudes * np.sin(p.phases)
    coeffs[2::2] = p.amplitudes * np.cos(p.phases)
    return LinearParams(coeffs)


def circular_diff(a, b):
    """Signed angular difference ``a - b`` mapped to [-pi, pi)."""
    d = np.arctan2(np.sin(np.subtract(a, b)), np.cos(np.subtract(a, b)))
    d = np.where(d >= math.pi, -math.pi, d)
    return float(d) if np.ndim(d) == 0 else d


def predict(p: LinearParams | AmpPhaseParams | Sequence[float], times) -> np.ndarray:
    """Evaluate the model at ``times`` (hours)."""
    if isinstance(p, AmpPhaseParams):
        p = theta_to_gamma(p)
    elif not isinstance(p, LinearParams):
        p = LinearParams(p)
    return design_matrix(times, p.order) @ p.coeffs
