"""Population-level estimation from individual fits.

STS averages the linear coefficient vectors directly.  RTS first maps every
fit to ``[midline, (amplitude, sin phase, cos phase) per harmonic]`` and
averages those, which removes the amplitude attenuation caused by phase
dispersion across subjects.

The numerical kernels here broadcast over arbitrary leading axes, so the
bootstrap can evaluate thousands of replicate cohorts with the exact same
code that serves a single analysis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .exceptions import (
    DegeneratePointError,
    InconsistentOrderError,
    InsufficientCohortError,
    ParameterError,
)
from .trig import AmpPhaseParams, IndividualFit, LinearParams

__all__ = [
    "GSpec",
    "StsEstimate",
    "RtsEstimate",
    "sts_estimate",
    "rts_estimate",
    "rts_transform",
    "apply_g",
    "estimate",
    "METHODS",
]

METHODS = ("sts", "rts")

_G_KINDS = ("zero-amplitudes", "equal-midlines", "equal-rhythms", "single-amplitude")


@dataclass(frozen=True)
class GSpec:
    """Contrast ``g`` whose null value is zero.

    ``harmonic`` is only used by ``single-amplitude`` (1-based).
    """

    kind: str
    harmonic: int | None = None

    def __post_init__(self):
        if self.kind not in _G_KINDS:
            raise ParameterError(f"unknown contrast {self.kind!r}; expected one of {_G_KINDS}")
        if self.kind == "single-amplitude":
            if self.harmonic is None or int(self.harmonic) < 1:
                raise ParameterError("single-amplitude needs a harmonic index >= 1")
            object.__setattr__(self, "harmonic", int(self.harmonic))
        elif self.harmonic is not None:
            raise ParameterError(f"{self.kind} does not take a harmonic index")

    @classmethod
    def zero_amplitudes(cls):
        return cls("zero-amplitudes")

    @classmethod
    def equal_midlines(cls):
        return cls("equal-midlines")

    @classmethod
    def equal_rhythms(cls):
        return cls("equal-rhythms")

    @classmethod
    def single_amplitude(cls, k):
        return cls("single-amplitude", k)

    def q(self, order: int) -> int:
        return {
            "zero-amplitudes": order,
            "equal-midlines": 1,
            "equal-rhythms": 2 * order,
            "single-amplitude": 1,
        }[self.kind]

    def check(self, order: int):
        if self.kind in ("zero-amplitudes", "equal-rhythms") and order < 1:
            raise ParameterError(f"{self.kind} needs at least one harmonic")
        if self.kind == "single-amplitude" and self.harmonic > order:
            raise ParameterError(f"harmonic {self.harmonic} exceeds model order {order}")

    def circular_mask(self, order: int) -> np.ndarray:
        """Which output components are angles (wrapped when contrasted)."""
        mask = np.zeros(self.q(order), dtype=bool)
        if self.kind == "equal-rhythms":
            mask[1::2] = True
        return mask

    def amplitude_harmonics(self, order: int) -> list[int]:
        """Harmonics whose amplitude the contrast sets to zero."""
        if self.kind == "zero-amplitudes":
            return list(range(1, order + 1))
        if self.kind == "single-amplitude":
            return [self.harmonic]
        return []

    def __str__(self):
        if self.kind == "single-amplitude":
            return f"single-amplitude({self.harmonic})"
        return self.kind


# --------------------------------------------------------------------------
# array kernels (leading axes broadcast)


def _order_of(width: int, per_harmonic: int) -> int:
    k, rem = divmod(width - 1, per_harmonic)
    if rem:
        raise ParameterError(f"vector length {width} is not 1 + {per_harmonic}K")
    return k


def rts_transform_array(gammas: np.ndarray) -> np.ndarray:
    """Map ``(..., 2K+1)`` linear coefficients to ``(..., 3K+1)`` RTS vectors."""
    gammas = np.asarray(gammas, dtype=float)
    K = _order_of(gammas.shape[-1], 2)
    a, b = gammas[..., 1::2], gammas[..., 2::2]
    amp = np.hypot(a, b)
    phase = np.arctan2(-a, b)
    out = np.empty(gammas.shape[:-1] + (3 * K + 1,))
    out[..., 0] = gammas[..., 0]
    out[..., 1::3] = amp
    out[..., 2::3] = np.sin(phase)
    out[..., 3::3] = np.cos(phase)
    return out


def rts_transform_jacobian(gammas: np.ndarray) -> np.ndarray:
    """Derivative of :func:`rts_transform_array`, shape ``(..., 3K+1, 2K+1)``."""
    gammas = np.asarray(gammas, dtype=float)
    K = _order_of(gammas.shape[-1], 2)
    J = np.zeros(gammas.shape[:-1] + (3 * K + 1, 2 * K + 1))
    J[..., 0, 0] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        for k in range(1, K + 1):
            a, b = gammas[..., 2 * k - 1], gammas[..., 2 * k]
            amp = np.hypot(a, b)
            amp3 = amp ** 3
            ia, ib = 2 * k - 1, 2 * k
            J[..., 3 * k - 2, ia] = a / amp
            J[..., 3 * k - 2, ib] = b / amp
            # sin(phase) = -a / amp, cos(phase) = b / amp
            J[..., 3 * k - 1, ia] = -(b * b) / amp3
            J[..., 3 * k - 1, ib] = a * b / amp3
            J[..., 3 * k, ia] = -a * b / amp3
            J[..., 3 * k, ib] = (a * a) / amp3
    return J


def g_linear(alpha: np.ndarray, spec: GSpec):
    """Contrast and Jacobian on linear coefficients ``(..., 2K+1)``.

    Returns ``value (..., q)`` and ``G (..., q, 2K+1)``.  Entries that need
    a zero amplitude come back non-finite.
    """
    alpha = np.asarray(alpha, dtype=float)
    K = _order_of(alpha.shape[-1], 2)
    spec.check(K)
    q = spec.q(K)
    lead = alpha.shape[:-1]
    value = np.empty(lead + (q,))
    G = np.zeros(lead + (q, 2 * K + 1))
    if spec.kind == "equal-midlines":
        value[..., 0] = alpha[..., 0]
        G[..., 0, 0] = 1.0
        return value, G

    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.kind == "equal-rhythms":
            for k in range(1, K + 1):
                a, b = alpha[..., 2 * k - 1], alpha[..., 2 * k]
                amp = np.hypot(a, b)
                row = 2 * (k - 1)
                value[..., row] = amp
                value[..., row + 1] = np.arctan2(-a, b)
                G[..., row, 2 * k - 1] = a / amp
                G[..., row, 2 * k] = b / amp
                G[..., row + 1, 2 * k - 1] = -b / amp ** 2
                G[..., row + 1, 2 * k] = a / amp ** 2
        else:
            for row, k in enumerate(spec.amplitude_harmonics(K)):
                a, b = alpha[..., 2 * k - 1], alpha[..., 2 * k]
                amp = np.hypot(a, b)
                value[..., row] = amp
                G[..., row, 2 * k - 1] = a / amp
                G[..., row, 2 * k] = b / amp
    return value, G


def g_rts(beta: np.ndarray, spec: GSpec):
    """Contrast and Jacobian on RTS vectors ``(..., 3K+1)``."""
    beta = np.asarray(beta, dtype=float)
    K = _order_of(beta.shape[-1], 3)
    spec.check(K)
    q = spec.q(K)
    lead = beta.shape[:-1]
    value = np.empty(lead + (q,))
    G = np.zeros(lead + (q, 3 * K + 1))
    if spec.kind == "equal-midlines":
        value[..., 0] = beta[..., 0]
        G[..., 0, 0] = 1.0
        return value, G

    if spec.kind == "equal-rhythms":
        with np.errstate(divide="ignore", invalid="ignore"):
            for k in range(1, K + 1):
                s, c = beta[..., 3 * k - 1], beta[..., 3 * k]
                r2 = s * s + c * c
                row = 2 * (k - 1)
                value[..., row] = beta[..., 3 * k - 2]
                G[..., row, 3 * k - 2] = 1.0
                value[..., row + 1] = np.arctan2(s, c)
                G[..., row + 1, 3 * k - 1] = c / r2
                G[..., row + 1, 3 * k] = -s / r2
    else:
        for row, k in enumerate(spec.amplitude_harmonics(K)):
            value[..., row] = beta[..., 3 * k - 2]
            G[..., row, 3 * k - 2] = 1.0
    return value, G


def population_moments(vectors: np.ndarray):
    """Mean and ``M - 1`` sample covariance over axis ``-2``."""
    vectors = np.asarray(vectors, dtype=float)
    M = vectors.shape[-2]
    mean = vectors.mean(axis=-2)
    dev = vectors - mean[..., None, :]
    cov = np.einsum("...mi,...mj->...ij", dev, dev) / (M - 1)
    return mean, cov


def _sandwich_mean(G, within):
    # mean over subjects of G_i Sigma_i G_i^T
    M = G.shape[-3]
    return np.einsum("...mqi,...mij,...mrj->...qr", G, within, G) / M


def contrast_stats(gammas: np.ndarray, within: np.ndarray, method: str, spec: GSpec):
    """Contrast value and Delta-method variance for stacked cohorts.

    Parameters
    ----------
    gammas : array (..., M, 2K+1)
        Individual linear estimates.
    within : array (..., M, 2K+1, 2K+1)
        Within-subject covariance estimates.
    method : {'sts', 'rts'}
    spec : GSpec

    Returns
    -------
    value : array (..., q)
    var : array (..., q, q)
    """
    gammas = np.asarray(gammas, dtype=float)
    M = gammas.shape[-2]
    if method == "sts":
        center, D = population_moments(gammas)
        value, Gc = g_linear(center, spec)
        _, Gi = g_linear(gammas, spec)
    elif method == "rts":
        thetas = rts_transform_array(gammas)
        center, D = population_moments(thetas)
        value, Gc = g_rts(center, spec)
        if spec.kind == "equal-midlines":
            Gi = np.zeros(gammas.shape[:-1] + (1, gammas.shape[-1]))
            Gi[..., 0, 0] = 1.0
        else:
            _, G1 = g_rts(thetas, spec)
            Gi = G1 @ rts_transform_jacobian(gammas)
    else:
        raise ParameterError(f"unknown method {method!r}; expected 'sts' or 'rts'")
    between = Gc @ D @ np.swapaxes(Gc, -1, -2)
    var = (between + _sandwich_mean(Gi, within)) / M
    return value, 0.5 * (var + np.swapaxes(var, -1, -2))


def population_amp_phase(gammas: np.ndarray, method: str):
    """Population amplitudes and phases ``(..., K)`` from stacked estimates."""
    gammas = np.asarray(gammas, dtype=float)
    if method == "sts":
        alpha = gammas.mean(axis=-2)
        a, b = alpha[..., 1::2], alpha[..., 2::2]
        return np.hypot(a, b), np.arctan2(-a, b)
    if method == "rts":
        beta = rts_transform_array(gammas).mean(axis=-2)
        return beta[..., 1::3], np.arctan2(beta[..., 2::3], beta[..., 3::3])
    raise ParameterError(f"unknown method {method!r}; expected 'sts' or 'rts'")


# --------------------------------------------------------------------------
# estimate objects


def _stack_fits(fits: Sequence[IndividualFit]):
    fits = list(fits)
    if len(fits) < 2:
        raise InsufficientCohortError(
            f"population estimation needs at least 2 subjects, got {len(fits)}"
        )
    orders = {f.order for f in fits}
    if len(orders) != 1:
        raise InconsistentOrderError(f"individual fits mix harmonic orders {sorted(orders)}")
    gammas = np.stack([f.gamma for f in fits])
    within = np.stack([f.within_cov for f in fits])
    return fits, gammas, within, orders.pop()


@dataclass(frozen=True, eq=False)
class StsEstimate:
    """Average of individual linear estimates with its covariance split."""

    alpha: np.ndarray
    between_cov: np.ndarray
    mean_within_cov: np.ndarray
    var_alpha: np.ndarray
    M: int
    K: int
    fits: tuple

    method = "sts"

    @property
    def midline(self) -> float:
        return float(self.alpha[0])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.hypot(self.alpha[1::2], self.alpha[2::2])

    @property
    def phases(self) -> np.ndarray:
        return np.arctan2(-self.alpha[1::2], self.alpha[2::2])

    def amp_phase(self) -> AmpPhaseParams:
        return AmpPhaseParams(self.midline, self.amplitudes, self.phases)

    def linear_params(self) -> LinearParams:
        return LinearParams(self.alpha)


@dataclass(frozen=True, eq=False)
class RtsEstimate:
    """Average of per-subject ``[midline, (amp, sin, cos) per harmonic]`` vectors."""

    beta_tilde: np.ndarray
    between_cov: np.ndarray
    individual_transforms: np.ndarray
    M: int
    K: int
    fits: tuple

    method = "rts"

    @property
    def midline(self) -> float:
        return float(self.beta_tilde[0])

    @property
    def amplitudes(self) -> np.ndarray:
        return self.beta_tilde[1::3].copy()

    @property
    def phases(self) -> np.ndarray:
        # scale-invariant, so the averaged (sin, cos) pair is not renormalized
        return np.arctan2(self.beta_tilde[2::3], self.beta_tilde[3::3])

    def amp_phase(self) -> AmpPhaseParams:
        return AmpPhaseParams(self.midline, self.amplitudes, self.phases)

    def linear_params(self) -> LinearParams:
        amps, phases = self.amplitudes, self.phases
        coeffs = np.empty(2 * self.K + 1)
        coeffs[0] = self.midline
        coeffs[1::2] = -amps * np.sin(phases)
        coeffs[2::2] = amps * np.cos(phases)
        return LinearParams(coeffs)


def sts_estimate(fits: Sequence[IndividualFit]) -> StsEstimate:
    fits, gammas, within, K = _stack_fits(fits)
    M = len(fits)
    alpha, D = population_moments(gammas)
    mean_within = within.mean(axis=0)
    var_alpha = (D + mean_within) / M
    return StsEstimate(
        alpha=alpha,
        between_cov=D,
        mean_within_cov=mean_within,
        var_alpha=0.5 * (var_alpha + var_alpha.T),
        M=M,
        K=K,
        fits=tuple(fits),
    )


def rts_transform(fit: IndividualFit | LinearParams | np.ndarray) -> np.ndarray:
    """``[g0, then per harmonic amplitude, sin(phase), cos(phase)]``."""
    if isinstance(fit, IndividualFit):
        gamma = fit.gamma
    elif isinstance(fit, LinearParams):
        gamma = fit.coeffs
    else:
        gamma = np.asarray(fit, dtype=float)
    return rts_transform_array(gamma)


def rts_estimate(fits: Sequence[IndividualFit]) -> RtsEstimate:
    fits, gammas, _, K = _stack_fits(fits)
    thetas = rts_transform_array(gammas)
    beta, D = population_moments(thetas)
    return RtsEstimate(
        beta_tilde=beta,
        between_cov=D,
        individual_transforms=thetas,
        M=len(fits),
        K=K,
        fits=tuple(fits),
    )


def estimate(fits: Sequence[IndividualFit], method: str):
    if method == "sts":
        return sts_estimate(fits)
    if method == "rts":
        return rts_estimate(fits)
    raise ParameterError(f"unknown method {method!r}; expected 'sts' or 'rts'")


def apply_g(est: StsEstimate | RtsEstimate, spec: GSpec):
    """Contrast value and its Delta-method covariance for one estimate.

    Raises
    ------
    DegeneratePointError
        When a needed amplitude (population or individual) is exactly zero.
    """
    gammas = np.stack([f.gamma for f in est.fits])
    within = np.stack([f.within_cov for f in est.fits])
    value, var = contrast_stats(gammas, within, est.method, spec)
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(var))):
        raise DegeneratePointError(
            f"{spec} is not differentiable here (an amplitude is exactly zero)"
        )
    return value, var
