"""Wald tests with asymptotic and bootstrapped p-values.

Two resampling schemes are provided.  The single-cohort scheme resamples
subjects' coefficient vectors and each subject's residuals, then shrinks the
tested amplitudes to a null-satisfying configuration before regenerating the
data.  The two-cohort scheme resamples coefficient vectors from the pooled
cohorts, which makes the cohorts exchangeable under the null.

Every replicate ``r`` draws from its own substream ``rng.child(r)`` and the
replicates are processed in fixed-size blocks, so p-values do not depend on
the number of worker threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .exceptions import (
    BootstrapFailureError,
    InconsistentOrderError,
    ParameterError,
    SingularCovarianceError,
)
from .rng import RngStream
from .trig import CohortData, IndividualFit, design_matrix, fit_individual
from .twostage import GSpec, contrast_stats, population_amp_phase

__all__ = [
    "TestResult",
    "wald_statistic",
    "wald_two_cohort",
    "chisq_sf",
    "empirical_pvalue",
    "impose_null",
    "wald_test",
    "wald_test_two_cohort",
    "bootstrap_zero_amplitudes",
    "bootstrap_single_amplitude",
    "bootstrap_amplitude_test",
    "bootstrap_two_cohort",
]

MAX_CONDITION = 1e12
MAX_FAILURE_FRACTION = 0.01
BLOCK_SIZE = 64
MAX_RETRIES = 20


@dataclass(frozen=True)
class TestResult:
    """Outcome of one hypothesis test."""

    __test__ = False  # not a pytest class

    statistic: float
    q: int
    p_asymptotic: float
    p_bootstrap: float | None
    replicates: int | None
    method: str
    test: str
    seed: int | None = None
    n_failed: int = 0

    def as_dict(self):
        return asdict(self)


# --------------------------------------------------------------------------
# statistics


def _checked_inverse_solve(value, var):
    value = np.atleast_1d(np.asarray(value, dtype=float))
    var = np.atleast_2d(np.asarray(var, dtype=float))
    if var.shape != (value.size, value.size):
        raise ParameterError(f"covariance shape {var.shape} does not match q={value.size}")
    if not (np.all(np.isfinite(value)) and np.all(np.isfinite(var))):
        raise SingularCovarianceError("non-finite contrast or covariance")
    eig = np.linalg.eigvalsh(0.5 * (var + var.T))
    if eig[-1] <= 0 or eig[0] <= eig[-1] / MAX_CONDITION:
        raise SingularCovarianceError(
            f"contrast covariance is singular or ill-conditioned (eigenvalues {eig[0]:.3g}..{eig[-1]:.3g})"
        )
    return value, np.linalg.solve(var, value)


def wald_statistic(value, var) -> float:
    """``value' var^-1 value``."""
    value, x = _checked_inverse_solve(value, var)
    return max(float(value @ x), 0.0)


def _difference(v1, v0, circular):
    d = np.asarray(v1, dtype=float) - np.asarray(v0, dtype=float)
    if circular is not None:
        mask = np.broadcast_to(np.asarray(circular, dtype=bool), d.shape)
        wrapped = np.arctan2(np.sin(d), np.cos(d))
        d = np.where(mask, wrapped, d)
    return d


def wald_two_cohort(v1, var1, v0, var0, circular=None) -> float:
    """Two independent cohorts: ``d' (var1 + var0)^-1 d`` with ``d = v1 - v0``.

    ``circular`` marks angular components; their difference is wrapped to
    [-pi, pi) before forming the quadratic form.
    """
    d = _difference(np.atleast_1d(v1), np.atleast_1d(v0), circular)
    var = np.atleast_2d(var1) + np.atleast_2d(var0)
    return wald_statistic(d, var)


def chisq_sf(tau: float, q: int) -> float:
    """Upper tail of the central chi-squared distribution."""
    if q < 1:
        raise ParameterError("degrees of freedom must be positive")
    if not math.isfinite(tau) or tau < 0:
        raise ParameterError(f"statistic must be finite and non-negative, got {tau}")
    return float(special.gammaincc(q / 2.0, tau / 2.0))


def empirical_pvalue(tau: float, replicate_taus) -> float:
    """Fraction of replicates at least as large as ``tau`` (ties count)."""
    reps = np.asarray(replicate_taus, dtype=float)
    if reps.size < 1:
        raise ParameterError("need at least one bootstrap replicate")
    return float(np.count_nonzero(tau <= reps)) / reps.size


def _batched_quadratic(d, var):
    """Wald forms over leading axes; NaN where the covariance is unusable."""
    var = 0.5 * (var + np.swapaxes(var, -1, -2))
    q = d.shape[-1]
    out = np.full(d.shape[:-1], np.nan)
    finite = np.all(np.isfinite(d), axis=-1) & np.all(np.isfinite(var), axis=(-1, -2))
    if not np.any(finite):
        return out
    dv, vv = d[finite], var[finite]
    eig = np.linalg.eigvalsh(vv)
    ok = (eig[:, -1] > 0) & (eig[:, 0] > eig[:, -1] / MAX_CONDITION)
    tau = np.full(dv.shape[0], np.nan)
    if np.any(ok):
        x = np.linalg.solve(vv[ok], dv[ok][..., None])[..., 0]
        tau[ok] = np.maximum(np.einsum("bi,bi->b", dv[ok], x), 0.0)
    out[finite] = tau
    return out if q else out


# --------------------------------------------------------------------------
# fitting helpers


def _fits_for(data, order) -> list[IndividualFit]:
    if isinstance(data, CohortData):
        return [fit_individual(s, order) for s in data.subjects]
    fits = list(data)
    if not fits:
        raise ParameterError("no individual fits supplied")
    if any(not isinstance(f, IndividualFit) for f in fits):
        raise ParameterError("expected a CohortData or a sequence of IndividualFit")
    if order is not None and any(f.order != order for f in fits):
        raise InconsistentOrderError(f"fits do not all have order {order}")
    return fits


def _cohort_arrays(fits):
    gammas = np.stack([f.gamma for f in fits])
    within = np.stack([f.within_cov for f in fits])
    return gammas, within


def _method_check(method):
    if method not in ("sts", "rts"):
        raise ParameterError(f"unknown method {method!r}; expected 'sts' or 'rts'")
    return method


def _spec(test) -> GSpec:
    return test if isinstance(test, GSpec) else GSpec(test)


def wald_test(cohort, order, method, spec) -> TestResult:
    """Single-cohort Wald test with the asymptotic chi-squared p-value only."""
    fits = _fits_for(cohort, order)
    spec = _spec(spec)
    gammas, within = _cohort_arrays(fits)
    value, var = contrast_stats(gammas, within, _method_check(method), spec)
    tau = wald_statistic(value, var)
    q = value.size
    return TestResult(tau, q, chisq_sf(tau, q), None, None, method, str(spec))


def wald_test_two_cohort(c1, c0, order, method, spec) -> TestResult:
    spec = _spec(spec)
    f1, f0 = _fits_for(c1, order), _fits_for(c0, order)
    K = f1[0].order
    v1, var1 = contrast_stats(*_cohort_arrays(f1), _method_check(method), spec)
    v0, var0 = contrast_stats(*_cohort_arrays(f0), method, spec)
    tau = wald_two_cohort(v1, var1, v0, var0, circular=spec.circular_mask(K))
    q = v1.size
    return TestResult(tau, q, chisq_sf(tau, q), None, None, method, str(spec))


# --------------------------------------------------------------------------
# null imposition


def impose_null(gammas, pop_amplitudes, pop_phases, harmonics) -> np.ndarray:
    """Recentre the amplitudes of ``harmonics`` so the null holds.

    For each listed harmonic the resampled amplitude minus the population
    amplitude becomes a signed length along the population phase direction;
    the midline and all other harmonics are left untouched.
    """
    out = np.array(gammas, dtype=float, copy=True)
    pop_amplitudes = np.asarray(pop_amplitudes, dtype=float)
    pop_phases = np.asarray(pop_phases, dtype=float)
    for k in harmonics:
        a, b = out[..., 2 * k - 1], out[..., 2 * k]
        signed = np.hypot(a, b) - pop_amplitudes[..., k - 1]
        phase = pop_phases[..., k - 1]
        out[..., 2 * k - 1] = -signed * np.sin(phase)
        out[..., 2 * k] = signed * np.cos(phase)
    return out


# --------------------------------------------------------------------------
# replicate generation


class _CohortPlan:
    """Per-subject design quantities reused by every replicate refit."""

    def __init__(self, fits: Sequence[IndividualFit]):
        self.fits = list(fits)
        self.M = len(self.fits)
        self.order = self.fits[0].order
        self.p = 2 * self.order + 1
        self.gammas, self.within = _cohort_arrays(self.fits)
        self.designs = [design_matrix(f.times, self.order) for f in self.fits]
        self.projections = [f.xtx_inv @ W.T for f, W in zip(self.fits, self.designs)]
        self.xtx_inv = np.stack([f.xtx_inv for f in self.fits])
        self.sizes = np.array([f.n for f in self.fits])
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)[:-1]])
        self.residuals = np.concatenate([f.residuals for f in self.fits])
        self.highs = np.repeat(self.sizes, self.sizes)
        self.base = np.repeat(self.offsets, self.sizes)

    def draw_residuals(self, gen):
        return self.residuals[self.base + gen.integers(0, self.highs)]

    def refit(self, gtilde, eps):
        """Regenerate and refit every subject for a block of replicates.

        ``gtilde`` is ``(B, M, p)`` and ``eps`` ``(B, sum n_i)``.
        """
        B = gtilde.shape[0]
        gammas = np.empty((B, self.M, self.p))
        sigma2 = np.empty((B, self.M))
        for i in range(self.M):
            W, P = self.designs[i], self.projections[i]
            lo = self.offsets[i]
            y = gtilde[:, i, :] @ W.T + eps[:, lo:lo + self.sizes[i]]
            g = y @ P.T
            resid = y - g @ W.T
            gammas[:, i, :] = g
            sigma2[:, i] = np.einsum("bj,bj->b", resid, resid) / (self.sizes[i] - self.p)
        within = sigma2[:, :, None, None] * self.xtx_inv[None]
        return gammas, within


def _run_blocks(rng: RngStream, R: int, block_fn, n_jobs: int):
    """Evaluate ``block_fn(streams)`` on fixed blocks and retry failures."""
    starts = list(range(0, R, BLOCK_SIZE))

    def run(start):
        streams = [rng.child(r) for r in range(start, min(start + BLOCK_SIZE, R))]
        return block_fn(streams)

    if n_jobs and n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            taus = list(pool.map(run, starts))
    else:
        taus = [run(s) for s in starts]
    taus = np.concatenate(taus)

    n_failed = 0
    for r in np.flatnonzero(~np.isfinite(taus)):
        for attempt in range(1, MAX_RETRIES + 1):
            n_failed += 1
            if n_failed > MAX_FAILURE_FRACTION * R:
                raise BootstrapFailureError(
                    f"{n_failed} of {R} bootstrap replicates failed to refit", n_failed, R
                )
            tau = block_fn([rng.child(int(r), attempt)])[0]
            if np.isfinite(tau):
                taus[r] = tau
                break
        else:
            raise BootstrapFailureError(f"replicate {r} failed {MAX_RETRIES} times", n_failed, R)
    return taus, n_failed


def _validate_replicates(R):
    R = int(R)
    if R < 1:
        raise ParameterError("the number of bootstrap replicates must be positive")
    return R


def bootstrap_amplitude_test(
    cohort,
    order,
    method: str,
    spec: GSpec,
    replicates: int,
    rng: RngStream,
    n_jobs: int = 1,
) -> TestResult:
    """Single-cohort bootstrap test of amplitude contrasts.

    ``spec`` is ``zero-amplitudes`` or ``single-amplitude(k)``; only the
    harmonics it names are recentred when building null replicates.
    """
    spec = _spec(spec)
    if spec.kind not in ("zero-amplitudes", "single-amplitude"):
        raise ParameterError(f"{spec} is not a single-cohort amplitude test")
    method = _method_check(method)
    R = _validate_replicates(replicates)
    fits = _fits_for(cohort, order)
    plan = _CohortPlan(fits)
    harmonics = spec.amplitude_harmonics(plan.order)

    value, var = contrast_stats(plan.gammas, plan.within, method, spec)
    tau = wald_statistic(value, var)
    pop_amp, pop_phase = population_amp_phase(plan.gammas, method)

    def block(streams):
        B = len(streams)
        idx = np.empty((B, plan.M), dtype=np.intp)
        eps = np.empty((B, plan.residuals.size))
        for b, s in enumerate(streams):
            gen = s.generator
            idx[b] = gen.integers(0, plan.M, plan.M)
            eps[b] = plan.draw_residuals(gen)
        gtilde = impose_null(plan.gammas[idx], pop_amp, pop_phase, harmonics)
        gammas, within = plan.refit(gtilde, eps)
        v, vv = contrast_stats(gammas, within, method, spec)
        return _batched_quadratic(v, vv)

    taus, n_failed = _run_blocks(rng, R, block, n_jobs)
    q = value.size
    return TestResult(
        statistic=tau,
        q=q,
        p_asymptotic=chisq_sf(tau, q),
        p_bootstrap=empirical_pvalue(tau, taus),
        replicates=R,
        method=method,
        test=str(spec),
        seed=rng.seed,
        n_failed=n_failed,
    )


def bootstrap_zero_amplitudes(cohort, order, method, replicates, rng, n_jobs=1) -> TestResult:
    """Bootstrap test that every harmonic amplitude of the cohort is zero."""
    return bootstrap_amplitude_test(
        cohort, order, method, GSpec.zero_amplitudes(), replicates, rng, n_jobs
    )


def bootstrap_single_amplitude(cohort, order, harmonic, method, replicates, rng, n_jobs=1) -> TestResult:
    """Bootstrap test that the amplitude of one harmonic is zero."""
    return bootstrap_amplitude_test(
        cohort, order, method, GSpec.single_amplitude(harmonic), replicates, rng, n_jobs
    )


def bootstrap_two_cohort(
    c1,
    c0,
    order,
    method: str,
    test,
    replicates: int,
    rng: RngStream,
    n_jobs: int = 1,
) -> TestResult:
    """Bootstrap test of ``g(cohort 1) = g(cohort 0)``.

    Coefficient vectors are resampled from both cohorts pooled; each subject
    keeps its own measurement times and residual pool.
    """
    spec = _spec(test)
    if spec.kind not in ("equal-midlines", "equal-rhythms"):
        raise ParameterError(f"{spec} is not a two-cohort test")
    method = _method_check(method)
    R = _validate_replicates(replicates)
    f1, f0 = _fits_for(c1, order), _fits_for(c0, order)
    if f1[0].order != f0[0].order:
        raise InconsistentOrderError("cohorts were fitted with different orders")
    p1, p0 = _CohortPlan(f1), _CohortPlan(f0)
    K = p1.order
    mask = spec.circular_mask(K)

    v1, var1 = contrast_stats(p1.gammas, p1.within, method, spec)
    v0, var0 = contrast_stats(p0.gammas, p0.within, method, spec)
    tau = wald_two_cohort(v1, var1, v0, var0, circular=mask)
    pooled = np.concatenate([p1.gammas, p0.gammas])
    n_pool = pooled.shape[0]

    def block(streams):
        B = len(streams)
        i1 = np.empty((B, p1.M), dtype=np.intp)
        i0 = np.empty((B, p0.M), dtype=np.intp)
        e1 = np.empty((B, p1.residuals.size))
        e0 = np.empty((B, p0.residuals.size))
        for b, s in enumerate(streams):
            gen = s.generator
            i1[b] = gen.integers(0, n_pool, p1.M)
            i0[b] = gen.integers(0, n_pool, p0.M)
            e1[b] = p1.draw_residuals(gen)
            e0[b] = p0.draw_residuals(gen)
        g1, w1 = p1.refit(pooled[i1], e1)
        g0, w0 = p0.refit(pooled[i0], e0)
        a1, b1 = contrast_stats(g1, w1, method, spec)
        a0, b0 = contrast_stats(g0, w0, method, spec)
        return _batched_quadratic(_difference(a1, a0, mask), b1 + b0)

    taus, n_failed = _run_blocks(rng, R, block, n_jobs)
    q = v1.size
    return TestResult(
        statistic=tau,
        q=q,
        p_asymptotic=chisq_sf(tau, q),
        p_bootstrap=empirical_pvalue(tau, taus),
        replicates=R,
        method=method,
        test=str(spec),
        seed=rng.seed,
        n_failed=n_failed,
    )
