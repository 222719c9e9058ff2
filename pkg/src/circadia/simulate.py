"""Monte Carlo studies comparing STS and RTS.

A :class:`SimSetting` names one cell of the design (harmonics, phase
variability, size, signal-to-noise) for either the single-cohort study or the
two-cohort study.  Each trial generates four dataset variants, fits both
methods and records estimation errors and bootstrap p-values.  Power and
type-I curves summarise the p-values across trials.

Every random draw is addressed by ``[setting hash, trial, variant, cohort,
subject]`` so a trial's output does not depend on which process ran it.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np

from .exceptions import CircadiaError, InputError, ParameterError, TrialError
from .inference import bootstrap_amplitude_test, bootstrap_two_cohort
from .rng import DistributionSpec, RngStream, sample
from .trig import AmpPhaseParams, CohortData, SubjectSeries, circular_diff, fit_individual
from .twostage import GSpec, estimate

__all__ = [
    "SimSetting",
    "TrialRecord",
    "PowerCurve",
    "Band",
    "generate_subject",
    "generate_datasets",
    "run_trial",
    "run_study",
    "power_curve",
    "dkw_band",
    "summarize",
    "THRESHOLD_GRID",
]

THRESHOLD_GRID = np.arange(1001) / 1000.0

_SQRT_HALF = 1.0 / math.sqrt(2.0)

# per cohort: harmonic phases, von Mises concentrations, signal-to-noise presets
# (population amplitude, design-factor amplitude effect) and midlines
_CONTROL = {
    "phases": {"K1": (math.pi / 4,), "K3": (math.pi / 8, math.pi / 4, 3 * math.pi / 8)},
    "kappa": {"high": 2.0, "low": 8.0},
    "snr": {
        "high": (1.5, (-0.75, 0.75, 0.0, _SQRT_HALF)),
        "low": (0.5, (-0.25, 0.25, 0.0, _SQRT_HALF)),
    },
    "midline": {"high": 6.0, "low": 6.0},
}
_CASE = {
    "phases": {"K1": (math.pi / 2,), "K3": (math.pi / 4, math.pi / 2, 3 * math.pi / 4)},
    "kappa": {"high": 4.0, "low": 16.0},
    "snr": {
        "high": (1.0, (-0.5, 0.5, 0.0, _SQRT_HALF)),
        "low": (0.25, (-0.125, 0.375, 0.0, _SQRT_HALF)),
    },
    "midline": {"high": 5.0, "low": 4.0},
}
_SIZES = {"small": (12, 10), "large": (192, 20)}
_CHOICES = {
    "study": ("single", "two-cohort"),
    "harmonics": ("K1", "K3"),
    "phase_variability": ("high", "low"),
    "size": ("small", "large"),
    "snr": ("high", "low"),
    "amplitude_effect_source": ("quantity-4", "design-factor"),
}
_ALIASES = {
    "var": "phase_variability",
    "variability": "phase_variability",
    "k": "harmonics",
    "amp_effect": "amplitude_effect_source",
    "noise": "noise_variance",
}
VARIANTS = (1, 2, 3, 4)


@dataclass(frozen=True)
class SimSetting:
    """One design cell.

    ``amplitude_effect_source`` picks the subject-level amplitude effect:
    ``quantity-4`` draws ``TN(0, 1/2, -beta, beta)`` (symmetric, mean zero)
    and ``design-factor`` uses the signal-to-noise preset.
    """

    study: str = "single"
    harmonics: str = "K1"
    phase_variability: str = "high"
    size: str = "large"
    snr: str = "high"
    amplitude_effect_source: str = "quantity-4"
    noise_variance: float = 1.0

    def __post_init__(self):
        for name, allowed in _CHOICES.items():
            if getattr(self, name) not in allowed:
                raise ParameterError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if not (math.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ParameterError("noise_variance must be finite and non-negative")
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @classmethod
    def parse(cls, text: str, **overrides) -> "SimSetting":
        """Parse ``"K1,snr=high,size=large,var=high"``-style descriptions."""
        kwargs = dict(overrides)
        for item in filter(None, (s.strip() for s in text.split(","))):
            if "=" in item:
                key, value = (s.strip() for s in item.split("=", 1))
            elif item.upper() in ("K1", "K3"):
                key, value = "harmonics", item.upper()
            else:
                raise ParameterError(f"cannot parse setting item {item!r}")
            key = _ALIASES.get(key.lower(), key.lower().replace("-", "_"))
            if key == "harmonics":
                value = value.upper()
            if key == "noise_variance":
                value = float(value)
            if key not in _CHOICES and key != "noise_variance":
                raise ParameterError(f"unknown setting key {key!r}")
            kwargs[key] = value
        return cls(**kwargs)

    @property
    def order(self) -> int:
        return int(self.harmonics[1:])

    @property
    def n(self) -> int:
        return _SIZES[self.size][0]

    @property
    def M(self) -> int:
        return _SIZES[self.size][1]

    def canonical(self) -> str:
        return ";".join(f"{k}={v!r}" for k, v in sorted(asdict(self).items()))

    def digest(self) -> int:
        """Stable 63-bit identifier used as the first stream coordinate."""
        h = hashlib.blake2b(self.canonical().encode(), digest_size=8).digest()
        return int.from_bytes(h, "big") >> 1

    def label(self) -> str:
        return (
            f"{self.study}:{self.harmonics},var={self.phase_variability},size={self.size},"
            f"snr={self.snr},amp_effect={self.amplitude_effect_source}"
        )

    # population parameters and random-effect specs

    def _table(self, cohort: int):
        if self.study == "single" or cohort == 0:
            return _CONTROL
        return _CASE

    def population(self, cohort: int = 0, variant: int = 1) -> AmpPhaseParams:
        """Population parameters of ``cohort`` (0 control, 1 case) in ``variant``."""
        _check_variant(variant)
        if self.study == "two-cohort" and cohort == 0 and variant in (3, 4):
            return self.population(1, 1)
        t = self._table(cohort)
        K = self.order
        amp = t["snr"][self.snr][0]
        if self.study == "single" and variant in (3, 4):
            amp = 0.0
        return AmpPhaseParams(t["midline"][self.snr], np.full(K, amp), np.array(t["phases"][self.harmonics]))

    def effects(self, cohort: int = 0, variant: int = 1) -> list[DistributionSpec]:
        """Per-parameter random-effect specs ``[b0, (b_amp, b_phase) per harmonic]``."""
        _check_variant(variant)
        t = self._table(cohort)
        pop = self.population(cohort, variant)
        zero = DistributionSpec.point_mass(0.0)
        phase_fixed = variant in (2, 4)
        amp_fixed = self.study == "single" and variant in (3, 4)
        specs = [DistributionSpec.normal(0.0, 1.0)]
        for k in range(self.order):
            if amp_fixed:
                a = zero
            elif self.amplitude_effect_source == "quantity-4":
                a = _truncated_or_point(0.0, 0.5, -pop.amplitudes[k], pop.amplitudes[k])
            else:
                a = _truncated_or_point(*t["snr"][self.snr][1])
            p = zero if phase_fixed else DistributionSpec.von_mises(0.0, t["kappa"][self.phase_variability])
            specs.extend([a, p])
        return specs

    def noise(self) -> DistributionSpec:
        if self.noise_variance == 0:
            return DistributionSpec.point_mass(0.0)
        return DistributionSpec.normal(0.0, self.noise_variance)


def _check_variant(variant):
    if variant not in VARIANTS:
        raise ParameterError(f"dataset variant must be one of {VARIANTS}, got {variant!r}")


def _truncated_or_point(mean, var, lower, upper) -> DistributionSpec:
    # a zero-width window leaves a single admissible value
    if not lower < upper:
        return DistributionSpec.point_mass(lower)
    return DistributionSpec.truncated_normal(mean, var, lower, upper)


# --------------------------------------------------------------------------
# data generation


def generate_subject(
    rng: RngStream,
    n: int,
    K: int,
    pop: AmpPhaseParams,
    effects: Sequence[DistributionSpec],
    noise: DistributionSpec,
    subject_id: str = "s0",
) -> SubjectSeries:
    """Simulate one subject on the equispaced grid ``24 (j - 1) / n``.

    The subject's amplitude-phase parameters are ``pop`` plus one draw from
    each entry of ``effects``; measurement noise is added afterwards.
    """
    n = int(n)
    if n <= 0:
        raise ParameterError("n must be positive")
    if pop.order != K or len(effects) != 2 * K + 1:
        raise ParameterError(f"expected {2 * K + 1} effect specs and an order-{K} population")
    if not all(isinstance(e, DistributionSpec) for e in effects):
        raise ParameterError("effects must be DistributionSpec instances")
    b = np.array([sample(rng, e) for e in effects])
    times = 24.0 * np.arange(n) / n
    values = np.full(n, pop.midline + b[0])
    for k in range(1, K + 1):
        amp = pop.amplitudes[k - 1] + b[2 * k - 1]
        phase = pop.phases[k - 1] + b[2 * k]
        values += amp * np.cos(k * math.pi * times / 12.0 + phase)
    values = values + sample(rng, noise, n)
    return SubjectSeries(subject_id, times, values)


def _cohort(setting: SimSetting, rng: RngStream, cohort: int, variant: int) -> CohortData:
    pop = setting.population(cohort, variant)
    effects = setting.effects(cohort, variant)
    noise = setting.noise()
    subjects = [
        generate_subject(rng.child(i), setting.n, setting.order, pop, effects, noise, f"c{cohort}s{i}")
        for i in range(setting.M)
    ]
    return CohortData(str(cohort), subjects)


def _trial_stream(setting: SimSetting, trial: int, variant: int, seed: int) -> RngStream:
    return RngStream(seed, (setting.digest(), trial, variant))


def generate_datasets(setting: SimSetting, variant: int, trial: int, seed: int):
    """Dataset ``variant`` of ``trial``.

    Returns a :class:`CohortData` for the single-cohort study and a
    ``(case, control)`` pair for the two-cohort study.
    """
    _check_variant(variant)
    base = _trial_stream(setting, trial, variant, seed)
    if setting.study == "single":
        return _cohort(setting, base.child(0), 0, variant)
    return _cohort(setting, base.child(1), 1, variant), _cohort(setting, base.child(0), 0, variant)


# --------------------------------------------------------------------------
# trials


@dataclass(frozen=True)
class TrialRecord:
    """Results of one trial.

    ``results[variant][method]`` holds the recorded quantities.  For the
    single-cohort study these are ``midline_error``, ``amplitude_error`` and
    ``phase_error`` (lists over harmonics) plus ``p_zero_amplitudes``; for the
    two-cohort study ``p_equal_midlines`` and ``p_equal_rhythms``.
    """

    trial: int
    study: str
    results: dict = field(default_factory=dict)

    def pvalues(self, variant: int, method: str, test: str) -> float:
        return self.results[variant][method][f"p_{test.replace('-', '_')}"]


def _errors(fits, method, pop: AmpPhaseParams) -> dict:
    est = estimate(fits, method)
    return {
        "midline_error": float(est.midline - pop.midline),
        "amplitude_error": [float(x) for x in est.amplitudes - pop.amplitudes],
        "phase_error": [float(circular_diff(a, b)) for a, b in zip(est.phases, pop.phases)],
    }


def run_trial(setting: SimSetting, trial: int, R: int, seed: int, variants=VARIANTS) -> TrialRecord:
    """Generate, fit and test every requested variant of one trial."""
    K = setting.order
    results = {}
    for v in variants:
        base = _trial_stream(setting, trial, v, seed)
        data = generate_datasets(setting, v, trial, seed)
        per_method = {}
        if setting.study == "single":
            fits = [fit_individual(s, K) for s in data.subjects]
            pop = setting.population(0, v)
            for method in ("sts", "rts"):
                rec = _errors(fits, method, pop) if v in (1, 2) else {}
                if R > 0:
                    res = bootstrap_amplitude_test(
                        fits, K, method, GSpec.zero_amplitudes(), R, base.child(2)
                    )
                    rec["p_zero_amplitudes"] = res.p_bootstrap
                per_method[method] = rec
        else:
            f1 = [fit_individual(s, K) for s in data[0].subjects]
            f0 = [fit_individual(s, K) for s in data[1].subjects]
            for method in ("sts", "rts"):
                rec = {}
                if R > 0:
                    for slot, test in ((2, "equal-midlines"), (3, "equal-rhythms")):
                        res = bootstrap_two_cohort(f1, f0, K, method, test, R, base.child(slot))
                        rec[f"p_{test.replace('-', '_')}"] = res.p_bootstrap
                per_method[method] = rec
        results[v] = per_method
    return TrialRecord(trial, setting.study, results)


def _run_one(args):
    setting, trial, R, seed, variants = args
    try:
        return run_trial(setting, trial, R, seed, variants)
    except CircadiaError as exc:
        raise TrialError(trial, exc) from exc
    except (ValueError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise TrialError(trial, exc) from exc


def resolve_jobs(n_jobs) -> int:
    if n_jobs in (None, "auto", 0):
        return os.cpu_count() or 1
    n = int(n_jobs)
    if n < 1:
        raise ParameterError("number of workers must be positive")
    return n


def run_study(
    setting: SimSetting,
    trials: int,
    R: int,
    seed: int,
    n_jobs: int | str = 1,
    variants: Sequence[int] = VARIANTS,
) -> list[TrialRecord]:
    """Run ``trials`` independent trials, optionally in worker processes.

    ``R = 0`` skips the bootstrap and records estimation errors only.  The
    returned list is ordered by trial index whatever the worker count.
    """
    trials = int(trials)
    if trials < 1:
        raise ParameterError("trials must be at least 1")
    if int(R) < 0:
        raise ParameterError("R must be non-negative")
    variants = tuple(variants)
    for v in variants:
        _check_variant(v)
    jobs = [(setting, t, int(R), int(seed), variants) for t in range(trials)]
    workers = min(resolve_jobs(n_jobs), trials)
    if workers <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs, chunksize=max(1, trials // (4 * workers))))


# --------------------------------------------------------------------------
# curves


@dataclass(frozen=True, eq=False)
class PowerCurve:
    """Empirical fraction of p-values at or below each threshold."""

    pvalues: np.ndarray
    kind: str
    auc: float
    label: str = ""

    @property
    def N(self) -> int:
        return self.pvalues.size

    def __call__(self, rho):
        return np.searchsorted(self.pvalues, np.asarray(rho, dtype=float), side="right") / self.N

    @property
    def mcse(self) -> float:
        """Monte Carlo standard error of the AUC."""
        if self.N < 2:
            return float("nan")
        return float(np.std(1.0 - self.pvalues, ddof=1) / math.sqrt(self.N))


def power_curve(pvalues, kind: str = "power", label: str = "") -> PowerCurve:
    """Build a curve; its AUC is ``mean(1 - p)``."""
    if kind not in ("power", "type-I"):
        raise ParameterError("kind must be 'power' or 'type-I'")
    p = np.sort(np.asarray(pvalues, dtype=float).ravel())
    if p.size == 0:
        raise InputError("cannot build a curve from no p-values")
    if not np.all((p >= 0) & (p <= 1)):
        raise InputError("p-values must lie in [0, 1]")
    p.setflags(write=False)
    return PowerCurve(p, kind, float(np.mean(1.0 - p)), label)


@dataclass(frozen=True, eq=False)
class Band:
    level: float
    epsilon: float
    thresholds: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def dkw_band(curve: PowerCurve, level: float = 0.95, thresholds=None) -> Band:
    """Dvoretzky-Kiefer-Wolfowitz confidence band around ``curve``."""
    if not 0 < level < 1:
        raise ParameterError("level must lie in (0, 1)")
    grid = THRESHOLD_GRID if thresholds is None else np.asarray(thresholds, dtype=float)
    eps = math.sqrt(math.log(2.0 / (1.0 - level)) / (2.0 * curve.N))
    value = curve(grid)
    return Band(level, eps, grid, np.clip(value - eps, 0.0, 1.0), np.clip(value + eps, 0.0, 1.0))


_SINGLE_GROUPS = {"power": (1, 2), "type-I": (3, 4)}
_TWO_GROUPS = {"power": (1, 2), "type-I": (3, 4)}


def summarize(records: Sequence[TrialRecord]) -> dict:
    """Per-variant, per-method curves of every recorded p-value.

    Variants 1-2 are alternatives (power curves) and 3-4 nulls (type-I).
    """
    if not records:
        raise InputError("no trial records")
    out = {}
    variants = sorted(records[0].results)
    for v in variants:
        kind = "power" if v in (1, 2) else "type-I"
        for method in ("sts", "rts"):
            keys = [k for k in records[0].results[v][method] if k.startswith("p_")]
            for key in keys:
                test = key[2:].replace("_", "-")
                p = [r.results[v][method][key] for r in records]
                label = f"dataset{v}-{method}-{test}"
                out[label] = power_curve(p, kind, label)
    return out


def error_summary(records: Sequence[TrialRecord]) -> dict:
    """Mean and standard deviation of the estimation errors per variant and method."""
    out = {}
    for v in sorted(records[0].results):
        for method in ("sts", "rts"):
            first = records[0].results[v][method]
            for key in ("midline_error", "amplitude_error", "phase_error"):
                if key not in first:
                    continue
                vals = np.array([np.atleast_1d(r.results[v][method][key]) for r in records], dtype=float)
                out[f"dataset{v}-{method}-{key}"] = {
                    "mean": vals.mean(axis=0).tolist(),
                    "sd": (vals.std(axis=0, ddof=1) if len(records) > 1 else np.zeros(vals.shape[1])).tolist(),
                }
    return out


def full_scale(setting: SimSetting) -> tuple[int, int]:
    """Trial and replicate counts of the published study."""
    return 1000, 1000


def with_overrides(setting: SimSetting, **kw) -> SimSetting:
    return replace(setting, **kw)
