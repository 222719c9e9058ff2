import math

import numpy as np
import pytest

from circadia.exceptions import InputError, ParameterError
from circadia.rng import DistributionSpec, RngStream
from circadia.simulate import (
    THRESHOLD_GRID,
    SimSetting,
    dkw_band,
    error_summary,
    generate_datasets,
    generate_subject,
    power_curve,
    run_study,
    summarize,
)
from circadia.trig import AmpPhaseParams, LinearParams, fit_individual, gamma_to_theta, predict
from circadia.twostage import rts_estimate, sts_estimate

# I1(2)/I0(2) by quadrature
BESSEL_RATIO_2 = 0.6977746579640081
# sqrt(ln(2 / 0.05) / 2000)
DKW_EPS_1000 = 0.04294694083467376


def test_parse_and_aliases():
    s = SimSetting.parse("K3, var=low, size=small, snr=low, noise=0.5", study="two-cohort")
    assert (s.order, s.n, s.M, s.phase_variability, s.noise_variance) == (3, 12, 10, "low", 0.5)
    assert SimSetting.parse("k=k1").harmonics == "K1"
    with pytest.raises(ParameterError):
        SimSetting.parse("colour=red")
    with pytest.raises(ParameterError):
        SimSetting(size="huge")


def test_digest_depends_on_every_field():
    a = SimSetting()
    assert a.digest() == SimSetting().digest()
    assert a.digest() != SimSetting(snr="low").digest()
    assert 0 <= a.digest() < 2**63


def test_subject_times_and_noiseless_values():
    zero = DistributionSpec.point_mass(0.0)
    pop = AmpPhaseParams(6.0, [1.5], [math.pi / 4])
    s = generate_subject(RngStream(0), 12, 1, pop, [zero] * 3, zero)
    assert np.allclose(s.times, 2.0 * np.arange(12))
    assert np.allclose(s.values, predict(pop, s.times), atol=1e-12)
    assert np.allclose(fit_individual(s, 1).gamma, [6.0, -1.5 * math.sin(math.pi / 4), 1.5 * math.cos(math.pi / 4)])


def test_subject_validation():
    zero = DistributionSpec.point_mass(0.0)
    pop = AmpPhaseParams(6.0, [1.5], [0.0])
    with pytest.raises(ParameterError):
        generate_subject(RngStream(0), 12, 1, pop, [zero] * 2, zero)
    with pytest.raises(ParameterError):
        generate_subject(RngStream(0), 0, 1, pop, [zero] * 3, zero)


def test_reflected_effects_give_reflected_phases():
    # a phase effect of -x instead of x reflects the subject phase about the population phase
    zero = DistributionSpec.point_mass(0.0)
    pop = AmpPhaseParams(0.0, [1.0], [0.5])
    up = generate_subject(RngStream(0), 12, 1, pop, [zero, zero, DistributionSpec.point_mass(0.3)], zero)
    dn = generate_subject(RngStream(0), 12, 1, pop, [zero, zero, DistributionSpec.point_mass(-0.3)], zero)
    pu = gamma_to_theta(LinearParams(fit_individual(up, 1).gamma)).phases[0]
    pd = gamma_to_theta(LinearParams(fit_individual(dn, 1).gamma)).phases[0]
    assert (pu - 0.5) == pytest.approx(0.5 - pd, abs=1e-12)


def test_dataset4_single_is_flat():
    s = SimSetting(size="small", noise_variance=0.0)
    cohort = generate_datasets(s, 4, 0, 1)
    for subj in cohort.subjects:
        assert np.ptp(subj.values) < 1e-12


def test_two_cohort_null_has_identical_populations():
    s = SimSetting(study="two-cohort")
    for v in (3, 4):
        p0, p1 = s.population(0, v), s.population(1, v)
        assert p0.midline == p1.midline
        assert np.array_equal(p0.amplitudes, p1.amplitudes) and np.array_equal(p0.phases, p1.phases)
    assert s.population(0, 1).midline != s.population(1, 1).midline


def test_generation_is_deterministic():
    s = SimSetting(study="two-cohort", size="small")
    a1, a0 = generate_datasets(s, 1, 3, 9)
    b1, b0 = generate_datasets(s, 1, 3, 9)
    for x, y in zip(a1.subjects + a0.subjects, b1.subjects + b0.subjects):
        assert np.array_equal(x.values, y.values)
    c1, _ = generate_datasets(s, 1, 4, 9)
    assert not np.array_equal(a1.subjects[0].values, c1.subjects[0].values)


def test_power_curve_examples():
    c = power_curve(np.zeros(10))
    assert c.auc == 1.0 and c(0.0) == 1.0
    u = power_curve(THRESHOLD_GRID)
    assert abs(u.auc - 0.5) <= 1e-3
    assert power_curve([0.2, 0.4]).auc == pytest.approx(0.7)
    with pytest.raises(InputError):
        power_curve([])
    with pytest.raises(InputError):
        power_curve([0.1, 1.2])
    with pytest.raises(ParameterError):
        power_curve([0.1], kind="other")


def test_auc_equals_area_under_step_curve():
    p = np.random.default_rng(0).uniform(size=137) ** 2
    c = power_curve(p)
    # exact integral of the right-continuous step function on [0, 1]
    knots = np.concatenate([[0.0], np.sort(p), [1.0]])
    heights = np.arange(p.size + 1) / p.size
    exact = float(np.sum(np.diff(knots) * heights))
    assert c.auc == pytest.approx(exact, abs=1e-12)


def test_dkw_band():
    c = power_curve(np.random.default_rng(1).uniform(size=1000))
    b = dkw_band(c)
    assert b.epsilon == pytest.approx(DKW_EPS_1000, abs=1e-12)
    assert abs(b.epsilon - 0.04295) < 1e-5
    assert np.all((b.lower >= 0) & (b.upper <= 1))
    assert np.all(np.diff(b.lower) >= 0) and np.all(np.diff(b.upper) >= 0)
    assert b.upper[-1] == 1.0 and b.lower[0] == 0.0
    with pytest.raises(ParameterError):
        dkw_band(c, level=1.0)


@pytest.fixture(scope="module")
def noiseless_errors():
    s = SimSetting(size="small", noise_variance=0.0)
    return error_summary(run_study(s, 300, 0, 3, variants=(1, 2)))


def test_sts_attenuation_without_noise():
    # pool many noiseless subjects so the finite-M bias of |alpha| is negligible
    s = SimSetting(size="small", noise_variance=0.0)
    pop, effects = s.population(0, 1), s.effects(0, 1)
    rng = RngStream(3, (0,))
    fits = [
        fit_individual(generate_subject(rng.child(i), s.n, 1, pop, effects, s.noise()), 1)
        for i in range(4000)
    ]
    expected = 1.5 * BESSEL_RATIO_2 - 1.5
    assert abs(expected + 0.453) < 1e-3
    assert sts_estimate(fits).amplitudes[0] - 1.5 == pytest.approx(expected, abs=0.03)
    assert rts_estimate(fits).amplitudes[0] == pytest.approx(1.5, abs=0.03)


def test_error_summary_shape(noiseless_errors):
    e = noiseless_errors["dataset1-rts-amplitude_error"]
    assert len(e["mean"]) == 1 and e["sd"][0] > 0
    assert noiseless_errors["dataset1-sts-midline_error"] == noiseless_errors["dataset1-rts-midline_error"]


def test_noiseless_fixed_phase_recovery():
    # Dataset 2 without noise: fixed phase and a symmetric amplitude effect
    s = SimSetting(size="small", noise_variance=0.0)
    rec = run_study(s, 1, 0, 5, variants=(2,))[0].results[2]
    assert abs(rec["rts"]["phase_error"][0]) < 1e-6
    assert abs(rec["sts"]["phase_error"][0]) < 1e-6
    assert rec["sts"]["amplitude_error"][0] == pytest.approx(rec["rts"]["amplitude_error"][0], abs=1e-6)


def test_rts_amplitude_unaffected_by_phase_spread():
    s = SimSetting(size="small")
    recs = run_study(s, 300, 0, 4, variants=(1, 2))
    e1 = np.array([r.results[1]["rts"]["amplitude_error"][0] for r in recs])
    e2 = np.array([r.results[2]["rts"]["amplitude_error"][0] for r in recs])
    se = math.sqrt(e1.var(ddof=1) / e1.size + e2.var(ddof=1) / e2.size)
    assert abs(e1.mean() - e2.mean()) <= 3 * se


def test_null_type_one_auc_bounded():
    s = SimSetting(size="small")
    curves = summarize(run_study(s, 40, 49, 2, variants=(4,)))
    for method in ("sts", "rts"):
        c = curves[f"dataset4-{method}-zero-amplitudes"]
        assert c.kind == "type-I"
        assert c.auc <= 0.5 + 3 * c.mcse + 0.05


def test_worker_count_does_not_change_records():
    s = SimSetting(study="two-cohort", size="small")
    a = run_study(s, 3, 19, 8, n_jobs=1, variants=(1, 3))
    b = run_study(s, 3, 19, 8, n_jobs=2, variants=(1, 3))
    assert a == b


def test_run_study_validation():
    with pytest.raises(ParameterError):
        run_study(SimSetting(), 0, 0, 1)
    with pytest.raises(ParameterError):
        run_study(SimSetting(), 1, 0, 1, variants=(5,))
