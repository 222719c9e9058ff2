import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from circadia.estimators import CosinorRegressor, TwoStageCosinor, cohort_from_arrays
from circadia.exceptions import InputError, ParameterError


def _long_format(M=8, n=12, seed=0):
    rng = np.random.default_rng(seed)
    t = np.tile(2.0 * np.arange(n), M)
    g = np.repeat([f"s{i}" for i in range(M)], n)
    phase = np.repeat(rng.normal(0.5, 0.2, M), n)
    y = 6 + 1.2 * np.cos(math.pi * t / 12 + phase) + 0.3 * rng.normal(size=t.size)
    return t, y, g


def test_params_and_clone():
    est = TwoStageCosinor(order=2, method="sts")
    assert est.get_params() == {"order": 2, "method": "sts"}
    c = clone(est)
    assert c.get_params() == est.get_params() and c is not est
    assert clone(CosinorRegressor(order=3)).order == 3


def test_cosinor_regressor_recovers_curve():
    t = np.linspace(0, 24, 25)[:-1]
    y = 3 + 0.5 * np.cos(math.pi * t / 12 + 1.0)
    m = CosinorRegressor(order=1).fit(t.reshape(-1, 1), y)
    assert np.allclose(m.predict(t), y, atol=1e-12)
    assert m.score(t, y) == pytest.approx(1.0)


def test_not_fitted():
    with pytest.raises(NotFittedError):
        CosinorRegressor().predict([1.0])
    with pytest.raises(NotFittedError):
        TwoStageCosinor().transform()


def test_two_stage_fit_predict_transform():
    t, y, g = _long_format()
    rts = TwoStageCosinor(order=1, method="rts").fit(t, y, groups=g)
    sts = TwoStageCosinor(order=1, method="sts").fit(t, y, groups=g)
    assert rts.coef_.shape == (4,) and sts.coef_.shape == (3,)
    assert rts.transform().shape == (8, 4) and sts.transform().shape == (8, 3)
    assert rts.midline_ == pytest.approx(sts.midline_)
    assert rts.amplitudes_[0] >= sts.amplitudes_[0] - 1e-12
    assert rts.phases_[0] == pytest.approx(0.5, abs=0.2)
    grid = np.linspace(0, 24, 5)
    assert np.allclose(rts.predict(grid), rts.midline_ + rts.amplitudes_[0] * np.cos(math.pi * grid / 12 + rts.phases_[0]))


def test_zero_amplitudes_test_results():
    t, y, g = _long_format()
    m = TwoStageCosinor(order=1).fit(t, y, groups=g)
    a = m.zero_amplitudes_test(replicates=0)
    assert a.p_bootstrap is None and a.p_asymptotic < 1e-6
    b = m.zero_amplitudes_test(replicates=49, seed=3)
    assert b == m.zero_amplitudes_test(replicates=49, seed=3)
    assert b.replicates == 49 and b.seed == 3


def test_cohort_from_arrays_keeps_first_appearance_order():
    c = cohort_from_arrays([0, 1, 2, 3], [1, 2, 3, 4], ["b", "a", "b", "a"])
    assert [s.subject_id for s in c.subjects] == ["b", "a"]
    assert c.subjects[0].values.tolist() == [1.0, 3.0]


def test_validation():
    t, y, g = _long_format()
    with pytest.raises(InputError):
        TwoStageCosinor().fit(t, y)
    with pytest.raises(ParameterError):
        TwoStageCosinor(method="other").fit(t, y, groups=g)
    with pytest.raises(ParameterError):
        TwoStageCosinor(order=-1).fit(t, y, groups=g)
    with pytest.raises((InputError, ValueError)):
        CosinorRegressor().fit(np.ones((4, 2)), np.ones(4))
