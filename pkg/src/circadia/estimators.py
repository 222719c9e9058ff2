"""scikit-learn compatible wrappers.

:class:`CosinorRegressor` fits one series; :class:`TwoStageCosinor` fits a
cohort given subject labels in ``groups`` and predicts the population curve.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_groups, check_method, check_order, check_times, check_times_values
from .inference import bootstrap_amplitude_test, wald_test
from .rng import RngStream
from .trig import CohortData, LinearParams, SubjectSeries, fit_individual, predict
from .twostage import GSpec, estimate

__all__ = ["CosinorRegressor", "TwoStageCosinor", "cohort_from_arrays"]


def cohort_from_arrays(times, values, groups, cohort_id="0") -> CohortData:
    """Group long-format arrays into a cohort, keeping first-appearance order."""
    t, v = check_times_values(times, values)
    g = check_groups(groups, t.size)
    _, first, inverse = np.unique(g, return_index=True, return_inverse=True)
    subjects = []
    for u in np.argsort(first):
        mask = inverse == u
        subjects.append(SubjectSeries(str(g[first[u]]), t[mask], v[mask]))
    return CohortData(cohort_id, subjects)


class CosinorRegressor(RegressorMixin, BaseEstimator):
    """Least-squares trigonometric regression with a 24 h period.

    Parameters
    ----------
    order : int
        Number of harmonics ``K``.

    Attributes
    ----------
    coef_ : ndarray of shape (2K+1,)
    fit_ : IndividualFit
    """

    def __init__(self, order=1):
        self.order = order

    def fit(self, X, y):
        t, v = check_times_values(X, y)
        self.fit_ = fit_individual(SubjectSeries("0", t, v), check_order(self.order))
        self.coef_ = np.asarray(self.fit_.gamma)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return predict(LinearParams(self.coef_), check_times(X))


class TwoStageCosinor(RegressorMixin, BaseEstimator):
    """Population-level cosinor by the standard or refined two-stage method.

    Parameters
    ----------
    order : int
        Number of harmonics ``K``.
    method : {"rts", "sts"}
        Population estimator.

    Attributes
    ----------
    estimate_ : StsEstimate or RtsEstimate
    coef_ : ndarray
        Population parameters: ``alpha`` (length 2K+1) for STS, ``beta_tilde``
        (length 3K+1) for RTS.
    midline_, amplitudes_, phases_ : population amplitude-phase parameters
    """

    def __init__(self, order=1, method="rts"):
        self.order = order
        self.method = method

    def fit(self, X, y, groups=None):
        cohort = cohort_from_arrays(X, y, groups)
        return self.fit_cohort(cohort)

    def fit_cohort(self, cohort: CohortData):
        """Fit from an already grouped :class:`CohortData`."""
        K = check_order(self.order)
        method = check_method(self.method)
        self.fits_ = [fit_individual(s, K) for s in cohort.subjects]
        self.estimate_ = estimate(self.fits_, method)
        est = self.estimate_
        self.coef_ = np.asarray(est.alpha if method == "sts" else est.beta_tilde)
        self.midline_ = est.midline
        self.amplitudes_ = np.asarray(est.amplitudes)
        self.phases_ = np.asarray(est.phases)
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        """Population curve ``midline + sum_k A_k cos(k pi t / 12 + phi_k)``."""
        check_is_fitted(self, "estimate_")
        return predict(self.estimate_.amp_phase(), check_times(X))

    def transform(self, X=None):
        """Per-subject coefficient vectors (RTS transformed for ``method='rts'``)."""
        check_is_fitted(self, "estimate_")
        if check_method(self.method) == "sts":
            return np.stack([f.gamma for f in self.fits_])
        return np.asarray(self.estimate_.individual_transforms)

    def zero_amplitudes_test(self, replicates=199, seed=0, n_jobs=1):
        """Test that every population amplitude is zero.

        ``replicates=0`` returns the asymptotic chi-squared result only.
        """
        check_is_fitted(self, "estimate_")
        K, method = check_order(self.order), check_method(self.method)
        if replicates == 0:
            return wald_test(self.fits_, K, method, GSpec.zero_amplitudes())
        return bootstrap_amplitude_test(
            self.fits_, K, method, GSpec.zero_amplitudes(), replicates, RngStream(seed), n_jobs
        )
