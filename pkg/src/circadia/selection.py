"""Forward selection of the harmonic order.

Harmonics are added one at a time.  At step ``k`` an order-``k`` model is fit
to every subject and the amplitude of harmonic ``k`` is bootstrap-tested; the
search stops at the first step whose p-value is not below the threshold.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

from .exceptions import InsufficientDataError, ParameterError, SingularDesignError
from .inference import bootstrap_single_amplitude
from .rng import RngStream
from .trig import CohortData, fit_individual

__all__ = ["SelectionStep", "OrderSelection", "forward_order_select"]

DEFAULT_THRESHOLD = 0.05


@dataclass(frozen=True)
class SelectionStep:
    k: int
    p_value: float
    statistic: float
    retained: bool


@dataclass(frozen=True)
class OrderSelection:
    """Outcome of :func:`forward_order_select`.

    ``truncated`` is set when the search stopped because some subject had
    too few measurements for the next order, not because of a test.
    """

    selected: int
    steps: tuple = field(default_factory=tuple)
    method: str = "rts"
    R: int = 0
    seed: int | None = None
    threshold: float = DEFAULT_THRESHOLD
    truncated: bool = False

    def as_dict(self):
        d = asdict(self)
        d["steps"] = [asdict(s) for s in self.steps]
        return d


def forward_order_select(
    cohort: CohortData,
    max_k: int,
    method: str,
    R: int,
    rng: RngStream,
    threshold: float = DEFAULT_THRESHOLD,
    n_jobs: int = 1,
) -> OrderSelection:
    """Select ``K`` by sequential single-amplitude bootstrap tests.

    Step ``k`` uses the substream ``rng.child(k)``, so runs with a larger
    ``max_k`` reproduce every step of runs with a smaller one.
    """
    max_k = int(max_k)
    if max_k < 1:
        raise ParameterError("max_k must be at least 1")
    if not 0 < threshold < 1:
        raise ParameterError("threshold must lie in (0, 1)")
    steps = []
    truncated = False
    for k in range(1, max_k + 1):
        try:
            fits = [fit_individual(s, k) for s in cohort.subjects]
        except (InsufficientDataError, SingularDesignError):
            truncated = True
            break
        res = bootstrap_single_amplitude(fits, k, k, method, R, rng.child(k), n_jobs)
        retained = res.p_bootstrap < threshold
        steps.append(SelectionStep(k, res.p_bootstrap, res.statistic, retained))
        if not retained:
            break
    selected = sum(s.retained for s in steps)
    return OrderSelection(selected, tuple(steps), method, int(R), rng.seed, threshold, truncated)
