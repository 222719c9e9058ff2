"""Reproducible random substreams and the samplers used by the simulation studies.

A stream is a pure function of ``(seed, path)``: the path is hashed into a
:class:`numpy.random.SeedSequence` spawn key and drives a counter-based Philox
generator.  Two streams with the same seed and path produce the same draws no
matter which process or thread consumes them, and extending a path with
:meth:`RngStream.child` never overlaps its parent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import special

from .exceptions import ParameterError

__all__ = [
    "RngStream",
    "DistributionSpec",
    "derive_stream",
    "sample",
]

_UINT64_MASK = (1 << 64) - 1
_TWO_PI = 2.0 * math.pi


def _as_index(value) -> int:
    index = int(value)
    if index < 0 or index > _UINT64_MASK:
        raise ParameterError(f"stream path entries must be 64-bit unsigned, got {value!r}")
    return index


class RngStream:
    """Deterministic random substream identified by ``(seed, path)``.

    Parameters
    ----------
    seed : int
        Non-negative 64-bit seed shared by every stream of a computation.
    path : sequence of int
        Substream coordinates, e.g. ``[trial, subject, replicate]``.
    """

    __slots__ = ("_seed", "_path", "_generator")

    def __init__(self, seed: int, path: Sequence[int] = ()):
        self._seed = _as_index(seed)
        self._path = tuple(_as_index(p) for p in path)
        self._generator = None

    @property
    def seed(self) -> int:
        return self._seed

    @property
    def path(self) -> tuple[int, ...]:
        return self._path

    @property
    def generator(self) -> np.random.Generator:
        """Lazily created generator; the only mutable part of a stream."""
        if self._generator is None:
            seq = np.random.SeedSequence(self._seed, spawn_key=self._path)
            self._generator = np.random.Generator(np.random.Philox(seq))
        return self._generator

    def child(self, *indices: int) -> "RngStream":
        """Fresh stream whose path is this path extended by ``indices``."""
        return RngStream(self._seed, self._path + tuple(indices))

    def fresh(self) -> "RngStream":
        """Same coordinates, rewound to the start of the sequence."""
        return RngStream(self._seed, self._path)

    def __repr__(self):
        return f"RngStream(seed={self._seed}, path={list(self._path)})"

    def __eq__(self, other):
        if not isinstance(other, RngStream):
            return NotImplemented
        return (self._seed, self._path) == (other._seed, other._path)

    def __hash__(self):
        return hash((self._seed, self._path))

    def __getstate__(self):
        return (self._seed, self._path)

    def __setstate__(self, state):
        self._seed, self._path = state
        self._generator = None


def derive_stream(seed: int, path: Sequence[int] = ()) -> RngStream:
    """Return the substream of ``seed`` addressed by ``path``."""
    return RngStream(seed, path)


_KINDS = ("normal", "von-mises", "truncated-normal", "point-mass")


@dataclass(frozen=True)
class DistributionSpec:
    """One of the four distributions the simulation designs need.

    ``params`` is kind specific:

    * ``normal``: (mean, variance)
    * ``von-mises``: (mean direction in radians, concentration >= 0)
    * ``truncated-normal``: (latent mean, latent variance, lower, upper); the
      latent normal is truncated to ``[lower, upper]``, so the latent mean may
      lie outside the bounds
    * ``point-mass``: (value,)
    """

    kind: str
    params: tuple = field(default=())

    def __post_init__(self):
        params = tuple(float(p) for p in self.params)
        object.__setattr__(self, "params", params)
        if self.kind not in _KINDS:
            raise ParameterError(f"unknown distribution kind {self.kind!r}")
        expected = {"normal": 2, "von-mises": 2, "truncated-normal": 4, "point-mass": 1}[self.kind]
        if len(params) != expected:
            raise ParameterError(f"{self.kind} takes {expected} parameters, got {len(params)}")
        if not all(math.isfinite(p) for p in params):
            raise ParameterError(f"non-finite parameter in {self.kind}{params}")
        if self.kind in ("normal", "truncated-normal") and params[1] <= 0:
            raise ParameterError(f"{self.kind} variance must be positive, got {params[1]}")
        if self.kind == "truncated-normal" and not params[2] < params[3]:
            raise ParameterError(f"truncated-normal needs lower < upper, got {params[2]}, {params[3]}")
        if self.kind == "von-mises" and params[1] < 0:
            raise ParameterError(f"von Mises concentration must be >= 0, got {params[1]}")

    @classmethod
    def normal(cls, mean, variance):
        return cls("normal", (mean, variance))

    @classmethod
    def von_mises(cls, mean, concentration):
        return cls("von-mises", (mean, concentration))

    @classmethod
    def truncated_normal(cls, mean, variance, lower, upper):
        return cls("truncated-normal", (mean, variance, lower, upper))

    @classmethod
    def point_mass(cls, value):
        return cls("point-mass", (value,))

    def __str__(self):
        args = ", ".join(f"{p:g}" for p in self.params)
        return f"{self.kind}({args})"


def wrap_angle(x):
    """Map angles onto [-pi, pi)."""
    out = np.mod(np.asarray(x, dtype=float) + math.pi, _TWO_PI) - math.pi
    # fmod rounding can land exactly on +pi
    return np.where(out >= math.pi, -math.pi, out)


def _von_mises(gen, mu, kappa, size):
    # Best & Fisher (1979) wrapped-Cauchy envelope rejection
    if kappa == 0.0:
        return wrap_angle(gen.uniform(-math.pi, math.pi, size))
    if kappa < 1e-5:
        r = 1.0 / kappa + kappa
    else:
        tau = 1.0 + math.sqrt(1.0 + 4.0 * kappa * kappa)
        rho = (tau - math.sqrt(2.0 * tau)) / (2.0 * kappa)
        r = (1.0 + rho * rho) / (2.0 * rho)

    out = np.empty(size)
    filled = 0
    while filled < size:
        need = size - filled
        batch = max(16, int(need * 1.5) + 8)
        u1, u2, u3 = gen.random((3, batch))
        z = np.cos(math.pi * u1)
        f = (1.0 + r * z) / (r + z)
        c = kappa * (r - f)
        with np.errstate(divide="ignore"):
            accept = (c * (2.0 - c) - u2 > 0) | (np.log(c / u2) + 1.0 - c >= 0)
        theta = np.sign(u3[accept] - 0.5) * np.arccos(np.clip(f[accept], -1.0, 1.0))
        take = min(need, theta.size)
        out[filled:filled + take] = theta[:take]
        filled += take
    return wrap_angle(mu + out)


def _truncated_standard_normal(gen, a, b, size):
    acceptance = special.ndtr(b) - special.ndtr(a)
    if acceptance >= 0.1:
        out = np.empty(size)
        filled = 0
        while filled < size:
            need = size - filled
            batch = int(need / acceptance * 1.2) + 8
            z = gen.standard_normal(batch)
            z = z[(z >= a) & (z <= b)]
            take = min(need, z.size)
            out[filled:filled + take] = z[:take]
            filled += take
        return out

    # low acceptance: invert the CDF; work in the lower tail where ndtr keeps
    # relative accuracy
    flip = a > 0
    if flip:
        a, b = -b, -a
    lo, hi = special.ndtr(a), special.ndtr(b)
    u = gen.random(size)
    z = special.ndtri(lo + u * (hi - lo))
    z = np.clip(z, a, b)
    return -z if flip else z


def sample(rng: RngStream, dist: DistributionSpec, size: int | None = None):
    """Draw from ``dist`` using ``rng``.

    Returns a float when ``size`` is None, otherwise an array of ``size`` draws.
    Von Mises draws lie in [-pi, pi) and truncated-normal draws in
    ``[lower, upper]``.
    """
    if not isinstance(dist, DistributionSpec):
        raise ParameterError(f"expected a DistributionSpec, got {type(dist).__name__}")
    n = 1 if size is None else int(size)
    if n < 0:
        raise ParameterError("size must be non-negative")
    gen = rng.generator
    p = dist.params

    if dist.kind == "point-mass":
        draws = np.full(n, p[0])
    elif dist.kind == "normal":
        draws = p[0] + math.sqrt(p[1]) * gen.standard_normal(n)
    elif dist.kind == "von-mises":
        draws = _von_mises(gen, p[0], p[1], n) if n else np.empty(0)
    else:
        mean, var, lower, upper = p
        sd = math.sqrt(var)
        a, b = (lower - mean) / sd, (upper - mean) / sd
        z = _truncated_standard_normal(gen, a, b, n) if n else np.empty(0)
        draws = np.clip(mean + sd * z, lower, upper)

    if size is None:
        return float(draws[0])
    return draws
