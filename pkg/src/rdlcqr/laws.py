"""Error distributions used for efficiency tables and simulation draws.

All laws can be standardized to unit variance, the convention every
downstream formula assumes.  Quantiles of mixtures are inverted numerically
on the CDF.
"""

from __future__ import annotations

import numpy as np
from scipy import optimize, stats

from .exceptions import QuantileInversionFailure

__all__ = [
    "ErrorLaw",
    "NormalLaw",
    "LaplaceLaw",
    "StudentTLaw",
    "NormalMixtureLaw",
    "standardized",
    "law_from_name",
    "PAPER_LAWS",
]


class ErrorLaw:
    """Symmetric error distribution with pdf/cdf/ppf/variance/sampling."""

    name = "law"

    def pdf(self, x):
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def ppf(self, p):
        raise NotImplementedError

    def variance(self) -> float:
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError


class NormalLaw(ErrorLaw):
    name = "normal"

    def __init__(self, sd: float = 1.0):
        self.sd = float(sd)

    def pdf(self, x):
        return stats.norm.pdf(x, scale=self.sd)

    def cdf(self, x):
        return stats.norm.cdf(x, scale=self.sd)

    def ppf(self, p):
        return stats.norm.ppf(p, scale=self.sd)

    def variance(self):
        return self.sd**2

    def sample(self, rng, size):
        return self.sd * rng.standard_normal(size)


class LaplaceLaw(ErrorLaw):
    name = "laplace"

    def __init__(self, scale: float = 1.0):
        self.scale = float(scale)

    def pdf(self, x):
        return stats.laplace.pdf(x, scale=self.scale)

    def cdf(self, x):
        return stats.laplace.cdf(x, scale=self.scale)

    def ppf(self, p):
        return stats.laplace.ppf(p, scale=self.scale)

    def variance(self):
        return 2.0 * self.scale**2

    def sample(self, rng, size):
        return rng.laplace(0.0, self.scale, size)


class StudentTLaw(ErrorLaw):
    def __init__(self, df: float = 3.0):
        if df <= 2:
            raise ValueError("Student t needs df > 2 for a finite variance")
        self.df = float(df)
        self.name = f"t{df:g}"

    def pdf(self, x):
        return stats.t.pdf(x, self.df)

    def cdf(self, x):
        return stats.t.cdf(x, self.df)

    def ppf(self, p):
        return stats.t.ppf(p, self.df)

    def variance(self):
        return self.df / (self.df - 2.0)

    def sample(self, rng, size):
        return rng.standard_t(self.df, size)


class NormalMixtureLaw(ErrorLaw):
    """Mixture of centered normals, e.g. 0.95 N(0,1) + 0.05 N(0,10^2)."""

    def __init__(self, weights, sds, name: str | None = None):
        self.weights = np.asarray(weights, dtype=float)
        self.sds = np.asarray(sds, dtype=float)
        if self.weights.shape != self.sds.shape:
            raise ValueError("weights and sds must have the same length")
        if not np.isclose(self.weights.sum(), 1.0):
            raise ValueError("mixture weights must sum to 1")
        self.name = name or "mixture"

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * stats.norm.pdf(x, scale=s) for w, s in zip(self.weights, self.sds))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return sum(w * stats.norm.cdf(x, scale=s) for w, s in zip(self.weights, self.sds))

    def ppf(self, p):
        p = np.atleast_1d(np.asarray(p, dtype=float))
        out = np.empty_like(p)
        hi = 50.0 * float(self.sds.max())
        for idx, pi in enumerate(p):
            if not 0.0 < pi < 1.0:
                raise QuantileInversionFailure(f"quantile level {pi} outside (0, 1)")
            try:
                out[idx] = optimize.brentq(
                    lambda v: self.cdf(v) - pi, -hi, hi, xtol=1e-12, rtol=8.9e-16
                )
            except ValueError as exc:
                raise QuantileInversionFailure(
                    f"CDF bisection failed at level {pi}: {exc}"
                ) from exc
        return out if out.size > 1 else float(out[0])

    def variance(self):
        return float(np.sum(self.weights * self.sds**2))

    def sample(self, rng, size):
        comp = rng.choice(self.weights.size, size=size, p=self.weights)
        return rng.standard_normal(size) * self.sds[comp]


class _Standardized(ErrorLaw):
    """A law rescaled to unit variance."""

    def __init__(self, base: ErrorLaw):
        self.base = base
        self.scale = float(np.sqrt(base.variance()))
        self.name = base.name

    def pdf(self, x):
        return self.scale * self.base.pdf(np.asarray(x, dtype=float) * self.scale)

    def cdf(self, x):
        return self.base.cdf(np.asarray(x, dtype=float) * self.scale)

    def ppf(self, p):
        return self.base.ppf(p) / self.scale

    def variance(self):
        return 1.0

    def sample(self, rng, size):
        return self.base.sample(rng, size) / self.scale


def standardized(law: ErrorLaw) -> ErrorLaw:
    """Rescale a law to unit variance (idempotent)."""
    if isinstance(law, _Standardized) or np.isclose(law.variance(), 1.0):
        return law
    return _Standardized(law)


# The five error laws of the simulation study, indexed 1..5.
PAPER_LAWS = {
    1: NormalLaw(),
    2: LaplaceLaw(scale=1.0),
    3: StudentTLaw(df=3),
    4: NormalMixtureLaw([0.95, 0.05], [1.0, 3.0], name="mix3"),
    5: NormalMixtureLaw([0.95, 0.05], [1.0, 10.0], name="mix10"),
}

_NAMES = {
    "normal": lambda: NormalLaw(),
    "laplace": lambda: LaplaceLaw(scale=1.0),
    "t3": lambda: StudentTLaw(df=3),
    "mix3": lambda: NormalMixtureLaw([0.95, 0.05], [1.0, 3.0], name="mix3"),
    "mix10": lambda: NormalMixtureLaw([0.95, 0.05], [1.0, 10.0], name="mix10"),
}


def law_from_name(name: str) -> ErrorLaw:
    """Parse a law name: normal, laplace, t<df>, mix3, mix10."""
    key = name.strip().lower()
    if key in _NAMES:
        return _NAMES[key]()
    if key.startswith("t"):
        try:
            return StudentTLaw(df=float(key[1:]))
        except ValueError:
            pass
    raise ValueError(f"unknown error law {name!r}; expected one of {sorted(_NAMES)} or t<df>")
