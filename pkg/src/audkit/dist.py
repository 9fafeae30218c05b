"""Inter-arrival time models for update-and-decide queueing systems.

Five families are supported: exponential, uniform on (0, beta), Lomax
(heavy tail), folded normal, and deterministic (periodic).  Each model
exposes exact first and second moments, the exponentially weighted
integrals that the queueing formulas consume,

    laplace(s)               = int_0^inf f(x) exp(-s x) dx
    weighted_first_moment(s) = int_0^inf x f(x) exp(-s x) dx

and seedable random sampling.  Model objects are immutable and hashable,
so results keyed on them can be cached and shared across threads.

Closed forms are used wherever they exist; the Lomax family has none and
falls back to adaptive Gauss-Kronrod quadrature with an analytic tail
cutoff.  The folded-normal transforms are evaluated through the scaled
complementary error function so they stay finite all the way down to
sigma -> 0, where the family degenerates to a point mass.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate
from scipy.special import erfcx

from .errors import InputError, NoDensityError, QuadratureError

__all__ = [
    "ArrivalModel",
    "Exponential",
    "Uniform",
    "Lomax",
    "FoldedNormal",
    "Deterministic",
    "ServiceModel",
    "arrival_rate",
    "parse_arrival",
    "format_arrival",
    "ARRIVAL_GRAMMAR",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)

# Quadrature settings: absolute/relative tolerance of the adaptive scheme,
# and the envelope level below which the improper tail is truncated.
_QUAD_TOL = 1e-10
_TAIL_EPS = 1e-16


def _norm_cdf(z: float) -> float:
    """Standard normal CDF via the complementary error function."""
    return 0.5 * math.erfc(-z / _SQRT2)


def _exp_times_gauss_tail(log_scale: float, v: float) -> float:
    """exp(log_scale) * Pr{N(0,1) > v}, evaluated without overflow.

    For v > 0 the product is rewritten through erfcx so that a huge
    exponential against a tiny Gaussian tail never meets in the middle.
    """
    if v <= 0.0:
        return 0.5 * math.exp(log_scale) * math.erfc(v / _SQRT2)
    return 0.5 * math.exp(log_scale - 0.5 * v * v) * erfcx(v / _SQRT2)


def _check_s(s: float) -> float:
    s = float(s)
    if not s >= 0.0:
        raise InputError(f"transform argument must be >= 0, got {s}")
    return s


def _check_x(x: float) -> float:
    x = float(x)
    if not x >= 0.0:
        raise InputError(f"density argument must be >= 0, got {x}")
    return x


class ArrivalModel:
    """Common interface of the inter-arrival distribution families."""

    def pdf(self, x: float) -> float:
        """Density at x >= 0. Point-mass models raise NoDensityError."""
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def laplace(self, s: float) -> float:
        """int_0^inf f(x) exp(-s x) dx for s >= 0; equals 1 at s = 0."""
        raise NotImplementedError

    def weighted_first_moment(self, s: float) -> float:
        """int_0^inf x f(x) exp(-s x) dx for s >= 0; equals mean() at s = 0."""
        raise NotImplementedError

    def sample(self, rng: np.random.Generator, size: Optional[int] = None):
        """Draw one value (size=None) or a vector of values from the model."""
        raise NotImplementedError


@dataclass(frozen=True)
class Exponential(ArrivalModel):
    """Exponential inter-arrival times with rate ``rate`` (mean 1/rate)."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise InputError(f"exponential rate must be > 0, got {self.rate}")

    def pdf(self, x):
        x = _check_x(x)
        return self.rate * math.exp(-self.rate * x)

    def mean(self):
        return 1.0 / self.rate

    def second_moment(self):
        return 2.0 / self.rate**2

    def laplace(self, s):
        s = _check_s(s)
        return self.rate / (self.rate + s)

    def weighted_first_moment(self, s):
        s = _check_s(s)
        return self.rate / (self.rate + s) ** 2

    def sample(self, rng, size=None):
        u = rng.random(size)
        return -np.log1p(-u) / self.rate


@dataclass(frozen=True)
class Uniform(ArrivalModel):
    """Uniform inter-arrival times on (0, beta)."""

    beta: float

    def __post_init__(self):
        if not self.beta > 0:
            raise InputError(f"uniform width must be > 0, got {self.beta}")

    def pdf(self, x):
        x = _check_x(x)
        return 1.0 / self.beta if 0.0 < x < self.beta else 0.0

    def mean(self):
        return self.beta / 2.0

    def second_moment(self):
        return self.beta**2 / 3.0

    def laplace(self, s):
        s = _check_s(s)
        if s == 0.0:
            return 1.0
        # (1 - exp(-s*beta)) / (s*beta); expm1 keeps the removable
        # singularity at s -> 0 stable.
        z = s * self.beta
        return -math.expm1(-z) / z

    def weighted_first_moment(self, s):
        s = _check_s(s)
        if s == 0.0:
            return self.mean()
        z = s * self.beta
        if z < 1e-3:
            # 1 - exp(-z)(1+z) = sum_{k>=2} (-1)^k z^k (k-1)/k!; the direct
            # form loses ~z^-2 digits of cancellation for tiny z.
            g = z**2 / 2 - z**3 / 3 + z**4 / 8 - z**5 / 30 + z**6 / 144
        else:
            g = 1.0 - math.exp(-z) * (1.0 + z)
        return g / (self.beta * s * s)

    def sample(self, rng, size=None):
        u = rng.random(size)
        return self.beta * (1.0 - u)


@dataclass(frozen=True)
class Lomax(ArrivalModel):
    """Lomax (Pareto type II) inter-arrival times.

    Density alpha * beta^alpha / (x + beta)^(alpha+1) on x >= 0.  The shape
    must satisfy alpha > 2 so that the second moment exists; smaller shapes
    are rejected at construction instead of surfacing as NaNs later.
    """

    alpha: float
    beta: float

    def __post_init__(self):
        if not self.alpha > 2:
            raise InputError(
                f"lomax shape must be > 2 for a finite second moment, got {self.alpha}"
            )
        if not self.beta > 0:
            raise InputError(f"lomax scale must be > 0, got {self.beta}")

    def pdf(self, x):
        x = _check_x(x)
        # log form, with the shape multiplying log1p(-x/(x+beta)) rather than
        # log(beta) alone: beta**alpha overflows for large shapes even when
        # the density value itself is moderate.
        log_f = (
            math.log(self.alpha)
            + self.alpha * math.log1p(-x / (x + self.beta))
            - math.log(x + self.beta)
        )
        return math.exp(log_f)

    def mean(self):
        return self.beta / (self.alpha - 1.0)

    def second_moment(self):
        # grouped to avoid beta**2 overflow at extreme shapes
        return 2.0 * (self.beta / (self.alpha - 1.0)) * (self.beta / (self.alpha - 2.0))

    def _log_integrand(self, x: float, s: float, moment: int) -> float:
        return (
            math.log(self.alpha)
            + self.alpha * math.log1p(-x / (x + self.beta))
            - math.log(x + self.beta)
            + moment * math.log(x)
            - s * x
        )

    def _tail_cutoff(self, s: float, moment: int) -> float:
        """Smallest x beyond the mode where x^moment f(x) exp(-s x) < _TAIL_EPS.

        The integrand is unimodal with its mode below 4 E[X], so doubling
        from there walks down the tail only.
        """
        target = math.log(_TAIL_EPS)
        lo = 4.0 * self.mean()
        hi = 2.0 * lo
        while self._log_integrand(hi, s, moment) > target:
            lo, hi = hi, hi * 2.0
            if hi > 1e30:  # pragma: no cover - unreachable for alpha > 2
                return hi
        for _ in range(80):
            mid = math.sqrt(lo * hi)
            if self._log_integrand(mid, s, moment) > target:
                lo = mid
            else:
                hi = mid
        return hi

    def _quad(self, s: float, moment: int) -> float:
        cutoff = self._tail_cutoff(s, moment)

        def integrand(x):
            return x**moment * self.pdf(x) * math.exp(-s * x)

        # Breakpoints put the adaptive grid onto the mass near the mean even
        # when the polynomial tail pushes the cutoff orders of magnitude out.
        m = self.mean()
        pts = [p for p in (m, 10.0 * m, 100.0 * m) if p < cutoff]
        out = integrate.quad(
            integrand, 0.0, cutoff, epsabs=_QUAD_TOL, epsrel=_QUAD_TOL,
            limit=400, points=pts or None, full_output=1,
        )
        value, abserr = out[0], out[1]
        if len(out) > 3 or abserr > 1e-8 * max(1.0, abs(value)):
            raise QuadratureError(
                f"lomax transform quadrature did not converge (s={s}, moment={moment})",
                achieved=abserr,
            )
        if moment == 0 and value < math.exp(-s * m) - 1e-7:
            # Jensen bound E[exp(-sX)] >= exp(-s E[X]): the grid missed mass.
            raise QuadratureError(
                f"lomax transform quadrature lost mass (s={s})", achieved=abserr
            )
        return value

    def laplace(self, s):
        s = _check_s(s)
        if s == 0.0:
            return 1.0
        return self._quad(s, 0)

    def weighted_first_moment(self, s):
        s = _check_s(s)
        if s == 0.0:
            return self.mean()
        return self._quad(s, 1)

    def sample(self, rng, size=None):
        # Inverse CDF: x = beta * ((1-U)^(-1/alpha) - 1), exact and loop-free.
        u = rng.random(size)
        return self.beta * ((1.0 - u) ** (-1.0 / self.alpha) - 1.0)


@dataclass(frozen=True)
class FoldedNormal(ArrivalModel):
    """|N(alpha, sigma^2)| inter-arrival times.

    sigma = 0 is allowed and degenerates to a point mass at alpha; the
    transform evaluations stay continuous through that limit.
    """

    alpha: float
    sigma: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise InputError(f"folded-normal location must be >= 0, got {self.alpha}")
        if not self.sigma >= 0:
            raise InputError(f"folded-normal scale must be >= 0, got {self.sigma}")
        if self.alpha == 0 and self.sigma == 0:
            raise InputError("folded-normal needs alpha > 0 or sigma > 0")

    def pdf(self, x):
        x = _check_x(x)
        if self.sigma == 0.0:
            raise NoDensityError(
                "folded normal with sigma=0 is a point mass and has no density"
            )
        a, sg = self.alpha, self.sigma
        c = 1.0 / (math.sqrt(2.0 * math.pi) * sg)
        return c * (
            math.exp(-((x - a) ** 2) / (2.0 * sg**2))
            + math.exp(-((x + a) ** 2) / (2.0 * sg**2))
        )

    def mean(self):
        if self.sigma == 0.0:
            return self.alpha
        a, sg = self.alpha, self.sigma
        return _SQRT_2_OVER_PI * sg * math.exp(-(a**2) / (2.0 * sg**2)) + a * (
            1.0 - 2.0 * _norm_cdf(-a / sg)
        )

    def second_moment(self):
        return self.alpha**2 + self.sigma**2

    def laplace(self, s):
        # MGF of |N(alpha, sigma^2)| evaluated at -s.  Each of the two
        # Gaussian-tail terms is computed in scaled form; the shared factor
        # exp(-alpha^2/(2 sigma^2)) makes the sigma -> 0 limit exact.
        s = _check_s(s)
        if s == 0.0:
            return 1.0
        if self.sigma == 0.0:
            return math.exp(-s * self.alpha)
        a, sg = self.alpha, self.sigma
        z = a / sg
        quad_term = 0.5 * sg**2 * s**2
        t1 = _exp_times_gauss_tail(quad_term - a * s, sg * s - z)
        t2 = _exp_times_gauss_tail(quad_term + a * s, sg * s + z)
        return min(t1 + t2, 1.0)  # roundoff can poke one ulp above 1 near s=0

    def weighted_first_moment(self, s):
        # Derivative of the MGF at -s; the two tail terms reuse laplace()'s
        # building blocks and the Gaussian-density terms collapse to a single
        # exp(-alpha^2/(2 sigma^2)) factor.
        s = _check_s(s)
        if self.sigma == 0.0:
            return self.alpha * math.exp(-s * self.alpha)
        a, sg = self.alpha, self.sigma
        z = a / sg
        quad_term = 0.5 * sg**2 * s**2
        t1 = _exp_times_gauss_tail(quad_term - a * s, sg * s - z)
        t2 = _exp_times_gauss_tail(quad_term + a * s, sg * s + z)
        gauss = _SQRT_2_OVER_PI * sg * math.exp(-0.5 * z * z)
        return (a - sg**2 * s) * t1 - (a + sg**2 * s) * t2 + gauss

    def sample(self, rng, size=None):
        if self.sigma == 0.0:
            if size is None:
                return self.alpha
            return np.full(size, self.alpha)
        return np.abs(self.alpha + self.sigma * rng.standard_normal(size))


@dataclass(frozen=True)
class Deterministic(ArrivalModel):
    """Periodic arrivals: every inter-arrival time equals ``period``."""

    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise InputError(f"deterministic period must be > 0, got {self.period}")

    def pdf(self, x):
        raise NoDensityError("deterministic arrivals are a point mass; no density")

    def mean(self):
        return self.period

    def second_moment(self):
        return self.period**2

    def laplace(self, s):
        s = _check_s(s)
        return math.exp(-s * self.period)

    def weighted_first_moment(self, s):
        s = _check_s(s)
        return self.period * math.exp(-s * self.period)

    def sample(self, rng, size=None):
        if size is None:
            return self.period
        return np.full(size, self.period)


@dataclass(frozen=True)
class ServiceModel:
    """Exponential service at rate ``rate`` (the only service law in scope)."""

    rate: float

    def __post_init__(self):
        if not self.rate > 0:
            raise InputError(f"service rate must be > 0, got {self.rate}")


def arrival_rate(model: ArrivalModel) -> float:
    """Arrival rate lambda = 1 / E[X] of a model."""
    return 1.0 / model.mean()


# --- spec-string grammar -------------------------------------------------
#
#   exp:rate=<r>  uniform:beta=<b>  lomax:alpha=<a>,beta=<b>
#   fnorm:alpha=<a>,sigma=<s>  det:period=<p>

ARRIVAL_GRAMMAR = (
    "exp:rate=<r> | uniform:beta=<b> | lomax:alpha=<a>,beta=<b> | "
    "fnorm:alpha=<a>,sigma=<s> | det:period=<p>"
)

_FAMILIES = {
    "exp": (Exponential, ("rate",)),
    "uniform": (Uniform, ("beta",)),
    "lomax": (Lomax, ("alpha", "beta")),
    "fnorm": (FoldedNormal, ("alpha", "sigma")),
    "det": (Deterministic, ("period",)),
}

_KV_RE = re.compile(r"^([a-z_]+)=([^=,]+)$")


def parse_arrival(text: str) -> ArrivalModel:
    """Parse a distribution spec string such as ``lomax:alpha=3,beta=2``."""
    head, sep, rest = text.partition(":")
    if not sep or head not in _FAMILIES:
        raise InputError(
            f"unknown arrival spec {text!r}; expected one of: {ARRIVAL_GRAMMAR}"
        )
    cls, keys = _FAMILIES[head]
    kwargs = {}
    for part in rest.split(","):
        m = _KV_RE.match(part.strip())
        if not m or m.group(1) not in keys:
            raise InputError(
                f"bad parameter {part!r} in {text!r}; expected {head}:"
                + ",".join(f"{k}=<v>" for k in keys)
            )
        try:
            kwargs[m.group(1)] = float(m.group(2))
        except ValueError:
            raise InputError(f"non-numeric value in {part!r}") from None
    if set(kwargs) != set(keys):
        raise InputError(
            f"{head} needs parameters {', '.join(keys)}; got {sorted(kwargs)}"
        )
    return cls(**kwargs)


def format_arrival(model: ArrivalModel) -> str:
    """Inverse of parse_arrival, used to echo configurations in reports."""
    for head, (cls, keys) in _FAMILIES.items():
        if type(model) is cls:
            return head + ":" + ",".join(f"{k}={getattr(model, k):.17g}" for k in keys)
    raise InputError(f"unknown arrival model {model!r}")


ArrivalFamily = Union[Exponential, Uniform, Lomax, FoldedNormal, Deterministic]
