"""Closed-form covering-number and metric-entropy calculators.

All covering bounds are computed and returned in natural-log space; their
linear values overflow doubles at modest widths.  Metric entropies
(log covering numbers) are plain nonnegative floats.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, DomainError, IntegrationFailureError
from .nncore import Architecture, default_lipschitz_constants

DUDLEY_ABS_TOL = 1e-6
DUDLEY_CONSTANT = 12.0
# Divergence sentinel: entropies growing at least this fast near 0 make the
# sqrt-integrand non-integrable.
_DIVERGENCE_EXPONENT = 2.0

PDIM_EXACT_MAX_D = 300
PDIM_EXACT_MAX_N = 100_000

MAX_LOG_LINEAR = math.log(np.finfo(float).max)


def log_factorial(d: int) -> float:
    return math.lgamma(d + 1)


@dataclass(frozen=True)
class BoundConfig:
    """Inputs shared by every bound formula.

    ``rho`` defaults to per-layer Lipschitz constants of the activations on
    the nested hidden-range intervals (1 for ReLU/LeakyReLU with slope <= 1,
    1 for tanh, 1/4 for sigmoid); pass explicit values to override.
    """

    arch: Architecture
    B: float
    B_x: float
    epsilon: float
    rho: tuple[float, ...] = None

    def __post_init__(self):
        if self.B < 1:
            raise ConfigError("the parameter box assumes B >= 1")
        if self.B_x <= 0:
            raise DomainError("B_x must be positive")
        if self.epsilon <= 0:
            raise DomainError("covering radius epsilon must be positive")
        if self.rho is None:
            rho = default_lipschitz_constants(self.arch, self.B, self.B_x)
        else:
            rho = tuple(float(r) for r in self.rho)
        if len(rho) != self.arch.depth:
            raise ConfigError(f"need {self.arch.depth} Lipschitz constants")
        if any(r <= 0 for r in rho):
            raise DomainError("Lipschitz constants must be positive")
        object.__setattr__(self, "rho", rho)

    @property
    def rho_bar(self) -> float:
        return float(np.prod(self.rho))

    @property
    def spectral_proxies(self) -> tuple[float, ...]:
        """s_i = B * sqrt(d_i * d_{i-1}) for the hidden weight matrices."""
        w = self.arch.widths
        return tuple(
            self.B * math.sqrt(w[i] * w[i - 1]) for i in range(1, self.arch.depth + 1)
        )

    @property
    def log_s_bar(self) -> float:
        return sum(math.log(s) for s in self.spectral_proxies)

    @property
    def max_hidden_width(self) -> int:
        return max(self.arch.hidden_widths)


def shallow_covering_bound(cfg: BoundConfig) -> float:
    """Log covering number of the one-hidden-layer class.

    log N <= S*log(16 B^2 (B_x+1) sqrt(d0) d1 / eps) + S_h*log(rho) - log(d1!)
    with S = d0*d1 + 2*d1 + 1 and S_h = d0*d1 + d1.
    """
    arch = cfg.arch
    if arch.depth != 1:
        raise ConfigError("the shallow bound requires exactly one hidden layer")
    if arch.output_dim != 1:
        raise ConfigError("the shallow bound is stated for scalar outputs")
    d0, d1 = arch.input_dim, arch.hidden_widths[0]
    S = arch.param_count
    S_h = d0 * d1 + d1
    log_base = math.log(16.0 * cfg.B**2 * (cfg.B_x + 1.0) * math.sqrt(d0) * d1) - math.log(
        cfg.epsilon
    )
    return S * log_base + S_h * math.log(cfg.rho[0]) - log_factorial(d1)


def permutation_discount(arch: Architecture) -> float:
    """The -sum_l log(d_l!) term contributed by hidden-layer permutations."""
    return -sum(log_factorial(d) for d in arch.hidden_widths)


def deep_covering_bound(cfg: BoundConfig, discount: bool = True) -> float:
    """Log covering number of the deep class.

    log N <= S*log(4 (L+1) (B_x+1) (2B)^(L+2) rho_bar prod_j d_j / eps)
             - sum_l log(d_l!)
    where the width product runs over d_0..d_L.  At L=1 this dominates the
    shallow bound up to a different constant family; the two are not
    numerically equal.  Pass ``discount=False`` to drop the
    factorial term.
    """
    arch = cfg.arch
    if arch.output_dim != 1:
        raise ConfigError("the deep bound is stated for scalar outputs")
    L = arch.depth
    S = arch.param_count
    log_widths = sum(math.log(d) for d in (arch.input_dim, *arch.hidden_widths))
    log_base = (
        math.log(4.0 * (L + 1) * (cfg.B_x + 1.0))
        + (L + 2) * math.log(2.0 * cfg.B)
        + math.log(cfg.rho_bar)
        + log_widths
        - math.log(cfg.epsilon)
    )
    size_term = S * log_base
    if not discount:
        return size_term
    return size_term + permutation_discount(arch)


@dataclass(frozen=True)
class StirlingBracket:
    lower: float
    factorial: int
    upper: float


def stirling_bracket(d: int) -> StirlingBracket:
    """Strict two-sided factorial bracket with the exact d! in the middle.

    sqrt(2 pi d) (d/e)^d e^(1/(12d+1)) < d! < sqrt(2 pi d) (d/e)^d e^(1/(12d)).
    """
    if d < 1:
        raise DomainError("the bracket requires d >= 1")
    log_core = 0.5 * math.log(2.0 * math.pi * d) + d * (math.log(d) - 1.0)
    lower = math.exp(log_core + 1.0 / (12 * d + 1))
    upper = math.exp(log_core + 1.0 / (12 * d))
    return StirlingBracket(lower, math.factorial(d), upper)


@dataclass(frozen=True)
class EntropyComparison:
    """Five metric-entropy estimates for one config, order-level constants.

    Values are natural-log covering numbers, floored at 0 (entropies are
    nonnegative); ``floored`` lists the rows whose raw expression went
    negative, and ``raw`` keeps the unfloored values.
    """

    spectral_2017: float
    pacbayes_2017: float
    lin_2019: float
    pdim_2019: float
    permutation_aware: float
    floored: tuple[str, ...]
    raw: dict = field(repr=False)

    ROW_NAMES = ("spectral_2017", "pacbayes_2017", "lin_2019", "pdim_2019", "permutation_aware")

    def values(self) -> dict:
        return {name: getattr(self, name) for name in self.ROW_NAMES}


def entropy_comparison(cfg: BoundConfig) -> EntropyComparison:
    """Evaluate the five comparable metric-entropy expressions.

    spectral_2017: B_x^2 (rho_bar s_bar)^2 U log(W) / eps^2
    pacbayes_2017: B_x^2 (rho_bar s_bar)^2 S L^2 log(W L) / eps^2
    lin_2019:      B_x (rho_bar s_bar) S^2 L / eps
    pdim_2019:     L S log(S) log(B_x / eps)
    permutation_aware:
                   L S log(rho_bar s_bar B_x^(1/L) / (d_1! ... d_L! eps)^(1/L))
    with the spectral proxy s_i = B sqrt(d_i d_{i-1}).
    """
    arch = cfg.arch
    L = arch.depth
    S = arch.param_count
    U = arch.hidden_unit_count
    W = cfg.max_hidden_width
    eps = cfg.epsilon
    log_rs = math.log(cfg.rho_bar) + cfg.log_s_bar
    rs = math.exp(log_rs) if log_rs <= MAX_LOG_LINEAR else math.inf
    raw = {
        "spectral_2017": cfg.B_x**2 * rs**2 * U * math.log(W) / eps**2,
        "pacbayes_2017": cfg.B_x**2 * rs**2 * S * L**2 * math.log(W * L) / eps**2,
        "lin_2019": cfg.B_x * rs * S**2 * L / eps,
        "pdim_2019": L * S * math.log(S) * math.log(cfg.B_x / eps),
        "permutation_aware": L
        * S
        * (log_rs + (math.log(cfg.B_x) + permutation_discount(arch) - math.log(eps)) / L),
    }
    floored = tuple(name for name, v in raw.items() if v < 0.0)
    vals = {name: max(v, 0.0) for name, v in raw.items()}
    return EntropyComparison(floored=floored, raw=raw, **vals)


def dudley_rademacher_bound(
    entropy_fn: Callable[[float], float],
    n: int,
    upper_limit: float,
    abs_tol: float = DUDLEY_ABS_TOL,
) -> float:
    """12 * integral_0^limit sqrt(entropy_fn(eps) / n) d(eps).

    ``entropy_fn`` must be nonnegative and nonincreasing.  The quadrature is
    split at the point where the entropy reaches 0 (the integrand has a kink
    there).  Entropies growing like eps^-2 or faster near 0 make the integral
    diverge; that raises IntegrationFailureError carrying the value over a
    truncated range.
    """
    if n < 1:
        raise DomainError("sample size must be >= 1")
    if upper_limit <= 0:
        raise DomainError("integration limit must be positive")
    probe = [upper_limit * t for t in (1e-9, 1e-4, 0.3, 1.0)]
    vals = [float(entropy_fn(p)) for p in probe]
    if any(v < 0 for v in vals):
        raise DomainError("entropy function must be nonnegative")
    if any(a < b - 1e-12 for a, b in zip(vals, vals[1:])):
        raise DomainError("entropy function must be nonincreasing")

    integrand = lambda e: math.sqrt(float(entropy_fn(e)) / n)

    # Estimate the growth exponent near 0 to detect divergence before quad
    # burns its subdivision budget on it.
    a, b = upper_limit * 1e-9, upper_limit * 1e-7
    ea, eb = float(entropy_fn(a)), float(entropy_fn(b))
    if eb > 0 and ea > eb:
        exponent = math.log(ea / eb) / math.log(b / a)
        if exponent >= _DIVERGENCE_EXPONENT - 1e-3:
            cutoff = upper_limit * 1e-6
            partial, _ = integrate.quad(integrand, cutoff, upper_limit, limit=200)
            raise IntegrationFailureError(
                f"entropy grows like eps^-{exponent:.2f} near 0; integral diverges",
                partial_value=DUDLEY_CONSTANT * partial,
            )

    # Locate where the (nonincreasing) entropy first reaches 0.
    split = upper_limit
    if float(entropy_fn(upper_limit)) == 0.0:
        lo, hi = 0.0, upper_limit
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            if float(entropy_fn(mid)) > 0.0:
                lo = mid
            else:
                hi = mid
        split = hi

    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            total, _ = integrate.quad(integrand, 0.0, split, epsabs=abs_tol, limit=200)
        except integrate.IntegrationWarning as exc:
            cutoff = upper_limit * 1e-6
            partial, _ = integrate.quad(integrand, cutoff, split, limit=200)
            raise IntegrationFailureError(
                f"quadrature did not converge: {exc}",
                partial_value=DUDLEY_CONSTANT * partial,
            ) from exc
    return DUDLEY_CONSTANT * total


def volume_covering_bound(d: int, volume: float, epsilon: float) -> float:
    """V * (2/eps)^d, the volume bound on covering/packing of a d-dim set."""
    if d < 1:
        raise DomainError("dimension must be >= 1")
    if volume <= 0:
        raise DomainError("volume must be positive")
    if epsilon <= 0:
        raise DomainError("epsilon must be positive")
    return volume * (2.0 / epsilon) ** d


@dataclass(frozen=True)
class PdimCoveringBound:
    value: float
    method: str  # "exact_sum" or "closed_form"


def pdim_uniform_covering_bound(
    d: int, n: int, B_range: float, epsilon: float
) -> PdimCoveringBound:
    """Uniform covering number bound for a class of pseudo-dimension d.

    Exact sum over i of C(n, i) (B/eps)^i in rational arithmetic when n and d
    are small; otherwise the (e n B / (eps d))^d closed form, which dominates
    the sum for n >= d.
    """
    if d < 1 or n < 1:
        raise DomainError("pseudo-dimension and sample size must be >= 1")
    if B_range <= 0 or epsilon <= 0:
        raise DomainError("range bound and epsilon must be positive")
    if d <= PDIM_EXACT_MAX_D and n <= PDIM_EXACT_MAX_N:
        ratio = Fraction(B_range) / Fraction(epsilon)
        total = Fraction(0)
        power = Fraction(1)
        for i in range(1, min(d, n) + 1):
            power *= ratio
            total += math.comb(n, i) * power
        return PdimCoveringBound(float(total), "exact_sum")
    log_value = d * (math.log(math.e * n * B_range) - math.log(epsilon * d))
    value = math.exp(log_value) if log_value <= MAX_LOG_LINEAR else math.inf
    return PdimCoveringBound(value, "closed_form")
