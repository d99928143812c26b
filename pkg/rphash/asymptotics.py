"""
Closed-form asymptotic collision and filter-survival rates

The large-b and large-a rates drop their (1+o(1)) corrections at the point
of evaluation. The convergence tables in experiments measure that gap.
"""

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy.special import gammaln

import config
from .errors import DomainError, PreconditionError
from .geometry import TupleConfig, config_functionals
from .numint import phi_k

TOL = config.TOLERANCES
_FPMIN = 1e-300


@dataclass(frozen=True)
class AsymptoticInputs:
    """alpha(V), Delta and the family shape feeding the rate formulas"""

    alpha: float
    delta: float
    k: int
    a: int
    b: int

    def __post_init__(self):
        if self.alpha < 1.0 - TOL["dual_basis"]:
            raise PreconditionError(f"alpha must be >= 1, got {self.alpha}")
        if not 0.0 < self.delta <= 1.0 + TOL["dual_basis"]:
            raise PreconditionError(f"delta must lie in (0, 1], got {self.delta}")
        if self.a < 1 or self.b < 1 or self.k < 1:
            raise PreconditionError(f"need k, a, b >= 1, got k={self.k}, a={self.a}, b={self.b}")

    @classmethod
    def from_config(cls, config_: TupleConfig, a: int, b: int) -> "AsymptoticInputs":
        functionals = config_functionals(config_)
        return cls(alpha=functionals.alpha, delta=functionals.delta, k=config_.k, a=a, b=b)


def log_beta(x: float, y: float) -> float:
    """
    log B(x, y) through log-gamma

    Raises:
        DomainError: unless x, y > 0
    """
    if not (x > 0 and y > 0):
        raise DomainError(f"Beta function needs positive arguments, got ({x}, {y})")
    return float(gammaln(x) + gammaln(y) - gammaln(x + y))


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b), modified Lentz evaluation"""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _FPMIN:
        d = _FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, config.BETACF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _FPMIN:
            d = _FPMIN
        c = 1.0 + aa / c
        if abs(c) < _FPMIN:
            c = _FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < TOL["betacf_eps"]:
            return h
    raise ArithmeticError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """
    Regularised incomplete Beta function I_x(a, b)

    Args:
        x: Upper limit in [0, 1]
        a: First shape parameter (> 0)
        b: Second shape parameter (> 0)

    Returns:
        I_x(a, b)

    Raises:
        DomainError: for x outside [0, 1] or non-positive shapes
    """
    if not 0.0 <= x <= 1.0:
        raise DomainError(f"incomplete beta needs 0 <= x <= 1, got {x}")
    if not (a > 0 and b > 0):
        raise DomainError(f"incomplete beta needs positive shapes, got ({a}, {b})")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _betacf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _betacf(b, a, 1.0 - x) / b


def _log_comb(n: int, r: int) -> float:
    return float(gammaln(n + 1) - gammaln(r + 1) - gammaln(n - r + 1))


def rate_large_b(inputs: AsymptoticInputs) -> float:
    """
    Large-b collision rate B(alpha a, b) / B(a, b)

    Leading order only; the (1+o(1)) factor on alpha a is dropped.
    """
    log_p = log_beta(inputs.alpha * inputs.a, inputs.b) - log_beta(inputs.a, inputs.b)
    return min(1.0, math.exp(log_p))


def rate_large_b_power_law(inputs: AsymptoticInputs) -> float:
    """Fixed-a companion form b^((1 - alpha) a)"""
    return min(1.0, math.exp((1.0 - inputs.alpha) * inputs.a * math.log(inputs.b)))


def rate_large_b_truncated(inputs: AsymptoticInputs) -> float:
    """
    Finite-b form with the cut point Phi_k(t0) = 1 - 1/sqrt(b)

    C(a+b, a) b B(1 + alpha a, b) I_{1/sqrt(b)}(1 + alpha a, b)
    """
    a, b, alpha = inputs.a, inputs.b, inputs.alpha
    log_front = _log_comb(a + b, a) + math.log(b) + log_beta(1.0 + alpha * a, b)
    cut = regularized_incomplete_beta(1.0 / math.sqrt(b), 1.0 + alpha * a, b)
    if cut <= 0.0:
        return 0.0
    return min(1.0, math.exp(log_front + math.log(cut)))


def rate_large_a(inputs: AsymptoticInputs) -> float:
    """
    Large-a collision rate Delta^-b C(a+b, b)^-(k-1), evaluated in log space
    """
    log_p = -inputs.b * math.log(inputs.delta) - (inputs.k - 1) * _log_comb(inputs.a + inputs.b, inputs.b)
    return min(1.0, math.exp(log_p))


def rate_large_a_truncated(inputs: AsymptoticInputs, Lambda: float = None) -> float:
    """
    Finite-a lower form rate_large_a * I_x(b+1, a)^k with x = min(1, sqrt(2/pi) Lambda)

    Args:
        inputs: Configuration functionals and family shape
        Lambda: Box half-width; defaults to a^(-2/3)
    """
    if Lambda is None:
        Lambda = inputs.a ** (-2.0 / 3.0)
    if Lambda <= 0:
        raise PreconditionError(f"Lambda must be positive, got {Lambda}")
    x = min(1.0, math.sqrt(2.0 / math.pi) * Lambda)
    return rate_large_a(inputs) * regularized_incomplete_beta(x, inputs.b + 1.0, inputs.a) ** inputs.k


def survival_above(alpha: float, k: int, C: float) -> float:
    """Probability that one Gaussian r has |v.r| > C for every tuple vector, (1 - Phi_k(C))^alpha"""
    if C <= 0:
        raise PreconditionError(f"threshold must be positive, got {C}")
    return float((1.0 - phi_k(k, C)) ** alpha)


def survival_below(delta: float, k: int, c: float) -> float:
    """Probability that one Gaussian r has |v.r| < c for every tuple vector, Delta^-1 (2c^2/pi)^(k/2)"""
    if c <= 0:
        raise PreconditionError(f"threshold must be positive, got {c}")
    if delta <= 0:
        raise PreconditionError(f"delta must be positive, got {delta}")
    return min(1.0, (2.0 * c * c / math.pi) ** (k / 2.0) / delta)


def interior_mass_leading(delta: float, lambdas: Sequence[float]) -> float:
    """Small-box interior mass Delta^-1 prod 2|lambda_n| / sqrt(2 pi)"""
    lam = np.abs(np.asarray(lambdas, dtype=np.float64))
    return float(np.prod(2.0 * lam / math.sqrt(2.0 * math.pi)) / delta)


def exterior_mass_leading(lambdas: Sequence[float]) -> float:
    """Small-box exterior mass prod (1 - 2|lambda_n| / sqrt(2 pi))"""
    lam = np.abs(np.asarray(lambdas, dtype=np.float64))
    return float(np.prod(1.0 - 2.0 * lam / math.sqrt(2.0 * math.pi)))


def beta_identity_check(alpha: float, a: float, b: float) -> Tuple[float, float]:
    """
    Both sides of C(a+b, a) b B(1 + alpha a, b) = alpha (a+b)/(alpha a + b) B(alpha a, b)/B(a, b)

    The binomial is taken as (a+b) / (a b B(a, b)) so non-integer a, b work.
    """
    if not (alpha > 0 and a > 0 and b > 0):
        raise DomainError(f"identity needs positive arguments, got ({alpha}, {a}, {b})")
    log_binom = math.log(a + b) - math.log(a) - math.log(b) - log_beta(a, b)
    lhs = math.exp(log_binom + math.log(b) + log_beta(1.0 + alpha * a, b))
    rhs = alpha * (a + b) / (alpha * a + b) * math.exp(log_beta(alpha * a, b) - log_beta(a, b))
    return lhs, rhs
