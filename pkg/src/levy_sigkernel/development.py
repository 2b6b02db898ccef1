"""Free developments of piecewise-constant velocities and quantitative bounds.

A development is the solution of the linear tensor ODE ``S' = S (x) v``
started at 1.  For piecewise-constant velocities it is the ordered product
of tensor exponentials over the covered intervals, so no time stepping is
involved: all approximation error lives in the depth truncation, which the
bound functions below control.
"""

from __future__ import annotations

import math
import warnings

import numpy as np

from . import tensor_algebra as ta
from .characteristics import (LevyTriplet, PiecewiseVelocity,
                              characteristic_velocity,
                              exponential_moment_value)
from .errors import InvalidParameter
from .tensor_algebra import TruncatedTensor

__all__ = [
    "develop",
    "expected_signature",
    "bell_polynomials",
    "bell_numbers",
    "bound_level",
    "bound_gronwall",
    "bound_lipschitz",
    "bound_inner_truncation",
    "bound_outer_truncation",
    "velocity_difference_mass",
    "remainder_diagnostics",
    "gaussian_mgf_moment",
    "gaussian_jump_tail_bound",
]


def develop(v: PiecewiseVelocity, s: float, t: float, depth: int) -> TruncatedTensor:
    """Free development of the velocity over [s, t], truncated at ``depth``.

    Satisfies the multiplicative splitting identity
    ``develop(v, s, t) = develop(v, s, u) (x) develop(v, u, t)`` exactly.
    """
    out = TruncatedTensor.unit(v.dim, depth)
    for i, dt in v.overlaps(s, t):
        factor = ta.exp_tensor(v.tensors[i].with_depth(depth) * dt)
        out = ta.tensor_mul(out, factor, depth)
    return out


def expected_signature(triplet: LevyTriplet, t: float, depth: int) -> TruncatedTensor:
    """Expected signature at time t: development of the characteristic velocity."""
    if triplet.has_jumps() and not math.isfinite(exponential_moment_value(triplet, 1.0, t)):
        warnings.warn("jump exponential moment is not finite; expected "
                      "signature may not be summable", stacklevel=2)
    return develop(characteristic_velocity(triplet, depth), 0.0, t, depth)


def bell_polynomials(ys) -> np.ndarray:
    """Complete exponential Bell polynomials B_1..B_n at the given arguments.

    Uses the binomial recursion B_{m+1} = sum_k C(m, k) B_{m-k} y_{k+1}
    with B_0 = 1.
    """
    ys = np.asarray(ys, dtype=float)
    n = len(ys)
    if n < 1:
        raise InvalidParameter("need at least one argument")
    b = np.zeros(n + 1)
    b[0] = 1.0
    for m in range(n):
        b[m + 1] = sum(math.comb(m, k) * b[m - k] * ys[k] for k in range(m + 1))
    return b[1:]


def bell_numbers(n: int) -> np.ndarray:
    """Bell numbers B_1..B_n (all polynomial arguments equal to 1)."""
    return bell_polynomials(np.ones(n))


def bound_level(v: PiecewiseVelocity, s: float, t: float, n: int) -> float:
    """Bell-polynomial bound on the level-n norm of the development."""
    if n == 0:
        return 1.0
    ys = np.array([math.factorial(k) * v.level_mass(s, t, k) for k in range(1, n + 1)])
    return float(bell_polynomials(ys)[-1]) / math.factorial(n)


def bound_gronwall(v: PiecewiseVelocity, s: float, t: float) -> float:
    """Exponential bound on the T^1 norm of the development."""
    return math.exp(v.mass(s, t))


def velocity_difference_mass(v: PiecewiseVelocity, w: PiecewiseVelocity,
                             s: float, t: float) -> float:
    """Integral of the T^1 norm of (v - w) over [s, t], exact for
    piecewise-constant velocities on possibly different grids."""
    if v.dim != w.dim:
        raise InvalidParameter("velocity dims differ")
    cuts = np.unique(np.concatenate([
        v.time_grid[(v.time_grid > s) & (v.time_grid < t)],
        w.time_grid[(w.time_grid > s) & (w.time_grid < t)],
        [s, t]]))
    depth = max(v.depth, w.depth)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        diff = v.tensors[v.interval_of(mid)].with_depth(depth) \
            - w.tensors[w.interval_of(mid)].with_depth(depth)
        total += (hi - lo) * ta.norm_p(diff, 1)
    return total


def bound_lipschitz(v: PiecewiseVelocity, w: PiecewiseVelocity,
                    s: float, t: float) -> float:
    """Stability bound on the T^1 distance of two developments."""
    return math.exp(v.mass(s, t) + w.mass(s, t)) * velocity_difference_mass(v, w, s, t)


def bound_inner_truncation(v: PiecewiseVelocity, s: float, t: float, depth: int) -> float:
    """Bound on the effect of truncating the velocity at ``depth``."""
    return math.exp(v.mass(s, t)) * v.tail_mass(s, t, depth)


def bound_outer_truncation(v: PiecewiseVelocity, s: float, t: float,
                           inner_depth: int, outer_level: int) -> float:
    """Bound on the T^1 norm of levels >= ``outer_level`` of the development
    of the depth-``inner_depth`` truncated velocity.

    A development computed at depth D therefore carries an outer error of at
    most ``bound_outer_truncation(v, s, t, N, D + 1)``.
    """
    if inner_depth < 1 or outer_level < inner_depth:
        raise InvalidParameter("need outer_level >= inner_depth >= 1")
    load = v.truncated(inner_depth).mass(s, t)
    k = math.ceil(outer_level / inner_depth)
    return math.exp(load) * load**k / math.factorial(k)


def _bell_over_factorial(n_max: int) -> np.ndarray:
    # a_n = B_n / n! via the stable recursion a_{n+1} = (1/(n+1)) sum_k a_k/(n-k)!
    a = np.zeros(n_max + 1)
    a[0] = 1.0
    for n in range(n_max):
        a[n + 1] = sum(a[k] / math.factorial(n - k) for k in range(n + 1)) / (n + 1)
    return a


def remainder_diagnostics(rho: float, m: int, mode: str = "factorial-jumps"):
    """Exact Taylor remainder of the two reference jump-size laws together
    with its leading-order estimate.

    ``factorial-jumps`` corresponds to level masses rho^n/n! (Gaussian-type
    compound Poisson), where the remainder terms are rho^n B_n/n! with Bell
    numbers B_n.  ``geometric-jumps`` corresponds to masses rho^n with
    rho < 1, where the terms are rho^n sum_k C(n-1, k-1)/k!.

    Returns ``(exact, estimate)``; the estimate omits the unspecified
    constants of the asymptotic statement, so only trends should be read
    from the ratio.
    """
    if m < 1:
        raise InvalidParameter("m must be >= 1")
    if rho <= 0:
        raise InvalidParameter("rho must be > 0")
    if mode == "factorial-jumps":
        terms = _factorial_mode_terms(rho, m)
        a_m = _bell_over_factorial(m)[m]
        estimate = a_m * rho**m
    elif mode == "geometric-jumps":
        if rho >= 1:
            raise InvalidParameter("geometric mode needs rho < 1")
        terms = _geometric_mode_terms(rho, m)
        estimate = math.exp(2 * math.sqrt(m)) / (2 * m**0.75 * math.sqrt(math.pi * math.e)) \
            * rho**m / (1 - rho)
    else:
        raise InvalidParameter(f"unknown mode {mode!r}")
    total = 0.0
    for term in terms:
        total += term
        if term < 1e-16 * total:
            break
    return total, estimate


def _factorial_mode_terms(rho: float, m: int):
    # stream of rho^n B_n/n! for n = m, m+1, ...; grown on demand
    a = [1.0]
    n = 0
    while True:
        a.append(sum(a[k] / math.factorial(n - k) for k in range(n + 1)) / (n + 1))
        n += 1
        if n >= m:
            yield a[n] * rho**n


def _geometric_mode_terms(rho: float, m: int):
    n = m
    while True:
        beta = sum(math.comb(n - 1, k - 1) / math.factorial(k) for k in range(1, n + 1))
        yield beta * rho**n
        n += 1


def gaussian_mgf_moment(d: int, m: int) -> float:
    """Closed form of E[e^{|xi|^2/4} |xi|^{2m}] for xi ~ N(0, I_d)."""
    if d < 1 or m < 0:
        raise InvalidParameter("need d >= 1 and m >= 0")
    return 2.0 ** (2 * m + d / 2) * math.gamma(d / 2 + m) / math.gamma(d / 2)


def gaussian_jump_tail_bound(cov: np.ndarray, intensity: float, t: float,
                             half_level: int) -> float:
    """Velocity-tail certificate for centered Gaussian compound Poisson jumps.

    Bounds the integrated T^1 mass of the characteristic velocity above
    level ``2 * half_level``; decays factorially in the half level.
    """
    cov = np.asarray(cov, dtype=float)
    if half_level < 1:
        raise InvalidParameter("half_level must be >= 1")
    d = cov.shape[0]
    sigma2 = float(np.linalg.eigvalsh(cov).max())
    m = half_level
    return math.exp(sigma2) * sigma2**m * gaussian_mgf_moment(d, m) \
        / math.factorial(2 * m) * intensity * t
