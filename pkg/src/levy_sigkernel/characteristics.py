"""Differential triplets of inhomogeneous Levy processes and their
characteristic velocities.

A triplet holds, per interval of a time grid, a drift (vector part plus an
optional antisymmetric area part), a diffusion covariance on the first
level, and a jump specification.  Its characteristic velocity is the
piecewise-constant tensor-series derivative whose free development is the
expected signature:

    velocity = drift + area + cov/2 + integral of (exp(x) - 1 - x 1_{|x| small})
               against the jump measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import integrate

from . import tensor_algebra as ta
from .errors import (DepthTooSmall, DimMismatch, InvalidParameter,
                     InvalidTriplet, OutOfRange, Unsupported)
from .tensor_algebra import TruncatedTensor

__all__ = [
    "PiecewiseVelocity",
    "LevyTriplet",
    "AtomicJumps",
    "GaussianJumps",
    "characteristic_velocity",
    "exponential_moment_value",
    "dilate_triplet",
    "gaussian_tensor_moment",
]

_PSD_TOL = 1e-10


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise InvalidParameter("time grid needs at least two points")
    if grid[0] != 0.0:
        raise InvalidParameter("time grid must start at 0")
    if not np.all(np.diff(grid) > 0):
        raise InvalidParameter("time grid must be strictly increasing")
    return grid


def _check_psd(mat: np.ndarray, what: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise InvalidTriplet(f"{what} must be a square matrix")
    if not np.allclose(mat, mat.T, atol=_PSD_TOL):
        raise InvalidTriplet(f"{what} must be symmetric")
    eigmin = np.linalg.eigvalsh(mat).min() if mat.size else 0.0
    if eigmin < -_PSD_TOL * max(1.0, np.abs(mat).max()):
        raise InvalidTriplet(f"{what} must be positive semidefinite")
    return 0.5 * (mat + mat.T)


class PiecewiseVelocity:
    """A time grid plus one zero-scalar tensor per interval."""

    def __init__(self, dim: int, time_grid: Sequence[float],
                 tensors: Sequence[TruncatedTensor]):
        self.dim = dim
        self.time_grid = _check_grid(np.asarray(time_grid, dtype=float))
        if len(tensors) != len(self.time_grid) - 1:
            raise InvalidParameter("need one tensor per grid interval")
        for x in tensors:
            if x.dim != dim:
                raise DimMismatch("velocity tensor dim mismatch")
            if x.scalar() != 0.0:
                raise InvalidParameter("velocity tensors must have zero scalar part")
        self.tensors = list(tensors)
        self.depth = max(x.depth for x in tensors)

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    def interval_of(self, t: float) -> int:
        """Index of the interval containing t (right-open, last one closed)."""
        if t < self.time_grid[0] - 1e-12 or t > self.time_grid[-1] + 1e-12:
            raise OutOfRange(f"time {t} outside [{self.time_grid[0]}, {self.time_grid[-1]}]")
        i = int(np.searchsorted(self.time_grid, t, side="right") - 1)
        return min(max(i, 0), len(self.tensors) - 1)

    def overlaps(self, s: float, t: float):
        """Yield (interval index, overlap length) pairs covering [s, t]."""
        if s > t:
            raise OutOfRange("need s <= t")
        self.interval_of(s), self.interval_of(t)
        for i in range(len(self.tensors)):
            lo = max(s, self.time_grid[i])
            hi = min(t, self.time_grid[i + 1])
            if hi > lo + 0.0:
                yield i, hi - lo

    def truncated(self, depth: int) -> "PiecewiseVelocity":
        return PiecewiseVelocity(self.dim, self.time_grid,
                                 [ta.truncate(x, depth) for x in self.tensors])

    def mass(self, s: float, t: float) -> float:
        """1-variation mass: integral of the T^1 norm over [s, t]."""
        return float(sum(dt * ta.norm_p(self.tensors[i], 1)
                         for i, dt in self.overlaps(s, t)))

    def level_mass(self, s: float, t: float, n: int) -> float:
        """Integral of the level-n Euclidean norm over [s, t]."""
        total = 0.0
        for i, dt in self.overlaps(s, t):
            x = self.tensors[i]
            if n <= x.depth:
                total += dt * float(np.linalg.norm(x.levels[n]))
        return float(total)

    def tail_mass(self, s: float, t: float, depth: int) -> float:
        """Integral of the T^1 norm of the part above ``depth``."""
        total = 0.0
        for i, dt in self.overlaps(s, t):
            x = self.tensors[i]
            total += dt * sum(np.linalg.norm(x.levels[n])
                              for n in range(depth + 1, x.depth + 1))
        return float(total)


@dataclass(frozen=True)
class AtomicJumps:
    """Finitely many atoms x_i with intensities lambda_i >= 0."""

    weights: np.ndarray
    atoms: tuple[TruncatedTensor, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", np.asarray(self.weights, dtype=float))
        if len(self.weights) != len(self.atoms):
            raise InvalidTriplet("one weight per atom required")
        if np.any(self.weights < 0):
            raise InvalidTriplet("atom intensities must be >= 0")
        for x in self.atoms:
            if x.scalar() != 0.0:
                raise InvalidTriplet("jump atoms must have zero scalar part")


@dataclass(frozen=True)
class GaussianJumps:
    """Compound Poisson jumps with centered Gaussian law N(0, cov) on V."""

    intensity: float
    cov: np.ndarray

    def __post_init__(self):
        if self.intensity < 0:
            raise InvalidTriplet("jump intensity must be >= 0")
        object.__setattr__(self, "cov", _check_psd(self.cov, "jump covariance"))


JumpSpec = AtomicJumps | GaussianJumps | None


@dataclass
class LevyTriplet:
    """Piecewise-constant differential characteristics (drift, cov, jumps).

    ``drifts[i]`` is the level-1 drift vector on interval i; ``areas[i]``
    the antisymmetric level-2 drift part (``None`` for state_depth 1);
    ``covs[i]`` the PSD diffusion covariance on the level-1 block; and
    ``jumps[i]`` the jump specification.
    """

    dim: int
    time_grid: np.ndarray
    drifts: list[np.ndarray]
    covs: list[np.ndarray]
    areas: list[np.ndarray | None] = field(default_factory=list)
    jumps: list[JumpSpec] = field(default_factory=list)
    state_depth: int = 1

    def __post_init__(self):
        self.time_grid = _check_grid(self.time_grid)
        m = len(self.time_grid) - 1
        if not self.areas:
            self.areas = [None] * m
        if not self.jumps:
            self.jumps = [None] * m
        if not (len(self.drifts) == len(self.covs) == len(self.areas) == len(self.jumps) == m):
            raise InvalidTriplet("per-interval data must match the grid")
        if self.state_depth not in (1, 2):
            raise InvalidTriplet("state_depth must be 1 or 2")
        self.drifts = [np.asarray(b, dtype=float) for b in self.drifts]
        for b in self.drifts:
            if b.shape != (self.dim,):
                raise InvalidTriplet("drift must be a level-1 vector")
        self.covs = [_check_psd(a, "diffusion covariance") for a in self.covs]
        for a in self.covs:
            if a.shape != (self.dim, self.dim):
                raise InvalidTriplet("covariance must be dim x dim")
        checked_areas: list[np.ndarray | None] = []
        for ar in self.areas:
            if ar is None:
                checked_areas.append(None)
                continue
            if self.state_depth < 2:
                raise InvalidTriplet("area part requires state_depth 2")
            ar = np.asarray(ar, dtype=float)
            if ar.shape != (self.dim, self.dim):
                raise InvalidTriplet("area part must be dim x dim")
            if not np.allclose(ar + ar.T, 0.0, atol=_PSD_TOL):
                raise InvalidTriplet("area part must be antisymmetric")
            checked_areas.append(ar)
        self.areas = checked_areas
        for j in self.jumps:
            if isinstance(j, AtomicJumps):
                for x in j.atoms:
                    if x.dim != self.dim:
                        raise InvalidTriplet("atom dim mismatch")
                    if x.depth > self.state_depth:
                        raise InvalidTriplet("atom depth exceeds state_depth")
                    if x.depth >= 2:
                        lvl2 = x.levels[2].reshape(self.dim, self.dim)
                        if not np.allclose(lvl2 + lvl2.T, 0.0, atol=_PSD_TOL):
                            raise InvalidTriplet("atom level-2 part must be antisymmetric")
            elif isinstance(j, GaussianJumps):
                if j.cov.shape != (self.dim, self.dim):
                    raise InvalidTriplet("jump covariance must be dim x dim")

    @property
    def horizon(self) -> float:
        return float(self.time_grid[-1])

    @property
    def n_intervals(self) -> int:
        return len(self.drifts)

    def has_jumps(self) -> bool:
        return any(j is not None for j in self.jumps)

    @classmethod
    def homogeneous(cls, dim: int, horizon: float, drift=None, cov=None,
                    area=None, jumps: JumpSpec = None,
                    state_depth: int | None = None) -> "LevyTriplet":
        """Single-interval triplet with constant characteristics."""
        b = np.zeros(dim) if drift is None else np.asarray(drift, dtype=float)
        a = np.zeros((dim, dim)) if cov is None else np.asarray(cov, dtype=float)
        if state_depth is None:
            state_depth = 2 if area is not None else 1
        return cls(dim=dim, time_grid=np.array([0.0, horizon]),
                   drifts=[b], covs=[a], areas=[area], jumps=[jumps],
                   state_depth=state_depth)

    @classmethod
    def brownian(cls, dim: int, horizon: float, cov=None) -> "LevyTriplet":
        """Time-homogeneous Brownian motion (standard if cov omitted)."""
        return cls.homogeneous(dim, horizon,
                               cov=np.eye(dim) if cov is None else cov)


def gaussian_tensor_moment(cov: np.ndarray, n: int) -> np.ndarray:
    """Flattened n-th tensor moment E[xi^{(x)n}] of xi ~ N(0, cov).

    Pair-partition recursion on the last index: the moment at n couples the
    final slot with each earlier slot through the covariance and recurses
    on the remaining n-2 slots.  Odd moments vanish.
    """
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    if n == 0:
        return np.ones(1)
    if n % 2 == 1:
        return np.zeros(d**n)
    prev = gaussian_tensor_moment(cov, n - 2).reshape((d,) * (n - 2))
    out = np.zeros((d,) * n)
    for k in range(n - 1):
        # tensor M_{n-2} with cov in slots (k, n-1), remaining slots in order
        term = np.multiply.outer(prev, cov)           # axes: others..., k-slot, last
        out += np.moveaxis(term, n - 2, k)
    return out.ravel()


def _jump_velocity_term(spec: JumpSpec, dim: int, depth: int) -> TruncatedTensor:
    """Contribution of the jump measure to the characteristic velocity."""
    out = TruncatedTensor.zero(dim, depth)
    if spec is None:
        return out
    if isinstance(spec, AtomicJumps):
        for lam, atom in zip(spec.weights, spec.atoms):
            if lam == 0.0:
                continue
            x = atom.with_depth(depth)
            term = ta.exp_tensor(x)
            term.levels[0][0] -= 1.0
            if ta.max_level_norm(atom) <= 1.0:
                term = term - x
            out = out + term * float(lam)
        return out
    # Centered Gaussian law on V: the small-jump compensator vanishes by
    # symmetry, leaving intensity * (E[exp(xi)] - 1).
    for n in range(2, depth + 1, 2):
        out.levels[n] += spec.intensity * gaussian_tensor_moment(spec.cov, n) / math.factorial(n)
    return out


def _drift_tensor(triplet: LevyTriplet, i: int, depth: int) -> TruncatedTensor:
    x = TruncatedTensor.zero(triplet.dim, depth)
    x.levels[1] += triplet.drifts[i]
    if triplet.areas[i] is not None and depth >= 2:
        x.levels[2] += triplet.areas[i].ravel()
    return x


def characteristic_velocity(triplet: LevyTriplet, depth: int) -> PiecewiseVelocity:
    """Characteristic velocity of the triplet, truncated at ``depth``."""
    if depth < triplet.state_depth:
        raise DepthTooSmall(
            f"depth {depth} cannot hold state_depth {triplet.state_depth}")
    tensors = []
    for i in range(triplet.n_intervals):
        x = _drift_tensor(triplet, i, depth)
        if depth >= 2:
            x.levels[2] += 0.5 * triplet.covs[i].ravel()
        x = x + _jump_velocity_term(triplet.jumps[i], triplet.dim, depth)
        tensors.append(x)
    return PiecewiseVelocity(triplet.dim, triplet.time_grid, tensors)


def _large_jump_radial_integrand(r: float, d: int, scale: float) -> float:
    # (e^{scale r} - 1) times the chi_d density, assembled in log space so
    # that the Gaussian factor tames the exponential before it overflows
    logc = (1 - d / 2) * math.log(2) - math.lgamma(d / 2) + (d - 1) * math.log(r)
    quad_part = logc - 0.5 * r * r
    return math.exp(quad_part + scale * r) - math.exp(quad_part)


def exponential_moment_value(triplet: LevyTriplet, lam: float,
                             horizon: float | None = None) -> float:
    """Large-jump exponential moment entering the sufficiency check.

    Atomic jumps are summed exactly.  For Gaussian jump laws the value is
    an upper bound obtained by radial quadrature after bounding the jump
    norm through the largest covariance eigenvalue; it is always finite,
    which is what the sufficiency check needs.
    """
    if lam <= 0:
        raise InvalidParameter("lam must be > 0")
    if horizon is None:
        horizon = triplet.horizon
    total = 0.0
    for i in range(triplet.n_intervals):
        dt = min(horizon, triplet.time_grid[i + 1]) - triplet.time_grid[i]
        if dt <= 0:
            continue
        spec = triplet.jumps[i]
        if spec is None:
            continue
        if isinstance(spec, AtomicJumps):
            for w, atom in zip(spec.weights, spec.atoms):
                if ta.max_level_norm(atom) > 1.0:
                    try:
                        total += dt * w * math.expm1(ta.norm_p(ta.dilate(atom, lam), 1))
                    except OverflowError:
                        return math.inf
        else:
            sigma = math.sqrt(max(np.linalg.eigvalsh(spec.cov).max(), 0.0))
            if sigma == 0.0 or spec.intensity == 0.0:
                continue
            d = triplet.dim
            val, _ = integrate.quad(
                _large_jump_radial_integrand, 1.0 / sigma, np.inf,
                args=(d, lam * sigma))
            total += dt * spec.intensity * val
    return total


def dilate_triplet(triplet: LevyTriplet, lam: float) -> LevyTriplet:
    """Triplet of the dilated process.

    Atoms dilate level by level, the covariance picks up lam^2, and the
    drift absorbs the compensator mismatch of atoms whose max-level norm
    crosses the small-jump threshold: each such atom contributes
    ``weight * x * (1_{|dilated| <= 1} - 1_{|original| <= 1})`` before the
    final dilation.  The sign is fixed by the requirement that the
    characteristic velocity of the dilated triplet equal the dilated
    characteristic velocity.
    """
    if lam <= 0:
        raise InvalidParameter("lam must be > 0")
    drifts, covs, areas, jumps = [], [], [], []
    for i in range(triplet.n_intervals):
        spec = triplet.jumps[i]
        if isinstance(spec, GaussianJumps):
            if triplet.state_depth != 1:
                raise Unsupported("Gaussian jump scaling is defined for state_depth 1 only")
            jumps.append(GaussianJumps(spec.intensity, lam**2 * spec.cov))
            correction = TruncatedTensor.zero(triplet.dim, triplet.state_depth)
        elif isinstance(spec, AtomicJumps):
            new_atoms = tuple(ta.dilate(x, lam) for x in spec.atoms)
            jumps.append(AtomicJumps(spec.weights.copy(), new_atoms))
            correction = TruncatedTensor.zero(triplet.dim, triplet.state_depth)
            for w, x, xl in zip(spec.weights, spec.atoms, new_atoms):
                flip = (1.0 if ta.max_level_norm(xl) <= 1.0 else 0.0) \
                    - (1.0 if ta.max_level_norm(x) <= 1.0 else 0.0)
                if flip != 0.0:
                    correction = correction + x.with_depth(triplet.state_depth) * (w * flip)
        else:
            jumps.append(None)
            correction = TruncatedTensor.zero(triplet.dim, triplet.state_depth)
        b = _drift_tensor(triplet, i, triplet.state_depth) + correction
        b = ta.dilate(b, lam)
        drifts.append(b.levels[1].copy())
        areas.append(b.levels[2].reshape(triplet.dim, triplet.dim).copy()
                     if triplet.state_depth == 2 else None)
        covs.append(lam**2 * triplet.covs[i])
    return LevyTriplet(dim=triplet.dim, time_grid=triplet.time_grid.copy(),
                       drifts=drifts, covs=covs, areas=areas, jumps=jumps,
                       state_depth=triplet.state_depth)
