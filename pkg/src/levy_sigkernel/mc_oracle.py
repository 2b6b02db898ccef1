"""Monte Carlo ground truth: path simulation, pathwise truncated signatures,
and estimators for expected signatures and kernels.

Randomness is counter-based: path p of a run seeded with ``seed`` draws
from a Philox stream with key ``[seed, stream_offset + p]``, so estimates
are reproducible bitwise regardless of how paths are scheduled.  Within a
path the draw order is fixed per interval: Brownian sub-step normals,
then the Poisson jump count, then jump positions, then jump values.

Jumps enter signatures through tensor exponentials (Marcus/geometric
convention), placed after the continuous factor of the sub-step that
contains them; the residual weak bias from not splitting that sub-step's
Gaussian increment is O(dt) and vanishes for commuting (d = 1) data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor_algebra as ta
from .characteristics import AtomicJumps, GaussianJumps, LevyTriplet
from .errors import InvalidParameter, OutOfRange, Unsupported
from .tensor_algebra import LevelNorms, TruncatedTensor

__all__ = [
    "SimulatedPaths",
    "SignatureEstimate",
    "simulate_paths",
    "path_signature",
    "estimate_expected_signature",
    "estimate_kernel",
    "estimate_to_csv",
]


@dataclass
class SimulatedPaths:
    """Time-ordered zero-scalar increments for a batch of paths.

    ``segments`` is a list of (level1, level2) pairs with arrays of shape
    (n_paths, d) and (n_paths, d*d) (level2 may be None).  Each segment
    contributes one tensor-exponential factor to every path's signature.
    """

    dim: int
    n_paths: int
    segments: list[tuple[np.ndarray, np.ndarray | None]]

    def increments_of(self, p: int) -> list[TruncatedTensor]:
        """Increment sequence of one path as truncated tensors."""
        out = []
        for lvl1, lvl2 in self.segments:
            x = TruncatedTensor.zero(self.dim, 1 if lvl2 is None else 2)
            x.levels[1] += lvl1[p]
            if lvl2 is not None:
                x.levels[2] += lvl2[p]
            out.append(x)
        return out

    def total_increment(self) -> np.ndarray:
        return sum(lvl1 for lvl1, _ in self.segments)


def _cov_factor(cov: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return vecs * np.sqrt(vals)


def simulate_paths(triplet: LevyTriplet, n_paths: int, steps_per_interval: int,
                   seed: int, horizon: float | None = None,
                   stream_offset: int = 0) -> SimulatedPaths:
    """Simulate increments of the triplet's process on [0, horizon].

    Gaussian sub-increments are exact per sub-step; jump counts are
    Poisson per interval with uniform positions.  Deterministic given
    ``seed`` (see module docstring for the stream layout).
    """
    if n_paths < 1 or steps_per_interval < 1:
        raise InvalidParameter("need n_paths >= 1 and steps_per_interval >= 1")
    if horizon is None:
        horizon = triplet.horizon
    if horizon > triplet.horizon + 1e-12:
        raise OutOfRange("horizon exceeds the triplet's grid")
    d = triplet.dim
    rngs = [np.random.Generator(np.random.Philox(key=[seed, stream_offset + p]))
            for p in range(n_paths)]

    segments: list[tuple[np.ndarray, np.ndarray | None]] = []
    for i in range(triplet.n_intervals):
        lo = triplet.time_grid[i]
        hi = min(triplet.time_grid[i + 1], horizon)
        if hi <= lo:
            break
        dt = (hi - lo) / steps_per_interval
        b, ar = triplet.drifts[i], triplet.areas[i]
        factor = _cov_factor(triplet.covs[i])
        has_noise = bool(np.any(factor))
        spec = triplet.jumps[i]

        noise = np.zeros((n_paths, steps_per_interval, d))
        # step -> slot -> list of (path, level1, level2); a path with several
        # jumps in one sub-step occupies successive slots in time order
        step_slots: dict[int, list[list]] = {}
        seen: dict[tuple[int, int], int] = {}

        def place(p, step, v1, v2):
            slot = seen.get((p, step), 0)
            seen[(p, step)] = slot + 1
            slots = step_slots.setdefault(step, [])
            while len(slots) <= slot:
                slots.append([])
            slots[slot].append((p, v1, v2))

        sqdt = math.sqrt(dt)
        for p, rng in enumerate(rngs):
            if has_noise:
                noise[p] = sqdt * rng.standard_normal((steps_per_interval, d)) @ factor.T
            if spec is None:
                continue
            rate = float(np.sum(spec.weights)) if isinstance(spec, AtomicJumps) \
                else spec.intensity
            n_jumps = int(rng.poisson(rate * (hi - lo))) if rate > 0 else 0
            if n_jumps == 0:
                continue
            pos = np.sort(rng.uniform(0.0, hi - lo, size=n_jumps))
            if isinstance(spec, AtomicJumps):
                picks = rng.choice(len(spec.atoms), size=n_jumps, p=spec.weights / rate)
                for u, pick in zip(pos, picks):
                    atom = spec.atoms[pick]
                    v1 = np.asarray(atom.levels[1], dtype=float) if atom.depth >= 1 \
                        else np.zeros(d)
                    v2 = np.asarray(atom.levels[2], dtype=float) if atom.depth >= 2 \
                        else None
                    place(p, min(int(u / dt), steps_per_interval - 1), v1, v2)
            elif isinstance(spec, GaussianJumps):
                draws = rng.standard_normal((n_jumps, d)) @ _cov_factor(spec.cov).T
                for u, val in zip(pos, draws):
                    place(p, min(int(u / dt), steps_per_interval - 1), val, None)
            else:
                raise Unsupported(f"jump spec {type(spec).__name__}")

        lvl2_base = None if ar is None else np.tile(ar.ravel() * dt, (n_paths, 1))
        for step in range(steps_per_interval):
            lvl1 = noise[:, step, :] + b * dt
            segments.append((lvl1, None if lvl2_base is None else lvl2_base.copy()))
            for slot_entries in step_slots.get(step, []):
                j1 = np.zeros((n_paths, d))
                j2 = None
                for p, v1, v2 in slot_entries:
                    j1[p] = v1
                    if v2 is not None:
                        if j2 is None:
                            j2 = np.zeros((n_paths, d * d))
                        j2[p] = v2
                segments.append((j1, j2))
        if hi >= horizon:
            break
    return SimulatedPaths(dim=d, n_paths=n_paths, segments=segments)


def path_signature(increments, depth: int) -> TruncatedTensor:
    """Ordered product of tensor exponentials of zero-scalar increments."""
    if not increments:
        raise InvalidParameter("need at least one increment")
    dim = increments[0].dim
    out = TruncatedTensor.unit(dim, depth)
    for x in increments:
        if x.scalar() != 0.0:
            raise InvalidParameter("increments must have zero scalar part")
        out = ta.tensor_mul(out, ta.exp_tensor(x.with_depth(depth)), depth)
    return out


# -- batched signatures over all paths at once --------------------------


def _batch_mul(x: list[np.ndarray], y: list[np.ndarray], depth: int, d: int):
    n_paths = x[0].shape[0]
    out = [np.zeros((n_paths, d**n)) for n in range(depth + 1)]
    for n in range(depth + 1):
        acc = out[n]
        for k in range(max(0, n - len(y) + 1), min(n, len(x) - 1) + 1):
            xk, ym = x[k], y[n - k]
            if k == 0:
                acc += xk * ym
            elif k == n:
                acc += xk * ym
            else:
                acc += np.einsum("pi,pj->pij", xk, ym).reshape(n_paths, -1)
    return out


def _batch_exp(x: list[np.ndarray], depth: int, d: int):
    n_paths = x[0].shape[0]
    unit0 = np.ones((n_paths, 1))
    acc = [unit0.copy()] + [np.zeros((n_paths, d**n)) for n in range(1, depth + 1)]
    for k in range(depth, 0, -1):
        xk = [lvl / k for lvl in x]
        acc = _batch_mul(xk, acc, depth, d)
        acc[0] += 1.0
    return acc


def _batch_signatures(paths: SimulatedPaths, depth: int):
    d = paths.dim
    n_paths = paths.n_paths
    sig = [np.ones((n_paths, 1))] + [np.zeros((n_paths, d**n)) for n in range(1, depth + 1)]
    for lvl1, lvl2 in paths.segments:
        inc = [np.zeros((n_paths, 1)), lvl1]
        if depth >= 2:
            inc.append(lvl2 if lvl2 is not None else np.zeros((n_paths, d * d)))
        sig = _batch_mul(sig, _batch_exp(inc, depth, d), depth, d)
    return sig


@dataclass
class SignatureEstimate:
    """Sample mean of pathwise signatures with standard errors."""

    mean: TruncatedTensor
    se: TruncatedTensor
    level_se: LevelNorms
    n_paths: int


def estimate_expected_signature(triplet: LevyTriplet, t: float, depth: int,
                                n_paths: int, steps: int, seed: int,
                                stream_offset: int = 0) -> SignatureEstimate:
    """Monte Carlo estimate of the expected signature at time t."""
    paths = simulate_paths(triplet, n_paths, steps, seed, horizon=t,
                           stream_offset=stream_offset)
    sig = _batch_signatures(paths, depth)
    mean = TruncatedTensor(triplet.dim, [lvl.mean(axis=0) for lvl in sig])
    se_levels = [lvl.std(axis=0, ddof=1) / math.sqrt(n_paths) if n_paths > 1
                 else np.zeros(lvl.shape[1]) for lvl in sig]
    se = TruncatedTensor(triplet.dim, se_levels)
    level_se = LevelNorms(np.array([np.linalg.norm(lev) for lev in se_levels]))
    return SignatureEstimate(mean=mean, se=se, level_se=level_se, n_paths=n_paths)


def estimate_kernel(triplet_a: LevyTriplet, triplet_b: LevyTriplet, t: float,
                    depth: int, n_paths: int, steps: int, seed: int):
    """Monte Carlo estimate of the expected signature kernel at (t, t).

    Returns ``(value, standard_error)``; the error combines the two
    independent mean estimates by the delta method.  The second triplet
    uses path streams offset by ``n_paths``.
    """
    paths_a = simulate_paths(triplet_a, n_paths, steps, seed, horizon=t)
    paths_b = simulate_paths(triplet_b, n_paths, steps, seed, horizon=t,
                             stream_offset=n_paths)
    sig_a = _batch_signatures(paths_a, depth)
    sig_b = _batch_signatures(paths_b, depth)
    mean_a = [lvl.mean(axis=0) for lvl in sig_a]
    mean_b = [lvl.mean(axis=0) for lvl in sig_b]
    value = float(sum(ma @ mb for ma, mb in zip(mean_a, mean_b)))
    # delta method: variance of <mean_a, .> against per-path signatures of b
    proj_a = sum(lvl @ mb for lvl, mb in zip(sig_a, mean_b))
    proj_b = sum(lvl @ ma for lvl, ma in zip(sig_b, mean_a))
    var = proj_a.var(ddof=1) / n_paths + proj_b.var(ddof=1) / n_paths
    return value, float(math.sqrt(var))


def estimate_to_csv(estimate: SignatureEstimate, path) -> None:
    """Serialize an estimate as (word, mean, se) rows."""
    dim = estimate.mean.dim
    with open(path, "w") as fh:
        fh.write("word,mean,se\n")
        for n in range(estimate.mean.depth + 1):
            for idx in range(dim**n):
                word = "".join(str(c) for c in ta.word_from_index(idx, n, dim))
                fh.write(f"{word},{float(estimate.mean.levels[n][idx])!r},"
                         f"{float(estimate.se.levels[n][idx])!r}\n")
