"""Batch front-end: JSON experiment configs in, CSV tables out.

Config schema (all experiments):

    {
      "experiment": "kernel" | "mmd" | "validate" | "bounds",
      "output_dir": "out",                  # optional, overridden by --output
      "triplets": [ ... ],                  # kernel/validate/bounds
      "ensemble": {...}, "wiener": {...},   # mmd
      "grid":   {"s_points": 129, "t_points": 129, "T": 1.0},
      "levels": {"M": 2, "N": 2},
      "mc":     {"n_paths": 20000, "steps": 16, "seed": 42},
      "threads": 1                          # optional, overridden by --threads
    }

A triplet is

    {"dim": 1, "state_depth": 1, "time_grid": [0.0, 1.0],
     "intervals": [{"drift": [0.0], "cov": [[1.0]],     # or "factors": [[..],..]
                    "area": [[0.0]],                    # optional, state_depth 2
                    "jumps": null
                             | {"type": "atomic", "weights": [..],
                                "atoms": [{"level1": [..], "level2": [[..]]}]}
                             | {"type": "gaussian_cp", "intensity": 1.0,
                                "cov": [[1.0]]}}]}

See ``examples_config()`` for a ready-to-run annotated example.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import tensor_algebra as ta
from .characteristics import (AtomicJumps, GaussianJumps, LevyTriplet,
                              characteristic_velocity)
from .development import (bound_gronwall, bound_inner_truncation, bound_level,
                          bound_outer_truncation, develop,
                          remainder_diagnostics)
from .errors import ConfigError, LevySigKernelError
from .kernel_solver import (make_grid, solve_truncated_system,
                            truncation_certificate)
from .mc_oracle import estimate_kernel
from .mmd import AugmentedPathEnsemble, WienerSpec, mmd_to_wiener
from .tensor_algebra import TruncatedTensor

_MAX_VELOCITY_COEFFS = 2_000_000


def _require(cfg: dict, key: str, path: str):
    if key not in cfg:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return cfg[key]


def _as_number(value, path: str) -> float:
    if not isinstance(value, (int, float)) or isinstance(value, bool):
        raise ConfigError(path, "expected a number")
    return float(value)


def _as_int(value, path: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(path, "expected an integer")
    return value


def _parse_matrix(value, d: int, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a matrix of numbers") from None
    if arr.shape != (d, d):
        raise ConfigError(path, f"expected shape ({d}, {d}), got {arr.shape}")
    return arr


def _parse_vector(value, d: int, path: str) -> np.ndarray:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a vector of numbers") from None
    if arr.shape != (d,):
        raise ConfigError(path, f"expected {d} entries, got shape {arr.shape}")
    return arr


def _parse_atom(value, d: int, state_depth: int, path: str) -> TruncatedTensor:
    if not isinstance(value, dict):
        raise ConfigError(path, "expected an object with level1/level2")
    levels = [np.zeros(1), _parse_vector(_require(value, "level1", path), d, f"{path}.level1")]
    if "level2" in value and value["level2"] is not None:
        if state_depth < 2:
            raise ConfigError(f"{path}.level2", "level2 atoms need state_depth 2")
        levels.append(_parse_matrix(value["level2"], d, f"{path}.level2").ravel())
    return TruncatedTensor.from_levels(d, levels)


def parse_triplet(cfg: dict, path: str) -> LevyTriplet:
    if not isinstance(cfg, dict):
        raise ConfigError(path, "expected an object")
    d = _as_int(_require(cfg, "dim", path), f"{path}.dim")
    state_depth = _as_int(cfg.get("state_depth", 1), f"{path}.state_depth")
    grid = np.asarray(_require(cfg, "time_grid", path), dtype=float)
    intervals = _require(cfg, "intervals", path)
    if not isinstance(intervals, list) or len(intervals) != len(grid) - 1:
        raise ConfigError(f"{path}.intervals", "need one interval object per grid step")
    drifts, covs, areas, jumps = [], [], [], []
    for i, iv in enumerate(intervals):
        ipath = f"{path}.intervals[{i}]"
        if not isinstance(iv, dict):
            raise ConfigError(ipath, "expected an object")
        drifts.append(_parse_vector(iv.get("drift", [0.0] * d), d, f"{ipath}.drift"))
        if "factors" in iv:
            a = np.zeros((d, d))
            for k, sig in enumerate(iv["factors"]):
                s = _parse_vector(sig, d, f"{ipath}.factors[{k}]")
                a += np.outer(s, s)
            covs.append(a)
        else:
            covs.append(_parse_matrix(iv.get("cov", np.zeros((d, d))), d, f"{ipath}.cov"))
        areas.append(None if iv.get("area") is None
                     else _parse_matrix(iv["area"], d, f"{ipath}.area"))
        jspec = iv.get("jumps")
        if jspec is None:
            jumps.append(None)
        elif not isinstance(jspec, dict):
            raise ConfigError(f"{ipath}.jumps", "expected null or an object")
        elif jspec.get("type") == "atomic":
            weights = np.asarray(_require(jspec, "weights", f"{ipath}.jumps"), dtype=float)
            atoms = tuple(_parse_atom(a, d, state_depth, f"{ipath}.jumps.atoms[{k}]")
                          for k, a in enumerate(_require(jspec, "atoms", f"{ipath}.jumps")))
            jumps.append(AtomicJumps(weights, atoms))
        elif jspec.get("type") == "gaussian_cp":
            jumps.append(GaussianJumps(
                _as_number(_require(jspec, "intensity", f"{ipath}.jumps"),
                           f"{ipath}.jumps.intensity"),
                _parse_matrix(_require(jspec, "cov", f"{ipath}.jumps"), d,
                              f"{ipath}.jumps.cov")))
        else:
            raise ConfigError(f"{ipath}.jumps.type", "expected 'atomic' or 'gaussian_cp'")
    try:
        return LevyTriplet(dim=d, time_grid=grid, drifts=drifts, covs=covs,
                           areas=areas, jumps=jumps, state_depth=state_depth)
    except LevySigKernelError as exc:
        raise ConfigError(path, str(exc)) from exc


def _parse_grid(cfg: dict) -> tuple[int, int, float]:
    grid = _require(cfg, "grid", "")
    if not isinstance(grid, dict):
        raise ConfigError("grid", "expected an object")
    sp = _as_int(_require(grid, "s_points", "grid"), "grid.s_points")
    tp = _as_int(grid.get("t_points", sp), "grid.t_points")
    horizon = _as_number(_require(grid, "T", "grid"), "grid.T")
    if sp < 2 or tp < 2 or horizon <= 0:
        raise ConfigError("grid", "need s_points, t_points >= 2 and T > 0")
    return sp, tp, horizon


def _parse_levels(cfg: dict) -> tuple[int, int]:
    levels = _require(cfg, "levels", "")
    if not isinstance(levels, dict):
        raise ConfigError("levels", "expected an object")
    m = _as_int(_require(levels, "M", "levels"), "levels.M")
    n = _as_int(levels.get("N", m), "levels.N")
    if m < 1 or n < 1:
        raise ConfigError("levels", "M and N must be >= 1")
    return m, n


def _certificate_depth(dim: int, level: int) -> int:
    """Deepest velocity depth within the coefficient budget (>= level)."""
    depth = level
    while depth < level + 16 and ta.flat_size(dim, depth + 1) <= _MAX_VELOCITY_COEFFS:
        depth += 1
    return depth


def cmd_kernel(cfg: dict, out_dir: str) -> int:
    triplets = _require(cfg, "triplets", "")
    if not isinstance(triplets, list) or len(triplets) != 2:
        raise ConfigError("triplets", "kernel experiment needs exactly two triplets")
    ta_, tb = (parse_triplet(t, f"triplets[{i}]") for i, t in enumerate(triplets))
    m, n = _parse_levels(cfg)
    sp, tp, horizon = _parse_grid(cfg)
    s_grid = make_grid(horizon, sp, ta_.time_grid)
    t_grid = make_grid(horizon, tp, tb.time_grid)
    depth_a = _certificate_depth(ta_.dim, m)
    depth_b = _certificate_depth(tb.dim, n)
    va = characteristic_velocity(ta_, depth_a)
    vb = characteristic_velocity(tb, depth_b)
    surface = solve_truncated_system(va.truncated(m), vb.truncated(n), m, n,
                                     s_grid, t_grid)
    cert = truncation_certificate(va, vb, m, n, horizon, horizon)
    surface.to_csv(os.path.join(out_dir, "kernel.csv"), include_fields=True)
    with open(os.path.join(out_dir, "certificate.txt"), "w") as fh:
        fh.write(f"w({horizon!r},{horizon!r}) = {surface.value()!r}\n")
        fh.write(f"truncation_certificate = {cert!r}\n")
        fh.write(f"levels M={m} N={n}; velocity depths {depth_a}/{depth_b}\n")
    print(f"kernel: w(T,T) = {surface.value()!r}, certificate = {cert!r}")
    return 0


def _parse_ensemble(cfg: dict) -> AugmentedPathEnsemble:
    ens = _require(cfg, "ensemble", "")
    if not isinstance(ens, dict):
        raise ConfigError("ensemble", "expected an object")
    d = _as_int(_require(ens, "dim", "ensemble"), "ensemble.dim")
    grid = np.asarray(_require(ens, "time_grid", "ensemble"), dtype=float)
    paths = _require(ens, "paths", "ensemble")
    if not isinstance(paths, list) or not paths:
        raise ConfigError("ensemble.paths", "expected a non-empty list")
    derivs, area_derivs = [], []
    n_int = len(grid) - 1
    for k, p in enumerate(paths):
        ppath = f"ensemble.paths[{k}]"
        if not isinstance(p, dict):
            raise ConfigError(ppath, "expected an object")
        dv = np.asarray(_require(p, "derivative", ppath), dtype=float)
        if dv.shape != (n_int, d):
            raise ConfigError(f"{ppath}.derivative",
                              f"expected shape ({n_int}, {d}), got {dv.shape}")
        derivs.append(dv)
        if p.get("area") is None:
            area_derivs.append(None)
        else:
            ar = np.asarray(p["area"], dtype=float)
            if ar.shape != (n_int, d, d):
                raise ConfigError(f"{ppath}.area",
                                  f"expected shape ({n_int}, {d}, {d}), got {ar.shape}")
            area_derivs.append(ar)
    try:
        return AugmentedPathEnsemble(dim=d, time_grid=grid, derivs=derivs,
                                     area_derivs=area_derivs)
    except LevySigKernelError as exc:
        raise ConfigError("ensemble", str(exc)) from exc


def _parse_wiener(cfg: dict, dim: int) -> WienerSpec:
    wn = _require(cfg, "wiener", "")
    if not isinstance(wn, dict):
        raise ConfigError("wiener", "expected an object")
    grid = np.asarray(_require(wn, "time_grid", "wiener"), dtype=float)
    n_int = len(grid) - 1
    try:
        if "factors" in wn:
            if len(wn["factors"]) != n_int:
                raise ConfigError("wiener.factors", "need one factor list per interval")
            return WienerSpec.from_factors(dim, grid, wn["factors"])
        covs = [_parse_matrix(a, dim, f"wiener.covs[{i}]")
                for i, a in enumerate(_require(wn, "covs", "wiener"))]
        if len(covs) != n_int:
            raise ConfigError("wiener.covs", "need one covariance per interval")
        return WienerSpec(dim, grid, covs)
    except LevySigKernelError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("wiener", str(exc)) from exc


def cmd_mmd(cfg: dict, out_dir: str, threads: int) -> int:
    ensemble = _parse_ensemble(cfg)
    wiener = _parse_wiener(cfg, ensemble.dim)
    sp, _, horizon = _parse_grid(cfg)
    if abs(horizon - ensemble.horizon) > 1e-12:
        raise ConfigError("grid.T", "must equal the ensemble horizon")
    mmd, report = mmd_to_wiener(ensemble, wiener, sp, threads=threads)
    report.to_csv(os.path.join(out_dir, "mmd.csv"))
    print(f"mmd = {mmd!r} (mmd^2 = {report.mmd_squared!r}, "
          f"{ensemble.n_paths} paths{', radicand clipped' if report.clipped else ''})")
    return 0


def cmd_validate(cfg: dict, out_dir: str) -> int:
    triplets = _require(cfg, "triplets", "")
    if not isinstance(triplets, list) or not triplets:
        raise ConfigError("triplets", "validate needs at least one triplet")
    parsed = [parse_triplet(t, f"triplets[{i}]") for i, t in enumerate(triplets)]
    trip_a = parsed[0]
    trip_b = parsed[1] if len(parsed) > 1 else parsed[0]
    m, n = _parse_levels(cfg)
    sp, tp, horizon = _parse_grid(cfg)
    mc = _require(cfg, "mc", "")
    n_paths = _as_int(_require(mc, "n_paths", "mc"), "mc.n_paths")
    steps = _as_int(_require(mc, "steps", "mc"), "mc.steps")
    seed = _as_int(_require(mc, "seed", "mc"), "mc.seed")

    results: list[tuple[str, bool, str]] = []
    va = characteristic_velocity(trip_a, _certificate_depth(trip_a.dim, m))
    vb = characteristic_velocity(trip_b, _certificate_depth(trip_b.dim, n))
    s_grid = make_grid(horizon, sp, trip_a.time_grid)
    t_grid = make_grid(horizon, tp, trip_b.time_grid)
    surface = solve_truncated_system(va.truncated(m), vb.truncated(n), m, n,
                                     s_grid, t_grid)
    w_val = surface.value()

    # oracle 1: inner product of truncated developments
    oracle_depth = min(_certificate_depth(trip_a.dim, max(m, n) + 8), 24)
    ref = ta.inner_product(
        develop(va.truncated(m), 0.0, horizon, oracle_depth),
        develop(vb.truncated(n), 0.0, horizon, oracle_depth))
    rel = abs(w_val - ref) / max(abs(ref), 1e-12)
    results.append(("solver-vs-development", rel <= 1e-3,
                    f"rel_err={rel:.3e} (w={w_val!r}, oracle={ref!r})"))

    # oracle 2: certificate against the deep-velocity reference
    cert = truncation_certificate(va, vb, m, n, horizon, horizon)
    ref_full = ta.inner_product(develop(va, 0.0, horizon, oracle_depth),
                                develop(vb, 0.0, horizon, oracle_depth))
    gap = abs(ref_full - w_val)
    tol = cert + 1e-3 * max(abs(ref_full), 1.0)
    results.append(("truncation-certificate", gap <= tol,
                    f"|u_ref - w|={gap:.3e} <= certificate+grid={tol:.3e}"))

    # oracle 3: Monte Carlo kernel within 3 standard errors + certificate
    mc_val, mc_se = estimate_kernel(trip_a, trip_b, horizon, max(m, n),
                                    n_paths, steps, seed)
    trunc_gap = abs(ta.inner_product(
        develop(va.truncated(m), 0.0, horizon, max(m, n)),
        develop(vb.truncated(n), 0.0, horizon, max(m, n))) - ref)
    tol = 3.0 * mc_se + cert + trunc_gap + 1e-3 * max(abs(w_val), 1.0)
    results.append(("mc-vs-solver", abs(mc_val - w_val) <= tol,
                    f"|mc - w|={abs(mc_val - w_val):.3e} <= 3se+cert={tol:.3e}"))

    # bound suite on the left velocity
    dev = develop(va, 0.0, horizon, oracle_depth)
    ok = ta.norm_p(dev, 1) <= bound_gronwall(va, 0.0, horizon) * (1 + 1e-12)
    for lev in range(1, min(oracle_depth, 6) + 1):
        ok = ok and (np.linalg.norm(dev.levels[lev])
                     <= bound_level(va, 0.0, horizon, lev) * (1 + 1e-12))
    results.append(("development-bounds", bool(ok), "levels and gronwall"))

    lines = []
    all_ok = True
    for name, passed, detail in results:
        all_ok &= passed
        lines.append(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    print("\n".join(lines))
    with open(os.path.join(out_dir, "validate.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return 0 if all_ok else 1


def cmd_bounds(cfg: dict, out_dir: str) -> int:
    triplets = _require(cfg, "triplets", "")
    if not isinstance(triplets, list) or not triplets:
        raise ConfigError("triplets", "bounds needs at least one triplet")
    m, _ = _parse_levels(cfg)
    _, _, horizon = _parse_grid(cfg)
    rows = []
    for i, raw in enumerate(triplets):
        trip = parse_triplet(raw, f"triplets[{i}]")
        depth = _certificate_depth(trip.dim, m)
        v = characteristic_velocity(trip, depth)
        dev = develop(v, 0.0, horizon, depth)
        dev_norms = [float(np.linalg.norm(lev)) for lev in dev.levels]
        total = ta.norm_p(dev, 1)
        for lev in range(1, m + 1):
            exact_tail = total - sum(dev_norms[: lev + 1])
            rows.append((i, lev, float(dev_norms[lev]),
                         float(bound_level(v, 0.0, horizon, lev)),
                         float(max(exact_tail, 0.0)),
                         float(bound_inner_truncation(v, 0.0, horizon, lev)),
                         float(bound_outer_truncation(v, 0.0, horizon,
                                                      max(lev, 1), lev + 1))))
    with open(os.path.join(out_dir, "bounds.csv"), "w") as fh:
        fh.write("triplet,level,exact_level_norm,level_bound,"
                 "exact_tail,inner_truncation_bound,outer_truncation_bound\n")
        for row in rows:
            fh.write(",".join(repr(x) if isinstance(x, float) else str(x)
                              for x in row) + "\n")
    with open(os.path.join(out_dir, "remainder.csv"), "w") as fh:
        fh.write("mode,rho,m,exact,asymptotic\n")
        for mode, rho in (("factorial-jumps", 1.0), ("geometric-jumps", 0.5)):
            for mm in range(1, 13):
                exact, asym = remainder_diagnostics(rho, mm, mode)
                fh.write(f"{mode},{rho!r},{mm},{exact!r},{asym!r}\n")
    print(f"bounds: wrote {len(rows)} rows")
    return 0


def examples_config() -> dict:
    """Annotated example config (also written by --write-example)."""
    return {
        "experiment": "kernel",
        "output_dir": "out",
        "triplets": [
            {"dim": 1, "state_depth": 1, "time_grid": [0.0, 1.0],
             "intervals": [{"drift": [0.0], "cov": [[1.0]], "jumps": None}]},
            {"dim": 1, "state_depth": 1, "time_grid": [0.0, 1.0],
             "intervals": [{"drift": [0.0], "cov": [[1.0]],
                            "jumps": {"type": "gaussian_cp", "intensity": 1.0,
                                      "cov": [[1.0]]}}]},
        ],
        "grid": {"s_points": 129, "t_points": 129, "T": 1.0},
        "levels": {"M": 4, "N": 4},
        "mc": {"n_paths": 20000, "steps": 16, "seed": 42},
        "threads": 1,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="levy-sigkernel",
        description="Expected signature kernels of inhomogeneous Levy "
                    "processes: kernel solves, signature-MMD, validation "
                    "and bound tables driven by a JSON config.")
    parser.add_argument("--config", help="path to the JSON experiment config")
    parser.add_argument("--output", help="output directory (overrides config)")
    parser.add_argument("--threads", type=int,
                        help="worker threads for independent solves "
                             "(overrides config; fallback env LEVY_SIGKERNEL_THREADS)")
    parser.add_argument("--seed", type=int, help="RNG seed override for mc blocks")
    parser.add_argument("--write-example", metavar="PATH",
                        help="write an annotated example config and exit")
    args = parser.parse_args(argv)

    if args.write_example:
        with open(args.write_example, "w") as fh:
            json.dump(examples_config(), fh, indent=2)
        print(f"wrote example config to {args.write_example}")
        return 0
    if not args.config:
        parser.error("--config is required (or use --write-example)")

    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    except json.JSONDecodeError as exc:
        print(f"error: config is not valid JSON: {exc}", file=sys.stderr)
        return 2

    try:
        experiment = _require(cfg, "experiment", "")
        if experiment not in ("kernel", "mmd", "validate", "bounds"):
            raise ConfigError("experiment",
                              "expected kernel, mmd, validate or bounds")
        if args.seed is not None:
            cfg.setdefault("mc", {})["seed"] = args.seed
        threads = args.threads
        if threads is None:
            env = os.environ.get("LEVY_SIGKERNEL_THREADS")
            threads = int(env) if env else cfg.get("threads", 1)
        out_dir = args.output or cfg.get("output_dir", ".")
        os.makedirs(out_dir, exist_ok=True)
        if experiment == "kernel":
            return cmd_kernel(cfg, out_dir)
        if experiment == "mmd":
            return cmd_mmd(cfg, out_dir, threads)
        if experiment == "validate":
            return cmd_validate(cfg, out_dir)
        return cmd_bounds(cfg, out_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LevySigKernelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
