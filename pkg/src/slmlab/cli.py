"""Command-line front end: experiment recipes that regenerate the
reference figures as CSV data files.

Configuration is a flat key=value text file; every common CLI flag
overrides the file.  Unknown keys are rejected with their line number.
All randomness flows through the Philox streams in :mod:`slmlab.rng`,
so a run with identical config and seed produces byte-identical CSVs.
Each run writes a JSON manifest after all artifacts are complete;
failures leave a FAILED marker instead of partial silence.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .amp import amp_diagnostics, amp_run, generate_instance
from .exact import detection_roc, exact_marginals, support_posterior
from .infoseq import (
    check_card_bound,
    check_theorem_ip_ub,
    check_theorem_monotone,
    estimate_sequences,
    mean_squared_covariance,
)
from .replica import (
    fixed_point_curve,
    invert_mmse,
    locate_phase_transition,
    replica_solution,
    replica_sweep,
)
from .rng import GENERATOR_ID, rng_stream
from .scalar_channel import (
    ScalarPrior,
    bg_posterior_update,
    discretize_bg,
    posterior_stats,
    prior_moments,
    scalar_mmse,
)
from .subset import gaussianity_diagnostic, interference_subtract, qr_split

__all__ = ["main", "ConfigError", "run_command"]


class ConfigError(ValueError):
    """Configuration file or flag rejected during validation."""


# ---------------------------------------------------------------------------
# Config handling
# ---------------------------------------------------------------------------


def _parse_grid(text: str) -> list[float]:
    """Grid syntax: 'linspace:a,b,n', 'logspace:a,b,n' or 'v1,v2,...'."""
    if text.startswith("linspace:") or text.startswith("logspace:"):
        kind, args = text.split(":", 1)
        parts = args.split(",")
        if len(parts) != 3:
            raise ValueError(f"{kind} needs three arguments, got {args!r}")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if kind == "linspace":
            return [float(v) for v in np.linspace(a, b, n)]
        return [float(v) for v in np.geomspace(a, b, n)]
    return [float(v) for v in text.split(",")]


_PARSERS: dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "str": str,
    "bool": lambda s: {"true": True, "false": False, "1": True, "0": False}[s.lower()],
    "grid": _parse_grid,
    "intlist": lambda s: [int(v) for v in s.split(",")],
}

_PRIOR_KEYS = {
    "prior.kind": ("str", "bernoulli_gaussian"),
    "prior.mu": ("float", 0.0),
    "prior.sigma2": ("float", 1e6),
    "prior.gamma": ("float", 0.2),
    "prior.atoms": ("grid", [-1.0, 1.0]),
    "prior.weights": ("grid", [0.5, 0.5]),
}

_COMMON_KEYS = {
    "seed": ("int", 0),
    "trials": ("int", 2000),
    "out_dir": ("str", "."),
    "threads": ("int", 1),
}

#: Per-command schema: key -> (type name, default).
SCHEMAS: dict[str, dict[str, tuple[str, Any]]] = {
    "scalar-curve": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 10_000),
        "s_grid": ("grid", [float(v) for v in np.geomspace(1e-6, 1e-2, 40)]),
    },
    "slm-sweep": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 2_000),
        "m_grid": ("intlist", [int(v) for v in np.arange(200, 1300, 100)]),
        "full_size": ("bool", False),
        "damping": ("float", 0.0),
        "max_iter": ("int", 200),
        "tol": ("float", 1e-8),
    },
    "roc": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 2_000),
        "m_a": ("int", 800),
        "m_b": ("int", 400),
        "n_thresholds": ("int", 512),
        "damping": ("float", 0.0),
    },
    "replica": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "delta_grid": ("grid", [float(v) for v in np.linspace(0.05, 1.0, 20)]),
    },
    "fixed-point-curve": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "m_points": ("int", 80),
        "m_lo_frac": ("float", 1e-6),
        "m_hi_frac": ("float", 1.0 - 1e-6),
    },
    "phase": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "delta_lo": ("float", 0.25),
        "delta_hi": ("float", 0.45),
        "tol": ("float", 2e-4),
    },
    "amp-run": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 2_000),
        "m": ("int", 800),
        "damping": ("float", 0.0),
        "max_iter": ("int", 200),
        "tol": ("float", 1e-8),
    },
    "oracle-compare": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 12),
        "m": ("int", 18),
        "instances": ("int", 50),
    },
    "infoseq": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 4),
        "m": ("int", 12),
        "msc": ("bool", True),
    },
    "subset": {
        **_PRIOR_KEYS,
        **_COMMON_KEYS,
        "n": ("int", 12),
        "m": ("int", 18),
        "k": ("int", 1),
    },
}


def load_config_file(path: str) -> dict[str, tuple[str, int]]:
    """Read a flat key=value file, keeping line numbers for messages."""
    out: dict[str, tuple[str, int]] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            key, value = line.split("=", 1)
            key, value = key.strip(), value.strip()
            if key in out:
                raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = (value, lineno)
    return out


def resolve_config(
    command: str, file_cfg: dict[str, tuple[str, int]], overrides: dict[str, Any], path: str
) -> dict[str, Any]:
    schema = SCHEMAS[command]
    cfg = {k: default for k, (_, default) in schema.items()}
    for key, (value, lineno) in file_cfg.items():
        if key not in schema:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} for command {command!r}")
        type_name = schema[key][0]
        try:
            cfg[key] = _PARSERS[type_name](value)
        except Exception as exc:
            raise ConfigError(
                f"{path}:{lineno}: cannot parse {key!r} as {type_name}: {exc}"
            ) from exc
    for key, value in overrides.items():
        if value is not None:
            cfg[key] = value
    return cfg


def prior_from_config(cfg: dict[str, Any]) -> ScalarPrior:
    kind = cfg["prior.kind"].lower()
    if kind in ("gaussian", "normal"):
        return ScalarPrior.gaussian(cfg["prior.mu"], cfg["prior.sigma2"])
    if kind in ("bernoulli_gaussian", "bg"):
        return ScalarPrior.bernoulli_gaussian(cfg["prior.mu"], cfg["prior.sigma2"], cfg["prior.gamma"])
    if kind in ("finite_atoms", "atoms"):
        return ScalarPrior.finite_atoms(cfg["prior.atoms"], cfg["prior.weights"])
    raise ConfigError(f"unknown prior kind {cfg['prior.kind']!r}")


# ---------------------------------------------------------------------------
# CSV and manifest output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    """Shortest round-trip formatting for floats; plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _atomic_write(path: str, data: str) -> None:
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", newline="") as fh:
        fh.write(data)
    os.replace(tmp, path)


def write_csv(path: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    _atomic_write(path, buf.getvalue())


@dataclass
class RunContext:
    command: str
    cfg: dict[str, Any]
    out_dir: str
    artifacts: list[str]
    started: float

    def path(self, name: str) -> str:
        self.artifacts.append(name)
        return os.path.join(self.out_dir, name)

    def write_manifest(self, extra: dict[str, Any] | None = None) -> None:
        manifest = {
            "command": self.command,
            "config": {k: _json_safe(v) for k, v in sorted(self.cfg.items())},
            "artifacts": self.artifacts,
            "wall_clock_s": time.monotonic() - self.started,
            "version": __version__,
            "rng": {
                "generator": GENERATOR_ID,
                "splitting": "streams keyed by (seed, stream_id)",
            },
        }
        if extra:
            manifest["results"] = _json_safe(extra)
        _atomic_write(
            os.path.join(self.out_dir, "manifest.json"),
            json.dumps(manifest, indent=2, sort_keys=False) + "\n",
        )


def _json_safe(v):
    if isinstance(v, dict):
        return {k: _json_safe(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_safe(x) for x in v]
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.ndarray):
        return [_json_safe(x) for x in v.tolist()]
    return v


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_scalar_curve(ctx: RunContext) -> dict[str, Any]:
    """Squared error / posterior variance / exact MMSE of the scalar
    channel across snr, for one seeded draw of n variables."""
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    rng = rng_stream(cfg["seed"], 0)
    x = prior.sample(cfg["n"], rng)
    rows = []
    for s in cfg["s_grid"]:
        w = rng.standard_normal(cfg["n"])
        y = math.sqrt(s) * x + w
        mean, var = posterior_stats(prior, s, y)
        rows.append(
            (s, float(np.mean((x - mean) ** 2)), float(np.mean(var)), scalar_mmse(prior, s))
        )
    write_csv(ctx.path("scalar_curve.csv"), ["s", "avg_sq_err", "avg_post_var", "avg_mmse"], rows)
    return {}


def _sweep_point(prior, n, m, seed, damping, max_iter, tol):
    inst = generate_instance(prior, n, m, seed)
    if m == 0:
        # no observations: the posterior is the prior
        mean, var, _ = prior_moments(prior)
        return (0, float(np.mean((inst.x_true - mean) ** 2)), var)
    out = amp_run(inst, prior, max_iter=max_iter, tol=tol, damping=damping)
    if out.diverged:
        return (m, math.nan, math.nan)
    err, post = amp_diagnostics(out, inst.x_true)
    return (m, err, post)


def cmd_slm_sweep(ctx: RunContext) -> dict[str, Any]:
    """AMP squared error and posterior variance against the asymptotic
    MMSE as the number of observations grows."""
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    n = 10_000 if cfg["full_size"] else cfg["n"]
    m_grid = (
        [int(v) for v in np.arange(200, 6001, 200)] if cfg["full_size"] else cfg["m_grid"]
    )
    work = [
        (prior, n, m, cfg["seed"], cfg["damping"], cfg["max_iter"], cfg["tol"]) for m in m_grid
    ]
    if cfg["threads"] > 1:
        with concurrent.futures.ThreadPoolExecutor(cfg["threads"]) as pool:
            amp_rows = list(pool.map(lambda a: _sweep_point(*a), work))
    else:
        amp_rows = [_sweep_point(*a) for a in work]
    var = prior_moments(prior)[1]
    rows = []
    for m, err, post in amp_rows:
        limit = var if m == 0 else replica_solution(prior, m / n).M_delta
        rows.append((m, err, post, limit))
    write_csv(
        ctx.path("slm_sweep.csv"),
        ["M_obs", "amp_sq_err", "amp_post_var", "replica_mmse"],
        rows,
    )
    return {"n": n}


def cmd_roc(ctx: RunContext) -> dict[str, Any]:
    """Detection ROC curves for the scalar channel (exact inclusion
    probabilities) and the linear model (AMP approximations), at two
    operating points with matched squared error."""
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    if prior.kind != "bernoulli_gaussian":
        raise ConfigError("roc requires a Bernoulli-Gaussian prior")
    n = cfg["n"]
    thresholds = np.linspace(0.0, 1.0, cfg["n_thresholds"])
    results: dict[str, Any] = {}
    for label, m_obs in (("A", cfg["m_a"]), ("B", cfg["m_b"])):
        inst = generate_instance(prior, n, m_obs, cfg["seed"])
        out = amp_run(inst, prior, damping=cfg["damping"])
        err, _ = amp_diagnostics(out, inst.x_true)
        truth = inst.x_true != 0.0
        rows = detection_roc(out.gamma, truth, thresholds)
        write_csv(ctx.path(f"roc_slm_{label}.csv"), ["lambda", "fpr", "tpr"], rows)
        # scalar-channel operating point with the same squared error
        s_match = _match_snr(prior, err)
        rng = rng_stream(cfg["seed"], 10 + m_obs)
        x = prior.sample(n, rng)
        y = math.sqrt(s_match) * x + rng.standard_normal(n)
        gammas = bg_posterior_update(prior, s_match, y).gamma_n
        rows = detection_roc(gammas, x != 0.0, thresholds)
        write_csv(ctx.path(f"roc_gaussian_{label}.csv"), ["lambda", "fpr", "tpr"], rows)
        results[label] = {"m_obs": m_obs, "amp_sq_err": err, "matched_s": s_match}
    return results


def _match_snr(prior: ScalarPrior, target_mmse: float) -> float:
    var = prior_moments(prior)[1]
    target = min(max(target_mmse, 1e-12), var * (1.0 - 1e-9))
    return invert_mmse(prior, target)


def cmd_replica(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    sols = replica_sweep(prior, cfg["delta_grid"])
    rows = [(s.delta, s.I_delta, s.M_delta, s.s_star, s.unique) for s in sols]
    write_csv(
        ctx.path("replica_sweep.csv"), ["delta", "I", "M", "s_star", "unique"], rows
    )
    return {}


def cmd_fixed_point_curve(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    var = prior_moments(prior)[1]
    grid = np.geomspace(cfg["m_lo_frac"] * var, cfg["m_hi_frac"] * var, cfg["m_points"])
    curve = fixed_point_curve(prior, grid)
    rows = list(zip(curve.deltas, curve.M, curve.I_prime))
    write_csv(ctx.path("fixed_point_curve.csv"), ["delta", "M", "I_prime"], rows)
    return {}


def cmd_phase(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    pt = locate_phase_transition(prior, cfg["delta_lo"], cfg["delta_hi"], tol=cfg["tol"])
    if pt is None:
        write_csv(ctx.path("phase.csv"), ["delta_star", "delta_alg", "M_minus", "M_plus"], [])
        return {"transition": "none"}
    write_csv(
        ctx.path("phase.csv"),
        ["delta_star", "delta_alg", "M_minus", "M_plus"],
        [(pt.delta_star, pt.delta_alg, pt.M_minus, pt.M_plus)],
    )
    return {
        "delta_star": pt.delta_star,
        "delta_alg": pt.delta_alg,
        "M_minus": pt.M_minus,
        "M_plus": pt.M_plus,
    }


def cmd_amp_run(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    inst = generate_instance(prior, cfg["n"], cfg["m"], cfg["seed"])
    out = amp_run(inst, prior, max_iter=cfg["max_iter"], tol=cfg["tol"], damping=cfg["damping"])
    rows = [
        (t + 1, out.tau_trace[t], out.mse_trace[t], out.post_var_trace[t])
        for t in range(out.iterations)
    ]
    write_csv(
        ctx.path("amp_trace.csv"), ["iter", "tau2", "avg_sq_error", "avg_post_var"], rows
    )
    marg = [
        (i, out.mu[i], out.sigma2[i], out.gamma[i], inst.x_true[i]) for i in range(cfg["n"])
    ]
    write_csv(
        ctx.path("amp_marginals.csv"), ["n", "mu", "sigma2", "gamma", "x_true"], marg
    )
    return {"converged": bool(out.converged), "iterations": out.iterations}


def cmd_oracle_compare(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    if prior.kind != "bernoulli_gaussian":
        raise ConfigError("oracle-compare requires a Bernoulli-Gaussian prior")
    rows = []
    worst = 0.0
    for i in range(cfg["instances"]):
        inst = generate_instance(prior, cfg["n"], cfg["m"], cfg["seed"] + i)
        post = support_posterior(inst, prior)
        means, _, gammas = exact_marginals(post)
        out = amp_run(inst, prior)
        amp_means = out.marginals().mean()
        for j in range(cfg["n"]):
            rows.append((j, gammas[j], out.gamma[j], means[j], amp_means[j]))
        worst = max(worst, float(np.max(np.abs(out.gamma - gammas))))
    write_csv(
        ctx.path("oracle_compare.csv"),
        ["n", "gamma_exact", "gamma_amp", "mean_exact", "mean_amp"],
        rows,
    )
    return {"worst_gamma_gap": worst}


def cmd_infoseq(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    if prior.kind == "bernoulli_gaussian":
        prior = discretize_bg(prior, 5)
    if prior.kind != "finite_atoms":
        raise ConfigError("infoseq requires a finite-atom (or Bernoulli-Gaussian) prior")
    info, mmse = estimate_sequences(prior, cfg["n"], cfg["m"], cfg["trials"], cfg["seed"])
    msc = [math.nan] * (cfg["m"] + 1)
    if cfg["msc"]:
        for m in range(cfg["m"] + 1):
            msc[m] = mean_squared_covariance(
                prior, cfg["n"], m, min(cfg["trials"], 500), cfg["seed"]
            ).msc
    rows = []
    for m in range(cfg["m"] + 1):
        ip = info.I_prime[m] if m < cfg["m"] else math.nan
        ipp = info.I_dprime[m] if m < cfg["m"] - 1 else math.nan
        rows.append(
            (m, info.I[m], info.std_err[m], ip, ipp, mmse.M[m], mmse.std_err[m], msc[m])
        )
    write_csv(
        ctx.path("infoseq.csv"),
        ["m", "I", "I_se", "Iprime", "Idprime", "M", "M_se", "msc"],
        rows,
    )
    checks = {
        "monotone_increments": bool(check_theorem_monotone(info).passed),
        "increment_upper_bound": bool(check_theorem_ip_ub(info, mmse).passed),
        "cardinality_bound_T0.05": bool(check_card_bound(info, 0.05).passed),
    }
    return {"checks": checks}


def cmd_subset(ctx: RunContext) -> dict[str, Any]:
    cfg = ctx.cfg
    prior = prior_from_config(cfg)
    if prior.kind not in ("finite_atoms", "bernoulli_gaussian"):
        raise ConfigError("subset requires an enumerable prior")
    K = cfg["k"]
    rows = []
    v_samples = []
    for t in range(cfg["trials"]):
        inst = generate_instance(prior, cfg["n"], cfg["m"], cfg["seed"] + t)
        d = qr_split(inst.A, list(range(K)), seed=cfg["seed"] + t, y=inst.y)
        Z, V = interference_subtract(d, inst, prior)
        rows.append((t, *Z.tolist(), *V.tolist()))
        v_samples.extend(V.tolist())
    header = (
        ["trial"] + [f"z_{i+1}" for i in range(K)] + [f"v_{i+1}" for i in range(K)]
    )
    write_csv(ctx.path("subset_trials.csv"), header, rows)
    diag = gaussianity_diagnostic(np.asarray(v_samples))
    summary = {
        "skewness": diag.skewness,
        "excess_kurtosis": diag.excess_kurtosis,
        "ks_distance": diag.ks_distance,
        "n_samples": diag.n,
    }
    _atomic_write(
        os.path.join(ctx.out_dir, "subset_summary.json"),
        json.dumps(summary, indent=2) + "\n",
    )
    ctx.artifacts.append("subset_summary.json")
    return summary


_COMMANDS: dict[str, Callable[[RunContext], dict[str, Any]]] = {
    "scalar-curve": cmd_scalar_curve,
    "slm-sweep": cmd_slm_sweep,
    "roc": cmd_roc,
    "replica": cmd_replica,
    "fixed-point-curve": cmd_fixed_point_curve,
    "phase": cmd_phase,
    "amp-run": cmd_amp_run,
    "oracle-compare": cmd_oracle_compare,
    "infoseq": cmd_infoseq,
    "subset": cmd_subset,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def run_command(command: str, cfg: dict[str, Any]) -> dict[str, Any]:
    """Execute one experiment; returns the manifest results block."""
    out_dir = cfg["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    ctx = RunContext(
        command=command, cfg=cfg, out_dir=out_dir, artifacts=[], started=time.monotonic()
    )
    failed_marker = os.path.join(out_dir, "FAILED")
    try:
        results = _COMMANDS[command](ctx)
    except Exception as exc:
        with open(failed_marker, "w") as fh:
            fh.write(f"{command}: {exc!r}\n")
        raise
    if os.path.exists(failed_marker):
        os.remove(failed_marker)
    ctx.write_manifest(results)
    return results


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slmlab",
        description="Experiments for Bayes-optimal inference in the standard linear model",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="flat key=value configuration file")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--trials", type=int, help="Monte Carlo trials (overrides config)")
        p.add_argument("--out-dir", help="output directory (overrides config)")
        p.add_argument("--threads", type=int, help="worker threads (overrides config)")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    file_cfg: dict[str, tuple[str, int]] = {}
    path = args.config or "<defaults>"
    if args.config:
        file_cfg = load_config_file(args.config)
    overrides = {
        "seed": args.seed,
        "trials": args.trials,
        "out_dir": args.out_dir,
        "threads": args.threads,
    }
    try:
        cfg = resolve_config(args.command, file_cfg, overrides, path)
        results = run_command(args.command, cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"command": args.command, "results": _json_safe(results)}, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
