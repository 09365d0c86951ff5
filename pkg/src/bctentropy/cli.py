"""Command-line frontend: ``bct-entropy <command> ...``.

Option values are resolved as command-line flag, then ``--config`` JSON
file, then built-in default.  Every report echoes the effective settings.
Exit status: 0 success, 2 usage error, 3 data error, 4 resource error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .ctw import DEFAULT_DEPTH, PriorConfig, default_beta
from .entropy import (DEFAULT_MC_LENGTH, EntropyPolicy, format_summary, histogram_csv,
                      worker_count)
from .errors import BCTError, DataError, UsageError
from .baselines import LZ_VARIANT, PPM_VARIANT
from .pipeline import (DEFAULT_PLUGIN_K, ESTIMATORS, parse_estimators, posterior_entropy,
                       prior_entropy, run_estimators)
from .posterior import DEFAULT_SAMPLES, format_samples
from .sequence import (FORMATS, Sequence, format_sequence, parse_sequence, quantize_ternary,
                       read_sequence, read_values_csv)
from .simulator import (fixture_chain, fixture_names, format_chain, read_chain,
                        regenerate_fixtures, simulate)

FORMAT_VERSION = 1

DEFAULTS = {
    "alphabet": None,
    "depth": DEFAULT_DEPTH,
    "beta": None,
    "samples": DEFAULT_SAMPLES,
    "mc_length": DEFAULT_MC_LENGTH,
    "seed": 0,
    "level": 0.95,
    "bins": 50,
    "estimators": ",".join(ESTIMATORS),
    "plugin_k": ",".join(map(str, DEFAULT_PLUGIN_K)),
    "format": "auto",
    "context": None,
    "fixture": None,
    "spec": None,
    "length": None,
    "lengths": "1000,10000",
    "seeds": 10,
    "raw": False,
    "dump_samples": False,
}


def _fmt(x) -> str:
    if isinstance(x, float):
        return "nan" if math.isnan(x) else f"{x:.10g}"
    return str(x)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _common(p: argparse.ArgumentParser, model=True, sampling=True):
    p.add_argument("--config", help="JSON file of option values (flags take precedence)")
    p.add_argument("--alphabet", "-m", type=int, help="alphabet size m")
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out", "-o", help="output path or prefix (default: stdout where possible)")
    if model:
        p.add_argument("--depth", "-D", type=int, help=f"maximum context depth (default {DEFAULT_DEPTH})")
        p.add_argument("--beta", type=float, help="prior hyperparameter (default 1 - 2^(1-m))")
    if sampling:
        p.add_argument("--samples", "-N", type=int, help=f"posterior samples (default {DEFAULT_SAMPLES})")
        p.add_argument("--mc-length", type=int,
                       help=f"Monte Carlo path length for large models (default {DEFAULT_MC_LENGTH})")
        p.add_argument("--level", type=float, help="credible level (default 0.95)")
        p.add_argument("--bins", type=int, help="histogram bins (default 50)")


def _input_args(p):
    p.add_argument("input", nargs="?", help="sequence file")
    p.add_argument("--format", choices=FORMATS, help="sequence text format (default auto)")
    p.add_argument("--context", help="initial context symbols, oldest first")
    p.add_argument("--fixture", help="simulate input from a named fixture chain instead")
    p.add_argument("--spec", help="simulate input from a chain spec file instead")
    p.add_argument("--length", "-n", type=int, help="length to simulate with --fixture/--spec")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bct-entropy", description="Bayesian entropy-rate estimation")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="run entropy estimators on a sequence")
    _common(p)
    _input_args(p)
    p.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATORS)}")
    p.add_argument("--plugin-k", help="comma list of plug-in block lengths (default 5,6,7)")

    p = sub.add_parser("posterior", help="posterior summary and histogram of the entropy rate")
    _common(p)
    _input_args(p)
    p.add_argument("--raw", action="store_true", default=None, help="also write raw H samples")
    p.add_argument("--dump-samples", action="store_true", default=None,
                   help="also write full (tree, theta, H) sample records")

    p = sub.add_parser("prior", help="histogram of the entropy rate under the prior")
    _common(p)
    p.add_argument("--raw", action="store_true", default=None, help="also write raw H samples")

    p = sub.add_parser("simulate", help="generate a sequence from a chain")
    _common(p, sampling=False)
    p.add_argument("--fixture", help="named fixture chain")
    p.add_argument("--spec", help="chain spec file")
    p.add_argument("--length", "-n", type=int, help="number of symbols")

    p = sub.add_parser("convergence", help="estimator error against true entropy over a grid of n")
    _common(p)
    p.add_argument("--fixture", help="named fixture chain")
    p.add_argument("--spec", help="chain spec file")
    p.add_argument("--lengths", help="comma list of sequence lengths (default 1000,10000)")
    p.add_argument("--seeds", type=int, help="number of seeds per length (default 10)")
    p.add_argument("--estimators", help=f"comma list from {','.join(ESTIMATORS)}")
    p.add_argument("--plugin-k", help="comma list of plug-in block lengths (default 5,6,7)")

    p = sub.add_parser("quantize", help="ternary down/same/up symbols from a CSV price series")
    p.add_argument("input", help="CSV file, one value per line")
    p.add_argument("--out", "-o", help="output sequence file (default stdout)")

    p = sub.add_parser("fixtures", help="list fixture chains, or re-pin their entropies")
    p.add_argument("--regenerate", metavar="PATH",
                   help="recompute pinned entropies in the given fixture file")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file and flags into one settings dict."""
    cfg = dict(DEFAULTS)
    path = getattr(args, "config", None)
    if path:
        try:
            data = json.loads(Path(path).read_text())
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from None
        if not isinstance(data, dict):
            raise UsageError("config file must hold a JSON object")
        for k, v in data.items():
            key = k.replace("-", "_")
            if key not in DEFAULTS:
                raise UsageError(f"unknown config key {k!r}")
            cfg[key] = v
    for k, v in vars(args).items():
        if v is not None and k in DEFAULTS:
            cfg[k] = v
    return cfg


def _int_list(text, what) -> list[int]:
    try:
        out = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{what} must be a comma list of integers") from None
    if not out:
        raise UsageError(f"{what} is empty")
    return out


def _check_settings(cfg: dict):
    if cfg["samples"] < 1:
        raise UsageError("--samples must be at least 1")
    if cfg["mc_length"] < 1:
        raise UsageError("--mc-length must be at least 1")
    if not 0 < cfg["level"] < 1:
        raise UsageError("--level must lie in (0, 1)")
    if cfg["bins"] < 1:
        raise UsageError("--bins must be positive")
    if cfg["depth"] < 0:
        raise UsageError("--depth must be non-negative")


def _chain_source(cfg):
    if cfg["fixture"] and cfg["spec"]:
        raise UsageError("give either --fixture or --spec, not both")
    if cfg["fixture"]:
        fx = fixture_chain(cfg["fixture"])
        return fx.spec, fx.entropy, f"fixture:{fx.name}"
    if cfg["spec"]:
        from .entropy import entropy_rate_exact
        spec = read_chain(cfg["spec"])
        try:
            truth = entropy_rate_exact(spec)
        except BCTError:
            truth = math.nan
        return spec, truth, f"spec:{cfg['spec']}"
    return None, math.nan, None


def _sidecar(path) -> dict:
    meta = Path(str(path) + ".meta")
    if not meta.exists():
        return {}
    out = {}
    for line in meta.read_text().splitlines():
        if ":" in line and not line.startswith("#"):
            k, v = line.split(":", 1)
            out[k.strip()] = v.strip()
    return out


def load_input(cfg: dict) -> tuple[Sequence, dict]:
    """Sequence plus provenance fields for the report."""
    info = {}
    spec, truth, source = _chain_source(cfg)
    if spec is not None:
        if cfg["input"]:
            raise UsageError("give an input file or a chain to simulate, not both")
        if not cfg["length"]:
            raise UsageError("--length is required when simulating input")
        if cfg["alphabet"] is not None and cfg["alphabet"] != spec.m:
            raise UsageError(f"--alphabet {cfg['alphabet']} disagrees with the chain (m={spec.m})")
        cfg["alphabet"] = spec.m
        x = simulate(spec, cfg["length"], seed=cfg["seed"], context_length=cfg["depth"])
        info["input"] = source
        info["true-entropy"] = _fmt(truth)
        info["context"] = "simulated"
        return x, info
    if not cfg["input"]:
        raise UsageError("an input file, --fixture or --spec is required")
    if cfg["alphabet"] is None:
        raise UsageError("--alphabet is required for file input")
    x = read_sequence(cfg["input"], cfg["alphabet"], cfg["format"])
    info["input"] = cfg["input"]
    if cfg["context"] is not None:
        ctx = parse_sequence(cfg["context"], cfg["alphabet"], cfg["format"]).symbols
        info["context"] = "given"
        return x.with_context(ctx), info
    side = _sidecar(cfg["input"]).get("initial-context")
    if side:
        ctx = parse_sequence(side, cfg["alphabet"]).symbols
        if ctx.size >= cfg["depth"]:
            info["context"] = "sidecar"
            return x.with_context(ctx), info
    info["context"] = f"first {cfg['depth']} symbols of the input"
    return x, info


def _prior(cfg) -> PriorConfig:
    m = cfg["alphabet"]
    if m is None:
        raise UsageError("--alphabet is required")
    return PriorConfig(m, cfg["depth"], cfg["beta"])


def _policy(cfg) -> EntropyPolicy:
    return EntropyPolicy(mc_length=cfg["mc_length"], seed=cfg["seed"])


def _settings_lines(cfg: dict, keys) -> list[str]:
    out = []
    for k in keys:
        v = cfg[k]
        if k == "beta" and v is None and cfg["alphabet"]:
            v = default_beta(cfg["alphabet"])
        out.append(f"{k.replace('_', '-')}: {_fmt(v) if v is not None else '-'}")
    return out


def _write(path, text: str, stdout=None):
    if path is None:
        (stdout or sys.stdout).write(text)
        return
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _require_prefix(cfg, what):
    if not cfg.get("out"):
        raise UsageError(f"{what} needs --out PREFIX for its output files")
    return cfg["out"]


MODEL_KEYS = ("alphabet", "depth", "beta", "samples", "mc_length", "seed", "level", "bins")


def cmd_estimate(cfg: dict) -> str:
    _check_settings(cfg)
    x, info = load_input(cfg)
    names = parse_estimators(cfg["estimators"])
    ks = _int_list(cfg["plugin_k"], "--plugin-k")
    prior = _prior(cfg)
    rows, run = run_estimators(x, prior, names, ks, cfg["samples"], cfg["seed"], _policy(cfg),
                               cfg["level"], cfg["bins"])
    lines = [f"format-version: {FORMAT_VERSION}", "command: estimate"]
    lines += [f"{k}: {v}" for k, v in info.items()]
    lines.append(f"n: {len(x)}")
    lines += _settings_lines(cfg, MODEL_KEYS)
    lines.append(f"estimators: {','.join(names)}")
    lines.append(f"plugin-k: {','.join(map(str, ks))}")
    lines.append(f"workers: {worker_count()}")
    if "lz" in names:
        lines.append(f"lz-variant: {LZ_VARIANT}")
    if "ppm" in names:
        lines.append(f"ppm-variant: {PPM_VARIANT}")
    if run is not None:
        lines.append(f"bct-data-length: {run.n}")
        lines.append("bct-methods: " + ",".join(f"{k}={v}" for k, v in run.method_counts.items()))
        lines.append(f"bct-failed: {run.samples.failed}")
    lines.append("units: nats")
    lines.append("estimates:")
    lines.append("  estimator\tvalue\tstd\tcredible-lo\tcredible-hi")
    for r in rows:
        lines.append(f"  {r.name}\t{_fmt(r.value)}\t{_fmt(r.std)}\t{_fmt(r.lo)}\t{_fmt(r.hi)}")
    return "\n".join(lines) + "\n"


def _run_header(cfg, command, info) -> dict:
    header = {"command": command}
    header.update(info)
    for line in _settings_lines(cfg, MODEL_KEYS):
        k, v = line.split(": ", 1)
        header[k] = v
    header["workers"] = worker_count()
    return header


def _emit_run(cfg, run, header):
    prefix = _require_prefix(cfg, header["command"])
    header["methods"] = ",".join(f"{k}={v}" for k, v in run.method_counts.items())
    header["failed"] = run.samples.failed
    header["units"] = "nats"
    _write(prefix + ".summary.txt", format_summary(run.summary, header))
    _write(prefix + ".hist.csv", histogram_csv(run.summary))
    if cfg.get("raw"):
        _write(prefix + ".entropies.txt",
               "".join(f"{h!r}\n" for h in run.samples.entropies().tolist()))
    if cfg.get("dump_samples"):
        _write(prefix + ".samples.txt", format_samples(run.samples))


def cmd_posterior(cfg: dict):
    _check_settings(cfg)
    _require_prefix(cfg, "posterior")
    x, info = load_input(cfg)
    run = posterior_entropy(x, _prior(cfg), cfg["samples"], cfg["seed"], _policy(cfg),
                            cfg["level"], cfg["bins"])
    info["n"] = len(x)
    info["bct-data-length"] = run.n
    _emit_run(cfg, run, _run_header(cfg, "posterior", info))


def cmd_prior(cfg: dict):
    _check_settings(cfg)
    _require_prefix(cfg, "prior")
    run = prior_entropy(_prior(cfg), cfg["samples"], cfg["seed"], _policy(cfg),
                        cfg["level"], cfg["bins"])
    _emit_run(cfg, run, _run_header(cfg, "prior", {}))


def cmd_simulate(cfg: dict):
    spec, truth, source = _chain_source(cfg)
    if spec is None:
        raise UsageError("simulate needs --fixture or --spec")
    if not cfg["length"] or cfg["length"] < 1:
        raise UsageError("--length must be a positive integer")
    if cfg["depth"] < 0:
        raise UsageError("--depth must be non-negative")
    out = _require_prefix(cfg, "simulate")
    x = simulate(spec, cfg["length"], seed=cfg["seed"], context_length=cfg["depth"])
    _write(out, format_sequence(x) + "\n")
    ctx = Sequence(x.initial_context, x.m) if x.initial_context.size else None
    meta = [f"format-version: {FORMAT_VERSION}", "command: simulate", f"source: {source}",
            f"alphabet: {spec.m}", f"length: {len(x)}", f"seed: {cfg['seed']}",
            f"true-entropy: {_fmt(truth)}",
            f"initial-context: {format_sequence(ctx) if ctx is not None else ''}",
            "chain:"]
    meta += ["  " + line for line in format_chain(spec).splitlines()]
    _write(out + ".meta", "\n".join(meta) + "\n")


def cmd_convergence(cfg: dict) -> str:
    _check_settings(cfg)
    spec, truth, source = _chain_source(cfg)
    if spec is None:
        raise UsageError("convergence needs --fixture or --spec")
    if math.isnan(truth):
        raise DataError("the chain's true entropy could not be computed exactly")
    lengths = _int_list(cfg["lengths"], "--lengths")
    names = parse_estimators(cfg["estimators"])
    ks = _int_list(cfg["plugin_k"], "--plugin-k")
    if cfg["seeds"] < 1:
        raise UsageError("--seeds must be at least 1")
    cfg["alphabet"] = spec.m
    prior = _prior(cfg)
    policy = _policy(cfg)
    lines = [f"# format-version: {FORMAT_VERSION}", f"# source: {source}",
             f"# true-entropy: {_fmt(truth)}"]
    lines += ["# " + s for s in _settings_lines(cfg, MODEL_KEYS)]
    lines.append("n,seed,estimator,value,abs_error")
    for n in lengths:
        cells = {}
        for r in range(cfg["seeds"]):
            seed = cfg["seed"] + r
            x = simulate(spec, n, seed=seed, context_length=cfg["depth"])
            rows, _ = run_estimators(x, prior, names, ks, cfg["samples"], seed, policy,
                                     cfg["level"], cfg["bins"])
            for row in rows:
                cells.setdefault(row.name, []).append(row.value)
                lines.append(f"{n},{seed},{row.name},{_fmt(row.value)},{_fmt(abs(row.value - truth))}")
        for name, vals in cells.items():
            v = np.asarray(vals)
            lines.append(f"{n},median,{name},{_fmt(float(np.median(v)))},"
                         f"{_fmt(float(np.median(np.abs(v - truth))))}")
    return "\n".join(lines) + "\n"


def cmd_quantize(args) -> str:
    x = quantize_ternary(read_values_csv(args.input))
    return format_sequence(x) + "\n"


def cmd_fixtures(args) -> str:
    if args.regenerate:
        regenerate_fixtures(args.regenerate)
    lines = ["name,alphabet,depth,entropy,description"]
    for name in fixture_names():
        fx = fixture_chain(name)
        lines.append(f"{name},{fx.spec.m},{fx.spec.depth},{fx.entropy!r},{fx.description}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s: %(message)s")
        if args.command == "quantize":
            _write(args.out, cmd_quantize(args))
            return 0
        if args.command == "fixtures":
            sys.stdout.write(cmd_fixtures(args))
            return 0
        cfg = resolve(args)
        cfg["out"] = args.out
        cfg["input"] = getattr(args, "input", None)
        if args.command == "estimate":
            _write(cfg["out"], cmd_estimate(cfg))
        elif args.command == "posterior":
            cmd_posterior(cfg)
        elif args.command == "prior":
            cmd_prior(cfg)
        elif args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "convergence":
            _write(cfg["out"], cmd_convergence(cfg))
        return 0
    except BCTError as exc:
        print(f"bct-entropy: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
