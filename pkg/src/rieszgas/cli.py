"""Command-line interface: ``rieszgas <subcommand> [--key value ...]``.

Parameters may also come from a flat ``key = value`` config file
(``--config FILE``, ``#`` starts a comment); command-line flags win.
Output is JSON lines with sorted keys (default) or CSV with round-trip
precision.  Exit codes: 0 success, 1 usage error, 2 domain or pole error,
3 numerical non-convergence.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .core import Domain, PointConfiguration, RieszExponent, riesz_energy
from .errors import ConvergenceError, PoleError, RieszError

OUTPUT_DIR_ENV = "RIESZGAS_OUTPUT_DIR"
REQUIRED = object()


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# parameter schemas


def _lst(kind):
    def parse(text):
        if isinstance(text, (list, tuple)):
            return [kind(v) for v in text]
        return [kind(v) for v in str(text).replace(",", " ").split()]

    parse.__name__ = f"list[{kind.__name__}]"
    return parse


FLOATS, INTS = _lst(float), _lst(int)


@dataclass(frozen=True)
class Key:
    kind: object
    default: object = REQUIRED
    help: str = ""
    sweep: bool = False  # list values expand into independent runs


_LATTICE = Key(str, REQUIRED, "integers, square, triangular, cubic, bcc or fcc")
_DOMAIN = Key(str, "interval:0,1", "interval:a,b | box:lo..,hi.. | ball:c..,r")
_SAMPLER = {
    "model": Key(str, "circular", "circular, periodic, free, jellium or ideal"),
    "n": Key(int, 8, "particle number"),
    "beta": Key(float, 2.0, "inverse temperature"),
    "s": Key(float, 0.0, "Riesz exponent (non-circular models)"),
    "domain": _DOMAIN,
    "lattice": Key(str, "integers", "cell lattice for the periodic model"),
    "ell": Key(float, 1.0, "cell scale for the periodic model"),
    "rho_b": Key(float, 1.0, "background density (jellium)"),
    "sweeps": Key(int, 20000, "total sweeps"),
    "burn_in": Key(int, 1000, "burn-in sweeps (move scale tuned here)"),
    "thinning": Key(int, 1, "keep every k-th sweep"),
    "move_scale": Key(float, 0.5, "initial displacement half-width"),
    "mu": Key(float, None, "chemical potential; enables grand-canonical moves"),
    "seed": Key(int, 0, "random seed"),
}

SCHEMAS = {
    "zeta": {
        "lattice": _LATTICE,
        "s": Key(FLOATS, REQUIRED, "exponent(s); a list sweeps", sweep=True),
        "density": Key(float, 1.0, "lattice density"),
        "alpha": Key(float, 1.0, "Ewald splitting parameter in [0.25, 4]"),
        "derivative": Key(int, 0, "1: return d/ds zeta at s = 0 instead"),
    },
    "madelung": {
        "lattice": _LATTICE,
        "s": Key(FLOATS, REQUIRED, "exponent(s)", sweep=True),
        "density": Key(float, 1.0, "lattice density"),
    },
    "potential": {
        "lattice": _LATTICE,
        "s": Key(float, REQUIRED, "exponent"),
        "x": Key(FLOATS, REQUIRED, "position (d components)"),
        "density": Key(float, 1.0, "lattice density"),
        "alpha": Key(float, 1.0, "Ewald splitting parameter"),
    },
    "energy": {
        "model": Key(str, "free", "free, jellium, periodic or coulomb1d"),
        "s": Key(float, REQUIRED, "exponent"),
        "dim": Key(int, 1, "dimension"),
        "points": Key(FLOATS, REQUIRED, "flattened coordinates"),
        "domain": _DOMAIN,
        "lattice": Key(str, "integers", "periodic model: cell lattice"),
        "ell": Key(float, 1.0, "periodic model: cell scale"),
        "rho_b": Key(float, 1.0, "jellium background density"),
    },
    "minimize": {
        "problem": Key(str, REQUIRED, "shortRange, jellium or periodic"),
        "n": Key(int, REQUIRED, "particle number"),
        "s": Key(float, REQUIRED, "exponent"),
        "dim": Key(int, 1, "dimension"),
        "domain": _DOMAIN,
        "lattice": Key(str, "integers", "periodic problem: cell lattice"),
        "ell": Key(float, 1.0, "periodic problem: cell scale"),
        "rho_b": Key(float, 1.0, "jellium background density"),
        "restarts": Key(int, 16, "multistart count"),
        "tolerance": Key(float, 1e-9, "max gradient component at convergence"),
        "max_iterations": Key(int, 5000, "iterations per restart"),
        "seed": Key(int, 0, "random seed"),
    },
    "gc-minimize": {
        "problem": Key(str, REQUIRED, "shortRange or jellium"),
        "mu": Key(float, REQUIRED, "chemical potential"),
        "s": Key(float, REQUIRED, "exponent"),
        "n_min": Key(int, 0, "smallest particle number"),
        "n_max": Key(int, REQUIRED, "largest particle number"),
        "dim": Key(int, 1, "dimension"),
        "domain": _DOMAIN,
        "rho_b": Key(float, 1.0, "jellium background density"),
        "restarts": Key(int, 4, "multistart count per n"),
        "seed": Key(int, 0, "random seed"),
    },
    "sample": dict(_SAMPLER, output=Key(str, "summary", "summary or frames")),
    "correlations": dict(_SAMPLER, r_max=Key(float, 4.0, "largest distance"), bins=Key(int, 32, "bin count")),
    "variance": dict(_SAMPLER, windows=Key(FLOATS, REQUIRED, "window side lengths")),
    "sumrule": {
        "kernel": Key(str, "sine2", "sine2 (exact beta=2 sine kernel) or poisson"),
        "rho": Key(float, 1.0, "density"),
    },
    "kunz": {
        "beta": Key(FLOATS, REQUIRED, "inverse temperature(s)", sweep=True),
        "nodes": Key(int, 256, "transfer-operator grid nodes"),
        "x": Key(FLOATS, [], "positions in [0, 1) for the one-point density"),
        "tau": Key(float, 0.0, "density phase"),
    },
    "selberg": {
        "n": Key(INTS, REQUIRED, "particle number(s)", sweep=True),
        "beta": Key(FLOATS, REQUIRED, "inverse temperature(s)", sweep=True),
        "direct": Key(int, 0, "1: also integrate directly (n <= 3)"),
    },
    "loggas-f": {
        "beta": Key(float, REQUIRED, "inverse temperature"),
        "rho": Key(FLOATS, [1.0], "density(ies)", sweep=True),
        "dim": Key(int, 1, "1 (any beta) or 2 (beta = 2 only)"),
    },
    "meanfield": {
        "s": Key(float, REQUIRED, "exponent"),
        "external": Key(str, "harmonic", "harmonic (a x^2), zero or background"),
        "a": Key(float, 1.0, "harmonic strength"),
        "mass": Key(float, 1.0, "total mass"),
        "n": Key(int, 400, "grid cells"),
        "window": Key(FLOATS, [-2.0, 2.0], "grid window a,b"),
        "support": Key(FLOATS, [-1.0, 1.0], "container for external=background"),
        "output": Key(str, "summary", "summary or density"),
    },
    "capacity": {
        "s": Key(float, REQUIRED, "exponent in (0, 1)"),
        "window": Key(FLOATS, [-1.0, 1.0], "interval a,b"),
        "n": Key(int, 400, "grid cells"),
    },
    "refconst": {"name": Key(str, "", "constant name (empty: all)")},
    "shiftcheck": {
        "lattice": Key(str, "cubic", "integers, square or cubic"),
        "s": Key(float, REQUIRED, "exponent"),
        "x": Key(FLOATS, REQUIRED, "position"),
        "R": Key(float, 20.0, "truncation radius"),
    },
}

GLOBAL_FLAGS = {"config", "out", "format", "pretty", "jobs", "help"}


@dataclass
class RunConfig:
    subcommand: str
    parameters: dict
    output_path: str | None = None
    seed: int | None = None
    fmt: str = "jsonl"
    pretty: bool = False
    jobs: int = 1
    extras: dict = field(default_factory=dict)


def help_text():
    lines = [
        "usage: rieszgas <subcommand> [--key value ...] [--config FILE] [--out PATH]",
        "                [--format jsonl|csv] [--pretty] [--jobs K]",
        "",
        "exit codes: 0 ok, 1 usage, 2 domain/pole error, 3 non-convergence",
        f"default output directory: ${OUTPUT_DIR_ENV} (used for relative --out paths)",
        "",
        "subcommands:",
    ]
    for name, schema in SCHEMAS.items():
        lines.append(f"  {name}")
        for key, entry in schema.items():
            kind = getattr(entry.kind, "__name__", str(entry.kind))
            default = "required" if entry.default is REQUIRED else f"default {entry.default!r}"
            lines.append(f"      --{key:<14} {kind:<12} {default}; {entry.help}")
    return "\n".join(lines)


def _read_config_text(text):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected key = value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def parse_config(argv, config_text: str | None = None) -> RunConfig:
    """Parse argv (subcommand first) plus optional config text; flags override config values."""
    argv = list(argv)
    if not argv or argv[0] in ("-h", "--help", "help"):
        raise UsageError("help")
    sub = argv[0]
    if sub not in SCHEMAS:
        raise UsageError(f"unknown subcommand: {sub} (see --help)")
    flags, i = {}, 1
    while i < len(argv):
        tok = argv[i]
        if not tok.startswith("--"):
            raise UsageError(f"unexpected argument: {tok}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        elif key == "pretty" or key == "help":
            val = "1"
            i += 1
        else:
            if i + 1 >= len(argv):
                raise UsageError(f"missing value for --{key}")
            val = argv[i + 1]
            i += 2
        flags[key.replace("-", "_") if key not in SCHEMAS[sub] else key] = val
    if "help" in flags:
        raise UsageError("help")
    merged = {}
    if config_text is None and "config" in flags:
        try:
            with open(flags["config"], encoding="utf-8") as fh:
                config_text = fh.read()
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
    if config_text:
        merged.update(_read_config_text(config_text))
    merged.update({k: v for k, v in flags.items() if k != "config"})
    glob = {k: merged.pop(k) for k in list(merged) if k in GLOBAL_FLAGS}
    schema = SCHEMAS[sub]
    params = {}
    for key in merged:
        if key not in schema:
            raise UsageError(f"unknown key for {sub}: {key}")
    for key, entry in schema.items():
        if key in merged:
            try:
                params[key] = entry.kind(merged[key])
            except (TypeError, ValueError):
                kind = getattr(entry.kind, "__name__", str(entry.kind))
                raise UsageError(f"type mismatch for {key}: expected {kind}, got {merged[key]!r}") from None
        elif entry.default is REQUIRED:
            raise UsageError(f"missing required key: {key}")
        else:
            params[key] = entry.default
    fmt = glob.get("format", "jsonl")
    if fmt not in ("jsonl", "csv"):
        raise UsageError(f"unknown format: {fmt} (jsonl or csv)")
    try:
        jobs = int(glob.get("jobs", 1))
    except ValueError:
        raise UsageError("--jobs needs an integer") from None
    return RunConfig(sub, params, glob.get("out"), params.get("seed"), fmt, "pretty" in glob, max(jobs, 1))


# ---------------------------------------------------------------------------
# helpers


def _domain(text, dim):
    kind, _, nums = text.partition(":")
    vals = [float(v) for v in nums.split(",")] if nums else []
    if kind == "interval" and len(vals) == 2:
        return Domain.interval(*vals)
    if kind == "box" and len(vals) == 2 * dim:
        return Domain.box(vals[:dim], vals[dim:])
    if kind == "ball" and len(vals) == dim + 1:
        return Domain.ball(vals[:dim], vals[dim])
    raise RieszError(f"cannot parse domain {text!r} for dimension {dim}")


def _lattice(name, density=1.0):
    from .lattice import lattice_catalog

    return lattice_catalog(name, density)


def _record(kind, inputs, provenance, seed=None, **values):
    rec = {"kind": kind, "inputs": inputs, "provenance": provenance, "version": __version__}
    if seed is not None:
        rec["seed"] = seed
    rec.update(values)
    return rec


def _expand(cfg: RunConfig):
    """Split sweep keys into independent parameter sets (input order)."""
    schema = SCHEMAS[cfg.subcommand]
    runs = [dict(cfg.parameters)]
    for key, entry in schema.items():
        if entry.sweep:
            runs = [dict(r, **{key: v}) for r in runs for v in r[key]]
    return runs


# ---------------------------------------------------------------------------
# subcommand bodies; each returns a list of records


def _zeta(p):
    from .lattice import EwaldSettings, epstein_zeta, epstein_zeta_derivative0

    lat = _lattice(p["lattice"], p["density"])
    ew = EwaldSettings(alpha=p["alpha"])
    if p["derivative"]:
        return [_record("zeta_derivative0", p, "theta-function split, derivative at s = 0", value=epstein_zeta_derivative0(lat, ew))]
    return [_record("zeta", p, "Epstein zeta via theta-function split", value=epstein_zeta(lat, p["s"], ew))]


def _madelung(p):
    from .lattice import madelung

    return [_record("madelung", p, "Madelung constant", value=madelung(_lattice(p["lattice"], p["density"]), p["s"]))]


def _potential(p):
    from .lattice import EwaldSettings, periodic_potential

    lat = _lattice(p["lattice"], p["density"])
    val = periodic_potential(lat, p["s"], np.array(p["x"]).reshape(1, lat.dim), EwaldSettings(alpha=p["alpha"]))
    return [_record("periodic_potential", p, "periodic Riesz potential", value=val)]


def _energy(p):
    from .jellium import JelliumSystem, jellium_energy, jellium_energy_1d_coulomb
    from .lattice import periodic_energy

    d = p["dim"]
    pts = np.array(p["points"], dtype=float).reshape(-1, d)
    exp = RieszExponent(p["s"], d)
    model = p["model"]
    if model == "free":
        val = riesz_energy(PointConfiguration(pts), exp)
    elif model == "periodic":
        val = periodic_energy(_lattice(p["lattice"]), p["ell"], p["s"], pts)
    elif model == "jellium":
        dom = _domain(p["domain"], d)
        val = jellium_energy(JelliumSystem(dom, p["rho_b"], exp), PointConfiguration(pts, dom))
    elif model == "coulomb1d":
        n = len(pts)
        dom = Domain.interval(-n / 2, n / 2)
        cfg = PointConfiguration(pts, dom)
        return [
            _record(
                "energy",
                p,
                "1D Coulomb Jellium: direct integral and sorted closed form",
                value=jellium_energy(JelliumSystem(dom, 1.0, RieszExponent(-1.0, 1)), cfg),
                closed_form=jellium_energy_1d_coulomb(cfg),
            )
        ]
    else:
        raise RieszError(f"unknown energy model {model}")
    return [_record("energy", p, f"{model} energy", value=val)]


def _problem(p, exp):
    from .jellium import JelliumSystem
    from .optimize import JelliumProblem, Periodic, ShortRange

    kind = p["problem"]
    if kind == "shortRange":
        return ShortRange(_domain(p["domain"], exp.d))
    if kind == "jellium":
        return JelliumProblem(JelliumSystem(_domain(p["domain"], exp.d), p["rho_b"], exp))
    if kind == "periodic":
        return Periodic(_lattice(p["lattice"]), p["ell"])
    raise RieszError(f"unknown problem {kind}")


def _minimize(p):
    from .optimize import OptimizerSettings, minimize_energy

    exp = RieszExponent(p["s"], p["dim"])
    st = OptimizerSettings(max_iterations=p["max_iterations"], gradient_tolerance=p["tolerance"], restarts=p["restarts"], seed=p["seed"])
    res = minimize_energy(_problem(p, exp), p["n"], exp, st)
    return [
        _record(
            "minimum",
            p,
            "multistart projected Barzilai-Borwein descent",
            p["seed"],
            energy=res.energy,
            coordinates=res.configuration.coordinates.tolist(),
            gradient_norm=res.gradient_norm,
            converged=res.converged,
            restart_index=res.restart_index,
        )
    ]


def _gc_minimize(p):
    from .optimize import OptimizerSettings, minimize_grand_canonical

    exp = RieszExponent(p["s"], p["dim"])
    st = OptimizerSettings(restarts=p["restarts"], seed=p["seed"])
    n, res = minimize_grand_canonical(_problem(p, exp), p["mu"], exp, range(p["n_min"], p["n_max"] + 1), st)
    return [_record("gc_minimum", p, "scan of E(n) - mu n", p["seed"], n=n, energy=res.energy, coordinates=res.configuration.coordinates.tolist())]


def _sampler_stream(p):
    from .jellium import JelliumSystem
    from .montecarlo import CircularLogGas, IdealModel, PeriodicModel, SamplerConfig, ShortRangeModel
    from .montecarlo import JelliumModel, sample_canonical, sample_grand_canonical

    cfg = SamplerConfig(p["beta"], p["sweeps"], p["burn_in"], p["thinning"], p["move_scale"], p["mu"], p["seed"])
    name = p["model"]
    if name == "circular":
        model = CircularLogGas(p["n"])
    elif name == "periodic":
        lat = _lattice(p["lattice"])
        model = PeriodicModel(lat, p["ell"], RieszExponent(p["s"], lat.dim))
    else:
        kind, _, nums = p["domain"].partition(":")
        k = len(nums.split(","))
        dom = _domain(p["domain"], {"interval": 1, "box": k // 2}.get(kind, k - 1))
        exp = RieszExponent(p["s"], dom.dim)
        if name == "ideal":
            model = IdealModel(dom)
        elif name == "free":
            model = ShortRangeModel(dom, exp)
        elif name == "jellium":
            model = JelliumModel(JelliumSystem(dom, p["rho_b"], exp))
        else:
            raise RieszError(f"unknown sampler model {name}")
    stream = sample_grand_canonical(model, cfg) if p["mu"] is not None else sample_canonical(model, p["n"], cfg)
    return model, stream


def _split(stream):
    frames, warns = [], []
    for f in stream:
        (frames if "coordinates" in f else warns).append(f)
    return frames, [w["warning"] for w in warns]


def _block_se(values, blocks=16):
    v = np.asarray(values, dtype=float)
    means = np.array([b.mean() for b in np.array_split(v, blocks)])
    return float(means.std(ddof=1) / math.sqrt(blocks))


def _sample(p):
    model, stream = _sampler_stream(p)
    if p["output"] == "frames":
        out = []
        for f in stream:
            if "coordinates" in f:
                out.append(_record("frame", p, "Metropolis chain", p["seed"], sweep=f["sweep"], n=f["n"], coordinates=f["coordinates"].tolist(), energy=f["energy"]))
            else:
                out.append(_record("warning", p, "Metropolis chain", p["seed"], sweep=f["sweep"], message=f["warning"]))
        return out
    frames, warns = _split(stream)
    e = [f["energy"] for f in frames]
    n = [f["n"] for f in frames]
    rec = _record(
        "sample_summary",
        p,
        "Metropolis chain; errors from 16 blocks",
        p["seed"],
        mean_energy=float(np.mean(e)),
        energy_se=_block_se(e),
        mean_n=float(np.mean(n)),
        n_se=_block_se(n),
        frames=len(frames),
        warnings=warns,
    )
    if p["model"] == "circular" and p["mu"] is None:
        from .exact import circular_mean_energy

        rec["exact_mean_energy"] = float(circular_mean_energy(p["n"], p["beta"]))
    return [rec]


def _correlations(p):
    from .estimators import estimate_correlations

    model, stream = _sampler_stream(p)
    frames, _ = _split(stream)
    est = estimate_correlations(frames, np.linspace(0, p["r_max"], p["bins"] + 1), model.domain)
    return [
        _record("rho2T", p, "binned pair correlation", p["seed"], bin_center=float(c), value=float(v), stderr=float(e))
        for c, v, e in zip(est.bin_centers, est.rho2T, est.standard_errors)
    ]


def _variance(p):
    from .estimators import number_variance

    model, stream = _sampler_stream(p)
    frames, _ = _split(stream)
    rows, trend = number_variance(frames, p["windows"], model.domain)
    return [_record("number_variance", p, "window counts over frames and translates", p["seed"], decreasing_trend=trend, **r) for r in rows]


def _sumrule(p):
    from .estimators import sum_rule_residual
    from .exact import sine_kernel_rho2T

    if p["kernel"] == "sine2":
        rho = p["rho"]
        val = sum_rule_residual(lambda r: rho**2 * sine_kernel_rho2T(rho * r, 2), rho)
    elif p["kernel"] == "poisson":
        val = sum_rule_residual(lambda r: 0.0 * r, p["rho"])
    else:
        raise RieszError(f"unknown kernel {p['kernel']}")
    return [_record("sum_rule_residual", p, "rho + int rho2T", value=val)]


def _kunz(p):
    from .exact import TransferOperatorGrid, kunz_density, kunz_lambda1

    beta = p["beta"]
    sol = kunz_lambda1(beta, TransferOperatorGrid.for_beta(beta, p["nodes"]))
    rec = _record("kunz", p, "1D Coulomb transfer operator, power iteration", lambda1=sol.lambda1, free_energy=1 / 12 - math.log(sol.lambda1) / beta)
    if p["x"]:
        rec["density"] = [float(v) for v in kunz_density(beta, np.array(p["x"]), p["tau"], sol)]
    return [rec]


def _selberg(p):
    from .exact import circular_mean_energy, selberg_log_partition

    rec = _record(
        "selberg",
        p,
        "circular ensemble partition function via log-gamma",
        log_partition=selberg_log_partition(p["n"], p["beta"]),
        mean_energy=float(circular_mean_energy(p["n"], p["beta"])),
    )
    if p["direct"]:
        from .exact import selberg_direct

        rec["direct_log_partition"] = math.log(selberg_direct(p["n"], p["beta"]))
    return [rec]


def _loggas(p):
    from .exact import f2d_beta2, log_gas_free_energy

    if p["dim"] == 1:
        return [_record("loggas_free_energy", p, "1D log gas, closed form", value=log_gas_free_energy(p["beta"], p["rho"]))]
    if p["dim"] == 2 and p["beta"] == 2:
        return [_record("loggas_free_energy", p, "2D log gas at beta = 2, closed form", value=f2d_beta2(p["rho"]))]
    raise RieszError("closed forms exist for d = 1, or d = 2 at beta = 2")


def _meanfield(p):
    from .jellium import _interval_potential
    from .meanfield import el_residual, harmonic_trap_density, harmonic_trap_radius, solve_equilibrium_measure

    exp = RieszExponent(p["s"], 1)
    ext = p["external"]
    if ext == "harmonic":
        W = lambda x: p["a"] * x**2  # noqa: E731
    elif ext == "zero":
        W = lambda x: 0.0 * x  # noqa: E731
    elif ext == "background":
        lo, hi = p["support"]
        W = lambda x: -_interval_potential(p["s"], lo, hi, x)  # noqa: E731
    else:
        raise RieszError(f"unknown external potential {ext}")
    meas = solve_equilibrium_measure(W, exp, p["mass"], tuple(p["window"]), p["n"], confined=ext == "zero")
    if p["output"] == "density":
        return [_record("density", p, "equilibrium measure", x=float(x), density=float(v)) for x, v in zip(meas.nodes[:, 0], meas.density)]
    rec = _record("meanfield", p, "projected gradient plus active-set polish", objective=meas.objective, mu=meas.mu, el_residual=el_residual(meas, W, exp), converged=meas.converged)
    if ext == "harmonic" and -2 < p["s"] < 1:
        R = harmonic_trap_radius(p["s"], p["a"]) * p["mass"] ** (1 / (p["s"] + 2))
        rec["closed_form_radius"] = R
        rec["l1_to_closed_form"] = meas.l1_distance(lambda x: p["mass"] * harmonic_trap_density(p["s"], R, x))
    return [rec]


def _capacity(p):
    from .meanfield import capacity

    return [_record("capacity", p, "1 / min iint V_s dnu dnu", value=capacity(tuple(p["window"]), RieszExponent(p["s"], 1), p["n"]))]


def _refconst(p):
    from .exact import reference_constants

    reg = reference_constants()
    names = [p["name"]] if p["name"] else sorted(reg)
    out = []
    for name in names:
        val, prov = reference_constants(name)
        out.append(_record("constant", {"name": name}, prov, value=val))
    return out


def _shiftcheck(p):
    from .jellium import sharp_background_shift

    lat = _lattice(p["lattice"])
    trunc, limit = sharp_background_shift(lat, p["s"], np.array(p["x"]), p["R"])
    return [_record("shift_check", p, "truncated sharp-background sum vs periodic potential plus shift", truncated=trunc, limit=limit, difference=trunc - limit)]


COMMANDS = {
    "zeta": _zeta,
    "madelung": _madelung,
    "potential": _potential,
    "energy": _energy,
    "minimize": _minimize,
    "gc-minimize": _gc_minimize,
    "sample": _sample,
    "correlations": _correlations,
    "variance": _variance,
    "sumrule": _sumrule,
    "kunz": _kunz,
    "selberg": _selberg,
    "loggas-f": _loggas,
    "meanfield": _meanfield,
    "capacity": _capacity,
    "refconst": _refconst,
    "shiftcheck": _shiftcheck,
}


def run_command(cfg: RunConfig):
    runs = _expand(cfg)
    body = COMMANDS[cfg.subcommand]
    if cfg.jobs > 1 and len(runs) > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            chunks = list(pool.map(body, runs))  # map keeps input order
    else:
        chunks = [body(r) for r in runs]
    return [rec for chunk in chunks for rec in chunk]


# ---------------------------------------------------------------------------
# output


def _jsonable(v):
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _flatten(rec, prefix=""):
    out = {}
    for k, v in rec.items():
        name = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, name + "."))
        else:
            out[name] = v
    return out


def _csv_cell(v):
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, list):
        return " ".join(_csv_cell(x) for x in v)
    return "" if v is None else str(v)


def emit_records(records, fmt="jsonl") -> bytes:
    """Serialise records: JSON lines with sorted keys, or CSV with 17 significant digits."""
    records = [_jsonable(r) for r in records]
    if not records:
        return b""
    if fmt == "jsonl":
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records).encode()
    if fmt == "csv":
        flat = [_flatten(r) for r in records]
        header = sorted({k for r in flat for k in r})
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in flat:
            w.writerow([_csv_cell(r.get(k)) for k in header])
        return buf.getvalue().encode()
    raise UsageError(f"unknown format: {fmt}")


def _pretty(records):
    lines = []
    for r in records:
        vals = {k: v for k, v in r.items() if k not in ("inputs", "provenance", "version")}
        lines.append("  ".join(f"{k}={v:.10g}" if isinstance(v, float) else f"{k}={v}" for k, v in sorted(vals.items())))
    return ("\n".join(lines) + "\n").encode() if lines else b""


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cfg = parse_config(argv)
    except UsageError as exc:
        if str(exc) == "help":
            print(help_text())
            return 0
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        records = run_command(cfg)
    except PoleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except RieszError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    data = _pretty(records) if cfg.pretty else emit_records(records, cfg.fmt)
    if cfg.output_path:
        path = cfg.output_path
        if not os.path.isabs(path) and os.environ.get(OUTPUT_DIR_ENV):
            path = os.path.join(os.environ[OUTPUT_DIR_ENV], path)
        with open(path, "wb") as fh:
            fh.write(data)
    else:
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    return 0


if __name__ == "__main__":
    sys.exit(main())
