"""Declarative experiment runner and command-line interface.

Experiments are described by plain-text spec files (INI-style sections, see
``SPEC_FORMAT``) so that every run is diffable and reproducible. The bundled
specs reproduce the validation studies at desk scale; ``run_experiment``
executes a spec and writes CSV outputs plus a JSON manifest whose per-output
checksums are identical across reruns of the same spec and seed.

Exit codes: 0 success, 2 spec/parameter validation error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import combat as combat_mod
from .binom_approx import ApproxModel, critical_nu
from .graphgen import (
    Graph,
    dmin_for_fixed_variance,
    gen_chung_lu,
    gen_clustered,
    gen_er,
    largest_component,
    load_graph,
    powerlaw_degree_sequence,
    save_graph,
)
from .markov import save_ensemble_csv, simulate_ensemble, split_seed
from .meanfield import integrate, save_trajectory_csv
from .metrics import relative_error_report, save_re_csv
from .thresholds import (
    StrategicSampler,
    estimate_sigma_markov,
    h,
    save_threshold_report_csv,
    strategic_b0,
    strategic_thresholds,
    threshold_report,
)

__all__ = [
    "SpecError",
    "ExperimentError",
    "ExperimentSpec",
    "RunManifest",
    "parse_spec",
    "spec_to_text",
    "load_spec",
    "validate_spec",
    "bundled_spec_names",
    "bundled_spec_text",
    "run_experiment",
    "main",
]

OUTPUT_ROOT_ENV = "CYBERDYN_OUT"

SPEC_FORMAT = """Spec file format (INI sections, key = value):

[experiment]   name, kind (dynamics|sigma_markov|h_curve|re_sweep),
               dt, horizon, runs, seed
[graph:NAME]   generator = er|powerlaw|powerlaw_fixed_variance|clustered|file
               plus generator parameters (n, p, gamma, d_min, d_max, r,
               dvar, sizes, p_in, p_out, path)
[combat]       family = type1|type2|type3|type4 plus its parameters
[init]         rule(s) = uniform and/or strategic; levels = comma list;
               target = fraction|phi; phi_band (optional)
[sweep]        exactly one of: gamma | p | sigma = comma list
[levels]       sigma_markov grids: span + step (auto-centered) or explicit
               levels = comma list
[curve]        z = ratio, for the h_curve kind
"""

_KINDS = ("dynamics", "sigma_markov", "h_curve", "re_sweep")
_GENERATORS = ("er", "powerlaw", "powerlaw_fixed_variance", "clustered", "file")


class SpecError(ValueError):
    """Spec validation failure; the message starts with the field path."""


class ExperimentError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


@dataclass
class ExperimentSpec:
    name: str
    kind: str
    horizon: float
    dt: float = 0.01
    runs: int = 50
    seed: int = 0
    graphs: list = field(default_factory=list)  # [(name, {param: value})]
    combat: dict = field(default_factory=dict)
    init: dict = field(default_factory=dict)
    sweep: Optional[tuple] = None  # (key, [values])
    levels_cfg: dict = field(default_factory=dict)
    curve: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Parsing and serialization


def _parse_number(section: str, key: str, raw: str, kind=float):
    try:
        return kind(raw)
    except ValueError:
        raise SpecError(f"{section}.{key}: expected {kind.__name__}, got {raw!r}") from None


def _parse_list(section: str, key: str, raw: str, kind=float) -> list:
    out = []
    for part in raw.split(","):
        part = part.strip()
        if part:
            out.append(_parse_number(section, key, part, kind))
    if not out:
        raise SpecError(f"{section}.{key}: empty list")
    return out


def parse_spec(text: str) -> ExperimentSpec:
    """Parse spec text; raises SpecError with a field path on bad input."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise SpecError(f"spec syntax: {exc}") from None
    if "experiment" not in cp:
        raise SpecError("experiment: section missing")
    exp = cp["experiment"]
    for req in ("name", "kind", "horizon"):
        if req not in exp:
            raise SpecError(f"experiment.{req}: missing")
    spec = ExperimentSpec(
        name=exp["name"].strip(),
        kind=exp["kind"].strip(),
        horizon=_parse_number("experiment", "horizon", exp["horizon"]),
        dt=_parse_number("experiment", "dt", exp.get("dt", "0.01")),
        runs=_parse_number("experiment", "runs", exp.get("runs", "50"), int),
        seed=_parse_number("experiment", "seed", exp.get("seed", "0"), int),
    )
    for section in cp.sections():
        if section.startswith("graph:"):
            gname = section.split(":", 1)[1]
            params = {}
            for key, raw in cp[section].items():
                if key == "generator":
                    params["generator"] = raw.strip()
                elif key == "sizes":
                    params["sizes"] = _parse_list(section, key, raw, int)
                elif key == "path":
                    params["path"] = raw.strip()
                elif key in ("n",):
                    params[key] = _parse_number(section, key, raw, int)
                elif key == "allow_self_links":
                    params[key] = raw.strip().lower() in ("1", "true", "yes")
                else:
                    params[key] = _parse_number(section, key, raw)
            spec.graphs.append((gname, params))
    if "combat" in cp:
        for key, raw in cp["combat"].items():
            spec.combat[key] = raw.strip() if key == "family" else _parse_number(
                "combat", key, raw
            )
    if "init" in cp:
        sec = cp["init"]
        rules_raw = sec.get("rules", sec.get("rule", ""))
        spec.init["rules"] = [r.strip() for r in rules_raw.split(",") if r.strip()]
        if "levels" in sec:
            spec.init["levels"] = _parse_list("init", "levels", sec["levels"])
        spec.init["target"] = sec.get("target", "fraction").strip()
        if "phi_band" in sec:
            spec.init["phi_band"] = _parse_number("init", "phi_band", sec["phi_band"])
    if "sweep" in cp:
        items = list(cp["sweep"].items())
        if len(items) != 1:
            raise SpecError("sweep: exactly one sweep key is allowed")
        key, raw = items[0]
        if key not in ("gamma", "p", "sigma"):
            raise SpecError(f"sweep.{key}: unknown sweep key")
        spec.sweep = (key, _parse_list("sweep", key, raw))
    if "levels" in cp:
        sec = cp["levels"]
        if "levels" in sec:
            spec.levels_cfg["explicit"] = _parse_list("levels", "levels", sec["levels"])
        else:
            spec.levels_cfg["span"] = _parse_number("levels", "span", sec.get("span", "0.12"))
            spec.levels_cfg["step"] = _parse_number("levels", "step", sec.get("step", "0.01"))
        if "occupancy_tol" in sec:
            spec.levels_cfg["occupancy_tol"] = _parse_number(
                "levels", "occupancy_tol", sec["occupancy_tol"]
            )
    if "curve" in cp:
        spec.curve["z"] = _parse_number("curve", "z", cp["curve"].get("z", "20"))
    return spec


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, list):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def spec_to_text(spec: ExperimentSpec) -> str:
    """Canonical serialization; parse(spec_to_text(s)) reproduces s."""
    buf = io.StringIO()
    buf.write("[experiment]\n")
    buf.write(f"name = {spec.name}\n")
    buf.write(f"kind = {spec.kind}\n")
    buf.write(f"horizon = {_fmt(spec.horizon)}\n")
    buf.write(f"dt = {_fmt(spec.dt)}\n")
    buf.write(f"runs = {spec.runs}\n")
    buf.write(f"seed = {spec.seed}\n")
    for gname, params in spec.graphs:
        buf.write(f"\n[graph:{gname}]\n")
        buf.write(f"generator = {params['generator']}\n")
        for key in sorted(k for k in params if k != "generator"):
            buf.write(f"{key} = {_fmt(params[key])}\n")
    if spec.combat:
        buf.write("\n[combat]\n")
        buf.write(f"family = {spec.combat['family']}\n")
        for key in sorted(k for k in spec.combat if k != "family"):
            buf.write(f"{key} = {_fmt(spec.combat[key])}\n")
    if spec.init:
        buf.write("\n[init]\n")
        buf.write(f"rules = {', '.join(spec.init['rules'])}\n")
        if "levels" in spec.init:
            buf.write(f"levels = {_fmt(spec.init['levels'])}\n")
        buf.write(f"target = {spec.init.get('target', 'fraction')}\n")
        if "phi_band" in spec.init:
            buf.write(f"phi_band = {_fmt(spec.init['phi_band'])}\n")
    if spec.sweep is not None:
        buf.write("\n[sweep]\n")
        buf.write(f"{spec.sweep[0]} = {_fmt(spec.sweep[1])}\n")
    if spec.levels_cfg:
        buf.write("\n[levels]\n")
        if "explicit" in spec.levels_cfg:
            buf.write(f"levels = {_fmt(spec.levels_cfg['explicit'])}\n")
        else:
            buf.write(f"span = {_fmt(spec.levels_cfg['span'])}\n")
            buf.write(f"step = {_fmt(spec.levels_cfg['step'])}\n")
        if "occupancy_tol" in spec.levels_cfg:
            buf.write(f"occupancy_tol = {_fmt(spec.levels_cfg['occupancy_tol'])}\n")
    if spec.curve:
        buf.write("\n[curve]\n")
        buf.write(f"z = {_fmt(spec.curve['z'])}\n")
    return buf.getvalue()


def load_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        return parse_spec(fh.read())


# ---------------------------------------------------------------------------
# Validation


def _validate_graph(gname: str, params: dict, sweep_key=None) -> None:
    path = f"graph:{gname}"
    gen = params.get("generator")
    if gen not in _GENERATORS:
        raise SpecError(f"{path}.generator: unknown generator {gen!r}")
    need = {
        "er": ("n", "p"),
        "powerlaw": ("n", "gamma", "d_min", "d_max"),
        "powerlaw_fixed_variance": ("n", "r", "dvar"),
        "clustered": ("sizes", "p_in"),
        "file": ("path",),
    }[gen]
    for key in need:
        if key not in params and key != sweep_key:
            raise SpecError(f"{path}.{key}: missing")
    if gen == "er":
        if params["n"] < 2:
            raise SpecError(f"{path}.n: must be >= 2")
        if "p" in params and not (0 < params["p"] <= 1):
            raise SpecError(f"{path}.p: must be in (0, 1]")
    elif gen == "powerlaw":
        if "gamma" in params and params["gamma"] <= 0:
            raise SpecError(f"{path}.gamma: must be positive")
        if not (0 < params["d_min"] <= params["d_max"]):
            raise SpecError(f"{path}.d_min: need 0 < d_min <= d_max")
    elif gen == "powerlaw_fixed_variance":
        if params["r"] <= 1:
            raise SpecError(f"{path}.r: must exceed 1")
        if params["dvar"] <= 0:
            raise SpecError(f"{path}.dvar: must be positive")
        if "gamma" not in params and sweep_key != "gamma":
            raise SpecError(f"{path}.gamma: missing (not supplied by a sweep)")
    elif gen == "clustered":
        if any(s < 1 for s in params["sizes"]):
            raise SpecError(f"{path}.sizes: entries must be positive")
        if not (0 <= params.get("p_out", 0.0) < params["p_in"] <= 1):
            raise SpecError(f"{path}.p_in: need p_in > p_out >= 0 and p_in <= 1")


def validate_spec(spec: ExperimentSpec) -> None:
    """Full semantic validation; raises SpecError naming the field."""
    if spec.kind not in _KINDS:
        raise SpecError(f"experiment.kind: unknown kind {spec.kind!r}")
    if not spec.name:
        raise SpecError("experiment.name: empty")
    if spec.dt <= 0:
        raise SpecError("experiment.dt: must be positive")
    if spec.horizon <= 0:
        raise SpecError("experiment.horizon: must be positive")
    if spec.runs < 1:
        raise SpecError("experiment.runs: must be >= 1")
    sweep_key = spec.sweep[0] if spec.sweep else None
    for gname, params in spec.graphs:
        _validate_graph(gname, params, sweep_key)
    if spec.kind != "h_curve":
        if not spec.graphs:
            raise SpecError("graph: at least one graph section required")
        if not spec.combat:
            raise SpecError("combat: section required")
        family = spec.combat.get("family", "")
        params = {k: v for k, v in spec.combat.items() if k != "family"}
        try:
            combat_mod.from_params(family, **params)
        except (ValueError, TypeError) as exc:
            raise SpecError(f"combat: {exc}") from None
    if spec.kind in ("dynamics", "re_sweep"):
        rules = spec.init.get("rules", [])
        if len(rules) != 1 or rules[0] not in ("uniform", "strategic"):
            raise SpecError("init.rules: exactly one of uniform|strategic")
        levels = spec.init.get("levels")
        if not levels:
            raise SpecError("init.levels: required")
        if any(not (0 <= x <= 1) for x in levels):
            raise SpecError("init.levels: entries must lie in [0, 1]")
        if spec.init.get("target") not in ("fraction", "phi"):
            raise SpecError("init.target: must be fraction or phi")
    if spec.kind == "sigma_markov":
        rules = spec.init.get("rules", [])
        if not rules or any(r not in ("uniform", "strategic") for r in rules):
            raise SpecError("init.rules: uniform and/or strategic required")
        if not spec.levels_cfg:
            raise SpecError("levels: section required for sigma_markov")
        if "explicit" in spec.levels_cfg:
            if any(not (0 <= x <= 1) for x in spec.levels_cfg["explicit"]):
                raise SpecError("levels.levels: entries must lie in [0, 1]")
        elif spec.levels_cfg["step"] <= 0 or spec.levels_cfg["span"] <= 0:
            raise SpecError("levels.span: span and step must be positive")
    if spec.kind == "h_curve":
        if spec.sweep is None or spec.sweep[0] != "gamma":
            raise SpecError("sweep.gamma: required for h_curve")
        if spec.curve.get("z", 20.0) <= 1:
            raise SpecError("curve.z: must exceed 1")
        if "sigma" not in spec.combat:
            raise SpecError("combat.sigma: required for h_curve")
    if spec.kind == "re_sweep" and (spec.sweep is None or spec.sweep[0] != "gamma"):
        raise SpecError("sweep.gamma: required for re_sweep")
    if spec.sweep is not None and spec.kind == "dynamics":
        raise SpecError("sweep: not supported for dynamics")


# ---------------------------------------------------------------------------
# Bundled specs


def bundled_spec_names() -> list:
    root = resources.files("cyberdyn").joinpath("specs")
    return sorted(p.name[: -len(".spec")] for p in root.iterdir() if p.name.endswith(".spec"))


def bundled_spec_text(name: str) -> str:
    path = resources.files("cyberdyn").joinpath("specs").joinpath(f"{name}.spec")
    try:
        return path.read_text()
    except FileNotFoundError:
        raise SpecError(f"unknown bundled spec {name!r}") from None


def _resolve_spec(ref: str) -> ExperimentSpec:
    if os.path.exists(ref):
        return load_spec(ref)
    return parse_spec(bundled_spec_text(ref))


# ---------------------------------------------------------------------------
# Execution


@dataclass
class RunManifest:
    spec_name: str
    spec_sha256: str
    tool_version: str
    seed: int
    wall_clock_sec: float
    graph_hashes: dict
    outputs: dict  # filename -> sha256

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n"


def _sha256_file(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _build_graph(params: dict, seed: int, gamma_override=None, p_override=None) -> Graph:
    """Instantiate a graph recipe.

    Sparse power-law recipes are restricted to their giant component: tiny
    disconnected components would freeze in their initial color and block
    the absorption-based experiments.
    """
    gen = params["generator"]
    if gen == "er":
        return gen_er(params["n"], p_override if p_override is not None else params["p"], seed)
    if gen == "powerlaw":
        seq = powerlaw_degree_sequence(
            params["n"],
            gamma_override if gamma_override is not None else params["gamma"],
            params["d_min"],
            params["d_max"],
        )
        g = gen_chung_lu(seq, allow_self_links=params.get("allow_self_links", False), seed=seed)
        return largest_component(g)
    if gen == "powerlaw_fixed_variance":
        gamma = gamma_override if gamma_override is not None else params["gamma"]
        d_min = dmin_for_fixed_variance(params["dvar"], params["r"], gamma)
        seq = powerlaw_degree_sequence(params["n"], gamma, d_min, params["r"] * d_min)
        return largest_component(gen_chung_lu(seq, seed=seed))
    if gen == "clustered":
        return gen_clustered(params["sizes"], params["p_in"], params.get("p_out", 0.0), seed)
    if gen == "file":
        return load_graph(params["path"])
    raise SpecError(f"graph.generator: unknown generator {gen!r}")


def _combat_from_spec(spec: ExperimentSpec):
    params = {k: v for k, v in spec.combat.items() if k != "family"}
    return combat_mod.from_params(spec.combat["family"], **params)


def _level_tag(value: float) -> str:
    return f"{value:g}".replace(".", "p").replace("-", "m")


def _auto_levels(cfg: dict, center: float) -> np.ndarray:
    if "explicit" in cfg:
        return np.asarray(cfg["explicit"], dtype=np.float64)
    span, step = cfg["span"], cfg["step"]
    lo = max(step, center - span)
    hi = min(1.0 - step, center + span)
    n_steps = int(round((hi - lo) / step))
    return np.round(lo + step * np.arange(n_steps + 1), 10)


def _strategic_center(params: dict, sigma: float, gamma=None) -> float:
    gen = params.get("generator")
    if gen == "powerlaw":
        z = params["d_max"] / params["d_min"]
        return sigma * h(z, gamma if gamma is not None else params["gamma"])
    if gen == "powerlaw_fixed_variance":
        return sigma * h(params["r"], gamma if gamma is not None else params["gamma"])
    return sigma


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(f"stage {name!r} failed: {exc}") from exc


def run_experiment(spec: ExperimentSpec, out_dir, workers: int = 1) -> RunManifest:
    """Execute a validated spec, writing CSV outputs and manifest.json."""
    validate_spec(spec)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    outputs: dict = {}
    graph_hashes: dict = {}

    if spec.kind == "dynamics":
        _run_dynamics(spec, out, workers, outputs, graph_hashes)
    elif spec.kind == "sigma_markov":
        _run_sigma_markov(spec, out, workers, outputs, graph_hashes)
    elif spec.kind == "h_curve":
        _run_h_curve(spec, out, outputs)
    elif spec.kind == "re_sweep":
        _run_re_sweep(spec, out, workers, outputs, graph_hashes)

    manifest = RunManifest(
        spec_name=spec.name,
        spec_sha256=hashlib.sha256(spec_to_text(spec).encode()).hexdigest(),
        tool_version=__version__,
        seed=spec.seed,
        wall_clock_sec=round(time.monotonic() - t0, 3),
        graph_hashes=graph_hashes,
        outputs={k: _sha256_file(out / k) for k in sorted(outputs)},
    )
    (out / "manifest.json").write_text(manifest.to_json())
    return manifest


def _init_b0(spec: ExperimentSpec, g: Graph, level: float):
    """(B0 vector for the mean-field run, ensemble init sampler or None)."""
    rule = spec.init["rules"][0]
    if rule == "uniform":
        return np.full(g.n, level), None
    if spec.init.get("target") == "phi":
        b0 = strategic_b0(g, target_phi=level).B0
        sampler = StrategicSampler(
            g, target_phi=level, phi_band=spec.init.get("phi_band")
        )
        return b0, sampler
    return strategic_b0(g, target_fraction=level).B0, None


def _run_dynamics(spec, out, workers, outputs, graph_hashes):
    f = _combat_from_spec(spec)
    summary_rows = []
    for gi, (gname, params) in enumerate(spec.graphs):
        g = _stage(f"graph:{gname}", _build_graph, params, split_seed(spec.seed, 1000 + gi))
        graph_hashes[gname] = g.structural_hash()
        for li, level in enumerate(spec.init["levels"]):
            B0, sampler = _init_b0(spec, g, level)
            traj = _stage(
                f"meanfield {gname} level={level:g}",
                integrate,
                g, f, B0, spec.horizon, dt=spec.dt, sample_every=10,
            )
            ens = _stage(
                f"ensemble {gname} level={level:g}",
                simulate_ensemble,
                g, f, B0, spec.horizon,
                runs=spec.runs, dt=spec.dt,
                master_seed=split_seed(spec.seed, 2000 + 100 * gi + li),
                sample_every=10, node_freq=True, workers=workers,
                init_sampler=sampler,
            )
            tag = f"{gname}_{_level_tag(level)}"
            save_trajectory_csv(traj, out / f"{tag}_meanfield.csv")
            save_ensemble_csv(ens, out / f"{tag}_ensemble.csv")
            outputs[f"{tag}_meanfield.csv"] = True
            outputs[f"{tag}_ensemble.csv"] = True
            rep = relative_error_report(ens, traj)
            summary_rows.append(
                (gname, level, float(traj.mean_blue[-1]), float(ens.mean_xi[-1]),
                 ens.n_absorbed_blue, ens.n_absorbed_red, rep.mean, rep.n_excluded)
            )
    with open(out / "summary.csv", "w", newline="\n") as fh:
        fh.write("graph,level,final_mean_blue,final_mean_xi,"
                 "n_absorbed_blue,n_absorbed_red,mean_RE,excluded_nodes\n")
        for row in summary_rows:
            fh.write(
                f"{row[0]},{float(row[1])!r},{row[2]!r},{row[3]!r},"
                f"{row[4]},{row[5]},{row[6]!r},{row[7]}\n"
            )
    outputs["summary.csv"] = True


def _run_sigma_markov(spec, out, workers, outputs, graph_hashes):
    f = _combat_from_spec(spec)
    sigma = spec.combat.get("sigma", spec.combat.get("tau", 0.5))
    sweep_key, sweep_vals = spec.sweep if spec.sweep else (None, [None])
    summary_rows = []
    for gi, (gname, params) in enumerate(spec.graphs):
        built = None
        if sweep_key != "p" and not (
            sweep_key == "gamma" and params["generator"].startswith("powerlaw")
        ):
            built = _stage(f"graph:{gname}", _build_graph, params, split_seed(spec.seed, 1000 + gi))
            graph_hashes[gname] = built.structural_hash()
        for si, value in enumerate(sweep_vals):
            fam = f
            gamma = None
            if sweep_key == "sigma":
                fam = combat_mod.from_params(spec.combat["family"], sigma=value)
                g = built
            elif sweep_key == "p":
                g = _stage(
                    f"graph:{gname} p={value:g}",
                    _build_graph, params, split_seed(spec.seed, 1000 + gi * 50 + si),
                    None, value,
                )
                graph_hashes[f"{gname}_p{_level_tag(value)}"] = g.structural_hash()
            elif sweep_key == "gamma":
                gamma = value
                g = _stage(
                    f"graph:{gname} gamma={value:g}",
                    _build_graph, params, split_seed(spec.seed, 1000 + gi * 50 + si),
                    value,
                )
                graph_hashes[f"{gname}_gamma{_level_tag(value)}"] = g.structural_hash()
            else:
                g = built
            eff_sigma = value if sweep_key == "sigma" else sigma
            for rule in spec.init["rules"]:
                center = (
                    _strategic_center(params, eff_sigma, gamma)
                    if rule == "strategic"
                    else eff_sigma
                )
                levels = _auto_levels(spec.levels_cfg, center)
                est = _stage(
                    f"sigma_markov {gname} {rule} {sweep_key}={value}",
                    estimate_sigma_markov,
                    g, fam, levels,
                    init_rule=rule, runs=spec.runs, horizon=spec.horizon,
                    dt=spec.dt,
                    master_seed=split_seed(spec.seed, 3000 + 100 * gi + 10 * si),
                    workers=workers,
                    occupancy_tol=spec.levels_cfg.get("occupancy_tol", 0.0),
                )
                tag = f"{gname}_{rule}" + (
                    f"_{sweep_key}{_level_tag(value)}" if sweep_key else ""
                )
                save_threshold_report_csv(est, out / f"{tag}_report.csv")
                outputs[f"{tag}_report.csv"] = True
                summary_rows.append((gname, rule, sweep_key or "", value, est))
    with open(out / "summary.csv", "w", newline="\n") as fh:
        fh.write("graph,rule,sweep_key,sweep_value,a1,b1,sigma_markov,status\n")
        for gname, rule, skey, value, est in summary_rows:
            val = "" if value is None else repr(float(value))
            a1 = "" if est.a1 is None else repr(est.a1)
            b1 = "" if est.b1 is None else repr(est.b1)
            sm = "" if est.sigma_markov is None else repr(est.sigma_markov)
            status = "inconclusive" if est.inconclusive else "ok"
            fh.write(f"{gname},{rule},{skey},{val},{a1},{b1},{sm},{status}\n")
    outputs["summary.csv"] = True


def _run_h_curve(spec, out, outputs):
    sigma = spec.combat["sigma"]
    z = spec.curve.get("z", 20.0)
    with open(out / "h_curve.csv", "w", newline="\n") as fh:
        fh.write("gamma,h,alpha_threshold,beta_threshold,gap,ratio\n")
        for gamma in spec.sweep[1]:
            st = strategic_thresholds(z, gamma, sigma)
            fh.write(
                f"{float(gamma)!r},{h(z, gamma)!r},{st.alpha!r},{st.beta!r},"
                f"{st.gap!r},{st.ratio!r}\n"
            )
    outputs["h_curve.csv"] = True


def _run_re_sweep(spec, out, workers, outputs, graph_hashes):
    f = _combat_from_spec(spec)
    level = spec.init["levels"][0]
    gname, params = spec.graphs[0]
    rows = []
    for si, gamma in enumerate(spec.sweep[1]):
        g = _stage(
            f"graph:{gname} gamma={gamma:g}",
            _build_graph, params, split_seed(spec.seed, 1000 + si), gamma,
        )
        graph_hashes[f"{gname}_gamma{_level_tag(gamma)}"] = g.structural_hash()
        B0 = np.full(g.n, level)
        traj = _stage(
            f"meanfield gamma={gamma:g}",
            integrate, g, f, B0, spec.horizon, dt=spec.dt, sample_every=10,
        )
        ens = _stage(
            f"ensemble gamma={gamma:g}",
            simulate_ensemble, g, f, B0, spec.horizon,
            runs=spec.runs, dt=spec.dt,
            master_seed=split_seed(spec.seed, 4000 + si),
            sample_every=10, node_freq=True, workers=workers,
        )
        rep = relative_error_report(ens, traj)
        rows.append(
            {
                "gamma": gamma,
                "avg_degree": float(g.degrees.mean()),
                "mean_RE": rep.mean,
                "excluded_nodes": rep.n_excluded,
            }
        )
    save_re_csv(rows, out / "relative_error.csv")
    outputs["relative_error.csv"] = True


# ---------------------------------------------------------------------------
# CLI


def _output_dir(args, spec_name: str) -> Path:
    if args.out:
        return Path(args.out)
    root = os.environ.get(OUTPUT_ROOT_ENV, "cyberdyn_out")
    return Path(root) / spec_name


def _cmd_run(args) -> int:
    spec = _resolve_spec(args.spec)
    if args.seed is not None:
        spec.seed = args.seed
    manifest = run_experiment(spec, _output_dir(args, spec.name), workers=args.workers)
    print(f"{spec.name}: wrote {len(manifest.outputs)} outputs "
          f"in {manifest.wall_clock_sec}s")
    return 0


def _cmd_list(args) -> int:
    for name in bundled_spec_names():
        spec = parse_spec(bundled_spec_text(name))
        print(f"{name:14s} kind={spec.kind:12s} runs={spec.runs}")
    return 0


def _cmd_describe(args) -> int:
    spec = _resolve_spec(args.spec)
    validate_spec(spec)
    sys.stdout.write(spec_to_text(spec))
    return 0


def _cmd_validate(args) -> int:
    spec = _resolve_spec(args.spec)
    validate_spec(spec)
    print(f"{spec.name}: valid")
    return 0


def _cmd_graph_gen(args) -> int:
    if args.family == "er":
        g = gen_er(args.n, args.p, args.seed)
    elif args.family == "powerlaw":
        seq = powerlaw_degree_sequence(args.n, args.gamma, args.d_min, args.d_max)
        g = gen_chung_lu(seq, seed=args.seed)
    elif args.family == "fixed-variance":
        d_min = dmin_for_fixed_variance(args.dvar, args.r, args.gamma)
        seq = powerlaw_degree_sequence(args.n, args.gamma, d_min, args.r * d_min)
        g = gen_chung_lu(seq, seed=args.seed)
    elif args.family == "clustered":
        sizes = [int(s) for s in args.sizes.split(",")]
        g = gen_clustered(sizes, args.p_in, args.p_out, args.seed)
    else:
        raise SpecError(f"unknown graph family {args.family!r}")
    save_graph(g, args.out)
    print(f"wrote {args.out}: n={g.n} edges={g.num_edges} hash={g.structural_hash()[:12]}")
    return 0


def _cmd_thresholds(args) -> int:
    g = load_graph(args.graph)
    report = threshold_report(g.degrees, args.sigma, z=args.z, gamma=args.gamma)
    print(f"alpha_threshold = {report.alpha_threshold!r}")
    print(f"beta_threshold  = {report.beta_threshold!r}")
    if report.h_value is not None:
        print(f"h(z, gamma)     = {report.h_value!r}")
    return 0


def _cmd_sigma_markov(args) -> int:
    g = load_graph(args.graph)
    fam = combat_mod.from_params(args.family, sigma=args.sigma)
    lo, hi, step = (float(x) for x in args.levels.split(":"))
    levels = np.round(np.arange(lo, hi + 1e-12, step), 10)
    est = estimate_sigma_markov(
        g, fam, levels,
        init_rule=args.rule, runs=args.runs, horizon=args.horizon,
        dt=args.dt, master_seed=args.seed, workers=args.workers,
        occupancy_tol=args.occupancy_tol,
    )
    if args.out:
        save_threshold_report_csv(est, args.out)
    if est.inconclusive:
        print("inconclusive:")
        for level, verdict in zip(est.levels, est.verdicts):
            print(f"  {level:g}: {verdict}")
    else:
        print(f"a1={est.a1!r} b1={est.b1!r} sigma_markov={est.sigma_markov!r}")
        model = ApproxModel.from_graph(g, args.sigma)
        root = critical_nu(model)
        if root is not None:
            print(f"binomial-approximation critical value: {root!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cyberdyn",
        description="Attack-defense dynamics simulator and analysis toolkit.",
        epilog=SPEC_FORMAT,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a bundled or file spec")
    p_run.add_argument("spec", help="bundled spec name or path to a spec file")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--workers", type=int, default=1)
    p_run.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p_run.set_defaults(fn=_cmd_run)

    sub.add_parser("list", help="list bundled specs").set_defaults(fn=_cmd_list)

    p_desc = sub.add_parser("describe", help="print a spec in canonical form")
    p_desc.add_argument("spec")
    p_desc.set_defaults(fn=_cmd_describe)

    p_val = sub.add_parser("validate", help="validate a spec without running")
    p_val.add_argument("spec")
    p_val.set_defaults(fn=_cmd_validate)

    p_graph = sub.add_parser("graph", help="graph utilities")
    graph_sub = p_graph.add_subparsers(dest="graph_command", required=True)
    p_gen = graph_sub.add_parser("gen", help="generate and save a graph")
    p_gen.add_argument("family", choices=["er", "powerlaw", "fixed-variance", "clustered"])
    p_gen.add_argument("--n", type=int, default=2000)
    p_gen.add_argument("--p", type=float, default=0.02)
    p_gen.add_argument("--gamma", type=float, default=2.5)
    p_gen.add_argument("--d-min", dest="d_min", type=float, default=2.0)
    p_gen.add_argument("--d-max", dest="d_max", type=float, default=120.0)
    p_gen.add_argument("--r", type=float, default=20.0)
    p_gen.add_argument("--dvar", type=float, default=400.0)
    p_gen.add_argument("--sizes", default="1000,1000")
    p_gen.add_argument("--p-in", dest="p_in", type=float, default=0.04)
    p_gen.add_argument("--p-out", dest="p_out", type=float, default=0.001)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.set_defaults(fn=_cmd_graph_gen)

    p_thr = sub.add_parser("thresholds", help="analytic occupation thresholds")
    p_thr.add_argument("--graph", required=True, help="edge-list file")
    p_thr.add_argument("--sigma", type=float, required=True)
    p_thr.add_argument("--z", type=float, default=None)
    p_thr.add_argument("--gamma", type=float, default=None)
    p_thr.set_defaults(fn=_cmd_thresholds)

    p_sm = sub.add_parser("sigma-markov", help="estimate the empirical threshold")
    p_sm.add_argument("--graph", required=True, help="edge-list file")
    p_sm.add_argument("--family", default="type1")
    p_sm.add_argument("--sigma", type=float, required=True)
    p_sm.add_argument("--levels", default="0.05:0.95:0.01", help="lo:hi:step")
    p_sm.add_argument("--rule", choices=["uniform", "strategic"], default="uniform")
    p_sm.add_argument("--runs", type=int, default=50)
    p_sm.add_argument("--horizon", type=float, default=30.0)
    p_sm.add_argument("--dt", type=float, default=0.01)
    p_sm.add_argument("--seed", type=int, default=0)
    p_sm.add_argument("--workers", type=int, default=1)
    p_sm.add_argument("--occupancy-tol", dest="occupancy_tol", type=float, default=0.0,
                      help="minority mass below which a frozen run counts as converged")
    p_sm.add_argument("--out", default=None)
    p_sm.set_defaults(fn=_cmd_sigma_markov)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (SpecError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
