"""Command-line front end.

Subcommands:

    simulate      run the multi-agent loop, write result.json / trajectories.csv
    calibrate     fit the 13 coefficients to an observed series (CSV in, JSON out)
    sweep         single-parameter sensitivity sweep, CSV out
    metrics       adherence/stability per agent plus tier group statistics
    corpus print  dump the regulation corpus as JSON

Exit codes: 0 success, 2 input or configuration error, 3 numerical error.
All randomness flows from the single --seed; the API key for the llm
policy is read from the environment variable REGFLOW_API_KEY only.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass, field

from .agents import ClientConfig, DEFAULT_PROFILES, ManufacturerProfile
from .analysis import (
    DEFAULT_EPSILON,
    bonferroni_pairwise,
    metrics_report,
    sweep,
    welch_anova,
    write_sweep_csv,
)
from .calibration import (
    FitOptions,
    fit,
    read_series_csv,
)
from .corpus import build_default_corpus, corpus_to_json_list, load_corpus
from .dynamics import (
    DEFAULT_INITIAL_STATE,
    DEFAULT_PARAM_BOUNDS,
    DEFAULT_PARAMETERS,
    PARAM_FIELDS,
    ModelParameters,
    SystemState,
)
from .errors import ArgumentError, NumericalError
from .simulation import (
    SimulationConfig,
    SimulationResult,
    _config_from_dict,
    default_initial,
    result_from_json_dict,
    run,
    run_scripted,
    script_from_json_list,
    write_result_csv,
    write_result_json,
)

FORMATS = ("csv", "json")


@dataclass
class RunManifest:
    """Everything one simulate invocation needs."""

    config: SimulationConfig
    profile_file: str | None = None
    corpus_file: str | None = None
    script_file: str | None = None
    output_dir: str = "."
    formats: set[str] = field(default_factory=lambda: {"csv", "json"})
    initial_params: ModelParameters | None = None
    initial_state: SystemState | None = None


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def _load_json(path: str) -> dict | list:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ArgumentError(f"cannot read {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ArgumentError(f"{path} is not valid JSON: {exc}") from None


def _params_from_dict(data: dict, defaults: ModelParameters = DEFAULT_PARAMETERS) -> ModelParameters:
    unknown = set(data) - set(PARAM_FIELDS)
    if unknown:
        raise ArgumentError(f"unknown parameter fields: {sorted(unknown)}")
    values = {name: float(data.get(name, getattr(defaults, name))) for name in PARAM_FIELDS}
    return ModelParameters(**values)


def _load_profiles(path: str | None) -> list[ManufacturerProfile]:
    if path is None:
        return list(DEFAULT_PROFILES)
    data = _load_json(path)
    if not isinstance(data, list):
        raise ArgumentError(f"profile file {path} must hold a JSON array")
    profiles = []
    for i, entry in enumerate(data):
        try:
            profiles.append(
                ManufacturerProfile(
                    id=entry["id"],
                    name=entry.get("name", entry["id"]),
                    resource_tier=entry["resource_tier"],
                    risk_preference=entry.get("risk_preference", "medium"),
                    ai_investment_fraction=float(entry.get("ai_investment_fraction", 0.05)),
                    focus=entry.get("focus", ""),
                )
            )
        except (KeyError, TypeError) as exc:
            raise ArgumentError(f"profile entry {i} is invalid: {exc}") from None
    return profiles


def _parse_formats(spec: str) -> set[str]:
    formats = {part.strip() for part in spec.split(",") if part.strip()}
    if not formats:
        raise ArgumentError("--format must name at least one of csv, json")
    unknown = formats - set(FORMATS)
    if unknown:
        raise ArgumentError(f"unknown output formats: {sorted(unknown)}")
    return formats


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    if not os.access(path, os.W_OK):
        raise ArgumentError(f"output directory {path} is not writable")
    return path


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def _build_manifest(args: argparse.Namespace) -> RunManifest:
    raw: dict = {}
    if args.config is not None:
        loaded = _load_json(args.config)
        if not isinstance(loaded, dict):
            raise ArgumentError(f"config file {args.config} must hold a JSON object")
        raw = loaded
    config = _config_from_dict(raw)
    if args.seed is not None:
        config.seed = args.seed
    if args.steps is not None:
        config.total_steps = args.steps
    if args.policy is not None:
        config.policy_kind = args.policy
    if args.llm_endpoint is not None:
        base = config.llm or ClientConfig(endpoint=args.llm_endpoint)
        config.llm = ClientConfig(
            endpoint=args.llm_endpoint,
            model=base.model,
            timeout=base.timeout,
            retries=base.retries,
            api_key_env=base.api_key_env,
        )

    initial_params = None
    initial_state = None
    init_raw = raw.get("initial")
    if init_raw is not None:
        if not isinstance(init_raw, dict):
            raise ArgumentError("config key 'initial' must be an object")
        if "params" in init_raw:
            initial_params = _params_from_dict(init_raw["params"])
        if "state" in init_raw:
            st = init_raw["state"]
            initial_state = SystemState(
                t=0.0,
                g=float(st.get("g", DEFAULT_INITIAL_STATE.g)),
                c=float(st.get("c", DEFAULT_INITIAL_STATE.c)),
                m=float(st.get("m", DEFAULT_INITIAL_STATE.m)),
            )

    return RunManifest(
        config=config,
        profile_file=args.profiles or raw.get("profiles_file"),
        corpus_file=args.corpus or raw.get("corpus_file"),
        script_file=args.script or raw.get("script_file"),
        output_dir=args.out,
        formats=_parse_formats(args.format),
        initial_params=initial_params,
        initial_state=initial_state,
    )


def cmd_simulate(args: argparse.Namespace) -> int:
    manifest = _build_manifest(args)
    profiles = _load_profiles(manifest.profile_file)
    corpus = load_corpus(manifest.corpus_file) if manifest.corpus_file else build_default_corpus()

    params = manifest.initial_params or DEFAULT_PARAMETERS
    if manifest.initial_state is not None:
        initial = {p.id: (params, manifest.initial_state) for p in profiles}
    else:
        initial = default_initial(profiles, params)

    config = manifest.config
    if config.policy_kind == "scripted":
        if manifest.script_file is None:
            raise ArgumentError("policy 'scripted' requires --script or config script_file")
        script_data = _load_json(manifest.script_file)
        if not isinstance(script_data, list):
            raise ArgumentError(f"script file {manifest.script_file} must hold a JSON array")
        script = script_from_json_list(script_data)
        result = run_scripted(config, profiles, initial, corpus, script)
    else:
        result = run(config, profiles, initial, corpus)

    outdir = _ensure_outdir(manifest.output_dir)
    if "json" in manifest.formats:
        write_result_json(result, os.path.join(outdir, "result.json"))
    if "csv" in manifest.formats:
        write_result_csv(result, os.path.join(outdir, "trajectories.csv"))

    approvals = sum(
        1 for rec in result.records for ar in rec.agents.values() if ar.approved
    )
    final_threshold = result.records[-1].threshold
    print(
        f"steps={len(result.records)} approvals={approvals} "
        f"final_threshold={final_threshold:.4f}"
    )
    return 0


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------

def _bounds_from_file(path: str | None) -> dict[str, tuple[float, float]]:
    bounds = dict(DEFAULT_PARAM_BOUNDS)
    if path is None:
        return bounds
    data = _load_json(path)
    if not isinstance(data, dict):
        raise ArgumentError(f"bounds file {path} must hold a JSON object")
    for name, pair in data.items():
        if name not in PARAM_FIELDS:
            raise ArgumentError(f"bounds file names unknown parameter {name!r}")
        if not (isinstance(pair, list) and len(pair) == 2):
            raise ArgumentError(f"bounds for {name} must be [lo, hi]")
        bounds[name] = (float(pair[0]), float(pair[1]))
    return bounds


def cmd_calibrate(args: argparse.Namespace) -> int:
    obs = read_series_csv(args.obs)
    guess = DEFAULT_PARAMETERS
    if args.guess is not None:
        data = _load_json(args.guess)
        if not isinstance(data, dict):
            raise ArgumentError(f"guess file {args.guess} must hold a JSON object")
        guess = _params_from_dict(data)
    bounds = _bounds_from_file(args.bounds)
    options = FitOptions(
        max_iter=args.max_iter, tol=args.tol, restarts=args.restarts, seed=args.seed
    )
    result = fit(obs, guess, bounds=bounds, options=options, dt=args.dt)
    outdir = _ensure_outdir(args.out)
    out_path = os.path.join(outdir, "fit.json")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result.to_json_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    print(
        f"objective={result.objective_value:.12g} converged={result.converged} "
        f"iterations={result.iterations} restarts_used={result.restarts_used}"
    )
    return 0


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

def _parse_values(spec: str) -> list[float]:
    try:
        values = [float(part) for part in spec.split(",") if part.strip()]
    except ValueError as exc:
        raise ArgumentError(f"cannot parse --values: {exc}") from None
    if not values:
        raise ArgumentError("--values must name at least one number")
    return values


def _parse_state(spec: str) -> SystemState:
    parts = spec.split(",")
    if len(parts) != 3:
        raise ArgumentError("--initial must be three comma-separated numbers g,c,m")
    try:
        g, c, m = (float(p) for p in parts)
    except ValueError as exc:
        raise ArgumentError(f"cannot parse --initial: {exc}") from None
    return SystemState(t=0.0, g=g, c=c, m=m)


def cmd_sweep(args: argparse.Namespace) -> int:
    params = DEFAULT_PARAMETERS
    if args.params is not None:
        data = _load_json(args.params)
        if not isinstance(data, dict):
            raise ArgumentError(f"params file {args.params} must hold a JSON object")
        params = _params_from_dict(data)
    initial = _parse_state(args.initial) if args.initial else DEFAULT_INITIAL_STATE
    values = _parse_values(args.values)
    result = sweep(params, initial, args.horizon, args.dt, args.parameter, values)
    outdir = _ensure_outdir(args.out)
    write_sweep_csv(result, os.path.join(outdir, "sweep.csv"))

    def fmt_rate(r: float) -> str:
        return "undef" if math.isnan(r) else f"{r:+.3f}"

    for i, v in enumerate(result.values):
        rates = " ".join(
            f"rate_{name}={fmt_rate(result.change_rates[name][i])}"
            for name in ("G", "C", "M", "F")
        )
        print(f"{result.parameter}={v:g}: {rates}")
    return 0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _parse_groups_spec(spec: str, result: SimulationResult) -> dict[str, list[str]]:
    if spec == "auto":
        groups: dict[str, list[str]] = {}
        if not result.profiles:
            raise ArgumentError("result carries no profiles; pass an explicit --groups spec")
        for profile in result.profiles:
            groups.setdefault(profile.resource_tier, []).append(profile.id)
        return {name: sorted(ids) for name, ids in sorted(groups.items())}
    groups = {}
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ArgumentError(f"bad --groups entry {part!r}; expected name:id,id,...")
        name, ids = part.split(":", 1)
        members = [a.strip() for a in ids.split(",") if a.strip()]
        if not members:
            raise ArgumentError(f"group {name!r} has no members")
        groups[name.strip()] = members
    if not groups:
        raise ArgumentError("--groups spec is empty")
    return groups


def cmd_metrics(args: argparse.Namespace) -> int:
    data = _load_json(args.result)
    if not isinstance(data, dict):
        raise ArgumentError(f"result file {args.result} must hold a JSON object")
    try:
        result = result_from_json_dict(data)
    except (KeyError, TypeError, ValueError) as exc:
        raise ArgumentError(f"malformed result file {args.result}: {exc}") from None
    if not result.records:
        raise ArgumentError("result contains no step records")

    agent_ids = sorted(result.records[0].agents.keys())
    report: dict = {"epsilon": args.epsilon, "per_agent": {}}
    for aid in agent_ids:
        c_series = [rec.agents[aid].state.c for rec in result.records]
        g_series = [rec.agents[aid].state.g for rec in result.records]
        rep = metrics_report(c_series, g_series, args.epsilon)
        report["per_agent"][aid] = rep.to_json_dict()
        print(
            f"{aid}: adherence={rep.adherence_accuracy:.4f} "
            f"stability={rep.compliance_stability:.6g} "
            f"mean_C={rep.mean_compliance:.4f}"
        )

    if args.groups is not None:
        groups = _parse_groups_spec(args.groups, result)
        terminal = {
            aid: result.records[-1].agents[aid].market_adaptation for aid in agent_ids
        }
        missing = [a for ids in groups.values() for a in ids if a not in terminal]
        if missing:
            raise ArgumentError(f"group members not present in result: {missing}")
        labels = list(groups.keys())
        samples = [[terminal[a] for a in groups[name]] for name in labels]
        anova = welch_anova(samples)
        pairwise = bonferroni_pairwise(samples, labels=labels)
        report["groups"] = {
            "members": groups,
            "welch_anova": anova.to_json_dict(),
            "pairwise": [p.to_json_dict() for p in pairwise],
        }
        print(
            f"welch: F({anova.df1}, {anova.df2:.2f})={anova.f_stat:.4g} "
            f"p={anova.p_value:.4g} variance_explained={anova.variance_explained:.4f}"
        )
        for p in pairwise:
            print(f"pairwise {p.pair[0]} vs {p.pair[1]}: p_raw={p.p_raw:.4g} p_adj={p.p_adjusted:.4g}")

    outdir = _ensure_outdir(args.out)
    with open(os.path.join(outdir, "metrics.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return 0


# ---------------------------------------------------------------------------
# corpus
# ---------------------------------------------------------------------------

def cmd_corpus_print(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus) if args.corpus else build_default_corpus()
    print(json.dumps(corpus_to_json_list(corpus), indent=2))
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regflow",
        description="Regulator/manufacturer feedback simulation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the multi-agent simulation")
    sim.add_argument("--config", help="JSON config file (all fields optional)")
    sim.add_argument("--out", default=".", help="output directory")
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--steps", type=int, default=None, help="override total steps")
    sim.add_argument("--policy", choices=("rule", "scripted", "llm"), default=None)
    sim.add_argument("--llm-endpoint", default=None, help="chat-completions URL")
    sim.add_argument("--profiles", default=None, help="manufacturer profiles JSON")
    sim.add_argument("--corpus", default=None, help="regulation corpus JSON")
    sim.add_argument("--script", default=None, help="scripted decisions JSON")
    sim.add_argument("--format", default="csv,json", help="outputs to write: csv,json")
    sim.set_defaults(func=cmd_simulate)

    cal = sub.add_parser("calibrate", help="fit coefficients to an observed series")
    cal.add_argument("--obs", required=True, help="observed series CSV (t,G,C,M,F)")
    cal.add_argument("--guess", default=None, help="initial-guess JSON")
    cal.add_argument("--bounds", default=None, help="per-field bounds JSON")
    cal.add_argument("--out", default=".", help="output directory")
    cal.add_argument("--max-iter", type=int, default=2000)
    cal.add_argument("--tol", type=float, default=1e-10)
    cal.add_argument("--restarts", type=int, default=0)
    cal.add_argument("--seed", type=int, default=0)
    cal.add_argument("--dt", type=float, default=0.05)
    cal.set_defaults(func=cmd_calibrate)

    sw = sub.add_parser("sweep", help="single-parameter sensitivity sweep")
    sw.add_argument("--parameter", required=True, help="coefficient to vary")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--params", default=None, help="baseline coefficients JSON")
    sw.add_argument("--initial", default=None, help="initial state g,c,m")
    sw.add_argument("--horizon", type=float, default=10.0)
    sw.add_argument("--dt", type=float, default=0.05)
    sw.add_argument("--out", default=".", help="output directory")
    sw.set_defaults(func=cmd_sweep)

    met = sub.add_parser("metrics", help="evaluation metrics over a result file")
    met.add_argument("--result", required=True, help="result.json from simulate")
    met.add_argument("--epsilon", type=float, default=DEFAULT_EPSILON)
    met.add_argument(
        "--groups",
        default=None,
        help="'auto' for resource tiers, or name:id,id;name2:id,...",
    )
    met.add_argument("--out", default=".", help="output directory")
    met.set_defaults(func=cmd_metrics)

    cor = sub.add_parser("corpus", help="corpus utilities")
    cor_sub = cor.add_subparsers(dest="corpus_command", required=True)
    cor_print = cor_sub.add_parser("print", help="dump the corpus as JSON")
    cor_print.add_argument("--corpus", default=None, help="corpus JSON file")
    cor_print.set_defaults(func=cmd_corpus_print)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        step = "" if exc.step_index is None else f" (step {exc.step_index})"
        print(f"numerical error{step}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
