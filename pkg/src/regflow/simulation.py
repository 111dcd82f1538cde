"""Multi-agent simulation loop.

Each step: the active regulation set is issued, every manufacturer's
policy decides (comply, bounded parameter adjustments, optional
submission), adjustments are applied, each agent's ODE state advances by
one decision interval of RK4 substeps under its own parameters,
submissions are scored as benefit-risk ratios and decided against the
current threshold, and the threshold is then updated once from the step's
decided ratios. Every step is recorded in full so any run can be replayed
exactly from its own records.

Manufacturers own independent copies of the model state and coefficients;
they interact only through the shared approval threshold (and the recorded
mean feedback, kept for analysis).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping

from .agents import (
    DEFAULT_MAX_STEP,
    AgentDecision,
    ClientConfig,
    ManufacturerProfile,
    ParameterAdjustment,
    PolicyEnv,
    apply_adjustments,
    llm_policy_decide,
    rule_policy_decide,
)
from .brr import Submission, ThresholdConfig, compute_brr, decide, update_threshold
from .corpus import Regulation, Schedule, active_phase, regulations_for
from .dynamics import (
    DEFAULT_PARAM_BOUNDS,
    DEFAULT_PARAMETERS,
    PARAM_FIELDS,
    ModelParameters,
    SystemState,
    advance,
    eval_feedback,
)
from .errors import ArgumentError, NumericalError

__all__ = [
    "SimulationConfig",
    "AgentStepRecord",
    "StepRecord",
    "SimulationResult",
    "run",
    "run_scripted",
    "default_initial",
    "extract_script",
    "result_to_json_dict",
    "result_from_json_dict",
    "write_result_json",
    "write_result_csv",
]

POLICY_KINDS = ("rule", "scripted", "llm")


@dataclass
class SimulationConfig:
    total_steps: int = 73
    dt_per_step: float = 0.05
    inner_substeps: int = 20
    schedule: Schedule = field(default_factory=Schedule)
    threshold_cfg: ThresholdConfig = field(default_factory=ThresholdConfig)
    param_bounds: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(DEFAULT_PARAM_BOUNDS)
    )
    max_step: float = DEFAULT_MAX_STEP
    seed: int = 0
    policy_kind: str = "rule"
    llm: ClientConfig | None = None
    llm_concurrency: int = 4


def _check_config(config: SimulationConfig) -> None:
    if not (isinstance(config.total_steps, int) and config.total_steps >= 1):
        raise ArgumentError(f"total_steps must be >= 1, got {config.total_steps!r}")
    if not (isinstance(config.inner_substeps, int) and config.inner_substeps >= 1):
        raise ArgumentError(f"inner_substeps must be >= 1, got {config.inner_substeps!r}")
    if not (math.isfinite(config.dt_per_step) and config.dt_per_step > 0.0):
        raise ArgumentError(f"dt_per_step must be positive, got {config.dt_per_step!r}")
    if config.policy_kind not in POLICY_KINDS:
        raise ArgumentError(f"policy_kind must be one of {POLICY_KINDS}, got {config.policy_kind!r}")
    if not (math.isfinite(config.max_step) and config.max_step > 0.0):
        raise ArgumentError(f"max_step must be positive, got {config.max_step!r}")
    if not (isinstance(config.llm_concurrency, int) and config.llm_concurrency >= 1):
        raise ArgumentError(f"llm_concurrency must be >= 1, got {config.llm_concurrency!r}")


@dataclass
class AgentStepRecord:
    """One agent's slice of a step: post-adjustment parameters, post-update
    state, feedback, the decision taken, and the step's approval outcome."""

    params: ModelParameters
    state: SystemState
    f: float
    decision: AgentDecision
    brr: float | None
    approved: bool | None
    compliance_cost: float
    market_adaptation: float


@dataclass
class StepRecord:
    step: int
    phase: str
    agents: dict[str, AgentStepRecord]
    threshold: float
    mean_feedback: float


@dataclass
class SimulationResult:
    records: list[StepRecord]
    config: SimulationConfig
    profiles: list[ManufacturerProfile]
    clamp_events: int = 0
    llm_fallbacks: int = 0


AgentInit = tuple[ModelParameters, SystemState]
DecideFn = Callable[[int, ManufacturerProfile, list[Regulation], SystemState, PolicyEnv], AgentDecision]


def default_initial(
    profiles: list[ManufacturerProfile] | tuple[ManufacturerProfile, ...],
    params: ModelParameters = DEFAULT_PARAMETERS,
) -> dict[str, AgentInit]:
    """Stock starting conditions: shared coefficients, slightly staggered
    states so agents are distinguishable from step one."""
    out: dict[str, AgentInit] = {}
    for i, prof in enumerate(sorted(profiles, key=lambda p: p.id)):
        state = SystemState(t=0.0, g=0.5, c=0.4 + 0.01 * i, m=0.3 + 0.02 * i)
        out[prof.id] = (params, state)
    return out


def _check_decision(decision: AgentDecision, agent_id: str, max_step: float) -> None:
    if decision.comply:
        if decision.submission is None:
            raise ArgumentError(f"agent {agent_id}: comply decision without a submission")
        if decision.submission.agent_id != agent_id:
            raise ArgumentError(
                f"agent {agent_id}: submission carries id {decision.submission.agent_id!r}"
            )
    for name, delta in decision.adjustments.deltas.items():
        if abs(delta) > max_step + 1e-15:
            raise ArgumentError(
                f"agent {agent_id}: adjustment {name}={delta} exceeds max_step {max_step}"
            )


def _run_engine(
    config: SimulationConfig,
    profiles: list[ManufacturerProfile],
    initial: Mapping[str, AgentInit],
    corpus: list[Regulation],
    decide_step: Callable[[int, list], dict[str, AgentDecision]],
) -> SimulationResult:
    _check_config(config)
    if not profiles:
        raise ArgumentError("at least one manufacturer profile is required")
    ids = sorted(p.id for p in profiles)
    if len(set(ids)) != len(ids):
        raise ArgumentError("manufacturer profile ids must be unique")
    if set(initial.keys()) != set(ids):
        raise ArgumentError(
            f"initial data ids {sorted(initial.keys())} do not match profile ids {ids}"
        )
    by_id = {p.id: p for p in profiles}

    params: dict[str, ModelParameters] = {}
    states: dict[str, SystemState] = {}
    feedbacks: dict[str, float] = {}
    last_approved: dict[str, bool] = {}
    for aid in ids:
        p0, s0 = initial[aid]
        params[aid] = p0
        states[aid] = s0
        feedbacks[aid] = eval_feedback(s0, p0)
        last_approved[aid] = True

    window: list[float] = []
    threshold = update_threshold(config.threshold_cfg, window)
    records: list[StepRecord] = []
    clamp_events = 0
    llm_fallbacks = 0

    for t in range(config.total_steps):
        phase = active_phase(t, config.schedule)
        regs = regulations_for(t, corpus, config.schedule)
        items = [
            (
                by_id[aid],
                regs,
                states[aid],
                PolicyEnv(threshold=threshold, last_approved=last_approved[aid], feedback=feedbacks[aid]),
            )
            for aid in ids
        ]
        decisions = decide_step(t, items)

        step_brrs: list[float] = []
        agent_records: dict[str, AgentStepRecord] = {}
        for aid in ids:
            decision = decisions[aid]
            _check_decision(decision, aid, config.max_step)
            if decision.fallback is not None:
                llm_fallbacks += 1
            params[aid] = apply_adjustments(params[aid], decision.adjustments, config.param_bounds)
            try:
                new_state, f, cost, clamps = advance(
                    states[aid], params[aid], config.dt_per_step, config.inner_substeps
                )
            except NumericalError as exc:
                raise NumericalError(
                    f"agent {aid} diverged at simulation step {t}: {exc}", step_index=t
                ) from exc
            states[aid] = new_state
            feedbacks[aid] = f
            clamp_events += clamps

            brr_value: float | None = None
            approved: bool | None = None
            if decision.comply:
                brr_value = compute_brr(decision.submission)
                approved = decide(brr_value, threshold).approved
                last_approved[aid] = approved
                step_brrs.append(brr_value)

            agent_records[aid] = AgentStepRecord(
                params=params[aid],
                state=new_state,
                f=f,
                decision=decision,
                brr=brr_value,
                approved=approved,
                compliance_cost=cost,
                market_adaptation=new_state.m,
            )

        mean_feedback = sum(feedbacks[aid] for aid in ids) / len(ids)
        records.append(
            StepRecord(
                step=t,
                phase=phase,
                agents=agent_records,
                threshold=threshold,
                mean_feedback=mean_feedback,
            )
        )
        window.extend(step_brrs)
        window = window[-config.threshold_cfg.window :]
        threshold = update_threshold(config.threshold_cfg, window)

    return SimulationResult(
        records=records,
        config=config,
        profiles=[by_id[aid] for aid in ids],
        clamp_events=clamp_events,
        llm_fallbacks=llm_fallbacks,
    )


def run(
    config: SimulationConfig,
    profiles: list[ManufacturerProfile],
    initial: Mapping[str, AgentInit],
    corpus: list[Regulation],
) -> SimulationResult:
    """Run the configured policy for total_steps steps."""
    _check_config(config)
    if config.policy_kind == "rule":

        def decide_step(t: int, items: list) -> dict[str, AgentDecision]:
            return {
                prof.id: rule_policy_decide(prof, regs, state, env, config.max_step)
                for prof, regs, state, env in items
            }

    elif config.policy_kind == "llm":
        if config.llm is None:
            raise ArgumentError("policy_kind 'llm' requires config.llm client settings")
        client = config.llm

        def decide_step(t: int, items: list) -> dict[str, AgentDecision]:
            workers = min(config.llm_concurrency, len(items))
            if workers <= 1:
                return {
                    prof.id: llm_policy_decide(prof, regs, state, env, client, config.max_step)
                    for prof, regs, state, env in items
                }
            with ThreadPoolExecutor(max_workers=workers) as pool:
                futures = {
                    prof.id: pool.submit(
                        llm_policy_decide, prof, regs, state, env, client, config.max_step
                    )
                    for prof, regs, state, env in items
                }
                return {aid: fut.result() for aid, fut in futures.items()}

    elif config.policy_kind == "scripted":
        raise ArgumentError("policy_kind 'scripted' requires run_scripted with a script")
    else:  # pragma: no cover - guarded by _check_config
        raise ArgumentError(f"unknown policy_kind {config.policy_kind!r}")

    return _run_engine(config, profiles, initial, corpus, decide_step)


def run_scripted(
    config: SimulationConfig,
    profiles: list[ManufacturerProfile],
    initial: Mapping[str, AgentInit],
    corpus: list[Regulation],
    script: Mapping[tuple[int, str], AgentDecision],
) -> SimulationResult:
    """Replay decisions from a script keyed by (step, agent_id)."""

    def decide_step(t: int, items: list) -> dict[str, AgentDecision]:
        out = {}
        for prof, _regs, _state, _env in items:
            key = (t, prof.id)
            if key not in script:
                raise ArgumentError(f"script has no decision for step {t}, agent {prof.id}")
            out[prof.id] = script[key]
        return out

    return _run_engine(config, profiles, initial, corpus, decide_step)


def extract_script(result: SimulationResult) -> dict[tuple[int, str], AgentDecision]:
    """Pull the decisions out of a result for exact replay."""
    return {
        (record.step, aid): agent_record.decision
        for record in result.records
        for aid, agent_record in record.agents.items()
    }


def script_to_json_list(script: Mapping[tuple[int, str], AgentDecision]) -> list[dict]:
    return [
        {"step": step, "agent": aid, "decision": _decision_to_dict(decision)}
        for (step, aid), decision in sorted(script.items())
    ]


def script_from_json_list(data: list[dict]) -> dict[tuple[int, str], AgentDecision]:
    script: dict[tuple[int, str], AgentDecision] = {}
    for i, entry in enumerate(data):
        try:
            key = (int(entry["step"]), str(entry["agent"]))
            script[key] = _decision_from_dict(entry["decision"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ArgumentError(f"script entry {i} is invalid: {exc}") from None
    return script


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _params_to_dict(p: ModelParameters) -> dict:
    return {name: getattr(p, name) for name in PARAM_FIELDS}


def _state_to_dict(s: SystemState) -> dict:
    return {"t": s.t, "g": s.g, "c": s.c, "m": s.m}


def _submission_to_dict(s: Submission | None) -> dict | None:
    if s is None:
        return None
    return {
        "agent_id": s.agent_id,
        "safety": s.safety,
        "effectiveness": s.effectiveness,
        "compliance": s.compliance,
        "adverse": s.adverse,
        "regulation_ids": list(s.regulation_ids),
        "narrative": s.narrative,
    }


def _decision_to_dict(d: AgentDecision) -> dict:
    return {
        "comply": d.comply,
        "adjustments": dict(d.adjustments.deltas),
        "submission": _submission_to_dict(d.submission),
        "rationale": d.rationale,
        "warnings": list(d.warnings),
        "fallback": d.fallback,
    }


def _decision_from_dict(data: dict) -> AgentDecision:
    sub = data.get("submission")
    submission = None
    if sub is not None:
        submission = Submission(
            agent_id=sub["agent_id"],
            safety=sub["safety"],
            effectiveness=sub["effectiveness"],
            compliance=sub["compliance"],
            adverse=sub["adverse"],
            regulation_ids=tuple(sub.get("regulation_ids", ())),
            narrative=sub.get("narrative", ""),
        )
    return AgentDecision(
        comply=data["comply"],
        adjustments=ParameterAdjustment(deltas=dict(data.get("adjustments", {}))),
        submission=submission,
        rationale=data.get("rationale", ""),
        warnings=tuple(data.get("warnings", ())),
        fallback=data.get("fallback"),
    )


def _config_to_dict(config: SimulationConfig) -> dict:
    return {
        "total_steps": config.total_steps,
        "dt_per_step": config.dt_per_step,
        "inner_substeps": config.inner_substeps,
        "schedule": {
            "strict_steps": config.schedule.strict_steps,
            "lenient_steps": config.schedule.lenient_steps,
            "cycle": config.schedule.cycle,
        },
        "threshold": {
            "base": config.threshold_cfg.base,
            "kappa": config.threshold_cfg.kappa,
            "window": config.threshold_cfg.window,
            "floor": config.threshold_cfg.floor,
            "ceiling": config.threshold_cfg.ceiling,
        },
        "param_bounds": {k: list(v) for k, v in config.param_bounds.items()},
        "max_step": config.max_step,
        "seed": config.seed,
        "policy_kind": config.policy_kind,
        "llm": (
            None
            if config.llm is None
            else {
                "endpoint": config.llm.endpoint,
                "model": config.llm.model,
                "timeout": config.llm.timeout,
                "retries": config.llm.retries,
                "api_key_env": config.llm.api_key_env,
            }
        ),
        "llm_concurrency": config.llm_concurrency,
    }


def _config_from_dict(data: dict) -> SimulationConfig:
    sched = data.get("schedule", {})
    thr = data.get("threshold", {})
    bounds = dict(DEFAULT_PARAM_BOUNDS)
    for name, pair in (data.get("param_bounds") or {}).items():
        if name not in PARAM_FIELDS:
            raise ArgumentError(f"param_bounds names unknown field {name!r}")
        bounds[name] = (float(pair[0]), float(pair[1]))
    llm_raw = data.get("llm")
    return SimulationConfig(
        total_steps=int(data.get("total_steps", 73)),
        dt_per_step=float(data.get("dt_per_step", 0.05)),
        inner_substeps=int(data.get("inner_substeps", 20)),
        schedule=Schedule(
            strict_steps=int(sched.get("strict_steps", 10)),
            lenient_steps=int(sched.get("lenient_steps", 5)),
            cycle=bool(sched.get("cycle", True)),
        ),
        threshold_cfg=ThresholdConfig(
            base=float(thr.get("base", 4.0)),
            kappa=float(thr.get("kappa", 0.3)),
            window=int(thr.get("window", 10)),
            floor=float(thr.get("floor", 2.0)),
            ceiling=float(thr.get("ceiling", 8.0)),
        ),
        param_bounds=bounds,
        max_step=float(data.get("max_step", DEFAULT_MAX_STEP)),
        seed=int(data.get("seed", 0)),
        policy_kind=str(data.get("policy_kind", "rule")),
        llm=None if llm_raw is None else ClientConfig.from_dict(llm_raw),
        llm_concurrency=int(data.get("llm_concurrency", 4)),
    )


def _profile_to_dict(p: ManufacturerProfile) -> dict:
    return {
        "id": p.id,
        "name": p.name,
        "resource_tier": p.resource_tier,
        "risk_preference": p.risk_preference,
        "ai_investment_fraction": p.ai_investment_fraction,
        "focus": p.focus,
    }


def result_to_json_dict(result: SimulationResult) -> dict:
    return {
        "config": _config_to_dict(result.config),
        "profiles": [_profile_to_dict(p) for p in result.profiles],
        "clamp_events": result.clamp_events,
        "llm_fallbacks": result.llm_fallbacks,
        "records": [
            {
                "step": rec.step,
                "phase": rec.phase,
                "threshold": rec.threshold,
                "mean_feedback": rec.mean_feedback,
                "agents": {
                    aid: {
                        "params": _params_to_dict(ar.params),
                        "state": _state_to_dict(ar.state),
                        "f": ar.f,
                        "decision": _decision_to_dict(ar.decision),
                        "brr": ar.brr,
                        "approved": ar.approved,
                        "compliance_cost": ar.compliance_cost,
                        "market_adaptation": ar.market_adaptation,
                    }
                    for aid, ar in sorted(rec.agents.items())
                },
            }
            for rec in result.records
        ],
    }


def result_from_json_dict(data: dict) -> SimulationResult:
    records = []
    for rec in data["records"]:
        agents = {}
        for aid, ar in rec["agents"].items():
            agents[aid] = AgentStepRecord(
                params=ModelParameters(**ar["params"]),
                state=SystemState(**ar["state"]),
                f=ar["f"],
                decision=_decision_from_dict(ar["decision"]),
                brr=ar["brr"],
                approved=ar["approved"],
                compliance_cost=ar["compliance_cost"],
                market_adaptation=ar["market_adaptation"],
            )
        records.append(
            StepRecord(
                step=rec["step"],
                phase=rec["phase"],
                agents=agents,
                threshold=rec["threshold"],
                mean_feedback=rec["mean_feedback"],
            )
        )
    profiles = [ManufacturerProfile(**p) for p in data.get("profiles", [])]
    return SimulationResult(
        records=records,
        config=_config_from_dict(data.get("config", {})),
        profiles=profiles,
        clamp_events=int(data.get("clamp_events", 0)),
        llm_fallbacks=int(data.get("llm_fallbacks", 0)),
    )


def write_result_json(result: SimulationResult, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(result_to_json_dict(result), fh, sort_keys=True, indent=2)
        fh.write("\n")


def _fmt(x: float) -> str:
    return format(x, ".17g")


def write_result_csv(result: SimulationResult, path) -> None:
    """Per-agent trajectory rows: step,agent,G,C,M,F,brr,approved,threshold,cost,adaptation."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("step,agent,G,C,M,F,brr,approved,threshold,cost,adaptation\n")
        for rec in result.records:
            for aid in sorted(rec.agents):
                ar = rec.agents[aid]
                brr = "" if ar.brr is None else _fmt(ar.brr)
                approved = "" if ar.approved is None else ("true" if ar.approved else "false")
                fh.write(
                    f"{rec.step},{aid},{_fmt(ar.state.g)},{_fmt(ar.state.c)},"
                    f"{_fmt(ar.state.m)},{_fmt(ar.f)},{brr},{approved},"
                    f"{_fmt(rec.threshold)},{_fmt(ar.compliance_cost)},"
                    f"{_fmt(ar.market_adaptation)}\n"
                )
