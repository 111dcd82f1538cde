"""Acceptance suite: one test per shipped criterion, each printing a
pass/fail line. Everything runs offline; the llm criterion uses a local
stub server. Run with `pytest tests/test_acceptance.py -v -s` to see the
per-criterion lines as they print."""

import itertools
import json
import math
import time

from regflow.agents import ClientConfig, DEFAULT_PROFILES, PolicyEnv, llm_policy_decide
from regflow.analysis import adherence_accuracy, compliance_stability, sweep, welch_anova
from regflow.brr import Submission, compute_brr, decide
from regflow.calibration import FitOptions, fit, generate_synthetic, objective
from regflow.cli import main
from regflow.corpus import Schedule, build_default_corpus, regulations_for
from regflow.dynamics import (
    DEFAULT_INITIAL_STATE,
    DEFAULT_PARAMETERS,
    ModelParameters,
    PARAM_FIELDS,
    SystemState,
    integrate,
)
from regflow.simulation import (
    SimulationConfig,
    default_initial,
    extract_script,
    result_to_json_dict,
    run,
    run_scripted,
)

from llm_stub import StubLLMServer


def report(number: int, description: str, ok: bool) -> None:
    print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {description}")
    assert ok, f"criterion {number} failed: {description}"


def test_criterion_1_ode_matches_closed_form():
    alpha1, phi1 = 0.9, 0.7
    p = ModelParameters(alpha1=alpha1, phi1=phi1)
    started = time.perf_counter()
    traj = integrate(SystemState(0.0, 0.0, 0.0, 0.0), p, 10.0, 0.01)
    elapsed = time.perf_counter() - started
    worst = max(
        abs(state.g - alpha1 * (state.t + (math.exp(-phi1 * state.t) - 1.0) / phi1))
        for state, _ in traj.samples
    )
    report(1, f"closed-form error {worst:.2e} <= 1e-6 in {elapsed:.3f}s", worst <= 1e-6 and elapsed < 1.0)


def test_criterion_2_rk4_order_on_coupled_system():
    started = time.perf_counter()
    terminal = {}
    for dt in (0.1, 0.05, 0.025):
        state, _ = integrate(DEFAULT_INITIAL_STATE, DEFAULT_PARAMETERS, 5.0, dt).terminal()
        terminal[dt] = (state.g, state.c, state.m)
    elapsed = time.perf_counter() - started
    e1 = max(abs(a - b) for a, b in zip(terminal[0.1], terminal[0.05]))
    e2 = max(abs(a - b) for a, b in zip(terminal[0.05], terminal[0.025]))
    ratio = e1 / e2
    report(2, f"Richardson ratio {ratio:.2f} >= 8 in {elapsed:.3f}s", ratio >= 8.0 and elapsed < 5.0)


def test_criterion_3_objective_exactness_and_recovery():
    true = ModelParameters(
        alpha1=0.6, alpha2=0.5, alpha3=0.4, alpha4=0.8,
        phi1=0.8, phi2=0.7, phi3=0.6, phi4=0.9,
        beta1=0.2, beta2=0.3, beta3=0.25, gamma1=0.5, gamma2=0.4,
    )
    obs = generate_synthetic(true, SystemState(0.0, 0.4, 0.3, 0.2), 3.0, 0.05, 2, 0.0, 0)
    self_total, _ = objective(true, obs, 0.05)
    guess = ModelParameters(**{n: getattr(true, n) * 1.10 for n in PARAM_FIELDS})
    started = time.perf_counter()
    result = fit(obs, guess, options=FitOptions(max_iter=5000, tol=1e-10, restarts=4, seed=7))
    elapsed = time.perf_counter() - started
    ok = self_total <= 1e-10 and result.objective_value < 1e-6 and elapsed < 60.0
    report(
        3,
        f"self-residual {self_total:.1e} <= 1e-10, recovered objective "
        f"{result.objective_value:.2e} < 1e-6 in {elapsed:.1f}s",
        ok,
    )


def test_criterion_4_brr_formula_and_boundary():
    anchor = compute_brr(Submission("A", 8, 7, 9, 4)) == 6.0
    boundary = decide(6.0, 6.0).approved is True
    grid_ok = True
    for s, e, c, a in itertools.product(range(1, 11), repeat=4):
        expected = (s + e + c) / a  # brute-force oracle of the stated formula
        if compute_brr(Submission("A", s, e, c, a)) != expected:
            grid_ok = False
            break
    report(4, "BRR formula exact on anchor, boundary, and full 10^4 grid", anchor and boundary and grid_ok)


def test_criterion_5_metrics_fixtures():
    checks = [
        adherence_accuracy([1, 2, 3], [1, 2, 3], 0.1) == 1.0,
        adherence_accuracy([1, 2, 3], [1, 2, 10], 0.5) == 2 / 3,
        adherence_accuracy([1.0], [1.5], 0.5) == 0.0,
        compliance_stability([4, 4, 4, 4]) == 0.0,
        compliance_stability([1, 3]) == 1.0,
        compliance_stability([2, 2, 5]) == 2.0,
        compliance_stability([7.25] * 31) == 0.0,
    ]
    report(5, "adherence and stability match hand-computed fixtures exactly", all(checks))


def test_criterion_6_alpha1_sensitivity_anchor():
    base = ModelParameters(alpha1=0.1, phi1=1.0, beta1=0.0)
    result = sweep(base, SystemState(0.0, 0.0, 0.0, 0.0), 10.0, 0.05, "alpha1", [0.1, 0.2])
    rate = result.change_rates["G"][1]
    report(6, f"terminal G change rate {rate:.12f} = +1.0 within 1e-9", abs(rate - 1.0) <= 1e-9)


def test_criterion_7_beta1_saturation_on_default_config():
    started = time.perf_counter()
    values = [0.1, 0.2, 0.3, 0.4]
    result = sweep(DEFAULT_PARAMETERS, DEFAULT_INITIAL_STATE, 10.0, 0.05, "beta1", values)
    elapsed = time.perf_counter() - started
    g = result.outputs["G"]
    drops = [g[i] - g[i + 1] for i in range(len(g) - 1)]
    monotone = all(d > 0 for d in drops) and all(drops[i] > drops[i + 1] for i in range(len(drops) - 1))
    report(
        7,
        f"marginal G decreases {['%.5f' % d for d in drops]} shrink monotonically in {elapsed:.2f}s",
        monotone and elapsed < 5.0,
    )


def test_criterion_8_welch_anova():
    # two balanced equal-variance groups: Welch must agree with classical
    g1 = [1.0, 2.0, 3.0, 4.0]
    g2 = [6.0, 7.0, 8.0, 9.0]
    res = welch_anova([g1, g2])
    n, k = 4, 2
    grand = (sum(g1) + sum(g2)) / (2 * n)
    m1 = sum(g1) / n
    m2 = sum(g2) / n
    ssb = n * ((m1 - grand) ** 2 + (m2 - grand) ** 2)
    ssw = sum((x - m1) ** 2 for x in g1) + sum((x - m2) ** 2 for x in g2)
    classical = (ssb / (k - 1)) / (ssw / (2 * n - k))
    classical_ok = abs(res.f_stat - classical) <= 1e-9

    # fixture groups against an independent reference computation
    ref = welch_anova([[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]])
    fixture_ok = (
        abs(ref.f_stat - 19.2) <= 1e-6
        and abs(ref.df2 - 6.0) <= 1e-6
        and abs(ref.p_value - 0.004659214943993935) <= 1e-6
    )

    same = welch_anova([[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])
    identical_ok = same.f_stat == 0.0 and same.p_value == 1.0
    report(8, "Welch agrees with classical, fixtures, and identical-group edge", classical_ok and fixture_ok and identical_ok)


def test_criterion_9_end_to_end_determinism(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    started = time.perf_counter()
    code1 = main(["simulate", "--out", str(out1), "--seed", "11"])
    first_run = time.perf_counter() - started
    code2 = main(["simulate", "--out", str(out2), "--seed", "11"])
    identical = (
        code1 == 0
        and code2 == 0
        and (out1 / "result.json").read_bytes() == (out2 / "result.json").read_bytes()
        and (out1 / "trajectories.csv").read_bytes() == (out2 / "trajectories.csv").read_bytes()
    )

    config = SimulationConfig(seed=11)
    initial = default_initial(DEFAULT_PROFILES)
    original = run(config, list(DEFAULT_PROFILES), initial, build_default_corpus())
    replayed = run_scripted(
        SimulationConfig(seed=11, policy_kind="scripted"),
        list(DEFAULT_PROFILES),
        initial,
        build_default_corpus(),
        extract_script(original),
    )
    replay_ok = json.dumps(result_to_json_dict(original)["records"], sort_keys=True) == json.dumps(
        result_to_json_dict(replayed)["records"], sort_keys=True
    )
    report(
        9,
        f"two CLI runs byte-identical ({first_run:.2f}s/run) and replay exact",
        identical and replay_ok and first_run < 10.0,
    )


def test_criterion_10_llm_path_robustness():
    profile = DEFAULT_PROFILES[0]
    regs = regulations_for(0, build_default_corpus(), Schedule())
    state = SystemState(0.0, 0.5, 0.5, 0.5)
    env = PolicyEnv(threshold=4.0, last_approved=True, feedback=0.1)

    good = json.dumps(
        {
            "comply": True,
            "adjustments": {"alpha2": 0.02},
            "safety": 14,
            "effectiveness": 7,
            "compliance": 9,
            "adverse": 4,
            "rationale": "ready",
        }
    )
    with StubLLMServer(behavior="reply", reply_content=good) as server:
        d = llm_policy_decide(profile, regs, state, env, ClientConfig(endpoint=server.url, retries=2))
    parsed_ok = d.fallback is None and d.comply and d.submission.safety == 10 and d.warnings

    with StubLLMServer(behavior="garbage") as server:
        d = llm_policy_decide(profile, regs, state, env, ClientConfig(endpoint=server.url, retries=2))
        garbage_hits = server.hits
    fallback_ok = d.fallback == "parse" and d.comply and garbage_hits == 1

    with StubLLMServer(behavior="sleep", sleep_s=2.0) as server:
        d = llm_policy_decide(
            profile, regs, state, env,
            ClientConfig(endpoint=server.url, timeout=0.25, retries=2),
        )
        retry_ok = server.hits == 3 and d.fallback == "timeout"

    report(
        10,
        "llm policy parses and clips, honors retry count exactly, falls back on garbage",
        parsed_ok and fallback_ok and retry_ok,
    )
