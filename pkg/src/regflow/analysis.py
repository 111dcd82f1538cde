"""Evaluation metrics, group statistics, and parameter-sensitivity sweeps.

Metrics: adherence accuracy is the fraction of steps where compliance
effort tracks guidance within epsilon (strict inequality); compliance
stability is the population variance of the compliance series (lower is
smoother).

Group comparison uses Welch's one-way ANOVA, which tolerates unequal group
variances and yields fractional denominator degrees of freedom. The
F-distribution tail is evaluated through the regularized incomplete beta
function (continued fraction, relative tolerance 1e-10, at most 300
iterations), so no statistics library is needed at runtime. Variance
explained is reported as eta-squared from the classical between/total sum
of squares.

Sensitivity sweeps rerun the integration with a single coefficient
replaced and report terminal outputs plus their relative change against
the baseline coefficient set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .dynamics import ModelParameters, PARAM_FIELDS, SystemState, integrate
from .errors import ArgumentError, NumericalError

__all__ = [
    "MetricsReport",
    "WelchAnovaResult",
    "PairwiseComparison",
    "SweepResult",
    "adherence_accuracy",
    "compliance_stability",
    "metrics_report",
    "welch_anova",
    "bonferroni_pairwise",
    "sweep",
    "f_cdf",
    "f_sf",
    "regularized_incomplete_beta",
    "write_sweep_csv",
]

OUTPUT_NAMES = ("G", "C", "M", "F")


# ---------------------------------------------------------------------------
# adherence and stability
# ---------------------------------------------------------------------------

def adherence_accuracy(
    c_series: Sequence[float],
    g_series: Sequence[float],
    epsilon: float,
) -> float:
    """Fraction of steps with |c - g| strictly below epsilon."""
    if len(c_series) == 0:
        raise ArgumentError("adherence needs at least one sample")
    if len(c_series) != len(g_series):
        raise ArgumentError(
            f"series lengths differ: {len(c_series)} vs {len(g_series)}"
        )
    if not (math.isfinite(epsilon) and epsilon > 0.0):
        raise ArgumentError(f"epsilon must be positive, got {epsilon!r}")
    hits = sum(1 for c, g in zip(c_series, g_series) if abs(c - g) < epsilon)
    return hits / len(c_series)


def compliance_stability(c_series: Sequence[float]) -> float:
    """Population variance of the compliance series (divide by T)."""
    n = len(c_series)
    if n == 0:
        raise ArgumentError("stability needs at least one sample")
    mean = sum(c_series) / n
    return sum((c - mean) ** 2 for c in c_series) / n


@dataclass(frozen=True)
class MetricsReport:
    adherence_accuracy: float
    compliance_stability: float
    epsilon: float
    mean_compliance: float

    def to_json_dict(self) -> dict:
        return {
            "adherence_accuracy": self.adherence_accuracy,
            "compliance_stability": self.compliance_stability,
            "epsilon": self.epsilon,
            "mean_compliance": self.mean_compliance,
        }


DEFAULT_EPSILON = 0.5


def metrics_report(
    c_series: Sequence[float],
    g_series: Sequence[float],
    epsilon: float = DEFAULT_EPSILON,
) -> MetricsReport:
    return MetricsReport(
        adherence_accuracy=adherence_accuracy(c_series, g_series, epsilon),
        compliance_stability=compliance_stability(c_series),
        epsilon=epsilon,
        mean_compliance=sum(c_series) / len(c_series),
    )


# ---------------------------------------------------------------------------
# F distribution via the regularized incomplete beta function
# ---------------------------------------------------------------------------

_BETA_MAX_ITER = 300
_BETA_REL_TOL = 1e-10


def _betacf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, _BETA_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETA_REL_TOL:
            return h
    raise NumericalError(
        f"incomplete beta continued fraction did not converge for a={a}, b={b}, x={x}"
    )


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not (a > 0.0 and b > 0.0):
        raise ArgumentError(f"shape parameters must be positive, got a={a}, b={b}")
    if not 0.0 <= x <= 1.0:
        raise ArgumentError(f"x must lie in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    # the continued fraction converges fast only on one side of the mean;
    # use the symmetry I_x(a,b) = 1 - I_{1-x}(b,a) on the other
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_cdf(x: float, df1: float, df2: float) -> float:
    """CDF of the F(df1, df2) distribution."""
    if df1 <= 0.0 or df2 <= 0.0:
        raise ArgumentError(f"degrees of freedom must be positive, got {df1}, {df2}")
    if x <= 0.0:
        return 0.0
    return regularized_incomplete_beta(0.5 * df1, 0.5 * df2, df1 * x / (df1 * x + df2))


def f_sf(x: float, df1: float, df2: float) -> float:
    """Upper tail 1 - CDF, computed directly for accuracy at large x."""
    if df1 <= 0.0 or df2 <= 0.0:
        raise ArgumentError(f"degrees of freedom must be positive, got {df1}, {df2}")
    if x <= 0.0:
        return 1.0
    return regularized_incomplete_beta(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * x))


# ---------------------------------------------------------------------------
# Welch's one-way ANOVA
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WelchAnovaResult:
    f_stat: float
    df1: int
    df2: float
    p_value: float
    variance_explained: float

    def to_json_dict(self) -> dict:
        return {
            "f_stat": self.f_stat,
            "df1": self.df1,
            "df2": self.df2,
            "p_value": self.p_value,
            "variance_explained": self.variance_explained,
        }


def _check_groups(groups: Sequence[Sequence[float]]) -> list[np.ndarray]:
    if len(groups) < 2:
        raise ArgumentError("need at least 2 groups")
    arrays = []
    for i, g in enumerate(groups):
        arr = np.asarray(g, dtype=float)
        if arr.ndim != 1 or arr.size < 2:
            raise ArgumentError(f"group {i} needs at least 2 values")
        if not np.all(np.isfinite(arr)):
            raise ArgumentError(f"group {i} contains non-finite values")
        arrays.append(arr)
    return arrays


def _eta_squared(arrays: list[np.ndarray]) -> float:
    values = np.concatenate(arrays)
    grand = values.mean()
    ss_total = float(np.sum((values - grand) ** 2))
    if ss_total == 0.0:
        return 0.0
    ss_between = float(sum(a.size * (a.mean() - grand) ** 2 for a in arrays))
    return ss_between / ss_total


def welch_anova(groups: Sequence[Sequence[float]]) -> WelchAnovaResult:
    """Welch's heteroscedastic one-way ANOVA over two or more groups."""
    arrays = _check_groups(groups)
    k = len(arrays)
    n = np.array([a.size for a in arrays], dtype=float)
    means = np.array([a.mean() for a in arrays])
    variances = np.array([a.var(ddof=1) for a in arrays])

    if np.all(variances == 0.0):
        if np.all(means == means[0]):
            return WelchAnovaResult(
                f_stat=0.0,
                df1=k - 1,
                df2=float(n.sum() - k),
                p_value=1.0,
                variance_explained=0.0,
            )
        raise ArgumentError(
            "degenerate groups: zero variance everywhere with unequal means"
        )
    if np.any(variances == 0.0):
        raise ArgumentError("a group has zero variance; Welch weights are undefined")

    w = n / variances
    w_sum = w.sum()
    grand = float(np.dot(w, means) / w_sum)
    numerator = float(np.dot(w, (means - grand) ** 2)) / (k - 1)
    tmp = float(np.sum((1.0 - w / w_sum) ** 2 / (n - 1.0))) / (k * k - 1.0)
    f_stat = numerator / (1.0 + 2.0 * (k - 2.0) * tmp)
    df2 = 1.0 / (3.0 * tmp)
    p_value = f_sf(f_stat, float(k - 1), df2)
    return WelchAnovaResult(
        f_stat=f_stat,
        df1=k - 1,
        df2=df2,
        p_value=p_value,
        variance_explained=_eta_squared(arrays),
    )


@dataclass(frozen=True)
class PairwiseComparison:
    pair: tuple[str, str]
    p_raw: float
    p_adjusted: float

    def to_json_dict(self) -> dict:
        return {"pair": list(self.pair), "p_raw": self.p_raw, "p_adjusted": self.p_adjusted}


def bonferroni_pairwise(
    groups: Sequence[Sequence[float]],
    labels: Sequence[str] | None = None,
) -> list[PairwiseComparison]:
    """All pairwise two-group Welch tests with Bonferroni adjustment."""
    arrays = _check_groups(groups)
    k = len(arrays)
    if labels is None:
        labels = [str(i) for i in range(k)]
    elif len(labels) != k:
        raise ArgumentError(f"got {len(labels)} labels for {k} groups")
    pairs = list(combinations(range(k), 2))
    n_pairs = len(pairs)
    out = []
    for i, j in pairs:
        res = welch_anova([arrays[i], arrays[j]])
        out.append(
            PairwiseComparison(
                pair=(str(labels[i]), str(labels[j])),
                p_raw=res.p_value,
                p_adjusted=min(1.0, res.p_value * n_pairs),
            )
        )
    return out


# ---------------------------------------------------------------------------
# parameter sweeps
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    parameter: str
    values: list[float]
    outputs: dict[str, list[float]]
    change_rates: dict[str, list[float]]


def _terminal_outputs(
    p: ModelParameters, initial: SystemState, horizon: float, dt: float
) -> tuple[float, float, float, float]:
    state, f = integrate(initial, p, horizon, dt).terminal()
    return state.g, state.c, state.m, f


def sweep(
    base: ModelParameters,
    initial: SystemState,
    horizon: float,
    dt: float,
    parameter: str,
    values: Sequence[float],
) -> SweepResult:
    """Rerun the integration for each value of one coefficient.

    The baseline outputs come from `base` unchanged; each change rate is
    (output - baseline) / |baseline|, or NaN where the baseline is zero.
    """
    if parameter not in PARAM_FIELDS:
        raise ArgumentError(f"unknown parameter {parameter!r}")
    if len(values) == 0:
        raise ArgumentError("values must be non-empty")
    for v in values:
        if not (math.isfinite(v) and v >= 0.0):
            raise ArgumentError(f"sweep value must be finite and >= 0, got {v!r}")

    baseline = _terminal_outputs(base, initial, horizon, dt)
    outputs: dict[str, list[float]] = {name: [] for name in OUTPUT_NAMES}
    change_rates: dict[str, list[float]] = {name: [] for name in OUTPUT_NAMES}
    for v in values:
        outs = _terminal_outputs(base.replace(**{parameter: v}), initial, horizon, dt)
        for name, out, ref in zip(OUTPUT_NAMES, outs, baseline):
            outputs[name].append(out)
            if ref == 0.0:
                change_rates[name].append(math.nan)
            else:
                change_rates[name].append((out - ref) / abs(ref))
    return SweepResult(
        parameter=parameter,
        values=[float(v) for v in values],
        outputs=outputs,
        change_rates=change_rates,
    )


def write_sweep_csv(result: SweepResult, path) -> None:
    """Rows: parameter,value,G,C,M,F,rate_G,rate_C,rate_M,rate_F."""

    def fmt(x: float) -> str:
        return format(x, ".17g")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("parameter,value,G,C,M,F,rate_G,rate_C,rate_M,rate_F\n")
        for i, v in enumerate(result.values):
            outs = ",".join(fmt(result.outputs[name][i]) for name in OUTPUT_NAMES)
            rates = ",".join(fmt(result.change_rates[name][i]) for name in OUTPUT_NAMES)
            fh.write(f"{result.parameter},{fmt(v)},{outs},{rates}\n")
