"""Monte-Carlo sweeps over the synthetic environment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from ..core import as_utility, is_balanced
from ..process import make_config, run_process
from ..synthetic import ErrorModel, SyntheticQueries, assignment_vector, make_env, violation_curve

VARIANT_ORDER = ("uniform", "fast", "complex")


@dataclass(frozen=True)
class ErrorSetting:
    beta: int = 0
    delta: Fraction = Fraction(0)
    gamma: Fraction = Fraction(1)
    mu: Fraction = Fraction(1)
    mode: str = "uniform"

    def __post_init__(self):
        for k in ("delta", "gamma", "mu"):
            object.__setattr__(self, k, as_utility(getattr(self, k)))

    @property
    def label(self) -> str:
        return f"{self.mode}:b{self.beta}:d{self.delta}:g{self.gamma}:m{self.mu}"

    @property
    def guarantee_slack(self) -> Fraction:
        return 2 * self.beta + self.delta

    @property
    def guarantee_ratio(self) -> Fraction:
        return 1 / (self.gamma * self.mu)

    def error_model(self, seed) -> Optional[ErrorModel]:
        if self.beta == 0 and self.delta == 0 and self.gamma == 1 and self.mu == 1:
            return None
        return ErrorModel(self.beta, self.gamma, self.delta, self.mu, self.mode, seed)


def error_level_setting(level: int, mode: str = "uniform") -> ErrorSetting:
    """Error level 0..3: beta=delta=level, mu=gamma=1-0.15*level."""
    g = 1 - Fraction(15, 100) * level
    return ErrorSetting(level, Fraction(level), g, g, mode)


@dataclass
class SweepSpec:
    settings: Sequence[ErrorSetting] = (ErrorSetting(),)
    variants: Sequence[str] = VARIANT_ORDER
    num_instances: int = 100
    num_issues: int = 5
    opinion_count: int = 5
    n: int = 60
    B: int = 15
    base_seed: int = 0
    midpoint: str = "floor"
    level_step: Fraction = Fraction(1)
    level_bottom: Optional[Fraction] = Fraction(0)
    uniform_cost_mode: str = "exact"
    bs: Sequence[int] = tuple(range(11))

    def __post_init__(self):
        if self.num_instances < 1:
            raise ValueError("num_instances must be >= 1")
        bad = set(self.variants) - set(VARIANT_ORDER)
        if bad:
            raise ValueError(f"unknown variants {sorted(bad)}")


@dataclass
class InstanceMetrics:
    setting: ErrorSetting
    variant: str
    seed: int
    mean_utility: float
    bottom10_utility: float
    curve: dict  # b -> Fraction
    guarantee_ratio_at_slack: Fraction
    unassigned: int
    slate_cost: int
    balanced: bool

    @property
    def violation(self) -> bool:
        return self.curve[0] >= 1


@dataclass
class SweepResult:
    spec: SweepSpec
    runs: list = field(default_factory=list)

    def select(self, setting: ErrorSetting, variant: str) -> list:
        return [r for r in self.runs if r.setting == setting and r.variant == variant]

    def summary(self) -> list:
        rows = []
        for si, st in enumerate(self.spec.settings):
            for v in self.spec.variants:
                rs = self.select(st, v)
                if not rs:
                    continue
                rows.append({
                    "setting_id": si, "beta": st.beta, "delta": float(st.delta),
                    "gamma": float(st.gamma), "mu": float(st.mu), "mode": st.mode, "variant": v,
                    "mean_utility": float(np.mean([r.mean_utility for r in rs])),
                    "bottom10_utility": float(np.mean([r.bottom10_utility for r in rs])),
                    "violations": int(sum(r.violation for r in rs)),
                    "max_guarantee_ratio": float(max(r.guarantee_ratio_at_slack for r in rs)),
                    "n_seeds": len(rs),
                })
        return rows

    def curves(self) -> list:
        rows = []
        for si, st in enumerate(self.spec.settings):
            for v in self.spec.variants:
                rs = self.select(st, v)
                if not rs:
                    continue
                for b in self.spec.bs:
                    rows.append({
                        "setting_id": si, "variant": v, "b": b,
                        "mean_max_d": float(np.mean([float(r.curve[b]) for r in rs])),
                        "n_seeds": len(rs),
                    })
        return rows

    def mean_max_d(self, setting: ErrorSetting, variant: str, b: int = 0) -> float:
        rs = self.select(setting, variant)
        return float(np.mean([float(r.curve[b]) for r in rs]))


def bottom_share_mean(values, share=0.1) -> float:
    """Mean of the lowest ceil(share*n) values."""
    v = np.sort(np.asarray(values, dtype=float))
    k = max(1, math.ceil(share * len(v) - 1e-9))
    return float(v[:k].mean())


def _stream(spec: SweepSpec, *tags) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([spec.base_seed, *tags]))


def _seed_tag(setting: ErrorSetting, variant: str, i: int) -> list:
    return [i, VARIANT_ORDER.index(variant), setting.beta,
            setting.delta.numerator, setting.delta.denominator,
            setting.gamma.numerator, setting.gamma.denominator,
            setting.mu.numerator, setting.mu.denominator, int(setting.mode == "worst_case")]


def _env_for(spec: SweepSpec, i: int):
    return make_env(spec.base_seed + i, spec.num_issues, spec.opinion_count, spec.n, spec.B, spec.midpoint)


def simulate(spec: SweepSpec, setting: ErrorSetting, variant: str, i: int, env=None):
    """One process run on instance ``i``; returns (env, SlateResult, assignment vector)."""
    env = env if env is not None else _env_for(spec, i)
    inst = env.instance(spec.level_step, spec.level_bottom)
    tag = _seed_tag(setting, variant, i)
    noise_seed = np.random.SeedSequence([spec.base_seed, 1, *tag])
    cost_mode = spec.uniform_cost_mode if variant == "uniform" else "at_most"
    queries = SyntheticQueries(env, setting.error_model(noise_seed), cost_mode, seed=noise_seed)
    cfg = make_config(variant, inst, spec.num_issues)
    res = run_process(inst, queries, cfg, _stream(spec, 2, *tag))
    return env, res, assignment_vector(env, res.assignment)


def run_instance(spec: SweepSpec, setting: ErrorSetting, variant: str, i: int, env=None) -> InstanceMetrics:
    env, res, vec = simulate(spec, setting, variant, i, env)
    util = env.half_units[np.arange(env.n), vec] / 2.0
    slack = setting.guarantee_slack
    bs = list(spec.bs)
    extra = [] if slack in bs else [slack]
    curve = violation_curve(env, vec, bs + extra)
    return InstanceMetrics(
        setting, variant, spec.base_seed + i,
        mean_utility=float(util.mean()),
        bottom10_utility=bottom_share_mean(util),
        curve={b: curve[b][0] for b in bs},
        guarantee_ratio_at_slack=curve[slack][0],
        unassigned=len(res.unassigned),
        slate_cost=res.slate.cost,
        balanced=is_balanced(res.assignment, res.slate, env.n, env.budget, require_total=False),
    )


def run_error_sweep(spec: SweepSpec, progress=None) -> SweepResult:
    out = SweepResult(spec)
    for i in range(spec.num_instances):
        env = _env_for(spec, i)
        for st in spec.settings:
            for v in spec.variants:
                out.runs.append(run_instance(spec, st, v, i, env))
        if progress:
            progress(i + 1, spec.num_instances)
    return out


def max_violated_slack(env, vec, d=1, step=Fraction(1, 2)) -> Fraction:
    """Largest b on the half grid with a (b, d) violation; 0 when none."""
    lo, hi = env.utility_bounds()
    b, best = Fraction(0), Fraction(0)
    while b <= hi - lo:
        if violation_curve(env, vec, [b])[b][0] < d:
            break
        best = b
        b += step
    return best


SCAN_PARAMS = ("beta", "delta", "mu_gamma")


@dataclass
class ScanResult:
    param: str
    values: list
    points: list  # dicts: value, metric, mean, n_seeds


def run_param_scan(param: str, values: Sequence, spec: Optional[SweepSpec] = None, variant="complex") -> ScanResult:
    """Vary one error parameter with the others exact.

    For mu_gamma the metric is the mean max-d at b=0; for beta and delta it
    is the mean largest b admitting a (b, 1) violation.
    """
    if param not in SCAN_PARAMS:
        raise ValueError(f"param must be one of {SCAN_PARAMS}")
    spec = spec or SweepSpec()
    points = []
    for v in values:
        if param == "beta":
            if int(v) != v or v < 0:
                raise ValueError("beta must be a nonnegative integer")
            st = ErrorSetting(beta=int(v))
        elif param == "delta":
            st = ErrorSetting(delta=as_utility(v))
            if st.delta < 0:
                raise ValueError("delta must be nonnegative")
        else:
            g = as_utility(v)
            if not 0 < g <= 1:
                raise ValueError("mu_gamma must lie in (0, 1]")
            st = ErrorSetting(gamma=g, mu=g)
        sub = replace(spec, settings=(st,), variants=(variant,))
        vals = []
        for i in range(spec.num_instances):
            env, _, vec = simulate(sub, st, variant, i)
            if param == "mu_gamma":
                vals.append(float(violation_curve(env, vec, [0])[0][0]))
            else:
                vals.append(float(max_violated_slack(env, vec)))
        points.append({"value": float(as_utility(v)), "metric": "max_d" if param == "mu_gamma" else "max_b",
                       "mean": float(np.mean(vals)), "n_seeds": len(vals)})
    return ScanResult(param, list(values), points)
