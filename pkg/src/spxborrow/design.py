"""Effective sample size, two-stage size re-estimation, and decision rules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inference import (
    McmcConfig,
    PosteriorDraws,
    PosteriorSummary,
    RmapParams,
    fit_independent,
    fit_rmap,
    fit_spx,
    summarize,
)
from .model import Dataset, SpxHyperParams

METHODS = ("spx", "rmap", "independent")


@dataclass(frozen=True)
class DesignConfig:
    """Adaptive-design constants.

    ``n_max`` is the target control size; Stage 1 enrolls ``n_stage1``
    (default half of the target). The realized total control size is
    truncated to [p_min * n_max, p_max * n_max]. ``delta0`` and the q
    thresholds drive the final positive / clinically-significant calls.
    """

    n_max: int
    n_stage1: int | None = None
    p_min: float = 0.75
    p_max: float = 1.25
    delta0: float = 0.2
    q_positive: float = 0.05
    q_clinical: float = 0.05

    def __post_init__(self) -> None:
        if self.n_max < 1:
            raise ValueError("n_max must be positive")
        if self.n_stage1 is None:
            object.__setattr__(self, "n_stage1", self.n_max // 2)
        if not 0 < self.n_stage1 <= self.n_max:
            raise ValueError("need 0 < n_stage1 <= n_max")
        if not 0.0 <= self.p_min <= 1.0 <= self.p_max:
            raise ValueError("need 0 <= p_min <= 1 <= p_max")
        if not 0.0 <= self.delta0 < 1.0:
            raise ValueError("delta0 must lie in [0, 1)")
        for q in (self.q_positive, self.q_clinical):
            if not 0.0 < q < 1.0:
                raise ValueError("decision thresholds must lie in (0, 1)")


@dataclass(frozen=True)
class TreatmentSummary:
    y_trt: int
    n_trt: int

    def __post_init__(self) -> None:
        if self.n_trt < 0 or not 0 <= self.y_trt <= max(self.n_trt, 0):
            raise ValueError("need 0 <= y_trt <= n_trt")


@dataclass(frozen=True)
class InterimPlan:
    """Interim re-estimation outcome: borrowing credit and Stage-2 plan."""

    ess: float
    stage2_n: int
    total_n: int


@dataclass(frozen=True)
class FinalAnalysis:
    """Completion record: posterior summary and both effect decisions."""

    summary: PosteriorSummary
    rb_weights: tuple[float, float, float]
    positive: bool
    clinical: bool


def ess_moment_match(draws: PosteriorDraws, n_current: int) -> float:
    """Borrowing credit in effective patients, net of those already enrolled.

    Matches a Beta distribution to the posterior mean and variance of the
    control rate; that Beta's parameter sum is the information content in
    patient units, and the current sample size is subtracted. Negative
    values are meaningful: borrowing made the posterior wider than the data
    alone would.
    """
    psi = np.asarray(draws.psi_new, dtype=float)
    m = float(psi.mean())
    v = float(psi.var(ddof=1))
    if v <= 0.0:
        raise ValueError("degenerate draws: posterior variance is zero")
    s = m * (1.0 - m) / v - 1.0
    return s - n_current


def stage2_size(ess: float, dc: DesignConfig) -> int:
    """Stage-2 control size: planned remainder minus the borrowing credit,
    truncated so the total control size stays within the design band."""
    if math.isnan(ess):
        raise ValueError("ess must not be NaN")
    bound = 10.0 * dc.n_max
    ess_clipped = min(max(ess, -bound), bound)
    raw = dc.n_max - round(ess_clipped) - dc.n_stage1
    lo = math.ceil(dc.p_min * dc.n_max) - dc.n_stage1
    hi = math.floor(dc.p_max * dc.n_max) - dc.n_stage1
    return max(min(raw, hi), lo, 0)


def treatment_posterior(t: TreatmentSummary) -> tuple[float, float]:
    """Jeffreys-updated Beta parameters for the treatment arm."""
    return (0.5 + t.y_trt, 0.5 + t.n_trt - t.y_trt)


def effect_draws(
    control: PosteriorDraws,
    t: TreatmentSummary,
    n_draws: int,
    seed: int,
) -> np.ndarray:
    """Paired draws of the treatment effect psi_trt - psi_control.

    The arms are modeled independently, so treatment draws come fresh from
    the conjugate Beta posterior and are paired by index with the control
    draws (resampled with replacement only when the counts differ).
    """
    psi_ctl = np.asarray(control.psi_new, dtype=float)
    if len(psi_ctl) == 0:
        raise ValueError("control draws must be non-empty")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    a, b = treatment_posterior(t)
    psi_trt = rng.beta(a, b, n_draws)
    if len(psi_ctl) != n_draws:
        psi_ctl = psi_ctl[rng.integers(0, len(psi_ctl), n_draws)]
    return psi_trt - psi_ctl


def decide(delta_draws: np.ndarray, margin: float, q: float) -> bool:
    """True when the posterior mass above the margin reaches 1 - q.

    The boundary is inclusive; a tiny tolerance absorbs float representation
    of the threshold so an exact 1 - q fraction counts as a pass.
    """
    d = np.asarray(delta_draws, dtype=float)
    if len(d) == 0:
        raise ValueError("delta draws must be non-empty")
    frac = float(np.count_nonzero(d > margin)) / len(d)
    return frac >= (1.0 - q) - 1e-12


def fit_model(
    dataset: Dataset,
    method: str,
    mc: McmcConfig,
    hp: SpxHyperParams | None = None,
    rp: RmapParams | None = None,
) -> PosteriorDraws:
    """Dispatch a control-rate fit by method name."""
    if method == "spx":
        return fit_spx(dataset, hp, mc)
    if method == "rmap":
        return fit_rmap(dataset, rp, mc)
    if method == "independent":
        return fit_independent(dataset.new_trial, mc)
    raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")


def run_adaptive_trial(
    interim_dataset: Dataset,
    dc: DesignConfig,
    mc: McmcConfig,
    method: str = "spx",
    hp: SpxHyperParams | None = None,
    rp: RmapParams | None = None,
    seed: int | None = None,
) -> InterimPlan:
    """Interim step of the two-stage design.

    Fits the chosen model on historical data plus the Stage-1 outcome (the
    new trial entry of ``interim_dataset``), converts the posterior into a
    borrowing credit via moment matching, and sizes Stage 2.
    """
    if interim_dataset.new_trial.n != dc.n_stage1:
        raise ValueError(
            f"interim data has n={interim_dataset.new_trial.n}, expected "
            f"Stage-1 size {dc.n_stage1}"
        )
    if seed is not None:
        mc = mc.with_seed(seed)
    draws = fit_model(interim_dataset, method, mc, hp, rp)
    ess = ess_moment_match(draws, dc.n_stage1)
    n2 = stage2_size(ess, dc)
    return InterimPlan(ess=ess, stage2_n=n2, total_n=dc.n_stage1 + n2)


def complete_trial(
    full_dataset: Dataset,
    treatment: TreatmentSummary,
    dc: DesignConfig,
    mc: McmcConfig,
    method: str = "spx",
    hp: SpxHyperParams | None = None,
    rp: RmapParams | None = None,
    seed: int | None = None,
    effect_seed: int = 0,
    level: float = 0.95,
) -> FinalAnalysis:
    """Final analysis: refit on the complete control data and apply both
    decision rules against the treatment arm."""
    if seed is not None:
        mc = mc.with_seed(seed)
    draws = fit_model(full_dataset, method, mc, hp, rp)
    deltas = effect_draws(draws, treatment, len(draws.psi_new), effect_seed)
    return FinalAnalysis(
        summary=summarize(draws, level),
        rb_weights=draws.rb_weights,
        positive=decide(deltas, 0.0, dc.q_positive),
        clinical=decide(deltas, dc.delta0, dc.q_clinical),
    )
