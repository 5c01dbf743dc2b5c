"""Scenario generation, replicated-trial execution, and operating characteristics.

The four benchmark scenarios cross two stress factors: whether the
historical control rates are misleading for the new trial (true rate 45%
far above the historical mean vs 20% inside the historical range), and
whether the group-level covariates predict response rates (a permuted copy
of the covariate table destroys the association while preserving every
trial's outcome).

Replicates are executed as lockstep streams of the vectorized samplers: one
kernel call advances every replicate's chain at once. Each replicate's data
and chain variates come from counter-derived substreams of the master seed
(spawn keys carry a purpose code and the replicate index), so results are
identical regardless of batch composition or execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import samplers
from .design import (
    DesignConfig,
    TreatmentSummary,
    decide,
    effect_draws,
    ess_moment_match,
    stage2_size,
)
from .inference import McmcConfig, PosteriorDraws, RmapParams
from .model import Dataset, SpxHyperParams, TrialSummary, logit

# Spawn-key purpose codes for per-replicate substreams.
_KEY_DATA = 0
_KEY_INTERIM = 1
_KEY_FINAL = 2
_KEY_TREATMENT = 3
_KEY_EFFECT = 4

# Scanned so the realized historical table hits the documented calibration
# bands (rate mean/range, covariate balance, permuted decorrelation) and the
# predictive-scenario covariate solve stays inside the historical support.
DEFAULT_HIST_SEED = 20260906

CRED_LEVEL = 0.95

# True regression used by the generator: intercept, the binary covariate,
# then the continuous covariates in order. Only the first `used_covariates`
# columns are shown to the model; the rest act as unexplained variation.
_GEN_INTERCEPT = -1.35
_GEN_BINARY_COEF = 0.9
_GEN_CONT_COEFS = (0.35, 0.18, 0.12, -0.10, 0.08)
_GEN_NOISE_SD = 0.08
_GEN_BINARY_P = 0.6


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario's generative settings."""

    covariates_predictive: bool
    hist_misleading: bool
    n_hist_trials: int = 15
    hist_size_range: tuple[int, int] = (40, 200)
    n_covariates: int = 6
    used_covariates: int = 2
    true_new_rate: float | None = None
    true_effect: float = 0.0
    n_trt: int | None = None
    target_hist_mean: float = 0.23
    target_hist_range: tuple[float, float] = (0.12, 0.38)
    hist_seed: int = DEFAULT_HIST_SEED

    def __post_init__(self) -> None:
        if self.true_new_rate is None:
            object.__setattr__(
                self, "true_new_rate", 0.45 if self.hist_misleading else 0.20
            )
        if self.n_hist_trials < 1:
            raise ValueError("need at least one historical trial")
        if self.hist_size_range[0] > self.hist_size_range[1]:
            raise ValueError("hist_size_range must be ordered")
        if not 1 <= self.used_covariates <= self.n_covariates:
            raise ValueError("need 1 <= used_covariates <= n_covariates")
        if not 0.0 < self.true_new_rate < 1.0:
            raise ValueError("true_new_rate must lie in (0, 1)")
        if not 0.0 < self.target_hist_range[0] < self.target_hist_range[1] < 1.0:
            raise ValueError("target_hist_range must be an ordered pair in (0, 1)")
        if not 0.0 <= self.true_new_rate + self.true_effect <= 1.0:
            raise ValueError("true treatment rate must lie in [0, 1]")

    @property
    def scenario_id(self) -> int:
        """1=ideal, 2=misleading history, 3=useless covariates, 4=both."""
        return 1 + (2 if not self.covariates_predictive else 0) + (
            1 if self.hist_misleading else 0
        )

    @classmethod
    def from_scenario(cls, scenario_id: int, **overrides) -> "ScenarioConfig":
        if scenario_id not in (1, 2, 3, 4):
            raise ValueError("scenario_id must be 1..4")
        return cls(
            covariates_predictive=scenario_id in (1, 2),
            hist_misleading=scenario_id in (2, 4),
            **overrides,
        )


@dataclass(frozen=True)
class ReplicateRecord:
    """One simulated trial's outcome under one method and design."""

    replicate: int
    size: int
    post_mean: float
    error: float
    covered: bool
    width: float
    positive: bool
    clinical: bool
    p_hist: float
    p_reg: float
    p_ind: float
    ess: float | None = None


@dataclass(frozen=True)
class OperatingCharacteristics:
    """Frequentist performance aggregated over replicates."""

    mean_size: float
    rmse: float
    coverage: float
    width: float
    type1: float
    power: float
    mean_rb_weights: tuple[float, float, float]
    n_replicates: int

    def __post_init__(self) -> None:
        for name in ("coverage", "type1", "power"):
            v = getattr(self, name)
            if not 0.0 <= v <= 100.0:
                raise ValueError(f"{name} must be a percentage in [0, 100]")
        if self.rmse < 0.0 or self.width < 0.0:
            raise ValueError("rmse and width must be nonnegative")


def gen_historical(sc: ScenarioConfig) -> Dataset:
    """Build the fixed historical table for a scenario.

    Trial sizes are uniform on the configured range; covariates are one
    binary column plus standard-normal continuous columns. True logit rates
    follow a fixed regression plus noise, then an affine rescaling on the
    rate scale pins the true-rate span to the configured range. Outcomes
    are binomial at those rates. When covariates are not predictive, the
    covariate rows are permuted across trials after rates are drawn, so the
    same trials lose their covariate association. The whole table is a
    deterministic function of ``hist_seed`` and is reused across replicates.
    """
    h = sc.n_hist_trials
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(sc.hist_seed)))
    sizes = rng.integers(sc.hist_size_range[0], sc.hist_size_range[1] + 1, h)
    binary = rng.binomial(1, _GEN_BINARY_P, h).astype(float)
    cont = rng.standard_normal((h, sc.n_covariates - 1))
    coefs = np.zeros(sc.n_covariates - 1)
    take = min(len(_GEN_CONT_COEFS), sc.n_covariates - 1)
    coefs[:take] = _GEN_CONT_COEFS[:take]
    score = (
        _GEN_INTERCEPT
        + _GEN_BINARY_COEF * binary
        + cont @ coefs
        + rng.normal(0.0, _GEN_NOISE_SD, h)
    )
    raw = 1.0 / (1.0 + np.exp(-score))
    lo, hi = sc.target_hist_range
    rates = lo + (raw - raw.min()) * (hi - lo) / (raw.max() - raw.min())
    y = rng.binomial(sizes, rates)

    covariates = np.column_stack([binary, cont])
    if not sc.covariates_predictive:
        covariates = covariates[rng.permutation(h)]

    visible = covariates[:, : sc.used_covariates].copy()
    for j in range(1, sc.used_covariates):  # column 0 is the binary one
        col = visible[:, j]
        sd = col.std()
        visible[:, j] = (col - col.mean()) / sd if sd > 0 else 0.0

    # New-trial covariates: the historical covariate mean, except that in
    # predictive scenarios the first continuous covariate is solved so the
    # fitted covariate-response relation predicts the true new rate. This is
    # what makes the regression mechanism genuinely applicable when the
    # unadjusted historical rates are misleading.
    x_new_vis = visible.mean(axis=0)
    if sc.covariates_predictive and sc.used_covariates >= 2:
        design_mat = np.column_stack([np.ones(h), visible])
        theta_true = np.log(rates / (1.0 - rates))
        coef, *_ = np.linalg.lstsq(design_mat, theta_true, rcond=None)
        slope = coef[2]
        if abs(slope) > 1e-6:
            base = coef[0] + float(coef[1:] @ x_new_vis) - slope * x_new_vis[1]
            v = (logit(sc.true_new_rate) - base) / slope
            x_new_vis = x_new_vis.copy()
            x_new_vis[1] = float(np.clip(v, -4.0, 4.0))

    x_new = np.concatenate([[1.0], x_new_vis])
    historical = tuple(
        TrialSummary(
            id=f"H{i + 1:02d}",
            n=int(sizes[i]),
            y=int(y[i]),
            x=(1.0, *visible[i].tolist()),
        )
        for i in range(h)
    )
    new_trial = TrialSummary(id="new", n=None, y=None, x=tuple(x_new.tolist()))
    return Dataset(historical=historical, new_trial=new_trial)


def gen_new_trial(
    rate: float,
    n: int,
    x_new: tuple[float, ...],
    seed: int | np.random.SeedSequence,
) -> TrialSummary:
    """Simulate one new-trial control arm at the given true rate."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError("rate must lie in [0, 1]")
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.PCG64(ss))
    return TrialSummary(id="new", n=n, y=int(rng.binomial(n, rate)), x=x_new)


def _stream_seqs(
    master_seed: int, purpose: int, indices: list[int], chains: int
) -> list[np.random.SeedSequence]:
    return [
        np.random.SeedSequence(master_seed, spawn_key=(purpose, i, c))
        for i in indices
        for c in range(chains)
    ]


def _fit_streams(
    method: str,
    dataset: Dataset,
    y_new: np.ndarray,
    n_new: np.ndarray,
    mc: McmcConfig,
    hp: SpxHyperParams,
    rp: RmapParams,
    seed_seqs: list[np.random.SeedSequence],
) -> samplers.StreamResult:
    hist_y = np.array([t.y for t in dataset.historical], dtype=float)
    hist_n = np.array([t.n for t in dataset.historical], dtype=float)
    if method == "spx":
        return samplers.spx_streams(
            hist_y,
            hist_n,
            dataset.x_matrix(),
            y_new,
            n_new,
            hp,
            burn_in=mc.burn_in,
            samples=mc.samples,
            thin=mc.thin,
            step_sizes=mc.step_sizes.as_dict(),
            adapt=mc.adapt_burnin,
            seed_seqs=seed_seqs,
        )
    if method == "rmap":
        return samplers.rmap_streams(
            hist_y,
            hist_n,
            y_new,
            n_new,
            mix_weight=rp.mix_weight,
            mu_prior_sd=rp.mu_prior_sd,
            tau_prior_scale=rp.tau_prior_scale,
            burn_in=mc.burn_in,
            samples=mc.samples,
            thin=mc.thin,
            step_sizes=mc.step_sizes.as_dict(),
            adapt=mc.adapt_burnin,
            seed_seqs=seed_seqs,
        )
    if method == "independent":
        n_streams = len(seed_seqs)
        psi = np.empty((n_streams, mc.samples))
        for s, ss in enumerate(seed_seqs):
            gen = np.random.Generator(np.random.PCG64(ss))
            psi[s] = gen.beta(1.0 + y_new[s], 1.0 + n_new[s] - y_new[s], mc.samples)
        psi = np.clip(psi, 1e-12, 1.0 - 1e-12)
        rb = np.zeros((n_streams, 3))
        rb[:, 2] = 1.0
        return samplers.StreamResult(
            psi=psi,
            z=np.full(psi.shape, 2, dtype=np.int8),
            rb=rb,
            accept={},
        )
    raise ValueError(f"unknown method {method!r}")


def _stream_draws(result: samplers.StreamResult, chains: int, rep: int) -> PosteriorDraws:
    """Concatenate one replicate's chains into a PosteriorDraws."""
    rows = slice(rep * chains, (rep + 1) * chains)
    rb = result.rb[rows].mean(axis=0)
    rb = rb / rb.sum()
    return PosteriorDraws(
        psi_new=result.psi[rows].reshape(-1),
        z_draws=result.z[rows].reshape(-1),
        rb_weights=tuple(rb.tolist()),
    )


def run_replicates(
    sc: ScenarioConfig,
    method: str,
    design: str,
    dc: DesignConfig,
    mc: McmcConfig,
    n_replicates: int,
    master_seed: int,
    hp: SpxHyperParams | None = None,
    rp: RmapParams | None = None,
) -> list[ReplicateRecord]:
    """Simulate ``n_replicates`` new trials against the scenario's fixed
    historical table and analyze each with the chosen method and design."""
    if design not in ("fixed", "adaptive"):
        raise ValueError("design must be 'fixed' or 'adaptive'")
    if n_replicates < 1:
        raise ValueError("need at least one replicate")
    hp = hp or SpxHyperParams()
    rp = rp or RmapParams()
    dataset = gen_historical(sc)
    x_new = dataset.new_trial.x
    rate = sc.true_new_rate
    n_trt = sc.n_trt if sc.n_trt is not None else dc.n_max
    trt_rate = rate + sc.true_effect
    reps = list(range(n_replicates))

    if design == "fixed":
        sizes = np.full(n_replicates, dc.n_max)
        y_full = np.array(
            [
                gen_new_trial(
                    rate,
                    dc.n_max,
                    x_new,
                    np.random.SeedSequence(master_seed, spawn_key=(_KEY_DATA, i, 0)),
                ).y
                for i in reps
            ],
            dtype=float,
        )
        ess_vals: list[float | None] = [None] * n_replicates
    else:
        y1 = np.array(
            [
                gen_new_trial(
                    rate,
                    dc.n_stage1,
                    x_new,
                    np.random.SeedSequence(master_seed, spawn_key=(_KEY_DATA, i, 0)),
                ).y
                for i in reps
            ],
            dtype=float,
        )
        interim = _fit_streams(
            method,
            dataset,
            y1,
            np.full(n_replicates, float(dc.n_stage1)),
            mc,
            hp,
            rp,
            _stream_seqs(master_seed, _KEY_INTERIM, reps, mc.chains),
        )
        ess_vals = []
        stage2 = np.empty(n_replicates, dtype=int)
        for i in reps:
            draws_i = _stream_draws(interim, mc.chains, i)
            ess = ess_moment_match(draws_i, dc.n_stage1)
            ess_vals.append(ess)
            stage2[i] = stage2_size(ess, dc)
        y2 = np.zeros(n_replicates)
        for i in reps:
            if stage2[i] > 0:
                y2[i] = gen_new_trial(
                    rate,
                    int(stage2[i]),
                    x_new,
                    np.random.SeedSequence(master_seed, spawn_key=(_KEY_DATA, i, 1)),
                ).y
        sizes = dc.n_stage1 + stage2
        y_full = y1 + y2

    final = _fit_streams(
        method,
        dataset,
        y_full,
        sizes.astype(float),
        mc,
        hp,
        rp,
        _stream_seqs(master_seed, _KEY_FINAL, reps, mc.chains),
    )

    records = []
    alpha = (1.0 - CRED_LEVEL) / 2.0
    for i in reps:
        draws_i = _stream_draws(final, mc.chains, i)
        psi = draws_i.psi_new
        post_mean = float(psi.mean())
        lower, upper = np.quantile(psi, [alpha, 1.0 - alpha])
        trt_rng = np.random.Generator(
            np.random.PCG64(
                np.random.SeedSequence(master_seed, spawn_key=(_KEY_TREATMENT, i))
            )
        )
        y_trt = int(trt_rng.binomial(n_trt, trt_rate))
        effect_seed = int(
            np.random.SeedSequence(master_seed, spawn_key=(_KEY_EFFECT, i)).generate_state(1)[0]
        )
        deltas = effect_draws(
            draws_i, TreatmentSummary(y_trt=y_trt, n_trt=n_trt), len(psi), effect_seed
        )
        records.append(
            ReplicateRecord(
                replicate=i,
                size=int(sizes[i]),
                post_mean=post_mean,
                error=post_mean - rate,
                covered=bool(lower <= rate <= upper),
                width=float(upper - lower),
                positive=decide(deltas, 0.0, dc.q_positive),
                clinical=decide(deltas, dc.delta0, dc.q_clinical),
                p_hist=draws_i.rb_weights[0],
                p_reg=draws_i.rb_weights[1],
                p_ind=draws_i.rb_weights[2],
                ess=ess_vals[i],
            )
        )
    return records


def aggregate(records: list[ReplicateRecord]) -> OperatingCharacteristics:
    """Reduce per-replicate records to operating characteristics."""
    if not records:
        raise ValueError("no replicates to aggregate")
    records = sorted(records, key=lambda r: r.replicate)
    errors = np.array([r.error for r in records])
    rb = np.array([[r.p_hist, r.p_reg, r.p_ind] for r in records]).mean(axis=0)
    return OperatingCharacteristics(
        mean_size=float(np.mean([r.size for r in records])),
        rmse=float(np.sqrt(np.mean(errors**2))),
        coverage=100.0 * float(np.mean([r.covered for r in records])),
        width=float(np.mean([r.width for r in records])),
        type1=100.0 * float(np.mean([r.positive for r in records])),
        power=100.0 * float(np.mean([r.clinical for r in records])),
        mean_rb_weights=tuple(rb.tolist()),
        n_replicates=len(records),
    )


def run_scenario(
    sc: ScenarioConfig,
    method: str,
    design: str,
    dc: DesignConfig,
    mc: McmcConfig,
    n_replicates: int,
    master_seed: int,
    hp: SpxHyperParams | None = None,
    rp: RmapParams | None = None,
) -> OperatingCharacteristics:
    """Replicated-trial operating characteristics for one scenario/method."""
    return aggregate(
        run_replicates(sc, method, design, dc, mc, n_replicates, master_seed, hp, rp)
    )


@dataclass(frozen=True)
class SweepPoint:
    """One hypothetical interim outcome and the model's reaction to it."""

    observed_rate: float
    y: int
    p_hist: float
    p_reg: float
    p_ind: float
    ess: float
    stage2_n: int
    total_n: int


def sweep_observed_rate(
    dataset: Dataset,
    method: str,
    rates: list[float],
    n_fixed: int,
    dc: DesignConfig,
    mc: McmcConfig,
    seed: int,
    hp: SpxHyperParams | None = None,
    rp: RmapParams | None = None,
) -> list[SweepPoint]:
    """Refit the model over a grid of hypothetical new-trial outcomes.

    Each grid rate r becomes a new-trial outcome y = round(r * n_fixed); the
    fit's submodel probabilities and the Stage-2 size the design would pick
    are recorded for plotting.
    """
    if dc.n_stage1 != n_fixed:
        raise ValueError("dc.n_stage1 must equal n_fixed for the interim sweep")
    hp = hp or SpxHyperParams()
    rp = rp or RmapParams()
    ys = np.array([round(r * n_fixed) for r in rates], dtype=float)
    ns = np.full(len(rates), float(n_fixed))
    seqs = _stream_seqs(seed, 0, list(range(len(rates))), mc.chains)
    result = _fit_streams(method, dataset, ys, ns, mc, hp, rp, seqs)
    points = []
    for i, r in enumerate(rates):
        draws_i = _stream_draws(result, mc.chains, i)
        ess = ess_moment_match(draws_i, n_fixed)
        n2 = stage2_size(ess, dc)
        points.append(
            SweepPoint(
                observed_rate=float(r),
                y=int(ys[i]),
                p_hist=draws_i.rb_weights[0],
                p_reg=draws_i.rb_weights[1],
                p_ind=draws_i.rb_weights[2],
                ess=float(ess),
                stage2_n=n2,
                total_n=n_fixed + n2,
            )
        )
    return points
