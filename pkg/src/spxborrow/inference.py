"""Posterior samplers and summaries for the SPx, RMAP, and independent models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import samplers
from .model import (
    EXPERTS,
    PROB_EPS,
    Dataset,
    ParameterState,
    SpxHyperParams,
    TrialSummary,
    softplus,
)


@dataclass(frozen=True)
class StepSizes:
    """Initial random-walk scales per update block (adapted during burn-in)."""

    theta: float = 1.0
    beta: float = 1.0
    log_tau: float = 0.8
    log_sigma: float = 1.5
    theta_hist: float = 1.5
    theta_reg: float = 1.5

    def __post_init__(self) -> None:
        for name in ("theta", "beta", "log_tau", "log_sigma", "theta_hist", "theta_reg"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"step size {name} must be positive")

    def as_dict(self) -> dict[str, float]:
        return {
            "theta": self.theta,
            "beta": self.beta,
            "log_tau": self.log_tau,
            "log_sigma": self.log_sigma,
            "theta_hist": self.theta_hist,
            "theta_reg": self.theta_reg,
        }


@dataclass(frozen=True)
class McmcConfig:
    """Sampler budget and seeding.

    The default is the analysis profile (4 chains, 10k burn-in, 10k retained
    each); ``fast()`` is the single-chain profile used for replicated
    simulations. Chain c draws its variates from a substream derived from
    (seed, c), so results are bit-reproducible for a given config.
    """

    chains: int = 4
    burn_in: int = 10_000
    samples: int = 10_000
    thin: int = 1
    seed: int = 0
    step_sizes: StepSizes = field(default_factory=StepSizes)
    adapt_burnin: bool = True

    def __post_init__(self) -> None:
        if self.chains < 1:
            raise ValueError("chains must be >= 1")
        if self.samples < 1:
            raise ValueError("samples must be >= 1")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")

    @classmethod
    def fast(cls, seed: int = 0) -> "McmcConfig":
        """Single-chain profile for replicated simulation runs."""
        return cls(chains=1, burn_in=2_000, samples=2_000, thin=1, seed=seed)

    def with_seed(self, seed: int) -> "McmcConfig":
        return replace(self, seed=seed)

    @property
    def n_retained(self) -> int:
        return self.chains * self.samples


@dataclass(frozen=True)
class RmapParams:
    """Robust-MAP prior constants.

    The mixture weight follows the 50-50 default; the mu / tau hyperpriors
    are weakly-informative choices on the logit scale and are exposed for
    sensitivity analysis.
    """

    mix_weight: float = 0.5
    mu_prior_sd: float = 10.0
    tau_prior_scale: float = 1.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.mix_weight <= 1.0:
            raise ValueError("mix_weight must lie in [0, 1]")
        if self.mu_prior_sd <= 0.0 or self.tau_prior_scale <= 0.0:
            raise ValueError("prior scales must be positive")


@dataclass(frozen=True)
class PosteriorDraws:
    """Retained posterior draws of the new trial's control rate.

    ``rb_weights`` are Rao-Blackwellized submodel probabilities in the
    (hist, reg, ind) order; ``z_draws`` codes the selector the same way.
    """

    psi_new: np.ndarray
    z_draws: np.ndarray
    rb_weights: tuple[float, float, float]
    full_params: dict[str, np.ndarray] | None = None
    diagnostics: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if len(self.psi_new) == 0:
            raise ValueError("psi_new must be non-empty")
        if len(self.psi_new) != len(self.z_draws):
            raise ValueError("psi_new and z_draws lengths differ")
        if abs(sum(self.rb_weights) - 1.0) > 1e-10:
            raise ValueError("rb_weights must sum to 1")
        if any(w < 0.0 or w > 1.0 for w in self.rb_weights):
            raise ValueError("rb_weights must lie in [0, 1]")
        psi = np.asarray(self.psi_new)
        if psi.min() <= 0.0 or psi.max() >= 1.0:
            raise ValueError("psi_new draws must lie strictly inside (0, 1)")


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    variance: float
    level: float
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower


def _chain_seed_seqs(seed: int, chains: int) -> list[np.random.SeedSequence]:
    return [np.random.SeedSequence(seed, spawn_key=(c,)) for c in range(chains)]


def _require_observed(dataset: Dataset) -> None:
    if not dataset.new_trial.observed:
        raise ValueError("new trial must have observed y and n to be fit")


def _collect(result: samplers.StreamResult) -> tuple[np.ndarray, np.ndarray, tuple, dict]:
    psi = result.psi.reshape(-1)
    z = result.z.reshape(-1)
    rb = result.rb.mean(axis=0)
    rb = rb / rb.sum()
    diagnostics = {
        name: float(np.nanmean(rates)) if np.any(np.isfinite(rates)) else math.nan
        for name, rates in result.accept.items()
    }
    return psi, z, tuple(rb.tolist()), diagnostics


def _flatten_params(params: dict[str, np.ndarray] | None) -> dict[str, np.ndarray] | None:
    if params is None:
        return None
    out = {}
    for name, arr in params.items():
        if arr.ndim == 3:
            out[name] = arr.reshape(-1, arr.shape[2])
        else:
            out[name] = arr.reshape(-1)
    return out


def fit_spx(
    dataset: Dataset,
    hp: SpxHyperParams | None = None,
    mc: McmcConfig | None = None,
    *,
    likelihood: str = "full",
    keep_params: bool = False,
) -> PosteriorDraws:
    """Sample the SPx posterior by Metropolis-within-Gibbs.

    ``likelihood`` selects which binomial terms enter: "full" (default),
    "historical" (new-trial term off), or "none" (all off — the
    prior-reproduction mode used to validate the kernel).
    """
    hp = hp or SpxHyperParams()
    mc = mc or McmcConfig()
    if likelihood == "full":
        _require_observed(dataset)
    hist_y = np.array([t.y for t in dataset.historical], dtype=float)
    hist_n = np.array([t.n for t in dataset.historical], dtype=float)
    new = dataset.new_trial
    y_new = np.full(mc.chains, float(new.y) if new.y is not None else 0.0)
    n_new = np.full(mc.chains, float(new.n) if new.n is not None else 0.0)
    result = samplers.spx_streams(
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
        seed_seqs=_chain_seed_seqs(mc.seed, mc.chains),
        likelihood=likelihood,
        keep_params=keep_params,
    )
    psi, z, rb, diagnostics = _collect(result)
    return PosteriorDraws(
        psi_new=psi,
        z_draws=z,
        rb_weights=rb,
        full_params=_flatten_params(result.params),
        diagnostics=diagnostics,
    )


def update_z(
    state: ParameterState,
    new_trial: TrialSummary,
    hp: SpxHyperParams,
    rng: np.random.Generator,
) -> tuple[str, tuple[float, float, float]]:
    """Draw the submodel selector from its exact categorical conditional.

    Each expert's probability is its prior weight times the new-trial
    binomial likelihood at that expert's current logit rate, normalized in
    log space so simultaneous underflow cannot produce NaN.
    """
    if not new_trial.observed:
        raise ValueError("new trial outcome required to update z")
    y, n = new_trial.y, new_trial.n
    thetas = (state.theta_hist, state.theta_reg, state.theta_ind)
    log_q = [
        (-math.inf if p_k == 0.0 else math.log(p_k) + y * t - n * softplus(t))
        for p_k, t in zip(hp.prior_z, thetas)
    ]
    top = max(log_q)
    raw = [math.exp(v - top) for v in log_q]
    total = sum(raw)
    q = tuple(v / total for v in raw)
    u = rng.random()
    idx = 0 if u < q[0] else (1 if u < q[0] + q[1] else 2)
    return EXPERTS[idx], q


def fit_rmap(
    dataset: Dataset,
    rp: RmapParams | None = None,
    mc: McmcConfig | None = None,
    *,
    likelihood: str = "full",
    keep_params: bool = False,
) -> PosteriorDraws:
    """Sample the robust-MAP posterior (covariates ignored by construction).

    The rb triple reports (MAP-component probability, 0, robust-component
    probability) so downstream consumers can treat it like the SPx triple.
    """
    rp = rp or RmapParams()
    mc = mc or McmcConfig()
    if likelihood == "full":
        _require_observed(dataset)
    elif likelihood == "historical":
        raise ValueError("rmap supports likelihood 'full' or 'none'")
    hist_y = np.array([t.y for t in dataset.historical], dtype=float)
    hist_n = np.array([t.n for t in dataset.historical], dtype=float)
    new = dataset.new_trial
    y_new = np.full(mc.chains, float(new.y) if new.y is not None else 0.0)
    n_new = np.full(mc.chains, float(new.n) if new.n is not None else 0.0)
    result = samplers.rmap_streams(
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
        seed_seqs=_chain_seed_seqs(mc.seed, mc.chains),
        likelihood=likelihood,
        keep_params=keep_params,
    )
    psi, z, rb, diagnostics = _collect(result)
    return PosteriorDraws(
        psi_new=psi,
        z_draws=z,
        rb_weights=rb,
        full_params=_flatten_params(result.params),
        diagnostics=diagnostics,
    )


def fit_independent(
    new_trial: TrialSummary, mc: McmcConfig | None = None
) -> PosteriorDraws:
    """Exact posterior under the no-borrowing model.

    Logistic(0, 1) on the logit scale is Uniform(0, 1) on the rate scale, so
    the posterior is Beta(1 + y, 1 + n - y) and is sampled directly.
    """
    mc = mc or McmcConfig()
    if not new_trial.observed:
        raise ValueError("new trial must have observed y and n")
    rng = np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(mc.seed, spawn_key=(0,)))
    )
    n_draws = mc.n_retained
    psi = rng.beta(1.0 + new_trial.y, 1.0 + new_trial.n - new_trial.y, n_draws)
    psi = np.clip(psi, PROB_EPS, 1.0 - PROB_EPS)
    return PosteriorDraws(
        psi_new=psi,
        z_draws=np.full(n_draws, 2, dtype=np.int8),
        rb_weights=(0.0, 0.0, 1.0),
        diagnostics={},
    )


def summarize(draws: PosteriorDraws, level: float = 0.95) -> PosteriorSummary:
    """Mean, variance, and equal-tailed credible interval of the rate draws."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    psi = np.asarray(draws.psi_new, dtype=float)
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(psi, [alpha, 1.0 - alpha])
    return PosteriorSummary(
        mean=float(psi.mean()),
        variance=float(psi.var(ddof=1)) if len(psi) > 1 else 0.0,
        level=level,
        lower=float(lower),
        upper=float(upper),
    )
