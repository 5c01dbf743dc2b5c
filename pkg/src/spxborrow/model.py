"""Core model: domain types, link functions, log-densities, and the SPx joint.

The SPx prior mixes three submodels ("experts") for the new trial's logit
response rate: direct historical borrowing (``hist``), covariate regression
(``reg``), and no borrowing (``ind``). This module holds the pure-math
substrate shared by the samplers, the design calculus, and the simulation
harness. Everything here is an immutable value object or a pure function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Order of the latent submodel selector everywhere in the package: rb-weight
# triples, z codes (0, 1, 2), and categorical priors all follow this order.
EXPERTS = ("hist", "reg", "ind")

# Probabilities are kept this far away from 0/1 before any log or logit.
PROB_EPS = 1e-12

_LOG_PI = math.log(math.pi)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def logit(p: float) -> float:
    """Log-odds of a probability strictly inside (0, 1)."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"logit requires p in (0, 1), got {p!r}")
    return math.log(p / (1.0 - p))


def inv_logit(t: float) -> float:
    """Inverse logit, stable for large |t| and clamped to (0, 1).

    The clamp keeps downstream binomial log-pmfs finite when a sampler
    wanders to extreme logit values.
    """
    if t >= 0.0:
        p = 1.0 / (1.0 + math.exp(-t))
    else:
        e = math.exp(t)
        p = e / (1.0 + e)
    return min(max(p, PROB_EPS), 1.0 - PROB_EPS)


def softplus(t: float) -> float:
    """log(1 + exp(t)) without overflow."""
    if t > 0.0:
        return t + math.log1p(math.exp(-t))
    return math.log1p(math.exp(t))


def log_binom_pmf(y: int, n: int, p: float) -> float:
    """Binomial log-pmf; p is clamped away from {0, 1} by the caller contract."""
    if not 0 <= y <= n:
        raise ValueError(f"need 0 <= y <= n, got y={y}, n={n}")
    logc = (
        math.lgamma(n + 1) - math.lgamma(y + 1) - math.lgamma(n - y + 1)
    )
    return logc + y * math.log(p) + (n - y) * math.log1p(-p)


def log_normal_pdf(x: float, mean: float, sd: float) -> float:
    if sd <= 0.0:
        return -math.inf
    zscore = (x - mean) / sd
    return -0.5 * zscore * zscore - math.log(sd) - _HALF_LOG_2PI


def log_cauchy_pdf(x: float, loc: float, scale: float) -> float:
    zscore = (x - loc) / scale
    return -math.log(math.pi * scale * (1.0 + zscore * zscore))


def log_half_cauchy_pdf(x: float, scale: float) -> float:
    """Cauchy(0, scale) truncated to (0, inf); -inf off support."""
    if x <= 0.0:
        return -math.inf
    return math.log(2.0) + log_cauchy_pdf(x, 0.0, scale)


def log_jeffreys_logit_pdf(t: float) -> float:
    """Log-density on the logit scale of p ~ Beta(1/2, 1/2).

    Beta(1/2, 1/2) on the probability scale times the Jacobian dp/dt =
    p(1 - p) leaves 0.5*log(p) + 0.5*log(1 - p) - log(pi); written with
    softplus so it stays finite for any real t.
    """
    return -0.5 * (softplus(t) + softplus(-t)) - _LOG_PI


def log_logistic_pdf(t: float) -> float:
    """Standard Logistic(0, 1) log-density (Uniform(0,1) on the rate scale)."""
    return t - 2.0 * softplus(t)


@dataclass(frozen=True)
class TrialSummary:
    """Control-arm summary of one trial.

    ``x`` is the covariate vector including the leading intercept entry 1.
    ``y``/``n`` may be None for a new trial whose data are not observed yet.
    """

    id: str
    n: int | None
    y: int | None
    x: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.x) < 1 or self.x[0] != 1.0:
            raise ValueError(f"trial {self.id!r}: x[0] must be the intercept 1")
        if any(not math.isfinite(v) for v in self.x):
            raise ValueError(f"trial {self.id!r}: non-finite covariate")
        if self.n is not None and self.n <= 0:
            raise ValueError(f"trial {self.id!r}: n must be positive")
        if self.y is not None:
            if self.n is None:
                raise ValueError(f"trial {self.id!r}: y given without n")
            if not 0 <= self.y <= self.n:
                raise ValueError(
                    f"trial {self.id!r}: need 0 <= y <= n, got y={self.y}, n={self.n}"
                )

    @property
    def observed(self) -> bool:
        return self.y is not None and self.n is not None

    @property
    def rate(self) -> float:
        if not self.observed:
            raise ValueError(f"trial {self.id!r} has no observed outcome")
        return self.y / self.n


@dataclass(frozen=True)
class Dataset:
    """Historical trials plus the new trial (index H+1).

    The new trial's outcome may be absent at design time; its covariates are
    always required. All trials must share one covariate dimension.
    """

    historical: tuple[TrialSummary, ...]
    new_trial: TrialSummary

    def __post_init__(self) -> None:
        if len(self.historical) < 1:
            raise ValueError("need at least one historical trial")
        dim = len(self.new_trial.x)
        for t in self.historical:
            if len(t.x) != dim:
                raise ValueError(
                    f"trial {t.id!r}: covariate dimension {len(t.x)} != {dim}"
                )
            if not t.observed:
                raise ValueError(f"historical trial {t.id!r} must have y and n")

    @property
    def n_historical(self) -> int:
        return len(self.historical)

    @property
    def covariate_dim(self) -> int:
        return len(self.new_trial.x)

    def x_matrix(self) -> np.ndarray:
        """(H+1, p+1) covariate matrix, new trial last."""
        rows = [t.x for t in self.historical] + [self.new_trial.x]
        return np.asarray(rows, dtype=float)

    def with_new_outcome(self, y: int, n: int) -> "Dataset":
        new = TrialSummary(id=self.new_trial.id, n=n, y=y, x=self.new_trial.x)
        return Dataset(historical=self.historical, new_trial=new)


@dataclass(frozen=True)
class SpxHyperParams:
    """Fixed constants of the SPx prior.

    Defaults: prior submodel weights (1/8, 1/8, 3/4) favoring no borrowing,
    truncated-Cauchy scales 0.02 (sigma) and 2.5 (tau), Cauchy(0, 2.5)
    regression coefficients, regression-variance shrink factor 1/25, and the
    borrow-weight kernel base 0.5 with bandwidth 0.05.
    """

    p_hist: float = 1.0 / 8.0
    p_reg: float = 1.0 / 8.0
    p_ind: float = 3.0 / 4.0
    sigma_scale: float = 0.02
    tau_scale: float = 2.5
    beta_scale: float = 2.5
    c: float = 1.0 / 25.0
    w_base: float = 0.5
    w_bandwidth: float = 0.05

    def __post_init__(self) -> None:
        probs = (self.p_hist, self.p_reg, self.p_ind)
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise ValueError("submodel prior probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > 1e-9:
            raise ValueError("submodel prior probabilities must sum to 1")
        for name in ("sigma_scale", "tau_scale", "beta_scale", "c", "w_bandwidth"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.w_base < 1.0:
            raise ValueError("w_base must lie in (0, 1)")

    @property
    def prior_z(self) -> tuple[float, float, float]:
        return (self.p_hist, self.p_reg, self.p_ind)


@dataclass(frozen=True)
class ParameterState:
    """One full latent state of the SPx model.

    ``z`` selects which expert's value feeds the new-trial likelihood.
    Finiteness and selector membership are enforced; nonpositive tau/sigma
    are left to log_joint, which returns -inf off support.
    """

    theta_hist_trials: tuple[float, ...]
    beta: tuple[float, ...]
    tau: float
    sigma: float
    theta_hist: float
    theta_reg: float
    theta_ind: float
    z: str

    def __post_init__(self) -> None:
        if self.z not in EXPERTS:
            raise ValueError(f"z must be one of {EXPERTS}, got {self.z!r}")
        scalars = (self.tau, self.sigma, self.theta_hist, self.theta_reg, self.theta_ind)
        values = list(self.theta_hist_trials) + list(self.beta) + list(scalars)
        if any(not math.isfinite(v) for v in values):
            raise ValueError("non-finite entry in ParameterState")

    @property
    def theta_selected(self) -> float:
        return {
            "hist": self.theta_hist,
            "reg": self.theta_reg,
            "ind": self.theta_ind,
        }[self.z]


@dataclass(frozen=True)
class BorrowWeights:
    """Normalized historical borrow weights and the predicted rates behind them."""

    w: tuple[float, ...]
    pi_tilde: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.pi_tilde) != len(self.w) + 1:
            raise ValueError("pi_tilde must have one more entry than w")
        if any(v < 0.0 for v in self.w):
            raise ValueError("weights must be nonnegative")
        if abs(sum(self.w) - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")


def borrow_weights(
    beta: tuple[float, ...] | np.ndarray, dataset: Dataset, hp: SpxHyperParams
) -> BorrowWeights:
    """Distance-kernel weights of each historical trial for direct borrowing.

    Each trial's weight is proportional to w_base ** (|pi_h - pi_new| /
    w_bandwidth), where pi are the regression-predicted rates under ``beta``.
    Normalization happens in log space so far-apart predictions cannot
    underflow to an all-zero weight vector.
    """
    x = dataset.x_matrix()
    b = np.asarray(beta, dtype=float)
    if b.shape != (x.shape[1],):
        raise ValueError(f"beta has length {b.shape}, expected ({x.shape[1]},)")
    eta = x @ b
    pi = np.array([inv_logit(t) for t in eta])
    log_raw = np.abs(pi[:-1] - pi[-1]) * (math.log(hp.w_base) / hp.w_bandwidth)
    log_raw -= log_raw.max()
    raw = np.exp(log_raw)
    w = raw / raw.sum()
    return BorrowWeights(w=tuple(w.tolist()), pi_tilde=tuple(pi.tolist()))


def weighted_mean(
    weights: BorrowWeights, theta_hist_trials: tuple[float, ...] | np.ndarray
) -> float:
    """Borrow-weighted average of the historical logit rates."""
    theta = np.asarray(theta_hist_trials, dtype=float)
    w = np.asarray(weights.w, dtype=float)
    if theta.shape != w.shape:
        raise ValueError(f"length mismatch: {theta.shape} vs {w.shape}")
    return float(w @ theta)


def log_joint(state: ParameterState, dataset: Dataset, hp: SpxHyperParams) -> float:
    """Unnormalized log posterior of the full SPx hierarchy.

    Sums the historical binomial likelihoods, the covariate-regression prior
    on each historical logit rate, the three expert priors, the variance and
    coefficient hyperpriors, the selector prior, and the new-trial likelihood
    evaluated at the selected expert. Returns -inf when tau or sigma leave
    the support.
    """
    if state.tau <= 0.0 or state.sigma <= 0.0:
        return -math.inf
    if not dataset.new_trial.observed:
        raise ValueError("new trial outcome required for log_joint")
    hist = dataset.historical
    if len(state.theta_hist_trials) != len(hist):
        raise ValueError("theta_hist_trials length must match historical trials")

    x = dataset.x_matrix()
    beta = np.asarray(state.beta, dtype=float)
    eta = x @ beta

    total = 0.0
    for h, trial in enumerate(hist):
        theta_h = state.theta_hist_trials[h]
        total += log_binom_pmf(trial.y, trial.n, inv_logit(theta_h))
        total += log_normal_pdf(theta_h, float(eta[h]), state.tau)

    bw = borrow_weights(state.beta, dataset, hp)
    mu_hist = weighted_mean(bw, state.theta_hist_trials)
    total += log_normal_pdf(state.theta_hist, mu_hist, state.sigma)
    total += log_normal_pdf(
        state.theta_reg, float(eta[-1]), math.sqrt(hp.c) * state.tau
    )
    total += log_jeffreys_logit_pdf(state.theta_ind)
    total += log_half_cauchy_pdf(state.sigma, hp.sigma_scale)
    total += log_half_cauchy_pdf(state.tau, hp.tau_scale)
    for b_i in state.beta:
        total += log_cauchy_pdf(b_i, 0.0, hp.beta_scale)
    prior_z = dict(zip(EXPERTS, hp.prior_z))[state.z]
    total += -math.inf if prior_z == 0.0 else math.log(prior_z)
    total += log_binom_pmf(
        dataset.new_trial.y, dataset.new_trial.n, inv_logit(state.theta_selected)
    )
    return total
