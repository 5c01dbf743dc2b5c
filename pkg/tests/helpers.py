"""Shared test fixtures and independent oracles.

Oracles here deliberately re-derive quantities through scipy or direct
Monte Carlo rather than through the library's own code paths.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats
from scipy.special import expit

from spxborrow.model import Dataset, SpxHyperParams, TrialSummary


def small_dataset(y_new: int | None = 22, n_new: int | None = 75) -> Dataset:
    """Five historical trials with one covariate, plus a new trial."""
    hist = tuple(
        TrialSummary(id=f"t{i}", n=n, y=y, x=(1.0, xv))
        for i, (n, y, xv) in enumerate(
            [(100, 24, 0.3), (80, 18, -0.5), (120, 30, 0.8), (60, 12, -1.0), (150, 36, 0.1)]
        )
    )
    new = TrialSummary(id="new", n=n_new, y=y_new, x=(1.0, 0.0))
    return Dataset(historical=hist, new_trial=new)


def tiny_dataset() -> Dataset:
    """One historical trial of two patients: the smallest legal instance."""
    hist = (TrialSummary(id="t0", n=2, y=1, x=(1.0,)),)
    new = TrialSummary(id="new", n=2, y=1, x=(1.0,))
    return Dataset(historical=hist, new_trial=new)


def oracle_log_joint(state, dataset: Dataset, hp: SpxHyperParams) -> float:
    """Term-by-term scipy re-implementation of the unnormalized log posterior."""
    x = dataset.x_matrix()
    beta = np.asarray(state.beta)
    eta = x @ beta
    theta = np.asarray(state.theta_hist_trials)
    total = 0.0
    for h, t in enumerate(dataset.historical):
        total += stats.binom.logpmf(t.y, t.n, expit(theta[h]))
        total += stats.norm.logpdf(theta[h], eta[h], state.tau)
    pi = expit(eta)
    raw = hp.w_base ** (np.abs(pi[:-1] - pi[-1]) / hp.w_bandwidth)
    w = raw / raw.sum()
    mu_hist = float(w @ theta)
    total += stats.norm.logpdf(state.theta_hist, mu_hist, state.sigma)
    total += stats.norm.logpdf(state.theta_reg, eta[-1], math.sqrt(hp.c) * state.tau)
    p_ind = expit(state.theta_ind)
    total += stats.beta.logpdf(p_ind, 0.5, 0.5) + math.log(p_ind) + math.log(1 - p_ind)
    total += stats.halfcauchy.logpdf(state.sigma, scale=hp.sigma_scale)
    total += stats.halfcauchy.logpdf(state.tau, scale=hp.tau_scale)
    total += stats.cauchy.logpdf(beta, 0.0, hp.beta_scale).sum()
    total += math.log(dict(zip(("hist", "reg", "ind"), hp.prior_z))[state.z])
    theta_sel = {"hist": state.theta_hist, "reg": state.theta_reg, "ind": state.theta_ind}[state.z]
    total += stats.binom.logpmf(
        dataset.new_trial.y, dataset.new_trial.n, expit(theta_sel)
    )
    return float(total)


def sample_spx_prior(
    dataset: Dataset, hp: SpxHyperParams, n: int, seed: int
) -> dict[str, np.ndarray]:
    """Direct iid draws from the full SPx prior (no MCMC involved)."""
    rng = np.random.default_rng(seed)
    x = dataset.x_matrix()
    n_hist = len(dataset.historical)
    tau = np.abs(stats.cauchy.rvs(scale=hp.tau_scale, size=n, random_state=rng))
    sigma = np.abs(stats.cauchy.rvs(scale=hp.sigma_scale, size=n, random_state=rng))
    beta = stats.cauchy.rvs(scale=hp.beta_scale, size=(n, x.shape[1]), random_state=rng)
    eta = beta @ x.T
    theta = eta[:, :n_hist] + tau[:, None] * rng.standard_normal((n, n_hist))
    pi = expit(np.clip(eta, -700, 700))
    log_w = np.abs(pi[:, :n_hist] - pi[:, n_hist:]) * (
        math.log(hp.w_base) / hp.w_bandwidth
    )
    log_w -= log_w.max(axis=1, keepdims=True)
    w = np.exp(log_w)
    w /= w.sum(axis=1, keepdims=True)
    mu_hist = (w * theta).sum(axis=1)
    th_hist = mu_hist + sigma * rng.standard_normal(n)
    th_reg = eta[:, n_hist] + math.sqrt(hp.c) * tau * rng.standard_normal(n)
    p_ind = rng.beta(0.5, 0.5, n)
    th_ind = np.log(p_ind / (1.0 - p_ind))
    z = rng.choice(3, size=n, p=hp.prior_z)
    th_sel = np.where(z == 0, th_hist, np.where(z == 1, th_reg, th_ind))
    return {
        "tau": tau,
        "sigma": sigma,
        "beta0": beta[:, 0],
        "psi": expit(np.clip(th_sel, -700, 700)),
        "theta_hist": th_hist,
    }


def sample_rmap_prior(
    mix_weight: float, mu_prior_sd: float, tau_prior_scale: float, n: int, seed: int
) -> dict[str, np.ndarray]:
    """Direct iid draws from the robust-MAP prior."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, mu_prior_sd, n)
    tau = np.abs(stats.cauchy.rvs(scale=tau_prior_scale, size=n, random_state=rng))
    on_map = rng.random(n) < mix_weight
    th = np.where(
        on_map,
        mu + tau * rng.standard_normal(n),
        stats.logistic.rvs(size=n, random_state=rng),
    )
    return {"mu": mu, "tau": tau, "psi": expit(np.clip(th, -700, 700))}
