"""Vectorized Metropolis-within-Gibbs kernels for the SPx and RMAP models.

Both samplers advance S independent streams in lockstep, where a stream is
one MCMC chain (single fit) or one simulated replicate (harness). All state
lives in (S,)-shaped arrays and every block update is a numpy expression, so
one kernel call prices hundreds of streams at once on a single core.

Randomness contract: stream s consumes only variates pre-generated from its
own ``SeedSequence``, with a fixed per-iteration layout (a block draws its
variates every iteration whether or not a branch uses them). A stream's
draws therefore never depend on which other streams are batched with it, on
batch size, or on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import PROB_EPS, SpxHyperParams

# Iterations per variate refill; bounds the resident variate buffer.
_BATCH = 256
# Probability of proposing from the prior instead of a random walk for the
# heavy-tailed blocks (beta, tau, sigma); keeps their Cauchy tails mixing.
_PRIOR_MIX = 0.10
_TARGET_ACCEPT = 0.44
_ADAPT_EVERY = 100
_STEP_MIN = 1e-3
_STEP_MAX = 1e2


@dataclass
class StreamResult:
    """Per-stream retained draws from one kernel run."""

    psi: np.ndarray  # (S, T) new-trial control-rate draws
    z: np.ndarray  # (S, T) selector codes, 0=hist 1=reg 2=ind
    rb: np.ndarray  # (S, 3) averaged exact selector conditionals
    accept: dict[str, np.ndarray]  # block -> (S,) post-burn-in acceptance
    params: dict[str, np.ndarray] | None = None


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return np.clip(out, PROB_EPS, 1.0 - PROB_EPS)


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _log1p_sq(x: np.ndarray, scale: float) -> np.ndarray:
    z = x / scale
    return np.log1p(z * z)


class _VariateTape:
    """Per-stream pre-generated variates, refilled in fixed-size batches.

    ``normals``/``uniforms`` are laid out (iteration, row, stream) so a block
    reads one contiguous (S,) row per iteration. Beta streams cover the two
    parameter pairs the no-borrowing expert can need (prior and conjugate).
    """

    def __init__(
        self,
        seed_seqs: list[np.random.SeedSequence],
        n_normals: int,
        n_uniforms: int,
        beta_params: tuple[np.ndarray, np.ndarray] | None,
        n_init_normals: int,
    ):
        self.gens = [np.random.Generator(np.random.PCG64(ss)) for ss in seed_seqs]
        self.cn = n_normals
        self.cu = n_uniforms
        self.beta_params = beta_params
        self.init_normals = np.stack(
            [g.standard_normal(n_init_normals) for g in self.gens], axis=-1
        )
        self.init_uniform = np.stack([g.random(1)[0] for g in self.gens], axis=-1)
        self.cursor = _BATCH  # force refill on first use

    def refill(self) -> None:
        normals = [g.standard_normal((_BATCH, self.cn)) for g in self.gens]
        uniforms = [g.random((_BATCH, self.cu)) for g in self.gens]
        self.normals = np.ascontiguousarray(np.stack(normals, axis=-1))
        self.uniforms = np.ascontiguousarray(np.stack(uniforms, axis=-1))
        if self.beta_params is not None:
            a, b = self.beta_params
            self.beta_prior = np.stack(
                [g.beta(0.5, 0.5, _BATCH) for g in self.gens], axis=-1
            )
            self.beta_conj = np.stack(
                [g.beta(a[s], b[s], _BATCH) for s, g in enumerate(self.gens)], axis=-1
            )
        self.cursor = 0

    def step(self) -> int:
        if self.cursor >= _BATCH:
            self.refill()
        t = self.cursor
        self.cursor += 1
        return t


class _Adapter:
    """Robbins-Monro step-size adaptation toward a target acceptance rate.

    Tracks random-walk attempts only (prior-mixture proposals have no step);
    active during burn-in, frozen afterwards.
    """

    def __init__(self, names: list[str], steps: dict[str, float], n_streams: int):
        self.step = {k: np.full(n_streams, steps[k]) for k in names}
        self.acc = {k: np.zeros(n_streams) for k in names}
        self.att = {k: np.zeros(n_streams) for k in names}
        self.batch = 0

    def record(self, name: str, accepted: np.ndarray, attempted) -> None:
        self.acc[name] += accepted
        self.att[name] += attempted

    def adapt(self) -> None:
        self.batch += 1
        gain = min(0.5, 2.0 / math.sqrt(self.batch))
        for k, st in self.step.items():
            att = self.att[k]
            rate = np.divide(self.acc[k], att, out=np.zeros_like(att), where=att > 0)
            adj = np.where(att > 0, np.exp((rate - _TARGET_ACCEPT) * gain), 1.0)
            self.step[k] = np.clip(st * adj, _STEP_MIN, _STEP_MAX)
            self.acc[k][:] = 0.0
            self.att[k][:] = 0.0


class _AcceptanceMeter:
    def __init__(self, names: list[str], n_streams: int):
        self.acc = {k: np.zeros(n_streams) for k in names}
        self.att = {k: np.zeros(n_streams) for k in names}

    def record(self, name: str, accepted: np.ndarray, attempted) -> None:
        self.acc[name] += accepted
        self.att[name] += attempted

    def rates(self) -> dict[str, np.ndarray]:
        return {
            k: np.divide(
                self.acc[k], self.att[k], out=np.full_like(self.acc[k], np.nan),
                where=self.att[k] > 0,
            )
            for k in self.acc
        }


def _likelihood_masks(likelihood: str) -> tuple[float, bool]:
    if likelihood == "full":
        return 1.0, True
    if likelihood == "historical":
        return 1.0, False
    if likelihood == "none":
        return 0.0, False
    raise ValueError(f"likelihood must be full|historical|none, got {likelihood!r}")


def spx_streams(
    hist_y: np.ndarray,
    hist_n: np.ndarray,
    x: np.ndarray,
    y_new: np.ndarray,
    n_new: np.ndarray,
    hp: SpxHyperParams,
    *,
    burn_in: int,
    samples: int,
    thin: int,
    step_sizes: dict[str, float],
    adapt: bool,
    seed_seqs: list[np.random.SeedSequence],
    likelihood: str = "full",
    keep_params: bool = False,
) -> StreamResult:
    """Run S lockstep SPx chains; stream s analyzes new-trial data
    (y_new[s], n_new[s]) against the shared historical table.

    Block scan per iteration: each historical logit rate by random walk;
    each regression coefficient by random walk mixed with prior proposals;
    tau and sigma on the log scale likewise; the direct-borrowing expert by
    random walk (its conditional picks up the new-trial likelihood only when
    selected); the regression expert exactly from its normal conditional
    when unselected; the no-borrowing expert exactly from its conjugate Beta
    (selected) or its Beta(1/2, 1/2) prior; the selector from its exact
    categorical conditional, which is also accumulated into the
    Rao-Blackwellized submodel probabilities.
    """
    hist_lik, new_lik = _likelihood_masks(likelihood)
    n_hist = len(hist_y)
    n_cov = x.shape[1]
    n_streams = len(seed_seqs)
    if x.shape[0] != n_hist + 1:
        raise ValueError("x must have one row per historical trial plus the new trial")

    yh = hist_y.astype(float)
    nh = hist_n.astype(float)
    yh_col = yh[:, None]
    nh_col = nh[:, None]
    if new_lik:
        yn = y_new.astype(float)
        nn = n_new.astype(float)
        conj = (0.5 + yn, 0.5 + nn - yn)
    else:
        yn = np.zeros(n_streams)
        nn = np.zeros(n_streams)
        conj = (np.full(n_streams, 0.5), np.full(n_streams, 0.5))

    # Variate layout per iteration (rows of the tape).
    cn = n_hist + n_cov + 4
    n_tau, n_sigma = n_hist + n_cov, n_hist + n_cov + 1
    n_thist, n_treg = n_hist + n_cov + 2, n_hist + n_cov + 3
    cu = n_hist + 3 * n_cov + 9
    u_beta0 = n_hist
    u_tau, u_sigma = n_hist + 3 * n_cov, n_hist + 3 * n_cov + 3
    u_thist, u_treg, u_z = cu - 3, cu - 2, cu - 1

    tape = _VariateTape(seed_seqs, cn, cu, conj, n_init_normals=n_hist + n_cov + 5)

    log_wk = math.log(hp.w_base) / hp.w_bandwidth
    sqrt_c = math.sqrt(hp.c)
    with np.errstate(divide="ignore"):
        log_pz = np.log(np.array(hp.prior_z))[:, None]  # (3, 1)

    def _weights(eta_arr: np.ndarray) -> np.ndarray:
        pi = _sigmoid(eta_arr)
        lw = np.abs(pi[:n_hist] - pi[n_hist]) * log_wk
        lw -= lw.max(axis=0)
        wts = np.exp(lw)
        return wts / wts.sum(axis=0)

    # --- initial state ------------------------------------------------------
    # The chain is parameterized non-centrally: eps (latent effects on the
    # unit scale) with theta = eta + tau * eps, theta_hist = mu_hist +
    # sigma * eps_hist, theta_reg = eta_new + sqrt(c) * tau * eps_reg. This
    # decouples the latent blocks from the heavy-tailed scale hyperpriors;
    # with all likelihood terms off, every hyperparameter conditional then
    # reduces to its prior.
    init = tape.init_normals
    center = np.log((yh + 0.5) / (nh - yh + 0.5))[:, None]
    beta = 0.2 * init[n_hist : n_hist + n_cov]  # (P, S)
    beta[0] = center.mean() + 0.3 * init[n_hist]
    tau = 0.4 * np.exp(0.3 * init[n_hist + n_cov])
    sigma = hp.sigma_scale * np.exp(0.5 * init[n_hist + n_cov + 1])

    eta = np.zeros((n_hist + 1, n_streams))
    for j in range(n_cov):
        eta += x[:, j][:, None] * beta[j]

    if hist_lik:
        eps = (center + 0.3 * init[:n_hist] - eta[:n_hist]) / tau
    else:
        eps = init[:n_hist].copy()
    eps_hist = init[n_hist + n_cov + 2].copy()
    eps_reg = init[n_hist + n_cov + 3].copy()

    theta = eta[:n_hist] + tau * eps  # (H, S), maintained incrementally
    sp_theta = _softplus(theta)
    w = _weights(eta)
    mu_hist = (w * theta).sum(axis=0)
    th_hist = mu_hist + sigma * eps_hist
    th_reg = eta[n_hist] + sqrt_c * tau * eps_reg
    if new_lik:
        th_ind = np.log((yn + 0.5) / (nn - yn + 0.5)) + 0.3 * init[n_hist + n_cov + 4]
    else:
        th_ind = 0.5 * init[n_hist + n_cov + 4]
    cdf = np.cumsum(hp.prior_z)
    z = (tape.init_uniform >= cdf[0]).astype(np.int8) + (tape.init_uniform >= cdf[1])

    # --- bookkeeping --------------------------------------------------------
    blocks = ["theta", "beta", "log_tau", "log_sigma", "theta_hist", "theta_reg"]
    adapter = _Adapter(blocks, step_sizes, n_streams)
    meter = _AcceptanceMeter(blocks, n_streams)
    total_iters = burn_in + samples * thin
    psi_out = np.empty((n_streams, samples))
    z_out = np.empty((n_streams, samples), dtype=np.int8)
    rb_sum = np.zeros((3, n_streams))
    rb_count = 0
    params: dict[str, np.ndarray] | None = None
    if keep_params:
        params = {
            "theta_trials": np.empty((n_streams, samples, n_hist)),
            "beta": np.empty((n_streams, samples, n_cov)),
            "tau": np.empty((n_streams, samples)),
            "sigma": np.empty((n_streams, samples)),
            "theta_hist": np.empty((n_streams, samples)),
            "theta_reg": np.empty((n_streams, samples)),
            "theta_ind": np.empty((n_streams, samples)),
        }
    slot = 0

    def _new_trial_shift(sel_mask, th_cur, th_prop):
        """New-trial log-likelihood change when a selected expert value moves."""
        return sel_mask * (
            yn * (th_prop - th_cur) - nn * (_softplus(th_prop) - _softplus(th_cur))
        )

    for it in range(total_iters):
        t = tape.step()
        normals = tape.normals[t]
        uniforms = tape.uniforms[t]
        warm = it < burn_in
        tally = adapter if warm else meter
        sel_hist = (z == 0) if new_lik else None
        sel_reg = (z == 1) if new_lik else None

        # (a) historical logit rates: random walk on each latent effect
        step_t = adapter.step["theta"]
        for h in range(n_hist):
            cur = eps[h]
            prop = cur + step_t * normals[h]
            th_prop = eta[h] + tau * prop
            sp_prop = _softplus(th_prop)
            delta = -0.5 * (prop * prop - cur * cur)
            if hist_lik:
                delta += yh[h] * (th_prop - theta[h]) - nh[h] * (sp_prop - sp_theta[h])
            d_mu = w[h] * tau * (prop - cur)
            if new_lik:
                delta += _new_trial_shift(sel_hist, th_hist, th_hist + d_mu)
            acc = np.log(uniforms[h]) < delta
            eps[h] = np.where(acc, prop, cur)
            theta[h] = np.where(acc, th_prop, theta[h])
            sp_theta[h] = np.where(acc, sp_prop, sp_theta[h])
            mu_hist = mu_hist + acc * d_mu
            th_hist = th_hist + acc * d_mu
            tally.record("theta", acc, 1.0)

        # (b) regression coefficients: random walk mixed with prior proposals.
        # Moving beta shifts every theta_h, the borrow weights, and the
        # hist/reg expert values riding on them.
        step_b = adapter.step["beta"]
        for j in range(n_cov):
            cur = beta[j]
            from_prior = uniforms[u_beta0 + 3 * j] < _PRIOR_MIX
            prop_rw = cur + step_b * normals[n_hist + j]
            prop_pr = hp.beta_scale * np.tan(
                math.pi * (uniforms[u_beta0 + 3 * j + 1] - 0.5)
            )
            prop = np.where(from_prior, prop_pr, prop_rw)
            d_beta = prop - cur
            eta_p = eta + x[:, j][:, None] * d_beta
            theta_p = theta + x[:n_hist, j][:, None] * d_beta
            sp_p = _softplus(theta_p)
            w_p = _weights(eta_p)
            mu_p = (w_p * theta_p).sum(axis=0)
            th_hist_p = mu_p + sigma * eps_hist
            th_reg_p = eta_p[n_hist] + sqrt_c * tau * eps_reg
            delta = np.zeros(n_streams)
            if hist_lik:
                delta += (yh_col * (theta_p - theta) - nh_col * (sp_p - sp_theta)).sum(
                    axis=0
                )
            if new_lik:
                delta += _new_trial_shift(sel_hist, th_hist, th_hist_p)
                delta += _new_trial_shift(sel_reg, th_reg, th_reg_p)
            rw_prior = _log1p_sq(cur, hp.beta_scale) - _log1p_sq(prop, hp.beta_scale)
            delta += np.where(from_prior, 0.0, rw_prior)
            acc = np.log(uniforms[u_beta0 + 3 * j + 2]) < delta
            beta[j] = np.where(acc, prop, cur)
            eta = np.where(acc, eta_p, eta)
            theta = np.where(acc, theta_p, theta)
            sp_theta = np.where(acc, sp_p, sp_theta)
            w = np.where(acc, w_p, w)
            mu_hist = np.where(acc, mu_p, mu_hist)
            th_hist = np.where(acc, th_hist_p, th_hist)
            th_reg = np.where(acc, th_reg_p, th_reg)
            tally.record("beta", acc & ~from_prior, (~from_prior).astype(float))

        # (c) tau: log-scale random walk mixed with prior proposals. Moving
        # tau rescales every theta_h and the regression expert.
        from_prior = uniforms[u_tau] < _PRIOR_MIX
        prop_pr = np.maximum(
            hp.tau_scale * np.tan(0.5 * math.pi * uniforms[u_tau + 1]), 1e-12
        )
        prop_rw = tau * np.exp(adapter.step["log_tau"] * normals[n_tau])
        prop = np.where(from_prior, prop_pr, prop_rw)
        theta_p = eta[:n_hist] + prop * eps
        sp_p = _softplus(theta_p)
        mu_p = (w * theta_p).sum(axis=0)
        th_hist_p = mu_p + sigma * eps_hist
        th_reg_p = eta[n_hist] + sqrt_c * prop * eps_reg
        delta = np.zeros(n_streams)
        if hist_lik:
            delta += (yh_col * (theta_p - theta) - nh_col * (sp_p - sp_theta)).sum(
                axis=0
            )
        if new_lik:
            delta += _new_trial_shift(sel_hist, th_hist, th_hist_p)
            delta += _new_trial_shift(sel_reg, th_reg, th_reg_p)
        rw_terms = (
            _log1p_sq(tau, hp.tau_scale)
            - _log1p_sq(prop, hp.tau_scale)
            + np.log(prop / tau)
        )
        delta += np.where(from_prior, 0.0, rw_terms)
        acc = np.log(uniforms[u_tau + 2]) < delta
        tau = np.where(acc, prop, tau)
        theta = np.where(acc, theta_p, theta)
        sp_theta = np.where(acc, sp_p, sp_theta)
        mu_hist = np.where(acc, mu_p, mu_hist)
        th_hist = np.where(acc, th_hist_p, th_hist)
        th_reg = np.where(acc, th_reg_p, th_reg)
        tally.record("log_tau", acc & ~from_prior, (~from_prior).astype(float))

        # (c') sigma, same scheme; only the hist expert rides on it
        from_prior = uniforms[u_sigma] < _PRIOR_MIX
        prop_pr = np.maximum(
            hp.sigma_scale * np.tan(0.5 * math.pi * uniforms[u_sigma + 1]), 1e-12
        )
        prop_rw = sigma * np.exp(adapter.step["log_sigma"] * normals[n_sigma])
        prop = np.where(from_prior, prop_pr, prop_rw)
        th_hist_p = mu_hist + prop * eps_hist
        delta = np.zeros(n_streams)
        if new_lik:
            delta += _new_trial_shift(sel_hist, th_hist, th_hist_p)
        rw_terms = (
            _log1p_sq(sigma, hp.sigma_scale)
            - _log1p_sq(prop, hp.sigma_scale)
            + np.log(prop / sigma)
        )
        delta += np.where(from_prior, 0.0, rw_terms)
        acc = np.log(uniforms[u_sigma + 2]) < delta
        sigma = np.where(acc, prop, sigma)
        th_hist = np.where(acc, th_hist_p, th_hist)
        tally.record("log_sigma", acc & ~from_prior, (~from_prior).astype(float))

        # (d) direct-borrowing expert: random walk on its latent effect; the
        # new-trial likelihood enters only for streams currently selecting it
        cur = eps_hist
        prop = cur + adapter.step["theta_hist"] * normals[n_thist]
        th_prop = mu_hist + sigma * prop
        delta = -0.5 * (prop * prop - cur * cur)
        if new_lik:
            delta += _new_trial_shift(sel_hist, th_hist, th_prop)
        acc = np.log(uniforms[u_thist]) < delta
        eps_hist = np.where(acc, prop, cur)
        th_hist = np.where(acc, th_prop, th_hist)
        tally.record("theta_hist", acc, 1.0)

        # (e) regression expert: exact conditional draw when unselected,
        # random walk against the likelihood when selected
        noise = normals[n_treg]
        if new_lik:
            cur = eps_reg
            prop = cur + adapter.step["theta_reg"] * noise
            th_prop = eta[n_hist] + sqrt_c * tau * prop
            delta = -0.5 * (prop * prop - cur * cur)
            delta += _new_trial_shift(sel_reg, th_reg, th_prop)
            acc = np.log(uniforms[u_treg]) < delta
            eps_reg = np.where(sel_reg, np.where(acc, prop, cur), noise)
            tally.record("theta_reg", acc & sel_reg, sel_reg.astype(float))
        else:
            eps_reg = noise
        th_reg = eta[n_hist] + sqrt_c * tau * eps_reg

        # (f) no-borrowing expert: exact conjugate draw when selected,
        # prior draw otherwise
        if new_lik:
            p_draw = np.where(z == 2, tape.beta_conj[t], tape.beta_prior[t])
        else:
            p_draw = tape.beta_prior[t]
        p_draw = np.clip(p_draw, PROB_EPS, 1.0 - PROB_EPS)
        th_ind = np.log(p_draw / (1.0 - p_draw))

        # (g) selector from its exact categorical conditional
        experts = np.stack([th_hist, th_reg, th_ind])
        if new_lik:
            log_q = log_pz + yn * experts - nn * _softplus(experts)
        else:
            log_q = np.broadcast_to(log_pz, (3, n_streams)).copy()
        log_q -= log_q.max(axis=0)
        q = np.exp(log_q)
        q /= q.sum(axis=0)
        u = uniforms[u_z]
        z = (u >= q[0]).astype(np.int8) + (u >= q[0] + q[1])

        if warm:
            if adapt and (it + 1) % _ADAPT_EVERY == 0:
                adapter.adapt()
            continue

        rb_sum += q
        rb_count += 1
        if (it - burn_in) % thin == 0:
            theta_sel = np.choose(z, experts)
            psi_out[:, slot] = _sigmoid(theta_sel)
            z_out[:, slot] = z
            if params is not None:
                params["theta_trials"][:, slot, :] = theta.T
                params["beta"][:, slot, :] = beta.T
                params["tau"][:, slot] = tau
                params["sigma"][:, slot] = sigma
                params["theta_hist"][:, slot] = th_hist
                params["theta_reg"][:, slot] = th_reg
                params["theta_ind"][:, slot] = th_ind
            slot += 1

    return StreamResult(
        psi=psi_out, z=z_out, rb=(rb_sum / rb_count).T, accept=meter.rates(),
        params=params,
    )


def rmap_streams(
    hist_y: np.ndarray,
    hist_n: np.ndarray,
    y_new: np.ndarray,
    n_new: np.ndarray,
    *,
    mix_weight: float,
    mu_prior_sd: float,
    tau_prior_scale: float,
    burn_in: int,
    samples: int,
    thin: int,
    step_sizes: dict[str, float],
    adapt: bool,
    seed_seqs: list[np.random.SeedSequence],
    likelihood: str = "full",
    keep_params: bool = False,
) -> StreamResult:
    """Run S lockstep robust-MAP chains.

    Hierarchy: historical logit rates iid N(mu, tau^2); the new trial's rate
    from the mixture of that normal (the MAP component) and Logistic(0, 1)
    (the robust component). Both components stay instantiated — the MAP one
    non-centrally as mu + tau * eps_new, the robust one as a free logit
    value — and the indicator is refreshed from its exact two-term
    conditional, mirroring the expert machinery of the SPx kernel. The
    unselected component is refreshed from its prior each iteration.

    Step-size mapping: "theta" drives the historical latent effects, "beta"
    drives mu, "log_tau" drives tau, "theta_hist" drives the MAP component,
    "theta_reg" drives the robust component.

    The rb triple is reported as (MAP component, 0, robust component) so it
    shares the selector layout used elsewhere.
    """
    hist_lik, new_lik = _likelihood_masks(likelihood)
    n_hist = len(hist_y)
    n_streams = len(seed_seqs)
    yh = hist_y.astype(float)
    nh = hist_n.astype(float)
    yh_col = yh[:, None]
    nh_col = nh[:, None]
    if new_lik:
        yn = y_new.astype(float)
        nn = n_new.astype(float)
    else:
        yn = np.zeros(n_streams)
        nn = np.zeros(n_streams)

    cn = n_hist + 4
    n_mu, n_tau, n_map, n_rob = n_hist, n_hist + 1, n_hist + 2, n_hist + 3
    cu = n_hist + 8
    u_mu, u_tau = n_hist, n_hist + 2
    u_map, u_rob, u_m = cu - 3, cu - 2, cu - 1

    tape = _VariateTape(seed_seqs, cn, cu, None, n_init_normals=n_hist + 4)
    log_mix = math.log(mix_weight) if mix_weight > 0.0 else -math.inf
    log_rob = math.log1p(-mix_weight) if mix_weight < 1.0 else -math.inf

    init = tape.init_normals
    center = np.log((yh + 0.5) / (nh - yh + 0.5))[:, None]
    mu = center.mean() + 0.3 * init[n_hist]
    tau = 0.4 * np.exp(0.3 * init[n_hist + 1])
    if hist_lik:
        eps = (center + 0.3 * init[:n_hist] - mu) / tau
    else:
        eps = init[:n_hist].copy()
    theta = mu + tau * eps
    sp_theta = _softplus(theta)
    eps_map = init[n_hist + 2].copy()
    if new_lik:
        lam = np.log((yn + 0.5) / (nn - yn + 0.5)) + 0.3 * init[n_hist + 3]
    else:
        lam = init[n_hist + 3].copy()
    m = (tape.init_uniform >= mix_weight).astype(np.int8)  # 0=map, 1=robust

    blocks = ["theta", "mu", "log_tau", "theta_map", "theta_rob"]
    steps = {
        "theta": step_sizes["theta"],
        "mu": step_sizes["beta"],
        "log_tau": step_sizes["log_tau"],
        "theta_map": step_sizes["theta_hist"],
        "theta_rob": step_sizes["theta_reg"],
    }
    adapter = _Adapter(blocks, steps, n_streams)
    meter = _AcceptanceMeter(blocks, n_streams)
    total_iters = burn_in + samples * thin
    psi_out = np.empty((n_streams, samples))
    z_out = np.empty((n_streams, samples), dtype=np.int8)
    rb_sum = np.zeros((2, n_streams))
    rb_count = 0
    params: dict[str, np.ndarray] | None = None
    if keep_params:
        params = {
            "mu": np.empty((n_streams, samples)),
            "tau": np.empty((n_streams, samples)),
            "theta_new": np.empty((n_streams, samples)),
        }
    slot = 0

    def _new_trial_shift(sel_mask, th_cur, th_prop):
        return sel_mask * (
            yn * (th_prop - th_cur) - nn * (_softplus(th_prop) - _softplus(th_cur))
        )

    for it in range(total_iters):
        t = tape.step()
        normals = tape.normals[t]
        uniforms = tape.uniforms[t]
        warm = it < burn_in
        tally = adapter if warm else meter
        on_map = (m == 0) if new_lik else None
        th_map = mu + tau * eps_map

        # historical latent effects, random walk
        step_t = adapter.step["theta"]
        for h in range(n_hist):
            cur = eps[h]
            prop = cur + step_t * normals[h]
            th_prop = mu + tau * prop
            sp_prop = _softplus(th_prop)
            delta = -0.5 * (prop * prop - cur * cur)
            if hist_lik:
                delta += yh[h] * (th_prop - theta[h]) - nh[h] * (sp_prop - sp_theta[h])
            acc = np.log(uniforms[h]) < delta
            eps[h] = np.where(acc, prop, cur)
            theta[h] = np.where(acc, th_prop, theta[h])
            sp_theta[h] = np.where(acc, sp_prop, sp_theta[h])
            tally.record("theta", acc, 1.0)

        # mu: random walk mixed with prior proposals; moving mu shifts every
        # theta_h and the MAP component value
        from_prior = uniforms[u_mu] < _PRIOR_MIX
        noise = normals[n_mu]
        prop = np.where(
            from_prior, mu_prior_sd * noise, mu + adapter.step["mu"] * noise
        )
        d_mu = prop - mu
        theta_p = theta + d_mu
        sp_p = _softplus(theta_p)
        delta = np.zeros(n_streams)
        if hist_lik:
            delta += (yh_col * d_mu - nh_col * (sp_p - sp_theta)).sum(axis=0)
        if new_lik:
            delta += _new_trial_shift(on_map, th_map, th_map + d_mu)
        rw_prior = -0.5 * (prop * prop - mu * mu) / (mu_prior_sd * mu_prior_sd)
        delta += np.where(from_prior, 0.0, rw_prior)
        acc = np.log(uniforms[u_mu + 1]) < delta
        mu = np.where(acc, prop, mu)
        theta = np.where(acc, theta_p, theta)
        sp_theta = np.where(acc, sp_p, sp_theta)
        th_map = np.where(acc, th_map + d_mu, th_map)
        tally.record("mu", acc & ~from_prior, (~from_prior).astype(float))

        # tau: log-scale random walk mixed with prior proposals
        from_prior = uniforms[u_tau] < _PRIOR_MIX
        prop_pr = np.maximum(
            tau_prior_scale * np.tan(0.5 * math.pi * uniforms[u_tau + 1]), 1e-12
        )
        prop_rw = tau * np.exp(adapter.step["log_tau"] * normals[n_tau])
        prop = np.where(from_prior, prop_pr, prop_rw)
        theta_p = mu + prop * eps
        sp_p = _softplus(theta_p)
        th_map_p = mu + prop * eps_map
        delta = np.zeros(n_streams)
        if hist_lik:
            delta += (yh_col * (theta_p - theta) - nh_col * (sp_p - sp_theta)).sum(
                axis=0
            )
        if new_lik:
            delta += _new_trial_shift(on_map, th_map, th_map_p)
        rw_terms = (
            _log1p_sq(tau, tau_prior_scale)
            - _log1p_sq(prop, tau_prior_scale)
            + np.log(prop / tau)
        )
        delta += np.where(from_prior, 0.0, rw_terms)
        acc = np.log(uniforms[u_tau + 2]) < delta
        tau = np.where(acc, prop, tau)
        theta = np.where(acc, theta_p, theta)
        sp_theta = np.where(acc, sp_p, sp_theta)
        th_map = np.where(acc, th_map_p, th_map)
        tally.record("log_tau", acc & ~from_prior, (~from_prior).astype(float))

        # MAP component: random walk on its latent effect when selected,
        # exact prior draw otherwise
        noise = normals[n_map]
        if new_lik:
            cur = eps_map
            prop = cur + adapter.step["theta_map"] * noise
            delta = -0.5 * (prop * prop - cur * cur)
            delta += _new_trial_shift(on_map, th_map, mu + tau * prop)
            acc = np.log(uniforms[u_map]) < delta
            eps_map = np.where(on_map, np.where(acc, prop, cur), noise)
            tally.record("theta_map", acc & on_map, on_map.astype(float))
        else:
            eps_map = noise
        th_map = mu + tau * eps_map

        # robust component: random walk against Logistic(0,1) + likelihood
        # when selected, exact logistic draw otherwise
        if new_lik:
            on_rob = ~on_map
            cur = lam
            prop = cur + adapter.step["theta_rob"] * normals[n_rob]
            delta = (prop - cur) - 2.0 * (_softplus(prop) - _softplus(cur))
            delta += _new_trial_shift(on_rob, cur, prop)
            acc = np.log(uniforms[u_rob]) < delta
            u_exact = np.clip(uniforms[u_rob], PROB_EPS, 1.0 - PROB_EPS)
            lam_exact = np.log(u_exact / (1.0 - u_exact))
            lam = np.where(on_rob, np.where(acc, prop, cur), lam_exact)
            tally.record("theta_rob", acc & on_rob, on_rob.astype(float))
        else:
            u_exact = np.clip(uniforms[u_rob], PROB_EPS, 1.0 - PROB_EPS)
            lam = np.log(u_exact / (1.0 - u_exact))

        # indicator from its exact two-term conditional
        if new_lik:
            lq_map = log_mix + yn * th_map - nn * _softplus(th_map)
            lq_rob = log_rob + yn * lam - nn * _softplus(lam)
        else:
            lq_map = np.full(n_streams, log_mix)
            lq_rob = np.full(n_streams, log_rob)
        top = np.maximum(lq_map, lq_rob)
        q_map = np.exp(lq_map - top)
        q_rob = np.exp(lq_rob - top)
        total = q_map + q_rob
        q_map /= total
        q_rob /= total
        m = (uniforms[u_m] >= q_map).astype(np.int8)

        if warm:
            if adapt and (it + 1) % _ADAPT_EVERY == 0:
                adapter.adapt()
            continue

        rb_sum[0] += q_map
        rb_sum[1] += q_rob
        rb_count += 1
        if (it - burn_in) % thin == 0:
            th_new = np.where(m == 0, th_map, lam)
            psi_out[:, slot] = _sigmoid(th_new)
            z_out[:, slot] = np.where(m == 0, np.int8(0), np.int8(2))
            if params is not None:
                params["mu"][:, slot] = mu
                params["tau"][:, slot] = tau
                params["theta_new"][:, slot] = th_new
            slot += 1

    rb = np.zeros((n_streams, 3))
    rb[:, 0] = rb_sum[0] / rb_count
    rb[:, 2] = rb_sum[1] / rb_count
    return StreamResult(
        psi=psi_out, z=z_out, rb=rb, accept=meter.rates(), params=params
    )
