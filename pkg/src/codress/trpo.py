"""Trust-region policy optimization over the concatenated agent parameters.

One flat vector spans the human and robot networks, so the conjugate-gradient
step and the KL trust region couple the two agents; this is what makes the
training co-optimization rather than alternating best response.

The Fisher-vector product uses the exact Gaussian structure: for a diagonal
Gaussian with a network mean, F = E[J_mu^T diag(1/sigma^2) J_mu] over the
mean parameters and 2*I over the log-std parameters, with zero cross terms
at the expansion point.  This equals the Hessian of the mean KL at the old
parameters, which is what the finite-difference checks probe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .nets import JointPolicy


@dataclass(frozen=True)
class TrpoConfig:
    kl_delta: float = 0.01
    cg_iterations: int = 10
    cg_damping: float = 0.1
    backtrack_ratio: float = 0.8
    max_backtracks: int = 15
    gamma: float = 0.99
    gae_lambda: float = 0.95
    value_epochs: int = 60
    value_lr: float = 1e-2
    value_scale: float = 1e-3
    fvp_subsample: int = 5
    samples_per_iteration: int = 4000
    log_std_init: float = -3.0

    def __post_init__(self):
        if self.kl_delta <= 0.0:
            raise ValueError("kl_delta must be positive")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")


def compute_gae(rewards, values, bootstrap, ep_start, gamma, lam,
                normalize=True):
    """Generalized advantage estimates and value targets per episode.

    Episodes are contiguous slices delimited by ``ep_start`` (with a trailing
    total-length entry); truncated episodes bootstrap with ``bootstrap[e]``.
    Advantages are z-scored across the batch when ``normalize``.
    """
    adv, vtarg = kernels.gae_scan(
        np.ascontiguousarray(rewards, dtype=float),
        np.ascontiguousarray(values, dtype=float),
        np.ascontiguousarray(bootstrap, dtype=float),
        np.ascontiguousarray(ep_start, dtype=np.int64),
        float(gamma), float(lam))
    if normalize:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, vtarg


def surrogate(policy: JointPolicy, obs, act, logp_old, adv):
    """Importance-weighted surrogate objective at the current parameters."""
    ratio = np.exp(policy.log_prob(obs, act) - logp_old)
    return float(np.mean(ratio * adv))


def surrogate_grad(policy: JointPolicy, obs, act, logp_old, adv):
    """Analytic gradient of the surrogate w.r.t. the flat joint parameters."""
    n = obs.shape[0]
    ratio = np.exp(policy.log_prob(obs, act) - logp_old)
    coef = ratio * adv / n
    grad = np.zeros(policy.n_params)
    for agent, obs_sl, act_sl, offset in policy.parts():
        o = obs[:, obs_sl]
        a = act[:, act_sl]
        mu = agent.mlp.forward(o)
        inv_var = np.exp(-2.0 * agent.log_std)
        z = (a - mu) * inv_var
        g_mlp = agent.mlp.vjp(o, coef[:, None] * z)
        g_ls = np.sum(coef[:, None] * ((a - mu) * z - 1.0), axis=0)
        grad[offset:offset + agent.mlp.n_params] = g_mlp
        grad[offset + agent.mlp.n_params:offset + agent.n_params] = g_ls
    return grad


def mean_kl(policy: JointPolicy, obs, mu_old, log_std_old):
    """Mean KL(old || current) over the batch, closed form for Gaussians."""
    mu_new, ls_new = policy.distribution(obs)
    var_new = np.exp(2.0 * ls_new)
    kl = (ls_new - log_std_old
          + (np.exp(2.0 * log_std_old) + (mu_new - mu_old) ** 2) / (2.0 * var_new)
          - 0.5)
    return float(np.mean(np.sum(kl, axis=1)))


def mean_kl_grad(policy: JointPolicy, obs, mu_old, log_std_old):
    """Gradient of the mean KL w.r.t. the current flat parameters."""
    n = obs.shape[0]
    grad = np.zeros(policy.n_params)
    for agent, obs_sl, _, offset in policy.parts():
        o = obs[:, obs_sl]
        if offset == 0:
            mu0 = mu_old[:, :agent.act_dim]
            ls0 = log_std_old[:, :agent.act_dim]
        else:
            mu0 = mu_old[:, -agent.act_dim:]
            ls0 = log_std_old[:, -agent.act_dim:]
        mu = agent.mlp.forward(o)
        inv_var = np.exp(-2.0 * agent.log_std)
        up = (mu - mu0) * inv_var / n
        g_mlp = agent.mlp.vjp(o, up)
        g_ls = np.sum(
            (1.0 - (np.exp(2.0 * ls0) + (mu - mu0) ** 2) * inv_var) / n, axis=0)
        grad[offset:offset + agent.mlp.n_params] = g_mlp
        grad[offset + agent.mlp.n_params:offset + agent.n_params] = g_ls
    return grad


def fisher_vector_product(policy: JointPolicy, obs, v, damping=0.0):
    """(F + damping*I) v with F the Gaussian Fisher of the joint policy."""
    out = damping * v
    n = obs.shape[0]
    for agent, obs_sl, _, offset in policy.parts():
        o = obs[:, obs_sl]
        v_mlp = v[offset:offset + agent.mlp.n_params]
        v_ls = v[offset + agent.mlp.n_params:offset + agent.n_params]
        dmu = agent.mlp.jvp(o, v_mlp)
        up = dmu * np.exp(-2.0 * agent.log_std) / n
        out[offset:offset + agent.mlp.n_params] += agent.mlp.vjp(o, up)
        out[offset + agent.mlp.n_params:offset + agent.n_params] += 2.0 * v_ls
    return out


def conjugate_gradient(matvec, b, iterations, tol=1e-10):
    """Plain CG for SPD systems.  Returns (x, residual_reduced, res_norm)."""
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    r0 = float(np.dot(r, r))
    rr = r0
    if r0 == 0.0:
        return x, True, 0.0
    for _ in range(int(iterations)):
        ap = matvec(p)
        alpha = rr / float(np.dot(p, ap))
        x += alpha * p
        r -= alpha * ap
        rr_new = float(np.dot(r, r))
        if rr_new < tol * r0:
            rr = rr_new
            break
        p = r + (rr_new / rr) * p
        rr = rr_new
    return x, rr < r0, float(np.sqrt(rr))


def trpo_update(policy: JointPolicy, obs, act, logp_old, adv,
                cfg: TrpoConfig):
    """One trust-region step on the joint parameter vector.

    Conjugate gradient solves (F + damping*I) x = g on a deterministic batch
    subsample; a backtracking line search accepts the first candidate with a
    positive surrogate improvement inside the KL radius.  On a non-finite
    gradient the update aborts and reports; parameters are then unchanged.
    """
    obs = np.ascontiguousarray(obs)
    act = np.ascontiguousarray(act)
    diag = {"accepted": False, "improvement": 0.0, "kl": 0.0,
            "backtracks": 0, "aborted": False, "cg_ok": True,
            "grad_norm": 0.0}
    g = surrogate_grad(policy, obs, act, logp_old, adv)
    diag["grad_norm"] = float(np.linalg.norm(g))
    if not np.all(np.isfinite(g)):
        diag["aborted"] = True
        return diag
    if diag["grad_norm"] == 0.0:
        return diag

    sub = obs[::max(int(cfg.fvp_subsample), 1)]
    fvp = lambda v: fisher_vector_product(policy, sub, v, cfg.cg_damping)
    x, cg_ok, _ = conjugate_gradient(fvp, g, cfg.cg_iterations)
    diag["cg_ok"] = bool(cg_ok)
    shs = float(np.dot(x, fvp(x)))
    if shs <= 0.0 or not np.isfinite(shs):
        diag["aborted"] = True
        return diag
    full_step = np.sqrt(2.0 * cfg.kl_delta / shs) * x

    mu_old, ls_old = policy.distribution(obs)
    mu_old = mu_old.copy()
    ls_old = ls_old.copy()
    theta_old = policy.get_params()
    l_old = surrogate(policy, obs, act, logp_old, adv)

    scale = 1.0
    for k in range(int(cfg.max_backtracks) + 1):
        policy.set_params(theta_old + scale * full_step)
        improvement = surrogate(policy, obs, act, logp_old, adv) - l_old
        kl = mean_kl(policy, obs, mu_old, ls_old)
        if improvement > 0.0 and kl <= cfg.kl_delta:
            diag.update(accepted=True, improvement=float(improvement),
                        kl=float(kl), backtracks=k)
            return diag
        scale *= cfg.backtrack_ratio
    policy.set_params(theta_old)
    diag["backtracks"] = int(cfg.max_backtracks) + 1
    return diag


def fit_value(value_net, obs, targets, cfg: TrpoConfig):
    """Value regression on GAE targets; returns the loss curve."""
    return value_net.fit(obs, targets, cfg.value_epochs, cfg.value_lr)
