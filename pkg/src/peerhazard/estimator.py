"""Maximum-likelihood estimation with Newton ascent and OPG covariance.

The optimizer maximizes the (possibly permutation-sampled) total
log-likelihood. When sampling is active the permutation draws are frozen for
the whole fit (fixed seed per evaluation), so the optimizer targets a
deterministic surrogate and the convergence criterion is meaningful.

Covariance is the inverse empirical outer product of per-component scores,
the asymptotic variance of the block-level MLE; the Hessian only drives the
Newton steps.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import Sample
from .likelihood import (
    ComponentData,
    LikelihoodOptions,
    component_evals,
    split_sample,
)
from .rates import Theta

PARAM_BOUND = 20.0
Z95 = 1.959963984540054


@dataclass(frozen=True)
class FitOptions:
    grad_tol: float = 1e-6
    step_tol: float = 1e-10
    max_iter: int = 200
    max_halvings: int = 30
    armijo: float = 1e-4
    likelihood: LikelihoodOptions = field(default_factory=LikelihoodOptions)


@dataclass(frozen=True)
class FitResult:
    theta_hat: Theta
    vcov: np.ndarray
    se: np.ndarray
    ci: np.ndarray
    loglik_at_opt: float
    iterations: int
    converged: bool
    gradient_norm: float
    diagnostics: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "beta": self.theta_hat.beta.tolist(),
                "delta": self.theta_hat.delta,
                "se": self.se.tolist(),
                "ci": self.ci.tolist(),
                "vcov": self.vcov.tolist(),
                "loglik": self.loglik_at_opt,
                "iterations": self.iterations,
                "converged": self.converged,
                "gradient_norm": self.gradient_norm,
                "diagnostics": self.diagnostics,
            },
            indent=2,
        )


def init_theta(sample: Sample) -> Theta:
    """Moment-matched starting point ignoring peer effects.

    Matches the overall adoption share to the homogeneous censored
    exponential, loading the implied log-rate on the constant column if one
    exists and on the least-norm direction through the covariate mean
    otherwise.
    """
    p = sample.p
    share = float(sample.y.mean())
    if share <= 0.0 or share >= 1.0:
        import warnings

        warnings.warn(
            "all-adopted or none-adopted sample; falling back to theta = 0 "
            "(likelihood may be maximized at a boundary)"
        )
        return Theta(beta=np.zeros(p), delta=0.0)
    lam_bar = -np.log1p(-share) / sample.S
    target = np.log(lam_bar)
    beta = np.zeros(p)
    const_cols = [
        j for j in range(p) if np.allclose(sample.X[:, j], sample.X[0, j])
        and abs(sample.X[0, j]) > 1e-12
    ]
    if const_cols:
        j = const_cols[0]
        beta[j] = target / sample.X[0, j]
    else:
        xbar = sample.X.mean(axis=0)
        nrm2 = float(xbar @ xbar)
        if nrm2 > 1e-12:
            cand = target * xbar / nrm2
            # near-centered covariates make the least-norm direction explode;
            # beta = 0 (unit baseline rate) is a safer basin then
            if np.max(np.abs(cand)) <= 2.0:
                beta = cand
    return Theta(beta=beta, delta=0.0)


def _objective(components, theta_vec, opts: FitOptions):
    theta = Theta.from_vector(theta_vec)
    evals = component_evals(components, theta, opts.likelihood)
    loglik = sum(ev.loglik for ev in evals)
    qd = theta_vec.shape[0]
    score = np.zeros(qd)
    hess = np.zeros((qd, qd))
    for ev in evals:
        if np.isfinite(ev.loglik):
            score += ev.score
            hess += ev.hessian
    return loglik, score, hess, evals


def _ascent_direction(score, hess):
    """Newton direction when -H is positive definite, else scaled gradient."""
    try:
        L = np.linalg.cholesky(-hess)
        d = np.linalg.solve(L.T, np.linalg.solve(L, score))
        if d @ score > 0:
            return d, True
    except np.linalg.LinAlgError:
        pass
    nrm = np.linalg.norm(score)
    return score / max(nrm, 1.0), False


def fit(
    sample: Sample,
    init: Theta | None = None,
    opts: FitOptions = FitOptions(),
) -> FitResult:
    """Newton ascent with Armijo step halving inside box bounds."""
    components = split_sample(sample)
    theta0 = init if init is not None else init_theta(sample)
    v = np.clip(theta0.as_vector(), -PARAM_BOUND, PARAM_BOUND)
    qd = v.shape[0]

    loglik, score, hess, _ = _objective(components, v, opts)
    n_newton = 0
    converged = False
    hit_bound = False
    iterations = 0
    for iterations in range(1, opts.max_iter + 1):
        if np.max(np.abs(score)) < opts.grad_tol:
            converged = True
            iterations -= 1
            break
        d, used_newton = _ascent_direction(score, hess)
        n_newton += used_newton
        step = 1.0
        accepted = False
        slope = float(score @ d)
        for _ in range(opts.max_halvings + 1):
            v_new = np.clip(v + step * d, -PARAM_BOUND, PARAM_BOUND)
            ll_new, s_new, h_new, _ = _objective(components, v_new, opts)
            if np.isfinite(ll_new) and ll_new >= loglik + opts.armijo * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted or np.linalg.norm(v_new - v) < opts.step_tol:
            converged = np.max(np.abs(score)) < opts.grad_tol
            break
        v, loglik, score, hess = v_new, ll_new, s_new, h_new
    else:
        iterations = opts.max_iter
    if np.max(np.abs(score)) < opts.grad_tol:
        converged = True
    if np.any(np.abs(v) >= PARAM_BOUND - 1e-9):
        hit_bound = True
        converged = False

    theta_hat = Theta.from_vector(v)
    vcov, vcov_flag = _vcov_opg_components(components, theta_hat, opts, hess)
    se = np.sqrt(np.maximum(np.diag(vcov), 0.0))
    ci = np.stack([v - Z95 * se, v + Z95 * se], axis=1)
    return FitResult(
        theta_hat=theta_hat,
        vcov=vcov,
        se=se,
        ci=ci,
        loglik_at_opt=loglik,
        iterations=iterations,
        converged=converged,
        gradient_norm=float(np.max(np.abs(score))),
        diagnostics={
            "newton_steps": int(n_newton),
            "hit_bound": hit_bound,
            "vcov": vcov_flag,
        },
    )


def _vcov_opg_components(components, theta_hat, opts: FitOptions, hess):
    evals = component_evals(components, theta_hat, opts.likelihood)
    scores = np.array(
        [ev.score for ev in evals if np.isfinite(ev.loglik)]
    )
    qd = theta_hat.p + 1
    if scores.size == 0:
        return np.full((qd, qd), np.nan), "no-finite-components"
    opg = scores.T @ scores
    try:
        vcov = np.linalg.inv(opg)
        flag = "opg"
    except np.linalg.LinAlgError:
        vcov = np.linalg.pinv(opg)
        flag = "opg-pinv"
    vcov = 0.5 * (vcov + vcov.T)
    return vcov, flag


def vcov_opg(sample: Sample, theta_hat: Theta, opts: FitOptions = FitOptions()) -> np.ndarray:
    """Inverse empirical outer product of per-component scores."""
    components = split_sample(sample)
    vcov, _ = _vcov_opg_components(components, theta_hat, opts, None)
    return vcov
