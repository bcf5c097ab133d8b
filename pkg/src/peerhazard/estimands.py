"""Causal peer-effect quantities and diffusion counterfactuals.

All quantities are computed at a point theta (typically the MLE). Reported
standard errors reflect Monte Carlo simulation noise only; parameter
uncertainty is not propagated.
"""

import math
from dataclasses import dataclass

import numpy as np

from .likelihood import ComponentData, _exact_perms, perm_term_values
from .net import Network
from .process import counterfactual_sample
from .rates import Theta


class IdentificationError(ValueError):
    """No parameter values are consistent with the supplied probabilities."""


@dataclass(frozen=True)
class MonteCarloEstimate:
    value: float
    mc_se: float
    budget: int


def prob_delta_all_peers(lambda_i: float, lambda_i_plus: float, S: float) -> float:
    """Change in adoption probability from all peers adopting at the onset
    versus never: exp(-lambda S) (1 - exp(-(lambda_plus - lambda) S))."""
    if lambda_i <= 0 or lambda_i_plus <= 0:
        raise ValueError("rates must be positive")
    return float(
        np.exp(-lambda_i * S) * -np.expm1(-(lambda_i_plus - lambda_i) * S)
    )


def first_order_delta(lambda_i: float, delta: float, S: float) -> float:
    """Small-delta approximation of prob_delta_all_peers: delta S lam e^{-lam S}."""
    if lambda_i <= 0:
        raise ValueError("rate must be positive")
    return float(delta * S * lambda_i * np.exp(-lambda_i * S))


def general_delta(
    net: Network,
    X: np.ndarray,
    theta: Theta,
    S: float,
    tau_tilde: np.ndarray,
    tau: np.ndarray,
    target: int,
    budget: int,
    rng: np.random.Generator,
) -> MonteCarloEstimate:
    """Monte Carlo contrast of the target's adoption probability under two
    intervention vectors, with common random numbers across arms.

    Intervention entries are forced adoption times (inf = never); the
    target's own entry is ignored (the target is always free).
    """
    tau_tilde = np.asarray(tau_tilde, dtype=float).copy()
    tau = np.asarray(tau, dtype=float).copy()
    tau_tilde[target] = np.nan
    tau[target] = np.nan
    diffs = np.empty(budget)
    # integer seeds (not a shared SeedSequence): each arm must rebuild an
    # identical stream, and spawning inside the race mutates a SeedSequence
    seeds = rng.integers(2**63, size=budget)
    for r in range(budget):
        t1 = counterfactual_sample(
            net, X, theta, S, tau_tilde, np.random.default_rng(int(seeds[r]))
        )
        t0 = counterfactual_sample(
            net, X, theta, S, tau, np.random.default_rng(int(seeds[r]))
        )
        diffs[r] = float(t1.outcomes[target]) - float(t0.outcomes[target])
    return MonteCarloEstimate(
        value=float(diffs.mean()),
        mc_se=float(diffs.std(ddof=1) / math.sqrt(budget)) if budget > 1 else math.inf,
        budget=budget,
    )


def expected_time_to_fraction(
    net: Network,
    X: np.ndarray,
    theta: Theta,
    q: float,
    budget: int,
    rng: np.random.Generator,
) -> MonteCarloEstimate:
    """Mean first time at which the adoption share reaches q (no horizon)."""
    if not 0 < q <= 1:
        raise ValueError("q must be in (0, 1]")
    need = math.ceil(q * net.n - 1e-12)
    times = np.empty(budget)
    for r in range(budget):
        times[r] = _time_to_count(net, X, theta, need, rng)
    return MonteCarloEstimate(
        value=float(times.mean()),
        mc_se=float(times.std(ddof=1) / math.sqrt(budget)) if budget > 1 else math.inf,
        budget=budget,
    )


def _time_to_count(net, X, theta, need, rng):
    """One trajectory, run without truncation until `need` adoptions."""
    xb = np.atleast_2d(X) @ theta.beta
    deg = net.degrees.astype(float)
    deg_safe = np.where(deg > 0, deg, 1.0)
    counts = np.zeros(net.n)
    active = np.ones(net.n, dtype=bool)
    t = 0.0
    for _ in range(need):
        lam = np.where(
            active, np.exp(xb + theta.delta * counts / deg_safe), 0.0
        )
        total = lam.sum()
        t += rng.exponential(1.0 / total)
        u = rng.random() * total
        winner = int(np.searchsorted(np.cumsum(lam), u))
        winner = min(winner, net.n - 1)
        active[winner] = False
        counts += net.adjacency[winner]
    return t


def order_posterior(comp: ComponentData, theta: Theta):
    """Distribution over adopter orders given the observed outcomes.

    Returns (orders, probabilities, first_mover) where first_mover[i] is the
    probability that individual i (local index) adopted first.
    """
    perms = _exact_perms(comp)
    terms = perm_term_values(comp, perms, theta)
    total = terms.sum()
    if not total > 0:
        raise ValueError("all permutation terms are zero; cannot normalize")
    probs = terms / total
    first_mover = np.zeros(comp.n)
    if comp.G > 0:
        for k in range(perms.shape[0]):
            first_mover[perms[k, 0]] += probs[k]
    return perms, probs, first_mover


def _g(a: float, S: float) -> float:
    """(1 - exp(-a S)) / a, continuously extended by g(0) = S."""
    if a == 0.0:
        return S
    return float(-np.expm1(-a * S) / a)


def recover_rates_dyad(p00: float, p10: float, S: float) -> tuple[float, float]:
    """Invert the homogeneous dyad probabilities to (lambda, lambda_plus).

    lambda comes from the closed form -ln(p00)/(2S); lambda_plus is the root
    of the strictly decreasing map lam * exp(-x S) * g(2 lam - x) = p10.
    """
    if not 0 < p00 < 1:
        raise IdentificationError(f"p00 must be in (0, 1), got {p00}")
    lam = -math.log(p00) / (2 * S)
    upper_feasible = (1.0 - p00) / 2.0
    if not 0 < p10 < upper_feasible:
        raise IdentificationError(
            f"p10 must be in (0, {upper_feasible:.6g}) for p00={p00:.6g}"
        )

    def h(x):
        return lam * math.exp(-x * S) * _g(2 * lam - x, S) - p10

    lo = 1e-300
    hi = max(4 * lam, 1.0)
    while h(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise IdentificationError("no root found for lambda_plus")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10:
            break
    lam_plus = 0.5 * (lo + hi)
    return lam, lam_plus
