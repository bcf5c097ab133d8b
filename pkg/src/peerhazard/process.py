"""Exact forward simulation of the adoption race and counterfactual variants.

The race exploits memorylessness: each round draws the total-rate exponential
for the round duration and a categorical winner with probability proportional
to rate. This is distributionally identical to drawing every non-adopter's
latent partial time and taking the minimum, but uses fewer random numbers.

RNG streams are spawned per connected component so component-level results do
not depend on other components' draws.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .net import Network
from .rates import Theta


@dataclass(frozen=True)
class Trajectory:
    """Adoption times (inf for non-adopters), adoption order, outcomes at S."""

    times: np.ndarray
    order: np.ndarray
    outcomes: np.ndarray
    horizon: float

    def __post_init__(self):
        for name in ("times", "order", "outcomes"):
            arr = np.asarray(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "time", "outcome"])
            for i, (t, y) in enumerate(zip(self.times, self.outcomes)):
                w.writerow([i, "" if np.isinf(t) else repr(float(t)), int(y)])


def _component_log_rates(xb, delta, counts, deg_safe):
    return xb + delta * counts / deg_safe


def simulate(
    net: Network,
    X: np.ndarray,
    theta: Theta,
    S: float,
    rng: np.random.Generator,
    log_offset: np.ndarray | None = None,
) -> Trajectory:
    """Run the adoption race on every component up to horizon S.

    log_offset, when given, is added per-individual to the log-rate at
    generation (used for unobserved-heterogeneity scenarios).
    """
    if not S > 0:
        raise ValueError("horizon S must be positive")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    xb_all = X @ theta.beta
    if log_offset is not None:
        xb_all = xb_all + np.asarray(log_offset, dtype=float)
    if not np.all(np.isfinite(xb_all)):
        raise ValueError("rates must be finite")

    n = net.n
    times = np.full(n, np.inf)
    events = []  # (time, individual)
    streams = rng.spawn(len(net.components))
    for comp, sub_rng in zip(net.components, streams):
        _race_component(
            net, comp, xb_all[comp], theta.delta, S, sub_rng, times, events
        )
    events.sort()
    order = np.array([i for _, i in events], dtype=np.intp)
    outcomes = (times <= S).astype(np.int8)
    return Trajectory(times=times, order=order, outcomes=outcomes, horizon=float(S))


def _race_component(net, comp, xb, delta, S, rng, times, events):
    m = comp.shape[0]
    sub = net.adjacency[np.ix_(comp, comp)].astype(float)
    deg = net.degrees[comp].astype(float)
    deg_safe = np.where(deg > 0, deg, 1.0)
    counts = np.zeros(m)
    active = np.ones(m, dtype=bool)
    t = 0.0
    while active.any():
        lam = np.where(
            active, np.exp(_component_log_rates(xb, delta, counts, deg_safe)), 0.0
        )
        total = lam.sum()
        t += rng.exponential(1.0 / total)
        if t > S:
            break
        u = rng.random() * total
        winner = int(np.searchsorted(np.cumsum(lam), u))
        winner = min(winner, m - 1)
        gi = int(comp[winner])
        times[gi] = t
        events.append((t, gi))
        active[winner] = False
        counts += sub[winner]


def counterfactual_sample(
    net: Network,
    X: np.ndarray,
    theta: Theta,
    S: float,
    intervention: np.ndarray,
    rng: np.random.Generator,
    log_offset: np.ndarray | None = None,
) -> Trajectory:
    """Race with intervened individuals adopting deterministically.

    intervention entries: a non-negative forced adoption time, inf for a
    forced never-adopter, or NaN for a free individual.
    """
    if not S > 0:
        raise ValueError("horizon S must be positive")
    intervention = np.asarray(intervention, dtype=float)
    if intervention.shape != (net.n,):
        raise ValueError("intervention must have one entry per individual")
    finite = intervention[np.isfinite(intervention)]
    if np.any(finite < 0):
        raise ValueError("forced adoption times must be non-negative")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    xb_all = X @ theta.beta
    if log_offset is not None:
        xb_all = xb_all + np.asarray(log_offset, dtype=float)

    n = net.n
    times = np.full(n, np.inf)
    events = []
    streams = rng.spawn(len(net.components))
    for comp, sub_rng in zip(net.components, streams):
        _race_component_forced(
            net, comp, xb_all[comp], theta.delta, S, intervention[comp],
            sub_rng, times, events,
        )
    events.sort()
    order = np.array([i for _, i in events], dtype=np.intp)
    outcomes = (times <= S).astype(np.int8)
    return Trajectory(times=times, order=order, outcomes=outcomes, horizon=float(S))


def _race_component_forced(net, comp, xb, delta, S, tau, rng, times, events):
    m = comp.shape[0]
    sub = net.adjacency[np.ix_(comp, comp)].astype(float)
    deg = net.degrees[comp].astype(float)
    deg_safe = np.where(deg > 0, deg, 1.0)
    counts = np.zeros(m)
    free = np.isnan(tau)
    # forced never-adopters (tau = inf) simply stay inactive forever
    forced_events = sorted(
        (float(tau[j]), j) for j in range(m) if not free[j] and np.isfinite(tau[j])
    )
    forced_pos = 0
    active_free = free.copy()
    t = 0.0
    while True:
        lam = np.where(
            active_free,
            np.exp(_component_log_rates(xb, delta, counts, deg_safe)),
            0.0,
        )
        total = lam.sum()
        t_free = t + rng.exponential(1.0 / total) if total > 0 else np.inf
        t_forced = (
            forced_events[forced_pos][0] if forced_pos < len(forced_events) else np.inf
        )
        # forced adoptions keep updating rates past S; free adoptions past S
        # cannot change any outcome, so the race stops there
        if t_forced <= t_free:
            if t_forced == np.inf:
                break
            j = forced_events[forced_pos][1]
            forced_pos += 1
            t = t_forced
            times[comp[j]] = t_forced
            events.append((t_forced, int(comp[j])))
            counts += sub[j]
        else:
            if t_free > S:
                break
            t = t_free
            u = rng.random() * total
            winner = int(np.searchsorted(np.cumsum(lam), u))
            winner = min(winner, m - 1)
            times[comp[winner]] = t
            events.append((t, int(comp[winner])))
            active_free[winner] = False
            counts += sub[winner]
        if not active_free.any() and forced_pos >= len(forced_events):
            break


def potential_time(latent_partials, tau) -> float:
    """Adoption time of one individual given peers' adoption times.

    Walks the per-round latent draws against the gaps between consecutive
    peer adoptions; the first draw shorter than its gap fires. Past the last
    peer adoption the gap is infinite, so the final draw always fires.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(np.diff(tau) < 0):
        raise ValueError("tau must be sorted ascending")
    partials = [float(v) for v in latent_partials]
    if any(v <= 0 for v in partials):
        raise ValueError("latent partial times must be positive")
    gaps = np.diff(np.concatenate([[0.0], tau]))
    acc = 0.0
    for k in range(len(tau) + 1):
        gap = gaps[k] if k < len(gaps) else np.inf
        if k >= len(partials):
            raise ValueError(
                f"need at least {k + 1} latent partial draws, got {len(partials)}"
            )
        if partials[k] < gap:
            return acc + partials[k]
        acc += gap
    raise AssertionError("unreachable: final gap is infinite")
