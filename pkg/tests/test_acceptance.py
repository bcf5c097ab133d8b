"""End-to-end numerical acceptance suite.

Each test checks one contract criterion at its stated tolerance and prints a
single pass/fail line (visible with pytest -s). The replication-study
criteria run at 200 replications and dominate the runtime.
"""

import itertools
import math

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.sparse.csgraph import connected_components as cc
from scipy.sparse import csr_matrix

from peerhazard.data import Sample
from peerhazard.estimands import (
    expected_time_to_fraction,
    general_delta,
    prob_delta_all_peers,
    recover_rates_dyad,
)
from peerhazard.harness import ExperimentConfig, run_experiment
from peerhazard.likelihood import (
    ComponentData,
    loglik_exact,
    loglik_sampled,
    total_loglik,
)
from peerhazard.net import Network, make_block_network
from peerhazard.process import simulate
from peerhazard.rates import Theta


def report(number, name, ok, detail):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {number:02d} {name}: {status} ({detail})")
    assert ok, f"criterion {number} {name}: {detail}"


def connected_graphs(n):
    """All labeled connected simple graphs on n nodes."""
    edges = list(itertools.combinations(range(n), 2))
    out = []
    for bits in itertools.product([0, 1], repeat=len(edges)):
        A = np.zeros((n, n), dtype=int)
        for b, (i, j) in zip(bits, edges):
            if b:
                A[i, j] = A[j, i] = 1
        if n == 1 or cc(csr_matrix(A), directed=False)[0] == 1:
            out.append(A)
    return out


def test_criterion_01_normalization():
    rng = np.random.default_rng(20240801)
    worst = 0.0
    for n in range(1, 5):
        for A in connected_graphs(n):
            comps = [
                ComponentData(adjacency=A, X=np.zeros((n, 2)), y=np.array(bits), S=1.0)
                for bits in itertools.product([0, 1], repeat=n)
            ]
            for _ in range(100):
                X = rng.normal(size=(n, 2)) * 0.8
                theta = Theta(beta=rng.normal(size=2) * 0.6, delta=rng.normal() * 0.8)
                for comp in comps:
                    comp.X = X  # structure cache is X-independent
                total = sum(math.exp(loglik_exact(c, theta).loglik) for c in comps)
                worst = max(worst, abs(total - 1.0))
    report(1, "normalization", worst < 1e-10, f"max |sum - 1| = {worst:.3e}")


def g_fun(a, S):
    if a == 0.0:
        return S
    return -math.expm1(-a * S) / a


def dyad_probs_closed_form(lam1, lam2, lam1p, lam2p, S):
    p00 = math.exp(-(lam1 + lam2) * S)
    p10 = lam1 * math.exp(-lam2p * S) * g_fun(lam1 + lam2 - lam2p, S)
    p01 = lam2 * math.exp(-lam1p * S) * g_fun(lam1 + lam2 - lam1p, S)
    return p00, p10, p01, 1.0 - p00 - p10 - p01


def dyad_component(lam1, lam2, ratio, S, y):
    return (
        ComponentData(
            adjacency=np.array([[0, 1], [1, 0]]),
            X=np.array([[math.log(lam1)], [math.log(lam2)]]),
            y=np.asarray(y),
            S=S,
        ),
        Theta(beta=[1.0], delta=math.log(ratio)),
    )


def test_criterion_02_dyad_closed_forms():
    rng = np.random.default_rng(2)
    worst = 0.0
    for k in range(1000):
        lam1, lam2 = rng.uniform(0.1, 3.0, 2)
        S = rng.uniform(0.4, 1.6)
        if k % 10 == 0:
            ratio = (lam1 + lam2) / lam2  # knife edge: lam1 + lam2 = lam2_plus
        else:
            ratio = rng.uniform(0.3, 4.0)
        want = dyad_probs_closed_form(lam1, lam2, lam1 * ratio, lam2 * ratio, S)
        for y, w in zip(([0, 0], [1, 0], [0, 1], [1, 1]), want):
            comp, theta = dyad_component(lam1, lam2, ratio, S, y)
            got = math.exp(loglik_exact(comp, theta).loglik)
            worst = max(worst, abs(got - w))
    report(2, "dyad closed forms", worst < 1e-12, f"max abs dev = {worst:.3e}")


def test_criterion_03_iid_reduction():
    worst = 0.0
    S = 1.0
    for N in range(1, 9):
        lam = 0.3 + 0.15 * N
        A = np.ones((N, N), dtype=int)
        np.fill_diagonal(A, 0)
        X = np.full((N, 1), math.log(lam))
        theta = Theta(beta=[1.0], delta=0.0)
        for G in range(N + 1):
            y = np.array([1] * G + [0] * (N - G))
            comp = ComponentData(adjacency=A, X=X, y=y, S=S)
            got = math.exp(loglik_exact(comp, theta).loglik)
            want = math.exp(-lam * (N - G) * S) * (1 - math.exp(-lam * S)) ** G
            worst = max(worst, abs(got - want) / want)
    report(3, "iid reduction", worst < 1e-10, f"max rel dev = {worst:.3e}")


def ordered_exp_integral(c, S, m=48):
    """Integral of exp(-sum_g c_g * gap_g) over ordered times in [0, S].

    Gauss-Legendre tensor quadrature, an oracle independent of the
    divided-difference evaluation.
    """
    nodes, weights = leggauss(m)
    G = len(c) - 1

    def rec(g, t_prev):
        if g == G:
            return np.exp(-c[G] * (S - t_prev))
        half = (S - t_prev) / 2.0
        t = t_prev[..., None] + (nodes + 1.0) * half[..., None]
        vals = np.exp(-c[g] * (t - t_prev[..., None])) * rec(g + 1, t)
        return (vals * weights).sum(axis=-1) * half

    return float(rec(0, np.array(0.0)))


def outcome_prob_quadrature(A, lams_base, delta_mult, y, S):
    """Probability of outcome y by integrating over ordered adoption times."""
    n = A.shape[0]
    deg = np.maximum(A.sum(axis=1), 1)
    adopters = [i for i in range(n) if y[i] == 1]
    total = 0.0
    for order in itertools.permutations(adopters):
        counts = np.zeros(n)
        active = np.ones(n, dtype=bool)
        rate_prod = 1.0
        cs = []
        for step in range(len(order) + 1):
            lam = lams_base * delta_mult ** (counts / deg)
            cs.append(float(lam[active].sum()))
            if step < len(order):
                i = order[step]
                rate_prod *= float(lam[i])
                active[i] = False
                counts = counts + A[i]
        total += rate_prod * ordered_exp_integral(cs, S)
    if not adopters:
        lam = lams_base
        total = math.exp(-float(lam.sum()) * S)
    return total


def test_criterion_04_quadrature_oracle():
    rng = np.random.default_rng(4)
    graphs = [
        np.array([[0, 1], [1, 0]]),
        np.array([[0, 1, 1], [1, 0, 1], [1, 1, 0]]),  # triangle
        np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]]),  # path
    ]
    worst = 0.0
    for _ in range(100):
        A = graphs[rng.integers(len(graphs))]
        n = A.shape[0]
        x = rng.uniform(-1.0, 1.0, n)
        delta = rng.uniform(-1.0, 1.0)
        S = rng.uniform(0.5, 1.5)
        theta = Theta(beta=[1.0], delta=delta)
        lams = np.exp(x)
        y = rng.integers(0, 2, n)
        comp = ComponentData(adjacency=A, X=x[:, None], y=y, S=S)
        got = math.exp(loglik_exact(comp, theta).loglik)
        want = outcome_prob_quadrature(A, lams, math.exp(delta), y, S)
        worst = max(worst, abs(got - want))
    report(4, "quadrature oracle", worst < 1e-6, f"max abs dev = {worst:.3e}")


def random_small_sample(rng):
    n = int(rng.integers(4, 8))
    A = (rng.random((n, n)) < 0.45).astype(int)
    A = np.triu(A, 1)
    A = A + A.T
    net = Network(A)
    X = rng.normal(size=(n, 2)) * 0.7
    y = rng.integers(0, 2, n)
    if y.sum() == 0:
        y[int(rng.integers(n))] = 1
    return Sample(net=net, X=X, y=y, S=1.0)


def test_criterion_05_derivative_checks():
    rng = np.random.default_rng(5)
    worst_s = 0.0
    worst_h = 0.0
    for _ in range(50):
        sample = random_small_sample(rng)
        v = rng.uniform(-1.2, 1.2, 3)
        theta = Theta.from_vector(v)
        ev = total_loglik(sample, theta)
        qd = 3
        fd_score = np.zeros(qd)
        fd_hess = np.zeros((qd, qd))
        for j in range(qd):
            h = 1e-6 * (1.0 + abs(v[j]))
            e = np.zeros(qd)
            e[j] = h
            lp = total_loglik(sample, Theta.from_vector(v + e))
            lm = total_loglik(sample, Theta.from_vector(v - e))
            fd_score[j] = (lp.loglik - lm.loglik) / (2 * h)
            # wider step for the score difference: the score itself carries
            # rounding noise that a 1e-6 step would amplify past 1e-4
            h2 = 1e-5 * (1.0 + abs(v[j]))
            e2 = np.zeros(qd)
            e2[j] = h2
            sp = total_loglik(sample, Theta.from_vector(v + e2)).score
            sm = total_loglik(sample, Theta.from_vector(v - e2)).score
            fd_hess[:, j] = (sp - sm) / (2 * h2)
        scale_s = np.maximum(np.abs(fd_score), 1.0)
        worst_s = max(worst_s, float(np.max(np.abs(ev.score - fd_score) / scale_s)))
        scale_h = np.maximum(np.abs(fd_hess), 1.0)
        worst_h = max(worst_h, float(np.max(np.abs(ev.hessian - fd_hess) / scale_h)))
        assert np.array_equal(ev.hessian, ev.hessian.T)
    ok = worst_s < 1e-5 and worst_h < 1e-4
    report(
        5, "derivative checks", ok,
        f"score rel dev = {worst_s:.3e}, hessian rel dev = {worst_h:.3e}",
    )


def _batch_outcome_frequencies(block_size, X_block, theta, S, n_components, n_calls, seed):
    """Simulate n_components * n_calls iid components, count outcome patterns."""
    n = block_size * n_components
    net = make_block_network(n, block_size)
    X = np.tile(X_block, (n_components, 1))
    counts = {}
    rng = np.random.default_rng(seed)
    weights = 2 ** np.arange(block_size)
    for _ in range(n_calls):
        traj = simulate(net, X, theta, S, rng)
        codes = traj.outcomes.reshape(n_components, block_size) @ weights
        for code, cnt in zip(*np.unique(codes, return_counts=True)):
            counts[int(code)] = counts.get(int(code), 0) + int(cnt)
    return counts, n_components * n_calls


def test_criterion_06_simulation_consistency():
    theta = Theta(beta=[1.0], delta=0.6)
    S = 1.0
    worst_z = 0.0
    for block_size, X_block in (
        (2, np.array([[0.2], [-0.4]])),
        (3, np.array([[0.3], [-0.2], [0.0]])),
    ):
        counts, M = _batch_outcome_frequencies(
            block_size, X_block, theta, S, n_components=1000, n_calls=1000,
            seed=60 + block_size,
        )
        assert M == 10**6
        for bits in itertools.product([0, 1], repeat=block_size):
            comp = ComponentData(
                adjacency=make_block_network(block_size, block_size).adjacency,
                X=X_block, y=np.array(bits), S=S,
            )
            p = math.exp(loglik_exact(comp, theta).loglik)
            code = int(np.dot(bits, 2 ** np.arange(block_size)))
            phat = counts.get(code, 0) / M
            se = math.sqrt(p * (1 - p) / M)
            worst_z = max(worst_z, abs(phat - p) / se)
    report(
        6, "simulation consistency", worst_z < 4.0,
        f"max |freq - prob| = {worst_z:.2f} MC SEs over 10^6 dyads and triads",
    )


PAPER_T1_EXP = {-0.5: (0.03, 0.12), 0.0: (0.00, 0.10), 0.5: (-0.01, 0.09)}
PAPER_T1_OLS_BIAS = {-0.5: 0.39, 0.0: -0.02, 0.5: -0.35}


def test_criterion_07_table1_reproduction():
    lines = []
    ok = True
    ols_bias = {}
    sar_bias = {}
    for delta in (-0.5, 0.0, 0.5):
        cfg = ExperimentConfig(
            n_total=1000, group_size=5, delta=delta, replications=200, seed=12345
        )
        rep = run_experiment(cfg)
        r = rep.row("exp", "delta")
        paper_bias, paper_sd = PAPER_T1_EXP[delta]
        bias_ok = abs(r["bias"] - paper_bias) <= 0.03 + 2 * r["mc_se"]
        sd_ok = abs(r["sd"] - paper_sd) <= 0.03
        ok = ok and bias_ok and sd_ok
        lines.append(
            f"delta={delta:+.1f} exp bias {r['bias']:+.3f} (paper {paper_bias:+.2f},"
            f" {'ok' if bias_ok else 'OFF'}) sd {r['sd']:.3f} (paper {paper_sd:.2f},"
            f" {'ok' if sd_ok else 'OFF'})"
        )
        ols_bias[delta] = rep.row("ols", "delta")["bias"]
        sar_bias[delta] = rep.row("sar", "delta")["bias"]
    # attenuation pattern: baseline estimates shrink toward zero
    pattern_ok = (
        ols_bias[-0.5] > 0.15 and ols_bias[0.5] < -0.15 and abs(ols_bias[0.0]) < 0.1
        and sar_bias[-0.5] > 0.15 and sar_bias[0.5] < -0.15 and abs(sar_bias[0.0]) < 0.1
    )
    ok = ok and pattern_ok
    lines.append(
        "attenuation "
        + ("ok" if pattern_ok else "OFF")
        + f" (ols {ols_bias[-0.5]:+.2f}/{ols_bias[0.0]:+.2f}/{ols_bias[0.5]:+.2f},"
        + f" sar {sar_bias[-0.5]:+.2f}/{sar_bias[0.0]:+.2f}/{sar_bias[0.5]:+.2f})"
    )
    report(7, "table 1 reproduction", ok, "; ".join(lines))


def test_criterion_08_table3_coverage():
    cfg = ExperimentConfig(
        design="homophilic", n_total=1000, group_size=5, delta=0.0,
        replications=200, seed=12345,
    )
    rep = run_experiment(cfg)
    cov = {est: rep.row(est, "delta")["coverage"] for est in ("exp", "ols", "sar")}
    ok = 0.92 <= cov["exp"] <= 0.98 and cov["ols"] < 0.93 and cov["sar"] < 0.85
    report(
        8, "table 3 coverage", ok,
        f"exp {cov['exp']:.3f} (need [0.92, 0.98]), ols {cov['ols']:.3f} (< 0.93),"
        f" sar {cov['sar']:.3f} (< 0.85)",
    )


def big_adopter_component(G, seed):
    rng = np.random.default_rng(seed)
    A = np.ones((G, G), dtype=int)
    np.fill_diagonal(A, 0)
    return ComponentData(
        adjacency=A, X=rng.normal(size=(G, 2)) * 0.4, y=np.ones(G, dtype=int), S=1.0
    )


def test_criterion_09_sampling_accuracy():
    theta = Theta(beta=[0.4, -0.2], delta=0.5)
    # within 3 estimated SEs of exact at m = 2000
    dev_lines = []
    within = True
    for G, seed in ((6, 1), (7, 2), (8, 3)):
        comp = big_adopter_component(G, seed)
        exact = loglik_exact(comp, theta).loglik
        samp = loglik_sampled(comp, theta, 2000, np.random.default_rng(90 + G))
        se = samp.diagnostics["mc_se_loglik"]
        z = abs(samp.loglik - exact) / se
        within = within and z < 3.0
        dev_lines.append(f"G={G}: {z:.2f} SE")
    # variance scales as 1/m
    comp = big_adopter_component(7, 9)
    ms = np.array([125, 250, 500, 1000, 2000, 4000])
    log_var = []
    for m in ms:
        draws = [
            loglik_sampled(comp, theta, int(m), np.random.default_rng(1000 + m * 1000 + r)).loglik
            for r in range(250)
        ]
        log_var.append(math.log(np.var(draws, ddof=1)))
    slope = np.polyfit(np.log(ms), log_var, 1)[0]
    slope_ok = -1.1 <= slope <= -0.9
    ok = within and slope_ok
    report(
        9, "permutation sampling", ok,
        f"{', '.join(dev_lines)}; variance log-log slope = {slope:.3f}",
    )


def test_criterion_10_rate_recovery_round_trip():
    worst = 0.0
    S = 1.0
    for lam in np.linspace(0.2, 2.0, 19):
        for delta in np.linspace(-1.0, 1.0, 21):
            lam_plus = lam * math.exp(delta)
            p00, p10, _, _ = dyad_probs_closed_form(lam, lam, lam_plus, lam_plus, S)
            lam_hat, lam_plus_hat = recover_rates_dyad(p00, p10, S)
            worst = max(worst, abs(lam_hat - lam), abs(lam_plus_hat - lam_plus))
    report(10, "rate recovery", worst < 1e-8, f"max abs dev = {worst:.3e}")


def test_criterion_11_estimand_oracles():
    # general_delta against the closed-form all-peers contrast on a dyad
    lam, delta, S = 0.8, 0.7, 1.0
    net = make_block_network(2, 2)
    X = np.full((2, 1), math.log(lam))
    theta = Theta(beta=[1.0], delta=delta)
    est = general_delta(
        net, X, theta, S,
        np.array([np.nan, 0.0]), np.array([np.nan, np.inf]),
        0, 8000, np.random.default_rng(11),
    )
    want = prob_delta_all_peers(lam, lam * math.exp(delta), S)
    z1 = abs(est.value - want) / est.mc_se
    # expected time to full adoption, iid case: sum_k 1/(k lam)
    n, lam2 = 6, 0.9
    net2 = make_block_network(n, n)
    X2 = np.full((n, 1), math.log(lam2))
    est2 = expected_time_to_fraction(
        net2, X2, Theta(beta=[1.0], delta=0.0), 1.0, 6000, np.random.default_rng(12)
    )
    want2 = sum(1.0 / (k * lam2) for k in range(1, n + 1))
    z2 = abs(est2.value - want2) / est2.mc_se
    ok = z1 < 3.0 and z2 < 3.0
    report(
        11, "estimand oracles", ok,
        f"all-peers contrast {z1:.2f} SE, time-to-fraction {z2:.2f} SE",
    )
