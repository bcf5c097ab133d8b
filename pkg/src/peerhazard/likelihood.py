"""Closed-form observed-data likelihood with permutation marginalization.

The probability of a component's outcome vector is a sum over adoption
orders of the G adopters. Each order contributes a product of the adopters'
rates times an inner sum over the hazard totals c_0..c_G, which is (up to
sign) the divided difference of t -> exp(-t*S) at those nodes.

Two evaluation routes are used per permutation:
  - when the c nodes are well separated, the explicit partial-fraction sum
    and the analytical score/Hessian accumulation formulas, fully
    vectorized over permutations;
  - when any pair of nodes is close (knife-edge cases where a move leaves
    the total hazard unchanged), the divided difference is evaluated as the
    corner entry of the matrix exponential of a bidiagonal node matrix,
    which is exact under confluence. Derivatives on this route use the
    identity d/dx_j [x_0..x_n]f = [x_0..x_n, x_j]f.

Everything is accumulated in shifted log space so large rate configurations
during line search degrade to -inf rather than overflowing.
"""

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .data import Sample
from .rates import Theta

# relative node-separation threshold below which a permutation is routed to
# the confluent (matrix-exponential) evaluation
CONFLUENT_SWITCH = 1e-6

DEFAULT_ENUM_CAP = 8
DEFAULT_SAMPLE_SIZE = 2000


@dataclass
class ComponentData:
    """One connected component's adjacency, covariates, outcomes, horizon."""

    adjacency: np.ndarray
    X: np.ndarray
    y: np.ndarray
    S: float

    def __post_init__(self):
        self.adjacency = np.asarray(self.adjacency, dtype=float)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y, dtype=np.int8)
        self.n = self.adjacency.shape[0]
        if self.X.shape[0] != self.n or self.y.shape[0] != self.n:
            raise ValueError("component dimension mismatch")
        self.degrees = self.adjacency.sum(axis=1)
        self.adopters = np.flatnonzero(self.y == 1)
        self.G = int(self.adopters.shape[0])
        self._exact_structure = None

    @property
    def p(self) -> int:
        return self.X.shape[1]


def split_sample(sample: Sample) -> list[ComponentData]:
    """Per-component data in deterministic component order."""
    comps = []
    for members in sample.net.components:
        comps.append(
            ComponentData(
                adjacency=sample.net.adjacency[np.ix_(members, members)],
                X=sample.X[members],
                y=sample.y[members],
                S=sample.S,
            )
        )
    return comps


@dataclass(frozen=True)
class LikelihoodEval:
    """Log-likelihood with analytical score and Hessian at one theta."""

    loglik: float
    score: np.ndarray
    hessian: np.ndarray
    n_perms_used: int
    is_sampled: bool
    diagnostics: dict = field(default_factory=dict)


def _perm_structure(comp: ComponentData, perms: np.ndarray) -> dict:
    """theta-independent arrays for a set of adopter permutations.

    perms: (P, G) local adopter indices. Returns counts of adopted neighbors
    per (perm, step, individual), the active (not-yet-adopted) masks, the
    adopted-neighbor fractions, and the adopters' own step-level pieces.
    """
    P, G = perms.shape
    n = comp.n
    K = G + 1
    deg_safe = np.where(comp.degrees > 0, comp.degrees, 1.0)

    if G > 0:
        nbr = comp.adjacency[perms]  # (P, G, n)
        counts = np.concatenate(
            [np.zeros((P, 1, n)), np.cumsum(nbr, axis=1)], axis=1
        )
        onehot = np.zeros((P, G, n))
        np.put_along_axis(onehot, perms[:, :, None], 1.0, axis=2)
        cum = np.cumsum(onehot, axis=1)
        active = np.concatenate([np.ones((P, 1, n)), 1.0 - cum], axis=1)
    else:
        counts = np.zeros((P, K, n))
        active = np.ones((P, K, n))
    frac = counts / deg_safe[None, None, :]

    if G > 0:
        idx_p = np.arange(P)[:, None]
        idx_g = np.arange(G)[None, :]
        step_frac = frac[idx_p, idx_g, perms]  # (P, G)
        sum_x = comp.X[perms].sum(axis=1)  # (P, p)
        vsum = np.concatenate([sum_x, step_frac.sum(axis=1)[:, None]], axis=1)
    else:
        step_frac = np.zeros((P, 0))
        vsum = np.zeros((P, comp.p + 1))

    return {
        "perms": perms,
        "counts": counts,
        "active": active,
        "frac": frac,
        "step_frac": step_frac,
        "vsum": vsum,
        "deg_safe": deg_safe,
    }


def _exact_perms(comp: ComponentData) -> np.ndarray:
    if comp.G == 0:
        return np.zeros((1, 0), dtype=np.intp)
    return np.array(
        list(itertools.permutations(comp.adopters.tolist())), dtype=np.intp
    )


def _exp_divided_difference(nodes: np.ndarray, S: float) -> float:
    """Divided difference of t -> exp(-t*S) over the node list (with repeats).

    Corner entry of the matrix exponential of the upper-bidiagonal node
    matrix, computed by Taylor series with scaling and squaring after
    shifting out the mean node. Every entry of the shifted exponential is
    nonnegative (divided differences of exp at real nodes are positive), so
    the squaring phase cannot cancel; exact for coincident nodes. Library
    expm routines lose the corner entry at near-coincident nodes.
    """
    m = nodes.shape[0]
    if m == 1:
        return float(np.exp(-S * nodes[0]))
    y = -S * np.asarray(nodes, dtype=float)
    mu = y.mean()
    A = np.diag(y - mu) + np.diag(np.ones(m - 1), 1)
    nrm = np.abs(A).sum(axis=1).max()
    s = max(0, int(np.ceil(np.log2(nrm / 0.5)))) if nrm > 0.5 else 0
    A /= 2.0**s
    E = np.eye(m) + A
    term = A
    for k in range(2, 40):
        term = term @ A / k
        E = E + term
        if np.abs(term).max() <= 1e-18 * np.abs(E).max():
            break
    for _ in range(s):
        E = E @ E
    return float((-S) ** (m - 1) * np.exp(mu) * E[0, -1])


def _inner_sum_confluent(nodes: np.ndarray, S: float) -> float:
    """Signed inner sum sum_g exp(-c_g S) / prod_{h!=g} (c_h - c_g)."""
    G = nodes.shape[0] - 1
    return ((-1.0) ** G) * _exp_divided_difference(nodes, S)


def _atoms_fast(struct, c, q, Q, logR, vsum, S, rows):
    """Per-(perm, step) signed log-terms and derivative pieces.

    rows selects the permutations handled on this route. Returns flat atom
    arrays: sign, log|a|, u = grad(a)/a, Hn = hess(a)/a.
    """
    c = c[rows]
    q = q[rows]
    Q = Q[rows]
    logR = logR[rows]
    vsum = vsum[rows]
    P, K = c.shape
    qd = q.shape[2]

    M = c[:, None, :] - c[:, :, None]  # M[p, g, h] = c_h - c_g
    off = ~np.eye(K, dtype=bool)
    M_safe = np.where(off[None], M, 1.0)
    log_omega = np.where(off[None], np.log(np.abs(M_safe)), 0.0).sum(axis=2)
    sign = np.prod(np.where(off[None], np.sign(M_safe), 1.0), axis=2)
    logA = logR[:, None] - c * S - log_omega

    invM = np.where(off[None], 1.0 / M_safe, 0.0)
    sum_inv = invM.sum(axis=2)
    cross_q = np.einsum("pgh,phj->pgj", invM, q) - sum_inv[:, :, None] * q
    u = vsum[:, None, :] - S * q - cross_q

    invM2 = invM * invM
    sum_inv2 = invM2.sum(axis=2)
    cross_Q = (
        np.einsum("pgh,phab->pgab", invM, Q) - sum_inv[:, :, None, None] * Q
    )
    A1 = np.einsum("pgh,pha,phb->pgab", invM2, q, q)
    A2 = np.einsum("pgh,pha->pga", invM2, q)
    qq = q[:, :, :, None] * q[:, :, None, :]
    sq = (
        A1
        - A2[:, :, :, None] * q[:, :, None, :]
        - q[:, :, :, None] * A2[:, :, None, :]
        + sum_inv2[:, :, None, None] * qq
    )
    du = -S * Q - cross_Q + sq
    Hn = u[:, :, :, None] * u[:, :, None, :] + du

    flat = P * K
    return (
        sign.reshape(flat),
        logA.reshape(flat),
        u.reshape(flat, qd),
        Hn.reshape(flat, qd, qd),
    )


def _atoms_confluent(c, q, Q, logR, vsum, S, rows):
    """One atom per knife-edge permutation via confluent divided differences."""
    qd = q.shape[2]
    signs, logs, us, Hs = [], [], [], []
    for p in rows:
        nodes = c[p]
        K = nodes.shape[0]
        G = K - 1
        D = _inner_sum_confluent(nodes, S)
        D = max(D, 0.0)
        if D <= 0.0:
            continue  # exactly-zero contribution; cannot occur for finite rates
        sgn = (-1.0) ** G
        Dj = np.array(
            [
                sgn * _exp_divided_difference(np.append(nodes, nodes[j]), S)
                for j in range(K)
            ]
        )
        Djk = np.zeros((K, K))
        for j in range(K):
            for k in range(j, K):
                mult = 2.0 if j == k else 1.0
                Djk[j, k] = mult * sgn * _exp_divided_difference(
                    np.append(nodes, [nodes[j], nodes[k]]), S
                )
                Djk[k, j] = Djk[j, k]
        gradD = Dj @ q[p]  # (qd,)
        hessD = (
            np.einsum("jk,ja,kb->ab", Djk, q[p], q[p])
            + np.einsum("j,jab->ab", Dj, Q[p])
        )
        r = gradD / D
        v = vsum[p]
        Hn = (
            np.outer(v, v)
            + np.outer(v, r)
            + np.outer(r, v)
            + hessD / D
        )
        signs.append(1.0)
        logs.append(logR[p] + np.log(D))
        us.append(v + r)
        Hs.append(Hn)
    if not signs:
        z = np.zeros((0,))
        return z, z, np.zeros((0, qd)), np.zeros((0, qd, qd))
    return (
        np.asarray(signs),
        np.asarray(logs),
        np.asarray(us),
        np.asarray(Hs),
    )


def _theta_arrays(comp: ComponentData, struct: dict, theta: Theta):
    """Rate sums c, their gradients q and Hessians Q, and order-product logs."""
    perms = struct["perms"]
    P, G = perms.shape
    xb = comp.X @ theta.beta
    frac = struct["frac"]
    active = struct["active"]
    # extreme theta during line search can overflow exp; the caller detects
    # non-finite hazard totals and reports -inf, so the warnings are noise
    with np.errstate(over="ignore", invalid="ignore"):
        lam = np.exp(xb[None, None, :] + theta.delta * frac)
        lamA = lam * active
        c = lamA.sum(axis=2)  # (P, K)
        lamAf = lamA * frac
        q_x = np.einsum("pki,ij->pkj", lamA, comp.X)
        q_d = lamAf.sum(axis=2)
        q = np.concatenate([q_x, q_d[:, :, None]], axis=2)
        Q_xx = np.einsum("pki,ia,ib->pkab", lamA, comp.X, comp.X)
        Q_xd = np.einsum("pki,ia->pka", lamAf, comp.X)
        Q_dd = (lamAf * frac).sum(axis=2)
    K = G + 1
    qd = comp.p + 1
    Q = np.zeros((P, K, qd, qd))
    Q[:, :, :-1, :-1] = Q_xx
    Q[:, :, :-1, -1] = Q_xd
    Q[:, :, -1, :-1] = Q_xd
    Q[:, :, -1, -1] = Q_dd
    if G > 0:
        step_log = xb[perms] + theta.delta * struct["step_frac"]
        logR = step_log.sum(axis=1)
    else:
        logR = np.zeros(P)
    return c, q, Q, logR


def _eval_perms(comp: ComponentData, struct: dict, theta: Theta):
    """Aggregate atoms into (log sum, score, Hessian, diagnostics)."""
    c, q, Q, logR = _theta_arrays(comp, struct, theta)
    vsum = struct["vsum"]
    P, K = c.shape
    qd = comp.p + 1

    if not np.all(np.isfinite(c)):
        return -np.inf, np.zeros(qd), np.zeros((qd, qd)), {"overflow": True}

    if K > 1:
        M = np.abs(c[:, None, :] - c[:, :, None])
        M[:, np.arange(K), np.arange(K)] = np.inf
        sep = M.min(axis=(1, 2))
        scale = np.maximum(1.0, np.abs(c).max(axis=1))
        slow = sep < CONFLUENT_SWITCH * scale
    else:
        slow = np.zeros(P, dtype=bool)

    fast_rows = np.flatnonzero(~slow)
    slow_rows = np.flatnonzero(slow)
    parts = []
    if fast_rows.size:
        parts.append(_atoms_fast(struct, c, q, Q, logR, vsum, comp.S, fast_rows))
    if slow_rows.size:
        parts.append(_atoms_confluent(c, q, Q, logR, vsum, comp.S, slow_rows))
    sign = np.concatenate([p[0] for p in parts])
    logA = np.concatenate([p[1] for p in parts])
    u = np.concatenate([p[2] for p in parts])
    Hn = np.concatenate([p[3] for p in parts])

    diagnostics = {"n_confluent": int(slow_rows.size), "n_clamped": 0}
    finite = np.isfinite(logA)
    if not finite.all():
        # exp(-c S) underflow: those atoms contribute 0
        sign, logA, u, Hn = sign[finite], logA[finite], u[finite], Hn[finite]
    if logA.size == 0:
        return -np.inf, np.zeros(qd), np.zeros((qd, qd)), diagnostics

    shift = logA.max()
    w = sign * np.exp(logA - shift)
    total = w.sum()
    if not total > 0:
        diagnostics["n_clamped"] = 1
        return -np.inf, np.zeros(qd), np.zeros((qd, qd)), diagnostics
    loglik = shift + np.log(total)
    score = (w[:, None] * u).sum(axis=0) / total
    hess = (w[:, None, None] * Hn).sum(axis=0) / total - np.outer(score, score)
    hess = 0.5 * (hess + hess.T)
    return loglik, score, hess, diagnostics


def perm_term(comp: ComponentData, p, theta: Theta) -> float:
    """Probability contribution of one adoption order (non-negative)."""
    p = np.asarray(p, dtype=np.intp).reshape(1, -1)
    if sorted(p[0].tolist()) != sorted(comp.adopters.tolist()):
        raise ValueError("p must be a permutation of the adopter set")
    struct = _perm_structure(comp, p)
    loglik, _, _, _ = _eval_perms(comp, struct, theta)
    return float(np.exp(loglik)) if np.isfinite(loglik) else 0.0


def loglik_exact(comp: ComponentData, theta: Theta) -> LikelihoodEval:
    """Sum over all G! adopter permutations with analytical derivatives."""
    if comp._exact_structure is None:
        comp._exact_structure = _perm_structure(comp, _exact_perms(comp))
    struct = comp._exact_structure
    loglik, score, hess, diag = _eval_perms(comp, struct, theta)
    return LikelihoodEval(
        loglik=loglik,
        score=score,
        hessian=hess,
        n_perms_used=struct["perms"].shape[0],
        is_sampled=False,
        diagnostics=diag,
    )


def loglik_sampled(
    comp: ComponentData,
    theta: Theta,
    m: int,
    rng: np.random.Generator,
    without_replacement: bool = False,
) -> LikelihoodEval:
    """Monte Carlo permutation estimate: G! times the sample mean of terms.

    Score and Hessian are exact derivatives of the sampled objective (common
    permutation draws across all three quantities).
    """
    if m < 1:
        raise ValueError("sample size m must be >= 1")
    G = comp.G
    n_total = math.factorial(G)
    if without_replacement and n_total <= 400000:
        all_perms = _exact_perms(comp)
        take = min(m, n_total)
        rows = rng.choice(n_total, size=take, replace=False)
        perms = all_perms[rows]
    elif G == 0:
        perms = np.zeros((1, 0), dtype=np.intp)
    else:
        perms = rng.permuted(
            np.tile(comp.adopters, (m, 1)), axis=1
        ).astype(np.intp)
    struct = _perm_structure(comp, perms)
    loglik, score, hess, diag = _eval_perms(comp, struct, theta)
    n_used = perms.shape[0]
    if np.isfinite(loglik):
        # loglik currently = ln(sum of sampled terms); rescale to the
        # unbiased estimator ln(G! * mean)
        loglik = loglik + math.log(n_total) - math.log(n_used)
        diag = dict(diag)
        diag["mc_se_loglik"] = _sampled_se(comp, struct, theta, loglik, n_total)
    return LikelihoodEval(
        loglik=loglik,
        score=score,
        hessian=hess,
        n_perms_used=n_used,
        is_sampled=True,
        diagnostics=diag,
    )


def _sampled_se(comp, struct, theta, loglik, n_total):
    """Estimated standard error of the sampled log-likelihood."""
    terms = perm_term_values(comp, struct["perms"], theta, struct=struct)
    m = terms.shape[0]
    if m < 2:
        return np.inf
    est = n_total * terms.mean()
    se_est = n_total * terms.std(ddof=1) / math.sqrt(m)
    return se_est / est if est > 0 else np.inf


def perm_term_values(
    comp: ComponentData, perms: np.ndarray, theta: Theta, struct: dict | None = None
) -> np.ndarray:
    """Vector of per-permutation probability terms (clamped at zero)."""
    if struct is None:
        struct = _perm_structure(comp, perms)
    c, _, _, logR = _theta_arrays(comp, struct, theta)
    P, K = c.shape
    out = np.zeros(P)
    if K == 1:
        return np.exp(logR - c[:, 0] * comp.S)
    M = np.abs(c[:, None, :] - c[:, :, None])
    M[:, np.arange(K), np.arange(K)] = np.inf
    sep = M.min(axis=(1, 2))
    scale = np.maximum(1.0, np.abs(c).max(axis=1))
    slow = sep < CONFLUENT_SWITCH * scale
    fast = ~slow
    if fast.any():
        cf = c[fast]
        Mf = cf[:, None, :] - cf[:, :, None]
        off = ~np.eye(K, dtype=bool)
        M_safe = np.where(off[None], Mf, 1.0)
        log_omega = np.where(off[None], np.log(np.abs(M_safe)), 0.0).sum(axis=2)
        sgn = np.prod(np.where(off[None], np.sign(M_safe), 1.0), axis=2)
        vals = (sgn * np.exp(-cf * comp.S - log_omega)).sum(axis=1)
        out[fast] = np.exp(logR[fast]) * np.maximum(vals, 0.0)
    for p in np.flatnonzero(slow):
        D = max(_inner_sum_confluent(c[p], comp.S), 0.0)
        out[p] = np.exp(logR[p]) * D
    return out


@dataclass(frozen=True)
class LikelihoodOptions:
    """Exact-below-cap / sampled-above policy for component evaluation."""

    enum_cap: int = DEFAULT_ENUM_CAP
    sample_size: int = DEFAULT_SAMPLE_SIZE
    seed: int = 0
    without_replacement: bool = False


def component_evals(
    components: list[ComponentData],
    theta: Theta,
    opts: LikelihoodOptions = LikelihoodOptions(),
) -> list[LikelihoodEval]:
    """Evaluate every component; sampled components get per-index streams."""
    evals = []
    children = np.random.SeedSequence(opts.seed).spawn(len(components))
    for idx, comp in enumerate(components):
        if comp.G <= opts.enum_cap:
            evals.append(loglik_exact(comp, theta))
        else:
            rng = np.random.default_rng(children[idx])
            evals.append(
                loglik_sampled(
                    comp, theta, opts.sample_size, rng,
                    without_replacement=opts.without_replacement,
                )
            )
    return evals


def total_loglik(
    sample: Sample,
    theta: Theta,
    opts: LikelihoodOptions = LikelihoodOptions(),
    components: list[ComponentData] | None = None,
) -> LikelihoodEval:
    """Sum of per-component log-likelihoods, scores, and Hessians."""
    if components is None:
        components = split_sample(sample)
    evals = component_evals(components, theta, opts)
    qd = sample.p + 1 if components == [] else components[0].p + 1
    loglik = 0.0
    score = np.zeros(qd)
    hess = np.zeros((qd, qd))
    n_perms = 0
    sampled = False
    n_confluent = 0
    n_clamped = 0
    for ev in evals:
        loglik += ev.loglik
        if np.isfinite(ev.loglik):
            score += ev.score
            hess += ev.hessian
        n_perms += ev.n_perms_used
        sampled = sampled or ev.is_sampled
        n_confluent += ev.diagnostics.get("n_confluent", 0)
        n_clamped += ev.diagnostics.get("n_clamped", 0)
    return LikelihoodEval(
        loglik=loglik,
        score=score,
        hessian=hess,
        n_perms_used=n_perms,
        is_sampled=sampled,
        diagnostics={"n_confluent": n_confluent, "n_clamped": n_clamped},
    )
