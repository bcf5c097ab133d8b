"""Benchmark estimators: peer-outcome regression and Gaussian SAR MLE.

Both regress the binary outcome on covariates and the row-normalized peer
average outcome, mirroring common linear-in-means practice. The SAR model is
estimated by Gaussian maximum likelihood despite the binary outcome; this is
an intentionally misspecified benchmark. An intercept is always included.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .data import Sample

Z95 = 1.959963984540054


@dataclass(frozen=True)
class BaselineFit:
    method: str
    delta_hat: float
    beta_hat: np.ndarray
    se_delta: float
    se_beta: np.ndarray
    ci_delta: tuple
    diagnostics: dict

    def to_json_dict(self) -> dict:
        return {
            "method": self.method,
            "delta": self.delta_hat,
            "beta": self.beta_hat.tolist(),
            "se": [self.se_delta] + self.se_beta.tolist(),
            "ci": list(self.ci_delta),
            "diagnostics": self.diagnostics,
        }


def _row_normalized(net) -> np.ndarray:
    deg = net.degrees.astype(float)
    deg_safe = np.where(deg > 0, deg, 1.0)
    return net.adjacency / deg_safe[:, None]


def fit_ols(sample: Sample) -> BaselineFit:
    """Least squares of y on [1, X, Wy] with heteroskedasticity-robust SEs.

    The binary outcome makes the regression errors heteroskedastic, so the
    covariance sandwiches per-observation squared residuals (White form).
    """
    Wt = _row_normalized(sample.net)
    wy = Wt @ sample.y
    Z = np.column_stack([np.ones(sample.n), sample.X, wy])
    y = sample.y.astype(float)
    k = Z.shape[1]
    ZtZ = Z.T @ Z
    collinear = np.linalg.matrix_rank(ZtZ) < k
    bread = np.linalg.pinv(ZtZ) if collinear else np.linalg.inv(ZtZ)
    coef = bread @ (Z.T @ y)
    resid = y - Z @ coef
    meat = Z.T @ (Z * (resid**2)[:, None])
    vcov = bread @ meat @ bread
    se = np.sqrt(np.maximum(np.diag(vcov), 0.0))
    delta_hat = coef[-1]
    return BaselineFit(
        method="OLS",
        delta_hat=float(delta_hat),
        beta_hat=coef[1:-1],
        se_delta=float(se[-1]),
        se_beta=se[1:-1],
        ci_delta=(float(delta_hat - Z95 * se[-1]), float(delta_hat + Z95 * se[-1])),
        diagnostics={
            "collinear": bool(collinear),
            "intercept": float(coef[0]),
        },
    )


def _sar_eigenvalues(sample: Sample) -> np.ndarray:
    """Eigenvalues of the row-normalized adjacency, computed per component."""
    Wt = _row_normalized(sample.net)
    eigs = []
    for members in sample.net.components:
        block = Wt[np.ix_(members, members)]
        eigs.append(np.real(np.linalg.eigvals(block)))
    return np.concatenate(eigs)


def _sar_profile(sample: Sample, eigs: np.ndarray):
    Wt = _row_normalized(sample.net)
    y = sample.y.astype(float)
    wy = Wt @ y
    Z = np.column_stack([np.ones(sample.n), sample.X])
    ZtZi = np.linalg.pinv(Z.T @ Z)
    n = sample.n

    def neg_profile(rho):
        e = y - rho * wy
        beta = ZtZi @ (Z.T @ e)
        u = e - Z @ beta
        sigma2 = float(u @ u) / n
        logdet = float(np.log(np.abs(1.0 - rho * eigs)).sum())
        return -(logdet - 0.5 * n * np.log(sigma2))

    return neg_profile, wy, Z, ZtZi


def _sar_full_loglik(sample: Sample, eigs: np.ndarray, wy, Z):
    y = sample.y.astype(float)
    n = sample.n

    def loglik(params):
        rho, sigma2 = params[0], params[-1]
        beta = params[1:-1]
        if sigma2 <= 0 or not -1 < rho < 1:
            return -np.inf
        u = y - rho * wy - Z @ beta
        logdet = float(np.log(np.abs(1.0 - rho * eigs)).sum())
        return (
            logdet
            - 0.5 * n * np.log(2 * np.pi * sigma2)
            - 0.5 * float(u @ u) / sigma2
        )

    return loglik


def fit_sar_mle(sample: Sample) -> BaselineFit:
    """Gaussian SAR lag model via concentrated likelihood over rho.

    The log-determinant of (I - rho W) factorizes over components; standard
    errors come from the numerical information matrix of the full
    likelihood at the optimum.
    """
    eigs = _sar_eigenvalues(sample)
    neg_profile, wy, Z, ZtZi = _sar_profile(sample, eigs)
    res = minimize_scalar(
        neg_profile, bounds=(-0.999, 0.999), method="bounded",
        options={"xatol": 1e-10},
    )
    rho = float(res.x)
    boundary = abs(rho) > 0.995
    y = sample.y.astype(float)
    e = y - rho * wy
    beta_full = ZtZi @ (Z.T @ e)
    u = e - Z @ beta_full
    sigma2 = float(u @ u) / sample.n

    loglik = _sar_full_loglik(sample, eigs, wy, Z)
    params = np.concatenate([[rho], beta_full, [sigma2]])
    H = _numerical_hessian(loglik, params)
    try:
        vcov = np.linalg.inv(-H)
    except np.linalg.LinAlgError:
        vcov = np.linalg.pinv(-H)
    se = np.sqrt(np.maximum(np.diag(vcov), 0.0))
    return BaselineFit(
        method="SAR-MLE",
        delta_hat=rho,
        beta_hat=beta_full[1:],
        se_delta=float(se[0]),
        se_beta=se[2:2 + sample.p],
        ci_delta=(rho - Z95 * se[0], rho + Z95 * se[0]),
        diagnostics={
            "boundary": bool(boundary),
            "sigma2": sigma2,
            "intercept": float(beta_full[0]),
        },
    )


def _numerical_hessian(f, x0, rel_step=1e-5):
    k = x0.shape[0]
    H = np.zeros((k, k))
    h = rel_step * (1.0 + np.abs(x0))
    for i in range(k):
        for j in range(i, k):
            xpp = x0.copy(); xpp[i] += h[i]; xpp[j] += h[j]
            xpm = x0.copy(); xpm[i] += h[i]; xpm[j] -= h[j]
            xmp = x0.copy(); xmp[i] -= h[i]; xmp[j] += h[j]
            xmm = x0.copy(); xmm[i] -= h[i]; xmm[j] -= h[j]
            H[i, j] = (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4 * h[i] * h[j])
            H[j, i] = H[i, j]
    return H
