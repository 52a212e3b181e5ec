"""Logistic regression with Wald inference, 2x2 odds ratios and Welch t-tests."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import optimize, special

Z_95 = 1.96
SEPARATION_LIMIT = 30.0
# fitted log-odds past this trigger the exact separability check below
SATURATION_LIMIT = 15.0


class SeparationError(ValueError):
    """Coefficients diverge because the outcome is (quasi-)perfectly separated.

    ``coefficients`` holds the last iterate on the caller's scale.
    """

    def __init__(self, message: str, coefficients=None):
        super().__init__(message)
        self.coefficients = coefficients


class RankError(ValueError):
    """Design matrix or information matrix is singular."""


class ConvergenceError(RuntimeError):
    pass


class ZeroCellError(ValueError):
    pass


class DegenerateSampleError(ValueError):
    pass


@dataclass(frozen=True)
class FittedLogistic:
    coefficients: NDArray[np.float64]
    covariance: NDArray[np.float64]
    n_iterations: int
    converged: bool
    log_likelihood: float
    gradient_norm: float
    names: tuple[str, ...] = ()

    @property
    def standard_errors(self) -> NDArray[np.float64]:
        return np.sqrt(np.diag(self.covariance))

    def linear_predictor(self, X: ArrayLike) -> NDArray[np.float64]:
        return np.asarray(X, dtype=float) @ self.coefficients

    def predict_proba(self, X: ArrayLike) -> NDArray[np.float64]:
        return special.expit(self.linear_predictor(X))


@dataclass(frozen=True)
class InferenceRow:
    name: str
    odds_ratio: float
    ci_low: float
    ci_high: float
    p_value: float


@dataclass(frozen=True)
class TTestResult:
    mean_difference: float
    ci_low: float
    ci_high: float
    t_statistic: float
    dof: float
    p_value: float


def normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


def _log_likelihood(eta: NDArray[np.float64], y: NDArray[np.float64]) -> float:
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def is_separable(X: NDArray, y: NDArray, tol: float = 1e-7) -> bool:
    """True when some direction b has sign(2y-1) * X b >= 0 everywhere and > 0 somewhere.

    Covers complete and quasi-complete separation; the MLE is then infinite. Solved as a
    linear program over the box |b| <= 1, maximising the summed signed margins.
    """
    S = (2.0 * y - 1.0)[:, None] * X
    res = optimize.linprog(
        -S.sum(axis=0), A_ub=-S, b_ub=np.zeros(len(y)), bounds=[(-1.0, 1.0)] * X.shape[1], method="highs"
    )
    return bool(res.status == 0 and -res.fun > tol * max(1.0, np.abs(S).sum()))


def fit_logistic(
    X: ArrayLike,
    y: ArrayLike,
    tol: float = 1e-8,
    max_iter: int = 100,
    names: tuple[str, ...] | list[str] = (),
) -> FittedLogistic:
    """Maximum-likelihood logistic regression by iteratively reweighted least squares.

    ``X`` must already contain the intercept column. Columns are rescaled to unit
    standard deviation for the Newton iterations and the coefficients and
    covariance are mapped back, so reported values are on the caller's scale.
    Convergence means the max-abs score ``X.T @ (y - p)`` is below ``tol``.

    Raises:
        RankError: the design is rank deficient or the information matrix is singular.
        SeparationError: a (rescaled) coefficient exceeds 30 in magnitude, or the
            converged fit has log-odds beyond 15 and the classes are linearly separable.
        ConvergenceError: ``max_iter`` Newton steps without meeting ``tol``.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise ValueError(f"shape mismatch: X {X.shape}, y {y.shape}")
    n, p = X.shape
    if n <= p:
        raise RankError(f"need more rows than columns (n={n}, p={p})")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise ValueError("y must be binary 0/1")
    if np.any(np.all(X == 0.0, axis=0)):
        raise RankError("design has an all-zero column")

    sd = X.std(axis=0)
    scale = np.where(sd > 0.0, sd, np.abs(X).max(axis=0))
    Xs = X / scale
    if np.linalg.matrix_rank(Xs) < p:
        raise RankError("design matrix is rank deficient")

    beta = np.zeros(p)
    eta = Xs @ beta
    ll = _log_likelihood(eta, y)
    converged = False
    it = 0
    grad = Xs.T @ (y - special.expit(eta))
    for it in range(1, max_iter + 1):
        mu = special.expit(eta)
        w = mu * (1.0 - mu)
        info = (Xs * w[:, None]).T @ Xs
        grad = Xs.T @ (y - mu)
        if np.max(np.abs(grad / scale)) < tol:
            converged = True
            it -= 1
            break
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError as exc:
            raise RankError("information matrix is singular") from exc
        # step halving keeps the likelihood monotone near separation
        t = 1.0
        for _ in range(30):
            candidate = beta + t * step
            eta_c = Xs @ candidate
            ll_c = _log_likelihood(eta_c, y)
            if ll_c >= ll - 1e-12 * (1.0 + abs(ll)):
                break
            t *= 0.5
        beta, eta, ll = candidate, eta_c, ll_c
        if np.max(np.abs(beta)) > SEPARATION_LIMIT:
            raise SeparationError(
                f"coefficient magnitude {np.max(np.abs(beta)):.1f} exceeds {SEPARATION_LIMIT:g}; "
                "the outcome appears perfectly separated",
                coefficients=beta / scale,
            )

    if not converged:
        raise ConvergenceError(f"IRLS did not reach tol={tol:g} in {max_iter} iterations")
    if np.max(np.abs(eta)) > SATURATION_LIMIT and is_separable(Xs, y):
        # the gradient vanishes once fitted probabilities saturate, before beta is large
        raise SeparationError(
            f"fitted log-odds reach {np.max(np.abs(eta)):.1f}; the outcome appears perfectly separated",
            coefficients=beta / scale,
        )

    mu = special.expit(eta)
    info = (Xs * (mu * (1.0 - mu))[:, None]).T @ Xs
    try:
        cov_s = np.linalg.inv(info)
    except np.linalg.LinAlgError as exc:
        raise RankError("information matrix is singular at the solution") from exc
    cov_s = 0.5 * (cov_s + cov_s.T)
    coef = beta / scale
    cov = cov_s / np.outer(scale, scale)
    grad_raw = X.T @ (y - special.expit(X @ coef))
    return FittedLogistic(
        coefficients=coef,
        covariance=cov,
        n_iterations=it,
        converged=True,
        log_likelihood=_log_likelihood(X @ coef, y),
        gradient_norm=float(np.max(np.abs(grad_raw))),
        names=tuple(names),
    )


def wald_inference(fit: FittedLogistic, index: int, name: str | None = None) -> InferenceRow:
    """Odds ratio, Wald 95% interval and two-sided p-value for one coefficient."""
    if not fit.converged:
        raise ConvergenceError("Wald inference needs a converged fit")
    beta = float(fit.coefficients[index])
    se = float(math.sqrt(fit.covariance[index, index]))
    if name is None:
        name = fit.names[index] if index < len(fit.names) else f"x{index}"
    return InferenceRow(
        name=name,
        odds_ratio=math.exp(beta),
        ci_low=math.exp(beta - Z_95 * se),
        ci_high=math.exp(beta + Z_95 * se),
        p_value=normal_two_sided_p(beta / se),
    )


def odds_ratio_2x2(
    exposed: tuple[int, int], reference: tuple[int, int], name: str = "exposed"
) -> InferenceRow:
    """Unadjusted odds ratio with a Woolf (log-scale) interval.

    ``exposed`` and ``reference`` are ``(events, non_events)`` pairs.
    """
    a, b = exposed
    c, d = reference
    if min(a, b, c, d) < 1:
        raise ZeroCellError(f"2x2 table has an empty cell: {(a, b, c, d)}")
    log_or = math.log((a / b) / (c / d))
    se = math.sqrt(1 / a + 1 / b + 1 / c + 1 / d)
    return InferenceRow(
        name=name,
        odds_ratio=math.exp(log_or),
        ci_low=math.exp(log_or - Z_95 * se),
        ci_high=math.exp(log_or + Z_95 * se),
        p_value=normal_two_sided_p(log_or / se),
    )


def welch_t_test(a: ArrayLike, b: ArrayLike, confidence: float = 0.95) -> TTestResult:
    """Two-sample t-test without the equal-variance assumption (mean(a) - mean(b))."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise DegenerateSampleError("each group needs at least two observations")
    va = a.var(ddof=1) / a.size
    vb = b.var(ddof=1) / b.size
    se2 = va + vb
    if se2 <= 0.0:
        raise DegenerateSampleError("both groups have zero variance")
    diff = float(a.mean() - b.mean())
    se = math.sqrt(se2)
    dof = se2**2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    t_stat = diff / se
    p = float(2.0 * special.stdtr(dof, -abs(t_stat)))
    q = float(special.stdtrit(dof, 0.5 + confidence / 2.0))
    return TTestResult(
        mean_difference=diff,
        ci_low=diff - q * se,
        ci_high=diff + q * se,
        t_statistic=t_stat,
        dof=float(dof),
        p_value=min(1.0, p),
    )
