"""Significance regressions of a target on Shapley-value columns.

Both fits carry a tiny L1 penalty (intercept unpenalized) whose only job is
to break exact-collinearity ties; reported standard errors deliberately use
the classical unpenalized formulas evaluated at the penalized solution,
restricted to the columns the penalty left nonzero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

from .errors import StatsError

OLS_TOL = 1e-10
OLS_MAX_SWEEPS = 10_000
LOGISTIC_TOL = 1e-8
LOGISTIC_MAX_ITER = 100
SEPARATION_COEF_LIMIT = 30.0
# residual variance below this relative floor is treated as an exact fit
PERFECT_FIT_EPS = 1e-24

INF_DOF = float("inf")


@dataclass(frozen=True)
class RegressionResult:
    """Coefficients and Wald statistics for one significance regression.

    ``dof`` is the residual degrees of freedom for a least-squares fit and
    infinity for a logistic fit (normal reference). Columns the L1 penalty
    zeroed out get std_error = inf, t = 0, p = 1 and are listed in
    ``dropped``.
    """

    coefficients: np.ndarray
    intercept: float
    std_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    dof: float
    converged: bool
    iterations: int
    separation_warning: bool = False

    @property
    def dropped(self) -> tuple[int, ...]:
        return tuple(int(i) for i in np.flatnonzero(self.coefficients == 0.0))

    @property
    def n_regressors(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class TaskKind:
    """Inferred prediction task: regression, binary, or multiclass.

    ``class_values`` holds the sorted distinct target values for
    classification tasks (binary maps the lower value to 0).
    """

    kind: str  # regression | binary | multiclass
    n_classes: int = 1
    class_values: tuple[float, ...] = ()


def infer_task(y) -> TaskKind:
    """Classify the target: 2 distinct values = binary, 3..10 distinct
    integral values = multiclass, anything else = regression."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        raise StatsError("empty target")
    if np.isnan(y).any():
        raise StatsError("target contains NaN")
    distinct = np.unique(y)
    if len(distinct) == 1:
        raise StatsError(f"degenerate target: single distinct value {distinct[0]!r}")
    if len(distinct) == 2:
        return TaskKind("binary", 2, tuple(float(v) for v in distinct))
    if 3 <= len(distinct) <= 10 and np.all(distinct == np.floor(distinct)):
        return TaskKind("multiclass", len(distinct), tuple(float(v) for v in distinct))
    return TaskKind("regression")


def _soft_threshold(value: float, penalty: float) -> float:
    if value > penalty:
        return value - penalty
    if value < -penalty:
        return value + penalty
    return 0.0


def _lasso_cd(Xc: np.ndarray, yc: np.ndarray, col_scale: np.ndarray, l1_weight: float):
    """Cyclic coordinate descent for (1/2n)*RSS + l1*sum|beta| on centered data."""
    n, p = Xc.shape
    beta = np.zeros(p)
    resid = yc.copy()
    for sweep in range(1, OLS_MAX_SWEEPS + 1):
        max_delta = 0.0
        for j in range(p):
            if col_scale[j] == 0.0:
                continue
            old = beta[j]
            rho = float(Xc[:, j] @ resid) / n + col_scale[j] * old
            new = _soft_threshold(rho, l1_weight) / col_scale[j]
            if new != old:
                resid -= Xc[:, j] * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        if max_delta < OLS_TOL:
            return beta, resid, sweep, True
    return beta, resid, OLS_MAX_SWEEPS, False


def _wald_from_cov(coefficients, active, cov_active, dof):
    """Assemble per-regressor std errors / t / p given the active-set covariance."""
    p = len(coefficients)
    std_errors = np.full(p, np.inf)
    t_values = np.zeros(p)
    p_values = np.ones(p)
    for slot, j in enumerate(active):
        var = cov_active[slot + 1, slot + 1]  # slot 0 is the intercept
        se = float(np.sqrt(var)) if var > 0 else 0.0
        std_errors[j] = se
        if se > 0:
            t = coefficients[j] / se
        else:
            t = np.inf if coefficients[j] > 0 else (-np.inf if coefficients[j] < 0 else 0.0)
        t_values[j] = t
        if np.isinf(dof):
            p_values[j] = 2.0 * sps.norm.sf(abs(t))
        else:
            p_values[j] = 2.0 * sps.t.sf(abs(t), dof)
    return std_errors, t_values, p_values


def fit_ols(X, y, l1_weight: float = 1e-6) -> RegressionResult:
    """Least squares with a tiny L1 penalty and classical Wald statistics.

    Minimizes (1/2n)*RSS + l1_weight*sum|beta| by cyclic coordinate descent
    (intercept unpenalized, handled by centering). Standard errors use the
    textbook sigma^2 (X'X)^-1 on the intercept plus the nonzero-coefficient
    columns; dof = n - n_nonzero - 1. A numerically perfect fit yields
    std_error 0, t = signed infinity, p = 0.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise StatsError("X must be a 2-D matrix")
    n, p = X.shape
    if y.shape != (n,):
        raise StatsError(f"y must have {n} values")
    if np.isnan(X).any() or np.isnan(y).any():
        raise StatsError("NaN values are not allowed in the regression inputs")
    if l1_weight < 0:
        raise StatsError("l1_weight must be nonnegative")
    if n <= p + 1:
        raise StatsError(f"insufficient observations: n={n} must exceed p+1={p + 1}")

    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    yc = y - y_mean
    col_scale = np.einsum("ij,ij->j", Xc, Xc) / n

    beta, resid, iterations, converged = _lasso_cd(Xc, yc, col_scale, l1_weight)
    intercept = y_mean - float(x_mean @ beta)

    active = [j for j in range(p) if beta[j] != 0.0]
    k = len(active)
    dof = float(n - k - 1)
    rss = float(resid @ resid)
    sigma2 = rss / dof
    y_scale = max(1.0, float(y @ y) / n)
    if rss / n <= PERFECT_FIT_EPS * y_scale:
        sigma2 = 0.0

    Xa = np.column_stack([np.ones(n)] + [X[:, j] for j in active])
    try:
        xtx_inv = np.linalg.inv(Xa.T @ Xa)
    except np.linalg.LinAlgError:
        raise StatsError(
            f"singular design on nonzero columns {active}; zeroed columns were "
            f"{[j for j in range(p) if beta[j] == 0.0]}"
        ) from None
    cov = sigma2 * xtx_inv
    std_errors, t_values, p_values = _wald_from_cov(beta, active, cov, dof)

    return RegressionResult(
        coefficients=beta,
        intercept=intercept,
        std_errors=std_errors,
        t_values=t_values,
        p_values=p_values,
        dof=dof,
        converged=converged,
        iterations=iterations,
    )


def _weighted_lasso_cd(X, z, w, beta, intercept, l1_weight):
    """One full coordinate-descent solve of the weighted working-response problem."""
    n, p = X.shape
    w_sum = float(w.sum())
    resid = z - intercept - X @ beta
    col_scale = np.array([float(w @ (X[:, j] * X[:, j])) / n for j in range(p)])
    for _ in range(OLS_MAX_SWEEPS):
        max_delta = 0.0
        for j in range(p):
            if col_scale[j] == 0.0:
                continue
            old = beta[j]
            rho = float((w * X[:, j]) @ resid) / n + col_scale[j] * old
            new = _soft_threshold(rho, l1_weight) / col_scale[j]
            if new != old:
                resid -= X[:, j] * (new - old)
                beta[j] = new
                max_delta = max(max_delta, abs(new - old))
        old_b = intercept
        new_b = old_b + float(w @ resid) / w_sum
        if new_b != old_b:
            resid -= new_b - old_b
            intercept = new_b
            max_delta = max(max_delta, abs(new_b - old_b))
        if max_delta < OLS_TOL:
            break
    return beta, intercept


def fit_logistic(X, y, l1_weight: float = 1e-6) -> RegressionResult:
    """Penalized logistic regression via IRLS with proximal soft-thresholding.

    Each outer iteration solves the weighted working-response lasso by
    coordinate descent; convergence is max coefficient change < 1e-8 with at
    most 100 outer iterations. Wald z statistics come from the unpenalized
    inverse Fisher information at the solution. Any coefficient beyond +-30
    log-odds marks quasi-separation: the flag is set and iteration stops.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise StatsError("X must be a 2-D matrix")
    n, p = X.shape
    if y.shape != (n,):
        raise StatsError(f"y must have {n} values")
    if np.isnan(X).any() or np.isnan(y).any():
        raise StatsError("NaN values are not allowed in the regression inputs")
    if not np.all((y == 0.0) | (y == 1.0)):
        raise StatsError("y must contain only 0 and 1")
    if y.min() == y.max():
        raise StatsError("y contains a single class; logistic fit needs both")
    if n <= p + 1:
        raise StatsError(f"insufficient observations: n={n} must exceed p+1={p + 1}")

    beta = np.zeros(p)
    intercept = 0.0
    converged = False
    separation = False
    iterations = 0
    for iterations in range(1, LOGISTIC_MAX_ITER + 1):
        eta = intercept + X @ beta
        prob = 1.0 / (1.0 + np.exp(-eta))
        w = prob * (1.0 - prob)
        np.maximum(w, 1e-12, out=w)
        z = eta + (y - prob) / w
        old_beta = beta.copy()
        old_intercept = intercept
        beta, intercept = _weighted_lasso_cd(X, z, w, beta, intercept, l1_weight)
        if max(np.max(np.abs(beta - old_beta), initial=0.0), abs(intercept - old_intercept)) < LOGISTIC_TOL:
            converged = True
            break
        if np.max(np.abs(beta), initial=0.0) > SEPARATION_COEF_LIMIT or abs(intercept) > SEPARATION_COEF_LIMIT:
            separation = True
            break

    eta = intercept + X @ beta
    prob = 1.0 / (1.0 + np.exp(-eta))
    w = prob * (1.0 - prob)
    active = [j for j in range(p) if beta[j] != 0.0]
    Xa = np.column_stack([np.ones(n)] + [X[:, j] for j in active])
    fisher = Xa.T @ (Xa * w[:, None])
    try:
        cov = np.linalg.inv(fisher)
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(fisher)
    std_errors, t_values, p_values = _wald_from_cov(beta, active, cov, INF_DOF)

    return RegressionResult(
        coefficients=beta,
        intercept=intercept,
        std_errors=std_errors,
        t_values=t_values,
        p_values=p_values,
        dof=INF_DOF,
        converged=converged,
        iterations=iterations,
        separation_warning=separation,
    )
