"""Per-node GLM fitting with a robustness ladder.

The ladder used by :func:`fit_node_robust` is: drop linearly dependent
columns, try plain maximum likelihood (IRLS, or Newton for softmax), fall
back to Firth's bias-reduced logistic regression for binary children, and
finally remove predictors one at a time until a finite fit is obtained.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve, qr, solve_triangular
from scipy.special import expit, gammaln, log_expit, logsumexp

from .data import DesignMatrix, DistributionKind, as_design
from .errors import (
    DegenerateFit,
    Diverged,
    FitFailure,
    NotConverged,
    RankDeficient,
    Unfittable,
    ValidationError,
)

MAX_ITER = 100
TOL = 1e-8
# Deviance change is quadratic in the coefficient error, so convergence also
# asks for a small final step; this costs at most one extra iteration.
STEP_TOL = 1e-6
COEF_LIMIT = 15.0
SE_LIMIT = 1e3
RANK_TOL = 1e-7
RIDGE = 1e-4

_CANONICAL = {
    "gaussian": "identity",
    "binomial": "logit",
    "poisson": "log",
    "multinomial": "softmax",
}


@dataclass(frozen=True)
class FamilySpec:
    family: str

    def __post_init__(self):
        if self.family not in _CANONICAL:
            raise ValidationError(f"unsupported family {self.family!r}")

    @property
    def link(self) -> str:
        return _CANONICAL[self.family]

    @classmethod
    def of(cls, dist: DistributionKind | str) -> "FamilySpec":
        return cls(dist.kind if isinstance(dist, DistributionKind) else dist)


@dataclass
class GlmFit:
    """Result of fitting one node model.

    ``coefficients`` has shape ``(p,)``, or ``(C-1, p)`` for a softmax child
    with level 0 as the baseline. ``loglik`` is always the unpenalized
    log-likelihood evaluated at the returned coefficients.
    """

    coefficients: np.ndarray
    std_errors: np.ndarray
    loglik: float
    d: int
    method: str
    converged: bool
    iterations: int
    dropped_columns: tuple[str, ...] = ()
    column_labels: tuple[str, ...] = field(default=())


def _check_rank(X: np.ndarray) -> None:
    if X.shape[0] <= X.shape[1]:
        raise RankDeficient(f"n={X.shape[0]} must exceed p={X.shape[1]}")
    r = np.abs(np.diag(np.linalg.qr(X, mode="r")))
    if r.min() <= RANK_TOL * max(r.max(), 1e-300):
        raise RankDeficient("design matrix is not of full column rank")


def _se_from_information(info: np.ndarray) -> np.ndarray:
    try:
        c = cho_factor(info)
    except np.linalg.LinAlgError:
        return np.full(info.shape[0], np.inf)
    inv = cho_solve(c, np.eye(info.shape[0]))
    return np.sqrt(np.clip(np.diag(inv), 0.0, None))


def loglik(y: np.ndarray, mu: np.ndarray, family: str, sigma2: float | None = None) -> float:
    """Log-likelihood of a fitted mean (natural log)."""
    if family == "gaussian":
        n = len(y)
        return -0.5 * n * (np.log(2 * np.pi * sigma2) + 1.0)
    if family == "binomial":
        with np.errstate(divide="ignore"):
            terms = np.where(y > 0, np.log(mu), np.log1p(-mu))
        return float(np.sum(terms))
    if family == "poisson":
        with np.errstate(divide="ignore", invalid="ignore"):
            ylogmu = np.where(y > 0, y * np.log(mu), 0.0)
        return float(np.sum(ylogmu - mu - gammaln(y + 1.0)))
    raise ValidationError(f"no scalar log-likelihood for {family!r}")


def _binomial_loglik_eta(y, eta):
    return float(np.sum(np.where(y > 0, log_expit(eta), log_expit(-eta))))


def _fit_gaussian(X, y, labels):
    n, p = X.shape
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= RANK_TOL * max(diag.max(), 1e-300) or n <= p:
        raise RankDeficient("design matrix is not of full column rank")
    beta = solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / n
    if sigma2 <= 1e-20 * float(np.mean(y * y)):
        raise DegenerateFit("zero residual variance", coefficients=beta)
    rinv = solve_triangular(r, np.eye(p))
    se = np.sqrt(sigma2 * np.sum(rinv * rinv, axis=1))
    return GlmFit(beta, se, loglik(y, None, "gaussian", sigma2), p + 1, "irls", True, 1,
                  column_labels=labels)


def _deviance(y, mu, family):
    if family == "binomial":
        with np.errstate(divide="ignore"):
            return float(-2 * np.sum(np.where(y > 0, np.log(mu), np.log1p(-mu))))
    with np.errstate(divide="ignore", invalid="ignore"):
        ylog = np.where(y > 0, y * np.log(y / mu), 0.0)
    return float(2 * np.sum(ylog - (y - mu)))


def _mean(eta, family):
    if family == "binomial":
        return expit(eta)
    return np.exp(np.minimum(eta, 700.0))


def fit_irls(X, y, fam: FamilySpec | str) -> GlmFit:
    """Maximum-likelihood fit under the canonical link.

    Gaussian children are solved in closed form with the profile MLE of the
    variance (RSS/n). Binomial and Poisson use iteratively reweighted least
    squares until the relative deviance change drops below ``TOL`` and the
    last step is below ``STEP_TOL``.
    """
    fam = fam if isinstance(fam, FamilySpec) else FamilySpec(fam)
    dm = as_design(X)
    X = dm.values
    y = np.asarray(y, dtype=float)
    labels = dm.column_labels
    if fam.family == "multinomial":
        raise ValidationError("use fit_multinomial for softmax children")
    if fam.family == "gaussian":
        return _fit_gaussian(X, y, labels)

    family = fam.family
    _check_rank(X)
    n, p = X.shape
    if family == "binomial":
        mu = (y + 0.5) / 2.0
        eta = np.log(mu / (1 - mu))
    else:
        mu = y + 0.1
        eta = np.log(mu)
    dev_old = _deviance(y, mu, family)
    beta = None
    for it in range(1, MAX_ITER + 1):
        w = mu * (1 - mu) if family == "binomial" else mu
        if not np.all(np.isfinite(w)) or np.any(w <= 0):
            raise Diverged("non-finite working weights", coefficients=beta, iterations=it)
        z = eta + (y - mu) / w
        sw = np.sqrt(w)
        beta_new, *_ = np.linalg.lstsq(X * sw[:, None], z * sw, rcond=None)
        eta_new = X @ beta_new
        mu_new = _mean(eta_new, family)
        dev = _deviance(y, mu_new, family)
        halvings = 0
        while beta is not None and (not np.isfinite(dev) or dev > dev_old * (1 + 1e-12)) and halvings < 30:
            beta_new = 0.5 * (beta + beta_new)
            eta_new = X @ beta_new
            mu_new = _mean(eta_new, family)
            dev = _deviance(y, mu_new, family)
            halvings += 1
        if np.max(np.abs(beta_new)) > COEF_LIMIT:
            raise Diverged("coefficient exceeds separation threshold", coefficients=beta_new, iterations=it)
        step = beta_new - beta if beta is not None else np.inf
        beta, eta, mu = beta_new, eta_new, mu_new
        if abs(dev - dev_old) / (abs(dev) + 0.1) < TOL and np.max(np.abs(step)) < STEP_TOL:
            break
        dev_old = dev
    else:
        raise NotConverged(f"IRLS did not converge in {MAX_ITER} iterations", coefficients=beta,
                           iterations=MAX_ITER)
    w = mu * (1 - mu) if family == "binomial" else mu
    se = _se_from_information((X * w[:, None]).T @ X)
    if not np.all(np.isfinite(se)) or se.max() > SE_LIMIT:
        raise Diverged("standard errors exceed threshold", coefficients=beta, iterations=it)
    return GlmFit(beta, se, loglik(y, mu, family), p, "irls", True, it, column_labels=labels)


def _firth_hessian(X, mu, info_chol, h):
    """Exact Hessian of the Firth-penalized log-likelihood."""
    w = mu * (1 - mu)
    A = cho_solve(info_chol, np.eye(X.shape[1]))
    ht = h / w
    w1 = w * (1 - 2 * mu)
    w2 = w * (1 - 6 * w)
    M = np.stack([A @ ((X * (w1 * X[:, r])[:, None]).T @ X) for r in range(X.shape[1])])
    T = np.einsum("rab,sba->rs", M, M)
    info = (X * w[:, None]).T @ X
    return -info + 0.5 * ((X * (w2 * ht)[:, None]).T @ X - T)


def fit_logistic_firth(X, y) -> GlmFit:
    """Firth bias-reduced logistic regression.

    Maximizes the log-likelihood penalized by half the log-determinant of the
    Fisher information. The gradient is the hat-value adjusted score
    ``X'(y - mu + h (1/2 - mu))``; each iteration takes a Newton step on the
    exact penalized Hessian when it is negative definite and a Fisher-scoring
    step otherwise, with step halving on the penalized objective.
    Standard errors come from the Fisher information at the penalized optimum.
    """
    dm = as_design(X)
    X = dm.values
    y = np.asarray(y, dtype=float)
    _check_rank(X)
    n, p = X.shape

    def state(beta):
        eta = X @ beta
        mu = expit(eta)
        w = mu * (1 - mu)
        xw = X * np.sqrt(w)[:, None]
        info = xw.T @ xw
        try:
            c = cho_factor(info, lower=True)
        except np.linalg.LinAlgError:
            return None
        logdet = 2 * np.sum(np.log(np.abs(np.diag(c[0]))))
        pl = _binomial_loglik_eta(y, eta) + 0.5 * logdet
        return eta, mu, xw, c, pl

    beta = np.zeros(p)
    st = state(beta)
    if st is None:
        raise NotConverged("singular information at the starting point", coefficients=beta)
    for it in range(1, MAX_ITER + 1):
        eta, mu, xw, c, pl = st
        a = solve_triangular(c[0], xw.T, lower=True)
        h = np.sum(a * a, axis=0)
        score = X.T @ (y - mu + h * (0.5 - mu))
        try:
            step = cho_solve(cho_factor(-_firth_hessian(X, mu, c, h)), score)
        except np.linalg.LinAlgError:
            step = cho_solve(c, score)
        big = np.max(np.abs(step))
        if big > 5.0:
            step *= 5.0 / big
        new = state(beta + step)
        halvings = 0
        while (new is None or new[4] < pl) and halvings < 30:
            step *= 0.5
            new = state(beta + step)
            halvings += 1
        if new is None:
            raise NotConverged("information became singular", coefficients=beta, iterations=it)
        beta = beta + step
        st = new
        if np.max(np.abs(step)) < 1e-10 or (np.max(np.abs(score)) < 1e-9 * n and np.max(np.abs(step)) < 1e-8):
            break
    else:
        raise NotConverged("Firth iterations did not converge", coefficients=beta, iterations=MAX_ITER)
    eta, mu, xw, c, _ = st
    if not np.all(np.isfinite(beta)):
        raise NotConverged("non-finite Firth estimate", coefficients=beta, iterations=it)
    se = np.sqrt(np.diag(cho_solve(c, np.eye(p))))
    return GlmFit(beta, se, _binomial_loglik_eta(y, eta), p, "firth", True, it,
                  column_labels=dm.column_labels)


def _softmax_parts(X, B, y_onehot):
    eta = np.hstack([np.zeros((X.shape[0], 1)), X @ B.T])
    lse = logsumexp(eta, axis=1)
    ll = float(np.sum(eta[np.arange(len(eta)), y_onehot.argmax(axis=1)] - lse))
    prob = np.exp(eta - lse[:, None])
    return ll, prob


def fit_multinomial(X, y, C: int, ridge: float = 0.0) -> GlmFit:
    """Softmax regression by Newton iterations on the stacked coefficients.

    Level 0 is the baseline. With ``ridge > 0`` the non-intercept
    coefficients carry an L2 penalty ``ridge/2 * |b|^2``; the reported
    ``loglik`` is still the unpenalized value.
    """
    dm = as_design(X)
    X = dm.values
    y = np.asarray(y).astype(int)
    C = int(C)
    if C < 2:
        raise ValidationError("need at least two levels")
    counts = np.bincount(y, minlength=C)
    if len(counts) != C or np.any(counts == 0):
        raise ValidationError("every level 0..C-1 must be observed at least once")
    _check_rank(X)
    n, p = X.shape
    m = C - 1
    Y = np.zeros((n, C))
    Y[np.arange(n), y] = 1.0
    pen = np.full((m, p), ridge)
    if dm.column_labels and dm.column_labels[0] == "(Intercept)":
        pen[:, 0] = 0.0
    pen = pen.ravel()

    def objective(B):
        ll, prob = _softmax_parts(X, B, Y)
        return ll - 0.5 * float(np.sum(pen * B.ravel() ** 2)), ll, prob

    def information(prob):
        P = prob[:, 1:]
        H = np.empty((m * p, m * p))
        for a in range(m):
            for b in range(a, m):
                w = P[:, a] * ((a == b) - P[:, b])
                blk = (X * w[:, None]).T @ X
                H[a * p:(a + 1) * p, b * p:(b + 1) * p] = blk
                H[b * p:(b + 1) * p, a * p:(a + 1) * p] = blk.T
        return H

    B = np.zeros((m, p))
    obj, ll, prob = objective(B)
    for it in range(1, MAX_ITER + 1):
        grad = (X.T @ (Y[:, 1:] - prob[:, 1:])).T.ravel() - pen * B.ravel()
        H = information(prob) + np.diag(pen)
        try:
            step = cho_solve(cho_factor(H), grad).reshape(m, p)
        except np.linalg.LinAlgError:
            raise Diverged("singular softmax information", coefficients=B, iterations=it) from None
        new = objective(B + step)
        halvings = 0
        while new[0] < obj - 1e-12 * abs(obj) and halvings < 30:
            step *= 0.5
            new = objective(B + step)
            halvings += 1
        B = B + step
        if ridge == 0.0 and np.max(np.abs(B)) > COEF_LIMIT:
            raise Diverged("softmax coefficient exceeds separation threshold", coefficients=B,
                           iterations=it)
        obj_old = obj
        obj, ll, prob = new
        if abs(obj - obj_old) / (2 * abs(obj) + 0.1) < TOL and np.max(np.abs(step)) < STEP_TOL:
            break
    else:
        raise NotConverged("softmax Newton did not converge", coefficients=B, iterations=MAX_ITER)
    H = information(prob) + np.diag(pen)
    se = _se_from_information(H).reshape(m, p)
    if ridge == 0.0 and (not np.all(np.isfinite(se)) or se.max() > SE_LIMIT):
        raise Diverged("softmax standard errors exceed threshold", coefficients=B, iterations=it)
    method = "multinomial_ridge" if ridge else "multinomial_ml"
    return GlmFit(B, se, ll, m * p, method, True, it, column_labels=dm.column_labels)


def rank_reduce(X) -> DesignMatrix:
    """Restrict ``X`` to a full-column-rank subset of its columns.

    A column-pivoted QR detects deficiency; when present, columns are scanned
    left to right and kept only if they add to the rank of those already
    kept, so the intercept always survives and later duplicates go first.
    """
    dm = as_design(X)
    V = dm.values
    _, r, _ = qr(V, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    scale = max(diag.max() if diag.size else 0.0, 1e-300)
    if V.shape[1] and diag.min() > RANK_TOL * scale:
        return dm
    keep: list[int] = []
    q = np.zeros((V.shape[0], 0))
    for j in range(V.shape[1]):
        col = V[:, j]
        norm = np.linalg.norm(col)
        if norm == 0:
            continue
        resid = col - q @ (q.T @ col)
        rn = np.linalg.norm(resid)
        if rn > RANK_TOL * norm:
            keep.append(j)
            q = np.hstack([q, (resid / rn)[:, None]])
    if 0 not in keep:
        keep.insert(0, 0)
    return dm.take(keep)


def _fit_once(dm: DesignMatrix, y, fam: FamilySpec, levels: int | None) -> GlmFit:
    if fam.family == "binomial":
        try:
            return fit_irls(dm, y, fam)
        except (Diverged, NotConverged):
            return fit_logistic_firth(dm, y)
    if fam.family == "multinomial":
        try:
            return fit_multinomial(dm, y, levels)
        except Diverged:
            return fit_multinomial(dm, y, levels, ridge=RIDGE)
    return fit_irls(dm, y, fam)


def fit_node_robust(X, y, fam: FamilySpec | str, levels: int | None = None) -> GlmFit:
    """Fit a node model, always returning finite coefficients when possible.

    Raises :class:`Unfittable` only when the intercept-only model fails.
    """
    fam = fam if isinstance(fam, FamilySpec) else FamilySpec(fam)
    if fam.family == "multinomial" and levels is None:
        levels = int(np.max(y)) + 1
    dm = rank_reduce(as_design(X))
    while True:
        try:
            fit = _fit_once(dm, y, fam, levels)
            break
        except (FitFailure, np.linalg.LinAlgError) as exc:
            if dm.p <= 1:
                raise Unfittable(f"intercept-only {fam.family} model failed: {exc}") from exc
            coef = getattr(exc, "coefficients", None)
            if coef is not None and np.all(np.isfinite(coef)):
                mag = np.abs(np.atleast_2d(coef)).max(axis=0)[1:]
                drop = 1 + int(np.argmax(mag))
            else:
                drop = dm.p - 1
            dm = dm.take([j for j in range(dm.p) if j != drop])
    if dm.dropped:
        fit.method = "rank_reduced+" + fit.method
    fit.dropped_columns = dm.dropped
    fit.column_labels = dm.column_labels
    if not (np.all(np.isfinite(fit.coefficients)) and np.isfinite(fit.loglik)):
        raise Unfittable("fit produced non-finite values")
    return fit
