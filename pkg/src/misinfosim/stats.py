"""Statistics toolkit: F/t/noncentral-F tails, OLS, sequential ANOVA,
power analysis and quadratic response surfaces.

All distribution tails route through one kernel, the regularized
incomplete beta function, so the central and noncentral paths can be
cross-checked against each other. The noncentral F CDF is a
Poisson-weighted series over that same kernel, truncated where the
remaining Poisson mass falls below 1e-12.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import betainc, betaincinv, gammaln

from .errors import ParameterError, SingularDesignError, StateError

# ---------------------------------------------------------------------------
# Distribution tails (betainc kernel)


def t_two_sided_p(t: float, df: float) -> float:
    """P(|T| >= |t|) for Student's t with df degrees of freedom."""
    if df <= 0:
        raise ParameterError(f"df must be positive, got {df}")
    t = abs(float(t))
    if math.isinf(t):
        return 0.0
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))


def f_cdf(x, dfn: float, dfd: float):
    """Central F CDF."""
    _check_df(dfn, dfd)
    x = np.asarray(x, dtype=float)
    y = dfn * x / (dfn * x + dfd)
    out = np.where(x > 0, betainc(dfn / 2.0, dfd / 2.0, np.where(x > 0, y, 0.0)), 0.0)
    return float(out) if out.ndim == 0 else out


def f_sf(x, dfn: float, dfd: float):
    """Central F survival function, evaluated in the upper-tail form."""
    _check_df(dfn, dfd)
    x = np.asarray(x, dtype=float)
    y = dfd / (dfd + dfn * x)
    out = np.where(x > 0, betainc(dfd / 2.0, dfn / 2.0, np.where(x > 0, y, 1.0)), 1.0)
    return float(out) if out.ndim == 0 else out


def f_isf(p: float, dfn: float, dfd: float) -> float:
    """Upper-tail inverse of the central F distribution."""
    _check_df(dfn, dfd)
    if not 0.0 < p < 1.0:
        raise ParameterError(f"tail probability must be in (0, 1), got {p}")
    y = float(betaincinv(dfd / 2.0, dfn / 2.0, p))
    if y <= 0.0:
        return math.inf
    return dfd * (1.0 - y) / (dfn * y)


def _check_df(dfn: float, dfd: float) -> None:
    if dfn <= 0 or dfd <= 0:
        raise ParameterError(f"degrees of freedom must be positive, got ({dfn}, {dfd})")


_NCF_TAIL = 1e-12


def _poisson_window(half_rate: float) -> tuple[int, int, np.ndarray]:
    """Index window [lo, hi] around the Poisson(half_rate) mode, plus the
    weights inside it.

    Half-width 10*sqrt(rate+1)+50 keeps the excluded mass below _NCF_TAIL
    for every rate by the Chernoff bound exp(-t^2 / (2*(rate + t/3)));
    an empirical 1-sum(w) check would see only rounding noise from gammaln
    at large rates, so the analytic bound is the right criterion.
    """
    if half_rate == 0.0:
        return 0, 0, np.ones(1)
    mode = int(half_rate)
    half_width = int(10.0 * math.sqrt(half_rate + 1.0)) + 50
    lo = max(0, mode - half_width)
    hi = mode + half_width
    j = np.arange(lo, hi + 1, dtype=float)
    logw = -half_rate + j * math.log(half_rate) - gammaln(j + 1.0)
    return lo, hi, np.exp(logw)


def noncentral_f_cdf(x, dfn: float, dfd: float, nc: float):
    """Noncentral F CDF via the Poisson mixture of incomplete-beta terms."""
    _check_df(dfn, dfd)
    if nc < 0:
        raise ParameterError(f"noncentrality must be >= 0, got {nc}")
    lo, hi, w = _poisson_window(nc / 2.0)
    j = np.arange(lo, hi + 1, dtype=float)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.empty_like(xs)
    for i, xv in enumerate(xs):
        if xv <= 0.0:
            out[i] = 0.0
            continue
        y = dfn * xv / (dfn * xv + dfd)
        out[i] = float(np.dot(w, betainc(dfn / 2.0 + j, dfd / 2.0, y)))
    out = np.clip(out, 0.0, 1.0)
    if np.ndim(x) == 0:
        return float(out[0])
    return out


# ---------------------------------------------------------------------------
# Ordinary least squares


@dataclass(frozen=True)
class LinearFit:
    names: tuple
    coef: np.ndarray
    se: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    df_resid: int
    sigma2: float
    ssr: float
    sst: float
    r_squared: float
    adj_r_squared: float
    fitted: np.ndarray
    residuals: np.ndarray
    cov: np.ndarray

    @property
    def nobs(self) -> int:
        return self.fitted.shape[0]


def ols_fit(X: np.ndarray, y: np.ndarray, names: Optional[Sequence[str]] = None) -> LinearFit:
    """Least squares by QR. Raises SingularDesignError naming the first
    column whose contribution to the design is numerically rank-deficient."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if X.ndim != 2:
        raise ParameterError("design matrix must be 2-D")
    n, p = X.shape
    if y.shape[0] != n:
        raise ParameterError(f"X has {n} rows but y has {y.shape[0]}")
    if names is None:
        names = tuple(f"x{i}" for i in range(p))
    names = tuple(names)
    if len(names) != p:
        raise ParameterError(f"{p} columns but {len(names)} names")
    if n <= p:
        raise ParameterError(f"need more than {p} observations, got {n}")

    q, r = np.linalg.qr(X)
    col_scale = np.sqrt((X * X).sum(axis=0))
    col_scale[col_scale == 0.0] = 1.0
    small = np.abs(np.diag(r)) <= 1e-10 * col_scale
    if small.any():
        bad = int(np.argmax(small))
        raise SingularDesignError(names[bad])

    coef = np.linalg.solve(r, q.T @ y)
    fitted = X @ coef
    residuals = y - fitted
    ssr = float(residuals @ residuals)
    df_resid = n - p
    sigma2 = ssr / df_resid
    r_inv = np.linalg.solve(r, np.eye(p))
    cov = sigma2 * (r_inv @ r_inv.T)
    se = np.sqrt(np.diag(cov))
    tvalues = coef / se
    pvalues = np.array([t_two_sided_p(t, df_resid) for t in tvalues])

    has_const = any(np.ptp(X[:, j]) == 0.0 and X[0, j] != 0.0 for j in range(p))
    if has_const:
        sst = float(((y - y.mean()) ** 2).sum())
    else:
        sst = float((y**2).sum())
    r2 = 1.0 - ssr / sst if sst > 0 else 0.0
    adj = 1.0 - (1.0 - r2) * (n - 1) / df_resid if has_const else r2
    return LinearFit(names=names, coef=coef, se=se, tvalues=tvalues, pvalues=pvalues,
                     df_resid=df_resid, sigma2=sigma2, ssr=ssr, sst=sst,
                     r_squared=r2, adj_r_squared=adj,
                     fitted=fitted, residuals=residuals, cov=cov)


# ---------------------------------------------------------------------------
# Sequential (Type-I) ANOVA


@dataclass(frozen=True)
class AnovaRow:
    term: str
    df: int
    ss: float
    ms: float
    f: Optional[float]
    p: Optional[float]


@dataclass(frozen=True)
class AnovaTable:
    rows: tuple
    ss_total: float
    df_total: int

    def row(self, term: str) -> AnovaRow:
        for r in self.rows:
            if r.term == term:
                return r
        raise KeyError(term)

    @property
    def residual(self) -> AnovaRow:
        return self.rows[-1]

    def eta_squared(self, term: str) -> float:
        return self.row(term).ss / self.ss_total


def _residual_ss(y: np.ndarray, X: np.ndarray) -> tuple[float, int]:
    """Residual sum of squares of y on X plus the effective rank of X."""
    q, r = np.linalg.qr(X)
    keep = np.abs(np.diag(r)) > 1e-10 * max(1.0, np.abs(np.diag(r)).max())
    rank = int(keep.sum())
    if rank < X.shape[1]:
        # Drop dependent directions; project on the independent ones only.
        q = q[:, keep]
    proj = q.T @ y
    return float(y @ y - proj @ proj), rank


def anova_sequential(y: np.ndarray, terms: Sequence[tuple]) -> AnovaTable:
    """Type-I ANOVA: each term's SS is the drop in residual SS when its
    columns join the design, in the order given, after an intercept."""
    y = np.asarray(y, dtype=float).ravel()
    n = y.shape[0]
    if n < 3:
        raise ParameterError(f"need at least 3 observations, got {n}")
    X = np.ones((n, 1))
    ss_prev, rank_prev = _residual_ss(y, X)
    ss_total = ss_prev
    rows = []
    for name, block in terms:
        block = np.asarray(block, dtype=float)
        if block.ndim == 1:
            block = block[:, None]
        if block.shape[0] != n:
            raise ParameterError(f"term {name!r} has {block.shape[0]} rows, expected {n}")
        X = np.hstack([X, block])
        ss_cur, rank_cur = _residual_ss(y, X)
        df = rank_cur - rank_prev
        if df <= 0:
            raise SingularDesignError(name)
        rows.append((name, df, ss_prev - ss_cur))
        ss_prev, rank_prev = ss_cur, rank_cur
    df_resid = n - rank_prev
    if df_resid <= 0:
        raise ParameterError("no residual degrees of freedom")
    ms_resid = ss_prev / df_resid
    out = []
    for name, df, ss in rows:
        ms = ss / df
        fval = ms / ms_resid if ms_resid > 0 else math.inf
        out.append(AnovaRow(name, df, ss, ms, fval, f_sf(fval, df, df_resid)))
    out.append(AnovaRow("Residual", df_resid, ss_prev, ms_resid, None, None))
    return AnovaTable(rows=tuple(out), ss_total=ss_total, df_total=n - 1)


def _dummy_block(labels: Sequence) -> tuple[np.ndarray, list]:
    levels = sorted(set(labels))
    if len(levels) < 2:
        raise ParameterError("factor needs at least 2 levels")
    arr = np.zeros((len(labels), len(levels) - 1))
    index = {lv: i for i, lv in enumerate(levels)}
    for row, lab in enumerate(labels):
        i = index[lab]
        if i > 0:
            arr[row, i - 1] = 1.0
    return arr, levels


def anova_oneway(y: Sequence[float], labels: Sequence, term: str = "group") -> AnovaTable:
    """One-way ANOVA with a categorical factor."""
    counts: dict = {}
    for lab in labels:
        counts[lab] = counts.get(lab, 0) + 1
    thin = [lv for lv, c in sorted(counts.items()) if c < 2]
    if thin:
        raise ParameterError(f"factor level(s) with fewer than 2 observations: {thin}")
    block, _ = _dummy_block(labels)
    return anova_sequential(np.asarray(y, dtype=float), [(term, block)])


def anova_factor_covariate(y: Sequence[float], labels: Sequence,
                           covariate: Sequence[float],
                           factor_name: str = "factor",
                           covariate_name: str = "covariate") -> AnovaTable:
    """Sequential two-term ANOVA: categorical factor, then a continuous
    covariate, then their interaction."""
    y = np.asarray(y, dtype=float).ravel()
    x = np.asarray(covariate, dtype=float).ravel()
    if len(labels) != y.shape[0] or x.shape[0] != y.shape[0]:
        raise ParameterError("y, labels and covariate lengths differ")
    block, levels = _dummy_block(labels)
    for lv in levels:
        sel = [i for i, lab in enumerate(labels) if lab == lv]
        if len(sel) < 2:
            raise ParameterError(f"factor level {lv!r} has fewer than 2 observations")
        if len(set(x[sel].tolist())) < 2:
            raise ParameterError(
                f"covariate is constant within factor level {lv!r}")
    inter = block * x[:, None]
    return anova_sequential(y, [
        (factor_name, block),
        (covariate_name, x),
        (f"{factor_name}:{covariate_name}", inter),
    ])


def eta_squared(ss_effect: float, ss_total: float) -> float:
    if ss_total <= 0:
        raise ParameterError("total sum of squares must be positive")
    if not 0 <= ss_effect <= ss_total * (1 + 1e-12):
        raise ParameterError("effect sum of squares outside [0, total]")
    return min(ss_effect / ss_total, 1.0)


def cohens_f_from_eta2(eta2: float) -> float:
    if not 0 <= eta2 < 1:
        raise ParameterError(f"eta squared must be in [0, 1), got {eta2}")
    return math.sqrt(eta2 / (1.0 - eta2))


# ---------------------------------------------------------------------------
# Power analysis for the one-way fixed-effects F test


@dataclass(frozen=True)
class PowerSolution:
    required_n: float
    achieved_power: float
    effect_f: float
    groups: int
    alpha: float
    target_power: float


def anova_power(effect_f: float, groups: int, n_per_group: float,
                alpha: float = 0.05) -> float:
    """Power of the k-group one-way F test at n observations per group.

    n may be fractional; degrees of freedom and the noncentrality
    lambda = f^2 * k * n are evaluated at the continuous value.
    """
    if groups < 2:
        raise ParameterError(f"need at least 2 groups, got {groups}")
    if effect_f <= 0:
        raise ParameterError(f"effect size must be positive, got {effect_f}")
    if n_per_group <= 1:
        raise ParameterError(f"n per group must exceed 1, got {n_per_group}")
    if not 0 < alpha < 1:
        raise ParameterError(f"alpha must be in (0, 1), got {alpha}")
    dfn = groups - 1
    dfd = groups * (n_per_group - 1.0)
    crit = f_isf(alpha, dfn, dfd)
    lam = effect_f * effect_f * groups * n_per_group
    return 1.0 - noncentral_f_cdf(crit, dfn, dfd, lam)


_N_LO = 1.01
_N_HI = 1e6


def anova_power_required_n(effect_f: float, groups: int, alpha: float = 0.05,
                           target_power: float = 0.8, tol: float = 1e-6) -> PowerSolution:
    """Smallest per-group n (continuous) whose power reaches the target.

    Bisection over [1.01, 1e6] after verifying the power curve is
    non-decreasing over that bracket; an unattainable target raises
    ParameterError.
    """
    if not 0 < target_power < 1:
        raise ParameterError(f"target power must be in (0, 1), got {target_power}")

    def power_at(n: float) -> float:
        return anova_power(effect_f, groups, n, alpha)

    probes = np.geomspace(_N_LO, _N_HI, 16)
    vals = [power_at(float(n)) for n in probes]
    for a, b in zip(vals, vals[1:]):
        if b < a - 1e-9:
            raise StateError("power is not monotone in n over the search bracket")

    lo, hi = _N_LO, _N_HI
    p_lo, p_hi = vals[0], vals[-1]
    if p_hi < target_power:
        raise ParameterError(
            f"target power {target_power} unattainable with f={effect_f}, "
            f"k={groups}, alpha={alpha} (max {p_hi:.6g} at n={_N_HI:g})")
    if p_lo >= target_power:
        return PowerSolution(required_n=lo, achieved_power=p_lo, effect_f=effect_f,
                             groups=groups, alpha=alpha, target_power=target_power)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if power_at(mid) >= target_power:
            hi = mid
        else:
            lo = mid
    return PowerSolution(required_n=hi, achieved_power=power_at(hi), effect_f=effect_f,
                         groups=groups, alpha=alpha, target_power=target_power)


# ---------------------------------------------------------------------------
# Monte-Carlo checks of the power computation


def mc_power_rejection_rate(effect_f: float, groups: int, n_per_group: float,
                            alpha: float = 0.05, trials: int = 10_000,
                            seed: int = 0) -> float:
    """Empirical rejection rate from sampling the alternative's F statistic.

    The noncentral F draw uses the gamma route, valid at fractional n:
    numerator chi-square df groups-1 shifted by a Poisson(lambda/2) count,
    denominator chi-square df k(n-1).
    """
    if n_per_group <= 1:
        raise ParameterError(f"n per group must exceed 1, got {n_per_group}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    dfn = groups - 1
    dfd = groups * (n_per_group - 1.0)
    lam = effect_f * effect_f * groups * n_per_group
    crit = f_isf(alpha, dfn, dfd)
    rng = np.random.Generator(np.random.PCG64(seed))
    j = rng.poisson(lam / 2.0, size=trials)
    num = rng.gamma(shape=(dfn + 2.0 * j) / 2.0, scale=2.0)
    den = rng.gamma(shape=dfd / 2.0, scale=2.0, size=trials)
    fstat = (num / dfn) / (den / dfd)
    return float(np.mean(fstat > crit))


def mc_anova_rejection_rate(effect_f: float, groups: int, n_per_group: int,
                            alpha: float = 0.05, trials: int = 10_000,
                            seed: int = 0) -> float:
    """Empirical rejection rate of the one-way ANOVA on simulated data.

    Requires integer n >= 2. Group means are equally spaced and scaled so
    the mean squared deviation of means over the within-group variance is
    effect_f squared.
    """
    if n_per_group < 2:
        raise ParameterError(f"data-level check needs integer n >= 2, got {n_per_group}")
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    k, n = groups, int(n_per_group)
    pattern = np.linspace(-1.0, 1.0, k)
    pattern -= pattern.mean()
    rms = math.sqrt(float(np.mean(pattern**2)))
    means = effect_f / rms * pattern
    dfn, dfd = k - 1, k * (n - 1)
    crit = f_isf(alpha, dfn, dfd)
    rng = np.random.Generator(np.random.PCG64(seed))
    rejects = 0
    block = 500
    for start in range(0, trials, block):
        m = min(block, trials - start)
        y = rng.standard_normal((m, k, n)) + means[None, :, None]
        gmean = y.mean(axis=2)
        omean = y.mean(axis=(1, 2))
        ssb = n * ((gmean - omean[:, None]) ** 2).sum(axis=1)
        ssw = ((y - gmean[:, :, None]) ** 2).sum(axis=(1, 2))
        fstat = (ssb / dfn) / (ssw / dfd)
        rejects += int((fstat > crit).sum())
    return rejects / trials


# ---------------------------------------------------------------------------
# Quadratic response surfaces z ~ 1 + b + d + b*d + b^2 + d^2


SURFACE_TERMS = ("const", "b", "d", "b_d", "b_sq", "d_sq")


@dataclass(frozen=True)
class QuadraticSurface:
    beta: np.ndarray
    fit: Optional[LinearFit] = None

    def value(self, b, d):
        b = np.asarray(b, dtype=float)
        d = np.asarray(d, dtype=float)
        c = self.beta
        out = c[0] + c[1] * b + c[2] * d + c[3] * b * d + c[4] * b * b + c[5] * d * d
        return float(out) if out.ndim == 0 else out

    @property
    def hessian(self) -> np.ndarray:
        c = self.beta
        return np.array([[2.0 * c[4], c[3]], [c[3], 2.0 * c[5]]])


@dataclass(frozen=True)
class StationaryPoint:
    b: float
    d: float
    value: float
    kind: str  # "max" | "min" | "saddle"


@dataclass(frozen=True)
class BoxExtrema:
    min_point: tuple
    max_point: tuple


def surface_design(b: np.ndarray, d: np.ndarray) -> np.ndarray:
    b = np.asarray(b, dtype=float).ravel()
    d = np.asarray(d, dtype=float).ravel()
    if b.shape != d.shape:
        raise ParameterError("b and d must have the same length")
    return np.column_stack([np.ones_like(b), b, d, b * d, b * b, d * d])


def fit_quadratic_surface(b: Sequence[float], d: Sequence[float],
                          z: Sequence[float]) -> QuadraticSurface:
    X = surface_design(np.asarray(b), np.asarray(d))
    fit = ols_fit(X, np.asarray(z, dtype=float), names=SURFACE_TERMS)
    return QuadraticSurface(beta=fit.coef.copy(), fit=fit)


def surface_from_coefficients(beta: Sequence[float]) -> QuadraticSurface:
    """Wrap externally supplied coefficients (const, b, d, b*d, b^2, d^2)."""
    beta = np.asarray(beta, dtype=float).ravel()
    if beta.shape != (6,):
        raise ParameterError(f"need 6 coefficients, got {beta.shape}")
    return QuadraticSurface(beta=beta)


_DEGENERATE_REL = 1e-10


def surface_stationary_point(surface: QuadraticSurface) -> StationaryPoint:
    """Solve grad = 0; classify by the Hessian's eigenvalues. A numerically
    singular Hessian (no isolated stationary point) raises StateError."""
    h = surface.hessian
    det = h[0, 0] * h[1, 1] - h[0, 1] * h[1, 0]
    scale = float(np.abs(h).max())
    if scale == 0.0 or abs(det) < _DEGENERATE_REL * scale * scale:
        raise StateError("degenerate quadratic surface: Hessian is singular")
    g = -np.array([surface.beta[1], surface.beta[2]])
    bd = np.linalg.solve(h, g)
    eigs = np.linalg.eigvalsh(h)
    if eigs[1] < 0:
        kind = "max"
    elif eigs[0] > 0:
        kind = "min"
    else:
        kind = "saddle"
    return StationaryPoint(b=float(bd[0]), d=float(bd[1]),
                           value=surface.value(bd[0], bd[1]), kind=kind)


def surface_extrema_on_box(surface: QuadraticSurface,
                           b_range: tuple, d_range: tuple) -> BoxExtrema:
    """Exact min and max of the quadratic over a rectangle, from the
    interior stationary point (if inside), the four edge-restricted
    stationary points (if interior to their edge) and the corners."""
    blo, bhi = map(float, b_range)
    dlo, dhi = map(float, d_range)
    if not (blo < bhi and dlo < dhi):
        raise ParameterError("box ranges must be non-degenerate (lo < hi)")
    c = surface.beta
    cands: list[tuple] = [(b, d) for b in (blo, bhi) for d in (dlo, dhi)]
    # Edges b fixed: z is quadratic in d with curvature 2*c5.
    if c[5] != 0.0:
        for b in (blo, bhi):
            d = -(c[2] + c[3] * b) / (2.0 * c[5])
            if dlo < d < dhi:
                cands.append((b, d))
    if c[4] != 0.0:
        for d in (dlo, dhi):
            b = -(c[1] + c[3] * d) / (2.0 * c[4])
            if blo < b < bhi:
                cands.append((b, d))
    try:
        sp = surface_stationary_point(surface)
    except StateError:
        sp = None
    if sp is not None and blo < sp.b < bhi and dlo < sp.d < dhi:
        cands.append((sp.b, sp.d))
    scored = [(float(surface.value(b, d)), float(b), float(d)) for b, d in cands]
    vmin, bmin, dmin = min(scored)
    vmax, bmax, dmax = max(scored)
    return BoxExtrema(min_point=(bmin, dmin, vmin), max_point=(bmax, dmax, vmax))
