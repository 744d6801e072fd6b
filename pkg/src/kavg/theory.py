"""Closed-form convergence bounds and admissibility tests for K-AVG.

Notation: ``L`` gradient-Lipschitz constant, ``M`` stochastic-gradient
variance bound, ``gap = F(w_1) - F*``, ``K`` averaging delay, ``P`` learners,
``B`` batch size, ``gamma`` stepsize, ``delta`` the margin in
``1 - delta >= L^2 gamma^2``, ``N`` global rounds and ``S = N K`` the
per-learner step budget.  Every bound here controls the expected average of
``|grad F|^2`` over the ``N`` averaged iterates.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ContractViolation, UndefinedStepsize, UnsupportedAsymptotics
from .schedules import Constant, PowerLaw, ScheduleSpec, StepDecay, Table, as_schedule


def _positive(**kw):
    for name, v in kw.items():
        if not v > 0:
            raise ContractViolation(f"{name} must be positive, got {v!r}")


def _nonneg(**kw):
    for name, v in kw.items():
        if not v >= 0:
            raise ContractViolation(f"{name} must be nonnegative, got {v!r}")


def _posint(**kw):
    for name, v in kw.items():
        if int(v) != v or v < 1:
            raise ContractViolation(f"{name} must be a positive integer, got {v!r}")


def _delta(delta):
    if not 0 < delta < 1:
        raise ContractViolation(f"delta must lie in (0, 1), got {delta!r}")


@dataclass(frozen=True)
class BoundInputs:
    L: float
    M: float
    gap: float
    K: int
    P: int
    B: int
    gamma: float
    delta: float
    N: int
    S: Optional[int] = None

    def __post_init__(self):
        _positive(L=self.L, gamma=self.gamma)
        _nonneg(M=self.M, gap=self.gap)
        _posint(K=self.K, P=self.P, B=self.B, N=self.N)
        _delta(self.delta)
        if self.S is not None and self.S != self.N * self.K:
            raise ContractViolation(f"S must equal N*K = {self.N * self.K}, got {self.S}")

    @property
    def budget(self) -> int:
        return self.N * self.K if self.S is None else self.S

    def coefficients(self) -> tuple[float, float, float]:
        """``(alpha, beta, eta)`` of the delay-selection function for this budget."""
        return alpha_beta_eta(self.gap, self.budget, self.gamma, self.L, self.M, self.P, self.B)


# -- fixed stepsize ---------------------------------------------------------

@dataclass(frozen=True)
class StepsizeCheck:
    admissible: bool
    slack: tuple[float, float]


def check_fixed_stepsize_conditions(L: float, gamma: float, K: int, delta: float) -> StepsizeCheck:
    """Test ``1 >= L^2 g^2 (K+1)(K-2)/2 + L g K`` and ``1 - delta >= L^2 g^2``."""
    _positive(L=L)
    _nonneg(gamma=gamma)
    _posint(K=K)
    _delta(delta)
    lg = L * gamma
    lhs = lg * lg * (K + 1) * (K - 2) / 2 + lg * K
    slack = (1.0 - lhs, (1.0 - delta) - lg * lg)
    return StepsizeCheck(slack[0] >= 0 and slack[1] >= 0, slack)


def _variance_term(L, M, K, P, B, gamma, delta):
    return (L * K * gamma * M / (B * (K - 1 + delta))) * (K / P + L * (2 * K - 1) * (K - 1) * gamma / 6)


def theorem1_bound(inputs: BoundInputs, warn: bool = True) -> float:
    """Fixed-stepsize bound on the average squared gradient norm over ``N`` rounds.

    Still evaluated when the stepsize is inadmissible (a ``RuntimeWarning`` is
    issued), so bound curves can cross the admissibility boundary.
    """
    x = inputs
    if warn and not check_fixed_stepsize_conditions(x.L, x.gamma, x.K, x.delta).admissible:
        warnings.warn(f"stepsize {x.gamma} is outside the admissible region for L={x.L}, K={x.K}",
                      RuntimeWarning, stacklevel=2)
    optimization = 2 * x.gap / (x.N * (x.K - 1 + x.delta) * x.gamma)
    return optimization + _variance_term(x.L, x.M, x.K, x.P, x.B, x.gamma, x.delta)


@dataclass(frozen=True)
class CorollaryStepsize:
    gamma_star: float
    N_min: float


def corollary_stepsize(gap, B, P, L, M, K, N) -> CorollaryStepsize:
    """Stepsize ``sqrt(gap B P / (L M K^2 N))`` and the round count above which it is valid."""
    _positive(gap=gap, B=B, P=P, L=L, K=K, N=N)
    _nonneg(M=M)
    if M == 0:
        raise UndefinedStepsize("M = 0: a noiseless problem needs no variance-balancing stepsize")
    gamma_star = math.sqrt(gap * B * P / (L * M * K * K * N))
    n_min = (gap * L * B * P / M) * max(P * P / (K * K), 1.0)
    return CorollaryStepsize(gamma_star, n_min)


def corollary_regime(gap, B, P, L, M, K, N) -> bool:
    """True when the ``K/P`` part of the variance term dominates at ``gamma_star``.

    The rate bound of :func:`corollary_bound` is only implied by
    :func:`theorem1_bound` in this regime (together with an admissible
    ``gamma_star``); the round threshold ``N_min`` alone does not guarantee it.
    """
    g = corollary_stepsize(gap, B, P, L, M, K, N).gamma_star
    return K / P >= L * (2 * K - 1) * (K - 1) * g / 6


def corollary_bound(gap, B, P, L, M, K, delta, N) -> float:
    _nonneg(gap=gap, L=L, M=M)
    _positive(B=B, P=P, K=K, N=N)
    _delta(delta)
    return (4 * K / (K - 1 + delta)) * math.sqrt(gap * L * M / (B * P)) / math.sqrt(N)


# -- diminishing stepsize / growing batch -----------------------------------

def theorem2_bound(gamma_schedule, batch_schedule, L, M, gap, K, P, delta, N) -> float:
    """Bound on the ``gamma_j``-weighted average squared gradient norm after ``N`` rounds."""
    _positive(L=L)
    _nonneg(M=M, gap=gap)
    _posint(K=K, P=P, N=N)
    _delta(delta)
    gs, bs = as_schedule(gamma_schedule), as_schedule(batch_schedule)
    j = np.arange(1, N + 1)
    gam = np.array([gs.gamma(int(i)) for i in j], dtype=float)
    bat = np.array([bs.batch(int(i)) for i in j], dtype=float)
    if np.any(gam <= 0) or np.any(bat < 1):
        raise ContractViolation("schedules must yield positive stepsizes and batch sizes >= 1")
    total = math.fsum(gam)
    denom = (K - 1 + delta) * total
    var = L * K * gam**2 * M / (bat * denom) * (K / P + L * (2 * K - 1) * (K - 1) * gam / 6)
    return 2 * gap / denom + math.fsum(var)


@dataclass(frozen=True)
class _Asymptotic:
    # term ~ j**(-exponent) * ratio**j
    exponent: float
    ratio: float

    def summable(self) -> bool:
        return self.ratio < 1 or (self.ratio == 1 and self.exponent > 1)


def _growth(spec: ScheduleSpec, role: str) -> _Asymptotic:
    """Asymptotic form of a schedule: stepsizes as decay, batch sizes as growth."""
    if isinstance(spec, Table):
        raise UnsupportedAsymptotics(
            "a finite table has no asymptotics; use schedule_partial_sums instead")
    if isinstance(spec, Constant):
        return _Asymptotic(0.0, 1.0)
    if isinstance(spec, PowerLaw):
        if role == "gamma":
            return _Asymptotic(spec.exponent, 1.0)
        # ceil(c j^q) -> 1 when q < 0: bounded below and above by constants
        return _Asymptotic(-max(spec.exponent, 0.0), 1.0)
    rate = spec.factor ** (1.0 / spec.period)
    if role == "batch":
        return _Asymptotic(0.0, max(rate, 1.0))
    return _Asymptotic(0.0, rate)


def _term(gamma: _Asymptotic, gamma_pow: int, batch: Optional[_Asymptotic] = None) -> _Asymptotic:
    e = gamma_pow * gamma.exponent
    r = gamma.ratio**gamma_pow
    if batch is not None:
        e -= batch.exponent  # batch exponent is stored negated (growth)
        r /= batch.ratio
    return _Asymptotic(e, r)


@dataclass(frozen=True)
class ScheduleReport:
    sum_gamma_diverges: bool
    sum_gamma2_over_PB_converges: bool
    sum_gamma3_converges: bool
    valid: bool
    # the classical pair: sum gamma = inf and sum gamma^2 < inf
    sum_gamma2_converges: bool
    classical_valid: bool
    warnings: tuple = field(default=())


def check_schedule_conditions(gamma_schedule, batch_schedule, K: int, P: int) -> ScheduleReport:
    """Decide the three summability conditions by p-series / geometric-series tests.

    ``K`` and ``P`` only scale the middle series, so they cannot change its
    convergence; they are validated and otherwise unused.
    """
    _posint(K=K, P=P)
    gs, bs = as_schedule(gamma_schedule), as_schedule(batch_schedule)
    g, b = _growth(gs, "gamma"), _growth(bs, "batch")
    notes = []
    if isinstance(gs, StepDecay) and gs.factor < 1:
        notes.append("geometric stepsize decay has a finite sum: sum gamma_j < inf")
    diverges = not _term(g, 1).summable()
    mid = _term(g, 2, b).summable()
    cubic = _term(g, 3).summable()
    classical = _term(g, 2).summable()
    return ScheduleReport(
        sum_gamma_diverges=diverges,
        sum_gamma2_over_PB_converges=mid,
        sum_gamma3_converges=cubic,
        valid=diverges and mid and cubic,
        sum_gamma2_converges=classical,
        classical_valid=diverges and classical,
        warnings=tuple(notes),
    )


@dataclass(frozen=True)
class PartialSums:
    N: int
    sum_gamma: float
    sum_gamma2_over_PB: float
    sum_gamma3: float
    asymptotics_decidable: bool


def schedule_partial_sums(gamma_schedule, batch_schedule, K: int, P: int, N: int) -> PartialSums:
    """Finite partial sums of the three series; the only report available for tables."""
    _posint(K=K, P=P, N=N)
    gs, bs = as_schedule(gamma_schedule), as_schedule(batch_schedule)
    gam = np.array([gs.gamma(j) for j in range(1, N + 1)], dtype=float)
    bat = np.array([bs.batch(j) for j in range(1, N + 1)], dtype=float)
    return PartialSums(
        N=N,
        sum_gamma=math.fsum(gam),
        sum_gamma2_over_PB=math.fsum(K * gam**2 / (P * bat)),
        sum_gamma3=math.fsum(gam**3),
        asymptotics_decidable=not (isinstance(gs, Table) or isinstance(bs, Table)),
    )


# -- asynchronous baseline and scalability ---------------------------------

def asgd_bound(C0, C1, gap, gamma, L, M, P, B, N) -> float:
    """Bounded-staleness ASGD bound ``C0 gap/(N g) + C1 L^2 g^2 M^2 P / (2B)``."""
    _positive(C0=C0, C1=C1, gamma=gamma, L=L, P=P, B=B, N=N)
    _nonneg(gap=gap, M=M)
    return C0 * gap / (N * gamma) + C1 * L**2 * gamma**2 * M**2 * P / (2 * B)


@dataclass(frozen=True)
class ScalabilityRow:
    P: int
    kavg_bound: float
    asgd_bound: float


@dataclass(frozen=True)
class ScalabilityTable:
    rows: tuple
    kavg_nonincreasing: bool
    asgd_linear: bool

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def scalability_table(inputs: BoundInputs, C0: float = 1.0, C1: float = 1.0,
                      P_values: Sequence[int] = (1, 2, 4, 8, 16)) -> ScalabilityTable:
    """K-AVG and ASGD bounds as functions of ``P`` (all other inputs fixed).

    Raises ``AssertionError`` if the K-AVG bound increases with ``P`` or the
    ASGD variance term is not linear in ``P``; neither can happen for valid
    inputs, so a failure means the formulas were changed.
    """
    if not P_values:
        raise ContractViolation("P_values must be nonempty")
    ps = sorted(int(p) for p in P_values)
    rows = []
    for p in ps:
        x = replace(inputs, P=p)
        rows.append(ScalabilityRow(
            p,
            theorem1_bound(x, warn=False),
            asgd_bound(C0, C1, x.gap, x.gamma, x.L, x.M, p, x.B, x.N),
        ))
    kavg = [r.kavg_bound for r in rows]
    nonincreasing = all(b <= a * (1 + 1e-12) + 1e-300 for a, b in zip(kavg, kavg[1:]))
    slope = C1 * inputs.L**2 * inputs.gamma**2 * inputs.M**2 / (2 * inputs.B)
    linear = all(
        math.isclose(r2.asgd_bound - r1.asgd_bound, slope * (r2.P - r1.P),
                     rel_tol=1e-9, abs_tol=1e-12 * max(1.0, r2.asgd_bound))
        for r1, r2 in zip(rows, rows[1:])
    )
    assert nonincreasing, "K-AVG bound increased with P"
    assert linear, "ASGD variance term is not linear in P"
    return ScalabilityTable(tuple(rows), nonincreasing, linear)


# -- optimal delay under a fixed budget ------------------------------------

def alpha_beta_eta(gap, S, gamma, L, M, P, B) -> tuple[float, float, float]:
    _positive(S=S, gamma=gamma, L=L, P=P, B=B)
    _nonneg(gap=gap, M=M)
    alpha = 2 * gap / (S * gamma)
    beta = L * gamma * M / (P * B)
    eta = L**2 * gamma**2 * M / (6 * B)
    return alpha, beta, eta


def bk_value(K, alpha, beta, eta, delta) -> float:
    """``(alpha + beta K + eta (2K-1)(K-1)) * K / (K - 1 + delta)``."""
    _posint(K=K)
    _nonneg(alpha=alpha, beta=beta, eta=eta)
    _delta(delta)
    return (alpha + beta * K + eta * (2 * K - 1) * (K - 1)) * (K / (K - 1 + delta))


@dataclass(frozen=True)
class OptimalK:
    K_star: int
    values: np.ndarray  # values[K - 1] == bk_value(K, ...)
    tie: bool  # another K attains the same minimum (within 1e-12 relative)


def optimal_k(alpha, beta, eta, delta, K_max: int) -> OptimalK:
    """Minimize the delay-selection function over ``K = 1..K_max`` by enumeration.

    Ties resolve to the smallest ``K``.
    """
    _posint(K_max=K_max)
    _nonneg(alpha=alpha, beta=beta, eta=eta)
    _delta(delta)
    K = np.arange(1, K_max + 1, dtype=float)
    values = (alpha + beta * K + eta * (2 * K - 1) * (K - 1)) * (K / (K - 1 + delta))
    best = int(np.argmin(values))
    vmin = values[best]
    close = np.abs(values - vmin) <= 1e-12 * max(abs(vmin), 1e-300)
    return OptimalK(best + 1, values, bool(close.sum() > 1))


@dataclass(frozen=True)
class KoptCondition:
    holds: bool
    lhs: float
    rhs: float


def kopt_condition(gap, S, gamma, delta, L, M, P, B) -> KoptCondition:
    """Sufficient condition for the optimal delay to exceed 1, with both sides.

    ``(1-d) gap / (S g d) > (3d-1) L g M / (2 d P B) + L^2 g^2 M / (2B)``,
    which is exactly ``B(2) < B(1)`` for the coefficients of
    :func:`alpha_beta_eta`.
    """
    alpha, beta, eta = alpha_beta_eta(gap, S, gamma, L, M, P, B)
    _delta(delta)
    lhs = (1 - delta) * alpha / (2 * delta)
    rhs = (3 * delta - 1) * beta / (2 * delta) + 3 * eta
    return KoptCondition(lhs > rhs, lhs, rhs)


def check_kopt_gt1(gap, S, gamma, delta, L, M, P, B) -> bool:
    """True when the fixed-budget optimal delay ``K*`` is provably greater than 1.

    For ``delta < 1/3`` the ``beta`` coefficient enters with a negative sign;
    the inequality is still evaluated as written and a warning is issued.
    """
    if delta < 1 / 3:
        warnings.warn("delta < 1/3: the beta term of the K* > 1 condition is negative",
                      RuntimeWarning, stacklevel=2)
    return kopt_condition(gap, S, gamma, delta, L, M, P, B).holds
