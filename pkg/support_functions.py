"""
Support functions of (s,a)-rectangular uncertainty sets.

sigma(V) = min over the ball of p.V, and sigma_max the matching maximum.
Three ball kinds are supported: Singleton (nominal only), KL ball
{q : KL(q || p0) <= theta} and L1 ball {q : ||q - p0||_1 <= theta}.

All solvers work on a batch of nominal rows sharing one value vector, which
is what a Bellman sweep needs; `sigma` and `sigma_max` are the single-row
views.
"""

from enum import Enum
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator
from scipy.optimize import newton
from scipy.special import logsumexp

from errors import InvalidUncertaintySet, NonStochasticRow

ROW_SUM_TOL = 1e-12

# Golden-section search runs over log(lambda) in [log(lambda_max) - LOG_SPAN, log(lambda_max)]
LOG_SPAN = 40.0
BRACKET_TOL = 1e-12
_INV_PHI = (np.sqrt(5.0) - 1.0) / 2.0
_GOLDEN_STEPS = int(np.ceil(np.log(BRACKET_TOL / LOG_SPAN) / np.log(_INV_PHI)))
NEWTON_TOL = 1e-12
NEWTON_STEPS = 50
POLISH_RADIUS = 1e-3


class Divergence(str, Enum):
    SINGLETON = "singleton"
    KL = "kl"
    L1 = "l1"


def check_distribution(row: np.ndarray, what: str = "row") -> None:
    if row.ndim != 1 or row.size == 0:
        raise NonStochasticRow(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(row)) or np.any(row < 0):
        raise NonStochasticRow(f"{what} has negative or non-finite entries: {row}")
    if abs(row.sum() - 1.0) > ROW_SUM_TOL:
        raise NonStochasticRow(f"{what} sums to {row.sum()!r}, not 1")


class UncertaintySet(BaseModel):
    """One (s,a) ball: nominal distribution, divergence kind and radius."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kind: Divergence
    nominal: np.ndarray
    radius: float = 0.0

    @field_validator("nominal", mode="before")
    @classmethod
    def _as_array(cls, value):
        return np.asarray(value, dtype=float)

    @model_validator(mode="after")
    def _check(self):
        if not np.isfinite(self.radius) or self.radius < 0:
            raise InvalidUncertaintySet(f"radius must be a nonnegative real, got {self.radius}")
        if self.kind == Divergence.SINGLETON and self.radius != 0:
            raise InvalidUncertaintySet("a singleton set has radius 0")
        check_distribution(self.nominal, "nominal distribution")
        return self


class SupportResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    value: float
    minimizer: np.ndarray
    dual_parameter: float = 0.0


def sigma(uset: UncertaintySet, V: np.ndarray) -> SupportResult:
    """min over the ball of p.V, with a minimizing distribution."""
    return _single(uset, V, maximize=False)


def sigma_max(uset: UncertaintySet, V: np.ndarray) -> SupportResult:
    """max over the ball of p.V, with a maximizing distribution."""
    return _single(uset, V, maximize=True)


def _single(uset: UncertaintySet, V: np.ndarray, maximize: bool) -> SupportResult:
    V = _check_values(V, uset.nominal.size)
    values, extremal, duals = support_batch(
        uset.kind, uset.nominal[None, :], uset.radius, V, maximize=maximize
    )
    return SupportResult(value=float(values[0]), minimizer=extremal[0], dual_parameter=float(duals[0]))


def _check_values(V, size: int) -> np.ndarray:
    V = np.asarray(V, dtype=float)
    if V.shape != (size,):
        raise InvalidUncertaintySet(f"value vector has shape {V.shape}, expected ({size},)")
    if not np.all(np.isfinite(V)):
        raise InvalidUncertaintySet("value vector must be finite")
    return V


def support_batch(
    kind: Divergence,
    nominal: np.ndarray,
    radius: float,
    V: np.ndarray,
    maximize: bool = False,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Evaluate the support function of M balls against one vector V.

    Args:
        kind: ball kind shared by all rows
        nominal: (M, S) nominal rows
        radius: ball radius shared by all rows
        V: (S,) value vector
        maximize: take the max over the ball instead of the min

    Returns:
        values (M,), extremal distributions (M, S), KL dual parameters (M,)
    """
    W = -V if maximize else V
    kind = Divergence(kind)
    if kind == Divergence.SINGLETON or radius == 0:
        values = nominal @ W
        extremal = nominal.copy()
        duals = np.zeros(nominal.shape[0])
    elif kind == Divergence.KL:
        values, extremal, duals = _kl_min(nominal, radius, W)
    else:
        values, extremal = _l1_min(nominal, radius, W)
        duals = np.zeros(nominal.shape[0])
    if maximize:
        values = -values
    return values, extremal, duals


def _kl_min(P0: np.ndarray, theta: float, W: np.ndarray):
    """KL ball minimum via the one-dimensional concave dual

        max_{lam >= 0}  -lam * log sum_j p0_j exp(-W_j / lam) - lam * theta

    solved by golden-section search over log(lam) in (0, span/theta + 1],
    then polished with Newton so the tilted minimizer sits on the ball's
    boundary.
    """
    M = P0.shape[0]
    support = P0 > 0
    vmin = np.where(support, W[None, :], np.inf).min(axis=1)
    vmax = np.where(support, W[None, :], -np.inf).max(axis=1)
    spread = vmax - vmin
    Z = np.where(support, W[None, :] - vmin[:, None], np.inf)

    values = P0 @ W
    extremal = P0.copy()
    duals = np.zeros(M)

    # Mass already sitting on the minimizing states may cover the whole budget,
    # in which case the minimum is vmin and lambda* = 0.
    at_min = support & (Z == 0)
    mass_min = np.where(at_min, P0, 0.0).sum(axis=1)
    flat = spread <= 0
    corner = ~flat & (-np.log(np.maximum(mass_min, 1e-300)) <= theta)
    if corner.any():
        values[corner] = vmin[corner]
        extremal[corner] = np.where(at_min[corner], P0[corner], 0.0) / mass_min[corner, None]

    interior = ~flat & ~corner
    if not interior.any():
        return values, extremal, duals

    Pi = P0[interior]
    Zi = Z[interior]
    vi = vmin[interior]

    def dual(log_lam):
        lam = np.exp(log_lam)
        return vi - lam * logsumexp(-Zi / lam[:, None], b=Pi, axis=1) - lam * theta

    hi = np.log(spread[interior] / theta + 1.0)
    lo = hi - LOG_SPAN
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = dual(c), dual(d)
    for _ in range(_GOLDEN_STEPS):
        # the maximum lies in [lo, d] when fc >= fd, else in [c, hi]
        left = fc >= fd
        lo = np.where(left, lo, c)
        hi = np.where(left, d, hi)
        c_next = np.where(left, hi - _INV_PHI * (hi - lo), d)
        d_next = np.where(left, c, lo + _INV_PHI * (hi - lo))
        f_new = dual(np.where(left, c_next, d_next))
        fc, fd = np.where(left, f_new, fd), np.where(left, fc, f_new)
        c, d = c_next, d_next

    # The dual is flat at its maximum, so the bracket only pins log(lam) to
    # about sqrt(eps). Polish with Newton on the stationarity condition
    # KL(q_lam || p0) = theta, where q_lam is the tilted distribution.
    Zf = np.where(np.isfinite(Zi), Zi, 0.0)

    def tilted(log_lam):
        t = np.exp(-log_lam)
        logits = -Zi * t[:, None]
        log_norm = logsumexp(logits, b=Pi, axis=1)
        return Pi * np.exp(logits - log_norm[:, None]), t, log_norm

    def kl_gap(log_lam):
        q, t, log_norm = tilted(log_lam)
        return -t * np.sum(q * Zf, axis=1) - log_norm - theta

    def kl_slope(log_lam):
        q, t, _ = tilted(log_lam)
        mean = np.sum(q * Zf, axis=1)
        return t**2 * np.sum(q * (Zf - mean[:, None]) ** 2, axis=1)

    bracketed = 0.5 * (lo + hi)
    try:
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            polished = np.asarray(
                newton(kl_gap, bracketed.copy(), fprime=kl_slope, tol=NEWTON_TOL, maxiter=NEWTON_STEPS, disp=False)
            )
    except RuntimeError:
        # every row stalled; the bracket midpoint is still within sqrt(eps)
        polished = bracketed
    with np.errstate(invalid="ignore"):
        usable = np.isfinite(polished) & (np.abs(polished - bracketed) <= POLISH_RADIUS)
        usable &= np.abs(kl_gap(np.where(usable, polished, bracketed))) <= np.abs(kl_gap(bracketed))
    log_lam = np.where(usable, polished, bracketed)
    lam = np.exp(log_lam)
    weights, _, _ = tilted(log_lam)

    values[interior] = np.maximum(dual(log_lam), vi)
    extremal[interior] = weights / weights.sum(axis=1, keepdims=True)
    duals[interior] = lam
    return values, extremal, duals


def _l1_min(P0: np.ndarray, theta: float, W: np.ndarray):
    """L1 ball minimum: move up to theta/2 mass from the highest-W states
    onto the lowest-W state, never taking more than a state holds."""
    target = int(np.argmin(W))
    budget = np.minimum(theta / 2.0, 1.0 - P0[:, target])
    order = np.array([j for j in np.argsort(-W, kind="stable") if j != target], dtype=int)
    drained = P0[:, order]
    before = np.cumsum(drained, axis=1) - drained
    removed = np.clip(budget[:, None] - before, 0.0, drained)

    extremal = P0.copy()
    extremal[:, order] -= removed
    extremal[:, target] += removed.sum(axis=1)
    extremal = np.maximum(extremal, 0.0)
    return extremal @ W, extremal
