"""Peak-age-optimal stationary scheduling.

Any scheduling policy with link activation frequencies f has weighted peak
age sum_e w_e / (gamma_e f_e), so the best achievable peak age is the minimum
of that objective over the frequency polytope {f = Mx, sum(x) <= 1, x >= 0}.
Channel quality enters only through effective weights v_e = w_e / gamma_e,
which are folded in once.

The optimum is characterized by set weights

    Omega_m(x) = sum_{e in m} v_e / f_e^2

being equal (to a common multiplier Omega) on the support of x and no larger
off it; Omega equals the optimal peak age. ``solve_general`` finds x by
conditional gradient over the probability simplex (the linear subproblem is
argmax Omega_m, and the Frank-Wolfe gap max_m Omega_m - x.Omega is exactly
the optimality-certificate residual), then polishes the identified support by
Newton equalization of the Omega weights with an active-set loop, re-checking
every off-support set before accepting. ``solve_klink`` solves the K-link
special case in closed form by water-filling.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .errors import FreshnetError, UnboundedAgeError, UncoveredLinkError
from .network import ActivationSetFamily, NetworkSpec, maximal_sets
from .queues import AgePair

logger = logging.getLogger(__name__)

_FW_PHASE_CAP = 5000  # conditional-gradient iterations before Newton polish
_SUPPORT_EPS = 1e-10


@dataclass(frozen=True)
class SchedulePolicy:
    """A stationary centralized schedule: activation sets, x, and f = Mx."""

    sets: tuple[tuple[int, ...], ...]
    x: np.ndarray
    f: np.ndarray

    def as_dict(self) -> dict:
        return {
            "sets": [list(m) for m in self.sets],
            "x": self.x.tolist(),
            "f": self.f.tolist(),
        }


@dataclass(frozen=True)
class OptimalityCertificate:
    """Set weights, common multiplier, and the duality-gap residual.

    gap = max_m Omega_m(x) - sum_m x_m Omega_m(x) >= 0, zero exactly at the
    optimum. conditions c1 (support weights equalized), c2 (no off-support
    weight exceeds Omega), c3 (x is a distribution) are judged at a tolerance
    relative to Omega.
    """

    omega_weights: np.ndarray
    omega: float
    gap: float
    conditions: dict
    tol: float

    @property
    def optimal(self) -> bool:
        return all(self.conditions.values())

    def report(self, policy: SchedulePolicy, peak_age: float) -> dict:
        return {
            "x": policy.x.tolist(),
            "f": policy.f.tolist(),
            "sets": [list(m) for m in policy.sets],
            "omega": self.omega,
            "gap": self.gap,
            "peak_age": peak_age,
            "conditions": self.conditions,
        }

    def to_json(self, policy: SchedulePolicy, peak_age: float) -> str:
        return json.dumps(self.report(policy, peak_age), indent=2)


def peak_age_of(f: np.ndarray, net: NetworkSpec) -> float:
    """Weighted peak age of any policy with activation frequencies f."""
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0.0):
        raise UnboundedAgeError("a positive-weight link has zero activation frequency")
    return float(np.sum(net.weights / (net.gamma * f)))


def stationary_age_analytic(p: float) -> AgePair:
    """Peak and average age of a link successfully activated w.p. p per slot.

    Inter-activation times are geometric with mean 1/p, which makes peak and
    average age coincide at 1/p for any stationary policy.
    """
    if not 0.0 < p <= 1.0:
        raise UnboundedAgeError(f"per-slot success probability {p} outside (0, 1]")
    return AgePair(peak=1.0 / p, average=1.0 / p)


def _omega_weights(M: np.ndarray, v: np.ndarray, f: np.ndarray) -> np.ndarray:
    zero = f <= 0.0
    per_link = np.zeros_like(f)
    per_link[~zero] = v[~zero] / f[~zero] ** 2
    om = M.T @ per_link
    if np.any(zero):  # any set touching a starved link has unbounded weight
        om[M[zero].any(axis=0)] = np.inf
    return om


def certify(policy: SchedulePolicy, net: NetworkSpec,
            family: ActivationSetFamily | None = None,
            tol: float = 1e-8) -> OptimalityCertificate:
    """Evaluate the optimality conditions for a schedule.

    Omega is the x-weighted mean of the set weights over the support
    (x_m > tol); the gap is max_m Omega_m - sum_m x_m Omega_m. Sets of the
    supplied family not in the policy are treated as zero-probability sets
    for condition c2.
    """
    sets = list(policy.sets)
    x = np.asarray(policy.x, dtype=float)
    if family is not None:
        known = set(policy.sets)
        extra = [m for m in maximal_sets(family).sets if m not in known]
        sets = sets + extra
        x = np.concatenate([x, np.zeros(len(extra))])
    n = net.n_links
    M = np.zeros((n, len(sets)))
    for j, m in enumerate(sets):
        M[list(m), j] = 1.0
    f = M @ x
    v = net.weights / net.gamma
    om = _omega_weights(M, v, f)
    support = x > tol
    if not np.any(support):
        raise FreshnetError("policy has empty support at this tolerance")
    omega = float(np.dot(x[support], om[support]) / x[support].sum())
    finite = np.isfinite(om)
    gap = float(np.max(om) - np.dot(x, np.where(finite, om, 0.0))) if np.all(
        finite[support]) else float("inf")
    scale = max(abs(omega), 1.0)
    c1 = bool(np.all(np.abs(om[support] - omega) <= tol * scale))
    c2 = bool(np.all(om[~support] <= omega + tol * scale))
    c3 = bool(abs(x.sum() - 1.0) <= tol and np.all(x >= -tol))
    return OptimalityCertificate(
        omega_weights=om, omega=omega, gap=gap,
        conditions={"c1": c1, "c2": c2, "c3": c3}, tol=tol,
    )


def _line_search(v, f, delta, t_max):
    """Exact line search for sum(v / (f + t*delta)) on [0, t_max], keeping f > 0."""
    neg = delta < 0.0
    if np.any(neg):
        cap = np.min((f[neg] - 1e-15) / (-delta[neg]))
        t_max = min(t_max, cap * (1.0 - 1e-12))
    if t_max <= 0.0:
        return 0.0

    def slope(t):
        ft = f + t * delta
        return -np.sum(v * delta / ft**2)

    if slope(0.0) >= 0.0:
        return 0.0
    if slope(t_max) <= 0.0:
        return t_max
    lo, hi = 0.0, t_max
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if slope(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def solve_general(net: NetworkSpec, family: ActivationSetFamily,
                  tol: float = 1e-8,
                  max_iter: int = 100_000) -> tuple[SchedulePolicy, OptimalityCertificate]:
    """Minimize weighted peak age over stationary schedules of the family.

    The family is pruned to maximal sets (non-maximal sets carry no
    probability at an optimum). Returns the schedule and a certificate whose
    gap is at most tol * Omega on convergence; if the iteration budget runs
    out, the best iterate is returned with its (larger) gap and a warning is
    logged.
    """
    fam = maximal_sets(family)
    sets = fam.sets
    if not sets:
        raise UncoveredLinkError("family contains no activation sets")
    covered = set()
    for m in sets:
        covered.update(m)
    missing = [e for e in range(net.n_links) if e not in covered]
    if missing:
        raise UncoveredLinkError(f"links {missing} appear in no activation set")

    M = fam.incidence_matrix(sets)
    v = net.weights / net.gamma
    n_sets = len(sets)
    x = np.full(n_sets, 1.0 / n_sets)  # covers every link, so f > 0 at start

    def objective(xv):
        return float(np.sum(v / (M @ xv)))

    # Phase 1: pairwise conditional gradient with exact line search.
    budget = max_iter
    fw_iters = min(_FW_PHASE_CAP, max_iter)
    it = 0
    for it in range(fw_iters):
        f = M @ x
        om = _omega_weights(M, v, f)
        obj = np.dot(x, om)  # equals sum(v/f) via the support identity
        s = int(np.argmax(om))
        gap = om[s] - float(np.dot(x, om))
        if gap <= 1e-4 * max(obj, 1e-300) or gap <= tol * obj:
            break
        supp = np.nonzero(x > 1e-14)[0]
        a = supp[int(np.argmin(om[supp]))]
        if a == s:
            break
        direction = M[:, s] - M[:, a]
        t = _line_search(v, f, direction, x[a])
        if t <= 0.0:
            break
        x[s] += t
        x[a] -= t
        np.clip(x, 0.0, None, out=x)
    budget -= it + 1

    # Phase 2: Newton equalization of the support weights (active set).
    support = set(np.nonzero(x > _SUPPORT_EPS)[0].tolist())
    best_x = x.copy()
    best_obj = objective(best_x)
    for _ in range(60):
        if budget <= 0:
            break
        cols = sorted(support)
        Ms = M[:, cols]
        xs = x[cols].astype(float)
        total = xs.sum()
        if total <= 0.0:
            xs = np.full(len(cols), 1.0 / len(cols))
        else:
            xs = xs / total
        omega_mul = float(np.sum(v / (Ms @ xs)))
        for _inner in range(100):
            budget -= 1
            fs = Ms @ xs
            if np.any(fs <= 0.0):
                break
            om_s = Ms.T @ (v / fs**2)
            resid = np.concatenate([om_s - omega_mul, [xs.sum() - 1.0]])
            if np.max(np.abs(resid)) <= 1e-13 * max(omega_mul, 1.0):
                break
            G = (Ms.T * (v / fs**3)) @ Ms
            k = len(cols)
            J = np.zeros((k + 1, k + 1))
            J[:k, :k] = -2.0 * G
            J[:k, k] = -1.0
            J[k, :k] = 1.0
            step, *_ = np.linalg.lstsq(J, -resid, rcond=None)
            t = 1.0
            for _bt in range(60):
                trial = xs + t * step[:k]
                if np.all(Ms @ trial > 1e-13):
                    break
                t *= 0.5
            xs = xs + t * step[:k]
            omega_mul += t * step[k]
        if np.any(xs < -1e-12):
            drop = cols[int(np.argmin(xs))]
            support.discard(drop)
            x = np.zeros(n_sets)
            for c, xv in zip(cols, np.maximum(xs, 0.0)):
                if c in support:
                    x[c] = xv
            if x.sum() <= 0.0:
                x[list(support)] = 1.0 / max(len(support), 1)
            continue
        xs = np.maximum(xs, 0.0)
        x = np.zeros(n_sets)
        for c, xv in zip(cols, xs):
            x[c] = xv
        x /= x.sum()
        f = M @ x
        om = _omega_weights(M, v, f)
        obj = objective(x)
        if obj < best_obj:
            best_obj, best_x = obj, x.copy()
        gap = float(np.max(om) - np.dot(x, om))
        if gap <= tol * obj:
            break
        support.add(int(np.argmax(om)))
    else:
        logger.warning("solver support loop exhausted without reaching tol")

    if objective(best_x) < objective(x):
        x = best_x
    f = M @ x
    policy = SchedulePolicy(sets=sets, x=x, f=f)
    cert = certify(policy, net, tol=tol)
    if cert.gap > tol * max(cert.omega, 1e-300):
        logger.warning("returning best iterate with gap %.3e > tol*Omega", cert.gap)
    return policy, cert


def waterfill_frequencies(v: np.ndarray, budget: float) -> np.ndarray:
    """f_e = min(1, sqrt(v_e / nu)) with nu chosen so that sum f = budget.

    The multiplier is found by bisection on a log scale. budget >= n returns
    the all-ones vector (every cap binds).
    """
    v = np.asarray(v, dtype=float)
    n = v.shape[0]
    if budget >= n:
        return np.ones(n)

    def total(nu):
        return float(np.sum(np.minimum(1.0, np.sqrt(v / nu))))

    lo, hi = 1e-18, 1e18
    for _ in range(220):
        mid = np.sqrt(lo * hi)
        if total(mid) > budget:
            lo = mid
        else:
            hi = mid
    nu = np.sqrt(lo * hi)
    return np.minimum(1.0, np.sqrt(v / nu))


def solve_klink(net: NetworkSpec, K: int,
                tol: float = 1e-9) -> tuple[np.ndarray, float]:
    """Peak-age-optimal frequencies under at-most-K simultaneous links.

    Water-filling: f_e = min(1, sqrt(w_e / (gamma_e nu))) with the multiplier
    nu >= 0 set by bisection so that sum f = min(K, n). Matches solve_general
    on the enumerated family.
    """
    if K < 1:
        raise FreshnetError("K must be at least 1")
    v = net.weights / net.gamma
    f = waterfill_frequencies(v, float(min(K, net.n_links)))
    return f, peak_age_of(f, net)
