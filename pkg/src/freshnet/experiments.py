"""Experiment harness: queue-formula sweeps, network sweeps, and the
self-verification suite. Every experiment is a pure function of its
parameters and seed; outputs are plot-ready CSV rows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import FreshnetError
from .network import ActivationSetFamily, NetworkSpec
from .optimizer import (SchedulePolicy, certify, peak_age_of, solve_general,
                        solve_klink, waterfill_frequencies)
from .queues import (ArrivalProcess, alpha_star, berber1_age, dber1_age,
                     delta_gap, dm1_bound, factor_bounds, gber1_age, mm1_bound,
                     optimal_rho, sigma_star)
from .simulator import (Distributed, RoundRobin, Sources, StationaryCentralized,
                        StationaryMarginal, UniformStationary, replicate)
from .spp import build_spp, joint_oracle_optimum, spp_analytic_age
from .numeric import golden_min

CSV_SCHEMA_PREFIX = "# schema=freshnet"


def write_csv(path: str, rows: list[dict], schema: str):
    """Write rows with a stable, self-describing header and a schema tag."""
    if not rows:
        raise FreshnetError("no rows to write")
    fields = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        fh.write(f"{CSV_SCHEMA_PREFIX}.{schema}.v1\n")
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)


def pattern_network(n: int, gamma_good: float, gamma_bad: float,
                    n_bad: int) -> NetworkSpec:
    """Uniform-weight network with the first n_bad links on the bad channel."""
    gamma = np.full(n, gamma_good)
    gamma[:n_bad] = gamma_bad
    return NetworkSpec(weights=np.full(n, 1.0 / n), gamma=gamma)


# ---------------------------------------------------------------------------
# Queue occupancy sweep (discrete-time ages vs continuous-time bounds)
# ---------------------------------------------------------------------------

def experiment_fig2(mu: float = 0.8, rho_grid=None, out: str | None = None) -> list[dict]:
    """Peak/average age vs occupancy at fixed service rate, four queue types.

    The discrete-time kinds sit below their continuous-time bounds at every
    occupancy, with the gap widening toward saturation.
    """
    if rho_grid is None:
        rho_grid = np.arange(0.05, 0.951, 0.05)
    rows = []
    for rho in rho_grid:
        ber = berber1_age(mu, 1.0, rho)
        mm1 = mm1_bound(mu, rho)
        dber = dber1_age(mu, 1.0, 1.0 / (rho * mu))
        dm1 = dm1_bound(mu, rho)
        rows.append({
            "rho": round(float(rho), 6), "mu": mu,
            "berber1_peak": ber.peak, "berber1_ave": ber.average,
            "mm1_peak": mm1.peak, "mm1_ave": mm1.average,
            "dber1_peak": dber.peak, "dber1_ave": dber.average,
            "dm1_peak": dm1.peak, "dm1_ave": dm1.average,
        })
    if out:
        write_csv(out, rows, "fig2")
    return rows


def queue_sweep(arrival_kind: str, gamma_f: float, rho_grid=None,
                out: str | None = None) -> list[dict]:
    """Long-format occupancy sweep for one arrival kind at fixed gamma_f."""
    if rho_grid is None:
        rho_grid = np.arange(0.05, 0.951, 0.05)
    d_peak = delta_gap(arrival_kind, "peak", gamma_f)
    d_ave = delta_gap(arrival_kind, "ave", gamma_f)
    rows = []
    for rho in rho_grid:
        if arrival_kind == "bernoulli":
            dt = berber1_age(gamma_f, 1.0, rho)
            ct = mm1_bound(gamma_f, rho)
        else:
            dt = dber1_age(gamma_f, 1.0, 1.0 / (rho * gamma_f))
            ct = dm1_bound(gamma_f, rho)
        rows.append({
            "kind": arrival_kind, "gamma_f": gamma_f,
            "rho": round(float(rho), 6),
            "peak_dt": dt.peak, "ave_dt": dt.average,
            "peak_ct_bound": ct.peak, "ave_ct_bound": ct.average,
            "delta_peak": d_peak, "delta_ave": d_ave,
        })
    if out:
        write_csv(out, rows, "queue-sweep")
    return rows


# ---------------------------------------------------------------------------
# Interference sweep with active sources (three policies)
# ---------------------------------------------------------------------------

def experiment_fig3_4(K: int, n: int = 50, gamma_good: float = 0.9,
                      gamma_bads=(0.1, 0.2), thetas=None,
                      horizon: int = 1_000_000, warmup: int | None = None,
                      reps: int = 10, seed: int = 0,
                      out: str | None = None) -> list[dict]:
    """Ages vs fraction of bad-channel links, under three schedulers.

    Policies: the peak-age-optimal stationary schedule, a uniform stationary
    schedule over maximal sets, and a worst-channels-first round robin with
    period ceil(n/K). Sources are active; metrics carry 95% half-widths.
    """
    if thetas is None:
        thetas = [round(0.1 * i, 1) for i in range(11)]
    if warmup is None:
        warmup = horizon // 10
    family = ActivationSetFamily.k_link(n, K)
    rows = []
    cell = 0
    for gamma_bad in gamma_bads:
        for theta in thetas:
            n_bad = int(round(theta * n))
            net = pattern_network(n, gamma_good, gamma_bad, n_bad)
            f_star, peak_star = solve_klink(net, K)
            schedulers = {
                "pi_c": StationaryMarginal(f_star, K),
                "uniform": UniformStationary(family),
                "round_robin": RoundRobin.by_channel_quality(net, K),
            }
            for name, sched in schedulers.items():
                m = replicate(net, family, sched, Sources.active(n),
                              horizon, warmup, reps, base_seed=seed + 1000 * cell)
                rows.append({
                    "K": K, "theta": theta, "gamma_bad": gamma_bad,
                    "policy": name,
                    "peak": m.weighted_peak, "peak_hw": m.peak_hw,
                    "ave": m.weighted_average, "ave_hw": m.average_hw,
                    "analytic_peak_fhat": peak_age_of(m.f_hat, net),
                    "optimal_peak": peak_star,
                })
                cell += 1
    if out:
        write_csv(out, rows, "fig3_4")
    return rows


# ---------------------------------------------------------------------------
# Buffered sources: separation policy vs joint optimum (K sweep)
# ---------------------------------------------------------------------------

def buffered_optimum_klink(net: NetworkSpec, K: int, max_rounds: int = 200,
                           tol: float = 1e-11) -> tuple[float, np.ndarray, np.ndarray]:
    """Jointly optimal (f, rho) for Bernoulli-fed links under a K budget.

    Alternating minimization: with occupancies fixed, the frequency step is
    water-filling on effective weights w_e (1/rho + 1/(1-rho)) / gamma_e minus
    a frequency-free term; with frequencies fixed, each occupancy is a 1-D
    golden-section minimization of the exact link age. The objective descends
    every round, so the scheme converges; small instances are validated
    against a full grid.
    """
    n = net.n_links
    rho = np.full(n, 0.5)
    prev = np.inf
    f = np.zeros(n)
    for _ in range(max_rounds):
        c = net.weights * (1.0 / rho + 1.0 / (1.0 - rho)) / net.gamma
        f = waterfill_frequencies(c, float(min(K, n)))
        mu = net.gamma * f
        for e in range(n):
            rho[e], _ = golden_min(
                lambda r: berber1_age(mu[e], 1.0, r).peak, 1e-6, 1.0 - 1e-6,
                xtol=1e-12,
            )
        val = float(sum(net.weights[e] * berber1_age(mu[e], 1.0, rho[e]).peak
                        for e in range(n)))
        if abs(prev - val) < tol:
            break
        prev = val
    return val, f, rho


_FIG6_CASES = {
    "case1": dict(n=50, gamma_good=0.9, gamma_bad=0.1, n_bad=7, k_range=range(1, 11)),
    "case2": dict(n=10, gamma_good=0.9, gamma_bad=0.1, n_bad=7, k_range=range(1, 6)),
    "case3": dict(n=50, gamma_good=1.0, gamma_bad=1.0, n_bad=0, k_range=range(1, 11)),
}


def experiment_fig6(cases=None, out: str | None = None) -> list[dict]:
    """Peak age of buffered networks vs K: separation policy, joint optimum,
    and the active-source optimum (all analytic / numeric, no simulation)."""
    rows = []
    for case, spec in _FIG6_CASES.items():
        if cases is not None and case not in cases:
            continue
        net = pattern_network(spec["n"], spec["gamma_good"], spec["gamma_bad"],
                              spec["n_bad"])
        for K in spec["k_range"]:
            cfg = build_spp(net, K=K, arrival_kind="bernoulli", metric="peak")
            spp_peak = spp_analytic_age(cfg)
            buffered_opt, _, _ = buffered_optimum_klink(net, K)
            _, active_opt = solve_klink(net, K)
            rows.append({
                "case": case, "K": K,
                "spp_peak": spp_peak,
                "buffered_optimum": buffered_opt,
                "active_optimum": active_opt,
                "additive_gap": spp_peak - buffered_opt,
                "buffered_to_active_ratio": buffered_opt / active_opt,
            })
    if out:
        write_csv(out, rows, "fig6")
    return rows


# ---------------------------------------------------------------------------
# Random instances (shared by the verification suite and tests)
# ---------------------------------------------------------------------------

def random_instance(rng: np.random.Generator, max_links: int = 8,
                    kinds=("explicit", "k-link", "single-hop")):
    """A random small network plus a random activation-set family."""
    kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "single-hop":
        n_nodes = int(rng.integers(4, 7))
        pairs = [(u, v) for u in range(n_nodes) for v in range(u + 1, n_nodes)]
        order = rng.permutation(len(pairs))
        n_links = int(rng.integers(3, min(max_links, len(pairs)) + 1))
        edges = [pairs[j] for j in order[:n_links]]
        family = ActivationSetFamily.single_hop(edges)
        n = n_links
    else:
        n = int(rng.integers(2, max_links + 1))
        if kind == "k-link":
            family = ActivationSetFamily.k_link(n, int(rng.integers(1, min(n, 3) + 1)))
        else:
            sets = set()
            for _ in range(int(rng.integers(n, 2 * n + 2))):
                size = int(rng.integers(1, max(2, n // 2) + 1))
                sets.add(tuple(sorted(rng.choice(n, size=size, replace=False).tolist())))
            for e in range(n):  # every link must be coverable
                sets.add((e,))
            family = ActivationSetFamily.explicit(sorted(sets), n_links=n)
    weights = rng.uniform(0.2, 1.0, n)
    gamma = rng.uniform(0.25, 1.0, n)
    net = NetworkSpec(weights=weights, gamma=gamma)
    return net, family


def scheduler_zoo(net: NetworkSpec, family: ActivationSetFamily,
                  policy: SchedulePolicy, rng: np.random.Generator) -> dict:
    """One scheduler of each class for a solved instance."""
    maximal = family.maximal()
    p = rng.uniform(0.1, 0.45, net.n_links)
    return {
        "stationary_pi_c": StationaryCentralized(policy.sets, policy.x, net.n_links),
        "uniform": UniformStationary(family),
        "round_robin": RoundRobin([list(m) for m in maximal.sets], net.n_links),
        "distributed": Distributed(p, family),
    }


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)

    def add(self, name: str, passed: bool, detail: str = ""):
        self.checks.append(CheckResult(name, bool(passed), detail))

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def matrix(self) -> str:
        width = max(len(c.name) for c in self.checks) + 2
        lines = [f"{c.name:<{width}} {'PASS' if c.passed else 'FAIL'}  {c.detail}"
                 for c in self.checks]
        status = "ALL CHECKS PASSED" if self.all_passed else "CHECKS FAILED"
        return "\n".join(lines + ["-" * width, status])


def verify_all(seed: int = 0, horizon: int = 300_000, reps: int = 6,
               n_instances: int = 4) -> VerificationReport:
    """Run every property suite at desk scale and report a pass/fail matrix.

    A fresh checkout with a fixed seed passes every check; the final check is
    a negative control (a deliberately perturbed schedule must be rejected by
    the optimality certificate).
    """
    rng = np.random.default_rng(seed)
    rep = VerificationReport()
    warmup = horizon // 10

    # Scheduling identities on random instances, all scheduler classes.
    peak_err, lemma2_err, thm2_margin = [], [], []
    failures = {"t1": "", "l2": "", "t2": ""}
    for i in range(n_instances):
        net, family = random_instance(rng, max_links=6)
        policy, _cert = solve_general(net, family)
        for name, sched in scheduler_zoo(net, family, policy, rng).items():
            m = replicate(net, family, sched, Sources.active(net.n_links),
                          horizon, warmup, reps, base_seed=seed + 97 * i)
            analytic = peak_age_of(np.maximum(m.f_hat, 1e-12), net)
            tolerance = max(2.5 * m.peak_hw, 0.015 * analytic)
            peak_err.append(abs(m.weighted_peak - analytic) / analytic)
            if abs(m.weighted_peak - analytic) > tolerance and not failures["t1"]:
                failures["t1"] = (f"{name}: sim {m.weighted_peak:.4f} "
                                  f"vs analytic {analytic:.4f}")
            if name != "round_robin":  # stationary classes only
                d = m.rep_weighted_average - m.rep_weighted_peak
                hw = 1.96 * d.std(ddof=1) / math.sqrt(reps) if reps > 1 else 0.0
                lemma2_err.append(abs(d.mean()))
                if abs(d.mean()) > max(2.5 * hw, 0.01 * analytic) and not failures["l2"]:
                    failures["l2"] = f"{name}: |ave-peak| = {abs(d.mean()):.4f}"
            slack = 2 * (m.peak_hw + 2 * m.average_hw) + 1e-9
            thm2_margin.append(2 * m.weighted_average - 1 + slack - m.weighted_peak)
            if m.weighted_peak > 2 * m.weighted_average - 1 + slack and not failures["t2"]:
                failures["t2"] = name
    rep.add("theorem1-peak-identity", not failures["t1"],
            failures["t1"] or f"max rel err {max(peak_err):.2%} over {len(peak_err)} runs")
    rep.add("lemma2-stationary-peak-eq-ave", not failures["l2"],
            failures["l2"] or f"max |ave-peak| {max(lemma2_err):.4f}")
    rep.add("theorem2-peak-vs-average", not failures["t2"],
            failures["t2"] or f"min margin {min(thm2_margin):.4f}")

    # Equal empirical frequencies imply equal peak age.
    net = pattern_network(6, 0.7, 0.7, 0)
    fam6 = ActivationSetFamily.k_link(6, 1)
    m_rr = replicate(net, fam6, RoundRobin([[e] for e in range(6)], 6),
                     Sources.active(6), horizon, warmup, reps, base_seed=seed + 7)
    m_u = replicate(net, fam6, UniformStationary(fam6), Sources.active(6),
                    horizon, warmup, reps, base_seed=seed + 8)
    diff = abs(m_rr.weighted_peak - m_u.weighted_peak)
    tolerance = max(2.5 * (m_rr.peak_hw + m_u.peak_hw), 0.01 * m_u.weighted_peak)
    rep.add("equal-frequency-equal-peak", diff <= tolerance,
            f"|RR - uniform| = {diff:.4f}")

    # Optimizer certificates, k-link agreement, and the 2-link grid oracle.
    ok, detail = True, ""
    for i in range(n_instances):
        net, family = random_instance(rng, max_links=8)
        policy, cert = solve_general(net, family, tol=1e-8)
        if cert.gap > 1e-8 * cert.omega or not cert.optimal:
            ok, detail = False, f"instance {i}: gap {cert.gap:.2e}"
            break
        if abs(peak_age_of(policy.f, net) - cert.omega) > 1e-6 * cert.omega:
            ok, detail = False, "peak age != multiplier at optimum"
            break
    rep.add("theorem3-certificate", ok, detail)

    net = NetworkSpec(weights=np.array([0.4, 0.6]), gamma=np.array([0.9, 0.3]))
    fam = ActivationSetFamily.k_link(2, 1)
    policy, cert = solve_general(net, fam)
    f_wf, v_wf = solve_klink(net, 1)
    grid = np.linspace(1e-6, 1 - 1e-6, 10**6)
    v_grid = (net.weights[0] / (net.gamma[0] * grid)
              + net.weights[1] / (net.gamma[1] * (1 - grid))).min()
    agree = (abs(cert.omega - v_wf) <= 1e-6 * v_wf
             and abs(cert.omega - v_grid) <= 1e-6 * v_grid)
    rep.add("klink-and-grid-agreement", agree,
            f"general {cert.omega:.9f}, waterfill {v_wf:.9f}, grid {v_grid:.9f}")

    # Queue calculus: closed forms, fixed points, simulated agreement.
    worst = 0.0
    for lam, mu in [(0.25, 0.5), (0.4, 0.8), (0.1, 0.9), (0.6, 0.75)]:
        a = alpha_star(ArrivalProcess.bernoulli(lam), mu)
        worst = max(worst, abs(a - (mu - lam) / (1 - lam)))
    rep.add("alpha-star-closed-form", worst <= 1e-9, f"max |err| {worst:.2e}")

    worst = 0.0
    for mu, D in [(0.5, 4), (0.8, 3), (0.3, 10), (0.9, 2)]:
        s = sigma_star(mu, D)
        worst = max(worst, abs(s - 1 + (1 - s * mu) ** D))
    rep.add("sigma-star-residual", worst <= 1e-10, f"max residual {worst:.2e}")

    rho_vals = {k: optimal_rho(k) for k in
                ("bernoulli-peak", "bernoulli-ave", "periodic-peak", "periodic-ave")}
    occ_ok = (rho_vals["bernoulli-peak"] == 0.5
              and abs(rho_vals["bernoulli-ave"] - 0.53) <= 0.01
              and abs(rho_vals["periodic-peak"] - 0.594) <= 0.005
              and abs(rho_vals["periodic-ave"] - 0.515) <= 0.005)
    rep.add("optimal-occupancies", occ_ok,
            " ".join(f"{k}={v:.4f}" for k, v in rho_vals.items()))

    # Consistency of the three formula routes.
    worst = 0.0
    for lam, mu in [(0.2, 0.5), (0.45, 0.6), (0.7, 0.8)]:
        via_fixed_point = gber1_age(ArrivalProcess.bernoulli(lam), mu)
        direct = berber1_age(mu, 1.0, lam / mu)
        worst = max(worst, abs(via_fixed_point.peak - direct.peak),
                    abs(via_fixed_point.average - direct.average))
    rep.add("gber1-vs-berber1-consistency", worst <= 1e-8, f"max |err| {worst:.2e}")

    # Simulated queues vs formulas (reduced horizon).
    qworst = 0.0
    fam1 = ActivationSetFamily.explicit([(0,)], n_links=1)
    net1 = NetworkSpec(weights=np.array([1.0]), gamma=np.array([1.0]))
    for src, expected in [
        (Sources.bernoulli([0.25]), berber1_age(0.5, 1.0, 0.5)),
        (Sources.periodic([4]), dber1_age(0.5, 1.0, 4)),
    ]:
        sched = StationaryMarginal(np.array([0.5]), 1)  # serve at gamma*f = 0.5
        m = replicate(net1, fam1, sched, src, 10 * horizon, horizon, 2,
                      base_seed=seed + 31)
        qworst = max(qworst, abs(m.weighted_peak - expected.peak) / expected.peak,
                     abs(m.weighted_average - expected.average) / expected.average)
    rep.add("queue-formula-simulation", qworst <= 0.02, f"max rel err {qworst:.2%}")

    # Continuous-time bounds dominate; the gap widens toward saturation.
    rows = experiment_fig2()
    dominated = all(r["berber1_peak"] <= r["mm1_peak"] + 1e-12
                    and r["berber1_ave"] <= r["mm1_ave"] + 1e-12
                    and r["dber1_peak"] <= r["dm1_peak"] + 1e-12
                    and r["dber1_ave"] <= r["dm1_ave"] + 1e-12 for r in rows)
    gap_lo = rows[1]["mm1_peak"] - rows[1]["berber1_peak"]
    gap_hi = rows[-1]["mm1_peak"] - rows[-1]["berber1_peak"]
    rep.add("discrete-below-continuous", dominated and gap_hi > gap_lo,
            f"gap {gap_lo:.3f} -> {gap_hi:.3f}")

    # Rate-control penalty is below one slot (and below the observed caps).
    caps = {("bernoulli", "peak"): 1.0, ("bernoulli", "ave"): 1.0,
            ("periodic", "peak"): 0.7, ("periodic", "ave"): 0.6}
    worst_gap, gaps_ok = {}, True
    for (kind, metric), cap in caps.items():
        worst_gap[(kind, metric)] = max(
            delta_gap(kind, metric, g) for g in np.arange(0.05, 0.96, 0.1))
        gaps_ok &= worst_gap[(kind, metric)] <= cap
    rep.add("rate-control-penalty", gaps_ok,
            " ".join(f"{k[0]}-{k[1]}:{v:.3f}" for k, v in worst_gap.items()))

    table = factor_bounds()
    fac_ok = (abs(table["bernoulli-peak"]["factor"] - 4.0) < 1e-12
              and abs(table["bernoulli-ave"]["factor"] - 7.0) <= 0.2
              and abs(table["periodic-peak"]["factor"] - 2.15) <= 0.05
              and abs(table["periodic-ave"]["factor"] - 4.51) <= 0.05)
    rep.add("factor-table", fac_ok,
            " ".join(f"{k}={v['factor']:.4f}" for k, v in table.items()))

    # Separation principle: within one slot of the joint optimum.
    gaps = []
    for n_links, gamma in [(1, [1.0]), (2, [1.0, 1.0]), (2, [0.9, 0.4])]:
        net = NetworkSpec(weights=np.full(n_links, 1.0), gamma=np.array(gamma))
        fam = ActivationSetFamily.k_link(n_links, 1)
        cfg = build_spp(net, K=1, arrival_kind="bernoulli", metric="peak")
        oracle = joint_oracle_optimum(net, fam, "bernoulli", "peak", grid=100)
        gaps.append(spp_analytic_age(cfg) - oracle)
    rep.add("separation-additive-gap", max(gaps) <= 1.0 + 1e-9,
            f"gaps {[round(g, 4) for g in gaps]}")

    # Negative control: a perturbed schedule must fail certification.
    net = NetworkSpec(weights=np.array([0.4, 0.6]), gamma=np.array([0.9, 0.3]))
    policy, cert = solve_general(net, ActivationSetFamily.k_link(2, 1))
    x_bad = policy.x.copy()
    x_bad[0] += 0.2
    x_bad[1] -= 0.2
    bad = SchedulePolicy(sets=policy.sets, x=x_bad,
                         f=np.array([x_bad[0], x_bad[1]]))
    bad_cert = certify(bad, net, tol=1e-8)
    rep.add("negative-control-certificate", not bad_cert.optimal,
            f"perturbed gap {bad_cert.gap:.3e}")

    return rep
