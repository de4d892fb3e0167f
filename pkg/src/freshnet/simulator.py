"""Slot-by-slot network simulation with exact age bookkeeping.

Each slot: (1) buffered sources generate packets (timestamped with the slot);
(2) the scheduler emits an activation set m(t); (3) if m(t) is feasible,
every link in it draws its channel; a successful draw delivers a packet if
one is available. Active sources always transmit a fresh packet (generation
time = delivery slot). Buffered packets wait in an uncontrolled FIFO: a
packet generated in slot t becomes servable in slot t+1, so its system time
d - t lies on {1, 2, ...} (geometric for a queue fed at rate gamma*f).

Ages follow the recursion: delivery of a packet generated at G in slot t
resets the age to t - G + 1 at t+1; otherwise the age grows by one. The peak
sample at a delivery is the age in the delivery slot, before the reset. The
initial age is 1, as if a delivery had occurred just before slot 0.

Link activation frequency counts scheduled-and-feasible slots regardless of
channel outcome or queue content (channel errors and empty queues do not
reduce f_e).

The engine is vectorized in fixed-size chunks and strictly deterministic:
a SeedSequence spawns one stream for the scheduler and one per (link,
purpose), with purposes "channel" and "arrivals". Identical seeds give
bit-identical metrics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FreshnetError, SimulationConfigError
from .network import ActivationSetFamily, NetworkSpec

CHUNK = 1 << 17  # slots per processing chunk; part of the sampling layout

Z95 = 1.959963984540054  # two-sided 95% normal quantile


# ---------------------------------------------------------------------------
# Schedulers
# ---------------------------------------------------------------------------

class StationaryCentralized:
    """Sample one activation set per slot, i.i.d. from a distribution x."""

    def __init__(self, sets, x, n_links: int):
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-12) or abs(x.sum() - 1.0) > 1e-9:
            raise FreshnetError("x must be a probability distribution over sets")
        self.n_links = n_links
        self.membership = np.zeros((len(sets), n_links), dtype=bool)
        for j, m in enumerate(sets):
            self.membership[j, list(m)] = True
        self.cdf = np.cumsum(np.maximum(x, 0.0))
        self.cdf[-1] = 1.0

    def emit(self, n: int, t0: int, rng: np.random.Generator) -> np.ndarray:
        u = rng.random(n)
        idx = np.searchsorted(self.cdf, u, side="right")
        return self.membership[idx]

    def describe(self) -> str:
        return f"stationary-centralized over {self.membership.shape[0]} sets"


class StationaryMarginal:
    """Stationary schedule realizing target frequencies f with sum(f) <= K.

    Systematic sampling: intervals of length f_e are laid end to end on
    [0, sum f); a single uniform offset u per slot selects the links whose
    intervals contain u + j for j = 0, 1, .... Marginals are exactly f,
    selections are i.i.d. across slots, and at most ceil(sum f) <= K links
    are active per slot, so the family never needs materializing.
    """

    def __init__(self, f, K: int):
        f = np.asarray(f, dtype=float)
        if np.any(f < 0.0) or np.any(f > 1.0 + 1e-12):
            raise FreshnetError("frequencies must lie in [0, 1]")
        total = f.sum()
        if total > K + 1e-9:
            raise FreshnetError(f"sum(f) = {total:.6g} exceeds the K = {K} budget")
        self.n_links = f.shape[0]
        self.f = np.minimum(f, 1.0)
        self.edges = np.concatenate([[0.0], np.cumsum(self.f)])
        self.total = float(self.edges[-1])
        self.n_points = int(np.ceil(self.total - 1e-12))

    def emit(self, n: int, t0: int, rng: np.random.Generator) -> np.ndarray:
        out = np.zeros((n, self.n_links), dtype=bool)
        u = rng.random(n)
        rows = np.arange(n)
        for j in range(self.n_points):
            pos = u + j
            inside = pos < self.total
            sel = np.searchsorted(self.edges, pos[inside], side="right") - 1
            out[rows[inside], sel] = True
        return out

    def describe(self) -> str:
        return f"stationary-marginal (sum f = {self.total:.3f})"


class Distributed:
    """Each link attempts independently w.p. p_e; infeasible attempts collide.

    A slot whose attempted set is not in the family yields no activations at
    all (whole-set feasibility), so f_e counts only feasible slots.
    """

    def __init__(self, p, family: ActivationSetFamily):
        p = np.asarray(p, dtype=float)
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise FreshnetError("attempt probabilities must lie in [0, 1]")
        if p.shape[0] != family.n_links:
            raise FreshnetError("p length does not match the family")
        self.p = p
        self.n_links = family.n_links
        self.family = family
        if family.kind == "explicit":
            if family.n_links > 63:
                raise FreshnetError("explicit-family collision check needs <= 63 links")
            self._masks = np.unique(
                np.array([_bitmask(m) for m in family.sets], dtype=np.uint64)
            )
        elif family.kind == "single-hop":
            nodes = sorted({v for e in family.graph_edges for v in e})
            index = {v: i for i, v in enumerate(nodes)}
            B = np.zeros((len(nodes), family.n_links), dtype=np.uint8)
            for e, (a, b) in enumerate(family.graph_edges):
                B[index[a], e] = 1
                B[index[b], e] = 1
            self._node_inc = B

    def emit(self, n: int, t0: int, rng: np.random.Generator) -> np.ndarray:
        attempts = rng.random((n, self.n_links)) < self.p
        fam = self.family
        if fam.kind == "k-link":
            feasible = attempts.sum(axis=1) <= fam.K
        elif fam.kind == "single-hop":
            counts = attempts.astype(np.uint8) @ self._node_inc.T
            feasible = (counts <= 1).all(axis=1)
        else:
            pow2 = (np.uint64(1) << np.arange(self.n_links, dtype=np.uint64))
            masks = attempts.astype(np.uint64) @ pow2
            feasible = np.isin(masks, self._masks)
        feasible &= attempts.any(axis=1)
        return attempts & feasible[:, None]

    def describe(self) -> str:
        return "distributed"


class RoundRobin:
    """Deterministic cyclic schedule of link groups."""

    def __init__(self, groups, n_links: int):
        self.n_links = n_links
        self.period = len(groups)
        if self.period == 0:
            raise FreshnetError("round-robin needs at least one group")
        self.onehot = np.zeros((self.period, n_links), dtype=bool)
        for j, grp in enumerate(groups):
            self.onehot[j, list(grp)] = True

    @classmethod
    def by_channel_quality(cls, net: NetworkSpec, K: int) -> "RoundRobin":
        """Groups of K links, worst channels first, period ceil(N/K)."""
        order = np.argsort(net.gamma, kind="stable")
        groups = [order[i: i + K].tolist() for i in range(0, net.n_links, K)]
        return cls(groups, net.n_links)

    def emit(self, n: int, t0: int, rng: np.random.Generator) -> np.ndarray:
        phase = (t0 + np.arange(n)) % self.period
        return self.onehot[phase]

    def describe(self) -> str:
        return f"round-robin (period {self.period})"


class UniformStationary:
    """Uniform distribution over the maximal sets of the family.

    Enumerable families get an explicit uniform stationary-centralized
    sampler; k-link families sample a uniform random K-subset per slot.
    """

    def __init__(self, family: ActivationSetFamily):
        self.n_links = family.n_links
        if family.kind == "k-link":
            self.K = family.K
            self._explicit = None
        else:
            sets = family.maximal().sets
            self._explicit = StationaryCentralized(
                sets, np.full(len(sets), 1.0 / len(sets)), family.n_links
            )

    def emit(self, n: int, t0: int, rng: np.random.Generator) -> np.ndarray:
        if self._explicit is not None:
            return self._explicit.emit(n, t0, rng)
        r = rng.random((n, self.n_links))
        sel = np.argpartition(r, self.K - 1, axis=1)[:, : self.K]
        out = np.zeros((n, self.n_links), dtype=bool)
        np.put_along_axis(out, sel, True, axis=1)
        return out

    def describe(self) -> str:
        return "uniform-stationary"


def _bitmask(s) -> int:
    m = 0
    for e in s:
        m |= 1 << e
    return m


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Sources:
    """Per-link update generation: active, bernoulli(rate), periodic(D, phase)."""

    kinds: tuple[str, ...]
    rates: np.ndarray       # bernoulli generation probability per slot
    periods: np.ndarray     # periodic generation period (slots)
    phases: np.ndarray

    @classmethod
    def active(cls, n: int) -> "Sources":
        return cls(("active",) * n, np.zeros(n), np.zeros(n, dtype=int),
                   np.zeros(n, dtype=int))

    @classmethod
    def bernoulli(cls, rates) -> "Sources":
        r = np.atleast_1d(np.asarray(rates, dtype=float))
        if np.any(r <= 0.0) or np.any(r >= 1.0):
            raise FreshnetError("bernoulli generation rates must lie in (0, 1)")
        n = r.shape[0]
        return cls(("bernoulli",) * n, r, np.zeros(n, dtype=int),
                   np.zeros(n, dtype=int))

    @classmethod
    def periodic(cls, periods, phases=0) -> "Sources":
        D = np.atleast_1d(np.asarray(periods, dtype=int))
        if np.any(D < 1):
            raise FreshnetError("periods must be at least 1 slot")
        n = D.shape[0]
        ph = np.full(n, phases, dtype=int) if np.isscalar(phases) else \
            np.asarray(phases, dtype=int)
        return cls(("periodic",) * n, np.zeros(n), D, ph % np.maximum(D, 1))

    @property
    def n_links(self) -> int:
        return len(self.kinds)

    @property
    def buffered(self) -> bool:
        return any(k != "active" for k in self.kinds)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AgeMetrics:
    """Empirical per-link and weighted age metrics from one or more runs.

    Per-link arrays are aligned with link ids. For replicated results the
    half-width fields hold 95% confidence half-widths across replications
    (normal approximation) and the rep_* arrays keep per-replication weighted
    metrics for paired comparisons.
    """

    f_hat: np.ndarray
    peak: np.ndarray
    average: np.ndarray
    q_mean: np.ndarray
    rho_hat: np.ndarray
    unstable: np.ndarray
    weighted_peak: float
    weighted_average: float
    slots: int
    warmup: int
    reps: int = 1
    peak_hw: float = 0.0
    average_hw: float = 0.0
    f_hat_hw: np.ndarray | None = None
    per_link_peak_hw: np.ndarray | None = None
    per_link_average_hw: np.ndarray | None = None
    rep_weighted_peak: np.ndarray | None = None
    rep_weighted_average: np.ndarray | None = None


def measure_frequencies(metrics: AgeMetrics) -> np.ndarray:
    """Empirical link activation frequencies of a completed run."""
    return metrics.f_hat


def _age_stats(d: np.ndarray, g: np.ndarray, warmup: int, horizon: int):
    """Peak samples and summed age over the measurement window [warmup, T).

    d, g: delivery slots and matching generation slots (sorted, paired), with
    a virtual delivery of a packet generated at -1 just before slot 0.
    """
    dd = np.concatenate(([-1], d)).astype(np.int64)
    gg = np.concatenate(([-1], g)).astype(np.float64)
    peaks = dd[1:].astype(np.float64) - gg[:-1]
    peaks = peaks[dd[1:] >= warmup]
    lo = np.maximum(dd[:-1] + 1, warmup).astype(np.float64)
    hi = np.minimum(dd[1:], horizon - 1).astype(np.float64)
    n = np.maximum(hi - lo + 1.0, 0.0)
    total = float(np.sum(n * ((lo + hi) / 2.0 - gg[:-1])))
    t_lo = max(int(dd[-1]) + 1, warmup)
    if horizon - 1 >= t_lo:
        cnt = horizon - t_lo
        total += cnt * ((t_lo + horizon - 1) / 2.0 - float(gg[-1]))
    return peaks, total


def _deliveries_buffered(arrivals: np.ndarray, successes: np.ndarray):
    """FIFO departures: packet i leaves at the first success slot past both
    its generation slot and its predecessor's departure."""
    if len(arrivals) == 0 or len(successes) == 0:
        return (np.empty(0, np.int64), np.empty(0, np.int64), len(arrivals))
    s = np.searchsorted(successes, arrivals + 1)
    idx = np.arange(len(arrivals))
    k = idx + np.maximum.accumulate(s - idx)
    ok = k < len(successes)
    return successes[k[ok]], arrivals[ok], int(len(arrivals) - ok.sum())


def run(net: NetworkSpec, family: ActivationSetFamily, scheduler, sources,
        horizon: int, warmup: int = 0, seed: int = 0) -> AgeMetrics:
    """Simulate one seeded trajectory and return its age metrics.

    Metrics accumulate only for slots >= warmup; delivery history before the
    window still determines the age state at its start.
    """
    if warmup < 0 or horizon <= warmup:
        raise SimulationConfigError(f"need horizon > warmup >= 0, got {horizon}, {warmup}")
    n = net.n_links
    if family.n_links != n:
        raise SimulationConfigError("family link count does not match the network")
    if getattr(scheduler, "n_links", n) != n or sources.n_links != n:
        raise SimulationConfigError("scheduler/sources link count mismatch")

    ss = np.random.SeedSequence(seed)
    children = ss.spawn(1 + 2 * n)
    rng_sched = np.random.Generator(np.random.Philox(children[0]))
    rng_chan = [np.random.Generator(np.random.Philox(children[1 + e])) for e in range(n)]
    rng_arr = [np.random.Generator(np.random.Philox(children[1 + n + e])) for e in range(n)]

    measured = horizon - warmup
    scheduled_window = np.zeros(n, dtype=np.int64)
    success_slots: list[list[np.ndarray]] = [[] for _ in range(n)]
    arrival_slots: list[list[np.ndarray]] = [[] for _ in range(n)]

    for t0 in range(0, horizon, CHUNK):
        m = min(CHUNK, horizon - t0)
        sched = scheduler.emit(m, t0, rng_sched)
        if sched.shape != (m, n):
            raise SimulationConfigError("scheduler emitted a malformed slot matrix")
        for e in range(n):
            idx = np.nonzero(sched[:, e])[0]
            t_abs = t0 + idx
            scheduled_window[e] += int(np.count_nonzero(t_abs >= warmup))
            if len(idx):
                u = rng_chan[e].random(len(idx))
                hit = t_abs[u < net.gamma[e]]
                if len(hit):
                    success_slots[e].append(hit.astype(np.int64))
            if sources.kinds[e] == "bernoulli":
                gen = np.nonzero(rng_arr[e].random(m) < sources.rates[e])[0]
                if len(gen):
                    arrival_slots[e].append((t0 + gen).astype(np.int64))

    f_hat = scheduled_window / measured
    peak = np.full(n, np.nan)
    average = np.full(n, np.nan)
    q_mean = np.zeros(n)
    rho_hat = np.zeros(n)
    unstable = np.zeros(n, dtype=bool)

    for e in range(n):
        succ = (np.concatenate(success_slots[e]) if success_slots[e]
                else np.empty(0, np.int64))
        kind = sources.kinds[e]
        if kind == "active":
            d, g = succ, succ
            backlog = 0
            arr = None
        else:
            if kind == "periodic":
                arr = np.arange(sources.phases[e], horizon, sources.periods[e],
                                dtype=np.int64)
            else:
                arr = (np.concatenate(arrival_slots[e]) if arrival_slots[e]
                       else np.empty(0, np.int64))
            d, g, backlog = _deliveries_buffered(arr, succ)
            lam = sources.rates[e] if kind == "bernoulli" else 1.0 / sources.periods[e]
            service = net.gamma[e] * f_hat[e]
            rho_hat[e] = lam / service if service > 0 else np.inf
            unstable[e] = rho_hat[e] >= 1.0
        peaks, age_total = _age_stats(d, g, warmup, horizon)
        if len(peaks):
            peak[e] = float(peaks.mean())
        average[e] = age_total / measured
        if arr is not None:
            d_ext = np.concatenate([d, np.full(backlog, horizon, dtype=np.int64)])
            a_all = np.concatenate([g, arr[len(arr) - backlog:]]) if backlog else g
            lo = np.maximum(a_all, warmup)
            hi = np.minimum(d_ext - 1, horizon - 1)
            q_mean[e] = float(np.sum(np.maximum(hi - lo + 1, 0))) / measured

    w = net.weights
    return AgeMetrics(
        f_hat=f_hat, peak=peak, average=average, q_mean=q_mean,
        rho_hat=rho_hat, unstable=unstable,
        weighted_peak=float(np.sum(w * peak)),
        weighted_average=float(np.sum(w * average)),
        slots=horizon, warmup=warmup,
    )


def replicate(net: NetworkSpec, family: ActivationSetFamily, scheduler, sources,
              horizon: int, warmup: int = 0, reps: int = 1,
              base_seed: int = 0) -> AgeMetrics:
    """Independent replications (seeds base_seed + i) with 95% half-widths."""
    if reps < 1:
        raise SimulationConfigError("reps must be at least 1")
    runs = [run(net, family, scheduler, sources, horizon, warmup, base_seed + i)
            for i in range(reps)]
    f_hat = np.stack([r.f_hat for r in runs])
    peak = np.stack([r.peak for r in runs])
    ave = np.stack([r.average for r in runs])
    qm = np.stack([r.q_mean for r in runs])
    rh = np.stack([r.rho_hat for r in runs])
    wp = np.array([r.weighted_peak for r in runs])
    wa = np.array([r.weighted_average for r in runs])

    def hw(a, axis=0):
        if reps == 1:
            return np.zeros_like(np.mean(a, axis=axis))
        return Z95 * np.std(a, axis=axis, ddof=1) / np.sqrt(reps)

    return AgeMetrics(
        f_hat=f_hat.mean(axis=0), peak=peak.mean(axis=0),
        average=ave.mean(axis=0), q_mean=qm.mean(axis=0),
        rho_hat=rh.mean(axis=0),
        unstable=np.any(np.stack([r.unstable for r in runs]), axis=0),
        weighted_peak=float(wp.mean()), weighted_average=float(wa.mean()),
        slots=horizon, warmup=warmup, reps=reps,
        peak_hw=float(hw(wp)), average_hw=float(hw(wa)),
        f_hat_hw=hw(f_hat), per_link_peak_hw=hw(peak),
        per_link_average_hw=hw(ave),
        rep_weighted_peak=wp, rep_weighted_average=wa,
    )


def metrics_rows(metrics: AgeMetrics) -> list[dict]:
    """Flatten metrics into CSV-ready rows: one per link plus an aggregate."""
    rows = []
    for e in range(len(metrics.f_hat)):
        rows.append({
            "link": e,
            "f_hat": metrics.f_hat[e],
            "peak": metrics.peak[e],
            "ave": metrics.average[e],
            "q_mean": metrics.q_mean[e],
        })
    rows.append({
        "link": "weighted",
        "f_hat": "",
        "peak": metrics.weighted_peak,
        "ave": metrics.weighted_average,
        "q_mean": "",
    })
    return rows
