"""Network model: links, interference structure, and the frequency polytope.

Links are dense integer ids 0..n-1. An activation set is a sorted tuple of
link ids that may transmit simultaneously. Families come in three kinds:

* ``explicit``  - a listed collection of sets
* ``k-link``    - every subset of at most K links is feasible
* ``single-hop`` - links are edges of a graph; feasible sets are matchings

The set of achievable long-run activation frequencies is
``{f = Mx : sum(x) <= 1, x >= 0}`` with M the link/set incidence matrix;
``check_feasible`` decides membership with a small LP and returns either a
distribution witness or a separating certificate.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import EnumerationCapError, FreshnetError

LinkId = int

DEFAULT_ENUMERATION_CAP = 2**20


@dataclass(frozen=True)
class NetworkSpec:
    """Links with importance weights and channel success probabilities.

    Weights are normalized to sum to one on construction; the raw weights
    are retained for reporting. Every gamma must lie in (0, 1].
    """

    weights: np.ndarray
    gamma: np.ndarray
    raw_weights: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        g = np.asarray(self.gamma, dtype=float)
        if w.ndim != 1 or g.shape != w.shape:
            raise FreshnetError("weights and gamma must be 1-D arrays of equal length")
        if np.any(w <= 0):
            raise FreshnetError("link weights must be strictly positive")
        if np.any(g <= 0) or np.any(g > 1):
            raise FreshnetError("channel success probabilities must lie in (0, 1]")
        object.__setattr__(self, "raw_weights", w.copy())
        object.__setattr__(self, "weights", w / w.sum())
        object.__setattr__(self, "gamma", g)

    @property
    def n_links(self) -> int:
        return self.weights.shape[0]

    @property
    def links(self) -> range:
        return range(self.n_links)

    @classmethod
    def uniform(cls, n: int, gamma=1.0) -> "NetworkSpec":
        g = np.full(n, float(gamma)) if np.isscalar(gamma) else np.asarray(gamma, float)
        return cls(weights=np.full(n, 1.0 / n), gamma=g)


def _canon(s: Iterable[int]) -> tuple[int, ...]:
    t = tuple(sorted(set(int(e) for e in s)))
    return t


@dataclass(frozen=True)
class ActivationSetFamily:
    """A collection of feasible activation sets, explicit or implicit.

    kind is one of ``explicit``, ``k-link``, ``single-hop``. Implicit kinds
    are materialized on demand, guarded by ``cap`` (an explicit error rather
    than silent truncation - the full family is exponentially large in
    general).
    """

    kind: str
    n_links: int
    sets: tuple[tuple[int, ...], ...] = ()
    K: int = 0
    graph_edges: tuple[tuple[int, int], ...] = ()
    cap: int = DEFAULT_ENUMERATION_CAP

    @classmethod
    def explicit(cls, sets: Sequence[Iterable[int]], n_links: int | None = None,
                 cap: int = DEFAULT_ENUMERATION_CAP) -> "ActivationSetFamily":
        canon = tuple(dict.fromkeys(_canon(s) for s in sets if len(tuple(s)) > 0))
        if n_links is None:
            n_links = 1 + max((max(s) for s in canon), default=-1)
        for s in canon:
            if s and (s[0] < 0 or s[-1] >= n_links):
                raise FreshnetError(f"set {s} references links outside [0, {n_links})")
        return cls(kind="explicit", n_links=n_links, sets=canon, cap=cap)

    @classmethod
    def k_link(cls, n_links: int, K: int,
               cap: int = DEFAULT_ENUMERATION_CAP) -> "ActivationSetFamily":
        if K < 1:
            raise FreshnetError("K must be at least 1")
        return cls(kind="k-link", n_links=n_links, K=min(K, n_links), cap=cap)

    @classmethod
    def single_hop(cls, edges: Sequence[tuple[int, int]],
                   cap: int = DEFAULT_ENUMERATION_CAP) -> "ActivationSetFamily":
        es = tuple((int(u), int(v)) for u, v in edges)
        for u, v in es:
            if u == v:
                raise FreshnetError("self-loops are not valid links")
        return cls(kind="single-hop", n_links=len(es), graph_edges=es, cap=cap)

    # -- membership ---------------------------------------------------------

    def contains(self, s: Iterable[int]) -> bool:
        """Whether s is a feasible activation set of this family."""
        t = _canon(s)
        if not t:
            return False
        if t[0] < 0 or t[-1] >= self.n_links:
            return False
        if self.kind == "k-link":
            return len(t) <= self.K
        if self.kind == "single-hop":
            return self._is_matching(t)
        return t in self._set_lookup()

    def _is_matching(self, links: tuple[int, ...]) -> bool:
        seen: set[int] = set()
        for e in links:
            u, v = self.graph_edges[e]
            if u in seen or v in seen:
                return False
            seen.add(u)
            seen.add(v)
        return True

    def _set_lookup(self) -> frozenset:
        lookup = getattr(self, "_lookup_cache", None)
        if lookup is None:
            lookup = frozenset(self.sets)
            object.__setattr__(self, "_lookup_cache", lookup)
        return lookup

    # -- materialization ----------------------------------------------------

    def materialize(self) -> tuple[tuple[int, ...], ...]:
        """All feasible sets as an explicit tuple (cap-guarded)."""
        if self.kind == "explicit":
            return self.sets
        if self.kind == "k-link":
            count = sum(math.comb(self.n_links, k) for k in range(1, self.K + 1))
            if count > self.cap:
                raise EnumerationCapError(count, self.cap)
            out = []
            for k in range(1, self.K + 1):
                out.extend(itertools.combinations(range(self.n_links), k))
            return tuple(out)
        return tuple(m for m in self._enumerate_matchings(maximal_only=False))

    def maximal(self) -> "ActivationSetFamily":
        """The sub-family of maximal sets (no strict superset is feasible)."""
        if self.kind == "k-link":
            count = math.comb(self.n_links, self.K)
            if count > self.cap:
                raise EnumerationCapError(count, self.cap)
            sets = tuple(itertools.combinations(range(self.n_links), self.K))
            return ActivationSetFamily.explicit(sets, self.n_links, cap=self.cap)
        if self.kind == "single-hop":
            sets = tuple(self._enumerate_matchings(maximal_only=True))
            return ActivationSetFamily.explicit(sets, self.n_links, cap=self.cap)
        masks = [_mask(s) for s in self.sets]
        keep: list[int] = []
        order = sorted(range(len(masks)), key=lambda i: -len(self.sets[i]))
        kept_masks: list[int] = []
        for i in order:
            m = masks[i]
            if any(m != km and (m & km) == m for km in kept_masks):
                continue
            keep.append(i)
            kept_masks.append(m)
        keep.sort()
        return ActivationSetFamily.explicit([self.sets[i] for i in keep],
                                            self.n_links, cap=self.cap)

    def _enumerate_matchings(self, maximal_only: bool):
        edges = self.graph_edges
        n = len(edges)
        if n > 64:
            raise EnumerationCapError(2**n, self.cap)
        # links conflicting with e (share an endpoint), as bitmasks
        conflict = []
        for e, (u, v) in enumerate(edges):
            c = 0
            for e2, (u2, v2) in enumerate(edges):
                if e2 != e and len({u, v} & {u2, v2}) > 0:
                    c |= 1 << e2
            conflict.append(c)
        out: list[tuple[int, ...]] = []
        budget = self.cap

        def extend(current: tuple[int, ...], blocked: int, start: int):
            nonlocal budget
            can_extend_any = any(
                not (blocked >> e) & 1 for e in range(n) if e not in current
            )
            if current and (not maximal_only or not can_extend_any):
                if budget <= 0:
                    raise EnumerationCapError(len(out) + 1, self.cap)
                budget -= 1
                out.append(current)
            for e in range(start, n):
                if (blocked >> e) & 1:
                    continue
                extend(current + (e,), blocked | (1 << e) | conflict[e], e + 1)

        # canonical ascending-index extension enumerates each matching once;
        # maximality is checked against all links, not just higher indices
        for e in range(n):
            extend((e,), (1 << e) | conflict[e], e + 1)
        return tuple(dict.fromkeys(out))

    def incidence_matrix(self, sets: Sequence[tuple[int, ...]] | None = None) -> np.ndarray:
        """M[e, j] = 1 iff link e belongs to set j."""
        if sets is None:
            sets = self.materialize()
        M = np.zeros((self.n_links, len(sets)))
        for j, m in enumerate(sets):
            M[list(m), j] = 1.0
        return M


def _mask(s: Iterable[int]) -> int:
    m = 0
    for e in s:
        m |= 1 << e
    return m


def maximal_sets(family: ActivationSetFamily) -> ActivationSetFamily:
    """Prune a family to its maximal sets.

    Only maximal sets can carry probability in a peak-age-optimal schedule,
    so downstream solvers work on this reduction.
    """
    return family.maximal()


def matchings_of_graph(edges: Sequence[tuple[int, int]],
                       cap: int = DEFAULT_ENUMERATION_CAP) -> ActivationSetFamily:
    """All maximal matchings of a simple graph, as an explicit family.

    Link e is the e-th edge of ``edges``; two links interfere iff they share
    a node.
    """
    fam = ActivationSetFamily.single_hop(edges, cap=cap)
    return fam.maximal()


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    witness: np.ndarray | None
    max_violation: float
    separator: np.ndarray | None

    def __bool__(self) -> bool:
        return self.feasible


def check_feasible(f: np.ndarray, family: ActivationSetFamily,
                   tol: float = 1e-9) -> FeasibilityResult:
    """Decide whether f is an achievable frequency vector of the family.

    Solves min t s.t. |Mx - f| <= t, sum(x) <= 1, x >= 0. Feasible iff the
    optimum t* <= tol; the witness is the minimizing x. When infeasible the
    separator y satisfies y.f > max(0, max_m y.M_m) within LP accuracy, which
    certifies that no distribution over sets reaches f.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (family.n_links,):
        raise FreshnetError("frequency vector length does not match the family")
    sets = family.materialize()
    M = family.incidence_matrix(sets)
    n_sets = len(sets)
    E = family.n_links
    # variables: x (n_sets), t (1)
    c = np.zeros(n_sets + 1)
    c[-1] = 1.0
    ones_t = np.ones((E, 1))
    A_ub = np.vstack([
        np.hstack([M, -ones_t]),      # Mx - t <= f
        np.hstack([-M, -ones_t]),     # -Mx - t <= -f
        np.hstack([np.ones((1, n_sets)), np.zeros((1, 1))]),  # sum x <= 1
    ])
    b_ub = np.concatenate([f, -f, [1.0]])
    bounds = [(0, None)] * n_sets + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if not res.success:
        raise FreshnetError(f"feasibility LP failed: {res.message}")
    t_star = float(res.x[-1])
    x = res.x[:-1]
    if t_star <= tol:
        return FeasibilityResult(True, x, t_star, None)
    # marginals of the two |Mx - f| blocks combine into a separating direction:
    # y.f exceeds max(0, max_m y.M_m) by the LP optimum t*
    duals = res.ineqlin.marginals
    y = duals[:E] - duals[E:2 * E]
    return FeasibilityResult(False, None, t_star, y)


# -- configuration loading --------------------------------------------------

def network_from_config(cfg: dict) -> tuple[NetworkSpec, ActivationSetFamily]:
    """Build (NetworkSpec, ActivationSetFamily) from a parsed JSON config.

    Schema: ``links`` (count), ``weights`` (array or "uniform"),
    ``gamma`` (array, scalar, or {"good", "bad", "theta"|"n_bad"} with the
    first n_bad links taking the bad value), ``interference``
    ({"kind": "k-link", "K": k} | {"kind": "explicit", "sets": [[...]]} |
    {"kind": "single-hop", "edges": [[u, v], ...]}).
    """
    interference = cfg.get("interference", {"kind": "k-link", "K": 1})
    kind = interference.get("kind", "k-link")
    if kind == "single-hop":
        edges = [tuple(e) for e in interference["edges"]]
        n = len(edges)
        family = ActivationSetFamily.single_hop(edges)
    else:
        n = int(cfg["links"])
        if kind == "k-link":
            family = ActivationSetFamily.k_link(n, int(interference["K"]))
        elif kind == "explicit":
            family = ActivationSetFamily.explicit(interference["sets"], n_links=n)
        else:
            raise FreshnetError(f"unknown interference kind: {kind!r}")
    if "links" in cfg and int(cfg["links"]) != n:
        raise FreshnetError("link count disagrees with the interference model")

    w_cfg = cfg.get("weights", "uniform")
    if isinstance(w_cfg, str):
        if w_cfg != "uniform":
            raise FreshnetError(f"unknown weights pattern: {w_cfg!r}")
        weights = np.full(n, 1.0 / n)
    else:
        weights = np.asarray(w_cfg, dtype=float)

    g_cfg = cfg.get("gamma", 1.0)
    if isinstance(g_cfg, dict):
        good, bad = float(g_cfg["good"]), float(g_cfg["bad"])
        if "n_bad" in g_cfg:
            n_bad = int(g_cfg["n_bad"])
        else:
            n_bad = int(round(float(g_cfg["theta"]) * n))
        if not 0 <= n_bad <= n:
            raise FreshnetError("n_bad outside [0, links]")
        gamma = np.full(n, good)
        gamma[:n_bad] = bad
    elif np.isscalar(g_cfg):
        gamma = np.full(n, float(g_cfg))
    else:
        gamma = np.asarray(g_cfg, dtype=float)

    return NetworkSpec(weights=weights, gamma=gamma), family


def load_network(path: str) -> tuple[NetworkSpec, ActivationSetFamily]:
    with open(path) as fh:
        return network_from_config(json.load(fh))
