"""Wick pairing combinatorics, contraction-compatible scale assignments,
admissible spanning trees, and the closed-form amplitude/remainder bound
arithmetic with its parameter scheduler.

Bound arithmetic runs in natural-log space throughout: the scheduled
factorials and kappa powers overflow any native float long before the
interesting parameter range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import lgamma, log

import numpy as np

__all__ = [
    "PairingGraph",
    "ScaleAssignment",
    "SpanningTree",
    "AmplitudeParams",
    "ParameterSchedule",
    "BoundTerm",
    "BoundReport",
    "PairingCapError",
    "SchedulingError",
    "enumerate_pairings",
    "count_pairings_brute",
    "double_factorial",
    "wick_expectation",
    "mc_wick_oracle",
    "admissible_tree",
    "K_sigma",
    "amplitude_bound",
    "log_amplitude_factor",
    "remainder_bounds",
    "schedule_parameters",
]


class PairingCapError(ValueError):
    pass


class SchedulingError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Pairing graphs.


@dataclass(frozen=True)
class PairingGraph:
    """A perfect matching of the potential-vertex slots of a two-line
    inner-product graph.

    Slots are numbered 1..2*nbar+1 with slot n+1 reserved for the
    inner-product vertex; the matching pairs the remaining 2*nbar slots.
    """

    n: int
    np_: int
    matching: tuple[tuple[int, int], ...]

    def __post_init__(self):
        if self.n < 0 or self.np_ < 0 or (self.n + self.np_) % 2:
            raise ValueError("need n, n' >= 0 with even sum")
        if len(self.matching) != self.nbar:
            raise ValueError("matching size must equal nbar")

    @property
    def nbar(self) -> int:
        return (self.n + self.np_) // 2

    @property
    def vertex_slots(self) -> tuple[int, ...]:
        top = 2 * self.nbar + 1
        return tuple(i for i in range(1, top + 1) if i != self.n + 1)


def double_factorial(m: int) -> int:
    out = 1
    while m > 1:
        out *= m
        m -= 2
    return out


def _pairings(items: list[int]):
    if not items:
        yield ()
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        head = (first, other)
        for tail in _pairings(rest[:i] + rest[i + 1 :]):
            yield (head,) + tail


def enumerate_pairings(n: int, np_: int, cap: int = 12) -> list[PairingGraph]:
    """All pairings of the n+n' potential slots; empty when n+n' is odd."""
    if n < 0 or np_ < 0:
        raise ValueError("vertex counts must be nonnegative")
    if (n + np_) % 2:
        return []
    if n + np_ > cap:
        raise PairingCapError(f"{n}+{np_} vertices exceeds the enumeration cap {cap}")
    nbar = (n + np_) // 2
    slots = [i for i in range(1, 2 * nbar + 2) if i != n + 1]
    return [PairingGraph(n=n, np_=np_, matching=m) for m in _pairings(slots)]


def count_pairings_brute(m: int) -> int:
    """Brute-force matching count on m labeled points (independent oracle)."""
    if m % 2:
        return 0
    return sum(1 for _ in _pairings(list(range(m))))


# ---------------------------------------------------------------------------
# Wick expectation of products of dyadically sliced potentials.


@dataclass(frozen=True)
class ScaleAssignment:
    """Dyadic scale per potential factor, entries in 0..J+1."""

    j: tuple[int, ...]

    def compatible_with(self, graph: PairingGraph) -> bool:
        slots = graph.vertex_slots
        pos = {s: k for k, s in enumerate(slots)}
        return all(
            abs(self.j[pos[a]] - self.j[pos[b]]) <= 1 for a, b in graph.matching
        )


def wick_expectation(sites, scales, partition, profile) -> float:
    """Exact E[prod_i V_{j_i}(x_i)] for jointly Gaussian site amplitudes:
    sum over pairings of the scale/site contraction deltas times the
    envelope and bump factors."""
    sites = [tuple(int(c) for c in s) for s in sites]
    jvec = list(scales.j if isinstance(scales, ScaleAssignment) else scales)
    if len(sites) != len(jvec):
        raise ValueError("need one scale per site")
    m = len(sites)
    if m % 2:
        return 0.0
    x1 = np.array([s[0] for s in sites], dtype=float)
    x2 = np.array([s[1] for s in sites], dtype=float)
    pref = 1.0
    for k in range(m):
        pref *= float(partition.evaluate(jvec[k], x1[k], x2[k])) * float(
            profile.envelope(x1[k], x2[k])
        )
    if pref == 0.0:
        return 0.0
    total = 0
    for pairing in _pairings(list(range(m))):
        ok = all(
            sites[a] == sites[b] and abs(jvec[a] - jvec[b]) <= 1 for a, b in pairing
        )
        total += 1 if ok else 0
    return pref * total


def mc_wick_oracle(sites, scales, partition, profile, samples: int, seed: int):
    """Monte Carlo mean and stderr of prod_i V_{j_i}(x_i) over Gaussian draws."""
    if samples < 1000:
        raise ValueError("use at least 10^3 samples")
    sites = [tuple(int(c) for c in s) for s in sites]
    jvec = list(scales.j if isinstance(scales, ScaleAssignment) else scales)
    coeff = np.array(
        [
            float(partition.evaluate(j, s[0], s[1])) * float(profile.envelope(s[0], s[1]))
            for j, s in zip(jvec, sites)
        ]
    )
    distinct = sorted(set(sites))
    which = np.array([distinct.index(s) for s in sites])
    rng = np.random.default_rng(seed)
    om = rng.standard_normal((samples, len(distinct)))
    prod = np.prod(coeff[None, :] * om[:, which], axis=1)
    mean = float(prod.mean())
    stderr = float(prod.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return mean, stderr


# ---------------------------------------------------------------------------
# Admissible spanning trees.


@dataclass(frozen=True)
class SpanningTree:
    """Distinguished propagator-line set of a pairing graph.

    tree_lines are the particle-line indices in T (always including the two
    lines entering the inner-product vertex from the left and leaving the
    graph on the right, never lines 0 and n+1); the counting properties
    |T| = |T^c| = nbar refer to propagators net of the two special lines.
    """

    graph: PairingGraph
    tree_lines: frozenset[int]
    is_spanning_tree: bool

    @property
    def loop_lines(self) -> frozenset[int]:
        # line n+1 is consumed by the inner-product delta and counted nowhere
        g = self.graph
        all_lines = set(range(2 * g.nbar + 2))
        return frozenset(all_lines - set(self.tree_lines) - {g.n + 1})

    @property
    def tree_propagator_count(self) -> int:
        return len(self.tree_lines) - 1  # line n is accounted by the log^2 prefactor

    @property
    def loop_propagator_count(self) -> int:
        return len(self.loop_lines)


class _UnionFind:
    def __init__(self, items):
        self.parent = {x: x for x in items}

    def find(self, x):
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a, b) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[ra] = rb
        return True


def _line_endpoints(k: int, n: int, nbar: int):
    """Vertices joined by particle line k; None marks the external left end."""
    top = 2 * nbar + 1
    if k == 0:
        return None, 1 if n >= 1 else "L2"
    if k < n:
        return k, k + 1
    if k == n:
        return (n, "L2") if n >= 1 else (None, "L2")
    if k == n + 1:
        return "L2", n + 2
    if k < top:
        return k, k + 1
    if k == top:
        return top, "endR"
    raise ValueError(f"line index {k} out of range")


def admissible_tree(graph: PairingGraph) -> SpanningTree:
    """Deterministic admissible line set: all contraction lines, the two
    forced particle lines, then smallest-index lines joining new components;
    if a non-crossing pairing disconnects the eligible graph, the smallest
    eligible leftover lines complete the count (flagged via
    is_spanning_tree=False)."""
    g = graph
    if g.n < 1 or g.np_ < 1:
        raise ValueError("admissible trees need at least one vertex on each line")
    nbar, n = g.nbar, g.n
    top = 2 * nbar + 1
    vertices = list(g.vertex_slots) + ["L2", "endR"]
    uf = _UnionFind(vertices)
    for a, b in g.matching:
        uf.union(a, b)
    tree = {n, top}
    for k in (n, top):
        a, b = _line_endpoints(k, n, nbar)
        uf.union(a, b)
    eligible = [k for k in range(1, top) if k not in (n, n + 1)]
    for k in eligible:
        if len(tree) == nbar + 1:
            break
        a, b = _line_endpoints(k, n, nbar)
        if uf.union(a, b):
            tree.add(k)
    spanning = len({uf.find(v) for v in vertices}) == 1 and len(tree) == nbar + 1
    for k in eligible:
        if len(tree) == nbar + 1:
            break
        if k not in tree:
            tree.add(k)
    return SpanningTree(graph=g, tree_lines=frozenset(tree), is_spanning_tree=spanning)


# ---------------------------------------------------------------------------
# Closed-form bound arithmetic.


def K_sigma(sigma: float, J: int) -> float:
    """sum_{j=0..J} 2^((1-2 sigma) j): J+1 at sigma=1/2, geometric otherwise."""
    if not (0.0 < sigma <= 0.5):
        raise ValueError(f"decay exponent must lie in (0, 1/2], got {sigma}")
    if J < 0:
        raise ValueError("J must be >= 0")
    if sigma == 0.5:
        return float(J + 1)
    a = 1.0 - 2.0 * sigma
    return (2.0 ** (a * (J + 1)) - 1.0) / (2.0**a - 1.0)


def _log_K_sigma(sigma: float, J: int) -> float:
    if sigma == 0.5:
        return log(J + 1.0)
    a = (1.0 - 2.0 * sigma) * log(2.0)
    x = a * (J + 1)
    if x > 700.0:  # K overflows a float; use the asymptotic form
        return x + math.log1p(-math.exp(-x)) - log(math.expm1(a))
    return log(K_sigma(sigma, J))


@dataclass(frozen=True)
class AmplitudeParams:
    """Inputs of the per-contraction amplitude factor A and its prefactors."""

    sigma: float
    tau: float
    J: int
    lam: float | None
    log_lam: float | None = None  # natural log; overrides lam when set
    C_tau: float = 1.0

    def __post_init__(self):
        if self.log_lam is None:
            if self.lam is None or self.lam <= 0.0:
                raise ValueError("need lam > 0 or an explicit log_lam")
            object.__setattr__(self, "log_lam", log(self.lam))

    @property
    def log_epsilon(self) -> float:
        return -self.J * log(2.0)

    @property
    def log_inv_eps(self) -> float:
        """log of log(1/epsilon)."""
        return log(self.J * log(2.0))

    @property
    def K(self) -> float:
        return K_sigma(self.sigma, self.J)

    @property
    def log_A(self) -> float:
        """A = C_tau * (K lam^2 log(1/eps) + eps^-1 sigma^-1 2^(-2 sigma J)
        lam^2 log(1/eps)), evaluated in log space."""
        base = log(self.C_tau) + 2.0 * self.log_lam + self.log_inv_eps
        t1 = base + _log_K_sigma(self.sigma, self.J)
        t2 = base - self.log_epsilon - log(self.sigma) - 2.0 * self.sigma * self.J * log(2.0)
        return _logsumexp([t1, t2])

    @property
    def A(self) -> float:
        la = self.log_A
        return math.exp(la) if la < 700.0 else math.inf


def _logsumexp(vals) -> float:
    m = max(vals)
    if m == -math.inf:
        return m
    return m + log(sum(math.exp(v - m) for v in vals))


def log_amplitude_factor(params: AmplitudeParams) -> float:
    return params.log_A


def amplitude_bound(params: AmplitudeParams, nbar: int) -> float:
    """(log 1/eps)^2 * A^nbar, the uniform per-graph amplitude bound."""
    if nbar < 1:
        raise ValueError("nbar must be >= 1")
    v = 2.0 * params.log_inv_eps + nbar * params.log_A
    return math.exp(v) if v < 700.0 else math.inf


# ---------------------------------------------------------------------------
# Parameter schedules.


@dataclass(frozen=True)
class ParameterSchedule:
    """Derived expansion parameters for one (sigma, lambda, eta, delta, tau).

    For extreme lambda the fields lam / epsilon / kappa are not floats;
    their natural logs are authoritative.
    """

    sigma: float
    lam: float
    log_lam: float
    eta: float
    delta: float
    tau: float
    regime: str  # "subcritical" | "critical"
    J: int
    N: int
    log_epsilon: float
    log_kappa: float | None  # subcritical only
    log_ell_lower: float
    log_t_star: float
    J_prime: int | None
    C_sigma: float = 1.0

    @property
    def epsilon(self) -> float:
        # eps = 2^-J in both regimes; keep it exact while representable
        if self.J < 1000:
            return 2.0**-self.J
        return math.exp(self.log_epsilon)

    @property
    def ell_lower(self) -> float:
        return math.exp(self.log_ell_lower) if self.log_ell_lower < 700.0 else math.inf

    @property
    def t_star(self) -> float:
        return math.exp(self.log_t_star) if self.log_t_star < 700.0 else math.inf

    @property
    def kappa(self) -> float:
        if self.log_kappa is None:
            return math.nan
        return math.exp(self.log_kappa) if self.log_kappa < 700.0 else math.inf

    def theta_grid(self, count: int = 8) -> np.ndarray:
        """First few time-slice boundaries j*t/kappa (bookkeeping metadata)."""
        if self.log_kappa is None:
            return np.array([])
        logstep = self.log_t_star - self.log_kappa
        step = math.exp(logstep) if logstep > -700.0 else 0.0
        return step * np.arange(1, count + 1)


def _bracket_least_J(sigma: float, target_log: float) -> int:
    """Least J with log(J * K_sigma(J)) >= target_log."""

    def f(J: int) -> float:
        return log(float(J)) + _log_K_sigma(sigma, J)

    lo, hi = 1, 2
    while f(hi) < target_log:
        lo, hi = hi, hi * 2
        if hi > 10**9:
            raise SchedulingError("no feasible J below 10^9")
    if f(lo) >= target_log and lo == 1:
        return 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if f(mid) < target_log:
            lo = mid
        else:
            hi = mid
    return hi


def schedule_parameters(
    sigma: float,
    lam: float | None,
    eta: float,
    delta: float,
    tau: float,
    log_lam: float | None = None,
    C_sigma: float = 1.0,
) -> ParameterSchedule:
    """Fill the derived tuple (J, N, epsilon, kappa, t*, ell) for the regime
    selected by sigma.  Accepts log_lam for couplings too small to represent
    as floats (the asymptotic validity range of the subcritical bounds)."""
    if not (0.0 < sigma <= 0.5):
        raise SchedulingError(f"decay exponent must lie in (0, 1/2], got {sigma}")
    if not (0.0 <= eta < 0.25):
        # eta = 0 is the boundary evaluation of the bound formulas
        raise SchedulingError(f"eta must lie in [0, 1/4), got {eta}")
    if not (0.0 < delta < 1.0):
        raise SchedulingError(f"delta must lie in (0,1), got {delta}")
    if log_lam is None:
        if lam is None or lam <= 0.0:
            raise SchedulingError("need lambda > 0 (or log_lam)")
        log_lam = log(lam)
    else:
        lam = math.exp(log_lam) if log_lam > -700.0 else 0.0
    if log_lam >= -1.0:
        raise SchedulingError(
            f"lambda too large to schedule: need lambda < e^-1, got log lambda = {log_lam:.3f}"
        )
    if lam > 0.0 and not (lam < tau < delta):
        raise SchedulingError(f"need lambda < tau < delta, got ({lam}, {tau}, {delta})")
    if tau >= delta:
        raise SchedulingError(f"need tau < delta, got ({tau}, {delta})")

    x = -log_lam  # log(1/lambda) > 1
    if sigma < 0.5:
        if eta == 0.0:
            raise SchedulingError("subcritical schedule needs eta > 0 (kappa diverges)")
        J = _bracket_least_J(sigma, (-2.0 + 2.0 * eta) * log_lam)
        N = max(1, math.ceil(eta * x / (10.0 * log(x))))
        log_kappa = 30.0 / (eta * (1.0 - 2.0 * sigma)) * log(x)
        # realized kappa is the ceiling; the difference is invisible in logs
        log_ell = log(C_sigma) + (2.0 - eta) / (1.0 - 2.0 * sigma) * x
        regime = "subcritical"
        J_prime = max(0, J - int(round(log_kappa / log(2.0))))
        log_eps = -J * log(2.0)
    else:
        scale_exp = (-0.25 + eta) * log_lam  # log of lambda^(-1/4+eta)
        if scale_exp > log(10.0**9):
            raise SchedulingError("critical schedule exceeds N = 10^9; reduce 1/lambda")
        n_real = math.exp(scale_exp)
        N = math.ceil(n_real)
        J = N
        log_kappa = None
        log_ell = n_real * log(2.0)  # ell = 2^(lambda^(-1/4+eta))
        regime = "critical"
        J_prime = None
        log_eps = -N * log(2.0)
    log_t_star = 0.8 * log(delta) + log_ell
    return ParameterSchedule(
        sigma=sigma,
        lam=lam,
        log_lam=log_lam,
        eta=eta,
        delta=delta,
        tau=tau,
        regime=regime,
        J=J,
        N=N,
        log_epsilon=log_eps,
        log_kappa=log_kappa,
        log_ell_lower=log_ell,
        log_t_star=log_t_star,
        J_prime=J_prime,
        C_sigma=C_sigma,
    )


# ---------------------------------------------------------------------------
# Remainder bound series.


@dataclass(frozen=True)
class BoundTerm:
    name: str
    log_value: float  # natural log
    log_target: float

    @property
    def passed(self) -> bool:
        return self.log_value < self.log_target

    @property
    def log10_value(self) -> float:
        return self.log_value / log(10.0)

    @property
    def log10_target(self) -> float:
        return self.log_target / log(10.0)


@dataclass(frozen=True)
class BoundReport:
    schedule: ParameterSchedule
    terms: tuple[BoundTerm, ...]

    @property
    def all_passed(self) -> bool:
        return all(t.passed for t in self.terms)

    def term(self, name: str) -> BoundTerm:
        for t in self.terms:
            if t.name == name:
                return t
        raise KeyError(name)


def remainder_bounds(schedule: ParameterSchedule, params: AmplitudeParams) -> BoundReport:
    """Evaluate every scheduled remainder series against its target, plus the
    total against tau^(1/2) + lambda^eta, in log space."""
    if params.J != schedule.J or params.sigma != schedule.sigma:
        raise ValueError("amplitude parameters do not match the schedule")
    loglam = schedule.log_lam
    eta = schedule.eta
    N = schedule.N
    logA = params.log_A
    l2e = 2.0 * params.log_inv_eps  # log((log 1/eps)^2)
    terms = []
    if schedule.regime == "subcritical":
        s1 = _logsumexp([lgamma(nn + 1) + l2e + nn * logA for nn in range(1, N + 1)])
        terms.append(BoundTerm("ladder_series", s1, 1.1 * eta * loglam))
        s2 = lgamma(N + 1) + 2.0 * loglam - 2.0 * log(schedule.tau) + l2e + N * logA
        terms.append(BoundTerm("contour_tail", s2, loglam))
        logkap = schedule.log_kappa
        s3 = (
            2.0 * loglam
            + 2.0 * (log(3.0) + logkap + log(N))
            + l2e
            + _logsumexp([lgamma(nn + 1) + nn * logA for nn in range(N + 1, 4 * N)])
        )
        terms.append(BoundTerm("sliced_ladder", s3, 2.0 * eta * loglam))
        s4 = (
            lgamma(4 * N + 1)
            + 2.0 * loglam
            - 2.0 * schedule.log_epsilon
            - (1.0 - 2.0 * schedule.sigma) * N * logkap
            + l2e
            + 4.0 * N * logA
        )
        terms.append(BoundTerm("sliced_remainder", s4, 2.0 * eta * loglam))
        kcond = (1.0 - 2.0 * schedule.sigma) * N * logkap
        terms.append(BoundTerm("kappa_power", -kcond, 3.0 * loglam))
    else:
        s1 = _logsumexp([lgamma(nn + 1) + l2e + nn * logA for nn in range(1, N + 1)])
        terms.append(BoundTerm("ladder_series", s1, 2.0 * eta * loglam))
        s2 = lgamma(N + 1) + 2.0 * loglam - 2.0 * log(schedule.tau) + l2e + N * logA
        terms.append(BoundTerm("contour_tail", s2, loglam))
        s3 = lgamma(N + 1) + 2.0 * loglam - 2.0 * schedule.log_epsilon + l2e + N * logA
        terms.append(BoundTerm("trivial_remainder", s3, loglam))
    series_total = _logsumexp([t.log_value for t in terms if t.name != "kappa_power"])
    ircut = log(2.0) + 2.0 * (schedule.log_epsilon - log(schedule.tau))
    total = _logsumexp([series_total, ircut])
    target = _logsumexp([0.5 * log(schedule.tau), eta * loglam])
    terms.append(BoundTerm("total_vs_window_error", total, target))
    return BoundReport(schedule=schedule, terms=tuple(terms))
