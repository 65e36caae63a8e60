import math

import mpmath
import numpy as np
import pytest

from latticeloc.dyadic import build_dyadic_partition
from latticeloc.graphs import (
    AmplitudeParams,
    K_sigma,
    PairingCapError,
    PairingGraph,
    ScaleAssignment,
    SchedulingError,
    admissible_tree,
    amplitude_bound,
    count_pairings_brute,
    double_factorial,
    enumerate_pairings,
    mc_wick_oracle,
    remainder_bounds,
    schedule_parameters,
    wick_expectation,
)
from latticeloc.lattice import DecayProfile, TorusGrid


@pytest.fixture(scope="module")
def partition():
    return build_dyadic_partition(2, DecayProfile(sigma=0.25), TorusGrid(m=6))


@pytest.fixture(scope="module")
def profile():
    return DecayProfile(sigma=0.25)


# ---------------------------------------------------------------------------
# Pairing enumeration.


def test_pairing_counts_small():
    assert len(enumerate_pairings(1, 1)) == 1
    assert len(enumerate_pairings(2, 2)) == 3
    assert enumerate_pairings(2, 1) == []


def test_pairing_double_factorial_law():
    for n in range(0, 7):
        for npp in range(0, 7):
            total = n + npp
            if total == 0 or total > 10:
                continue
            got = len(enumerate_pairings(n, npp))
            if total % 2:
                assert got == 0
            else:
                assert got == double_factorial(total - 1)
                assert got == count_pairings_brute(total)
    # the cap itself: 12 vertices against the brute-force counter
    assert len(enumerate_pairings(6, 6)) == count_pairings_brute(12) == 10395


def test_pairing_cap_guard():
    with pytest.raises(PairingCapError):
        enumerate_pairings(8, 6)


def test_pairing_slots_skip_inner_product_vertex():
    g = enumerate_pairings(2, 2)[0]
    assert g.nbar == 2
    assert 3 not in g.vertex_slots  # slot n+1 is the inner-product vertex
    used = sorted(v for pair in g.matching for v in pair)
    assert used == sorted(g.vertex_slots)


# ---------------------------------------------------------------------------
# Wick expectations.


def test_wick_pair_same_site(partition, profile):
    x = (1, 0)
    val = wick_expectation([x, x], [0, 0], partition, profile)
    p = float(partition.evaluate(0, 1, 0))
    v = float(profile.envelope(1, 0))
    assert val == pytest.approx(p * p * v * v)


def test_wick_distinct_sites_vanish(partition, profile):
    assert wick_expectation([(0, 0), (1, 0)], [0, 0], partition, profile) == 0.0


def test_wick_fourth_moment(partition, profile):
    x = (1, 1)
    val = wick_expectation([x] * 4, [0] * 4, partition, profile)
    p = float(partition.evaluate(0, 1, 1))
    v = float(profile.envelope(1, 1))
    assert val == pytest.approx(3.0 * (p * v) ** 4)


def test_wick_scale_delta_kills_far_scales(partition, profile):
    # same site, scales 2 apart: every pairing violates the scale constraint
    x = (1, 0)
    assert wick_expectation([x, x], [0, 2], partition, profile) == 0.0


def test_scale_assignment_compatibility():
    g = enumerate_pairings(1, 1)[0]
    assert ScaleAssignment(j=(1, 2)).compatible_with(g)
    assert not ScaleAssignment(j=(0, 3)).compatible_with(g)


def test_mc_oracle_agreement(partition, profile):
    rng = np.random.default_rng(0)
    sites_pool = [(0, 0), (1, 0), (2, 2)]
    for trial in range(6):
        m = 2 * int(rng.integers(1, 4))
        sites = [sites_pool[int(rng.integers(0, 3))] for _ in range(m)]
        scales = [int(rng.integers(0, 4)) for _ in range(m)]
        exact = wick_expectation(sites, scales, partition, profile)
        mean, err = mc_wick_oracle(sites, scales, partition, profile, 200_000, 100 + trial)
        if err == 0.0:
            assert mean == exact == 0.0
        else:
            assert abs(mean - exact) <= 4.0 * err


def test_mc_oracle_stderr_scaling(partition, profile):
    sites = [(1, 0), (1, 0)]
    scales = [0, 0]
    _m1, e1 = mc_wick_oracle(sites, scales, partition, profile, 50_000, 9)
    _m2, e2 = mc_wick_oracle(sites, scales, partition, profile, 200_000, 9)
    assert e2 == pytest.approx(e1 / 2.0, rel=0.15)


# ---------------------------------------------------------------------------
# Admissible trees.


def test_tree_minimal_graph():
    g = enumerate_pairings(1, 1)[0]
    t = admissible_tree(g)
    assert t.tree_lines == frozenset({1, 3})
    # line 2 (inner-product side) is consumed by the delta; line 0 is the loop
    assert t.loop_lines == frozenset({0})
    assert t.tree_propagator_count == 1 and t.loop_propagator_count == 1
    assert t.is_spanning_tree


def test_tree_invariants_all_graphs():
    for n in range(1, 9):
        for npp in range(1, 9):
            if (n + npp) % 2 or n + npp > 10:
                continue
            for g in enumerate_pairings(n, npp):
                t = admissible_tree(g)
                nbar = g.nbar
                assert g.n in t.tree_lines
                assert 2 * nbar + 1 in t.tree_lines
                assert 0 not in t.tree_lines
                assert g.n + 1 not in t.tree_lines
                assert t.tree_propagator_count == nbar
                assert t.loop_propagator_count == nbar


def test_tree_deterministic():
    g = enumerate_pairings(3, 3)[7]
    assert admissible_tree(g).tree_lines == admissible_tree(g).tree_lines


def test_tree_requires_vertices_on_both_lines():
    g = PairingGraph(n=0, np_=2, matching=((2, 3),))
    with pytest.raises(ValueError):
        admissible_tree(g)


# ---------------------------------------------------------------------------
# Closed-form bound arithmetic.


def test_K_sigma_values():
    assert K_sigma(0.5, 5) == 6.0
    assert K_sigma(0.25, 0) == pytest.approx(1.0)
    assert K_sigma(0.25, 1) == pytest.approx(1.0 + math.sqrt(2.0))
    # direct-sum cross-check
    for sigma in (0.1, 0.3, 0.5):
        for J in (0, 3, 9):
            direct = sum(2.0 ** ((1 - 2 * sigma) * j) for j in range(J + 1))
            assert K_sigma(sigma, J) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ValueError):
        K_sigma(0.6, 3)
    with pytest.raises(ValueError):
        K_sigma(0.0, 3)


def test_K_sigma_monotone_and_A_monotone():
    ks = [K_sigma(0.25, J) for J in range(10)]
    assert all(b > a for a, b in zip(ks, ks[1:]))
    las = [
        AmplitudeParams(sigma=0.25, tau=0.5, J=J, lam=1e-3).log_A for J in range(2, 12)
    ]
    assert all(b > a for a, b in zip(las, las[1:]))


def test_amplitude_power_law():
    p = AmplitudeParams(sigma=0.25, tau=0.5, J=6, lam=1e-2)
    r = amplitude_bound(p, 2) / amplitude_bound(p, 1)
    assert r == pytest.approx(p.A, rel=1e-12)


def test_amplitude_critical_reduction():
    # at sigma=1/2 with eps=2^-J: A = C (J+1) lam^2 J log2 + C*2*lam^2 J log2
    for J in (3, 7, 11):
        lam = 1e-3
        p = AmplitudeParams(sigma=0.5, tau=0.5, J=J, lam=lam)
        want = lam**2 * ((J + 1) * J * math.log(2.0) + 2.0 * J * math.log(2.0))
        assert p.A == pytest.approx(want, rel=1e-12)
    As = [AmplitudeParams(sigma=0.5, tau=0.5, J=J, lam=1e-3).A for J in (3, 5, 9, 13)]
    assert all(b > a for a, b in zip(As, As[1:]))


def test_logspace_matches_high_precision():
    # small instances: compare the log-space series to 50-digit arithmetic
    mpmath.mp.dps = 50
    sched = schedule_parameters(0.5, 1e-2, 0.2, delta=0.5, tau=0.1)
    params = AmplitudeParams(sigma=0.5, tau=0.1, J=sched.J, lam=1e-2)
    rep = remainder_bounds(sched, params)
    J, N = sched.J, sched.N
    lam = mpmath.mpf("0.01")
    loge = J * mpmath.log(2)
    K = J + 1
    A = K * lam**2 * loge + (2**J) * 2 * mpmath.mpf(2) ** (-J) * lam**2 * loge
    s1 = mpmath.mpf(0)
    for n in range(1, N + 1):
        s1 += mpmath.factorial(n) * loge**2 * A**n
    got = rep.term("ladder_series").log_value
    assert abs(got - float(mpmath.log(s1))) <= 1e-9 * abs(float(mpmath.log(s1)))


# ---------------------------------------------------------------------------
# Parameter schedules.


def test_schedule_critical_example():
    s = schedule_parameters(0.5, 1e-4, 0.05, delta=0.3, tau=0.25)
    assert s.regime == "critical"
    assert s.J == 7 and s.N == 7
    assert s.epsilon == pytest.approx(2.0**-7)
    # t* = delta^(4/5) * ell
    assert s.log_t_star == pytest.approx(0.8 * math.log(0.3) + s.log_ell_lower)


def test_schedule_critical_ell_formula():
    # lower bound 2^(lambda^(-1/4+eta)); at eta -> 0, lambda=1e-4: 2^10 = 1024
    s = schedule_parameters(0.5, 1e-4, 0.0, delta=0.3, tau=0.25)
    assert s.ell_lower == pytest.approx(1024.0)


def test_schedule_subcritical_bracketing():
    rng = np.random.default_rng(2)
    for _ in range(100):
        sigma = float(rng.uniform(0.05, 0.45))
        lam = float(10.0 ** rng.uniform(-6.0, -1.0))
        eta = float(rng.uniform(0.01, 0.24))
        s = schedule_parameters(sigma, lam, eta, delta=0.9, tau=0.5 * lam + 0.4)
        target = lam ** (-2.0 + 2.0 * eta)
        assert s.J * K_sigma(sigma, s.J) >= target
        if s.J > 1:
            assert (s.J - 1) * K_sigma(sigma, s.J - 1) < target
        assert s.epsilon == pytest.approx(2.0**-s.J)
        assert s.N >= 1


def test_schedule_subcritical_ell_exponent():
    lam, eta, sigma = 1e-4, 0.1, 0.25
    s = schedule_parameters(sigma, lam, eta, delta=0.3, tau=0.25)
    assert s.log_ell_lower == pytest.approx((2.0 - eta) / (1.0 - 2.0 * sigma) * math.log(1 / lam))


def test_schedule_validation_errors():
    with pytest.raises(SchedulingError):
        schedule_parameters(0.25, 0.6, 0.1, delta=0.3, tau=0.25)  # lambda too large
    with pytest.raises(SchedulingError):
        schedule_parameters(0.25, 1e-4, 0.3, delta=0.3, tau=0.25)  # eta outside window
    with pytest.raises(SchedulingError):
        schedule_parameters(0.25, 1e-4, 0.1, delta=0.2, tau=0.25)  # tau >= delta


def test_remainder_bounds_critical_all_pass():
    s = schedule_parameters(0.5, 1e-4, 0.05, delta=0.3, tau=0.25)
    p = AmplitudeParams(sigma=0.5, tau=0.25, J=s.J, lam=1e-4)
    rep = remainder_bounds(s, p)
    for name in ("ladder_series", "contour_tail", "trivial_remainder"):
        assert rep.term(name).passed
    assert rep.term("total_vs_window_error").passed


def test_remainder_bounds_subcritical_asymptotic_pass():
    # the subcritical series close only deep in the small-coupling regime;
    # log-space evaluation handles couplings far below float range
    s = schedule_parameters(0.25, None, 0.1, delta=0.3, tau=0.25,
                            log_lam=-1e5 * math.log(10.0))
    p = AmplitudeParams(sigma=0.25, tau=0.25, J=s.J, lam=None, log_lam=s.log_lam)
    rep = remainder_bounds(s, p)
    assert rep.all_passed


def test_remainder_kappa_condition_at_desk_scale():
    s = schedule_parameters(0.25, 1e-4, 0.1, delta=0.3, tau=0.25)
    p = AmplitudeParams(sigma=0.25, tau=0.25, J=s.J, lam=1e-4)
    rep = remainder_bounds(s, p)
    assert rep.term("kappa_power").passed
    assert rep.term("contour_tail").passed


def test_amplitude_below_power_target_for_small_coupling():
    # A(scheduled) < lambda^(1.9 eta) holds below a finite coupling
    # threshold; locate it by direct log-space evaluation
    sigma, eta = 0.25, 0.1
    def holds(k):
        log_lam = -k * math.log(10.0)
        s = schedule_parameters(sigma, None, eta, delta=0.3, tau=0.25, log_lam=log_lam)
        p = AmplitudeParams(sigma=sigma, tau=0.25, J=s.J, lam=None, log_lam=log_lam)
        return p.log_A < 1.9 * eta * log_lam

    ks = list(range(4, 201, 4))
    flags = [holds(k) for k in ks]
    assert not flags[0]  # desk-scale coupling is above the threshold
    assert flags[-1]  # far below the threshold the inequality holds
    first = ks[flags.index(True)]
    assert all(holds(k) for k in range(first, 201, 16))
    print(f"A < lambda^(1.9 eta) from lambda ~ 1e-{first}")
