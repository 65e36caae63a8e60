import numpy as np
import pytest

from latticeloc.dyadic import build_dyadic_partition
from latticeloc.dynamics import ContourSpec
from latticeloc.lattice import DecayProfile, TorusGrid
from latticeloc.normbench import (
    ResolventProbe,
    contour_alpha_samples,
    fit_line,
    kappa_gain,
    kappa_smoothed_linf,
    resolvent_abs,
    resolvent_l1,
    smoothed_resolvent_linf,
)


@pytest.fixture(scope="module")
def grid10():
    return TorusGrid(m=10)


def test_probe_validates_contour_membership():
    spec = ContourSpec(tau=0.5, t=64.0)
    grid = TorusGrid(m=10)
    ResolventProbe(alpha=complex(-2.0, 0.0), epsilon=1 / 64, grid=grid, spec=spec)
    with pytest.raises(ValueError):
        ResolventProbe(alpha=complex(-10.0, 0.0), epsilon=1 / 64, grid=grid, spec=spec)


def test_l1_far_from_band(grid10):
    # |alpha| = 10: integrand bounded by 1/6, so the L1 norm is too
    val = resolvent_l1(ResolventProbe(alpha=complex(10.0, 0.0), epsilon=0.01, grid=grid10))
    assert val <= 1.0 / 6.0 + 0.01


def test_l1_grows_like_log_inv_eps(grid10):
    alpha = complex(-2.0, 0.0)
    epss = [2.0**-k for k in range(4, 9)]
    vals = [resolvent_l1(ResolventProbe(alpha=alpha, epsilon=e, grid=grid10)) for e in epss]
    fit = fit_line(np.log(1.0 / np.array(epss)), np.array(vals))
    assert fit.r2 >= 0.99
    assert fit.slope > 0


def test_l1_grid_self_convergence():
    alpha = complex(-2.0, 0.0)
    v10 = resolvent_l1(ResolventProbe(alpha=alpha, epsilon=2.0**-6, grid=TorusGrid(m=10)))
    v11 = resolvent_l1(ResolventProbe(alpha=alpha, epsilon=2.0**-6, grid=TorusGrid(m=11)))
    assert abs(v11 - v10) <= 0.02 * v10


def test_l1_resolution_guard():
    with pytest.raises(ValueError):
        resolvent_l1(ResolventProbe(alpha=complex(-2, 0), epsilon=0.01, grid=TorusGrid(m=8)))


def test_smoothed_linf_slope_one_sigma(grid10):
    sigma = 0.25
    prof = DecayProfile(sigma=sigma)
    part = build_dyadic_partition(7, prof, grid10)
    probe = ResolventProbe(alpha=complex(-2.0, 0.0), epsilon=2.0**-9, grid=grid10)
    js = [3, 4, 5, 6]
    vals = [smoothed_resolvent_linf(probe, j, part, prof) for j in js]
    fit = fit_line(np.array(js, float), np.log2(vals))
    assert abs(fit.slope - (1.0 - 2.0 * sigma)) <= 0.15


def test_smoothed_values_positive_and_bounded(grid10):
    prof = DecayProfile(sigma=0.25)
    part = build_dyadic_partition(6, prof, grid10)
    probe = ResolventProbe(alpha=complex(1.5, 0.0), epsilon=2.0**-6, grid=grid10)
    for j in (2, 4, 6):
        val = smoothed_resolvent_linf(probe, j, part, prof)
        kernel_l1 = part.shell_kernel_hat(j, prof).mean()
        sup_res = resolvent_abs(grid10.__class__(m=grid10.m), probe.alpha, probe.epsilon).max()
        assert 0.0 < val <= sup_res * kernel_l1 * 1.0000001


def test_norms_decrease_in_eps(grid10):
    prof = DecayProfile(sigma=0.25)
    part = build_dyadic_partition(6, prof, grid10)
    alpha = complex(-2.0, 0.0)
    for maker in (
        lambda e: resolvent_l1(ResolventProbe(alpha=alpha, epsilon=e, grid=grid10)),
        lambda e: smoothed_resolvent_linf(
            ResolventProbe(alpha=alpha, epsilon=e, grid=grid10), 4, part, prof
        ),
    ):
        vals = [maker(e) for e in (2.0**-8, 2.0**-6, 2.0**-4)]
        assert vals[0] > vals[1] > vals[2]


def test_tail_scale_bound(grid10):
    sigma, J = 0.25, 5
    prof = DecayProfile(sigma=sigma)
    part = build_dyadic_partition(J, prof, grid10)
    eps = 2.0**-6
    probe = ResolventProbe(alpha=complex(-2.0, 0.0), epsilon=eps, grid=grid10)
    val = smoothed_resolvent_linf(probe, J + 1, part, prof)
    bound = (1.0 / eps) * (1.0 / sigma) * 2.0 ** (-2.0 * sigma * J)
    assert 1e-2 <= val / bound <= 1.0


def test_kappa_one_is_identity(grid10):
    prof = DecayProfile(sigma=0.25)
    part = build_dyadic_partition(6, prof, grid10)
    probe = ResolventProbe(alpha=complex(-2.0, 0.0), epsilon=2.0**-6, grid=grid10)
    a = smoothed_resolvent_linf(probe, 4, part, prof)
    b = kappa_smoothed_linf(probe, 4, part, prof, kappa=1.0)
    assert a == b


def test_kappa_gain_tracks_power_law(grid10):
    sigma = 0.25
    prof = DecayProfile(sigma=sigma)
    J = 7
    part = build_dyadic_partition(J, prof, grid10)
    probe = ResolventProbe(alpha=complex(-2.0, 0.0), epsilon=2.0**-J, grid=grid10)
    g = kappa_gain(probe, part, prof, kappa=16.0)
    target = 16.0 ** -(1.0 - 2.0 * sigma)
    assert target / 3.0 <= g <= target * 3.0


def test_alpha_samples_on_segments():
    spec = ContourSpec(tau=0.5, t=50.0)
    pts = contour_alpha_samples(spec, per_segment=5)
    assert len(pts) == 20
    for p in pts:
        ResolventProbe(alpha=complex(p), epsilon=spec.epsilon, grid=TorusGrid(m=10), spec=spec)


def test_fit_line_exact():
    f = fit_line([0.0, 1.0, 2.0], [1.0, 3.0, 5.0])
    assert f.slope == pytest.approx(2.0)
    assert f.intercept == pytest.approx(1.0)
    assert f.r2 == pytest.approx(1.0)
    assert f.stderr == pytest.approx(0.0, abs=1e-12)


def test_smoothed_linf_grid_self_convergence():
    sigma, j, eps = 0.25, 4, 2.0**-6
    prof = DecayProfile(sigma=sigma)
    vals = []
    for m in (10, 11):
        grid = TorusGrid(m=m)
        part = build_dyadic_partition(6, prof, grid)
        probe = ResolventProbe(alpha=complex(-2.0, 0.0), epsilon=eps, grid=grid)
        vals.append(smoothed_resolvent_linf(probe, j, part, prof))
    assert abs(vals[1] - vals[0]) <= 0.02 * vals[0]


def test_measured_C_tau_per_window():
    # the window-dependent constant is reported, not asserted to a form
    grid = TorusGrid(m=10)
    sigma = 0.25
    prof = DecayProfile(sigma=sigma)
    part = build_dyadic_partition(7, prof, grid)
    js = [3, 4, 5]
    measured = {}
    for tau in (0.1, 0.25, 0.5):
        spec = ContourSpec(tau=tau, t=2.0**10)
        alphas = contour_alpha_samples(spec, per_segment=2)
        worst = 0.0
        for j in js:
            v = max(
                smoothed_resolvent_linf(
                    ResolventProbe(alpha=complex(a.real, 0.0), epsilon=2.0**-10, grid=grid),
                    j, part, prof,
                )
                for a in alphas
            )
            worst = max(worst, v / 2.0 ** ((1.0 - 2.0 * sigma) * j))
        measured[tau] = worst
        assert np.isfinite(worst) and worst > 0
    print("measured C_tau per window margin:", measured)
