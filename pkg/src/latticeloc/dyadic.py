"""Dyadic shell partition of unity and its Fourier-side decay certificates.

The bumps P_0..P_J are telescoped differences of a single radial cutoff
ramp, so their sum (with the complement bump P_{J+1}) is exactly 1 at
every lattice site.  The build step samples F(P_j P_j' v^2) on a torus
grid by FFT and certifies the measured decay constant of the shell
kernels against the 2^(-2 sigma j) law.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lattice import DecayProfile, TorusGrid

__all__ = ["DyadicPartition", "PartitionCertificate", "build_dyadic_partition", "lattice_fft"]

# ramp values are quantized to multiples of 2^-26 so that telescoped sums
# of bumps are exact in double precision
_QUANT = float(2**26)
_RAMP_WIDTH = 0.25  # relative transition width of the radial cutoff


def _cutoff(r: np.ndarray, scale: float) -> np.ndarray:
    """Radial ramp ~ indicator(|x| <= scale): 1 inside, cosine taper of
    relative width 1/4 centered at `scale`, 0 outside."""
    a = scale * (1.0 - _RAMP_WIDTH / 2.0)
    b = scale * (1.0 + _RAMP_WIDTH / 2.0)
    out = np.zeros_like(r)
    out[r <= a] = 1.0
    mid = (r > a) & (r < b)
    out[mid] = 0.5 * (1.0 + np.cos(np.pi * (r[mid] - a) / (b - a)))
    return np.round(out * _QUANT) / _QUANT


@dataclass(frozen=True)
class PartitionCertificate:
    """Measured Fourier-side constants for one bump pair (j, j')."""

    j: int
    jp: int
    max_ratio: float  # max |F(PjPj'v^2)| / (2^(-2 sigma j) |F(Pj^2)|)
    l1_norm: float  # ||F(PjPj')||_L1 on the grid


@dataclass(frozen=True)
class DyadicPartition:
    """Bumps P_0..P_J on dyadic shells plus the complement bump P_{J+1}."""

    J: int
    sigma: float
    grid: TorusGrid
    certificates: tuple[PartitionCertificate, ...]
    C_dyad: float

    def evaluate(self, j: int, x1, x2) -> np.ndarray:
        """Sample bump j at lattice coordinates.  j = J+1 is the exact
        complement 1 - sum of the lower bumps."""
        r = np.hypot(np.asarray(x1, float), np.asarray(x2, float))
        return _bump(j, self.J, r)

    def bump_on_grid(self, j: int) -> np.ndarray:
        """Bump j sampled on the torus grid's fundamental square (FFT order).

        For j = J+1 this is the windowed tail: the complete shells above J
        that still fit on the grid, so the sample has compact support and a
        smooth edge (no truncation artifacts in its FFT).
        """
        x1, x2 = self.grid.lattice_coords()
        r = np.hypot(x1, x2)
        if j <= self.J:
            return _bump(j, self.J, r)
        i_max = self.grid.m - 3  # largest shell index that fits without wrap
        return _cutoff(r, 2.0 ** (i_max + 1)) - _cutoff(r, 2.0 ** (self.J + 1))

    def shell_kernel_hat(self, j: int, profile: DecayProfile) -> np.ndarray:
        """|F(P_j^2 v^2)| sampled on the grid (exact trig-polynomial values)."""
        p = self.bump_on_grid(j)
        x1, x2 = self.grid.lattice_coords()
        v = profile.envelope(x1, x2)
        return np.abs(lattice_fft(p * p * v * v))


def _bump(j: int, J: int, r: np.ndarray) -> np.ndarray:
    if j < 0 or j > J + 1:
        raise ValueError(f"bump index {j} outside 0..{J + 1}")
    if j == 0:
        return _cutoff(r, 2.0)
    if j <= J:
        return _cutoff(r, 2.0 ** (j + 1)) - _cutoff(r, 2.0**j)
    return 1.0 - _cutoff(r, 2.0 ** (J + 1))


def lattice_fft(f: np.ndarray) -> np.ndarray:
    """DFT matching F(f)(k) = sum_x exp(-2 pi i k x) f(x) on FFT-ordered grids."""
    return np.fft.fft2(f)


def build_dyadic_partition(
    J: int, profile: DecayProfile, grid: TorusGrid, ratio_floor: float = 1e-6
) -> DyadicPartition:
    """Construct the partition and certify the Fourier decay of its kernels.

    The certified constant is the max observed ratio
    |F(Pj Pj' v^2)| / (2^(-2 sigma j) |F(Pj^2)|) over grid nodes where the
    reference |F(Pj^2)| exceeds `ratio_floor` times its peak (the ratio is
    not defined at the reference's zeros).
    """
    if J < 0:
        raise ValueError("top scale J must be >= 0")
    if grid.n < 2 ** (J + 3):
        raise ValueError(
            f"grid 2^{grid.m} too coarse to resolve scale 2^{J} (need 2^m >= 2^(J+3))"
        )
    x1, x2 = grid.lattice_coords()
    r = np.hypot(x1, x2)
    v2 = profile.envelope(x1, x2) ** 2

    bumps = [_bump(j, J, r) for j in range(J + 1)]
    certs = []
    c_max = 0.0
    for j in range(J + 1):
        ref = np.abs(lattice_fft(bumps[j] * bumps[j]))
        floor = ratio_floor * ref.max()
        for jp in (j - 1, j, j + 1):
            if jp < 0 or jp > J:
                continue
            cross = np.abs(lattice_fft(bumps[j] * bumps[jp] * v2))
            mask = ref >= floor
            ratio = float((cross[mask] / ref[mask]).max() * 2.0 ** (2.0 * profile.sigma * j))
            l1 = float(np.abs(lattice_fft(bumps[j] * bumps[jp])).mean())
            certs.append(PartitionCertificate(j=j, jp=jp, max_ratio=ratio, l1_norm=l1))
            c_max = max(c_max, ratio)
    return DyadicPartition(
        J=J,
        sigma=profile.sigma,
        grid=grid,
        certificates=tuple(certs),
        C_dyad=c_max,
    )
