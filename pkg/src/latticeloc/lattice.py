"""Lattice geometry, kinetic symbol, decay envelope and disorder sampling.

Everything needed to realize the operator H = Delta + lambda*V on a finite
square box with Dirichlet walls, or on a periodic torus grid: the box and
its index map, the Fourier dual grid, the radial decay envelope v_sigma,
and reproducible per-site Gaussian disorder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LatticeBox",
    "TorusGrid",
    "DecayProfile",
    "EnergyWindow",
    "DisorderField",
    "laplacian_symbol",
    "apply_laplacian",
    "apply_hamiltonian",
    "sample_disorder",
    "disorder_on_coords",
]


@dataclass(frozen=True)
class LatticeBox:
    """Square box [-L, L]^2 of lattice sites with a fixed row-major index map."""

    L: int

    def __post_init__(self):
        if self.L < 1:
            raise ValueError(f"box half-side must be a positive integer, got {self.L}")

    @property
    def npts(self) -> int:
        return 2 * self.L + 1

    @property
    def size(self) -> int:
        return self.npts * self.npts

    def coords(self):
        """Coordinate arrays (x1, x2), each of shape (npts, npts)."""
        ax = np.arange(-self.L, self.L + 1)
        return np.meshgrid(ax, ax, indexing="ij")

    def index_of(self, x1: int, x2: int) -> int:
        """Linear index of site (x1, x2); bijection onto [0, size)."""
        if abs(x1) > self.L or abs(x2) > self.L:
            raise ValueError(f"site ({x1},{x2}) outside box L={self.L}")
        return (x1 + self.L) * self.npts + (x2 + self.L)

    def site_of(self, idx: int):
        i, j = divmod(int(idx), self.npts)
        return i - self.L, j - self.L

    def boundary_sites(self):
        """Sites of the enclosing box layer (the Dirichlet wall)."""
        Lp = self.L + 1
        side = np.arange(-Lp, Lp + 1)
        top = [(-Lp, y) for y in side]
        bot = [(Lp, y) for y in side]
        mid = [(x, y) for x in range(-self.L, self.L + 1) for y in (-Lp, Lp)]
        return top + bot + mid


@dataclass(frozen=True)
class TorusGrid:
    """Uniform 2^m x 2^m discretization of the momentum torus [-1/2, 1/2]^2.

    Nodes are the FFT frequencies of a 2^m-periodic lattice; each node
    carries quadrature weight 2^(-2m).
    """

    m: int

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("resolution exponent m must be >= 1")

    @property
    def n(self) -> int:
        return 1 << self.m

    @property
    def weight(self) -> float:
        return 1.0 / (self.n * self.n)

    def frequencies(self) -> np.ndarray:
        """1D frequency axis in cycles per site, in FFT order, inside [-1/2, 1/2)."""
        return np.fft.fftfreq(self.n)

    def lattice_coords(self):
        """Position-space coordinates of the fundamental square, FFT order.

        Site x is represented at array index x mod 2^m, so x runs over
        [-2^(m-1), 2^(m-1)).
        """
        ax = np.fft.fftfreq(self.n) * self.n
        return np.meshgrid(ax, ax, indexing="ij")

    def kinetic_symbol(self) -> np.ndarray:
        """e(k) = 2cos(2 pi k1) + 2cos(2 pi k2) sampled on the grid."""
        f = self.frequencies()
        c = 2.0 * np.cos(2.0 * np.pi * f)
        return c[:, None] + c[None, :]


def laplacian_symbol(k) -> float:
    """Kinetic energy 2cos(2 pi k1) + 2cos(2 pi k2) of momentum k in [-1/2,1/2]^2."""
    k = np.asarray(k, dtype=float)
    return float(2.0 * np.cos(2.0 * np.pi * k[0]) + 2.0 * np.cos(2.0 * np.pi * k[1]))


@dataclass(frozen=True)
class DecayProfile:
    """Radial envelope v(x) = (1 + |x|^2)^(-sigma/2), smooth at the origin.

    sigma = 0 is accepted and gives the flat envelope (uniform disorder),
    used as the reference point in delocalization comparisons.
    """

    sigma: float

    def __post_init__(self):
        if not (0.0 <= self.sigma <= 0.5):
            raise ValueError(f"decay exponent must lie in [0, 1/2], got {self.sigma}")

    # sup_x |x|^sigma v(x) = sup (r^2/(1+r^2))^(sigma/2) <= 1
    C_v: float = field(default=1.0, init=False)

    def envelope(self, x1, x2) -> np.ndarray:
        r2 = np.asarray(x1, dtype=float) ** 2 + np.asarray(x2, dtype=float) ** 2
        return (1.0 + r2) ** (-self.sigma / 2.0)

    def envelope_on_box(self, box: LatticeBox) -> np.ndarray:
        return self.envelope(*box.coords())


@dataclass(frozen=True)
class EnergyWindow:
    """Two-sided energy window (-4+tau, -tau) u (tau, 4-tau), away from -4, 0, 4."""

    tau: float
    complement: bool = False

    def __post_init__(self):
        if not (0.0 < self.tau < 1.0):
            raise ValueError(f"window margin tau must lie in (0,1), got {self.tau}")

    @property
    def intervals(self):
        return ((-4.0 + self.tau, -self.tau), (self.tau, 4.0 - self.tau))

    def contains(self, e) -> np.ndarray:
        e = np.asarray(e, dtype=float)
        inside = np.zeros(e.shape, dtype=bool)
        for a, b in self.intervals:
            inside |= (e > a) & (e < b)
        return ~inside if self.complement else inside


# ---------------------------------------------------------------------------
# Counter-based per-site Gaussian sampling.  Each site value is a pure
# function of (seed, site coordinates), so fields can be generated in any
# order, in parallel, or re-generated bit-for-bit from the seed.

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)


def _mix64(z: np.ndarray) -> np.ndarray:
    z = z + _M1
    z = (z ^ (z >> np.uint64(30))) * _M2
    z = (z ^ (z >> np.uint64(27))) * _M3
    return z ^ (z >> np.uint64(31))


def disorder_on_coords(seed: int, x1, x2) -> np.ndarray:
    """Standard Gaussian per site, keyed on (seed, site), order-independent."""
    x1 = np.asarray(x1, dtype=np.int64)
    x2 = np.asarray(x2, dtype=np.int64)
    # pack the two signed coordinates into one counter word
    packed = (x1.astype(np.uint64) << np.uint64(32)) ^ (
        x2.astype(np.uint64) & np.uint64(0xFFFFFFFF)
    )
    with np.errstate(over="ignore"):
        h1 = _mix64(np.uint64(seed) ^ _mix64(packed))
        h2 = _mix64(h1)
    u1 = ((h1 >> np.uint64(11)).astype(np.float64) + 1.0) / 2.0**53  # (0, 1]
    u2 = (h2 >> np.uint64(11)).astype(np.float64) / 2.0**53  # [0, 1)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


@dataclass(frozen=True)
class DisorderField:
    """One realization V(x) = v(x) * omega_x on a box, with seed provenance."""

    seed: int
    box: LatticeBox
    profile: DecayProfile
    omega: np.ndarray
    values: np.ndarray

    @property
    def sigma(self) -> float:
        return self.profile.sigma

    def max_abs(self) -> float:
        return float(np.abs(self.values).max())

    def moment_check(self):
        """Empirical (mean, var) of omega and their 5-sigma sampling bands."""
        n = self.omega.size
        mean = float(self.omega.mean())
        var = float(self.omega.var())
        return mean, var, 5.0 / np.sqrt(n), 5.0 * np.sqrt(2.0 / n)

    def dyadic_slices(self, partition) -> list[np.ndarray]:
        """Slices V_j = P_j * v * omega with sum_j V_j == V exactly.

        The top slice is the residual V - sum(lower slices), nudged so that
        left-to-right summation reproduces V bit-for-bit.
        """
        head = [
            partition.evaluate(j, *self.box.coords()) * self.values
            for j in range(partition.J + 1)
        ]
        acc = np.zeros_like(self.values)
        for s in head:
            acc += s
        resid = self.values - acc
        for _ in range(8):  # walk resid by ulps until fl(acc + resid) == V
            err = self.values - (acc + resid)
            bad = err != 0
            if not bad.any():
                break
            step = np.nextafter(resid, resid + np.copysign(1.0, err))
            resid = np.where(bad, step, resid)
        return head + [resid]


def sample_disorder(seed: int, box: LatticeBox, profile: DecayProfile) -> DisorderField:
    """Deterministic disorder realization for (seed, box, profile)."""
    x1, x2 = box.coords()
    omega = disorder_on_coords(seed, x1, x2)
    values = profile.envelope(x1, x2) * omega
    omega.setflags(write=False)
    values.setflags(write=False)
    return DisorderField(seed=int(seed), box=box, profile=profile, omega=omega, values=values)


# ---------------------------------------------------------------------------
# Matrix-free Hamiltonian application on the box (Dirichlet walls).


def apply_laplacian(psi: np.ndarray) -> np.ndarray:
    """Centered nearest-neighbor sum with psi = 0 outside the array."""
    out = np.zeros_like(psi)
    out[1:, :] += psi[:-1, :]
    out[:-1, :] += psi[1:, :]
    out[:, 1:] += psi[:, :-1]
    out[:, :-1] += psi[:, 1:]
    return out


def apply_hamiltonian(psi: np.ndarray, disorder: DisorderField, lam: float) -> np.ndarray:
    """(H psi)(x) = (Delta psi)(x) + lambda V(x) psi(x) on the box, O(|box|)."""
    npts = disorder.box.npts
    if psi.shape != (npts, npts):
        raise ValueError(f"field shape {psi.shape} does not match box {npts}x{npts}")
    out = apply_laplacian(psi)
    if lam != 0.0:
        out += lam * disorder.values * psi
    return out
