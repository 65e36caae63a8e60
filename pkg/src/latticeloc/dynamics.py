"""Time evolution, spectral window filtering, shell observables and the
contour-quadrature realization of the low-order resolvent expansion terms.

Free evolution is a Fourier multiplier on the torus; the full evolution is
a truncated Chebyshev-Bessel expansion of exp(-itH) driven by matrix-free
Hamiltonian application.  The window filter has two independent routes: the
exact eigenprojector and a Jackson-damped Chebyshev approximation of the
window indicator.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import jv

from .lattice import (
    DecayProfile,
    DisorderField,
    EnergyWindow,
    LatticeBox,
    TorusGrid,
    apply_hamiltonian,
    disorder_on_coords,
)

__all__ = [
    "WaveFunction",
    "BoxHamiltonian",
    "TorusHamiltonian",
    "ShellObservable",
    "ContourSpec",
    "FilterDegreeError",
    "EvolutionOrderError",
    "QuadratureError",
    "ShellClipError",
    "free_evolve",
    "chebyshev_evolve",
    "spectral_filter",
    "filter_sup_error",
    "shell_mass",
    "contour_nodes",
    "duhamel_term",
    "delta_state",
]


class FilterDegreeError(RuntimeError):
    pass


class EvolutionOrderError(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    pass


class ShellClipError(ValueError):
    pass


@dataclass
class WaveFunction:
    """Complex amplitudes on a LatticeBox or TorusGrid (2D array)."""

    domain: LatticeBox | TorusGrid
    data: np.ndarray
    _norm: float | None = field(default=None, repr=False)

    def __post_init__(self):
        n = self.domain.npts if isinstance(self.domain, LatticeBox) else self.domain.n
        if self.data.shape != (n, n):
            raise ValueError(f"amplitude shape {self.data.shape} does not match domain {n}x{n}")

    def norm(self) -> float:
        if self._norm is None:
            self._norm = float(np.linalg.norm(self.data))
        return self._norm

    def copy_with(self, data: np.ndarray) -> "WaveFunction":
        return WaveFunction(self.domain, data)


def delta_state(domain, site=(0, 0)) -> WaveFunction:
    """Unit point mass at a lattice site."""
    if isinstance(domain, LatticeBox):
        data = np.zeros((domain.npts, domain.npts), dtype=complex)
        data[site[0] + domain.L, site[1] + domain.L] = 1.0
    else:
        data = np.zeros((domain.n, domain.n), dtype=complex)
        data[site[0] % domain.n, site[1] % domain.n] = 1.0
    return WaveFunction(domain, data)


# ---------------------------------------------------------------------------
# Hamiltonian handles: matrix-free apply + a rigorous spectral bound.


@dataclass(frozen=True)
class BoxHamiltonian:
    disorder: DisorderField
    lam: float

    @property
    def domain(self) -> LatticeBox:
        return self.disorder.box

    @property
    def spectral_bound(self) -> float:
        return 4.0 + abs(self.lam) * self.disorder.max_abs()

    def apply(self, psi: np.ndarray) -> np.ndarray:
        return apply_hamiltonian(psi, self.disorder, self.lam)


@dataclass(frozen=True)
class TorusHamiltonian:
    """Periodic H = Delta + lambda*V on a torus grid (Delta via FFT symbol)."""

    grid: TorusGrid
    potential: np.ndarray  # V on the fundamental square, FFT order
    lam: float

    @classmethod
    def from_seed(cls, grid: TorusGrid, profile: DecayProfile, seed: int, lam: float):
        x1, x2 = grid.lattice_coords()
        v = profile.envelope(x1, x2) * disorder_on_coords(seed, x1, x2)
        return cls(grid=grid, potential=v, lam=lam)

    @property
    def domain(self) -> TorusGrid:
        return self.grid

    @property
    def spectral_bound(self) -> float:
        return 4.0 + abs(self.lam) * float(np.abs(self.potential).max())

    def apply(self, psi: np.ndarray) -> np.ndarray:
        out = np.fft.ifft2(self.grid.kinetic_symbol() * np.fft.fft2(psi))
        if self.lam != 0.0:
            out += self.lam * self.potential * psi
        return out


# ---------------------------------------------------------------------------
# Evolution.


def free_evolve(psi: WaveFunction, t: float) -> WaveFunction:
    """exp(-it Delta) psi on the torus: diagonal multiplier in Fourier."""
    if not isinstance(psi.domain, TorusGrid):
        raise TypeError("free evolution is defined on a TorusGrid")
    phase = np.exp(-1j * t * psi.domain.kinetic_symbol())
    return psi.copy_with(np.fft.ifft2(phase * np.fft.fft2(psi.data)))


def _bessel_order(tr: float, tol: float, max_order: int) -> int:
    # |J_k(tr)| decays super-exponentially once k > tr
    k_hi = int(tr + 30 * max(1.0, np.log10(1.0 / tol)) + 60)
    if k_hi > max_order:
        raise EvolutionOrderError(
            f"Chebyshev evolution needs order ~{k_hi} > cap {max_order}; check spectral bound"
        )
    k = np.arange(k_hi + 1)
    mags = np.abs(jv(k, tr))
    keep = np.nonzero(mags >= tol)[0]
    if len(keep) == 0:
        return 1
    return int(keep[-1]) + 1


def chebyshev_evolve(psi: WaveFunction, ham, t: float, tol: float = 1e-12,
                     max_order: int = 200_000) -> WaveFunction:
    """exp(-itH) psi by the Chebyshev-Bessel expansion, truncated at `tol`."""
    r = ham.spectral_bound
    tr = abs(t) * r
    order = _bessel_order(tr, tol, max_order)
    k = np.arange(order + 1)
    coef = 2.0 * (-1j) ** k * jv(k, t * r)
    coef[0] *= 0.5
    # forward recurrence T_{k+1} = 2 X T_k - T_{k-1}, X = H / r
    tk_prev = psi.data.astype(complex)
    out = coef[0] * tk_prev
    if order >= 1:
        tk = ham.apply(tk_prev) / r
        out = out + coef[1] * tk
        for kk in range(2, order + 1):
            tk_prev, tk = tk, 2.0 * ham.apply(tk) / r - tk_prev
            out = out + coef[kk] * tk
    return psi.copy_with(out)


# ---------------------------------------------------------------------------
# Window filter: exact projector and Jackson-damped Chebyshev indicator.


def _jackson_damping(deg: int) -> np.ndarray:
    K = deg + 1
    k = np.arange(deg + 1)
    return ((K - k) * np.cos(np.pi * k / K) + np.sin(np.pi * k / K) / np.tan(np.pi / K)) / K


def _indicator_coeffs(window: EnergyWindow, r: float, deg: int) -> np.ndarray:
    k = np.arange(deg + 1)
    c = np.zeros(deg + 1)
    for a, b in window.intervals:
        ta = np.arccos(np.clip(a / r, -1.0, 1.0))
        tb = np.arccos(np.clip(b / r, -1.0, 1.0))
        c[0] += (ta - tb) / np.pi
        kk = k[1:]
        c[1:] += 2.0 / np.pi * (np.sin(kk * ta) - np.sin(kk * tb)) / kk
    return c * _jackson_damping(deg)


def _cheb_scalar(coef: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.polynomial.chebyshev.chebval(np.clip(x, -1.0, 1.0), coef)


def filter_sup_error(window: EnergyWindow, r: float, degree: int,
                     npts: int = 50_001) -> float:
    """Sup distance of the damped polynomial from the window indicator over
    [-5, 5] minus tau/4 collars around the four window edges."""
    coef = _indicator_coeffs(window, r, degree)
    e = np.linspace(-5.0, 5.0, npts)
    f = _cheb_scalar(coef, e / r)
    chi = window.contains(e).astype(float)
    keep = np.ones(npts, dtype=bool)
    for a, b in window.intervals:
        for edge in (a, b):
            keep &= np.abs(e - edge) >= window.tau / 4.0
    return float(np.abs(f - chi)[keep].max())


def spectral_filter(psi: WaveFunction, ham, window: EnergyWindow,
                    method: str = "chebyshev-jackson", degree: int = 2000,
                    sup_error_cap: float | None = 0.01) -> WaveFunction:
    """Project psi onto the energy window.

    method="exact" needs `ham` to be an eigensolution (attributes
    eigenvalues / eigenvectors); method="chebyshev-jackson" needs a
    matrix-free handle and checks the polynomial's sup-error contract.
    """
    if method == "exact":
        sol = ham
        keep = window.contains(sol.eigenvalues)
        vecs = sol.eigenvectors[:, keep]
        flat = psi.data.reshape(-1)
        out = vecs @ (vecs.conj().T @ flat)
        return psi.copy_with(out.reshape(psi.data.shape))
    if method != "chebyshev-jackson":
        raise ValueError(f"unknown filter method {method!r}")
    r = ham.spectral_bound * (1.0 + 1e-9)
    if sup_error_cap is not None:
        err = filter_sup_error(window, r, degree)
        if err > sup_error_cap:
            raise FilterDegreeError(
                f"degree {degree} misses the sup-error contract: {err:.3g} > {sup_error_cap}"
            )
    coef = _indicator_coeffs(window, r, degree)
    tk_prev = psi.data.astype(complex)
    out = coef[0] * tk_prev
    tk = ham.apply(tk_prev) / r
    out = out + coef[1] * tk
    for kk in range(2, degree + 1):
        tk_prev, tk = tk, 2.0 * ham.apply(tk) / r - tk_prev
        out = out + coef[kk] * tk
    return psi.copy_with(out)


# ---------------------------------------------------------------------------
# Shell observable: weight 1 on a cubical shell around a center, 0 at the
# center, built from smoothed plateaus and sup-normalized.


def _tri_kernel(order: int) -> np.ndarray:
    u = np.arange(-(order - 1), order)
    w = (order - np.abs(u)).astype(float)
    return w / w.sum()


def _smoothed_plateau(halfwidth: float, order: int, umax: int) -> np.ndarray:
    u = np.arange(-umax, umax + 1)
    ind = (np.abs(u) <= halfwidth).astype(float)
    if order <= 1:
        return ind
    return np.convolve(ind, _tri_kernel(order), mode="same")


@dataclass(frozen=True)
class ShellObservable:
    """Weights on the cubical shell between inner side delta*ell and outer
    side ell around `center`; 0 at the center, sup-norm 1.

    Built per coordinate from plateaus smoothed by triangular (Fejer-weight)
    kernels of orders ~ ell/64 (outer) and ~ delta*ell/8 (inner); the 2D
    weight is the difference of the two plateau products.
    """

    center: tuple[int, int]
    delta: float
    ell: float
    order_out: int | None = None
    order_in: int | None = None

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ValueError("inner fraction delta must lie in (0,1)")
        if self.ell < 4:
            raise ValueError("outer side ell too small")

    def orders(self) -> tuple[int, int]:
        n_out = self.order_out or max(1, int(round(self.ell / 64.0)))
        n_in = self.order_in or max(1, int(round(self.delta * self.ell / 8.0)))
        return n_out, n_in

    @property
    def halfwidth(self) -> int:
        return int(np.ceil(self.ell / 2.0)) - 1

    def kernel(self) -> np.ndarray:
        """R on its support square, shape (2*halfwidth+1,)*2, sup-norm 1."""
        hw = self.halfwidth
        n_out, n_in = self.orders()
        a_out = self.ell / 2.0 - n_out
        b_in = self.delta * self.ell / 2.0 + n_in - 1
        pout = _smoothed_plateau(a_out, n_out, hw)
        pin = _smoothed_plateau(b_in, n_in, hw)
        R = np.outer(pout, pout) - np.outer(pin, pin)
        m = R.max()
        if m <= 0:
            raise ValueError("shell weights are identically zero; inner core swallows the shell")
        return R / m


def shell_mass(psi: WaveFunction, shell: ShellObservable) -> float:
    """|| R psi ||^2 with the shell's weights centered at shell.center."""
    R = shell.kernel()
    hw = shell.halfwidth
    c1, c2 = shell.center
    if isinstance(psi.domain, LatticeBox):
        L = psi.domain.L
        if abs(c1) + hw > L or abs(c2) + hw > L:
            raise ShellClipError(
                f"shell of halfwidth {hw} at {shell.center} exceeds box L={L}"
            )
        i, j = c1 + L, c2 + L
        patch = psi.data[i - hw : i + hw + 1, j - hw : j + hw + 1]
    else:
        n = psi.domain.n
        if 2 * hw + 1 > n:
            raise ShellClipError(f"shell of halfwidth {hw} exceeds torus size {n}")
        idx1 = (np.arange(c1 - hw, c1 + hw + 1)) % n
        idx2 = (np.arange(c2 - hw, c2 + hw + 1)) % n
        patch = psi.data[np.ix_(idx1, idx2)]
    return float(np.sum(R**2 * np.abs(patch) ** 2))


# ---------------------------------------------------------------------------
# Contours and quadrature.


@dataclass(frozen=True)
class ContourSpec:
    """Rectangular loops below the two window components, epsilon = 1/t.

    Both loops are clockwise; each encloses one component of the window
    shifted by -i*epsilon.  `density` is the trapezoid node count per unit
    contour length.
    """

    tau: float
    t: float
    density: float = 400.0

    def __post_init__(self):
        if self.t <= 0:
            raise ValueError("time must be positive")
        if self.tau <= 2.0 * self.epsilon:
            raise ValueError(
                f"contour degenerates: tau={self.tau} <= 2 eps={2 * self.epsilon:.3g}"
            )

    @property
    def epsilon(self) -> float:
        return 1.0 / self.t

    def loop_segments(self, side: int):
        """Oriented segments of the clockwise loop around one window component."""
        eps = self.epsilon
        if side < 0:
            a, b = -4.0 + self.tau / 2.0, -self.tau / 2.0
        else:
            a, b = self.tau / 2.0, 4.0 - self.tau / 2.0
        drop = -2j * eps
        return [(a, b), (b, b + drop), (b + drop, a + drop), (a + drop, a)]

    def horizontal_segments(self):
        segs = []
        for side in (-1, 1):
            loop = self.loop_segments(side)
            segs.append(loop[0])
            segs.append(loop[2])
        return segs

    def vertical_segments(self):
        segs = []
        for side in (-1, 1):
            loop = self.loop_segments(side)
            segs.append(loop[1])
            segs.append(loop[3])
        return segs

    def closed_rectangle(self, halfwidth: float):
        """Clockwise rectangle [-B, B] x [0, -2i eps]: encloses the full
        spectrum shifted by -i*eps whenever halfwidth > ||H||."""
        eps = self.epsilon
        drop = -2j * eps
        B = halfwidth
        return [(-B, B), (B, B + drop), (B + drop, -B + drop), (-B + drop, -B)]

    def tilde_arcs(self, halfwidth: float | None = None):
        """The pieces of the full rectangle not covered by the horizontal
        window segments: arcs around -4, 0, +4 plus the two far verticals."""
        eps = self.epsilon
        B = halfwidth if halfwidth is not None else 4.0 + eps
        drop = -2j * eps
        am, bm = -4.0 + self.tau / 2.0, -self.tau / 2.0
        ap, bp = self.tau / 2.0, 4.0 - self.tau / 2.0
        segs = [
            (-B, am), (bm, ap), (bp, B),              # top gaps, left to right
            (B, B + drop),                             # right vertical, down
            (B + drop, bp + drop), (ap + drop, bm + drop), (am + drop, -B + drop),
            (-B + drop, -B),                           # left vertical, up
        ]
        return segs


def contour_nodes(segments, density: float, min_nodes: int = 8):
    """Trapezoid nodes and complex weights along oriented straight segments.

    Per segment the weights sum to (end - start), so over any closed loop
    the weights sum to zero.
    """
    nodes, weights = [], []
    for start, end in segments:
        length = abs(end - start)
        m = max(min_nodes, int(np.ceil(density * length)) + 1)
        s = np.linspace(0.0, 1.0, m)
        z = start + (end - start) * s
        w = np.full(m, (end - start) / (m - 1), dtype=complex)
        w[0] *= 0.5
        w[-1] *= 0.5
        nodes.append(z)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


# ---------------------------------------------------------------------------
# Resolvent-expansion terms phi_{n,t} by alternating Fourier multipliers and
# position-space potential factors, quadratured over contour nodes.


def duhamel_term(
    n: int,
    phi0: WaveFunction,
    ham: TorusHamiltonian,
    t: float,
    spec: ContourSpec,
    contour: str = "horizontal",
    density: float | None = None,
    check_tol: float | None = None,
) -> WaveFunction:
    """n-th expansion term: (e^{eps t}/2 pi i) * integral over the contour of
    e^{-it a} R_a (-lambda V R_a)^n phi0, with R_a the free-resolvent
    multiplier 1/(e(k) - a - i eps).

    contour="horizontal" uses the window segments; "closed" uses the full
    rectangle enclosing the spectrum (the expansion then telescopes to the
    exact evolution).  If `check_tol` is set, the quadrature is repeated at
    doubled density and must agree to that relative tolerance.
    """
    if n < 0 or n > 3:
        raise ValueError("expansion order n must be in 0..3")
    if not isinstance(phi0.domain, TorusGrid):
        raise TypeError("expansion terms are computed on a TorusGrid")
    if phi0.domain.n > 64:
        raise ValueError("grid too large for the dense expansion term (cap 64 per side)")
    dens = density if density is not None else spec.density

    def run(d):
        if contour == "horizontal":
            nodes, weights = contour_nodes(spec.horizontal_segments(), d)
        elif contour == "closed":
            B = ham.spectral_bound + 1.0
            nodes, weights = contour_nodes(spec.closed_rectangle(B), d)
        else:
            raise ValueError(f"unknown contour {contour!r}")
        eps = spec.epsilon
        sym = phi0.domain.kinetic_symbol()
        phat0 = np.fft.fft2(phi0.data)
        acc = np.zeros_like(phat0)
        pot = ham.lam * ham.potential
        for a, w in zip(nodes, weights):
            cur = phat0 / (sym - a - 1j * eps)
            for _ in range(n):
                cur = -np.fft.fft2(pot * np.fft.ifft2(cur))
                cur /= sym - a - 1j * eps
            acc += w * np.exp(-1j * t * a) * cur
        acc *= np.exp(eps * t) / (2j * np.pi)
        return np.fft.ifft2(acc)

    out = run(dens)
    if check_tol is not None:
        ref = run(2.0 * dens)
        scale = max(np.linalg.norm(ref), 1e-300)
        rel = np.linalg.norm(out - ref) / scale
        if rel > check_tol:
            raise QuadratureError(
                f"contour quadrature not converged: node-doubling moves the term by {rel:.3g}"
            )
        out = ref
    return phi0.copy_with(out)
