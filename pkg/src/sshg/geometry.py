"""Flat square torus with a uniform collocation grid and a fixed spin structure.

Spinors live in the rank-four real bundle realized as C^2-valued fields with
the real inner product Re<.,.>.  A spin structure is an offset delta in
{0, 1/2}^2: spinor Fourier modes sit at frequencies 2*pi*(k + delta)/L.
The Dirac operator is diagonal mode-by-mode with the 2x2 symbol

    A(xi) = [[-xi1, -xi2], [-xi2, xi1]],   eigenvalues +-|xi|,

coming from the Clifford generators GAMMA1, GAMMA2 below.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ConfigError

TWO_PI = 2.0 * np.pi

# Anti-Hermitian Clifford generators, gamma_i^2 = -I, and the volume element.
# OMEGA is real and anti-commutes with the Dirac symbol at every mode.
GAMMA1 = np.array([[1j, 0.0], [0.0, -1j]])
GAMMA2 = np.array([[0.0, 1j], [1j, 0.0]])
OMEGA = (GAMMA1 @ GAMMA2).real  # [[0, -1], [1, 0]]


@dataclass(frozen=True)
class TorusGeometry:
    """Square torus [0, L)^2, n x n grid, spin offset delta per axis."""

    grid_n: int
    side_length: float = TWO_PI
    spin_delta: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        n = self.grid_n
        if not isinstance(n, (int, np.integer)) or n < 8 or n % 2 != 0:
            raise ConfigError(f"grid_n must be an even integer >= 8, got {n!r}")
        if not self.side_length > 0:
            raise ConfigError(f"side_length must be positive, got {self.side_length!r}")
        delta = tuple(float(d) for d in self.spin_delta)
        if any(d not in (0.0, 0.5) for d in delta):
            raise ConfigError(f"spin_delta components must be 0 or 1/2, got {self.spin_delta!r}")
        object.__setattr__(self, "spin_delta", delta)

    # -- scalars ------------------------------------------------------------

    @property
    def vol(self) -> float:
        return self.side_length ** 2

    @property
    def quad_weight(self) -> float:
        # uniform weight (L/n)^2 per grid sample
        return (self.side_length / self.grid_n) ** 2

    @property
    def nyquist_bound(self) -> float:
        return (self.grid_n // 2 - 1) * TWO_PI / self.side_length

    @cached_property
    def x1(self) -> np.ndarray:
        j = np.arange(self.grid_n) * (self.side_length / self.grid_n)
        return j[:, None] * np.ones((1, self.grid_n))

    @cached_property
    def x2(self) -> np.ndarray:
        j = np.arange(self.grid_n) * (self.side_length / self.grid_n)
        return np.ones((self.grid_n, 1)) * j[None, :]

    @cached_property
    def k_int(self) -> np.ndarray:
        # integer FFT frequencies in numpy ordering: 0..n/2-1, -n/2..-1
        return np.fft.fftfreq(self.grid_n, d=1.0 / self.grid_n).astype(np.int64)

    @cached_property
    def xi1(self) -> np.ndarray:
        return (TWO_PI / self.side_length) * self.k_int[:, None] * np.ones((1, self.grid_n))

    @cached_property
    def xi2(self) -> np.ndarray:
        return (TWO_PI / self.side_length) * np.ones((self.grid_n, 1)) * self.k_int[None, :]

    @cached_property
    def xi_sq(self) -> np.ndarray:
        return self.xi1 ** 2 + self.xi2 ** 2

    # -- spinor modes ---------------------------------------------------------

    @cached_property
    def m1(self) -> np.ndarray:
        return (self.k_int + self.spin_delta[0])[:, None] * np.ones((1, self.grid_n))

    @cached_property
    def m2(self) -> np.ndarray:
        return np.ones((self.grid_n, 1)) * (self.k_int + self.spin_delta[1])[None, :]

    @cached_property
    def sxi1(self) -> np.ndarray:
        return (TWO_PI / self.side_length) * self.m1

    @cached_property
    def sxi2(self) -> np.ndarray:
        return (TWO_PI / self.side_length) * self.m2

    @cached_property
    def s_abs(self) -> np.ndarray:
        return np.hypot(self.sxi1, self.sxi2)

    @cached_property
    def spinor_mask(self) -> np.ndarray:
        """Modes kept in the discrete spinor space.

        On a delta=0 axis the k = -n/2 Nyquist line has no conjugate partner,
        which would break the exact quaternionic commutation; it is dropped.
        Half-offset axes are symmetric under k+delta -> -(k+delta) already.
        """
        n = self.grid_n
        keep1 = np.ones(n, dtype=bool)
        keep2 = np.ones(n, dtype=bool)
        if self.spin_delta[0] == 0.0:
            keep1[self.k_int == -n // 2] = False
        if self.spin_delta[1] == 0.0:
            keep2[self.k_int == -n // 2] = False
        return keep1[:, None] & keep2[None, :]

    @cached_property
    def spinor_mask_trivial(self) -> bool:
        return bool(self.spinor_mask.all())

    @cached_property
    def symbol(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Entries (a11, a12, a22) of the Hermitian Dirac symbol per mode."""
        return (-self.sxi1, -self.sxi2, self.sxi1)

    @cached_property
    def unit_symbol(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symbol normalized by |xi|; zero at the harmonic mode."""
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(self.s_abs > 0, 1.0 / np.where(self.s_abs > 0, self.s_abs, 1.0), 0.0)
        a11, a12, a22 = self.symbol
        return (a11 * inv, a12 * inv, a22 * inv)

    @cached_property
    def spinor_phase(self) -> np.ndarray:
        """Grid phase e^{2 pi i delta.j / n} relating offset modes to plain FFT."""
        n = self.grid_n
        j = np.arange(n)
        p1 = np.exp(2j * np.pi * self.spin_delta[0] * j / n)
        p2 = np.exp(2j * np.pi * self.spin_delta[1] * j / n)
        return p1[:, None] * p2[None, :]

    # -- spectrum helpers -----------------------------------------------------

    def spectral_gap(self, rho: float) -> float:
        """Distance from rho to the computed Dirac spectrum (grid modes)."""
        lam = self.s_abs[self.spinor_mask]
        return float(np.min(np.abs(lam - rho)))

    def harmonic_dim(self) -> int:
        """Real dimension of ker D on this grid (4 iff delta = (0,0))."""
        zero_modes = np.count_nonzero((self.s_abs == 0.0) & self.spinor_mask)
        return int(4 * zero_modes)
