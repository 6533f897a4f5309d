"""Spectral parameters and derived quantities for one Fourier mode.

All parameter relations used across the solvers live here: the wavenumber
alpha = n*sqrt(nu), the small parameter eps = -i/n, the shifted phase speed
c_eps = c - eps*alpha**2, and the resolvent parameter mu = -i*alpha*c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field


@dataclass(frozen=True)
class SpectralParams:
    """Parameters (n, nu, gamma, delta, c) for a single Fourier mode.

    n       : positive Fourier index (negative n handled by conjugation upstream)
    nu      : viscosity in (0, 1]
    gamma   : growth-class exponent in [0, 1]
    delta   : stability-line margin (small, positive)
    c       : complex phase speed, Im c > 0 in the certified regimes
    """

    n: int
    nu: float
    gamma: float
    delta: float
    c: complex

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be a positive integer; use conjugation for n < 0")
        if not (0.0 < self.nu <= 1.0):
            raise ValueError("nu must lie in (0, 1]")
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")

    @property
    def alpha(self) -> float:
        return self.n * math.sqrt(self.nu)

    @property
    def eps(self) -> complex:
        return -1j / self.n

    @property
    def c_eps(self) -> complex:
        return self.c - self.eps * self.alpha**2

    @property
    def im_c_eps(self) -> float:
        # Im c_eps = Im c + alpha^2/n = Im c + n*nu
        return self.c.imag + self.alpha**2 / self.n

    @property
    def mu(self) -> complex:
        return -1j * self.alpha * self.c

    @property
    def stability_threshold(self) -> float:
        """Right-hand side of the stability-line condition on Re mu."""
        return math.sqrt(self.nu) * self.n**self.gamma / self.delta

    @property
    def on_stability_line(self) -> bool:
        """Whether Re mu = alpha*Im c >= nu^(1/2) n^gamma / delta holds."""
        return self.mu.real >= self.stability_threshold * (1.0 - 1e-12)

    @property
    def middle_range(self) -> tuple[float, float]:
        """(n_min, n_max) of the middle-frequency window for a given delta0."""
        raise AttributeError("use ThresholdSet.middle_range(nu)")

    def with_c(self, c: complex) -> "SpectralParams":
        return SpectralParams(self.n, self.nu, self.gamma, self.delta, c)

    @classmethod
    def from_mu(cls, n, nu, gamma, delta, mu: complex) -> "SpectralParams":
        """Build from the resolvent parameter mu, using c = i*mu/alpha."""
        alpha = n * math.sqrt(nu)
        return cls(n, nu, gamma, delta, 1j * mu / alpha)

    @classmethod
    def on_line(cls, n, nu, gamma, delta, re_c=0.0, margin=1.0) -> "SpectralParams":
        """Parameters sitting on the stability line: Im c = margin * n^(gamma-1)/delta."""
        im_c = margin * n ** (gamma - 1.0) / delta
        return cls(n, nu, gamma, delta, complex(re_c, im_c))


@dataclass
class ThresholdSet:
    """The small constants gating each estimate's regime.

    delta0 and delta1 come from closed formulas in terms of profile norms;
    the remaining ones are existential in the analysis and exposed as
    configuration with conservative defaults.
    """

    delta0: float
    delta1: float
    delta2: float = 0.05
    delta1_prime: float = field(default=None)  # type: ignore[assignment]
    delta_star: float = 0.05
    delta_2star: float = 0.05

    def __post_init__(self):
        if self.delta1_prime is None:
            self.delta1_prime = self.delta1
        if self.delta1 > self.delta0 + 1e-15:
            raise ValueError("delta1 must not exceed delta0")

    @classmethod
    def from_profile(cls, profile, delta2=0.05, delta_star=0.05, delta_2star=0.05):
        """Closed formulas:

        delta0 = 1 / (2 (1 + ||dy U^E||_inf + ||dY U||_inf)^(1/2))
        delta1 = 1 / (32 (1 + ||U^E||_C2 + ||U||))
        """
        d0 = 1.0 / (2.0 * math.sqrt(1.0 + profile.uE_c1_sup + profile.dU_sup))
        d1 = 1.0 / (32.0 * (1.0 + profile.uE_c2 + profile.norm_U))
        return cls(delta0=d0, delta1=min(d1, d0), delta2=delta2,
                   delta1_prime=None, delta_star=delta_star, delta_2star=delta_2star)

    def middle_range(self, nu: float) -> tuple[float, float]:
        """Fourier-index window where the mode-by-mode analysis is needed."""
        return (1.0 / self.delta0, 1.0 / (self.delta0 * nu**0.75))
