"""Model state types and every term of the segmentation energy.

The joint objective couples four pieces:

  fit     sum_i lam_i * <u_i, e_i>, where e_i(x) is the kernel-weighted
          squared residual between the smooth image g and the bias-scaled
          region mean c_i,
  length  mu * sqrt(pi/t) * sum_i sum_{j != i} <u_i, K_t * u_j>, the
          heat-kernel perimeter estimate (t in pixel^2 units),
  idiv    gamma * sum(g - f*log(g)), the Poisson/Gamma fidelity,
  tv      nu * sum(alpha * sqrt(|grad g|^2 + eps^2)), total variation with
          the gray-level indicator alpha as adaptive weight.

Smoothing note: TV is evaluated with the eps floor everywhere, so the solver
force in `solve` is the exact gradient of the energy evaluated here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError
from .field import Kernel, convolve, gaussian_kernel, gradient, inner_product

__all__ = [
    "ModelParams",
    "IndicatorSet",
    "SegState",
    "EnergyBreakdown",
    "gray_indicator",
    "fit_residual",
    "fitting_energy",
    "length_energy",
    "idiv_energy",
    "tv_energy",
    "total_energy",
    "partition_energy",
]


@dataclass
class ModelParams:
    """All tunables of the model and its solver.

    `tau` is the heat time of the length kernel in normalized-domain units
    (image long side = 1) unless `tau_in_pixels` is set; `rho` and `sigma`
    are pixel-unit Gaussian standard deviations.
    """

    lambdas: tuple[float, ...] = (1.0, 1.0)
    mu: float = 1e-9 * 255.0**2
    gamma: float = 0.1
    nu: float = 1.0
    rho: float = 3.0
    tau: float = 0.02
    tau_in_pixels: bool = False
    sigma: float = 1.0
    p: float = 1.3
    dt: float | None = None
    c0: float = 1.0
    eta_relax: float = 0.99
    eps_tv: float = 1e-2
    g_floor: float = 1e-3
    tol1: float = 1e-8
    tol2: float = 1e-3
    max_outer: int = 500
    max_inner: int = 5
    intensity_scale: float = 255.0
    freeze_bias: bool = False

    @property
    def n_phases(self) -> int:
        return len(self.lambdas)

    @property
    def time_step(self) -> float:
        """Flow step: explicit `dt`, or a default scaled down when the TV
        weight raises the force magnitude (keeps the per-step displacement
        of the image flow roughly weight-independent)."""
        if self.dt is not None:
            return self.dt
        return 0.05 / max(1.0, self.nu)

    def validate(self) -> "ModelParams":
        if self.n_phases < 2:
            raise ConfigError("need at least 2 phases")
        if any(l < 0 for l in self.lambdas):
            raise ConfigError("lambda weights must be nonnegative")
        if self.mu < 0 or self.gamma < 0 or self.nu < 0:
            raise ConfigError("mu, gamma, nu must be nonnegative")
        if self.dt is not None and self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.intensity_scale <= 0:
            raise ConfigError("intensity_scale must be positive")
        for name in ("rho", "tau", "sigma", "c0", "eps_tv", "g_floor"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if not 0.0 <= self.eta_relax <= 1.0:
            raise ConfigError("eta_relax must lie in [0, 1]")
        if self.tol1 < 0 or self.tol2 < 0:
            raise ConfigError("tolerances must be nonnegative")
        if self.max_outer < 1 or self.max_inner < 0:
            raise ConfigError("iteration caps out of range")
        return self

    def heat_time_pixels(self, shape: tuple[int, int]) -> float:
        """Length-kernel heat time in pixel^2 units for an image shape."""
        if self.tau_in_pixels:
            return self.tau
        scale = float(max(shape))
        return self.tau * scale * scale


class IndicatorSet:
    """A hard partition: n binary masks summing to 1 at every pixel."""

    def __init__(self, masks: np.ndarray, check: bool = True):
        masks = np.asarray(masks, dtype=np.float64)
        if masks.ndim != 3 or masks.shape[0] < 1:
            raise ValueError(f"masks must be (n, H, W), got {masks.shape}")
        if check:
            binary = (masks == 0.0) | (masks == 1.0)
            if not binary.all():
                raise ValueError("indicator masks must be exactly 0/1")
            if not (masks.sum(axis=0) == 1.0).all():
                raise ValueError("masks must partition the grid (sum to 1 pointwise)")
        self.masks = masks

    @property
    def n(self) -> int:
        return self.masks.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.masks.shape[1:]

    @classmethod
    def from_labels(cls, labels: np.ndarray, n: int) -> "IndicatorSet":
        labels = np.asarray(labels)
        if labels.min() < 0 or labels.max() >= n:
            raise ValueError(f"labels out of range for {n} phases")
        masks = np.stack([(labels == i).astype(np.float64) for i in range(n)])
        return cls(masks, check=False)

    def labels(self) -> np.ndarray:
        return np.argmax(self.masks, axis=0).astype(np.int64)

    def copy(self) -> "IndicatorSet":
        return IndicatorSet(self.masks.copy(), check=False)


@dataclass
class SegState:
    """Current iterate: region means c, bias field b, smooth image g, masks u."""

    c: np.ndarray
    b: np.ndarray
    g: np.ndarray
    u: IndicatorSet

    def copy(self) -> "SegState":
        return SegState(self.c.copy(), self.b.copy(), self.g.copy(), self.u.copy())


@dataclass(frozen=True)
class EnergyBreakdown:
    fit: float
    length: float
    idiv: float
    tv: float
    total: float

    @classmethod
    def build(cls, fit: float, length: float, idiv: float, tv: float) -> "EnergyBreakdown":
        return cls(fit, length, idiv, tv, fit + length + idiv + tv)


def gray_indicator(f: np.ndarray, sigma: float, p: float) -> np.ndarray:
    """Adaptive diffusion weight ((K_sigma*f)/max)^p, values in (0, 1].

    Bright regions (where signal-dependent noise is strongest) get weight 1;
    darker regions smaller, slowing diffusion there.
    """
    f = np.asarray(f, dtype=np.float64)
    if f.min() < 0:
        raise ValueError("image must be nonnegative")
    smoothed = convolve(f, gaussian_kernel(sigma))
    m = smoothed.max()
    if m <= 0:
        raise DegenerateInputError("all-zero image has no gray-level scale")
    return (smoothed / m) ** p


def ones_mass(shape: tuple[int, int], kernel: Kernel) -> np.ndarray:
    """Kernel mass seen at each pixel: K * 1. Identically 1 up to roundoff
    under reflective padding, but computed explicitly rather than assumed."""
    return convolve(np.ones(shape, dtype=np.float64), kernel)


def fit_residual(g: np.ndarray, b: np.ndarray, c_i: float,
                 kernel: Kernel) -> np.ndarray:
    """Kernel-weighted squared residual field

        e_i(x) = sum_y K(y-x) * (g(x) - b(y) * c_i)^2,

    expanded into three convolutions; clamped at 0 against roundoff.
    """
    g = np.asarray(g, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    one = ones_mass(g.shape, kernel)
    kb = convolve(b, kernel)
    kb2 = convolve(b * b, kernel)
    e = g * g * one - 2.0 * c_i * g * kb + c_i * c_i * kb2
    return np.maximum(e, 0.0)


def fitting_energy(state: SegState, params: ModelParams,
                   kernel: Kernel | None = None) -> float:
    """sum_i lam_i * <u_i, e_i>."""
    kernel = kernel or gaussian_kernel(params.rho)
    total = 0.0
    for i, lam in enumerate(params.lambdas):
        e_i = fit_residual(state.g, state.b, float(state.c[i]), kernel)
        total += lam * inner_product(state.u.masks[i], e_i)
    return total


def length_energy(u: IndicatorSet, mu: float, time_px: float,
                  kernel: Kernel | None = None) -> float:
    """Heat-kernel contour-length term, in pixel units.

    mu * sqrt(pi/t) * sum_i sum_{j != i} <u_i, K_t * u_j>. Each interface is
    counted once per adjacent phase, so a straight edge of length N in a
    two-phase partition contributes 2N (the sum of both phase perimeters).
    """
    if time_px <= 0:
        raise ValueError("heat time must be positive")
    from .field import heat_kernel_pixels

    kernel = kernel or heat_kernel_pixels(time_px)
    pref = np.sqrt(np.pi / time_px)
    total = 0.0
    for i in range(u.n):
        others = u.masks.sum(axis=0) - u.masks[i]
        total += inner_product(u.masks[i], convolve(others, kernel))
    return mu * pref * total


def idiv_energy(g: np.ndarray, f: np.ndarray, gamma: float, g_floor: float) -> float:
    """Fidelity gamma * sum(g - f * log g); requires g >= g_floor > 0."""
    if gamma == 0.0:
        return 0.0
    g = np.asarray(g, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if g.min() < g_floor:
        raise ValueError(f"g fell below the positivity floor {g_floor}")
    return gamma * float(np.sum(g - f * np.log(g)))


def tv_energy(g: np.ndarray, alpha: np.ndarray, nu: float, eps_tv: float) -> float:
    """Weighted smoothed total variation nu * sum(alpha * sqrt(|grad g|^2 + eps^2))."""
    if nu == 0.0:
        return 0.0
    gx, gy = gradient(g)
    mag = np.sqrt(gx * gx + gy * gy + eps_tv * eps_tv)
    return nu * float(np.sum(np.asarray(alpha, dtype=np.float64) * mag))


def total_energy(state: SegState, f: np.ndarray, alpha: np.ndarray,
                 params: ModelParams,
                 fit_kernel: Kernel | None = None,
                 length_kernel: Kernel | None = None) -> EnergyBreakdown:
    """All four terms of the joint objective, plus their sum."""
    time_px = params.heat_time_pixels(state.g.shape)
    fit = fitting_energy(state, params, fit_kernel)
    length = length_energy(state.u, params.mu, time_px, length_kernel)
    idiv = idiv_energy(state.g, f, params.gamma, params.g_floor)
    tv = tv_energy(state.g, alpha, params.nu, params.eps_tv)
    return EnergyBreakdown.build(fit, length, idiv, tv)


def partition_energy(e_fields: np.ndarray, u: IndicatorSet, params: ModelParams,
                     time_px: float, kernel: Kernel | None = None) -> float:
    """Energy of a partition with the residual fields held fixed:
    fitting plus heat-kernel length. This is the quantity the thresholding
    step decreases monotonically."""
    fit = sum(params.lambdas[i] * inner_product(u.masks[i], e_fields[i])
              for i in range(u.n))
    return fit + length_energy(u, params.mu, time_px, kernel)
