"""Alternating minimization: closed-form mean and bias updates, a relaxed
scalar-auxiliary-variable (RMSAV) gradient flow for the smooth image, and
convolution thresholding for the partition.

The g-subproblem flow keeps an auxiliary scalar z tracking sqrt(E_g + C0).
One inner step, with m = F'(g_j)/sqrt(E_g(g_j)+C0) and m_hat = A^{-1} m for
A = I + dt*Lap^2:

    z_tilde = z_j / (1 + dt/2 * <m, m_hat>)
    g_{j+1} = g_j - dt * z_tilde * m_hat
    z_{j+1} = xi * z_tilde + (1 - xi) * sqrt(E_g(g_{j+1}) + C0)

xi is the smallest value in [0, 1] keeping

    z_{j+1}^2 - z_tilde^2 - (z_tilde - z_j)^2 <= eta * G,
    G = (1/dt) * <g_{j+1} - g_j, A (g_{j+1} - g_j)>,

which yields the unconditional stability law z_{j+1}^2 - z_j^2 <= -(1-eta)*G
(with equality whenever xi lands strictly inside (0, 1]). The identity
G = -2*z_tilde^2 + 2*z_tilde*z_j holds exactly by construction and is used
as a cross-check in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import DegenerateInputError, NumericalFailure
from .energy import (
    EnergyBreakdown,
    IndicatorSet,
    ModelParams,
    SegState,
    gray_indicator,
    idiv_energy,
    ones_mass,
    tv_energy,
)
from .field import (
    Kernel,
    as_field,
    biharmonic,
    convolve,
    divergence,
    gaussian_kernel,
    gradient,
    heat_kernel_pixels,
    inner_product,
    solve_implicit,
)

__all__ = [
    "SavState",
    "StepResult",
    "InnerRecord",
    "OuterRecord",
    "IterationLog",
    "GContext",
    "build_g_context",
    "fidelity_lower_bound",
    "g_energy",
    "force",
    "rmsav_step",
    "relaxation_coefficient",
    "update_means",
    "update_bias",
    "update_image",
    "threshold_fields",
    "threshold",
    "segment",
]


# --------------------------------------------------------------------------
# bookkeeping types

@dataclass
class SavState:
    """Inner-loop scalar state: auxiliary variable z, last relaxation xi."""

    z: float
    xi: float = 1.0
    inner_iter: int = 0


@dataclass(frozen=True)
class StepResult:
    g_next: np.ndarray
    z_tilde: float
    z_next: float
    xi: float
    g_val: float          # G-functional (1/dt) <delta, A delta>, pre-floor delta
    e_next: float         # E_g at the (floored) new iterate
    fit: float
    idiv: float
    tv: float
    floored: bool


@dataclass(frozen=True)
class InnerRecord:
    outer: int
    inner: int
    energy: float
    fit: float
    idiv: float
    tv: float
    z: float
    z_tilde: float
    xi: float
    g_val: float
    err2: float
    floored: bool

    @property
    def z_sq(self) -> float:
        return self.z * self.z


@dataclass(frozen=True)
class OuterRecord:
    outer: int
    energy: EnergyBreakdown   # full joint energy at the end of the iteration
    eu_before: float          # partition energy of u^k  (same residual fields)
    eu_after: float           # partition energy of u^{k+1}
    err1: float
    means: tuple
    flags: tuple = ()


@dataclass
class IterationLog:
    header: dict = dc_field(default_factory=dict)
    outers: list = dc_field(default_factory=list)
    inners: list = dc_field(default_factory=list)
    warnings: list = dc_field(default_factory=list)


# --------------------------------------------------------------------------
# closed-form subproblems

def update_means(state: SegState, params: ModelParams,
                 kernel: Kernel | None = None) -> tuple[np.ndarray, list[str]]:
    """Optimal region means c_i = <u_i * g, K*b> / <u_i, K*b^2>.

    An empty phase (zero denominator) keeps its previous mean and is flagged;
    thresholding may repopulate it later.
    """
    kernel = kernel or gaussian_kernel(params.rho)
    kb = convolve(state.b, kernel)
    kb2 = convolve(state.b * state.b, kernel)
    c = np.array(state.c, dtype=np.float64, copy=True)
    flags = []
    for i in range(state.u.n):
        mask = state.u.masks[i]
        denom = inner_product(mask, kb2)
        if denom <= 0.0:
            flags.append(f"phase {i} empty; keeping previous mean {c[i]:.6g}")
            continue
        c[i] = inner_product(mask * state.g, kb) / denom
    return c, flags


def update_bias(state: SegState, params: ModelParams,
                kernel: Kernel | None = None) -> np.ndarray:
    """Optimal bias field

        b(y) = sum_i lam_i c_i (K*(u_i g))(y) / sum_i lam_i c_i^2 (K*u_i)(y).
    """
    if not np.any(np.asarray(state.c) != 0.0):
        raise DegenerateInputError("all region means are zero; bias undefined")
    kernel = kernel or gaussian_kernel(params.rho)
    num = np.zeros_like(state.g)
    den = np.zeros_like(state.g)
    for i, lam in enumerate(params.lambdas):
        c_i = float(state.c[i])
        if lam == 0.0 or c_i == 0.0:
            continue
        num += lam * c_i * convolve(state.u.masks[i] * state.g, kernel)
        den += lam * c_i * c_i * convolve(state.u.masks[i], kernel)
    den = np.maximum(den, np.finfo(np.float64).tiny)
    return num / den


# --------------------------------------------------------------------------
# g-subproblem: energy, force, RMSAV flow

@dataclass(frozen=True)
class GContext:
    """Everything the g-subproblem needs with (c, b, u) held fixed.

    weight = (K*1) * sum_i lam_i u_i and target = (K*b) * sum_i lam_i c_i u_i
    collapse the per-phase fitting terms, so

        E_fit(g) = <g^2, weight> - 2 <g, target> + fit_const,
        dE_fit   = 2 (weight * g - target).

    `shift` is the effective positivity offset for the auxiliary variable
    z = sqrt(E_g + shift): the configured margin c0 plus the magnitude of the
    exact lower bound of the fidelity term (attained pointwise at g = f), so
    E_g + shift >= c0 > 0 is guaranteed along the whole flow.
    """

    f: np.ndarray
    alpha: np.ndarray
    weight: np.ndarray
    target: np.ndarray
    fit_const: float
    gamma: float
    nu: float
    eps_tv: float
    g_floor: float
    dt: float
    c0: float
    shift: float
    eta: float


def fidelity_lower_bound(f: np.ndarray, gamma: float, g_floor: float) -> float:
    """Exact infimum of the I-divergence term over g >= g_floor."""
    if gamma <= 0.0:
        return 0.0
    f = np.asarray(f, dtype=np.float64)
    g_star = np.maximum(f, g_floor)
    return gamma * float(np.sum(g_star - f * np.log(g_star)))


def build_g_context(state: SegState, f: np.ndarray, alpha: np.ndarray,
                    params: ModelParams, kernel: Kernel | None = None) -> GContext:
    kernel = kernel or gaussian_kernel(params.rho)
    one = ones_mass(state.g.shape, kernel)
    kb = convolve(state.b, kernel)
    kb2 = convolve(state.b * state.b, kernel)
    lam_u = np.zeros_like(state.g)
    lam_cu = np.zeros_like(state.g)
    fit_const = 0.0
    for i, lam in enumerate(params.lambdas):
        c_i = float(state.c[i])
        lam_u += lam * state.u.masks[i]
        lam_cu += lam * c_i * state.u.masks[i]
        fit_const += lam * c_i * c_i * inner_product(state.u.masks[i], kb2)
    f = np.asarray(f, dtype=np.float64)
    idiv_lb = fidelity_lower_bound(f, params.gamma, params.g_floor)
    return GContext(
        f=f,
        alpha=np.asarray(alpha, dtype=np.float64),
        weight=one * lam_u,
        target=kb * lam_cu,
        fit_const=fit_const,
        gamma=params.gamma,
        nu=params.nu,
        eps_tv=params.eps_tv,
        g_floor=params.g_floor,
        dt=params.time_step,
        c0=params.c0,
        shift=params.c0 + max(0.0, -idiv_lb),
        eta=params.eta_relax,
    )


def g_energy(g: np.ndarray, ctx: GContext) -> tuple[float, float, float, float]:
    """E_g(g) = fitting + I-divergence + weighted TV; returns (total, parts)."""
    fit = float(np.sum(g * g * ctx.weight) - 2.0 * np.sum(g * ctx.target)) + ctx.fit_const
    idiv = 0.0
    if ctx.gamma > 0.0:
        idiv = ctx.gamma * float(np.sum(g - ctx.f * np.log(g)))
    tv = tv_energy(g, ctx.alpha, ctx.nu, ctx.eps_tv)
    return fit + idiv + tv, fit, idiv, tv


def force(g: np.ndarray, ctx: GContext) -> np.ndarray:
    """Variational derivative of E_g; the exact gradient of `g_energy`.

        F'(g) = 2 (weight*g - target) - gamma*(f-g)/g
                - nu * div(alpha * grad g / sqrt(|grad g|^2 + eps^2))
    """
    out = 2.0 * (ctx.weight * g - ctx.target)
    if ctx.gamma > 0.0:
        out += ctx.gamma * (1.0 - ctx.f / g)
    if ctx.nu > 0.0:
        gx, gy = gradient(g)
        mag = np.sqrt(gx * gx + gy * gy + ctx.eps_tv * ctx.eps_tv)
        out -= ctx.nu * divergence(ctx.alpha * gx / mag, ctx.alpha * gy / mag)
    return out


def rmsav_step(g: np.ndarray, z: float, ctx: GContext,
               e_cur: float | None = None,
               outer: int | None = None, inner: int | None = None) -> StepResult:
    """One relaxed-SAV step of the g gradient flow.

    `e_cur` (E_g at the incoming iterate) may be supplied to avoid a
    recomputation; the positivity floor is applied after the update, and the
    G-functional is evaluated on the pre-floor displacement.
    """
    if z <= 0.0:
        raise NumericalFailure(f"auxiliary variable must stay positive, got {z}",
                               outer, inner)
    if e_cur is None:
        e_cur = g_energy(g, ctx)[0]
    root_cur = np.sqrt(e_cur + ctx.shift)
    m = force(g, ctx) / root_cur
    m_hat = solve_implicit(m, ctx.dt)
    ip = inner_product(m, m_hat)
    z_tilde = z / (1.0 + 0.5 * ctx.dt * ip)
    g_raw = g - ctx.dt * z_tilde * m_hat
    delta = g_raw - g
    g_val = (inner_product(delta, delta)
             + ctx.dt * inner_product(delta, biharmonic(delta))) / ctx.dt
    g_next = np.maximum(g_raw, ctx.g_floor)
    floored = bool(g_raw.min() < ctx.g_floor)
    e_next, fit, idiv, tv = g_energy(g_next, ctx)
    if not (np.isfinite(e_next) and np.isfinite(z_tilde) and np.isfinite(g_val)):
        raise NumericalFailure("non-finite value in SAV step", outer, inner)
    xi = relaxation_coefficient(z_tilde, z, e_next, g_val, ctx.shift, ctx.eta)
    z_next = xi * z_tilde + (1.0 - xi) * np.sqrt(e_next + ctx.shift)
    return StepResult(g_next=g_next, z_tilde=float(z_tilde), z_next=float(z_next),
                      xi=float(xi), g_val=float(g_val), e_next=float(e_next),
                      fit=float(fit), idiv=float(idiv), tv=float(tv),
                      floored=floored)


def relaxation_coefficient(z_tilde: float, z_prev: float, e_next: float,
                           g_val: float, c0: float = 1.0,
                           eta: float = 0.99) -> float:
    """Smallest xi in [0, 1] satisfying the relaxation constraint

        q*xi^2 + d*xi + h <= 0,
        q = (z_tilde - r)^2,  d = 2*(z_tilde - r)*r,
        h = r^2 - z_tilde^2 - (z_tilde - z_prev)^2 - eta*G,  r = sqrt(E+C0),

    i.e. xi = max{0, (-d - sqrt(d^2 - 4qh)) / (2q)}. xi = 1 is always
    feasible, so a significantly negative discriminant indicates a numerical
    fault and raises.
    """
    if e_next + c0 <= 0.0:
        raise NumericalFailure("energy fell below -C0; shift C0 is too small")
    r = np.sqrt(e_next + c0)
    q = (z_tilde - r) ** 2
    d = 2.0 * (z_tilde - r) * r
    h = e_next + c0 - z_tilde**2 - (z_tilde - z_prev)**2 - eta * g_val
    if q > 1e-14:
        disc = d * d - 4.0 * q * h
        if disc < 0.0:
            scale = max(d * d, abs(4.0 * q * h), 1.0)
            if disc < -1e-8 * scale:
                raise NumericalFailure(
                    f"relaxation discriminant {disc:.3e} negative beyond roundoff")
            disc = 0.0
        xi = (-d - np.sqrt(disc)) / (2.0 * q)
        xi = max(0.0, xi)
    elif h <= 0.0:
        xi = 0.0
    elif d < 0.0:
        xi = h / -d
    else:
        # q ~ 0, d >= 0, h > 0 is pure roundoff; xi = 1 is feasible exactly.
        xi = 1.0
    return float(min(1.0, xi))


def update_image(state: SegState, f: np.ndarray, alpha: np.ndarray,
                 params: ModelParams, kernel: Kernel | None = None,
                 outer: int = 0) -> tuple[np.ndarray, list[InnerRecord], bool]:
    """Run the RMSAV inner loop from the current g until the relative energy
    change drops to tol2 (or max_inner is hit, which sets the warning flag).
    """
    ctx = build_g_context(state, f, alpha, params, kernel)
    g = np.asarray(state.g, dtype=np.float64)
    e_cur = g_energy(g, ctx)[0]
    sav = SavState(z=float(np.sqrt(e_cur + ctx.shift)))
    records: list[InnerRecord] = []
    err2 = np.inf
    while err2 > params.tol2 and sav.inner_iter < params.max_inner:
        step = rmsav_step(g, sav.z, ctx, e_cur=e_cur,
                          outer=outer, inner=sav.inner_iter)
        err2 = abs(step.e_next - e_cur) / max(abs(step.e_next), np.finfo(float).tiny)
        records.append(InnerRecord(
            outer=outer, inner=sav.inner_iter, energy=step.e_next,
            fit=step.fit, idiv=step.idiv, tv=step.tv,
            z=step.z_next, z_tilde=step.z_tilde, xi=step.xi,
            g_val=step.g_val, err2=float(err2), floored=step.floored))
        g, e_cur = step.g_next, step.e_next
        sav.z, sav.xi = step.z_next, step.xi
        sav.inner_iter += 1
    hit_cap = err2 > params.tol2
    return g, records, hit_cap


# --------------------------------------------------------------------------
# partition subproblem: thresholding

def _residual_fields(g: np.ndarray, b: np.ndarray, c: np.ndarray,
                     kernel: Kernel) -> np.ndarray:
    """Stacked e_i fields sharing the three kernel passes."""
    one = ones_mass(g.shape, kernel)
    kb = convolve(b, kernel)
    kb2 = convolve(b * b, kernel)
    g2_one = g * g * one
    e = np.empty((len(c),) + g.shape)
    for i, c_i in enumerate(np.asarray(c, dtype=np.float64)):
        e[i] = np.maximum(g2_one - 2.0 * c_i * g * kb + c_i * c_i * kb2, 0.0)
    return e


def threshold_fields(e_fields: np.ndarray, u: IndicatorSet, params: ModelParams,
                     time_px: float, kernel: Kernel | None = None) -> np.ndarray:
    """Per-phase pointwise costs

        phi_i = lam_i e_i + 2 mu sqrt(pi/t) sum_{j != i} K_t * u_j,

    nonnegative by construction (asserted up to roundoff, then clamped).
    """
    kernel = kernel or heat_kernel_pixels(time_px)
    pref = 2.0 * params.mu * np.sqrt(np.pi / time_px)
    one = ones_mass(u.shape, kernel)
    phis = np.empty_like(e_fields)
    for i in range(u.n):
        others = one - convolve(u.masks[i], kernel)
        phis[i] = params.lambdas[i] * e_fields[i] + pref * others
    return np.maximum(phis, 0.0)


def threshold(phis: np.ndarray) -> IndicatorSet:
    """Assign each pixel to the phase of least cost; ties take the lowest
    index. The result is the exact binary minimizer of sum_i <u_i, phi_i>
    over the partition simplex."""
    if phis.ndim != 3 or phis.shape[0] < 2:
        raise ValueError("need at least two phase cost fields")
    labels = np.argmin(phis, axis=0)
    return IndicatorSet.from_labels(labels, phis.shape[0])


# --------------------------------------------------------------------------
# full alternating loop

def _partition_err(u_new: IndicatorSet, u_old: IndicatorSet) -> float:
    return float(np.sqrt(np.sum((u_new.masks - u_old.masks) ** 2)))


def segment(f: np.ndarray, init: IndicatorSet, params: ModelParams,
            progress=None) -> tuple[SegState, IterationLog]:
    """Alternate mean, bias, smooth-image and partition updates until the
    partition stops changing (err1 <= tol1) or max_outer is reached.

    Intensities are divided by `params.intensity_scale` for the run (the
    default weights balance the fitting and denoising forces at unit scale)
    and the returned means and smooth image are scaled back to input units.
    `progress`, if given, is called with each OuterRecord as it is produced;
    logged energies are in normalized units.
    """
    params.validate()
    if any(l <= 0 for l in params.lambdas):
        raise ValueError("segmentation requires strictly positive lambda weights")
    f = as_field(f)
    if f.min() < 0:
        raise ValueError("input image must be nonnegative")
    if init.shape != f.shape or init.n != params.n_phases:
        raise ValueError(
            f"init partition {init.n}x{init.shape} does not match "
            f"{params.n_phases} phases on image {f.shape}")
    f = f / params.intensity_scale

    alpha = gray_indicator(f, params.sigma, params.p)
    fit_kernel = gaussian_kernel(params.rho)
    time_px = params.heat_time_pixels(f.shape)
    length_kernel = heat_kernel_pixels(time_px)
    length_pref = np.sqrt(np.pi / time_px)
    ones_tau = ones_mass(f.shape, length_kernel)

    state = SegState(
        c=np.zeros(params.n_phases),
        b=np.ones_like(f),
        g=np.maximum(f, params.g_floor),
        u=init.copy(),
    )
    u_convs = np.stack([convolve(m, length_kernel) for m in state.u.masks])

    log = IterationLog(header={
        "n_phases": params.n_phases,
        "lambda": tuple(params.lambdas),
        "mu": params.mu, "gamma": params.gamma, "nu": params.nu,
        "rho": params.rho, "tau": params.tau, "tau_in_pixels": params.tau_in_pixels,
        "sigma": params.sigma, "p": params.p,
        "dt": params.dt, "c0": params.c0, "eta_relax": params.eta_relax,
        "dt_effective": params.time_step,
        "intensity_scale": params.intensity_scale,
        "eps_tv": params.eps_tv, "g_floor": params.g_floor,
        "tol1": params.tol1, "tol2": params.tol2,
        "max_outer": params.max_outer, "max_inner": params.max_inner,
        "freeze_bias": params.freeze_bias,
        "heat_time_pixels": time_px,
        "energy_shift": params.c0 + max(
            0.0, -fidelity_lower_bound(f, params.gamma, params.g_floor)),
    })

    err1 = np.inf
    k = 0
    while err1 > params.tol1 and k < params.max_outer:
        flags: list[str] = []
        state.c, mean_flags = update_means(state, params, fit_kernel)
        flags += mean_flags
        if not params.freeze_bias:
            state.b = update_bias(state, params, fit_kernel)
        state.g, inner_records, hit_cap = update_image(
            state, f, alpha, params, fit_kernel, outer=k)
        log.inners.extend(inner_records)
        if hit_cap:
            flags.append(f"inner loop hit max_inner={params.max_inner}")

        e_fields = _residual_fields(state.g, state.b, state.c, fit_kernel)
        lam_dot_old = sum(params.lambdas[i] * inner_product(state.u.masks[i], e_fields[i])
                          for i in range(state.u.n))
        len_old = length_pref * sum(
            inner_product(state.u.masks[i], ones_tau - u_convs[i])
            for i in range(state.u.n))
        eu_before = lam_dot_old + params.mu * len_old

        pref = 2.0 * params.mu * length_pref
        phis = np.maximum(
            np.stack([params.lambdas[i] * e_fields[i] + pref * (ones_tau - u_convs[i])
                      for i in range(state.u.n)]), 0.0)
        u_new = threshold(phis)

        u_convs = np.stack([convolve(m, length_kernel) for m in u_new.masks])
        lam_dot_new = sum(params.lambdas[i] * inner_product(u_new.masks[i], e_fields[i])
                          for i in range(u_new.n))
        len_new = length_pref * sum(
            inner_product(u_new.masks[i], ones_tau - u_convs[i])
            for i in range(u_new.n))
        eu_after = lam_dot_new + params.mu * len_new

        err1 = _partition_err(u_new, state.u)
        state.u = u_new

        breakdown = EnergyBreakdown.build(
            fit=lam_dot_new,
            length=params.mu * len_new,
            idiv=idiv_energy(state.g, f, params.gamma, params.g_floor),
            tv=tv_energy(state.g, alpha, params.nu, params.eps_tv),
        )
        record = OuterRecord(outer=k, energy=breakdown,
                             eu_before=float(eu_before), eu_after=float(eu_after),
                             err1=float(err1), means=tuple(float(x) for x in state.c),
                             flags=tuple(flags))
        log.outers.append(record)
        log.warnings.extend(msg for msg in mean_flags if msg not in log.warnings)
        if progress is not None:
            progress(record)
        k += 1

    if err1 > params.tol1:
        log.warnings.append(f"stopped at max_outer={params.max_outer} "
                            f"with err1={err1:.3e} > tol1={params.tol1}")
    state.c = state.c * params.intensity_scale
    state.g = state.g * params.intensity_scale
    return state, log
