"""Time discretization of the noise-shifted wave system.

The solved variable is the pair (z, zdot): the solution with the stochastic
convolution subtracted, which obeys a deterministic wave system forced by
f(u) where u = z + (projected noise convolution).  Per mode the linear flow
is an exact rotation with frequency omega = lambda**(alpha/2); two one-step
schemes differ in how the source is weighted:

* the plain trigonometric step (``stm``) freezes f over the step
  (left rectangle), giving first order in time;
* the modified step (``mstm``) integrates the source filter functions
  exactly and extrapolates with the previous source value, reaching second
  order when the solution is regular enough.

Both schemes are exact for the homogeneous problem at any step size.
"""

from dataclasses import dataclass

import numpy as np

from .convolution import ConvolutionAccumulator, corrected_convolution, leftpoint_convolution
from .errors import ConfigurationError, DivergedTrajectory
from .spectrum import Nonlinearity, SpectralField, make_nonlinearity_evaluator

__all__ = [
    "FilterSet",
    "SchemeState",
    "Problem",
    "build_filters",
    "propagator_step",
    "stm_step",
    "mstm_first_step",
    "mstm_step",
    "reconstruct_u",
    "reconstruct_v",
    "run",
]

SCHEMES = ("stm", "mstm")

# coefficient magnitude cap; a step beyond this aborts the trajectory
DIVERGENCE_CAP = 1e12

# below this omega*tau the cancellation-prone x - sin(x) switches to series
_SERIES_THRESHOLD = 1e-4


def _x_minus_sin(x):
    """x - sin(x), stable for tiny arguments (5-term nested series)."""
    series = x ** 3 / 6.0 * (1.0 - x ** 2 / 20.0 * (
        1.0 - x ** 2 / 42.0 * (1.0 - x ** 2 / 72.0 * (1.0 - x ** 2 / 110.0))))
    return np.where(x < _SERIES_THRESHOLD, series, x - np.sin(x))


@dataclass(frozen=True)
class FilterSet:
    """Per-mode step coefficients for step size tau.

    cos_tau, sin_tau rotate the homogeneous flow; psi1, psi2, psi3 weight
    the source and its backward difference in the modified scheme:

        psi1 = lambda^-alpha (1 - cos(omega tau))
        psi2 = (tau lambda^-alpha - lambda^{-3 alpha/2} sin(omega tau)) / tau
        psi3 = lambda^-alpha (1 - cos(omega tau)) / tau

    1 - cos is evaluated as 2 sin^2(x/2) and x - sin x by series below
    omega tau = 1e-4, so all three stay accurate for stiff modes and tiny
    steps alike.
    """

    tau: float
    cos_tau: np.ndarray
    sin_tau: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    psi3: np.ndarray


def build_filters(table, tau):
    """Evaluate the step coefficients for every mode of a table."""
    if tau <= 0.0:
        raise ConfigurationError(f"tau must be positive, got {tau}")
    x = table.frequencies * tau
    cos_tau = np.cos(x)
    sin_tau = np.sin(x)
    one_minus_cos = 2.0 * np.sin(x / 2.0) ** 2
    inv_alpha = table.power(-table.alpha)
    psi1 = inv_alpha * one_minus_cos
    psi2 = table.power(-1.5 * table.alpha) * _x_minus_sin(x) / tau
    psi3 = inv_alpha * one_minus_cos / tau
    return FilterSet(tau, cos_tau, sin_tau, psi1, psi2, psi3)


@dataclass
class SchemeState:
    """State of one trajectory between steps: (z, zdot) and the step index.

    prev_source holds f_N at the previous node; present exactly when the
    modified scheme has taken its first step.
    """

    z: SpectralField
    zdot: SpectralField
    step: int = 0
    prev_source: SpectralField = None
    scheme: str = "mstm"


def _require_same_table(*fields):
    table = fields[0].table
    for f in fields[1:]:
        if f.table is not table:
            raise ValueError("fields must share one ModeTable")
    return table


def propagator_step(u, v, tau):
    """Exact homogeneous flow over tau: per-mode rotation

        [[cos(omega tau), lambda^{-alpha/2} sin(omega tau)],
         [-lambda^{alpha/2} sin(omega tau), cos(omega tau)]]

    Determinant 1 per mode; preserves lambda^alpha u^2 + v^2.
    """
    table = _require_same_table(u, v)
    x = table.frequencies * tau
    c, s = np.cos(x), np.sin(x)
    lam_minus = table.power(-table.alpha / 2)
    lam_plus = table.frequencies
    u_new = c * u.coeffs + lam_minus * s * v.coeffs
    v_new = -lam_plus * s * u.coeffs + c * v.coeffs
    return SpectralField(table, u_new), SpectralField(table, v_new)


def stm_step(state, filters, f_field):
    """One plain trigonometric step with the source frozen at the left node.

    z'    = c z + lambda^{-alpha/2} s zdot + tau lambda^{-alpha/2} s f
    zdot' = -lambda^{alpha/2} s z + c zdot + tau c f
    """
    table = _require_same_table(state.z, state.zdot, f_field)
    c, s = filters.cos_tau, filters.sin_tau
    lam_minus = table.power(-table.alpha / 2)
    omega = table.frequencies
    f = f_field.coeffs
    z_new = c * state.z.coeffs + lam_minus * s * state.zdot.coeffs + filters.tau * lam_minus * s * f
    zd_new = -omega * s * state.z.coeffs + c * state.zdot.coeffs + filters.tau * c * f
    return SchemeState(SpectralField(table, z_new), SpectralField(table, zd_new),
                       state.step + 1, None, "stm")


def mstm_first_step(state, filters, f_field):
    """First step of the modified scheme (no backward difference yet).

    z1    = c z0 + lambda^{-alpha/2} s zdot0 + psi1 f0
    zdot1 = -lambda^{alpha/2} s z0 + c zdot0 + lambda^{-alpha/2} s f0
    """
    if state.step != 0:
        raise ValueError(f"first step called at step {state.step}")
    table = _require_same_table(state.z, state.zdot, f_field)
    c, s = filters.cos_tau, filters.sin_tau
    lam_minus = table.power(-table.alpha / 2)
    omega = table.frequencies
    f = f_field.coeffs
    z_new = c * state.z.coeffs + lam_minus * s * state.zdot.coeffs + filters.psi1 * f
    zd_new = -omega * s * state.z.coeffs + c * state.zdot.coeffs + lam_minus * s * f
    return SchemeState(SpectralField(table, z_new), SpectralField(table, zd_new),
                       1, f_field, "mstm")


def mstm_step(state, filters, f_field, prev_f_field=None):
    """Modified step for m >= 1: source plus backward-difference filters.

    z'    = c z + lambda^{-alpha/2} s zdot + psi1 f_m + psi2 (f_m - f_{m-1})
    zdot' = -lambda^{alpha/2} s z + c zdot + lambda^{-alpha/2} s f_m
            + psi3 (f_m - f_{m-1})
    """
    if state.step < 1:
        raise ValueError("modified step for m >= 1; take mstm_first_step first")
    prev = prev_f_field if prev_f_field is not None else state.prev_source
    if prev is None:
        raise ValueError("previous source value missing")
    table = _require_same_table(state.z, state.zdot, f_field, prev)
    c, s = filters.cos_tau, filters.sin_tau
    lam_minus = table.power(-table.alpha / 2)
    omega = table.frequencies
    f = f_field.coeffs
    df = f - prev.coeffs
    z_new = (c * state.z.coeffs + lam_minus * s * state.zdot.coeffs
             + filters.psi1 * f + filters.psi2 * df)
    zd_new = (-omega * s * state.z.coeffs + c * state.zdot.coeffs
              + lam_minus * s * f + filters.psi3 * df)
    return SchemeState(SpectralField(table, z_new), SpectralField(table, zd_new),
                       state.step + 1, f_field, "mstm")


def _convolution_at(plan, bundle, m, kernel):
    """Direct-sum convolution at grid time t_m (zero at m = 0)."""
    table = plan.table
    if m == 0 or plan.postprocess_modes == 0:
        return SpectralField(table, np.zeros(len(table)))
    kernel_plan = plan if plan.kernel == kernel else _with_kernel(plan, kernel)
    if kernel_plan.quadrature == "corrected" and (kernel == "sine" or plan.correct_cosine):
        return corrected_convolution(kernel_plan, bundle, m - 1)
    return leftpoint_convolution(kernel_plan, bundle, m - 1)


def _with_kernel(plan, kernel):
    from dataclasses import replace
    return replace(plan, kernel=kernel)


def reconstruct_u(state, plan, bundle, m):
    """u at grid time t_m: z_m plus the projected sine-kernel convolution."""
    conv = _convolution_at(plan, bundle, m, "sine")
    return SpectralField(state.z.table, state.z.coeffs + conv.coeffs)


def reconstruct_v(state, plan, bundle, m):
    """v at grid time t_m: zdot_m plus the projected cosine-kernel convolution."""
    conv = _convolution_at(plan, bundle, m, "cosine")
    return SpectralField(state.zdot.table, state.zdot.coeffs + conv.coeffs)


@dataclass(frozen=True)
class Problem:
    """A fully specified solve on one mode table.

    galerkin_modes is the dimension N of the solved subspace (the source is
    projected there; z starts as the projection of the initial data).
    active_modes limits the arrays to a prefix of the table (defaults to the
    whole table); the convolution plan's N1 must fit inside it.
    """

    table: object
    galerkin_modes: int
    u0: np.ndarray
    v0: np.ndarray
    source: Nonlinearity
    horizon: float
    active_modes: int = 0

    def __post_init__(self):
        n_active = self.active_modes or len(self.table)
        if not 0 < n_active <= len(self.table):
            raise ConfigurationError("active_modes outside the table")
        if not 0 < self.galerkin_modes <= n_active:
            raise ConfigurationError("galerkin_modes must lie in (0, active_modes]")
        object.__setattr__(self, "active_modes", n_active)


def run(problem, plan, bundle, scheme="mstm", snapshots=None, oversampling=2):
    """Advance one trajectory and return snapshots {step: (u, v)}.

    The bundle's grid must end at the problem horizon (tau = T / M).  At
    every node the source is evaluated on the reconstructed u (z plus the
    projected convolution), projected onto the Galerkin subspace, and fed to
    the chosen scheme; convolutions advance through rotating accumulators.
    Snapshots default to the final step only.  A coefficient above 1e12
    aborts with DivergedTrajectory.
    """
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}")
    if plan.quadrature == "exact_white":
        raise ConfigurationError("trajectory runs need a step quadrature "
                                 "(leftpoint or corrected)")
    steps = bundle.config.steps
    tau = bundle.tau
    if abs(steps * tau - problem.horizon) > 1e-12 * max(1.0, problem.horizon):
        raise ConfigurationError("bundle grid does not end at the problem horizon")

    table = problem.table
    n_act = problem.active_modes
    n_gal = problem.galerkin_modes
    if plan.postprocess_modes > n_act:
        raise ConfigurationError("plan postprocess modes exceed active modes")

    x = table.frequencies[:n_act] * tau
    cos_t, sin_t = np.cos(x), np.sin(x)
    lam_minus = table.power(-table.alpha / 2)[:n_act]
    omega = table.frequencies[:n_act]
    one_minus_cos = 2.0 * np.sin(x / 2.0) ** 2
    psi1 = table.power(-table.alpha)[:n_act] * one_minus_cos
    psi2 = table.power(-1.5 * table.alpha)[:n_act] * _x_minus_sin(x) / tau
    psi3 = table.power(-table.alpha)[:n_act] * one_minus_cos / tau

    z = problem.u0[:n_act].astype(float, copy=True)
    zd = problem.v0[:n_act].astype(float, copy=True)
    z[n_gal:] = 0.0
    zd[n_gal:] = 0.0

    source = problem.source or Nonlinearity.zero()
    evaluate = make_nonlinearity_evaluator(source, table, oversampling)
    accum = ConvolutionAccumulator(plan, tau)
    n1 = plan.postprocess_modes

    wanted = {steps} if snapshots is None else {int(s) for s in snapshots}
    for s in wanted:
        if not 0 <= s <= steps:
            raise ConfigurationError(f"snapshot step {s} outside 0..{steps}")
    out = {}

    conv_s = np.zeros(n_act)
    conv_c = np.zeros(n_act)

    def record(step_index):
        accum.sine_value(out=conv_s)
        accum.cosine_value(out=conv_c)
        u_full = np.zeros(len(table))
        v_full = np.zeros(len(table))
        u_full[:n_act] = z
        v_full[:n_act] = zd
        u_full[:n1] += conv_s[:n1]
        v_full[:n1] += conv_c[:n1]
        out[step_index] = (SpectralField(table, u_full),
                           SpectralField(table, v_full))

    if 0 in wanted:
        record(0)

    prev_f = None
    for m in range(steps):
        u_now = z.copy()
        if n1:
            accum.sine_value(out=conv_s)
            u_now[:n1] += conv_s[:n1]
        f_now = evaluate(u_now)
        f_now[n_gal:] = 0.0

        if scheme == "stm":
            z, zd = (cos_t * z + lam_minus * sin_t * zd + tau * lam_minus * sin_t * f_now,
                     -omega * sin_t * z + cos_t * zd + tau * cos_t * f_now)
        elif m == 0:
            z, zd = (cos_t * z + lam_minus * sin_t * zd + psi1 * f_now,
                     -omega * sin_t * z + cos_t * zd + lam_minus * sin_t * f_now)
        else:
            df = f_now - prev_f
            z, zd = (cos_t * z + lam_minus * sin_t * zd + psi1 * f_now + psi2 * df,
                     -omega * sin_t * z + cos_t * zd + lam_minus * sin_t * f_now + psi3 * df)
        prev_f = f_now

        peak = np.max(np.abs(z))
        if not peak < DIVERGENCE_CAP:
            raise DivergedTrajectory(m + 1, peak)

        accum.push(bundle.increments[:, m], bundle.weighted[:, m])
        if (m + 1) in wanted:
            record(m + 1)

    return out
