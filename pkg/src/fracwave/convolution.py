"""Noise convolutions: the stochastic integrals

    int_0^t lambda**(-alpha/2) sin(lambda**(alpha/2) (t - s)) db_H(s)   (sine)
    int_0^t cos(lambda**(alpha/2) (t - s)) db_H(s)                      (cosine)

per mode, scaled by the mode amplitude sigma and projected onto the first
N1 modes (N1 may exceed the Galerkin dimension: the convolution is cheap to
resolve further, which lifts the spatial accuracy of the reconstructed
solution).

Three evaluation routes:

* exact_white_sample    - direct draw at a single time from the explicit
                          variance, white noise only;
* leftpoint_convolution - kernel frozen at the left node of each step;
* corrected_convolution - left-point value plus a first-order kernel
                          correction paid from the weighted integrals W,
                          raising the step-size order from ~1 to ~2.

``ConvolutionAccumulator`` advances the quadrature sums across a uniform
grid in O(modes) per step via the angle-addition recurrence, which is what
the time stepper uses; the direct-sum operations stay the reference path.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .noise import _fbm_double_integral
from .spectrum import SpectralField

__all__ = [
    "ConvolutionPlan",
    "ConvolutionAccumulator",
    "gamma_bar",
    "postprocess_mode_count",
    "exact_white_sample",
    "white_sample_variance",
    "leftpoint_convolution",
    "corrected_convolution",
    "convolution_second_moment",
]

logger = logging.getLogger("fracwave.convolution")

QUADRATURES = ("exact_white", "leftpoint", "corrected")
KERNELS = ("sine", "cosine")


def gamma_bar(alpha, rho, dim):
    """Regularity exponent alpha + 2 rho - dim/2 (vanishing-epsilon value)."""
    return alpha + 2.0 * rho - dim / 2.0


def postprocess_mode_count(galerkin_modes, gamma, alpha):
    """Convolution mode count N1 = round(N**((gamma + alpha) / gamma)).

    Resolving the convolution on N1 > N modes balances its truncation error
    against the Galerkin error of the smooth part.  Requires gamma > 0.
    """
    if gamma <= 0.0:
        raise ConfigurationError(f"postprocessing needs gamma > 0, got {gamma}")
    return int(round(galerkin_modes ** ((gamma + alpha) / gamma)))


@dataclass(frozen=True)
class ConvolutionPlan:
    """How to evaluate the noise convolution for a given mode table.

    amplitudes are the per-mode sigma factors; postprocess_modes is N1,
    clamped to the table length (clamping logged).  correct_cosine switches
    the cosine kernel to its analogous W-corrected quadrature (the default
    keeps the plain left-point rule there).
    """

    table: object
    amplitudes: np.ndarray
    postprocess_modes: int
    quadrature: str = "corrected"
    kernel: str = "sine"
    correct_cosine: bool = False

    def __post_init__(self):
        if self.quadrature not in QUADRATURES:
            raise ConfigurationError(f"unknown quadrature {self.quadrature!r}")
        if self.kernel not in KERNELS:
            raise ConfigurationError(f"unknown kernel {self.kernel!r}")
        if self.amplitudes.shape[0] != len(self.table):
            raise ConfigurationError("amplitudes length must match the table")
        if self.postprocess_modes > len(self.table):
            logger.info("clamping postprocess modes %d to table length %d",
                        self.postprocess_modes, len(self.table))
            object.__setattr__(self, "postprocess_modes", len(self.table))
        if self.postprocess_modes < 0:
            raise ConfigurationError("postprocess_modes must be nonnegative")


def white_sample_variance(omega, horizon):
    """Variance of int_0^T sin(omega (T - s)) db(s): T/2 - sin(2 omega T)/(4 omega)."""
    return horizon / 2.0 - np.sin(2.0 * omega * horizon) / (4.0 * omega)


def exact_white_sample(plan, horizon, rng):
    """Draw the sine-kernel convolution at time T exactly (white noise only).

    Per mode i < N1 the value is centered normal with variance
    sigma_i^2 lambda_i^{-alpha} (T/2 - sin(2 omega_i T) / (4 omega_i)),
    omega_i = lambda_i^{alpha/2}.  Modes beyond N1 are zero.
    """
    if plan.kernel != "sine":
        raise ValueError("exact white sampling is defined for the sine kernel")
    table = plan.table
    n1 = plan.postprocess_modes
    omega = table.frequencies[:n1]
    var = (plan.amplitudes[:n1] ** 2
           * table.power(-table.alpha)[:n1]
           * white_sample_variance(omega, horizon))
    coeffs = np.zeros(len(table))
    coeffs[:n1] = rng.standard_normal(n1) * np.sqrt(var)
    return SpectralField(table, coeffs)


def _check_step(bundle, m):
    if not 0 <= m < bundle.config.steps:
        raise ValueError(f"step index {m} outside bundle grid of {bundle.config.steps} steps")


def leftpoint_convolution(plan, bundle, m):
    """Left-point quadrature of the convolution at time t_{m+1}.

    sine kernel:   sigma lambda^{-alpha/2} sum_{j<=m} sin(omega (t_{m+1}-t_j)) db_j
    cosine kernel: sigma sum_{j<=m} cos(omega (t_{m+1}-t_j)) db_j
    """
    _check_step(bundle, m)
    table = plan.table
    n1 = plan.postprocess_modes
    tau = bundle.tau
    omega = table.frequencies[:n1]
    args = omega[:, None] * (tau * (m + 1 - np.arange(m + 1)))[None, :]
    inc = bundle.increments[:n1, : m + 1]
    coeffs = np.zeros(len(table))
    if plan.kernel == "sine":
        coeffs[:n1] = (plan.amplitudes[:n1] * table.power(-table.alpha / 2)[:n1]
                       * np.sum(np.sin(args) * inc, axis=1))
    else:
        coeffs[:n1] = plan.amplitudes[:n1] * np.sum(np.cos(args) * inc, axis=1)
    return SpectralField(table, coeffs)


def corrected_convolution(plan, bundle, m):
    """Left-point quadrature plus the first-order kernel correction.

    sine kernel, per mode i < N1:

        sigma sum_{j<=m} [ lambda^{-alpha/2} sin(omega (t_{m+1}-t_j)) db_j
                           - cos(omega (t_{m+1}-t_j)) W_j ]

    (the in-step kernel slope of lambda^{-alpha/2} sin is exactly -cos, so
    the correction weight is amplitude 1).  The cosine-kernel analogue adds
    + lambda^{alpha/2} sin(.) W_j and is opt-in via plan.correct_cosine.
    """
    _check_step(bundle, m)
    if bundle.weighted is None:
        raise ValueError("bundle carries no weighted integrals")
    table = plan.table
    n1 = plan.postprocess_modes
    tau = bundle.tau
    omega = table.frequencies[:n1]
    args = omega[:, None] * (tau * (m + 1 - np.arange(m + 1)))[None, :]
    inc = bundle.increments[:n1, : m + 1]
    wgt = bundle.weighted[:n1, : m + 1]
    coeffs = np.zeros(len(table))
    if plan.kernel == "sine":
        coeffs[:n1] = plan.amplitudes[:n1] * (
            table.power(-table.alpha / 2)[:n1] * np.sum(np.sin(args) * inc, axis=1)
            - np.sum(np.cos(args) * wgt, axis=1))
    else:
        if not plan.correct_cosine:
            raise ValueError("corrected cosine quadrature is opt-in; set correct_cosine")
        coeffs[:n1] = plan.amplitudes[:n1] * (
            np.sum(np.cos(args) * inc, axis=1)
            + table.power(table.alpha / 2)[:n1] * np.sum(np.sin(args) * wgt, axis=1))
    return SpectralField(table, coeffs)


def convolution_second_moment(eigenvalue, alpha, horizon, hurst, substeps=400):
    """E[(int_0^T lambda^{-alpha/2} sin(omega (T-s)) db_H)^2] for one mode.

    White noise uses the Ito isometry in closed form; H > 1/2 evaluates the
    double integral with the oscillatory kernel numerically (substeps per
    axis, adequate for moderate omega T).  Validation oracle for the
    samplers and quadratures; not used in the solver loop.
    """
    omega = eigenvalue ** (alpha / 2.0)
    scale = eigenvalue ** (-alpha)
    if horizon == 0.0:
        return 0.0
    if hurst == 0.5:
        return scale * white_sample_variance(omega, horizon)
    if substeps < 200:
        raise ConfigurationError(f"substeps must be >= 200 for H > 1/2, got {substeps}")

    def kernel(s):
        return np.sin(omega * (horizon - s))

    return scale * _fbm_double_integral((0.0, horizon), (0.0, horizon),
                                        kernel, kernel, hurst, substeps)


def white_step_innovation_chol(omega, tau):
    """2x2 Cholesky factors of one exact white-noise convolution step.

    Over a step of length tau the pair (int sin(omega (t+ - s)) db,
    int cos(omega (t+ - s)) db) is Gaussian with

        Var_s = tau/2 - sin(2 omega tau)/(4 omega)
        Var_c = tau/2 + sin(2 omega tau)/(4 omega)
        Cov   = sin(omega tau)^2 / (2 omega)

    Returns (l11, l21, l22) with [sin; cos] = [[l11, 0], [l21, l22]] xi.
    """
    var_s = tau / 2.0 - np.sin(2.0 * omega * tau) / (4.0 * omega)
    var_c = tau / 2.0 + np.sin(2.0 * omega * tau) / (4.0 * omega)
    cov = np.sin(omega * tau) ** 2 / (2.0 * omega)
    l11 = np.sqrt(var_s)
    l21 = cov / l11
    l22 = np.sqrt(np.maximum(var_c - l21 ** 2, 0.0))
    return l11, l21, l22


class ConvolutionAccumulator:
    """Rotating quadrature sums for all grid times of one trajectory.

    Tracks, over the first N1 modes and for the current grid time t_m,

        A = sum_j sin(omega (t_m - t_j)) db_j    B = sum_j cos(...) db_j
        C = sum_j sin(omega (t_m - t_j)) W_j     D = sum_j cos(...) W_j

    so sine/cosine, left-point/corrected values at t_m are O(N1) reads, and
    ``push`` advances t_m -> t_{m+1} by the angle-addition recurrence.
    Matches the direct sums to rounding.
    """

    def __init__(self, plan, tau):
        self.plan = plan
        n1 = plan.postprocess_modes
        omega = plan.table.frequencies[:n1]
        self._cos = np.cos(omega * tau)
        self._sin = np.sin(omega * tau)
        self._amp = plan.amplitudes[:n1]
        self._amp_sine = self._amp * plan.table.power(-plan.table.alpha / 2)[:n1]
        self._amp_cos_corr = self._amp * plan.table.power(plan.table.alpha / 2)[:n1]
        self._a = np.zeros(n1)
        self._b = np.zeros(n1)
        self._c = np.zeros(n1)
        self._d = np.zeros(n1)

    def push(self, increments, weighted):
        """Absorb step data (db_m, W_m) and rotate to the next grid time."""
        c, s = self._cos, self._sin
        b_new = self._b + increments[: self._b.shape[0]]
        d_new = self._d + weighted[: self._d.shape[0]]
        self._a, self._b = c * self._a + s * b_new, c * b_new - s * self._a
        self._c, self._d = c * self._c + s * d_new, c * d_new - s * self._c

    def sine_value(self, out=None):
        """sigma-scaled sine-kernel convolution at the current grid time."""
        n1 = self._a.shape[0]
        if out is None:
            out = np.zeros(len(self.plan.table))
        if self.plan.quadrature == "corrected":
            out[:n1] = self._amp_sine * self._a - self._amp * self._d
        else:
            out[:n1] = self._amp_sine * self._a
        return out

    def cosine_value(self, out=None):
        """sigma-scaled cosine-kernel convolution at the current grid time."""
        n1 = self._b.shape[0]
        if out is None:
            out = np.zeros(len(self.plan.table))
        if self.plan.quadrature == "corrected" and self.plan.correct_cosine:
            out[:n1] = self._amp * self._b + self._amp_cos_corr * self._c
        else:
            out[:n1] = self._amp * self._b
        return out
