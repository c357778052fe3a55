"""Per-mode Gaussian noise data for the time schemes.

For each eigenmode the schemes consume, per time step j, the pair

    increment  db_j = b_H(t_{j+1}) - b_H(t_j)
    weighted   W_j  = int_{t_j}^{t_{j+1}} (s - t_j) db_H(s)

of functionals of a fractional Brownian motion b_H with Hurst index
1/2 <= H < 1.  For H = 1/2 the pairs are independent across steps with an
explicit 2x2 covariance; for H > 1/2 the full joint covariance of the
stacked vector (db_0..db_{M-1}, W_0..W_{M-1}) is assembled from closed
forms and sampled through its Cholesky factor.

Every closed form used here is validated (in the test suite and by
``fracwave validate-noise``) against ``covariance_bruteforce``, a direct
quadrature of the fBm double-integral identity

    E[int f db_H int g db_H] = H(2H-1) iint f(s) g(t) |s-t|^{2H-2} ds dt,

which is kept independent of the closed-form algebra.
"""

import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, NumericalError

__all__ = [
    "NoiseConfig",
    "NoiseBundle",
    "fbm_covariance",
    "increment_cov",
    "weighted_cov_diag",
    "weighted_cov_offdiag",
    "cross_cov",
    "covariance_bruteforce",
    "build_joint_covariance",
    "joint_cholesky",
    "sample_bundle",
    "coarsen",
    "mode_amplitudes",
    "trajectory_seed",
    "dump_bundle",
    "load_bundle",
]

logger = logging.getLogger("fracwave.noise")


@dataclass(frozen=True)
class NoiseConfig:
    """Sampling configuration for one noise realization.

    hurst in [1/2, 1); steps is the finest grid size M; horizon is T;
    n_modes independent scalar paths; rho the amplitude decay exponent
    (sigma_i = lambda_i**-rho unless sigma_rule overrides); seed keys the
    counter-based generator.
    """

    hurst: float
    steps: int
    horizon: float
    n_modes: int
    rho: float = 0.0
    seed: int = 0
    sigma_rule: object = None

    def __post_init__(self):
        if not 0.5 <= self.hurst < 1.0:
            raise ConfigurationError(f"hurst must lie in [1/2, 1), got {self.hurst}")
        if self.steps < 1:
            raise ConfigurationError(f"steps must be >= 1, got {self.steps}")
        if self.horizon <= 0.0:
            raise ConfigurationError(f"horizon must be positive, got {self.horizon}")
        if self.n_modes < 1:
            raise ConfigurationError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.rho < 0.0:
            raise ConfigurationError(f"rho must be >= 0, got {self.rho}")

    @property
    def tau(self):
        return self.horizon / self.steps


@dataclass
class NoiseBundle:
    """One sampled realization: per-mode increments and weighted integrals.

    increments and weighted are (n_modes, steps) arrays on the grid
    t_j = j * tau, tau = horizon / steps.
    """

    config: NoiseConfig
    increments: np.ndarray
    weighted: np.ndarray

    @property
    def tau(self):
        return self.config.tau


# ---------------------------------------------------------------------------
# closed-form covariances
# ---------------------------------------------------------------------------

def fbm_covariance(t, s, hurst):
    """E[b_H(t) b_H(s)] = (|t|^{2H} + |s|^{2H} - |t-s|^{2H}) / 2."""
    h2 = 2.0 * hurst
    return 0.5 * (abs(t) ** h2 + abs(s) ** h2 - abs(t - s) ** h2)


def increment_cov(j, k, tau, hurst):
    """E[db_j db_k] for unit-amplitude fBm increments on a uniform grid."""
    q = abs(j - k)
    h2 = 2.0 * hurst
    return 0.5 * tau ** h2 * ((q + 1) ** h2 + abs(q - 1) ** h2 - 2.0 * q ** h2)


def weighted_cov_diag(tau, hurst):
    """E[W_j^2] = tau^{2H+2} / (2H+2); reduces to tau^3/3 at H = 1/2."""
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    return tau ** (2.0 * hurst + 2.0) / (2.0 * hurst + 2.0)


def weighted_cov_offdiag(j, k, tau, hurst):
    """E[W_j W_k] for j != k; zero at H = 1/2 (independent increments).

    Three-term closed form obtained by integrating the fBm kernel against
    both ramp weights; symmetric in (j, k).
    """
    if j == k:
        raise ValueError("off-diagonal form needs j != k")
    if hurst == 0.5:
        return 0.0
    q = abs(j - k)
    h2 = 2.0 * hurst
    pref = tau ** (2.0 + h2)
    return (
        -0.5 * pref * q ** h2
        + pref / (2.0 * (h2 + 1.0)) * ((q + 1) ** (h2 + 1.0) - (q - 1) ** (h2 + 1.0))
        - pref / (2.0 * (h2 + 1.0) * (h2 + 2.0))
        * ((q + 1) ** (h2 + 2.0) - 2.0 * q ** (h2 + 2.0) + (q - 1) ** (h2 + 2.0))
    )


def cross_cov(j, k, tau, hurst):
    """E[db_j W_k], the increment / weighted-integral cross covariance.

    Not reducible to the other closed forms; derived by integrating the
    kernel |s-t|^{2H-2} against a unit weight on step j and a ramp weight on
    step k (both orientations), and gated behind covariance_bruteforce in the
    validation suite before use.  At H = 1/2 only the same-step term tau^2/2
    survives.
    """
    h2 = 2.0 * hurst
    if hurst == 0.5:
        return tau ** 2 / 2.0 if j == k else 0.0
    pref = tau ** (h2 + 1.0)
    if j == k:
        return 0.5 * pref
    if j > k:
        q = j - k
        return pref * (
            -0.5 * (q ** h2 - (q - 1) ** h2)
            + ((q + 1) ** (h2 + 1.0) - 2.0 * q ** (h2 + 1.0) + (q - 1) ** (h2 + 1.0))
            / (2.0 * (h2 + 1.0))
        )
    q = k - j
    second_diff = (q + 1) ** (h2 + 1.0) - 2.0 * q ** (h2 + 1.0) + (q - 1) ** (h2 + 1.0)
    t1 = (h2 - 1.0) / (2.0 * (h2 + 1.0)) * second_diff
    t2 = -hurst * (
        ((q + 1) ** (h2 + 1.0) - q ** (h2 + 1.0)) / (h2 + 1.0)
        - ((q + 1) ** h2 - q ** h2) / h2
    )
    t3 = hurst / (h2 + 1.0) * (q ** (h2 + 1.0) - (q - 1) ** (h2 + 1.0))
    return pref * (t1 + t2 + t3)


# ---------------------------------------------------------------------------
# brute-force oracle
# ---------------------------------------------------------------------------

def _ramp_or_one(x, kind, left):
    if kind == "one":
        return np.ones_like(x)
    if kind == "ramp":
        return x - left
    return kind(x)  # callable weight (used by the convolution validators)


def _rotated_piece(a0, a1, b0, b1, wa, wb, hurst, lo, hi, n):
    """Midpoint evaluation over u = s - t in [lo, hi] (one smooth piece).

    The inner t-integral is a uniform midpoint rule; the outer u-integral is
    a midpoint rule after the power substitution u = L x^beta with
    beta (2H-1) = 3, which absorbs the |u|^{2H-2} singularity whenever the
    piece touches u = 0 so that no node hits s = t.
    """
    length = hi - lo
    x = (np.arange(n) + 0.5) / n
    if lo == 0.0 or hi == 0.0:
        beta = 3.0 / (2.0 * hurst - 1.0)
        mag = length * x ** beta
        u = mag if lo == 0.0 else -mag
        du = length * beta * x ** (beta - 1.0) / n
    else:
        u = lo + length * x
        du = np.full(n, length / n)
    t_lo = np.maximum(b0, a0 - u)
    t_hi = np.minimum(b1, a1 - u)
    t_len = np.maximum(t_hi - t_lo, 0.0)
    m = max(n // 3, 8)
    xt = (np.arange(m) + 0.5) / m
    t = t_lo[:, None] + t_len[:, None] * xt[None, :]
    s = t + u[:, None]
    vals = _ramp_or_one(s, wa, a0) * _ramp_or_one(t, wb, b0)
    inner = vals.sum(axis=1) * (t_len / m)
    return float(np.sum(np.abs(u) ** (2.0 * hurst - 2.0) * inner * du))


def _fbm_double_integral(interval_a, interval_b, wa, wb, hurst, substeps):
    """H(2H-1) iint wa(s) wb(t) |s-t|^{2H-2} over interval_a x interval_b.

    Composite midpoint rule in rotated coordinates, split at the kink points
    of the trapezoid geometry, with one Richardson extrapolation of the h^2
    midpoint term (evaluations at substeps and substeps/2).
    """
    a0, a1 = interval_a
    b0, b1 = interval_b
    u_min, u_max = a0 - b1, a1 - b0
    kinks = sorted({a0 - b1, a0 - b0, a1 - b1, a1 - b0, 0.0})
    pts = [p for p in kinks if u_min <= p <= u_max]
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        if hi <= lo:
            continue
        fine = _rotated_piece(a0, a1, b0, b1, wa, wb, hurst, lo, hi, substeps)
        half = _rotated_piece(a0, a1, b0, b1, wa, wb, hurst, lo, hi, substeps // 2)
        total += (4.0 * fine - half) / 3.0
    return hurst * (2.0 * hurst - 1.0) * total


def covariance_bruteforce(interval_a, interval_b, weight_a, weight_b, hurst, substeps=1500):
    """Quadrature oracle for all closed-form covariances.

    weight_a, weight_b in {'one', 'ramp'}: 'ramp' means (s - start) on its
    own interval.  Valid for 1/2 < H < 1; at H = 1/2 the kernel degenerates
    and the Ito isometry must be used instead, so this raises.
    """
    if hurst == 0.5:
        raise ValueError("H = 1/2 has independent increments; use the Ito isometry")
    if not 0.5 < hurst < 1.0:
        raise ConfigurationError(f"hurst must lie in (1/2, 1), got {hurst}")
    if substeps < 100:
        raise ConfigurationError(f"substeps must be >= 100, got {substeps}")
    for w in (weight_a, weight_b):
        if w not in ("one", "ramp"):
            raise ConfigurationError(f"weight must be 'one' or 'ramp', got {w!r}")
    return _fbm_double_integral(interval_a, interval_b, weight_a, weight_b, hurst, substeps)


# ---------------------------------------------------------------------------
# joint covariance and sampling
# ---------------------------------------------------------------------------

def build_joint_covariance(steps, tau, hurst):
    """Covariance of the stacked vector (db_0..db_{M-1}, W_0..W_{M-1}).

    All three blocks are stationary in the lag j - k, so they are assembled
    as Toeplitz matrices from the closed forms.  At H = 1/2 the matrix is
    block 2x2 per step (zero off-step entries), kept for completeness.
    """
    lags = np.arange(steps)
    inc = np.array([increment_cov(q, 0, tau, hurst) for q in lags])
    wdiag = weighted_cov_diag(tau, hurst)
    woff = np.array([wdiag] + [weighted_cov_offdiag(q, 0, tau, hurst) for q in lags[1:]])
    cross_after = np.array([cross_cov(q, 0, tau, hurst) for q in lags])
    cross_before = np.array([cross_cov(0, q, tau, hurst) for q in lags])
    bb = sla.toeplitz(inc)
    ww = sla.toeplitz(woff)
    bw = sla.toeplitz(cross_after, cross_before)  # bw[j, k] = E[db_j W_k]
    out = np.block([[bb, bw], [bw.T, ww]])
    return 0.5 * (out + out.T)


_chol_cache = OrderedDict()
_CHOL_CACHE_MAX = 4


def joint_cholesky(steps, tau, hurst):
    """Lower Cholesky factor of build_joint_covariance, cached per (M, tau, H).

    If the factorization fails, a single jitter of 1e-14 * trace / (2M) is
    added to the diagonal (logged); a second failure raises NumericalError.
    """
    key = (steps, float(tau), float(hurst))
    cached = _chol_cache.get(key)
    if cached is not None:
        _chol_cache.move_to_end(key)
        return cached
    sigma = build_joint_covariance(steps, tau, hurst)
    try:
        factor = sla.cholesky(sigma, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        jitter = 1e-14 * np.trace(sigma) / (2 * steps)
        logger.warning("joint covariance not PD at M=%d, tau=%g, H=%g; adding jitter %g",
                       steps, tau, hurst, jitter)
        sigma[np.diag_indices_from(sigma)] += jitter
        try:
            factor = sla.cholesky(sigma, lower=True, check_finite=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                f"joint covariance factorization failed after jitter "
                f"(M={steps}, tau={tau}, H={hurst})") from exc
    _chol_cache[key] = factor
    while len(_chol_cache) > _CHOL_CACHE_MAX:
        _chol_cache.popitem(last=False)
    return factor


def trajectory_seed(master_seed, trajectory):
    """Derived per-trajectory seed; stable across platforms and runs."""
    ss = np.random.SeedSequence((int(master_seed), int(trajectory)))
    return int(ss.generate_state(1, np.uint64)[0])


def _generator(seed):
    # counter-based generator: per-mode rows occupy disjoint, deterministic
    # segments of the Philox counter stream, so draws for mode i do not
    # depend on how many modes follow it
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def sample_bundle(config):
    """Draw one NoiseBundle realization.

    Each mode consumes 2M standard normals laid out (increment block,
    weighted block).  H = 1/2 uses the per-step 2x2 factorization
    [[tau, tau^2/2], [tau^2/2, tau^3/3]]; H > 1/2 multiplies by the joint
    Cholesky factor.  Deterministic given config.seed, with mode i's draws
    independent of n_modes (row-major prefix property).
    """
    rng = _generator(config.seed)
    m = config.steps
    tau = config.tau
    draws = rng.standard_normal((config.n_modes, 2 * m))
    if config.hurst == 0.5:
        xi1 = draws[:, :m]
        xi2 = draws[:, m:]
        increments = np.sqrt(tau) * xi1
        weighted = tau ** 1.5 * (0.5 * xi1 + xi2 / (2.0 * np.sqrt(3.0)))
    else:
        factor = joint_cholesky(m, tau, config.hurst)
        stacked = factor @ draws.T
        increments = np.ascontiguousarray(stacked[:m].T)
        weighted = np.ascontiguousarray(stacked[m:].T)
    return NoiseBundle(config, increments, weighted)


def coarsen(bundle, factor):
    """Aggregate a bundle onto a grid coarser by an integer factor, pathwise.

    Over a coarse step J starting at t_J, made of fine steps j with offsets
    o_j = t_j - t_J:

        db_J = sum db_j
        W_J  = sum (W_j + o_j db_j)

    both exact identities of the underlying path, so coarse and fine solvers
    see consistent noise.  factor = 1 returns the bundle unchanged.
    """
    if factor == 1:
        return bundle
    m = bundle.config.steps
    if factor < 1 or m % factor != 0:
        raise ConfigurationError(f"factor {factor} does not divide {m} steps")
    coarse_steps = m // factor
    tau_fine = bundle.tau
    inc = bundle.increments.reshape(bundle.config.n_modes, coarse_steps, factor)
    wgt = bundle.weighted.reshape(bundle.config.n_modes, coarse_steps, factor)
    offsets = (np.arange(factor) * tau_fine)[None, None, :]
    config = replace(bundle.config, steps=coarse_steps)
    return NoiseBundle(config, inc.sum(axis=2), (wgt + offsets * inc).sum(axis=2))


def mode_amplitudes(config, eigenvalues):
    """Per-mode noise amplitudes sigma_i.

    Defaults to lambda_i**-rho; a sigma_rule callable may tighten but not
    exceed that envelope (checked with 1e-12 slack).
    """
    envelope = eigenvalues ** (-config.rho)
    if config.sigma_rule is None:
        return envelope
    sig = np.asarray(config.sigma_rule(eigenvalues), dtype=float)
    if sig.shape != eigenvalues.shape:
        raise ConfigurationError("sigma_rule returned wrong shape")
    if np.any(sig <= 0.0) or np.any(sig > envelope * (1.0 + 1e-12)):
        raise ConfigurationError("sigma_rule must satisfy 0 < sigma_i <= lambda_i**-rho")
    return sig


# ---------------------------------------------------------------------------
# binary dump / load (cross-implementation noise replay)
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<ddqqq")  # hurst, horizon, steps, n_modes, seed


def dump_bundle(bundle, path):
    """Write a bundle as little-endian binary.

    Layout: header (H, T as float64; M, n_modes, seed as int64), then the
    full increment block, then the full weighted block, both row-major
    (mode-major) float64.  Amplitude parameters are not serialized.
    """
    cfg = bundle.config
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(cfg.hurst, cfg.horizon, cfg.steps, cfg.n_modes, cfg.seed))
        fh.write(np.ascontiguousarray(bundle.increments, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bundle.weighted, dtype="<f8").tobytes())


def load_bundle(path):
    """Read a bundle written by dump_bundle."""
    with open(path, "rb") as fh:
        hurst, horizon, steps, n_modes, seed = _HEADER.unpack(fh.read(_HEADER.size))
        count = steps * n_modes
        inc = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(n_modes, steps).copy()
        wgt = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(n_modes, steps).copy()
    config = NoiseConfig(hurst, steps, horizon, n_modes, seed=seed)
    return NoiseBundle(config, inc, wgt)
