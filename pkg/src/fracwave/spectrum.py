"""Dirichlet sine eigenbasis on (0,1)^d, fractional operator powers, and
pseudo-spectral evaluation of pointwise nonlinearities.

Everything is diagonal in the eigenbasis: a field is a coefficient vector
against the L2-normalized eigenfunctions (sqrt(2) sin(i pi x) in 1D,
2 sin(i pi x1) sin(j pi x2) in 2D), and the fractional Laplacian acts by
raising eigenvalues to a power.  Modes are kept sorted by eigenvalue so
"the first N modes" is well defined in any dimension.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.fft import dst, dstn

from .errors import ConfigurationError, NumericalError

__all__ = [
    "ModeTable",
    "SpectralField",
    "Nonlinearity",
    "build_mode_table",
    "minimal_cutoff_for_modes",
    "frac_power_apply",
    "trig_apply",
    "project",
    "l2_norm",
    "nonlinearity_apply",
    "make_nonlinearity_evaluator",
]

# fractional powers cached at table build; alpha-multiples used by the
# propagator, the filter functions, and the convolution kernels
_CACHED_POWER_MULTIPLES = (0.5, -0.5, 1.0, -1.0, -1.5)


@dataclass(frozen=True)
class ModeTable:
    """Eigenvalue/index catalogue of the Dirichlet Laplacian on (0,1)^d.

    Attributes
    ----------
    dim : 1 or 2
    per_dim_cutoff : max index per dimension; the table holds
        ``per_dim_cutoff ** dim`` modes.
    alpha : fractional exponent in (0, 1].
    eigenvalues : (N,) array, nondecreasing.
    indices : (N, dim) int array of multi-indices, aligned with eigenvalues.
    powers : cached fractional powers {p: eigenvalues**p} for
        p in alpha * {1/2, -1/2, 1, -1, -3/2}.
    """

    dim: int
    per_dim_cutoff: int
    alpha: float
    eigenvalues: np.ndarray
    indices: np.ndarray
    powers: dict = dc_field(repr=False)

    def __len__(self):
        return self.eigenvalues.shape[0]

    def power(self, p):
        """eigenvalues**p, from cache when available."""
        cached = self.powers.get(round(p, 15))
        if cached is not None:
            return cached
        return self.eigenvalues ** p

    @property
    def frequencies(self):
        """Oscillation frequencies lambda**(alpha/2) of the wave group."""
        return self.power(self.alpha / 2)


@dataclass
class SpectralField:
    """Coefficient vector of a function in a ModeTable's eigenbasis."""

    table: ModeTable
    coeffs: np.ndarray

    def copy(self):
        return SpectralField(self.table, self.coeffs.copy())


def build_mode_table(dim, per_dim_cutoff, alpha, ordering="eigenvalue"):
    """Build the mode catalogue for (0,1)^dim with Dirichlet eigenpairs.

    Eigenvalues are (i pi)^2 in 1D and pi^2 (i^2 + j^2) in 2D.  Modes are
    sorted nondecreasing by eigenvalue with lexicographic tie-break on the
    multi-index, so truncation to the first N modes is canonical.
    ``ordering="tensor"`` instead sorts by max index (square blocks), kept
    as an alternative truncation convention.
    """
    if dim not in (1, 2):
        raise ConfigurationError(f"dim must be 1 or 2, got {dim}")
    if per_dim_cutoff < 1:
        raise ConfigurationError(f"per_dim_cutoff must be >= 1, got {per_dim_cutoff}")
    if not 0.0 < alpha <= 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1], got {alpha}")
    if ordering not in ("eigenvalue", "tensor"):
        raise ConfigurationError(f"unknown ordering {ordering!r}")

    n = per_dim_cutoff
    if dim == 1:
        indices = np.arange(1, n + 1, dtype=np.int64)[:, None]
        eigenvalues = np.pi ** 2 * indices[:, 0].astype(float) ** 2
    else:
        i = np.arange(1, n + 1, dtype=np.int64)
        ii, jj = np.meshgrid(i, i, indexing="ij")
        indices = np.stack([ii.ravel(), jj.ravel()], axis=1)
        eigenvalues = np.pi ** 2 * (indices[:, 0] ** 2 + indices[:, 1] ** 2).astype(float)

    if ordering == "eigenvalue":
        keys = (indices[:, -1], indices[:, 0], eigenvalues)
    else:
        keys = (indices[:, -1], indices[:, 0], indices.max(axis=1))
    order = np.lexsort(keys)
    eigenvalues = np.ascontiguousarray(eigenvalues[order])
    indices = np.ascontiguousarray(indices[order])

    powers = {}
    for mult in _CACHED_POWER_MULTIPLES:
        p = mult * alpha
        vals = eigenvalues ** p
        check = np.exp(p * np.log(eigenvalues))
        if not np.allclose(vals, check, rtol=1e-14, atol=0.0):
            raise NumericalError(f"cached power lambda**{p} missed 1e-14 relative accuracy")
        powers[round(p, 15)] = vals

    eigenvalues.setflags(write=False)
    indices.setflags(write=False)
    return ModeTable(dim, per_dim_cutoff, float(alpha), eigenvalues, indices, powers)


def minimal_cutoff_for_modes(dim, count, alpha, ordering="eigenvalue"):
    """Smallest per-dim cutoff whose sorted table provably contains the true
    first ``count`` modes of the infinite lattice.

    In 2D a square lattice cut can distort the eigenvalue-sorted prefix; the
    prefix is intact when the count-th eigenvalue is at most
    pi^2 (n^2 + 1), i.e. no excluded lattice point could sort earlier.
    """
    if dim == 1:
        return count
    n = max(2, int(np.ceil(np.sqrt(count))))
    while True:
        table = build_mode_table(dim, n, alpha, ordering)
        if len(table) >= count and table.eigenvalues[count - 1] <= np.pi ** 2 * (n ** 2 + 1):
            return n
        n = int(np.ceil(n * 1.25))


def frac_power_apply(field, p):
    """Apply the operator power: coefficient i is scaled by lambda_i**p."""
    return SpectralField(field.table, field.coeffs * field.table.power(p))


def trig_apply(field, t, kind):
    """Apply cos(A^{alpha/2} t) or sin(A^{alpha/2} t) to a field.

    These are the two entries of the wave group: each coefficient is
    multiplied by cos or sin of lambda**(alpha/2) * t.
    """
    if t < 0:
        raise ValueError(f"t must be nonnegative, got {t}")
    arg = field.table.frequencies * t
    if kind == "cos":
        return SpectralField(field.table, field.coeffs * np.cos(arg))
    if kind == "sin":
        return SpectralField(field.table, field.coeffs * np.sin(arg))
    raise ConfigurationError(f"kind must be 'sin' or 'cos', got {kind!r}")


def project(field, count):
    """Keep the first ``count`` coefficients in table order, zero the rest.

    ``count`` beyond the table length acts as the identity.  Idempotent and
    self-adjoint in the coefficient inner product.
    """
    if count < 0:
        raise ValueError(f"count must be nonnegative, got {count}")
    out = field.coeffs.copy()
    out[count:] = 0.0
    return SpectralField(field.table, out)


def l2_norm(field):
    """L2 norm via Parseval: euclidean norm of the coefficient vector."""
    return float(np.linalg.norm(field.coeffs))


@dataclass(frozen=True)
class Nonlinearity:
    """Pointwise source descriptor f(u).

    kind is one of 'zero', 'identity', 'affine', 'square', 'polynomial';
    coeffs holds (c0, c1, ...) for affine/polynomial meaning sum c_k u^k.
    """

    kind: str
    coeffs: tuple = ()

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def identity(cls):
        return cls("identity")

    @classmethod
    def affine(cls, c0, c1):
        return cls("affine", (float(c0), float(c1)))

    @classmethod
    def square(cls):
        return cls("square")

    @classmethod
    def polynomial(cls, *coeffs):
        if not coeffs:
            raise ConfigurationError("polynomial needs at least one coefficient")
        return cls("polynomial", tuple(float(c) for c in coeffs))

    @property
    def is_diagonal(self):
        """True when f maps coefficients without a grid transform."""
        return self.kind in ("zero", "identity", "affine")

    def pointwise(self, values):
        if self.kind == "zero":
            return np.zeros_like(values)
        if self.kind == "identity":
            return values
        if self.kind == "affine":
            c0, c1 = self.coeffs
            return c0 + c1 * values
        if self.kind == "square":
            return values * values
        out = np.zeros_like(values)
        for c in reversed(self.coeffs):
            out = out * values + c
        return out


def _constant_one_coeffs(table):
    """Exact eigenbasis expansion of the constant function 1 on (0,1)^dim."""
    idx = table.indices

    def axis(i):
        return np.sqrt(2.0) * (1.0 - (-1.0) ** i) / (i * np.pi)

    out = axis(idx[:, 0].astype(float))
    for d in range(1, table.dim):
        out = out * axis(idx[:, d].astype(float))
    return out


def make_nonlinearity_evaluator(f_spec, table, q=2):
    """Build a coefficient-to-coefficient callable evaluating f pseudo-spectrally.

    Diagonal kinds (zero/identity/affine) bypass the transform.  Otherwise the
    field is evaluated on the tensor sine-collocation grid x_k = k/(q n + 1),
    k = 1..q n (n the table's per-dim cutoff), f is applied pointwise, and the
    result is transformed back by the discrete sine quadrature.  q = 2
    dealiases the resolved band of a quadratic source.
    """
    if not isinstance(f_spec, Nonlinearity):
        raise ConfigurationError(f"unsupported nonlinearity descriptor {f_spec!r}")
    if f_spec.is_diagonal:
        if f_spec.kind == "zero":
            return lambda coeffs: np.zeros_like(coeffs)
        if f_spec.kind == "identity":
            return lambda coeffs: coeffs.copy()
        c0, c1 = f_spec.coeffs
        one = None
        if c0 != 0.0:
            one = c0 * _constant_one_coeffs(table)

        def affine(coeffs):
            out = c1 * coeffs
            if one is not None:
                out += one[: coeffs.shape[0]]
            return out

        return affine

    if q < 2:
        raise ConfigurationError(f"oversampling factor q must be >= 2, got {q}")
    n = table.per_dim_cutoff
    grid = q * n
    idx0 = tuple(table.indices[:, d] - 1 for d in range(table.dim))
    # per-axis factors: values = DST1(c)/sqrt(2), coeffs = DST1(v)*sqrt(2)/(2(G+1))
    to_values = (1.0 / np.sqrt(2.0)) ** table.dim
    to_coeffs = (np.sqrt(2.0) / (2.0 * (grid + 1))) ** table.dim

    if table.dim == 1:
        def evaluate(coeffs):
            work = np.zeros(grid)
            work[idx0[0][: coeffs.shape[0]]] = coeffs
            values = dst(work, type=1) * to_values
            back = dst(f_spec.pointwise(values), type=1) * to_coeffs
            return back[idx0[0][: coeffs.shape[0]]]
    else:
        def evaluate(coeffs):
            work = np.zeros((grid, grid))
            work[idx0[0][: coeffs.shape[0]], idx0[1][: coeffs.shape[0]]] = coeffs
            values = dstn(work, type=1) * to_values
            back = dstn(f_spec.pointwise(values), type=1) * to_coeffs
            return back[idx0[0][: coeffs.shape[0]], idx0[1][: coeffs.shape[0]]]

    return evaluate


def nonlinearity_apply(f_spec, field, q=2):
    """Spectral coefficients of f(field), computed pseudo-spectrally.

    See make_nonlinearity_evaluator for the collocation details; this is the
    one-shot convenience form.
    """
    evaluate = make_nonlinearity_evaluator(f_spec, field.table, q)
    return SpectralField(field.table, evaluate(field.coeffs))
