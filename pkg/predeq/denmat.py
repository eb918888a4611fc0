from __future__ import annotations

from typing import Any

import equinox as eqx
import jax.numpy as jnp
import numpy as np
from jax import Array
from jaxtyping import ArrayLike

from ._checks import check_hermitian, check_shape
from ._utils import cdtype, obj_type_str
from .errors import (
    DimensionTooLargeError,
    DimMismatchError,
    NonPositiveTemperatureError,
    NotPositiveError,
    TraceMismatchError,
    ZeroMatrixError,
)
from .utils.global_settings import get_max_dim

__all__ = [
    'DensityMatrix',
    'SignedSplit',
    'entropy_vn',
    'matrix_distance',
    'new_density',
    'partial_trace',
    'purity',
    'scalar_product',
    'similarity_K',
    'split_signed',
    'tensor',
    'thermal_state',
]

HERM_ATOL = 1e-12
NEGATIVE_ATOL = 1e-9
TRACE_ATOL = 1e-10
SPLIT_DROP = 1e-14


class DensityMatrix(eqx.Module):
    """Hermitian positive semi-definite matrix with its expected trace.

    Instances are built by `new_density()`, which validates the matrix. The expected
    trace `trace_hint` is 1 for states and the collision probability for the
    sub-normalized collision deltas.

    Attributes:
        entries _(array of shape (n, n))_: Matrix entries.
        trace_hint: Expected trace of the matrix.
    """

    entries: Array
    trace_hint: float

    @property
    def dim(self) -> int:
        return self.entries.shape[-1]

    @property
    def trace(self) -> float:
        return float(jnp.trace(self.entries).real)

    def eigvalsh(self) -> Array:
        return jnp.linalg.eigvalsh(self.entries)

    def to_numpy(self) -> np.ndarray:
        return np.asarray(self.entries)

    def to_dict(self) -> dict[str, Any]:
        """Returns a JSON-ready representation with row-major `[re, im]` pairs."""
        flat = self.to_numpy().reshape(-1)
        return {
            'dim': self.dim,
            'entries': [[float(z.real), float(z.imag)] for z in flat],
            'trace_hint': float(self.trace_hint),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> DensityMatrix:
        dim = int(d['dim'])
        pairs = np.asarray(d['entries'], dtype=np.float64)
        if pairs.shape != (dim * dim, 2):
            raise DimMismatchError(
                f'Argument `entries` must hold {dim * dim} [re, im] pairs for'
                f' dim={dim}, but has shape {pairs.shape}.'
            )
        matrix = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim)
        return new_density(matrix, d['trace_hint'])


class SignedSplit(eqx.Module):
    """Spectral split of a Hermitian matrix into its positive and negative parts.

    The input is recovered as `positive_part - negative_part`.
    """

    positive_part: DensityMatrix
    negative_part: DensityMatrix

    @property
    def trace_plus(self) -> float:
        return self.positive_part.trace

    @property
    def trace_minus(self) -> float:
        return self.negative_part.trace

    def reconstruct(self) -> Array:
        return self.positive_part.entries - self.negative_part.entries


def _as_matrix(x: DensityMatrix | ArrayLike, argname: str) -> Array:
    if isinstance(x, DensityMatrix):
        return x.entries
    try:
        x = jnp.asarray(x, dtype=cdtype())
    except TypeError as e:
        raise TypeError(
            f'Argument `{argname}` must be a `DensityMatrix` or an array-like, but'
            f' has type {obj_type_str(x)}.'
        ) from e
    check_shape(x, argname, '(n, n)')
    return x


def _check_same_dim(a: Array, b: Array, names: tuple[str, str] = ('a', 'b')):
    if a.shape != b.shape:
        raise DimMismatchError(
            f'Arguments `{names[0]}` and `{names[1]}` must have the same dimension,'
            f' but have shapes {a.shape} and {b.shape}.'
        )


def _from_spectrum(w: Array, v: Array, trace_hint: float | None = None) -> DensityMatrix:
    # assemble v diag(w) v^dag, with `w` already non-negative
    entries = (v * w) @ v.mT.conj()
    if trace_hint is None:
        trace_hint = float(w.sum())
    return DensityMatrix(entries.astype(cdtype()), trace_hint)


def new_density(matrix: ArrayLike, trace_hint: float = 1.0) -> DensityMatrix:
    r"""Returns a validated density matrix.

    The matrix must be Hermitian within 1e-12 (maximum entrywise deviation from its
    adjoint), positive semi-definite up to rounding, and have a trace within 1e-10
    of `trace_hint`. Eigenvalues in $[-10^{-9}, 0)$ are treated as rounding noise and
    clamped to zero; more negative eigenvalues are rejected.

    Args:
        matrix _(array-like of shape (n, n))_: Matrix entries.
        trace_hint: Expected trace, usually 1.

    Returns:
        Validated density matrix.

    Raises:
        NotHermitianError: If the matrix is not Hermitian.
        NotPositiveError: If an eigenvalue is below -1e-9.
        TraceMismatchError: If the trace differs from `trace_hint` by more than
            1e-10.
        DimensionTooLargeError: If the dimension exceeds `pq.get_max_dim()`.

    Examples:
        >>> rho = pq.new_density(jnp.eye(2) / 2)
        >>> rho.dim, rho.trace
        (2, 1.0)
        >>> pq.new_density([[0, 1], [0, 0]], 0.0)
        Traceback (most recent call last):
            ...
        predeq.errors.NotHermitianError: Argument `matrix` must be Hermitian within 1e-12, but max|matrix - matrix^dag| = 1.000e+00.
    """
    x = _as_matrix(matrix, 'matrix')
    n = x.shape[-1]
    if n > get_max_dim():
        raise DimensionTooLargeError(
            f'Argument `matrix` has dimension {n}, larger than the configured maximum'
            f' {get_max_dim()} (see `pq.set_max_dim()`).'
        )

    x = check_hermitian(x, 'matrix', atol=HERM_ATOL)

    w, v = jnp.linalg.eigh(x)
    wmin = float(w.min())
    if wmin < -NEGATIVE_ATOL:
        raise NotPositiveError(
            f'Argument `matrix` must be positive semi-definite, but has eigenvalue'
            f' {wmin:.3e}.'
        )
    if wmin < 0:
        x = (v * jnp.clip(w, 0.0)) @ v.mT.conj()

    trace = float(jnp.trace(x).real)
    if abs(trace - trace_hint) > TRACE_ATOL:
        raise TraceMismatchError(
            f'Argument `matrix` must have trace {trace_hint!r} within {TRACE_ATOL:g},'
            f' but has trace {trace!r}.'
        )

    return DensityMatrix(x, float(trace_hint))


def thermal_state(H: ArrayLike, T: float) -> DensityMatrix:
    r"""Returns the thermal state $e^{-H/T}/Z$ of a Hamiltonian ($k_B = 1$).

    The exponent is computed in the eigenbasis of $H$ and shifted so that its largest
    value is zero, which keeps the computation finite for any temperature.

    Args:
        H _(array-like of shape (n, n))_: Hermitian Hamiltonian.
        T: Temperature in the energy units of `H`.

    Returns:
        Thermal density matrix, with unit trace and commuting with `H`.

    Examples:
        >>> rho = pq.thermal_state(jnp.diag(jnp.array([0.0, 1.0])), 1.0)
        >>> jnp.diag(rho.entries).real
        Array([0.731, 0.269], dtype=float64)
    """
    if not T > 0:
        raise NonPositiveTemperatureError(
            f'Argument `T` must be strictly positive, but is T={T}.'
        )
    H = check_hermitian(_as_matrix(H, 'H'), 'H', atol=HERM_ATOL)
    w, v = jnp.linalg.eigh(H)
    x = -w / T
    x = x - x.max()
    p = jnp.exp(x)
    p = p / p.sum()
    return _from_spectrum(p, v, trace_hint=1.0)


def scalar_product(a: DensityMatrix | ArrayLike, b: DensityMatrix | ArrayLike) -> float:
    r"""Returns the real scalar product $\mathrm{Tr}(ab)$ of two Hermitian matrices."""
    a, b = _as_matrix(a, 'a'), _as_matrix(b, 'b')
    _check_same_dim(a, b)
    return float((a * b.mT).sum().real)


def matrix_distance(a: DensityMatrix | ArrayLike, b: DensityMatrix | ArrayLike) -> float:
    r"""Returns the distance $\sqrt{\mathrm{Tr}[(a-b)^2]}$ between two matrices.

    Examples:
        >>> rho0 = pq.new_density(jnp.diag(jnp.array([1.0, 0.0])))
        >>> rho1 = pq.new_density(jnp.diag(jnp.array([0.0, 1.0])))
        >>> pq.matrix_distance(rho0, rho1)
        1.4142135623730951
    """
    a, b = _as_matrix(a, 'a'), _as_matrix(b, 'b')
    _check_same_dim(a, b)
    d = a - b
    # for Hermitian d, Tr(d^2) is the sum of squared moduli
    return float(jnp.sqrt((jnp.abs(d) ** 2).sum()))


def similarity_K(a: DensityMatrix | ArrayLike, b: DensityMatrix | ArrayLike) -> float:
    r"""Returns the similarity $K = \mathrm{Tr}(ab)/\sqrt{\mathrm{Tr}(a^2)\mathrm{Tr}(b^2)}$.

    $K = 1$ for proportional matrices and $K = 0$ for matrices with orthogonal
    supports.

    Raises:
        ZeroMatrixError: If one of the matrices is zero.
    """
    a, b = _as_matrix(a, 'a'), _as_matrix(b, 'b')
    _check_same_dim(a, b)
    aa = float((jnp.abs(a) ** 2).sum())
    bb = float((jnp.abs(b) ** 2).sum())
    for name, norm2 in (('a', aa), ('b', bb)):
        if norm2 <= 1e-30:
            raise ZeroMatrixError(
                f'Argument `{name}` must be non-zero to compute a similarity.'
            )
    ab = float((a * b.mT).sum().real)
    return ab / np.sqrt(aa * bb)


def split_signed(omega: ArrayLike) -> SignedSplit:
    r"""Splits a Hermitian matrix into its positive and negative spectral parts.

    Eigenvalues with modulus below 1e-14 are dropped. Within a degenerate eigenspace
    the choice of eigenvectors is left to the decomposition routine; the parts are
    unique as matrices since they are built from spectral projectors.

    Args:
        omega _(array-like of shape (n, n))_: Hermitian matrix.

    Returns:
        Positive and negative parts, both positive semi-definite, such that
        `omega = positive_part - negative_part`.

    Examples:
        >>> split = pq.split_signed(jnp.diag(jnp.array([0.2, -0.2])))
        >>> split.trace_plus, split.trace_minus
        (0.2, 0.2)
    """
    omega = check_hermitian(_as_matrix(omega, 'omega'), 'omega', atol=HERM_ATOL)
    w, v = jnp.linalg.eigh(omega)
    w_plus = jnp.where(w > SPLIT_DROP, w, 0.0)
    w_minus = jnp.where(w < -SPLIT_DROP, -w, 0.0)
    return SignedSplit(_from_spectrum(w_plus, v), _from_spectrum(w_minus, v))


def _ptrace(x: Array, dims: tuple[int, ...], keep: tuple[int, ...]) -> Array:
    # trace out the factors not in `keep` of a (possibly batched) operator
    ndims = len(dims)
    alphabet = 'abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ'
    eq1 = alphabet[:ndims]  # e.g. 'ab'
    unused = iter(alphabet[ndims:])
    eq2 = ''.join([next(unused) if i in keep else eq1[i] for i in range(ndims)])

    bshape = x.shape[:-2]
    x = x.reshape(*bshape, *dims, *dims)  # e.g. (..., 4, 2, 4, 2)
    x = jnp.einsum(f'...{eq1}{eq2}', x)  # e.g. (..., 4, 4)
    m = int(np.prod([dims[i] for i in keep]))
    return x.reshape(*bshape, m, m)


def partial_trace(
    joint: DensityMatrix | ArrayLike, dims: tuple[int, int], keep: int = 0
) -> DensityMatrix:
    r"""Returns the reduced density matrix of one factor of a bipartite system.

    Args:
        joint _(density matrix of dimension dims[0] * dims[1])_: Joint state.
        dims _(pair of ints)_: Dimensions of the two factors.
        keep _(0 or 1)_: Index of the factor to keep.

    Returns:
        Reduced density matrix with the same trace as `joint`.

    Examples:
        >>> bell = jnp.array([1, 0, 0, 1]) / jnp.sqrt(2)
        >>> rho = pq.new_density(jnp.outer(bell, bell.conj()))
        >>> pq.partial_trace(rho, (2, 2), keep=0).entries.real
        Array([[0.5, 0. ],
               [0. , 0.5]], dtype=float64)
    """
    x = _as_matrix(joint, 'joint')
    trace_hint = (
        joint.trace_hint
        if isinstance(joint, DensityMatrix)
        else float(jnp.trace(x).real)
    )

    dims = tuple(int(d) for d in dims)
    if len(dims) != 2 or any(d < 1 for d in dims):
        raise DimMismatchError(
            f'Argument `dims` must be a pair of positive integers, but is {dims}.'
        )
    if dims[0] * dims[1] != x.shape[-1]:
        raise DimMismatchError(
            'Argument `dims` must match the dimension of `joint` of'
            f' {x.shape[-1]}, but the product of its values is'
            f' {dims[0]}*{dims[1]}={dims[0] * dims[1]}.'
        )
    if keep not in (0, 1):
        raise ValueError(f'Argument `keep` must be 0 or 1, but is {keep!r}.')

    return DensityMatrix(_ptrace(x, dims, (keep,)), trace_hint)


def tensor(a: DensityMatrix, b: DensityMatrix) -> DensityMatrix:
    """Returns the tensor product of two density matrices."""
    entries = jnp.kron(_as_matrix(a, 'a'), _as_matrix(b, 'b'))
    hint_a = a.trace_hint if isinstance(a, DensityMatrix) else 1.0
    hint_b = b.trace_hint if isinstance(b, DensityMatrix) else 1.0
    return DensityMatrix(entries, hint_a * hint_b)


def purity(x: DensityMatrix | ArrayLike) -> float:
    r"""Returns the purity $\mathrm{Tr}(\rho^2)$."""
    x = _as_matrix(x, 'x')
    return float((x * x.mT).sum().real)


def entropy_vn(x: DensityMatrix | ArrayLike) -> float:
    r"""Returns the Von Neumann entropy $-\mathrm{Tr}(\rho\ln\rho)$."""
    w = jnp.linalg.eigvalsh(_as_matrix(x, 'x'))
    # null or rounding-negative eigenvalues contribute nothing
    w = jnp.where(w <= 0, 1.0, w)
    return float(-(w * jnp.log(w)).sum())
