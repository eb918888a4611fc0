from __future__ import annotations

import jax
import jax.numpy as jnp
from jax import Array
from jaxtyping import PRNGKeyArray

from ..denmat import DensityMatrix, new_density

__all__ = [
    'complex',
    'dm',
    'herm',
    'psd',
    'traceless_herm',
    'unitary',
]


def _check_square(shape: tuple[int, ...]):
    if not len(shape) >= 2 or not shape[-1] == shape[-2]:
        raise ValueError(
            f'Argument `shape` must be of the form (..., n, n), but is shape={shape}.'
        )


def complex(  # noqa: A001
    key: PRNGKeyArray, shape: int | tuple[int, ...], *, rmax: float = 1.0
) -> Array:
    r"""Returns an array of uniformly distributed random complex numbers.

    Each element of the returned array is sampled uniformly in the disk of radius
    $\text{rmax}$.

    Args:
        key: A PRNG key used as the random key.
        shape _(int or tuple of ints)_: Shape of the returned array.
        rmax: Maximum magnitude.

    Returns:
        _(array of shape (*shape))_ Random complex number array.
    """
    shape = (shape,) if isinstance(shape, int) else shape
    # sample uniformly in the unit L2 ball and scale
    x = rmax * jax.random.ball(key, 2, shape=shape)
    return x[..., 0] + 1j * x[..., 1]


def herm(key: PRNGKeyArray, shape: tuple[int, ...]) -> Array:
    """Returns a random complex Hermitian matrix.

    Args:
        key: A PRNG key used as the random key.
        shape _(shape of the form (..., n, n))_: Shape of the returned array.

    Returns:
        _(array of shape (*shape))_ Random complex Hermitian matrix.
    """
    _check_square(shape)
    x = complex(key, shape)
    return 0.5 * (x + x.mT.conj())


def traceless_herm(key: PRNGKeyArray, shape: tuple[int, ...]) -> Array:
    """Returns a random complex Hermitian matrix with zero trace.

    Args:
        key: A PRNG key used as the random key.
        shape _(shape of the form (..., n, n))_: Shape of the returned array.

    Returns:
        _(array of shape (*shape))_ Random traceless Hermitian matrix.
    """
    x = herm(key, shape)
    n = shape[-1]
    tr = jnp.trace(x, axis1=-2, axis2=-1)[..., None, None]
    return x - tr * jnp.eye(n) / n


def psd(key: PRNGKeyArray, shape: tuple[int, ...]) -> Array:
    """Returns a random complex positive semi-definite matrix.

    Args:
        key: A PRNG key used as the random key.
        shape _(shape of the form (..., n, n))_: Shape of the returned array.

    Returns:
        _(array of shape (*shape))_ Random complex positive semi-definite matrix.
    """
    _check_square(shape)
    x = complex(key, shape)
    return x @ x.mT.conj()


def dm(key: PRNGKeyArray, n: int) -> DensityMatrix:
    """Returns a random density matrix (hermitian, positive semi-definite, and unit
    trace).

    Args:
        key: A PRNG key used as the random key.
        n: Dimension of the matrix.

    Returns:
        Random density matrix.

    Examples:
        >>> rho = pq.random.dm(jax.random.PRNGKey(42), 4)
        >>> rho.dim
        4
    """
    x = psd(key, (n, n))
    x = x / jnp.trace(x)
    return new_density(x, 1.0)


def unitary(key: PRNGKeyArray, shape: tuple[int, ...]) -> Array:
    r"""Returns a Haar-distributed random unitary matrix.

    The unitary is the $Q$ factor of the QR decomposition of a complex Ginibre
    matrix, with the phases of the diagonal of $R$ moved into $Q$ so that the
    distribution is exactly the Haar measure.

    Args:
        key: A PRNG key used as the random key.
        shape _(shape of the form (..., n, n))_: Shape of the returned array.

    Returns:
        _(array of shape (*shape))_ Random unitary matrix.

    Examples:
        >>> u = pq.random.unitary(jax.random.PRNGKey(42), (4, 4))
        >>> bool(jnp.allclose(u.conj().T @ u, jnp.eye(4)))
        True
    """
    _check_square(shape)
    kr, ki = jax.random.split(key)
    z = (jax.random.normal(kr, shape) + 1j * jax.random.normal(ki, shape)) / jnp.sqrt(
        2.0
    )
    q, r = jnp.linalg.qr(z)
    d = jnp.diagonal(r, axis1=-2, axis2=-1)
    phases = d / jnp.abs(d)
    return q * phases[..., None, :]
