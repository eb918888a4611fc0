from __future__ import annotations

import jax.numpy as jnp
import numpy as np
from jax import Array
from jaxtyping import ArrayLike

from .errors import NotHermitianError, NotUnitaryError, OffSimplexError, PredeqError

_cases = {
    '(..., n, n)': lambda x: x.ndim >= 2 and x.shape[-2] == x.shape[-1],
    '(N, n, n)': lambda x: x.ndim == 3 and x.shape[-2] == x.shape[-1],
    '(n, n)': lambda x: x.ndim == 2 and x.shape[-2] == x.shape[-1],
    '(n,)': lambda x: x.ndim == 1,
    '(2,)': lambda x: x.shape == (2,),
    '(N, n)': lambda x: x.ndim == 2,
}


def has_shape(x: ArrayLike, shape: str) -> bool:
    if shape in _cases:
        return _cases[shape](x)
    else:
        raise ValueError(f'Unknown shape specification `{shape}`.')


def check_shape(x: ArrayLike, argname: str, *shapes: str):
    for shape in shapes:
        if has_shape(x, shape):
            return

    if len(shapes) == 1:
        shapes_str = shapes[0]
    else:
        shapes_str = ', '.join(shapes[:-1]) + ' or ' + shapes[-1]

    raise ValueError(
        f'Argument `{argname}` must have shape {shapes_str}, but has shape'
        f' {argname}.shape={x.shape}.'
    )


def check_positive(x: float, argname: str, error: type[PredeqError] = PredeqError):
    if not x > 0:
        raise error(f'Argument `{argname}` must be strictly positive, but is {x}.')


def check_hermitian(x: Array, argname: str, atol: float = 1e-12) -> Array:
    # max entrywise deviation |x - x^dag|, checked eagerly on concrete values
    check_shape(x, argname, '(n, n)')
    dev = float(jnp.max(jnp.abs(x - x.mT.conj()))) if x.size > 0 else 0.0
    if dev > atol:
        raise NotHermitianError(
            f'Argument `{argname}` must be Hermitian within {atol:g}, but'
            f' max|{argname} - {argname}^dag| = {dev:.3e}.'
        )
    return 0.5 * (x + x.mT.conj())


def check_unitary(u: Array, argname: str, atol: float = 1e-10):
    check_shape(u, argname, '(n, n)')
    eye = jnp.eye(u.shape[-1], dtype=u.dtype)
    dev = float(jnp.max(jnp.abs(u.mT.conj() @ u - eye)))
    if dev > atol:
        raise NotUnitaryError(
            f'Argument `{argname}` must be unitary within {atol:g}, but'
            f' max|{argname}^dag {argname} - I| = {dev:.3e}.'
        )


def check_simplex(p: ArrayLike, argname: str, atol: float = 1e-12) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 1:
        raise OffSimplexError(
            f'Argument `{argname}` must be a non-empty 1D probability vector, but has'
            f' shape {p.shape}.'
        )
    if np.any(p < 0) or np.any(p > 1):
        raise OffSimplexError(
            f'Argument `{argname}` must have entries in [0, 1], but is {p.tolist()}.'
        )
    total = p.sum()
    if abs(total - 1.0) > atol:
        raise OffSimplexError(
            f'Argument `{argname}` must sum to 1 within {atol:g}, but sums to'
            f' {total!r}.'
        )
    return p
