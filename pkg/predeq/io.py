from __future__ import annotations

import json
import logging
import math
from collections.abc import Mapping
from pathlib import Path
from typing import Any

import jax
import numpy as np
from jaxtyping import ArrayLike

__all__ = ['to_jsonable', 'write_csv', 'write_json']

logger = logging.getLogger(__name__)


def write_csv(path: str | Path, columns: Mapping[str, ArrayLike]):
    """Writes columns of numbers to a CSV file.

    Numbers are printed with `%.17g`, independently of the locale, under a header
    line holding the column names.

    Args:
        path: Output file.
        columns: Mapping from column name to a 1-D array, all of the same length.
    """
    names = list(columns)
    data = [np.asarray(columns[name]) for name in names]
    lengths = {x.shape for x in data}
    if len(lengths) != 1 or any(x.ndim != 1 for x in data):
        shapes = {name: x.shape for name, x in zip(names, data)}
        raise ValueError(
            f'Argument `columns` must hold 1-D arrays of equal length, but has shapes'
            f' {shapes}.'
        )

    table = np.stack([x.astype(np.float64) for x in data], axis=1)
    path = Path(path)
    with path.open('w', newline='\n', encoding='ascii') as f:
        f.write(','.join(names) + '\n')
        for row in table:
            f.write(','.join('%.17g' % x for x in row) + '\n')  # noqa: UP031
    logger.debug('wrote %d rows to %s', table.shape[0], path)


def to_jsonable(obj: Any) -> Any:
    """Converts arrays and scalars of a nested structure to plain Python values.

    Complex numbers become `[re, im]` pairs, and non-finite floats become `None`.
    """
    if isinstance(obj, Mapping):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(x) for x in obj]
    if isinstance(obj, (jax.Array, np.ndarray, np.generic)):
        return to_jsonable(np.asarray(obj).tolist())
    if isinstance(obj, complex):
        return [to_jsonable(obj.real), to_jsonable(obj.imag)]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Path):
        return str(obj)
    if obj is None or isinstance(obj, (bool, int, float, str)):
        return obj
    if hasattr(obj, 'to_dict'):
        return to_jsonable(obj.to_dict())
    raise TypeError(f'Object of type {type(obj).__name__} is not JSON serializable.')


def write_json(path: str | Path, obj: Any):
    """Writes a nested structure to a JSON file with sorted keys.

    Floats use their shortest round-trip representation, so identical inputs give
    byte-identical files.
    """
    path = Path(path)
    text = json.dumps(to_jsonable(obj), sort_keys=True, indent=2, allow_nan=False)
    path.write_text(text + '\n', encoding='utf-8')
    logger.debug('wrote %s', path)
