from __future__ import annotations

import equinox as eqx

from ._utils import tree_str_inline
from .progress_meter import AbstractProgressMeter, NoProgressMeter, TqdmProgressMeter

__all__ = ['Options']


class Options(eqx.Module):
    """Generic options for the long-running `predeq` routines.

    Args:
        progress_meter: Progress meter indicating how far an ensemble has advanced.
            Defaults to a [`tqdm`](https://github.com/tqdm/tqdm) bar, pass `None` to
            disable it.
        chunk_size: Number of trials simulated together by a single vectorized call
            when running an ensemble.
        t_ref: Reference time at which the collision-free evolution branches off the
            sourced one in `evolve_with_source()`.
        max_steps: Maximum number of steps of a single collapse run before it is
            reported as timed out.
    """

    progress_meter: AbstractProgressMeter
    chunk_size: int = 1000
    t_ref: float = 0.0
    max_steps: int = 10_000_000

    def __init__(
        self,
        progress_meter: AbstractProgressMeter | None = TqdmProgressMeter(),  # noqa: B008
        chunk_size: int = 1000,
        t_ref: float = 0.0,
        max_steps: int = 10_000_000,
    ):
        if progress_meter is None:
            progress_meter = NoProgressMeter()
        if chunk_size < 1:
            raise ValueError(
                f'Argument `chunk_size` must be a positive integer, but is {chunk_size}.'
            )
        if max_steps < 1:
            raise ValueError(
                f'Argument `max_steps` must be a positive integer, but is {max_steps}.'
            )

        self.progress_meter = progress_meter
        self.chunk_size = chunk_size
        self.t_ref = t_ref
        self.max_steps = max_steps

    def __str__(self) -> str:
        return tree_str_inline(self)


def check_options(options: Options, fname: str):
    supported_options = {
        'evolve_with_source': ('t_ref',),
        'ensemble': ('progress_meter', 'chunk_size', 'max_steps'),
        'run_scenario': ('progress_meter', 'chunk_size', 'max_steps'),
        'simulate_paths': ('progress_meter', 'chunk_size'),
    }
    valid_options = supported_options[fname]

    # check that all attributes are set to their default values except for the ones
    # specified in `valid_options`
    default = Options()
    for key, value in options.__dict__.items():
        if key not in valid_options and value != getattr(default, key):
            valid_options_str = ', '.join(f'`{x}`' for x in valid_options)
            raise ValueError(
                f'Option `{key}` was set to `{value}` but is not used by '
                f'`pq.{fname}()` (valid options: {valid_options_str}).'
            )
