from __future__ import annotations

import logging
from collections.abc import Sequence
from functools import partial
from typing import Literal

import equinox as eqx
import jax
import jax.numpy as jnp
import numpy as np
from jax import Array
from jaxtyping import ArrayLike

from ._utils import fdtype
from .errors import (
    FrontNotFormedError,
    GridTooShortError,
    PredeqError,
    UnstableStepError,
    WindowSaturatedError,
)
from .result import Result, array_str, float_str

__all__ = [
    'FrontField',
    'FrontHistory',
    'WalkHistory',
    'WalkPopulation',
    'bump_profile',
    'duplication_walk',
    'front_position',
    'front_speed',
    'growth_rate',
    'kpp_solve',
    'kpp_step',
    'physical_speed',
    'step_profile',
]

logger = logging.getLogger(__name__)

Mode = Literal['free', 'moving']

PLANE_SPACING = 3**-0.5
EDGE_CELLS = 10
RANGE_ATOL = 1e-9
MIN_SAMPLES = 20
MAX_POPULATION = 2**62


class FrontField(eqx.Module):
    r"""Intricate fraction $g(x) = f(x)/f_0$ sampled on a uniform grid.

    Lengths are in units of the atomic mean free path and times in units of the
    mean free time.

    Attributes:
        grid_spacing: Distance between grid points.
        values _(array of shape (N,))_: Values of $g$ at $x = i h$.
        time: Time of the snapshot.
    """

    grid_spacing: float
    values: Array
    time: float = 0.0

    @property
    def x(self) -> Array:
        return jnp.arange(self.values.shape[-1]) * self.grid_spacing

    @property
    def x_max(self) -> float:
        return (self.values.shape[-1] - 1) * self.grid_spacing

    @property
    def mass(self) -> float:
        return float(self.values.sum() * self.grid_spacing)

    def to_columns(self) -> dict[str, Array]:
        return {'x': self.x, 'g': self.values}


def step_profile(x_max: float, grid_spacing: float = 0.25) -> FrontField:
    """Returns the field intricate at the source face only, `g = 1` at `x = 0`."""
    n = int(round(x_max / grid_spacing)) + 1
    values = jnp.zeros(n, dtype=fdtype()).at[0].set(1.0)
    return FrontField(grid_spacing, values, 0.0)


def bump_profile(
    x_max: float,
    grid_spacing: float = 0.25,
    *,
    center: float | None = None,
    width: float = 1.0,
    amplitude: float = 1e-6,
) -> FrontField:
    """Returns a small Gaussian seed of intricacy away from the source face."""
    n = int(round(x_max / grid_spacing)) + 1
    x = jnp.arange(n) * grid_spacing
    center = x_max / 2 if center is None else center
    values = amplitude * jnp.exp(-0.5 * ((x - center) / width) ** 2)
    return FrontField(grid_spacing, values.astype(fdtype()), 0.0)


@partial(jax.jit, static_argnames=('h', 'dt', 'moving', 'hold_source'))
def _kpp_update(
    g: Array, t_new: Array, h: float, dt: float, moving: bool, hold_source: bool
) -> Array:
    # explicit Euler step of dg/dt = 1/2 d2g/dx2 + g(1 - g), zero-flux edges
    left = jnp.concatenate([g[1:2], g[:-1]])
    right = jnp.concatenate([g[1:], g[-2:-1]])
    lap = (left - 2 * g + right) / h**2
    g = g + dt * (0.5 * lap + g * (1 - g))

    if hold_source:
        g = g.at[0].set(1.0)
    if moving:
        x = jnp.arange(g.shape[-1]) * h
        g = jnp.where(x > t_new, 0.0, g)
    return g


def _check_step(field: FrontField, dt: float):
    h = field.grid_spacing
    if not dt > 0:
        raise UnstableStepError(f'Argument `dt` must be strictly positive, but is {dt}.')
    if dt > h**2:
        raise UnstableStepError(
            f'Argument `dt` must satisfy dt <= grid_spacing**2 = {h**2:g} for the'
            f' explicit scheme to be stable, but is dt={dt}.'
        )
    if field.values.shape[-1] < 2 * EDGE_CELLS:
        raise GridTooShortError(
            f'The grid must hold at least {2 * EDGE_CELLS} points, but holds'
            f' {field.values.shape[-1]}.'
        )


def _check_mode(mode: str):
    if mode not in ('free', 'moving'):
        raise ValueError(
            f"Argument `mode` should be a string 'free' or 'moving', but is '{mode}'."
        )


def _front_index(g: np.ndarray) -> int | None:
    # rightmost index at or above the half level, None without a front
    above = np.nonzero(g >= 0.5)[0]
    if len(above) == 0 or len(above) == len(g):
        return None
    return int(above[-1])


def _check_grid(g: np.ndarray, h: float, t: float):
    i = _front_index(g)
    if i is not None and i >= len(g) - 1 - EDGE_CELLS:
        raise GridTooShortError(
            f'The front reached x={i * h:g} at t={t:g}, within {EDGE_CELLS} cells of'
            f' the right edge x_max={(len(g) - 1) * h:g}; use a longer grid.'
        )


def kpp_step(
    field: FrontField, dt: float, mode: Mode = 'free', *, hold_source: bool = True
) -> FrontField:
    r"""Returns the field after one explicit step of the reaction-diffusion equation.

    The update integrates

    $$
        \frac{\partial g}{\partial t} = \frac12\frac{\partial^2 g}{\partial x^2}
        + g(1-g)
    $$

    with a centered second difference in space, keeping the source face at
    `g(0) = 1`. In `'moving'` mode the field is set to zero beyond the boundary
    `x = t`. The right edge is a zero-flux boundary, which is indistinguishable from
    `g = 0` while the front stays far from it.

    Args:
        field: Field at the current time.
        dt: Time step, at most `grid_spacing**2`.
        mode _(string 'free' or 'moving')_: Boundary mode.
        hold_source: Whether `g(0)` is held at 1.

    Returns:
        Field at time `field.time + dt`.

    Raises:
        UnstableStepError: If `dt > grid_spacing**2`.
        GridTooShortError: If the front is within 10 cells of the right edge.
    """
    _check_mode(mode)
    _check_step(field, dt)
    g = jnp.asarray(field.values, dtype=fdtype())
    gmin, gmax = float(g.min()), float(g.max())
    if gmin < -RANGE_ATOL or gmax > 1 + RANGE_ATOL:
        raise ValueError(
            f'Argument `field` must have values in [0, 1], but spans [{gmin}, {gmax}].'
        )

    t_new = field.time + dt
    g = _kpp_update(
        g, jnp.asarray(t_new), field.grid_spacing, dt, mode == 'moving', hold_source
    )
    _check_grid(np.asarray(g), field.grid_spacing, t_new)
    return FrontField(field.grid_spacing, g, t_new)


class FrontHistory(Result):
    """Snapshots of a reaction-diffusion run.

    Attributes:
        times _(array of shape (T,))_: Snapshot times.
        values _(array of shape (T, N))_: Field values at each snapshot.
        grid_spacing: Distance between grid points.
        mode: Boundary mode of the run.
    """

    times: Array
    values: Array
    grid_spacing: float
    mode: str = 'free'

    def __len__(self) -> int:
        return self.times.shape[0]

    def field_at(self, i: int) -> FrontField:
        return FrontField(self.grid_spacing, self.values[i], float(self.times[i]))

    def front_positions(self) -> np.ndarray:
        """Returns the half-level position at each snapshot, `nan` without a front."""
        return np.array([front_position(self.field_at(i)) for i in range(len(self))])

    def mass(self) -> Array:
        return self.values.sum(-1) * self.grid_spacing

    def to_columns(self) -> dict[str, ArrayLike]:
        return {
            'time': self.times,
            'front_position_halflevel': self.front_positions(),
            'mass': self.mass(),
        }

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Mode': self.mode,
            'Grid spacing': float_str(self.grid_spacing),
            'Snapshots': array_str(self.values),
        }


def kpp_solve(
    field: FrontField,
    dt: float,
    t_end: float,
    mode: Mode = 'free',
    *,
    save_every: int | None = None,
    hold_source: bool = True,
) -> FrontHistory:
    """Integrates the reaction-diffusion equation up to `t_end`.

    The steps are those of `kpp_step()`, run inside a compiled loop.

    Args:
        field: Initial field.
        dt: Time step, at most `grid_spacing**2`.
        t_end: Final time.
        mode _(string 'free' or 'moving')_: Boundary mode.
        save_every: Number of steps between snapshots, defaults to one snapshot per
            unit time.
        hold_source: Whether `g(0)` is held at 1.

    Returns:
        Snapshots of the field, including the initial one.

    Raises:
        UnstableStepError: If `dt > grid_spacing**2`.
        GridTooShortError: If the front comes within 10 cells of the right edge.
    """
    _check_mode(mode)
    _check_step(field, dt)
    n_steps = int(round((t_end - field.time) / dt))
    if n_steps < 1:
        raise PredeqError(
            f'Argument `t_end` must exceed the field time {field.time} by at least one'
            f' step, but is {t_end}.'
        )
    if save_every is None:
        save_every = max(1, int(round(1.0 / dt)))
    n_saves = n_steps // save_every

    h, moving = field.grid_spacing, mode == 'moving'
    g0 = jnp.asarray(field.values, dtype=fdtype())
    if hold_source:
        g0 = g0.at[0].set(1.0)
    t0 = jnp.asarray(field.time, dtype=fdtype())

    def inner(_: int, carry: tuple[Array, Array]) -> tuple[Array, Array]:
        g, t = carry
        t = t + dt
        return _kpp_update(g, t, h, dt, moving, hold_source), t

    def outer(carry: tuple[Array, Array], _: None) -> tuple[tuple, tuple]:
        carry = jax.lax.fori_loop(0, save_every, inner, carry)
        return carry, carry

    _, (gs, ts) = jax.lax.scan(outer, (g0, t0), None, length=n_saves)
    values = jnp.concatenate([g0[None], gs])
    times = jnp.concatenate([t0[None], ts])

    values_np = np.asarray(values)
    for g, t in zip(values_np, np.asarray(times)):
        _check_grid(g, h, float(t))

    logger.debug('kpp run: %d steps, %d snapshots, mode=%s', n_steps, n_saves, mode)
    return FrontHistory(times, values, h, mode)


def front_position(field: FrontField) -> float:
    """Returns the position of the `g = 0.5` level, `nan` if the field has no front.

    The level is located by linear interpolation between the rightmost grid point at
    or above one half and its right neighbour.
    """
    g = np.asarray(field.values)
    i = _front_index(g)
    if i is None:
        return float('nan')
    h = field.grid_spacing
    return i * h + h * (g[i] - 0.5) / (g[i] - g[i + 1])


def front_speed(
    history: FrontHistory | Sequence[FrontField], *, t_min: float = 20.0
) -> float:
    """Returns the least-squares slope of the half-level position against time.

    Only snapshots with `time > t_min` enter the fit, and at least 20 of them are
    required.

    Raises:
        FrontNotFormedError: If a snapshot of the fit window has no half-level
            crossing.
    """
    if isinstance(history, FrontHistory):
        fields = [history.field_at(i) for i in range(len(history))]
    else:
        fields = list(history)

    fields = [f for f in fields if f.time > t_min]
    if len(fields) < MIN_SAMPLES:
        raise PredeqError(
            f'Front speed needs at least {MIN_SAMPLES} snapshots after t={t_min:g},'
            f' but got {len(fields)}.'
        )

    ts = np.array([f.time for f in fields])
    xs = np.array([front_position(f) for f in fields])
    if np.any(np.isnan(xs)):
        t_bad = ts[np.isnan(xs)][0]
        raise FrontNotFormedError(f'No half-level crossing in the field at t={t_bad:g}.')

    slope, _ = np.polyfit(ts, xs, 1)
    return float(slope)


class WalkPopulation(eqx.Module):
    """Walkers of the duplication model, as occupation counts of integer planes.

    Attributes:
        positions _(array of shape (K,))_: Occupied plane indices, in ascending order.
        counts _(array of shape (K,))_: Number of walkers on each plane.
        step: Number of steps taken.
    """

    positions: np.ndarray
    counts: np.ndarray
    step: int = 0

    @classmethod
    def single(cls, position: int = 0, n: int = 1) -> WalkPopulation:
        return cls(np.array([position]), np.array([n], dtype=np.int64), 0)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def front(self) -> int:
        return int(self.positions.max())

    def as_multiset(self) -> np.ndarray:
        return np.repeat(self.positions, self.counts)


class WalkHistory(Result):
    """Occupation counts of a duplication walk at every step.

    Attributes:
        steps _(array of shape (T,))_: Step indices.
        origin: Plane index of the first column of `counts`.
        counts _(array of shape (T, L))_: Walkers per plane at each step.
        plane_spacing: Spacing between planes in units of the mean free path.
    """

    steps: np.ndarray
    origin: int
    counts: np.ndarray
    plane_spacing: float = PLANE_SPACING

    def __len__(self) -> int:
        return self.steps.shape[0]

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(-1)

    @property
    def fronts(self) -> np.ndarray:
        occupied = self.counts > 0
        last = self.counts.shape[-1] - 1 - np.argmax(occupied[:, ::-1], axis=-1)
        return self.origin + last

    def population_at(self, i: int) -> WalkPopulation:
        row = self.counts[i]
        idx = np.nonzero(row)[0]
        return WalkPopulation(self.origin + idx, row[idx], int(self.steps[i]))

    def front_speed(self) -> float:
        slope, _ = np.polyfit(self.steps, self.fronts, 1)
        return float(slope)

    def to_columns(self) -> dict[str, np.ndarray]:
        return {
            'time': self.steps,
            'front_position': self.fronts,
            'total_population': self.totals,
        }

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Steps': str(int(self.steps[-1])),
            'Final population': str(int(self.totals[-1])),
            'Final front': str(int(self.fronts[-1])),
        }


def duplication_walk(
    initial: WalkPopulation,
    n_steps: int,
    cap: int,
    seed: int,
    *,
    site_cap: int = 16,
    branch_probability: float = 1.0,
) -> WalkHistory:
    """Runs the discrete duplication model of intricacy transport.

    At each step every walker is replaced by two walkers, one plane to the left and
    one plane to the right. With `branch_probability < 1`, a walker instead moves by
    one plane in a random direction with probability `1 - branch_probability`. Once
    the population exceeds `cap`, the occupation of every plane is truncated at
    `site_cap`, the saturation of a region where all atoms are intricate.

    Args:
        initial: Initial population.
        n_steps: Number of steps.
        cap: Population above which planes saturate, below `2**62` so
            that counts cannot overflow.
        seed: Seed of the random moves, unused for pure duplication.
        site_cap: Maximum number of walkers per plane after saturation.
        branch_probability: Probability that a walker duplicates.

    Returns:
        Occupation counts at each step, including the initial one.
    """
    if n_steps < 1:
        raise PredeqError(f'Argument `n_steps` must be >= 1, but is {n_steps}.')
    if not 0 <= cap < MAX_POPULATION:
        raise PredeqError(
            f'Argument `cap` must be in [0, 2**62) for the counts to fit in 64 bits,'
            f' but is {cap}.'
        )
    if site_cap < 1:
        raise PredeqError(f'Argument `site_cap` must be >= 1, but is {site_cap}.')
    if not 0 <= branch_probability <= 1:
        raise PredeqError(
            'Argument `branch_probability` must be in [0, 1], but is'
            f' {branch_probability}.'
        )

    rng = np.random.default_rng(seed)
    origin = int(initial.positions.min()) - n_steps
    width = int(initial.positions.max()) - origin + n_steps + 1
    counts = np.zeros((n_steps + 1, width), dtype=np.int64)
    counts[0, initial.positions - origin] = initial.counts

    for n in range(n_steps):
        c = counts[n]
        if branch_probability == 1.0:
            to_left, to_right = c, c
        else:
            dup = rng.binomial(c, branch_probability)
            movers = c - dup
            right = rng.binomial(movers, 0.5)
            to_left, to_right = dup + movers - right, dup + right

        new = np.zeros_like(c)
        new[:-1] += to_left[1:]
        new[1:] += to_right[:-1]
        if new.sum() > cap:
            new = np.minimum(new, site_cap)
        counts[n + 1] = new

    return WalkHistory(np.arange(n_steps + 1), origin, counts)


def growth_rate(
    history: WalkHistory | FrontHistory, window: tuple[float, float]
) -> float:
    r"""Returns the exponential growth rate of a history over a time window.

    The rate is the slope of the logarithm of the total population (walk) or of the
    mass $\int g\,dx$ (reaction-diffusion) against time. The two halves of the window
    are also fitted separately, and a relative difference of their slopes above 10%
    means the window is not purely exponential.

    Raises:
        WindowSaturatedError: If the growth is not exponential over the window.
    """
    if isinstance(history, WalkHistory):
        ts, ys = history.steps.astype(np.float64), history.totals.astype(np.float64)
    else:
        ts, ys = np.asarray(history.times), np.asarray(history.mass())

    mask = (ts >= window[0]) & (ts <= window[1])
    ts, ys = ts[mask], ys[mask]
    if len(ts) < 4:
        raise PredeqError(
            f'Argument `window` must contain at least 4 samples, but contains'
            f' {len(ts)}.'
        )
    if np.any(ys <= 0):
        raise PredeqError('Growth rate requires a strictly positive population.')

    logy = np.log(ys)
    rate, _ = np.polyfit(ts, logy, 1)
    half = len(ts) // 2
    rate1, _ = np.polyfit(ts[: half + 1], logy[: half + 1], 1)
    rate2, _ = np.polyfit(ts[half:], logy[half:], 1)
    curvature = abs(rate1 - rate2) / max(abs(rate), 1e-300)
    if curvature > 0.1:
        raise WindowSaturatedError(
            f'Growth over window {tuple(window)} is not exponential: half-window rates'
            f' {rate1:.4g} and {rate2:.4g} differ by {100 * curvature:.1f}%.'
        )
    return float(rate)


def physical_speed(planes_per_step: float, lambda_mfp: float, tau: float) -> float:
    r"""Converts a walk speed in planes per step to cm/s.

    Planes are $3^{-1/2}\lambda$ apart and a step lasts $\tau$.
    """
    return planes_per_step * PLANE_SPACING * lambda_mfp / tau
