from __future__ import annotations

import logging
import warnings
from collections.abc import Callable, Sequence
from functools import partial
from typing import Any, Literal

import equinox as eqx
import jax
import jax.numpy as jnp
import numpy as np
from jax import Array
from jaxtyping import ArrayLike, PRNGKeyArray
from scipy import stats

from ._checks import check_positive, check_simplex
from ._utils import fdtype
from .errors import BadParamsError, OffSimplexError, StepTooLargeError, TooManyStepsError
from .options import Options, check_options
from .result import Result, array_str, float_str

__all__ = [
    'CollapseOutcome',
    'CovSpec',
    'EnsembleStats',
    'HistoryTree',
    'PathBundle',
    'SimplexState',
    'coarse_grain',
    'covariance_matrix',
    'ensemble',
    'enumerate_histories',
    'expected_collapse_time',
    'run_to_collapse',
    'simulate_paths',
    'step',
    'step_increments',
    'trial_key',
]

logger = logging.getLogger(__name__)

Noise = Literal['gaussian', 'binary']

MAX_STEP_RATIO = 1e-2
CERTAINTY = 1 - 1e-9
MAX_ENUMERATION = 20


class SimplexState(eqx.Module):
    """Channel probabilities on the simplex, with absorbed channels frozen.

    Attributes:
        p _(array of shape (k,))_: Channel probabilities, summing to 1.
        frozen _(array of shape (k,))_: Whether each channel is absorbed. A frozen
            channel holds exactly 0, or exactly 1 for the winner, and never changes.
        time: Elapsed time in units of the collapse timescale.
    """

    p: Array
    frozen: Array
    time: float = 0.0

    @classmethod
    def from_probabilities(cls, p0: ArrayLike) -> SimplexState:
        """Returns the initial state, with zero-probability channels frozen."""
        p = jnp.asarray(check_simplex(p0, 'p0'), dtype=fdtype())
        p = p / p.sum()
        p, frozen = _settle(p, p <= 0)
        return cls(p, frozen, 0.0)

    @property
    def collapsed(self) -> bool:
        return bool(jnp.all(self.frozen))

    @property
    def winner(self) -> int:
        """Index of the surviving channel, -1 while the race is on."""
        return int(jnp.argmax(self.p)) if self.collapsed else -1


class CovSpec(eqx.Module):
    r"""Covariance $A_{jk}\,\delta t/\tau_c$ of one step of the probabilities.

    Attributes:
        matrix _(array of shape (k, k))_: Symmetric covariance matrix.
    """

    matrix: Array

    @property
    def row_sums(self) -> Array:
        return self.matrix.sum(-1)


def covariance_matrix(p: ArrayLike, dt: float, tau_c: float) -> CovSpec:
    r"""Returns the covariance of the probability increments over one step.

    $$
        \langle\delta p_j\,\delta p_{j'}\rangle = (p_j\delta_{jj'} - p_jp_{j'})
        \frac{\delta t}{\tau_c}
    $$

    Examples:
        >>> pq.covariance_matrix([0.5, 0.5], 1.0, 1.0).matrix
        Array([[ 0.25, -0.25],
               [-0.25,  0.25]], dtype=float64)
    """
    p = jnp.asarray(check_simplex(p, 'p'), dtype=fdtype())
    check_positive(dt, 'dt')
    check_positive(tau_c, 'tau_c')
    return CovSpec((jnp.diag(p) - jnp.outer(p, p)) * (dt / tau_c))


def _increment(p: Array, key: PRNGKeyArray, scale: Array, noise: str) -> Array:
    if noise == 'binary':
        sign = jnp.where(jax.random.bernoulli(key), 1.0, -1.0)
        d = sign * jnp.sqrt(scale * p[0] * p[1])
        return jnp.stack([d, -d])

    # Gaussian with covariance scale * (diag(p) - p p^T), via the square-root factor
    # B = diag(sqrt(p)) - p sqrt(p)^T which satisfies B B^T = diag(p) - p p^T on the
    # simplex, and whose samples sum to zero
    s = jnp.sqrt(p)
    z = jax.random.normal(key, p.shape, dtype=p.dtype)
    return jnp.sqrt(scale) * (s * z - p * (s @ z))


def _settle(p: Array, frozen: Array) -> tuple[Array, Array]:
    # clamp negative channels to 0 and freeze them, with the deficit removed
    # proportionally from the positive ones, then detect a winner
    p = jnp.maximum(p, 0.0)
    p = p / p.sum()
    frozen = frozen | (p <= 0)

    top = jnp.argmax(p)
    done = (jnp.sum(~frozen) <= 1) | (p[top] >= CERTAINTY)
    onehot = jnp.zeros_like(p).at[top].set(1.0)
    p = jnp.where(done, onehot, p)
    frozen = jnp.where(done, True, frozen)
    return p, frozen


def _step_core(
    p: Array, frozen: Array, key: PRNGKeyArray, scale: Array, noise: str
) -> tuple[Array, Array]:
    p_new = p + _increment(p, key, scale, noise)
    p_new = jnp.where(frozen, p, p_new)
    return _settle(p_new, frozen)


def _check_step_args(dt: float, tau_c: float, k: int, noise: str):
    check_positive(dt, 'dt')
    check_positive(tau_c, 'tau_c')
    if dt > MAX_STEP_RATIO * tau_c:
        raise StepTooLargeError(
            f'Argument `dt` must satisfy dt <= {MAX_STEP_RATIO:g} * tau_c ='
            f' {MAX_STEP_RATIO * tau_c:g} for the diffusion limit to hold, but is'
            f' dt={dt}.'
        )
    if noise not in ('gaussian', 'binary'):
        raise ValueError(
            f"Argument `noise` should be a string 'gaussian' or 'binary', but is"
            f" '{noise}'."
        )
    if noise == 'binary' and k != 2:
        raise BadParamsError(
            f'Binary increments are defined for two channels, but got {k} channels.'
        )


def step(
    state: SimplexState,
    dt: float,
    tau_c: float,
    key: PRNGKeyArray,
    *,
    noise: Noise = 'gaussian',
) -> SimplexState:
    r"""Returns the state after one Brownian step of the channel probabilities.

    The increment is a zero-mean sample with the covariance of
    `covariance_matrix()`, Gaussian by default. With `noise='binary'` (two channels
    only) the increment is $\pm\sqrt{p_1p_2\,\delta t/\tau_c}$ with equal
    probabilities, which has the same first two moments. Channels pushed below zero
    are clamped to zero and frozen, and the deficit is removed proportionally from
    the other channels. A channel left alone, or holding at least $1 - 10^{-9}$,
    wins and the state is frozen.

    Args:
        state: Current state.
        dt: Time step, at most `1e-2 * tau_c`.
        tau_c: Collapse timescale.
        key: A PRNG key used as the random key.
        noise _(string 'gaussian' or 'binary')_: Distribution of the increments.

    Returns:
        State after the step, unchanged if the race is already decided.

    Raises:
        StepTooLargeError: If `dt > 1e-2 * tau_c`.
    """
    _check_step_args(dt, tau_c, state.p.shape[-1], noise)
    if int(jnp.sum(~state.frozen)) < 2:
        return state
    scale = jnp.asarray(dt / tau_c)
    p, frozen = _step_core(state.p, state.frozen, key, scale, noise)
    return SimplexState(p, frozen, state.time + dt / tau_c)


def trial_key(seed: int, i: int | Array) -> PRNGKeyArray:
    """Returns the key of trial `i` of a seeded ensemble, derived by counter."""
    return jax.random.fold_in(jax.random.PRNGKey(seed), i)


@partial(jax.jit, static_argnames=('noise',))
def _sample_increments(
    p: Array, frozen: Array, keys: PRNGKeyArray, scale: Array, noise: str
) -> Array:
    def single(key: PRNGKeyArray) -> Array:
        p_new, _ = _step_core(p, frozen, jax.random.fold_in(key, 0), scale, noise)
        return p_new - p

    return jax.vmap(single)(keys)


def step_increments(
    p: ArrayLike,
    dt: float,
    tau_c: float,
    samples: int,
    seed: int,
    *,
    noise: Noise = 'gaussian',
) -> Array:
    """Returns independent single-step increments from the same state.

    Sample `i` is the first step of trial `i` of `ensemble()` with the same seed.

    Returns:
        _(array of shape (samples, k))_ Increments of the probabilities.
    """
    state = SimplexState.from_probabilities(p)
    _check_step_args(dt, tau_c, state.p.shape[-1], noise)
    keys = jax.vmap(partial(trial_key, seed))(jnp.arange(samples))
    return _sample_increments(state.p, state.frozen, keys, jnp.asarray(dt / tau_c), noise)


def _run_loop(
    p: Array,
    frozen: Array,
    key: PRNGKeyArray,
    scale: Array,
    max_steps: Array,
    noise: str,
) -> tuple[Array, Array, Array]:
    def cond(carry: tuple[Array, Array, Array]) -> Array:
        _, frozen, n = carry
        return ~jnp.all(frozen) & (n < max_steps)

    def body(carry: tuple[Array, Array, Array]) -> tuple[Array, Array, Array]:
        p, frozen, n = carry
        p, frozen = _step_core(p, frozen, jax.random.fold_in(key, n), scale, noise)
        return p, frozen, n + 1

    return jax.lax.while_loop(cond, body, (p, frozen, jnp.zeros((), dtype=int)))


_run_single = jax.jit(_run_loop, static_argnames=('noise',))


@partial(jax.jit, static_argnames=('noise',))
def _run_batch(
    p: Array,
    frozen: Array,
    keys: PRNGKeyArray,
    scale: Array,
    max_steps: Array,
    noise: str,
) -> tuple[Array, Array, Array]:
    run = lambda key: _run_loop(p, frozen, key, scale, max_steps, noise)
    return jax.vmap(run)(keys)


class CollapseOutcome(Result):
    """Result of one race of the channel probabilities.

    Attributes:
        winner: Index of the surviving channel, -1 if the run timed out.
        collapse_time: Time to collapse in units of the collapse timescale.
        path_length: Number of steps taken.
        completed: Whether a winner was reached within the allowed steps.
    """

    winner: int
    collapse_time: float
    path_length: int
    completed: bool = True

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Winner': str(self.winner) if self.completed else 'none (timed out)',
            'Collapse time': float_str(self.collapse_time),
            'Path length': str(self.path_length),
        }


def run_to_collapse(
    p0: ArrayLike,
    dt: float,
    tau_c: float,
    key: PRNGKeyArray,
    max_steps: int = 10_000_000,
    *,
    noise: Noise = 'gaussian',
) -> CollapseOutcome:
    """Steps the channel probabilities until a single channel survives.

    Args:
        p0 _(array-like of shape (k,))_: Initial probabilities.
        dt: Time step, at most `1e-2 * tau_c`.
        tau_c: Collapse timescale.
        key: A PRNG key used as the random key.
        max_steps: Number of steps after which the run is reported as timed out.
        noise _(string 'gaussian' or 'binary')_: Distribution of the increments.

    Returns:
        Winner and collapse time, or a timed-out outcome with `winner = -1`.
    """
    state = SimplexState.from_probabilities(p0)
    _check_step_args(dt, tau_c, state.p.shape[-1], noise)
    scale = jnp.asarray(dt / tau_c)
    p, frozen, n = _run_single(
        state.p, state.frozen, key, scale, jnp.asarray(max_steps), noise=noise
    )
    completed = bool(jnp.all(frozen))
    n = int(n)
    return CollapseOutcome(
        winner=int(jnp.argmax(p)) if completed else -1,
        collapse_time=n * dt / tau_c,
        path_length=n,
        completed=completed,
    )


class EnsembleStats(Result):
    """Statistics of an ensemble of independent collapse runs.

    Attributes:
        trials: Number of runs.
        p0 _(array of shape (k,))_: Initial probabilities.
        win_counts _(array of shape (k,))_: Number of completed runs won by each
            channel.
        win_frequency _(array of shape (k,))_: Fraction of completed runs won by each
            channel, summing to 1.
        timeouts: Number of runs that did not collapse.
        mean_collapse_time: Mean collapse time of completed runs, in units of the
            collapse timescale.
        empirical_step_covariance _(array of shape (k, k))_: Covariance of the first
            increments of all runs.
        expected_step_covariance _(array of shape (k, k))_: Covariance predicted by
            `covariance_matrix()`.
        born_pvalue: Chi-square p-value of the win counts against `p0`.
        winners _(array of shape (trials,))_: Winner of each run, -1 for timeouts.
        collapse_times _(array of shape (trials,))_: Collapse time of each run.
        dt: Time step.
        tau_c: Collapse timescale.
    """

    trials: int
    p0: np.ndarray
    win_counts: np.ndarray
    win_frequency: np.ndarray
    timeouts: int
    mean_collapse_time: float
    empirical_step_covariance: np.ndarray
    expected_step_covariance: np.ndarray
    born_pvalue: float
    winners: np.ndarray
    collapse_times: np.ndarray
    dt: float
    tau_c: float

    @property
    def completed(self) -> int:
        return self.trials - self.timeouts

    @property
    def standard_error(self) -> np.ndarray:
        """Binomial standard error of each win frequency."""
        f = self.win_frequency
        return np.sqrt(f * (1 - f) / max(self.completed, 1))

    def covariance_check(self) -> dict[str, Any]:
        expected = self.expected_step_covariance
        mask = np.abs(expected) > 0
        err = np.abs(self.empirical_step_covariance - expected)[mask] / np.abs(
            expected[mask]
        )
        return {
            'empirical': self.empirical_step_covariance,
            'expected': expected,
            'max_relative_error': float(err.max()) if err.size else 0.0,
        }

    def merge(self, groups: Sequence[Sequence[int]]) -> EnsembleStats:
        """Returns the statistics with channels merged into groups."""
        g = _group_matrix(groups, self.p0.shape[0])
        index = np.argmax(g, axis=0)
        winners = np.where(self.winners >= 0, index[self.winners], -1)
        win_counts = g @ self.win_counts
        return EnsembleStats(
            trials=self.trials,
            p0=g @ self.p0,
            win_counts=win_counts,
            win_frequency=win_counts / max(self.completed, 1),
            timeouts=self.timeouts,
            mean_collapse_time=self.mean_collapse_time,
            empirical_step_covariance=g @ self.empirical_step_covariance @ g.T,
            expected_step_covariance=g @ self.expected_step_covariance @ g.T,
            born_pvalue=_born_pvalue(win_counts, g @ self.p0),
            winners=winners,
            collapse_times=self.collapse_times,
            dt=self.dt,
            tau_c=self.tau_c,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            'trials': self.trials,
            'p0': self.p0,
            'win_counts': self.win_counts,
            'win_frequency': self.win_frequency,
            'standard_error': self.standard_error,
            'timeouts': self.timeouts,
            'mean_collapse_time': self.mean_collapse_time,
            'expected_collapse_time': expected_collapse_time(self.p0),
            'covariance_check': self.covariance_check(),
            'born_pvalue': self.born_pvalue,
            'dt': self.dt,
            'tau_c': self.tau_c,
        }

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Trials': str(self.trials),
            'Win frequency': np.array2string(self.win_frequency, precision=4),
            'Timeouts': str(self.timeouts),
            'Mean collapse time': float_str(self.mean_collapse_time),
            'Born p-value': float_str(self.born_pvalue, '.3g'),
            'Winners': array_str(self.winners),
        }


def _group_matrix(groups: Sequence[Sequence[int]], k: int) -> np.ndarray:
    g = np.zeros((len(groups), k))
    for i, group in enumerate(groups):
        g[i, list(group)] = 1.0
    if not np.array_equal(g.sum(0), np.ones(k)):
        raise BadParamsError(
            f'Argument `groups` must partition the {k} channels, but is'
            f' {[list(x) for x in groups]}.'
        )
    return g


def _born_pvalue(win_counts: np.ndarray, p0: np.ndarray) -> float:
    n = win_counts.sum()
    support = p0 > 0
    if n == 0:
        return float('nan')
    if win_counts[~support].sum() > 0:
        return 0.0
    if support.sum() < 2:
        return 1.0
    expected = p0[support] / p0[support].sum() * n
    return float(stats.chisquare(win_counts[support], expected).pvalue)


def ensemble(
    p0: ArrayLike,
    dt: float,
    tau_c: float,
    trials: int,
    seed: int,
    *,
    noise: Noise = 'gaussian',
    options: Options = Options(),  # noqa: B008
) -> EnsembleStats:
    """Runs independent collapse races and aggregates their outcomes.

    Trial `i` uses the key `trial_key(seed, i)`, so the statistics do not depend on
    how trials are split into vectorized chunks.

    Args:
        p0 _(array-like of shape (k,))_: Initial probabilities.
        dt: Time step, at most `1e-2 * tau_c`.
        tau_c: Collapse timescale.
        trials: Number of runs.
        seed: Master seed.
        noise _(string 'gaussian' or 'binary')_: Distribution of the increments.
        options: Generic options (`progress_meter`, `chunk_size`, `max_steps`).

    Returns:
        Win frequencies, collapse times and first-step covariance check.
    """
    check_options(options, 'ensemble')
    if trials < 1:
        raise BadParamsError(f'Argument `trials` must be >= 1, but is {trials}.')
    state = SimplexState.from_probabilities(p0)
    k = state.p.shape[-1]
    _check_step_args(dt, tau_c, k, noise)

    scale = jnp.asarray(dt / tau_c)
    max_steps = jnp.asarray(options.max_steps)
    chunk = min(options.chunk_size, trials)

    winners, steps = [], []
    bar = options.progress_meter.bar(total=trials, desc='collapse')
    for start in range(0, trials, chunk):
        # pad the last chunk to avoid recompiling for a new batch size
        idx = jnp.arange(start, start + chunk)
        keys = jax.vmap(partial(trial_key, seed))(idx)
        p, frozen, n = _run_batch(state.p, state.frozen, keys, scale, max_steps, noise)
        done = np.asarray(jnp.all(frozen, axis=-1))
        w = np.where(done, np.asarray(jnp.argmax(p, axis=-1)), -1)
        size = min(chunk, trials - start)
        winners.append(w[:size])
        steps.append(np.asarray(n)[:size])
        bar.update(size)
        logger.debug('collapse chunk %d-%d done', start, start + size)
    bar.close()

    winners = np.concatenate(winners)
    times = np.concatenate(steps) * (dt / tau_c)
    completed = winners >= 0
    timeouts = int((~completed).sum())
    if timeouts > 0:
        warnings.warn(
            f'{timeouts} of {trials} collapse runs did not finish within'
            f' {options.max_steps} steps.',
            stacklevel=2,
        )

    win_counts = np.bincount(winners[completed], minlength=k).astype(np.int64)
    n_completed = int(completed.sum())
    win_frequency = win_counts / max(n_completed, 1)
    mean_time = float(times[completed].mean()) if n_completed else float('nan')

    p0_np = np.asarray(state.p)
    increments = np.asarray(step_increments(p0_np, dt, tau_c, trials, seed, noise=noise))
    if trials > 1:
        empirical = np.cov(increments, rowvar=False).reshape(k, k)
    else:
        empirical = np.zeros((k, k))
    expected = np.asarray(covariance_matrix(p0_np, dt, tau_c).matrix)

    result = EnsembleStats(
        trials=trials,
        p0=p0_np,
        win_counts=win_counts,
        win_frequency=win_frequency,
        timeouts=timeouts,
        mean_collapse_time=mean_time,
        empirical_step_covariance=empirical,
        expected_step_covariance=expected,
        born_pvalue=_born_pvalue(win_counts, p0_np),
        winners=winners,
        collapse_times=times,
        dt=dt,
        tau_c=tau_c,
    )
    logger.info(
        'collapse ensemble: %d trials, win frequency %s', trials, win_frequency
    )
    return result


class PathBundle(Result):
    """Probability paths over a fixed horizon.

    Attributes:
        times _(array of shape (T,))_: Times in units of the collapse timescale.
        p _(array of shape (trials, T, k))_: Probabilities of each path.
    """

    times: Array
    p: Array

    def to_columns(self, trial: int = 0) -> dict[str, Array]:
        columns = {'time': self.times}
        for j in range(self.p.shape[-1]):
            columns[f'p_{j}'] = self.p[trial, :, j]
        return columns

    def _str_parts(self) -> dict[str, str | None]:
        return {'Times': array_str(self.times), 'Paths': array_str(self.p)}


@partial(jax.jit, static_argnames=('n_steps', 'noise'))
def _paths(
    p: Array, frozen: Array, keys: PRNGKeyArray, scale: Array, n_steps: int, noise: str
) -> Array:
    def single(key: PRNGKeyArray) -> Array:
        def body(carry: tuple[Array, Array], n: Array) -> tuple[tuple, Array]:
            p, frozen = carry
            p, frozen = _step_core(p, frozen, jax.random.fold_in(key, n), scale, noise)
            return (p, frozen), p

        _, ps = jax.lax.scan(body, (p, frozen), jnp.arange(n_steps))
        return jnp.concatenate([p[None], ps])

    return jax.vmap(single)(keys)


def simulate_paths(
    p0: ArrayLike,
    dt: float,
    tau_c: float,
    n_steps: int,
    trials: int,
    seed: int,
    *,
    noise: Noise = 'gaussian',
    options: Options = Options(),  # noqa: B008
) -> PathBundle:
    """Returns probability paths over `n_steps` steps, frozen after collapse.

    Path `i` follows the same increments as trial `i` of `ensemble()` with the same
    seed.
    """
    check_options(options, 'simulate_paths')
    if trials < 1 or n_steps < 1:
        raise BadParamsError(
            f'Arguments `trials` and `n_steps` must be >= 1, but are {trials} and'
            f' {n_steps}.'
        )
    state = SimplexState.from_probabilities(p0)
    _check_step_args(dt, tau_c, state.p.shape[-1], noise)
    scale = jnp.asarray(dt / tau_c)

    chunk = min(options.chunk_size, trials)
    paths = []
    bar = options.progress_meter.bar(total=trials, desc='paths')
    for start in range(0, trials, chunk):
        keys = jax.vmap(partial(trial_key, seed))(jnp.arange(start, start + chunk))
        size = min(chunk, trials - start)
        paths.append(_paths(state.p, state.frozen, keys, scale, n_steps, noise)[:size])
        bar.update(size)
    bar.close()

    times = jnp.arange(n_steps + 1) * (dt / tau_c)
    return PathBundle(times, jnp.concatenate(paths))


def expected_collapse_time(p0: ArrayLike, tau_c: float = 1.0) -> float:
    r"""Returns the mean collapse time $-2\tau_c\sum_j(1-p_j)\ln(1-p_j)$.

    This is the mean absorption time of the driftless diffusion on the simplex in
    the limit of small steps.
    """
    p = check_simplex(p0, 'p0')
    q = 1.0 - p
    terms = np.where(q > 0, q * np.log(np.where(q > 0, q, 1.0)), 0.0)
    return float(-2.0 * tau_c * terms.sum())


def coarse_grain(p: ArrayLike, groups: Sequence[Sequence[int]]) -> np.ndarray:
    """Returns the probabilities of groups of channels merged together."""
    p = check_simplex(p, 'p')
    return _group_matrix(groups, p.shape[0]) @ p


class HistoryTree(Result):
    r"""Exhaustive distribution of two-channel histories with $\pm\Delta p_1$ steps.

    Attributes:
        p1 _(array of shape (2**n,))_: Terminal value of $p_1$ on each branch.
        weights _(array of shape (2**n,))_: Weight of each branch, all equal.
        clamped: Whether some branch hit the simplex boundary.
    """

    p1: np.ndarray
    weights: np.ndarray
    clamped: bool

    @property
    def mean(self) -> float:
        return float(self.weights @ self.p1)

    def cdf(self, x: ArrayLike) -> np.ndarray:
        order = np.argsort(self.p1)
        values, cum = self.p1[order], np.cumsum(self.weights[order])
        i = np.searchsorted(values, np.asarray(x), side='right')
        return np.where(i > 0, cum[np.maximum(i - 1, 0)], 0.0)

    def ks_distance(self, samples: ArrayLike, atol: float = 1e-9) -> float:
        """Returns the Kolmogorov-Smirnov distance to an empirical sample.

        Both distribution functions are compared just right and just left of every
        jump, so values closer than `atol` are considered equal.
        """
        samples = np.sort(np.asarray(samples, dtype=np.float64))
        points = np.union1d(self.p1, samples)
        points = np.concatenate([points - atol, points + atol])
        emp = np.searchsorted(samples, points, side='right') / len(samples)
        return float(np.max(np.abs(emp - self.cdf(points))))

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Branches': str(self.p1.shape[0]),
            'Mean p1': float_str(self.mean, '.12g'),
            'Clamped': str(self.clamped),
        }


def enumerate_histories(
    p0: ArrayLike,
    delta_rule: float | Callable[[np.ndarray], np.ndarray] | None = None,
    n_steps: int = 1,
    *,
    dt: float = 1e-2,
    tau_c: float = 1.0,
) -> HistoryTree:
    r"""Enumerates every history of $n$ symmetric $\pm\Delta p_1$ steps.

    At each step every branch splits into two equally weighted copies, with $p_1$
    increased or decreased by $\Delta p_1$ evaluated at the current $p_1$. Values are
    clamped to $[0, 1]$ and a branch reaching the boundary stays there.

    Args:
        p0 _(array-like of shape (2,))_: Initial probabilities.
        delta_rule: Constant step, or function of $p_1$ returning the step. Defaults
            to $\sqrt{p_1p_2\,\delta t/\tau_c}$, the step of `step(noise='binary')`.
        n_steps: Number of steps, at most 20.
        dt: Time step used by the default rule.
        tau_c: Collapse timescale used by the default rule.

    Returns:
        Terminal values of $p_1$ on the $2^n$ branches.

    Raises:
        TooManyStepsError: If `n_steps > 20`.

    Examples:
        >>> tree = pq.enumerate_histories([0.5, 0.5], 0.1, 1)
        >>> tree.p1
        array([0.6, 0.4])
    """
    p = check_simplex(p0, 'p0')
    if p.shape != (2,):
        raise OffSimplexError(
            f'Argument `p0` must hold two channels, but has shape {p.shape}.'
        )
    if n_steps > MAX_ENUMERATION:
        raise TooManyStepsError(
            f'Argument `n_steps` must be <= {MAX_ENUMERATION} to enumerate the 2**n'
            f' histories, but is {n_steps}.'
        )
    if n_steps < 0:
        raise BadParamsError(f'Argument `n_steps` must be >= 0, but is {n_steps}.')

    if delta_rule is None:
        scale = dt / tau_c
        rule = lambda p1: np.sqrt(scale * p1 * (1 - p1))
    elif callable(delta_rule):
        rule = delta_rule
    else:
        rule = lambda p1: np.full_like(p1, float(delta_rule))

    # branch b takes the sign of bit j of b at step j, + for 0
    branches = np.arange(2**n_steps)
    p1 = np.full(branches.shape, p[0])
    absorbed = (p1 <= 0) | (p1 >= 1)
    clamped = False
    for j in range(n_steps):
        sign = np.where((branches >> j) & 1, -1.0, 1.0)
        moved = p1 + sign * rule(p1)
        hit = (moved <= 0) | (moved >= 1)
        clamped = clamped or bool(np.any(hit & ~absorbed))
        p1 = np.where(absorbed, p1, np.clip(moved, 0.0, 1.0))
        absorbed = absorbed | hit

    weights = np.full(branches.shape, 0.5**n_steps)
    return HistoryTree(p1, weights, clamped)
