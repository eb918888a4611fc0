from __future__ import annotations

import logging
import math
from typing import Any, Literal

import equinox as eqx
import numpy as np

from .collapse import EnsembleStats, Noise, ensemble
from .errors import BadParamsError, CellNarrowerThanMFPError, DomainError
from .options import Options, check_options
from .result import Result, float_str

__all__ = [
    'DeltaP1',
    'Scenario',
    'TimescaleReport',
    'TrackModel',
    'build_track',
    'collapse_timescale',
    'collision_rate',
    'consistent_track',
    'decoherence_margin',
    'delta_p1',
    'literal_track',
    'run_scenario',
    'scenario',
    'timescale_report',
    'undamped_wave_count',
    'variance_per_step',
]

logger = logging.getLogger(__name__)

Profile = Literal['uniform', 'bragg_like']

TARGET_TAU_C = 1e-11


def collision_rate(n_M: float, v_M: float, S: float) -> float:
    """Returns the rate `n_M * v_M * S` of molecule collisions on a surface.

    Args:
        n_M: Molecule density (cm^-3).
        v_M: Mean molecule velocity (cm/s).
        S: Surface (cm^2).

    Returns:
        Number of collisions per second.

    Examples:
        >>> pq.collision_rate(2.5e19, 4.6e4, 100.0)
        1.15e+26
    """
    for name, value in (('n_M', n_M), ('v_M', v_M), ('S', S)):
        if value < 0:
            raise DomainError(f'Argument `{name}` must be >= 0, but is {value}.')
    return n_M * v_M * S


class TrackModel(eqx.Module):
    """Track of a detected particle, divided into cells of width `Lambda`.

    Lengths are in cm, energies in eV and times in s.

    Attributes:
        E: Particle energy.
        e: Mean excitation energy per intricon.
        L: Track length.
        Lambda: Cell width.
        lambda_mfp: Atomic mean free path.
        tau: Atomic mean free time.
        profile: Deposition profile, `'uniform'` or `'bragg_like'`.
        n_beta _(array of shape (N,))_: Number of intricons in each cell.
    """

    E: float
    e: float
    L: float
    Lambda: float
    lambda_mfp: float
    tau: float
    profile: str
    n_beta: np.ndarray

    @property
    def n_total(self) -> float:
        return self.E / self.e

    @property
    def n_cells(self) -> int:
        return self.n_beta.shape[0]

    @property
    def inverse_sum(self) -> float:
        r"""Returns $\sum_\beta n_\beta^{-1}$."""
        if self.profile == 'uniform':
            return self.n_cells / (self.n_total / self.n_cells)
        return float(np.sum(1.0 / self.n_beta))

    def to_dict(self) -> dict[str, Any]:
        return {
            'E': self.E,
            'e': self.e,
            'L': self.L,
            'Lambda': self.Lambda,
            'lambda_mfp': self.lambda_mfp,
            'tau': self.tau,
            'profile': self.profile,
            'n_total': self.n_total,
            'n_cells': self.n_cells,
        }


def build_track(
    E: float,
    e: float,
    L: float,
    Lambda: float,
    lambda_mfp: float,
    tau: float,
    profile: Profile = 'uniform',
    *,
    bragg_exponent: float = 0.5,
    bragg_cap: float = 10.0,
) -> TrackModel:
    r"""Returns a track with its intricon counts per cell.

    The track holds $n = E/e$ intricons spread over $N = \lceil L/\Lambda\rceil$
    cells. With the `'bragg_like'` profile the density grows towards the end of the
    track like $(1 - x/L)^{-s}$, truncated at `bragg_cap` times its initial value.

    Raises:
        CellNarrowerThanMFPError: If `Lambda < lambda_mfp`.

    Examples:
        >>> track = pq.build_track(1e7, 10.0, 10.0, 0.01, 1e-5, 1e-10)
        >>> track.n_total, track.n_cells, float(track.n_beta[0])
        (1000000.0, 1000, 1000.0)
    """
    params = {'E': E, 'e': e, 'L': L, 'Lambda': Lambda}
    params |= {'lambda_mfp': lambda_mfp, 'tau': tau}
    for name, value in params.items():
        if not value > 0:
            raise BadParamsError(f'Argument `{name}` must be > 0, but is {value}.')
    if Lambda < lambda_mfp:
        raise CellNarrowerThanMFPError(
            f'Argument `Lambda` must be at least the mean free path'
            f' lambda_mfp={lambda_mfp:g}, but is {Lambda:g}.'
        )

    n_total = E / e
    n_cells = max(1, math.ceil(L / Lambda * (1 - 1e-12)))
    if profile == 'uniform':
        n_beta = np.full(n_cells, n_total / n_cells)
    elif profile == 'bragg_like':
        x = (np.arange(n_cells) + 0.5) / n_cells
        w = np.minimum((1 - x) ** -bragg_exponent, bragg_cap)
        n_beta = n_total * w / w.sum()
    else:
        raise BadParamsError(
            f"Argument `profile` should be 'uniform' or 'bragg_like', but is"
            f" '{profile}'."
        )
    return TrackModel(
        float(E), float(e), float(L), float(Lambda), float(lambda_mfp), float(tau),
        profile, n_beta,
    )  # fmt: skip


def literal_track(lambda_mfp: float = 1e-5) -> TrackModel:
    """Returns the track of the quantitative estimate read literally.

    A 10 MeV particle, 10 eV per intricon, a 10 cm track and cells three mean free
    paths wide, with a mean free time of 1e-10 s.
    """
    return build_track(1e7, 10.0, 10.0, 3 * lambda_mfp, lambda_mfp, 1e-10)


def consistent_track() -> TrackModel:
    """Returns a track with 100 intricons in each of 1000 cells and `tau = 1e-10` s.

    Its collapse timescale is 1e-11 s.
    """
    return build_track(1e6, 10.0, 10.0, 0.01, 1e-5, 1e-10)


class DeltaP1(Result):
    """Change of the channel probability caused by a change of its intricon count.

    Attributes:
        exact: `(n1 + dn1) / (n + dn1) - n1 / n`.
        approximate: `p2 * dn1 / n`.
    """

    exact: float
    approximate: float

    @property
    def difference(self) -> float:
        return self.exact - self.approximate

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Exact': float_str(self.exact, '.10g'),
            'Approximate': float_str(self.approximate, '.10g'),
            'Difference': float_str(self.difference, '.3g'),
        }


def delta_p1(n1: float, n: float, dn1: float) -> DeltaP1:
    r"""Returns the change of $p_1 = n_1/n$ when $n_1$ changes by `dn1`.

    A channel without intricons (`n1 = 0`) has nothing to fluctuate and its change
    is zero, as is the change of a certain channel (`n1 = n`).

    Raises:
        DomainError: Unless `0 <= n1 <= n` and `n + dn1 > 0`.

    Examples:
        >>> pq.delta_p1(3e5, 1e6, 1.0).approximate
        7e-07
    """
    if not 0 <= n1 <= n or not n > 0:
        raise DomainError(
            f'Arguments must satisfy 0 <= n1 <= n with n > 0, but n1={n1} and n={n}.'
        )
    if not n + dn1 > 0:
        raise DomainError(f'Arguments must satisfy n + dn1 > 0, but n + dn1 = {n + dn1}.')
    if n1 == 0:
        return DeltaP1(0.0, 0.0)

    exact = (n1 + dn1) / (n + dn1) - n1 / n
    p2 = (n - n1) / n
    return DeltaP1(exact, p2 * dn1 / n)


def variance_per_step(
    track: TrackModel,
    p1: float,
    dt: float,
    *,
    p2: float | None = None,
    form: Literal['symmetric', 'single_channel'] = 'symmetric',
) -> float:
    r"""Returns the variance of $\delta p_1$ over one step.

    The symmetric form $p_1p_2(\delta t/\tau)\sum_\beta n_\beta^{-1}$ collects the
    fluctuations of both channels and is unchanged under $p_1\leftrightarrow p_2$;
    the single-channel form $p_1p_2^2(\delta t/\tau)\sum_\beta n_\beta^{-1}$ keeps
    only the cells of channel 1. For uniform cells $\sum_\beta n_\beta^{-1} =
    N/n_\beta$.

    Args:
        track: Track of channel 1.
        p1: Probability of channel 1.
        dt: Time step, at most `track.tau`.
        p2: Probability of channel 2, defaults to `1 - p1`.
        form _(string 'symmetric' or 'single_channel')_: Which fluctuations to sum.

    Raises:
        DomainError: If `p1` is outside `[0, 1]` or `dt / tau` outside `(0, 1]`.
    """
    p2 = 1.0 - p1 if p2 is None else p2
    for name, value in (('p1', p1), ('p2', p2)):
        if not 0 <= value <= 1:
            raise DomainError(f'Argument `{name}` must be in [0, 1], but is {value}.')
    delta = dt / track.tau
    if not 0 < delta <= 1:
        raise DomainError(
            f'Argument `dt` must satisfy 0 < dt <= tau={track.tau:g}, but is {dt:g}.'
        )

    if form == 'symmetric':
        return p1 * p2 * delta * track.inverse_sum
    elif form == 'single_channel':
        return p1 * p2 * p2 * delta * track.inverse_sum
    raise ValueError(
        f"Argument `form` should be 'symmetric' or 'single_channel', but is '{form}'."
    )


def collapse_timescale(track: TrackModel) -> float:
    r"""Returns the collapse timescale $\tau_c = \tau/\sum_\beta n_\beta^{-1}$ in s.

    For uniform cells this is $\tau n_\beta / N$.

    Examples:
        >>> pq.collapse_timescale(pq.consistent_track())
        1e-11
    """
    if track.profile == 'uniform':
        return track.tau * (track.n_total / track.n_cells) / track.n_cells
    return track.tau / track.inverse_sum


def decoherence_margin(v: float, tau_c: float) -> float:
    """Returns the width `v * tau_c` reached by collisions during the collapse."""
    return v * tau_c


def undamped_wave_count(L: float, v: float, tau_p: float) -> float:
    """Returns `L / (v * tau_p)`, the number of undamped waves crossing a box."""
    return L / (v * tau_p)


class TimescaleReport(Result):
    """Collapse timescale of a track compared with the target order of magnitude.

    Attributes:
        tau_c: Computed collapse timescale (s).
        target: Target order of magnitude (s).
        track: Track parameters.
        discrepancy: Description of the comparison.
    """

    tau_c: float
    target: float
    track: TrackModel
    discrepancy: str

    @property
    def ratio(self) -> float:
        return self.tau_c / self.target

    def to_dict(self) -> dict[str, Any]:
        return {
            'tau_c_seconds': self.tau_c,
            'parameters': self.track.to_dict()
            | {'n_beta_mean': float(self.track.n_beta.mean())},
            'reference_comparison': {
                'target': self.target,
                'computed': self.tau_c,
                'ratio': self.ratio,
            },
            'discrepancy': self.discrepancy,
        }

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'tau_c': f'{self.tau_c:.3e} s',
            'Target': f'{self.target:.0e} s',
            'Ratio': f'{self.ratio:.3g}',
            'Discrepancy': self.discrepancy,
        }


def timescale_report(
    track: TrackModel, target: float = TARGET_TAU_C
) -> TimescaleReport:
    """Returns the collapse timescale of a track with a comparison to `target`."""
    tau_c = collapse_timescale(track)
    ratio = tau_c / target
    n_beta = float(track.n_beta.mean())
    if 0.1 <= ratio <= 10:
        text = (
            f'tau_c = {tau_c:.3g} s is of the target order {target:.0e} s'
            f' (N = {track.n_cells} cells, n_beta = {n_beta:.4g}).'
        )
    else:
        text = (
            f'tau_c = {tau_c:.3g} s differs from the target order {target:.0e} s by'
            f' a factor {ratio:.3g}: with Lambda = {track.Lambda:g} cm the track has'
            f' N = L/Lambda = {track.n_cells} cells holding n_beta = {n_beta:.4g}'
            ' intricons each, and tau_c = tau n_beta / N scales as Lambda**2. The'
            ' cell width is the least constrained input.'
        )
    logger.info('collapse timescale: %s', text)
    return TimescaleReport(tau_c, target, track, text)


class Scenario(eqx.Module):
    """Named measurement setup feeding the collapse race.

    Attributes:
        name: Scenario name.
        channels _(array of shape (k,))_: Initial channel probabilities.
        mute_mask _(array of shape (k,))_: Channels leaving no track.
        tracks: Track of each channel, `None` for mute channels.
        spherical_cells: Whether cells are spherical shells around the source.
    """

    name: str
    channels: np.ndarray
    mute_mask: np.ndarray
    tracks: tuple[TrackModel | None, ...]
    spherical_cells: bool = False

    def __check_init__(self):
        if abs(self.channels.sum() - 1.0) > 1e-12 or np.any(self.channels < 0):
            raise BadParamsError(
                f'Scenario `{self.name}` channel probabilities must lie on the'
                f' simplex, but are {self.channels.tolist()}.'
            )
        for j, (mute, track) in enumerate(zip(self.mute_mask, self.tracks)):
            if mute != (track is None):
                raise BadParamsError(
                    f'Scenario `{self.name}` channel {j} must have a track exactly'
                    ' when it is not mute.'
                )

    @property
    def tau_c(self) -> float:
        r"""Collapse timescale from the tracked channels.

        Mute channels do not contribute. With several tracks, the per-channel sums
        $\sum_\beta n_\beta^{-1}$ are averaged, which is the two-channel symmetric
        form when the tracks are identical.
        """
        tracks = [t for t in self.tracks if t is not None]
        if len(tracks) == 0:
            raise BadParamsError(f'Scenario `{self.name}` has no tracked channel.')
        if len(tracks) == 1:
            return collapse_timescale(tracks[0])
        taus = {t.tau for t in tracks}
        if len(taus) > 1:
            raise BadParamsError(
                f'Scenario `{self.name}` tracks must share the same mean free time.'
            )
        s_eff = float(np.mean([t.inverse_sum for t in tracks]))
        return tracks[0].tau / s_eff

    def to_dict(self) -> dict[str, Any]:
        return {
            'name': self.name,
            'channels': self.channels,
            'mute_mask': self.mute_mask,
            'spherical_cells': self.spherical_cells,
            'tracks': [None if t is None else t.to_dict() for t in self.tracks],
        }


def _check_p1(p1: Any) -> float:
    if not isinstance(p1, (int, float)) or not 0 <= p1 <= 1:
        raise BadParamsError(f'Parameter `p1` must be a number in [0, 1], but is {p1!r}.')
    return float(p1)


def _as_track(track: TrackModel | dict | None) -> TrackModel:
    if track is None:
        return consistent_track()
    if isinstance(track, TrackModel):
        return track
    try:
        return build_track(**track)
    except TypeError as e:
        raise BadParamsError(f'Invalid track parameters {track}: {e}.') from e


def scenario(name: str, params: dict[str, Any] | None = None) -> Scenario:
    """Returns a named measurement scenario.

    Names and parameters:

    - `'geiger_case1'` (`p1`, `track`): the particle crosses the counter in state 1
        only, channel 2 is mute.
    - `'geiger_case2'` (`p1`, `track`, `track2`): both states leave a track.
    - `'stern_gerlach'` (`p1`, `track`): two detectors behind a Stern-Gerlach
        magnet, probabilities `(p1, 1 - p1, 0, 0)` where the joint outcomes "both
        click" and "none clicks" are mute.
    - `'cat_tracks'` (`weights`, `track`, `spherical_cells`): one channel per possible
        track, with probabilities proportional to `weights`.

    A `track` is a `TrackModel` or a dict of `build_track()` arguments, and defaults
    to `consistent_track()`.

    Raises:
        BadParamsError: For an unknown name or invalid parameters.

    Examples:
        >>> sg = pq.scenario('stern_gerlach', {'p1': 0.5})
        >>> sg.channels, sg.mute_mask
        (array([0.5, 0.5, 0. , 0. ]), array([False, False,  True,  True]))
    """
    params = dict(params or {})
    known = {
        'geiger_case1': {'p1', 'track'},
        'geiger_case2': {'p1', 'track', 'track2'},
        'stern_gerlach': {'p1', 'track'},
        'cat_tracks': {'weights', 'track', 'spherical_cells'},
    }
    if name not in known:
        raise BadParamsError(
            f'Unknown scenario `{name}`, expected one of {sorted(known)}.'
        )
    unknown = set(params) - known[name]
    if unknown:
        raise BadParamsError(
            f'Unknown parameters {sorted(unknown)} for scenario `{name}`.'
        )

    track = _as_track(params.get('track'))
    if name == 'cat_tracks':
        weights = params.get('weights')
        if weights is None:
            raise BadParamsError('Scenario `cat_tracks` requires `weights`.')
        w = np.asarray(weights, dtype=np.float64)
        if w.ndim != 1 or w.size < 1 or np.any(w <= 0):
            raise BadParamsError(
                f'Parameter `weights` must be a non-empty list of positive numbers,'
                f' but is {weights!r}.'
            )
        k = w.size
        return Scenario(
            name,
            w / w.sum(),
            np.zeros(k, dtype=bool),
            (track,) * k,
            bool(params.get('spherical_cells', True)),
        )

    if 'p1' not in params:
        raise BadParamsError(f'Scenario `{name}` requires `p1`.')
    p1 = _check_p1(params['p1'])
    p = np.array([p1, 1.0 - p1])
    if name == 'geiger_case1':
        return Scenario(name, p, np.array([False, True]), (track, None))
    if name == 'geiger_case2':
        track2 = _as_track(params.get('track2', track))
        return Scenario(name, p, np.array([False, False]), (track, track2))
    return Scenario(
        name,
        np.concatenate([p, [0.0, 0.0]]),
        np.array([False, False, True, True]),
        (track, track, None, None),
    )


def run_scenario(
    scenario: Scenario,
    dt: float,
    trials: int,
    seed: int,
    *,
    noise: Noise = 'gaussian',
    options: Options = Options(),  # noqa: B008
) -> EnsembleStats:
    """Runs the collapse race of a scenario.

    The collapse timescale comes from the scenario tracks, and each channel enters
    the race only through its initial probability: the tracks never see each other.

    Args:
        scenario: Scenario to run.
        dt: Time step in units of the scenario collapse timescale.
        trials: Number of runs.
        seed: Master seed.
        noise _(string 'gaussian' or 'binary')_: Distribution of the increments.
        options: Generic options (`progress_meter`, `chunk_size`, `max_steps`).

    Returns:
        Ensemble statistics, with `tau_c` in seconds.
    """
    check_options(options, 'run_scenario')
    if trials < 1:
        raise BadParamsError(f'Argument `trials` must be >= 1, but is {trials}.')
    tau_c = scenario.tau_c
    logger.info('scenario %s: tau_c = %.3e s', scenario.name, tau_c)
    return ensemble(
        scenario.channels, dt * tau_c, tau_c, trials, seed, noise=noise,
        options=Options(
            progress_meter=options.progress_meter,
            chunk_size=options.chunk_size,
            max_steps=options.max_steps,
        ),
    )  # fmt: skip


