"""Batch command-line front end of `predeq`.

Every command takes its parameters from flags, from a TOML or JSON file given with
`--config`, or both (flags win), and writes a `manifest.json` holding everything
needed to reproduce the run next to its result files.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tomllib
from collections.abc import Sequence
from pathlib import Path
from typing import Any, NamedTuple

import equinox as eqx
import jax
import jax.numpy as jnp
import numpy as np

from . import random as pqr
from ._checks import check_simplex
from .collapse import ensemble, simulate_paths
from .collision import (
    energy_conserving_unitary,
    evolve_with_source,
    random_collision_schedule,
    scatter,
)
from .denmat import new_density
from .errors import (
    BadParamsError,
    ConfigTypeError,
    MissingRequiredError,
    PredeqError,
    UnknownKeyError,
)
from .io import write_csv, write_json
from .measurement import (
    consistent_track,
    literal_track,
    run_scenario,
    scenario,
    timescale_report,
)
from .options import Options
from .transport import (
    WalkPopulation,
    bump_profile,
    duplication_walk,
    front_speed,
    growth_rate,
    kpp_solve,
    physical_speed,
    step_profile,
)

__all__ = ['RunConfig', 'execute', 'main', 'parse_config']

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = 'PREDEQ_OUTPUT_DIR'
DEFAULT_OUTPUT_DIR = 'predeq-output'
MAX_SEED = 2**63


class _Required:
    def __repr__(self) -> str:
        return '<required>'


REQUIRED = _Required()


class Param(NamedTuple):
    kind: str  # 'int', 'float', 'str', 'bool', 'ints' or 'floats'
    default: Any
    help: str
    choices: tuple[str, ...] | None = None


COMMANDS: dict[str, tuple[str, dict[str, Param]]] = {
    'collapse': (
        'race channel probabilities to collapse and count the winners',
        {
            'p': Param('floats', REQUIRED, 'initial probabilities, e.g. 0.3,0.7'),
            'trials': Param('int', 10_000, 'number of runs'),
            'dt': Param('float', 1e-3, 'time step in units of tau_c'),
            'tau_c': Param('float', 1.0, 'collapse timescale'),
            'noise': Param('str', 'gaussian', 'increments', ('gaussian', 'binary')),
            'max_steps': Param('int', 10_000_000, 'steps before a run times out'),
            'chunk_size': Param('int', 1000, 'runs simulated together'),
            'dump_trajectory': Param('bool', False, 'also write one probability path'),
            'dump_steps': Param('int', 1000, 'steps of the dumped path'),
        },
    ),
    'kpp': (
        'integrate the intricacy front equation and measure its speed',
        {
            'mode': Param('str', 'free', 'boundary mode', ('free', 'moving')),
            't_end': Param('float', 100.0, 'final time in units of tau'),
            'dt': Param('float', 0.025, 'time step, at most grid_spacing**2'),
            'grid_spacing': Param('float', 0.25, 'grid spacing in mean free paths'),
            'x_max': Param('float', None, 'grid length, sized from t_end by default'),
            't_min': Param('float', 20.0, 'start of the speed fit'),
            'initial': Param('str', 'step', 'initial profile', ('step', 'bump')),
        },
    ),
    'front-walk': (
        'run the duplication walk and measure its front and growth',
        {
            'n_steps': Param('int', 100, 'number of steps'),
            'cap': Param('int', 1_000_000, 'population above which planes saturate'),
            'site_cap': Param('int', 16, 'walkers per plane after saturation'),
            'branch_probability': Param('float', 1.0, 'probability to duplicate'),
            'window': Param('floats', None, 'growth fit window, e.g. 0,15'),
            'lambda_mfp': Param('float', 1e-5, 'mean free path (cm)'),
            'tau': Param('float', 1e-10, 'mean free time (s)'),
        },
    ),
    'scatter': (
        'apply one random collision to a random apparatus state',
        {
            'dims': Param('ints', [4, 2], 'apparatus and molecule dimensions'),
            'unitary': Param(
                'str', 'haar', 'joint unitary', ('haar', 'energy_conserving', 'full')
            ),
        },
    ),
    'omega': (
        'evolve an apparatus state under random collisions and track Omega',
        {
            'dim': Param('int', 8, 'apparatus dimension'),
            'molecule_dim': Param('int', 2, 'molecule dimension'),
            'rate': Param('float', 1.0, 'collisions per unit time'),
            't_end': Param('float', 20.0, 'final time'),
            'dt': Param('float', 0.02, 'sampling step'),
            't_ref': Param('float', 0.0, 'reference time of the free evolution'),
        },
    ),
    'scenario': (
        'run the collapse race of a measurement scenario',
        {
            'name': Param(
                'str',
                REQUIRED,
                'scenario name',
                ('geiger_case1', 'geiger_case2', 'stern_gerlach', 'cat_tracks'),
            ),
            'p1': Param('float', None, 'probability of channel 1'),
            'weights': Param('floats', None, 'cat_tracks channel weights'),
            'trials': Param('int', 10_000, 'number of runs'),
            'dt': Param('float', 1e-3, 'time step in units of tau_c'),
            'noise': Param('str', 'gaussian', 'increments', ('gaussian', 'binary')),
            'max_steps': Param('int', 10_000_000, 'steps before a run times out'),
            'chunk_size': Param('int', 1000, 'runs simulated together'),
        },
    ),
    'timescale': (
        'estimate the collapse timescale of a detector track',
        {
            'track': Param(
                'str', 'literal', 'parameter set', ('literal', 'consistent')
            ),
            'literal_lambda': Param('bool', False, 'use a 1e5 cm mean free path'),
            'target': Param('float', 1e-11, 'target order of magnitude (s)'),
        },
    ),
}


class RunConfig(eqx.Module):
    """Fully resolved configuration of a command-line run.

    Attributes:
        command: Command name.
        seed: Master seed.
        output_dir: Directory receiving every output file.
        params: Command parameters, defaults included.
        seed_source: `'explicit'`, or `'random'` when drawn with `--random-seed`.
    """

    command: str
    seed: int
    output_dir: str
    params: dict[str, Any]
    seed_source: str = 'explicit'

    def to_dict(self) -> dict[str, Any]:
        return {
            'command': self.command,
            'seed': self.seed,
            'seed_source': self.seed_source,
            'output_dir': self.output_dir,
            'params': self.params,
        }


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise BadParamsError(message)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', default=argparse.SUPPRESS, help='master seed')
    common.add_argument(
        '--random-seed',
        action='store_true',
        help='draw the seed from the system entropy when none is given',
    )
    common.add_argument('--config', help='TOML or JSON configuration file')
    common.add_argument(
        '--output-dir',
        default=argparse.SUPPRESS,
        help=f'output directory (default: ${OUTPUT_DIR_ENV} or ./{DEFAULT_OUTPUT_DIR})',
    )
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument('-v', '--verbose', action='store_true', help='debug logs')
    verbosity.add_argument('-q', '--quiet', action='store_true', help='warnings only')

    parser = _Parser(prog='predeq', description='Predecoherence and collapse toolkit.')
    subparsers = parser.add_subparsers(dest='command', required=True)
    for command, (description, params) in COMMANDS.items():
        sub = subparsers.add_parser(
            command, parents=[common], help=description, description=description
        )
        for key, param in params.items():
            flag = '--' + key.replace('_', '-')
            if param.kind == 'bool':
                sub.add_argument(
                    flag, dest=key, action='store_true', default=argparse.SUPPRESS,
                    help=param.help,
                )  # fmt: skip
            else:
                sub.add_argument(
                    flag, dest=key, default=argparse.SUPPRESS, help=param.help
                )
    return parser


def _load_file(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise BadParamsError(f'Configuration file `{path}` does not exist.')
    if path.suffix == '.toml':
        with path.open('rb') as f:
            return tomllib.load(f)
    if path.suffix == '.json':
        data = json.loads(path.read_text(encoding='utf-8'))
        if not isinstance(data, dict):
            raise BadParamsError(f'Configuration file `{path}` must hold an object.')
        return data
    raise BadParamsError(
        f'Configuration file `{path}` must end with `.toml` or `.json`.'
    )


def _convert(key: str, value: Any, kind: str) -> Any:
    # flag values arrive as strings, file values with their native type
    try:
        if kind == 'int':
            if isinstance(value, bool) or isinstance(value, float):
                raise TypeError
            return int(value)
        if kind == 'float':
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if kind == 'bool':
            if not isinstance(value, bool):
                raise TypeError
            return value
        if kind == 'str':
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(value, str):
            value = [x for x in value.split(',') if x.strip()]
        if not isinstance(value, list):
            raise TypeError
        return [_convert(key, x, kind[:-1]) for x in value]
    except (TypeError, ValueError) as e:
        expected = {'ints': 'list of integers', 'floats': 'list of numbers'}
        raise ConfigTypeError(key, expected.get(kind, kind), value) from e


def _draw_seed() -> int:
    return int(np.random.SeedSequence().entropy % MAX_SEED)


def parse_config(
    argv: Sequence[str] | None = None, config_file: str | Path | None = None
) -> RunConfig:
    """Returns the run configuration described by command-line arguments.

    Values come from the parameter defaults, then from the configuration file
    (`config_file` or `--config`), then from the flags, each overriding the previous.

    Args:
        argv: Command-line arguments, defaults to `sys.argv[1:]`.
        config_file: TOML or JSON file with top-level parameter keys.

    Returns:
        Resolved configuration.

    Raises:
        UnknownKeyError: If the file holds a key the command does not know.
        MissingRequiredError: If a required parameter or the seed is missing.
        ConfigTypeError: If a value has the wrong type.
        OffSimplexError: If collapse probabilities do not sum to 1.

    Examples:
        >>> cfg = parse_config(['collapse', '--p', '0.3,0.7', '--seed', '7'])
        >>> cfg.params['p'], cfg.seed
        ([0.3, 0.7], 7)
    """
    args = vars(_build_parser().parse_args(argv))
    command = args.pop('command')
    params_spec = COMMANDS[command][1]

    config_file = config_file if config_file is not None else args.get('config')
    file_values = _load_file(config_file) if config_file is not None else {}
    file_command = file_values.pop('command', command)
    if file_command != command:
        raise BadParamsError(
            f'Configuration file is for command `{file_command}`, not `{command}`.'
        )

    for key in file_values:
        if key not in params_spec and key not in ('seed', 'output_dir'):
            raise UnknownKeyError(key, command)

    params = {}
    for key, param in params_spec.items():
        if key in args:
            value = _convert(key, args[key], param.kind)
        elif key in file_values:
            value = _convert(key, file_values[key], param.kind)
        elif param.default is REQUIRED:
            raise MissingRequiredError(key, command)
        else:
            value = param.default
        if param.choices is not None and value not in param.choices:
            raise BadParamsError(
                f'Parameter `{key}` must be one of {list(param.choices)}, but is'
                f' {value!r}.'
            )
        params[key] = value

    seed_source = 'explicit'
    if 'seed' in args:
        seed = _convert('seed', args['seed'], 'int')
    elif 'seed' in file_values:
        seed = _convert('seed', file_values['seed'], 'int')
    elif args.get('random_seed'):
        seed, seed_source = _draw_seed(), 'random'
    else:
        raise MissingRequiredError('seed', command)
    if not 0 <= seed < MAX_SEED:
        raise BadParamsError(f'Argument `seed` must be in [0, 2**63), but is {seed}.')

    output_dir = args.get('output_dir', file_values.get('output_dir'))
    if output_dir is None:
        output_dir = os.environ.get(OUTPUT_DIR_ENV, DEFAULT_OUTPUT_DIR)

    if command == 'collapse':
        check_simplex(params['p'], 'p')

    return RunConfig(command, seed, str(output_dir), params, seed_source)


def _options(**kwargs: Any) -> Options:
    # progress bars only at the default verbosity or above
    if logger.getEffectiveLevel() > logging.INFO:
        kwargs['progress_meter'] = None
    return Options(**kwargs)


def _run_collapse(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    options = _options(chunk_size=p['chunk_size'], max_steps=p['max_steps'])
    stats = ensemble(
        p['p'], p['dt'] * p['tau_c'], p['tau_c'], p['trials'], config.seed,
        noise=p['noise'], options=options,
    )  # fmt: skip
    files = {'stats': out / 'stats.json'}
    write_json(files['stats'], stats.to_dict())
    if p['dump_trajectory']:
        paths = simulate_paths(
            p['p'], p['dt'] * p['tau_c'], p['tau_c'], p['dump_steps'], 1, config.seed,
            noise=p['noise'], options=_options(),
        )  # fmt: skip
        files['trajectory'] = out / 'trajectory.csv'
        write_csv(files['trajectory'], paths.to_columns(0))
    logger.info('win frequency %s', stats.win_frequency)
    return files


def _run_kpp(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    x_max = p['x_max'] or math.ceil(1.6 * p['t_end']) + 20.0
    if p['initial'] == 'step':
        field = step_profile(x_max, p['grid_spacing'])
    else:
        field = bump_profile(x_max, p['grid_spacing'])
    history = kpp_solve(field, p['dt'], p['t_end'], p['mode'])
    expected = math.sqrt(2.0) if p['mode'] == 'free' else 1.0
    speed = front_speed(history, t_min=p['t_min'])

    files = {'front': out / 'front.csv', 'speed': out / 'speed.json'}
    write_csv(files['front'], history.to_columns())
    write_json(
        files['speed'],
        {
            'mode': p['mode'],
            'front_speed': speed,
            'expected_speed': expected,
            'relative_error': abs(speed - expected) / expected,
        },
    )
    logger.info('front speed %.6g (expected %.6g)', speed, expected)
    return files


def _run_front_walk(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    history = duplication_walk(
        WalkPopulation.single(), p['n_steps'], p['cap'], config.seed,
        site_cap=p['site_cap'], branch_probability=p['branch_probability'],
    )  # fmt: skip
    if p['window'] is not None:
        if len(p['window']) != 2:
            raise ConfigTypeError('window', 'list of 2 numbers', p['window'])
        window = tuple(p['window'])
    else:
        # stop the fit before the population comes close to saturation
        saturated = np.nonzero(history.totals > p['cap'] // 2)[0]
        window = (0.0, float(saturated[0] - 1 if saturated.size else p['n_steps']))
    rate = growth_rate(history, window)
    speed = history.front_speed()

    files = {'walk': out / 'walk.csv', 'summary': out / 'walk.json'}
    write_csv(files['walk'], history.to_columns())
    write_json(
        files['summary'],
        {
            'front_speed_planes_per_step': speed,
            'front_speed_cm_per_s': physical_speed(speed, p['lambda_mfp'], p['tau']),
            'growth_rate': rate,
            'growth_window': list(window),
        },
    )
    logger.info('walk front speed %.6g planes/step, growth %.6g', speed, rate)
    return files


def _run_scatter(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    if len(p['dims']) != 2 or min(p['dims']) < 1:
        raise ConfigTypeError('dims', 'list of 2 positive integers', p['dims'])
    n_a, n_m = p['dims']
    n = n_a * n_m
    k_rho, k_u = jax.random.split(jax.random.PRNGKey(config.seed))
    rho = pqr.dm(k_rho, n_a)
    molecule = new_density(jnp.zeros((n_m, n_m)).at[0, 0].set(1.0))
    if p['unitary'] == 'haar':
        u = pqr.unitary(k_u, (n, n))
    elif p['unitary'] == 'full':
        u = jnp.roll(jnp.eye(n), 1, axis=0)
    else:
        H_A = jnp.diag(jnp.arange(n_a, dtype=float))
        H_M = jnp.diag(jnp.arange(n_m, dtype=float))
        u = energy_conserving_unitary(k_u, H_A, H_M)
    delta = scatter(rho, molecule, u)

    files = {'scatter': out / 'scatter.json'}
    write_json(
        files['scatter'],
        {
            'epsilon': delta.epsilon,
            'trace_delta_plus': delta.delta_plus.trace,
            'trace_delta_minus': delta.delta_minus.trace,
            'trace_after': delta.rho_after.trace,
            'depletion': delta.depletion,
            'rho_before': rho.to_dict(),
            'rho_after': delta.rho_after.to_dict(),
        },
    )
    logger.info('collision probability %.6g', delta.epsilon)
    return files


def _run_omega(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    key = jax.random.fold_in(jax.random.PRNGKey(config.seed), 1)
    k_h, k_rho = jax.random.split(key)
    H = pqr.herm(k_h, (p['dim'], p['dim']))
    rho0 = pqr.dm(k_rho, p['dim'])
    schedule = random_collision_schedule(
        p['rate'], p['t_end'], config.seed, dims=(p['dim'], p['molecule_dim'])
    )
    trajectory = evolve_with_source(
        rho0, H, schedule, p['t_end'], p['dt'], options=Options(t_ref=p['t_ref'])
    )

    files = {'omega': out / 'omega.csv', 'summary': out / 'omega.json'}
    write_csv(files['omega'], trajectory.to_columns())
    write_json(
        files['summary'],
        {
            'n_collisions': trajectory.n_collisions,
            'plateau_trace_plus': trajectory.plateau(),
            'max_abs_trace_omega': float(
                jnp.abs(jnp.trace(trajectory.omega, axis1=-2, axis2=-1)).max()
            ),
            'max_trace_split_gap': float(
                jnp.abs(trajectory.trace_plus - trajectory.trace_minus).max()
            ),
        },
    )
    logger.info('plateau Tr(Omega+) = %.6g', trajectory.plateau())
    return files


def _run_scenario(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    params = {k: p[k] for k in ('p1', 'weights') if p[k] is not None}
    setup = scenario(p['name'], params)
    options = _options(chunk_size=p['chunk_size'], max_steps=p['max_steps'])
    stats = run_scenario(
        setup, p['dt'], p['trials'], config.seed, noise=p['noise'], options=options
    )

    files = {'stats': out / 'stats.json'}
    write_json(files['stats'], stats.to_dict() | {'scenario': setup.to_dict()})
    logger.info('scenario %s win frequency %s', p['name'], stats.win_frequency)
    return files


def _run_timescale(config: RunConfig, out: Path) -> dict[str, Path]:
    p = config.params
    if p['track'] == 'consistent':
        if p['literal_lambda']:
            raise BadParamsError('Flag `--literal-lambda` requires `--track literal`.')
        track = consistent_track()
    else:
        track = literal_track(1e5 if p['literal_lambda'] else 1e-5)
    report = timescale_report(track, p['target'])

    files = {'timescale': out / 'timescale.json'}
    write_json(files['timescale'], report.to_dict())
    return files


_RUNNERS = {
    'collapse': _run_collapse,
    'kpp': _run_kpp,
    'front-walk': _run_front_walk,
    'scatter': _run_scatter,
    'omega': _run_omega,
    'scenario': _run_scenario,
    'timescale': _run_timescale,
}


def execute(config: RunConfig) -> dict[str, Path]:
    """Runs a command and writes its result files and manifest.

    Returns:
        Path of every written file, keyed by role.
    """
    from . import __version__

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    logger.info('running `%s` with seed %d into %s', config.command, config.seed, out)
    files = _RUNNERS[config.command](config, out)

    manifest = config.to_dict() | {
        'version': __version__,
        'files': {k: v.name for k, v in files.items()},
    }
    files['manifest'] = out / 'manifest.json'
    write_json(files['manifest'], manifest)
    return files


def main(argv: Sequence[str] | None = None) -> int:
    """Entry point of the `predeq` command, returns the exit status.

    The status is 0 on success, 1 on a validation error and 2 on any other error.
    """
    argv = sys.argv[1:] if argv is None else list(argv)
    level = logging.INFO
    if '-v' in argv or '--verbose' in argv:
        level = logging.DEBUG
    elif '-q' in argv or '--quiet' in argv:
        level = logging.WARNING
    logging.basicConfig(
        stream=sys.stderr, level=level, format='%(levelname)s %(name)s: %(message)s'
    )

    try:
        config = parse_config(argv)
        execute(config)
    except PredeqError as e:
        logger.error('%s', e)
        return 1
    except Exception as e:  # noqa: BLE001
        logger.error('%s: %s', type(e).__name__, e)
        return 2
    return 0
