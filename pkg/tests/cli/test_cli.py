import json
import math

import pytest

import predeq as pq
from predeq.cli import COMMANDS, main, parse_config

from ..order import TEST_INSTANT, TEST_LONG, TEST_SHORT


def write_toml(path, text):
    path.write_text(text, encoding='utf-8')
    return path


@pytest.mark.run(order=TEST_INSTANT)
def test_defaults_and_flags():
    config = parse_config(['collapse', '--p', '0.3,0.7', '--seed', '7'])
    assert config.command == 'collapse'
    assert config.seed == 7
    assert config.params['p'] == [0.3, 0.7]
    assert config.params['trials'] == 10_000
    assert config.params['noise'] == 'gaussian'
    assert config.params['dump_trajectory'] is False

    config = parse_config(['kpp', '--seed', '0', '--mode', 'moving', '--dt', '0.01'])
    assert config.params['mode'] == 'moving'
    assert config.params['dt'] == 0.01
    assert config.params['x_max'] is None


@pytest.mark.run(order=TEST_INSTANT)
def test_flags_override_file(tmp_path):
    path = write_toml(
        tmp_path / 'run.toml',
        'seed = 3\np = [0.5, 0.5]\ntrials = 20\ndt = 0.005\noutput_dir = "from-file"\n',
    )
    config = parse_config(['collapse', '--config', str(path), '--trials', '7'])
    assert config.seed == 3
    assert config.params['p'] == [0.5, 0.5]
    assert config.params['trials'] == 7
    assert config.params['dt'] == 0.005
    assert config.params['tau_c'] == 1.0
    assert config.output_dir == 'from-file'

    # the same file passed directly
    config = parse_config(['collapse', '--seed', '4'], config_file=path)
    assert config.seed == 4
    assert config.params['trials'] == 20


@pytest.mark.run(order=TEST_INSTANT)
def test_json_config(tmp_path):
    path = tmp_path / 'run.json'
    path.write_text(json.dumps({'command': 'timescale', 'seed': 1, 'track': 'consistent'}))
    config = parse_config(['timescale', '--config', str(path)])
    assert config.params['track'] == 'consistent'

    with pytest.raises(pq.BadParamsError, match='for command'):
        parse_config(['kpp', '--config', str(path)])


@pytest.mark.run(order=TEST_INSTANT)
def test_unknown_key(tmp_path):
    path = write_toml(tmp_path / 'run.toml', 'seed = 1\nbogus = 2\n')
    with pytest.raises(pq.UnknownKeyError) as e:
        parse_config(['timescale', '--config', str(path)])
    assert e.value.key == 'bogus'


@pytest.mark.run(order=TEST_INSTANT)
def test_missing_required():
    with pytest.raises(pq.MissingRequiredError) as e:
        parse_config(['timescale'])
    assert e.value.key == 'seed'

    with pytest.raises(pq.MissingRequiredError) as e:
        parse_config(['collapse', '--seed', '1'])
    assert e.value.key == 'p'

    config = parse_config(['timescale', '--random-seed'])
    assert config.seed_source == 'random'
    assert 0 <= config.seed < 2**63


@pytest.mark.run(order=TEST_INSTANT)
def test_type_errors(tmp_path):
    with pytest.raises(pq.ConfigTypeError) as e:
        parse_config(['collapse', '--p', '0.5,0.5', '--seed', '1', '--trials', 'many'])
    assert e.value.key == 'trials'

    path = write_toml(tmp_path / 'run.toml', 'seed = 1\np = [0.5, 0.5]\ntrials = 2.5\n')
    with pytest.raises(pq.ConfigTypeError):
        parse_config(['collapse', '--config', str(path)])

    path = write_toml(tmp_path / 'bool.toml', 'seed = 1\nliteral_lambda = "yes"\n')
    with pytest.raises(pq.ConfigTypeError):
        parse_config(['timescale', '--config', str(path)])


@pytest.mark.run(order=TEST_INSTANT)
def test_invalid_values():
    with pytest.raises(pq.OffSimplexError):
        parse_config(['collapse', '--p', '0.3,0.6', '--seed', '1'])
    with pytest.raises(pq.BadParamsError):
        parse_config(['collapse', '--p', '0.5,0.5', '--seed', '1', '--noise', 'cauchy'])
    with pytest.raises(pq.BadParamsError):
        parse_config(['timescale', '--seed', '-1'])
    with pytest.raises(pq.BadParamsError):
        parse_config(['teleport', '--seed', '1'])


@pytest.mark.run(order=TEST_INSTANT)
def test_output_dir_from_environment(monkeypatch):
    monkeypatch.setenv('PREDEQ_OUTPUT_DIR', '/tmp/predeq-env')
    config = parse_config(['timescale', '--seed', '1'])
    assert config.output_dir == '/tmp/predeq-env'

    config = parse_config(['timescale', '--seed', '1', '--output-dir', 'flag'])
    assert config.output_dir == 'flag'

    monkeypatch.delenv('PREDEQ_OUTPUT_DIR')
    config = parse_config(['timescale', '--seed', '1'])
    assert config.output_dir == 'predeq-output'


@pytest.mark.run(order=TEST_INSTANT)
def test_exit_status(tmp_path):
    out = str(tmp_path / 'out')
    assert main(['collapse', '--p', '0.3,0.6', '--seed', '1', '--output-dir', out]) == 1
    assert main(['timescale', '--output-dir', out]) == 1
    assert main(['timescale', '--seed', '0', '-q', '--output-dir', out]) == 0


@pytest.mark.run(order=TEST_INSTANT)
def test_timescale_command(tmp_path):
    out = tmp_path / 'out'
    assert main(['timescale', '--seed', '0', '-q', '--output-dir', str(out)]) == 0

    report = json.loads((out / 'timescale.json').read_text())
    assert report['tau_c_seconds'] == pytest.approx(9e-16, rel=0.01)
    assert report['reference_comparison']['target'] == 1e-11
    assert report['discrepancy']
    assert report['parameters']['n_cells'] == 333_334

    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['command'] == 'timescale'
    assert manifest['seed'] == 0
    assert manifest['version'] == pq.__version__
    assert manifest['files'] == {'timescale': 'timescale.json'}
    assert manifest['params']['track'] == 'literal'


@pytest.mark.run(order=TEST_SHORT)
def test_collapse_command_is_reproducible(tmp_path):
    args = ['collapse', '--p', '0.3,0.7', '--trials', '50', '--dt', '0.01']
    args += ['--seed', '12', '-q', '--dump-trajectory', '--dump-steps', '20']
    assert main([*args, '--output-dir', str(tmp_path / 'a')]) == 0
    assert main([*args, '--output-dir', str(tmp_path / 'b')]) == 0

    for name in ('stats.json', 'trajectory.csv'):
        first = (tmp_path / 'a' / name).read_bytes()
        assert first == (tmp_path / 'b' / name).read_bytes()

    stats = json.loads((tmp_path / 'a' / 'stats.json').read_text())
    assert stats['trials'] == 50
    assert sum(stats['win_counts']) + stats['timeouts'] == 50

    lines = (tmp_path / 'a' / 'trajectory.csv').read_text().splitlines()
    assert lines[0] == 'time,p_0,p_1'
    assert len(lines) == 22


@pytest.mark.run(order=TEST_SHORT)
def test_scenario_command(tmp_path):
    out = tmp_path / 'out'
    args = ['scenario', '--name', 'stern_gerlach', '--p1', '0.5', '--trials', '40']
    args += ['--dt', '0.01', '--seed', '3', '-q', '--output-dir', str(out)]
    assert main(args) == 0

    stats = json.loads((out / 'stats.json').read_text())
    assert stats['scenario']['name'] == 'stern_gerlach'
    assert stats['win_counts'][2:] == [0, 0]
    assert stats['tau_c'] == pytest.approx(1e-11, rel=1e-12)


@pytest.mark.run(order=TEST_SHORT)
def test_front_walk_command(tmp_path):
    out = tmp_path / 'out'
    args = ['front-walk', '--n-steps', '30', '--cap', '1000000', '--seed', '0', '-q']
    assert main([*args, '--output-dir', str(out)]) == 0

    summary = json.loads((out / 'walk.json').read_text())
    assert summary['front_speed_planes_per_step'] == pytest.approx(1.0)
    assert summary['growth_rate'] == pytest.approx(0.6931471805599453, rel=1e-9)
    assert (out / 'walk.csv').read_text().startswith('time,front_position')


@pytest.mark.run(order=TEST_LONG)
@pytest.mark.long
def test_kpp_command(tmp_path):
    out = tmp_path / 'out'
    args = ['kpp', '--mode', 'free', '--t-end', '100', '--seed', '0', '-q']
    assert main([*args, '--output-dir', str(out)]) == 0

    speed = json.loads((out / 'speed.json').read_text())
    assert speed['expected_speed'] == pytest.approx(math.sqrt(2))
    assert speed['front_speed'] == pytest.approx(math.sqrt(2), rel=0.05)
    assert (out / 'front.csv').read_text().startswith('time,')

    manifest = json.loads((out / 'manifest.json').read_text())
    assert manifest['params']['dt'] == 0.025
    assert manifest['params']['grid_spacing'] == 0.25


SMALL_RUNS = {
    'collapse': ['--p', '0.3,0.7', '--trials', '20', '--dt', '0.01',
                 '--dump-trajectory', '--dump-steps', '10'],
    'kpp': ['--t-end', '25', '--t-min', '2'],
    'front-walk': ['--n-steps', '20'],
    'scatter': ['--dims', '4,2'],
    'omega': ['--dim', '4', '--rate', '1', '--t-end', '5', '--dt', '0.1'],
    'scenario': ['--name', 'geiger_case1', '--p1', '0.5', '--trials', '20',
                 '--dt', '0.01'],
    'timescale': [],
}  # fmt: skip


@pytest.mark.run(order=TEST_INSTANT)
def test_every_command_has_a_small_run():
    assert set(SMALL_RUNS) == set(COMMANDS)


@pytest.mark.run(order=TEST_SHORT)
@pytest.mark.parametrize('command', sorted(SMALL_RUNS))
def test_command_is_reproducible(tmp_path, command):
    args = [command, *SMALL_RUNS[command], '--seed', '5', '-q']
    assert main([*args, '--output-dir', str(tmp_path / 'a')]) == 0
    assert main([*args, '--output-dir', str(tmp_path / 'b')]) == 0

    # the manifest records the output directory, every result file must match
    names = sorted(p.name for p in (tmp_path / 'a').iterdir())
    assert names == sorted(p.name for p in (tmp_path / 'b').iterdir())
    assert 'manifest.json' in names
    for name in names:
        if name == 'manifest.json':
            continue
        first = (tmp_path / 'a' / name).read_bytes()
        assert first == (tmp_path / 'b' / name).read_bytes()
