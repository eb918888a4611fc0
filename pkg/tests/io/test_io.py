import json

import jax.numpy as jnp
import numpy as np
import pytest

import predeq as pq

from ..order import TEST_INSTANT


@pytest.mark.run(order=TEST_INSTANT)
def test_write_csv(tmp_path):
    path = tmp_path / 'out.csv'
    pq.write_csv(path, {'time': np.array([0.0, 0.5]), 'value': jnp.array([1, 2])})
    assert path.read_bytes() == b'time,value\n0,1\n0.5,2\n'

    with pytest.raises(ValueError, match='equal length'):
        pq.write_csv(path, {'a': np.zeros(2), 'b': np.zeros(3)})
    with pytest.raises(ValueError, match='equal length'):
        pq.write_csv(path, {'a': np.zeros((2, 2))})


@pytest.mark.run(order=TEST_INSTANT)
def test_write_json(tmp_path):
    path = tmp_path / 'out.json'
    obj = {'b': np.float64(0.1), 'a': jnp.array([1.0 + 2.0j]), 'c': tmp_path}
    pq.write_json(path, obj)
    text = path.read_text()
    assert text.endswith('}\n')
    assert text.index('"a"') < text.index('"b"')
    assert json.loads(text) == {'a': [[1.0, 2.0]], 'b': 0.1, 'c': str(tmp_path)}

    # objects with `to_dict()` are written through it
    track = pq.consistent_track()
    assert pq.to_jsonable(track)['n_cells'] == 1000

    with pytest.raises(TypeError):
        pq.to_jsonable(object())


@pytest.mark.run(order=TEST_INSTANT)
def test_write_json_non_finite(tmp_path):
    path = tmp_path / 'out.json'
    obj = {'nan': float('nan'), 'inf': np.array([1.0, np.inf])}
    obj['z'] = complex(np.nan, 1.0)
    pq.write_json(path, obj)
    assert json.loads(path.read_text()) == {
        'inf': [1.0, None],
        'nan': None,
        'z': [None, 1.0],
    }

    # an ensemble where every run times out has no mean collapse time
    options = pq.Options(progress_meter=None, max_steps=3)
    with pytest.warns(UserWarning, match='did not finish'):
        stats = pq.ensemble([0.5, 0.5], 1e-3, 1.0, 10, 0, options=options)
    pq.write_json(path, stats.to_dict())
    text = path.read_text()
    assert 'NaN' not in text
    assert json.loads(text)['mean_collapse_time'] is None
