import logging

import jax.numpy as jnp
import numpy as np
import pytest

import predeq as pq

from ..order import TEST_INSTANT, TEST_LONG


@pytest.mark.run(order=TEST_INSTANT)
def test_uniform_states_are_fixed_points():
    ones = pq.FrontField(0.25, jnp.ones(100))
    assert jnp.array_equal(pq.kpp_step(ones, 0.05).values, ones.values)

    zeros = pq.FrontField(0.25, jnp.zeros(100))
    out = pq.kpp_step(zeros, 0.05, hold_source=False)
    assert jnp.array_equal(out.values, zeros.values)


@pytest.mark.run(order=TEST_INSTANT)
def test_step_stays_in_unit_interval():
    field = pq.step_profile(50.0)
    for _ in range(200):
        field = pq.kpp_step(field, 0.05)
    g = np.asarray(field.values)
    assert g.min() >= 0.0
    assert g.max() <= 1.0
    assert field.time == pytest.approx(10.0)


@pytest.mark.run(order=TEST_INSTANT)
@pytest.mark.parametrize('mode', ['free', 'moving'])
@pytest.mark.parametrize('profile', ['step', 'ramp'])
def test_step_keeps_profile_monotone(mode, profile):
    field = pq.step_profile(80.0, 0.25)
    if profile == 'ramp':
        g = jnp.clip(1.0 - field.x / 20.0, 0.0, 1.0)
        field = pq.FrontField(0.25, g)
    for _ in range(400):
        field = pq.kpp_step(field, 0.05, mode)
        assert np.diff(np.asarray(field.values)).max() <= 1e-12


@pytest.mark.run(order=TEST_INSTANT)
def test_kpp_step_errors():
    field = pq.step_profile(50.0, 0.25)
    with pytest.raises(pq.UnstableStepError):
        pq.kpp_step(field, 0.1)  # h**2 = 0.0625
    with pytest.raises(pq.UnstableStepError):
        pq.kpp_step(field, 0.0)
    with pytest.raises(pq.GridTooShortError):
        pq.kpp_step(pq.step_profile(2.0, 0.25), 0.05)

    # a front close to the right edge
    g = jnp.where(jnp.arange(201) < 195, 1.0, 0.0)
    with pytest.raises(pq.GridTooShortError):
        pq.kpp_step(pq.FrontField(0.25, g), 0.05)


@pytest.mark.run(order=TEST_INSTANT)
def test_solve_matches_steps():
    field = pq.step_profile(30.0)
    history = pq.kpp_solve(field, 0.05, 2.0, save_every=10)

    stepped = field
    for _ in range(40):
        stepped = pq.kpp_step(stepped, 0.05)

    assert len(history) == 5
    assert np.allclose(history.times, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert jnp.allclose(history.values[-1], stepped.values, atol=1e-14)


@pytest.mark.run(order=TEST_INSTANT)
def test_front_position():
    g = jnp.array([1.0, 1.0, 0.75, 0.25, 0.0, 0.0])
    assert pq.front_position(pq.FrontField(1.0, g)) == pytest.approx(2.5)
    assert np.isnan(pq.front_position(pq.FrontField(1.0, jnp.zeros(6))))


@pytest.mark.run(order=TEST_LONG)
@pytest.mark.long
def test_free_front_speed():
    history = pq.kpp_solve(pq.step_profile(200.0, 0.25), 0.05, 100.0, mode='free')
    speed = pq.front_speed(history, t_min=20.0)
    logging.warning(f'free front speed = {speed:.4f}')
    assert speed == pytest.approx(np.sqrt(2), rel=0.05)

    columns = history.to_columns()
    assert set(columns) == {'time', 'front_position_halflevel', 'mass'}


@pytest.mark.run(order=TEST_LONG)
@pytest.mark.long
def test_moving_boundary_speed():
    history = pq.kpp_solve(pq.step_profile(150.0, 0.25), 0.05, 100.0, mode='moving')
    speed = pq.front_speed(history, t_min=20.0)
    logging.warning(f'moving front speed = {speed:.4f}')
    assert speed == pytest.approx(1.0, rel=0.05)

    # nothing beyond the boundary x = t
    field = history.field_at(len(history) - 1)
    assert float(field.values[np.asarray(field.x) > field.time + 1e-9].max()) == 0.0


@pytest.mark.run(order=TEST_LONG)
def test_linear_growth_rate():
    field = pq.bump_profile(40.0, 0.25, amplitude=1e-6)
    history = pq.kpp_solve(field, 0.025, 10.0, hold_source=False)
    rate = pq.growth_rate(history, (0.5, 8.5))
    assert rate == pytest.approx(np.log(1.025) / 0.025, rel=5e-3)
    assert rate == pytest.approx(1.0, rel=0.05)


@pytest.mark.run(order=TEST_INSTANT)
def test_front_not_formed():
    history = pq.kpp_solve(
        pq.FrontField(0.25, jnp.zeros(200)), 0.05, 30.0, hold_source=False
    )
    with pytest.raises(pq.FrontNotFormedError):
        pq.front_speed(history, t_min=5.0)
