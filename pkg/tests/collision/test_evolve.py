import logging

import jax
import jax.numpy as jnp
import numpy as np
import pytest
from jax.scipy.linalg import expm

import predeq as pq

from ..order import TEST_INSTANT, TEST_LONG, TEST_SHORT


def setup(dim=8, seed=0):
    k_h, k_rho = jax.random.split(jax.random.PRNGKey(seed))
    H = pq.random.herm(k_h, (dim, dim))
    rho0 = pq.random.dm(k_rho, dim)
    return H, rho0


@pytest.mark.run(order=TEST_INSTANT)
def test_schedule_is_seeded():
    s1 = pq.random_collision_schedule(2.0, 10.0, 42)
    s2 = pq.random_collision_schedule(2.0, 10.0, 42)
    assert len(s1) == len(s2) > 0
    assert jnp.array_equal(s1.times, s2.times)
    assert jnp.array_equal(s1.unitaries, s2.unitaries)
    assert bool(jnp.all(jnp.diff(s1.times) >= 0))
    assert s1.unitaries.shape == (len(s1), 16, 16)

    assert len(pq.random_collision_schedule(0.0, 10.0, 42)) == 0
    with pytest.raises(pq.InvalidScheduleError):
        pq.random_collision_schedule(-1.0, 10.0, 42)


@pytest.mark.run(order=TEST_SHORT)
def test_schedule_count_is_poisson():
    counts = [
        len(pq.random_collision_schedule(2.0, 10.0, seed, dims=(2, 2)))
        for seed in range(1000)
    ]
    assert np.mean(counts) == pytest.approx(20.0, rel=0.05)
    assert np.var(counts, ddof=1) == pytest.approx(20.0, rel=0.2)


@pytest.mark.run(order=TEST_INSTANT)
def test_free_evolution_has_no_omega():
    H, rho0 = setup(dim=4)
    schedule = pq.CollisionSchedule.empty((4, 2))
    traj = pq.evolve_with_source(rho0, H, schedule, 5.0, 0.1)

    assert traj.times.shape == (51,)
    assert traj.n_collisions == 0
    assert jnp.allclose(traj.omega, 0.0, atol=1e-12)
    assert np.allclose(traj.trace_plus, 0.0, atol=1e-12)
    assert np.allclose(traj.similarity, 1.0, atol=1e-12)
    assert np.allclose(traj.purity, pq.purity(rho0), atol=1e-12)

    # the spectrum is invariant under unitary evolution
    spectrum = np.linalg.eigvalsh(np.asarray(rho0.entries))
    for rho in np.asarray(traj.rho):
        assert np.allclose(np.linalg.eigvalsh(rho), spectrum, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_evolution_matches_propagator():
    H, rho0 = setup(dim=3, seed=1)
    schedule = pq.CollisionSchedule.empty((3, 2))
    traj = pq.evolve_with_source(rho0, H, schedule, 1.0, 0.5)

    u = expm(-1j * H * 1.0)
    expected = u @ rho0.entries @ u.mT.conj()
    assert jnp.allclose(traj.rho[-1], expected, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_collision_at_sample_time_is_applied_first():
    H, rho0 = setup(dim=4, seed=2)
    u = jnp.roll(jnp.eye(8), 2, axis=0)  # cyclic shift of the apparatus
    molecule = jnp.zeros((2, 2)).at[0, 0].set(1.0)
    schedule = pq.CollisionSchedule(
        jnp.array([1.0]), molecule[None].astype(complex), u[None].astype(complex)
    )
    traj = pq.evolve_with_source(rho0, H, schedule, 2.0, 0.5)

    # samples at 0, 0.5 and 1.0 (the last after the collision)
    assert traj.distance[1] == pytest.approx(0.0, abs=1e-12)
    assert traj.distance[2] > 1e-6


@pytest.mark.run(order=TEST_INSTANT)
def test_reference_time():
    H, rho0 = setup(dim=4, seed=3)
    schedule = pq.random_collision_schedule(3.0, 4.0, 3, dims=(4, 2))
    traj = pq.evolve_with_source(
        rho0, H, schedule, 4.0, 0.1, options=pq.Options(t_ref=2.0)
    )
    before = np.asarray(traj.times) < 2.0
    assert jnp.allclose(traj.rho_iso[before], traj.rho[before], atol=1e-14)
    assert traj.t_ref == 2.0


@pytest.mark.run(order=TEST_INSTANT)
def test_evolve_errors():
    H, rho0 = setup(dim=4)
    schedule = pq.random_collision_schedule(1.0, 10.0, 0, dims=(4, 2))
    with pytest.raises(pq.InvalidScheduleError):
        pq.evolve_with_source(rho0, H, schedule, 1.0, 0.1)

    unsorted = pq.CollisionSchedule(
        schedule.times[::-1], schedule.molecules, schedule.unitaries
    )
    with pytest.raises(pq.InvalidScheduleError):
        pq.evolve_with_source(rho0, H, unsorted, 10.0, 0.1)

    with pytest.raises(ValueError, match='not used'):
        pq.evolve_with_source(
            rho0, H, schedule, 10.0, 0.1, options=pq.Options(chunk_size=3)
        )


@pytest.mark.run(order=TEST_LONG)
@pytest.mark.long
def test_omega_trace_balance():
    H, rho0 = setup(dim=8, seed=4)
    schedule = pq.random_collision_schedule(5.0, 100.0, 4, dims=(8, 2))
    traj = pq.evolve_with_source(rho0, H, schedule, 100.0, 0.1)

    assert traj.times.shape == (1001,)
    assert traj.n_collisions == len(schedule)

    trace_omega = jnp.trace(traj.omega, axis1=-2, axis2=-1)
    assert float(jnp.abs(trace_omega).max()) <= 1e-10
    assert float(jnp.abs(traj.trace_plus - traj.trace_minus).max()) <= 1e-10

    # every state of the trajectory is a density matrix
    assert np.allclose(jnp.trace(traj.rho, axis1=-2, axis2=-1).real, 1.0, atol=1e-10)
    assert float(jnp.linalg.eigvalsh(traj.rho).min()) >= -1e-10

    # reported, not asserted
    logging.warning(f'plateau Tr(Omega+) = {traj.plateau():.4f}')
    assert 0.0 <= traj.plateau() <= 1.0 + 1e-10


@pytest.mark.run(order=TEST_INSTANT)
def test_thermal_deviation():
    H, rho0 = setup(dim=4, seed=5)
    omega, split = pq.thermal_deviation(rho0, H, 1.0)
    assert float(jnp.abs(jnp.trace(omega))) <= 1e-12
    assert split.trace_plus == pytest.approx(split.trace_minus, abs=1e-12)

    thermal = pq.thermal_state(H, 1.0)
    omega, split = pq.thermal_deviation(thermal, H, 1.0)
    assert split.trace_plus == pytest.approx(0.0, abs=1e-12)
