import jax
import jax.numpy as jnp
import numpy as np
import pytest

import predeq as pq

from ..order import TEST_INSTANT, TEST_SHORT


def random_collision(key, dims):
    n_a, n_m = dims
    k_rho, k_mol, k_u = jax.random.split(key, 3)
    rho = pq.random.dm(k_rho, n_a)
    molecule = pq.random.dm(k_mol, n_m)
    u = pq.random.unitary(k_u, (n_a * n_m, n_a * n_m))
    return rho, molecule, u


def ground(n):
    return pq.new_density(jnp.zeros((n, n)).at[0, 0].set(1.0))


@pytest.mark.run(order=TEST_SHORT)
@pytest.mark.parametrize('dims', [(4, 2), (8, 2), (8, 4)])
def test_trace_identities(dims):
    keys = jax.random.split(jax.random.PRNGKey(0), 200)
    for key in keys:
        rho, molecule, u = random_collision(key, dims)
        delta = pq.scatter(rho, molecule, u)

        assert abs(delta.delta_plus.trace - delta.delta_minus.trace) <= 1e-10
        assert delta.delta_minus.trace == pytest.approx(delta.epsilon, abs=1e-12)
        assert 0.0 <= delta.epsilon <= 1.0 + 1e-12
        assert abs(delta.rho_after.trace - 1.0) <= 1e-10
        assert float(delta.rho_after.eigvalsh().min()) >= -1e-10

        # outgoing state decomposition
        recon = rho.entries - delta.delta_minus.entries + delta.delta_plus.entries
        assert jnp.allclose(recon, delta.rho_after.entries, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_direct_gain_term():
    rho, molecule, u = random_collision(jax.random.PRNGKey(1), (4, 2))
    delta = pq.scatter(rho, molecule, u)

    direct = delta.delta_plus_direct
    assert float(direct.eigvalsh().min()) >= -1e-12
    assert direct.trace == pytest.approx(delta.epsilon, abs=1e-12)

    # the forward interference is traceless
    trace = jnp.trace(delta.forward_interference).real
    assert float(trace) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_full_scattering():
    n = 4 * 2
    rho = pq.random.dm(jax.random.PRNGKey(2), 4)
    u = jnp.roll(jnp.eye(n), 1, axis=0)  # every |kq> leaves its joint state
    delta = pq.scatter(rho, ground(2), u)
    assert delta.epsilon == pytest.approx(1.0, abs=1e-10)
    assert np.allclose(delta.depletion, 1.0, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_identity_collision():
    rho = pq.random.dm(jax.random.PRNGKey(3), 4)
    delta = pq.scatter(rho, ground(2), jnp.eye(8))
    assert delta.epsilon == pytest.approx(0.0, abs=1e-12)
    assert jnp.allclose(delta.rho_after.entries, rho.entries, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_molecule_flip():
    rho = pq.new_density(jnp.diag(jnp.array([0.6, 0.4])))
    flip = jnp.kron(jnp.eye(2), jnp.array([[0, 1], [1, 0]]))
    delta = pq.scatter(rho, ground(2), flip)

    assert delta.epsilon == pytest.approx(1.0)
    # the apparatus is untouched, the whole state is scattered and recovered
    assert jnp.allclose(delta.rho_after.entries, rho.entries, atol=1e-12)
    assert jnp.allclose(delta.delta_plus.entries, rho.entries, atol=1e-12)
    assert jnp.allclose(delta.forward_interference, 0.0, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_scatter_errors():
    rho = pq.random.dm(jax.random.PRNGKey(4), 4)
    with pytest.raises(pq.NotUnitaryError):
        pq.scatter(rho, ground(2), 1.1 * jnp.eye(8))
    with pytest.raises(pq.DimMismatchError):
        pq.scatter(rho, ground(2), jnp.eye(6))


@pytest.mark.run(order=TEST_INSTANT)
def test_eigvec_sensitivity():
    rho = jnp.diag(jnp.array([0.5, 0.3, 0.2]))
    delta = jnp.array([[0.0, 1e-3, 0.0], [1e-3, 0.0, 0.0], [0.0, 0.0, 0.0]])
    report = pq.eigvec_sensitivity(rho, delta)
    assert report.gap_min == pytest.approx(0.1)
    assert report.max_term == pytest.approx(1e-3 / 0.2)
    assert not bool(report.flagged.any())
    assert np.isnan(np.asarray(report.terms)[0, 0])

    # degenerate eigenvalues are flagged instead of divided
    report = pq.eigvec_sensitivity(jnp.eye(2) / 2, jnp.array([[0, 1e-3], [1e-3, 0]]))
    assert bool(report.flagged[0, 1])
    assert report.gap_min == 0.0


@pytest.mark.run(order=TEST_INSTANT)
def test_energy_conserving_unitary():
    H_A = jnp.diag(jnp.array([0.0, 1.0, 2.0]))
    H_M = jnp.diag(jnp.array([0.0, 1.0]))
    u = pq.energy_conserving_unitary(jax.random.PRNGKey(5), H_A, H_M)
    h = jnp.kron(H_A, jnp.eye(2)) + jnp.kron(jnp.eye(3), H_M)

    assert jnp.allclose(u.mT.conj() @ u, jnp.eye(6), atol=1e-12)
    assert jnp.allclose(u @ h, h @ u, atol=1e-12)

    us = pq.energy_conserving_unitary(jax.random.PRNGKey(5), H_A, H_M, shape=(3,))
    assert us.shape == (3, 6, 6)


@pytest.mark.run(order=TEST_INSTANT)
def test_random_unitary_is_unitary():
    u = pq.random.unitary(jax.random.PRNGKey(6), (5, 8, 8))
    eye = jnp.broadcast_to(jnp.eye(8), (5, 8, 8))
    assert jnp.allclose(u.mT.conj() @ u, eye, atol=1e-12)


def basis_sum(rho, molecule, u):
    # gain and loss terms summed over the joint eigenbasis |k>|q>, one state at a time
    p, v = np.linalg.eigh(np.asarray(rho))
    m, w = np.linalg.eigh(np.asarray(molecule))
    n_a, n_m = len(p), len(m)
    u = np.asarray(u)
    after = np.zeros((n_a, n_a), dtype=complex)
    loss = np.zeros((n_a, n_a), dtype=complex)
    direct = np.zeros((n_a, n_a), dtype=complex)
    for k in range(n_a):
        for q in range(n_m):
            kq = np.kron(v[:, k], w[:, q])
            out = u @ kq
            forward = np.vdot(kq, out)
            chi = (out - forward * kq).reshape(n_a, n_m)
            out = out.reshape(n_a, n_m)
            after += p[k] * m[q] * out @ out.conj().T
            direct += p[k] * m[q] * chi @ chi.conj().T
            d = 1.0 - abs(forward) ** 2
            loss += p[k] * m[q] * d * np.outer(v[:, k], v[:, k].conj())
    return after, loss, direct


@pytest.mark.run(order=TEST_INSTANT)
@pytest.mark.parametrize('dims', [(4, 2), (3, 3)])
def test_scatter_matches_basis_sum(dims):
    rho, molecule, u = random_collision(jax.random.PRNGKey(7), dims)
    delta = pq.scatter(rho, molecule, u)
    after, loss, direct = basis_sum(rho.entries, molecule.entries, u)

    assert np.allclose(delta.rho_after.entries, after, atol=1e-12)
    assert np.allclose(delta.delta_minus.entries, loss, atol=1e-12)
    assert np.allclose(delta.delta_plus_direct.entries, direct, atol=1e-12)
    gain = after - np.asarray(rho.entries) + loss
    assert np.allclose(delta.delta_plus.entries, gain, atol=1e-12)


@pytest.mark.run(order=TEST_INSTANT)
def test_depletion_is_diagonal_in_eigenbasis():
    rho, molecule, u = random_collision(jax.random.PRNGKey(8), (6, 2))
    delta = pq.scatter(rho, molecule, u)

    _, v = np.linalg.eigh(np.asarray(rho.entries))
    rotated = v.conj().T @ np.asarray(delta.delta_minus.entries) @ v
    off_diagonal = rotated - np.diag(np.diag(rotated))
    assert np.abs(off_diagonal).max() <= 1e-12
    assert np.allclose(np.diag(rotated).real.sum(), delta.epsilon, atol=1e-12)
