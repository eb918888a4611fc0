from __future__ import annotations

import logging

import equinox as eqx
import jax
import jax.numpy as jnp
import numpy as np
from jax import Array
from jaxtyping import ArrayLike, PRNGKeyArray

from . import random as pqr
from ._checks import check_hermitian, check_shape, check_unitary
from ._utils import cdtype
from .denmat import (
    DensityMatrix,
    SignedSplit,
    _as_matrix,
    _ptrace,
    new_density,
    split_signed,
    thermal_state,
)
from .errors import (
    DimMismatchError,
    InvalidScheduleError,
    NonUnitaryDriftError,
    PredeqError,
)
from .options import Options, check_options
from .result import Result, array_str, float_str

__all__ = [
    'CollisionDelta',
    'CollisionSchedule',
    'OmegaTrajectory',
    'SensitivityReport',
    'eigvec_sensitivity',
    'energy_conserving_unitary',
    'evolve_with_source',
    'random_collision_schedule',
    'scatter',
    'thermal_deviation',
]

logger = logging.getLogger(__name__)

UNITARY_ATOL = 1e-10
DRIFT_ATOL = 1e-8
GAP_FLOOR = 1e-13
SPLIT_DROP = 1e-14


class CollisionDelta(Result):
    r"""Change of the apparatus state produced by a single collision.

    The state after the collision is $\rho'_A = \rho_A - \delta\rho_- + \delta\rho_+$,
    and both deltas carry the same trace $\varepsilon$, the probability that the
    collision changes the joint state.

    Attributes:
        rho_after: State $\rho'_A$ after the collision.
        delta_plus: Gain term $\delta\rho_+ = \rho'_A - \rho_A + \delta\rho_-$. It
            equals `delta_plus_direct` plus the traceless interference between the
            forward and scattered waves, and is positive semi-definite whenever that
            interference vanishes (for instance when every collision changes the
            molecule state).
        delta_minus: Depletion term $\delta\rho_-$, diagonal in the eigenbasis of
            $\rho_A$.
        delta_plus_direct: Direct sum over scattered states, always positive
            semi-definite with trace $\varepsilon$.
        epsilon: Collision probability $\mathrm{Tr}\,\delta\rho_-$.
        depletion _(array of shape (n,))_: Probability, for each eigenstate
            $\ket{k}$ of $\rho_A$, that it is scattered out (averaged over the
            molecule state).
    """

    rho_after: DensityMatrix
    delta_plus: DensityMatrix
    delta_minus: DensityMatrix
    delta_plus_direct: DensityMatrix
    epsilon: float
    depletion: Array

    @property
    def forward_interference(self) -> Array:
        return self.delta_plus.entries - self.delta_plus_direct.entries

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Epsilon': float_str(self.epsilon),
            'Tr delta_plus': float_str(self.delta_plus.trace),
            'Tr delta_minus': float_str(self.delta_minus.trace),
            'Depletion': array_str(self.depletion),
        }


@jax.jit
def _scatter_arrays(rho: Array, sigma: Array, u: Array) -> tuple[Array, ...]:
    n_a, n_m = rho.shape[-1], sigma.shape[-1]

    # outgoing joint state, traced over the molecule
    joint = jnp.kron(rho, sigma)
    rho_after = _ptrace(u @ joint @ u.mT.conj(), (n_a, n_m), (0,))

    # joint eigenbasis |kq> = |k>|q>, with index k * n_m + q
    p, v = jnp.linalg.eigh(rho)
    m, w = jnp.linalg.eigh(sigma)
    basis = jnp.kron(v, w)
    weights = jnp.kron(p, m)

    # forward amplitudes <kq|U|kq> and the scattered parts of U|kq>
    out = u @ basis
    forward = jnp.einsum('ij,ij->j', basis.conj(), out)
    chi = out - basis * forward
    loss = 1.0 - jnp.abs(forward) ** 2

    depletion = (loss.reshape(n_a, n_m) * m).sum(-1)
    dminus_w = p * depletion
    delta_minus = (v * dminus_w) @ v.mT.conj()

    direct = _ptrace((chi * weights) @ chi.mT.conj(), (n_a, n_m), (0,))
    delta_plus = rho_after - rho + delta_minus
    delta_plus = 0.5 * (delta_plus + delta_plus.mT.conj())

    return rho_after, delta_plus, delta_minus, direct, dminus_w.sum(), depletion


def scatter(
    rho_A: DensityMatrix | ArrayLike,
    molecule: DensityMatrix | ArrayLike,
    joint_unitary: ArrayLike,
) -> CollisionDelta:
    r"""Returns the change of the apparatus state caused by one molecule collision.

    The outgoing apparatus state is $\rho'_A = \mathrm{Tr}_M[U(\rho_A\otimes\rho_M)
    U^\dagger]$. Each eigenstate $\ket{k}$ of $\rho_A$ is depleted by the probability
    $d_{kq} = 1 - |\bra{kq}U\ket{kq}|^2$ of leaving the incoming joint state
    $\ket{kq}$, averaged over the molecule eigenstates $\ket{q}$ with weights $m_q$,
    which defines

    $$
        \delta\rho_- = \sum_k p_k \Big(\sum_q m_q d_{kq}\Big) \ket{k}\bra{k},
        \qquad \varepsilon = \mathrm{Tr}\,\delta\rho_-,
    $$

    and the gain term $\delta\rho_+ = \rho'_A - \rho_A + \delta\rho_-$ has the same
    trace by unitarity.

    Args:
        rho_A _(density matrix of dimension n)_: Apparatus state before the
            collision.
        molecule _(density matrix of dimension m)_: Incoming molecule state.
        joint_unitary _(array-like of shape (n * m, n * m))_: Unitary acting on the
            apparatus-molecule tensor product.

    Returns:
        Collision deltas, collision probability and the outgoing state.

    Raises:
        NotUnitaryError: If `joint_unitary` is not unitary within 1e-10.
        DimMismatchError: If `joint_unitary` does not act on the tensor product.

    Examples:
        >>> rho = pq.new_density(jnp.diag(jnp.array([0.6, 0.4])))
        >>> mol = pq.new_density(jnp.diag(jnp.array([1.0, 0.0])))
        >>> flip = jnp.kron(jnp.eye(2), jnp.array([[0, 1], [1, 0]]))
        >>> pq.scatter(rho, mol, flip).epsilon
        1.0
    """
    rho = _as_matrix(rho_A, 'rho_A')
    sigma = _as_matrix(molecule, 'molecule')
    trace_hint = rho_A.trace_hint if isinstance(rho_A, DensityMatrix) else 1.0
    u = jnp.asarray(joint_unitary, dtype=cdtype())
    check_shape(u, 'joint_unitary', '(n, n)')

    n = rho.shape[-1] * sigma.shape[-1]
    if u.shape[-1] != n:
        raise DimMismatchError(
            f'Argument `joint_unitary` must have shape ({n}, {n}) to act on the'
            f' {rho.shape[-1]}x{sigma.shape[-1]} tensor product, but has shape'
            f' {u.shape}.'
        )
    check_unitary(u, 'joint_unitary', atol=UNITARY_ATOL)

    rho_after, dplus, dminus, direct, eps, depletion = _scatter_arrays(rho, sigma, u)
    eps = float(eps.real)

    return CollisionDelta(
        rho_after=new_density(rho_after, trace_hint),
        delta_plus=DensityMatrix(dplus, eps),
        delta_minus=DensityMatrix(dminus, eps),
        delta_plus_direct=DensityMatrix(direct, eps),
        epsilon=eps,
        depletion=depletion.real,
    )


class SensitivityReport(Result):
    """First-order eigenvector corrections of a density matrix under a perturbation.

    Attributes:
        max_term: Largest correction magnitude over the non-flagged pairs.
        gap_min: Smallest eigenvalue gap over all pairs.
        terms _(array of shape (n, n))_: Magnitudes $|\\bra{k'}\\delta\\ket{k}| /
            |p_k - p_{k'}|$, `nan` on the diagonal and for flagged pairs.
        flagged _(array of shape (n, n))_: Off-diagonal pairs whose gap is below
            1e-13 and which were not divided.
    """

    max_term: float
    gap_min: float
    terms: Array
    flagged: Array

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Max term': float_str(self.max_term),
            'Gap min': float_str(self.gap_min),
            'Flagged pairs': str(int(self.flagged.sum()) // 2),
        }


def eigvec_sensitivity(
    rho: DensityMatrix | ArrayLike, perturbation: ArrayLike
) -> SensitivityReport:
    r"""Returns the first-order sensitivity of the eigenvectors of `rho`.

    For eigenpairs $(p_k, \ket{k})$ of $\rho$, the correction to $\ket{k}$ along
    $\ket{k'}$ under $\rho + \delta$ has magnitude
    $|\bra{k'}\delta\ket{k}|/|p_k - p_{k'}|$, which becomes huge when eigenvalues
    are close.

    Args:
        rho _(density matrix of dimension n)_: Unperturbed state.
        perturbation _(array-like of shape (n, n))_: Hermitian perturbation.

    Returns:
        Per-pair correction magnitudes with the smallest gap and the largest term.
    """
    x = check_hermitian(_as_matrix(rho, 'rho'), 'rho')
    delta = check_hermitian(_as_matrix(perturbation, 'perturbation'), 'perturbation')
    if delta.shape != x.shape:
        raise DimMismatchError(
            f'Argument `perturbation` must have shape {x.shape}, but has shape'
            f' {delta.shape}.'
        )

    p, v = jnp.linalg.eigh(x)
    coupling = jnp.abs(v.mT.conj() @ delta @ v)
    gaps = jnp.abs(p[:, None] - p[None, :])
    offdiag = ~jnp.eye(p.shape[0], dtype=bool)
    flagged = offdiag & (gaps < GAP_FLOOR)
    valid = offdiag & ~flagged

    terms = jnp.where(valid, coupling / jnp.where(valid, gaps, 1.0), jnp.nan)
    max_term = float(jnp.max(jnp.where(valid, terms, 0.0))) if p.shape[0] > 1 else 0.0
    gap_min = float(jnp.min(jnp.where(offdiag, gaps, jnp.inf)))

    return SensitivityReport(max_term, gap_min, terms, flagged)


class CollisionSchedule(eqx.Module):
    """Ordered list of collisions, each with a time, a molecule and a unitary.

    Attributes:
        times _(array of shape (N,))_: Collision times, in ascending order.
        molecules _(array of shape (N, m, m))_: Incoming molecule states.
        unitaries _(array of shape (N, n * m, n * m))_: Joint unitaries.
    """

    times: Array
    molecules: Array
    unitaries: Array

    def __len__(self) -> int:
        return self.times.shape[0]

    @classmethod
    def empty(cls, dims: tuple[int, int]) -> CollisionSchedule:
        n = dims[0] * dims[1]
        return cls(
            jnp.zeros(0),
            jnp.zeros((0, dims[1], dims[1]), dtype=cdtype()),
            jnp.zeros((0, n, n), dtype=cdtype()),
        )


def _ground_state(n: int) -> Array:
    return jnp.zeros((n, n), dtype=cdtype()).at[0, 0].set(1.0)


def _energy_blocks(energies: np.ndarray, tol: float) -> list[np.ndarray]:
    # group the indices of sorted energies into blocks of equal energy
    blocks, start = [], 0
    for i in range(1, len(energies) + 1):
        if i == len(energies) or energies[i] - energies[i - 1] > tol:
            blocks.append(np.arange(start, i))
            start = i
    return blocks


def energy_conserving_unitary(
    key: PRNGKeyArray,
    H_A: ArrayLike,
    H_M: ArrayLike,
    *,
    tol: float = 1e-9,
    shape: tuple[int, ...] = (),
) -> Array:
    r"""Returns random unitaries conserving the total energy of a collision.

    The unitary commutes with $H = H_A\otimes I + I\otimes H_M$: it is Haar-random
    inside each eigenspace of $H$ and does not couple different energies.

    Args:
        key: A PRNG key used as the random key.
        H_A _(array-like of shape (n, n))_: Apparatus Hamiltonian.
        H_M _(array-like of shape (m, m))_: Molecule Hamiltonian.
        tol: Energies closer than `tol` are considered degenerate.
        shape: Batch shape of the returned unitaries.

    Returns:
        _(array of shape (*shape, n * m, n * m))_ Energy-conserving unitaries.
    """
    H_A = check_hermitian(_as_matrix(H_A, 'H_A'), 'H_A')
    H_M = check_hermitian(_as_matrix(H_M, 'H_M'), 'H_M')
    h = jnp.kron(H_A, jnp.eye(H_M.shape[-1])) + jnp.kron(jnp.eye(H_A.shape[-1]), H_M)
    e, v = jnp.linalg.eigh(h)
    blocks = _energy_blocks(np.asarray(e), tol)

    def single(key: PRNGKeyArray) -> Array:
        w = jnp.zeros(h.shape, dtype=cdtype())
        for block, k in zip(blocks, jax.random.split(key, len(blocks))):
            ub = pqr.unitary(k, (len(block), len(block)))
            w = w.at[np.ix_(block, block)].set(ub)
        return v @ w @ v.mT.conj()

    n_batch = int(np.prod(shape))
    keys = jax.random.split(key, max(n_batch, 1))
    us = jax.vmap(single)(keys)
    return us.reshape(*shape, *h.shape)


def random_collision_schedule(
    rate: float,
    t_end: float,
    seed: int,
    *,
    dims: tuple[int, int] = (8, 2),
    molecule: DensityMatrix | ArrayLike | None = None,
    hamiltonians: tuple[ArrayLike, ArrayLike] | None = None,
) -> CollisionSchedule:
    """Returns a Poisson schedule of collisions with random joint unitaries.

    The number of collisions is Poisson-distributed with mean `rate * t_end`, the
    times are sorted uniform samples in `[0, t_end]`, and each collision gets an
    independent Haar-random unitary (or an energy-conserving one when `hamiltonians`
    is given). All molecules share the same state.

    Args:
        rate: Mean number of collisions per unit time.
        t_end: Length of the time window.
        seed: Seed of the schedule, identical seeds give identical schedules.
        dims: Dimensions of the apparatus and molecule spaces.
        molecule: Molecule state, defaults to the molecule ground state.
        hamiltonians: Pair `(H_A, H_M)` restricting each unitary to
            energy-conserving blocks.

    Returns:
        Collision schedule.
    """
    if rate < 0:
        raise InvalidScheduleError(f'Argument `rate` must be >= 0, but is {rate}.')
    if t_end < 0:
        raise InvalidScheduleError(f'Argument `t_end` must be >= 0, but is {t_end}.')

    n_a, n_m = dims
    sigma = _ground_state(n_m) if molecule is None else _as_matrix(molecule, 'molecule')
    if sigma.shape[-1] != n_m:
        raise DimMismatchError(
            f'Argument `molecule` must have dimension {n_m}, but has dimension'
            f' {sigma.shape[-1]}.'
        )

    key = jax.random.PRNGKey(seed)
    k_count, k_times, k_unitaries = jax.random.split(key, 3)
    count = int(jax.random.poisson(k_count, rate * t_end)) if rate > 0 else 0
    if count == 0:
        return CollisionSchedule.empty(dims)

    times = jnp.sort(jax.random.uniform(k_times, (count,), minval=0.0, maxval=t_end))
    n = n_a * n_m
    if hamiltonians is None:
        unitaries = pqr.unitary(k_unitaries, (count, n, n))
    else:
        unitaries = energy_conserving_unitary(
            k_unitaries, *hamiltonians, shape=(count,)
        )
    molecules = jnp.broadcast_to(sigma, (count, n_m, n_m))
    return CollisionSchedule(times, molecules, unitaries)


class OmegaTrajectory(Result):
    r"""Sampled sourced evolution and its deviation from collision-free evolution.

    Attributes:
        times _(array of shape (T,))_: Sample times.
        rho _(array of shape (T, n, n))_: Sourced state $\rho(t)$.
        rho_iso _(array of shape (T, n, n))_: Collision-free reference
            $\rho_{iso}(t)$, branching off $\rho$ at `t_ref`.
        omega _(array of shape (T, n, n))_: $\Omega(t) = \rho(t) - \rho_{iso}(t)$.
        trace_plus _(array of shape (T,))_: $\mathrm{Tr}\,\Omega_+(t)$.
        trace_minus _(array of shape (T,))_: $\mathrm{Tr}\,\Omega_-(t)$.
        purity _(array of shape (T,))_: $\mathrm{Tr}\,\rho(t)^2$.
        distance _(array of shape (T,))_: $d(\rho, \rho_{iso})$.
        similarity _(array of shape (T,))_: $K(\rho, \rho_{iso})$.
        k_plus_rho _(array of shape (T,))_: $K(\Omega_+, \rho)$, `nan` when
            $\Omega_+ = 0$.
        k_minus_iso _(array of shape (T,))_: $K(\Omega_-, \rho_{iso})$, `nan` when
            $\Omega_- = 0$.
        n_collisions: Number of collisions applied.
        t_ref: Reference time of $\rho_{iso}$.
    """

    times: Array
    rho: Array
    rho_iso: Array
    omega: Array
    trace_plus: Array
    trace_minus: Array
    purity: Array
    distance: Array
    similarity: Array
    k_plus_rho: Array
    k_minus_iso: Array
    n_collisions: int
    t_ref: float
    trace_hint: float = 1.0

    def rho_at(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.rho[i], self.trace_hint)

    def rho_iso_at(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.rho_iso[i], self.trace_hint)

    def split_at(self, i: int) -> SignedSplit:
        return split_signed(self.omega[i])

    def plateau(self, fraction: float = 0.25) -> float:
        """Returns the mean of `trace_plus` over the final `fraction` of samples."""
        if not 0 < fraction <= 1:
            raise ValueError(
                f'Argument `fraction` must be in (0, 1], but is {fraction}.'
            )
        n = max(1, int(round(fraction * self.times.shape[0])))
        return float(self.trace_plus[-n:].mean())

    def to_columns(self) -> dict[str, Array]:
        return {
            'time': self.times,
            'trace_plus': self.trace_plus,
            'purity': self.purity,
            'distance': self.distance,
            'K': self.similarity,
        }

    def _str_parts(self) -> dict[str, str | None]:
        return {
            'Samples': str(self.times.shape[0]),
            'Collisions': str(self.n_collisions),
            'Reference time': float_str(self.t_ref),
            'States': array_str(self.rho),
            'Plateau Tr(Omega+)': float_str(self.plateau()),
        }


def _propagate(rho: Array, w: Array, v: Array, taus: Array) -> Array:
    # exp(-iH tau) rho exp(iH tau) for a batch of durations, H = v diag(w) v^dag
    phases = jnp.exp(-1j * jnp.outer(taus, w))  # (T, n)
    u = (v[None] * phases[:, None, :]) @ v.mT.conj()[None]
    return u @ rho @ u.mT.conj()


@jax.jit
def _omega_diagnostics(rho: Array, rho_iso: Array) -> tuple[Array, ...]:
    omega = rho - rho_iso
    omega = 0.5 * (omega + omega.mT.conj())
    w, v = jnp.linalg.eigh(omega)
    w_plus = jnp.where(w > SPLIT_DROP, w, 0.0)
    w_minus = jnp.where(w < -SPLIT_DROP, -w, 0.0)
    omega_plus = (v * w_plus[..., None, :]) @ v.mT.conj()
    omega_minus = (v * w_minus[..., None, :]) @ v.mT.conj()

    def norm2(x: Array) -> Array:
        return (jnp.abs(x) ** 2).sum((-2, -1))

    def inner(x: Array, y: Array) -> Array:
        return (x * y.mT).sum((-2, -1)).real

    def similarity(x: Array, y: Array) -> Array:
        nx, ny = norm2(x), norm2(y)
        ok = (nx > 1e-30) & (ny > 1e-30)
        return jnp.where(ok, inner(x, y) / jnp.sqrt(jnp.where(ok, nx * ny, 1.0)), jnp.nan)

    return (
        omega,
        w_plus.sum(-1),
        w_minus.sum(-1),
        inner(rho, rho),
        jnp.sqrt(norm2(omega)),
        similarity(rho, rho_iso),
        similarity(omega_plus, rho),
        similarity(omega_minus, rho_iso),
    )


def _check_schedule(schedule: CollisionSchedule, n_a: int, t_end: float):
    times = np.asarray(schedule.times)
    if times.ndim != 1:
        raise InvalidScheduleError(
            f'Collision times must be a 1D array, but have shape {times.shape}.'
        )
    if len(times) == 0:
        return
    if np.any(np.diff(times) < 0):
        raise InvalidScheduleError('Collision times must be sorted in ascending order.')
    if times[0] < 0 or times[-1] > t_end:
        raise InvalidScheduleError(
            f'Collision times must lie in [0, t_end={t_end}], but span'
            f' [{times[0]}, {times[-1]}].'
        )
    n_m = schedule.molecules.shape[-1]
    if schedule.unitaries.shape[-1] != n_a * n_m or len(schedule.unitaries) != len(
        times
    ):
        raise InvalidScheduleError(
            f'Schedule unitaries must have shape ({len(times)}, {n_a * n_m},'
            f' {n_a * n_m}), but have shape {schedule.unitaries.shape}.'
        )


def evolve_with_source(
    rho0: DensityMatrix | ArrayLike,
    H: ArrayLike,
    collisions: CollisionSchedule,
    t_end: float,
    dt: float,
    *,
    options: Options = Options(),  # noqa: B008
) -> OmegaTrajectory:
    r"""Evolves an apparatus state under its Hamiltonian and a source of collisions.

    Between collisions the state evolves by the exact propagator $e^{-iHt}$; each
    scheduled collision replaces the state by the outgoing state of `scatter()`. A
    collision scheduled at a sample time is applied before that sample is recorded.
    The reference $\rho_{iso}(t) = U(t - t')\rho(t')U^\dagger(t - t')$ follows the
    collision-free evolution from the reference time $t'$ (`options.t_ref`, before
    the collisions happening at $t'$), and coincides with $\rho(t)$ for $t < t'$.

    Args:
        rho0 _(density matrix of dimension n)_: Initial apparatus state.
        H _(array-like of shape (n, n))_: Apparatus Hamiltonian.
        collisions: Collision schedule, for instance from
            `random_collision_schedule()`.
        t_end: Final time.
        dt: Sampling step. It is adjusted down so that an integer number of steps
            fits in `[0, t_end]`.
        options: Generic options, only `t_ref` is used.

    Returns:
        Sampled trajectory with the signed split diagnostics of $\Omega(t)$.

    Raises:
        InvalidScheduleError: If collision times are unsorted or outside
            `[0, t_end]`.
        NonUnitaryDriftError: If the step propagator deviates from unitarity by
            more than 1e-8.
    """
    check_options(options, 'evolve_with_source')
    if not dt > 0:
        raise PredeqError(f'Argument `dt` must be strictly positive, but is {dt}.')
    if not t_end > 0:
        raise PredeqError(f'Argument `t_end` must be strictly positive, but is {t_end}.')
    t_ref = float(options.t_ref)
    if not 0 <= t_ref <= t_end:
        raise InvalidScheduleError(
            f'Option `t_ref` must lie in [0, t_end={t_end}], but is {t_ref}.'
        )

    x0 = _as_matrix(rho0, 'rho0')
    trace_hint = rho0.trace_hint if isinstance(rho0, DensityMatrix) else 1.0
    H = check_hermitian(_as_matrix(H, 'H'), 'H')
    if H.shape != x0.shape:
        raise DimMismatchError(
            f'Argument `H` must have shape {x0.shape}, but has shape {H.shape}.'
        )
    _check_schedule(collisions, x0.shape[-1], t_end)

    w, v = jnp.linalg.eigh(H)
    n_steps = max(1, int(np.ceil(t_end / dt - 1e-9)))
    ts = jnp.linspace(0.0, t_end, n_steps + 1)

    # check that the stepper is unitary
    for tau in (t_end / n_steps, t_end):
        phases = jnp.exp(-1j * w * tau)
        u = (v * phases) @ v.mT.conj()
        drift = float(jnp.max(jnp.abs(u.mT.conj() @ u - jnp.eye(u.shape[-1]))))
        if drift > DRIFT_ATOL:
            raise NonUnitaryDriftError(
                f'Propagator over tau={tau} deviates from unitarity by {drift:.3e}.'
            )

    # segment-wise exact evolution, collisions applied at segment boundaries
    times_np = np.asarray(ts)
    ctimes = np.asarray(collisions.times)
    starts = np.concatenate([[0.0], ctimes])
    ends = np.concatenate([ctimes, [np.inf]])

    rho_seg, rho_ref = x0, None
    samples = []
    for j in range(len(starts)):
        s, e = starts[j], ends[j]
        if rho_ref is None and t_ref <= e:
            rho_ref = _propagate(rho_seg, w, v, jnp.array([t_ref - s]))[0]

        mask = (times_np >= s) & (times_np < e)
        if mask.any():
            samples.append(_propagate(rho_seg, w, v, jnp.asarray(times_np[mask] - s)))

        if j < len(ctimes):
            rho_c = _propagate(rho_seg, w, v, jnp.array([e - s]))[0]
            delta = scatter(
                DensityMatrix(rho_c, trace_hint),
                collisions.molecules[j],
                collisions.unitaries[j],
            )
            rho_seg = delta.rho_after.entries
            logger.debug('collision %d at t=%.4g, epsilon=%.4g', j, e, delta.epsilon)

    rho = jnp.concatenate(samples)
    rho_free = _propagate(rho_ref, w, v, ts - t_ref)
    rho_iso = jnp.where((ts >= t_ref)[:, None, None], rho_free, rho)

    omega, tp, tm, pur, dist, k_iso, k_plus, k_minus = _omega_diagnostics(rho, rho_iso)
    trajectory = OmegaTrajectory(
        times=ts,
        rho=rho,
        rho_iso=rho_iso,
        omega=omega,
        trace_plus=tp,
        trace_minus=tm,
        purity=pur,
        distance=dist,
        similarity=k_iso,
        k_plus_rho=k_plus,
        k_minus_iso=k_minus,
        n_collisions=len(ctimes),
        t_ref=t_ref,
        trace_hint=trace_hint,
    )
    logger.info(
        'sourced evolution: %d collisions, plateau Tr(Omega+) = %.4g',
        len(ctimes),
        trajectory.plateau(),
    )
    return trajectory


def thermal_deviation(
    rho: DensityMatrix | ArrayLike, H: ArrayLike, T: float
) -> tuple[Array, SignedSplit]:
    r"""Returns the deviation $\Omega = \rho - \langle\rho\rangle$ from the thermal
    average, with its signed split.
    """
    x = _as_matrix(rho, 'rho')
    omega = x - thermal_state(H, T).entries
    return omega, split_signed(omega)


