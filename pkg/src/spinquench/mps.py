"""Finite matrix product states with a movable orthogonality centre.

Site tensors have legs ``(left bond, physical, right bond)``, physical
dimension 2, boundary bonds of dimension 1. The gauge invariant: tensors left
of the centre are left isometries, tensors right of it right isometries, so
norms, local expectations and block density matrices close with identity
environments.

Two-site gate application follows the usual TEBD update: contract the bond
pair into a theta tensor, apply the gate, split by SVD, discard the smallest
singular values within the truncation budget and renormalise.
"""

from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np

from .model import HamiltonianSpec

RDM_SITE_CAP = 6
RDM_DEFAULT_MAX = 4

_HERM_TOL = 1e-10
_TRACE_TOL = 1e-10
_EIG_FLOOR = -1e-10


@dataclass(frozen=True)
class TruncationPolicy:
    """SVD truncation budget: total discarded squared weight and max bond dimension."""

    cutoff: float = 1e-9
    chi_max: int = 50

    def __post_init__(self):
        if self.cutoff < 0:
            raise ValueError(f"cutoff must be non-negative, got {self.cutoff}")
        if self.chi_max < 1:
            raise ValueError(f"chi_max must be at least 1, got {self.chi_max}")


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """State of a contiguous block of sites: Hermitian, unit trace, positive.

    ``sites`` records which chain sites the block covers, ``time_stamp`` the
    evolution time at which it was extracted.
    """

    entries: np.ndarray
    sites: tuple
    time_stamp: float = 0.0

    def __post_init__(self):
        rho = self.entries
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise ValueError(f"density matrix must be square, got shape {rho.shape}")
        if rho.shape[0] != 2 ** len(self.sites):
            raise ValueError(
                f"dimension {rho.shape[0]} does not match {len(self.sites)} sites"
            )
        if np.max(np.abs(rho - rho.conj().T)) > _HERM_TOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(rho) - 1.0) > _TRACE_TOL:
            raise ValueError(f"trace {np.trace(rho)} is not 1")
        if np.linalg.eigvalsh(rho)[0] < _EIG_FLOOR:
            raise ValueError("density matrix has a significantly negative eigenvalue")

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def spectrum(self) -> np.ndarray:
        """Eigenvalues in ascending order."""
        return np.linalg.eigvalsh(self.entries)


def reduce_density_matrix(dm: DensityMatrix, keep: tuple) -> DensityMatrix:
    """Partial-trace a block density matrix down to a contiguous sub-block."""
    keep = tuple(keep)
    if not keep or any(s not in dm.sites for s in keep):
        raise ValueError(f"sites {keep} not contained in {dm.sites}")
    if list(keep) != list(range(keep[0], keep[-1] + 1)):
        raise ValueError(f"sites {keep} are not contiguous")
    offset = dm.sites.index(keep[0])
    n_left, n_keep = offset, len(keep)
    n_right = dm.n_sites - n_left - n_keep
    shaped = dm.entries.reshape(
        2**n_left, 2**n_keep, 2**n_right, 2**n_left, 2**n_keep, 2**n_right
    )
    rho = np.einsum("aibajb->ij", shaped, optimize=True)
    return DensityMatrix(entries=rho, sites=keep, time_stamp=dm.time_stamp)


class MpsState:
    """Mutable finite MPS; one instance per evolution worker."""

    def __init__(self, tensors, ortho_center=None):
        tensors = [np.asarray(t, dtype=complex) for t in tensors]
        if not tensors:
            raise ValueError("an MPS needs at least one site")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ValueError("boundary bond dimensions must be 1")
        for i, t in enumerate(tensors):
            if t.ndim != 3 or t.shape[1] != 2:
                raise ValueError(f"site tensor {i} has shape {t.shape}, expected (l, 2, r)")
            if i + 1 < len(tensors) and t.shape[2] != tensors[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        if ortho_center is not None and not 0 <= ortho_center < len(tensors):
            raise ValueError(f"orthogonality centre {ortho_center} out of range")
        self.tensors = tensors
        self.ortho_center = ortho_center

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    @property
    def bond_dims(self):
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "MpsState":
        return MpsState([t.copy() for t in self.tensors], self.ortho_center)

    # -- gauge manipulation ------------------------------------------------

    def _shift_center_right(self, i: int):
        """Left-orthogonalise site i, absorbing the remainder into site i+1."""
        dl, d, dr = self.tensors[i].shape
        q, r = np.linalg.qr(self.tensors[i].reshape(dl * d, dr))
        self.tensors[i] = q.reshape(dl, d, q.shape[1])
        self.tensors[i + 1] = np.tensordot(r, self.tensors[i + 1], axes=(1, 0))

    def _shift_center_left(self, i: int):
        """Right-orthogonalise site i, absorbing the remainder into site i-1."""
        dl, d, dr = self.tensors[i].shape
        q, r = np.linalg.qr(self.tensors[i].reshape(dl, d * dr).conj().T)
        self.tensors[i] = q.conj().T.reshape(q.shape[1], d, dr)
        self.tensors[i - 1] = np.tensordot(self.tensors[i - 1], r.conj().T, axes=(2, 0))

    def canonicalize(self, center: int) -> "MpsState":
        """Bring the state to mixed-canonical form with the centre at ``center``."""
        n = self.n_sites
        if not 0 <= center < n:
            raise ValueError(f"centre {center} out of range for {n} sites")
        if self.ortho_center is None:
            for i in range(center):
                self._shift_center_right(i)
            for i in range(n - 1, center, -1):
                self._shift_center_left(i)
        elif self.ortho_center < center:
            for i in range(self.ortho_center, center):
                self._shift_center_right(i)
        else:
            for i in range(self.ortho_center, center, -1):
                self._shift_center_left(i)
        self.ortho_center = center
        return self

    def norm(self) -> float:
        """Full transfer-matrix contraction of <psi|psi>; gauge-independent."""
        env = np.ones((1, 1), dtype=complex)
        for t in self.tensors:
            env = np.tensordot(env, t, axes=(1, 0))  # (a', p, r)
            env = np.tensordot(t.conj(), env, axes=((0, 1), (0, 1)))  # (r', r)
        return float(np.sqrt(np.abs(env[0, 0].real)))

    # -- updates -------------------------------------------------------------

    def apply_two_site_gate(self, gate, left_site, policy, center_side="right"):
        """Apply a 4x4 gate to sites (left_site, left_site+1), truncate by SVD.

        The orthogonality centre must already sit on one of the two sites.
        Returns the discarded weight (sum of dropped squared singular values);
        the state is renormalised afterwards. ``center_side`` chooses which of
        the two sites keeps the centre.
        """
        i = left_site
        if not 0 <= i < self.n_sites - 1:
            raise ValueError(f"gate site {i} out of range")
        if self.ortho_center not in (i, i + 1):
            raise ValueError(
                f"orthogonality centre is at {self.ortho_center}, gate needs {i} or {i + 1}"
            )
        gate = np.asarray(gate, dtype=complex)
        if gate.shape != (4, 4):
            raise ValueError(f"gate must be 4x4, got {gate.shape}")

        theta = np.tensordot(self.tensors[i], self.tensors[i + 1], axes=(2, 0))
        # (l, pi, pj, r); gate legs (out_i, out_j, in_i, in_j)
        theta = np.tensordot(gate.reshape(2, 2, 2, 2), theta, axes=((2, 3), (1, 2)))
        theta = theta.transpose(2, 0, 1, 3)
        dl, _, _, dr = theta.shape

        u, s, vh = np.linalg.svd(theta.reshape(dl * 2, 2 * dr), full_matrices=False)
        keep, discarded = _truncation_rank(s, policy)
        s_kept = s[:keep] / np.linalg.norm(s[:keep])
        u, vh = u[:, :keep], vh[:keep, :]
        if center_side == "right":
            self.tensors[i] = u.reshape(dl, 2, keep)
            self.tensors[i + 1] = (s_kept[:, None] * vh).reshape(keep, 2, dr)
            self.ortho_center = i + 1
        elif center_side == "left":
            self.tensors[i] = (u * s_kept).reshape(dl, 2, keep)
            self.tensors[i + 1] = vh.reshape(keep, 2, dr)
            self.ortho_center = i
        else:
            raise ValueError(f"center_side must be 'left' or 'right', got {center_side!r}")
        return discarded

    # -- read-outs -----------------------------------------------------------

    def rdm(self, sites, time_stamp=0.0, max_sites=RDM_DEFAULT_MAX) -> DensityMatrix:
        """Reduced density matrix of a contiguous block of sites.

        Moves the orthogonality centre to the block's left edge (the state
        vector is unchanged by the re-gauge).
        """
        sites = tuple(sites)
        if not sites or list(sites) != list(range(sites[0], sites[-1] + 1)):
            raise ValueError(f"sites {sites} must be a non-empty contiguous range")
        if sites[0] < 0 or sites[-1] >= self.n_sites:
            raise ValueError(f"sites {sites} outside chain of {self.n_sites} sites")
        cap = min(max_sites, RDM_SITE_CAP)
        if len(sites) > cap:
            raise ValueError(f"block of {len(sites)} sites exceeds the cap of {cap}")

        self.canonicalize(sites[0])
        block = self.tensors[sites[0]]
        for s in range(sites[0] + 1, sites[-1] + 1):
            block = np.tensordot(block, self.tensors[s], axes=(block.ndim - 1, 0))
        dl = block.shape[0]
        dr = block.shape[-1]
        block = block.reshape(dl, 2 ** len(sites), dr)
        rho = np.einsum("apb,aqb->pq", block, block.conj(), optimize=True)
        rho = 0.5 * (rho + rho.conj().T)
        return DensityMatrix(entries=rho, sites=sites, time_stamp=time_stamp)

    def expectation_local(self, op, site) -> float:
        """<psi| op_site |psi> for a Hermitian 2x2 operator."""
        if not 0 <= site < self.n_sites:
            raise ValueError(f"site {site} out of range")
        op = np.asarray(op, dtype=complex)
        self.canonicalize(site)
        t = self.tensors[site]
        val = np.einsum("apb,pq,aqb->", t.conj(), op, t, optimize=True)
        if abs(val.imag) > 1e-10:
            raise ValueError(f"expectation value has imaginary part {val.imag}")
        return float(val.real)

    def energy(self, hspec: HamiltonianSpec) -> float:
        """Sum of bond-term expectations; the total energy of the chain."""
        if hspec.n_sites != self.n_sites:
            raise ValueError(
                f"Hamiltonian has {hspec.n_sites} sites, state has {self.n_sites}"
            )
        self.canonicalize(0)
        total = 0.0 + 0.0j
        for b, term in enumerate(hspec.bond_terms):
            theta = np.tensordot(self.tensors[b], self.tensors[b + 1], axes=(2, 0))
            h_theta = np.tensordot(
                term.reshape(2, 2, 2, 2), theta, axes=((2, 3), (1, 2))
            ).transpose(2, 0, 1, 3)
            total += np.einsum("lpqr,lpqr->", theta.conj(), h_theta, optimize=True)
            if b < len(hspec.bond_terms) - 1:
                self._shift_center_right(b)
                self.ortho_center = b + 1
        if abs(total.imag) > 1e-10:
            raise ValueError(f"energy has imaginary part {total.imag}")
        return float(total.real)

    def to_statevector(self) -> np.ndarray:
        """Dense amplitude vector; intended for small chains only."""
        if self.n_sites > 16:
            raise ValueError("refusing to densify more than 16 sites")
        acc = self.tensors[0]
        for t in self.tensors[1:]:
            acc = np.tensordot(acc, t, axes=(acc.ndim - 1, 0))
        return acc.reshape(-1)


TRUNCATION_MARGIN = 1e-3


def _truncation_rank(singular_values, policy: TruncationPolicy):
    """Number of values to keep so the dropped squared weight stays within budget.

    The per-cut budget is ``cutoff * TRUNCATION_MARGIN`` rather than the full
    cutoff: truncation errors compound over the many cuts of a long evolution
    (the state error grows like the square root of the summed discards), and
    the margin keeps the run-cumulative discard at the order of the nominal
    cutoff. The contractual bound, discarded weight <= cutoff whenever
    ``chi_max`` is not binding, holds a fortiori.
    """
    sq = singular_values**2
    tail = np.cumsum(sq[::-1])[::-1]  # tail[k] = sum of sq[k:]
    budget = policy.cutoff * TRUNCATION_MARGIN
    keep = len(sq)
    for k in range(len(sq) - 1, 0, -1):
        if tail[k] <= budget:
            keep = k
        else:
            break
    keep = max(1, min(keep, policy.chi_max))
    discarded = float(tail[keep]) if keep < len(sq) else 0.0
    return keep, discarded


def product_state(local_states) -> MpsState:
    """Bond-dimension-1 MPS from per-site amplitude pairs (each unit norm)."""
    tensors = []
    for j, amp in enumerate(local_states):
        amp = np.asarray(amp, dtype=complex)
        if amp.shape != (2,):
            raise ValueError(f"site {j}: expected an amplitude pair, got shape {amp.shape}")
        if abs(np.linalg.norm(amp) - 1.0) > 1e-12:
            raise ValueError(f"site {j}: local state is not normalised")
        tensors.append(amp.reshape(1, 2, 1))
    return MpsState(tensors, ortho_center=0)


def all_up_state(n_sites: int) -> MpsState:
    return product_state([(1.0, 0.0)] * n_sites)


def all_plus_state(n_sites: int) -> MpsState:
    amp = (1.0 / math.sqrt(2.0), 1.0 / math.sqrt(2.0))
    return product_state([amp] * n_sites)


def random_state(n_sites: int, chi: int, rng) -> MpsState:
    """Random MPS with bonds capped at ``chi``, canonicalised and normalised."""
    tensors = []
    dl = 1
    for j in range(n_sites):
        dr = 1 if j == n_sites - 1 else min(chi, 2 ** (j + 1), 2 ** (n_sites - 1 - j))
        t = rng.normal(size=(dl, 2, dr)) + 1j * rng.normal(size=(dl, 2, dr))
        tensors.append(t)
        dl = dr
    state = MpsState(tensors)
    state.canonicalize(0)
    state.tensors[0] /= np.linalg.norm(state.tensors[0])
    return state
