"""Quench evolution: second-order Trotter stepping with on-grid recording.

A run evolves a state under the post-quench Hamiltonian, snapshotting the
centered block density matrices, the energy, the largest bond dimension and
the accumulated discarded weight every ``record_stride`` steps (the t = 0
snapshot always included). Gate layers are applied in a snake pattern so the
orthogonality centre never makes a wasted pass over the chain.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .model import HamiltonianParams, build_hamiltonian, build_trotter_gates
from .mps import MpsState, TruncationPolicy

_GRID_SLACK = 1e-9
_STALL_STEPS = 10
_STALL_FACTOR = 100.0


@dataclass(frozen=True)
class QuenchProtocol:
    """Sudden quench: ground state of ``pre`` evolved under ``post``."""

    pre: HamiltonianParams
    post: HamiltonianParams
    t_max: float = 20.0
    tau: float = 0.01
    record_stride: int = 10
    subsystem_sizes: tuple = (1, 2, 3, 4)
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)

    def __post_init__(self):
        if self.t_max <= 0:
            raise ValueError(f"t_max must be positive, got {self.t_max}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.record_stride < 1:
            raise ValueError(f"record_stride must be at least 1, got {self.record_stride}")
        if self.pre.n_sites != self.post.n_sites:
            raise ValueError("pre- and post-quench chains must have the same size")
        from .mps import RDM_SITE_CAP

        for ell in self.subsystem_sizes:
            if not 1 <= ell <= RDM_SITE_CAP:
                raise ValueError(f"subsystem size {ell} outside 1..{RDM_SITE_CAP}")

    @property
    def record_spacing(self) -> float:
        return self.record_stride * self.tau


@dataclass(eq=False)
class EvolutionRecord:
    """Time-indexed archive of one quench run.

    ``rdms[ell][k]`` is the block density matrix of size ``ell`` at
    ``times[k]``; ``energies``, ``max_bond`` and ``cumulative_discarded`` are
    parallel to ``times``.
    """

    times: np.ndarray
    spacing: float
    rdms: dict
    blocks: dict
    energies: np.ndarray
    max_bond: list
    cumulative_discarded: np.ndarray
    aborted: bool = False
    abort_reason: str | None = None

    def __post_init__(self):
        if len(self.times) == 0 or abs(self.times[0]) > 1e-15:
            raise ValueError("recorded times must start at 0")
        if len(self.times) > 1:
            gaps = np.diff(self.times)
            if np.max(np.abs(gaps - self.spacing)) > _GRID_SLACK:
                raise ValueError("recorded times are not uniformly spaced")

    @property
    def n_times(self) -> int:
        return len(self.times)

    @property
    def subsystem_sizes(self):
        return sorted(self.rdms.keys())

    def grid_offset(self, delta: float) -> int:
        """Index offset for a temporal separation; rejects off-grid values."""
        ratio = delta / self.spacing
        offset = round(ratio)
        if abs(ratio - offset) > 1e-6 or offset < 0:
            raise ValueError(
                f"separation {delta} is not a multiple of the record spacing {self.spacing}"
            )
        return offset


def centered_block(n_sites: int, ell: int):
    """Contiguous block of ``ell`` sites centered in the chain (0-based)."""
    if not 1 <= ell <= n_sites:
        raise ValueError(f"block size {ell} outside chain of {n_sites} sites")
    start = (n_sites - ell) // 2
    return tuple(range(start, start + ell))


def evolve(initial: MpsState, protocol: QuenchProtocol) -> EvolutionRecord:
    """Run the quench and return the recorded archive.

    The input state is left untouched; evolution happens on a copy. Aborts
    with a partial (flagged) record when values go non-finite or when the
    bond dimension saturates while the per-step discarded weight stays above
    100x the cutoff for ten consecutive steps.
    """
    n = protocol.post.n_sites
    if initial.n_sites != n:
        raise ValueError(f"state has {initial.n_sites} sites, protocol expects {n}")
    hspec = build_hamiltonian(protocol.post)
    scheme = build_trotter_gates(hspec, protocol.tau)
    policy = protocol.policy
    blocks = {ell: centered_block(n, ell) for ell in protocol.subsystem_sizes}

    state = initial.copy()
    state.canonicalize(0)

    n_steps = math.ceil(protocol.t_max / protocol.tau - _GRID_SLACK)
    times, energies, max_bonds, cum_discarded = [], [], [], []
    rdms = {ell: [] for ell in protocol.subsystem_sizes}

    total_discarded = 0.0
    stalled_steps = 0
    aborted = False
    abort_reason = None
    ascending = True

    def snapshot(step_index: int) -> bool:
        t = (step_index // protocol.record_stride) * protocol.record_spacing
        energy = state.energy(hspec)
        if not math.isfinite(energy) or not math.isfinite(total_discarded):
            return False
        times.append(t)
        energies.append(energy)
        max_bonds.append(max(state.bond_dims) if n > 1 else 1)
        cum_discarded.append(total_discarded)
        for ell, sites in blocks.items():
            rdms[ell].append(state.rdm(sites, time_stamp=t, max_sites=max(ell, 4)))
        return True

    if not snapshot(0):
        raise ValueError("initial state has non-finite values")

    for step in range(1, n_steps + 1):
        step_discarded = 0.0
        for layer in scheme.gate_layers:
            step_discarded += _apply_layer(state, layer, policy, ascending)
            ascending = not ascending
        total_discarded += step_discarded

        if max(state.bond_dims) >= policy.chi_max and step_discarded > _STALL_FACTOR * policy.cutoff:
            stalled_steps += 1
        else:
            stalled_steps = 0
        if stalled_steps >= _STALL_STEPS:
            aborted = True
            abort_reason = (
                f"truncation budget exceeded: bond dimension at {policy.chi_max} with "
                f"per-step discarded weight > {_STALL_FACTOR:g}x cutoff for {_STALL_STEPS} steps"
            )
            break
        if step % protocol.record_stride == 0 and step * protocol.tau <= protocol.t_max + _GRID_SLACK:
            if not snapshot(step):
                aborted = True
                abort_reason = "non-finite values during evolution"
                break

    return EvolutionRecord(
        times=np.array(times),
        spacing=protocol.record_spacing,
        rdms=rdms,
        blocks=blocks,
        energies=np.array(energies),
        max_bond=max_bonds,
        cumulative_discarded=np.array(cum_discarded),
        aborted=aborted,
        abort_reason=abort_reason,
    )


def _apply_layer(state: MpsState, layer, policy: TruncationPolicy, ascending: bool) -> float:
    """Apply one layer of commuting bond gates in snake order."""
    discarded = 0.0
    gates = layer if ascending else tuple(reversed(layer))
    side = "right" if ascending else "left"
    for bond, gate in gates:
        if state.ortho_center < bond:
            state.canonicalize(bond)
        elif state.ortho_center > bond + 1:
            state.canonicalize(bond + 1)
        discarded += state.apply_two_site_gate(gate, bond, policy, center_side=side)
    return discarded
