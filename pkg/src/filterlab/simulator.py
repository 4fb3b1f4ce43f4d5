"""Dense statevector simulation of Trotter steps and sampled LCU instances.

States are plain complex numpy arrays of length 2^n (qubit q <-> bit q,
least-significant bit first).  All operations here are exactly unitary up to
floating-point roundoff; sampled-instance phases and normalization factors
live in the instance's ``weight``, never in the state.

The Hadamard-test ancilla is never simulated explicitly: the estimator
computes the exact overlap this circuit would interrogate and draws the
measurement outcomes from the corresponding Bernoulli laws.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Protocol, Sequence

import numpy as np

from .pauli import HamiltonianSpec, PauliString, pauli_phase_on_basis, _popcount


@dataclass
class StateVector:
    """Convenience wrapper pairing a qubit count with its amplitude array."""

    n: int
    amps: np.ndarray

    @classmethod
    def basis_state(cls, n: int, index: int) -> "StateVector":
        amps = np.zeros(1 << n, dtype=complex)
        amps[index] = 1.0
        return cls(n, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))


# ---------------------------------------------------------------------------
# primitive unitaries
# ---------------------------------------------------------------------------

def apply_pauli(psi: np.ndarray, p: PauliString) -> np.ndarray:
    """P|psi> exactly: a bit permutation plus a per-amplitude phase."""
    if len(psi) != (1 << p.n):
        raise ValueError("state dimension does not match Pauli string")
    idx = np.arange(len(psi))
    phase = pauli_phase_on_basis(p, idx)
    out = np.empty_like(psi)
    out[idx ^ p.x_mask] = phase * psi
    return out


def apply_exp_pauli(psi: np.ndarray, p: PauliString, theta: float) -> np.ndarray:
    """e^{-i theta P}|psi> = cos(theta)|psi> - i sin(theta) P|psi>."""
    if not np.isfinite(theta):
        raise ValueError("theta must be finite")
    if theta == 0.0:
        return psi.copy()
    return np.cos(theta) * psi - 1j * np.sin(theta) * apply_pauli(psi, p)


def apply_swap(psi: np.ndarray, i: int, j: int) -> np.ndarray:
    """SWAP of qubits i and j."""
    idx = np.arange(len(psi))
    bi = (idx >> i) & 1
    bj = (idx >> j) & 1
    out_idx = np.where(bi != bj, idx ^ ((1 << i) | (1 << j)), idx)
    out = np.empty_like(psi)
    out[out_idx] = psi
    return out


def apply_zstring(psi: np.ndarray, z_mask: int) -> np.ndarray:
    """Product of Z on the qubits of z_mask (diagonal signs)."""
    idx = np.arange(len(psi))
    sign = np.where(_popcount(np.bitwise_and(idx, z_mask)) & 1, -1.0, 1.0)
    return sign * psi


def apply_exp_swap(psi: np.ndarray, i: int, j: int, theta: float) -> np.ndarray:
    """e^{-i theta SWAP(i,j)} via SWAP^2 = I."""
    return np.cos(theta) * psi - 1j * np.sin(theta) * apply_swap(psi, i, j)


def apply_exp_zstring(psi: np.ndarray, z_mask: int, theta: float) -> np.ndarray:
    return np.cos(theta) * psi - 1j * np.sin(theta) * apply_zstring(psi, z_mask)


def apply_site_perm(psi: np.ndarray, perm: Sequence[int], z_mask: int) -> np.ndarray:
    """Signed qubit-permutation W|b> = (-1)^{popcount(z & pi(b))} |pi(b)>,

    where pi(b) moves bit q of b to bit position perm[q].
    """
    n = len(perm)
    idx = np.arange(len(psi))
    out_idx = np.zeros_like(idx)
    for q in range(n):
        out_idx |= ((idx >> q) & 1) << perm[q]
    out = np.empty_like(psi)
    sign = np.where(_popcount(np.bitwise_and(out_idx, z_mask)) & 1, -1.0, 1.0)
    out[out_idx] = sign * psi
    return out


# ---------------------------------------------------------------------------
# Trotter product formulas S_{2k}, k in {0, 1, 2}
# ---------------------------------------------------------------------------

P2 = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))   # Suzuki recursion constant p_2


def _trotter_sequence(L: int, k: int) -> tuple[tuple[int, float], ...]:
    """Flat (term index, fraction of m) application sequence for S_{2k}.

    The state-side convention: entries are applied left to right.  S_2 is a
    reverse-order half sweep followed by a forward-order half sweep, which
    makes the operator symmetric (second order).  S_4 follows the recursion
    S_4(x) = [S_2(p x)]^2 S_2((1-4p)x) [S_2(p x)]^2.
    """
    if k == 0:
        return ()
    if k == 1:
        rev = tuple((l, 0.5) for l in reversed(range(L)))
        fwd = tuple((l, 0.5) for l in range(L))
        return rev + fwd
    if k == 2:
        s2 = _trotter_sequence(L, 1)
        outer = tuple((l, f * P2) for l, f in s2)
        middle = tuple((l, f * (1.0 - 4.0 * P2)) for l, f in s2)
        return outer + outer + middle + outer + outer
    raise ValueError(f"unsupported Trotter half-order k={k}")


def trotter_step(psi: np.ndarray, H: HamiltonianSpec, m: float, k: int) -> np.ndarray:
    """S_{2k}(m)|psi>; k=0 is the identity step."""
    if not np.isfinite(m):
        raise ValueError("step duration must be finite")
    out = psi
    for l, frac in _trotter_sequence(len(H.terms), k):
        term = H.terms[l]
        out = apply_exp_pauli(out, term.string, frac * m * term.coeff)
    return out if out is not psi else psi.copy()


def trotter_unitary(H: HamiltonianSpec, m: float, k: int) -> np.ndarray:
    """Dense matrix of S_{2k}(m) (for oracles and the cached-instance engine)."""
    dim = 1 << H.n
    mat = np.eye(dim, dtype=complex)
    for l, frac in _trotter_sequence(len(H.terms), k):
        term = H.terms[l]
        theta = frac * m * term.coeff
        pmat = _pauli_matrix_cached(term.string)
        mat = (np.cos(theta) * mat - 1j * np.sin(theta) * (pmat @ mat))
    return mat


@lru_cache(maxsize=512)
def _pauli_matrix_cached(p: PauliString) -> np.ndarray:
    return p.to_matrix()


# ---------------------------------------------------------------------------
# sampled circuit instances
# ---------------------------------------------------------------------------

class CompensationOp(Protocol):
    """A sampled compensation unitary W_r: knows how to act and describe itself."""

    def apply(self, psi: np.ndarray) -> np.ndarray: ...
    def matrix(self, n: int) -> np.ndarray: ...
    def trace_text(self) -> str: ...


@dataclass(frozen=True)
class Segment:
    """One time slice: the Trotter step S_{2k}(m) followed by a sampled W."""

    m: float
    k: int
    comp: CompensationOp | None    # None means W = I (pure Trotter segment)


@dataclass
class CircuitInstance:
    """One sampled summand of the composite LCU: product of nu segments.

    weight carries the sampled phase/sign bookkeeping; mu_total the product
    of per-segment normalizations mu(m)^nu attached by the sampler.
    """

    segments: tuple[Segment, ...]
    weight: complex
    time: float
    mu_total: float = 1.0

    @property
    def nu(self) -> int:
        return len(self.segments)

    def trace_lines(self) -> list[str]:
        lines = []
        for q, seg in enumerate(self.segments, start=1):
            lines.append(f"seg q={q} S m={seg.m:.6g}")
            if seg.comp is not None:
                lines.append(f"seg q={q} W {seg.comp.trace_text()}")
        return lines


def run_instance(psi0: np.ndarray, H: HamiltonianSpec, inst: CircuitInstance) -> np.ndarray:
    """|i_vec> = prod_{q=1..nu} W_{i_q} S(m) |psi0> (weight left in inst)."""
    psi = psi0
    for seg in inst.segments:
        psi = trotter_step(psi, H, seg.m, seg.k)
        if seg.comp is not None:
            psi = seg.comp.apply(psi)
    return psi


def instance_matrix(H: HamiltonianSpec, inst: CircuitInstance) -> np.ndarray:
    """Dense matrix of the instance including its weight (oracle use)."""
    dim = 1 << H.n
    mat = np.eye(dim, dtype=complex)
    for seg in inst.segments:
        mat = trotter_unitary(H, seg.m, seg.k) @ mat
        if seg.comp is not None:
            mat = seg.comp.matrix(H.n) @ mat
    return inst.weight * mat


def overlap(phi: np.ndarray, O, psi: np.ndarray) -> complex:
    """<phi|O|psi> with O a Pauli-term list, dense matrix, or None (identity)."""
    if O is None:
        return complex(np.vdot(phi, psi))
    if isinstance(O, np.ndarray):
        return complex(np.vdot(phi, O @ psi))
    total = 0.0 + 0.0j
    for term in O:
        total += term.coeff * np.vdot(phi, apply_pauli(psi, term.string))
    return complex(total)


def total_z_expectation(psi: np.ndarray, n: int) -> float:
    """<sum_i Z_i> — the conserved charge of the symmetry basis."""
    idx = np.arange(len(psi))
    zsum = n - 2 * _popcount(idx)
    return float(np.real(np.sum(zsum * np.abs(psi) ** 2)))
