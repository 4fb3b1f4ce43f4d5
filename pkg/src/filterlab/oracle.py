"""Brute-force ground truth for small systems.

Dense diagonalization, exact Gaussian-filter action g_tau(H - omega) =
e^{-tau^2 (H - omega)^2}, and exact N/D expectation values.  Everything here
is an oracle for validating the Monte-Carlo machinery, so the implementation
favours obviousness over speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import HamiltonianSpec

MAX_DENSE_QUBITS = 12


@dataclass(frozen=True)
class EigenSystem:
    """Full spectrum of a Hamiltonian: ascending energies + orthonormal vectors."""

    n: int
    energies: np.ndarray          # shape (2^n,), ascending
    vectors: np.ndarray           # shape (2^n, 2^n), column j is |u_j>

    def gap(self, j: int) -> float:
        """min(E_{j+1} - E_j, E_j - E_{j-1}); one-sided at the spectrum edges."""
        dim = len(self.energies)
        gaps = []
        if j + 1 < dim:
            gaps.append(self.energies[j + 1] - self.energies[j])
        if j > 0:
            gaps.append(self.energies[j] - self.energies[j - 1])
        return float(min(gaps))

    def ground_gap(self) -> float:
        """Gap above the ground energy, skipping exact degeneracies."""
        e0 = self.energies[0]
        above = self.energies[self.energies > e0 + 1e-10]
        if len(above) == 0:
            raise ValueError("fully degenerate spectrum")
        return float(above[0] - e0)


def diagonalize(H: HamiltonianSpec) -> EigenSystem:
    """Dense eigensolve; feasible for n <= 12."""
    if H.n > MAX_DENSE_QUBITS:
        raise ValueError(f"n={H.n} too large for dense diagonalization")
    mat = H.to_matrix()
    energies, vectors = np.linalg.eigh(mat)
    return EigenSystem(H.n, energies, vectors)


def default_initial_state(eig: EigenSystem) -> np.ndarray:
    """Computational basis state with the largest ground-state overlap."""
    idx = int(np.argmax(np.abs(eig.vectors[:, 0]) ** 2))
    psi = np.zeros(len(eig.energies), dtype=complex)
    psi[idx] = 1.0
    return psi


def overlap_eta(eig: EigenSystem, psi0: np.ndarray, j: int = 0) -> float:
    """eta = |<psi0|u_j>|^2."""
    return float(np.abs(np.vdot(eig.vectors[:, j], psi0)) ** 2)


def apply_filter_exact(eig: EigenSystem, psi0: np.ndarray, tau: float, omega: float) -> np.ndarray:
    """Unnormalized g_tau(H - omega)|psi0> = e^{-tau^2 (H - omega)^2}|psi0>."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    coeffs = eig.vectors.conj().T @ psi0
    weights = np.exp(-(tau ** 2) * (eig.energies - omega) ** 2)
    return eig.vectors @ (weights * coeffs)


def exact_N_and_D(
    eig: EigenSystem,
    psi0: np.ndarray,
    O: np.ndarray,
    tau: float,
    omega: float,
) -> tuple[float, float]:
    """(N_tau(O), D_tau(omega)) = (<psi0|g O g|psi0>, <psi0|g^2|psi0>).

    O is the dense observable matrix and must be Hermitian.
    """
    if not np.allclose(O, O.conj().T, atol=1e-10):
        raise ValueError("observable must be Hermitian")
    g_psi = apply_filter_exact(eig, psi0, tau, omega)
    N = np.vdot(g_psi, O @ g_psi)
    D = np.vdot(g_psi, g_psi)
    if abs(N.imag) > 1e-10 * max(1.0, abs(N.real)):
        raise AssertionError(f"N has spurious imaginary part {N.imag}")
    return float(N.real), float(D.real)


def exact_D_curve(
    eig: EigenSystem, psi0: np.ndarray, tau: float, omega_grid: np.ndarray
) -> np.ndarray:
    """D_tau(omega) for each grid point (ascending omega grid)."""
    omega_grid = np.asarray(omega_grid, dtype=float)
    if omega_grid.size == 0:
        raise ValueError("empty omega grid")
    coeffs = np.abs(eig.vectors.conj().T @ psi0) ** 2
    # D(omega) = sum_j |c_j|^2 e^{-2 tau^2 (E_j - omega)^2}
    diffs = eig.energies[None, :] - omega_grid[:, None]
    return (coeffs[None, :] * np.exp(-2.0 * tau ** 2 * diffs ** 2)).sum(axis=1)


# ---------------------------------------------------------------------------
# state file: one `re im` amplitude per line, length 2^n, normalized on load
# ---------------------------------------------------------------------------

def load_state(path, n: int | None = None) -> np.ndarray:
    amps = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 2:
                raise ValueError(f"state file line {lineno}: expected `re im`")
            amps.append(complex(float(fields[0]), float(fields[1])))
    psi = np.asarray(amps, dtype=complex)
    dim = len(psi)
    if dim == 0 or dim & (dim - 1):
        raise ValueError(f"state length {dim} is not a power of two")
    if n is not None and dim != (1 << n):
        raise ValueError(f"state length {dim} does not match n={n}")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"state norm {norm} deviates from 1 beyond 1e-6")
    return psi / norm
