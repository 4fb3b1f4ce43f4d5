"""Dense ground-truth oracles: diagonalization and exact filter action."""

from __future__ import annotations

import numpy as np
import pytest
from scipy.linalg import expm

from filterlab.oracle import (
    apply_filter_exact,
    default_initial_state,
    diagonalize,
    exact_D_curve,
    exact_N_and_D,
    load_state,
    overlap_eta,
)
from filterlab.pauli import build_model


def test_diagonalize_reproduces_matrix():
    H = build_model("tfim", 3)
    eig = diagonalize(H)
    rebuilt = (eig.vectors * eig.energies) @ eig.vectors.conj().T
    assert np.allclose(rebuilt, H.to_matrix(), atol=1e-10)
    assert np.all(np.diff(eig.energies) >= -1e-12)


def test_filter_matches_matrix_exponential():
    # e^{-tau^2 (H-omega)^2} |psi> via eigenbasis vs scipy matrix function
    H = build_model("heisenberg_xxz", 3, {"c": 1.2})
    eig = diagonalize(H)
    rng = np.random.default_rng(0)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    tau, omega = 0.8, -1.3
    mat = expm(-(tau ** 2) * (H.to_matrix() - omega * np.eye(8)) @
               (H.to_matrix() - omega * np.eye(8)))
    assert np.allclose(apply_filter_exact(eig, psi, tau, omega), mat @ psi,
                       atol=1e-10)


def test_filter_projects_onto_ground_state():
    H = build_model("heisenberg_xxz", 4, {"c": 1.5})
    eig = diagonalize(H)
    psi0 = default_initial_state(eig)
    g_psi = apply_filter_exact(eig, psi0, 8.0, float(eig.energies[0]))
    g_psi /= np.linalg.norm(g_psi)
    assert abs(abs(np.vdot(eig.vectors[:, 0], g_psi)) - 1.0) < 1e-8


def test_exact_N_and_D_limits():
    H = build_model("tfim", 2, {"J": 0.5, "h": 0.8})
    eig = diagonalize(H)
    psi0 = default_initial_state(eig)
    O = np.diag([1.0, -1.0, -1.0, 1.0]).astype(complex)
    # tau = 0: filter is identity, N/D = <psi0|O|psi0>
    N, D = exact_N_and_D(eig, psi0, O, 0.0, 0.0)
    assert D == pytest.approx(1.0)
    assert N == pytest.approx(float(np.vdot(psi0, O @ psi0).real))
    with pytest.raises(ValueError):
        exact_N_and_D(eig, psi0, 1j * O, 1.0, 0.0)


def test_D_curve_peaks_at_occupied_energies():
    H = build_model("heisenberg_xxz", 4, {"c": 1.5})
    eig = diagonalize(H)
    psi0 = default_initial_state(eig)
    grid = np.linspace(eig.energies[0] - 1, eig.energies[-1] + 1, 400)
    curve = exact_D_curve(eig, psi0, 4.0, grid)
    top = grid[int(np.argmax(curve))]
    occupied = eig.energies[np.abs(eig.vectors.conj().T @ psi0) ** 2 > 0.2]
    assert min(abs(top - e) for e in occupied) < 0.05


def test_eta_and_gap():
    H = build_model("heisenberg_xxz", 4, {"c": 1.5})
    eig = diagonalize(H)
    assert overlap_eta(eig, eig.vectors[:, 0]) == pytest.approx(1.0)
    assert eig.ground_gap() > 0
    assert eig.gap(0) == pytest.approx(eig.energies[1] - eig.energies[0])


def test_load_state_validation(tmp_path):
    path = tmp_path / "state.txt"
    amp = 1.0 / np.sqrt(2.0)
    path.write_text(f"{amp} 0.0\n0.0 {amp}\n# comment\n")
    psi = load_state(path, 1)
    assert np.allclose(psi, [amp, 1j * amp])
    path.write_text("1.0 0.0\n0.5 0.0\n")
    with pytest.raises(ValueError):
        load_state(path)
    path.write_text("1.0 0.0\n0.0 0.0\n0.0 0.0\n")
    with pytest.raises(ValueError):
        load_state(path)  # length 3 is not a power of two
