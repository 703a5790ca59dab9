"""Operator algebra, state validation, and spectral helpers."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from pacvqkd.fock import (
    Cutoff,
    CutoffMismatchError,
    FockError,
    InvalidStateError,
    Mode,
    TwoModeState,
    annihilation,
    creation,
    embed,
    fidelity,
    number_operator,
    partial_trace,
    partial_transpose,
    purity,
    state_from_json,
    state_to_json,
    tensor,
    trace_norm,
    von_neumann_entropy,
)
from pacvqkd.states import TmsvParams, make_tmsv

CUT = Cutoff(5)
D = CUT.dim


def two_mode_vacuum(cutoff=CUT):
    psi = np.zeros(cutoff.two_mode_dim, dtype=np.complex128)
    psi[0] = 1.0
    return TwoModeState.from_vector(psi, cutoff)


def test_cutoff_dimensions():
    assert CUT.dim == 6
    assert CUT.two_mode_dim == 36
    with pytest.raises(FockError):
        Cutoff(0)
    with pytest.raises(FockError):
        Cutoff(2.5)


def test_ladder_commutator_below_cutoff():
    a = annihilation(CUT)
    comm = a @ creation(CUT) - creation(CUT) @ a
    # [a, adag] = 1 except in the top truncated level
    assert_allclose(comm[:-1, :-1], np.eye(D - 1), atol=1e-14)
    assert comm[-1, -1].real == pytest.approx(-CUT.n_max)


def test_number_operator_matches_ladder_product():
    n_op = creation(CUT) @ annihilation(CUT)
    assert_allclose(n_op, number_operator(CUT), atol=1e-14)


def test_annihilation_action_on_fock_state():
    a = annihilation(CUT)
    e3 = np.zeros(D)
    e3[3] = 1.0
    assert_allclose(a @ e3, np.sqrt(3.0) * np.eye(D)[2], atol=1e-14)


def test_embed_acts_on_selected_mode():
    n_op = number_operator(CUT)
    psi = np.zeros(CUT.two_mode_dim, dtype=np.complex128)
    psi[2 * D + 5] = 1.0  # |2, 5>
    state = TwoModeState.from_vector(psi, CUT)
    na = embed(n_op, Mode.A, CUT)
    nb = embed(n_op, Mode.B, CUT)
    assert np.vdot(psi, na @ psi).real == pytest.approx(2.0)
    assert np.vdot(psi, nb @ psi).real == pytest.approx(5.0)
    assert partial_trace(state, Mode.A)[2, 2].real == pytest.approx(1.0)
    with pytest.raises(CutoffMismatchError):
        embed(np.eye(3), Mode.A, CUT)


def test_tensor_index_convention():
    # flat index of |r, s> must be d*r + s (mode A on the left)
    op = tensor(np.diag(np.arange(D)), np.eye(D))
    assert op[1 * D + 3, 1 * D + 3] == pytest.approx(1.0)
    with pytest.raises(FockError):
        tensor(np.ones(3), np.eye(3))


def test_from_matrix_rejects_bad_inputs():
    good = np.eye(CUT.two_mode_dim) / CUT.two_mode_dim
    TwoModeState.from_matrix(good, CUT)
    with pytest.raises(InvalidStateError):
        TwoModeState.from_matrix(good[:5, :5], CUT)
    bad_herm = good.astype(complex).copy()
    bad_herm[0, 1] = 1j * 1e-3
    with pytest.raises(InvalidStateError):
        TwoModeState.from_matrix(bad_herm, CUT)
    with pytest.raises(InvalidStateError):
        TwoModeState.from_matrix(2.0 * good, CUT)
    indefinite = good.copy()
    indefinite[0, 0] = -0.5
    indefinite[1, 1] += 0.5 + 1.0 / CUT.two_mode_dim
    with pytest.raises(InvalidStateError):
        TwoModeState.from_matrix(indefinite, CUT)


def test_from_matrix_clips_tolerated_negativity():
    d2 = CUT.two_mode_dim
    mat = np.eye(d2) / d2
    eps = 1e-9  # inside the PSD tolerance band
    mat[0, 0] -= eps + 1.0 / d2
    mat[1, 1] += eps + 1.0 / d2
    state = TwoModeState.from_matrix(mat, CUT)
    assert state.clipped
    vals = np.linalg.eigvalsh(state.entries)
    assert vals[0] >= 0.0
    assert state.entries.trace().real == pytest.approx(1.0)


def test_entries_are_read_only():
    state = two_mode_vacuum()
    with pytest.raises(ValueError):
        state.entries[0, 0] = 0.0


def test_from_vector_requires_normalization():
    psi = np.zeros(CUT.two_mode_dim)
    psi[0] = 0.5
    with pytest.raises(InvalidStateError):
        TwoModeState.from_vector(psi, CUT)


def test_partial_trace_of_tmsv_is_thermal_like():
    lam = 0.4
    state = make_tmsv(TmsvParams(lam), Cutoff(10))
    reduced = partial_trace(state, Mode.A)
    n = np.arange(11)
    expect = (1 - lam**2) * lam ** (2 * n)
    expect /= expect.sum()
    assert_allclose(np.diag(reduced).real, expect, atol=1e-12)
    # off-diagonals vanish for the photon-number-correlated state
    assert np.max(np.abs(reduced - np.diag(np.diag(reduced)))) < 1e-12
    assert_allclose(partial_trace(state, Mode.B), reduced, atol=1e-12)


def test_partial_transpose_preserves_trace_and_detects_entanglement():
    state = make_tmsv(TmsvParams(0.5), Cutoff(6))
    pt = partial_transpose(state, Mode.B)
    assert pt.trace().real == pytest.approx(1.0)
    # entangled TMSV has a negative partial transpose
    assert np.linalg.eigvalsh(pt)[0] < -1e-3
    # transposing A instead of B gives the same spectrum
    pt_a = partial_transpose(state, Mode.A)
    assert_allclose(
        np.sort(np.linalg.eigvalsh(pt_a)), np.sort(np.linalg.eigvalsh(pt)), atol=1e-12
    )
    # applying the same transpose twice restores the matrix
    back = partial_transpose(
        TwoModeState(entries=pt, cutoff=Cutoff(6)), Mode.B
    )
    assert_allclose(back, state.entries, atol=1e-14)


def test_entropy_of_pure_and_mixed_states():
    assert von_neumann_entropy(np.outer([1, 0], [1, 0])) == pytest.approx(0.0)
    assert von_neumann_entropy(np.eye(4) / 4) == pytest.approx(2.0)
    with pytest.raises(InvalidStateError):
        von_neumann_entropy(np.diag([1.5, -0.5]))


def test_entropy_matches_schmidt_form_for_tmsv():
    lam = 0.5
    state = make_tmsv(TmsvParams(lam), Cutoff(12))
    s_local = von_neumann_entropy(partial_trace(state, Mode.A))
    p = (1 - lam**2) * lam ** (2 * np.arange(13))
    p /= p.sum()
    assert s_local == pytest.approx(float(-(p * np.log2(p)).sum()), abs=1e-9)
    # global state is pure
    assert von_neumann_entropy(state.entries) == pytest.approx(0.0, abs=1e-6)


def test_trace_norm_and_purity():
    rho = np.diag([0.5, 0.5])
    assert trace_norm(rho) == pytest.approx(1.0)
    assert trace_norm(np.array([[0.0, 1.0], [1.0, 0.0]])) == pytest.approx(2.0)
    assert purity(rho) == pytest.approx(0.5)
    assert purity(np.outer([1, 0], [1, 0])) == pytest.approx(1.0)


def test_fidelity_properties():
    rho = np.outer([1, 0, 0], [1, 0, 0]).astype(complex)
    sigma = np.outer([0, 1, 0], [0, 1, 0]).astype(complex)
    assert fidelity(rho, rho) == pytest.approx(1.0)
    assert fidelity(rho, sigma) == pytest.approx(0.0, abs=1e-12)
    # pure overlap |<0|+>|^2 = 1/2
    plus = np.full(2, 1 / np.sqrt(2))
    assert fidelity(
        np.outer([1, 0], [1, 0]).astype(complex), np.outer(plus, plus)
    ) == pytest.approx(0.5)
    # symmetric in its arguments
    mixed = np.diag([0.7, 0.2, 0.1]).astype(complex)
    assert fidelity(rho, mixed) == pytest.approx(fidelity(mixed, rho))


def test_state_json_round_trip(tmp_path):
    state = make_tmsv(TmsvParams(0.45), Cutoff(4))
    path = tmp_path / "state.json"
    state_to_json(state, path)
    loaded = state_from_json(path)
    assert loaded.cutoff == state.cutoff
    assert_allclose(loaded.entries, state.entries, atol=1e-12)


def test_state_json_rejects_wrong_length(tmp_path):
    state = two_mode_vacuum(Cutoff(2))
    path = tmp_path / "state.json"
    state_to_json(state, path)
    payload = path.read_text().replace('"cutoff": 2', '"cutoff": 3')
    path.write_text(payload)
    with pytest.raises(InvalidStateError):
        state_from_json(path)
