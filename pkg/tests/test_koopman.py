import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from koopcast.errors import DimensionError, DomainError
from koopcast.koopman import (
    RankDeficiencyWarning,
    SpectrumReport,
    assemble_block_diagonal,
    edmd_fit,
    eigenvalues,
    rnn_closed_form,
    rnn_scan,
    rollout,
)
from koopcast.numerics import Node, backward, finite_difference_grad, mean, mul

from oracles import rel_err


def stable_matrix(rng, d, radius=0.8):
    q, r = np.linalg.qr(rng.normal(size=(d, d)))
    q *= np.sign(np.diag(r))
    return radius * q


# ---------------------------------------------------------------- rnn_scan


def test_scan_zero_transition_returns_inputs():
    rng = np.random.default_rng(0)
    z = rng.normal(size=(5, 3))
    np.testing.assert_array_equal(rnn_scan(z, np.zeros((3, 3))), z)


def test_scan_identity_transition_gives_prefix_sums():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(6, 2))
    out = rnn_scan(z, np.eye(2))
    np.testing.assert_allclose(out, np.cumsum(z, axis=0), atol=1e-12)


def test_scan_matches_closed_form_random_instance():
    rng = np.random.default_rng(2)
    w = stable_matrix(rng, 4)
    z = rng.normal(size=(5, 4))
    assert np.max(np.abs(rnn_scan(z, w) - rnn_closed_form(z, w))) <= 1e-9


def test_scan_width_mismatch():
    with pytest.raises(DimensionError):
        rnn_scan(np.zeros((4, 3)), np.zeros((2, 2)))


def test_scan_supports_initial_state_and_batches():
    rng = np.random.default_rng(3)
    w = stable_matrix(rng, 3)
    z = rng.normal(size=(2, 4, 3))
    h0 = rng.normal(size=(2, 3))
    out = rnn_scan(z, w, h0)
    # Row-by-row sequential oracle.
    for b in range(2):
        h = h0[b]
        for k in range(4):
            h = w @ h + z[b, k]
            np.testing.assert_allclose(out[b, k], h, atol=1e-12)


# ---------------------------------------------------------------- closed form


def test_closed_form_single_step_is_first_token():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(1, 3))
    w = rng.normal(size=(3, 3))
    np.testing.assert_allclose(rnn_closed_form(z, w), z, atol=1e-12)


def test_closed_form_second_step_adds_one_application():
    rng = np.random.default_rng(5)
    z = rng.normal(size=(2, 3))
    w = rng.normal(size=(3, 3))
    out = rnn_closed_form(z, w)
    np.testing.assert_allclose(out[1], z[1] + w @ z[0], atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=16),
    st.integers(min_value=1, max_value=8),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_scan_equals_closed_form_property(k, d, seed):
    rng = np.random.default_rng(seed)
    w = stable_matrix(rng, d, radius=0.95)
    z = rng.normal(size=(k, d))
    assert np.max(np.abs(rnn_scan(z, w) - rnn_closed_form(z, w))) <= 1e-9


# ---------------------------------------------------------------- rollout


def test_rollout_single_step():
    rng = np.random.default_rng(6)
    w = rng.normal(size=(3, 3))
    h = rng.normal(size=3)
    np.testing.assert_allclose(rollout(h, w, 1)[0], w @ h, atol=1e-12)


def test_rollout_geometric_decay():
    out = rollout(np.array([1.0]), np.array([[0.5]]), 3)
    np.testing.assert_allclose(out[:, 0], [0.5, 0.25, 0.125], atol=1e-15)


def test_rollout_step_four_matches_power_oracle():
    rng = np.random.default_rng(7)
    w = rng.normal(size=(4, 4)) * 0.5
    h = rng.normal(size=4)
    w4 = np.linalg.matrix_power(w, 4)
    assert np.max(np.abs(rollout(h, w, 4)[3] - w4 @ h)) <= 1e-10


def test_rollout_is_zero_input_continuation_of_scan():
    rng = np.random.default_rng(8)
    w = stable_matrix(rng, 3)
    h = rng.normal(size=3)
    steps = rollout(h, w, 5)
    continued = rnn_scan(np.zeros((5, 3)), w, h0=h)
    assert np.max(np.abs(steps - continued)) <= 1e-10


def test_rollout_requires_positive_steps():
    with pytest.raises(DomainError):
        rollout(np.zeros(2), np.eye(2), 0)


# ---------------------------------------------------------------- gradients


def test_scan_and_rollout_gradients_match_fd():
    rng = np.random.default_rng(9)
    w_val = stable_matrix(rng, 3)
    z_val = rng.normal(size=(4, 3))
    h_val = rng.normal(size=3)

    def scan_loss(z, w):
        out = rnn_scan(z, w)
        return mean(mul(out, out))

    z, w = Node(z_val), Node(w_val)
    grads = backward(scan_loss(z, w))
    fd_w = finite_difference_grad(lambda m: float(scan_loss(Node(z_val), Node(m)).value), w_val)
    fd_z = finite_difference_grad(lambda m: float(scan_loss(Node(m), Node(w_val)).value), z_val)
    assert rel_err(grads[w], fd_w) <= 1e-4
    assert rel_err(grads[z], fd_z) <= 1e-4

    def roll_loss(h, w):
        out = rollout(h, w, 4)
        return mean(mul(out, out))

    h, w2 = Node(h_val), Node(w_val)
    grads = backward(roll_loss(h, w2))
    fd_w = finite_difference_grad(lambda m: float(roll_loss(Node(h_val), Node(m)).value), w_val)
    fd_h = finite_difference_grad(lambda m: float(roll_loss(Node(m), Node(w_val)).value), h_val)
    assert rel_err(grads[w2], fd_w) <= 1e-4
    assert rel_err(grads[h], fd_h) <= 1e-4


# ---------------------------------------------------------------- block diagonal


def test_single_block_is_identity_assembly():
    rng = np.random.default_rng(10)
    w = rng.normal(size=(3, 3))
    np.testing.assert_array_equal(assemble_block_diagonal([w]), w)


def test_two_scalar_blocks():
    out = assemble_block_diagonal([np.array([[2.0]]), np.array([[3.0]])])
    np.testing.assert_array_equal(out, [[2.0, 0.0], [0.0, 3.0]])


def test_assembled_application_equals_per_branch_bit_exact():
    rng = np.random.default_rng(11)
    blocks = [rng.normal(size=(4, 4)) for _ in range(3)]
    states = [rng.normal(size=4) for _ in range(3)]
    full = assemble_block_diagonal(blocks) @ np.concatenate(states)
    per_branch = np.concatenate([b @ h for b, h in zip(blocks, states)])
    assert np.array_equal(full, per_branch)


def test_ragged_blocks_rejected():
    with pytest.raises(DimensionError):
        assemble_block_diagonal([np.eye(2), np.eye(3)])


# ---------------------------------------------------------------- eigenvalues


def test_eigenvalues_of_diagonal():
    report = eigenvalues(np.diag([0.3, 0.7]))
    np.testing.assert_allclose(sorted(report.magnitudes), [0.3, 0.7], atol=1e-12)
    assert report.spectral_radius == pytest.approx(0.7)


def test_eigenvalues_of_scaled_rotation():
    r, theta = 0.9, np.pi / 4
    w = r * np.array(
        [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
    )
    report = eigenvalues(w, branch=1)
    np.testing.assert_allclose(report.magnitudes, [0.9, 0.9], atol=1e-12)
    angles = np.sort(np.angle(report.eigenvalues))
    np.testing.assert_allclose(angles, [-np.pi / 4, np.pi / 4], atol=1e-12)
    assert report.branch == 1


def test_eigenvalues_satisfy_characteristic_residual():
    rng = np.random.default_rng(12)
    w = rng.normal(size=(3, 3))
    report = eigenvalues(w)

    def det3(m):
        # Cofactor expansion, independent of numpy.linalg.
        return (
            m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
            - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
            + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
        )

    for lam in report.eigenvalues:
        assert abs(det3(w.astype(complex) - lam * np.eye(3))) <= 1e-8


def test_spectrum_report_csv_rows():
    report = SpectrumReport(branch=2, eigenvalues=np.array([0.5 + 0.5j]))
    ((branch, re, im, mag),) = report.csv_rows()
    assert branch == 2 and re == 0.5 and im == 0.5
    assert mag == pytest.approx(np.sqrt(0.5))


# ---------------------------------------------------------------- EDMD


def test_edmd_scalar_doubling():
    x = 2.0 ** np.arange(6)
    fit = edmd_fit(x[:-1, None], x[1:, None])
    np.testing.assert_allclose(fit, [[2.0]], atol=1e-10)


def test_edmd_recovers_linear_system():
    rng = np.random.default_rng(13)
    a = stable_matrix(rng, 2, radius=0.9)
    x = np.zeros((51, 2))
    x[0] = rng.normal(size=2)
    for k in range(50):
        x[k + 1] = a @ x[k]
    fit = edmd_fit(x[:-1], x[1:])
    # Row convention: snapshots are row vectors, so the fit is A^T.
    assert np.linalg.norm(fit - a.T) <= 1e-8


def test_edmd_scalar_ridge_closed_form():
    k = 10
    fit = edmd_fit(np.ones((k, 1)), np.full((k, 1), 2.0), ridge=float(k))
    np.testing.assert_allclose(fit, [[1.0]], atol=1e-12)


def test_edmd_rank_deficiency_warns_but_returns():
    prev = np.zeros((5, 2))
    prev[:, 0] = np.arange(5.0)
    nxt = np.roll(prev, -1, axis=0)
    with pytest.warns(RankDeficiencyWarning):
        fit = edmd_fit(prev, nxt)
    assert fit.shape == (2, 2)


def test_edmd_rejects_mismatched_rows():
    with pytest.raises(DimensionError):
        edmd_fit(np.zeros((4, 2)), np.zeros((5, 2)))


def test_edmd_rejects_negative_ridge():
    with pytest.raises(DomainError):
        edmd_fit(np.zeros((4, 2)), np.zeros((4, 2)), ridge=-1.0)
