import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdc_dstm import codec, stbc
from mdc_dstm.constellation import psk

from conftest import crandn

R1SQ, R2SQ = 1 / 3, 5 / 3


def test_make_code_matrix_scales(code4, m1):
    r1, r2 = np.sqrt(R1SQ), np.sqrt(R2SQ)
    assert codec.make_code_matrix(code4, [r1] * 4).a_sq == pytest.approx(R1SQ)
    assert codec.make_code_matrix(code4, [1j * r2] * 4).a_sq == pytest.approx(R2SQ)


def test_make_code_matrix_rejects_qam(code4):
    with pytest.raises(codec.NotQuasiUnitaryError) as exc:
        codec.make_code_matrix(code4, [1 + 1j, 1, 1, 1])
    assert exc.value.beta == pytest.approx(-2.0)
    assert "beta" in str(exc.value)


def test_ostbc_accepts_any_symbols(rng):
    d = stbc.code_for_antennas(4, "ostbc")
    c = codec.make_code_matrix(d, crandn(rng, 3))
    np.testing.assert_allclose(c.u @ c.u.conj().T, c.a_sq * np.eye(4), atol=1e-12)


def test_encode_identity_reference(code4):
    u = codec.make_code_matrix(code4, [1 / np.sqrt(1), 0, 0, 0])
    # a_sq = 1/4 here; build a unit-scale matrix directly
    u = codec.CodeMatrix(u.u / np.sqrt(u.a_sq), 1.0)
    x, st1 = codec.encode_step(codec.initial_encoder_state(4), u)
    np.testing.assert_array_equal(x, u.u)
    assert st1.a_prev_sq == 1.0


def test_encode_errors(code4, m1):
    u = codec.make_code_matrix(code4, m1.points[[0, 1, 2, 3]])
    with pytest.raises(ValueError):
        codec.encode_step(codec.EncoderState(np.eye(4), 0.0), u)
    with pytest.raises(ValueError):
        codec.encode_step(codec.initial_encoder_state(2), u)


def test_unitary_chain_stays_unitary(code4, rng):
    qpsk = psk(4)
    state = codec.initial_encoder_state(4)
    for _ in range(50):
        # points on the axes keep x*y = 0, so beta = 0
        s = qpsk.points[rng.integers(0, 4, 4)]
        u = codec.make_code_matrix(code4, s)
        u = codec.CodeMatrix(u.u / np.sqrt(u.a_sq), 1.0)
        x, state = codec.encode_step(state, u)
        np.testing.assert_allclose(x @ x.conj().T, np.eye(4), atol=1e-10)


def test_transmit_power_long_stream(code4, m1, rng):
    state = codec.initial_encoder_state(4)
    power = []
    for _ in range(20_000):
        u = codec.make_code_matrix(code4, m1.points[rng.integers(0, 4, 4)])
        x, state = codec.encode_step(state, u)
        power.append(np.real(np.trace(x @ x.conj().T)) / 4)
    assert np.mean(power) == pytest.approx(1.0, rel=0.02)


def test_scalar_metric_example():
    book = [codec.CodeMatrix(np.array([[2.0 + 0j]]), 4.0), codec.CodeMatrix(np.array([[-1.0 + 0j]]), 1.0)]
    r0, r1 = np.array([[1.0 + 0j]]), np.array([[2.0 + 0j]])
    us = np.array([c.u for c in book])
    np.testing.assert_allclose(codec.exhaustive_metrics(r0, r1, 1.0, us), [-4.0, 5.0])
    idx, state = codec.decode_exhaustive(codec.initial_decoder_state(r0), r1, book)
    assert idx == 0
    assert state.a_prev_sq_est == 4.0
    np.testing.assert_array_equal(state.r_prev, r1)


def test_single_entry_and_empty_codebook(code4, m1, rng):
    c = codec.make_code_matrix(code4, m1.points[[0, 1, 2, 3]])
    st0 = codec.initial_decoder_state(crandn(rng, 1, 4))
    for _ in range(5):
        idx, _ = codec.decode_exhaustive(st0, crandn(rng, 1, 4), [c])
        assert idx == 0
    with pytest.raises(ValueError):
        codec.decode_exhaustive(st0, crandn(rng, 1, 4), [])
    with pytest.raises(ValueError):
        codec.decode_single_symbol(st0, crandn(rng, 1, 4), code4, [])


@pytest.mark.parametrize("fixture", ["code4", "code8"])
def test_noiseless_round_trip(fixture, request, m1, m2, rng):
    dset = request.getfixturevalue(fixture)
    pts = (m1 if dset.n_t == 4 else m2).points
    h = crandn(rng, 2, dset.n_t)
    enc = codec.initial_encoder_state(dset.n_t)
    dec = codec.initial_decoder_state(h @ enc.x_prev)
    for _ in range(20):
        idx = rng.integers(0, len(pts), dset.k)
        x, enc = codec.encode_step(enc, codec.make_code_matrix(dset, pts[idx]))
        got, dec = codec.decode_single_symbol(dec, h @ x, dset, pts)
        np.testing.assert_array_equal(got, idx)


def test_literal_and_scaled_first_term_agree(code4, m1, rng):
    syms, words = stbc.codebook(code4, m1.points)
    a_sqs = np.sum(np.abs(syms) ** 2, axis=1) * codec.gram_scale(code4)
    r0, r1 = crandn(rng, 2, 4), crandn(rng, 2, 4)
    lit = codec.exhaustive_metrics(r0, r1, 0.7, words)
    fast = codec.exhaustive_metrics(r0, r1, 0.7, words, a_sqs)
    np.testing.assert_allclose(lit, fast, atol=1e-10)


def test_decoding_cost(code4, m1, rng):
    m = codec.single_symbol_metrics(crandn(rng, 1, 4), crandn(rng, 1, 4), 1.0, code4, m1.points)
    assert m.shape == (4, 4)
    assert m.size == 16 < len(m1.points) ** code4.k


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.05, 3.0))
def test_single_symbol_equals_exhaustive(seed, noise):
    rng = np.random.default_rng(seed)
    from mdc_dstm.constellation import closed_form_m4
    dset = stbc.code_for_antennas(4)
    pts = closed_form_m4().points
    syms, words = stbc.codebook(dset, pts)
    a_sqs = np.sum(np.abs(syms) ** 2, axis=1) * codec.gram_scale(dset)
    book = [codec.CodeMatrix(w, a) for w, a in zip(words, a_sqs)]
    a_prev = float(rng.choice([R1SQ, R2SQ, 1.0]))
    st0 = codec.DecoderState(crandn(rng, 1, 4), a_prev)
    r_t = crandn(rng, 1, 4) * noise + st0.r_prev @ words[rng.integers(256)]
    ex, _ = codec.decode_exhaustive(st0, r_t, book)
    ss, _ = codec.decode_single_symbol(st0, r_t, dset, pts)
    np.testing.assert_allclose(syms[ex], pts[ss])


def test_genie_state_update(code4, m1, rng):
    r = crandn(rng, 1, 4)
    st0 = codec.initial_decoder_state(r, genie=True)
    with pytest.raises(ValueError):
        codec.decode_single_symbol(st0, r, code4, m1)
    _, st1 = codec.decode_single_symbol(st0, r, code4, m1, true_a_sq=0.25)
    assert st1.a_prev_sq_est == 0.25


def test_effective_noise_unitary():
    u = codec.CodeMatrix(np.eye(4, dtype=complex), 1.0)
    s = codec.effective_noise_stats(50_000, 1.0, u)
    assert s["variance"] == pytest.approx(2.0, rel=0.05)
    assert s["analytic"] == 2.0
    assert codec.effective_noise_stats(1000, 0.0, u)["variance"] == 0.0


def test_effective_noise_small_scale(code4):
    u = codec.make_code_matrix(code4, [np.sqrt(R1SQ)] * 4)
    s = codec.effective_noise_stats(50_000, 1.0, u)
    assert s["variance"] == pytest.approx(2.0, rel=0.05)
    s = codec.effective_noise_stats(50_000, 1.0, u, a_prev_sq=R2SQ, n_r=2)
    assert s["variance"] == pytest.approx(1 + R1SQ / R2SQ, rel=0.05)
