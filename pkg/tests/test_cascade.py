"""Interactive parity reconciliation: leakage, correction, verification."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bellqkd.cascade import (
    CascadeParams,
    VerificationFailedError,
    classic_initial_block,
    reconcile_pair,
    verify_keys,
)


def _keys_with_errors(rng, n, n_err):
    alice = rng.integers(0, 2, n).astype(np.uint8)
    bob = alice.copy()
    idx = rng.choice(n, size=n_err, replace=False)
    bob[idx] ^= 1
    return alice, bob


def test_initial_block_size_rule():
    assert classic_initial_block(0.01, 10000) == 73
    assert classic_initial_block(0.03, 10000) == 25   # ceil(0.73/0.03)
    assert classic_initial_block(0.5, 10000) == 8     # lower clamp
    assert classic_initial_block(1e-9, 10000) == 5000  # upper clamp n/2
    assert classic_initial_block(0.0, 10000) == 5000
    assert classic_initial_block(0.1, 10) == 5        # clamps shrink with n


def test_noiseless_leak_frozen():
    # qber prior 0 -> block size n/2 -> 2 parities x 4 passes + 64-bit tag
    bits = np.random.default_rng(1).integers(0, 2, 10000).astype(np.uint8)
    params = CascadeParams(shuffle_seed=42)
    alice, bob = reconcile_pair(bits, bits, params, qber_estimate=0.0)
    assert alice.leaked_bits == bob.leaked_bits == 72
    assert bob.verified and alice.verified
    assert bob.errors_corrected == 0
    assert alice.errors_corrected == 0  # responder never counts corrections
    assert bob.n == alice.n == 10000
    np.testing.assert_array_equal(bob.bits, bits)


def test_corrects_errors_with_explicit_prior():
    rng = np.random.default_rng(7)
    alice_bits, bob_bits = _keys_with_errors(rng, 10000, 200)
    params = CascadeParams(shuffle_seed=99)
    alice, bob = reconcile_pair(alice_bits, bob_bits, params, qber_estimate=0.02)
    assert bob.verified
    np.testing.assert_array_equal(bob.bits, alice_bits)
    assert bob.errors_corrected == 200
    assert alice.leaked_bits == bob.leaked_bits
    assert bob.measured_qber == pytest.approx(0.02)
    assert bob.sample_size == 0
    # untouched inputs
    assert np.sum(alice_bits != bob_bits) == 200


def test_sample_bootstrap_path():
    rng = np.random.default_rng(13)
    alice_bits, bob_bits = _keys_with_errors(rng, 10000, 300)
    params = CascadeParams(shuffle_seed=5)
    alice, bob = reconcile_pair(alice_bits, bob_bits, params)  # no prior
    assert bob.sample_size == 200  # 2% of 10^4, disclosed and discarded
    assert bob.n == alice.n == 9800
    assert bob.verified
    np.testing.assert_array_equal(bob.bits, alice.bits)
    assert bob.qber_prior == max(bob.sample_mismatches, 1) / bob.sample_size
    assert bob.errors_corrected + bob.sample_mismatches == 300
    assert alice.leaked_bits == bob.leaked_bits


def test_clean_sample_does_not_zero_the_prior():
    # errors placed so the 2% sample happens to contain none of them must
    # still leave a workable first-pass block size
    rng = np.random.default_rng(3)
    alice_bits = rng.integers(0, 2, 5000).astype(np.uint8)
    params = CascadeParams(shuffle_seed=8)
    # find error positions outside the sampled index set by trial
    for attempt in range(50):
        bob_bits = alice_bits.copy()
        idx = rng.choice(5000, size=60, replace=False)
        bob_bits[idx] ^= 1
        alice, bob = reconcile_pair(alice_bits, bob_bits, params)
        if bob.sample_mismatches == 0:
            assert bob.qber_prior == 1 / bob.sample_size
            assert bob.verified
            np.testing.assert_array_equal(bob.bits, alice.bits)
            return
    pytest.skip("no clean sample drawn in 50 attempts")


def test_single_pass_miss_fails_verification():
    # two errors in the same first-pass block and only one pass: the even
    # parity hides them, so the closing tags must disagree
    n = 64
    alice_bits = np.zeros(n, dtype=np.uint8)
    bob_bits = alice_bits.copy()
    bob_bits[0] ^= 1
    bob_bits[1] ^= 1
    params = CascadeParams(passes=1, shuffle_seed=17)
    with pytest.raises(VerificationFailedError) as info:
        reconcile_pair(alice_bits, bob_bits, params, qber_estimate=1e-12)
    result = info.value.result
    assert not result.verified
    assert result.errors_corrected == 0
    assert result.leaked_bits == 2 + 64  # two block parities plus the tag


def test_four_passes_recover_the_same_case():
    n = 64
    alice_bits = np.zeros(n, dtype=np.uint8)
    bob_bits = alice_bits.copy()
    bob_bits[0] ^= 1
    bob_bits[1] ^= 1
    params = CascadeParams(shuffle_seed=17)
    alice, bob = reconcile_pair(alice_bits, bob_bits, params, qber_estimate=1e-12)
    assert bob.verified
    np.testing.assert_array_equal(bob.bits, alice_bits)


def test_reconcile_rejects_empty_key():
    with pytest.raises(ValueError):
        reconcile_pair(np.empty(0, dtype=np.uint8), np.empty(0, dtype=np.uint8))


def test_deterministic_for_fixed_seed():
    rng = np.random.default_rng(21)
    alice_bits, bob_bits = _keys_with_errors(rng, 4000, 80)
    params = CascadeParams(shuffle_seed=1234)
    r1 = reconcile_pair(alice_bits, bob_bits, params, qber_estimate=0.02)
    r2 = reconcile_pair(alice_bits, bob_bits, params, qber_estimate=0.02)
    for a, b in zip(r1, r2):
        assert a.leaked_bits == b.leaked_bits
        assert a.exchanged_messages == b.exchanged_messages
        np.testing.assert_array_equal(a.bits, b.bits)


def test_params_validation():
    with pytest.raises(ValueError):
        CascadeParams(passes=0)
    with pytest.raises(ValueError):
        CascadeParams(sample_fraction=0.0)
    with pytest.raises(ValueError):
        CascadeParams(sample_fraction=0.6)
    with pytest.raises(ValueError):
        CascadeParams(verification_tag_bits=60)
    with pytest.raises(ValueError):
        CascadeParams(verification_tag_bits=0)


def test_verify_keys_detects_any_single_flip():
    rng = np.random.default_rng(6)
    bits = rng.integers(0, 2, 257).astype(np.uint8)
    tag = verify_keys(bits, 64, seed=777)
    assert len(tag) == 8
    assert verify_keys(bits.copy(), 64, seed=777) == tag
    assert verify_keys(bits, 64, seed=778) != tag
    for pos in range(0, 257, 16):
        flipped = bits.copy()
        flipped[pos] ^= 1
        assert verify_keys(flipped, 64, seed=777) != tag


def test_verify_keys_pads_short_input():
    tag = verify_keys(np.array([1], dtype=np.uint8), 64, seed=5)
    assert len(tag) == 8
    assert tag != verify_keys(np.array([0], dtype=np.uint8), 64, seed=5)


@given(st.integers(0, 2**31 - 1), st.integers(64, 500), st.floats(0.0, 0.12))
@settings(max_examples=40, deadline=None)
def test_verified_implies_equal_keys(seed, n, q):
    rng = np.random.default_rng(seed)
    n_err = int(round(q * n))
    alice_bits, bob_bits = _keys_with_errors(rng, n, n_err)
    params = CascadeParams(shuffle_seed=seed)
    try:
        alice, bob = reconcile_pair(alice_bits, bob_bits, params)
    except VerificationFailedError as exc:
        assert not exc.result.verified  # detected failure, never silent
        return
    assert alice.verified and bob.verified
    np.testing.assert_array_equal(alice.bits, bob.bits)
    assert alice.leaked_bits == bob.leaked_bits >= params.verification_tag_bits
    assert bob.errors_corrected + bob.sample_mismatches == n_err
