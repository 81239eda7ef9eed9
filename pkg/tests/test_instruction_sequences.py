"""
Test the instruction-sequence family, its ranking and the OTP on the index
"""
import numpy as np
import pytest

from app.core.config import settings
from app.core.errors import ValidationError
from app.schemas.cipher import CipherTag, InstructionSequence
from app.utils.instruction_sequences import (
    count_valid,
    decrypt_is,
    encrypt_is,
    index_bits,
    rank,
    unrank,
    verify_capacity,
    verify_supported,
)

OTP, AES, ASCON = CipherTag.OTP, CipherTag.AES, CipherTag.ASCON


@pytest.mark.parametrize("n_obs,expected", [(0, 1), (2, 6), (4, 30), (6, 174), (8, 1092)])
def test_count_valid(n_obs, expected):
    assert count_valid(n_obs) == expected


def test_odd_n_obs_shares_gamma():
    assert count_valid(3) == count_valid(4) == 30


def test_capacity_holds_up_to_max():
    verify_supported()
    verify_capacity(settings.N_OBS_MAX)


def test_n_obs_one_rejected():
    with pytest.raises(ValidationError):
        count_valid(1)
    with pytest.raises(ValidationError):
        unrank(0, 1)


def test_unrank_order_n_obs_two():
    """Lexicographic with OTP < AES < ASCON"""
    expected = [
        [OTP, AES, ASCON],
        [OTP, ASCON, AES],
        [AES, OTP, ASCON],
        [AES, ASCON, OTP],
    ]
    assert [unrank(i, 2).steps for i in range(4)] == expected
    assert unrank(0, 2).render() == "OTP>AES>ASCON"


def test_unrank_empty_sequence():
    assert unrank(0, 0).steps == []


@pytest.mark.parametrize("n_obs", [2, 3, 4, 5, 6])
def test_rank_inverts_unrank(n_obs):
    sequences = [unrank(i, n_obs) for i in range(2 ** n_obs)]
    assert [rank(seq) for seq in sequences] == list(range(2 ** n_obs))
    assert len({seq.render() for seq in sequences}) == 2 ** n_obs


def test_unrank_large_n_obs():
    seq = unrank(2 ** 16 - 1, 16)
    assert len(seq.steps) == 24
    assert rank(seq) == 2 ** 16 - 1
    assert all(seq.count(tag) == 8 for tag in (OTP, AES, ASCON))


def test_unrank_rejects_out_of_range():
    with pytest.raises(ValidationError):
        unrank(4, 2)
    with pytest.raises(ValidationError):
        unrank(0, settings.N_OBS_MAX + 1)


def test_sequence_schema_rejects_repeats():
    with pytest.raises(ValueError):
        InstructionSequence(steps=[OTP, OTP, AES], n_obs=2)
    with pytest.raises(ValueError):
        InstructionSequence(steps=[OTP, AES], n_obs=2)


def test_index_otp_round_trip():
    rng = np.random.default_rng(1)
    for n_obs in (2, 4, 8):
        for index in range(0, 2 ** n_obs, 3):
            pad = rng.integers(0, 2, n_obs, dtype=np.uint8)
            pi = encrypt_is(index, pad)
            assert pi.size == n_obs
            assert decrypt_is(pi, pad) == index


def test_index_bits_big_endian():
    assert index_bits(5, 4).tolist() == [0, 1, 0, 1]


def test_encrypt_is_validates():
    with pytest.raises(ValidationError):
        encrypt_is(4, np.zeros(2, dtype=np.uint8))
    with pytest.raises(ValidationError):
        decrypt_is(np.zeros(2, dtype=np.uint8), np.zeros(3, dtype=np.uint8))
