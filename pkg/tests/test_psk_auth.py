"""
Test the PSK ledger and Wegman-Carter authentication
"""
import numpy as np
import pytest

from app.core.auth import (
    FIELD_BITS,
    KEY_BITS,
    Authenticator,
    bits_to_int,
    poly_hash,
    split_key,
    wc_mac,
    wc_verify,
)
from app.core.errors import (
    AuthenticationFailure,
    DoubleAesAllocation,
    PoolExhausted,
    ValidationError,
)
from app.models.ledger import LedgerAllocation
from app.schemas.ledger import Allocation, MacTag, PskPurpose
from app.utils.finite_key_bounds import eps_auth
from app.utils.psk_ledger import PskLedger, effective_keyspace_bits, generate_pool


def test_pool_is_seeded():
    assert np.array_equal(generate_pool(256, 1), generate_pool(256, 1))
    assert not np.array_equal(generate_pool(256, 1), generate_pool(256, 2))
    with pytest.raises(ValidationError):
        generate_pool(0, 1)


def test_allocations_never_overlap(ledger):
    """Consecutive allocations are disjoint and advance the cursor"""
    ledger.begin_cycle(3)
    a = ledger.allocate(PskPurpose.IS_PAD, 4)
    b = ledger.allocate(PskPurpose.MAC_KEY, 61)
    assert a.size == 4 and b.size == 61
    assert ledger.cursor == 65
    assert ledger.overlapping() == []
    assert ledger.consumed_bits(cycle_id=3) == 65
    assert np.array_equal(b, ledger.pool[4:65])


def test_pool_exhaustion():
    small = PskLedger(generate_pool(100, 1))
    small.allocate(PskPurpose.MAC_KEY, 61)
    with pytest.raises(PoolExhausted):
        small.allocate(PskPurpose.MAC_KEY, 61)
    assert small.cursor == 61


def test_aes_key_allocated_once(ledger):
    key = ledger.aes_key()
    assert key.size == 256
    assert np.array_equal(ledger.aes_key(), key)
    assert ledger.cursor == 256
    with pytest.raises(DoubleAesAllocation):
        ledger.allocate(PskPurpose.AES_KEY, 256)
    assert ledger.consumed_bits(include_aes=False) == 0


def test_aes_key_size_enforced(ledger):
    with pytest.raises(ValidationError):
        ledger.allocate(PskPurpose.AES_KEY, 128)


def test_mirror_and_advance(ledger):
    ledger.allocate(PskPurpose.IS_PAD, 10)
    peer = ledger.mirror()
    assert peer.cursor == 10
    assert np.array_equal(peer.allocate(PskPurpose.MAC_KEY, 61),
                          ledger.allocate(PskPurpose.MAC_KEY, 61))
    peer.advance_to(200)
    assert peer.cursor == 200
    peer.advance_to(100)
    assert peer.cursor == 200
    with pytest.raises(PoolExhausted):
        peer.advance_to(peer.pool.size + 1)


def test_journal_and_reload(db_session):
    """Pool bytes in artifact storage plus journal rows restore the cursor"""
    ledger = PskLedger(generate_pool(4096, 9), ledger_id="lab-a", db=db_session)
    ledger.begin_cycle(1)
    ledger.aes_key()
    ledger.allocate(PskPurpose.MAC_KEY, 61)
    ledger.save("psk/lab-a.bin")

    rows = db_session.query(LedgerAllocation).filter_by(ledger_id="lab-a").all()
    assert [row.purpose for row in rows] == ["aes_key", "mac_key"]

    restored = PskLedger.load("psk/lab-a.bin", "lab-a", db_session)
    assert restored.cursor == 317
    assert np.array_equal(restored.pool, ledger.pool)
    assert np.array_equal(restored.aes_key(), ledger.aes_key())
    assert restored.cycle_id == 1


def test_allocation_overlap():
    a = Allocation(purpose=PskPurpose.MAC_KEY, offset=0, length=10)
    b = Allocation(purpose=PskPurpose.MAC_KEY, offset=9, length=5)
    c = Allocation(purpose=PskPurpose.MAC_KEY, offset=10, length=5)
    assert a.overlaps(b)
    assert not a.overlaps(c)


def test_effective_keyspace_bits():
    """(n_obs / 4)(n_aes + 2)"""
    assert effective_keyspace_bits(4) == 258.0
    assert effective_keyspace_bits(8, 128) == 260.0
    assert effective_keyspace_bits(0) == 0.0


def test_bits_to_int_and_split():
    assert bits_to_int(np.array([1, 0, 1], dtype=np.uint8)) == 5
    assert bits_to_int(np.zeros(0, dtype=np.uint8)) == 0
    key = np.zeros(KEY_BITS, dtype=np.uint8)
    key[FIELD_BITS - 1] = 1
    key[-1] = 1
    assert split_key(key) == (1, 1)
    with pytest.raises(ValidationError):
        split_key(key[:-1])


def test_poly_hash_binds_length():
    """Trailing zero bytes change the hash through the length block"""
    assert poly_hash(12345, b"abc") != poly_hash(12345, b"abc\x00")
    assert poly_hash(0, b"anything") == 0


def test_mac_round_trip():
    key = generate_pool(KEY_BITS, 3)
    tag = wc_mac(key, b"frame bytes", key_offset=42)
    assert tag.bits == 61
    assert 0 <= tag.tag < 2 ** 61
    assert tag.key_offset == 42
    assert wc_verify(key, b"frame bytes", tag)
    assert MacTag.from_bytes(tag.to_bytes()).tag == tag.tag
    assert len(tag.to_bytes()) == 8


def test_mac_rejects_bit_flips():
    """Every single-bit flip of the message or the tag is rejected"""
    rng = np.random.default_rng(8)
    key = generate_pool(KEY_BITS, 4)
    message = rng.bytes(64)
    tag = wc_mac(key, message)
    for _ in range(300):
        pos = int(rng.integers(len(message) * 8))
        flipped = bytearray(message)
        flipped[pos // 8] ^= 1 << (pos % 8)
        assert not wc_verify(key, bytes(flipped), tag)
    for bit in range(61):
        assert not wc_verify(key, message, MacTag(tag=tag.tag ^ (1 << bit)))


@pytest.mark.slow
def test_mac_rejects_ten_thousand_flips():
    rng = np.random.default_rng(9)
    key = generate_pool(KEY_BITS, 5)
    message = rng.bytes(32)
    tag = wc_mac(key, message)
    for _ in range(10000):
        pos = int(rng.integers(len(message) * 8))
        flipped = bytearray(message)
        flipped[pos // 8] ^= 1 << (pos % 8)
        assert not wc_verify(key, bytes(flipped), tag)


def test_authenticator_pairs_stay_aligned(ledger):
    """Both parties draw the same pads in the same order"""
    peer = ledger.mirror()
    sender, receiver = Authenticator(ledger), Authenticator(peer)
    sender.begin_cycle()
    receiver.begin_cycle()
    for i in range(3):
        message = f"frame {i}".encode()
        receiver.verify(message, sender.tag(message))
    assert sender.tags_used == receiver.tags_used == 3
    assert ledger.cursor == peer.cursor == 61 * 4
    assert eps_auth(sender.tags_used, FIELD_BITS) == 3 * 2.0 ** -61


def test_authenticator_rejects_forgery(ledger):
    peer = ledger.mirror()
    sender, receiver = Authenticator(ledger), Authenticator(peer)
    sender.begin_cycle()
    receiver.begin_cycle()
    tag = sender.tag(b"genuine")
    with pytest.raises(AuthenticationFailure):
        receiver.verify(b"forged", tag)


def test_authenticator_needs_cycle(ledger):
    with pytest.raises(ValidationError):
        Authenticator(ledger).tag(b"too early")
