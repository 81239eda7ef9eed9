"""
The hybrid cascade: OTP with QKD keys, AES-256-CTR with constructed counter
blocks, Ascon AEAD with the KEM key, and the single trailer o'.

Keystream block j of AES step i is
    v XOR (sid || i) XOR (j << 8)
read as a 128-bit big-endian integer, for the 64-bit chunk counter j.
"""
import logging
from typing import List, Optional, Sequence, Tuple

import ascon
import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

from app.core.errors import AuthenticationFailure, InsufficientKey, PadError, ValidationError
from app.schemas.cipher import (
    NONCE_BYTES,
    SID_BYTES,
    TAG_BYTES,
    CipherEnvelope,
    CipherTag,
    CounterBlock,
    InstructionSequence,
    KeyBundle,
    SizeModel,
    gamma_for,
)

logger = logging.getLogger(__name__)

BLOCK_BYTES = 16
AES_KEY_BYTES = 32
ASCON_KEY_BYTES = 16
HEADER_VERSION = 1
MAX_CHUNKS = 2 ** 64

PQ_BLOCK_BITS = 256
PQ_CT_BITS = 6144
LEGACY_NONCE_BITS = 128


def build_counter_block(v: bytes, sid: bytes, i: int) -> bytes:
    """128-bit block v XOR (sid || i)"""
    return CounterBlock(base_nonce_v=v, sid=sid, counter_i=i).block()


def chunk_block(block: bytes, j: int) -> bytes:
    """Keystream pre-image of chunk j (the counter byte i is left untouched)"""
    if not 0 <= j < MAX_CHUNKS:
        raise ValidationError(f"Chunk counter {j} outside the 64-bit range")
    return (int.from_bytes(block, "big") ^ (j << 8)).to_bytes(BLOCK_BYTES, "big")


def aes_keystream(key: bytes, block: bytes, nbytes: int) -> bytes:
    chunks = -(-nbytes // BLOCK_BYTES)
    if chunks > MAX_CHUNKS:
        raise ValidationError("Counter space exhausted")
    blocks = b"".join(chunk_block(block, j) for j in range(chunks))
    encryptor = Cipher(algorithms.AES(key), modes.ECB()).encryptor()
    return (encryptor.update(blocks) + encryptor.finalize())[:nbytes]


def _xor(data: bytes, stream: bytes) -> bytes:
    return (np.frombuffer(data, dtype=np.uint8) ^ np.frombuffer(stream, dtype=np.uint8)).tobytes()


def aes_ctr_step(data: bytes, key: bytes, counter: CounterBlock) -> bytes:
    """
    AES-256 counter-mode step; length preserving and its own inverse.

    Args:
        data: Input bytes
        key: 32-byte AES key
        counter: Counter block of this step

    Returns:
        data XOR keystream
    """
    if len(key) != AES_KEY_BYTES:
        raise ValidationError(f"AES key must be {AES_KEY_BYTES} bytes")
    if not data:
        return b""
    return _xor(data, aes_keystream(key, counter.block(), len(data)))


def ascon_nonce(v_prime: bytes, i: int) -> bytes:
    """v' (15 bytes) || i"""
    return v_prime + bytes([i])


def ascon_step(data: bytes, key: bytes, nonce: bytes, ad: bytes) -> bytes:
    """Ascon AEAD encryption; returns ciphertext || 16-byte tag"""
    if len(key) != ASCON_KEY_BYTES or len(nonce) != NONCE_BYTES:
        raise ValidationError("Ascon takes a 16-byte key and a 16-byte nonce")
    return ascon.encrypt(key, nonce, ad, data)


def ascon_open(data: bytes, key: bytes, nonce: bytes, ad: bytes) -> bytes:
    """
    Ascon AEAD decryption.

    Raises:
        AuthenticationFailure: tag mismatch
    """
    if len(data) < TAG_BYTES:
        raise AuthenticationFailure("Ascon ciphertext shorter than its tag")
    plain = ascon.decrypt(key, nonce, ad, data)
    if plain is None:
        raise AuthenticationFailure("Ascon tag mismatch")
    return plain


def otp_step(data: bytes, key: np.ndarray) -> bytes:
    """
    XOR with the leading 8*len(data) bits of a QKD key.

    Raises:
        InsufficientKey: key shorter than data
    """
    key = np.asarray(key, dtype=np.uint8)
    nbits = 8 * len(data)
    if key.size < nbits:
        raise InsufficientKey(f"OTP key holds {key.size} bits, {nbits} needed")
    return _xor(data, np.packbits(key[:nbits]).tobytes())


def pad(message: bytes) -> Tuple[bytes, int]:
    """PKCS#7 padding to a 16-byte multiple; returns (padded, pad_size)"""
    size = BLOCK_BYTES - len(message) % BLOCK_BYTES
    return message + bytes([size]) * size, size


def unpad(data: bytes, pad_size: int) -> bytes:
    """
    Raises:
        PadError: pad bytes disagree with the trailer's pad size
    """
    if not 1 <= pad_size <= BLOCK_BYTES or len(data) < pad_size or len(data) % BLOCK_BYTES:
        raise PadError(f"Invalid pad size {pad_size} for {len(data)} bytes")
    if data[-pad_size:] != bytes([pad_size]) * pad_size:
        raise PadError("Padding bytes do not match the pad size")
    return data[:-pad_size]


def default_associated_data(cycle_id: int, version: int = HEADER_VERSION) -> bytes:
    """Protocol header bytes: version || cycle id"""
    return bytes([version]) + cycle_id.to_bytes(4, "big")


def step_counter(keys: KeyBundle, step: int) -> int:
    """Counter i of the step-th encryption (offset by the KEM counter seed)"""
    return (keys.split.counter_seed + step) & 0xFF


def _otp_lengths(sequence: InstructionSequence, nbytes: int) -> List[int]:
    """Input length of each OTP step, in order"""
    lengths = []
    size = nbytes
    for step in sequence.steps:
        if step == CipherTag.OTP:
            lengths.append(size)
        elif step == CipherTag.ASCON:
            size += TAG_BYTES
    return lengths


def he_encrypt(sequence: InstructionSequence, message: bytes, keys: KeyBundle, sid: bytes,
               v: bytes, ad: bytes = b"",
               trace: Optional[list] = None) -> CipherEnvelope:
    """
    Run the cascade in IS order and attach the trailer once.

    Args:
        sequence: Decrypted instruction sequence
        message: Plaintext
        keys: gamma QKD keys, AES key and KEM split
        sid: 15-byte session id, unique per cycle
        v: 16-byte base nonce, fresh per cycle
        ad: Associated data bound by every Ascon step
        trace: Optional list receiving (tag, counter_i, block_or_nonce) per step

    Returns:
        CipherEnvelope
    """
    if len(sid) != SID_BYTES or len(v) != NONCE_BYTES:
        raise ValidationError("sid must be 15 bytes and v 16 bytes")
    if len(sequence.steps) > 256:
        raise ValidationError("At most 256 encryption steps per cycle")
    data, pad_size = pad(message)
    otp_lengths = _otp_lengths(sequence, len(data))
    keys.check_sufficient(len(data), len(otp_lengths))
    for idx, needed in enumerate(otp_lengths):
        if keys.qkd_keys[idx].size < 8 * needed:
            raise InsufficientKey(f"QKD key {idx} holds {keys.qkd_keys[idx].size} bits, "
                                  f"{8 * needed} needed")

    otp_index = 0
    for step, tag in enumerate(sequence.steps):
        i = step_counter(keys, step)
        if tag == CipherTag.OTP:
            data = otp_step(data, keys.take_qkd_key(otp_index))
            otp_index += 1
            record = b""
        elif tag == CipherTag.AES:
            counter = CounterBlock(base_nonce_v=v, sid=sid, counter_i=i)
            data = aes_ctr_step(data, keys.aes_key, counter)
            record = counter.block()
        else:
            nonce = ascon_nonce(keys.split.base_nonce_v_prime, i)
            data = ascon_step(data, keys.split.pqc_key, nonce, ad)
            record = nonce
        if trace is not None:
            trace.append((tag, i, record))

    logger.debug(f"Cascade {sequence.render()} produced {len(data)} bytes")
    return CipherEnvelope(final_ct=data, sid=sid, base_nonce_v=v, associated_data=ad,
                          pad_size=pad_size)


def he_decrypt(envelope: CipherEnvelope, sequence: InstructionSequence,
               keys: KeyBundle) -> bytes:
    """
    Invert the cascade in reverse IS order and strip the padding.

    Raises:
        AuthenticationFailure: an Ascon tag did not verify
        PadError: the recovered padding disagrees with the trailer
    """
    data = envelope.final_ct
    otp_index = sequence.count(CipherTag.OTP)
    for step in reversed(range(len(sequence.steps))):
        tag = sequence.steps[step]
        i = step_counter(keys, step)
        if tag == CipherTag.OTP:
            otp_index -= 1
            data = otp_step(data, keys.take_qkd_key(otp_index))
        elif tag == CipherTag.AES:
            counter = CounterBlock(base_nonce_v=envelope.base_nonce_v, sid=envelope.sid,
                                   counter_i=i)
            data = aes_ctr_step(data, keys.aes_key, counter)
        else:
            nonce = ascon_nonce(keys.split.base_nonce_v_prime, i)
            data = ascon_open(data, keys.split.pqc_key, nonce, envelope.associated_data)
    return unpad(data, envelope.pad_size)


def cascade_ct_bits(n_obs: int, msg_bits: int) -> int:
    """Final ciphertext size of the hybrid cascade: padded message plus gamma Ascon tags"""
    padded = (msg_bits // 8 // BLOCK_BYTES + 1) * BLOCK_BYTES * 8
    return padded + gamma_for(n_obs) * TAG_BYTES * 8


def legacy_size_model(n_obs: int, msg_bits: int,
                      layers: Optional[Sequence[str]] = None) -> SizeModel:
    """
    Ciphertext growth of the legacy PKE cascade.

    A PQ layer maps every 256-bit block to 6144 bits; an AES layer appends its
    128-bit nonce; an OTP layer keeps the size. The default layer list is
    (OTP, AES, PQ) repeated ceil(n_obs/2) times.

    Args:
        n_obs: Security strength
        msg_bits: Plaintext size in bits
        layers: Explicit layer list overriding the default

    Returns:
        SizeModel with the size before and after every layer
    """
    if n_obs < 0 or n_obs == 1:
        raise ValidationError(f"n_obs must lie in {{0, 2, 3, 4, ...}}, got {n_obs}")
    if msg_bits < 0:
        raise ValidationError("msg_bits must be non-negative")
    layers = list(layers) if layers is not None else ["OTP", "AES", "PQ"] * gamma_for(n_obs)
    sizes = [msg_bits]
    for layer in layers:
        size = sizes[-1]
        if layer == "PQ":
            size = -(-size // PQ_BLOCK_BITS) * PQ_CT_BITS
        elif layer == "AES":
            size += LEGACY_NONCE_BITS
        elif layer != "OTP":
            raise ValidationError(f"Unknown legacy layer {layer}")
        sizes.append(size)
    return SizeModel(layers=layers, sizes=sizes)
