"""
One HOQS+ cycle between Alice and Bob over an authenticated frame channel:
IS share, ceil(n_obs/2) QKD sessions, KEM establishment, then the hybrid
cascade on the cycle message. Batches and n_obs sweeps aggregate cycles.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import ValidationError as SchemaError

from app.core.auth import FIELD_BITS, Authenticator
from app.core.config import settings
from app.core.errors import (
    AbortReason,
    AuthenticationFailure,
    ChannelTimeout,
    DetectableFailure,
    InsufficientKey,
    PadError,
    PoolExhausted,
    ProtocolAbort,
    ValidationError,
    VerificationAbort,
)
from app.schemas.cipher import CipherEnvelope, InstructionSequence, KeyBundle
from app.schemas.ledger import PskPurpose
from app.schemas.protocol import (
    BatchReport,
    CycleConfig,
    CycleReport,
    CycleStatus,
    FrameType,
    Transport,
)
from app.schemas.security import OptimizationResult, OptimizerConfig, PeType
from app.schemas.session import RawKeyPair
from app.utils.channel import Channel, FrameLink, InProcessChannel, SocketChannel, TamperHook
from app.utils.finite_key_bounds import eps_auth
from app.utils.finite_key_optimizer import optimize, optimize_all_bounds
from app.utils.hybrid_encryption import (
    cascade_ct_bits,
    default_associated_data,
    he_decrypt,
    he_encrypt,
    legacy_size_model,
)
from app.utils.instruction_sequences import decrypt_is, encrypt_is, unrank
from app.utils.pqc_keys import KemRole, kem_establish, split_shared_secret
from app.utils.psk_ledger import PskLedger, effective_keyspace_bits, generate_pool
from app.utils.qkd_session import (
    check_qber,
    draw_sample_indices,
    mismatch_fraction,
    privacy_amplify,
    simulate_raw_keys,
    toeplitz_seed_length,
    verification_hash,
    verification_seed,
)
from app.utils.reconciliation import MinSumDecoder, ParityCheck, ec_syndrome, standard_code

logger = logging.getLogger(__name__)

INDEX_DTYPE = ">u4"


@dataclass
class PartyResult:
    """What one party observed during a cycle"""
    status: CycleStatus = CycleStatus.COMPLETED
    detail: str = ""
    alphas: List[float] = field(default_factory=list)
    results: List[OptimizationResult] = field(default_factory=list)
    keys: List[np.ndarray] = field(default_factory=list)
    qkd_time: float = 0.0
    pqc_time: float = 0.0
    he_time: float = 0.0
    total_time: float = 0.0
    message: bytes = b""
    envelope: Optional[CipherEnvelope] = None
    he_trace: list = field(default_factory=list)
    mac_tags: int = 0


def pack_bits(bits: np.ndarray) -> bytes:
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()


def unpack_bits(payload: bytes, nbits: int) -> np.ndarray:
    """
    Raises:
        ProtocolAbort: payload does not hold exactly ceil(nbits/8) bytes
    """
    if len(payload) != -(-nbits // 8):
        raise ProtocolAbort(AbortReason.PROTOCOL,
                            f"expected {nbits} packed bits, got {len(payload)} bytes")
    return np.unpackbits(np.frombuffer(payload, dtype=np.uint8))[:nbits]


def session_seed(seed: int, cycle_id: int, session: int) -> int:
    """Seed of the simulated optical link for one QKD session"""
    return int(np.random.SeedSequence([seed, cycle_id, session]).generate_state(1)[0])


def simulate_cycle_keys(config: CycleConfig) -> List[RawKeyPair]:
    """One correlated raw-key pair per QKD session of the cycle"""
    return [simulate_raw_keys(config.N, config.qber, session_seed(config.seed, config.cycle_id, k))
            for k in range(config.gamma)]


class Party:
    """State and phases shared by both roles"""

    role: KemRole
    rng_stream: int

    def __init__(self, config: CycleConfig, ledger: PskLedger, channel: Channel,
                 raw_bits: Sequence[np.ndarray], optimizer_config: OptimizerConfig,
                 code: ParityCheck):
        self.config = config
        self.ledger = ledger
        self.params = optimizer_config.params
        self.optimizer_config = optimizer_config
        self.code = code
        self.raw_bits = list(raw_bits)
        self.auth = Authenticator(ledger)
        self.link = FrameLink(channel, self.auth, timeout=config.timeout_s)
        self.rng = np.random.default_rng([config.seed, config.cycle_id, self.rng_stream])
        self.result = PartyResult()
        self.sequence: Optional[InstructionSequence] = None
        self.is_pad = np.zeros(0, dtype=np.uint8)
        self.aes_key = b""

    @property
    def hash_bytes(self) -> int:
        return -(-self.params.t // 8)

    def begin(self) -> None:
        """Per-cycle PSK allocations, identical in order on both sides"""
        self.ledger.begin_cycle(self.config.cycle_id)
        self.auth.begin_cycle()
        if self.config.n_obs:
            self.is_pad = self.ledger.allocate(PskPurpose.IS_PAD, self.config.n_obs)
        self.aes_key = np.packbits(self.ledger.aes_key()).tobytes()

    def optimize_at(self, alpha: float) -> OptimizationResult:
        """Abort above the QBER threshold, else maximize l with delta := alpha"""
        check_qber(alpha)
        result = optimize(self.optimizer_config.with_delta(alpha))
        if not result.feasible:
            raise ProtocolAbort(AbortReason.INFEASIBLE, f"no positive key at alpha={alpha:.5f}")
        return result

    def record_session(self, alpha: float, result: OptimizationResult, key: np.ndarray) -> None:
        self.result.alphas.append(alpha)
        self.result.results.append(result)
        self.result.keys.append(key)

    def exchange_sequence(self) -> None:
        raise NotImplementedError

    def qkd_session(self, index: int) -> None:
        raise NotImplementedError

    def hybrid_phase(self, keys: KeyBundle) -> None:
        raise NotImplementedError

    def run(self) -> PartyResult:
        start = time.perf_counter()
        try:
            self.begin()
            self.exchange_sequence()

            t0 = time.perf_counter()
            for k in range(self.config.gamma):
                self.qkd_session(k)
            self.result.qkd_time = time.perf_counter() - t0

            t0 = time.perf_counter()
            secret = kem_establish(self.role, self.link, self.config.kem_parameter_set)
            self.result.pqc_time = time.perf_counter() - t0

            keys = KeyBundle(qkd_keys=self.result.keys, aes_key=self.aes_key,
                             split=split_shared_secret(secret))
            self.hybrid_phase(keys)
        except ChannelTimeout as e:
            self.abort(ProtocolAbort(AbortReason.TIMEOUT, str(e)))
        except ProtocolAbort as e:
            self.abort(e)
        except (PoolExhausted, InsufficientKey) as e:
            self.abort(ProtocolAbort(AbortReason.INSUFFICIENT_KEY, str(e)))
        finally:
            self.result.total_time = time.perf_counter() - start
            self.result.mac_tags = self.auth.tags_used
        return self.result

    def abort(self, error: ProtocolAbort) -> None:
        """Send ABORT (unless the peer already did) and drop all key material"""
        logger.warning(f"{self.role.value} aborted cycle {self.config.cycle_id}: {error}")
        self.link.send_abort(error.reason, error.detail)
        self.result.status = CycleStatus.from_reason(error.reason)
        self.result.detail = error.detail
        self.result.keys = []
        self.result.message = b""


class Alice(Party):
    """Initiator: picks the IS and drives every phase"""

    role = KemRole.INITIATOR
    rng_stream = 0

    def exchange_sequence(self) -> None:
        n_obs = self.config.n_obs
        index = int(self.rng.integers(0, 2 ** n_obs))
        self.sequence = unrank(index, n_obs)
        self.link.send_frame(FrameType.IS_CT, pack_bits(encrypt_is(index, self.is_pad)))

    def qkd_session(self, index: int) -> None:
        N, n, t = self.params.N, self.params.n, self.params.t
        bits = self.raw_bits[index]
        sample, remainder = draw_sample_indices(N, n, self.rng)
        self.link.send_frame(FrameType.SAMPLE_IDX,
                             sample.astype(INDEX_DTYPE).tobytes() + pack_bits(bits[sample]))
        bob_sample = unpack_bits(self.link.recv_frame(FrameType.SAMPLE_IDX), n)
        alpha = mismatch_fraction(bits[sample], bob_sample)
        result = self.optimize_at(alpha)

        key = bits[remainder]
        self.link.send_frame(FrameType.SYNDROME, pack_bits(ec_syndrome(key, self.code)))
        hash_seed = verification_seed(key.size, t, self.rng)
        digest = verification_hash(key, t, hash_seed)
        self.link.send_frame(FrameType.VERIFY, hash_seed + digest.to_bytes(self.hash_bytes, "big"))
        peer_digest = int.from_bytes(self.link.recv_frame(FrameType.VERIFY), "big")
        if peer_digest != digest:
            raise VerificationAbort()

        pa_seed = self.rng.integers(0, 2, toeplitz_seed_length(key.size, result.l_max),
                                    dtype=np.uint8)
        self.link.send_frame(FrameType.PA_SEED, pack_bits(pa_seed))
        self.record_session(alpha, result, privacy_amplify(key, result.l_max, pa_seed))

    def hybrid_phase(self, keys: KeyBundle) -> None:
        t0 = time.perf_counter()
        sid = self.rng.bytes(15)
        v = self.rng.bytes(16)
        ad = default_associated_data(self.config.cycle_id)
        envelope = he_encrypt(self.sequence, self.config.message, keys, sid, v, ad,
                              trace=self.result.he_trace)
        self.result.he_time = time.perf_counter() - t0
        self.result.envelope = envelope
        self.link.send_frame(FrameType.HE_ENV, envelope.to_bytes())


class Bob(Party):
    """Responder: follows Alice's IS and recovers the message"""

    role = KemRole.RESPONDER
    rng_stream = 1

    def exchange_sequence(self) -> None:
        n_obs = self.config.n_obs
        pi = unpack_bits(self.link.recv_frame(FrameType.IS_CT), n_obs)
        self.sequence = unrank(decrypt_is(pi, self.is_pad), n_obs)

    def qkd_session(self, index: int) -> None:
        N, n, r, t = self.params.N, self.params.n, self.params.r, self.params.t
        bits = self.raw_bits[index]
        payload = self.link.recv_frame(FrameType.SAMPLE_IDX)
        sample = np.frombuffer(payload[:4 * n], dtype=INDEX_DTYPE).astype(np.int64)
        if sample.size != n or np.unique(sample).size != n or sample.max() >= N:
            raise ProtocolAbort(AbortReason.PROTOCOL, "invalid sample indices")
        alice_sample = unpack_bits(payload[4 * n:], n)
        self.link.send_frame(FrameType.SAMPLE_IDX, pack_bits(bits[sample]))
        alpha = mismatch_fraction(alice_sample, bits[sample])
        result = self.optimize_at(alpha)

        mask = np.ones(N, dtype=bool)
        mask[sample] = False
        syndrome = unpack_bits(self.link.recv_frame(FrameType.SYNDROME), r)
        decoder = MinSumDecoder(self.code)
        try:
            corrected = decoder.decode(bits[mask], syndrome, alpha)
        except DetectableFailure as e:
            raise ProtocolAbort(AbortReason.EC_DETECTABLE, str(e)) from e

        payload = self.link.recv_frame(FrameType.VERIFY)
        hash_seed, peer_digest = payload[:-self.hash_bytes], payload[-self.hash_bytes:]
        try:
            digest = verification_hash(corrected, t, hash_seed)
        except ValidationError as e:
            raise ProtocolAbort(AbortReason.PROTOCOL, str(e)) from e
        self.link.send_frame(FrameType.VERIFY, digest.to_bytes(self.hash_bytes, "big"))
        if digest != int.from_bytes(peer_digest, "big"):
            raise VerificationAbort()

        pa_seed = unpack_bits(self.link.recv_frame(FrameType.PA_SEED),
                              toeplitz_seed_length(corrected.size, result.l_max))
        self.record_session(alpha, result, privacy_amplify(corrected, result.l_max, pa_seed))

    def hybrid_phase(self, keys: KeyBundle) -> None:
        payload = self.link.recv_frame(FrameType.HE_ENV)
        t0 = time.perf_counter()
        try:
            envelope = CipherEnvelope.from_bytes(payload)
            self.result.message = he_decrypt(envelope, self.sequence, keys)
        except (PadError, AuthenticationFailure, SchemaError) as e:
            raise ProtocolAbort(AbortReason.HE, str(e)) from e
        self.result.he_time = time.perf_counter() - t0
        self.result.envelope = envelope


def open_channels(transport: Transport,
                  tamper: Optional[TamperHook] = None) -> Tuple[Channel, Channel]:
    if transport == Transport.TCP:
        if tamper is not None:
            raise ValidationError("Tampering is only supported on the in-process channel")
        return SocketChannel.tcp_pair()
    return InProcessChannel.pair(tamper)


def sync_ledgers(alice: PskLedger, bob: PskLedger) -> None:
    """After a cycle both ledgers resume at the larger cursor"""
    cursor = max(alice.cursor, bob.cursor)
    alice.advance_to(cursor)
    bob.advance_to(cursor)


def run_cycle(config: CycleConfig, ledger: PskLedger, peer_ledger: Optional[PskLedger] = None,
              channels: Optional[Tuple[Channel, Channel]] = None,
              raw_pairs: Optional[List[RawKeyPair]] = None, code: Optional[ParityCheck] = None,
              tamper: Optional[TamperHook] = None) -> CycleReport:
    """
    Run Alice and Bob concurrently through one cycle.

    Args:
        config: Cycle parameters agreed by both parties
        ledger: Alice's PSK ledger
        peer_ledger: Bob's ledger (default: a mirror of Alice's)
        channels: (alice, bob) endpoints (default: per config.transport)
        raw_pairs: Simulated raw keys, one pair per QKD session
        code: Parity-check matrix (default: the standard code for r x (N - n))
        tamper: Hook rewriting raw frames on the in-process channel

    Returns:
        CycleReport
    """
    peer_ledger = peer_ledger or ledger.mirror()
    raw_pairs = raw_pairs if raw_pairs is not None else simulate_cycle_keys(config)
    if len(raw_pairs) != config.gamma:
        raise ValidationError(f"Need {config.gamma} raw-key pairs, got {len(raw_pairs)}")
    optimizer_config = config.optimizer_config()
    params = optimizer_config.params
    code = code or standard_code(params.r, params.key_bits)
    alice_channel, bob_channel = channels or open_channels(config.transport, tamper)

    alice = Alice(config, ledger, alice_channel, [p.alice_bits for p in raw_pairs],
                  optimizer_config, code)
    bob = Bob(config, peer_ledger, bob_channel, [p.bob_bits for p in raw_pairs],
              optimizer_config, code)
    start_cursor = ledger.cursor
    try:
        with ThreadPoolExecutor(max_workers=2, thread_name_prefix="party") as pool:
            alice_future = pool.submit(alice.run)
            bob_future = pool.submit(bob.run)
            a, b = alice_future.result(), bob_future.result()
    finally:
        alice_channel.close()
        bob_channel.close()
    sync_ledgers(ledger, peer_ledger)

    report = build_report(config, a, b, ledger.cursor - start_cursor)
    logger.info(f"Cycle {config.cycle_id} n_obs={config.n_obs}: {report.status.value} "
                f"bits={report.qkd_bits_extracted}")
    return report


def build_report(config: CycleConfig, a: PartyResult, b: PartyResult,
                 psk_bits: int) -> CycleReport:
    status, detail = CycleStatus.COMPLETED, ""
    for side in (a, b):
        if side.status != CycleStatus.COMPLETED:
            status, detail = side.status, side.detail
            break
    completed = status == CycleStatus.COMPLETED
    keys_match = (completed and len(a.keys) == len(b.keys) == config.gamma
                  and all(np.array_equal(x, y) for x, y in zip(a.keys, b.keys)))
    envelope = a.envelope
    return CycleReport(
        cycle_id=config.cycle_id,
        n_obs=config.n_obs,
        status=status,
        abort_detail=detail,
        qkd_time_s=a.qkd_time,
        pqc_time_s=a.pqc_time,
        he_time_s=a.he_time + b.he_time,
        total_time_s=max(a.total_time, b.total_time),
        alphas=a.alphas,
        session_lengths=[res.l_max for res in a.results],
        results=a.results,
        qkd_bits_extracted=sum(k.size for k in a.keys) if completed else 0,
        keys_match=keys_match,
        message_ok=completed and b.message == config.message,
        he_steps=len(a.he_trace),
        ct_bytes=len(envelope.final_ct) if envelope else 0,
        envelope_bytes=envelope.wire_size if envelope else 0,
        psk_bits_consumed=psk_bits,
        mac_tags=a.mac_tags,
        eps_auth=eps_auth(max(a.mac_tags, 1), FIELD_BITS),
        keyspace_bits=effective_keyspace_bits(config.n_obs),
    )


def rates_per_bound(config: CycleConfig, alphas: Sequence[float],
                    total_time: float) -> Dict[str, float]:
    """Key rate each PE bound would give on the realized alphas"""
    totals = {pe.value: 0 for pe in PeType}
    base = config.optimizer_config()
    for alpha in alphas:
        for pe, result in optimize_all_bounds(base.with_delta(alpha)).items():
            totals[pe.value] += result.l_max or 0
    return {pe: (bits / total_time if total_time > 0 else 0.0) for pe, bits in totals.items()}


def run_batch(config: CycleConfig, cycles: int, ledger: Optional[PskLedger] = None,
              per_bound: bool = False) -> BatchReport:
    """
    Run consecutive cycles on one pair of ledgers.

    key_rate = total extracted bits / total QKD processing time.
    """
    if cycles < 1:
        raise ValidationError(f"cycles must be >= 1, got {cycles}")
    ledger = ledger or PskLedger(generate_pool(settings.PSK_POOL_BITS, config.seed))
    peer = ledger.mirror()
    params = config.security_params()
    code = standard_code(params.r, params.key_bits)

    reports = []
    for c in range(cycles):
        cycle_config = config.model_copy(update={"cycle_id": config.cycle_id + c})
        reports.append(run_cycle(cycle_config, ledger, peer, code=code))

    completed = [r for r in reports if r.completed]
    alphas = [a for r in completed for a in r.alphas]
    total_bits = sum(r.qkd_bits_extracted for r in reports)
    total_time = sum(r.qkd_time_s for r in reports)
    all_alphas = [a for r in reports for a in r.alphas]
    batch = BatchReport(
        n_obs=config.n_obs,
        qber=config.qber,
        cycles=cycles,
        completed=len(completed),
        total_bits=total_bits,
        total_qkd_time_s=total_time,
        key_rate=total_bits / total_time if total_time > 0 else 0.0,
        qber_mean=float(np.mean(all_alphas)) if all_alphas else None,
        qber_std=float(np.std(all_alphas)) if all_alphas else None,
        rates_per_bound=rates_per_bound(config, alphas, total_time) if per_bound else {},
        mean_times={
            "qkd": float(np.mean([r.qkd_time_s for r in reports])),
            "pqc": float(np.mean([r.pqc_time_s for r in reports])),
            "he": float(np.mean([r.he_time_s for r in reports])),
            "total": float(np.mean([r.total_time_s for r in reports])),
        },
        reports=reports,
    )
    logger.info(f"Batch n_obs={config.n_obs}: {batch.completed}/{cycles} completed, "
                f"rate={batch.key_rate:.1f} bits/s")
    return batch


def sweep_nobs(config: CycleConfig, nobs_list: Sequence[int], cycles: int,
               per_bound: bool = False) -> pd.DataFrame:
    """
    One batch per n_obs with timing, rates, envelope sizes and the legacy size model.

    HE time is fitted linearly against gamma (least squares) when two or more
    n_obs values are swept.
    """
    if cycles < 1:
        raise ValidationError(f"cycles must be >= 1, got {cycles}")
    if not nobs_list:
        raise ValidationError("nobs_list must not be empty")
    msg_bits = 8 * len(config.message)
    rows = []
    for n_obs in nobs_list:
        nobs_config = CycleConfig(**{**config.model_dump(), "n_obs": n_obs})
        batch = run_batch(nobs_config, cycles, per_bound=per_bound)
        completed = [r for r in batch.reports if r.completed]
        plus_bits = cascade_ct_bits(n_obs, msg_bits)
        legacy_bits = legacy_size_model(n_obs, msg_bits).final_bits
        row = {
            "n_obs": n_obs,
            "gamma": -(-n_obs // 2),
            "cycles": cycles,
            "completed": batch.completed,
            "qber_mean": batch.qber_mean,
            "qber_std": batch.qber_std,
            "key_rate": batch.key_rate,
            "qkd_time_s": batch.mean_times["qkd"],
            "pqc_time_s": batch.mean_times["pqc"],
            "he_time_s": batch.mean_times["he"],
            "total_time_s": batch.mean_times["total"],
            "he_steps": completed[0].he_steps if completed else 0,
            "ct_bits": 8 * completed[0].ct_bytes if completed else 0,
            "envelope_bytes": completed[0].envelope_bytes if completed else 0,
            "plus_ct_bits": plus_bits,
            "legacy_ct_bits": legacy_bits,
            "plus_over_legacy": plus_bits / legacy_bits,
        }
        for pe in PeType:
            row[f"rate_{pe.value}"] = batch.rates_per_bound.get(pe.value)
        rows.append(row)

    frame = pd.DataFrame(rows)
    if frame["gamma"].nunique() >= 2:
        slope, intercept = np.polyfit(frame["gamma"], frame["he_time_s"], 1)
        frame["he_time_fit_s"] = slope * frame["gamma"] + intercept
    else:
        frame["he_time_fit_s"] = frame["he_time_s"]
    return frame
