"""
LDPC syndrome reconciliation: seeded regular parity-check codes, GF(2)
syndromes and normalized min-sum decoding toward a target syndrome.
"""
import logging
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.errors import DetectableFailure, HoqsError, ValidationError

logger = logging.getLogger(__name__)

LLR_CLIP = 50.0


class ParityCheck:
    """Sparse parity-check matrix stored as sorted column indices per row"""

    def __init__(self, rows: int, cols: int, row_indices: Sequence[Sequence[int]]):
        if len(row_indices) != rows:
            raise ValidationError(f"Expected {rows} rows, got {len(row_indices)}")
        self.rows = rows
        self.cols = cols
        self.row_indices: List[np.ndarray] = []
        for i, idx in enumerate(row_indices):
            arr = np.unique(np.asarray(idx, dtype=np.int64))
            if arr.size == 0 or arr.size != len(idx):
                raise ValidationError(f"Row {i} must be non-empty without repeated columns")
            if arr[0] < 0 or arr[-1] >= cols:
                raise ValidationError(f"Row {i} references a column outside [0, {cols})")
            self.row_indices.append(arr)

        lengths = np.array([a.size for a in self.row_indices])
        self.row_weight = int(lengths.max())
        self.edge_var = np.concatenate(self.row_indices)
        self.edge_check = np.repeat(np.arange(rows), lengths)
        self.row_starts = np.concatenate([[0], np.cumsum(lengths)[:-1]])

        # (rows, row_weight) edge slots; padding points at a sentinel edge
        n_edges = self.edge_var.size
        self.slots = np.full((rows, self.row_weight), n_edges, dtype=np.int64)
        for i, start in enumerate(self.row_starts):
            self.slots[i, :lengths[i]] = np.arange(start, start + lengths[i])
        self.slot_valid = self.slots < n_edges

    @classmethod
    def from_dense(cls, matrix: np.ndarray) -> "ParityCheck":
        matrix = np.asarray(matrix) % 2
        return cls(matrix.shape[0], matrix.shape[1],
                   [np.flatnonzero(row) for row in matrix])

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.rows, self.cols), dtype=np.uint8)
        dense[self.edge_check, self.edge_var] = 1
        return dense

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits)
        if bits.shape != (self.cols,):
            raise ValidationError(f"Expected {self.cols} bits, got shape {bits.shape}")
        sums = np.add.reduceat(bits[self.edge_var].astype(np.int64), self.row_starts)
        return (sums & 1).astype(np.uint8)

    def to_text(self) -> str:
        """Header 'rows cols row_weight' then one sorted index list per row"""
        lines = [f"{self.rows} {self.cols} {self.row_weight}"]
        lines.extend(" ".join(str(int(c)) for c in row) for row in self.row_indices)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ParityCheck":
        lines = [line for line in text.splitlines() if line.strip()]
        try:
            rows, cols, row_weight = (int(v) for v in lines[0].split())
            row_indices = [[int(v) for v in line.split()] for line in lines[1:]]
        except (IndexError, ValueError) as e:
            raise ValidationError(f"Malformed parity-check file: {e}") from e
        code = cls(rows, cols, row_indices)
        if code.row_weight != row_weight:
            raise ValidationError(
                f"Header row weight {row_weight} does not match rows ({code.row_weight})"
            )
        return code

    def __repr__(self):
        return f"<ParityCheck {self.rows}x{self.cols} w={self.row_weight}>"


def generate_regular_code(rows: int, cols: int, col_weight: int, row_weight: int,
                          seed: int, version: int = 1) -> ParityCheck:
    """
    Seeded (col_weight, row_weight)-regular code from a random socket permutation.

    Rows that pick the same column twice are repaired by swapping sockets with
    random other rows until every row is duplicate-free.
    """
    if rows * row_weight != cols * col_weight:
        raise ValidationError("rows * row_weight must equal cols * col_weight")
    rng = np.random.default_rng([seed, version])
    sockets = rng.permutation(np.repeat(np.arange(cols), col_weight)).reshape(rows, row_weight)

    for _ in range(10000):
        ordered = np.sort(sockets, axis=1)
        bad_rows = np.flatnonzero((np.diff(ordered, axis=1) == 0).any(axis=1))
        if bad_rows.size == 0:
            break
        for r in bad_rows:
            _, first = np.unique(sockets[r], return_index=True)
            dup_pos = np.setdiff1d(np.arange(row_weight), first)[0]
            other = int(rng.integers(rows))
            pos = int(rng.integers(row_weight))
            sockets[r, dup_pos], sockets[other, pos] = sockets[other, pos], sockets[r, dup_pos]
    else:
        raise HoqsError("Could not remove repeated edges from the parity-check matrix")

    return ParityCheck(rows, cols, [np.sort(row) for row in sockets])


def code_artifact_name(rows: int, cols: int, seed: int, version: int) -> str:
    return f"ldpc/H_{rows}x{cols}_seed{seed}_v{version}.txt"


@lru_cache(maxsize=8)
def standard_code(rows: int, cols: int, seed: Optional[int] = None,
                  version: Optional[int] = None) -> ParityCheck:
    """
    The versioned regular code of the given shape, loaded from artifact storage
    or generated and stored on first use.
    """
    from app.utils.storage import get_storage

    seed = settings.LDPC_SEED if seed is None else seed
    version = settings.LDPC_VERSION if version is None else version
    storage = get_storage()
    name = code_artifact_name(rows, cols, seed, version)
    if storage.file_exists(name):
        return ParityCheck.from_text(storage.download_file(name).decode("ascii"))

    col_weight = settings.LDPC_COLUMN_WEIGHT
    row_weight = cols * col_weight // rows
    code = generate_regular_code(rows, cols, col_weight, row_weight, seed, version)
    storage.upload_file(code.to_text().encode("ascii"), name)
    logger.info(f"Generated parity-check artifact {name}")
    return code


def ec_syndrome(bits: np.ndarray, code: ParityCheck) -> np.ndarray:
    """H * bits over GF(2)"""
    return code.syndrome(bits)


class MinSumDecoder:
    """
    Normalized min-sum belief propagation on the error pattern e = alice ^ bob,
    driven by the syndrome difference H e = s_alice ^ s_bob.
    """

    def __init__(self, code: ParityCheck, max_iters: Optional[int] = None,
                 normalization: Optional[float] = None):
        self.code = code
        self.max_iters = settings.LDPC_MAX_ITERS if max_iters is None else max_iters
        self.normalization = (settings.LDPC_NORMALIZATION if normalization is None
                              else normalization)
        self.iterations = 0

    def _check_messages(self, v2c: np.ndarray, check_sign: np.ndarray) -> np.ndarray:
        code = self.code
        msgs = np.append(v2c, np.inf)[code.slots]
        signs = np.where(msgs < 0, -1.0, 1.0)
        magnitudes = np.abs(msgs)

        row_idx = np.arange(code.rows)
        first = np.argmin(magnitudes, axis=1)
        min1 = magnitudes[row_idx, first]
        masked = magnitudes.copy()
        masked[row_idx, first] = np.inf
        min2 = masked.min(axis=1)
        excluded = np.where(np.arange(code.row_weight)[None, :] == first[:, None],
                            min2[:, None], min1[:, None])
        excluded = np.minimum(excluded, LLR_CLIP)

        total_sign = np.prod(signs, axis=1) * check_sign
        out = self.normalization * (total_sign[:, None] * signs) * excluded
        c2v = np.empty(v2c.size)
        c2v[code.slots[code.slot_valid]] = out[code.slot_valid]
        return c2v

    def decode_error(self, target: np.ndarray, prior: float) -> np.ndarray:
        """
        Most likely error pattern with syndrome ``target``.

        Raises:
            DetectableFailure: no pattern matched within max_iters
        """
        code = self.code
        self.iterations = 0
        if not target.any():
            return np.zeros(code.cols, dtype=np.uint8)

        p = float(np.clip(prior, 1e-4, 0.49))
        llr0 = np.log((1.0 - p) / p)
        check_sign = 1.0 - 2.0 * target.astype(float)
        v2c = np.full(code.edge_var.size, llr0)

        for it in range(1, self.max_iters + 1):
            c2v = self._check_messages(v2c, check_sign)
            total = llr0 + np.bincount(code.edge_var, weights=c2v, minlength=code.cols)
            error = (total < 0).astype(np.uint8)
            if np.array_equal(code.syndrome(error), target):
                self.iterations = it
                return error
            v2c = np.clip(total[code.edge_var] - c2v, -LLR_CLIP, LLR_CLIP)

        self.iterations = self.max_iters
        raise DetectableFailure(
            f"No codeword within {self.max_iters} iterations", iterations=self.max_iters
        )

    def decode(self, bob_bits: np.ndarray, alice_syndrome: np.ndarray,
               prior: float) -> np.ndarray:
        bob_bits = np.asarray(bob_bits, dtype=np.uint8)
        alice_syndrome = np.asarray(alice_syndrome, dtype=np.uint8)
        if alice_syndrome.shape != (self.code.rows,):
            raise ValidationError(
                f"Expected a {self.code.rows}-bit syndrome, got {alice_syndrome.shape}"
            )
        target = alice_syndrome ^ self.code.syndrome(bob_bits)
        return bob_bits ^ self.decode_error(target, prior)


def ec_decode(bob_bits: np.ndarray, syndrome: np.ndarray, code: ParityCheck,
              max_iters: Optional[int] = None, prior: float = 0.05,
              normalization: Optional[float] = None) -> np.ndarray:
    """
    Correct Bob's bits toward Alice's syndrome.

    Args:
        bob_bits: Bob's remainder bits
        syndrome: Alice's syndrome of her remainder bits
        code: Shared parity-check matrix
        max_iters: Iteration cap (LDPC_MAX_ITERS)
        prior: Channel error probability used for the initial LLRs (the estimated QBER)

    Returns:
        Corrected bits whose syndrome equals Alice's

    Raises:
        DetectableFailure: decoding did not converge
    """
    return MinSumDecoder(code, max_iters, normalization).decode(bob_bits, syndrome, prior)

