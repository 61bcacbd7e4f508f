"""8-bit weight quantization with a per-block 256-entry codebook."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LEVELS = 256
CODEBOOK_BYTES = LEVELS * 4
FILE_FRAMING_BYTES = 8 + 4 + 4      # magic, block count, trailing CRC32


class QuantizationError(ValueError):
    pass


@dataclass
class QuantizedBlock:
    codes: np.ndarray       # uint8, original shape
    codebook: np.ndarray    # (256,) float64, non-decreasing

    @property
    def shape(self) -> tuple[int, ...]:
        return self.codes.shape

    @property
    def step(self) -> float:
        return float(self.codebook[1] - self.codebook[0])


def quantize(block) -> QuantizedBlock:
    """Uniform min-max binning into 256 levels."""
    w = np.asarray(block, dtype=np.float64)
    if not np.all(np.isfinite(w)):
        raise QuantizationError("cannot quantize non-finite weights")
    if w.size == 0:
        return QuantizedBlock(np.zeros(w.shape, dtype=np.uint8), np.zeros(LEVELS))
    lo, hi = float(w.min()), float(w.max())
    if hi == lo:
        return QuantizedBlock(np.zeros(w.shape, dtype=np.uint8), np.full(LEVELS, lo))
    step = (hi - lo) / (LEVELS - 1)
    codes = np.clip(np.rint((w - lo) / step), 0, LEVELS - 1).astype(np.uint8)
    codebook = lo + np.arange(LEVELS) * step
    codebook[-1] = hi
    return QuantizedBlock(codes, codebook)


def dequantize(q: QuantizedBlock) -> np.ndarray:
    codes = np.asarray(q.codes)
    if codes.size and int(codes.max()) >= LEVELS:
        raise QuantizationError(f"code {int(codes.max())} out of range")
    if np.asarray(q.codebook).shape != (LEVELS,):
        raise QuantizationError("codebook must have 256 entries")
    return np.asarray(q.codebook)[codes.astype(np.intp)]


def block_header_bytes(name: str, rank: int) -> int:
    return 4 + len(name.encode("utf-8")) + 1 + 4 + 4 * rank


@dataclass
class SizeReport:
    header_bytes: int
    payload_bytes: int
    codebook_bytes: int

    @property
    def total(self) -> int:
        return self.header_bytes + self.payload_bytes + self.codebook_bytes


def size_report(blocks: dict, quantized: bool, meta: dict | None = None) -> SizeReport:
    """Serialized size of ``blocks`` (name -> array) as float32 or 8-bit codes.

    ``meta`` holds extra raw byte blocks (e.g. the embedded config), counted
    as header bytes.
    """
    header = FILE_FRAMING_BYTES
    payload = codebooks = 0
    for name, value in blocks.items():
        shape = value.shape
        n = int(np.prod(shape, dtype=np.int64))
        header += block_header_bytes(name, len(shape))
        if quantized:
            payload += n
            codebooks += CODEBOOK_BYTES
        else:
            payload += 4 * n
    for name, raw in (meta or {}).items():
        header += block_header_bytes(name, 1) + len(raw)
    return SizeReport(header, payload, codebooks)
