"""``WSNET001`` model files.

Layout (little-endian)::

    magic "WSNET001"
    u32 block count
    per block:
        u32 name length, name bytes (UTF-8)
        u8 flag          0 = float32, 1 = 8-bit codes, 2 = raw bytes
        u32 rank, rank x u32 dims
        payload          float32[n] | u8[n] + float32[256] codebook | u8[dims[0]]
    u32 CRC32 of every preceding byte

The network architecture travels as a raw-bytes block named ``config``
holding the config text.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .config import parse_config
from .network import Network, build_network
from .quant import LEVELS, QuantizedBlock, dequantize, quantize

MODEL_MAGIC = b"WSNET001"
FLAG_FLOAT, FLAG_QUANT, FLAG_RAW = 0, 1, 2
CONFIG_BLOCK = "config"


class ModelFormatError(ValueError):
    pass


class BadMagicError(ModelFormatError):
    pass


class TruncatedError(ModelFormatError):
    pass


class ChecksumError(ModelFormatError):
    pass


def encode_blocks(blocks: dict) -> bytes:
    out = [MODEL_MAGIC, struct.pack("<I", len(blocks))]
    for name, value in blocks.items():
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<I", len(raw_name)) + raw_name)
        if isinstance(value, (bytes, bytearray)):
            out.append(struct.pack("<BII", FLAG_RAW, 1, len(value)))
            out.append(bytes(value))
        elif isinstance(value, QuantizedBlock):
            shape = value.codes.shape
            out.append(struct.pack(f"<BI{len(shape)}I", FLAG_QUANT, len(shape), *shape))
            out.append(np.ascontiguousarray(value.codes, dtype=np.uint8).tobytes())
            out.append(np.asarray(value.codebook, dtype="<f4").tobytes())
        else:
            arr = np.asarray(value)
            out.append(struct.pack(f"<BI{arr.ndim}I", FLAG_FLOAT, arr.ndim, *arr.shape))
            out.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedError(f"truncated model file at byte {self.pos}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count: int = 1):
        vals = struct.unpack(f"<{count}I", self.take(4 * count))
        return vals[0] if count == 1 else vals


def decode_blocks(buf: bytes) -> dict:
    if buf[:8] != MODEL_MAGIC:
        raise BadMagicError(f"bad model magic {buf[:8]!r}")
    if len(buf) < 16:
        raise TruncatedError("truncated model file")
    body, crc = buf[:-4], struct.unpack("<I", buf[-4:])[0]
    r = _Reader(body)
    r.take(8)
    count = r.u32()
    blocks: dict = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        flag = r.take(1)[0]
        rank = r.u32()
        shape = tuple(r.u32(rank)) if rank > 1 else ((r.u32(),) if rank == 1 else ())
        n = int(np.prod(shape, dtype=np.int64))
        if flag == FLAG_FLOAT:
            blocks[name] = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(shape).copy()
        elif flag == FLAG_QUANT:
            codes = np.frombuffer(r.take(n), dtype=np.uint8).reshape(shape).copy()
            codebook = np.frombuffer(r.take(4 * LEVELS), dtype="<f4").astype(np.float64)
            blocks[name] = QuantizedBlock(codes, codebook)
        elif flag == FLAG_RAW:
            blocks[name] = r.take(n)
        else:
            raise ModelFormatError(f"block {name!r} has unknown flag {flag}")
    if r.pos != len(body):
        raise ModelFormatError(f"{len(body) - r.pos} trailing bytes after the last block")
    if zlib.crc32(body) != crc:
        raise ChecksumError("model checksum mismatch")
    return blocks


def network_blocks(net: Network, quantized: bool = False) -> dict:
    """Blocks for ``net``: config text, then every parameter and buffer.

    With ``quantized``, conv/fc/1x1 weights are stored as 8-bit codes;
    batch-norm tensors stay float32.
    """
    blocks: dict = {}
    if net.config_text is not None:
        blocks[CONFIG_BLOCK] = net.config_text.encode("utf-8")
    for name, value in net.state().items():
        if quantized and is_weight_block(name):
            blocks[name] = quantize(value)
        else:
            blocks[name] = value
    return blocks


def is_weight_block(name: str) -> bool:
    return name.endswith((".phi", ".pointwise"))


def quantize_blocks(blocks: dict) -> dict:
    if any(isinstance(v, QuantizedBlock) for v in blocks.values()):
        raise ModelFormatError("model is already quantized")
    return {k: quantize(v) if (is_weight_block(k) and not isinstance(v, bytes)) else v
            for k, v in blocks.items()}


def save_model(model, path) -> None:
    blocks = network_blocks(model) if isinstance(model, Network) else model
    Path(path).write_bytes(encode_blocks(blocks))


def load_blocks(path) -> dict:
    return decode_blocks(Path(path).read_bytes())


def network_from_blocks(blocks: dict) -> Network:
    if CONFIG_BLOCK not in blocks:
        raise ModelFormatError("model file has no config block")
    spec, hyper = parse_config(blocks[CONFIG_BLOCK].decode("utf-8"))
    net = build_network(spec, hyper)
    tensors = {k: dequantize(v) if isinstance(v, QuantizedBlock) else v
               for k, v in blocks.items() if k != CONFIG_BLOCK}
    net.load_state(tensors)
    return net


def load_model(path) -> Network:
    return network_from_blocks(load_blocks(path))
