"""RC5-32 block cipher, OFB confidentiality and a length-prefixed CBC-MAC.

Scalar functions drive the simulator; the ``*_batch`` variants vectorise the
same arithmetic over many packets with numpy and back the throughput bench.
"""
from __future__ import annotations

import hmac
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

P32 = 0xB7E15163
Q32 = 0x9E3779B9
MASK32 = 0xFFFFFFFF
BLOCK = 8
KEY_BYTES = 16
MAC_BYTES = 8
DEFAULT_ROUNDS = 8


class CryptoParamError(ValueError):
    pass


def _rotl(x: int, s: int) -> int:
    s &= 31
    return ((x << s) | (x >> (32 - s))) & MASK32


def _rotr(x: int, s: int) -> int:
    s &= 31
    return ((x >> s) | (x << (32 - s))) & MASK32


@dataclass(frozen=True)
class ExpandedKey:
    words: tuple[int, ...]
    rounds: int

    @property
    def size_bytes(self) -> int:
        return 4 * len(self.words)


def expand_key(key: bytes, rounds: int = DEFAULT_ROUNDS) -> ExpandedKey:
    """RC5-32 key schedule; the table holds ``2*(rounds+1)`` words."""
    if not 1 <= rounds <= 32:
        raise CryptoParamError(f"rounds must be in [1, 32], got {rounds}")
    if len(key) > 255:
        raise CryptoParamError("RC5 keys are at most 255 bytes")
    c = max(1, (len(key) + 3) // 4)
    L = [0] * c
    for i in range(len(key) - 1, -1, -1):
        L[i // 4] = ((L[i // 4] << 8) + key[i]) & MASK32
    t = 2 * (rounds + 1)
    S = [0] * t
    S[0] = P32
    for i in range(1, t):
        S[i] = (S[i - 1] + Q32) & MASK32
    A = B = i = j = 0
    for _ in range(3 * max(t, c)):
        A = S[i] = _rotl((S[i] + A + B) & MASK32, 3)
        B = L[j] = _rotl((L[j] + A + B) & MASK32, A + B)
        i = (i + 1) % t
        j = (j + 1) % c
    return ExpandedKey(tuple(S), rounds)


def _encrypt_words(S: tuple[int, ...], rounds: int, A: int, B: int) -> tuple[int, int]:
    A = (A + S[0]) & MASK32
    B = (B + S[1]) & MASK32
    for i in range(1, rounds + 1):
        s = B & 31
        A ^= B
        A = (((A << s) | (A >> (32 - s))) & MASK32) + S[2 * i] & MASK32
        s = A & 31
        B ^= A
        B = (((B << s) | (B >> (32 - s))) & MASK32) + S[2 * i + 1] & MASK32
    return A, B


def _decrypt_words(S: tuple[int, ...], rounds: int, A: int, B: int) -> tuple[int, int]:
    for i in range(rounds, 0, -1):
        B = _rotr((B - S[2 * i + 1]) & MASK32, A) ^ A
        A = _rotr((A - S[2 * i]) & MASK32, B) ^ B
    B = (B - S[1]) & MASK32
    A = (A - S[0]) & MASK32
    return A, B


def encrypt_block(ek: ExpandedKey, block: bytes) -> bytes:
    if len(block) != BLOCK:
        raise CryptoParamError("RC5-32 blocks are 8 bytes")
    A, B = _encrypt_words(ek.words, ek.rounds, int.from_bytes(block[:4], "little"),
                          int.from_bytes(block[4:], "little"))
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


def decrypt_block(ek: ExpandedKey, block: bytes) -> bytes:
    if len(block) != BLOCK:
        raise CryptoParamError("RC5-32 blocks are 8 bytes")
    A, B = _decrypt_words(ek.words, ek.rounds, int.from_bytes(block[:4], "little"),
                          int.from_bytes(block[4:], "little"))
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


def make_iv(src: int, seq: int) -> bytes:
    return src.to_bytes(2, "big") + seq.to_bytes(2, "big") + bytes(4)


@lru_cache(maxsize=65536)
def _keystream(ek: ExpandedKey, iv: bytes, nblocks: int) -> bytes:
    A = int.from_bytes(iv[:4], "little")
    B = int.from_bytes(iv[4:], "little")
    out = bytearray()
    for _ in range(nblocks):
        A, B = _encrypt_words(ek.words, ek.rounds, A, B)
        out += A.to_bytes(4, "little") + B.to_bytes(4, "little")
    return bytes(out)


def ofb_crypt(ek: ExpandedKey, iv: bytes, data: bytes) -> bytes:
    """XOR ``data`` with the OFB pad started at ``iv``; its own inverse."""
    if not data:
        return b""
    pad = _keystream(ek, bytes(iv), -(-len(data) // BLOCK))
    return bytes(a ^ b for a, b in zip(data, pad))


def mac_frame(data: bytes) -> bytes:
    """4-byte big-endian length prefix, zero padded to a whole number of blocks."""
    framed = len(data).to_bytes(4, "big") + data
    return framed + bytes(-len(framed) % BLOCK)


@lru_cache(maxsize=131072)
def cbc_mac(ek: ExpandedKey, data: bytes) -> bytes:
    framed = mac_frame(bytes(data))
    A = B = 0
    S, r = ek.words, ek.rounds
    for off in range(0, len(framed), BLOCK):
        A ^= int.from_bytes(framed[off:off + 4], "little")
        B ^= int.from_bytes(framed[off + 4:off + 8], "little")
        A, B = _encrypt_words(S, r, A, B)
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


def mac_input(ciphertext: bytes, handler: int, seq: int, src: int) -> bytes:
    """Bytes covered by the MAC: encrypted payload, handler id, sequence, source id."""
    return bytes(ciphertext) + bytes([handler]) + seq.to_bytes(2, "big") + src.to_bytes(2, "big")


def seal(ek: ExpandedKey, src: int, seq: int, handler: int, payload: bytes) -> tuple[bytes, bytes]:
    ct = ofb_crypt(ek, make_iv(src, seq), payload)
    return ct, cbc_mac(ek, mac_input(ct, handler, seq, src))


def open_sealed(ek: ExpandedKey, src: int, seq: int, handler: int, ciphertext: bytes,
                mac: bytes) -> bytes | None:
    """Return the plaintext, or ``None`` when the tag does not verify."""
    expected = cbc_mac(ek, mac_input(ciphertext, handler, seq, src))
    if not hmac.compare_digest(expected, bytes(mac)):
        return None
    return ofb_crypt(ek, make_iv(src, seq), ciphertext)


# ---------------------------------------------------------------------------
# numpy batch path

_M = np.uint64(MASK32)


def _rotl_vec(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    s = s & np.uint64(31)
    return ((x << s) | (x >> (np.uint64(32) - s))) & _M


def key_table(keys: list[ExpandedKey]) -> np.ndarray:
    """Stack expanded keys into a ``(nkeys, 2*(r+1))`` uint64 table."""
    rounds = {k.rounds for k in keys}
    if len(rounds) != 1:
        raise CryptoParamError("batch keys must share the round count")
    return np.array([k.words for k in keys], dtype=np.uint64)


def encrypt_words_batch(table: np.ndarray, key_idx: np.ndarray, A: np.ndarray,
                        B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    S = table[key_idx]
    rounds = table.shape[1] // 2 - 1
    A = (A.astype(np.uint64) + S[:, 0]) & _M
    B = (B.astype(np.uint64) + S[:, 1]) & _M
    for i in range(1, rounds + 1):
        A = (_rotl_vec(A ^ B, B) + S[:, 2 * i]) & _M
        B = (_rotl_vec(B ^ A, A) + S[:, 2 * i + 1]) & _M
    return A, B


def _bytes_to_words(buf: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    w = buf.reshape(buf.shape[0], -1, 2, 4).astype(np.uint64)
    shifts = np.array([0, 8, 16, 24], dtype=np.uint64)
    words = (w << shifts).sum(axis=-1)
    return words[:, :, 0], words[:, :, 1]


def _words_to_bytes(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    shifts = np.array([0, 8, 16, 24], dtype=np.uint64)
    a = ((A[..., None] >> shifts) & np.uint64(0xFF)).astype(np.uint8)
    b = ((B[..., None] >> shifts) & np.uint64(0xFF)).astype(np.uint8)
    return np.concatenate([a, b], axis=-1).reshape(A.shape[0], -1)


def _ofb_pad_batch(table, key_idx, src, seq, nblocks):
    A = (src.astype(np.uint64) >> np.uint64(8)) | ((src.astype(np.uint64) & np.uint64(0xFF)) << np.uint64(8))
    A |= ((seq.astype(np.uint64) >> np.uint64(8)) << np.uint64(16)) | ((seq.astype(np.uint64) & np.uint64(0xFF)) << np.uint64(24))
    B = np.zeros_like(A)
    outA, outB = [], []
    for _ in range(nblocks):
        A, B = encrypt_words_batch(table, key_idx, A, B)
        outA.append(A)
        outB.append(B)
    return _words_to_bytes(np.stack(outA, axis=1), np.stack(outB, axis=1))


def _mac_batch(table, key_idx, ct, handler, seq, src):
    n, plen = ct.shape
    body = np.empty((n, plen + 5), dtype=np.uint8)
    body[:, :plen] = ct
    body[:, plen] = handler
    body[:, plen + 1] = seq >> 8
    body[:, plen + 2] = seq & 0xFF
    body[:, plen + 3] = src >> 8
    body[:, plen + 4] = src & 0xFF
    total = 4 + body.shape[1]
    framed = np.zeros((n, total + (-total % BLOCK)), dtype=np.uint8)
    framed[:, :4] = np.frombuffer(body.shape[1].to_bytes(4, "big"), dtype=np.uint8)
    framed[:, 4:4 + body.shape[1]] = body
    Aw, Bw = _bytes_to_words(framed)
    A = np.zeros(n, dtype=np.uint64)
    B = np.zeros(n, dtype=np.uint64)
    for blk in range(Aw.shape[1]):
        A, B = encrypt_words_batch(table, key_idx, A ^ Aw[:, blk], B ^ Bw[:, blk])
    return _words_to_bytes(A[:, None], B[:, None])


def seal_batch(table: np.ndarray, key_idx: np.ndarray, src: np.ndarray, seq: np.ndarray,
               handler: np.ndarray, payload: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Seal ``n`` equal-length payloads (uint8 array of shape ``(n, len)``)."""
    src = src.astype(np.int64)
    seq = seq.astype(np.int64)
    plen = payload.shape[1]
    pad = _ofb_pad_batch(table, key_idx, src, seq, -(-plen // BLOCK))[:, :plen]
    ct = payload ^ pad
    return ct, _mac_batch(table, key_idx, ct, handler, seq, src)


def open_batch(table: np.ndarray, key_idx: np.ndarray, src: np.ndarray, seq: np.ndarray,
               handler: np.ndarray, ct: np.ndarray, mac: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Returns ``(ok_mask, plaintexts)``; rows failing verification are zeroed."""
    src = src.astype(np.int64)
    seq = seq.astype(np.int64)
    ok = np.all(_mac_batch(table, key_idx, ct, handler, seq, src) == mac, axis=1)
    plen = ct.shape[1]
    pad = _ofb_pad_batch(table, key_idx, src, seq, -(-plen // BLOCK))[:, :plen]
    pt = ct ^ pad
    pt[~ok] = 0
    return ok, pt
