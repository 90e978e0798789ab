"""Standalone RC5-32/r/b written straight from Rivest's description.

Kept deliberately naive (lists of words, explicit modular arithmetic) so it
shares no code or shortcuts with the package implementation.
"""

W = 32
MOD = 2 ** W
PW = 0xB7E15163
QW = 0x9E3779B9


def rotl(x, y):
    y %= W
    return ((x << y) % MOD) | (x >> (W - y)) if y else x


def key_schedule(key: bytes, r: int) -> list:
    u = W // 8
    b = len(key)
    c = max(1, -(-b // u))
    L = [0] * c
    for i in range(b - 1, -1, -1):
        L[i // u] = (L[i // u] * 256 + key[i]) % MOD
    t = 2 * (r + 1)
    S = [(PW + i * QW) % MOD for i in range(t)]
    i = j = 0
    A = B = 0
    for _ in range(3 * max(t, c)):
        S[i] = rotl((S[i] + A + B) % MOD, 3)
        A = S[i]
        L[j] = rotl((L[j] + A + B) % MOD, (A + B) % MOD)
        B = L[j]
        i = (i + 1) % t
        j = (j + 1) % c
    return S


def encrypt(S: list, r: int, block: bytes) -> bytes:
    A = int.from_bytes(block[0:4], "little")
    B = int.from_bytes(block[4:8], "little")
    A = (A + S[0]) % MOD
    B = (B + S[1]) % MOD
    for i in range(1, r + 1):
        A = (rotl(A ^ B, B) + S[2 * i]) % MOD
        B = (rotl(B ^ A, A) + S[2 * i + 1]) % MOD
    return A.to_bytes(4, "little") + B.to_bytes(4, "little")


# Rivest's published RC5-32/12/16 vectors; each plaintext is the previous ciphertext.
VECTORS_32_12_16 = [
    ("00000000000000000000000000000000", "0000000000000000", "21a5dbee154b8f6d"),
    ("915f4619be41b2516355a50110a9ce91", "21a5dbee154b8f6d", "f7c013ac5b2b8952"),
    ("783348e75aeb0f2fd7b169bb8dc16787", "f7c013ac5b2b8952", "2f42b3b70369fc92"),
    ("dc49db1375a5584f6485b413b5f12baf", "2f42b3b70369fc92", "65c178b284d197cc"),
    ("5269f149d41ba0152497574d7f153125", "65c178b284d197cc", "eb44e415da319824"),
]
