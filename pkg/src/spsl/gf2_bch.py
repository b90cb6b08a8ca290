"""GF(2^m) arithmetic and binary BCH codes.

Polynomials over GF(2) are Python ints used as bitmasks (bit i is the
coefficient of x^i). Field elements are ints in [0, 2^m).

Bit order: a transmitted codeword is a sequence ``b[0..N-1]``; for an
unshortened code position j holds the coefficient of x^(n-1-j). Message bit 0
is therefore the highest-degree coefficient, and shortening drops leading
(highest-degree) message positions that are known to be zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

# One primitive polynomial per degree (x^m + ... + 1 as a bitmask).
PRIMITIVE_POLYS = {
    2: 0x7,
    3: 0xB,
    4: 0x13,
    5: 0x25,
    6: 0x43,
    7: 0x89,
    8: 0x11D,
    9: 0x211,
    10: 0x409,
    11: 0x805,
    12: 0x1053,
    13: 0x201B,
    14: 0x4443,
    15: 0x8003,
    16: 0x1100B,
}

DECODE_FAILURE = None


class FieldError(ValueError):
    pass


class CodeConstructionError(ValueError):
    pass


def poly_deg(p: int) -> int:
    return p.bit_length() - 1


def poly_mul(a: int, b: int) -> int:
    """Carry-less product of two GF(2) polynomials."""
    out = 0
    while b:
        if b & 1:
            out ^= a
        a <<= 1
        b >>= 1
    return out


def poly_mod(a: int, m: int) -> int:
    dm = poly_deg(m)
    while a and poly_deg(a) >= dm:
        a ^= m << (poly_deg(a) - dm)
    return a


def poly_divmod(a: int, m: int) -> tuple[int, int]:
    q = 0
    dm = poly_deg(m)
    while a and poly_deg(a) >= dm:
        s = poly_deg(a) - dm
        q |= 1 << s
        a ^= m << s
    return q, a


def poly_gcd(a: int, b: int) -> int:
    while b:
        a, b = b, poly_mod(a, b)
    return a


def poly_lcm(a: int, b: int) -> int:
    q, r = poly_divmod(poly_mul(a, b), poly_gcd(a, b))
    assert r == 0
    return q


@dataclass(frozen=True, eq=False)
class BinaryField:
    """GF(2^m) with log/antilog tables built on the root of ``primitive_poly``."""

    m: int
    primitive_poly: int
    exp: np.ndarray = dc_field(repr=False)
    log: np.ndarray = dc_field(repr=False)

    @property
    def order(self) -> int:
        """Number of nonzero elements, 2^m - 1."""
        return (1 << self.m) - 1

    @property
    def size(self) -> int:
        return 1 << self.m

    def mul(self, a: int, b: int) -> int:
        if a == 0 or b == 0:
            return 0
        return int(self.exp[(int(self.log[a]) + int(self.log[b])) % self.order])

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroDivisionError("zero has no inverse in GF(2^m)")
        return int(self.exp[(self.order - int(self.log[a])) % self.order])

    def pow_alpha(self, i: int) -> int:
        return int(self.exp[i % self.order])


def build_field(m: int, primitive_poly: int | None = None) -> BinaryField:
    """Build GF(2^m); raises ``FieldError`` if the polynomial is not primitive."""
    if int(m) != m or not 2 <= m <= 16:
        raise FieldError(f"m must be in [2, 16], got {m}")
    p = PRIMITIVE_POLYS[m] if primitive_poly is None else int(primitive_poly)
    if poly_deg(p) != m:
        raise FieldError(f"polynomial {p:#x} does not have degree {m}")
    order = (1 << m) - 1
    exp = np.zeros(2 * order, dtype=np.int64)
    log = np.full(1 << m, -1, dtype=np.int64)
    x = 1
    for i in range(order):
        if log[x] != -1:
            raise FieldError(f"polynomial {p:#x} is not primitive: alpha^{i} repeats")
        exp[i] = x
        log[x] = i
        x <<= 1
        if x >> m:
            x ^= p
    if x != 1:
        raise FieldError(f"polynomial {p:#x} is not primitive")
    exp[order:] = exp[:order]
    exp.setflags(write=False)
    log.setflags(write=False)
    return BinaryField(m=m, primitive_poly=p, exp=exp, log=log)


def cyclotomic_coset(i: int, n: int) -> list[int]:
    """{i, 2i, 4i, ...} mod n."""
    out = []
    j = i % n
    while j not in out:
        out.append(j)
        j = (2 * j) % n
    return out


def minimal_polynomial(gf: BinaryField, i: int) -> int:
    """Minimal polynomial of alpha^i over GF(2), as a bitmask."""
    if not 1 <= i <= gf.order - 1:
        raise ValueError(f"exponent must be in [1, {gf.order - 1}], got {i}")
    # Coefficients live in GF(2^m) until the end.
    coeffs = [1]
    for j in cyclotomic_coset(i, gf.order):
        root = gf.pow_alpha(j)
        nxt = [0] * (len(coeffs) + 1)
        for k, c in enumerate(coeffs):
            nxt[k + 1] ^= c
            nxt[k] ^= gf.mul(c, root)
        coeffs = nxt
    if any(c not in (0, 1) for c in coeffs):
        raise ArithmeticError("minimal polynomial has coefficients outside GF(2)")
    return sum(c << k for k, c in enumerate(coeffs))


@dataclass(frozen=True, eq=False)
class BchCode:
    """Primitive narrow-sense binary BCH code, optionally shortened.

    ``d`` is the Bose distance: the designed bound is widened to the largest
    run of consecutive roots of g, so the true minimum distance is at least d.
    """

    field: BinaryField
    n: int
    k: int
    d: int
    g: int
    shorten_by: int = 0

    @property
    def t(self) -> int:
        return (self.d - 1) // 2

    @property
    def length(self) -> int:
        """Transmitted codeword length."""
        return self.n - self.shorten_by

    @property
    def message_bits(self) -> int:
        return self.k - self.shorten_by

    def shortened(self, shorten_by: int) -> "BchCode":
        if not 0 <= shorten_by < self.k:
            raise ValueError(f"shorten_by must be in [0, {self.k}), got {shorten_by}")
        return BchCode(self.field, self.n, self.k, self.d, self.g, shorten_by)

    def _key(self):
        return (self.field.primitive_poly, self.n, self.k, self.d, self.g, self.shorten_by)

    def __eq__(self, other):
        if not isinstance(other, BchCode):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        s = f", shortened by {self.shorten_by}" if self.shorten_by else ""
        return f"BCH({self.n},{self.k},{self.d}{s})"


def _roots_of(gf: BinaryField, d: int) -> set[int]:
    roots: set[int] = set()
    for i in range(1, d):
        roots.update(cyclotomic_coset(i, gf.order))
    return roots


def build_bch(gf: BinaryField, d: int, shorten_by: int = 0) -> BchCode:
    """g = lcm of the minimal polynomials of alpha^1..alpha^(d-1)."""
    n = gf.order
    if int(d) != d or not 2 <= d <= n:
        raise CodeConstructionError(f"design distance must be in [2, {n}], got {d}")
    g = 1
    done: set[int] = set()
    for i in range(1, d):
        if i in done:
            continue
        done.update(cyclotomic_coset(i, n))
        g = poly_lcm(g, minimal_polynomial(gf, i))
    k = n - poly_deg(g)
    if k <= 0:
        raise CodeConstructionError(f"no nontrivial code for n={n}, d={d}")
    roots = _roots_of(gf, d)
    bose = d
    while bose < n and bose in roots:
        bose += 1
    code = BchCode(field=gf, n=n, k=k, d=bose, g=g)
    return code.shortened(shorten_by) if shorten_by else code


def bch_table(m: int) -> list[BchCode]:
    """All distinct primitive narrow-sense codes of length 2^m - 1, by decreasing k."""
    gf = build_field(m)
    out: list[BchCode] = []
    d = 3
    while d <= gf.order:
        try:
            c = build_bch(gf, d)
        except CodeConstructionError:
            break
        if not out or c.k != out[-1].k:
            out.append(c)
        d = c.d + 2
    return out


def smallest_code_for(m: int, message_bits: int) -> BchCode:
    """Strongest code of length 2^m - 1 whose dimension still holds the message."""
    fits = [c for c in bch_table(m) if c.k >= message_bits]
    if not fits:
        raise CodeConstructionError(f"no BCH code of length {2**m - 1} has k >= {message_bits}")
    best = min(fits, key=lambda c: c.k)
    return best.shortened(best.k - message_bits)


def _as_bits(bits, n_expected: int, what: str) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != 1 or arr.size != n_expected:
        raise ValueError(f"{what} must have {n_expected} bits, got shape {arr.shape}")
    if arr.size and (arr.min() < 0 or arr.max() > 1):
        raise ValueError(f"{what} must be binary")
    return arr.astype(np.uint8)


def bits_to_poly(bits) -> int:
    """bits[0] is the highest-degree coefficient."""
    out = 0
    for b in bits:
        out = (out << 1) | int(b)
    return out


def poly_to_bits(p: int, n: int) -> np.ndarray:
    return np.array([(p >> (n - 1 - j)) & 1 for j in range(n)], dtype=np.uint8)


def parity_poly(code: BchCode, msg_poly: int) -> int:
    return poly_mod(msg_poly << (code.n - code.k), code.g)


def encode_systematic(code: BchCode, message) -> np.ndarray:
    """Transmitted bits: the message followed by n - k parity bits."""
    msg = _as_bits(message, code.message_bits, "message")
    m = bits_to_poly(msg)
    r = parity_poly(code, m)
    out = np.empty(code.length, dtype=np.uint8)
    out[: code.message_bits] = msg
    out[code.message_bits:] = poly_to_bits(r, code.n - code.k)
    return out


class _Syndromes:
    """Precomputed alpha^(i*pos) tables so syndromes are a gather plus xor."""

    def __init__(self, code: BchCode):
        gf = code.field
        n = code.n
        self.count = 2 * code.t
        # Received coefficient of x^e for transmitted position j (unshortened) is e = n-1-j.
        e = np.arange(n - 1, -1, -1)
        self.powers = np.array(
            [gf.exp[(i * e) % gf.order] for i in range(1, self.count + 1)], dtype=np.int64
        )


_SYND_CACHE: dict[int, _Syndromes] = {}


def _syndromes(code: BchCode, full: np.ndarray) -> list[int]:
    key = id(code)
    tab = _SYND_CACHE.get(key)
    if tab is None or tab.count != 2 * code.t or tab.powers.shape[1] != code.n:
        tab = _Syndromes(code)
        _SYND_CACHE[key] = tab
    sel = tab.powers[:, full.astype(bool)]
    if sel.shape[1] == 0:
        return [0] * tab.count
    return [int(v) for v in np.bitwise_xor.reduce(sel, axis=1)]


def berlekamp_massey(gf: BinaryField, synd: list[int]) -> list[int]:
    """Error-locator polynomial (lowest degree first) from syndromes S1..S2t."""
    C = [1]
    B = [1]
    L = 0
    m = 1
    b = 1
    for r in range(len(synd)):
        delta = synd[r]
        for i in range(1, L + 1):
            if i < len(C) and C[i]:
                delta ^= gf.mul(C[i], synd[r - i])
        if delta == 0:
            m += 1
            continue
        coef = gf.mul(delta, gf.inv(b))
        T = C[:]
        shifted = [0] * m + [gf.mul(coef, x) for x in B]
        if len(shifted) > len(C):
            C = C + [0] * (len(shifted) - len(C))
        for i, x in enumerate(shifted):
            C[i] ^= x
        if 2 * L <= r:
            L = r + 1 - L
            B = T
            b = delta
            m = 1
        else:
            m += 1
    while len(C) > 1 and C[-1] == 0:
        C.pop()
    return C


def _chien(gf: BinaryField, locator: list[int], n: int) -> list[int]:
    """Exponents e in [0, n) with locator(alpha^-e) = 0."""
    logs = [int(gf.log[c]) if c else -1 for c in locator]
    found = []
    for e in range(n):
        acc = 0
        for i, lc in enumerate(logs):
            if lc >= 0:
                acc ^= int(gf.exp[(lc - i * e) % gf.order])
        if acc == 0:
            found.append(e)
    return found


def bounded_distance_decode(code: BchCode, received):
    """Correct up to ``code.t`` flips; returns the message bits or ``None`` on failure.

    Beyond ``t`` flips the result may be ``None`` or a wrong message.
    """
    rx = _as_bits(received, code.length, "received word")
    full = np.zeros(code.n, dtype=np.uint8)
    full[code.shorten_by:] = rx
    synd = _syndromes(code, full)
    if any(synd):
        loc = berlekamp_massey(code.field, synd)
        nerr = len(loc) - 1
        if nerr > code.t:
            return DECODE_FAILURE
        roots = _chien(code.field, loc, code.n)
        if len(roots) != nerr:
            return DECODE_FAILURE
        for e in roots:
            j = code.n - 1 - e
            if j < code.shorten_by:
                # Correction would land on a bit that was never sent.
                return DECODE_FAILURE
            full[j] ^= 1
    return full[code.shorten_by: code.k].copy()


def is_codeword(code: BchCode, word) -> bool:
    bits = _as_bits(word, code.length, "word")
    return poly_mod(bits_to_poly(bits), code.g) == 0


def generator_divides_xn1(code: BchCode) -> bool:
    return poly_mod((1 << code.n) | 1, code.g) == 0


def all_codewords(code: BchCode) -> np.ndarray:
    """Every codeword of the (shortened) code, message index in natural binary order."""
    kk = code.message_bits
    if kk > 20:
        raise ValueError("too many codewords to enumerate")
    # Linearity: build from the basis of unit messages.
    basis = np.array([encode_systematic(code, np.eye(kk, dtype=np.uint8)[i]) for i in range(kk)])
    idx = np.arange(1 << kk)
    msg_bits = ((idx[:, None] >> np.arange(kk - 1, -1, -1)) & 1).astype(np.uint8)
    return (msg_bits @ basis.astype(np.int64) % 2).astype(np.uint8)


def min_weight(code: BchCode) -> int:
    words = all_codewords(code)[1:]
    return int(words.sum(axis=1).min())


