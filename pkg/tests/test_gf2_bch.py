import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spsl.decode import mdd_decode_batch, pack_codebook
from spsl.codebook import bch_codebook, int_to_bits
from spsl.gf2_bch import (
    PRIMITIVE_POLYS,
    CodeConstructionError,
    FieldError,
    all_codewords,
    bch_table,
    bits_to_poly,
    bounded_distance_decode,
    build_bch,
    build_field,
    cyclotomic_coset,
    encode_systematic,
    generator_divides_xn1,
    is_codeword,
    min_weight,
    minimal_polynomial,
    poly_deg,
    poly_mul,
    smallest_code_for,
)


def bits(value: int, n: int) -> np.ndarray:
    return np.array([(value >> (n - 1 - j)) & 1 for j in range(n)], dtype=np.uint8)


def long_division_remainder(num: int, den: int) -> int:
    """Schoolbook GF(2) division, written out bit by bit."""
    num_bits = [int(c) for c in bin(num)[2:]]
    den_bits = [int(c) for c in bin(den)[2:]]
    work = list(num_bits)
    for i in range(len(work) - len(den_bits) + 1):
        if work[i]:
            for j, b in enumerate(den_bits):
                work[i + j] ^= b
    rem = work[-(len(den_bits) - 1):]
    return int("".join(map(str, rem)), 2)


@pytest.fixture(scope="module")
def bch63():
    return build_bch(build_field(6), 27)


def test_field_m4_powers():
    gf = build_field(4)
    powers = [gf.pow_alpha(i) for i in range(15)]
    assert len(set(powers)) == 15
    assert gf.pow_alpha(15) == 1
    assert gf.pow_alpha(0) == 1
    assert gf.size == 16


@pytest.mark.parametrize("m", range(2, 13))
def test_field_tables_invert(m):
    gf = build_field(m)
    xs = np.arange(1, gf.size)
    np.testing.assert_array_equal(gf.exp[gf.log[xs]], xs)
    assert gf.primitive_poly == PRIMITIVE_POLYS[m]


def test_field_mul_inverse():
    gf = build_field(5)
    for a in range(1, 32):
        assert gf.mul(a, gf.inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        gf.inv(0)


def test_non_primitive_polynomial_rejected():
    # x^4 + x^3 + x^2 + x + 1 is irreducible but its root has order 5.
    with pytest.raises(FieldError):
        build_field(4, 0b11111)
    with pytest.raises(FieldError):
        build_field(4, 0b101)
    with pytest.raises(FieldError):
        build_field(17)


def test_cyclotomic_coset_m4():
    assert sorted(cyclotomic_coset(1, 15)) == [1, 2, 4, 8]
    assert poly_deg(minimal_polynomial(build_field(4), 1)) == 4


@pytest.mark.parametrize("m", [3, 4, 5, 6, 8])
def test_minpoly_of_alpha_is_primitive_poly(m):
    gf = build_field(m)
    assert minimal_polynomial(gf, 1) == gf.primitive_poly


@pytest.mark.parametrize("m", [4, 6])
def test_minpoly_conjugates_and_root(m):
    gf = build_field(m)
    for i in range(1, gf.order):
        q = minimal_polynomial(gf, i)
        assert q == minimal_polynomial(gf, (2 * i) % gf.order)
        # Evaluate q at alpha^i with field arithmetic.
        acc = 0
        for k in range(poly_deg(q), -1, -1):
            acc = gf.mul(acc, gf.pow_alpha(i)) ^ ((q >> k) & 1)
        assert acc == 0


@pytest.mark.parametrize("m, d, k", [(6, 27, 10), (5, 11, 11), (4, 5, 7), (4, 3, 11), (8, 127, 9)])
def test_dimensions(m, d, k):
    code = build_bch(build_field(m), d)
    assert code.k == k
    assert code.n == 2**m - 1
    assert poly_deg(code.g) == code.n - code.k
    assert generator_divides_xn1(code)


def test_bch_15_7_min_weight_exhaustive():
    code = build_bch(build_field(4), 5)
    weights = [int(encode_systematic(code, bits(i, 7)).sum()) for i in range(1, 128)]
    assert min(weights) >= 5
    assert min_weight(code) == min(weights)


def test_design_distance_limits():
    gf = build_field(4)
    with pytest.raises(CodeConstructionError):
        build_bch(gf, 1)
    with pytest.raises(CodeConstructionError):
        build_bch(gf, 16)


def test_bch_table_m6():
    table = [(c.n, c.k, c.d) for c in bch_table(6)]
    assert (63, 10, 27) in table
    assert (63, 16, 23) in table
    assert (63, 7, 31) in table
    ks = [k for _, k, _ in table]
    assert ks == sorted(ks, reverse=True)


@pytest.mark.parametrize(
    "m, bits, expect",
    [(6, 10, (63, 10, 27, 0)), (5, 10, (31, 11, 11, 1)), (8, 7, (255, 9, 127, 2)), (6, 7, (63, 7, 31, 0))],
)
def test_smallest_code_for(m, bits, expect):
    c = smallest_code_for(m, bits)
    assert (c.n, c.k, c.d, c.shorten_by) == expect
    assert c.message_bits == bits


def test_encode_zero():
    code = build_bch(build_field(6), 27)
    assert not encode_systematic(code, np.zeros(10, np.uint8)).any()


def test_systematic_exhaustive_k11():
    code = build_bch(build_field(5), 11)
    for i in range(1 << 11):
        msg = bits(i, 11)
        cw = encode_systematic(code, msg)
        assert cw.size == 31
        np.testing.assert_array_equal(cw[:11], msg)


def test_parity_bch_15_7_long_division():
    code = build_bch(build_field(4), 5)
    msg = np.array([1, 0, 0, 0, 0, 0, 0], np.uint8)
    parity = bits_to_poly(encode_systematic(code, msg)[7:])
    assert parity == long_division_remainder(1 << 14, code.g)


def test_wrong_message_length():
    code = build_bch(build_field(4), 5)
    with pytest.raises(ValueError):
        encode_systematic(code, np.zeros(6, np.uint8))


@settings(max_examples=50)
@given(st.integers(0, 2**10 - 1), st.integers(0, 2**10 - 1))
def test_linearity(a, b):
    code = build_bch(build_field(6), 27)
    ma, mb = bits(a, 10), bits(b, 10)
    lhs = encode_systematic(code, ma) ^ encode_systematic(code, mb)
    np.testing.assert_array_equal(lhs, encode_systematic(code, ma ^ mb))


def test_codewords_divisible_by_generator(bch63):
    for cw in all_codewords(bch63)[::17]:
        assert long_division_remainder(bits_to_poly(cw), bch63.g) == 0 or not cw.any()
        assert is_codeword(bch63, cw)


def test_round_trip_exhaustive_k11():
    code = build_bch(build_field(5), 11)
    for cw in all_codewords(code):
        np.testing.assert_array_equal(bounded_distance_decode(code, cw), cw[:11])


def test_zero_flips_random_messages(bch63):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        msg = rng.integers(0, 2, 10).astype(np.uint8)
        np.testing.assert_array_equal(bounded_distance_decode(bch63, encode_systematic(bch63, msg)), msg)


def test_corrects_13_flips(bch63):
    rng = np.random.default_rng(1)
    for _ in range(1000):
        msg = rng.integers(0, 2, 10).astype(np.uint8)
        rx = encode_systematic(bch63, msg)
        rx[rng.choice(63, size=13, replace=False)] ^= 1
        np.testing.assert_array_equal(bounded_distance_decode(bch63, rx), msg)


def test_14_flips_can_fail(bch63):
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(300):
        msg = rng.integers(0, 2, 10).astype(np.uint8)
        rx = encode_systematic(bch63, msg)
        rx[rng.choice(63, size=14, replace=False)] ^= 1
        out = bounded_distance_decode(bch63, rx)
        bad += out is None or not np.array_equal(out, msg)
    assert bad > 0


def test_shortened_code_corrects():
    code = build_bch(build_field(5), 11, shorten_by=1)
    assert code.length == 30
    rng = np.random.default_rng(3)
    for _ in range(300):
        msg = rng.integers(0, 2, 10).astype(np.uint8)
        rx = encode_systematic(code, msg)
        assert rx.size == 30
        rx[rng.choice(30, size=code.t, replace=False)] ^= 1
        np.testing.assert_array_equal(bounded_distance_decode(code, rx), msg)


def test_decoder_never_crashes_on_noise():
    code = build_bch(build_field(5), 11, shorten_by=4)
    rng = np.random.default_rng(4)
    for _ in range(500):
        out = bounded_distance_decode(code, rng.integers(0, 2, code.length))
        assert out is None or out.size == 7


def test_received_length_checked(bch63):
    with pytest.raises(ValueError):
        bounded_distance_decode(bch63, np.zeros(62, np.uint8))


def test_bdd_agrees_with_mdd_within_radius(bch63):
    msgs = int_to_bits(np.arange(1024), 10)
    book = bch_codebook(msgs, bch63)
    packed = pack_codebook(book)
    rng = np.random.default_rng(6)
    for _ in range(200):
        c = int(rng.integers(1024))
        rx = book.table[c].copy()
        rx[rng.choice(63, size=int(rng.integers(0, 14)), replace=False)] ^= 1
        assert mdd_decode_batch(rx, packed).columns[0] == c
        np.testing.assert_array_equal(bounded_distance_decode(bch63, rx), msgs[c])


def test_exhaustive_min_distance_shortened_book(bch63):
    words = all_codewords(bch63).astype(np.int16)
    best = 63
    for i in range(0, len(words), 128):
        d = np.abs(words[i:i + 128, None, :] - words[None, :, :]).sum(axis=2)
        d[d == 0] = 999
        best = min(best, int(d.min()))
    assert best >= 27


def test_poly_mul_commutes():
    assert poly_mul(0b1011, 0b110) == poly_mul(0b110, 0b1011) == 0b111010
