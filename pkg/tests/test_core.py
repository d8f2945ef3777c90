import hashlib
import math
import random

import mpmath
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from oblivcrack.core import (
    ChainParams,
    HashId,
    HashProvider,
    InvalidParameters,
    PasswordSpace,
    derive_m,
    endpoint_from_digest,
    find_preimage,
    fingerprint,
    is_distinguished,
    reduce,
    splitmix64,
    table_salt,
    walk_to_endpoint,
)

MD5 = HashProvider(HashId.MD5)
BIG = PasswordSpace(b"abcdefghijklmnopqrstuvwxyz", 8)


def mp_derive_m(alpha, n):
    mpmath.mp.dps = 50
    return int(mpmath.ceil(mpmath.cbrt(-mpmath.log(1 - mpmath.mpf(alpha)) * n)))


def naive_chain(start_pw, table_index, chain, space):
    """Reference walk built from the public single-step helpers."""
    links = []
    pw = start_pw
    for _ in range(chain.max_chain_len):
        d = MD5(pw)
        links.append((pw, d))
        if is_distinguished(d, chain.dp_modulus):
            return links, True
        pw = reduce(d, table_index, space)
    return links, False


# -- derive_m ---------------------------------------------------------------

def test_derive_m_exact_cube():
    assert derive_m(1 - math.exp(-1), 1000) == 10


@pytest.mark.parametrize("alpha,n,expected", [(0.9, 46656, 48), (0.9, 1296, 15)])
def test_derive_m_examples(alpha, n, expected):
    assert mp_derive_m(alpha, n) == expected
    assert derive_m(alpha, n) == expected


@pytest.mark.parametrize("alpha", [0.4, 0.5, 0.6, 0.7, 0.8, 0.9])
@pytest.mark.parametrize("n", [1296, 7776, 46656])
def test_derive_m_matches_high_precision(alpha, n):
    assert derive_m(alpha, n) == max(mp_derive_m(alpha, n), 2)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 1.5])
def test_derive_m_rejects_bad_alpha(alpha):
    with pytest.raises(InvalidParameters):
        derive_m(alpha, 1296)


def test_derive_m_floor_of_two():
    assert derive_m(0.01, 8) == 2


# -- password space ---------------------------------------------------------

def test_index_to_password_examples(space4):
    assert space4.index_to_password(0) == b"aaaa"
    assert space4.index_to_password(1295) == b"ffff"
    assert space4.index_to_password(6) == b"aaba"


def test_first_passwords_enumerate_in_order(space4):
    expected = [b"aaa" + bytes([c]) for c in b"abcdef"] + [b"aaba", b"aabb"]
    assert [space4.index_to_password(i) for i in range(8)] == expected


def test_index_out_of_range(space4):
    with pytest.raises(IndexError):
        space4.index_to_password(1296)
    with pytest.raises(IndexError):
        space4.index_to_password(-1)


def test_space_sizes():
    assert [PasswordSpace(b"abcdef", n).size() for n in (4, 5, 6)] == [1296, 7776, 46656]


@pytest.mark.parametrize(
    "alphabet,length",
    [(b"aab", 3), (b"a", 3), (bytes(range(65)), 2), (b"ab", 0), (bytes(range(64)), 11)],
)
def test_space_validation(alphabet, length):
    with pytest.raises(InvalidParameters):
        PasswordSpace(alphabet, length)


def test_password_to_index_rejects_foreign(space4):
    with pytest.raises(ValueError):
        space4.password_to_index(b"abcz")
    with pytest.raises(ValueError):
        space4.password_to_index(b"abc")


def test_bijection_exhaustive(space4):
    seen = set()
    for i in range(space4.size()):
        pw = space4.index_to_password(i)
        assert space4.password_to_index(pw) == i
        seen.add(pw)
    assert len(seen) == space4.size()


@given(
    alphabet=st.sets(st.integers(0, 255), min_size=2, max_size=64).map(lambda s: bytes(sorted(s))),
    length=st.integers(1, 8),
    data=st.data(),
)
def test_bijection_property(alphabet, length, data):
    space = PasswordSpace(alphabet, length)
    index = data.draw(st.integers(0, space.size() - 1))
    assert space.password_to_index(space.index_to_password(index)) == index


# -- hashing / reduction ----------------------------------------------------

def test_hash_provider():
    assert MD5(b"abc") == hashlib.md5(b"abc").digest()
    assert MD5.digest_size == 16
    assert HashProvider.by_name("sha256")(b"x") == hashlib.sha256(b"x").digest()
    with pytest.raises(InvalidParameters):
        HashProvider.by_name("crc32")


def test_splitmix64_reference_values():
    # published SplitMix64 outputs for seed 0 (state advanced by the gamma each call)
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4


def test_reduce_zero_index(space4):
    digest = table_salt(0).to_bytes(8, "little") + bytes(8)
    assert reduce(digest, 0, space4) == b"aaaa"


def test_reduce_deterministic(space4):
    d = MD5(b"hello")
    assert reduce(d, 3, space4) == reduce(d, 3, space4)


def test_reduce_differs_across_tables(space4):
    r = random.Random(1)
    same = 0
    for _ in range(10_000):
        d = r.randbytes(16)
        same += reduce(d, 0, space4) == reduce(d, 1, space4)
    assert same <= 100


def test_is_distinguished_examples():
    assert is_distinguished((8).to_bytes(8, "little") + bytes(8), 4)
    assert not is_distinguished((7).to_bytes(8, "little") + bytes(8), 4)


def test_distinguished_density():
    m = 16
    trials = 100_000
    r = random.Random(2)
    hits = sum(is_distinguished(r.randbytes(16), m) for _ in range(trials))
    lo, hi = stats.binom.interval(0.99, trials, 1 / m)
    assert lo <= hits <= hi


# -- chain walking ----------------------------------------------------------

def test_walk_immediate_endpoint():
    chain = ChainParams.for_m(16)
    start = next(i for i in range(10_000) if is_distinguished(MD5(BIG.index_to_password(i)), 16))
    fp, steps = walk_to_endpoint(start, 0, chain, BIG, MD5)
    assert steps == 1
    assert fp == fingerprint(MD5(BIG.index_to_password(start)))


def test_walk_dp_modulus_one(space4):
    chain = ChainParams(M=4, dp_modulus=1, max_chain_len=40)
    for i in range(50):
        assert walk_to_endpoint(i, 2, chain, space4, MD5)[1] == 1


def test_walk_matches_reference(space4):
    chain = ChainParams.for_m(15)
    for start in range(200):
        links, ended = naive_chain(space4.index_to_password(start), 4, chain, space4)
        result = walk_to_endpoint(start, 4, chain, space4, MD5)
        if ended:
            assert result == (fingerprint(links[-1][1]), len(links))
        else:
            assert result is None


def test_walk_reports_cycle():
    # in a space of 8 passwords a chain revisits nodes quickly; huge dp_modulus never fires
    tiny = PasswordSpace(b"ab", 3)
    chain = ChainParams(M=2, dp_modulus=1 << 62, max_chain_len=20)
    assert all(walk_to_endpoint(i, 0, chain, tiny, MD5) is None for i in range(8))


def test_chain_length_geometric():
    m = 64
    chain = ChainParams.for_m(m)
    r = random.Random(3)
    steps = []
    for _ in range(1500):
        result = walk_to_endpoint(r.randrange(BIG.size()), r.randrange(m), chain, BIG, MD5)
        assert result is not None
        steps.append(result[1])
    mean = sum(steps) / len(steps)
    assert 0.8 * m <= mean <= 1.2 * m
    # goodness of fit against Geometric(1/m) on quantile bins
    edges = [0] + [int(stats.geom.ppf(q, 1 / m)) for q in (0.2, 0.4, 0.6, 0.8)] + [10 * m]
    observed = [sum(lo < s <= hi for s in steps) for lo, hi in zip(edges, edges[1:])]
    cdf = [stats.geom.cdf(e, 1 / m) for e in edges]
    expected = [(b - a) * len(steps) for a, b in zip(cdf, cdf[1:])]
    scale = sum(observed) / sum(expected)
    assert stats.chisquare(observed, [e * scale for e in expected]).pvalue > 0.001


def test_endpoint_from_distinguished_digest_is_itself():
    chain = ChainParams.for_m(8)
    d = (8 * 12345).to_bytes(8, "little") + bytes(8)
    assert endpoint_from_digest(d, 0, chain, BIG, MD5) == (8 * 12345, 1)


# -- find_preimage ----------------------------------------------------------

def test_find_preimage_first_link(space4):
    chain = ChainParams.for_m(15)
    pw = space4.index_to_password(77)
    assert find_preimage(77, 5, MD5(pw), chain, space4, MD5) == pw


def test_find_preimage_every_link():
    chain = ChainParams.for_m(32)
    r = random.Random(4)
    checked = 0
    while checked < 20:
        start = r.randrange(BIG.size())
        links, ended = naive_chain(BIG.index_to_password(start), 7, chain, BIG)
        if not ended:
            continue
        for pw, d in links:
            assert find_preimage(start, 7, d, chain, BIG, MD5) == pw
        checked += 1


def test_find_preimage_not_in_chain(space4):
    chain = ChainParams.for_m(15)
    r = random.Random(5)
    for start in range(30):
        links, _ = naive_chain(space4.index_to_password(start), 1, chain, space4)
        on_chain = {d for _, d in links}
        target = r.randbytes(16)
        assert target not in on_chain
        assert find_preimage(start, 1, target, chain, space4, MD5) is None


def test_find_preimage_stops_at_endpoint(space4):
    # a password beyond the endpoint of the chain is never reported
    chain = ChainParams.for_m(15)
    for start in range(100):
        links, ended = naive_chain(space4.index_to_password(start), 0, chain, space4)
        if not ended:
            continue
        beyond = reduce(links[-1][1], 0, space4)
        d = MD5(beyond)
        if any(d == ld for _, ld in links):
            continue
        assert find_preimage(start, 0, d, chain, space4, MD5) is None
        return
    pytest.fail("no suitable chain found")


@settings(max_examples=60, deadline=None)
@given(start=st.integers(0, 1295), table=st.integers(0, 14))
def test_find_preimage_property(space4, start, table):
    chain = ChainParams.for_m(15)
    links, _ = naive_chain(space4.index_to_password(start), table, chain, space4)
    for pw, d in links:
        found = find_preimage(start, table, d, chain, space4, MD5)
        # a chain that revisits a digest returns its first occurrence
        assert found is not None and MD5(found) == d
