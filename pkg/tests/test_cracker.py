import random

import pytest

from oblivcrack import pir
from oblivcrack.core import ChainParams, HashProvider, is_distinguished, reduce
from oblivcrack.cracker import AttemptFailed, CrackSession, ParamsMismatch, candidate_endpoints, lookup
from oblivcrack.provider import LocalProvider, ProviderState
from oblivcrack.tables import TableParams, bucket_for, build_all

MD5 = HashProvider()


def stored_chain_links(table, bucket, params):
    pw = params.space.index_to_password(table.starts[bucket])
    links = []
    while True:
        d = MD5(pw)
        links.append((pw, d))
        if is_distinguished(d, params.dp_modulus):
            return links
        pw = reduce(d, table.table_index, params.space)


class FlakyProvider(LocalProvider):
    def __init__(self, state, fail_after):
        super().__init__(state)
        self.fail_after = fail_after
        self.calls = 0

    def pir_query(self, table_index, scheme, payload=b""):
        self.calls += 1
        if self.calls > self.fail_after:
            raise ConnectionResetError("link dropped")
        return super().pir_query(table_index, scheme, payload)


def test_endpoints_dp_one(space4):
    chain = ChainParams(M=5, dp_modulus=1, max_chain_len=50)
    target = MD5(b"cafe")
    ends = candidate_endpoints(target, chain, space4, MD5)
    assert ends == [int.from_bytes(target[:8], "little")] * 5


def test_endpoint_of_mid_chain_hash(tables4, params4, local4):
    session = CrackSession(local4, "naive")
    checked = 0
    for t in tables4[:5]:
        for b in range(t.bucket_count):
            if t.is_empty(b):
                continue
            links = stored_chain_links(t, b, params4)
            _, mid = links[len(links) // 2]
            assert session.compute_candidate_endpoints(mid)[t.table_index] == t.ends[b]
            checked += 1
    assert checked == 5 * 15


def test_endpoints_deterministic(local4):
    session = CrackSession(local4, "naive")
    d = MD5(b"bead")
    assert session.compute_candidate_endpoints(d) == session.compute_candidate_endpoints(d)


@pytest.mark.parametrize("scheme", ["naive", "classic"])
def test_fetch_start_stored(tables4, state4, scheme):
    session = CrackSession(LocalProvider(state4), scheme, modulus_bits=64, seed=1)
    for t in tables4[:4]:
        for b in range(t.bucket_count):
            if not t.is_empty(b):
                assert session.fetch_start(t.ends[b], t.table_index) == t.starts[b] == t.lookup(t.ends[b])


def test_fetch_start_absent(tables4, local4, params4):
    session = CrackSession(local4, "naive")
    t = tables4[0]
    stored = set(t.ends)
    fp = next(
        k * params4.dp_modulus
        for k in range(1, 10**6)
        if k * params4.dp_modulus not in stored and not t.is_empty(bucket_for(k * params4.dp_modulus, 60))
    )
    assert session.fetch_start(fp, 0) is None


def test_fetch_start_empty_bucket(tables4, local4, params4):
    session = CrackSession(local4, "naive")
    t = tables4[0]
    fp = next(k * 15 for k in range(1, 10**6) if t.is_empty(bucket_for(k * 15, 60)))
    assert session.fetch_start(fp, 0) is None


def test_fetch_start_none_still_queries(local4):
    session = CrackSession(local4, "naive")
    assert session.fetch_start(None, 3) is None
    assert local4.counters.queries == {3: 1}


@pytest.mark.parametrize("scheme", ["naive", "classic"])
def test_crack_chain_start(tables4, state4, scheme):
    session = CrackSession(LocalProvider(state4), scheme, modulus_bits=128, seed=2)
    t = tables4[6]
    b = next(b for b in range(t.bucket_count) if not t.is_empty(b))
    pw = state4.params.space.index_to_password(t.starts[b])
    assert session.crack(MD5(pw)) == pw


def test_crack_out_of_space(local4):
    session = CrackSession(local4, "naive")
    assert session.crack(bytes.fromhex("00112233445566778899aabbccddeeff")) is None
    assert session.trace.queries_sent == 15


def test_crack_rejects_wrong_digest_length(local4):
    with pytest.raises(ValueError):
        CrackSession(local4, "naive").crack(b"short")


def test_one_query_per_table_and_order(state4, space4):
    provider = LocalProvider(state4)
    session = CrackSession(provider, "classic", modulus_bits=64, seed=3)
    r = random.Random(4)
    for _ in range(20):
        before = dict(provider.counters.queries)
        target = MD5(space4.index_to_password(r.randrange(space4.size())))
        found = session.crack(target)
        if found is not None:
            assert MD5(found) == target
        delta = {i: provider.counters.queries[i] - before.get(i, 0) for i in range(15)}
        assert delta == {i: 1 for i in range(15)}
        kinds = [k for k, _ in session.trace.events]
        assert kinds[:15] == ["fetch"] * 15
        assert set(kinds[15:]) <= {"walk"}
        assert [i for k, i in session.trace.events if k == "fetch"] == list(range(15))


def test_schemes_agree_with_lookup(tables4, params4, state4, space4):
    naive = CrackSession(LocalProvider(state4), "naive")
    classic = CrackSession(LocalProvider(state4), "classic", modulus_bits=64, seed=5)
    r = random.Random(6)
    for _ in range(25):
        target = MD5(space4.index_to_password(r.randrange(space4.size())))
        expected = lookup(target, tables4, params4)
        assert naive.crack(target) == expected == classic.crack(target)


def test_params_mismatch(state4, space4):
    other = TableParams.from_alpha(space4, 0.6, 4.0)
    with pytest.raises(ParamsMismatch):
        CrackSession(LocalProvider(state4), "naive", expected=other)
    CrackSession(LocalProvider(state4), "naive", expected=state4.params)


def test_transport_failure_counts_attempt(state4):
    provider = FlakyProvider(state4, fail_after=4)
    session = CrackSession(provider, "naive")
    with pytest.raises(AttemptFailed):
        session.crack(MD5(b"abcd"))
    assert session.failed_attempts == 1
    assert provider.calls == 5


def test_dummy_query_on_cycling_endpoint(state4, space4):
    provider = LocalProvider(state4)
    session = CrackSession(provider, "naive")
    r = random.Random(7)
    for _ in range(500):
        target = MD5(space4.index_to_password(r.randrange(space4.size())))
        ends = session.compute_candidate_endpoints(target)
        if None in ends:
            break
    else:
        pytest.fail("no cycling target found")
    before = provider.counters.total_queries
    session.crack(target)
    assert provider.counters.total_queries - before == 15


def test_lookup_small_build(space4):
    params = TableParams(space=space4, M=6, alpha=0.2, beta=3.0)
    tables, _, _ = build_all(params)
    t = tables[2]
    b = next(b for b in range(t.bucket_count) if not t.is_empty(b))
    pw = space4.index_to_password(t.starts[b])
    assert lookup(MD5(pw), tables, params) == pw
