import pytest

from tabrag.gateway import (
    CachedChatProvider,
    CompletionParams,
    FailingChatProvider,
    GatewayError,
    HashEmbeddingProvider,
    MockChatProvider,
    ResponseCache,
    RetryPolicy,
    ScriptRule,
    complete_with_retry,
    embed_batch,
    prompt_hash,
)

NOSLEEP = lambda _s: None


def test_mock_scripted_response():
    provider = MockChatProvider(sequence=["canned"])
    assert provider.complete("hi", CompletionParams()) == "canned"


def test_mock_sequence_order_and_transcript():
    provider = MockChatProvider(sequence=["one", "two"])
    p = CompletionParams()
    assert provider.complete("a", p) == "one"
    assert provider.complete("b", p) == "two"
    assert provider.transcript == ["a", "b"]


def test_mock_hash_and_rules():
    provider = MockChatProvider(
        by_hash={prompt_hash("exact"): "H"},
        rules=[ScriptRule(("alpha", "beta"), "R1"), ScriptRule(("alpha",), "R2")],
        default="D",
    )
    p = CompletionParams()
    assert provider.complete("exact", p) == "H"
    assert provider.complete("alpha and beta", p) == "R1"
    assert provider.complete("alpha only", p) == "R2"
    assert provider.complete("nothing matches", p) == "D"


def test_mock_strict_unscripted():
    provider = MockChatProvider()
    with pytest.raises(GatewayError):
        provider.complete("??", CompletionParams())


def test_retry_succeeds_after_failures():
    provider = MockChatProvider(sequence=["ok"], fail_first=2)
    text = complete_with_retry(provider, "p", policy=RetryPolicy(max_attempts=3), sleep=NOSLEEP)
    assert text == "ok"
    assert len(provider.transcript) == 3


def test_retry_exhaustion():
    provider = FailingChatProvider()
    with pytest.raises(GatewayError, match="after 2 attempts"):
        complete_with_retry(provider, "p", policy=RetryPolicy(max_attempts=2), sleep=NOSLEEP)
    assert provider.calls == 2


def test_params_validation():
    with pytest.raises(ValueError):
        CompletionParams(temperature=-1.0)


def test_embed_batch_order():
    emb = HashEmbeddingProvider(dimension=8)
    texts = [f"text {i}" for i in range(5)]
    batched = embed_batch(emb, texts, batch_size=2)
    assert len(batched) == 5
    single = embed_batch(emb, texts, batch_size=1)
    assert batched == single


def test_embed_batch_empty():
    assert embed_batch(HashEmbeddingProvider(4), [], batch_size=3) == []


def test_embed_batch_dimension_mismatch():
    class Bad:
        dimension = 4

        def embed(self, texts):
            return [[0.0, 1.0]]

    with pytest.raises(GatewayError, match="dimension mismatch"):
        embed_batch(Bad(), ["x"], batch_size=1)


def test_cache_suppresses_second_call(tmp_path):
    cache = ResponseCache(tmp_path)
    inner = MockChatProvider(default="resp")
    provider = CachedChatProvider(inner, cache, clock=lambda: "T0")
    p = CompletionParams()
    assert provider.complete("prompt", p) == "resp"
    assert provider.complete("prompt", p) == "resp"
    assert len(inner.transcript) == 1  # second call fully served by the cache


def test_cache_replay_keeps_original_timestamp(tmp_path):
    cache = ResponseCache(tmp_path)
    clock_values = iter(["T0", "T1"])
    provider = CachedChatProvider(MockChatProvider(default="r"), cache, clock=lambda: next(clock_values))
    p = CompletionParams()
    first = provider.complete_entry("prompt", p)
    second = provider.complete_entry("prompt", p)
    assert not first.hit and second.hit
    assert first.created_at == second.created_at == "T0"


def test_cache_distinguishes_params(tmp_path):
    cache = ResponseCache(tmp_path)
    inner = MockChatProvider(default="r")
    provider = CachedChatProvider(inner, cache, clock=lambda: "T")
    provider.complete("p", CompletionParams(temperature=0.0))
    provider.complete("p", CompletionParams(temperature=0.5))
    assert len(inner.transcript) == 2
