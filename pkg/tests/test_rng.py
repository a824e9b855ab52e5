import numpy as np
import pytest

from devbound.rng import map_trials, resolve_threads, stream_key, substream


def test_substream_reproducible():
    a = substream(7, "demo", 3).standard_normal(5)
    b = substream(7, "demo", 3).standard_normal(5)
    assert np.array_equal(a, b)


def test_substream_tag_sensitivity():
    base = substream(7, "demo", 3).standard_normal(5)
    other_tag = substream(7, "demo", 4).standard_normal(5)
    other_seed = substream(8, "demo", 3).standard_normal(5)
    assert not np.array_equal(base, other_tag)
    assert not np.array_equal(base, other_seed)


def test_stream_key_is_order_sensitive():
    assert stream_key("a", "b") != stream_key("b", "a")
    assert stream_key("ab") != stream_key("a", "b")


def test_seed_validation():
    with pytest.raises(ValueError):
        substream(-1, "x")
    with pytest.raises(ValueError):
        substream(2**64, "x")


def test_map_trials_preserves_order():
    out = map_trials(lambda t: t * t, 50, threads=4)
    assert out == [t * t for t in range(50)]


def test_map_trials_thread_invariance():
    def job(t):
        return float(substream(3, "job", t).standard_normal())

    assert map_trials(job, 20, threads=1) == map_trials(job, 20, threads=8)


def test_resolve_threads_env(monkeypatch):
    monkeypatch.setenv("DEVBOUND_THREADS", "3")
    assert resolve_threads(None) == 3
    assert resolve_threads(5) == 5
    monkeypatch.delenv("DEVBOUND_THREADS")
    assert resolve_threads(None) >= 1
