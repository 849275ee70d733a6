import threading

from hypothesis import given
from hypothesis import strategies as st

from fluxtorus.parallel import default_threads, parallel_map


@given(st.lists(st.integers(), max_size=30), st.integers(1, 5))
def test_order_preserved(xs, n):
    assert parallel_map(lambda x: x * x, xs, n) == [x * x for x in xs]


def test_uses_worker_threads():
    seen = set()

    def f(x):
        seen.add(threading.get_ident())
        return x

    parallel_map(f, range(8), 1)
    assert seen == {threading.get_ident()}


def test_env_default(monkeypatch):
    monkeypatch.setenv("FLUXTORUS_THREADS", "3")
    assert default_threads() == 3
    monkeypatch.setenv("FLUXTORUS_THREADS", "junk")
    assert default_threads() == 1
    monkeypatch.delenv("FLUXTORUS_THREADS")
    assert default_threads() == 1
