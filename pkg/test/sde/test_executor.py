import numpy as np
import pytest

from hblab.exceptions import InternalException, UserException
from hblab.executor import CHUNK_SIZE, ChunkExecutor, chunk_rng, chunk_sizes
from hblab.util import resolve_threads


def test_chunk_sizes():
    """Checks that paths are split in fixed-size chunks with a short last chunk"""
    assert chunk_sizes(10000) == [CHUNK_SIZE, CHUNK_SIZE, 10000 - 2 * CHUNK_SIZE]
    assert chunk_sizes(CHUNK_SIZE) == [CHUNK_SIZE]
    assert chunk_sizes(7, 3) == [3, 3, 1]


def test_chunk_streams():
    """Checks that chunk streams are a function of (seed, chunk index) only"""
    assert np.array_equal(chunk_rng(5, 2).random(4), chunk_rng(5, 2).random(4))
    assert not np.array_equal(chunk_rng(5, 2).random(4), chunk_rng(5, 3).random(4))
    assert not np.array_equal(chunk_rng(5, 2).random(4), chunk_rng(6, 2).random(4))


def test_results_come_back_in_chunk_order():
    """Checks that a pooled map returns one result per chunk in chunk order"""

    def task(n, rng, index):
        return index, n

    results = ChunkExecutor(0, threads=4, chunk_size=10).map(task, 95)
    assert results == [(i, 10) for i in range(9)] + [(9, 5)]


class _ChunkFailure(UserException):
    pass


def test_failing_chunk_stops_the_run():
    """Checks that the exception of a failing chunk is re-raised by map"""

    def task(n, rng, index):
        if index == 3:
            raise _ChunkFailure(f"chunk {index} failed")
        return n

    with pytest.raises(_ChunkFailure):
        ChunkExecutor(0, threads=2, chunk_size=10).map(task, 100)


def test_negative_seed():
    """Checks that negative seeds are refused"""
    with pytest.raises(InternalException):
        ChunkExecutor(-1)


def test_resolve_threads(monkeypatch):
    """Checks the thread count resolution order and the HBL_THREADS cap"""
    assert resolve_threads(3) == 3
    monkeypatch.setattr("hblab.globals.threads", 2)
    assert resolve_threads() == 2
    monkeypatch.setenv("HBL_THREADS", "1")
    assert resolve_threads(8) == 1
    monkeypatch.setenv("HBL_THREADS", "many")
    with pytest.raises(UserException):
        resolve_threads()
