from concurrent import futures
from typing import Callable, Dict, List, Optional

from loguru import logger
from numpy.random import Generator, Philox, SeedSequence

from .exceptions import HblException, InternalException
from .util import resolve_threads

CHUNK_SIZE = 4096


def chunk_rng(seed: int, chunk_index: int) -> Generator:
    """Counter-based random stream of a path chunk, a pure function of (seed, chunk index)"""
    return Generator(Philox(SeedSequence(seed, spawn_key=(chunk_index,))))


def chunk_sizes(n: int, chunk_size: int = CHUNK_SIZE) -> List[int]:
    full, rest = divmod(n, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


class ChunkExecutor:
    """Runs a task over fixed-size chunks of Monte Carlo paths on a thread pool.

    `task(n, rng, chunk_index)` must simulate `n` paths drawing randomness only from `rng`.
    Chunks are sized independently of the number of threads and results are returned in chunk order,
    so the output is the same for any thread count.
    """

    def __init__(self, seed: int, threads: Optional[int] = None, chunk_size: int = CHUNK_SIZE):
        if seed < 0:
            raise InternalException(f"Seeds must be non-negative, got {seed}")
        self.seed = int(seed)
        self.threads = resolve_threads(threads)
        self.chunk_size = chunk_size
        self._stop_the_world = False

    def map(self, task: Callable, n: int) -> List:
        sizes = chunk_sizes(n, self.chunk_size)
        logger.debug(f"Running {n} paths in {len(sizes)} chunk(s) on {self.threads} thread(s)")

        if self.threads == 1 or len(sizes) == 1:
            return [task(size, chunk_rng(self.seed, i), i) for i, size in enumerate(sizes)]

        self._stop_the_world = False
        results: Dict[int, object] = {}
        failure = None
        with futures.ThreadPoolExecutor(max_workers=self.threads, thread_name_prefix="Chunk") as pool:
            queued = {pool.submit(self._run_chunk, task, size, i): i for i, size in enumerate(sizes)}
            try:
                while queued:
                    done, _ = futures.wait(queued, return_when=futures.FIRST_COMPLETED)
                    for completed in done:
                        index = queued.pop(completed)
                        try:
                            exception = completed.exception()
                        except futures.CancelledError:
                            continue

                        if exception is not None:
                            for future in queued:
                                future.cancel()
                            if failure is None:
                                failure = exception
                            if not isinstance(exception, HblException):
                                logger.error(f"An unexpected exception occurred while running chunk {index}")
                        else:
                            results[index] = completed.result()
            except KeyboardInterrupt:
                self._stop_the_world = True
                for future in queued:
                    future.cancel()
                raise

        if failure is not None:
            raise failure

        return [results[i] for i in range(len(sizes))]

    def _run_chunk(self, task, size, index):
        if self._stop_the_world:
            return None
        try:
            return task(size, chunk_rng(self.seed, index), index)
        except Exception:
            self._stop_the_world = True
            raise