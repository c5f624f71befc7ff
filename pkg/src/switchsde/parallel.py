"""Worker-count-independent block parallelism.

Monte Carlo drivers split trajectories into fixed-size blocks and reduce
block results in block order.  Block boundaries depend only on the path
count, never on the worker count, so outputs are byte-identical whether
the blocks run inline or on a process pool.
"""

from concurrent.futures import ProcessPoolExecutor

#: trajectories per block; fixed so reduction order never changes
BLOCK_PATHS = 512


def map_blocks(worker, payloads, workers=1):
    """Apply ``worker`` to each payload, preserving payload order.

    ``workers <= 1`` runs inline; otherwise a process pool is used and
    results are still yielded in submission order.
    """
    if workers is None or workers <= 1 or len(payloads) <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=min(workers, len(payloads))) as pool:
        return list(pool.map(worker, payloads))
