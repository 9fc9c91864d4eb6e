"""Evaluate every expression up to a limit in batches; print counts as JSON.

Run as a script so the memory of a limit-7 pass is returned to the OS when
it exits (the acceptance suite calls it in a child process).
"""

import json
import sys
import time

import numpy as np

from symatlas.enumerator import stream_expressions
from symatlas.evaluator import evaluate_many


def scan(limit: int, batch_size: int = 50_000) -> dict:
    t0 = time.perf_counter()
    rows = nonfinite = degenerate = 0
    batch = []

    def flush():
        nonlocal rows, nonfinite, degenerate
        values, flags = evaluate_many(batch)
        rows += len(batch)
        nonfinite += int(np.count_nonzero(~np.isfinite(values)))
        degenerate += int(flags.sum())
        batch.clear()

    for _, tree in stream_expressions(limit):
        batch.append(tree)
        if len(batch) == batch_size:
            flush()
    if batch:
        flush()
    return {"rows": rows, "nonfinite": nonfinite, "degenerate": degenerate,
            "seconds": time.perf_counter() - t0}


if __name__ == "__main__":
    print(json.dumps(scan(int(sys.argv[1]))))
