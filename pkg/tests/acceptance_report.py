"""Collects per-criterion outcomes of the acceptance suite for the terminal summary."""

import functools

TITLES = {
    1: "plan solver matches exhaustive search",
    2: "plan solver at n=512, k=16 under 1 s",
    3: "commitment algebra",
    4: "live differential correctness",
    5: "archive time travel",
    6: "delta invariants and byte model",
    7: "write amplification",
    8: "live storage reduction",
    9: "archive size ordering",
    10: "durability",
    11: "determinism under parallelism",
}

RESULTS: dict[int, list[tuple[str, bool, str]]] = {}


def criterion(number: int, part: str):
    """Record the decorated test's outcome under ``number``; the test itself is unchanged."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                RESULTS.setdefault(number, []).append((part, False, f"{type(exc).__name__}: {exc}".splitlines()[0]))
                raise
            RESULTS.setdefault(number, []).append((part, True, detail or ""))

        return run

    return wrap


def summary_lines() -> list[str]:
    lines = []
    for number in sorted(RESULTS):
        parts = RESULTS[number]
        ok = all(p[1] for p in parts)
        notes = "; ".join(f"{name}: {'ok' if good else 'FAILED'}{' (' + d + ')' if d else ''}"
                          for name, good, d in parts)
        lines.append(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {TITLES[number]}  [{notes}]")
    return lines
