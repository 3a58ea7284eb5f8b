"""Pass/fail registry for the acceptance suite, printed at session end."""

import functools
import time

RESULTS: dict[int, tuple[str, bool, str]] = {}


def criterion(number: int, title: str):
    """Record the outcome of an acceptance test under ``number``."""

    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            t0 = time.perf_counter()
            try:
                detail = fn(*args, **kwargs)
            except BaseException as exc:
                msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
                RESULTS[number] = (title, False, f"{msg} [{time.perf_counter() - t0:.1f}s]")
                raise
            RESULTS[number] = (title, True, f"{detail or ''} [{time.perf_counter() - t0:.1f}s]".strip())

        return run

    return wrap
