"""
Data-parallel fan-out over a process pool.

Results always come back in task order, and each task derives its own RNG from
its arguments, so ``jobs=1`` and ``jobs=n`` produce the same output.
"""
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, Iterator, List, Optional, Sequence, TypeVar

from tqdm import tqdm

from multidetect.core.config import settings

T = TypeVar("T")
R = TypeVar("R")


def fan_out(
    fn: Callable[[T], R],
    tasks: Sequence[T],
    jobs: int = 1,
    initializer: Optional[Callable[..., Any]] = None,
    initargs: Iterable[Any] = (),
    desc: Optional[str] = None,
    on_result: Optional[Callable[[R], None]] = None,
) -> List[R]:
    """
    Apply ``fn`` to every task, in-process when ``jobs <= 1``.

    ``initializer(*initargs)`` runs once per worker (or once in-process) and is
    the place to install large read-only state such as datasets. ``on_result``
    sees each result in task order as soon as it is available, so a caller can
    persist progress before a later task fails.
    """
    show = settings.PROGRESS and desc is not None
    if jobs <= 1 or len(tasks) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return _collect((fn(task) for task in tasks), len(tasks), desc, show, on_result)

    with ProcessPoolExecutor(
        max_workers=min(jobs, len(tasks)),
        initializer=initializer,
        initargs=tuple(initargs),
    ) as pool:
        return _collect(pool.map(fn, tasks), len(tasks), desc, show, on_result)


def _collect(
    results: Iterator[R],
    total: int,
    desc: Optional[str],
    show: bool,
    on_result: Optional[Callable[[R], None]],
) -> List[R]:
    collected = []
    for result in tqdm(results, total=total, desc=desc, disable=not show, leave=False):
        if on_result is not None:
            on_result(result)
        collected.append(result)
    return collected
