"""Work-stealing execution of a dependency tree (children before parents).

Each worker owns a deque.  It pops its own work LIFO from the bottom and,
when empty, steals FIFO from the top of a victim's deque.  Finishing a task
decrements its parent's outstanding-children count; the worker that brings
it to zero pushes the parent onto its own deque (continuation passing), so
a parent is never scheduled before all its children are done.
"""

from __future__ import annotations

import random
import threading
from collections import deque
from typing import Callable, Hashable, Optional

from ..errors import InvalidArgument


class WorkStealingPool:
    def __init__(self, workers: int = 4):
        if workers < 1:
            raise InvalidArgument("pool needs at least one worker")
        self.workers = workers
        self.steals = 0
        self.tasks_run = 0

    def run_tree(self, parent_of: dict[Hashable, Optional[Hashable]], fn: Callable[[Hashable], None]) -> None:
        """Run ``fn`` on every key of ``parent_of`` in child-before-parent order."""
        if not parent_of:
            return
        remaining: dict = {k: 0 for k in parent_of}
        for k, p in parent_of.items():
            if p is not None:
                remaining[p] += 1
        ready = sorted((k for k, n in remaining.items() if n == 0), key=repr)
        deques = [deque() for _ in range(self.workers)]
        for i, k in enumerate(ready):
            deques[i % self.workers].append(k)
        lock = threading.Lock()
        total = len(parent_of)
        state = {"done": 0, "error": None}
        wake = threading.Condition(lock)

        def take(me: int, rng: random.Random):
            own = deques[me]
            try:
                return own.pop()
            except IndexError:
                pass
            order = list(range(self.workers))
            rng.shuffle(order)
            for victim in order:
                if victim == me:
                    continue
                try:
                    task = deques[victim].popleft()
                except IndexError:
                    continue
                with lock:
                    self.steals += 1
                return task
            return None

        def worker(me: int) -> None:
            rng = random.Random(me)
            while True:
                with lock:
                    if state["done"] == total or state["error"] is not None:
                        return
                task = take(me, rng)
                if task is None:
                    with wake:
                        if state["done"] == total or state["error"] is not None:
                            return
                        wake.wait(0.005)
                    continue
                try:
                    fn(task)
                except BaseException as exc:
                    with wake:
                        state["error"] = exc
                        wake.notify_all()
                    return
                parent = parent_of[task]
                with wake:
                    state["done"] += 1
                    self.tasks_run += 1
                    push = False
                    if parent is not None:
                        remaining[parent] -= 1
                        push = remaining[parent] == 0
                    if push:
                        deques[me].append(parent)
                    wake.notify_all()

        threads = [threading.Thread(target=worker, args=(i,), name=f"commit-{i}") for i in range(self.workers)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if state["error"] is not None:
            raise state["error"]
