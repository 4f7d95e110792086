import heapq
import itertools


class EventQueue:
    """Time-ordered event heap; equal times run in insertion order."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0.0
        self.processed = 0

    def __len__(self):
        return len(self._heap)

    def schedule(self, time, fn, *args):
        if time < self.now:
            raise ValueError(f"cannot schedule at {time} before now={self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), fn, args))

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def run(self, until):
        """Process events with time <= ``until``; the clock ends at ``until``."""
        heap = self._heap
        pop = heapq.heappop
        n = 0
        while heap and heap[0][0] <= until:
            time, _, fn, args = pop(heap)
            self.now = time
            fn(*args)
            n += 1
        self.processed += n
        self.now = max(self.now, until)
        return n
