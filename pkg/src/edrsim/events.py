from __future__ import annotations

import heapq
import itertools
from enum import IntEnum


class EventKind(IntEnum):
    ARRIVAL = 0          # query reaches its gateway; ticks the epoch counter
    INGRESS = 1          # query reaches the ingress EDR after the gateway hop
    SERVICE_END = 2      # a work item (hash, process, reuse fetch) finishes
    FORWARDED = 3        # query reaches the EDR its forwarding table points at
    RESULT_RETURNED = 4  # result is back at the user's gateway
    TABLE_UPDATE = 5     # orchestration plan lands in every forwarding table
    TRANSFER_DONE = 6    # a moved bucket arrives at its destination
    DEFERRED_INSERT = 7  # processed result whose bucket is no longer local
    BIN_TICK = 8         # end of a 1 s metrics bin


class PastEventError(RuntimeError):
    pass


class EventQueue:
    """Min-heap ordered by (time, sequence). Sequence numbers are handed out at
    scheduling time, so equal-time events fire in scheduling order."""

    def __init__(self):
        self._heap = []
        self._seq = itertools.count()
        self.now = 0.0

    def schedule(self, time: float, kind: EventKind, payload=None):
        if time < self.now:
            raise PastEventError(f"event {kind.name} at {time} scheduled before now={self.now}")
        heapq.heappush(self._heap, (time, next(self._seq), kind, payload))

    def extend(self, events):
        for time, kind, payload in events:
            self.schedule(time, kind, payload)

    def pop(self):
        time, seq, kind, payload = heapq.heappop(self._heap)
        self.now = time
        return time, seq, kind, payload

    def peek_time(self):
        return self._heap[0][0] if self._heap else None

    def __len__(self):
        return len(self._heap)
