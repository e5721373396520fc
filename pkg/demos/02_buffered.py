"""A small bounded pipeline: the producer runs ahead by the capacity."""

import threading
import time

from lfchan import BufferedChannel

chan = BufferedChannel(capacity=3)
log = []


def producer():
    for i in range(8):
        chan.send(i)
        log.append(f"sent {i}")


t = threading.Thread(target=producer)
t.start()
time.sleep(0.2)     # let the producer fill the buffer and suspend
print(f"producer completed {len(log)} sends, then suspended on the next")

total = 0
for _ in range(8):
    total += chan.receive()
t.join()
print("received all, sum =", total)
print("balance at rest:", chan.quiescent_balance())
