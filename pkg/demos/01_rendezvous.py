"""Direct handoff between two threads: every send waits for its receive."""

import threading

from lfchan import RendezvousChannel

chan = RendezvousChannel()


def consumer():
    for _ in range(5):
        print("got", chan.receive())


t = threading.Thread(target=consumer)
t.start()
for i in range(5):
    chan.send(f"item-{i}")
t.join()
print("all handed off; counters:", chan.counters())
