import sys
import threading

sys.path.insert(0, "src")

from lfchan.coop import CoopRuntime
from lfchan.metrics import ChannelMetrics
from lfchan.rendezvous import RendezvousChannel
from lfchan.runtime import Interrupted, ThreadRuntime
from lfchan.segments import TRANSIENT_STATES

# -- thread backend: simple handoff ------------------------------------------
ch = RendezvousChannel(segment_size=2)
got = []
t = threading.Thread(target=lambda: [got.append(ch.receive()) for _ in range(5)], daemon=True)
t.start()
for i in range(5):
    ch.send(i)
t.join(5)
assert got == [0, 1, 2, 3, 4], got
print("thread handoff ok", ch.inspect()["anchor_ids"])

# -- thread backend: interrupt a parked send ---------------------------------
ch2 = RendezvousChannel(segment_size=2)
holder = {}
def sender():
    try:
        ch2.send(99)
        holder["out"] = "sent"
    except Interrupted:
        holder["out"] = "interrupted"
    holder["ctx"] = None
def run_sender():
    holder["ctx"] = ch2.runtime.current_context()
    sender()
t2 = threading.Thread(target=run_sender, daemon=True)
t2.start()
import time
time.sleep(0.2)
holder["ctx"].interrupt()
t2.join(5)
assert holder["out"] == "interrupted", holder
insp = ch2.inspect()
assert insp["segments"][0]["cells"][0][0] == "interrupted_send", insp
assert insp["segments"][0]["interrupted"] == 1
# receive must now skip the dead cell and pair with a fresh send
t3 = threading.Thread(target=lambda: ch2.send(7), daemon=True)
t3.start()
assert ch2.receive() == 7
t3.join(5)
print("thread interrupt ok", ch2.inspect())

# -- coop backend: deterministic run ------------------------------------------
events = []
rt = CoopRuntime(strict_spin=TRANSIENT_STATES, sink=events.append)
m = ChannelMetrics()
ch3 = RendezvousChannel(runtime=rt, segment_size=1, metrics=m)
out = []
def p():
    for i in range(4):
        ch3.send(i)
def c():
    for _ in range(4):
        out.append(ch3.receive())
rt.spawn(p, "p")
rt.spawn(c, "c")
res = rt.run()
assert res == "done", res
assert out == [0, 1, 2, 3], out
print("coop fifo ok; steps =", rt.step_count, "metrics =", m.snapshot())
kinds = [e[1] for e in events]
print("event kinds:", {k: kinds.count(k) for k in sorted(set(kinds))})

# -- coop: interrupt a parked receive, then traffic proceeds -------------------
rt2 = CoopRuntime(strict_spin=TRANSIENT_STATES)
ch4 = RendezvousChannel(runtime=rt2, segment_size=1)
log = []
def r1():
    try:
        ch4.receive()
        log.append("r1 got")
    except Interrupted:
        log.append("r1 interrupted")
victim = rt2.spawn(r1, "r1")
def killer():
    victim.interrupt()
rt2.spawn(killer, "k")
def pair():
    ch4.send(5)
def taker():
    log.append(("r2", ch4.receive()))
rt2.spawn(pair, "s")
rt2.spawn(taker, "r2")
res2 = rt2.run()
assert res2 == "done", (res2, rt2.statuses(), log)
assert "r1 interrupted" in log and ("r2", 5) in log, log
insp4 = ch4.inspect()
print("coop interrupt ok", res2, log, insp4["anchor_ids"], [g["id"] for g in insp4["segments"]])
print("ALL SMOKE OK")
