"""Cancel a receive that is parked on an empty channel."""

import threading
import time

from lfchan import Interrupted, RendezvousChannel, ThreadRuntime

rt = ThreadRuntime()
chan = RendezvousChannel(runtime=rt)
ctx_box = {}
ready = threading.Event()


def patient_consumer():
    ctx_box["ctx"] = rt.current_context()
    ready.set()
    try:
        chan.receive()
        print("got something?!")
    except Interrupted:
        print("receive was cancelled while parked")


t = threading.Thread(target=patient_consumer)
t.start()
ready.wait()
time.sleep(0.2)     # give the receive time to park

ctx_box["ctx"].interrupt()
t.join()

# the channel stays usable: the cancelled cell is skipped
chan2_result = []
t2 = threading.Thread(target=lambda: chan2_result.append(chan.receive()))
t2.start()
chan.send("after-cancel")
t2.join()
print("next exchange still works:", chan2_result[0])
