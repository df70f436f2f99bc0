"""
Cloud ingress: forwarding raw readings versus insights
======================================================

The fog loop can relay every reading upstream, or only the insights it
derives. Counting the bytes that enter the cloud layer shows what local
analysis saves.
"""

import numpy as np

from careloop.reference import build, fever_scenario
from careloop.simulation import run

modes = ["none", "raw", "insights"]
ingress = np.array([run(build(fever_scenario("fog", m))).metrics["layer_ingress_bytes"]["cloud"]
                    for m in modes])

for mode, b in zip(modes, ingress):
    print(f"{mode:>9}: {b:6d} bytes")

###############################################################################
# Insight forwarding sends one message per newly raised insight, against one
# per reading for raw relay.

print(f"insights / raw = {ingress[2] / ingress[1]:.2%}")

###############################################################################
# Try a scenario with a chattier sensor: the raw figure scales with the
# sampling rate, the insight figure does not.

doc = fever_scenario("fog", "raw")
doc["sensors"][0]["mode"]["period_ms"] = 250
print("raw at 4 Hz:", run(build(doc)).metrics["layer_ingress_bytes"]["cloud"], "bytes")
