"""
Fever ramp: fog loop versus cloud-hosted analysis
==================================================

A patient's temperature climbs from 37 to 39.5 degrees over ten minutes.
We run the same scenario twice, once with analysis on the fog node and once
offloaded to the cloud analysis service, and compare what was decided and
how long it took.
"""

from careloop.reference import build, fever_scenario
from careloop.simulation import run

fog = run(build(fever_scenario("fog")))
cloud = run(build(fever_scenario("apaas")))

###############################################################################
# The first predicted and current fever insights arrive at the same instants
# in both placements.

for rep in (fog, cloud):
    first = {}
    for ins in rep.insights:
        first.setdefault(ins["horizon"], ins["detected_at"])
    print(rep.name, first)

print("same insights:", fog.insight_sequence() == cloud.insight_sequence())
print("same actions: ", fog.action_sequence() == cloud.action_sequence())

###############################################################################
# Decisions differ only in latency: the cloud round trip adds 2 x 50 ms.

print("fog mean latency  ", fog.mean_latency(), "ms")
print("cloud mean latency", cloud.mean_latency(), "ms")

###############################################################################
# Who heard about it, and at what level of detail.

for n in fog.notifications[-2:]:
    print(n["party"], "v%d" % n["version"], n["detail"], n["payload"])
