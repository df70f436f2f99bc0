"""
Ward statistics: master aggregation versus peer exchange
========================================================

Twelve patients split across two fog loops, three of them febrile. The ward
fever rate is computed once by a cloud master and once by the loops
exchanging reports among themselves.
"""

from careloop.reference import build, ward_scenario
from careloop.simulation import run

central = run(build(ward_scenario("centralized")))
peers = run(build(ward_scenario("decentralized")))

for rep in (central, peers):
    print(rep.name)
    for row in rep.aggregate_values():
        print("   ", row)

print("agree:", central.aggregate_values() == peers.aggregate_values())

###############################################################################
# The traffic pattern differs: reports to a master versus a full mesh.

for rep in (central, peers):
    print(rep.name, rep.metrics["link_messages"])
