import json
import sys

req = json.load(sys.stdin)
for i in range(req["n"]):
    print(json.dumps({"index": i, "payload": {"request": req}}))
