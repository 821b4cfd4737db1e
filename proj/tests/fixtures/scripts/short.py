import json
import sys

req = json.load(sys.stdin)
for i in range(max(0, req["n"] - 2)):
    print(json.dumps({"index": i, "payload": {"k": i}}))
