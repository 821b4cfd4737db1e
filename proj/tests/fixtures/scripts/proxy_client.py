import json
import sys
import urllib.request

req = json.load(sys.stdin)
llm = req["llm"]
out = []
for i in range(req["n"]):
    body = json.dumps({"model": llm["model"], "messages": [
        {"role": "user", "content": "### task: generate-record %d" % i}]}).encode()
    http = urllib.request.Request(llm["base_url"] + "/chat/completions", data=body,
                                  headers={"Content-Type": "application/json",
                                           "Authorization": "Bearer " + llm["api_key"]})
    with urllib.request.urlopen(http, timeout=10) as resp:
        reply = json.load(resp)
    out.append(reply["choices"][0]["message"]["content"])
for i, text in enumerate(out):
    print(json.dumps({"index": i, "payload": {"text": text}}))
