"""Scripted advisor process for the bridge tests.

Modes:
  ok       answer every recommend with ACCELERATE
  slow     sleep 0.3 s before each answer
  garbage  emit a malformed line and a stale id before the real answer
  error    reply with an error object
  mute     read requests, never answer
  crash    exit immediately
"""
import json
import sys
import time

mode = sys.argv[1] if len(sys.argv) > 1 else "ok"
if mode == "crash":
    sys.exit(3)

feedback_seen = 0
for raw in sys.stdin:
    try:
        req = json.loads(raw)
    except ValueError:
        print(json.dumps({"id": -1, "error": "malformed request"}), flush=True)
        continue
    rid = req.get("id")
    kind = req.get("kind")
    if kind == "shutdown":
        sys.exit(0)
    if mode == "mute":
        continue
    if mode == "slow":
        time.sleep(0.3)
    if mode == "garbage":
        print("{not json", flush=True)
        print(json.dumps({"id": rid - 1, "action": "DECELERATE", "confidence": 1.0}), flush=True)
    if mode == "error":
        print(json.dumps({"id": rid, "error": "model unavailable"}), flush=True)
        continue
    if kind == "feedback":
        feedback_seen += 1
        print(json.dumps({"id": rid, "ok": True, "seen": feedback_seen}), flush=True)
        continue
    print(json.dumps({"id": rid, "action": "ACCELERATE", "confidence": 0.7,
                      "rationale": "scripted", "echo_obs": req.get("obs")}), flush=True)
