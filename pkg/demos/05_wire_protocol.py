#!/usr/bin/env python3
"""Drive a session through the HTTP wire protocol against a local stub.

The stub plays the role of the external LLM service: it receives the JSON
wire request (window tokens, context, knowledge, mode flags) and answers
with a translation and a cutoff in milliseconds. Here the stub simply
parrots an uppercase join of the window, committing at the last token end,
so the plumbing is observable end to end: request -> reply -> validation ->
memory/emission updates.
"""

import json
import sys
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

sys.path.insert(0, "demos")

from demo_data import lecture_sample

from sistream.agent import SessionConfig, run_session
from sistream.backends import EndpointConfig, LlmBackend


class EchoTranslator(BaseHTTPRequestHandler):
    def do_POST(self):
        req = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        tokens = req["window"]["tokens"]
        # wait until at least four tokens are audible, then commit them all
        if len(tokens) < 4 and not req["is_final"]:
            reply = {"translation": "", "cutoff_ms": 0}
        elif not tokens:
            reply = {"translation": "", "cutoff_ms": 0}
        else:
            reply = {
                "translation": " ".join(t["text"].upper() for t in tokens),
                "cutoff_ms": int(tokens[-1]["end_s"] * 1000),
            }
        body = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


server = HTTPServer(("127.0.0.1", 0), EchoTranslator)
threading.Thread(target=server.serve_forever, daemon=True).start()
url = f"http://127.0.0.1:{server.server_address[1]}/translate"
print(f"stub translator listening at {url}")

backend = LlmBackend(EndpointConfig(url=url, timeout_s=5.0))
result = run_session(lecture_sample(), backend, cfg=SessionConfig(step_s=2.0))

for rec in result.memory.records:
    print(f"round {rec.round_index:2d}  cutoff {rec.cutoff_s:5.2f}s  {rec.translation}")
print()
print("final:", result.final_translation[:100], "...")
server.shutdown()
