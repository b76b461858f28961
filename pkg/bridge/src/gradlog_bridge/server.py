"""The request loop.

Newline-delimited JSON over stdin/stdout; the engine owns the process and
sends ``{"op": "hello", "version": 1}`` first.  Gradients accumulate across
``backward`` calls and are averaged at ``step``; one Adam optimizer per
model, its learning rate taken from the step message.

Malformed requests get an ``{"error": ...}`` reply and the loop continues;
a protocol version mismatch terminates the server.
"""

from __future__ import annotations

import json
import sys

import torch

PROTOCOL_VERSION = 1


class _Served:
    def __init__(self, model: torch.nn.Module):
        self.model = model
        self.optimizer: torch.optim.Adam | None = None
        self.pending = 0

    def forward(self, inputs: list[list[float]]) -> list[float]:
        x = torch.tensor(
            [v for vec in inputs for v in vec], dtype=torch.float64
        )
        with torch.no_grad():
            dist = self.model(x)
        return dist.reshape(-1).tolist()

    def backward(self, inputs: list[list[float]], grad: list[float]):
        x = torch.tensor([v for vec in inputs for v in vec], dtype=torch.float64)
        dist = self.model(x).reshape(-1)
        dist.backward(torch.tensor(grad, dtype=torch.float64))
        self.pending += 1

    def step(self, lr: float):
        if self.optimizer is None:
            self.optimizer = torch.optim.Adam(self.model.parameters(), lr=lr)
        for group in self.optimizer.param_groups:
            group["lr"] = lr
        if self.pending:
            scale = 1.0 / self.pending
            for parameter in self.model.parameters():
                if parameter.grad is not None:
                    parameter.grad *= scale
            self.optimizer.step()
        self.optimizer.zero_grad()
        self.pending = 0


def serve(models: dict[str, torch.nn.Module], stdin=None, stdout=None):
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    served = {model_id: _Served(model) for model_id, model in models.items()}

    def reply(payload: dict):
        stdout.write(json.dumps(payload) + "\n")
        stdout.flush()

    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            reply({"error": "malformed json"})
            continue
        op = message.get("op")
        try:
            if op == "hello":
                if message.get("version") != PROTOCOL_VERSION:
                    reply({"error": f"unsupported protocol version {message.get('version')}"})
                    return
                reply({"ok": True, "version": PROTOCOL_VERSION})
            elif op == "forward":
                reply({"dist": served[message["model"]].forward(message["inputs"])})
            elif op == "backward":
                served[message["model"]].backward(message["inputs"], message["grad"])
                reply({"ok": True})
            elif op == "step":
                lr = float(message.get("lr", 0.001))
                for entry in served.values():
                    entry.step(lr)
                reply({"ok": True})
            else:
                reply({"error": f"unknown op {op!r}"})
        except KeyError as exc:
            reply({"error": f"unknown model {exc}"})
        except Exception as exc:  # answer and keep serving
            reply({"error": str(exc)})
