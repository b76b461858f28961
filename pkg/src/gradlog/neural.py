"""Neural predicate runtime.

Holds the models referenced by ``nn(...)`` declarations, encodes ground input
terms into numeric vectors, memoizes forward passes between optimizer steps,
and routes gradient vectors back into the models.

Three model kinds: a built-in softmax MLP with manual backprop, a fixed
lookup table (for tests and worked examples), and a client for an external
model server speaking newline-delimited JSON over stdio.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import threading
from dataclasses import dataclass

import numpy as np

from .errors import BridgeError, EncodingError, UnknownModelError
from .terms import Constant, Term

PROTOCOL_VERSION = 1
DIST_TOLERANCE = 1e-9


# --- input encoding -------------------------------------------------------------


@dataclass(frozen=True)
class OneHot:
    """Small integers encoded as basis vectors."""

    size: int

    def encode(self, term: Term, vectors) -> np.ndarray:
        if not isinstance(term, Constant) or not isinstance(term.value, int):
            raise EncodingError(f"one-hot encoder expects a small integer, got {term}")
        if not 0 <= term.value < self.size:
            raise EncodingError(
                f"integer {term.value} outside one-hot range [0,{self.size})"
            )
        out = np.zeros(self.size)
        out[term.value] = 1.0
        return out


@dataclass(frozen=True)
class VectorLookup:
    """Constants resolved against the run's vector store."""

    size: int

    def encode(self, term: Term, vectors) -> np.ndarray:
        if not isinstance(term, Constant) or not isinstance(term.value, str):
            raise EncodingError(f"vector encoder expects a symbol, got {term}")
        vec = vectors.get(term.value)
        if vec is None:
            raise EncodingError(f"no vector stored for symbol {term.value}")
        if len(vec) != self.size:
            raise EncodingError(
                f"vector for {term.value} has dimension {len(vec)}, expected {self.size}"
            )
        return np.asarray(vec, dtype=np.float64)


def encoder_from_config(cfg: dict):
    kind = cfg.get("kind")
    if kind == "onehot":
        return OneHot(int(cfg["size"]))
    if kind == "vector":
        return VectorLookup(int(cfg["size"]))
    raise EncodingError(f"unknown encoder kind {kind!r}")


# --- optimizers ----------------------------------------------------------------


class Sgd:
    name = "sgd"

    def __init__(self, lr: float):
        self.lr = lr

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]):
        for p, g in zip(params, grads):
            p -= self.lr * g


class Adam:
    name = "adam"

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[np.ndarray] | None = None
        self.v: list[np.ndarray] | None = None

    def update(self, params: list[np.ndarray], grads: list[np.ndarray]):
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1**self.t
        correction2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def make_optimizer(kind: str, lr: float):
    if kind == "sgd":
        return Sgd(lr)
    if kind == "adam":
        return Adam(lr)
    raise UnknownModelError(f"unknown optimizer {kind!r}")


# --- models ---------------------------------------------------------------------


class MlpModel:
    """Fully connected layers with tanh hidden activations and a softmax head.

    Weight init is uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) from a seeded
    generator; ``init='zeros'`` gives the all-uniform output useful as a
    sanity anchor.
    """

    kind = "mlp"

    def __init__(self, input_size: int, hidden: list[int], outputs: int, seed: int = 0, init: str = "uniform"):
        self.input_size = input_size
        self.hidden = list(hidden)
        self.outputs = outputs
        self.seed = seed
        rng = np.random.default_rng(seed)
        sizes = [input_size, *hidden, outputs]
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            if init == "zeros":
                w = np.zeros((fan_out, fan_in))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out))
        self._zero_accumulators()

    def _zero_accumulators(self):
        self.grad_weights = [np.zeros_like(w) for w in self.weights]
        self.grad_biases = [np.zeros_like(b) for b in self.biases]
        self.grad_count = 0

    @property
    def domain_size(self) -> int:
        return self.outputs

    @property
    def n_parameters(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def forward(self, x: np.ndarray):
        activations = [x]
        for layer, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = w @ activations[-1] + b
            if layer < len(self.weights) - 1:
                activations.append(np.tanh(z))
            else:
                z = z - z.max()  # stabilized softmax
                e = np.exp(z)
                activations.append(e / e.sum())
        return activations[-1], activations

    def backward(self, activations, grad_dist: np.ndarray):
        """Accumulate parameter gradients; dL/dlogits via the softmax Jacobian."""
        m = activations[-1]
        delta = m * (grad_dist - float(grad_dist @ m))
        for layer in range(len(self.weights) - 1, -1, -1):
            a_prev = activations[layer]
            self.grad_weights[layer] += np.outer(delta, a_prev)
            self.grad_biases[layer] += delta
            if layer > 0:
                upstream = self.weights[layer].T @ delta
                delta = upstream * (1.0 - a_prev * a_prev)
        self.grad_count += 1

    def apply_step(self, optimizer, scale: float):
        params = self.weights + self.biases
        grads = [g * scale for g in self.grad_weights + self.grad_biases]
        optimizer.update(params, grads)
        self._zero_accumulators()

    def to_config(self) -> dict:
        return {
            "type": "mlp",
            "input_size": self.input_size,
            "hidden": self.hidden,
            "outputs": self.outputs,
            "seed": self.seed,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_config(cls, cfg: dict) -> "MlpModel":
        model = cls(
            int(cfg["input_size"]),
            [int(h) for h in cfg.get("hidden", [])],
            int(cfg["outputs"]),
            seed=int(cfg.get("seed", 0)),
            init=cfg.get("init", "uniform"),
        )
        if "weights" in cfg:
            model.weights = [np.array(w, dtype=np.float64) for w in cfg["weights"]]
            model.biases = [np.array(b, dtype=np.float64) for b in cfg["biases"]]
            model._zero_accumulators()
        return model


class TableModel:
    """Fixed distributions keyed by the textual form of the input terms."""

    kind = "table"

    def __init__(self, entries: dict[str, list[float]], outputs: int | None = None):
        self.entries = {k: np.asarray(v, dtype=np.float64) for k, v in entries.items()}
        self.outputs = outputs or (len(next(iter(self.entries.values()))) if self.entries else 0)

    @property
    def domain_size(self) -> int:
        return self.outputs

    def lookup(self, key: str) -> np.ndarray:
        if key not in self.entries:
            raise UnknownModelError(f"table model has no entry for inputs {key!r}")
        return self.entries[key]

    def to_config(self) -> dict:
        return {
            "type": "table",
            "outputs": self.outputs,
            "entries": {k: v.tolist() for k, v in self.entries.items()},
        }


# --- bridge client ----------------------------------------------------------------


class BridgeClient:
    """Talks the stdio wire protocol to an external model server.

    One in-flight request at a time; the child's lifetime is owned here.
    """

    def __init__(self, command: str):
        self.command = command
        try:
            self.process = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise BridgeError(f"cannot start bridge process: {exc}") from exc
        self._lock = threading.Lock()
        reply = self.call({"op": "hello", "version": PROTOCOL_VERSION})
        if reply.get("version") != PROTOCOL_VERSION or not reply.get("ok"):
            self.close()
            raise BridgeError(f"bridge handshake failed: {reply}")

    def call(self, message: dict) -> dict:
        with self._lock:
            if self.process.poll() is not None:
                raise BridgeError("bridge process exited")
            try:
                self.process.stdin.write(json.dumps(message) + "\n")
                self.process.stdin.flush()
                line = self.process.stdout.readline()
            except (BrokenPipeError, OSError) as exc:
                raise BridgeError(f"bridge transport failure: {exc}") from exc
        if not line:
            raise BridgeError("bridge closed its output")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise BridgeError(f"malformed bridge response: {line!r}") from exc
        if "error" in reply:
            raise BridgeError(f"bridge error: {reply['error']}")
        return reply

    def close(self):
        if self.process.poll() is None:
            try:
                self.process.stdin.close()
            except OSError:
                pass
            self.process.terminate()
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.process.kill()


class BridgedModel:
    """A model served by an external process."""

    kind = "bridge"

    def __init__(self, model_id: str, client: BridgeClient, outputs: int):
        self.model_id = model_id
        self.client = client
        self.outputs = outputs

    @property
    def domain_size(self) -> int:
        return self.outputs

    def forward_encoded(self, encoded: list[np.ndarray]) -> np.ndarray:
        reply = self.client.call(
            {
                "op": "forward",
                "model": self.model_id,
                "inputs": [vec.tolist() for vec in encoded],
            }
        )
        dist = reply.get("dist")
        if dist is None or len(dist) != self.outputs:
            raise BridgeError(f"bad forward reply for {self.model_id}: {reply}")
        return np.asarray(dist, dtype=np.float64)

    def backward_encoded(self, encoded: list[np.ndarray], grad: np.ndarray):
        self.client.call(
            {
                "op": "backward",
                "model": self.model_id,
                "inputs": [vec.tolist() for vec in encoded],
                "grad": grad.tolist(),
            }
        )


# --- the runtime ------------------------------------------------------------------


@dataclass
class ModelEntry:
    model: object
    encoders: list
    optimizer: object | None = None


class NeuralRuntime:
    """Model registry with per-step forward memoization.

    ``forward`` is keyed on the ground input terms; the cache is cleared by
    ``step`` so parameter updates invalidate it.  The request log records
    cache misses, i.e. actual model evaluations.
    """

    def __init__(self, vectors: dict[str, list[float]] | None = None):
        self.entries: dict[str, ModelEntry] = {}
        self.vectors = dict(vectors or {})
        self.request_log: list[tuple[str, tuple[Term, ...]]] = []
        self.store = None  # optional ParameterStore, used by argmax decoding
        self._cache: dict = {}
        self._lock = threading.Lock()

    def register(self, model_id: str, model, encoders: list, optimizer=None):
        self.entries[model_id] = ModelEntry(model, encoders, optimizer)

    def entry(self, model_id: str) -> ModelEntry:
        entry = self.entries.get(model_id)
        if entry is None:
            raise UnknownModelError(f"no model registered for {model_id}")
        return entry

    def encode(self, model_id: str, inputs: tuple[Term, ...]) -> list[np.ndarray]:
        entry = self.entry(model_id)
        if len(entry.encoders) != len(inputs):
            raise EncodingError(
                f"{model_id} expects {len(entry.encoders)} inputs, got {len(inputs)}"
            )
        return [
            enc.encode(term, self.vectors) for enc, term in zip(entry.encoders, inputs)
        ]

    def forward(self, model_id: str, inputs: tuple[Term, ...]) -> tuple[float, ...]:
        key = (model_id, tuple(inputs))
        with self._lock:
            cached = self._cache.get(key)
        if cached is not None:
            return cached[0]
        entry = self.entry(model_id)
        model = entry.model
        if isinstance(model, TableModel):
            dist = model.lookup(_table_key(inputs))
            state = None
        elif isinstance(model, MlpModel):
            encoded = self.encode(model_id, inputs)
            x = np.concatenate(encoded) if len(encoded) > 1 else encoded[0]
            dist, activations = model.forward(x)
            state = activations
        else:
            encoded = self.encode(model_id, inputs)
            dist = model.forward_encoded(encoded)
            state = encoded
        total = float(dist.sum())
        if not (dist >= 0).all() or abs(total - 1.0) > DIST_TOLERANCE:
            raise EncodingError(
                f"{model_id} produced an unnormalized distribution (sum {total})"
            )
        result = tuple(float(v) for v in dist)
        with self._lock:
            self._cache[key] = (result, state)
            self.request_log.append((model_id, tuple(inputs)))
        return result

    def backward(self, model_id: str, inputs: tuple[Term, ...], grad_dist: np.ndarray):
        key = (model_id, tuple(inputs))
        with self._lock:
            cached = self._cache.get(key)
        if cached is None:
            raise UnknownModelError(
                f"backward for {model_id} without a cached forward pass"
            )
        model = self.entry(model_id).model
        if isinstance(model, TableModel):
            return  # fixed distributions have no parameters
        if isinstance(model, MlpModel):
            model.backward(cached[1], np.asarray(grad_dist, dtype=np.float64))
        else:
            model.backward_encoded(cached[1], np.asarray(grad_dist, dtype=np.float64))

    def step(self, lr_by_model: dict[str, float] | None = None, scale: float = 1.0, default_lr: float = 0.001):
        """Apply one optimizer step per trainable model and invalidate caches."""
        for model_id, entry in self.entries.items():
            model = entry.model
            if isinstance(model, MlpModel):
                if entry.optimizer is None:
                    lr = (lr_by_model or {}).get(model_id, default_lr)
                    entry.optimizer = Adam(lr)
                model.apply_step(entry.optimizer, scale)
            elif isinstance(model, BridgedModel):
                lr = (lr_by_model or {}).get(model_id, default_lr)
                model.client.call({"op": "step", "lr": lr})
        self.clear_cache()

    def clear_cache(self):
        with self._lock:
            self._cache.clear()


def _table_key(inputs: tuple[Term, ...]) -> str:
    return ",".join(str(t) for t in inputs)


# --- configuration loading -----------------------------------------------------------


def runtime_from_config(
    config: dict,
    vectors: dict[str, list[float]] | None = None,
    bridge_command: str | None = None,
) -> NeuralRuntime:
    """Build a runtime from a models.json-style mapping."""
    runtime = NeuralRuntime(vectors)
    client: BridgeClient | None = None
    for model_id, cfg in config.items():
        kind = cfg.get("type")
        encoders = [encoder_from_config(e) for e in cfg.get("inputs", [])]
        if kind == "mlp":
            input_size = sum(e.size for e in encoders)
            cfg = dict(cfg)
            cfg.setdefault("input_size", input_size)
            model = MlpModel.from_config(cfg)
            optimizer = None
            if "optimizer" in cfg or "lr" in cfg:
                optimizer = make_optimizer(
                    cfg.get("optimizer", "adam"), float(cfg.get("lr", 0.001))
                )
            runtime.register(model_id, model, encoders, optimizer)
        elif kind == "table":
            runtime.register(model_id, TableModel(cfg["entries"], cfg.get("outputs")), encoders)
        elif kind == "bridge":
            if bridge_command is None:
                raise BridgeError(
                    f"model {model_id} is served over the bridge; pass --bridge"
                )
            if client is None:
                client = BridgeClient(bridge_command)
            runtime.register(
                model_id,
                BridgedModel(model_id, client, int(cfg["outputs"])),
                encoders,
            )
        else:
            raise UnknownModelError(f"unknown model type {kind!r} for {model_id}")
    return runtime


# --- reference stdio server -----------------------------------------------------------


def serve_stdio(models: dict[str, MlpModel], stdin=None, stdout=None, lr_default: float = 0.001):
    """Serve built-in models over the wire protocol.

    A minimal in-package server used by the conformance tests; the external
    reference server mirrors this loop.
    """
    import sys

    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    optimizers: dict[str, Adam] = {}
    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        try:
            message = json.loads(line)
        except json.JSONDecodeError:
            stdout.write(json.dumps({"error": "malformed json"}) + "\n")
            stdout.flush()
            continue
        op = message.get("op")
        try:
            if op == "hello":
                if message.get("version") != PROTOCOL_VERSION:
                    stdout.write(json.dumps({"error": "version mismatch"}) + "\n")
                    stdout.flush()
                    return
                reply = {"ok": True, "version": PROTOCOL_VERSION}
            elif op == "forward":
                model = models[message["model"]]
                x = np.concatenate([np.asarray(v, dtype=np.float64) for v in message["inputs"]])
                dist, _ = model.forward(x)
                reply = {"dist": dist.tolist()}
            elif op == "backward":
                model = models[message["model"]]
                x = np.concatenate([np.asarray(v, dtype=np.float64) for v in message["inputs"]])
                _, activations = model.forward(x)
                model.backward(activations, np.asarray(message["grad"], dtype=np.float64))
                reply = {"ok": True}
            elif op == "step":
                lr = float(message.get("lr", lr_default))
                for model_id, model in models.items():
                    opt = optimizers.setdefault(model_id, Adam(lr))
                    opt.lr = lr
                    model.apply_step(opt, 1.0 if model.grad_count == 0 else 1.0 / model.grad_count)
                reply = {"ok": True}
            else:
                reply = {"error": f"unknown op {op!r}"}
        except Exception as exc:  # keep serving after per-request failures
            reply = {"error": str(exc)}
        stdout.write(json.dumps(reply) + "\n")
        stdout.flush()
