"""Victim models: a trainable GCN graph classifier and query sessions.

The built-in victim is a three-layer graph convolutional network with
self-loop-normalised propagation, per-feature max pooling over nodes, and a
linear readout with softmax. External victims are reached over a
newline-delimited JSON protocol (stdio of a spawned process or TCP):

    request:  {"id": int, "graph": <canonical graph JSON>}\n
    response: {"id": int, "scores": [float, ...]}\n  or  {"id": int, "error": "text"}\n

Every session keeps a monotone query counter; budget accounting reads it.
"""

from __future__ import annotations

import json
import logging
import select
import socket
import subprocess
import time
from dataclasses import dataclass

import numpy as np

from .data import graph_to_obj, obj_to_graph
from .graph import Graph

__all__ = [
    "CallableSession", "DivergenceError", "GCNWeights", "InProcessSession",
    "ProtocolError", "ShapeMismatch", "SimplexViolation", "SubprocessSession",
    "TcpSession", "Timeout", "TrainConfig", "VictimResponse", "VictimSession",
    "accuracy", "gcn_forward", "load_weights", "save_weights", "serve_stream",
    "serve_tcp", "train_gcn", "validate_scores",
]

log = logging.getLogger(__name__)

HIDDEN_DIM = 16


class ShapeMismatch(ValueError):
    pass


class DivergenceError(RuntimeError):
    pass


class ProtocolError(RuntimeError):
    pass


class Timeout(ProtocolError):
    pass


class SimplexViolation(ValueError):
    pass


@dataclass
class VictimResponse:
    class_scores: np.ndarray

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.class_scores))


DEGREE_CAP = 10  # degree one-hot channels cover 0..DEGREE_CAP, larger clipped


@dataclass
class GCNWeights:
    theta1: np.ndarray          # input_dim x HIDDEN
    theta2: np.ndarray          # HIDDEN x HIDDEN
    theta3: np.ndarray          # HIDDEN x HIDDEN
    bias1: np.ndarray           # HIDDEN
    bias2: np.ndarray           # HIDDEN
    bias3: np.ndarray           # HIDDEN
    readout_w: np.ndarray       # HIDDEN x C
    readout_b: np.ndarray       # C
    data_dim: int               # label-value count (discrete) or feature length
    num_classes: int
    discrete_input: bool

    @property
    def input_dim(self) -> int:
        return self.data_dim + DEGREE_CAP + 1


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max()
    e = np.exp(z)
    return e / e.sum()


def encode_features(g: Graph, data_dim: int, discrete: bool) -> np.ndarray:
    """Node input matrix: node data channels plus a one-hot (capped) degree block.

    Degree channels give the network structural input even when every node
    carries the same label, without which the convolution stack cannot tell
    densities apart.
    """
    n = g.num_nodes
    if discrete:
        if g.node_labels is None:
            raise ShapeMismatch("victim expects discrete node labels")
        if any(l < 0 or l >= data_dim for l in g.node_labels):
            raise ShapeMismatch(f"node label outside [0, {data_dim})")
        data = np.zeros((n, data_dim))
        data[np.arange(n), list(g.node_labels)] = 1.0
    else:
        if g.node_features is None:
            raise ShapeMismatch("victim expects continuous node features")
        data = np.asarray(g.node_features, dtype=float)
        if data.shape[1] != data_dim:
            raise ShapeMismatch(f"feature dim {data.shape[1]} != expected {data_dim}")
    degree = np.minimum(g.degrees(), DEGREE_CAP)
    deg_block = np.zeros((n, DEGREE_CAP + 1))
    deg_block[np.arange(n), degree] = 1.0
    return np.concatenate([data, deg_block], axis=1)


def propagation_matrix(g: Graph) -> np.ndarray:
    """Symmetrically normalised adjacency with self-loops."""
    n = g.num_nodes
    a = np.eye(n)
    for (u, v), w in g.weight_map().items():
        a[u, v] = w
        a[v, u] = w
    d = a.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(d)
    return a * inv_sqrt[:, None] * inv_sqrt[None, :]


def _forward_cached(s: np.ndarray, x0: np.ndarray, w: GCNWeights):
    sx0 = s @ x0
    z1 = sx0 @ w.theta1 + w.bias1
    x1 = np.maximum(z1, 0.0)
    sx1 = s @ x1
    z2 = sx1 @ w.theta2 + w.bias2
    x2 = np.maximum(z2, 0.0)
    sx2 = s @ x2
    z3 = sx2 @ w.theta3 + w.bias3
    x3 = np.maximum(z3, 0.0)
    pool_idx = x3.argmax(axis=0)
    pooled = x3[pool_idx, np.arange(x3.shape[1])]
    logits = pooled @ w.readout_w + w.readout_b
    return {"sx0": sx0, "z1": z1, "x1": x1, "sx1": sx1, "z2": z2, "x2": x2,
            "sx2": sx2, "z3": z3, "x3": x3, "pool_idx": pool_idx,
            "pooled": pooled, "logits": logits}


def gcn_forward(g: Graph, w: GCNWeights) -> VictimResponse:
    """Class pseudo-probabilities for one graph."""
    if g.num_nodes == 0:
        raise ShapeMismatch("cannot classify an empty graph")
    x0 = encode_features(g, w.data_dim, w.discrete_input)
    s = propagation_matrix(g)
    cache = _forward_cached(s, x0, w)
    return VictimResponse(class_scores=softmax(cache["logits"]))


def _backward(s: np.ndarray, x0: np.ndarray, w: GCNWeights, cache: dict, y: int):
    p = softmax(cache["logits"])
    dlogits = p.copy()
    dlogits[y] -= 1.0
    grads = {
        "readout_w": np.outer(cache["pooled"], dlogits),
        "readout_b": dlogits,
    }
    dpooled = w.readout_w @ dlogits
    dx3 = np.zeros_like(cache["x3"])
    dx3[cache["pool_idx"], np.arange(dx3.shape[1])] = dpooled
    dz3 = dx3 * (cache["z3"] > 0)
    grads["theta3"] = cache["sx2"].T @ dz3
    grads["bias3"] = dz3.sum(axis=0)
    dx2 = s.T @ (dz3 @ w.theta3.T)
    dz2 = dx2 * (cache["z2"] > 0)
    grads["theta2"] = cache["sx1"].T @ dz2
    grads["bias2"] = dz2.sum(axis=0)
    dx1 = s.T @ (dz2 @ w.theta2.T)
    dz1 = dx1 * (cache["z1"] > 0)
    grads["theta1"] = cache["sx0"].T @ dz1
    grads["bias1"] = dz1.sum(axis=0)
    loss = -float(np.log(max(p[y], 1e-300)))
    return loss, grads


@dataclass
class TrainConfig:
    learning_rate: float = 5e-3
    epochs: int = 200
    batch_size: int = 32
    seed: int = 0
    decay_epoch: int = 120      # learning rate drops once, here
    decay_factor: float = 0.3


_PARAMS = ("theta1", "theta2", "theta3", "bias1", "bias2", "bias3",
           "readout_w", "readout_b")


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_weights(rng: np.random.Generator, data_dim: int, num_classes: int,
                 discrete: bool) -> GCNWeights:
    input_dim = data_dim + DEGREE_CAP + 1
    return GCNWeights(
        theta1=_glorot(rng, input_dim, HIDDEN_DIM),
        theta2=_glorot(rng, HIDDEN_DIM, HIDDEN_DIM),
        theta3=_glorot(rng, HIDDEN_DIM, HIDDEN_DIM),
        bias1=np.zeros(HIDDEN_DIM),
        bias2=np.zeros(HIDDEN_DIM),
        bias3=np.zeros(HIDDEN_DIM),
        readout_w=_glorot(rng, HIDDEN_DIM, num_classes),
        readout_b=np.zeros(num_classes),
        data_dim=data_dim,
        num_classes=num_classes,
        discrete_input=discrete,
    )


def _input_spec(graphs: list[Graph]) -> tuple[int, bool]:
    if graphs[0].node_labels is not None:
        return max(max(g.node_labels) for g in graphs) + 1, True
    return len(graphs[0].node_features[0]), False


def accuracy(w: GCNWeights, graphs: list[Graph], labels: list[int]) -> float:
    if not graphs:
        return float("nan")
    hits = sum(gcn_forward(g, w).predicted_class == y for g, y in zip(graphs, labels))
    return hits / len(graphs)


def train_gcn(train, cfg: TrainConfig | None = None) -> GCNWeights:
    """Train the built-in GCN on a LabeledDataset's train split with Adam.

    Deterministic under cfg.seed; logs train/validation accuracy per epoch.
    """
    cfg = cfg or TrainConfig()
    rng = np.random.default_rng(cfg.seed)
    train_idx = list(train.split.train) or list(range(len(train.graphs)))
    val_idx = list(train.split.val)
    if not train_idx:
        raise ValueError("empty training split")

    data_dim, discrete = _input_spec([train.graphs[i] for i in train_idx])
    w = init_weights(rng, data_dim, train.num_classes, discrete)
    m = {k: np.zeros_like(getattr(w, k)) for k in _PARAMS}
    v = {k: np.zeros_like(getattr(w, k)) for k in _PARAMS}
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    step = 0

    cached = {
        i: (propagation_matrix(train.graphs[i]),
            encode_features(train.graphs[i], data_dim, discrete))
        for i in train_idx
    }

    for epoch in range(cfg.epochs):
        lr = cfg.learning_rate * (cfg.decay_factor if epoch >= cfg.decay_epoch else 1.0)
        order = np.array(train_idx)[rng.permutation(len(train_idx))]
        epoch_loss = 0.0
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            total = {k: np.zeros_like(getattr(w, k)) for k in _PARAMS}
            for i in batch:
                s, x0 = cached[int(i)]
                cache = _forward_cached(s, x0, w)
                loss, grads = _backward(s, x0, w, cache, train.labels[int(i)])
                epoch_loss += loss
                for k in _PARAMS:
                    total[k] += grads[k]
            if not np.isfinite(epoch_loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch}")
            step += 1
            for k in _PARAMS:
                grad = total[k] / len(batch)
                m[k] = beta1 * m[k] + (1 - beta1) * grad
                v[k] = beta2 * v[k] + (1 - beta2) * grad * grad
                m_hat = m[k] / (1 - beta1 ** step)
                v_hat = v[k] / (1 - beta2 ** step)
                setattr(w, k, getattr(w, k) - lr * m_hat / (np.sqrt(v_hat) + eps))
        if log.isEnabledFor(logging.INFO):
            train_acc = accuracy(w, [train.graphs[i] for i in train_idx],
                                 [train.labels[i] for i in train_idx])
            val_acc = accuracy(w, [train.graphs[i] for i in val_idx],
                               [train.labels[i] for i in val_idx]) if val_idx else float("nan")
            log.info("epoch %d: loss %.4f train_acc %.3f val_acc %.3f",
                     epoch, epoch_loss / len(order), train_acc, val_acc)
    return w


def save_weights(w: GCNWeights, path: str) -> None:
    np.savez(
        path,
        theta1=w.theta1, theta2=w.theta2, theta3=w.theta3,
        bias1=w.bias1, bias2=w.bias2, bias3=w.bias3,
        readout_w=w.readout_w, readout_b=w.readout_b,
        meta=np.array([w.data_dim, w.num_classes, int(w.discrete_input)]),
    )


def load_weights(path: str) -> GCNWeights:
    with np.load(path) as data:
        meta = data["meta"]
        return GCNWeights(
            theta1=data["theta1"], theta2=data["theta2"], theta3=data["theta3"],
            bias1=data["bias1"], bias2=data["bias2"], bias3=data["bias3"],
            readout_w=data["readout_w"], readout_b=data["readout_b"],
            data_dim=int(meta[0]), num_classes=int(meta[1]),
            discrete_input=bool(meta[2]),
        )


# ---------------------------------------------------------------------------
# Query sessions


def validate_scores(raw, renormalise_tolerance: float = 1e-3) -> np.ndarray:
    """Coerce an external reply onto the probability simplex or reject it."""
    scores = np.asarray(raw, dtype=float)
    if scores.ndim != 1 or scores.size == 0 or not np.isfinite(scores).all():
        raise SimplexViolation(f"malformed score vector {raw!r}")
    if scores.min() < -renormalise_tolerance:
        raise SimplexViolation(f"negative score {scores.min()} beyond tolerance")
    scores = np.maximum(scores, 0.0)
    total = scores.sum()
    if abs(total - 1.0) > renormalise_tolerance:
        raise SimplexViolation(f"scores sum to {total}, not 1")
    return scores / total


class VictimSession:
    """One victim endpoint serving one attack; queries are strictly sequential."""

    def __init__(self) -> None:
        self._count = 0

    @property
    def query_count(self) -> int:
        return self._count

    def query(self, g: Graph) -> VictimResponse:
        self._count += 1
        return self._query(g)

    def _query(self, g: Graph) -> VictimResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class InProcessSession(VictimSession):
    def __init__(self, weights: GCNWeights) -> None:
        super().__init__()
        self.weights = weights

    def _query(self, g: Graph) -> VictimResponse:
        return gcn_forward(g, self.weights)


class CallableSession(VictimSession):
    """Wraps any graph -> scores callable (scripted oracles, toy victims)."""

    def __init__(self, fn) -> None:
        super().__init__()
        self.fn = fn

    def _query(self, g: Graph) -> VictimResponse:
        return VictimResponse(class_scores=np.asarray(self.fn(g), dtype=float))


class _LineChannel:
    """Blocking-with-timeout line I/O over a pipe fd or socket."""

    def __init__(self, read_fd=None, write_fd=None, sock=None, timeout: float | None = None):
        self.read_fd = read_fd
        self.write_fd = write_fd
        self.sock = sock
        self.timeout = timeout
        self._buffer = b""

    def write_line(self, data: bytes) -> None:
        payload = data + b"\n"
        if self.sock is not None:
            self.sock.sendall(payload)
        else:
            self.write_fd.write(payload)
            self.write_fd.flush()

    def read_line(self) -> bytes:
        deadline = None if self.timeout is None else time.monotonic() + self.timeout
        while b"\n" not in self._buffer:
            if self.sock is not None:
                self.sock.settimeout(None if deadline is None
                                     else max(deadline - time.monotonic(), 1e-6))
                try:
                    chunk = self.sock.recv(65536)
                except socket.timeout:
                    raise Timeout("no response before timeout") from None
            else:
                if deadline is not None:
                    remaining = deadline - time.monotonic()
                    if remaining <= 0 or not select.select([self.read_fd], [], [], remaining)[0]:
                        raise Timeout("no response before timeout")
                chunk = self.read_fd.read1(65536) if hasattr(self.read_fd, "read1") \
                    else self.read_fd.read(65536)
            if not chunk:
                raise ProtocolError("victim stream closed")
            self._buffer += chunk
        line, _, self._buffer = self._buffer.partition(b"\n")
        return line


class WireSession(VictimSession):
    """Client side of the wire protocol over a _LineChannel."""

    def __init__(self, channel: _LineChannel, interpret: str = "probabilities") -> None:
        super().__init__()
        if interpret not in ("probabilities", "logits"):
            raise ValueError("interpret must be 'probabilities' or 'logits'")
        self.channel = channel
        self.interpret = interpret
        self._next_id = 1

    def _query(self, g: Graph) -> VictimResponse:
        request_id = self._next_id
        self._next_id += 1
        request = {"id": request_id, "graph": graph_to_obj(g)}
        self.channel.write_line(json.dumps(request, separators=(",", ":")).encode("utf-8"))
        line = self.channel.read_line()
        try:
            reply = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise ProtocolError(f"malformed reply: {exc}") from None
        if not isinstance(reply, dict) or reply.get("id") != request_id:
            raise ProtocolError(f"reply id {reply.get('id') if isinstance(reply, dict) else None} "
                                f"does not echo request id {request_id}")
        if "error" in reply:
            raise ProtocolError(f"victim error: {reply['error']}")
        if "scores" not in reply:
            raise ProtocolError("reply carries neither scores nor error")
        raw = np.asarray(reply["scores"], dtype=float)
        if self.interpret == "logits":
            return VictimResponse(class_scores=softmax(raw))
        return VictimResponse(class_scores=validate_scores(raw))


class SubprocessSession(WireSession):
    """Spawns a victim process and talks to its stdio."""

    def __init__(self, command: list[str], interpret: str = "probabilities",
                 timeout: float | None = None) -> None:
        self.process = subprocess.Popen(
            command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
        channel = _LineChannel(read_fd=self.process.stdout,
                               write_fd=self.process.stdin, timeout=timeout)
        super().__init__(channel, interpret)

    def close(self) -> None:
        if self.process.poll() is None:
            self.process.stdin.close()
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()


class TcpSession(WireSession):
    def __init__(self, host: str, port: int, interpret: str = "probabilities",
                 timeout: float | None = None) -> None:
        sock = socket.create_connection((host, port), timeout=timeout)
        super().__init__(_LineChannel(sock=sock, timeout=timeout), interpret)
        self._sock = sock

    def close(self) -> None:
        self._sock.close()


# ---------------------------------------------------------------------------
# Serving (the other side of the wire)


def serve_stream(score_fn, in_stream, out_stream) -> None:
    """Serve the wire protocol on text streams until EOF.

    Per-request failures become {"id", "error"} replies; the loop continues.
    """
    for raw in in_stream:
        line = raw.strip()
        if not line:
            continue
        request_id = None
        try:
            obj = json.loads(line)
            request_id = obj.get("id") if isinstance(obj, dict) else None
            graph = obj_to_graph(obj["graph"], "$.graph")
            scores = [float(x) for x in score_fn(graph)]
            reply = {"id": request_id, "scores": scores}
        except Exception as exc:  # noqa: BLE001 - every request error becomes a reply
            reply = {"id": request_id, "error": str(exc)}
        out_stream.write(json.dumps(reply, separators=(",", ":")) + "\n")
        out_stream.flush()


def serve_tcp(score_fn, host: str, port: int, max_connections: int | None = None) -> None:
    """Accept connections one at a time, serving each until it closes."""
    server = socket.create_server((host, port))
    served = 0
    try:
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn, conn.makefile("r", encoding="utf-8") as reader, \
                    conn.makefile("w", encoding="utf-8") as writer:
                serve_stream(score_fn, reader, writer)
            served += 1
    finally:
        server.close()
