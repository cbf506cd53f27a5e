"""Graph-convolutional evaluation network, written directly in numpy.

Board path::

    H1 = relu(A_hat @ X @ W_gcn1)
    H2 = relu(A_hat @ H1 @ W_gcn2)
    B  = relu(flatten(H2) @ W_fc2 + b_fc2)

Global path::

    G  = relu(g @ W_fc1 + b_fc1)

Head::

    out = relu([B, G] @ W_fc3 + b_fc3) @ W_out + b_out

``A_hat = D^-1/2 (A + I) D^-1/2``.  The six outputs are unbounded, one per
player seat.  Everything is float64.
"""
from __future__ import annotations

import hashlib
import io
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .features import BOARD_DIM, GLOBAL_DIM, Normalizer, extract_many
from .maps import MapDef, parse_map

MODEL_MAGIC = b"RTDMODEL"
MODEL_VERSION = 1
N_OUTPUTS = 6

PARAM_ORDER = (
    "gcn1", "gcn2", "fc1_w", "fc1_b", "fc2_w", "fc2_b", "fc3_w", "fc3_b", "out_w", "out_b",
)


class ModelFileError(ValueError):
    pass


class ModelVersionError(ModelFileError):
    pass


class ChecksumError(ModelFileError):
    pass


def graph_operator(adjacency: np.ndarray) -> np.ndarray:
    """Symmetric-normalised adjacency with self loops."""
    a = np.asarray(adjacency, dtype=np.float64) + np.eye(len(adjacency))
    d = 1.0 / np.sqrt(a.sum(axis=1))
    return a * d[:, None] * d[None, :]


@dataclass(frozen=True)
class Dims:
    n_nodes: int
    board: int = BOARD_DIM
    glob: int = GLOBAL_DIM
    gcn1: int = 60
    gcn2: int = 30
    fc1: int = 60
    fc2: int = 60
    fc3: int = 30
    out: int = N_OUTPUTS

    def shapes(self) -> dict[str, tuple]:
        return {
            "gcn1": (self.board, self.gcn1),
            "gcn2": (self.gcn1, self.gcn2),
            "fc1_w": (self.glob, self.fc1),
            "fc1_b": (self.fc1,),
            "fc2_w": (self.n_nodes * self.gcn2, self.fc2),
            "fc2_b": (self.fc2,),
            "fc3_w": (self.fc2 + self.fc1, self.fc3),
            "fc3_b": (self.fc3,),
            "out_w": (self.fc3, self.out),
            "out_b": (self.out,),
        }


@dataclass
class NetworkParams:
    dims: Dims
    weights: dict
    mapdef: MapDef
    normalizer: Normalizer = field(default_factory=Normalizer.identity)
    a_hat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.mapdef.n_territories != self.dims.n_nodes:
            raise ValueError("map size does not match network dims")
        for name, shape in self.dims.shapes().items():
            w = self.weights.get(name)
            if w is None or w.shape != shape:
                got = None if w is None else w.shape
                raise ValueError(f"parameter {name}: expected shape {shape}, got {got}")
        self.a_hat = graph_operator(self.mapdef.adjacency)

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            self.dims, {k: v.copy() for k, v in self.weights.items()}, self.mapdef, self.normalizer
        )

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights[k].ravel() for k in PARAM_ORDER])

    def n_params(self) -> int:
        return sum(w.size for w in self.weights.values())


def init_params(seed: int, mapdef: MapDef, dims: Dims | None = None, **sizes) -> NetworkParams:
    """Uniform(+-1/sqrt(fan_in)) weights and zero biases."""
    dims = dims or Dims(n_nodes=mapdef.n_territories, **sizes)
    if dims.n_nodes != mapdef.n_territories:
        raise ValueError("dims.n_nodes does not match the map")
    rng = np.random.default_rng(seed)
    weights = {}
    for name in PARAM_ORDER:
        shape = dims.shapes()[name]
        if name.endswith("_b"):
            weights[name] = np.zeros(shape)
        else:
            bound = 1.0 / np.sqrt(shape[0])
            weights[name] = rng.uniform(-bound, bound, size=shape)
    return NetworkParams(dims, weights, mapdef)


def _relu(x):
    return np.maximum(x, 0.0)


def _check_inputs(params: NetworkParams, glob, board):
    d = params.dims
    if glob.shape[1:] != (d.glob,) or board.shape[1:] != (d.n_nodes, d.board):
        raise ValueError(
            f"feature shapes {glob.shape}, {board.shape} do not match dims "
            f"({d.glob},), ({d.n_nodes}, {d.board})"
        )


def forward(params: NetworkParams, glob: np.ndarray, board: np.ndarray, cache: bool = False):
    """Evaluate a batch of normalized inputs.

    ``glob`` is ``(B, GLOBAL_DIM)`` and ``board`` is ``(B, n, BOARD_DIM)``;
    single examples (1-D / 2-D) are accepted too.  Returns ``(B, 6)``, or
    ``(out, activations)`` when ``cache`` is set.
    """
    single = glob.ndim == 1
    if single:
        glob, board = glob[None], board[None]
    _check_inputs(params, glob, board)
    w = params.weights
    a_hat = params.a_hat
    B = glob.shape[0]
    ax = np.matmul(a_hat, board)
    z1 = ax @ w["gcn1"]
    h1 = _relu(z1)
    ah1 = np.matmul(a_hat, h1)
    z2 = ah1 @ w["gcn2"]
    h2 = _relu(z2)
    flat = h2.reshape(B, -1)
    z3 = flat @ w["fc2_w"] + w["fc2_b"]
    z4 = glob @ w["fc1_w"] + w["fc1_b"]
    cat = np.concatenate([_relu(z3), _relu(z4)], axis=1)
    z5 = cat @ w["fc3_w"] + w["fc3_b"]
    h5 = _relu(z5)
    out = h5 @ w["out_w"] + w["out_b"]
    if single:
        out = out[0]
    if cache:
        acts = dict(glob=glob, ax=ax, z1=z1, ah1=ah1, z2=z2, flat=flat, z3=z3, z4=z4, cat=cat, z5=z5, h5=h5)
        return out, acts
    return out


def backward(params: NetworkParams, glob: np.ndarray, board: np.ndarray, upstream: np.ndarray) -> dict:
    """Gradient of ``sum_b upstream[b] . out[b]`` with respect to every parameter.

    ReLU's derivative at exactly zero is taken as zero.
    """
    if glob.ndim == 1:
        glob, board = glob[None], board[None]
    upstream = np.asarray(upstream, dtype=np.float64).reshape(glob.shape[0], -1)
    out, c = forward(params, glob, board, cache=True)
    w = params.weights
    B, n = board.shape[0], board.shape[1]
    fc2 = params.dims.fc2
    g = {}
    g["out_w"] = c["h5"].T @ upstream
    g["out_b"] = upstream.sum(axis=0)
    dz5 = (upstream @ w["out_w"].T) * (c["z5"] > 0)
    g["fc3_w"] = c["cat"].T @ dz5
    g["fc3_b"] = dz5.sum(axis=0)
    dcat = dz5 @ w["fc3_w"].T
    dz3 = dcat[:, :fc2] * (c["z3"] > 0)
    dz4 = dcat[:, fc2:] * (c["z4"] > 0)
    g["fc1_w"] = c["glob"].T @ dz4
    g["fc1_b"] = dz4.sum(axis=0)
    g["fc2_w"] = c["flat"].T @ dz3
    g["fc2_b"] = dz3.sum(axis=0)
    dz2 = (dz3 @ w["fc2_w"].T).reshape(B, n, -1) * (c["z2"] > 0)
    g["gcn2"] = np.einsum("bif,bio->fo", c["ah1"], dz2)
    dh1 = np.matmul(params.a_hat.T, dz2 @ w["gcn2"].T)
    dz1 = dh1 * (c["z1"] > 0)
    g["gcn1"] = np.einsum("bif,bio->fo", c["ax"], dz1)
    return g


def output_gradient(params: NetworkParams, glob: np.ndarray, board: np.ndarray, index: int) -> dict:
    """Gradient of the single output ``index`` for one example."""
    if not 0 <= index < params.dims.out:
        raise IndexError(f"output index {index} out of range")
    up = np.zeros(params.dims.out)
    up[index] = 1.0
    return backward(params, glob, board, up)


def evaluate_states(params: NetworkParams, states) -> np.ndarray:
    """Extract, normalize and evaluate raw game states; returns ``(B, 6)``."""
    glob, board = extract_many(states)
    glob, board = params.normalizer.apply(glob, board)
    return forward(params, glob, board)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def _payload(params: NetworkParams) -> bytes:
    meta = {
        "dims": params.dims.__dict__,
        "map": params.mapdef.to_text(),
        "map_name": params.mapdef.name,
        "defence_cap": params.normalizer.defence_cap,
    }
    arrays = {k: params.weights[k] for k in PARAM_ORDER}
    nz = params.normalizer
    arrays.update(g_mean=nz.g_mean, g_std=nz.g_std, b_mean=nz.b_mean, b_std=nz.b_std)
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return buf.getvalue()


def dumps(params: NetworkParams) -> bytes:
    body = _payload(params)
    head = MODEL_MAGIC + struct.pack("<IQ", MODEL_VERSION, len(body)) + hashlib.sha256(body).digest()
    return head + body


def loads(blob: bytes) -> NetworkParams:
    head = len(MODEL_MAGIC) + 12 + 32
    if len(blob) < head or not blob.startswith(MODEL_MAGIC):
        raise ModelFileError("not a model file")
    version, length = struct.unpack("<IQ", blob[len(MODEL_MAGIC) : len(MODEL_MAGIC) + 12])
    if version != MODEL_VERSION:
        raise ModelVersionError(f"model file version {version}, expected {MODEL_VERSION}")
    digest = blob[len(MODEL_MAGIC) + 12 : head]
    body = blob[head:]
    if len(body) != length or hashlib.sha256(body).digest() != digest:
        raise ChecksumError("model file is truncated or corrupted")
    with np.load(io.BytesIO(body)) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        weights = {k: z[k].copy() for k in PARAM_ORDER}
        nz = Normalizer(z["g_mean"], z["g_std"], z["b_mean"], z["b_std"], meta["defence_cap"])
    mapdef = parse_map(meta["map"], name=meta["map_name"])
    return NetworkParams(Dims(**meta["dims"]), weights, mapdef, nz)


def save(params: NetworkParams, path: str | Path) -> None:
    Path(path).write_bytes(dumps(params))


def load(path: str | Path) -> NetworkParams:
    return loads(Path(path).read_bytes())
