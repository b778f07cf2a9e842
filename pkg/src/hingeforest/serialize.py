"""Binary model files.

Layout (all integers little-endian)::

    8 bytes   magic b"HNGFRST\\0"
    u32       format version
    u64       manifest length in bytes
    ...       manifest, UTF-8 JSON (architecture, tensor table, metadata)
    ...       tensor payloads, little-endian, in manifest order
    u32       CRC-32 of everything above
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import DataError
from .forest import HingeForest
from .graph import Graph, Input
from .layers import (Conv2d, Flatten, InnerProduct, L2Loss, RunningBatchNorm,
                     SoftmaxCrossEntropy, TreeMeanAggregate)

MAGIC = b"HNGFRST\0"
VERSION = 1

_NODE_TYPES = {cls.kind: cls for cls in (Input, InnerProduct, Conv2d, Flatten, RunningBatchNorm,
                                         HingeForest, TreeMeanAggregate, SoftmaxCrossEntropy, L2Loss)}


def _make_node(entry, dtype):
    kind, name, inputs, spec = entry["kind"], entry["name"], entry["inputs"], entry["spec"]
    if kind not in _NODE_TYPES:
        raise DataError(f"model file has unknown node kind '{kind}'")
    cls = _NODE_TYPES[kind]
    if cls is Input:
        return Input(name, spec.get("shape"))
    if cls is InnerProduct:
        return InnerProduct(name, inputs, spec["in_features"], spec["out_features"], dtype=dtype)
    if cls is Conv2d:
        return Conv2d(name, inputs, spec["in_channels"], spec["out_channels"], spec["kernel_size"],
                      spec["stride"], dtype=dtype)
    if cls is RunningBatchNorm:
        return RunningBatchNorm(name, inputs, spec["num_features"], spec["momentum"], spec["eps"],
                                dtype=dtype)
    if cls is HingeForest:
        return HingeForest(name, inputs, spec["num_features"], spec["num_trees"], spec["depth"],
                           spec["num_outputs"], spec["forest_kind"], rng=0, dtype=dtype)
    return cls(name, inputs)


def graph_architecture(graph: Graph) -> list:
    return [{"name": name, "kind": node.kind, "inputs": list(node.inputs), "spec": node.spec()}
            for name, node in graph.nodes.items()]


def save_model(path, graph: Graph, metadata=None, optimizer=None):
    """Write ``graph`` (parameters, running stats, architecture) to ``path``.

    ``metadata`` is any JSON-serializable mapping (config, classes, step...).
    When ``optimizer`` is given its hyperparameters and accumulators are
    stored too so training can resume.
    """
    tensors = []
    for name, node in graph.nodes.items():
        for key, value in node.params.items():
            tensors.append((f"param:{name}.{key}", value))
    opt_meta = None
    if optimizer is not None:
        opt_meta = optimizer.hyperparameters()
        for key, value in sorted(optimizer.state_arrays().items()):
            tensors.append((f"optim:{key}", value))
    table, payload, offset = [], [], 0
    for name, value in tensors:
        arr = np.asarray(value, order="C")
        le = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|",) else arr.dtype
        raw = arr.astype(le, copy=False).tobytes()
        table.append({"name": name, "dtype": le.str, "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        payload.append(raw)
        offset += len(raw)
    manifest = {
        "architecture": graph_architecture(graph),
        "dtype": graph.dtype.name,
        "input": graph.input_name,
        "loss": graph.loss_name,
        "output": graph.output_name,
        "tensors": table,
        "optimizer": opt_meta,
        "metadata": metadata or {},
    }
    blob = json.dumps(manifest, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", VERSION, len(blob)) + blob + b"".join(payload)
    body += struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(body)
    tmp.replace(path)


def read_model_file(path):
    """Parse and verify a model file; return ``(manifest, {name: array})``."""
    raw = Path(path).read_bytes()
    head = len(MAGIC) + 12
    if len(raw) < head + 4 or raw[:len(MAGIC)] != MAGIC:
        raise DataError(f"{path}: not a hinge forest model file")
    version, mlen = struct.unpack("<IQ", raw[len(MAGIC):head])
    if version != VERSION:
        raise DataError(f"{path}: unsupported model format version {version}")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc:
        raise DataError(f"{path}: checksum mismatch (truncated or corrupted file)")
    try:
        manifest = json.loads(raw[head:head + mlen].decode("utf-8"))
    except ValueError as exc:
        raise DataError(f"{path}: unreadable manifest: {exc}") from None
    data = raw[head + mlen:-4]
    arrays = {}
    for entry in manifest["tensors"]:
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        if end > len(data):
            raise DataError(f"{path}: tensor {entry['name']} runs past end of file")
        arr = np.frombuffer(data[start:end], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).astype(arr.dtype.newbyteorder("="))
    return manifest, arrays


def load_model(path, optimizer=None):
    """Rebuild the graph stored at ``path``.

    Returns ``(graph, metadata)``.  If ``optimizer`` is given its state is
    restored from the file.
    """
    manifest, arrays = read_model_file(path)
    dtype = np.dtype(manifest["dtype"])
    graph = Graph(dtype=dtype)
    for entry in manifest["architecture"]:
        node = _make_node(entry, dtype)
        graph.add(node, loss=entry["name"] == manifest["loss"],
                  output=entry["name"] == manifest["output"])
    for name, node in graph.nodes.items():
        for key in list(node.params):
            tensor = arrays.get(f"param:{name}.{key}")
            if tensor is None:
                raise DataError(f"{path}: missing tensor for {name}.{key}")
            node.params[key] = np.array(tensor)
            if key in node.grads:
                node.grads[key] = np.zeros_like(node.params[key])
    if optimizer is not None:
        optimizer.load_state_arrays({k[len("optim:"):]: v for k, v in arrays.items()
                                     if k.startswith("optim:")})
    meta = dict(manifest.get("metadata") or {})
    meta["optimizer"] = manifest.get("optimizer")
    return graph, meta
