"""Container for model files: a text header followed by raw float64 blocks.

::

    aetree-<kind> 1
    meta <key> <json value>
    ...
    block <name> <dim0>x<dim1>...
    ...
    data

After the ``data`` line come the blocks in header order, row-major,
little-endian 64-bit floats.
"""
import json
from pathlib import Path

import numpy as np

from .errors import SchemaError

VERSION = 1


def write_blocks(path, kind: str, meta: dict, blocks: dict) -> None:
    head = [f"aetree-{kind} {VERSION}"]
    for key, val in meta.items():
        head.append(f"meta {key} {json.dumps(val)}")
    payload = []
    for name, arr in blocks.items():
        arr = np.ascontiguousarray(arr, dtype="<f8")
        shape = "x".join(str(d) for d in arr.shape) if arr.ndim else "scalar"
        head.append(f"block {name} {shape}")
        payload.append(arr.tobytes())
    head.append("data")
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(("\n".join(head) + "\n").encode())
        for chunk in payload:
            fh.write(chunk)
    tmp.replace(path)


def read_blocks(path, kind: str):
    raw = Path(path).read_bytes()
    meta, specs = {}, []
    pos = 0
    lineno = 0
    while True:
        end = raw.find(b"\n", pos)
        if end < 0:
            raise SchemaError(f"{path}: truncated header")
        line = raw[pos:end].decode()
        pos = end + 1
        lineno += 1
        if lineno == 1:
            if line != f"aetree-{kind} {VERSION}":
                raise SchemaError(f"{path}:1: expected 'aetree-{kind} {VERSION}', got {line!r}")
            continue
        if line == "data":
            break
        tag, name, rest = (line.split(" ", 2) + [""])[:3]
        if tag == "meta":
            meta[name] = json.loads(rest)
        elif tag == "block":
            shape = () if rest == "scalar" else tuple(int(d) for d in rest.split("x"))
            specs.append((name, shape))
        else:
            raise SchemaError(f"{path}:{lineno}: unknown header record {tag!r}")
    blocks = {}
    for name, shape in specs:
        n = int(np.prod(shape, dtype=np.int64))
        nbytes = 8 * n
        if pos + nbytes > len(raw):
            raise SchemaError(f"{path}: block {name!r} truncated")
        blocks[name] = np.frombuffer(raw[pos:pos + nbytes], dtype="<f8").reshape(shape).astype(float)
        pos += nbytes
    return meta, blocks
